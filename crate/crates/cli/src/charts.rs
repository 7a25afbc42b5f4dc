//! Static SVG line charts drawn from `tables.csv` alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub key: String,
    pub r: f64,
    pub quantity: String,
    pub divisor: String,
    pub method: String,
    pub value: f64,
    pub se: Option<f64>,
}

pub fn read_tables(path: &Path) -> Result<Vec<CsvRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some("r,quantity,divisor,method,value,se") {
        bail!("{} does not start with the table header", path.display());
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            bail!("{}:{}: expected 6 fields, found {}", path.display(), i + 2, f.len());
        }
        let (key, quantity) = f[1].rsplit_once(':').unwrap_or(("", f[1]));
        rows.push(CsvRow {
            key: key.to_string(),
            r: f[0].parse()?,
            quantity: quantity.to_string(),
            divisor: f[2].to_string(),
            method: f[3].to_string(),
            value: f[4].parse()?,
            se: if f[5].is_empty() { None } else { Some(f[5].parse()?) },
        });
    }
    Ok(rows)
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Error bars draw markers instead of a line.
    pub errors: Option<Vec<f64>>,
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let n = raw / mag;
    mag * if n < 1.5 {
        1.0
    } else if n < 3.5 {
        2.0
    } else if n < 7.5 {
        5.0
    } else {
        10.0
    }
}

fn fmt_tick(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.digits$}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| {
        let e = s.errors.clone().unwrap_or_else(|| vec![0.0; s.points.len()]);
        s.points.iter().zip(e).flat_map(|(p, e)| [(p.0, p.1 - e), (p.0, p.1 + e)]).collect::<Vec<_>>()
    });
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts.filter(|p| p.0.is_finite() && p.1.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let xs = nice_step(x1 - x0);
    let mut t = (x0 / xs).ceil() * xs;
    while t <= x1 + 1e-9 * xs {
        let _ = writeln!(
            s,
            r##"<line x1="{0:.2}" y1="{1}" x2="{0:.2}" y2="{2}" stroke="#e6e6e6"/><text x="{0:.2}" y="{3}" text-anchor="middle">{4}</text>"##,
            sx(t),
            TOP,
            TOP + ph,
            TOP + ph + 18.0,
            fmt_tick(t, xs)
        );
        t += xs;
    }
    let ys = nice_step(y1 - y0);
    let mut t = (y0 / ys).ceil() * ys;
    while t <= y1 + 1e-9 * ys {
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{1:.2}" x2="{2}" y2="{1:.2}" stroke="#e6e6e6"/><text x="{3}" y="{4:.2}" text-anchor="end">{5}</text>"##,
            LEFT,
            sy(t),
            LEFT + pw,
            LEFT - 6.0,
            sy(t) + 4.0,
            fmt_tick(t, ys)
        );
        t += ys;
    }
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 14.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(ylabel)
    );
    for (i, se) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let finite: Vec<(f64, f64)> = se.points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        match &se.errors {
            None => {
                let path: Vec<String> = finite.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#, path.join(" "));
            }
            Some(errs) => {
                for ((x, y), e) in se.points.iter().zip(errs) {
                    let _ = writeln!(
                        s,
                        r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{3}"/><circle cx="{0:.2}" cy="{4:.2}" r="3" fill="{3}"/>"#,
                        sx(*x),
                        sy(y - e),
                        sy(y + e),
                        color,
                        sy(*y)
                    );
                }
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&se.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn file_stem(key: &str) -> String {
    key.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '@' { c } else { '_' }).collect()
}

fn series_of<'a>(rows: impl Iterator<Item = &'a CsvRow>) -> Vec<(f64, f64, Option<f64>)> {
    let mut v: Vec<(f64, f64, Option<f64>)> = rows.map(|r| (r.r, r.value, r.se)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn pick<'a>(rows: &'a [&'a CsvRow], q: &'a str, d: &'a str, m: &'a str) -> impl Iterator<Item = &'a CsvRow> + 'a {
    rows.iter().copied().filter(move |r| r.quantity == q && r.divisor == d && r.method == m)
}

/// Functional chart and defect-trace chart for every table in the file.
pub fn write_charts(tables: &Path, dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_tables(tables)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut by_key: BTreeMap<&str, Vec<&CsvRow>> = BTreeMap::new();
    for r in &rows {
        by_key.entry(r.key.as_str()).or_default().push(r);
    }
    let mut written = Vec::new();
    for (key, rows) in by_key {
        let mut divisors: Vec<&str> = Vec::new();
        for r in &rows {
            if !r.divisor.is_empty() && !divisors.contains(&r.divisor.as_str()) {
                divisors.push(&r.divisor);
            }
        }
        let mut series = Vec::new();
        let mut push = |name: String, pts: Vec<(f64, f64, Option<f64>)>| {
            if pts.is_empty() {
                return;
            }
            let mc = pts.iter().any(|p| p.2.is_some());
            series.push(Series {
                name,
                errors: mc.then(|| pts.iter().map(|p| p.2.unwrap_or(0.0)).collect()),
                points: pts.iter().map(|p| (p.0, p.1)).collect(),
            });
        };
        for m in ["quadrature", "montecarlo"] {
            let tag = if m == "montecarlo" { " (MC)" } else { "" };
            push(format!("T_hat{tag}"), series_of(pick(&rows, "T_hat", "", m)));
            push(format!("T{tag}"), series_of(pick(&rows, "T", "", m)));
            for d in &divisors {
                push(format!("m({d}){tag}"), series_of(pick(&rows, "m", d, m)));
                push(format!("N({d}){tag}"), series_of(pick(&rows, "N", d, m)));
            }
        }
        let path = dir.join(format!("{}.svg", file_stem(key)));
        fs::write(&path, line_chart(&format!("Nevanlinna functionals: {key}"), "r", "value", &series))?;
        written.push(path);

        // defect traces N/T̂ and N̄/T̂
        let t: BTreeMap<u64, f64> = pick(&rows, "T_hat", "", "quadrature").map(|r| (r.r.to_bits(), r.value)).collect();
        let mut traces = Vec::new();
        for d in &divisors {
            for (q, label) in [("N", "N"), ("N_bar", "N̄")] {
                let pts: Vec<(f64, f64)> = series_of(pick(&rows, q, d, "quadrature"))
                    .into_iter()
                    .filter_map(|(r, v, _)| t.get(&r.to_bits()).filter(|tv| **tv > 0.0).map(|tv| (r, v / tv)))
                    .collect();
                if !pts.is_empty() {
                    traces.push(Series { name: format!("{label}({d})/T_hat"), points: pts, errors: None });
                }
            }
        }
        if !traces.is_empty() {
            let path = dir.join(format!("defects-{}.svg", file_stem(key)));
            fs::write(&path, line_chart(&format!("Defect traces: {key}"), "r", "ratio to T_hat", &traces))?;
            written.push(path);
        }
    }
    Ok(written)
}
