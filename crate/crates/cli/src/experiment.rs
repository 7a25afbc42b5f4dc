//! Builds the configured objects, computes tables and suites, and writes
//! the artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use log::info;
use nevlab::manifold::ModelManifold;
use nevlab::nevanlinna::{EvalOptions, NevanlinnaTable, TableSpec};
use nevlab::rng::RngSpec;
use nevlab::targets::{DivisorSpec, MeromorphicTarget};
use nevlab::theorems::{
    verify_defect_relation, verify_fmt, verify_ldl, verify_lemmas, verify_sandwich, verify_smt, CorpusEntry, SuiteReport,
    LDL_CONSTANTS, SCHEMA_VERSION, SMT_CONSTANTS,
};
use serde::{Deserialize, Serialize};

use crate::charts;
use crate::config::{ExperimentConfig, SuiteConfig, SuiteKind};

pub const TABLES_FILE: &str = "tables.csv";
pub const REPORT_FILE: &str = "report.json";
pub const META_FILE: &str = "meta.json";
pub const CHARTS_DIR: &str = "charts";

/// Command-line overrides of config values.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quadrature_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }
}

pub struct Target {
    pub target: MeromorphicTarget,
    pub divisors: Vec<DivisorSpec>,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub manifolds: Vec<(String, ModelManifold)>,
    pub targets: Vec<Target>,
    pub out: PathBuf,
}

impl Experiment {
    pub fn new(mut config: ExperimentConfig, ov: &Overrides) -> Result<Self> {
        if let Some(s) = ov.seed {
            config.seed = s;
        }
        if let Some(t) = ov.quadrature_tol {
            config.quadrature_tol = t;
        }
        config.validate()?;
        let out = ov
            .out
            .clone()
            .or_else(|| config.output.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        let manifolds = config
            .manifolds
            .iter()
            .map(|m| Ok((m.id.clone(), m.build().with_context(|| format!("manifold '{}'", m.id))?)))
            .collect::<Result<Vec<_>>>()?;
        let targets = config
            .targets
            .iter()
            .map(|t| {
                let target = t.build().with_context(|| format!("target '{}'", t.id))?;
                let divisors = t.divisor_specs(&target)?;
                Ok(Target { target, divisors })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, manifolds, targets, out })
    }

    pub fn options(&self) -> EvalOptions {
        self.config.eval_options()
    }

    fn manifold(&self, id: &str) -> Result<&ModelManifold> {
        self.manifolds
            .iter()
            .find(|(mid, _)| mid == id)
            .map(|(_, m)| m)
            .with_context(|| format!("unknown manifold '{id}'"))
    }

    fn grid_for_manifold(&self, id: &str) -> Result<Vec<f64>> {
        let cfg = self.config.manifolds.iter().find(|m| m.id == id).expect("validated id");
        cfg.grid.as_ref().unwrap_or(&self.config.grid).radii()
    }

    /// One table per (surface manifold, target) pair, in config order.
    pub fn tables(&self) -> Result<Vec<(String, NevanlinnaTable)>> {
        let opts = self.options();
        let mut out = Vec::new();
        for (mid, m) in &self.manifolds {
            if m.complex_dim() != 1 {
                info!("skipping tables on '{mid}': targets are defined on surfaces");
                continue;
            }
            let radii = self.grid_for_manifold(mid)?;
            if let Some(r) = radii.iter().find(|r| **r >= m.max_radius()) {
                bail!("radius {r} exceeds the chart reach {:.3} of manifold '{mid}'; give it its own `grid`", m.max_radius());
            }
            for t in &self.targets {
                let spec = TableSpec {
                    radii: radii.clone(),
                    divisors: t.divisors.clone(),
                    methods: self.config.methods.clone(),
                    mc_counting: self.config.mc.counting,
                };
                info!("table {}@{mid}", t.target.id);
                let table = NevanlinnaTable::build(&t.target, m, &spec, &opts)
                    .with_context(|| format!("table for '{}' on '{mid}'", t.target.id))?;
                out.push((format!("{}@{mid}", t.target.id), table));
            }
        }
        Ok(out)
    }

    fn suite_targets(&self, s: &SuiteConfig, keep: impl Fn(&Target) -> bool) -> Vec<&Target> {
        match &s.targets {
            Some(ids) => ids
                .iter()
                .filter_map(|id| self.targets.iter().find(|t| &t.target.id == id))
                .collect(),
            None => self.targets.iter().filter(|t| keep(t)).collect(),
        }
    }

    fn suite_manifold(&self, s: &SuiteConfig) -> Result<(&str, &ModelManifold)> {
        let id = s.manifold.as_deref().unwrap_or(&self.manifolds[0].0);
        Ok((self.manifolds.iter().find(|(m, _)| m == id).map(|(m, _)| m.as_str()).expect("validated"), self.manifold(id)?))
    }

    pub fn run_suite(&self, s: &SuiteConfig) -> Result<SuiteReport> {
        let opts = self.options();
        let id = s.id();
        let grid = match &s.grid {
            Some(g) => g.radii()?,
            None => self.config.grid.radii()?,
        };
        info!("suite {id}");
        let p1 = |t: &Target| t.target.target_dim() == 1;
        let with_set = |t: &Target| p1(t) && t.divisors.len() >= 3;
        let reports = match s.kind {
            SuiteKind::Fmt => {
                let (_, m) = self.suite_manifold(s)?;
                let corpus: Vec<CorpusEntry> = self
                    .suite_targets(s, |t| !t.divisors.is_empty())
                    .into_iter()
                    .map(|t| CorpusEntry { target: t.target.clone(), divisors: t.divisors.clone() })
                    .collect();
                vec![verify_fmt(&corpus, m, &grid, &opts)?]
            }
            SuiteKind::Ldl => {
                let (_, m) = self.suite_manifold(s)?;
                let corpus: Vec<MeromorphicTarget> = self.suite_targets(s, p1).into_iter().map(|t| t.target.clone()).collect();
                vec![verify_ldl(&corpus, m, &grid, s.delta.unwrap_or(0.5), &LDL_CONSTANTS, &opts)?]
            }
            SuiteKind::Smt => {
                let (_, m) = self.suite_manifold(s)?;
                self.suite_targets(s, with_set)
                    .into_iter()
                    .map(|t| verify_smt(&t.target, &t.divisors, m, &grid, &SMT_CONSTANTS, &opts))
                    .collect::<nevlab::Result<Vec<_>>>()?
            }
            SuiteKind::Defects => {
                let (_, m) = self.suite_manifold(s)?;
                self.suite_targets(s, with_set)
                    .into_iter()
                    .map(|t| verify_defect_relation(&t.target, &t.divisors, m, &grid, &opts))
                    .collect::<nevlab::Result<Vec<_>>>()?
            }
            SuiteKind::Sandwich => {
                let (_, m) = self.suite_manifold(s)?;
                self.suite_targets(s, |t| t.target.target_dim() >= 2)
                    .into_iter()
                    .map(|t| verify_sandwich(&t.target, m, &grid, &opts))
                    .collect::<nevlab::Result<Vec<_>>>()?
            }
            SuiteKind::Lemmas => {
                let ms: Vec<ModelManifold> = match &s.manifolds {
                    Some(ids) => ids.iter().map(|i| self.manifold(i).cloned()).collect::<Result<_>>()?,
                    None => self.manifolds.iter().map(|(_, m)| m.clone()).collect(),
                };
                let rng = RngSpec::new(self.config.seed).derive(0x1e33a5);
                vec![verify_lemmas(&ms, &grid, &rng, &s.lemma_options(), &opts)?]
            }
        };
        if reports.is_empty() {
            bail!("suite '{id}' selects no targets");
        }
        let mut r = SuiteReport::merge(&id, reports);
        r.provenance.seed = Some(self.config.seed);
        Ok(r)
    }

    pub fn run_suites(&self, filter: Option<&str>) -> Result<RunReport> {
        let selected: Vec<&SuiteConfig> = self
            .config
            .suites
            .iter()
            .filter(|s| filter.is_none_or(|f| s.id() == f || s.kind.name() == f))
            .collect();
        if let Some(f) = filter {
            if selected.is_empty() {
                bail!("no suite with id or kind '{f}' in the config");
            }
        }
        let suites = selected
            .into_iter()
            .map(|s| self.run_suite(s).with_context(|| format!("suite '{}'", s.id())))
            .collect::<Result<Vec<_>>>()?;
        Ok(RunReport { schema_version: SCHEMA_VERSION, seed: self.config.seed, suites })
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating output directory {}", self.out.display()))?;
        let probe = self.out.join(".write-probe");
        fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", self.out.display()))?;
        fs::remove_file(&probe).ok();
        Ok(())
    }

    /// Tables, suites, charts and meta file.
    pub fn run(&self) -> Result<RunReport> {
        self.prepare_out()?;
        let clock = Instant::now();
        let started = unix_seconds();
        let tables = self.tables()?;
        let path = self.out.join(TABLES_FILE);
        {
            let mut w = BufWriter::new(fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?);
            NevanlinnaTable::write_csv_header(&mut w)?;
            for (key, t) in &tables {
                t.write_csv_rows(&mut w, Some(&format!("{key}:")))?;
            }
        }
        let report = self.run_suites(None)?;
        write_report(&self.out.join(REPORT_FILE), &report)?;
        charts::write_charts(&self.out.join(TABLES_FILE), &self.out.join(CHARTS_DIR))?;
        self.write_meta(started, clock)?;
        Ok(report)
    }

    /// Only the selected suite(s); writes `report.json` and the meta file.
    pub fn verify(&self, suite: &str) -> Result<RunReport> {
        self.prepare_out()?;
        let clock = Instant::now();
        let started = unix_seconds();
        let report = self.run_suites(Some(suite))?;
        write_report(&self.out.join(REPORT_FILE), &report)?;
        self.write_meta(started, clock)?;
        Ok(report)
    }

    fn write_meta(&self, started: u64, clock: Instant) -> Result<()> {
        let meta = serde_json::json!({
            "started_unix": started,
            "finished_unix": unix_seconds(),
            "elapsed_seconds": clock.elapsed().as_secs_f64(),
            "threads": rayon::current_num_threads(),
            "version": env!("CARGO_PKG_VERSION"),
        });
        fs::write(self.out.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let r: RunReport = serde_json::from_str(&text).with_context(|| format!("malformed report {}", path.display()))?;
    if r.schema_version != SCHEMA_VERSION {
        bail!("report schema version {} is not supported (expected {SCHEMA_VERSION})", r.schema_version);
    }
    Ok(r)
}
