//! Experiment configuration: a flat, typed TOML tree. See `CONFIG.md`.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nevlab::manifold::ModelManifold;
use nevlab::nevanlinna::{EvalOptions, McSettings, Method, TailSettings};
use nevlab::rng::RngSpec;
use nevlab::targets::{DivisorSpec, ExpPoly, ExpTerm, MeromorphicTarget, ProjPoint};
use nevlab::theorems::{LemmaOptions, RadiusGrid, Spacing, CALCULUS_C};
use num_complex::Complex64;
use serde::Deserialize;

/// A complex number written as `1.5` or `[re, im]`.
#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Pair([f64; 2]),
}

impl ComplexValue {
    pub fn value(self) -> Complex64 {
        match self {
            ComplexValue::Real(x) => Complex64::new(x, 0.0),
            ComplexValue::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

/// A point of ℙ¹: a complex value or the string `"inf"`.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum PointValue {
    Value(ComplexValue),
    Named(String),
}

impl PointValue {
    fn point(&self) -> Result<ProjPoint> {
        match self {
            PointValue::Value(v) => Ok(ProjPoint::Finite(v.value())),
            PointValue::Named(s) if s == "inf" => Ok(ProjPoint::Infinity),
            PointValue::Named(s) => bail!("divisor point {s:?} is neither a number, [re, im] nor \"inf\""),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct GridConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Log
}

impl GridConfig {
    pub fn radii(&self) -> Result<Vec<f64>> {
        Ok(RadiusGrid::new(self.min, self.max, self.count, self.spacing)?.radii())
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct McConfig {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_dt_factor")]
    pub dt_factor: f64,
    /// Compute the tail estimator for counting functions.
    #[serde(default)]
    pub counting: bool,
    #[serde(default = "default_tail_paths")]
    pub tail_paths: usize,
}

fn default_paths() -> usize {
    10_000
}
fn default_dt_factor() -> f64 {
    1e-4
}
fn default_tail_paths() -> usize {
    100_000
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: default_paths(), dt_factor: default_dt_factor(), counting: false, tail_paths: default_tail_paths() }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Flat,
    Hyperbolic,
    Warped,
}

#[derive(Clone, Debug, Deserialize)]
pub struct ManifoldConfig {
    pub id: String,
    pub kind: ManifoldKind,
    #[serde(default = "one")]
    pub m: usize,
    /// Hyperbolic: Gaussian curvature `−scale²`.
    pub scale: Option<f64>,
    /// Warped: `[s, K(s)]` samples of the Gaussian curvature.
    pub curvature: Option<Vec<[f64; 2]>>,
    /// Radius grid for tables on this manifold (defaults to the global grid).
    pub grid: Option<GridConfig>,
}

fn one() -> usize {
    1
}

impl ManifoldConfig {
    pub fn build(&self) -> Result<ModelManifold> {
        let m = match self.kind {
            ManifoldKind::Flat => ModelManifold::flat(self.m)?,
            ManifoldKind::Hyperbolic => {
                if self.m != 1 {
                    bail!("manifold '{}': hyperbolic manifolds are surfaces (m = 1)", self.id);
                }
                ModelManifold::hyperbolic(self.scale.unwrap_or(1.0))?
            }
            ManifoldKind::Warped => {
                if self.m != 1 {
                    bail!("manifold '{}': warped manifolds are surfaces (m = 1)", self.id);
                }
                let samples: Vec<(f64, f64)> = self
                    .curvature
                    .as_ref()
                    .with_context(|| format!("manifold '{}': warped needs `curvature` samples", self.id))?
                    .iter()
                    .map(|p| (p[0], p[1]))
                    .collect();
                ModelManifold::warped_from_samples(&samples)?
            }
        };
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TargetKindConfig {
    Polynomial,
    Rational,
    ExpAffine,
    ExpCombination,
    Projective,
}

/// One term `poly(z)·e^{rate·z}` of a projective component.
#[derive(Clone, Debug, Deserialize)]
pub struct TermConfig {
    #[serde(default = "zero_rate")]
    pub rate: ComplexValue,
    pub poly: Vec<ComplexValue>,
}

fn zero_rate() -> ComplexValue {
    ComplexValue::Real(0.0)
}

#[derive(Clone, Debug, Deserialize)]
pub struct TargetConfig {
    pub id: String,
    pub kind: TargetKindConfig,
    /// Polynomial: ascending coefficients. Rational: numerator.
    pub coeffs: Option<Vec<ComplexValue>>,
    /// Rational: ascending denominator coefficients.
    pub den: Option<Vec<ComplexValue>>,
    /// Exp-affine: `e^{az+b}`.
    pub a: Option<ComplexValue>,
    pub b: Option<ComplexValue>,
    /// Exp-combination: `[c, a]` pairs for `Σ c e^{az}`.
    pub terms: Option<Vec<[ComplexValue; 2]>>,
    /// Projective: one list of terms per homogeneous coordinate.
    pub components: Option<Vec<Vec<TermConfig>>>,
    /// ℙ¹ divisor points.
    #[serde(default)]
    pub divisors: Vec<PointValue>,
    /// ℙⁿ hyperplanes `Σ h_j w_j = 0`.
    #[serde(default)]
    pub hyperplanes: Vec<Vec<ComplexValue>>,
}

fn values(v: &Option<Vec<ComplexValue>>, what: &str, id: &str) -> Result<Vec<Complex64>> {
    Ok(v.as_ref()
        .with_context(|| format!("target '{id}': missing `{what}`"))?
        .iter()
        .map(|c| c.value())
        .collect())
}

impl TargetConfig {
    pub fn build(&self) -> Result<MeromorphicTarget> {
        let id = self.id.clone();
        let t = match self.kind {
            TargetKindConfig::Polynomial => {
                MeromorphicTarget::rational_complex(id, &values(&self.coeffs, "coeffs", &self.id)?, &[Complex64::new(1.0, 0.0)])?
            }
            TargetKindConfig::Rational => MeromorphicTarget::rational_complex(
                id,
                &values(&self.coeffs, "coeffs", &self.id)?,
                &values(&self.den, "den", &self.id)?,
            )?,
            TargetKindConfig::ExpAffine => MeromorphicTarget::exp_affine(
                id,
                self.a.with_context(|| format!("target '{}': missing `a`", self.id))?.value(),
                self.b.unwrap_or(ComplexValue::Real(0.0)).value(),
            )?,
            TargetKindConfig::ExpCombination => {
                let pairs: Vec<(Complex64, Complex64)> = self
                    .terms
                    .as_ref()
                    .with_context(|| format!("target '{}': missing `terms`", self.id))?
                    .iter()
                    .map(|[c, a]| (c.value(), a.value()))
                    .collect();
                MeromorphicTarget::exp_combination(id, &pairs)?
            }
            TargetKindConfig::Projective => {
                let comps = self
                    .components
                    .as_ref()
                    .with_context(|| format!("target '{}': missing `components`", self.id))?
                    .iter()
                    .map(|terms| {
                        ExpPoly::from_terms(
                            terms
                                .iter()
                                .map(|t| ExpTerm { coeffs: t.poly.iter().map(|c| c.value()).collect(), rate: t.rate.value() })
                                .collect(),
                        )
                    })
                    .collect();
                MeromorphicTarget::projective(id, comps)?
            }
        };
        Ok(t)
    }

    pub fn divisor_specs(&self, target: &MeromorphicTarget) -> Result<Vec<DivisorSpec>> {
        let mut out = Vec::new();
        if !self.divisors.is_empty() && target.target_dim() != 1 {
            bail!("target '{}': `divisors` are ℙ¹ points; use `hyperplanes` for ℙⁿ", self.id);
        }
        for d in &self.divisors {
            out.push(DivisorSpec::point(d.point()?));
        }
        for (i, h) in self.hyperplanes.iter().enumerate() {
            if h.len() != target.target_dim() + 1 {
                bail!("target '{}': hyperplane {i} needs {} coefficients", self.id, target.target_dim() + 1);
            }
            out.push(DivisorSpec::hyperplane(h.iter().map(|c| c.value()).collect(), format!("H{i}"))?);
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    Fmt,
    Ldl,
    Smt,
    Defects,
    Sandwich,
    Lemmas,
}

impl SuiteKind {
    pub fn name(&self) -> &'static str {
        match self {
            SuiteKind::Fmt => "fmt",
            SuiteKind::Ldl => "ldl",
            SuiteKind::Smt => "smt",
            SuiteKind::Defects => "defects",
            SuiteKind::Sandwich => "sandwich",
            SuiteKind::Lemmas => "lemmas",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct SuiteConfig {
    pub kind: SuiteKind,
    /// Defaults to the kind name.
    pub id: Option<String>,
    /// Target ids (default: every target).
    pub targets: Option<Vec<String>>,
    /// Manifold for target suites (default: the first manifold).
    pub manifold: Option<String>,
    /// Manifolds for the lemma suite (default: all).
    pub manifolds: Option<Vec<String>>,
    pub grid: Option<GridConfig>,
    /// LDL δ; also the calculus-lemma δ.
    pub delta: Option<f64>,
    /// Lemma suite sizes.
    pub exit_paths: Option<usize>,
    pub bessel_paths: Option<usize>,
    pub random_points: Option<usize>,
}

impl SuiteConfig {
    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn lemma_options(&self) -> LemmaOptions {
        let d = LemmaOptions::default();
        LemmaOptions {
            delta: self.delta.unwrap_or(d.delta),
            calculus_c: CALCULUS_C,
            exit_paths: self.exit_paths.unwrap_or(d.exit_paths),
            bessel_paths: self.bessel_paths.unwrap_or(d.bessel_paths),
            random_points: self.random_points.unwrap_or(d.random_points),
            green_pairs: self.random_points.unwrap_or(d.green_pairs),
            ..d
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub output: Option<String>,
    #[serde(default = "default_quad_tol")]
    pub quadrature_tol: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub grid: GridConfig,
    #[serde(default)]
    pub mc: McConfig,
    pub manifolds: Vec<ManifoldConfig>,
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub suites: Vec<SuiteConfig>,
}

fn default_quad_tol() -> f64 {
    1e-10
}
fn default_methods() -> Vec<Method> {
    vec![Method::Quadrature]
}

impl ExperimentConfig {
    /// Parses TOML, failing on any key the schema does not know.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let mut unknown = BTreeSet::new();
        let cfg: Self = serde_ignored::deserialize(de, |path| {
            unknown.insert(path.to_string());
        })
        .context("config does not match the schema")?;
        if !unknown.is_empty() {
            bail!("unknown config keys: {}", unknown.into_iter().collect::<Vec<_>>().join(", "));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.radii()?;
        if !(self.quadrature_tol > 0.0) {
            bail!("quadrature_tol must be positive");
        }
        if self.methods.is_empty() {
            bail!("`methods` is empty");
        }
        let needs_mc = self.methods.contains(&Method::MonteCarlo);
        if needs_mc && self.mc.paths < 100 {
            bail!("mc.paths must be at least 100, got {}", self.mc.paths);
        }
        if needs_mc && self.mc.counting && self.mc.tail_paths < 100 {
            bail!("mc.tail_paths must be at least 100, got {}", self.mc.tail_paths);
        }
        if self.manifolds.is_empty() || self.targets.is_empty() {
            bail!("config needs at least one manifold and one target");
        }
        let mut ids = BTreeSet::new();
        for m in &self.manifolds {
            if !ids.insert(m.id.as_str()) {
                bail!("duplicate manifold id '{}'", m.id);
            }
            if let Some(g) = &m.grid {
                g.radii()?;
            }
        }
        let mut tids = BTreeSet::new();
        for t in &self.targets {
            if !tids.insert(t.id.as_str()) {
                bail!("duplicate target id '{}'", t.id);
            }
        }
        let mut sids = BTreeSet::new();
        for s in &self.suites {
            if !sids.insert(s.id()) {
                bail!("duplicate suite id '{}'", s.id());
            }
            for t in s.targets.iter().flatten() {
                if !tids.contains(t.as_str()) {
                    bail!("suite '{}' references unknown target '{t}'", s.id());
                }
            }
            for m in s.manifold.iter().chain(s.manifolds.iter().flatten()) {
                if !ids.contains(m.as_str()) {
                    bail!("suite '{}' references unknown manifold '{m}'", s.id());
                }
            }
            if let Some(g) = &s.grid {
                g.radii()?;
            }
        }
        Ok(())
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            quad_tol: self.quadrature_tol,
            mc: McSettings {
                paths: self.mc.paths,
                dt_factor: self.mc.dt_factor,
                rng: RngSpec::new(self.seed),
                tail: TailSettings { paths: self.mc.tail_paths, ..TailSettings::default() },
            },
        }
    }
}
