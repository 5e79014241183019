//! TOML run configuration, orchestration of a run, and the JSON/CSV outputs
//! of the `blockdiag` binary.
//!
//! A minimal config:
//!
//! ```toml
//! t = 0.05
//!
//! [model]
//! d = 1
//! n = 3
//! seed = 1
//! ```

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::{Error, Result};
use crate::expansion::{check_branch_properties, enumerate_branches, weighted_branch_sum, BranchProperties};
use crate::flow::{run_flow_until, ConsistencyMode, FlowOptions, FlowState};
use crate::lattice::{LatticeSpec, Rect};
use crate::lie_schwinger::{RadiusPolicy, SeriesOptions};
use crate::model::{default_onsite, edges, random_model, ModelSpec};
use crate::tensor::{SiteSpace, C64};
use crate::verify::{build_report, inequality_suite, InequalityCheck, RunReport};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const CSV_HEADER: &str =
    "step_index,k_vector,q_vector,circumference,g_gap,e0,s_norm,tail_bound,residual,regime_tag";

/// A matrix entry: a real number or a `[re, im]` pair.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(&self) -> C64 {
        match self {
            Entry::Real(x) => C64::new(*x, 0.0),
            Entry::Complex([re, im]) => C64::new(*re, *im),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OnsiteConfig {
    Named(String),
    Matrix(Vec<Vec<Entry>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub k: Vec<usize>,
    pub q: Vec<usize>,
    pub matrix: Vec<Vec<Entry>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d: Spanned<usize>,
    pub n: Spanned<usize>,
    #[serde(default = "default_m")]
    pub m: Spanned<usize>,
    pub onsite: Option<Spanned<OnsiteConfig>>,
    /// Rotate a user-given on-site Hamiltonian so its ground state is the vacuum.
    #[serde(default)]
    pub canonicalize: bool,
    /// Seeded random edge potentials.
    pub seed: Option<u64>,
    /// The same potential on every edge.
    pub edge_potential: Option<Spanned<Vec<Vec<Entry>>>>,
    #[serde(default)]
    pub potentials: Vec<Spanned<PotentialConfig>>,
    #[serde(default = "default_range")]
    pub max_range: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tol")]
    pub tol: Spanned<f64>,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { tol: default_tol(), gap_tol: default_gap_tol() }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchTarget {
    pub target_k: Vec<usize>,
    pub target_q: Vec<usize>,
    pub root_k: Vec<usize>,
    pub root_q: Vec<usize>,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    pub consistency: Option<ConsistencyMode>,
    #[serde(default)]
    pub inequality_suite: bool,
    #[serde(default = "default_max_sites")]
    pub inequality_max_sites: usize,
    #[serde(default)]
    pub branches: Vec<BranchTarget>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Output {
    pub report: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t: Spanned<f64>,
    pub model: ModelConfig,
    #[serde(default = "default_j_max")]
    pub j_max: Spanned<usize>,
    #[serde(default = "default_n_max")]
    pub n_max: Spanned<usize>,
    #[serde(default = "default_policy")]
    pub radius_policy: RadiusPolicy,
    #[serde(default)]
    pub force: bool,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub output: Output,
}

fn default_m() -> Spanned<usize> {
    Spanned::new(0..0, 2)
}
fn default_range() -> usize {
    1
}
fn default_tol() -> Spanned<f64> {
    Spanned::new(0..0, 1e-8)
}
fn default_gap_tol() -> f64 {
    1e-6
}
fn default_depth() -> usize {
    16
}
fn default_max_sites() -> usize {
    10
}
fn default_j_max() -> Spanned<usize> {
    Spanned::new(0..0, 12)
}
fn default_n_max() -> Spanned<usize> {
    Spanned::new(0..0, 20)
}
fn default_policy() -> RadiusPolicy {
    RadiusPolicy::Estimated
}

/// 1-based line of a byte offset; `None` for the synthetic spans of defaults.
fn line_of(src: &str, span: std::ops::Range<usize>) -> Option<usize> {
    if span.end == 0 {
        return None;
    }
    Some(src[..span.start.min(src.len())].matches('\n').count() + 1)
}

fn config_err<T>(src: &str, span: std::ops::Range<usize>, message: impl Into<String>) -> Result<T> {
    Err(Error::Config { line: line_of(src, span), message: message.into() })
}

fn matrix_of(rows: &[Vec<Entry>]) -> std::result::Result<Array2<C64>, String> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(format!(
            "matrix must be square, got {n} rows of lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        ));
    }
    Ok(Array2::from_shape_fn((n, n), |(i, j)| rows[i][j].value()))
}

/// A parsed config together with its source text, for line-anchored errors.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
    pub path: Option<PathBuf>,
}

pub fn parse_config(path: &Path) -> Result<LoadedConfig> {
    let source =
        std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
    let mut loaded = parse_config_str(&source)?;
    loaded.path = Some(path.to_path_buf());
    Ok(loaded)
}

pub fn parse_config_str(source: &str) -> Result<LoadedConfig> {
    let config: RunConfig = toml::from_str(source).map_err(|e| Error::Config {
        line: e.span().map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    let loaded = LoadedConfig { config, source: source.to_string(), path: None };
    loaded.validate_numbers()?;
    Ok(loaded)
}

impl LoadedConfig {
    fn validate_numbers(&self) -> Result<()> {
        let c = &self.config;
        let src = &self.source;
        if !c.t.get_ref().is_finite() {
            return config_err(src, c.t.span(), "t must be finite");
        }
        if *c.model.d.get_ref() == 0 {
            return config_err(src, c.model.d.span(), "d must be at least 1");
        }
        if *c.model.n.get_ref() < 2 {
            return config_err(src, c.model.n.span(), "n must be at least 2");
        }
        if *c.model.m.get_ref() < 2 {
            return config_err(src, c.model.m.span(), "m must be at least 2");
        }
        if *c.j_max.get_ref() == 0 {
            return config_err(src, c.j_max.span(), "j_max must be at least 1");
        }
        if *c.n_max.get_ref() == 0 {
            return config_err(src, c.n_max.span(), "n_max must be at least 1");
        }
        let tol = *c.tolerances.tol.get_ref();
        if !(tol > 0.0 && tol.is_finite()) {
            return config_err(src, c.tolerances.tol.span(), "tol must be positive");
        }
        let sources = c.model.seed.is_some() as usize
            + c.model.edge_potential.is_some() as usize
            + (!c.model.potentials.is_empty()) as usize;
        if sources != 1 {
            return Err(Error::Config {
                line: None,
                message: "model needs exactly one of seed, edge_potential or potentials".into(),
            });
        }
        Ok(())
    }

    /// Builds and validates the model. `seed` overrides the configured seed.
    pub fn model(&self, seed: Option<u64>) -> Result<ModelSpec> {
        let c = &self.config;
        let src = &self.source;
        let mc = &c.model;
        let lat = LatticeSpec::new(*mc.d.get_ref(), *mc.n.get_ref())
            .or_else(|e| config_err(src, mc.n.span(), e.to_string()))?;
        let m = *mc.m.get_ref();
        let t = *c.t.get_ref();

        let onsite = match &mc.onsite {
            None => default_onsite(m),
            Some(s) => match s.get_ref() {
                OnsiteConfig::Named(name) if name == "default" => default_onsite(m),
                OnsiteConfig::Named(name) => return config_err(src, s.span(), format!("unknown onsite \"{name}\"")),
                OnsiteConfig::Matrix(rows) => {
                    let h = matrix_of(rows).or_else(|e| config_err(src, s.span(), e))?;
                    if h.nrows() != m {
                        return config_err(src, s.span(), format!("onsite must be {m}x{m}"));
                    }
                    h
                }
            },
        };

        let mut spec = if let Some(seed) = seed.or(mc.seed).filter(|_| mc.seed.is_some()) {
            let mut spec = random_model(lat, m, t, seed)?;
            spec.onsite_h = onsite;
            spec
        } else {
            let mut potentials = Vec::new();
            if let Some(ep) = &mc.edge_potential {
                let v = matrix_of(ep.get_ref()).or_else(|e| config_err(src, ep.span(), e))?;
                for e in edges(&lat) {
                    potentials.push((e, v.clone()));
                }
            }
            for p in &mc.potentials {
                let pc = p.get_ref();
                let v = matrix_of(&pc.matrix).or_else(|e| config_err(src, p.span(), e))?;
                potentials.push((Rect::new(pc.k.clone(), pc.q.clone()), v));
            }
            ModelSpec {
                lat,
                site: SiteSpace::new(m)?,
                onsite_h: onsite,
                potentials,
                t,
                rng_seed: None,
                max_range: mc.max_range,
            }
        };
        spec.max_range = mc.max_range;
        if mc.canonicalize {
            spec.canonicalize()?;
        }
        if let Err(e) = spec.validate() {
            // anchor the error at the offending potential when it names one
            let msg = e.to_string();
            let span = mc
                .potentials
                .iter()
                .find(|p| msg.contains(&Rect::new(p.get_ref().k.clone(), p.get_ref().q.clone()).to_string()))
                .map(|p| p.span())
                .or_else(|| mc.edge_potential.as_ref().map(|p| p.span()))
                .or_else(|| mc.onsite.as_ref().map(|p| p.span()))
                .unwrap_or(0..0);
            return config_err(src, span, msg);
        }
        Ok(spec)
    }

    pub fn flow_options(&self, lat: &LatticeSpec, consistency: Option<ConsistencyMode>, force: bool) -> FlowOptions {
        let c = &self.config;
        FlowOptions {
            series: SeriesOptions { j_max: *c.j_max.get_ref(), radius_policy: c.radius_policy },
            n_max: *c.n_max.get_ref(),
            force: force || c.force,
            consistency: consistency.or(c.checks.consistency).unwrap_or_else(|| ConsistencyMode::default_for(lat)),
            tol: *c.tolerances.tol.get_ref(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub force: bool,
    pub consistency: Option<ConsistencyMode>,
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalitySummary {
    pub checked: usize,
    pub min_eigenvalue: f64,
    pub failures: Vec<InequalityCheck>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchSummary {
    pub target: Rect,
    pub root: Rect,
    pub properties: BranchProperties,
    /// max |Σ branches − stored potential|, when the root is the target's last update
    pub reconciliation_error: Option<f64>,
    pub weighted_lhs: f64,
    pub weighted_rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CliReport {
    #[serde(flatten)]
    pub run: RunReport,
    pub inequalities: Option<InequalitySummary>,
    pub branches: Vec<BranchSummary>,
}

impl CliReport {
    pub fn passed(&self) -> bool {
        self.run.passed()
            && self.inequalities.as_ref().map(|s| s.pass).unwrap_or(true)
            && self.branches.iter().all(|b| b.pass)
    }
}

pub fn csv_rows(state: &FlowState) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
    for r in &state.records {
        let tail = r.tail_bound.map(|x| format!("{x:e}")).unwrap_or_else(|| "inf".into());
        let residual = r.consistency_residual.unwrap_or(r.offdiag_residual);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:e},{},{:e},{}",
            r.index,
            join(&r.rect.k),
            join(&r.rect.q),
            r.circumference,
            r.g_gap,
            r.e0,
            r.s_norm,
            tail,
            residual,
            r.regime.tag()
        );
    }
    out
}

fn branch_summary(spec: &ModelSpec, opts: &FlowOptions, b: &BranchTarget) -> Result<BranchSummary> {
    let target = Rect::new(b.target_k.clone(), b.target_q.clone());
    let root = Rect::new(b.root_k.clone(), b.root_q.clone());
    target.validate(&spec.lat)?;
    root.validate(&spec.lat)?;
    let mut quiet = opts.clone();
    quiet.consistency = ConsistencyMode::Never;
    let state = run_flow_until(spec, &quiet, Some(&root))?;
    let ex = enumerate_branches(&target, &root, &state, opts.n_max, b.depth)?;
    let properties = check_branch_properties(&ex);
    let reconciliation_error = (!ex.incomplete).then(|| {
        let sum = ex.sum();
        match state.interactions.get(&target) {
            Some(op) if !ex.branches.is_empty() => (&sum - &op.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max),
            Some(op) => op.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max),
            None => sum.iter().map(|z| z.norm()).fold(0.0, f64::max),
        }
    });
    let (weighted_lhs, weighted_rhs) = weighted_branch_sum(&ex, &state)?;
    let pass = properties.connected
        && properties.spans_target
        && properties.injective
        && properties.descending
        && reconciliation_error.map(|e| e <= opts.tol).unwrap_or(true)
        && weighted_lhs <= weighted_rhs;
    Ok(BranchSummary { target, root, properties, reconciliation_error, weighted_lhs, weighted_rhs, pass })
}

/// Runs the flow and every configured check. Flow errors are returned as is.
pub fn execute(loaded: &LoadedConfig, ov: &Overrides) -> Result<(CliReport, FlowState)> {
    let spec = loaded.model(ov.seed)?;
    let opts = loaded.flow_options(&spec.lat, ov.consistency, ov.force);
    log::info!(
        "running {} steps on d={} N={} at t={}",
        crate::lattice::enumerate_steps(&spec.lat).len(),
        spec.lat.d,
        spec.lat.n,
        spec.t
    );
    let state = crate::flow::run_flow(&spec, &opts)?;
    let tol = opts.tol;
    let run = build_report(&spec, &state, tol, loaded.config.tolerances.gap_tol)?;

    let checks = &loaded.config.checks;
    let inequalities = checks.inequality_suite.then(|| {
        let all = inequality_suite(&spec.lat, checks.inequality_max_sites);
        let min_eigenvalue = all.iter().map(|c| c.min_eigenvalue).fold(f64::INFINITY, f64::min);
        let failures: Vec<_> = all.iter().filter(|c| !c.pass).cloned().collect();
        InequalitySummary { checked: all.len(), min_eigenvalue, pass: failures.is_empty(), failures }
    });
    let branches = checks.branches.iter().map(|b| branch_summary(&spec, &opts, b)).collect::<Result<Vec<_>>>()?;
    Ok((CliReport { run, inequalities, branches }, state))
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::GapViolation { .. } | Error::Consistency { .. } => EXIT_CHECK_FAILED,
        _ => EXIT_CONFIG,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io { path: path.display().to_string(), source: e })
}

/// Full CLI behaviour behind the binary; returns the process exit code.
pub fn run(config_path: &Path, ov: &Overrides) -> i32 {
    let loaded = match parse_config(config_path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let (report, state) = match execute(&loaded, ov) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let json = match serde_json::to_string_pretty(&report) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: could not serialize report: {e}");
            return EXIT_CONFIG;
        }
    };
    let report_path = ov.report.clone().or_else(|| loaded.config.output.report.clone());
    let csv_path = ov.csv.clone().or_else(|| loaded.config.output.csv.clone());
    let written = match &report_path {
        Some(p) => write_file(p, &(json + "\n")),
        None => {
            // A closed pipe on stdout is not a failure of the run.
            let _ = writeln!(std::io::stdout(), "{json}");
            Ok(())
        }
    }
    .and_then(|_| csv_path.as_ref().map(|p| write_file(p, &csv_rows(&state))).unwrap_or(Ok(())));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    for f in &report.run.failures {
        eprintln!("check failed: {f}");
    }
    if let Some(s) = report.inequalities.as_ref().filter(|s| !s.pass) {
        eprintln!("check failed: {} projector inequalities", s.failures.len());
    }
    for b in report.branches.iter().filter(|b| !b.pass) {
        eprintln!("check failed: branch expansion of {} at {}", b.target, b.root);
    }
    if report.passed() {
        eprintln!("status: pass");
        EXIT_PASS
    } else {
        eprintln!("status: fail");
        EXIT_CHECK_FAILED
    }
}
