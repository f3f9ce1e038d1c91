//! Run configurations, seed sweeps, paired comparisons and CSV artifacts.
//!
//! A [`RunConfig`] is read from TOML, resolved into a [`ResolvedConfig`] with
//! every default made explicit, and hashed. Each seed trains one model; seeds
//! run on a small thread pool and results are collected in seed order, so
//! outputs do not depend on scheduling.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::{check_pde_loss, LossContext, LossWeights, PdeLoss, UpwindConfig, UpwindVariant};
use crate::model::{init_model, Architecture, OutputMap};
use crate::postprocess::{filter_solution, mae, mae_interior, slice_grid, MedianFilterConfig, SolutionSlice};
use crate::problems::{catalog, sample_collocation, AdvectionProblem, SpeedSpec, Strategy};
use crate::reference::{data_range, Oracle, ReferenceSolution};
use crate::training::{no_observer, train_two_stage, Discontinuous, StageConfig, TrainReport};

pub const BUILD_ID: &str = env!("ADVECT_PINN_BUILD_ID");

/// A catalog name or an inline problem table.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Catalog(String),
    Inline(Box<AdvectionProblem>),
}

impl<'de> Deserialize<'de> for ProblemRef {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        // Dispatch by shape so inline problems keep their own error messages.
        let value = toml::Value::deserialize(d)?;
        match value {
            toml::Value::String(name) => Ok(ProblemRef::Catalog(name)),
            other => other.try_into().map(|p| ProblemRef::Inline(Box::new(p))).map_err(serde::de::Error::custom),
        }
    }
}

impl ProblemRef {
    pub fn resolve(&self) -> Result<AdvectionProblem> {
        match self {
            ProblemRef::Catalog(name) => catalog(name),
            ProblemRef::Inline(p) => {
                p.validate()?;
                Ok((**p).clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_features")]
    pub fourier_features: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Use the sine-bounded output map with the problem's bounds.
    #[serde(default = "yes")]
    pub bounded: bool,
}

fn default_features() -> usize {
    32
}

fn default_hidden() -> Vec<usize> {
    vec![32, 32]
}

fn default_sigma() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { fourier_features: default_features(), hidden: default_hidden(), sigma: default_sigma(), bounded: true }
    }
}

impl ModelSection {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            fourier_features: self.fourier_features,
            hidden: self.hidden.clone(),
            sigma: self.sigma,
            ..Default::default()
        }
    }

    pub fn output_map(&self, problem: &AdvectionProblem) -> Result<OutputMap> {
        match (self.bounded, &problem.bounds) {
            (false, _) => Ok(OutputMap::Identity),
            (true, Some(b)) => OutputMap::bounded(b.min, b.max),
            (true, None) => Err(Error::InvalidConfig("bounded output needs problem bounds".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationSection {
    #[serde(default = "default_n_pde")]
    pub n_pde: usize,
    #[serde(default = "default_n_ic")]
    pub n_ic: usize,
    #[serde(default = "default_n_bc")]
    pub n_bc: usize,
    #[serde(default)]
    pub strategy: Strategy,
    /// Base seed; run seed `s` samples with `seed + s`.
    #[serde(default)]
    pub seed: u64,
}

fn default_n_pde() -> usize {
    2000
}

fn default_n_ic() -> usize {
    200
}

fn default_n_bc() -> usize {
    100
}

impl Default for CollocationSection {
    fn default() -> Self {
        Self {
            n_pde: default_n_pde(),
            n_ic: default_n_ic(),
            n_bc: default_n_bc(),
            strategy: Strategy::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default)]
    pub discontinuous: Discontinuous,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1: Option<StageConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2: Option<StageConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PostprocessSection {
    /// Slice times; defaults to five equispaced times over `[0, T]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default)]
    pub filter: MedianFilterConfig,
}

/// Run configuration as written by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemRef,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default = "standard_loss")]
    pub loss: PdeLoss,
    #[serde(default)]
    pub collocation: CollocationSection,
    #[serde(default)]
    pub postprocess: PostprocessSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Oracle>,
    /// Output directory; callers may supply a fallback when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn standard_loss() -> PdeLoss {
    PdeLoss::Standard
}

pub const DEFAULT_OUTPUT: &str = "out";

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::from_toml(text, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Fills every default and validates the result.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let problem = self.problem.resolve()?;
        let times = match &self.postprocess.times {
            Some(t) => t.clone(),
            None => (0..=4).map(|k| problem.t_max() * k as f64 / 4.0).collect(),
        };
        let resolved = ResolvedConfig {
            oracle: self.oracle.unwrap_or_else(|| Oracle::auto(&problem)),
            problem,
            model: self.model.clone(),
            stage1: self.training.stage1.unwrap_or_else(|| StageConfig::stage1_default(self.training.discontinuous)),
            stage2: self.training.stage2.unwrap_or_else(StageConfig::stage2_default),
            loss: self.loss,
            collocation: self.collocation.clone(),
            times,
            filter: self.postprocess.filter.clone(),
            output: self.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)),
            seeds: self.seeds.clone(),
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

/// Fully explicit configuration; this is what `meta.toml` records and what
/// the config hash covers (minus the output directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub problem: AdvectionProblem,
    pub model: ModelSection,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub loss: PdeLoss,
    pub collocation: CollocationSection,
    pub times: Vec<f64>,
    pub filter: MedianFilterConfig,
    pub oracle: Oracle,
    pub output: PathBuf,
    pub seeds: Vec<u64>,
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.model.architecture().validate()?;
        self.model.output_map(&self.problem)?;
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.filter.validate()?;
        check_pde_loss(&self.problem, &self.loss)?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.times.is_empty() || self.times.iter().any(|&t| !(0.0..=self.problem.t_max()).contains(&t)) {
            return Err(Error::InvalidConfig(format!(
                "slice times must be non-empty and within [0, {}]",
                self.problem.t_max()
            )));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("slice times must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("resolved config serialization is infallible")
    }

    /// First 16 hex digits of the SHA-256 of the resolved TOML, with the
    /// output directory blanked so relocating a run keeps its hash.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        short_hash(&c.to_toml_string())
    }

    pub fn collocation_seed(&self, seed: u64) -> u64 {
        self.collocation.seed.wrapping_add(seed)
    }

    /// Reference values on the slice grid at the slice times.
    pub fn reference(&self) -> Result<ReferenceSolution> {
        let x = slice_grid(&self.problem, self.filter.points(&self.problem));
        self.oracle.solve(&self.problem, &x, &self.times).map_err(|e| match e {
            e @ (Error::Oracle(_) | Error::CharacteristicExit { .. } | Error::StepLimit(_)) => e,
            other => Error::Oracle(other.to_string()),
        })
    }
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Per-seed results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub mae_raw: f64,
    pub mae_filtered: f64,
    pub mae_filtered_interior: f64,
    /// Fraction of raw values at the last slice time inside the middle 60% of
    /// the data range.
    pub intermediate_mass: f64,
    /// Loss terms of the final model, unit weights.
    pub final_pde: f64,
    pub final_ic: f64,
    pub final_bc: f64,
    pub final_total: f64,
    pub iterations: usize,
    pub terminations: String,
}

pub const METRIC_COLUMNS: [&str; 8] = [
    "mae_raw",
    "mae_filtered",
    "mae_filtered_interior",
    "intermediate_mass",
    "final_pde",
    "final_ic",
    "final_bc",
    "final_total",
];

impl SeedMetrics {
    pub fn values(&self) -> [f64; 8] {
        [
            self.mae_raw,
            self.mae_filtered,
            self.mae_filtered_interior,
            self.intermediate_mass,
            self.final_pde,
            self.final_ic,
            self.final_bc,
            self.final_total,
        ]
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        METRIC_COLUMNS.iter().position(|&c| c == column).map(|i| self.values()[i])
    }
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub report: TrainReport,
    pub slices: Vec<SolutionSlice>,
    pub metrics: SeedMetrics,
}

/// Fraction of `values` within `[lo + 0.2 (hi − lo), lo + 0.8 (hi − lo)]`.
pub fn intermediate_mass(values: &[f64], lo: f64, hi: f64) -> f64 {
    let (a, b) = (lo + 0.2 * (hi - lo), lo + 0.8 * (hi - lo));
    values.iter().filter(|&&v| a <= v && v <= b).count() as f64 / values.len().max(1) as f64
}

/// Trains one seed and scores it against `reference`.
pub fn run_seed(cfg: &ResolvedConfig, seed: u64, reference: &ReferenceSolution) -> Result<SeedOutcome> {
    let problem = &cfg.problem;
    let c = &cfg.collocation;
    let points = sample_collocation(problem, c.n_pde, c.n_ic, c.n_bc, cfg.collocation_seed(seed), c.strategy)?;
    let ctx = LossContext::new(problem, &points, cfg.loss)?;
    let model = init_model(&cfg.model.architecture(), cfg.model.output_map(problem)?, seed)?;
    let report = train_two_stage(&model, &ctx, &cfg.stage1, &cfg.stage2, &mut no_observer())?;
    if let Some(t) = report.diverged() {
        return Err(Error::TrainingDiverged { seed, reason: t.label() });
    }
    let slices = filter_solution(&report.model, problem, &cfg.times, &cfg.filter)?;

    let (mut raw, mut filt, mut interior) = (0.0, 0.0, 0.0);
    for (k, s) in slices.iter().enumerate() {
        raw += mae(&s.raw, &reference.values[k])?;
        filt += mae(&s.filtered, &reference.values[k])?;
        interior += mae_interior(&s.filtered, &reference.values[k], s.margin)?;
    }
    let n = slices.len() as f64;
    let (lo, hi) = data_range(problem);
    let last = slices.last().expect("times are non-empty");
    let fin = ctx.evaluate(&report.model, LossWeights::default())?;
    let metrics = SeedMetrics {
        seed,
        mae_raw: raw / n,
        mae_filtered: filt / n,
        mae_filtered_interior: interior / n,
        intermediate_mass: intermediate_mass(&last.raw, lo, hi),
        final_pde: fin.l_pde,
        final_ic: fin.l_ic,
        final_bc: fin.l_bc,
        final_total: fin.total,
        iterations: report.history.len(),
        terminations: report
            .terminations
            .iter()
            .map(|(s, t)| format!("{s}:{}", t.label()))
            .collect::<Vec<_>>()
            .join(";"),
    };
    Ok(SeedOutcome { report, slices, metrics })
}

/// Runs `jobs` on up to `available_parallelism` threads and returns results in
/// job order. The first error wins.
pub fn run_parallel<J, T, F>(jobs: &[J], f: F) -> Result<Vec<T>>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync,
{
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().unwrap_or_else(|e| e.into_inner()).expect("every job ran")).collect()
}

/// Every seed of one configuration.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ResolvedConfig,
    pub hash: String,
    pub reference: ReferenceSolution,
    pub seeds: Vec<SeedOutcome>,
}

pub fn run(cfg: &ResolvedConfig) -> Result<RunResult> {
    let reference = cfg.reference()?;
    let seeds = run_parallel(&cfg.seeds, |&s| run_seed(cfg, s, &reference))?;
    Ok(RunResult { config: cfg.clone(), hash: cfg.config_hash(), reference, seeds })
}

impl RunResult {
    pub fn train_log_csv(&self) -> String {
        let mut out = String::from(
            "config_hash,seed,stage,iter,optimizer,l_pde,l_ic,l_bc,lambda_pde,lambda_ic,lambda_bc,total,b_max_abs,b_mean_abs\n",
        );
        for s in &self.seeds {
            for r in &s.report.history {
                let b = &r.breakdown;
                let w = b.weights;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    self.hash,
                    s.metrics.seed,
                    r.stage,
                    r.iter,
                    r.optimizer,
                    b.l_pde,
                    b.l_ic,
                    b.l_bc,
                    w.lambda_pde,
                    w.lambda_ic,
                    w.lambda_bc,
                    b.total,
                    r.b_max_abs,
                    r.b_mean_abs
                );
            }
        }
        out
    }

    pub fn slices_csv(&self) -> String {
        let mut out = String::from("config_hash,seed,t,x,raw,filtered,reference\n");
        for s in &self.seeds {
            for (k, sl) in s.slices.iter().enumerate() {
                for i in 0..sl.x.len() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        self.hash,
                        s.metrics.seed,
                        sl.t,
                        sl.x[i],
                        sl.raw[i],
                        sl.filtered[i],
                        self.reference.values[k][i]
                    );
                }
            }
        }
        out
    }

    pub fn metrics(&self) -> Vec<&SeedMetrics> {
        self.seeds.iter().map(|s| &s.metrics).collect()
    }

    /// Column means over seeds, in [`METRIC_COLUMNS`] order.
    pub fn means(&self) -> [f64; 8] {
        let n = self.seeds.len() as f64;
        let mut acc = [0.0; 8];
        for m in self.metrics() {
            for (a, v) in acc.iter_mut().zip(m.values()) {
                *a += v / n;
            }
        }
        acc
    }

    /// One row per seed and a final `mean` row.
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("config_hash,seed,{},iterations,terminations\n", METRIC_COLUMNS.join(","));
        for m in self.metrics() {
            let vals: Vec<String> = m.values().iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{},{},{},{},{}", self.hash, m.seed, vals.join(","), m.iterations, m.terminations);
        }
        let means: Vec<String> = self.means().iter().map(f64::to_string).collect();
        let iters = self.seeds.iter().map(|s| s.metrics.iterations).sum::<usize>() as f64 / self.seeds.len() as f64;
        let _ = writeln!(out, "{},mean,{},{},", self.hash, means.join(","), iters);
        out
    }

    pub fn meta_toml(&self) -> String {
        let wall: f64 = self.seeds.iter().map(|s| s.report.wall_time_s).sum();
        format!(
            "build_id = \"{BUILD_ID}\"\nconfig_hash = \"{}\"\ntrain_wall_time_s = {wall}\n\n[config]\n{}",
            self.hash,
            indent_tables(&self.config.to_toml_string(), "config")
        )
    }

    /// Writes `train_log.csv`, `slices.csv`, `metrics.csv` and `meta.toml`
    /// into `dir`. Each file appears whole or not at all.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_all(
            dir,
            &[
                ("train_log.csv", self.train_log_csv()),
                ("slices.csv", self.slices_csv()),
                ("metrics.csv", self.metrics_csv()),
                ("meta.toml", self.meta_toml()),
            ],
        )
    }
}

/// Re-roots the table headers of a serialized document under `root` so it
/// can be embedded as a sub-table.
fn indent_tables(doc: &str, root: &str) -> String {
    doc.lines()
        .map(|l| {
            if let Some(rest) = l.strip_prefix("[[") {
                format!("[[{root}.{rest}")
            } else if let Some(rest) = l.strip_prefix('[') {
                format!("[{root}.{rest}")
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

/// Writes each file through a temporary in `dir` and renames it into place.
pub fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, body) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(body.as_bytes())?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, path) in staged {
        tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleRun<'a> {
    problem: &'a AdvectionProblem,
    oracle: Oracle,
    grid_dx: f64,
}

/// Reference solution at 11 equispaced times on a grid of spacing `grid_dx`
/// (the FD grid itself for the upwind method), as `oracle.csv`. Optional
/// extras: the dx vs dx/2 self-convergence report and the upwind vs backtrace
/// gap per time.
pub fn oracle_artifacts(
    problem: &AdvectionProblem,
    oracle: Oracle,
    grid_dx: f64,
    self_convergence: bool,
    cross_check: bool,
) -> Result<Vec<(&'static str, String)>> {
    use crate::reference::{cross_oracle_gap, self_convergence as converge, upwind_fd_at, DEFAULT_DT_ODE};
    if !(grid_dx > 0.0 && grid_dx.is_finite()) {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {grid_dx}")));
    }
    let doc = toml::to_string(&OracleRun { problem, oracle, grid_dx }).expect("oracle run serialization");
    let hash = short_hash(&doc);
    let times: Vec<f64> = (0..=10).map(|k| problem.t_max() * k as f64 / 10.0).collect();
    let solution = match oracle {
        Oracle::UpwindFd { dx, cfl } => upwind_fd_at(problem, dx, cfl, &times)?,
        _ => {
            let n = ((problem.x_max() - problem.x_min()) / grid_dx).round().max(1.0) as usize;
            oracle.solve(problem, &slice_grid(problem, n + 1), &times)?
        }
    };
    let mut files = vec![("oracle.csv", solution.to_csv(&hash))];
    if self_convergence {
        let Oracle::UpwindFd { dx, cfl } = oracle else {
            return Err(Error::InvalidArgument("self-convergence applies to the upwind-fd method".into()));
        };
        let r = converge(problem, dx, cfl, problem.t_max())?;
        let mut out = String::from("config_hash,t,dx,l1_diff,max_front_shift,front,x_dx,x_dx_half\n");
        for (i, (a, b)) in r.fronts_coarse.iter().zip(&r.fronts_fine).enumerate() {
            let _ = writeln!(out, "{hash},{},{},{},{},{i},{a},{b}", r.t, r.dx, r.l1_diff, r.max_front_shift);
        }
        files.push(("self_convergence.csv", out));
    }
    if cross_check {
        let (dx, cfl) = match oracle {
            Oracle::UpwindFd { dx, cfl } => (dx, cfl),
            _ => (grid_dx, crate::reference::DEFAULT_CFL),
        };
        let dt_ode = match oracle {
            Oracle::CharacteristicsRk4 { dt_ode } => dt_ode,
            _ => DEFAULT_DT_ODE,
        };
        let mut out = String::from("config_hash,t,l1_gap,bound,within_bound\n");
        for g in cross_oracle_gap(problem, dx, cfl, dt_ode, &times)? {
            let _ = writeln!(out, "{hash},{},{},{},{}", g.t, g.l1, g.bound, g.l1 < g.bound);
        }
        files.push(("oracle_gap.csv", out));
    }
    Ok(files)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareAxis {
    TwoStageVsSingle,
    StandardVsUpwind,
    FilteredVsRaw,
}

impl CompareAxis {
    pub const ALL: [CompareAxis; 3] =
        [CompareAxis::TwoStageVsSingle, CompareAxis::StandardVsUpwind, CompareAxis::FilteredVsRaw];

    pub fn name(self) -> &'static str {
        match self {
            CompareAxis::TwoStageVsSingle => "two-stage-vs-single",
            CompareAxis::StandardVsUpwind => "standard-vs-upwind",
            CompareAxis::FilteredVsRaw => "filtered-vs-raw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

/// The single-stage arm with the same nominal iteration budget: stage 1 is
/// skipped and its iterations move to stage 2.
pub fn single_stage_arm(cfg: &ResolvedConfig) -> ResolvedConfig {
    let mut c = cfg.clone();
    c.stage2.max_iters += c.stage1.max_iters;
    c.stage1.max_iters = 0;
    c.stage1.polish = None;
    c
}

/// The modified-loss arm: the configured upwind loss, or the select-r variant
/// for factored speeds and the general variant otherwise.
pub fn upwind_loss_for(cfg: &ResolvedConfig) -> PdeLoss {
    match cfg.loss {
        PdeLoss::Upwind(u) => PdeLoss::Upwind(u),
        PdeLoss::Standard => PdeLoss::Upwind(UpwindConfig::new(match cfg.problem.speed {
            SpeedSpec::Factored { .. } => UpwindVariant::AbsSelect,
            _ => UpwindVariant::General,
        })),
    }
}

/// Arm configurations, named, for an axis. Filtered-vs-raw trains once.
pub fn comparison_arms(cfg: &ResolvedConfig, axis: CompareAxis) -> Vec<(&'static str, ResolvedConfig)> {
    match axis {
        CompareAxis::TwoStageVsSingle => vec![("two-stage", cfg.clone()), ("single-stage", single_stage_arm(cfg))],
        CompareAxis::StandardVsUpwind => {
            let mut a = cfg.clone();
            a.loss = PdeLoss::Standard;
            let mut b = cfg.clone();
            b.loss = upwind_loss_for(cfg);
            vec![("standard", a), ("upwind", b)]
        }
        CompareAxis::FilteredVsRaw => vec![("trained", cfg.clone())],
    }
}

/// Side-by-side outcome of one metric over paired seeds. Lower wins; a tie
/// counts half for each arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub wins_a: f64,
    pub wins_b: f64,
}

pub fn summarize(metric: &str, a: &[f64], b: &[f64]) -> MetricSummary {
    let n = a.len().max(1) as f64;
    let (mut wa, mut wb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        if x < y {
            wa += 1.0;
        } else if y < x {
            wb += 1.0;
        } else {
            wa += 0.5;
            wb += 0.5;
        }
    }
    MetricSummary {
        metric: metric.to_string(),
        mean_a: a.iter().sum::<f64>() / n,
        mean_b: b.iter().sum::<f64>() / n,
        wins_a: wa,
        wins_b: wb,
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub axis: CompareAxis,
    pub arm_names: [&'static str; 2],
    pub arms: Vec<RunResult>,
    pub summary: Vec<MetricSummary>,
}

/// Runs both arms of `axis` with paired seeds and collocation sets.
pub fn compare(cfg: &ResolvedConfig, axis: CompareAxis) -> Result<Comparison> {
    let arms = comparison_arms(cfg, axis);
    let reference = cfg.reference()?;
    let jobs: Vec<(usize, u64)> = (0..arms.len()).flat_map(|a| cfg.seeds.iter().map(move |&s| (a, s))).collect();
    let outcomes = run_parallel(&jobs, |&(a, s)| run_seed(&arms[a].1, s, &reference))?;
    let mut outcomes = outcomes.into_iter();
    let results: Vec<RunResult> = arms
        .iter()
        .map(|(_, c)| RunResult {
            config: c.clone(),
            hash: c.config_hash(),
            reference: reference.clone(),
            seeds: outcomes.by_ref().take(cfg.seeds.len()).collect(),
        })
        .collect();

    let column = |r: &RunResult, m: &str| -> Vec<f64> { r.metrics().iter().filter_map(|s| s.get(m)).collect() };
    let (arm_names, summary) = match axis {
        CompareAxis::FilteredVsRaw => {
            let r = &results[0];
            let raw = column(r, "mae_raw");
            (
                ["filtered", "raw"],
                vec![
                    summarize("mae (filtered vs raw)", &column(r, "mae_filtered"), &raw),
                    summarize("mae (filtered interior vs raw)", &column(r, "mae_filtered_interior"), &raw),
                ],
            )
        }
        _ => {
            let names = [arms[0].0, arms[1].0];
            let s =
                METRIC_COLUMNS.iter().map(|m| summarize(m, &column(&results[0], m), &column(&results[1], m))).collect();
            (names, s)
        }
    };
    Ok(Comparison { axis, arm_names, arms: results, summary })
}

impl Comparison {
    pub fn summary_csv(&self) -> String {
        let [a, b] = self.arm_names;
        let mut out = format!("config_hash,axis,metric,mean_{a},mean_{b},wins_{a},wins_{b}\n");
        let hash = &self.arms[0].hash;
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{hash},{},{},{},{},{},{}",
                self.axis.name(),
                s.metric,
                s.mean_a,
                s.mean_b,
                s.wins_a,
                s.wins_b
            );
        }
        out
    }

    /// Each arm in its own subdirectory plus `summary.csv` at the top.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let names: Vec<&str> = match self.axis {
            CompareAxis::FilteredVsRaw => vec!["trained"],
            _ => self.arm_names.to_vec(),
        };
        for (name, arm) in names.iter().zip(&self.arms) {
            arm.write(&dir.join(name))?;
        }
        write_all(dir, &[("summary.csv", self.summary_csv())])
    }
}
