//! Replicated Monte Carlo studies of covariance spectra.
//!
//! Replicate `r` at grid point `n` simulates with master seed
//! `RngStream::new(master_seed, r).substream(n).seed()`, so results do not
//! depend on scheduling and are identical across runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::distributions::stable_sample;
use crate::error::{Error, Result};
use crate::io::{atomic_write, provenance_line};
use crate::model::{preset, simulate_panel, MarginalPool, ModelSpec, DEFAULT_MC_BUDGET, DEFAULT_N, DEFAULT_P};
use crate::numeric::{median, quantile};
use crate::rng::RngStream;
use crate::spectrum::{diag_approx_error, eigen, sample_cov, CovMatrix, EigenReport, Localization, Mask};
use crate::tail::{hill, TailReport};

pub const SCHEMA_VERSION: u32 = 1;
pub const MIN_STABLE_REPLICATES: usize = 500;
pub const MIN_DICHOTOMY_REPLICATES: usize = 100;
const QQ_POINTS: usize = 99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `a_n^{-2} ||S - diag S||_2`.
    DiagError,
    /// `a_n^{-2} ||S - S o Gamma_p||_2`.
    GammaError,
    /// `max_{i != j} |S_ij| / min_i S_ii`.
    OffdiagRatio,
    TopMaxAbs,
    TopParticipation,
    TopBasisDistance,
    /// `lambda_(1) / tr S`.
    TopTraceRatio,
    /// `mean_i |lambda_(i) / tr S - 1/p|`.
    TraceRatioDeviation,
}

impl Statistic {
    pub const ALL: [Statistic; 8] = [
        Statistic::DiagError,
        Statistic::GammaError,
        Statistic::OffdiagRatio,
        Statistic::TopMaxAbs,
        Statistic::TopParticipation,
        Statistic::TopBasisDistance,
        Statistic::TopTraceRatio,
        Statistic::TraceRatioDeviation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::DiagError => "diag_error",
            Statistic::GammaError => "gamma_error",
            Statistic::OffdiagRatio => "offdiag_ratio",
            Statistic::TopMaxAbs => "top_max_abs",
            Statistic::TopParticipation => "top_participation",
            Statistic::TopBasisDistance => "top_basis_distance",
            Statistic::TopTraceRatio => "top_trace_ratio",
            Statistic::TraceRatioDeviation => "trace_ratio_deviation",
        }
    }

    fn needs_a_n(self) -> bool {
        matches!(self, Statistic::DiagError | Statistic::GammaError)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    StableLimit,
    Figure2,
    RegimeDichotomy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::StableLimit => "stable_limit",
            ExperimentKind::Figure2 => "figure2",
            ExperimentKind::RegimeDichotomy => "regime_dichotomy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Preset(String),
    Spec(ModelSpec),
}

fn default_p() -> usize {
    DEFAULT_P
}
fn default_n_grid() -> Vec<usize> {
    vec![DEFAULT_N]
}
fn default_replicates() -> usize {
    1
}
fn default_statistics() -> Vec<Statistic> {
    Statistic::ALL.to_vec()
}
fn default_budget() -> usize {
    DEFAULT_MC_BUDGET
}
fn default_stable_quantile() -> f64 {
    0.97
}
fn default_presets() -> Vec<String> {
    crate::model::PRESET_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    /// Required except for `regime_dichotomy`, which uses `presets`.
    #[serde(default)]
    pub model: Option<ModelChoice>,
    /// Dimension used with a preset model.
    #[serde(default = "default_p")]
    pub p: usize,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<Statistic>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_budget")]
    pub mc_budget: usize,
    /// Hill threshold used on stable-limit replicates.
    #[serde(default = "default_stable_quantile")]
    pub threshold_quantile: f64,
    #[serde(default = "default_presets")]
    pub presets: Vec<String>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, model: Option<ModelChoice>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            model,
            p: default_p(),
            n_grid: default_n_grid(),
            replicates: default_replicates(),
            statistics: default_statistics(),
            output: None,
            master_seed: 0,
            mc_budget: default_budget(),
            threshold_quantile: default_stable_quantile(),
            presets: default_presets(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rejects every invalid field, naming each.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!("schema_version: expected {SCHEMA_VERSION}, got {}", self.schema_version));
        }
        if self.replicates == 0 {
            problems.push("replicates: must be at least 1".into());
        }
        if self.n_grid.is_empty() {
            problems.push("n_grid: must be non-empty".into());
        } else if self.n_grid.contains(&0) || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            problems.push("n_grid: must be strictly increasing positive integers".into());
        }
        if self.p == 0 {
            problems.push("p: must be at least 1".into());
        }
        if self.statistics.is_empty() {
            problems.push("statistics: must be non-empty".into());
        }
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile < 1.0) {
            problems.push("threshold_quantile: must lie in (0, 1)".into());
        }
        match (&self.model, self.experiment) {
            (None, k) if k != ExperimentKind::RegimeDichotomy => problems.push("model: required".into()),
            (Some(ModelChoice::Preset(name)), _) if !crate::model::PRESET_NAMES.contains(&name.as_str()) => {
                problems.push(format!("model: unknown preset `{name}`"))
            }
            (Some(ModelChoice::Spec(s)), _) => {
                if let Err(e) = s.validate() {
                    problems.push(format!("model: {e}"));
                }
            }
            _ => {}
        }
        match self.experiment {
            ExperimentKind::StableLimit if self.replicates < MIN_STABLE_REPLICATES => {
                problems.push(format!("replicates: stable_limit needs at least {MIN_STABLE_REPLICATES}"))
            }
            ExperimentKind::RegimeDichotomy => {
                if self.replicates < MIN_DICHOTOMY_REPLICATES {
                    problems.push(format!("replicates: regime_dichotomy needs at least {MIN_DICHOTOMY_REPLICATES}"));
                }
                for name in &self.presets {
                    if !crate::model::PRESET_NAMES.contains(&name.as_str()) {
                        problems.push(format!("presets: unknown preset `{name}`"));
                    }
                }
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Label used in output file names.
    pub fn label(&self) -> String {
        match &self.model {
            Some(ModelChoice::Preset(name)) => name.clone(),
            Some(ModelChoice::Spec(_)) => "custom".into(),
            None => "presets".into(),
        }
    }

    pub fn spec(&self, n: usize) -> Result<ModelSpec> {
        match &self.model {
            Some(ModelChoice::Preset(name)) => preset(name, self.p, n, self.master_seed),
            Some(ModelChoice::Spec(s)) => Ok(ModelSpec {
                n,
                master_seed: self.master_seed,
                ..s.clone()
            }),
            None => Err(Error::Config("model: required".into())),
        }
    }
}

/// Seed of replicate `r` at sample size `n`.
pub fn replicate_seed(master_seed: u64, replicate: usize, n: usize) -> u64 {
    RngStream::new(master_seed, replicate as u64).substream(n as u64).seed()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub n: usize,
    pub replicate: usize,
    pub statistic: Statistic,
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub statistic: Statistic,
    pub count: usize,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: ExperimentKind,
    pub label: String,
    pub records: Vec<Record>,
    pub summaries: Vec<Summary>,
}

impl ExperimentResult {
    pub fn median(&self, n: usize, statistic: Statistic) -> Option<f64> {
        self.summaries
            .iter()
            .find(|s| s.n == n && s.statistic == statistic)
            .and_then(|s| s.median)
    }
}

/// Median and quartiles per `(n, statistic)`, recomputed from the records.
pub fn summarize(records: &[Record]) -> Vec<Summary> {
    let mut groups: BTreeMap<(usize, Statistic), Vec<f64>> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.n, r.statistic)).or_default();
        if let Some(v) = r.value {
            g.push(v);
        }
    }
    groups
        .into_iter()
        .map(|((n, statistic), v)| Summary {
            n,
            statistic,
            count: v.len(),
            median: median(&v),
            q25: quantile(&v, 0.25),
            q75: quantile(&v, 0.75),
        })
        .collect()
}

fn top_localization(report: &EigenReport) -> &Localization {
    &report.localization[0]
}

fn statistic_value(
    stat: Statistic,
    s: &CovMatrix,
    report: &EigenReport,
    a_n: Option<f64>,
    gamma: &Mask,
) -> Result<f64> {
    let p = s.p();
    Ok(match stat {
        Statistic::DiagError => diag_approx_error(s, a_n.expect("a_n computed"), &Mask::Diagonal)?,
        Statistic::GammaError => diag_approx_error(s, a_n.expect("a_n computed"), gamma)?,
        Statistic::OffdiagRatio => {
            let min_diag = s.matrix.diag().into_iter().fold(f64::INFINITY, f64::min);
            let mut max_off = 0.0f64;
            for i in 0..p {
                for j in i + 1..p {
                    max_off = max_off.max(s.get(i, j).abs());
                }
            }
            if min_diag > 0.0 {
                max_off / min_diag
            } else {
                return Err(Error::Numeric("zero diagonal entry".into()));
            }
        }
        Statistic::TopMaxAbs => top_localization(report).max_abs_component,
        Statistic::TopParticipation => top_localization(report).participation_ratio,
        Statistic::TopBasisDistance => top_localization(report).nearest_basis_distance,
        Statistic::TopTraceRatio => report.eigenvalues[0] / report.eigenvalues.iter().sum::<f64>(),
        Statistic::TraceRatioDeviation => {
            let tr: f64 = report.eigenvalues.iter().sum();
            report.eigenvalues.iter().map(|l| (l / tr - 1.0 / p as f64).abs()).sum::<f64>() / p as f64
        }
    })
}

fn replicate_values(
    spec: &ModelSpec,
    statistics: &[Statistic],
    a_n: Option<f64>,
    gamma: &Mask,
) -> Result<Vec<Result<f64>>> {
    let panel = simulate_panel(spec)?;
    let s = sample_cov(&panel, false)?;
    let report = eigen(&s.matrix)?;
    Ok(statistics.iter().map(|&st| statistic_value(st, &s, &report, a_n, gamma)).collect())
}

/// Diagonal and `Gamma_p` approximation errors and localization of the top
/// eigenvector across a grid of sample sizes.
pub fn convergence_study(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let base = cfg.spec(cfg.n_grid[0])?;
    let p = base.p;
    let gamma = Mask::Gamma(base.field.gamma_p(p));
    let pool = if cfg.statistics.iter().any(|s| s.needs_a_n()) {
        Some(MarginalPool::draw(&base, cfg.mc_budget)?)
    } else {
        None
    };
    let mut records = Vec::new();
    for &n in &cfg.n_grid {
        let a_n = pool.as_ref().map(|pl| pl.a_n(n).map(|x| x.0)).transpose()?;
        let spec_n = cfg.spec(n)?;
        let rows: Vec<Vec<Record>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let spec_r = spec_n.with_seed(replicate_seed(cfg.master_seed, r, n));
                let values = replicate_values(&spec_r, &cfg.statistics, a_n, &gamma);
                cfg.statistics
                    .iter()
                    .enumerate()
                    .map(|(k, &statistic)| {
                        let v = match &values {
                            Ok(v) => v[k].as_ref().map(|x| *x).map_err(|e| e.to_string()),
                            Err(e) => Err(e.to_string()),
                        };
                        if let Err(e) = &v {
                            log::warn!("n={n} replicate={r} {}: {e}", statistic.name());
                        }
                        Record {
                            n,
                            replicate: r,
                            statistic,
                            value: v.as_ref().ok().copied(),
                            error: v.err(),
                        }
                    })
                    .collect()
            })
            .collect();
        records.extend(rows.into_iter().flatten());
    }
    let summaries = summarize(&records);
    Ok(ExperimentResult {
        experiment: ExperimentKind::Convergence,
        label: cfg.label(),
        records,
        summaries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub level: f64,
    pub empirical: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStable {
    /// 1-based.
    pub series: usize,
    pub hill: Option<TailReport>,
    pub qq: Vec<QqPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub i: usize,
    pub j: usize,
    pub spearman: f64,
    /// Null standard error `1 / sqrt(m - 1)`.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableLimitResult {
    pub alpha: f64,
    pub target_index: f64,
    pub n: usize,
    pub replicates: usize,
    pub a_n: f64,
    pub c_n: f64,
    /// `values[r][i] = a_n^{-2} (S_i - c_n)` of replicate `r`.
    pub values: Vec<Vec<f64>>,
    pub series: Vec<SeriesStable>,
    pub correlations: Vec<PairCorrelation>,
}

/// Tail index and shape of the normalized diagonal sums `a_n^{-2}(S_i - c_n)`
/// across replicates.
pub fn stable_limit_check(
    spec: &ModelSpec,
    n: usize,
    replicates: usize,
    threshold_quantile: f64,
    mc_budget: usize,
) -> Result<StableLimitResult> {
    spec.validate()?;
    if replicates < MIN_STABLE_REPLICATES {
        return Err(Error::param("replicates", format!("need at least {MIN_STABLE_REPLICATES}")));
    }
    let alpha = spec
        .marginal_index()
        .ok_or_else(|| Error::UnsupportedModel("marginal tail index unavailable".into()))?;
    if !(alpha > 0.0 && alpha < 4.0) || alpha == 2.0 {
        return Err(Error::UnsupportedModel(format!("alpha = {alpha} is outside (0, 4) minus {{2}}")));
    }
    let spec_n = spec.with_shape(spec.p, n);
    let pool = MarginalPool::draw(&spec_n, mc_budget.max(n))?;
    let (a_n, _) = pool.a_n(n)?;
    let c_n = pool.c_n(n);
    let a2 = a_n * a_n;
    let p = spec.p;
    let values: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let panel = simulate_panel(&spec_n.with_seed(replicate_seed(spec.master_seed, r, n)))?;
            Ok(panel
                .rows()
                .map(|row| (crate::numeric::neumaier_sum(row.iter().map(|x| x * x)) - c_n) / a2)
                .collect())
        })
        .collect::<Result<_>>()?;
    let target = alpha / 2.0;
    let reference = stable_sample(
        target,
        1.0,
        1.0,
        0.0,
        &RngStream::new(spec.master_seed, u64::MAX),
        replicates,
    )?;
    let levels: Vec<f64> = (1..=QQ_POINTS).map(|k| k as f64 / (QQ_POINTS + 1) as f64).collect();
    let series = (0..p)
        .map(|i| {
            let col: Vec<f64> = values.iter().map(|v| v[i]).collect();
            let qq = levels
                .iter()
                .map(|&l| QqPoint {
                    level: l,
                    empirical: quantile(&col, l).unwrap_or(f64::NAN),
                    reference: quantile(&reference, l).unwrap_or(f64::NAN),
                })
                .collect();
            SeriesStable {
                series: i + 1,
                hill: hill(&col, threshold_quantile).ok(),
                qq,
            }
        })
        .collect();
    let mut correlations = Vec::new();
    for i in 0..p {
        for j in i + 1..p {
            let a: Vec<f64> = values.iter().map(|v| v[i]).collect();
            let b: Vec<f64> = values.iter().map(|v| v[j]).collect();
            correlations.push(PairCorrelation {
                i: i + 1,
                j: j + 1,
                spearman: spearman(&a, &b),
                se: 1.0 / ((replicates - 1) as f64).sqrt(),
            });
        }
    }
    Ok(StableLimitResult {
        alpha,
        target_index: target,
        n,
        replicates,
        a_n,
        c_n,
        values,
        series,
        correlations,
    })
}

/// Average ranks (1-based), ties share their mean rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut m = k;
        while m + 1 < idx.len() && x[idx[m + 1]] == x[idx[k]] {
            m += 1;
        }
        let avg = (k + m) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=m] {
            r[i] = avg;
        }
        k = m + 1;
    }
    r
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let m = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / m, rb.iter().sum::<f64>() / m);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure2Stats {
    pub preset: String,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    /// `lambda_(i) / tr S`, descending.
    pub trace_ratios: Vec<f64>,
    pub top_vector: Vec<f64>,
    pub top_localization: Localization,
}

/// Normalized ordered eigenvalues and the top eigenvector of one simulated run.
pub fn figure2_stats(preset_name: &str, p: usize, n: usize, seed: u64) -> Result<Figure2Stats> {
    let spec = preset(preset_name, p, n, seed)?;
    let s = sample_cov(&simulate_panel(&spec)?, false)?;
    let r = eigen(&s.matrix)?;
    let tr: f64 = r.eigenvalues.iter().sum();
    Ok(Figure2Stats {
        preset: preset_name.to_string(),
        p,
        n,
        seed,
        trace_ratios: r.eigenvalues.iter().map(|l| l / tr).collect(),
        top_vector: r.vectors[0].clone(),
        top_localization: r.localization[0].clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Mann-Whitney `U` of the first sample.
    pub u: f64,
    pub z: f64,
    /// One-sided p-value for "first sample stochastically larger".
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

impl RankSum {
    pub fn significant(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Wilcoxon rank-sum test with tie-corrected normal approximation and continuity correction.
pub fn rank_sum(a: &[f64], b: &[f64]) -> Result<RankSum> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("samples", "both samples must be non-empty"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r = ranks(&pooled);
    let ra: f64 = r[..a.len()].iter().sum();
    let u = ra - na * (na + 1.0) / 2.0;
    let nt = na + nb;
    // tie correction sum (t^3 - t) over tie groups
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut k = 0;
    while k < sorted.len() {
        let mut m = k;
        while m + 1 < sorted.len() && sorted[m + 1] == sorted[k] {
            m += 1;
        }
        let t = (m - k + 1) as f64;
        ties += t * t * t - t;
        k = m + 1;
    }
    let var = na * nb / 12.0 * ((nt + 1.0) - ties / (nt * (nt - 1.0)));
    let mean = na * nb / 2.0;
    let z = if var > 0.0 { (u - mean - 0.5) / var.sqrt() } else { 0.0 };
    let p_value = if var > 0.0 { 0.5 * erfc(z / std::f64::consts::SQRT_2) } else { 1.0 };
    Ok(RankSum {
        u,
        z,
        p_value,
        n_a: a.len(),
        n_b: b.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetLocalization {
    pub preset: String,
    pub max_abs: Vec<f64>,
    pub participation: Vec<f64>,
    pub median_max_abs: f64,
    pub median_participation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyResult {
    pub p: usize,
    pub n: usize,
    pub replicates: usize,
    pub presets: Vec<PresetLocalization>,
    /// `case1` versus `case2_convequiv` top-eigenvector `max_abs_component`, when both were run.
    pub case1_vs_convequiv: Option<RankSum>,
}

pub fn regime_dichotomy(
    presets: &[String],
    replicates: usize,
    p: usize,
    n: usize,
    master_seed: u64,
) -> Result<DichotomyResult> {
    if replicates < MIN_DICHOTOMY_REPLICATES {
        return Err(Error::param("replicates", format!("need at least {MIN_DICHOTOMY_REPLICATES}")));
    }
    let mut out = Vec::new();
    for (k, name) in presets.iter().enumerate() {
        let spec = preset(name, p, n, master_seed)?;
        let locs: Vec<Localization> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let seed = RngStream::new(master_seed, r as u64).substream(k as u64).seed();
                let s = sample_cov(&simulate_panel(&spec.with_seed(seed))?, false)?;
                Ok(eigen(&s.matrix)?.localization[0].clone())
            })
            .collect::<Result<_>>()?;
        let max_abs: Vec<f64> = locs.iter().map(|l| l.max_abs_component).collect();
        let participation: Vec<f64> = locs.iter().map(|l| l.participation_ratio).collect();
        out.push(PresetLocalization {
            preset: name.clone(),
            median_max_abs: median(&max_abs).unwrap_or(f64::NAN),
            median_participation: median(&participation).unwrap_or(f64::NAN),
            max_abs,
            participation,
        });
    }
    let find = |name: &str| out.iter().find(|x| x.preset == name);
    let case1_vs_convequiv = match (find("case1"), find("case2_convequiv")) {
        (Some(a), Some(b)) => Some(rank_sum(&a.max_abs, &b.max_abs)?),
        _ => None,
    };
    Ok(DichotomyResult {
        p,
        n,
        replicates,
        presets: out,
        case1_vs_convequiv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentOutput {
    Convergence(ExperimentResult),
    StableLimit(StableLimitResult),
    Figure2(Figure2Stats),
    RegimeDichotomy(DichotomyResult),
}

/// Runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        ExperimentKind::Convergence => ExperimentOutput::Convergence(convergence_study(cfg)?),
        ExperimentKind::StableLimit => {
            let n = cfg.n_grid[0];
            ExperimentOutput::StableLimit(stable_limit_check(
                &cfg.spec(n)?,
                n,
                cfg.replicates,
                cfg.threshold_quantile,
                cfg.mc_budget,
            )?)
        }
        ExperimentKind::Figure2 => match &cfg.model {
            Some(ModelChoice::Preset(name)) => {
                ExperimentOutput::Figure2(figure2_stats(name, cfg.p, cfg.n_grid[0], cfg.master_seed)?)
            }
            _ => return Err(Error::Config("model: figure2 needs a preset".into())),
        },
        ExperimentKind::RegimeDichotomy => ExperimentOutput::RegimeDichotomy(regime_dichotomy(
            &cfg.presets,
            cfg.replicates,
            cfg.p,
            cfg.n_grid[0],
            cfg.master_seed,
        )?),
    })
}

fn tidy_csv(provenance: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut out = provenance.as_bytes().to_vec();
    {
        let mut wr = csv::Writer::from_writer(&mut out);
        wr.write_record(header)?;
        for r in rows {
            wr.write_record(&r)?;
        }
        wr.flush()?;
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

/// Writes tidy CSV files `{experiment}_{label}_{n}.csv` plus a JSON summary
/// into `dir`; returns the written paths.
pub fn write_outputs(cfg: &ExperimentConfig, output: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let hashed = ExperimentConfig {
        output: None,
        ..cfg.clone()
    };
    let prov = provenance_line(&hashed, cfg.master_seed)?;
    let stem = format!("{}_{}", cfg.experiment.name(), cfg.label());
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        atomic_write(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    match output {
        ExperimentOutput::Convergence(res) => {
            for &n in &cfg.n_grid {
                let rows = res.records.iter().filter(|r| r.n == n).map(|r| {
                    vec![
                        r.n.to_string(),
                        r.replicate.to_string(),
                        r.statistic.name().to_string(),
                        fmt_opt(r.value),
                        r.error.clone().unwrap_or_default(),
                    ]
                });
                put(
                    format!("{stem}_{n}.csv"),
                    tidy_csv(&prov, &["n", "replicate", "statistic", "value", "error"], rows)?,
                )?;
            }
        }
        ExperimentOutput::StableLimit(res) => {
            let p = res.values.first().map_or(0, Vec::len);
            let rows = res.values.iter().enumerate().flat_map(|(r, v)| {
                (0..p).map(move |i| vec![res.n.to_string(), r.to_string(), (i + 1).to_string(), format!("{}", v[i])])
            });
            put(
                format!("{stem}_{}.csv", res.n),
                tidy_csv(&prov, &["n", "replicate", "series", "normalized_value"], rows)?,
            )?;
        }
        ExperimentOutput::Figure2(res) => {
            let rows = (0..res.p).map(|k| {
                vec![
                    (k + 1).to_string(),
                    format!("{}", res.trace_ratios[k]),
                    format!("{}", res.top_vector[k]),
                ]
            });
            put(
                format!("{stem}_{}.csv", res.n),
                tidy_csv(&prov, &["index", "trace_ratio", "top_vector_component"], rows)?,
            )?;
        }
        ExperimentOutput::RegimeDichotomy(res) => {
            let rows = res.presets.iter().flat_map(|pl| {
                (0..pl.max_abs.len()).map(move |r| {
                    vec![
                        pl.preset.clone(),
                        r.to_string(),
                        format!("{}", pl.max_abs[r]),
                        format!("{}", pl.participation[r]),
                    ]
                })
            });
            put(
                format!("{stem}_{}.csv", res.n),
                tidy_csv(&prov, &["preset", "replicate", "max_abs_component", "participation_ratio"], rows)?,
            )?;
        }
    }
    let summary = match output {
        ExperimentOutput::Convergence(res) => serde_json::to_value(&res.summaries)?,
        other => serde_json::to_value(other)?,
    };
    let json = serde_json::to_vec_pretty(&serde_json::json!({
        "config": cfg,
        "summary": summary,
    }))?;
    put(format!("{stem}_summary.json"), json)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::LawSpec;
    use crate::field::CoefficientField;
    use crate::model::Regime;

    #[test]
    fn ranks_with_ties() {
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn rank_sum_self_comparison_not_significant() {
        let a: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64).collect();
        let r = rank_sum(&a, &a).unwrap();
        assert!(!r.significant(0.05), "{r:?}");
        let b: Vec<f64> = a.iter().map(|x| x + 200.0).collect();
        assert!(rank_sum(&b, &a).unwrap().significant(0.05));
        assert!(!rank_sum(&a, &b).unwrap().significant(0.05));
    }

    #[test]
    fn spearman_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn summaries_are_reductions() {
        let recs: Vec<Record> = (0..5)
            .map(|r| Record {
                n: 10,
                replicate: r,
                statistic: Statistic::DiagError,
                value: Some(r as f64),
                error: None,
            })
            .collect();
        let s = summarize(&recs);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].median, s[0].q25, s[0].q75), (Some(2.0), Some(1.0), Some(3.0)));
    }

    #[test]
    fn config_validation_names_fields() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Convergence, Some(ModelChoice::Preset("nope".into())));
        cfg.replicates = 0;
        cfg.n_grid = vec![10, 5];
        match cfg.validate() {
            Err(Error::Config(m)) => {
                for f in ["replicates", "n_grid", "model"] {
                    assert!(m.contains(f), "{m}");
                }
            }
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::from_json(r#"{"schema_version":1,"experiment":"convergence","bogus":1}"#).is_err());
    }

    #[test]
    fn one_dimensional_diag_error_vanishes() {
        let spec = ModelSpec {
            regime: Regime::Case1HeavyZ,
            z_law: LawSpec::student_t(3.0),
            eta_law: LawSpec::standard_gaussian(),
            field: CoefficientField::single(),
            p: 1,
            n: 50,
            master_seed: 3,
        };
        let mut cfg = ExperimentConfig::new(ExperimentKind::Convergence, Some(ModelChoice::Spec(spec)));
        cfg.p = 1;
        cfg.n_grid = vec![50, 100];
        cfg.replicates = 3;
        cfg.mc_budget = 20_000;
        cfg.statistics = vec![Statistic::DiagError, Statistic::OffdiagRatio];
        let res = convergence_study(&cfg).unwrap();
        assert_eq!(res.records.len(), 2 * 3 * 2);
        assert!(res.records.iter().all(|r| r.value == Some(0.0)));
        assert_eq!(convergence_study(&cfg).unwrap(), res);
    }

    #[test]
    fn figure2_rank_one_case() {
        let f = figure2_stats("case1", 4, 1, 9).unwrap();
        assert!((f.trace_ratios[0] - 1.0).abs() < 1e-12);
        assert!(f.trace_ratios[1..].iter().all(|r| r.abs() < 1e-12));
    }
}
