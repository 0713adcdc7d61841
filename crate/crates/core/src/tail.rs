//! Empirical tail inference: Hill estimates, tail balance, extremograms,
//! angular concentration, and the tail-process mixture law of product series.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{EtaRegime, ExpTail, LawSpec};
use crate::error::{Error, Result};
use crate::field::{filter_sigma, CoefficientField};
use crate::numeric::median;
use crate::panel::Panel;
use crate::rng::RngStream;

/// Smallest Hill sample size: the estimator needs two log-spacings.
pub const MIN_HILL_K: usize = 2;
/// Minimum conditioning events for extremogram and angular estimates.
pub const MIN_CONDITIONING: usize = 20;
/// Blocks used by median-of-means aggregation.
pub const MOM_BLOCKS: usize = 32;

/// Number of upper order statistics above the empirical `q`-quantile: `ceil((1 - q) n)`.
pub fn rank_k(n: usize, q: f64) -> usize {
    let raw = (1.0 - q) * n as f64;
    let nearest = raw.round();
    // (1 - q) n is often an integer up to rounding noise, e.g. q = 0.97, n = 100
    let k = if (raw - nearest).abs() < 1e-9 { nearest } else { raw.ceil() };
    k.max(0.0) as usize
}

fn check_level(q: f64) -> Result<()> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::param("threshold_quantile", "must lie in [0, 1)"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Balance {
    pub p_plus: f64,
    pub p_minus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub hill_index: f64,
    /// `X_(k+1)`, the largest value not counted as an exceedance.
    pub threshold: f64,
    pub k_exceedances: usize,
    pub balance: Balance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extremogram: Option<Vec<ExtremogramPoint>>,
}

fn sorted_abs_desc(data: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = data.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Hill estimate of the tail index of `|data|` from the `k = ceil((1 - q) n)` largest values.
pub fn hill(data: &[f64], threshold_quantile: f64) -> Result<TailReport> {
    check_level(threshold_quantile)?;
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite observation".into()));
    }
    let n = data.len();
    let k = rank_k(n, threshold_quantile);
    if k < MIN_HILL_K || k >= n {
        return Err(Error::InsufficientTail {
            needed: MIN_HILL_K,
            found: k.min(n.saturating_sub(1)),
        });
    }
    let sorted = sorted_abs_desc(data);
    let u = sorted[k];
    if u <= 0.0 {
        return Err(Error::InsufficientTail {
            needed: MIN_HILL_K,
            found: 0,
        });
    }
    let log_u = u.ln();
    let s: f64 = sorted[..k].iter().map(|x| x.ln() - log_u).sum();
    if s <= 0.0 {
        // all top order statistics tie with the threshold
        return Err(Error::InsufficientTail {
            needed: MIN_HILL_K,
            found: 0,
        });
    }
    Ok(TailReport {
        hill_index: k as f64 / s,
        threshold: u,
        k_exceedances: k,
        balance: balance_at(data, u)?,
        extremogram: None,
    })
}

fn balance_at(data: &[f64], u: f64) -> Result<Balance> {
    let (mut plus, mut total) = (0usize, 0usize);
    for &x in data {
        if x.abs() > u {
            total += 1;
            plus += (x > u) as usize;
        }
    }
    if total == 0 {
        return Err(Error::InsufficientTail { needed: 1, found: 0 });
    }
    let p_plus = plus as f64 / total as f64;
    Ok(Balance {
        p_plus,
        p_minus: 1.0 - p_plus,
    })
}

/// Fractions of positive and negative values among the exceedances of `|data|`.
pub fn tail_balance(data: &[f64], threshold_quantile: f64) -> Result<Balance> {
    check_level(threshold_quantile)?;
    let k = rank_k(data.len(), threshold_quantile);
    if k == 0 || k >= data.len() {
        return Err(Error::InsufficientTail { needed: 1, found: 0 });
    }
    balance_at(data, sorted_abs_desc(data)[k])
}

/// Hill indices of the product series `|X_it X_jt|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillMatrix {
    pub p: usize,
    pub threshold_quantile: f64,
    /// Row-major; `None` where the tail was insufficient.
    pub entries: Vec<Option<f64>>,
}

impl HillMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.p + j]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["series".to_string()];
        header.extend((1..=self.p).map(|j| format!("s{j}")));
        wr.write_record(&header)?;
        for i in 0..self.p {
            let mut rec = vec![format!("s{}", i + 1)];
            rec.extend((0..self.p).map(|j| self.get(i, j).map_or(String::new(), |v| format!("{v}"))));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn hill_matrix(panel: &Panel, threshold_quantile: f64) -> Result<HillMatrix> {
    check_level(threshold_quantile)?;
    let p = panel.p();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect();
    let values: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let prod: Vec<f64> = panel.row(i).iter().zip(panel.row(j)).map(|(a, b)| a * b).collect();
            hill(&prod, threshold_quantile).ok().map(|r| r.hill_index)
        })
        .collect();
    let mut entries = vec![None; p * p];
    for (&(i, j), v) in pairs.iter().zip(values) {
        entries[i * p + j] = v;
        entries[j * p + i] = v;
    }
    Ok(HillMatrix {
        p,
        threshold_quantile,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremogramPoint {
    pub lag: usize,
    pub estimate: f64,
    pub se: f64,
    /// Times `t` with `|X_t| > u` and `t + lag` inside the sample.
    pub base: usize,
    pub joint: usize,
}

/// Plug-in estimate of `P(|X_{t+h}| > u | |X_t| > u)` with `u` the empirical quantile of `|X|`.
pub fn extremogram(series: &[f64], lags: &[usize], threshold_quantile: f64) -> Result<Vec<ExtremogramPoint>> {
    check_level(threshold_quantile)?;
    let n = series.len();
    let k = rank_k(n, threshold_quantile);
    if k == 0 || k >= n {
        return Err(Error::InsufficientTail {
            needed: MIN_CONDITIONING,
            found: k,
        });
    }
    let u = sorted_abs_desc(series)[k];
    let exceed: Vec<bool> = series.iter().map(|x| x.abs() > u).collect();
    lags.iter()
        .map(|&h| {
            if h >= n {
                return Err(Error::param("lags", format!("lag {h} exceeds series length {n}")));
            }
            let (mut base, mut joint) = (0usize, 0usize);
            for t in 0..n - h {
                if exceed[t] {
                    base += 1;
                    joint += exceed[t + h] as usize;
                }
            }
            if base < MIN_CONDITIONING {
                return Err(Error::InsufficientTail {
                    needed: MIN_CONDITIONING,
                    found: base,
                });
            }
            let est = joint as f64 / base as f64;
            Ok(ExtremogramPoint {
                lag: h,
                estimate: est,
                se: (est * (1.0 - est) / base as f64).sqrt(),
                base,
                joint,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularEstimate {
    pub estimate: f64,
    pub se: f64,
    pub exceedances: usize,
}

/// Fraction of extreme columns `X_t / ||X_t||_inf` lying within `axis_epsilon`
/// (max-norm) of a signed canonical basis vector.
pub fn angular_concentration(panel: &Panel, threshold_quantile: f64, axis_epsilon: f64) -> Result<AngularEstimate> {
    check_level(threshold_quantile)?;
    if !(axis_epsilon >= 0.0) {
        return Err(Error::param("axis_epsilon", "must be non-negative"));
    }
    let n = panel.n();
    // largest and second largest |X_it| per column
    let mut top = vec![(0.0f64, 0.0f64); n];
    for row in panel.rows() {
        for (t, x) in row.iter().enumerate() {
            let a = x.abs();
            let (m1, m2) = top[t];
            top[t] = if a > m1 { (a, m1) } else { (m1, m2.max(a)) };
        }
    }
    let norms: Vec<f64> = top.iter().map(|t| t.0).collect();
    let k = rank_k(n, threshold_quantile);
    if k < MIN_CONDITIONING || k >= n {
        return Err(Error::InsufficientTail {
            needed: MIN_CONDITIONING,
            found: k.min(n),
        });
    }
    let u = sorted_abs_desc(&norms)[k];
    let (mut hits, mut total) = (0usize, 0usize);
    for &(m1, m2) in &top {
        if m1 > u {
            total += 1;
            // distance to the nearest signed axis in max-norm is m2 / m1
            hits += (m2 <= axis_epsilon * m1) as usize;
        }
    }
    if total < MIN_CONDITIONING {
        return Err(Error::InsufficientTail {
            needed: MIN_CONDITIONING,
            found: total,
        });
    }
    let est = hits as f64 / total as f64;
    Ok(AngularEstimate {
        estimate: est,
        se: (est * (1.0 - est) / total as f64).sqrt(),
        exceedances: total,
    })
}

/// Constraint on one coordinate `Theta_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LagSet {
    Any,
    /// `lo <= x <= hi`.
    Interval { lo: f64, hi: f64 },
    /// `lo <= |x| <= hi`.
    AbsBetween { lo: f64, hi: f64 },
    /// `|x| > delta`.
    AbsAbove { delta: f64 },
    /// `|x| <= delta`.
    AbsAtMost { delta: f64 },
}

impl LagSet {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            LagSet::Any => true,
            LagSet::Interval { lo, hi } => lo <= x && x <= hi,
            LagSet::AbsBetween { lo, hi } => lo <= x.abs() && x.abs() <= hi,
            LagSet::AbsAbove { delta } => x.abs() > delta,
            LagSet::AbsAtMost { delta } => x.abs() <= delta,
        }
    }
}

/// Product box `B_0 x ... x B_n` for `(Theta_0, ..., Theta_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailBox {
    pub lags: Vec<LagSet>,
}

impl TailBox {
    pub fn contains(&self, theta: &[f64]) -> bool {
        self.lags.iter().zip(theta).all(|(s, &x)| s.contains(x))
    }

    /// Horizon `n` of the box.
    pub fn horizon(&self) -> usize {
        self.lags.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureQuery {
    pub field: CoefficientField,
    pub i: i64,
    pub j: i64,
    pub eta_law: LawSpec,
    pub z_law: LawSpec,
    pub tail_box: TailBox,
    pub mc_budget: usize,
    /// Length of the simulated path for the empirical counterpart; 0 skips it.
    pub path_length: usize,
    /// Conditioning quantile of `|X_i0 X_j0|` on the path.
    pub path_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandEstimate {
    pub estimate: f64,
    /// Half-width of the uncertainty band (about one standard error).
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureResult {
    pub regime: EtaRegime,
    pub psi_ij: f64,
    pub lambda0_size: usize,
    pub formula: BandEstimate,
    pub empirical: Option<EmpiricalConditional>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConditional {
    pub estimate: f64,
    pub se: f64,
    pub exceedances: usize,
    pub threshold: f64,
}

/// Evaluates the limiting law of the spectral tail process of `(X_it X_jt)_t`
/// on a box, together with a long-path empirical counterpart.
pub fn tail_process_mixture(q: &MixtureQuery, stream: &RngStream) -> Result<MixtureResult> {
    q.eta_law.validate()?;
    q.z_law.validate()?;
    if q.tail_box.lags.is_empty() {
        return Err(Error::param("tail_box", "needs at least the lag-0 constraint"));
    }
    if q.mc_budget < MOM_BLOCKS * 2 {
        return Err(Error::Budget {
            budget: q.mc_budget,
            required: MOM_BLOCKS * 2,
        });
    }
    let alpha = match q.eta_law.exp_tail() {
        ExpTail::RegularlyVarying(a) => a,
        _ => {
            return Err(Error::UnsupportedModel(format!(
                "exp(eta) must be regularly varying, got {}",
                q.eta_law.name()
            )))
        }
    };
    let regime = q.eta_law.eta_regime().ok_or_else(|| {
        Error::UnsupportedModel(format!("no product regime known for {}", q.eta_law.name()))
    })?;
    let psi = q.field.psi_exponent(q.i - q.j);
    let lambda0 = q.field.lambda_set(q.i, q.j, 0);
    let formula = match regime {
        EtaRegime::InfiniteMoment => infinite_moment_formula(q, alpha / psi, &stream.substream(0))?,
        EtaRegime::ConvolutionEquivalent => mixture_formula(q, alpha, psi, &stream.substream(0))?,
    };
    let empirical = if q.path_length > 0 {
        Some(empirical_conditional(q, &stream.substream(1))?)
    } else {
        None
    };
    Ok(MixtureResult {
        regime,
        psi_ij: psi,
        lambda0_size: lambda0.len(),
        formula,
        empirical,
    })
}

/// Theta_0 = sign(Z_i Z_j) under the |Z_i Z_j|^gamma tilt, Theta_t = 0 afterwards.
fn infinite_moment_formula(q: &MixtureQuery, gamma: f64, stream: &RngStream) -> Result<BandEstimate> {
    let z = q.z_law.sampler()?;
    let same = q.i == q.j;
    let per_block = q.mc_budget / MOM_BLOCKS;
    let blocks: Vec<f64> = (0..MOM_BLOCKS)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.substream(b as u64).rng();
            let (mut pos, mut tot) = (0.0, 0.0);
            for _ in 0..per_block {
                let zi = z.draw(&mut rng);
                let prod = if same { zi * zi } else { zi * z.draw(&mut rng) };
                let w = prod.abs().powf(gamma);
                tot += w;
                if prod > 0.0 {
                    pos += w;
                }
            }
            if tot > 0.0 {
                pos / tot
            } else {
                0.5
            }
        })
        .collect();
    let p_plus = median(&blocks).unwrap_or(0.5);
    let se = block_se(&blocks);
    let mut tail = vec![0.0; q.tail_box.lags.len()];
    let mut prob = 0.0;
    for (sign, p) in [(1.0, p_plus), (-1.0, 1.0 - p_plus)] {
        tail[0] = sign;
        if q.tail_box.contains(&tail) {
            prob += p;
        }
    }
    // the sign probabilities are the only random input
    let only_one_sign = q.tail_box.contains(&{
        let mut v = tail.clone();
        v[0] = 1.0;
        v
    }) != q.tail_box.contains(&tail);
    Ok(BandEstimate {
        estimate: prob,
        se: if only_one_sign { se } else { 0.0 },
    })
}

fn block_se(blocks: &[f64]) -> f64 {
    let m = blocks.len() as f64;
    let mean = blocks.iter().sum::<f64>() / m;
    let var = blocks.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    // sampling sd of a median of m roughly normal block means
    1.2533 * (var / m).sqrt()
}

/// Indices of the `eta` coordinates that the volatilities of rows `i`, `j` at
/// times `0..=horizon` depend on, with the filter terms as `(slot, weight)`.
struct EtaLayout {
    slots: BTreeMap<(i64, i64), usize>,
    /// `terms[row][t]`, row 0 is `i` and row 1 is `j`.
    terms: [Vec<Vec<(usize, f64)>>; 2],
}

impl EtaLayout {
    fn new(field: &CoefficientField, i: i64, j: i64, horizon: usize) -> Self {
        let mut slots = BTreeMap::new();
        let mut terms: [Vec<Vec<(usize, f64)>>; 2] = [Vec::new(), Vec::new()];
        for (r, row) in [i, j].into_iter().enumerate() {
            for t in 0..=horizon as i64 {
                let mut ts = Vec::new();
                for (k, l, w) in field.support() {
                    let next = slots.len();
                    let slot = *slots.entry((row - k, t - l)).or_insert(next);
                    ts.push((slot, w));
                }
                terms[r].push(ts);
            }
        }
        Self { slots, terms }
    }

    fn log_sigma(&self, r: usize, t: usize, eta: &[f64]) -> f64 {
        self.terms[r][t].iter().map(|&(s, w)| w * eta[s]).sum()
    }
}

/// Monte Carlo evaluation of the mixture formula. For the term of `(u, v)` the
/// factor `exp(psi_ij eta_uv)` cancels in every non-zero ratio and contributes
/// an independent `exp(alpha eta_uv)` to the weight, so it is held at zero and
/// dropped from the weight; the ratio of expectations is unchanged.
fn mixture_formula(q: &MixtureQuery, alpha: f64, psi: f64, stream: &RngStream) -> Result<BandEstimate> {
    let horizon = q.tail_box.horizon();
    let layout = EtaLayout::new(&q.field, q.i, q.j, horizon);
    let lambda: Vec<_> = (0..=horizon as i64).map(|t| q.field.lambda_set(q.i, q.j, t)).collect();
    let terms: Vec<(usize, Vec<bool>)> = lambda[0]
        .indices
        .iter()
        .map(|&(u, v)| {
            let slot = layout.slots[&(u, v)];
            let active = (0..=horizon).map(|t| lambda[t].contains(u, v)).collect();
            (slot, active)
        })
        .collect();
    if terms.is_empty() {
        return Err(Error::Numeric("empty lag-0 index set".into()));
    }
    let eta = q.eta_law.sampler()?;
    let z = q.z_law.sampler()?;
    let same = q.i == q.j;
    let gamma = alpha / psi;
    let n_slots = layout.slots.len();
    let per_block = (q.mc_budget / (MOM_BLOCKS * terms.len())).max(1);

    let blocks: Vec<f64> = (0..MOM_BLOCKS)
        .into_par_iter()
        .map(|b| {
            let mut total = 0.0;
            for (ti, (slot, active)) in terms.iter().enumerate() {
                let mut rng = stream.substream((b * terms.len() + ti) as u64).rng();
                let mut grid = vec![0.0; n_slots];
                let mut prod = vec![0.0; horizon + 1];
                let mut theta = vec![0.0; horizon + 1];
                let (mut num, mut den) = (0.0, 0.0);
                for _ in 0..per_block {
                    eta.fill(&mut rng, &mut grid);
                    grid[*slot] = 0.0;
                    for (t, pt) in prod.iter_mut().enumerate() {
                        let zi = z.draw(&mut rng);
                        let zj = if same { zi } else { z.draw(&mut rng) };
                        let ls = layout.log_sigma(0, t, &grid) + layout.log_sigma(1, t, &grid);
                        *pt = ls.exp() * zi * zj;
                    }
                    let base = prod[0].abs();
                    if base == 0.0 {
                        continue;
                    }
                    for t in 0..=horizon {
                        theta[t] = if active[t] { prod[t] / base } else { 0.0 };
                    }
                    let w = base.powf(gamma);
                    den += w;
                    if q.tail_box.contains(&theta) {
                        num += w;
                    }
                }
                if den > 0.0 {
                    total += num / den;
                }
            }
            total / terms.len() as f64
        })
        .collect();
    Ok(BandEstimate {
        estimate: median(&blocks).unwrap_or(f64::NAN),
        se: block_se(&blocks),
    })
}

/// Conditional frequency of `(P_{t+s} / |P_t|)_s` in the box given `|P_t| > u`
/// along one long simulated path of `P_t = X_it X_jt`.
fn empirical_conditional(q: &MixtureQuery, stream: &RngStream) -> Result<EmpiricalConditional> {
    check_level(q.path_quantile)?;
    let horizon = q.tail_box.horizon();
    let len = q.path_length;
    if len <= horizon + MIN_CONDITIONING {
        return Err(Error::param("path_length", "too short for the box horizon"));
    }
    let (lo, hi) = (q.i.min(q.j), q.i.max(q.j));
    let sigma = filter_sigma(&q.field, &q.eta_law, lo..=hi, len, &stream.substream(0))?;
    let width = (hi - lo + 1) as usize;
    let ri = (q.i - lo) as usize;
    let rj = (q.j - lo) as usize;
    let z = crate::distributions::sample(&q.z_law, &stream.substream(1), width * len)?;
    let x = |r: usize, t: usize| sigma[r * len + t] * z[r * len + t];
    let prod: Vec<f64> = (0..len).map(|t| x(ri, t) * x(rj, t)).collect();
    let k = rank_k(len, q.path_quantile);
    if k < MIN_CONDITIONING || k >= len {
        return Err(Error::InsufficientTail {
            needed: MIN_CONDITIONING,
            found: k.min(len),
        });
    }
    let u = sorted_abs_desc(&prod)[k];
    let (mut hits, mut total) = (0usize, 0usize);
    let mut theta = vec![0.0; horizon + 1];
    for t in 0..len - horizon {
        let base = prod[t].abs();
        if base > u {
            total += 1;
            for (s, th) in theta.iter_mut().enumerate() {
                *th = prod[t + s] / base;
            }
            hits += q.tail_box.contains(&theta) as usize;
        }
    }
    if total < MIN_CONDITIONING {
        return Err(Error::InsufficientTail {
            needed: MIN_CONDITIONING,
            found: total,
        });
    }
    let est = hits as f64 / total as f64;
    Ok(EmpiricalConditional {
        estimate: est,
        se: (est * (1.0 - est) / total as f64).sqrt(),
        exceedances: total,
        threshold: u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::PanelRole;
    use approx::assert_relative_eq;

    #[test]
    fn rank_threshold_rounding() {
        assert_eq!(rank_k(100, 0.97), 3);
        assert_eq!(rank_k(100_000, 0.97), 3000);
        assert_eq!(rank_k(3, 1.0 / 3.0), 2);
        assert_eq!(rank_k(10, 0.95), 1);
        assert_eq!(rank_k(7, 0.5), 4);
    }

    #[test]
    fn hill_three_points() {
        let e = std::f64::consts::E;
        let r = hill(&[e.powi(3), e * e, e], 1.0 / 3.0).unwrap();
        assert_eq!(r.k_exceedances, 2);
        assert_relative_eq!(r.hill_index, 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(r.threshold, e);
        assert_eq!(r.balance, Balance { p_plus: 1.0, p_minus: 0.0 });
    }

    #[test]
    fn hill_scale_invariant() {
        let data: Vec<f64> = (1..200).map(|i| 1.0 / (i as f64).sqrt()).collect();
        let a = hill(&data, 0.9).unwrap();
        let scaled: Vec<f64> = data.iter().map(|x| 7.5 * x).collect();
        let b = hill(&scaled, 0.9).unwrap();
        assert_relative_eq!(a.hill_index, b.hill_index, max_relative = 1e-12);
    }

    #[test]
    fn hill_errors() {
        assert!(matches!(hill(&[1.0, 2.0, 3.0], 0.9), Err(Error::InsufficientTail { .. })));
        assert!(matches!(hill(&[2.0; 50], 0.9), Err(Error::InsufficientTail { .. })));
        assert!(hill(&[1.0; 5], 1.5).is_err());
    }

    #[test]
    fn balance_positive_data() {
        let data: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = tail_balance(&data, 0.9).unwrap();
        assert_eq!((b.p_plus, b.p_minus), (1.0, 0.0));
        let signed: Vec<f64> = (1..=100).map(|i| if i % 2 == 0 { i as f64 } else { -(i as f64) }).collect();
        let b = tail_balance(&signed, 0.9).unwrap();
        assert_eq!(b.p_plus + b.p_minus, 1.0);
        assert_eq!(b.p_plus, 0.5);
    }

    #[test]
    fn hill_matrix_constant_panel_missing() {
        let p = Panel::new(2, 100, vec![1.0; 200], PanelRole::X).unwrap();
        let m = hill_matrix(&p, 0.9).unwrap();
        assert!(m.entries.iter().all(Option::is_none));
    }

    #[test]
    fn extremogram_persistent_series() {
        let s: Vec<f64> = (0..1000).map(f64::from).collect();
        for pt in extremogram(&s, &[1, 2, 5], 0.9).unwrap() {
            assert_eq!(pt.estimate, 1.0);
        }
    }

    #[test]
    fn extremogram_needs_exceedances() {
        let s: Vec<f64> = (0..100).map(f64::from).collect();
        assert!(matches!(extremogram(&s, &[1], 0.97), Err(Error::InsufficientTail { .. })));
    }

    #[test]
    fn angular_single_row() {
        let mut v = vec![0.0; 3 * 200];
        for t in 0..200 {
            v[200 + t] = (t as f64 + 1.0) * if t % 2 == 0 { 1.0 } else { -1.0 };
        }
        let p = Panel::new(3, 200, v, PanelRole::X).unwrap();
        let a = angular_concentration(&p, 0.8, 0.0).unwrap();
        assert_eq!(a.estimate, 1.0);
    }

    fn query(eta: LawSpec, field: CoefficientField, tail_box: TailBox) -> MixtureQuery {
        MixtureQuery {
            field,
            i: 0,
            j: 0,
            eta_law: eta,
            z_law: LawSpec::standard_gaussian(),
            tail_box,
            mc_budget: 20_000,
            path_length: 0,
            path_quantile: 0.99,
        }
    }

    #[test]
    fn mixture_full_space_is_one() {
        let unit = TailBox {
            lags: vec![LagSet::AbsBetween { lo: 1.0, hi: 1.0 }],
        };
        for eta in [LawSpec::ConvEquivEta, LawSpec::exponential(3.0)] {
            let r = tail_process_mixture(&query(eta, CoefficientField::tridiag(), unit.clone()), &RngStream::new(1, 0))
                .unwrap();
            assert_relative_eq!(r.formula.estimate, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn infinite_moment_lag_one_vanishes() {
        let b = TailBox {
            lags: vec![LagSet::Any, LagSet::AbsAbove { delta: 0.01 }],
        };
        let r = tail_process_mixture(&query(LawSpec::exponential(3.0), CoefficientField::ma18(), b), &RngStream::new(2, 0))
            .unwrap();
        assert_eq!(r.formula.estimate, 0.0);
        assert_eq!(r.regime, EtaRegime::InfiniteMoment);
    }

    #[test]
    fn light_eta_unsupported() {
        let b = TailBox { lags: vec![LagSet::Any] };
        let r = tail_process_mixture(&query(LawSpec::standard_gaussian(), CoefficientField::single(), b), &RngStream::new(2, 0));
        assert!(matches!(r, Err(Error::UnsupportedModel(_))));
    }
}
