//! Tail behaviour of products of independent regularly varying factors.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::LawSpec;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Draws per parallel block in the Monte Carlo routines.
const BLOCK: usize = 1 << 16;

/// Minimum budget for ratio estimation.
pub const MIN_RATIO_BUDGET: usize = 1_000_000;

/// Non-negative `n x p` exponent matrix `a_ik`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentMatrix {
    rows: Vec<Vec<f64>>,
}

impl ExponentMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || p == 0 {
            return Err(Error::param("a", "exponent matrix must be non-empty"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::param("a", format!("row {} has {} entries, expected {p}", i + 1, r.len())));
            }
            if let Some(k) = r.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::param("a", format!("entry ({}, {}) must be finite and >= 0", i + 1, k + 1)));
            }
        }
        let m = Self { rows };
        if m.a_max() <= 0.0 {
            return Err(Error::param("a", "maximal entry must be positive"));
        }
        Ok(m)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.rows[0].len()
    }

    pub fn a_max(&self) -> f64 {
        self.rows.iter().flatten().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeffResult {
    pub a_max: f64,
    pub p_eff: usize,
    /// 1-based column subsets, each of size `p_eff`.
    pub p_eff_sets: BTreeSet<Vec<usize>>,
}

/// Effective number of heaviest factors and the column sets realizing it.
pub fn peff(a: &ExponentMatrix) -> Result<PeffResult> {
    let a_max = a.a_max();
    for k in 0..a.n_cols() {
        if !a.rows.iter().any(|r| r[k] == a_max) {
            return Err(Error::ContractViolation(format!(
                "column {} never attains a_max = {a_max}",
                k + 1
            )));
        }
    }
    let max_sets: Vec<Vec<usize>> = a
        .rows
        .iter()
        .map(|r| (0..r.len()).filter(|&k| r[k] == a_max).map(|k| k + 1).collect())
        .collect();
    let p_eff = max_sets.iter().map(Vec::len).max().unwrap_or(0);
    let p_eff_sets = max_sets.into_iter().filter(|s| s.len() == p_eff).collect();
    Ok(PeffResult {
        a_max,
        p_eff,
        p_eff_sets,
    })
}

/// Exact survival of the product of two iid standard Pareto(alpha) variables.
pub fn pareto_product_survival(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", "must be positive and finite"));
    }
    if !(x >= 1.0) {
        return Err(Error::param("x", "must be at least 1"));
    }
    Ok(x.powf(-alpha) * (1.0 + alpha * x.ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub level: f64,
    pub threshold: f64,
    /// `None` when no draw of `X` exceeded the threshold.
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub exceed_x: u64,
    pub exceed_xy: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub draws: usize,
    pub points: Vec<RatioPoint>,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    a: u64,
    b: u64,
    ab: u64,
}

/// Paired Monte Carlo estimate of `P(XY > x) / P(X > x)` at thresholds given
/// as quantile levels of `X`.
pub fn ratio_limit_mc(
    x_law: &LawSpec,
    y_law: &LawSpec,
    levels: &[f64],
    mc_budget: usize,
    stream: &RngStream,
) -> Result<RatioEstimate> {
    if x_law.tail_index().is_none() {
        return Err(Error::param("x_law", "must be regularly varying"));
    }
    if mc_budget < MIN_RATIO_BUDGET {
        return Err(Error::Budget {
            budget: mc_budget,
            required: MIN_RATIO_BUDGET,
        });
    }
    if levels.is_empty() {
        return Err(Error::param("levels", "grid must be non-empty"));
    }
    if levels.iter().any(|u| !(*u > 0.0 && *u < 1.0)) {
        return Err(Error::param("levels", "quantile levels must lie in (0, 1)"));
    }
    let thresholds = levels.iter().map(|&u| x_law.quantile(u)).collect::<Result<Vec<_>>>()?;
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("levels", "grid must be strictly increasing"));
    }
    let xs = x_law.sampler()?;
    let ys = y_law.sampler()?;
    let blocks = mc_budget.div_ceil(BLOCK);
    let counts = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK.min(mc_budget - b * BLOCK);
            let mut rng = stream.substream(b as u64).rng();
            let mut c = vec![Counts::default(); thresholds.len()];
            for _ in 0..len {
                let x = xs.draw(&mut rng);
                let xy = x * ys.draw(&mut rng);
                for (ci, &t) in c.iter_mut().zip(&thresholds) {
                    let a = xy > t;
                    let bx = x > t;
                    ci.a += a as u64;
                    ci.b += bx as u64;
                    ci.ab += (a && bx) as u64;
                }
            }
            c
        })
        .reduce(
            || vec![Counts::default(); thresholds.len()],
            |mut acc, c| {
                for (s, o) in acc.iter_mut().zip(c) {
                    s.a += o.a;
                    s.b += o.b;
                    s.ab += o.ab;
                }
                acc
            },
        );

    let n = mc_budget as f64;
    let points = levels
        .iter()
        .zip(&thresholds)
        .zip(counts)
        .map(|((&level, &threshold), c)| {
            let (estimate, se) = if c.b == 0 {
                (None, None)
            } else {
                let (pa, pb, pab) = (c.a as f64 / n, c.b as f64 / n, c.ab as f64 / n);
                let r = pa / pb;
                // delta method for a ratio of two correlated proportions
                let var = (pa * (1.0 - pa) / (pb * pb) + pa * pa * pb * (1.0 - pb) / pb.powi(4)
                    - 2.0 * pa * (pab - pa * pb) / pb.powi(3))
                    / n;
                (Some(r), Some(var.max(0.0).sqrt()))
            };
            RatioPoint {
                level,
                threshold,
                estimate,
                se,
                exceed_x: c.b,
                exceed_xy: c.a,
            }
        })
        .collect();
    Ok(RatioEstimate {
        draws: mc_budget,
        points,
    })
}

/// A non-negative factor `Y`: either drawn from a law with non-negative
/// support or as `exp(eta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "law", rename_all = "snake_case")]
pub enum PositiveFactor {
    Law(LawSpec),
    ExpOf(LawSpec),
}

impl PositiveFactor {
    fn validate(&self) -> Result<()> {
        match self {
            PositiveFactor::Law(l) => {
                l.validate()?;
                if l.cdf(0.0)? > 0.0 {
                    return Err(Error::param("y_law", "factor law must be supported on (0, inf)"));
                }
                Ok(())
            }
            PositiveFactor::ExpOf(l) => l.validate(),
        }
    }

    fn survival(&self, y: f64) -> Result<f64> {
        match self {
            PositiveFactor::Law(l) => l.survival(y),
            PositiveFactor::ExpOf(l) => {
                if y <= 0.0 {
                    Ok(1.0)
                } else {
                    l.survival(y.ln())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitupRow {
    pub t: f64,
    /// `None` for the full-ratio row.
    pub s: Option<f64>,
    /// `P(prod > v t) / P(Y^a_max > t)`; the remainder is reported in `remainder`.
    pub ratio: f64,
    pub ratio_se: f64,
    /// Per heavy factor `j`: `P(prod > v t, Y_j^a_max > s t) / P(Y^a_max > t)`, 1-based `j`.
    pub single_big: Vec<(usize, f64, f64)>,
    /// `P(prod > v t, max_j Y_j^a_max <= s t) / P(Y^a_max > t)` with its SE.
    pub remainder: Option<(f64, f64)>,
    pub exceedances: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitupReport {
    pub a: Vec<f64>,
    pub v: f64,
    pub draws: usize,
    pub rows: Vec<SplitupRow>,
}

/// Monte Carlo decomposition of the tail of `prod_j Y_j^{a_j}` into single
/// big factor contributions and a remainder where every factor is moderate.
///
/// The denominator `P(Y^a_max > t)` is evaluated exactly from the factor law.
pub fn splitup_check(
    factor: &PositiveFactor,
    a: &[f64],
    v: f64,
    t_grid: &[f64],
    s_grid: &[f64],
    mc_budget: usize,
    stream: &RngStream,
) -> Result<SplitupReport> {
    factor.validate()?;
    if a.is_empty() || a.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::param("a", "exponents must be finite and >= 0"));
    }
    let a_max = a.iter().copied().fold(0.0, f64::max);
    if a_max <= 0.0 {
        return Err(Error::param("a", "max exponent must be positive"));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param("v", "must be positive"));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::param("t_grid", "thresholds must be positive"));
    }
    if s_grid.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::param("s_grid", "values must be positive"));
    }
    if mc_budget == 0 {
        return Err(Error::Budget {
            budget: 0,
            required: 1,
        });
    }
    let heavy: Vec<usize> = (0..a.len()).filter(|&j| a[j] == a_max).collect();
    let sampler = match factor {
        PositiveFactor::Law(l) | PositiveFactor::ExpOf(l) => l.sampler()?,
    };
    let exp_of = matches!(factor, PositiveFactor::ExpOf(_));

    // counts[t][0] = prod exceedances; then per s: per heavy j, then remainder
    let width = 1 + s_grid.len() * (heavy.len() + 1);
    let blocks = mc_budget.div_ceil(BLOCK);
    let counts = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = BLOCK.min(mc_budget - b * BLOCK);
            let mut rng = stream.substream(b as u64).rng();
            let mut c = vec![vec![0u64; width]; t_grid.len()];
            let mut powered = vec![0.0; a.len()];
            for _ in 0..len {
                let mut log_prod = 0.0;
                for (j, pw) in powered.iter_mut().enumerate() {
                    let d = sampler.draw(&mut rng);
                    let log_y = if exp_of { d } else { d.ln() };
                    log_prod += a[j] * log_y;
                    *pw = a_max * log_y;
                }
                let log_max = powered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for (ct, &t) in c.iter_mut().zip(t_grid) {
                    if log_prod <= (v * t).ln() {
                        continue;
                    }
                    ct[0] += 1;
                    for (si, &s) in s_grid.iter().enumerate() {
                        let cut = (s * t).ln();
                        let base = 1 + si * (heavy.len() + 1);
                        for (h, &j) in heavy.iter().enumerate() {
                            ct[base + h] += (powered[j] > cut) as u64;
                        }
                        ct[base + heavy.len()] += (log_max <= cut) as u64;
                    }
                }
            }
            c
        })
        .reduce(
            || vec![vec![0u64; width]; t_grid.len()],
            |mut acc, c| {
                for (ra, rc) in acc.iter_mut().zip(c) {
                    for (x, y) in ra.iter_mut().zip(rc) {
                        *x += y;
                    }
                }
                acc
            },
        );

    let n = mc_budget as f64;
    let mut rows = Vec::new();
    for (ct, &t) in counts.iter().zip(t_grid) {
        let denom = factor.survival(t.powf(1.0 / a_max))?;
        if denom <= 0.0 {
            return Err(Error::Numeric(format!("P(Y^a_max > {t}) underflows to 0")));
        }
        let est = |k: u64| {
            let p = k as f64 / n;
            (p / denom, (p * (1.0 - p) / n).sqrt() / denom)
        };
        let (ratio, ratio_se) = est(ct[0]);
        rows.push(SplitupRow {
            t,
            s: None,
            ratio,
            ratio_se,
            single_big: Vec::new(),
            remainder: None,
            exceedances: ct[0],
        });
        for (si, &s) in s_grid.iter().enumerate() {
            let base = 1 + si * (heavy.len() + 1);
            let single_big = heavy
                .iter()
                .enumerate()
                .map(|(h, &j)| {
                    let (e, se) = est(ct[base + h]);
                    (j + 1, e, se)
                })
                .collect();
            rows.push(SplitupRow {
                t,
                s: Some(s),
                ratio,
                ratio_se,
                single_big,
                remainder: Some(est(ct[base + heavy.len()])),
                exceedances: ct[0],
            });
        }
    }
    Ok(SplitupReport {
        a: a.to_vec(),
        v,
        draws: mc_budget,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn peff_examples() {
        let ones = ExponentMatrix::new(vec![vec![1.0; 3]; 2]).unwrap();
        let r = peff(&ones).unwrap();
        assert_eq!((r.a_max, r.p_eff), (1.0, 3));
        assert_eq!(r.p_eff_sets, BTreeSet::from([vec![1, 2, 3]]));

        let id = ExponentMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let r = peff(&id).unwrap();
        assert_eq!(r.p_eff, 1);
        assert_eq!(r.p_eff_sets, BTreeSet::from([vec![1], vec![2]]));
    }

    #[test]
    fn peff_names_bad_column() {
        let m = ExponentMatrix::new(vec![vec![1.0, 0.5, 1.0]]).unwrap();
        match peff(&m) {
            Err(Error::ContractViolation(msg)) => assert!(msg.contains("column 2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exponent_matrix_validation() {
        assert!(ExponentMatrix::new(vec![]).is_err());
        assert!(ExponentMatrix::new(vec![vec![0.0, 0.0]]).is_err());
        assert!(ExponentMatrix::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(ExponentMatrix::new(vec![vec![-1.0, 2.0]]).is_err());
    }

    #[test]
    fn pareto_product_closed_form() {
        assert_eq!(pareto_product_survival(3.0, 1.0).unwrap(), 1.0);
        let e = std::f64::consts::E;
        assert_relative_eq!(pareto_product_survival(3.0, e).unwrap(), 4.0 * e.powi(-3), max_relative = 1e-14);
        assert_relative_eq!(pareto_product_survival(1.0, e * e).unwrap(), 3.0 * e.powi(-2), max_relative = 1e-14);
        assert!(pareto_product_survival(3.0, 0.5).is_err());
        assert!(pareto_product_survival(0.0, 2.0).is_err());
    }

    #[test]
    fn constant_factor_scales_ratio() {
        let est = ratio_limit_mc(
            &LawSpec::pareto(3.0, 1.0),
            &LawSpec::constant(2.0),
            &[0.9, 0.99],
            MIN_RATIO_BUDGET,
            &RngStream::new(1, 0),
        )
        .unwrap();
        for pt in &est.points {
            // XY > x iff X > x/2, whose probability is 8 P(X > x) once x/2 >= 1
            let r = pt.estimate.unwrap();
            assert!((r - 8.0).abs() < 4.0 * pt.se.unwrap(), "{r} vs 8");
        }
    }

    #[test]
    fn ratio_rejects_small_budget() {
        let r = ratio_limit_mc(
            &LawSpec::pareto(3.0, 1.0),
            &LawSpec::constant(2.0),
            &[0.9],
            10,
            &RngStream::new(1, 0),
        );
        assert!(matches!(r, Err(Error::Budget { .. })));
    }

    #[test]
    fn splitup_single_factor_is_one() {
        let rep = splitup_check(
            &PositiveFactor::Law(LawSpec::pareto(3.0, 1.0)),
            &[1.0],
            1.0,
            &[2.0, 5.0],
            &[0.5],
            200_000,
            &RngStream::new(3, 0),
        )
        .unwrap();
        for row in rep.rows.iter().filter(|r| r.s.is_none()) {
            assert!((row.ratio - 1.0).abs() < 4.0 * row.ratio_se, "{row:?}");
        }
    }
}
