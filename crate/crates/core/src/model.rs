//! Stochastic volatility panels `X_it = sigma_it Z_it` and their normalizing sequences.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{ExpTail, LawSpec};
use crate::error::{Error, Result};
use crate::field::{filter_sigma, CoefficientField};
use crate::numeric::neumaier_sum;
use crate::panel::{Panel, PanelRole};
use crate::rng::RngStream;

pub const DEFAULT_P: usize = 18;
pub const DEFAULT_N: usize = 1567;
pub const DEFAULT_MC_BUDGET: usize = 1_000_000;
pub const MIN_MC_BUDGET: usize = 10_000;

const SIGMA_STREAM: u64 = 1;
const Z_STREAM: u64 = 2;
const MARGINAL_STREAM: u64 = 3;
const PAIR_STREAM: u64 = 4;
const BLOCK: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Heavy-tailed noise, light-tailed volatility.
    Case1HeavyZ,
    /// Light-tailed noise, regularly varying volatility.
    Case2HeavySigma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub regime: Regime,
    pub z_law: LawSpec,
    pub eta_law: LawSpec,
    pub field: CoefficientField,
    pub p: usize,
    pub n: usize,
    pub master_seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.p == 0 {
            problems.push("p must be at least 1".to_string());
        }
        if self.n == 0 {
            problems.push("n must be at least 1".to_string());
        }
        if let Err(e) = self.z_law.validate() {
            problems.push(format!("z_law: {e}"));
        }
        if let Err(e) = self.eta_law.validate() {
            problems.push(format!("eta_law: {e}"));
        }
        match self.regime {
            Regime::Case1HeavyZ => {
                if self.z_law.tail_index().is_none() {
                    problems.push(format!(
                        "case1_heavy_z requires a regularly varying z_law, got {}",
                        self.z_law.name()
                    ));
                }
                if self.eta_law.exp_tail() != ExpTail::Light {
                    problems.push(format!(
                        "case1_heavy_z requires exp(eta) with all moments finite, got {}",
                        self.eta_law.name()
                    ));
                }
            }
            Regime::Case2HeavySigma => {
                if self.z_law.tail_index().is_some() {
                    problems.push(format!(
                        "case2_heavy_sigma requires a light-tailed z_law, got {}",
                        self.z_law.name()
                    ));
                }
                if !matches!(self.eta_law.exp_tail(), ExpTail::RegularlyVarying(_)) {
                    problems.push(format!(
                        "case2_heavy_sigma requires a regularly varying exp(eta), got {}",
                        self.eta_law.name()
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Tail index of the marginal `|X|`.
    pub fn marginal_index(&self) -> Option<f64> {
        match self.regime {
            Regime::Case1HeavyZ => self.z_law.tail_index(),
            Regime::Case2HeavySigma => match self.eta_law.exp_tail() {
                ExpTail::RegularlyVarying(a) => Some(a),
                _ => None,
            },
        }
    }

    pub fn base_stream(&self) -> RngStream {
        RngStream::new(self.master_seed, 0)
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        Self {
            master_seed,
            ..self.clone()
        }
    }

    pub fn with_shape(&self, p: usize, n: usize) -> Self {
        Self { p, n, ..self.clone() }
    }
}

pub const PRESET_NAMES: [&str; 3] = ["case1", "case2_exp", "case2_convequiv"];

/// The three simulation designs built on the MA(18) log-volatility.
pub fn preset(name: &str, p: usize, n: usize, seed: u64) -> Result<ModelSpec> {
    let (regime, z_law, eta_law) = match name {
        "case1" => (Regime::Case1HeavyZ, LawSpec::student_t(3.0), LawSpec::standard_gaussian()),
        "case2_exp" => (
            Regime::Case2HeavySigma,
            LawSpec::standard_gaussian(),
            LawSpec::exponential(3.0),
        ),
        "case2_convequiv" => (
            Regime::Case2HeavySigma,
            LawSpec::standard_gaussian(),
            LawSpec::ConvEquivEta,
        ),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    if p == 0 {
        return Err(Error::param("p", "must be at least 1"));
    }
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    Ok(ModelSpec {
        regime,
        z_law,
        eta_law,
        field: CoefficientField::ma18(),
        p,
        n,
        master_seed: seed,
    })
}

/// Volatility and observation panels of one realization.
#[derive(Debug, Clone)]
pub struct Realization {
    pub sigma: Panel,
    pub x: Panel,
}

pub fn simulate_panel(spec: &ModelSpec) -> Result<Panel> {
    Ok(simulate_components(spec)?.x)
}

pub fn simulate_components(spec: &ModelSpec) -> Result<Realization> {
    let base = spec.base_stream();
    simulate_with_streams(spec, &base.substream(SIGMA_STREAM), &base.substream(Z_STREAM))
}

/// Simulation with explicit volatility and noise streams.
pub fn simulate_with_streams(
    spec: &ModelSpec,
    sigma_stream: &RngStream,
    z_stream: &RngStream,
) -> Result<Realization> {
    spec.validate()?;
    let (p, n) = (spec.p, spec.n);
    let sigma = filter_sigma(&spec.field, &spec.eta_law, 1..=p as i64, n, sigma_stream)?;
    let sigma = Panel::new(p, n, sigma, PanelRole::Sigma)?;
    let z_sampler = spec.z_law.sampler()?;
    let mut rng = z_stream.rng();
    let x: Vec<f64> = sigma.values().iter().map(|s| s * z_sampler.draw(&mut rng)).collect();
    let x = Panel::new(p, n, x, PanelRole::X)?;
    Ok(Realization { sigma, x })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairNorm {
    pub i: usize,
    pub j: usize,
    pub b_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSeq {
    pub n: usize,
    pub a_n: f64,
    pub c_n: f64,
    pub b_n: Vec<PairNorm>,
    /// True when `a_n` came from a closed-form quantile instead of Monte Carlo.
    pub analytic_a_n: bool,
}

/// Sorted Monte Carlo sample of `|X|` for one model, reusable across `n`.
#[derive(Debug, Clone)]
pub struct MarginalPool {
    abs_sorted: Vec<f64>,
    mean_sq: f64,
    marginal_index: Option<f64>,
    /// `(log-scale constant, z law)` when the volatility is deterministic.
    constant_sigma: Option<(f64, LawSpec)>,
}

impl MarginalPool {
    pub fn draw(spec: &ModelSpec, budget: usize) -> Result<Self> {
        spec.validate()?;
        if budget < MIN_MC_BUDGET {
            return Err(Error::Budget {
                budget,
                required: MIN_MC_BUDGET,
            });
        }
        let weights: Vec<f64> = spec.field.support().map(|(_, _, w)| w).collect();
        let eta = spec.eta_law.sampler()?;
        let z = spec.z_law.sampler()?;
        let stream = spec.base_stream().substream(MARGINAL_STREAM);
        let blocks = budget.div_ceil(BLOCK);
        let mut xs: Vec<f64> = (0..blocks)
            .into_par_iter()
            .flat_map_iter(|b| {
                let len = BLOCK.min(budget - b * BLOCK);
                let mut rng = stream.substream(b as u64).rng();
                let mut out = Vec::with_capacity(len);
                for _ in 0..len {
                    let log_sigma: f64 = weights.iter().map(|w| w * eta.draw(&mut rng)).sum();
                    out.push(log_sigma.exp() * z.draw(&mut rng));
                }
                out
            })
            .collect();
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("marginal draw overflowed".into()));
        }
        let mean_sq = neumaier_sum(xs.iter().map(|x| x * x)) / xs.len() as f64;
        for x in &mut xs {
            *x = x.abs();
        }
        xs.sort_by(f64::total_cmp);
        let constant_sigma = match spec.eta_law {
            LawSpec::Constant { value } => Some((value * spec.field.weight_sum(), spec.z_law.clone())),
            _ => None,
        };
        Ok(Self {
            abs_sorted: xs,
            mean_sq,
            marginal_index: spec.marginal_index(),
            constant_sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.abs_sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abs_sorted.is_empty()
    }

    pub fn mean_square(&self) -> f64 {
        self.mean_sq
    }

    /// `a_n` with `n P(|X| > a_n) = 1`; returns the value and whether it is analytic.
    pub fn a_n(&self, n: usize) -> Result<(f64, bool)> {
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if let Some((log_s, z)) = &self.constant_sigma {
            return Ok((log_s.exp() * z.abs_quantile(1.0 / n as f64)?, true));
        }
        Ok((upper_quantile(&self.abs_sorted, n)?, false))
    }

    pub fn c_n(&self, n: usize) -> f64 {
        match self.marginal_index {
            Some(a) if a > 2.0 && a < 4.0 => n as f64 * self.mean_sq,
            _ => 0.0,
        }
    }
}

/// Empirical `(1 - 1/n)`-quantile of a sorted sample.
fn upper_quantile(sorted: &[f64], n: usize) -> Result<f64> {
    let m = sorted.len();
    if m < n {
        return Err(Error::Budget { budget: m, required: n });
    }
    let level = 1.0 - 1.0 / n as f64;
    let idx = ((level * m as f64).ceil() as usize).clamp(1, m) - 1;
    Ok(sorted[idx])
}

/// Sorted Monte Carlo sample of `|X_i0 X_j0|` (1-based series indices).
pub fn pair_pool(spec: &ModelSpec, i: usize, j: usize, budget: usize) -> Result<Vec<f64>> {
    spec.validate()?;
    if i == 0 || j == 0 {
        return Err(Error::param("pair", "series indices are 1-based"));
    }
    if budget < MIN_MC_BUDGET {
        return Err(Error::Budget {
            budget,
            required: MIN_MC_BUDGET,
        });
    }
    // eta coordinates touched by sigma_i0 and sigma_j0
    let mut slots = BTreeMap::new();
    let mut terms_i = Vec::new();
    let mut terms_j = Vec::new();
    for (k, l, w) in spec.field.support() {
        for (row, terms) in [(i as i64, &mut terms_i), (j as i64, &mut terms_j)] {
            let next = slots.len();
            let slot = *slots.entry((row - k, -l)).or_insert(next);
            terms.push((slot, w));
        }
    }
    let n_slots = slots.len();
    let eta = spec.eta_law.sampler()?;
    let z = spec.z_law.sampler()?;
    let stream = spec
        .base_stream()
        .substream(PAIR_STREAM)
        .substream(((i as u64) << 32) | j as u64);
    let blocks = budget.div_ceil(BLOCK);
    let mut out: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let len = BLOCK.min(budget - b * BLOCK);
            let mut rng = stream.substream(b as u64).rng();
            let mut grid = vec![0.0; n_slots];
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                eta.fill(&mut rng, &mut grid);
                let li: f64 = terms_i.iter().map(|&(s, w)| w * grid[s]).sum();
                let lj: f64 = terms_j.iter().map(|&(s, w)| w * grid[s]).sum();
                let zi = z.draw(&mut rng);
                // the same noise variable when i == j
                let zj = if i == j { zi } else { z.draw(&mut rng) };
                out.push(((li + lj).exp() * zi * zj).abs());
            }
            out
        })
        .collect();
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("pair draw overflowed".into()));
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Normalizing sequences at sample size `n`, with `b_n` for each requested pair.
pub fn norm_sequences(
    spec: &ModelSpec,
    n: usize,
    mc_budget: usize,
    pairs: &[(usize, usize)],
) -> Result<NormSeq> {
    if mc_budget < n {
        return Err(Error::Budget {
            budget: mc_budget,
            required: n,
        });
    }
    let pool = MarginalPool::draw(spec, mc_budget)?;
    let (a_n, analytic_a_n) = pool.a_n(n)?;
    let b_n = pairs
        .iter()
        .map(|&(i, j)| {
            let sorted = pair_pool(spec, i, j, mc_budget)?;
            Ok(PairNorm {
                i,
                j,
                b_n: upper_quantile(&sorted, n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NormSeq {
        n,
        a_n,
        c_n: pool.c_n(n),
        b_n,
        analytic_a_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    fn iid_spec(z: LawSpec, p: usize, n: usize) -> ModelSpec {
        ModelSpec {
            regime: Regime::Case1HeavyZ,
            z_law: z,
            eta_law: LawSpec::constant(0.0),
            field: CoefficientField::single(),
            p,
            n,
            master_seed: 11,
        }
    }

    #[test]
    fn unit_volatility_gives_noise_panel() {
        let spec = iid_spec(LawSpec::pareto(3.0, 1.0), 3, 50);
        let r = simulate_components(&spec).unwrap();
        assert!(r.sigma.values().iter().all(|&s| s == 1.0));
        let z = crate::distributions::sample(
            &spec.z_law,
            &spec.base_stream().substream(Z_STREAM),
            150,
        )
        .unwrap();
        assert_eq!(r.x.values(), &z[..]);
    }

    #[test]
    fn presets_match_design() {
        let c1 = preset("case1", DEFAULT_P, DEFAULT_N, 1).unwrap();
        assert_eq!(c1.z_law, LawSpec::student_t(3.0));
        assert_eq!(c1.eta_law, LawSpec::standard_gaussian());
        let c2 = preset("case2_exp", DEFAULT_P, DEFAULT_N, 1).unwrap();
        assert_eq!(c2.eta_law, LawSpec::exponential(3.0));
        let c3 = preset("case2_convequiv", DEFAULT_P, DEFAULT_N, 1).unwrap();
        assert_eq!(c3.eta_law, LawSpec::ConvEquivEta);
        assert_eq!(c3.field, CoefficientField::ma18());
        for s in [c1, c2, c3] {
            s.validate().unwrap();
        }
        assert!(matches!(preset("case3", 2, 2, 1), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn validation_lists_regime_violations() {
        let mut spec = preset("case1", 2, 2, 1).unwrap();
        spec.z_law = LawSpec::standard_gaussian();
        spec.eta_law = LawSpec::exponential(3.0);
        match spec.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2, "{v:?}"),
            other => panic!("{other:?}"),
        }
        let mut spec = preset("case2_exp", 2, 2, 1).unwrap();
        spec.z_law = LawSpec::student_t(3.0);
        assert!(matches!(simulate_panel(&spec), Err(Error::Validation(_))));
    }

    #[test]
    fn reproducible_and_streams_disjoint() {
        let spec = preset("case2_exp", 4, 100, 5).unwrap();
        let a = simulate_components(&spec).unwrap();
        let b = simulate_components(&spec).unwrap();
        assert_eq!(a.x, b.x);
        let base = spec.base_stream();
        let c = simulate_with_streams(&spec, &base.substream(SIGMA_STREAM), &base.substream(99)).unwrap();
        assert_eq!(a.sigma, c.sigma);
        assert_ne!(a.x, c.x);
    }

    #[test]
    fn pareto_a_n_exact() {
        let spec = iid_spec(LawSpec::pareto(2.0, 1.0), 1, 1);
        let ns = norm_sequences(&spec, 100, MIN_MC_BUDGET, &[]).unwrap();
        assert!(ns.analytic_a_n);
        assert_relative_eq!(ns.a_n, 10.0, max_relative = 1e-12);
    }

    #[test]
    fn student_a_n_matches_quantile() {
        let spec = iid_spec(LawSpec::student_t(3.0), 1, 1);
        let ns = norm_sequences(&spec, 1567, MIN_MC_BUDGET, &[]).unwrap();
        let t = StudentsT::new(0.0, 1.0, 3.0).unwrap();
        let q = t.inverse_cdf(1.0 - 0.5 / 1567.0);
        assert_relative_eq!(ns.a_n, q, max_relative = 1e-8);
    }

    #[test]
    fn c_n_zero_below_two() {
        let spec = iid_spec(LawSpec::pareto(1.5, 1.0), 1, 1);
        assert_eq!(norm_sequences(&spec, 100, MIN_MC_BUDGET, &[]).unwrap().c_n, 0.0);
        let spec = iid_spec(LawSpec::pareto(3.0, 1.0), 1, 1);
        let c = norm_sequences(&spec, 100, 200_000, &[]).unwrap().c_n;
        // E[X^2] = 3 for pareto(3)
        assert!((c / 100.0 - 3.0).abs() < 0.3, "{c}");
    }

    #[test]
    fn budget_errors() {
        let spec = preset("case1", 2, 2, 1).unwrap();
        assert!(matches!(
            norm_sequences(&spec, 20_000, MIN_MC_BUDGET, &[]),
            Err(Error::Budget { .. })
        ));
        assert!(matches!(MarginalPool::draw(&spec, 10), Err(Error::Budget { .. })));
    }

    #[test]
    fn a_n_monotone_on_shared_pool() {
        let spec = preset("case2_convequiv", 3, 10, 2).unwrap();
        let pool = MarginalPool::draw(&spec, 50_000).unwrap();
        let seq: Vec<f64> = [10, 100, 1000, 10_000].iter().map(|&n| pool.a_n(n).unwrap().0).collect();
        assert!(seq.windows(2).all(|w| w[0] <= w[1]), "{seq:?}");
    }

    #[test]
    fn pair_norm_diagonal_is_square_scale() {
        // with unit volatility, |X_0 X_0| = X_0^2, so b_n = a_n^2
        let spec = iid_spec(LawSpec::pareto(3.0, 1.0), 2, 1);
        let ns = norm_sequences(&spec, 50, 100_000, &[(1, 1)]).unwrap();
        let b = ns.b_n[0].b_n;
        assert!((b / (ns.a_n * ns.a_n) - 1.0).abs() < 0.1, "{b} vs {}", ns.a_n);
    }
}
