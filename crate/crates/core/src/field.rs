//! Finite-support coefficient fields for the log-linear volatility
//! `sigma_it = exp(sum_kl psi_kl eta_{i-k, t-l})`, the exact tail-exponent
//! combinatorics they generate, and volatility panel simulation.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::distributions::LawSpec;
use crate::error::{Error, Result};
use crate::panel::{Panel, PanelRole};
use crate::products::ExponentMatrix;
use crate::rng::RngStream;

/// One serialized field coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub k: i64,
    pub l: i64,
    pub weight: f64,
}

/// Non-negative filter weights `psi_kl` on a finite support, normalized so the
/// largest weight is exactly 1. Zero weights are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    weights: BTreeMap<(i64, i64), f64>,
}

impl Serialize for CoefficientField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coefficients().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoefficientField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let coeffs = Vec::<Coefficient>::deserialize(d)?;
        CoefficientField::new(coeffs).map_err(serde::de::Error::custom)
    }
}

impl CoefficientField {
    pub fn new<I: IntoIterator<Item = Coefficient>>(coeffs: I) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for c in coeffs {
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(Error::param(
                    format!("weight[{},{}]", c.k, c.l),
                    format!("must be finite and non-negative, got {}", c.weight),
                ));
            }
            if weights.insert((c.k, c.l), c.weight).is_some() {
                return Err(Error::param(
                    format!("weight[{},{}]", c.k, c.l),
                    "duplicate index pair",
                ));
            }
        }
        weights.retain(|_, w| *w > 0.0);
        let max = weights.values().copied().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Err(Error::param("weights", "at least one weight must be positive"));
        }
        if max != 1.0 {
            warn!("coefficient field rescaled by 1/{max} so that its largest weight is 1");
            for w in weights.values_mut() {
                *w /= max;
            }
        }
        Ok(Self { weights })
    }

    pub fn from_triples(triples: &[(i64, i64, f64)]) -> Result<Self> {
        Self::new(triples.iter().map(|&(k, l, weight)| Coefficient { k, l, weight }))
    }

    /// `psi_00 = 1`: volatility is `exp(eta_it)`.
    pub fn single() -> Self {
        Self::from_triples(&[(0, 0, 1.0)]).expect("valid field")
    }

    /// `psi_00 = psi_10 = 1`.
    pub fn tridiag() -> Self {
        Self::from_triples(&[(0, 0, 1.0), (1, 0, 1.0)]).expect("valid field")
    }

    /// Cross-sectional moving average `psi_{k,0} = 1` for `k = 1..=order`.
    pub fn moving_average(order: i64) -> Self {
        let triples: Vec<_> = (1..=order.max(1)).map(|k| (k, 0, 1.0)).collect();
        Self::from_triples(&triples).expect("valid field")
    }

    pub fn ma18() -> Self {
        Self::moving_average(18)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ma18" => Ok(Self::ma18()),
            "single" => Ok(Self::single()),
            "tridiag" => Ok(Self::tridiag()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn coefficients(&self) -> Vec<Coefficient> {
        self.weights
            .iter()
            .map(|(&(k, l), &weight)| Coefficient { k, l, weight })
            .collect()
    }

    #[inline]
    pub fn weight(&self, k: i64, l: i64) -> f64 {
        self.weights.get(&(k, l)).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = (i64, i64, f64)> + '_ {
        self.weights.iter().map(|(&(k, l), &w)| (k, l, w))
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    /// `(k_min, k_max, l_min, l_max)` over the support.
    pub fn bounds(&self) -> (i64, i64, i64, i64) {
        let mut b = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
        for &(k, l) in self.weights.keys() {
            b.0 = b.0.min(k);
            b.1 = b.1.max(k);
            b.2 = b.2.min(l);
            b.3 = b.3.max(l);
        }
        b
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.values().sum()
    }

    /// `psi^{ij} = max_kl (psi_kl + psi_{k+d,l})` with `d = i - j`.
    ///
    /// Depends on `(i, j)` only through the offset; lies in `[1, 2]`.
    pub fn psi_exponent(&self, offset: i64) -> f64 {
        let mut best = 0.0f64;
        for (&(k, l), &w) in &self.weights {
            // pairs anchored on a support point at either position
            best = best.max(w + self.weight(k + offset, l));
            best = best.max(self.weight(k - offset, l) + w);
        }
        best
    }

    /// `max` of `psi_exponent(i_l - j_l)` over the given index pairs.
    pub fn psi_exponent_multi(&self, pairs: &[(i64, i64)]) -> f64 {
        pairs
            .iter()
            .map(|&(i, j)| self.psi_exponent(i - j))
            .fold(0.0, f64::max)
    }

    /// Index pairs `(i, j)`, `1 <= i, j <= p`, whose product series carries the
    /// heaviest tail (`psi^{ij} = 2`).
    pub fn gamma_p(&self, p: usize) -> GammaSet {
        let maximal: BTreeSet<i64> = (0..p as i64)
            .filter(|&d| self.psi_exponent(d) == 2.0)
            .collect();
        let mut pairs = BTreeSet::new();
        for i in 1..=p {
            for j in 1..=p {
                if maximal.contains(&(i as i64 - j as i64).abs()) {
                    pairs.insert((i, j));
                }
            }
        }
        GammaSet { p, pairs }
    }

    /// `Lambda_{i,j}^{(t)} = {(u, v) : psi_{i-u,t-v} + psi_{j-u,t-v} = psi^{ij}}`.
    pub fn lambda_set(&self, i: i64, j: i64, t: i64) -> LambdaSet {
        let target = self.psi_exponent(i - j);
        let mut indices = BTreeSet::new();
        for &(k, l) in self.weights.keys() {
            for (u, v) in [(i - k, t - l), (j - k, t - l)] {
                if self.weight(i - u, t - v) + self.weight(j - u, t - v) == target {
                    indices.insert((u, v));
                }
            }
        }
        LambdaSet { i, j, t, indices }
    }

    /// Exponent matrix of the vector `(prod_{(u,v)} exp(eta_uv (psi_{i-u,t-v} + psi_{j-u,t-v})))_{t=0..=lags}`
    /// restricted to the union of the Lambda sets over those lags. Columns are
    /// the returned `(u, v)` labels.
    pub fn product_exponent_matrix(&self, i: i64, j: i64, lags: usize) -> (ExponentMatrix, Vec<(i64, i64)>) {
        let mut columns = BTreeSet::new();
        for t in 0..=lags as i64 {
            columns.extend(self.lambda_set(i, j, t).indices);
        }
        let columns: Vec<(i64, i64)> = columns.into_iter().collect();
        let rows: Vec<Vec<f64>> = (0..=lags as i64)
            .map(|t| {
                columns
                    .iter()
                    .map(|&(u, v)| self.weight(i - u, t - v) + self.weight(j - u, t - v))
                    .collect()
            })
            .collect();
        (ExponentMatrix::new(rows).expect("rectangular by construction"), columns)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GammaSet {
    pub p: usize,
    /// 1-based index pairs.
    pub pairs: BTreeSet<(usize, usize)>,
}

impl GammaSet {
    pub fn diagonal(p: usize) -> Self {
        Self {
            p,
            pairs: (1..=p).map(|i| (i, i)).collect(),
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.contains(&(i, j))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaSet {
    pub i: i64,
    pub j: i64,
    pub t: i64,
    pub indices: BTreeSet<(i64, i64)>,
}

impl LambdaSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, u: i64, v: i64) -> bool {
        self.indices.contains(&(u, v))
    }
}

/// Draws the `eta` grid that `sigma_it`, `i in rows`, `t in 0..n`, depends on,
/// and applies the filter. Row labels are the integers in `rows`; the output is
/// row-major with `n` consecutive time points per row.
pub(crate) fn filter_sigma(
    field: &CoefficientField,
    eta_law: &LawSpec,
    rows: std::ops::RangeInclusive<i64>,
    n: usize,
    stream: &RngStream,
) -> Result<Vec<f64>> {
    let sampler = eta_law.sampler()?;
    let (k_min, k_max, l_min, l_max) = field.bounds();
    let (r_lo, r_hi) = (*rows.start(), *rows.end());
    let p = (r_hi - r_lo + 1) as usize;
    // eta rows cover r_lo - k_max ..= r_hi - k_min; columns start - l_max ..= start + n - 1 - l_min
    let eta_rows = (r_hi - k_min) - (r_lo - k_max) + 1;
    let eta_cols = (n as i64 - 1 - l_min) - (-l_max) + 1;
    let (eta_rows, eta_cols) = (eta_rows as usize, eta_cols as usize);
    let mut rng = stream.rng();
    let mut eta = vec![0.0; eta_rows * eta_cols];
    sampler.fill(&mut rng, &mut eta);

    let mut log_sigma = vec![0.0; p * n];
    for (k, l, w) in field.support() {
        for r in 0..p {
            // eta row index of (i - k) where i = r_lo + r
            let er = (r as i64 + k_max - k) as usize;
            let ec0 = (l_max - l) as usize;
            let src = &eta[er * eta_cols + ec0..er * eta_cols + ec0 + n];
            let dst = &mut log_sigma[r * n..(r + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    Ok(log_sigma.into_iter().map(f64::exp).collect())
}

/// Volatility panel `sigma_it`, `i = 1..=p`, `t = 1..=n`, computed exactly over
/// the finite support (the underlying `eta` grid is extended so that no term is
/// truncated at the panel boundary).
pub fn simulate_sigma_panel(
    field: &CoefficientField,
    eta_law: &LawSpec,
    p: usize,
    n: usize,
    stream: &RngStream,
) -> Result<Panel> {
    if p == 0 || n == 0 {
        return Err(Error::EmptyPanel);
    }
    let values = filter_sigma(field, eta_law, 1..=p as i64, n, stream)?;
    Panel::new(p, n, values, PanelRole::Sigma)
}
