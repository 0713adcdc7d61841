//! Sample covariance matrices and their spectra.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::GammaSet;
use crate::numeric::neumaier_sum;
use crate::panel::{Panel, PanelRole};

/// Jacobi stops once the off-diagonal Frobenius mass falls below this fraction of `||S||_F`.
pub const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
/// Relative symmetry tolerance accepted by `SymMatrix::from_rows`.
const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues closer than this fraction of `||S||_F` are treated as repeated.
const DEGENERACY_TOL: f64 = 1e-9;

/// Dense symmetric matrix, stored row-major in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    p: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(p: usize) -> Self {
        Self {
            p,
            data: vec![0.0; p * p],
        }
    }

    pub fn identity(p: usize) -> Self {
        Self::diagonal(&vec![1.0; p])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * d.len() + i] = v;
        }
        m
    }

    /// Builds a matrix from its upper triangle: `f(i, j)` is called once for each `i <= j`.
    pub fn from_upper(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(p);
        for i in 0..p {
            for j in i..p {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Checks symmetry up to a relative tolerance and averages the two triangles.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::ContractViolation("matrix is not square".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("matrix has non-finite entries".into()));
        }
        let scale = rows.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..p {
            for j in i + 1..p {
                if (rows[i][j] - rows[j][i]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::ContractViolation(format!(
                        "matrix is not symmetric at ({}, {})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self::from_upper(p, |i, j| 0.5 * (rows[i][j] + rows[j][i])))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.p + j] = v;
        self.data[j * self.p + i] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.p.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.p).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        neumaier_sum(self.diag())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.p != other.p {
            return Err(Error::ContractViolation("matrix sizes differ".into()));
        }
        Ok(SymMatrix {
            p: self.p,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix {
            p: self.p,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Keeps entries selected by `mask`, zeroes the rest.
    pub fn masked(&self, mask: &Mask) -> SymMatrix {
        SymMatrix::from_upper(self.p, |i, j| if mask.keeps(i, j) { self.get(i, j) } else { 0.0 })
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks(self.p).map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Entries retained by a diagonal-type approximation.
#[derive(Debug, Clone, PartialEq)]
pub enum Mask {
    Diagonal,
    /// Pairs from a `GammaSet` (1-based).
    Gamma(GammaSet),
    All,
}

impl Mask {
    /// 0-based query.
    pub fn keeps(&self, i: usize, j: usize) -> bool {
        match self {
            Mask::Diagonal => i == j,
            Mask::Gamma(g) => i == j || g.contains(i + 1, j + 1) || g.contains(j + 1, i + 1),
            Mask::All => true,
        }
    }
}

/// Non-normalized sample covariance `S_ij = sum_t X_it X_jt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix {
    pub matrix: SymMatrix,
    pub n: usize,
    pub centered: bool,
}

impl CovMatrix {
    pub fn p(&self) -> usize {
        self.matrix.p()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }
}

pub fn sample_cov(panel: &Panel, centered: bool) -> Result<CovMatrix> {
    if panel.role() != PanelRole::X {
        return Err(Error::ContractViolation("sample covariance needs an observation panel".into()));
    }
    let rows: Vec<Vec<f64>> = if centered {
        panel.rows().map(centered_row).collect()
    } else {
        panel.rows().map(<[f64]>::to_vec).collect()
    };
    let matrix = SymMatrix::from_upper(panel.p(), |i, j| {
        neumaier_sum(rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b))
    });
    Ok(CovMatrix {
        matrix,
        n: panel.n(),
        centered,
    })
}

fn centered_row(row: &[f64]) -> Vec<f64> {
    let mean = neumaier_sum(row.iter().copied()) / row.len() as f64;
    row.iter().map(|x| x - mean).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub max_abs_component: f64,
    /// Distance to the nearest signed canonical basis vector.
    pub nearest_basis_distance: f64,
    pub participation_ratio: f64,
    /// 1-based index of the largest component.
    pub argmax: usize,
    /// The eigenvalue is repeated, so the vector is one arbitrary choice in its eigenspace.
    pub degenerate: bool,
}

impl Localization {
    pub fn of(v: &[f64], degenerate: bool) -> Self {
        let (argmax, max_abs) = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) });
        let sq: f64 = v.iter().map(|x| x * x).sum();
        let quart: f64 = v.iter().map(|x| x.powi(4)).sum();
        Self {
            max_abs_component: max_abs,
            nearest_basis_distance: (sq + 1.0 - 2.0 * max_abs).max(0.0).sqrt(),
            participation_ratio: sq * sq / quart,
            argmax: argmax + 1,
            degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector of `eigenvalues[k]`.
    pub vectors: Vec<Vec<f64>>,
    pub spacings: Vec<f64>,
    pub localization: Vec<Localization>,
    pub sweeps: usize,
}

impl EigenReport {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    /// One row per eigenpair: rank, eigenvalue, spacing to the next, localization, components.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let p = self.p();
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = [
            "rank",
            "eigenvalue",
            "spacing",
            "max_abs_component",
            "nearest_basis_distance",
            "participation_ratio",
            "degenerate",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=p).map(|i| format!("v{i}")));
        wr.write_record(&header)?;
        for k in 0..p {
            let loc = &self.localization[k];
            let mut rec = vec![
                (k + 1).to_string(),
                format!("{}", self.eigenvalues[k]),
                self.spacings.get(k).map_or(String::new(), |s| format!("{s}")),
                format!("{}", loc.max_abs_component),
                format!("{}", loc.nearest_basis_distance),
                format!("{}", loc.participation_ratio),
                loc.degenerate.to_string(),
            ];
            rec.extend(self.vectors[k].iter().map(|x| format!("{x}")));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eigen(s: &SymMatrix) -> Result<EigenReport> {
    let p = s.p();
    if p == 0 {
        return Err(Error::EmptyPanel);
    }
    if s.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    for i in 0..p {
        for j in i + 1..p {
            if s.data[i * p + j] != s.data[j * p + i] {
                return Err(Error::ContractViolation(format!(
                    "matrix is not symmetric at ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let norm = s.frobenius_norm();
    let mut a = s.data.clone();
    let mut v = vec![0.0; p * p];
    for i in 0..p {
        v[i * p + i] = 1.0;
    }
    let off = |a: &[f64]| -> f64 {
        let mut acc = 0.0;
        for i in 0..p {
            for j in i + 1..p {
                acc += 2.0 * a[i * p + j] * a[i * p + j];
            }
        }
        acc.sqrt()
    };
    let mut sweeps = 0;
    while off(&a) > JACOBI_TOL * norm {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numeric(format!("Jacobi did not converge in {MAX_SWEEPS} sweeps")));
        }
        sweeps += 1;
        for k in 0..p {
            for l in k + 1..p {
                let akl = a[k * p + l];
                if akl == 0.0 {
                    continue;
                }
                let (akk, all) = (a[k * p + k], a[l * p + l]);
                let tau = (all - akk) / (2.0 * akl);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                // A <- J' A J with J the rotation in the (k, l) plane
                for m in 0..p {
                    let (amk, aml) = (a[m * p + k], a[m * p + l]);
                    a[m * p + k] = c * amk - sn * aml;
                    a[m * p + l] = sn * amk + c * aml;
                }
                for m in 0..p {
                    let (akm, alm) = (a[k * p + m], a[l * p + m]);
                    a[k * p + m] = c * akm - sn * alm;
                    a[l * p + m] = sn * akm + c * alm;
                }
                a[k * p + l] = 0.0;
                a[l * p + k] = 0.0;
                for m in 0..p {
                    let (vmk, vml) = (v[m * p + k], v[m * p + l]);
                    v[m * p + k] = c * vmk - sn * vml;
                    v[m * p + l] = sn * vmk + c * vml;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    // stable sort keeps original index order among ties
    order.sort_by(|&x, &y| a[y * p + y].total_cmp(&a[x * p + x]));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| a[k * p + k]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..p).map(|m| v[m * p + k]).collect();
            let big = col
                .iter()
                .copied()
                .fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
            if big < 0.0 {
                col.iter_mut().for_each(|x| *x = -*x);
            }
            col
        })
        .collect();
    let spacings: Vec<f64> = eigenvalues.windows(2).map(|w| w[0] - w[1]).collect();
    let gap = DEGENERACY_TOL * norm.max(f64::MIN_POSITIVE);
    let localization = (0..p)
        .map(|k| {
            let degenerate = (k > 0 && spacings[k - 1] <= gap) || (k + 1 < p && spacings[k] <= gap);
            Localization::of(&vectors[k], degenerate)
        })
        .collect();
    Ok(EigenReport {
        eigenvalues,
        vectors,
        spacings,
        localization,
        sweeps,
    })
}

pub fn spectral_norm(a: &SymMatrix) -> Result<f64> {
    let r = eigen(a)?;
    Ok(r.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

pub fn frobenius_norm(a: &SymMatrix) -> f64 {
    a.frobenius_norm()
}

/// `a_n^{-2} ||S - S o mask||_2`.
pub fn diag_approx_error(s: &CovMatrix, a_n: f64, mask: &Mask) -> Result<f64> {
    if !(a_n > 0.0 && a_n.is_finite()) {
        return Err(Error::param("a_n", "must be positive and finite"));
    }
    let resid = s.matrix.sub(&s.matrix.masked(mask))?;
    Ok(spectral_norm(&resid)? / (a_n * a_n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralStats {
    pub spacings: Vec<f64>,
    pub trace_ratios: Vec<f64>,
    pub trace: f64,
    /// `a_n^{-2} (tr S - p c_n)`.
    pub centered_trace: f64,
    /// `prod_i a_n^{-2} (lambda_(i) - c_n)`.
    pub centered_det: f64,
    /// `(det S - c_n^p) / (a_n^2 c_n^(p-1))`, only when `c_n > 0`.
    pub det_expansion: Option<f64>,
    /// `(lambda_(i) - c_n) / (tr S - p c_n)`, `None` when the denominator vanishes.
    pub self_normalized: Option<Vec<f64>>,
}

pub fn spectral_stats(report: &EigenReport, s: &CovMatrix, c_n: f64, a_n: f64) -> Result<SpectralStats> {
    if report.p() != s.p() {
        return Err(Error::ContractViolation("report and matrix sizes differ".into()));
    }
    if !(a_n > 0.0 && a_n.is_finite()) {
        return Err(Error::param("a_n", "must be positive and finite"));
    }
    let p = s.p() as f64;
    let trace = s.matrix.trace();
    let lambda_sum = neumaier_sum(report.eigenvalues.iter().copied());
    let trace_ratios = report.eigenvalues.iter().map(|l| l / lambda_sum).collect();
    let a2 = a_n * a_n;
    let centered_sum = trace - p * c_n;
    let centered_det = report.eigenvalues.iter().map(|l| (l - c_n) / a2).product();
    let det_expansion = (c_n > 0.0).then(|| {
        let det: f64 = report.eigenvalues.iter().product();
        (det - c_n.powf(p)) / (a2 * c_n.powf(p - 1.0))
    });
    let self_normalized = (centered_sum != 0.0 && centered_sum.is_finite())
        .then(|| report.eigenvalues.iter().map(|l| (l - c_n) / centered_sum).collect());
    Ok(SpectralStats {
        spacings: report.spacings.clone(),
        trace_ratios,
        trace,
        centered_trace: centered_sum / a2,
        centered_det,
        det_expansion,
        self_normalized,
    })
}

/// Sample correlation matrix of a panel and its spectrum.
pub fn correlation_matrix(panel: &Panel) -> Result<(SymMatrix, EigenReport)> {
    let mut rows = Vec::with_capacity(panel.p());
    for (i, row) in panel.rows().enumerate() {
        let (lo, hi) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        if lo == hi {
            return Err(Error::DegenerateRow(i + 1));
        }
        let c = centered_row(row);
        let norm = neumaier_sum(c.iter().map(|x| x * x)).sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateRow(i + 1));
        }
        rows.push(c.into_iter().map(|x| x / norm).collect::<Vec<f64>>());
    }
    let r = SymMatrix::from_upper(panel.p(), |i, j| {
        if i == j {
            1.0
        } else {
            neumaier_sum(rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b)).clamp(-1.0, 1.0)
        }
    });
    let rep = eigen(&r)?;
    Ok((r, rep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn panel(rows: &[Vec<f64>]) -> Panel {
        Panel::from_rows(rows, PanelRole::X).unwrap()
    }

    #[test]
    fn sample_cov_examples() {
        let s = sample_cov(&panel(&[vec![1.0, 2.0], vec![3.0, 4.0]]), false).unwrap();
        assert_eq!(s.matrix.rows(), vec![vec![5.0, 11.0], vec![11.0, 25.0]]);
        let s = sample_cov(&panel(&[vec![1.0, -2.0, 2.0]]), false).unwrap();
        assert_eq!(s.get(0, 0), 9.0);
        let s = sample_cov(&panel(&[vec![0.0; 3], vec![1.0, 2.0, 3.0]]), false).unwrap();
        assert_eq!((s.get(0, 0), s.get(0, 1), s.get(1, 0)), (0.0, 0.0, 0.0));
        let c = sample_cov(&panel(&[vec![1.0, 2.0, 3.0]]), true).unwrap();
        assert_eq!(c.get(0, 0), 2.0);
    }

    #[test]
    fn two_by_two() {
        let r = eigen(&SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap()).unwrap();
        assert_relative_eq!(r.eigenvalues[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.eigenvalues[1], 1.0, epsilon = 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // both components of v2 have equal magnitude, so the first is made positive
        assert_relative_eq!(r.vectors[0][0], h, epsilon = 1e-12);
        assert_relative_eq!(r.vectors[0][1], h, epsilon = 1e-12);
        assert_relative_eq!(r.vectors[1][0], h, epsilon = 1e-12);
        assert_relative_eq!(r.vectors[1][1], -h, epsilon = 1e-12);
    }

    #[test]
    fn diagonal_permutes_basis() {
        let r = eigen(&SymMatrix::diagonal(&[5.0, 2.0, 9.0])).unwrap();
        assert_eq!(r.eigenvalues, vec![9.0, 5.0, 2.0]);
        assert_eq!(r.vectors, vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert_eq!(r.spacings, vec![4.0, 3.0]);
        assert_eq!(r.sweeps, 0);
        assert!(r.localization.iter().all(|l| l.max_abs_component == 1.0 && l.nearest_basis_distance == 0.0));
    }

    #[test]
    fn ties_break_by_index() {
        let r = eigen(&SymMatrix::diagonal(&[4.0, 4.0, 4.0, 4.0])).unwrap();
        assert_eq!(r.vectors[0], vec![1.0, 0.0, 0.0, 0.0]);
        assert!(r.localization.iter().all(|l| l.degenerate));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = SymMatrix {
            p: 2,
            data: vec![1.0, 2.0, 2.5, 1.0],
        };
        assert!(matches!(eigen(&m), Err(Error::ContractViolation(_))));
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 1.0]]).is_err());
    }

    #[test]
    fn norms() {
        let d = SymMatrix::diagonal(&[3.0, -4.0]);
        assert_relative_eq!(spectral_norm(&d).unwrap(), 4.0);
        assert_relative_eq!(frobenius_norm(&d), 5.0);
        let i7 = SymMatrix::identity(7);
        assert_relative_eq!(spectral_norm(&i7).unwrap(), 1.0);
        assert_relative_eq!(frobenius_norm(&i7), 7f64.sqrt());
    }

    #[test]
    fn diag_error_trivial_cases() {
        let s = sample_cov(&panel(&[vec![1.0, 0.0], vec![0.0, 1.0]]), false).unwrap();
        assert_eq!(diag_approx_error(&s, 1.0, &Mask::Diagonal).unwrap(), 0.0);
        let s = sample_cov(&panel(&[vec![1.0, 2.0], vec![3.0, 4.0]]), false).unwrap();
        assert_eq!(diag_approx_error(&s, 2.0, &Mask::All).unwrap(), 0.0);
        assert_relative_eq!(diag_approx_error(&s, 2.0, &Mask::Diagonal).unwrap(), 11.0 / 4.0, epsilon = 1e-12);
        assert!(diag_approx_error(&s, 0.0, &Mask::Diagonal).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = CovMatrix {
            matrix: SymMatrix::diagonal(&[4.0; 4]),
            n: 1,
            centered: false,
        };
        let st = spectral_stats(&eigen(&s.matrix).unwrap(), &s, 0.0, 1.0).unwrap();
        assert_eq!(st.trace_ratios, vec![0.25; 4]);
        assert_eq!(st.centered_trace, 16.0);
        assert_eq!(st.centered_det, 256.0);
        assert!(st.det_expansion.is_none());

        let s = CovMatrix {
            matrix: SymMatrix::diagonal(&[9.0, 5.0, 2.0]),
            n: 1,
            centered: false,
        };
        let st = spectral_stats(&eigen(&s.matrix).unwrap(), &s, 16.0 / 3.0, 1.0).unwrap();
        assert_eq!(st.spacings, vec![4.0, 3.0]);
        assert!(st.self_normalized.is_none());
    }

    #[test]
    fn correlation_examples() {
        let (r, rep) = correlation_matrix(&panel(&vec![vec![1.0, 3.0, 2.0]; 3])).unwrap();
        assert!(r.diag().iter().all(|&x| x == 1.0));
        assert!(r.rows().iter().flatten().all(|&x| (x - 1.0).abs() < 1e-14));
        assert_relative_eq!(rep.eigenvalues[0], 3.0, epsilon = 1e-12);
        assert!(rep.eigenvalues[1..].iter().all(|l| l.abs() < 1e-12));

        let (r, _) = correlation_matrix(&panel(&[vec![0.5, -1.0, 2.0]])).unwrap();
        assert_eq!(r.rows(), vec![vec![1.0]]);

        match correlation_matrix(&panel(&[vec![1.0, 2.0], vec![0.1, 0.1]])) {
            Err(Error::DegenerateRow(2)) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn participation_ratio_range() {
        let l = Localization::of(&[0.5, 0.5, 0.5, 0.5], false);
        assert_relative_eq!(l.participation_ratio, 4.0, epsilon = 1e-12);
        assert_relative_eq!(l.nearest_basis_distance, 1.0, epsilon = 1e-12);
    }
}
