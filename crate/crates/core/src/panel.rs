use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelRole {
    X,
    Sigma,
    Eta,
}

/// A `p x n` matrix of observations: row `i` is series `i`, column `t` is time.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    p: usize,
    n: usize,
    values: Vec<f64>,
    role: PanelRole,
}

impl Panel {
    pub fn new(p: usize, n: usize, values: Vec<f64>, role: PanelRole) -> Result<Self> {
        if p == 0 || n == 0 {
            return Err(Error::EmptyPanel);
        }
        if values.len() != p * n {
            return Err(Error::ContractViolation(format!(
                "panel of shape {p}x{n} needs {} values, got {}",
                p * n,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite panel entry at row {}, column {}",
                pos / n,
                pos % n
            )));
        }
        if role == PanelRole::Sigma {
            if let Some(pos) = values.iter().position(|&v| v <= 0.0) {
                return Err(Error::Numeric(format!(
                    "volatility entry at row {}, column {} is not strictly positive",
                    pos / n,
                    pos % n
                )));
            }
        }
        Ok(Self { p, n, values, role })
    }

    pub fn from_rows(rows: &[Vec<f64>], role: PanelRole) -> Result<Self> {
        let p = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ContractViolation("ragged panel rows".into()));
        }
        Self::new(p, n, rows.concat(), role)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn role(&self) -> PanelRole {
        self.role
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.values[i * self.n + t]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n)
    }

    /// Column `t` as a vector `(X_1t, ..., X_pt)`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.p).map(|i| self.get(i, t)).collect()
    }

    /// Elementwise product with another panel of the same shape.
    pub fn hadamard(&self, other: &Panel, role: PanelRole) -> Result<Panel> {
        if self.p != other.p || self.n != other.n {
            return Err(Error::ContractViolation("panel shapes differ".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        Panel::new(self.p, self.n, values, role)
    }

    pub fn with_role(mut self, role: PanelRole) -> Self {
        self.role = role;
        self
    }
}
