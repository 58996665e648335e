//! Richardson extrapolation for sequences sampled at geometrically shrinking
//! step sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error model `A(h) = A₀ + Σ_k c_k h^{p₀ + k·step}` for samples at
/// `h_j = h₀ / ratio^j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Richardson {
    pub ratio: f64,
    pub p0: f64,
    pub step: f64,
}

impl Default for Richardson {
    fn default() -> Self {
        Self { ratio: 2.0, p0: 1.0, step: 1.0 }
    }
}

impl Richardson {
    pub fn new(ratio: f64, p0: f64, step: f64) -> Result<Self> {
        if !(ratio > 1.0 && p0 > 0.0 && step > 0.0) {
            return Err(Error::Domain(format!("invalid Richardson parameters ({ratio}, {p0}, {step})")));
        }
        Ok(Self { ratio, p0, step })
    }

    /// Full tableau; row `j` holds the `j + 1` estimates built from samples
    /// `0..=j`, the last entry of the last row being the most extrapolated.
    pub fn tableau(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(values.len());
        for (j, &v) in values.iter().enumerate() {
            let mut row = vec![v];
            for k in 1..=j {
                let f = self.ratio.powf(self.p0 + (k - 1) as f64 * self.step);
                let prev = rows[j - 1][k - 1];
                let cur = row[k - 1];
                row.push(cur + (cur - prev) / (f - 1.0));
            }
            rows.push(row);
        }
        rows
    }

    /// Most extrapolated value.
    pub fn limit(&self, values: &[f64]) -> Result<f64> {
        if values.is_empty() {
            return Err(Error::Domain("Richardson extrapolation needs at least one value".into()));
        }
        Ok(*self.tableau(values).last().and_then(|r| r.last()).expect("non-empty"))
    }
}
