//! The distance-dependent CRP prior over link vectors.
//!
//! Observation `i` links to itself with weight `alpha` and to `j != i` with
//! weight `f(d_ij)`; links are independent, so
//!
//! ```text
//! p(c_i = j) = alpha / (alpha + R_i)       j == i
//!            = f(d_ij) / (alpha + R_i)     j != i
//! R_i        = sum_{j != i} f(d_ij)
//! ```

use crate::error::{Error, Result};
use crate::partition::Assignments;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Symmetric, zero-diagonal matrix of non-negative finite distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Build from a row-major `n x n` buffer.
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::InvalidInput(format!(
                "distance buffer has {} entries, expected {n}x{n}",
                d.len()
            )));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::InvalidInput(format!("distance d[{i}][{i}] must be 0")));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "distance d[{i}][{j}] = {v} must be finite and non-negative"
                    )));
                }
                if v != d[j * n + i] {
                    return Err(Error::InvalidInput(format!(
                        "distance matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput("distance matrix must be square".into()));
        }
        Self::new(n, rows.concat())
    }

    /// `d_ij = |x_i - x_j|` for a one-dimensional covariate.
    pub fn from_covariate(x: &[f64]) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("covariate value {v} is not finite")));
        }
        let n = x.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = (x[i] - x[j]).abs();
            }
        }
        Ok(Self { n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Hex SHA-256 over the little-endian entries; recorded in trace metadata.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n as u64).to_le_bytes());
        for v in &self.d {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// Decay function `f`. Each form is non-negative and non-increasing in `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum Decay {
    /// `f(d) = exp(-scale * d)`.
    Exponential { scale: f64 },
    /// `f(d) = 1{d < width}`.
    Window { width: f64 },
    /// `f(d) = 1`: every pair is equally attractive.
    Identity,
}

impl Decay {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Decay::Exponential { scale } if !(scale > 0.0 && scale.is_finite()) => Err(
                Error::InvalidInput(format!("decay scale must be positive, got {scale}")),
            ),
            Decay::Window { width } if !(width > 0.0) => Err(Error::InvalidInput(format!(
                "window width must be positive, got {width}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, d: f64) -> f64 {
        match *self {
            Decay::Exponential { scale } => (-scale * d).exp(),
            Decay::Window { width } => {
                if d < width {
                    1.0
                } else {
                    0.0
                }
            }
            Decay::Identity => 1.0,
        }
    }

    pub fn log_eval(&self, d: f64) -> f64 {
        match *self {
            Decay::Exponential { scale } => -scale * d,
            Decay::Window { width } => {
                if d < width {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Decay::Identity => 0.0,
        }
    }

    pub fn scale(&self) -> Option<f64> {
        match *self {
            Decay::Exponential { scale } => Some(scale),
            _ => None,
        }
    }
}

/// ddCRP prior with cached row weights `R_i` and log-decay matrix.
///
/// The caches depend on the distances and the decay; they are rebuilt only
/// through [`DdcrpPrior::set_decay`] / [`DdcrpPrior::set_scale`]. Changing
/// `alpha` needs no rebuild.
#[derive(Debug, Clone)]
pub struct DdcrpPrior {
    distances: DistanceMatrix,
    decay: Decay,
    alpha: f64,
    row_weights: Vec<f64>,
    log_decay: Vec<f64>,
    // f(d_ij) off the diagonal, 0 on it.
    link_weights: Vec<f64>,
}

impl DdcrpPrior {
    pub fn new(distances: DistanceMatrix, decay: Decay, alpha: f64) -> Result<Self> {
        decay.validate()?;
        check_alpha(alpha)?;
        let mut prior = Self {
            distances,
            decay,
            alpha,
            row_weights: Vec::new(),
            log_decay: Vec::new(),
            link_weights: Vec::new(),
        };
        prior.rebuild_cache();
        Ok(prior)
    }

    pub fn n(&self) -> usize {
        self.distances.n()
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.distances
    }

    pub fn decay(&self) -> Decay {
        self.decay
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        check_alpha(alpha)?;
        self.alpha = alpha;
        Ok(())
    }

    pub fn set_decay(&mut self, decay: Decay) -> Result<()> {
        decay.validate()?;
        self.decay = decay;
        self.rebuild_cache();
        Ok(())
    }

    /// Replace the exponential decay scale and rebuild the caches.
    pub fn set_scale(&mut self, scale: f64) -> Result<()> {
        match self.decay {
            Decay::Exponential { .. } => self.set_decay(Decay::Exponential { scale }),
            _ => Err(Error::Unsupported(
                "decay scale is only defined for exponential decay".into(),
            )),
        }
    }

    /// Recompute `R_i` and `log f(d_ij)` from the distances and decay.
    pub fn rebuild_cache(&mut self) {
        let n = self.n();
        self.log_decay = vec![0.0; n * n];
        self.link_weights = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = self.distances.get(i, j);
                self.log_decay[i * n + j] = self.decay.log_eval(d);
                if i != j {
                    self.link_weights[i * n + j] = self.decay.eval(d);
                }
            }
        }
        self.row_weights = self.row_weights_for(&self.decay);
    }

    /// `R_i` under an arbitrary decay, leaving the cache untouched.
    pub fn row_weights_for(&self, decay: &Decay) -> Vec<f64> {
        let n = self.n();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| decay.eval(self.distances.get(i, j)))
                    .sum()
            })
            .collect()
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    /// `log f(d_ij)` for `i != j` (cached). The diagonal entry is `log f(0)`.
    pub fn log_decay(&self, i: usize, j: usize) -> f64 {
        self.log_decay[i * self.n() + j]
    }

    pub fn log_decay_row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.log_decay[i * n..(i + 1) * n]
    }

    /// `f(d_ij)` for every `j`, with 0 at `j = i`.
    pub fn decay_row(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.link_weights[i * n..(i + 1) * n]
    }

    pub fn log_normaliser(&self, i: usize) -> f64 {
        (self.alpha + self.row_weights[i]).ln()
    }

    /// Unnormalised log weight of the link `i -> j`.
    pub fn link_log_weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.alpha.ln()
        } else {
            self.log_decay(i, j)
        }
    }

    pub fn link_log_prob(&self, i: usize, j: usize) -> f64 {
        self.link_log_weight(i, j) - self.log_normaliser(i)
    }

    /// `log p(c | alpha, f)`; `-inf` when some non-self link has `f = 0`.
    pub fn assignment_log_prior(&self, c: &Assignments) -> f64 {
        debug_assert_eq!(c.len(), self.n());
        c.as_slice()
            .iter()
            .enumerate()
            .map(|(i, &j)| self.link_log_prob(i, j))
            .sum()
    }

    /// Draw one link for observation `i` from its prior categorical.
    pub fn sample_link<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let mut u = rng.random::<f64>() * (self.alpha + self.row_weights[i]);
        if u < self.alpha || self.row_weights[i] <= 0.0 {
            return i;
        }
        u -= self.alpha;
        let mut last = i;
        for (j, &w) in self.decay_row(i).iter().enumerate() {
            if w > 0.0 {
                last = j;
                if u < w {
                    return j;
                }
                u -= w;
            }
        }
        last
    }

    pub fn sample_assignments<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignments {
        let links = (0..self.n()).map(|i| self.sample_link(i, rng)).collect();
        Assignments::new(links).expect("sampled links are in range")
    }

    /// `sum_{i: c_i != i} d_{i, c_i}`.
    pub fn linked_distance_sum(&self, c: &Assignments) -> f64 {
        c.as_slice()
            .iter()
            .enumerate()
            .filter(|(i, j)| i != *j)
            .map(|(i, &j)| self.distances.get(i, j))
            .sum()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "concentration must be positive and finite, got {alpha}"
        )))
    }
}
