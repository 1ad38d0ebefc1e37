//! Per-consumer feasible set `Q_n = { q : q_min <= q <= q_max, sum_h q^h = E }`
//! and the exact Euclidean projection onto it.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};

/// Box bounds plus the total-energy budget of one consumer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumerSpec {
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub energy: f64,
}

/// First reason a [`ConsumerSpec`] describes an empty or malformed set.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BoundLengths { q_min: usize, q_max: usize },
    EmptyHorizon,
    NonFinite { slot: usize },
    NegativeMinimum { slot: usize, value: f64 },
    CrossedBounds { slot: usize, q_min: f64, q_max: f64 },
    NonPositiveBudget { energy: f64 },
    BudgetBelowMinimum { energy: f64, min_total: f64 },
    BudgetAboveMaximum { energy: f64, max_total: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BoundLengths { q_min, q_max } => {
                write!(f, "q_min has {q_min} slots but q_max has {q_max}")
            }
            Violation::EmptyHorizon => write!(f, "horizon is empty"),
            Violation::NonFinite { slot } => write!(f, "slot {slot}: non-finite bound"),
            Violation::NegativeMinimum { slot, value } => {
                write!(f, "slot {slot}: q_min = {value} is negative")
            }
            Violation::CrossedBounds { slot, q_min, q_max } => {
                write!(f, "slot {slot}: q_min = {q_min} exceeds q_max = {q_max}")
            }
            Violation::NonPositiveBudget { energy } => {
                write!(f, "budget E = {energy} must be positive")
            }
            Violation::BudgetBelowMinimum { energy, min_total } => {
                write!(f, "budget E = {energy} is below sum(q_min) = {min_total}")
            }
            Violation::BudgetAboveMaximum { energy, max_total } => {
                write!(f, "budget E = {energy} exceeds sum(q_max) = {max_total}")
            }
        }
    }
}

impl ConsumerSpec {
    pub fn new(q_min: Vec<f64>, q_max: Vec<f64>, energy: f64) -> Result<Self> {
        let spec = Self {
            q_min,
            q_max,
            energy,
        };
        spec.validate().map_err(DsmError::InvalidSpec)?;
        Ok(spec)
    }

    pub fn horizon(&self) -> usize {
        self.q_min.len()
    }

    pub fn validate(&self) -> std::result::Result<(), Violation> {
        if self.q_min.len() != self.q_max.len() {
            return Err(Violation::BoundLengths {
                q_min: self.q_min.len(),
                q_max: self.q_max.len(),
            });
        }
        if self.q_min.is_empty() {
            return Err(Violation::EmptyHorizon);
        }
        for (slot, (&lo, &hi)) in self.q_min.iter().zip(&self.q_max).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Violation::NonFinite { slot });
            }
            if lo < 0.0 {
                return Err(Violation::NegativeMinimum { slot, value: lo });
            }
            if lo > hi {
                return Err(Violation::CrossedBounds {
                    slot,
                    q_min: lo,
                    q_max: hi,
                });
            }
        }
        let energy = self.energy;
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Violation::NonPositiveBudget { energy });
        }
        // Summation-order slack only; a budget built as the sum of a point
        // inside the box must never be rejected.
        let slack = 1e-12 * (1.0 + energy);
        let min_total: f64 = self.q_min.iter().sum();
        if energy < min_total - slack {
            return Err(Violation::BudgetBelowMinimum { energy, min_total });
        }
        let max_total: f64 = self.q_max.iter().sum();
        if energy > max_total + slack {
            return Err(Violation::BudgetAboveMaximum { energy, max_total });
        }
        Ok(())
    }

    pub fn is_feasible(&self, q: &[f64], tol: f64) -> bool {
        if q.len() != self.horizon() {
            return false;
        }
        let in_box = q
            .iter()
            .zip(self.q_min.iter().zip(&self.q_max))
            .all(|(x, (lo, hi))| *x >= lo - tol && *x <= hi + tol);
        in_box && (q.iter().sum::<f64>() - self.energy).abs() <= tol
    }

    /// Euclidean projection onto `Q_n`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.validate().map_err(DsmError::InvalidSpec)?;
        DsmError::check_len("projection input", self.horizon(), v.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DsmError::arg("projection input must be finite"));
        }
        let mut out = vec![0.0; v.len()];
        self.project_into(v, &mut out);
        Ok(out)
    }

    /// Projection for a spec already known to be valid.
    ///
    /// Solves `sum_h clip(v^h - lambda, q_min^h, q_max^h) = E` for the
    /// multiplier by bisection, then snaps `lambda` to the exact value implied
    /// by the bracketed active set.
    pub(crate) fn project_into(&self, v: &[f64], out: &mut [f64]) {
        let (lo_b, hi_b) = (&self.q_min, &self.q_max);
        let min_total: f64 = lo_b.iter().sum();
        let max_total: f64 = hi_b.iter().sum();
        if self.energy <= min_total {
            out.copy_from_slice(lo_b);
            return;
        }
        if self.energy >= max_total {
            out.copy_from_slice(hi_b);
            return;
        }

        let clipped_sum = |lambda: f64| -> f64 {
            v.iter()
                .zip(lo_b.iter().zip(hi_b))
                .map(|(x, (l, u))| (x - lambda).clamp(*l, *u))
                .sum()
        };

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for h in 0..v.len() {
            lo = lo.min(v[h] - hi_b[h]);
            hi = hi.max(v[h] - lo_b[h]);
        }
        // sum is nonincreasing in lambda: sum(lo) = max_total >= E >= min_total = sum(hi)
        for _ in 0..200 {
            if hi - lo <= 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if clipped_sum(mid) > self.energy {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut lambda = 0.5 * (lo + hi);

        // Exact multiplier for the active set found at `lambda`.
        let mut free_sum = 0.0;
        let mut free_count = 0usize;
        let mut fixed_sum = 0.0;
        for h in 0..v.len() {
            let x = v[h] - lambda;
            if x <= lo_b[h] {
                fixed_sum += lo_b[h];
            } else if x >= hi_b[h] {
                fixed_sum += hi_b[h];
            } else {
                free_sum += v[h];
                free_count += 1;
            }
        }
        if free_count > 0 {
            let exact = (free_sum - (self.energy - fixed_sum)) / free_count as f64;
            let consistent = (0..v.len()).all(|h| {
                let at_old = v[h] - lambda;
                let at_new = v[h] - exact;
                if at_old <= lo_b[h] {
                    at_new <= lo_b[h]
                } else if at_old >= hi_b[h] {
                    at_new >= hi_b[h]
                } else {
                    at_new >= lo_b[h] && at_new <= hi_b[h]
                }
            });
            if consistent {
                lambda = exact;
            }
        }
        for h in 0..v.len() {
            out[h] = (v[h] - lambda).clamp(lo_b[h], hi_b[h]);
        }
    }

    /// Uniform draw in the box, projected onto the budget face.
    pub fn sample_feasible<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.validate().map_err(DsmError::InvalidSpec)?;
        let v: Vec<f64> = self
            .q_min
            .iter()
            .zip(&self.q_max)
            .map(|(&lo, &hi)| if lo < hi { rng.gen_range(lo..=hi) } else { lo })
            .collect();
        self.project(&v)
    }
}
