//! Economic primitives of the game: the per-slot polynomial price
//! `p_h(L) = a_h L^{b_h} + c_h`, the two billing rules, the game mapping
//! `F_n`, and the analytical uniqueness/monotonicity certificates.
//!
//! Slots are 0-based throughout the crate.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};

/// Per-slot price parameters. Construction rejects `a <= 0`, `b < 1`, `c < 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPriceCurve")]
pub struct PriceCurve {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPriceCurve {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl TryFrom<RawPriceCurve> for PriceCurve {
    type Error = DsmError;

    fn try_from(raw: RawPriceCurve) -> Result<Self> {
        PriceCurve::new(raw.a, raw.b, raw.c)
    }
}

impl PriceCurve {
    pub fn new(a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        DsmError::check_len("price exponents", a.len(), b.len())?;
        DsmError::check_len("price offsets", a.len(), c.len())?;
        if a.is_empty() {
            return Err(DsmError::arg("price curve needs at least one slot"));
        }
        for h in 0..a.len() {
            if !(a[h] > 0.0 && a[h].is_finite()) {
                return Err(DsmError::arg(format!("slot {h}: a must be positive, got {}", a[h])));
            }
            if !(b[h] >= 1.0 && b[h].is_finite()) {
                return Err(DsmError::arg(format!("slot {h}: b must be >= 1, got {}", b[h])));
            }
            if !(c[h] >= 0.0 && c[h].is_finite()) {
                return Err(DsmError::arg(format!("slot {h}: c must be >= 0, got {}", c[h])));
            }
        }
        Ok(Self { a, b, c })
    }

    /// Same `(a, b, c)` in every one of `horizon` slots.
    pub fn uniform(horizon: usize, a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(vec![a; horizon], vec![b; horizon], vec![c; horizon])
    }

    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn max_exponent(&self) -> f64 {
        self.b.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    fn check(&self, h: usize, load: f64) -> Result<()> {
        if h >= self.horizon() {
            return Err(DsmError::arg(format!(
                "slot {h} out of range for horizon {}",
                self.horizon()
            )));
        }
        if !(load >= 0.0) {
            return Err(DsmError::arg(format!("load must be nonnegative, got {load}")));
        }
        Ok(())
    }

    /// `p_h(L)`.
    pub fn price(&self, h: usize, load: f64) -> Result<f64> {
        self.check(h, load)?;
        Ok(self.price_unchecked(h, load))
    }

    /// `p_h'(L) = a_h b_h L^{b_h - 1}`, equal to `a_h` everywhere when `b_h = 1`.
    pub fn price_derivative(&self, h: usize, load: f64) -> Result<f64> {
        self.check(h, load)?;
        Ok(self.derivative_unchecked(h, load))
    }

    /// `p_h''(L) = a_h b_h (b_h - 1) L^{b_h - 2}`. Diverges at `L = 0` for `1 < b_h < 2`.
    pub fn price_second_derivative(&self, h: usize, load: f64) -> Result<f64> {
        self.check(h, load)?;
        let (a, b) = (self.a[h], self.b[h]);
        if b == 1.0 {
            return Ok(0.0);
        }
        if b == 2.0 {
            return Ok(2.0 * a);
        }
        if load == 0.0 {
            if b < 2.0 {
                return Err(DsmError::Singular {
                    slot: h,
                    reason: format!("p'' diverges at zero load for b = {b}"),
                });
            }
            return Ok(0.0);
        }
        Ok(a * b * (b - 1.0) * load.powf(b - 2.0))
    }

    #[inline]
    pub(crate) fn price_unchecked(&self, h: usize, load: f64) -> f64 {
        let b = self.b[h];
        let pow = if b == 1.0 { load } else { load.powf(b) };
        self.a[h] * pow + self.c[h]
    }

    #[inline]
    pub(crate) fn derivative_unchecked(&self, h: usize, load: f64) -> f64 {
        let b = self.b[h];
        if b == 1.0 {
            self.a[h]
        } else {
            self.a[h] * b * load.powf(b - 1.0)
        }
    }

    fn check_profile(&self, what: &'static str, v: &[f64]) -> Result<()> {
        DsmError::check_len(what, self.horizon(), v.len())?;
        if let Some(h) = v.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(DsmError::arg(format!(
                "{what}: slot {h} must be finite and nonnegative, got {}",
                v[h]
            )));
        }
        Ok(())
    }
}

/// Elementwise sum of a set of equal-length profiles.
pub fn aggregate(profiles: &[Vec<f64>]) -> Vec<f64> {
    let horizon = profiles.first().map_or(0, Vec::len);
    let mut sum = vec![0.0; horizon];
    for q in profiles {
        for (s, x) in sum.iter_mut().zip(q) {
            *s += x;
        }
    }
    sum
}

/// Instantaneous-load bill `sum_h p_h(q_sigma^h) q_n^h`.
pub fn bill_instantaneous(q_n: &[f64], q_sigma: &[f64], curve: &PriceCurve) -> Result<f64> {
    curve.check_profile("profile", q_n)?;
    curve.check_profile("aggregate", q_sigma)?;
    Ok(bill_unchecked(q_n, q_sigma, curve))
}

pub(crate) fn bill_unchecked(q_n: &[f64], q_sigma: &[f64], curve: &PriceCurve) -> f64 {
    q_n.iter()
        .zip(q_sigma)
        .enumerate()
        .map(|(h, (q, s))| curve.price_unchecked(h, *s) * q)
        .sum()
}

/// Total grid cost `sum_h p_h(q_sigma^h) q_sigma^h`.
pub fn grid_cost(q_sigma: &[f64], curve: &PriceCurve) -> Result<f64> {
    bill_instantaneous(q_sigma, q_sigma, curve)
}

/// Total-load bill: the grid cost split by budget share `E_n / sum_m E_m`.
pub fn bill_total_load(
    n: usize,
    profiles: &[Vec<f64>],
    budgets: &[f64],
    curve: &PriceCurve,
) -> Result<f64> {
    DsmError::check_len("budgets", profiles.len(), budgets.len())?;
    if n >= profiles.len() {
        return Err(DsmError::arg(format!("consumer {n} out of range")));
    }
    let total: f64 = budgets.iter().sum();
    if !(total > 0.0) {
        return Err(DsmError::arg("total budget must be positive"));
    }
    for q in profiles {
        curve.check_profile("profile", q)?;
    }
    let q_sigma = aggregate(profiles);
    Ok(budgets[n] / total * bill_unchecked(&q_sigma, &q_sigma, curve))
}

/// The game mapping `F_n(q_n, q_sigma)`: per slot `p_h'(q_sigma^h) q_n^h + p_h(q_sigma^h)`,
/// the gradient of consumer n's bill with the aggregate co-moving.
pub fn mapping_component(q_n: &[f64], q_sigma: &[f64], curve: &PriceCurve) -> Result<Vec<f64>> {
    curve.check_profile("profile", q_n)?;
    curve.check_profile("aggregate", q_sigma)?;
    let mut out = vec![0.0; q_n.len()];
    mapping_into(q_n, q_sigma, curve, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn mapping_into(q_n: &[f64], q_sigma: &[f64], curve: &PriceCurve, out: &mut [f64]) {
    for (h, f) in out.iter_mut().enumerate() {
        let s = q_sigma[h];
        *f = curve.derivative_unchecked(h, s) * q_n[h] + curve.price_unchecked(h, s);
    }
}

/// Diagonal of the Hessian of `B_n` in `q_n`: `q_n^h p_h''(q_sigma^h) + 2 p_h'(q_sigma^h)`.
pub fn hessian_diagonal(q_n: &[f64], q_sigma: &[f64], curve: &PriceCurve) -> Result<Vec<f64>> {
    curve.check_profile("profile", q_n)?;
    curve.check_profile("aggregate", q_sigma)?;
    (0..q_n.len())
        .map(|h| {
            let second = curve.price_second_derivative(h, q_sigma[h])?;
            Ok(q_n[h] * second + 2.0 * curve.derivative_unchecked(h, q_sigma[h]))
        })
        .collect()
}

/// Peak-to-average ratio `H max_h q^h / sum_h q^h`.
pub fn par(q_sigma: &[f64]) -> Result<f64> {
    let total: f64 = q_sigma.iter().sum();
    if !(total > 0.0) {
        return Err(DsmError::arg("PAR needs a positive total load"));
    }
    let peak = q_sigma.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(q_sigma.len() as f64 * peak / total)
}

/// Sufficient condition for a unique equilibrium, with per-slot monotonicity margins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `3 + 4 / (N - 1)`.
    pub uniqueness_bound: f64,
    /// `kappa_h = (N + 1 + b_h) - sqrt(N (N - 1 + b_h^2))`; positive iff `b_h` is below the bound.
    pub kappa: Vec<f64>,
    /// Smallest eigenvalue of `G_h + G_h^T` per slot, when evaluated at a concrete profile set.
    pub min_eigenvalue: Option<Vec<f64>>,
    pub holds: bool,
}

impl Certificate {
    /// Fills `min_eigenvalue` from the per-slot consumer loads of `profiles`.
    pub fn evaluate_at(mut self, profiles: &[Vec<f64>], curve: &PriceCurve) -> Result<Self> {
        let eigs = (0..curve.horizon())
            .map(|h| {
                let loads: Vec<f64> = profiles.iter().map(|q| q[h]).collect();
                monotonicity_certificate(&loads, h, curve).map(|m| m.min_eigenvalue)
            })
            .collect::<Result<Vec<_>>>()?;
        self.min_eigenvalue = Some(eigs);
        Ok(self)
    }
}

pub fn uniqueness_certificate(consumers: usize, curve: &PriceCurve) -> Result<Certificate> {
    if consumers < 2 {
        return Err(DsmError::arg(format!(
            "uniqueness bound needs N >= 2, got {consumers}"
        )));
    }
    let bound = 3.0 + 4.0 / (consumers as f64 - 1.0);
    Ok(Certificate {
        uniqueness_bound: bound,
        kappa: curve.b().iter().map(|&b| kappa(consumers, b)).collect(),
        min_eigenvalue: None,
        holds: curve.max_exponent() < bound,
    })
}

fn kappa(consumers: usize, b: f64) -> f64 {
    let n = consumers as f64;
    (n + 1.0 + b) - (n * (n - 1.0 + b * b)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotMonotonicity {
    pub kappa: f64,
    pub min_eigenvalue: f64,
}

/// Transposed Jacobian `G_h` of the slot-h mapping over the N consumer loads:
/// `sigma (2 q_sigma + (b-1) q_n)` on the diagonal, `sigma (q_sigma + (b-1) q_n)` off it,
/// with `sigma = a b q_sigma^{b-2}`.
pub fn slot_jacobian(slot_loads: &[f64], h: usize, curve: &PriceCurve) -> Result<DMatrix<f64>> {
    if h >= curve.horizon() {
        return Err(DsmError::arg(format!("slot {h} out of range")));
    }
    if let Some(n) = slot_loads.iter().position(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(DsmError::Singular {
            slot: h,
            reason: format!("consumer {n} has nonpositive load {}", slot_loads[n]),
        });
    }
    let (a, b) = (curve.a()[h], curve.b()[h]);
    let total: f64 = slot_loads.iter().sum();
    let sigma = a * b * total.powf(b - 2.0);
    let n = slot_loads.len();
    Ok(DMatrix::from_fn(n, n, |row, col| {
        let own = (b - 1.0) * slot_loads[row];
        if row == col {
            sigma * (2.0 * total + own)
        } else {
            sigma * (total + own)
        }
    }))
}

/// `kappa_h` and the numerically computed smallest eigenvalue of `G_h + G_h^T`.
pub fn monotonicity_certificate(
    slot_loads: &[f64],
    h: usize,
    curve: &PriceCurve,
) -> Result<SlotMonotonicity> {
    if slot_loads.len() < 2 {
        return Err(DsmError::arg("monotonicity certificate needs N >= 2"));
    }
    let g = slot_jacobian(slot_loads, h, curve)?;
    let sym = &g + g.transpose();
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SlotMonotonicity {
        kappa: kappa(slot_loads.len(), curve.b()[h]),
        min_eigenvalue: min,
    })
}

/// Closed-form nonzero eigenvalues `(larger, smaller)` of `z 1^T + 1 z^T` with
/// `z = q_sigma 1 + (b - 1) l`: `1^T z ± sqrt(N z^T z)`.
pub fn rank_two_eigenvalues(slot_loads: &[f64], b: f64) -> (f64, f64) {
    let n = slot_loads.len() as f64;
    let total: f64 = slot_loads.iter().sum();
    let z = slot_loads.iter().map(|l| total + (b - 1.0) * l);
    let zz: f64 = z.map(|x| x * x).sum();
    let trace_part = (n + 1.0 + b) * total - 2.0 * total;
    let root = (n * zz).sqrt();
    (trace_part + root, trace_part - root)
}
