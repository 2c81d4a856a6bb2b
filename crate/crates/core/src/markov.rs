//! Markov chain view of the repeated game.
//!
//! Memory-one strategies for the server and every device induce a chain on
//! the `η` joint outcomes. Its stationary distribution gives each player's
//! long-run expected utility. This module provides two independent routes to
//! those expectations, a direct stationary solve and determinant ratios, and
//! uses the first to check the extortion relation a CE server enforces.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::ce::{derive_ce_strategy, CeError};
use crate::game::{GameConfig, GameError, UtilityTable};
use crate::linalg::Dense;

/// Default residual tolerance for stationary solves.
pub const STATIONARY_TOL: f64 = 1e-10;
/// Largest chain handled by the determinant route.
pub const DET_MAX_ETA: usize = 32;
/// Offset applied to deterministic strategy entries by [`DeviceStrategy::perturbed`].
pub const PERTURBATION: f64 = 1e-9;

const POWER_MAX_ITERS: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("probability {value} at position {index} outside [0, 1]")]
    InvalidProbability { index: usize, value: f64 },
    #[error("chain has more than one stationary distribution")]
    NonErgodic,
    #[error("stationary solve did not reach tolerance {tol} (residual {residual})")]
    NotConverged { residual: f64, tol: f64 },
    #[error("determinant route is limited to {cap} outcomes, got {eta}")]
    SizeCap { eta: usize, cap: usize },
    #[error("extortion identity residual {residual} exceeds {tol}")]
    IdentityViolated { residual: f64, tol: f64 },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Ce(#[from] CeError),
}

/// A device's memory-one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DeviceStrategy {
    /// Cooperation probability conditioned on the previous outcome.
    Full(Vec<f64>),
    /// Memoryless cooperation probability.
    Scalar(f64),
}

impl DeviceStrategy {
    #[inline]
    pub fn cooperation_after(&self, slot: usize) -> f64 {
        match self {
            DeviceStrategy::Full(q) => q[slot],
            DeviceStrategy::Scalar(q) => *q,
        }
    }

    pub fn validate(&self, eta: usize) -> Result<(), MarkovError> {
        let check = |index: usize, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(MarkovError::InvalidProbability { index, value })
            }
        };
        match self {
            DeviceStrategy::Scalar(q) => check(0, *q),
            DeviceStrategy::Full(q) => {
                if q.len() != eta {
                    return Err(MarkovError::DimensionMismatch {
                        expected: eta,
                        got: q.len(),
                    });
                }
                q.iter().enumerate().try_for_each(|(i, &v)| check(i + 1, v))
            }
        }
    }

    /// Entries pulled into `[eps, 1 − eps]` so that no transition is forbidden.
    pub fn perturbed(&self, eps: f64) -> Self {
        let nudge = |q: f64| q.clamp(eps, 1.0 - eps);
        match self {
            DeviceStrategy::Full(q) => DeviceStrategy::Full(q.iter().copied().map(nudge).collect()),
            DeviceStrategy::Scalar(q) => DeviceStrategy::Scalar(nudge(*q)),
        }
    }
}

/// Row-stochastic `η × η` matrix, row `u` = previous outcome, column `v` = next.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    eta: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn eta(&self) -> usize {
        self.eta
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[u * self.eta + v]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.data[u * self.eta..(u + 1) * self.eta]
    }

    /// `v M` for a row vector `v`.
    pub fn left_multiply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.eta];
        for (u, &vu) in v.iter().enumerate() {
            if vu == 0.0 {
                continue;
            }
            for (o, m) in out.iter_mut().zip(self.row(u)) {
                *o += vu * m;
            }
        }
        out
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.eta)
            .map(|u| (self.row(u).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `M_uv = P(p_u, x_v) Π_i Q_i(q^i_u, y^i_v)`.
pub fn build_transition_matrix(p: &[f64], strategies: &[DeviceStrategy]) -> Result<TransitionMatrix, MarkovError> {
    let n = strategies.len();
    let eta = 1usize << (n + 1);
    if p.len() != eta {
        return Err(MarkovError::DimensionMismatch {
            expected: eta,
            got: p.len(),
        });
    }
    if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(MarkovError::InvalidProbability { index: index + 1, value });
    }
    for s in strategies {
        s.validate(eta)?;
    }

    let mut data = Vec::with_capacity(eta * eta);
    let mut row = Vec::with_capacity(eta);
    let mut next = Vec::with_capacity(eta);
    for u in 0..eta {
        // Kronecker product over players, server first, cooperation first.
        row.clear();
        row.extend([p[u], 1.0 - p[u]]);
        for s in strategies {
            let q = s.cooperation_after(u);
            next.clear();
            for &r in &row {
                next.push(r * q);
                next.push(r * (1.0 - q));
            }
            std::mem::swap(&mut row, &mut next);
        }
        data.extend_from_slice(&row);
    }
    Ok(TransitionMatrix { eta, data })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    Direct,
    PowerIteration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub v: Vec<f64>,
    /// `‖vM − v‖∞`.
    pub residual: f64,
    pub method: SolveMethod,
}

fn residual(m: &TransitionMatrix, v: &[f64]) -> f64 {
    m.left_multiply(v)
        .iter()
        .zip(v)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Clip round-off negatives and rescale to unit mass. `None` if an entry is
/// materially negative.
fn normalize(mut v: Vec<f64>, tol: f64) -> Option<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite() || *x < -tol) {
        return None;
    }
    for x in &mut v {
        *x = x.max(0.0);
    }
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= total);
    Some(v)
}

enum Direct {
    Solved(Vec<f64>),
    Singular,
    Inaccurate,
}

/// Solve `v (M − I) = 0` with the last balance equation replaced by `Σ v = 1`.
fn direct_solve(m: &TransitionMatrix, tol: f64) -> Direct {
    let eta = m.eta();
    let mut a = DMatrix::<f64>::zeros(eta, eta);
    for u in 0..eta {
        for (v, &x) in m.row(u).iter().enumerate() {
            a[(v, u)] = x;
        }
        a[(u, u)] -= 1.0;
    }
    for u in 0..eta {
        a[(eta - 1, u)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(eta);
    b[eta - 1] = 1.0;

    let lu = a.lu();
    let diag = lu.u().diagonal();
    let largest = diag.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let smallest = diag.iter().fold(f64::INFINITY, |acc, x| acc.min(x.abs()));
    if largest == 0.0 || smallest <= f64::EPSILON * eta as f64 * largest {
        return Direct::Singular;
    }
    match lu.solve(&b) {
        Some(x) => match normalize(x.iter().copied().collect(), tol) {
            Some(v) if residual(m, &v) <= tol => Direct::Solved(v),
            _ => Direct::Inaccurate,
        },
        None => Direct::Singular,
    }
}

/// Lazy power iteration `v ← ½ (v + vM)`, which shares the stationary
/// distribution of `M` and cannot oscillate on periodic chains.
fn power_iteration(m: &TransitionMatrix, tol: f64) -> Result<Vec<f64>, MarkovError> {
    let eta = m.eta();
    let mut v = vec![1.0 / eta as f64; eta];
    let mut res = f64::INFINITY;
    for it in 0..POWER_MAX_ITERS {
        let vm = m.left_multiply(&v);
        if it % 16 == 0 {
            res = vm.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if res <= tol {
                return normalize(v, tol).ok_or(MarkovError::NotConverged { residual: res, tol });
            }
        }
        for (x, y) in v.iter_mut().zip(&vm) {
            *x = 0.5 * (*x + y);
        }
    }
    Err(MarkovError::NotConverged { residual: res, tol })
}

pub fn stationary_distribution(m: &TransitionMatrix, tol: f64) -> Result<StationaryDistribution, MarkovError> {
    let (v, method) = match direct_solve(m, tol) {
        Direct::Solved(v) => (v, SolveMethod::Direct),
        Direct::Singular => return Err(MarkovError::NonErgodic),
        Direct::Inaccurate => (power_iteration(m, tol)?, SolveMethod::PowerIteration),
    };
    let residual = residual(m, &v);
    Ok(StationaryDistribution { v, residual, method })
}

/// Long-run expected utilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedUtilities {
    pub server: f64,
    pub devices: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn expected_utilities(
    dist: &StationaryDistribution,
    table: &UtilityTable,
) -> Result<ExpectedUtilities, MarkovError> {
    expected_from_weights(&dist.v, table)
}

pub(crate) fn expected_from_weights(v: &[f64], table: &UtilityTable) -> Result<ExpectedUtilities, MarkovError> {
    if v.len() != table.eta() {
        return Err(MarkovError::DimensionMismatch {
            expected: table.eta(),
            got: v.len(),
        });
    }
    Ok(ExpectedUtilities {
        server: dot(v, table.server()),
        devices: table.devices().iter().map(|u| dot(v, u)).collect(),
    })
}

/// `det[M'_1, …, M'_{η−1}, f]` with `M' = M − I`; proportional to `v · f`.
pub fn det_dot(m: &TransitionMatrix, f: &[f64]) -> Result<f64, MarkovError> {
    let eta = m.eta();
    if eta > DET_MAX_ETA {
        return Err(MarkovError::SizeCap { eta, cap: DET_MAX_ETA });
    }
    if f.len() != eta {
        return Err(MarkovError::DimensionMismatch {
            expected: eta,
            got: f.len(),
        });
    }
    let mut d = Dense::zeros(eta);
    for r in 0..eta {
        for c in 0..eta - 1 {
            let id = if r == c { 1.0 } else { 0.0 };
            d.set(r, c, m.get(r, c) - id);
        }
        d.set(r, eta - 1, f[r]);
    }
    Ok(d.determinant())
}

/// Expected utilities as determinant ratios `det(…, u) / det(…, 1)`.
pub fn det_expected_utilities(m: &TransitionMatrix, table: &UtilityTable) -> Result<ExpectedUtilities, MarkovError> {
    let norm = det_dot(m, &vec![1.0; m.eta()])?;
    if norm == 0.0 {
        return Err(MarkovError::NonErgodic);
    }
    Ok(ExpectedUtilities {
        server: det_dot(m, table.server())? / norm,
        devices: table
            .devices()
            .iter()
            .map(|u| det_dot(m, u).map(|d| d / norm))
            .collect::<Result<_, _>>()?,
    })
}

/// `|E_s − u_s^1 − χ Σ_i (E_i − u_i^1)| / max(1, |u_s^1|)`.
pub fn ce_identity_residual(table: &UtilityTable, chi: f64, expected: &ExpectedUtilities) -> f64 {
    let base = table.server_base();
    let devices: f64 = expected
        .devices
        .iter()
        .enumerate()
        .map(|(i, e)| e - table.device_base(i + 1))
        .sum();
    (expected.server - base - chi * devices).abs() / base.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub expected: ExpectedUtilities,
    pub residual: f64,
    pub stationary_residual: f64,
}

/// Play a CE server with parameters `(χ, γ)` against `strategies` and measure
/// how far the long-run utilities sit from the extortion relation.
pub fn verify_ce_identity(
    cfg: &GameConfig,
    chi: f64,
    gamma: f64,
    strategies: &[DeviceStrategy],
    tol: f64,
) -> Result<IdentityCheck, MarkovError> {
    if strategies.len() != cfg.n() {
        return Err(MarkovError::DimensionMismatch {
            expected: cfg.n(),
            got: strategies.len(),
        });
    }
    let table = UtilityTable::build(cfg)?;
    verify_ce_identity_on(&table, chi, gamma, strategies, tol)
}

pub fn verify_ce_identity_on(
    table: &UtilityTable,
    chi: f64,
    gamma: f64,
    strategies: &[DeviceStrategy],
    tol: f64,
) -> Result<IdentityCheck, MarkovError> {
    let ce = derive_ce_strategy(table, chi, gamma)?;
    let m = build_transition_matrix(&ce.p, strategies)?;
    let dist = stationary_distribution(&m, STATIONARY_TOL)?;
    let expected = expected_utilities(&dist, table)?;
    let residual = ce_identity_residual(table, chi, &expected);
    if residual > tol {
        return Err(MarkovError::IdentityViolated { residual, tol });
    }
    Ok(IdentityCheck {
        expected,
        residual,
        stationary_residual: dist.residual,
    })
}
