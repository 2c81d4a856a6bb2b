//! Collective extortion: the server strategy that pins
//! `E_s − u_s^1 = χ Σ_i (E_i − u_i^1)` whatever the devices play.
//!
//! With `A_j = u_s^j − u_s^1`, `B_j = Σ_i (u_i^j − u_i^1)` and
//! `f_j = A_j − χ B_j`, the strategy is
//!
//! ```text
//! p_j = γ f_j + 1   for j ≤ η/2   (server cooperated in g_j)
//! p_j = γ f_j       for j > η/2
//! ```
//!
//! and it is a valid probability vector only for `(χ, γ)` inside the
//! feasible region computed by [`feasible_region`].

use serde::Serialize;
use thiserror::Error;

use crate::game::{Outcome, UtilityTable};

/// Tolerance on `p_j ∈ [0, 1]`.
pub const P_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CeError {
    #[error("gamma must be nonzero")]
    GammaZero,
    #[error("extortion factor {0} is below 1")]
    ChiBelowOne(f64),
    #[error("non-finite strategy parameter")]
    NonFinite,
    #[error("p_{index} = {value} lies outside [0, 1]")]
    InfeasiblePoint { index: usize, value: f64 },
}

/// The `A` and `B` difference vectors, in outcome order.
#[derive(Debug, Clone, PartialEq)]
pub struct CeTerms {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl CeTerms {
    pub fn new(table: &UtilityTable) -> Self {
        let s = table.server();
        let base_s = s[0];
        let a = s.iter().map(|u| u - base_s).collect();
        let mut b = vec![0.0; table.eta()];
        for dev in table.devices() {
            let base = dev[0];
            for (bj, u) in b.iter_mut().zip(dev) {
                *bj += u - base;
            }
        }
        CeTerms { a, b }
    }

    pub fn eta(&self) -> usize {
        self.a.len()
    }

    /// `f_j = A_j − χ B_j`.
    pub fn combined(&self, chi: f64) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(a, b)| a - chi * b).collect()
    }
}

pub fn ce_terms(table: &UtilityTable) -> CeTerms {
    CeTerms::new(table)
}

/// A server strategy vector together with the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CeStrategy {
    pub p: Vec<f64>,
    pub chi: f64,
    pub gamma: f64,
}

impl CeStrategy {
    pub fn n(&self) -> usize {
        self.p.len().trailing_zeros() as usize - 1
    }

    /// Cooperation probability after outcome `g`.
    pub fn cooperation_after(&self, g: Outcome) -> f64 {
        self.p[g.slot()]
    }
}

fn check_params(chi: f64, gamma: f64) -> Result<(), CeError> {
    if !chi.is_finite() || !gamma.is_finite() {
        return Err(CeError::NonFinite);
    }
    if chi < 1.0 {
        return Err(CeError::ChiBelowOne(chi));
    }
    if gamma == 0.0 {
        return Err(CeError::GammaZero);
    }
    Ok(())
}

pub fn derive_ce_strategy(table: &UtilityTable, chi: f64, gamma: f64) -> Result<CeStrategy, CeError> {
    check_params(chi, gamma)?;
    let f = CeTerms::new(table).combined(chi);
    let half = f.len() / 2;
    let mut p = Vec::with_capacity(f.len());
    for (slot, fj) in f.iter().enumerate() {
        let offset = if slot < half { 1.0 } else { 0.0 };
        let value = gamma * fj + offset;
        if !(-P_TOLERANCE..=1.0 + P_TOLERANCE).contains(&value) {
            return Err(CeError::InfeasiblePoint {
                index: slot + 1,
                value,
            });
        }
        p.push(value.clamp(0.0, 1.0));
    }
    Ok(CeStrategy { p, chi, gamma })
}

/// A closed range of admissible `γ` on one side of zero. Zero itself is
/// never admissible, so an interval touching zero is open there. Membership
/// allows the same relative slack as the `p_j` range check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl GammaInterval {
    pub fn contains(&self, gamma: f64) -> bool {
        let slack = 1.0 + P_TOLERANCE;
        gamma != 0.0 && self.lo * slack <= gamma && gamma <= self.hi * slack
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_positive(&self) -> bool {
        self.hi > 0.0
    }
}

/// Where the CE strategy exists for one `χ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub chi: f64,
    pub chi_admissible: bool,
    /// Positive interval first when both exist.
    pub gamma_intervals: Vec<GammaInterval>,
    /// Outcomes where `|A_j − χ B_j|` is largest; they fix the interval ends.
    pub binding_indices: Vec<usize>,
    /// Smallest `χ ≥ 1` for which a positive `γ` exists, if any.
    pub min_admissible_chi: Option<f64>,
}

impl FeasibilityReport {
    pub fn contains(&self, gamma: f64) -> bool {
        self.gamma_intervals.iter().any(|iv| iv.contains(gamma))
    }

    pub fn positive_interval(&self) -> Option<GammaInterval> {
        self.gamma_intervals.iter().copied().find(GammaInterval::is_positive)
    }

    /// Midpoint of the positive interval, falling back to the negative one.
    pub fn midpoint_gamma(&self) -> Option<f64> {
        self.positive_interval()
            .or_else(|| self.gamma_intervals.first().copied())
            .map(|iv| iv.midpoint())
    }
}

/// Sign pattern check for one side of zero. `positive` selects γ > 0.
fn signs_hold(f: &[f64], positive: bool, slack: f64) -> bool {
    let half = f.len() / 2;
    f.iter().enumerate().all(|(slot, &fj)| {
        let want_nonpositive = (slot < half) == positive;
        if want_nonpositive {
            fj <= slack
        } else {
            fj >= -slack
        }
    })
}

pub fn feasible_region(table: &UtilityTable, chi: f64) -> FeasibilityReport {
    let terms = CeTerms::new(table);
    let f = terms.combined(chi);
    let max_abs = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let binding_indices = if max_abs > 0.0 {
        f.iter()
            .enumerate()
            .filter(|(_, v)| v.abs() == max_abs)
            .map(|(slot, _)| slot + 1)
            .collect()
    } else {
        Vec::new()
    };
    let reach = if max_abs > 0.0 { 1.0 / max_abs } else { f64::INFINITY };
    let slack = 0.5 * P_TOLERANCE * max_abs;

    let mut gamma_intervals = Vec::new();
    if chi >= 1.0 && chi.is_finite() {
        if signs_hold(&f, true, slack) {
            gamma_intervals.push(GammaInterval { lo: 0.0, hi: reach });
        }
        if signs_hold(&f, false, slack) {
            gamma_intervals.push(GammaInterval { lo: -reach, hi: 0.0 });
        }
    }
    FeasibilityReport {
        chi,
        chi_admissible: !gamma_intervals.is_empty(),
        gamma_intervals,
        binding_indices,
        min_admissible_chi: admissible_chi_range(&terms).map(|(lo, _)| lo),
    }
}

/// Range of `χ ≥ 1` satisfying the γ > 0 sign pattern, as `(lo, hi)`.
pub fn admissible_chi_range(terms: &CeTerms) -> Option<(f64, f64)> {
    let half = terms.eta() / 2;
    let (mut lo, mut hi) = (1.0f64, f64::INFINITY);
    for (slot, (&a, &b)) in terms.a.iter().zip(&terms.b).enumerate() {
        // Server-cooperating outcomes need a − χ b ≤ 0, the rest a − χ b ≥ 0.
        let (a, b) = if slot < half { (-a, -b) } else { (a, b) };
        // a − χ b ≥ 0
        if b > 0.0 {
            hi = hi.min(a / b);
        } else if b < 0.0 {
            lo = lo.max(a / b);
        } else if a < 0.0 {
            return None;
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// How the other devices enter a device's conditional payoffs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DeviceSetting {
    /// All devices share strategy and utility; the surplus splits `n` ways.
    Homogeneous,
    /// The other devices' combined surplus `Δ_{−i} = χ Σ_{j≠i}(E_j − u_j^1)` is fixed.
    Heterogeneous { delta_others: f64 },
}

/// Device `i`'s expected utility given the server's and its own action
/// under a CE server. The first letter names the server's action, the
/// second the device's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalPayoffs {
    pub cc: f64,
    pub dc: f64,
    pub cd: f64,
    pub dd: f64,
}

pub fn theoretical_conditional_payoffs(
    table: &UtilityTable,
    device: usize,
    chi: f64,
    setting: DeviceSetting,
) -> ConditionalPayoffs {
    let base = table.device_base(device);
    let spread = table.server_profit_spread();
    let cost = table.server_send_cost();
    let (scale, shift) = match setting {
        DeviceSetting::Homogeneous => (1.0 / (table.n() as f64 * chi), 0.0),
        DeviceSetting::Heterogeneous { delta_others } => (1.0 / chi, delta_others),
    };
    // Server surplus E_s − u_s^1 at the four pure profiles.
    let at = |surplus: f64| scale * (surplus - shift) + base;
    ConditionalPayoffs {
        cc: at(0.0),
        dc: at(cost),
        cd: at(-spread),
        dd: at(cost - spread),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::tests::reference_config;
    use crate::game::{GameConfig, UtilityTable};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_config(rng: &mut impl Rng, n: usize) -> GameConfig {
        let mut cfg = reference_config(n);
        for d in &mut cfg.devices {
            d.alpha = rng.random_range(0.05..3.0);
            d.beta = rng.random_range(0.05..2.0);
            d.psi_hi = 2.0 - rng.random::<f64>();
            d.psi_lo = rng.random::<f64>();
            d.lambda = (1.0 - rng.random::<f64>()) / (1.0 - d.delta);
        }
        cfg
    }

    /// p-vector validity computed straight from the utility vectors.
    fn p_valid_oracle(table: &UtilityTable, chi: f64, gamma: f64) -> bool {
        let eta = table.eta();
        let us = table.server();
        (0..eta).all(|j| {
            let mut sum_dev = 0.0;
            for i in 1..=table.n() {
                sum_dev += table.device(i)[j] - table.device(i)[0];
            }
            let v = gamma * (us[j] - us[0] - chi * sum_dev) + if j < eta / 2 { 1.0 } else { 0.0 };
            (-P_TOLERANCE..=1.0 + P_TOLERANCE).contains(&v)
        })
    }

    #[test]
    fn terms_at_anchor_outcomes() {
        let cfg = reference_config(4);
        let t = UtilityTable::build(&cfg).unwrap();
        let terms = ce_terms(&t);
        let half = t.eta() / 2;
        let s = &cfg.server;
        assert_eq!((terms.a[0], terms.b[0]), (0.0, 0.0));

        let sum_psi: f64 = cfg.devices.iter().map(|d| d.alpha * (d.psi_hi - d.psi_lo)).sum();
        assert_relative_eq!(terms.a[half], s.beta * s.rho, epsilon = 1e-12);
        assert_relative_eq!(terms.b[half], -sum_psi, epsilon = 1e-12);

        let v = crate::game::check_viability(&cfg).unwrap();
        let sum_m: f64 = cfg.devices.iter().map(|d| d.beta * d.defection_income()).sum();
        assert_relative_eq!(terms.a[half - 1], s.alpha * (v.phi_min - v.phi_max), epsilon = 1e-12);
        assert_relative_eq!(terms.b[half - 1], sum_m, epsilon = 1e-12);

        for j in 0..half {
            assert!(terms.a[j] <= 0.0 && terms.b[j] >= 0.0);
        }
    }

    #[test]
    fn derive_first_entry_is_one() {
        let t = UtilityTable::build(&reference_config(3)).unwrap();
        let rep = feasible_region(&t, 1.5);
        let g = rep.midpoint_gamma().unwrap();
        let ce = derive_ce_strategy(&t, 1.5, g).unwrap();
        assert_eq!(ce.p[0], 1.0);
        assert!(ce.p.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(ce.n(), 3);
    }

    #[test]
    fn derive_errors() {
        let t = UtilityTable::build(&reference_config(3)).unwrap();
        assert_eq!(derive_ce_strategy(&t, 1.0, 0.0), Err(CeError::GammaZero));
        assert_eq!(derive_ce_strategy(&t, 0.5, 0.01), Err(CeError::ChiBelowOne(0.5)));
        let rep = feasible_region(&t, 2.0);
        let hi = rep.positive_interval().unwrap().hi;
        match derive_ce_strategy(&t, 2.0, hi * 1.01) {
            Err(CeError::InfeasiblePoint { index, .. }) => assert!(rep.binding_indices.contains(&index)),
            other => panic!("expected infeasible point, got {other:?}"),
        }
        assert!(matches!(
            derive_ce_strategy(&t, 2.0, -hi),
            Err(CeError::InfeasiblePoint { .. })
        ));
        // endpoint itself is admissible
        derive_ce_strategy(&t, 2.0, hi).unwrap();
    }

    #[test]
    fn negative_gamma_inadmissible_for_viable_config() {
        let t = UtilityTable::build(&reference_config(5)).unwrap();
        for chi in [1.0, 2.0, 3.0, 4.0] {
            let rep = feasible_region(&t, chi);
            assert!(rep.gamma_intervals.iter().all(|iv| iv.is_positive()));
        }
    }

    #[test]
    fn feasible_region_matches_grid_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut admissible = 0;
        for _ in 0..40 {
            let n = rng.random_range(1..=5);
            let cfg = random_config(&mut rng, n);
            let t = UtilityTable::build(&cfg).unwrap();
            let chi = rng.random_range(1.0..4.0);
            let rep = feasible_region(&t, chi);
            let f = ce_terms(&t).combined(chi);
            let span = 2.0 / f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let points: i64 = 4001;
            for k in 0..points {
                let gamma = span * (2 * k as i64 - (points - 1)) as f64 / (points - 1) as f64;
                if gamma == 0.0 {
                    continue;
                }
                assert_eq!(rep.contains(gamma), p_valid_oracle(&t, chi, gamma), "gamma {gamma}");
                assert_eq!(rep.contains(gamma), derive_ce_strategy(&t, chi, gamma).is_ok());
            }
            admissible += rep.chi_admissible as usize;
        }
        assert!(admissible > 0 && admissible < 40);
    }

    #[test]
    fn binding_bound_is_direct_maximum() {
        let t = UtilityTable::build(&reference_config(4)).unwrap();
        let rep = feasible_region(&t, 2.0);
        let f = ce_terms(&t).combined(2.0);
        let (arg, max) = f
            .iter()
            .enumerate()
            .map(|(j, v)| (j + 1, v.abs()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert_eq!(rep.positive_interval().unwrap().hi, 1.0 / max);
        assert_eq!(rep.binding_indices, vec![arg]);
    }

    #[test]
    fn min_admissible_chi_is_sharp() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..200 {
            let cfg = random_config(&mut rng, 3);
            let t = UtilityTable::build(&cfg).unwrap();
            let Some((lo, hi)) = admissible_chi_range(&ce_terms(&t)) else {
                assert!(!feasible_region(&t, 1.0).chi_admissible);
                continue;
            };
            assert!(feasible_region(&t, lo).chi_admissible);
            if hi.is_finite() {
                assert!(!feasible_region(&t, hi * (1.0 + 1e-6)).chi_admissible);
            }
            if lo > 1.0 {
                checked += 1;
                assert!(!feasible_region(&t, lo * (1.0 - 1e-6)).chi_admissible);
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn rescaling_utilities_rescales_gamma() {
        let t = UtilityTable::build(&reference_config(3)).unwrap();
        let c = 3.7;
        let scaled = t.scaled(c);
        let rep = feasible_region(&t, 1.3);
        let rep_s = feasible_region(&scaled, 1.3);
        let hi = rep.positive_interval().unwrap().hi;
        assert_relative_eq!(rep_s.positive_interval().unwrap().hi, hi / c, max_relative = 1e-12);
        let g = rep.midpoint_gamma().unwrap();
        let p = derive_ce_strategy(&t, 1.3, g).unwrap().p;
        let ps = derive_ce_strategy(&scaled, 1.3, g / c).unwrap().p;
        for (a, b) in p.iter().zip(&ps) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn conditional_payoffs_reference() {
        let cfg = reference_config(8);
        let t = UtilityTable::build(&cfg).unwrap();
        let e = theoretical_conditional_payoffs(&t, 1, 1.0, DeviceSetting::Homogeneous);
        assert_eq!(e.cc, t.device_base(1));
        assert_relative_eq!(e.dc - e.cc, 2.0 * 8.0 / 8.0, epsilon = 1e-12);
        assert!(e.cc - e.cd > 0.0);
        assert_relative_eq!(e.cc - e.cd, t.server_profit_spread() / 8.0, epsilon = 1e-12);
        assert!(e.dc > e.cc && e.dd > e.cd);
    }

    #[test]
    fn heterogeneous_reduces_to_homogeneous_for_single_device() {
        let t = UtilityTable::build(&reference_config(1)).unwrap();
        for chi in [1.0, 2.5] {
            let hom = theoretical_conditional_payoffs(&t, 1, chi, DeviceSetting::Homogeneous);
            let het = theoretical_conditional_payoffs(
                &t,
                1,
                chi,
                DeviceSetting::Heterogeneous { delta_others: 0.0 },
            );
            assert_eq!(hom, het);
        }
    }

    #[test]
    fn heterogeneous_shift() {
        let t = UtilityTable::build(&reference_config(3)).unwrap();
        let d = 0.7;
        let zero = theoretical_conditional_payoffs(&t, 2, 2.0, DeviceSetting::Heterogeneous { delta_others: 0.0 });
        let het = theoretical_conditional_payoffs(&t, 2, 2.0, DeviceSetting::Heterogeneous { delta_others: d });
        for (a, b) in [(zero.cc, het.cc), (zero.dc, het.dc), (zero.cd, het.cd), (zero.dd, het.dd)] {
            assert_relative_eq!(a - b, d / 2.0, epsilon = 1e-12);
        }
    }
}
