//! Random game configurations from the evaluation ranges, kept only when the
//! game is viable and a positive-γ CE strategy exists for every requested χ.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ce::{feasible_region, theoretical_conditional_payoffs, DeviceSetting};
use crate::game::{check_viability, DeviceParams, GameConfig, ServerParams, UtilityTable};

use super::HarnessError;

/// Uniform range, closed unless `open_lo` excludes the lower end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub open_lo: bool,
}

impl UniformRange {
    pub const fn closed(lo: f64, hi: f64) -> Self {
        UniformRange {
            lo,
            hi,
            open_lo: false,
        }
    }

    pub const fn open_below(lo: f64, hi: f64) -> Self {
        UniformRange {
            lo,
            hi,
            open_lo: true,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let width = self.hi - self.lo;
        // random::<f64>() lies in [0, 1); flip it when the lower end is open.
        let u: f64 = rng.random();
        if self.open_lo {
            self.hi - width * u
        } else {
            self.lo + width * u
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.open_lo { x > self.lo } else { x >= self.lo };
        above && x <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSampler {
    pub n: usize,
    pub server: ServerParams,
    pub delta: f64,
    pub data_size: f64,
    pub alpha: UniformRange,
    pub beta: UniformRange,
    pub psi_hi: UniformRange,
    pub psi_lo: UniformRange,
    /// Income from defecting, `m_i(D)`; `λ_i` is recovered as `m_i(D) / (1 − δ_i)`.
    pub defection_income: UniformRange,
    /// Also require all four CE conditional payoffs of every device to be
    /// positive, which the evolutionary update needs.
    pub require_positive_payoffs: bool,
    pub budget: usize,
}

impl Default for ParameterSampler {
    /// The evaluation setting: eight devices with 750 samples each.
    fn default() -> Self {
        ParameterSampler {
            n: 8,
            server: ServerParams {
                alpha: 5.0,
                beta: 2.0,
                rho: 8.0,
                w: 10.0,
                r: 10.0,
                t: 5.0,
                k: 13.2,
                a: 0.7,
            },
            delta: 0.018,
            data_size: 750.0,
            alpha: UniformRange::closed(0.0, 3.0),
            beta: UniformRange::closed(0.0, 2.0),
            psi_hi: UniformRange::open_below(1.0, 2.0),
            psi_lo: UniformRange::closed(0.0, 1.0),
            defection_income: UniformRange::open_below(0.0, 1.0),
            require_positive_payoffs: true,
            budget: 100_000,
        }
    }
}

/// A config together with how many draws were thrown away to get it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledConfig {
    pub config: GameConfig,
    pub rejections: usize,
}

impl ParameterSampler {
    fn draw_device<R: Rng + ?Sized>(&self, rng: &mut R) -> DeviceParams {
        let alpha = self.alpha.sample(rng);
        let beta = self.beta.sample(rng);
        let psi_hi = self.psi_hi.sample(rng);
        let psi_lo = self.psi_lo.sample(rng);
        let m = self.defection_income.sample(rng);
        DeviceParams {
            alpha,
            beta,
            psi_hi,
            psi_lo,
            lambda: m / (1.0 - self.delta),
            delta: self.delta,
            data_size: self.data_size,
        }
    }

    /// One config straight from the ranges, with no acceptance checks.
    pub fn draw_config<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<GameConfig, HarnessError> {
        let devices = (0..self.n).map(|_| self.draw_device(rng)).collect();
        Ok(GameConfig::new(self.server.clone(), devices)?)
    }

    /// Checks that depend on one device only. With a shared `δ` and data
    /// size the profit extremes do not depend on the draw, so `spread` is
    /// fixed per sampler.
    fn device_ok(&self, d: &DeviceParams, spread: f64, chi_min: f64) -> bool {
        if d.validate().is_err() {
            return false;
        }
        if d.alpha * (d.psi_hi - d.psi_lo) <= d.beta * d.defection_income() {
            return false;
        }
        !self.require_positive_payoffs || d.alpha * d.psi_hi > spread / (self.n as f64 * chi_min)
    }

    fn profit_spread(&self) -> Result<f64, HarnessError> {
        let template = DeviceParams {
            alpha: 1.0,
            beta: 1.0,
            psi_hi: 1.0,
            psi_lo: 0.0,
            lambda: 1.0,
            delta: self.delta,
            data_size: self.data_size,
        };
        let cfg = GameConfig::new(self.server.clone(), vec![template; self.n])?;
        let v = check_viability(&cfg)?;
        Ok(self.server.alpha * (v.phi_max - v.phi_min))
    }
}

/// Rejection-sample a configuration that is viable and admits a positive-γ
/// CE strategy for every `χ` in `chis`.
///
/// Devices are redrawn individually while they fail their own conditions;
/// since those conditions factorise over devices this yields the same
/// distribution as redrawing the whole config, only faster. Whole configs are
/// then redrawn until the joint conditions hold. Every discarded device or
/// config counts towards the budget.
pub fn sample_config<R: Rng + ?Sized>(
    sampler: &ParameterSampler,
    chis: &[f64],
    rng: &mut R,
) -> Result<SampledConfig, HarnessError> {
    if let Some(&bad) = chis.iter().find(|c| !(**c >= 1.0)) {
        return Err(HarnessError::InvalidSpec(format!("extortion factor {bad} is below 1")));
    }
    let spread = sampler.profit_spread()?;
    let chi_min = chis.iter().copied().fold(f64::INFINITY, f64::min);
    let mut rejections = 0usize;
    loop {
        let mut devices = Vec::with_capacity(sampler.n);
        while devices.len() < sampler.n {
            let d = sampler.draw_device(rng);
            if sampler.device_ok(&d, spread, chi_min) {
                devices.push(d);
            } else {
                rejections += 1;
                if rejections >= sampler.budget {
                    return Err(HarnessError::RejectionBudgetExceeded { budget: sampler.budget });
                }
            }
        }
        let cfg = GameConfig::new(sampler.server.clone(), devices)?;
        if joint_ok(&cfg, chis, sampler.require_positive_payoffs)? {
            return Ok(SampledConfig { config: cfg, rejections });
        }
        rejections += 1;
        if rejections >= sampler.budget {
            return Err(HarnessError::RejectionBudgetExceeded { budget: sampler.budget });
        }
    }
}

fn joint_ok(cfg: &GameConfig, chis: &[f64], positivity: bool) -> Result<bool, HarnessError> {
    if !check_viability(cfg)?.all_pass() {
        return Ok(false);
    }
    let table = UtilityTable::build(cfg)?;
    for &chi in chis {
        if feasible_region(&table, chi).positive_interval().is_none() {
            return Ok(false);
        }
        if positivity {
            for i in 1..=cfg.n() {
                let e = theoretical_conditional_payoffs(&table, i, chi, DeviceSetting::Homogeneous);
                if !(e.cc.min(e.dc).min(e.cd).min(e.dd) > 0.0) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}
