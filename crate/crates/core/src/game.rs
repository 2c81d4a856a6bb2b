//! The federated edge learning game: players, joint outcomes and utilities.
//!
//! One server plays against `n` devices. Every player picks [`Action::Cooperate`]
//! or [`Action::Defect`] each round, so a round ends in one of `η = 2^(n+1)`
//! joint outcomes. Outcomes are numbered `1..=η` with the server's action as the
//! most significant bit, device 1 next and device `n` least significant, and
//! cooperation encoded as bit 0. This puts all-cooperation at `g_1`, the server
//! cooperating against all-defecting devices at `g_{η/2}`, the server defecting
//! against all-cooperating devices at `g_{η/2+1}` and all-defection at `g_η`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported number of devices (`η = 8192`).
pub const MAX_DEVICES: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("expected {expected} device actions, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("outcome index {index} outside 1..={eta}")]
    IndexOutOfRange { index: usize, eta: usize },
    #[error("device index {index} outside 1..={n}")]
    DeviceOutOfRange { index: usize, n: usize },
    #[error("{n} devices exceeds the cap of {cap}")]
    TooManyDevices { n: usize, cap: usize },
    #[error("effective training data size is zero with a positive error exponent")]
    DegenerateError,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A single player's move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Cooperate,
    Defect,
}

impl Action {
    #[inline]
    pub fn bit(self) -> usize {
        match self {
            Action::Cooperate => 0,
            Action::Defect => 1,
        }
    }

    #[inline]
    pub fn from_bit(bit: usize) -> Self {
        if bit & 1 == 0 {
            Action::Cooperate
        } else {
            Action::Defect
        }
    }

    pub fn is_cooperate(self) -> bool {
        self == Action::Cooperate
    }

    pub fn flip(self) -> Self {
        match self {
            Action::Cooperate => Action::Defect,
            Action::Defect => Action::Cooperate,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Action::Cooperate => 'C',
            Action::Defect => 'D',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Per-device parameters of the device utility `α ψ(x) + β m(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub alpha: f64,
    pub beta: f64,
    /// Profit when the server returns the trained model.
    pub psi_hi: f64,
    /// Profit when the server withholds it.
    pub psi_lo: f64,
    pub lambda: f64,
    /// Fraction of the local dataset used when defecting.
    pub delta: f64,
    pub data_size: f64,
}

impl DeviceParams {
    /// Extra income from defecting, `λ (1 − δ)`.
    pub fn defection_income(&self) -> f64 {
        self.lambda * (1.0 - self.delta)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |msg: &str| Err(GameError::InvalidParameter(msg.to_string()));
        let finite = [
            self.alpha,
            self.beta,
            self.psi_hi,
            self.psi_lo,
            self.lambda,
            self.delta,
            self.data_size,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return bad("device parameters must be finite");
        }
        if self.alpha <= 0.0 || self.beta <= 0.0 || self.lambda <= 0.0 {
            return bad("device alpha, beta and lambda must be positive");
        }
        if self.psi_hi <= self.psi_lo {
            return bad("device psi_hi must exceed psi_lo");
        }
        if !(0.0..1.0).contains(&self.delta) {
            return bad("device delta must lie in [0, 1)");
        }
        if self.data_size <= 0.0 {
            return bad("device data_size must be positive");
        }
        Ok(())
    }
}

/// Server-side parameters: utility scales, total sending cost and the
/// profit/error curve constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerParams {
    pub alpha: f64,
    pub beta: f64,
    /// Total cost of returning the model to every device.
    pub rho: f64,
    pub w: f64,
    pub r: f64,
    pub t: f64,
    pub k: f64,
    pub a: f64,
}

impl ServerParams {
    pub fn validate(&self) -> Result<(), GameError> {
        let all = [
            self.alpha, self.beta, self.rho, self.w, self.r, self.t, self.k, self.a,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(GameError::InvalidParameter(
                "server parameters must be finite".into(),
            ));
        }
        if self.alpha <= 0.0 || self.beta <= 0.0 || self.rho <= 0.0 || self.w <= 0.0 || self.r <= 0.0
        {
            return Err(GameError::InvalidParameter(
                "server alpha, beta, rho, w and r must be positive".into(),
            ));
        }
        if self.k < 0.0 || self.a < 0.0 {
            return Err(GameError::InvalidParameter(
                "server k and a must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Full parameterisation of one game instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GameConfig {
    pub server: ServerParams,
    pub devices: Vec<DeviceParams>,
}

impl GameConfig {
    pub fn new(server: ServerParams, devices: Vec<DeviceParams>) -> Result<Self, GameError> {
        let cfg = GameConfig { server, devices };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        if self.devices.is_empty() {
            return Err(GameError::InvalidParameter("at least one device is required".into()));
        }
        if self.devices.len() > MAX_DEVICES {
            return Err(GameError::TooManyDevices {
                n: self.devices.len(),
                cap: MAX_DEVICES,
            });
        }
        self.server.validate()?;
        self.devices.iter().try_for_each(DeviceParams::validate)
    }

    pub fn n(&self) -> usize {
        self.devices.len()
    }

    /// Number of joint outcomes, `2^(n+1)`.
    pub fn eta(&self) -> usize {
        1 << (self.n() + 1)
    }

    fn device(&self, i: usize) -> Result<&DeviceParams, GameError> {
        if i == 0 || i > self.n() {
            return Err(GameError::DeviceOutOfRange { index: i, n: self.n() });
        }
        Ok(&self.devices[i - 1])
    }

    fn check_len(&self, actions: &[Action]) -> Result<(), GameError> {
        if actions.len() != self.n() {
            return Err(GameError::LengthMismatch {
                expected: self.n(),
                got: actions.len(),
            });
        }
        Ok(())
    }
}

/// A joint action profile `g_j`, stored by its 1-based index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Outcome {
    index: usize,
    n: usize,
}

impl Outcome {
    pub fn encode(server: Action, devices: &[Action], n: usize) -> Result<Self, GameError> {
        if devices.len() != n {
            return Err(GameError::LengthMismatch {
                expected: n,
                got: devices.len(),
            });
        }
        let mut code = server.bit();
        for a in devices {
            code = (code << 1) | a.bit();
        }
        Ok(Outcome { index: code + 1, n })
    }

    pub fn from_index(index: usize, n: usize) -> Result<Self, GameError> {
        let eta = 1usize << (n + 1);
        if index == 0 || index > eta {
            return Err(GameError::IndexOutOfRange { index, eta });
        }
        Ok(Outcome { index, n })
    }

    /// Outcome from a 0-based slot in an `η`-vector.
    pub(crate) fn from_slot(slot: usize, n: usize) -> Self {
        debug_assert!(slot < 1 << (n + 1));
        Outcome { index: slot + 1, n }
    }

    pub fn all_cooperate(n: usize) -> Self {
        Outcome { index: 1, n }
    }

    pub fn all_defect(n: usize) -> Self {
        Outcome { index: 1 << (n + 1), n }
    }

    /// 1-based index `j`.
    pub fn index(self) -> usize {
        self.index
    }

    /// 0-based position in an `η`-vector.
    pub fn slot(self) -> usize {
        self.index - 1
    }

    pub fn n(self) -> usize {
        self.n
    }

    pub fn server_action(self) -> Action {
        Action::from_bit(self.slot() >> self.n)
    }

    /// Action of device `i` (1-based).
    pub fn device_action(self, i: usize) -> Action {
        debug_assert!(i >= 1 && i <= self.n);
        Action::from_bit(self.slot() >> (self.n - i))
    }

    pub fn device_actions(self) -> Vec<Action> {
        (1..=self.n).map(|i| self.device_action(i)).collect()
    }

    pub fn decode(self) -> (Action, Vec<Action>) {
        (self.server_action(), self.device_actions())
    }

    /// Bitmask of defecting devices, device `n` in bit 0.
    pub fn defector_mask(self) -> usize {
        self.slot() & ((1 << self.n) - 1)
    }

    /// Same device profile with the server's action flipped.
    pub fn with_server_flipped(self) -> Self {
        Outcome {
            index: (self.slot() ^ (1 << self.n)) + 1,
            n: self.n,
        }
    }

    /// Same profile with device `i`'s action flipped.
    pub fn with_device_flipped(self, i: usize) -> Self {
        Outcome {
            index: (self.slot() ^ (1 << (self.n - i))) + 1,
            n: self.n,
        }
    }

    pub fn label(self) -> String {
        let (x, ys) = self.decode();
        std::iter::once(x).chain(ys).map(Action::letter).collect()
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{}({})", self.index, self.label())
    }
}

pub fn encode_outcome(server: Action, devices: &[Action], cfg: &GameConfig) -> Result<Outcome, GameError> {
    Outcome::encode(server, devices, cfg.n())
}

pub fn decode_outcome(j: usize, cfg: &GameConfig) -> Result<(Action, Vec<Action>), GameError> {
    Ok(Outcome::from_index(j, cfg.n())?.decode())
}

/// Server profit as a function of the devices' actions.
///
/// Implementations must be maximal at all-cooperation and minimal at
/// all-defection for the strategy analysis to carry over.
pub trait ProfitModel: Send + Sync {
    fn profit(&self, cfg: &GameConfig, devices: &[Action]) -> Result<f64, GameError>;
}

/// Logistic profit over a power-law model error:
/// `φ = w / (1 + exp(r ε − t))`, `ε = k (Σ_C F_i + Σ_D δ_i F_i)^(−a)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticProfit;

impl ProfitModel for LogisticProfit {
    fn profit(&self, cfg: &GameConfig, devices: &[Action]) -> Result<f64, GameError> {
        server_profit(devices, cfg)
    }
}

pub fn model_error(devices: &[Action], cfg: &GameConfig) -> Result<f64, GameError> {
    cfg.check_len(devices)?;
    let s = &cfg.server;
    if s.k == 0.0 {
        return Ok(0.0);
    }
    let effective: f64 = cfg
        .devices
        .iter()
        .zip(devices)
        .map(|(d, a)| match a {
            Action::Cooperate => d.data_size,
            Action::Defect => d.delta * d.data_size,
        })
        .sum();
    if effective <= 0.0 {
        if s.a > 0.0 {
            return Err(GameError::DegenerateError);
        }
        return Ok(s.k);
    }
    Ok(s.k * effective.powf(-s.a))
}

pub fn server_profit(devices: &[Action], cfg: &GameConfig) -> Result<f64, GameError> {
    let eps = model_error(devices, cfg)?;
    let s = &cfg.server;
    Ok(s.w / (1.0 + (s.r * eps - s.t).exp()))
}

/// Device utility `α_i ψ_i(x) + β_i m_i(y_i)`, device index 1-based.
pub fn device_utility(i: usize, server: Action, own: Action, cfg: &GameConfig) -> Result<f64, GameError> {
    let d = cfg.device(i)?;
    let psi = match server {
        Action::Cooperate => d.psi_hi,
        Action::Defect => d.psi_lo,
    };
    let extra = match own {
        Action::Cooperate => 0.0,
        Action::Defect => d.defection_income(),
    };
    Ok(d.alpha * psi + d.beta * extra)
}

/// Server utility `α_s φ(y) − β_s Σ b_i(x)` with `b_i(C) = ρ/n`, `b_i(D) = 0`.
pub fn server_utility(server: Action, devices: &[Action], cfg: &GameConfig) -> Result<f64, GameError> {
    server_utility_with(&LogisticProfit, server, devices, cfg)
}

pub fn server_utility_with(
    model: &dyn ProfitModel,
    server: Action,
    devices: &[Action],
    cfg: &GameConfig,
) -> Result<f64, GameError> {
    let s = &cfg.server;
    let phi = model.profit(cfg, devices)?;
    let cost = match server {
        Action::Cooperate => s.rho,
        Action::Defect => 0.0,
    };
    Ok(s.alpha * phi - s.beta * cost)
}

/// Utility vectors of every player over `g_1..g_η`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    n: usize,
    server: Vec<f64>,
    devices: Vec<Vec<f64>>,
}

impl UtilityTable {
    pub fn build(cfg: &GameConfig) -> Result<Self, GameError> {
        Self::build_with(cfg, &LogisticProfit)
    }

    pub fn build_with(cfg: &GameConfig, model: &dyn ProfitModel) -> Result<Self, GameError> {
        let n = cfg.n();
        if n > MAX_DEVICES {
            return Err(GameError::TooManyDevices { n, cap: MAX_DEVICES });
        }
        let eta = cfg.eta();
        let half = eta / 2;
        // φ depends only on the device profile: evaluate each profile once.
        let profits = (0..half)
            .map(|slot| model.profit(cfg, &Outcome::from_slot(slot, n).device_actions()))
            .collect::<Result<Vec<_>, _>>()?;
        let s = &cfg.server;
        let mut server = Vec::with_capacity(eta);
        let mut devices = vec![Vec::with_capacity(eta); n];
        for slot in 0..eta {
            let g = Outcome::from_slot(slot, n);
            let x = g.server_action();
            let cost = if x.is_cooperate() { s.rho } else { 0.0 };
            server.push(s.alpha * profits[slot % half] - s.beta * cost);
            for (i, col) in devices.iter_mut().enumerate() {
                col.push(device_utility(i + 1, x, g.device_action(i + 1), cfg)?);
            }
        }
        Ok(UtilityTable { n, server, devices })
    }

    /// Assemble a table from raw utility vectors in outcome order.
    pub fn from_parts(server: Vec<f64>, devices: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let n = devices.len();
        if n == 0 || n > MAX_DEVICES {
            return Err(GameError::TooManyDevices { n, cap: MAX_DEVICES });
        }
        let eta = 1usize << (n + 1);
        if server.len() != eta {
            return Err(GameError::LengthMismatch { expected: eta, got: server.len() });
        }
        if let Some(d) = devices.iter().find(|d| d.len() != eta) {
            return Err(GameError::LengthMismatch { expected: eta, got: d.len() });
        }
        Ok(UtilityTable { n, server, devices })
    }

    /// Every utility multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        UtilityTable {
            n: self.n,
            server: self.server.iter().map(|u| u * c).collect(),
            devices: self
                .devices
                .iter()
                .map(|d| d.iter().map(|u| u * c).collect())
                .collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn eta(&self) -> usize {
        self.server.len()
    }

    /// `u_s` in outcome order.
    pub fn server(&self) -> &[f64] {
        &self.server
    }

    /// `u_i` in outcome order, device index 1-based.
    pub fn device(&self, i: usize) -> &[f64] {
        &self.devices[i - 1]
    }

    pub fn devices(&self) -> &[Vec<f64>] {
        &self.devices
    }

    pub fn server_at(&self, g: Outcome) -> f64 {
        self.server[g.slot()]
    }

    pub fn device_at(&self, i: usize, g: Outcome) -> f64 {
        self.devices[i - 1][g.slot()]
    }

    /// Server utility at all-cooperation, `u_s^1`.
    pub fn server_base(&self) -> f64 {
        self.server[0]
    }

    /// Device utility at all-cooperation, `u_i^1`.
    pub fn device_base(&self, i: usize) -> f64 {
        self.devices[i - 1][0]
    }

    /// `α_s φ̄ − α_s φ̲`, read off the table.
    pub fn server_profit_spread(&self) -> f64 {
        let half = self.eta() / 2;
        self.server[half] - self.server[self.eta() - 1]
    }

    /// `β_s ρ`, read off the table.
    pub fn server_send_cost(&self) -> f64 {
        self.server[self.eta() / 2] - self.server[0]
    }
}

/// A configuration bundled with its utility table.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    pub config: GameConfig,
    pub table: UtilityTable,
}

impl Game {
    pub fn new(config: GameConfig) -> Result<Self, GameError> {
        config.validate()?;
        let table = UtilityTable::build(&config)?;
        Ok(Game { config, table })
    }

    pub fn n(&self) -> usize {
        self.config.n()
    }
}

/// Outcome of the per-player participation check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViabilityReport {
    pub server: bool,
    pub devices: Vec<bool>,
    pub phi_max: f64,
    pub phi_min: f64,
}

impl ViabilityReport {
    pub fn all_pass(&self) -> bool {
        self.server && self.devices.iter().all(|&d| d)
    }
}

/// Every player must strictly prefer all-cooperation to all-defection.
pub fn check_viability(cfg: &GameConfig) -> Result<ViabilityReport, GameError> {
    let n = cfg.n();
    let phi_max = server_profit(&vec![Action::Cooperate; n], cfg)?;
    let phi_min = server_profit(&vec![Action::Defect; n], cfg)?;
    let s = &cfg.server;
    let server = s.alpha * (phi_max - phi_min) > s.beta * s.rho;
    let devices = cfg
        .devices
        .iter()
        .map(|d| d.alpha * (d.psi_hi - d.psi_lo) > d.beta * d.defection_income())
        .collect();
    Ok(ViabilityReport {
        server,
        devices,
        phi_max,
        phi_min,
    })
}

/// True iff every player strictly gains by switching C→D against every
/// profile of the other players' actions.
pub fn verify_defection_dominance(cfg: &GameConfig) -> Result<bool, GameError> {
    let table = UtilityTable::build(cfg)?;
    Ok(defection_dominates(&table))
}

pub(crate) fn defection_dominates(table: &UtilityTable) -> bool {
    let n = table.n();
    for slot in 0..table.eta() {
        let g = Outcome::from_slot(slot, n);
        if g.server_action().is_cooperate() && !(table.server_at(g.with_server_flipped()) > table.server_at(g)) {
            return false;
        }
        for i in 1..=n {
            if g.device_action(i).is_cooperate()
                && !(table.device_at(i, g.with_device_flipped(i)) > table.device_at(i, g))
            {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use Action::{Cooperate as C, Defect as D};

    /// Server block and device data constants of the evaluation setup, with
    /// devices given fixed mid-range scales.
    /// Server block of the evaluation setting with the total data volume of
    /// eight 750-sample devices split evenly, so every n has the same profit range.
    pub(crate) fn reference_config(n: usize) -> GameConfig {
        let server = ServerParams {
            alpha: 5.0,
            beta: 2.0,
            rho: 8.0,
            w: 10.0,
            r: 10.0,
            t: 5.0,
            k: 13.2,
            a: 0.7,
        };
        let devices = (0..n)
            .map(|i| DeviceParams {
                alpha: 2.8 + 0.02 * i as f64,
                beta: 1.0,
                psi_hi: 1.9,
                psi_lo: 0.4,
                lambda: 0.5 / (1.0 - 0.018),
                delta: 0.018,
                data_size: 6000.0 / n as f64,
            })
            .collect();
        GameConfig::new(server, devices).unwrap()
    }

    #[test]
    fn encode_anchor_outcomes() {
        for n in 1..=5 {
            let eta = 1 << (n + 1);
            assert_eq!(Outcome::encode(C, &vec![C; n], n).unwrap().index(), 1);
            assert_eq!(Outcome::encode(C, &vec![D; n], n).unwrap().index(), eta / 2);
            assert_eq!(Outcome::encode(D, &vec![C; n], n).unwrap().index(), eta / 2 + 1);
            assert_eq!(Outcome::encode(D, &vec![D; n], n).unwrap().index(), eta);
        }
        // g_2 is C C..C D: the last device defects.
        assert_eq!(Outcome::encode(C, &[C, C, D], 3).unwrap().index(), 2);
    }

    #[test]
    fn encode_decode_bijection_exhaustive() {
        for n in 1..=MAX_DEVICES {
            let eta = 1usize << (n + 1);
            let step = if n > 8 { 7 } else { 1 };
            for j in (1..=eta).step_by(step) {
                let (x, ys) = Outcome::from_index(j, n).unwrap().decode();
                assert_eq!(Outcome::encode(x, &ys, n).unwrap().index(), j);
            }
        }
        // full sweep at the cap
        let n = MAX_DEVICES;
        let mut seen = vec![false; 1 << (n + 1)];
        for j in 1..=(1 << (n + 1)) {
            let (x, ys) = Outcome::from_index(j, n).unwrap().decode();
            let k = Outcome::encode(x, &ys, n).unwrap().index();
            assert!(!seen[k - 1]);
            seen[k - 1] = true;
        }
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            Outcome::from_index(0, 2),
            Err(GameError::IndexOutOfRange { index: 0, eta: 8 })
        );
        assert!(Outcome::from_index(9, 2).is_err());
        let cfg = reference_config(2);
        assert!(encode_outcome(C, &[C], &cfg).is_err());
        assert_eq!(decode_outcome(8, &cfg).unwrap(), (D, vec![D, D]));
        assert_eq!(decode_outcome(1, &cfg).unwrap(), (C, vec![C, C]));
    }

    #[test]
    fn model_error_reference_values() {
        let cfg = reference_config(8);
        let all_c = model_error(&[C; 8], &cfg).unwrap();
        let all_d = model_error(&[D; 8], &cfg).unwrap();
        // 13.2 * 6000^-0.7 and 13.2 * 108^-0.7
        assert_relative_eq!(all_c, 0.029913, epsilon = 1e-5);
        assert_relative_eq!(all_d, 0.49795, epsilon = 1e-4);

        let mut zero_k = cfg.clone();
        zero_k.server.k = 0.0;
        assert_eq!(model_error(&[D; 8], &zero_k).unwrap(), 0.0);
    }

    #[test]
    fn model_error_degenerate() {
        let mut cfg = reference_config(2);
        for d in &mut cfg.devices {
            d.delta = 0.0;
        }
        assert_eq!(model_error(&[D, D], &cfg), Err(GameError::DegenerateError));
        assert!(model_error(&[C, D], &cfg).is_ok());
    }

    #[test]
    fn server_profit_reference_values() {
        let cfg = reference_config(8);
        let hi = server_profit(&[C; 8], &cfg).unwrap();
        let lo = server_profit(&[D; 8], &cfg).unwrap();
        assert_relative_eq!(hi, 9.9099, epsilon = 1e-3);
        assert_relative_eq!(lo, 5.0512, epsilon = 1e-3);
        assert!(hi < cfg.server.w && lo > 0.0);
    }

    #[test]
    fn device_utility_cases() {
        let mut cfg = reference_config(1);
        cfg.devices[0] = DeviceParams {
            alpha: 1.0,
            beta: 1.0,
            psi_hi: 2.0,
            psi_lo: 0.5,
            lambda: 1.0,
            delta: 0.5,
            data_size: 10.0,
        };
        assert_eq!(device_utility(1, C, C, &cfg).unwrap(), 2.0);
        assert_eq!(device_utility(1, C, D, &cfg).unwrap(), 2.5);
        assert_eq!(device_utility(1, D, D, &cfg).unwrap(), 0.5 + 0.5);
        assert!(device_utility(2, C, C, &cfg).is_err());
    }

    #[test]
    fn server_utility_cases() {
        let cfg = reference_config(8);
        let hi = server_profit(&[C; 8], &cfg).unwrap();
        let lo = server_profit(&[D; 8], &cfg).unwrap();
        assert_relative_eq!(server_utility(C, &[C; 8], &cfg).unwrap(), 5.0 * hi - 16.0);
        assert_relative_eq!(server_utility(C, &[C; 8], &cfg).unwrap(), 33.55, epsilon = 0.01);
        assert_relative_eq!(server_utility(D, &[D; 8], &cfg).unwrap(), 5.0 * lo);
        assert_relative_eq!(server_utility(D, &[C; 8], &cfg).unwrap(), 5.0 * hi);
    }

    #[test]
    fn table_single_device_by_hand() {
        let cfg = reference_config(1);
        let t = UtilityTable::build(&cfg).unwrap();
        let d = &cfg.devices[0];
        let s = &cfg.server;
        let phi = |a: Action| {
            let eps = s.k * (if a == C { d.data_size } else { d.delta * d.data_size }).powf(-s.a);
            s.w / (1.0 + (s.r * eps - s.t).exp())
        };
        let m = d.lambda * (1.0 - d.delta);
        let expect_s = [
            s.alpha * phi(C) - s.beta * s.rho,
            s.alpha * phi(D) - s.beta * s.rho,
            s.alpha * phi(C),
            s.alpha * phi(D),
        ];
        let expect_d = [
            d.alpha * d.psi_hi,
            d.alpha * d.psi_hi + d.beta * m,
            d.alpha * d.psi_lo,
            d.alpha * d.psi_lo + d.beta * m,
        ];
        for j in 0..4 {
            assert_relative_eq!(t.server()[j], expect_s[j], epsilon = 1e-12);
            assert_relative_eq!(t.device(1)[j], expect_d[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn table_server_flip_differences() {
        let cfg = reference_config(4);
        let t = UtilityTable::build(&cfg).unwrap();
        let half = t.eta() / 2;
        let s = &cfg.server;
        for j in 0..half {
            assert_relative_eq!(t.server()[j + half] - t.server()[j], s.beta * s.rho, epsilon = 1e-12);
            for i in 1..=4 {
                let d = &cfg.devices[i - 1];
                assert_relative_eq!(
                    t.device(i)[j + half] - t.device(i)[j],
                    -d.alpha * (d.psi_hi - d.psi_lo),
                    epsilon = 1e-12
                );
            }
        }
        assert_relative_eq!(t.server_send_cost(), s.beta * s.rho, epsilon = 1e-12);
    }

    #[test]
    fn table_cap() {
        let cfg = reference_config(MAX_DEVICES);
        assert_eq!(UtilityTable::build(&cfg).unwrap().eta(), 8192);
        let mut over = cfg.clone();
        over.devices.push(over.devices[0].clone());
        assert_eq!(
            UtilityTable::build(&over),
            Err(GameError::TooManyDevices { n: 13, cap: 12 })
        );
    }

    #[test]
    fn viability_reference_server() {
        let cfg = reference_config(8);
        let v = check_viability(&cfg).unwrap();
        assert!(v.server);
        assert_relative_eq!(5.0 * (v.phi_max - v.phi_min), 24.29, epsilon = 0.01);
        assert!(v.all_pass());
    }

    #[test]
    fn viability_boundary_is_strict() {
        let mut cfg = reference_config(2);
        let v = check_viability(&cfg).unwrap();
        cfg.server.beta = 1.0;
        cfg.server.rho = cfg.server.alpha * (v.phi_max - v.phi_min);
        assert!(!check_viability(&cfg).unwrap().server);
    }

    #[test]
    fn viability_zero_defection_income_device() {
        let mut cfg = reference_config(2);
        cfg.devices[0].lambda = 0.0;
        assert!(check_viability(&cfg).unwrap().devices[0]);
    }

    #[test]
    fn dominance_reference_and_degenerate() {
        let cfg = reference_config(6);
        assert!(verify_defection_dominance(&cfg).unwrap());

        let t = UtilityTable::build(&cfg).unwrap();
        // zero sending cost: the server is indifferent
        let mut flat = t.clone();
        let half = flat.eta() / 2;
        for j in 0..half {
            flat.server[j] = flat.server[j + half];
        }
        assert!(!defection_dominates(&flat));

        // zero defection income for one device
        let mut flat = t;
        for slot in 0..flat.eta() {
            let g = Outcome::from_slot(slot, 6);
            if g.device_action(3) == D {
                flat.devices[2][slot] = flat.devices[2][g.with_device_flipped(3).slot()];
            }
        }
        assert!(!defection_dominates(&flat));
    }

    #[test]
    fn config_validation() {
        let mut cfg = reference_config(2);
        cfg.devices[0].psi_lo = cfg.devices[0].psi_hi;
        assert!(cfg.validate().is_err());
        let mut cfg = reference_config(2);
        cfg.devices[1].delta = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = reference_config(2);
        cfg.server.rho = 0.0;
        assert!(cfg.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn actions(n: usize) -> impl Strategy<Value = Vec<Action>> {
            prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { D } else { C }), n)
        }

        proptest! {
            #[test]
            fn flipping_to_cooperate_never_raises_error(acts in actions(8), i in 0usize..8) {
                let cfg = reference_config(8);
                let mut to_c = acts.clone();
                to_c[i] = C;
                let mut to_d = acts;
                to_d[i] = D;
                prop_assert!(model_error(&to_c, &cfg).unwrap() <= model_error(&to_d, &cfg).unwrap());
                let p_c = server_profit(&to_c, &cfg).unwrap();
                let p_d = server_profit(&to_d, &cfg).unwrap();
                prop_assert!(p_c > p_d);
                prop_assert!(p_c < cfg.server.w && p_d > 0.0);
            }

            #[test]
            fn all_cooperation_beats_all_defection_when_viable(seed in 0u64..500) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut cfg = reference_config(5);
                for d in &mut cfg.devices {
                    d.alpha = rng.random_range(0.1..3.0);
                    d.beta = rng.random_range(0.1..2.0);
                    d.psi_hi = rng.random_range(1.01..2.0);
                    d.psi_lo = rng.random_range(0.0..1.0);
                }
                let v = check_viability(&cfg).unwrap();
                let t = UtilityTable::build(&cfg).unwrap();
                let eta = t.eta();
                for i in 1..=5 {
                    if v.devices[i - 1] {
                        prop_assert!(t.device(i)[0] > t.device(i)[eta - 1]);
                    }
                }
                if v.server {
                    prop_assert!(t.server()[0] > t.server()[eta - 1]);
                    // u_s^1 is the strict maximum over server-cooperating outcomes
                    prop_assert!(t.server()[1..eta / 2].iter().all(|&u| u < t.server()[0]));
                }
            }
        }
    }
}
