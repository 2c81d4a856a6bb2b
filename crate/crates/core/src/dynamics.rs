//! Round-by-round play between a server agent and evolutionary devices.
//!
//! Each round the server acts from its memory of the previous outcome, every
//! device cooperates with its current probability `q`, and afterwards each
//! device moves `q` by replicator-style reweighting
//! `q ← q W_C / (q W_C + (1 − q) W_D)`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ce::{theoretical_conditional_payoffs, CeStrategy, DeviceSetting};
use crate::game::{Action, Game, GameConfig, Outcome, UtilityTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-positive payoff for device {device}: W_C = {w_c}, W_D = {w_d}")]
    NonPositivePayoff { device: usize, w_c: f64, w_d: f64 },
    #[error("extortion payoffs need a CE server with extortion factor {chi}")]
    ModeMismatch { chi: f64 },
    #[error("invalid cooperation probability {0}")]
    InvalidProbability(f64),
    #[error("expected {expected} initial probabilities, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("simulation needs at least one round")]
    NoRounds,
    #[error("all-cooperation utility is zero, relative utility undefined")]
    ZeroBaseline,
    #[error("device index {0} out of range")]
    DeviceOutOfRange(usize),
}

/// Strategy of the server in the repeated game.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ServerAgent {
    /// Collective extortion; `prior` is the cooperation probability before
    /// any outcome has been observed.
    Ce { strategy: CeStrategy, prior: f64 },
    AllC,
    AllD,
    /// Copy the previous action of device `focal` (1-based).
    Tft { focal: usize },
    /// Keep the previous action while the server's utility reached `threshold`.
    Wsls { threshold: f64 },
}

impl ServerAgent {
    pub fn ce(strategy: CeStrategy) -> Self {
        ServerAgent::Ce { strategy, prior: 0.5 }
    }

    /// WSLS with the all-cooperation server utility as aspiration level.
    pub fn wsls(table: &UtilityTable) -> Self {
        ServerAgent::Wsls {
            threshold: table.server_base(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ServerAgent::Ce { .. } => "CE",
            ServerAgent::AllC => "ALLC",
            ServerAgent::AllD => "ALLD",
            ServerAgent::Tft { .. } => "TFT",
            ServerAgent::Wsls { .. } => "WSLS",
        }
    }

    /// Payoff model devices use against this agent by default.
    pub fn default_payoff_mode(&self) -> PayoffMode {
        match self {
            ServerAgent::Ce { strategy, .. } => PayoffMode::Extortion {
                chi: strategy.chi,
                setting: DeviceSetting::Homogeneous,
            },
            _ => PayoffMode::Immediate,
        }
    }
}

/// What the server remembers of the last round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LastRound {
    pub outcome: Outcome,
    pub server_utility: f64,
}

/// Pick the server's action. Returns the action and the cooperation
/// probability it was drawn with.
pub fn server_act<R: Rng + ?Sized>(agent: &ServerAgent, last: Option<&LastRound>, rng: &mut R) -> (Action, f64) {
    let prob = match (agent, last) {
        (ServerAgent::AllC, _) => 1.0,
        (ServerAgent::AllD, _) => 0.0,
        (ServerAgent::Ce { prior, .. }, None) => *prior,
        (ServerAgent::Ce { strategy, .. }, Some(l)) => strategy.cooperation_after(l.outcome),
        (ServerAgent::Tft { .. } | ServerAgent::Wsls { .. }, None) => 1.0,
        (ServerAgent::Tft { focal }, Some(l)) => {
            if l.outcome.device_action(*focal).is_cooperate() {
                1.0
            } else {
                0.0
            }
        }
        (ServerAgent::Wsls { threshold }, Some(l)) => {
            let prev = l.outcome.server_action();
            let next = if l.server_utility >= *threshold { prev } else { prev.flip() };
            if next.is_cooperate() {
                1.0
            } else {
                0.0
            }
        }
    };
    let action = match agent {
        ServerAgent::Ce { .. } => {
            if rng.random::<f64>() < prob {
                Action::Cooperate
            } else {
                Action::Defect
            }
        }
        _ if prob == 1.0 => Action::Cooperate,
        _ => Action::Defect,
    };
    (action, prob)
}

/// How a device values cooperation and defection for the coming update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PayoffMode {
    /// Long-run payoffs enforced by a CE server with factor `chi`.
    Extortion { chi: f64, setting: DeviceSetting },
    /// One-round expectation of the device's own utility.
    Immediate,
}

/// `(W_C, W_D)` for device `i` given the server cooperates with probability `p_hat`.
pub fn one_step_payoffs(
    cfg: &GameConfig,
    table: &UtilityTable,
    device: usize,
    p_hat: f64,
    mode: PayoffMode,
) -> Result<(f64, f64), DynamicsError> {
    if device == 0 || device > cfg.n() {
        return Err(DynamicsError::DeviceOutOfRange(device));
    }
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(DynamicsError::InvalidProbability(p_hat));
    }
    match mode {
        PayoffMode::Extortion { chi, setting } => {
            if !(chi >= 1.0) {
                return Err(DynamicsError::ModeMismatch { chi });
            }
            let e = theoretical_conditional_payoffs(table, device, chi, setting);
            Ok((
                p_hat * e.cc + (1.0 - p_hat) * e.dc,
                p_hat * e.cd + (1.0 - p_hat) * e.dd,
            ))
        }
        PayoffMode::Immediate => {
            let d = &cfg.devices[device - 1];
            let w_c = p_hat * d.alpha * d.psi_hi + (1.0 - p_hat) * d.alpha * d.psi_lo;
            Ok((w_c, w_c + d.beta * d.defection_income()))
        }
    }
}

/// One replicator step. Fixed points are exactly 0 and 1.
pub fn evolve_device(q: f64, w_c: f64, w_d: f64) -> Result<f64, DynamicsError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(DynamicsError::InvalidProbability(q));
    }
    let total = q * w_c + (1.0 - q) * w_d;
    if w_c < 0.0 || w_d < 0.0 || !(total > 0.0) {
        return Err(DynamicsError::NonPositivePayoff { device: 0, w_c, w_d });
    }
    if q == 0.0 || q == 1.0 {
        return Ok(q);
    }
    Ok((q * w_c / total).clamp(0.0, 1.0))
}

/// Check that a CE server leaves every device with four positive
/// conditional payoffs, which keeps the replicator step well defined.
pub fn check_payoff_positivity(table: &UtilityTable, chi: f64, setting: DeviceSetting) -> Result<(), DynamicsError> {
    for i in 1..=table.n() {
        let e = theoretical_conditional_payoffs(table, i, chi, setting);
        let min = e.cc.min(e.dc).min(e.cd).min(e.dd);
        if !(min > 0.0) {
            return Err(DynamicsError::NonPositivePayoff {
                device: i,
                w_c: e.cc.min(e.dc),
                w_d: e.cd.min(e.dd),
            });
        }
    }
    Ok(())
}

/// How the device learns the server's cooperation probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum CoopEstimate {
    /// The probability the server actually used this round.
    #[default]
    Exact,
    /// Laplace-smoothed frequency of server cooperation so far.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimOptions {
    pub rounds: usize,
    pub mode: PayoffMode,
    pub estimate: CoopEstimate,
    pub seed: u64,
    /// Independent RNG stream id, for replicates sharing a seed.
    pub stream: u64,
}

impl SimOptions {
    pub fn new(rounds: usize, mode: PayoffMode, seed: u64) -> Self {
        SimOptions {
            rounds,
            mode,
            estimate: CoopEstimate::Exact,
            seed,
            stream: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub t: usize,
    pub outcome: usize,
    pub server_action: Action,
    pub server_coop_prob: f64,
    pub server_utility: f64,
    pub device_utilities: Vec<f64>,
    /// Cooperation probabilities the devices played this round with.
    pub q: Vec<f64>,
    pub w_c: Vec<f64>,
    pub w_d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationTrace {
    pub n: usize,
    pub rounds: Vec<RoundRecord>,
    /// Probabilities after the last update.
    pub final_q: Vec<f64>,
}

impl SimulationTrace {
    /// `q` of device `i` per round.
    pub fn q_series(&self, i: usize) -> Vec<f64> {
        self.rounds.iter().map(|r| r.q[i - 1]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,outcome_index,server_action,server_coop_prob,u_s");
        for i in 1..=self.n {
            write!(out, ",u_{i}").unwrap();
        }
        for i in 1..=self.n {
            write!(out, ",q_{i}").unwrap();
        }
        out.push_str(",W_C_1,W_D_1\n");
        for r in &self.rounds {
            write!(
                out,
                "{},{},{},{},{}",
                r.t, r.outcome, r.server_action, r.server_coop_prob, r.server_utility
            )
            .unwrap();
            for u in &r.device_utilities {
                write!(out, ",{u}").unwrap();
            }
            for q in &r.q {
                write!(out, ",{q}").unwrap();
            }
            writeln!(out, ",{},{}", r.w_c[0], r.w_d[0]).unwrap();
        }
        out
    }
}

/// One replicate of the repeated game. Fully determined by `opts.seed` and
/// `opts.stream`.
pub fn simulate(
    game: &Game,
    agent: &ServerAgent,
    q0: &[f64],
    opts: &SimOptions,
) -> Result<SimulationTrace, DynamicsError> {
    let n = game.n();
    let (cfg, table) = (&game.config, &game.table);
    if q0.len() != n {
        return Err(DynamicsError::LengthMismatch {
            expected: n,
            got: q0.len(),
        });
    }
    if let Some(&bad) = q0.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(DynamicsError::InvalidProbability(bad));
    }
    if opts.rounds == 0 {
        return Err(DynamicsError::NoRounds);
    }
    if let PayoffMode::Extortion { chi, setting } = opts.mode {
        match agent {
            ServerAgent::Ce { strategy, .. } if strategy.chi == chi => {}
            _ => return Err(DynamicsError::ModeMismatch { chi }),
        }
        check_payoff_positivity(table, chi, setting)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(opts.stream);

    let mut q = q0.to_vec();
    let mut last: Option<LastRound> = None;
    let mut coops = 0usize;
    let mut rounds = Vec::with_capacity(opts.rounds);
    let mut devices = vec![Action::Cooperate; n];
    for t in 0..opts.rounds {
        let (x, prob) = server_act(agent, last.as_ref(), &mut rng);
        for (a, &qi) in devices.iter_mut().zip(&q) {
            *a = if rng.random::<f64>() < qi {
                Action::Cooperate
            } else {
                Action::Defect
            };
        }
        let g = Outcome::encode(x, &devices, n).expect("device count matches");
        let u_s = table.server_at(g);
        let device_utilities: Vec<f64> = (1..=n).map(|i| table.device_at(i, g)).collect();

        coops += x.is_cooperate() as usize;
        let p_hat = match opts.estimate {
            CoopEstimate::Exact => prob,
            CoopEstimate::Empirical => (coops as f64 + 1.0) / (t as f64 + 3.0),
        };
        let mut w_c = Vec::with_capacity(n);
        let mut w_d = Vec::with_capacity(n);
        let played = q.clone();
        for i in 1..=n {
            let (c, d) = one_step_payoffs(cfg, table, i, p_hat, opts.mode)?;
            q[i - 1] = evolve_device(q[i - 1], c, d).map_err(|e| match e {
                DynamicsError::NonPositivePayoff { w_c, w_d, .. } => {
                    DynamicsError::NonPositivePayoff { device: i, w_c, w_d }
                }
                other => other,
            })?;
            w_c.push(c);
            w_d.push(d);
        }
        rounds.push(RoundRecord {
            t,
            outcome: g.index(),
            server_action: x,
            server_coop_prob: prob,
            server_utility: u_s,
            device_utilities,
            q: played,
            w_c,
            w_d,
        });
        last = Some(LastRound {
            outcome: g,
            server_utility: u_s,
        });
    }
    Ok(SimulationTrace {
        n,
        rounds,
        final_q: q,
    })
}

/// Trailing moving averages of utility over all-cooperation utility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeUtility {
    pub server: Vec<f64>,
    pub devices: Vec<Vec<f64>>,
}

fn trailing_mean(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (t, x) in xs.iter().enumerate() {
        sum += x;
        if t >= window {
            sum -= xs[t - window];
        }
        out.push(sum / (t + 1).min(window) as f64);
    }
    out
}

pub fn relative_utility(
    trace: &SimulationTrace,
    table: &UtilityTable,
    window: usize,
) -> Result<RelativeUtility, DynamicsError> {
    let window = window.max(1);
    let base_s = table.server_base();
    if base_s == 0.0 {
        return Err(DynamicsError::ZeroBaseline);
    }
    let server: Vec<f64> = trace.rounds.iter().map(|r| r.server_utility / base_s).collect();
    let mut devices = Vec::with_capacity(trace.n);
    for i in 1..=trace.n {
        let base = table.device_base(i);
        if base == 0.0 {
            return Err(DynamicsError::ZeroBaseline);
        }
        let series: Vec<f64> = trace.rounds.iter().map(|r| r.device_utilities[i - 1] / base).collect();
        devices.push(trailing_mean(&series, window));
    }
    Ok(RelativeUtility {
        server: trailing_mean(&server, window),
        devices,
    })
}

/// First index at which `series` reaches `threshold`.
pub fn first_reaching(series: &[f64], threshold: f64) -> Option<usize> {
    series.iter().position(|&x| x >= threshold)
}

/// First index at which `series` drops to `threshold` or below.
pub fn first_falling(series: &[f64], threshold: f64) -> Option<usize> {
    series.iter().position(|&x| x <= threshold)
}
