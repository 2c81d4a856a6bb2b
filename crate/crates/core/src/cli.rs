//! The `fel-ce` command line.
//!
//! Exit status: 0 on success, 1 when the requested strategy or game is
//! infeasible (no admissible γ, identity violated, game not viable), 2 on
//! usage, input or I/O errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ce::{ce_terms, derive_ce_strategy, feasible_region, DeviceSetting, FeasibilityReport};
use crate::config::load_config;
use crate::dynamics::{simulate, CoopEstimate, PayoffMode, ServerAgent, SimOptions};
use crate::game::{check_viability, verify_defection_dominance, Game, GameConfig, UtilityTable};
use crate::harness::{
    run_experiment, sample_config, ExperimentSpec, GammaRule, ParameterSampler, Scenario, OUT_DIR_ENV,
};
use crate::markov::{verify_ce_identity_on, DeviceStrategy, MarkovError, PERTURBATION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fel-ce", version, about = "Collective extortion in the federated edge learning game")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Game config file; a config is sampled from the evaluation ranges when absent.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Output file (or directory for `experiment`); standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derive the CE strategy vector and its feasible region.
    Derive {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        chi: f64,
        /// Defaults to the midpoint of the feasible interval.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Check the extortion identity on the stationary distribution.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        chi: f64,
        #[arg(long)]
        gamma: Option<f64>,
        /// One per device: `scalar:<q>` or `full:<q1>;<q2>;...`. Random
        /// strategies from the seed when absent.
        #[arg(long = "strategy")]
        strategies: Vec<String>,
        /// Pull 0/1 entries into [1e-9, 1 - 1e-9] so the chain is ergodic.
        #[arg(long)]
        perturb: bool,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Simulate one repeated game and print the per-round trace.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = AgentArg::Ce)]
        agent: AgentArg,
        #[arg(long, default_value_t = 1.0)]
        chi: f64,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        q0: f64,
        #[arg(long, default_value_t = 200)]
        rounds: usize,
        #[arg(long, value_enum, default_value_t = EstimateArg::Exact)]
        estimate: EstimateArg,
        /// Use the heterogeneous payoffs with this fixed offset from the other devices.
        #[arg(long)]
        delta_others: Option<f64>,
    },
    /// Run a figure scenario and write its CSVs.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_scenario)]
        scenario: Scenario,
        #[arg(long = "q0", value_delimiter = ',')]
        q0s: Vec<f64>,
        #[arg(long = "chi", value_delimiter = ',')]
        chis: Vec<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, value_enum)]
        estimate: Option<EstimateArg>,
    },
    /// Report viability and defection dominance of a game.
    Check {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    Ce,
    Allc,
    Alld,
    Tft,
    Wsls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimateArg {
    Exact,
    Empirical,
}

impl From<EstimateArg> for CoopEstimate {
    fn from(e: EstimateArg) -> Self {
        match e {
            EstimateArg::Exact => CoopEstimate::Exact,
            EstimateArg::Empirical => CoopEstimate::Empirical,
        }
    }
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse()
}

/// A failed command: exit status plus message for standard error.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn infeasible(message: impl ToString) -> Self {
        Failure {
            code: EXIT_INFEASIBLE,
            message: message.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> CmdResult {
    match command {
        Command::Derive { common, chi, gamma } => derive(&common, chi, gamma, stdout),
        Command::Verify {
            common,
            chi,
            gamma,
            strategies,
            perturb,
            tol,
        } => verify(&common, chi, gamma, &strategies, perturb, tol, stdout),
        Command::Simulate {
            common,
            agent,
            chi,
            gamma,
            q0,
            rounds,
            estimate,
            delta_others,
        } => {
            let args = SimArgs {
                agent,
                chi,
                gamma,
                q0,
                rounds,
                estimate: estimate.into(),
                delta_others,
            };
            simulate_cmd(&common, &args, stdout)
        }
        Command::Experiment {
            common,
            scenario,
            q0s,
            chis,
            gamma,
            rounds,
            replicates,
            window,
            estimate,
        } => {
            let mut spec = ExperimentSpec::new(scenario);
            spec.seed = common.seed;
            if !q0s.is_empty() {
                spec.q0s = q0s;
            }
            if !chis.is_empty() {
                spec.chis = chis;
            }
            if let Some(g) = gamma {
                spec.gamma = GammaRule::Explicit(g);
            }
            spec.rounds = rounds.unwrap_or(spec.rounds);
            spec.replicates = replicates.unwrap_or(spec.replicates);
            spec.window = window.unwrap_or(spec.window);
            if let Some(e) = estimate {
                spec.estimate = e.into();
            }
            if let Some(out) = &common.out {
                spec.out_dir = out.clone();
            }
            if let Some(path) = &common.config {
                spec.config = Some(load(path)?);
            }
            experiment(&spec, stdout)
        }
        Command::Check { common } => check(&common, stdout),
    }
}

fn load(path: &Path) -> Result<GameConfig, Failure> {
    load_config(path).map_err(Failure::usage)
}

/// The config from `--config`, or one sampled with `--seed` that admits CE
/// for every `χ` in `chis`.
fn game_for(common: &Common, chis: &[f64]) -> Result<Game, Failure> {
    let cfg = match &common.config {
        Some(path) => load(path)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
            sample_config(&ParameterSampler::default(), chis, &mut rng)
                .map_err(Failure::usage)?
                .config
        }
    };
    Game::new(cfg).map_err(Failure::usage)
}

fn emit(common: &Common, text: &str, stdout: &mut dyn Write) -> CmdResult {
    match &common.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::usage(format!("writing output: {e}"))),
    }
}

fn report_line(rep: &FeasibilityReport) -> String {
    let iv = rep.positive_interval();
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
    let binding = rep
        .binding_indices
        .iter()
        .map(|j| j.to_string())
        .collect::<Vec<_>>()
        .join(";");
    format!(
        "# chi,gamma_min,gamma_max,binding_index,chi_admissible,min_admissible_chi\n# {},{},{},{},{},{}\n",
        rep.chi,
        fmt(iv.map(|i| i.lo)),
        fmt(iv.map(|i| i.hi)),
        if binding.is_empty() { "NA".into() } else { binding },
        rep.chi_admissible,
        fmt(rep.min_admissible_chi),
    )
}

fn check_chi(chi: f64) -> CmdResult {
    if !(chi >= 1.0) || !chi.is_finite() {
        return Err(Failure::usage(format!("--chi must be a finite number >= 1, got {chi}")));
    }
    Ok(())
}

/// γ from the flag, or the midpoint of the positive feasible interval.
fn pick_gamma(table: &UtilityTable, chi: f64, gamma: Option<f64>) -> Result<f64, Failure> {
    match gamma {
        Some(g) => Ok(g),
        None => feasible_region(table, chi)
            .positive_interval()
            .map(|iv| iv.midpoint())
            .ok_or_else(|| Failure::infeasible(format!("no positive gamma for chi = {chi}"))),
    }
}

fn derive(common: &Common, chi: f64, gamma: Option<f64>, stdout: &mut dyn Write) -> CmdResult {
    check_chi(chi)?;
    // A sampled config only needs to be viable here; feasibility is what we report.
    let game = game_for(common, &[])?;
    let rep = feasible_region(&game.table, chi);
    let header = report_line(&rep);
    let gamma = match gamma.or_else(|| rep.positive_interval().map(|iv| iv.midpoint())) {
        Some(g) => g,
        None => {
            emit(common, &header, stdout)?;
            return Err(Failure::infeasible(format!("no positive gamma for chi = {chi}")));
        }
    };
    let ce = match derive_ce_strategy(&game.table, chi, gamma) {
        Ok(ce) => ce,
        Err(e) => {
            emit(common, &header, stdout)?;
            return Err(Failure::infeasible(e));
        }
    };
    let terms = ce_terms(&game.table);
    let mut out = header;
    out.push_str(&format!("# gamma = {gamma}\nj,A_j,B_j,p_j\n"));
    for (slot, p) in ce.p.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", slot + 1, terms.a[slot], terms.b[slot], p));
    }
    emit(common, &out, stdout)
}

fn parse_strategy(text: &str, eta: usize) -> Result<DeviceStrategy, Failure> {
    let bad = || Failure::usage(format!("bad strategy `{text}`: expected scalar:<q> or full:<q1>;...;<q{eta}>"));
    let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
    let s = match kind {
        "scalar" => DeviceStrategy::Scalar(rest.parse().map_err(|_| bad())?),
        "full" => DeviceStrategy::Full(
            rest.split(';')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad())?,
        ),
        _ => return Err(bad()),
    };
    s.validate(eta).map_err(Failure::usage)?;
    Ok(s)
}

fn random_strategies(rng: &mut ChaCha8Rng, n: usize, eta: usize) -> Vec<DeviceStrategy> {
    (0..n)
        .map(|_| {
            if rng.random::<bool>() {
                DeviceStrategy::Full((0..eta).map(|_| rng.random::<f64>()).collect())
            } else {
                DeviceStrategy::Scalar(rng.random::<f64>())
            }
        })
        .collect()
}

fn verify(
    common: &Common,
    chi: f64,
    gamma: Option<f64>,
    strategies: &[String],
    perturb: bool,
    tol: f64,
    stdout: &mut dyn Write,
) -> CmdResult {
    check_chi(chi)?;
    let game = game_for(common, &[chi])?;
    let (n, eta) = (game.n(), game.config.eta());
    let mut strats = if strategies.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
        rng.set_stream(1);
        random_strategies(&mut rng, n, eta)
    } else {
        if strategies.len() != n {
            return Err(Failure::usage(format!(
                "expected {n} --strategy flags, got {}",
                strategies.len()
            )));
        }
        strategies.iter().map(|s| parse_strategy(s, eta)).collect::<Result<_, _>>()?
    };
    if perturb {
        strats = strats.iter().map(|s| s.perturbed(PERTURBATION)).collect();
    }
    let gamma = pick_gamma(&game.table, chi, gamma)?;
    // Report the residual even when it exceeds the tolerance.
    let check = match verify_ce_identity_on(&game.table, chi, gamma, &strats, f64::INFINITY) {
        Ok(c) => c,
        Err(MarkovError::Ce(e)) => return Err(Failure::infeasible(e)),
        Err(e @ MarkovError::NonErgodic) => return Err(Failure::infeasible(format!("{e}; try --perturb"))),
        Err(e) => return Err(Failure::usage(e)),
    };
    let mut out = String::from("E_s");
    for i in 1..=n {
        out.push_str(&format!(",E_{i}"));
    }
    out.push_str(",residual\n");
    out.push_str(&check.expected.server.to_string());
    for e in &check.expected.devices {
        out.push_str(&format!(",{e}"));
    }
    out.push_str(&format!(",{}\n", check.residual));
    emit(common, &out, stdout)?;
    if check.residual > tol {
        return Err(Failure::infeasible(format!(
            "identity residual {} exceeds tolerance {tol}",
            check.residual
        )));
    }
    Ok(())
}

struct SimArgs {
    agent: AgentArg,
    chi: f64,
    gamma: Option<f64>,
    q0: f64,
    rounds: usize,
    estimate: CoopEstimate,
    delta_others: Option<f64>,
}

fn simulate_cmd(common: &Common, args: &SimArgs, stdout: &mut dyn Write) -> CmdResult {
    check_chi(args.chi)?;
    let chis: &[f64] = if args.agent == AgentArg::Ce { &[args.chi] } else { &[] };
    let game = game_for(common, chis)?;
    let agent = match args.agent {
        AgentArg::Ce => {
            let gamma = pick_gamma(&game.table, args.chi, args.gamma)?;
            ServerAgent::ce(derive_ce_strategy(&game.table, args.chi, gamma).map_err(Failure::infeasible)?)
        }
        AgentArg::Allc => ServerAgent::AllC,
        AgentArg::Alld => ServerAgent::AllD,
        AgentArg::Tft => ServerAgent::Tft { focal: 1 },
        AgentArg::Wsls => ServerAgent::wsls(&game.table),
    };
    let mode = match (args.agent, args.delta_others) {
        (AgentArg::Ce, Some(d)) => PayoffMode::Extortion {
            chi: args.chi,
            setting: DeviceSetting::Heterogeneous { delta_others: d },
        },
        (_, Some(_)) => return Err(Failure::usage("--delta-others needs --agent ce")),
        _ => agent.default_payoff_mode(),
    };
    let opts = SimOptions {
        rounds: args.rounds,
        mode,
        estimate: args.estimate,
        seed: common.seed,
        stream: 0,
    };
    let trace = simulate(&game, &agent, &vec![args.q0; game.n()], &opts).map_err(|e| match e {
        crate::dynamics::DynamicsError::NonPositivePayoff { .. } => Failure::infeasible(e),
        other => Failure::usage(other),
    })?;
    emit(common, &trace.to_csv(), stdout)
}

fn experiment(spec: &ExperimentSpec, stdout: &mut dyn Write) -> CmdResult {
    use crate::harness::HarnessError;
    let result = run_experiment(spec).map_err(|e| match e {
        HarnessError::Infeasible { .. } | HarnessError::Ce(_) | HarnessError::RejectionBudgetExceeded { .. } => {
            Failure::infeasible(e)
        }
        other => Failure::usage(other),
    })?;
    let _ = writeln!(
        stdout,
        "wrote {} files to {} (set {OUT_DIR_ENV} to change the default)",
        result.manifest.files.len() + 1,
        spec.out_dir.display()
    );
    Ok(())
}

fn check(common: &Common, stdout: &mut dyn Write) -> CmdResult {
    let game = game_for(common, &[])?;
    let v = check_viability(&game.config).map_err(Failure::usage)?;
    let dominance = verify_defection_dominance(&game.config).map_err(Failure::usage)?;
    let s = &game.config.server;
    let mut out = String::from("player,viable,lhs,rhs\n");
    out.push_str(&format!(
        "server,{},{},{}\n",
        v.server,
        s.alpha * (v.phi_max - v.phi_min),
        s.beta * s.rho
    ));
    for (i, (d, ok)) in game.config.devices.iter().zip(&v.devices).enumerate() {
        out.push_str(&format!(
            "device_{},{},{},{}\n",
            i + 1,
            ok,
            d.alpha * (d.psi_hi - d.psi_lo),
            d.beta * d.defection_income()
        ));
    }
    out.push_str(&format!(
        "# phi_max = {}, phi_min = {}, defection_dominant = {dominance}\n",
        v.phi_max, v.phi_min
    ));
    emit(common, &out, stdout)?;
    if !v.all_pass() {
        return Err(Failure::infeasible("game is not viable"));
    }
    Ok(())
}
