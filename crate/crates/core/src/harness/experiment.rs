//! Figure scenarios.
//!
//! Every replicate draws its own configuration (unless a fixed one is given),
//! plays each scenario cell on it with its own RNG stream, and the per-round
//! values of device 1 are averaged across replicates. Relative utilities are
//! averaged as ratios. "Stable" values are the mean of the last `window`
//! rounds.
//!
//! | scenario | files | columns |
//! |----------|-------|---------|
//! | `fig2`   | `fig2_q0_<q0>.csv` per `q0` | `round,CE,ALLC,ALLD,TFT,WSLS` (cooperation probability) |
//! | `fig3`   | `fig3.csv` | `strategy,server,device` (stable relative utility at `baseline_q0`) |
//! | `fig4`   | `fig4.csv` | `q0,server,device` (stable relative utility under CE) |
//! | `fig5_6` | `fig5_q0_<q0>.csv`, `fig6_<strategy>.csv` | `round,server,device` |
//! | `fig7_8` | `fig7.csv`, `fig8_chi_<chi>.csv`, `fig8_stable.csv` | `round,chi_<chi>...`; `round,server,device`; `chi,server,device` |
//! | `custom` | `custom.csv` | `chi,q0,round,q,server,device` |
//!
//! Cooperation series have `rounds + 1` rows (`q` before each round and after
//! the last); utility series have `rounds` rows. Numbers use Rust's shortest
//! round-trip formatting, independent of locale.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ce::{derive_ce_strategy, feasible_region};
use crate::config::config_to_toml;
use crate::dynamics::{relative_utility, simulate, CoopEstimate, ServerAgent, SimOptions};
use crate::game::{Game, GameConfig, UtilityTable};

use super::sampler::{sample_config, ParameterSampler};
use super::HarnessError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FEL_CE_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "fig2")]
    Fig2,
    #[serde(rename = "fig3")]
    Fig3,
    #[serde(rename = "fig4")]
    Fig4,
    #[serde(rename = "fig5_6")]
    Fig5_6,
    #[serde(rename = "fig7_8")]
    Fig7_8,
    #[serde(rename = "custom")]
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Fig2,
        Scenario::Fig3,
        Scenario::Fig4,
        Scenario::Fig5_6,
        Scenario::Fig7_8,
        Scenario::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig2 => "fig2",
            Scenario::Fig3 => "fig3",
            Scenario::Fig4 => "fig4",
            Scenario::Fig5_6 => "fig5_6",
            Scenario::Fig7_8 => "fig7_8",
            Scenario::Custom => "custom",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (expected fig2, fig3, fig4, fig5_6, fig7_8 or custom)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaRule {
    /// Middle of the positive feasible interval of each config and χ.
    Midpoint,
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub q0s: Vec<f64>,
    pub chis: Vec<f64>,
    /// Starting probability for the strategy comparison panels.
    pub baseline_q0: f64,
    pub gamma: GammaRule,
    pub rounds: usize,
    pub replicates: usize,
    pub seed: u64,
    pub window: usize,
    pub estimate: CoopEstimate,
    pub out_dir: PathBuf,
    /// Play every replicate on this config instead of sampling.
    pub config: Option<GameConfig>,
    pub sampler: ParameterSampler,
}

impl ExperimentSpec {
    /// Defaults of the evaluation setting for `scenario`.
    pub fn new(scenario: Scenario) -> Self {
        let (q0s, chis) = match scenario {
            Scenario::Fig2 | Scenario::Fig4 | Scenario::Fig5_6 => (vec![0.1, 0.4, 0.6, 0.9], vec![1.0]),
            Scenario::Fig3 => (vec![0.4], vec![1.0]),
            Scenario::Fig7_8 => (vec![0.5], vec![1.0, 2.0, 3.0, 4.0]),
            Scenario::Custom => (vec![0.5], vec![1.0]),
        };
        let out_dir = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"));
        ExperimentSpec {
            scenario,
            q0s,
            chis,
            baseline_q0: 0.4,
            gamma: GammaRule::Midpoint,
            rounds: 200,
            replicates: 20,
            seed: 2024,
            window: 10,
            estimate: CoopEstimate::Exact,
            out_dir,
            config: None,
            sampler: ParameterSampler::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::InvalidSpec(msg));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1".into());
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.chis.is_empty() || self.q0s.is_empty() {
            return bad("need at least one extortion factor and one initial probability".into());
        }
        if let Some(c) = self.chis.iter().find(|c| !(**c >= 1.0) || !c.is_finite()) {
            return bad(format!("extortion factor {c} is below 1"));
        }
        let probs = self.q0s.iter().chain(std::iter::once(&self.baseline_q0));
        if let Some(q) = probs.into_iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return bad(format!("initial probability {q} outside [0, 1]"));
        }
        if let GammaRule::Explicit(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return bad(format!("explicit gamma must be positive, got {g}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Agent {
    Ce(usize),
    AllC,
    AllD,
    Tft,
    Wsls,
}

const BASELINES: [Agent; 4] = [Agent::AllC, Agent::AllD, Agent::Tft, Agent::Wsls];
const STRATEGIES: [Agent; 5] = [Agent::Ce(0), Agent::AllC, Agent::AllD, Agent::Tft, Agent::Wsls];

impl Agent {
    fn name(self) -> &'static str {
        match self {
            Agent::Ce(_) => "CE",
            Agent::AllC => "ALLC",
            Agent::AllD => "ALLD",
            Agent::Tft => "TFT",
            Agent::Wsls => "WSLS",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    agent: Agent,
    q0: f64,
}

fn cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    match spec.scenario {
        Scenario::Fig2 => {
            for &q0 in &spec.q0s {
                out.extend(STRATEGIES.iter().map(|&agent| Cell { agent, q0 }));
            }
        }
        Scenario::Fig3 => {
            out.extend(STRATEGIES.iter().map(|&agent| Cell {
                agent,
                q0: spec.baseline_q0,
            }));
        }
        Scenario::Fig4 => out.extend(spec.q0s.iter().map(|&q0| Cell { agent: Agent::Ce(0), q0 })),
        Scenario::Fig5_6 => {
            out.extend(spec.q0s.iter().map(|&q0| Cell { agent: Agent::Ce(0), q0 }));
            out.extend(BASELINES.iter().map(|&agent| Cell {
                agent,
                q0: spec.baseline_q0,
            }));
        }
        Scenario::Fig7_8 => out.extend((0..spec.chis.len()).map(|k| Cell {
            agent: Agent::Ce(k),
            q0: spec.q0s[0],
        })),
        Scenario::Custom => {
            for k in 0..spec.chis.len() {
                out.extend(spec.q0s.iter().map(|&q0| Cell { agent: Agent::Ce(k), q0 }));
            }
        }
    }
    out
}

/// Per-replicate bookkeeping recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateInfo {
    pub replicate: usize,
    pub rejections: usize,
    /// γ used for each entry of `chis`, in order.
    pub gammas: Vec<f64>,
}

struct CellSeries {
    q: Vec<f64>,
    server: Vec<f64>,
    device: Vec<f64>,
}

struct ReplicateRun {
    info: ReplicateInfo,
    config: GameConfig,
    cells: Vec<CellSeries>,
}

fn ce_server(table: &UtilityTable, chi: f64, rule: GammaRule) -> Result<(ServerAgent, f64), HarnessError> {
    let gamma = match rule {
        GammaRule::Midpoint => feasible_region(table, chi)
            .positive_interval()
            .ok_or(HarnessError::Infeasible { chi })?
            .midpoint(),
        GammaRule::Explicit(g) => g,
    };
    Ok((ServerAgent::ce(derive_ce_strategy(table, chi, gamma)?), gamma))
}

fn stream_id(replicate: usize, cell: usize) -> u64 {
    ((replicate as u64) << 32) | cell as u64
}

fn run_replicate(spec: &ExperimentSpec, cells: &[Cell], replicate: usize) -> Result<ReplicateRun, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream_id(replicate, 0));
    let (config, rejections) = match &spec.config {
        Some(cfg) => (cfg.clone(), 0),
        None => {
            let s = sample_config(&spec.sampler, &spec.chis, &mut rng)?;
            (s.config, s.rejections)
        }
    };
    let game = Game::new(config)?;
    let ce: Vec<(ServerAgent, f64)> = spec
        .chis
        .iter()
        .map(|&chi| ce_server(&game.table, chi, spec.gamma))
        .collect::<Result<_, _>>()?;

    let n = game.n();
    let mut series = Vec::with_capacity(cells.len());
    for (k, cell) in cells.iter().enumerate() {
        let agent = match cell.agent {
            Agent::Ce(i) => ce[i].0.clone(),
            Agent::AllC => ServerAgent::AllC,
            Agent::AllD => ServerAgent::AllD,
            Agent::Tft => ServerAgent::Tft { focal: 1 },
            Agent::Wsls => ServerAgent::wsls(&game.table),
        };
        let opts = SimOptions {
            rounds: spec.rounds,
            mode: agent.default_payoff_mode(),
            estimate: spec.estimate,
            seed: spec.seed,
            stream: stream_id(replicate, k + 1),
        };
        let trace = simulate(&game, &agent, &vec![cell.q0; n], &opts)?;
        let rel = relative_utility(&trace, &game.table, spec.window)?;
        let mut q = trace.q_series(1);
        q.push(trace.final_q[0]);
        series.push(CellSeries {
            q,
            server: rel.server,
            device: rel.devices.into_iter().next().expect("at least one device"),
        });
    }
    Ok(ReplicateRun {
        info: ReplicateInfo {
            replicate,
            rejections,
            gammas: ce.iter().map(|(_, g)| *g).collect(),
        },
        config: game.config,
        cells: series,
    })
}

/// One output file held in memory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    /// Text values of the first column, when it is not numeric.
    pub labels: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    fn numeric(name: String, header: &[&str], rows: Vec<Vec<f64>>) -> Self {
        CsvTable {
            name,
            header: header.iter().map(|s| s.to_string()).collect(),
            labels: None,
            rows,
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let mut idx = self.header.iter().position(|h| h == name)?;
        if self.labels.is_some() {
            idx = idx.checked_sub(1)?;
        }
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Row whose label equals `label`.
    pub fn labeled_row(&self, label: &str) -> Option<&[f64]> {
        let pos = self.labels.as_ref()?.iter().position(|l| l == label)?;
        Some(&self.rows[pos])
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for (k, row) in self.rows.iter().enumerate() {
            let mut first = true;
            if let Some(labels) = &self.labels {
                out.push_str(&labels[k]);
                first = false;
            }
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                write!(out, "{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn mean_series(runs: &[ReplicateRun], cell: usize, pick: fn(&CellSeries) -> &[f64]) -> Vec<f64> {
    let len = pick(&runs[0].cells[cell]).len();
    let mut acc = vec![0.0; len];
    for run in runs {
        for (a, v) in acc.iter_mut().zip(pick(&run.cells[cell])) {
            *a += v;
        }
    }
    let k = runs.len() as f64;
    acc.iter().map(|a| a / k).collect()
}

fn q_of(c: &CellSeries) -> &[f64] {
    &c.q
}
fn server_of(c: &CellSeries) -> &[f64] {
    &c.server
}
fn device_of(c: &CellSeries) -> &[f64] {
    &c.device
}

/// Mean of the last `window` rounds of the raw ratios, averaged over
/// replicates; equal to the last entry of the trailing mean.
fn stable(runs: &[ReplicateRun], cell: usize) -> (f64, f64) {
    let s = mean_series(runs, cell, server_of);
    let d = mean_series(runs, cell, device_of);
    (*s.last().unwrap(), *d.last().unwrap())
}

fn utility_table(name: String, runs: &[ReplicateRun], cell: usize) -> CsvTable {
    let s = mean_series(runs, cell, server_of);
    let d = mean_series(runs, cell, device_of);
    let rows = s.iter().zip(&d).enumerate().map(|(t, (a, b))| vec![t as f64, *a, *b]).collect();
    CsvTable::numeric(name, &["round", "server", "device"], rows)
}

fn build_tables(spec: &ExperimentSpec, cells: &[Cell], runs: &[ReplicateRun]) -> Vec<CsvTable> {
    let mut tables = Vec::new();
    match spec.scenario {
        Scenario::Fig2 => {
            for (qi, &q0) in spec.q0s.iter().enumerate() {
                let base = qi * STRATEGIES.len();
                let cols: Vec<Vec<f64>> = (0..STRATEGIES.len()).map(|s| mean_series(runs, base + s, q_of)).collect();
                let rows = (0..cols[0].len())
                    .map(|t| std::iter::once(t as f64).chain(cols.iter().map(|c| c[t])).collect())
                    .collect();
                let mut header = vec!["round"];
                header.extend(STRATEGIES.iter().map(|a| a.name()));
                tables.push(CsvTable::numeric(format!("fig2_q0_{q0}.csv"), &header, rows));
            }
        }
        Scenario::Fig3 => {
            let rows = (0..cells.len())
                .map(|k| {
                    let (s, d) = stable(runs, k);
                    vec![s, d]
                })
                .collect();
            tables.push(CsvTable {
                name: "fig3.csv".into(),
                header: vec!["strategy".into(), "server".into(), "device".into()],
                labels: Some(cells.iter().map(|c| c.agent.name().to_string()).collect()),
                rows,
            });
        }
        Scenario::Fig4 => {
            let rows = cells
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let (s, d) = stable(runs, k);
                    vec![c.q0, s, d]
                })
                .collect();
            tables.push(CsvTable::numeric("fig4.csv".into(), &["q0", "server", "device"], rows));
        }
        Scenario::Fig5_6 => {
            for (k, c) in cells.iter().enumerate() {
                let name = match c.agent {
                    Agent::Ce(_) => format!("fig5_q0_{}.csv", c.q0),
                    other => format!("fig6_{}.csv", other.name().to_lowercase()),
                };
                tables.push(utility_table(name, runs, k));
            }
        }
        Scenario::Fig7_8 => {
            let cols: Vec<Vec<f64>> = (0..cells.len()).map(|k| mean_series(runs, k, q_of)).collect();
            let rows = (0..cols[0].len())
                .map(|t| std::iter::once(t as f64).chain(cols.iter().map(|c| c[t])).collect())
                .collect();
            let chi_cols: Vec<String> = spec.chis.iter().map(|c| format!("chi_{c}")).collect();
            let mut header = vec!["round"];
            header.extend(chi_cols.iter().map(String::as_str));
            tables.push(CsvTable::numeric("fig7.csv".into(), &header, rows));
            for (k, chi) in spec.chis.iter().enumerate() {
                tables.push(utility_table(format!("fig8_chi_{chi}.csv"), runs, k));
            }
            let rows = spec
                .chis
                .iter()
                .enumerate()
                .map(|(k, &chi)| {
                    let (s, d) = stable(runs, k);
                    vec![chi, s, d]
                })
                .collect();
            tables.push(CsvTable::numeric("fig8_stable.csv".into(), &["chi", "server", "device"], rows));
        }
        Scenario::Custom => {
            let mut rows = Vec::new();
            for (k, c) in cells.iter().enumerate() {
                let Agent::Ce(ci) = c.agent else { unreachable!("custom runs CE only") };
                let q = mean_series(runs, k, q_of);
                let s = mean_series(runs, k, server_of);
                let d = mean_series(runs, k, device_of);
                for t in 0..s.len() {
                    rows.push(vec![spec.chis[ci], c.q0, t as f64, q[t], s[t], d[t]]);
                }
            }
            tables.push(CsvTable::numeric(
                "custom.csv".into(),
                &["chi", "q0", "round", "q", "server", "device"],
                rows,
            ));
        }
    }
    tables
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub scenario: Scenario,
    pub seed: u64,
    pub rounds: usize,
    pub replicates: usize,
    pub window: usize,
    pub q0s: Vec<f64>,
    pub chis: Vec<f64>,
    pub baseline_q0: f64,
    pub gamma_rule: GammaRule,
    pub estimate: CoopEstimate,
    /// `sampled` or `fixed`.
    pub config_source: String,
    pub sampler: Option<ParameterSampler>,
    pub psi_draws: String,
    pub averaging: String,
    pub total_rejections: usize,
    pub replicate_info: Vec<ReplicateInfo>,
    pub files: Vec<String>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub tables: Vec<CsvTable>,
    /// Config played by each replicate.
    pub configs: Vec<GameConfig>,
    pub manifest: Manifest,
}

impl ExperimentResult {
    pub fn table(&self, name: &str) -> Option<&CsvTable> {
        self.tables.iter().find(|t| t.name == name)
    }
}

fn config_files(spec: &ExperimentSpec) -> Vec<String> {
    if spec.config.is_some() {
        vec!["config.toml".into()]
    } else {
        (0..spec.replicates).map(|r| format!("configs/replicate_{r:03}.toml")).collect()
    }
}

/// Run a scenario without touching the filesystem.
pub fn compute_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    spec.validate()?;
    let start = Instant::now();
    let cells = cells(spec);
    let runs: Vec<ReplicateRun> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| run_replicate(spec, &cells, r))
        .collect::<Result<_, _>>()?;
    let tables = build_tables(spec, &cells, &runs);

    let mut files: Vec<String> = tables.iter().map(|t| t.name.clone()).collect();
    files.extend(config_files(spec));
    let manifest = Manifest {
        scenario: spec.scenario,
        seed: spec.seed,
        rounds: spec.rounds,
        replicates: spec.replicates,
        window: spec.window,
        q0s: spec.q0s.clone(),
        chis: spec.chis.clone(),
        baseline_q0: spec.baseline_q0,
        gamma_rule: spec.gamma,
        estimate: spec.estimate,
        config_source: if spec.config.is_some() { "fixed" } else { "sampled" }.into(),
        sampler: spec.config.is_none().then(|| spec.sampler.clone()),
        psi_draws: "psi_hi and psi_lo drawn independently".into(),
        averaging: "relative utility ratio averaged per round across replicates".into(),
        total_rejections: runs.iter().map(|r| r.info.rejections).sum(),
        replicate_info: runs.iter().map(|r| r.info.clone()).collect(),
        files,
        runtime_secs: start.elapsed().as_secs_f64(),
    };
    let configs = runs.into_iter().map(|r| r.config).collect();
    Ok(ExperimentResult {
        tables,
        configs,
        manifest,
    })
}

fn write_file(path: &Path, text: &str, written: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    written.push(path.to_path_buf());
    Ok(())
}

fn write_all(spec: &ExperimentSpec, result: &ExperimentResult, written: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    for t in &result.tables {
        write_file(&spec.out_dir.join(&t.name), &t.to_csv(), written)?;
    }
    let names = config_files(spec);
    let configs: Vec<&GameConfig> = match &spec.config {
        Some(cfg) => vec![cfg],
        None => result.configs.iter().collect(),
    };
    for (name, cfg) in names.iter().zip(configs) {
        write_file(&spec.out_dir.join(name), &config_to_toml(cfg)?, written)?;
    }
    // Written last: its presence marks a complete run.
    let manifest = serde_json::to_string_pretty(&result.manifest)?;
    write_file(&spec.out_dir.join("manifest.json"), &manifest, written)
}

/// Run a scenario and write its CSVs, the configs played and a manifest to
/// `spec.out_dir`. On failure, files written by this call are removed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let result = compute_experiment(spec)?;
    let mut written = Vec::new();
    if let Err(e) = write_all(spec, &result, &mut written) {
        for path in written {
            let _ = std::fs::remove_file(path);
        }
        return Err(e);
    }
    Ok(result)
}
