//! Evolve a population of devices against CE and the four classical server
//! strategies and print how the focal device's cooperation probability moves.

use fel_extortion::ce::{derive_ce_strategy, feasible_region};
use fel_extortion::dynamics::{first_falling, first_reaching, simulate, ServerAgent, SimOptions};
use fel_extortion::game::Game;
use fel_extortion::harness::{sample_config, ParameterSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = sample_config(&ParameterSampler::default(), &[1.0], &mut rng)?.config;
    let game = Game::new(cfg)?;
    let gamma = feasible_region(&game.table, 1.0).midpoint_gamma().unwrap();
    let agents = [
        ServerAgent::ce(derive_ce_strategy(&game.table, 1.0, gamma)?),
        ServerAgent::AllC,
        ServerAgent::AllD,
        ServerAgent::Tft { focal: 1 },
        ServerAgent::wsls(&game.table),
    ];
    let q0 = vec![0.4; game.n()];

    println!("agent  q@10    q@50    q@200   reaches 0.999  falls to 0.001");
    for agent in &agents {
        let opts = SimOptions::new(200, agent.default_payoff_mode(), 3);
        let trace = simulate(&game, agent, &q0, &opts)?;
        let mut q = trace.q_series(1);
        q.push(trace.final_q[0]);
        println!(
            "{:<6} {:<7.4} {:<7.4} {:<7.4} {:<14} {}",
            agent.name(),
            q[10],
            q[50],
            q[200],
            fmt(first_reaching(&q, 0.999)),
            fmt(first_falling(&q, 0.001))
        );
    }
    Ok(())
}

fn fmt(round: Option<usize>) -> String {
    round.map_or("-".into(), |r| r.to_string())
}
