//! Derive the CE server strategy for a sampled eight-device game and show how
//! the admissible γ range shrinks as the extortion factor grows.

use fel_extortion::ce::{derive_ce_strategy, feasible_region};
use fel_extortion::game::UtilityTable;
use fel_extortion::harness::{sample_config, ParameterSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chis = [1.0, 2.0, 3.0, 4.0];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = sample_config(&ParameterSampler::default(), &chis, &mut rng)?.config;
    let table = UtilityTable::build(&cfg)?;

    println!("chi  gamma_max     binding outcomes");
    for chi in chis {
        let report = feasible_region(&table, chi);
        let iv = report.positive_interval().expect("sampled to be feasible");
        println!("{chi:<4} {:<12.6e} {:?}", iv.hi, report.binding_indices);
    }

    let gamma = feasible_region(&table, 1.0).midpoint_gamma().unwrap();
    let ce = derive_ce_strategy(&table, 1.0, gamma)?;
    let half = ce.p.len() / 2;
    let mean = |p: &[f64]| p.iter().sum::<f64>() / p.len() as f64;
    println!("\nchi = 1, gamma = {gamma:.6e}");
    println!("p after all-cooperation: {}", ce.p[0]);
    println!("p after all-defection:   {}", ce.p[ce.p.len() - 1]);
    println!("mean p when the server cooperated last: {:.4}", mean(&ce.p[..half]));
    println!("mean p when the server defected last:   {:.4}", mean(&ce.p[half..]));
    Ok(())
}
