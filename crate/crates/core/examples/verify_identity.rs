//! Play a CE server against random memory-one devices and confirm that the
//! long-run utilities satisfy the extortion relation, using the stationary
//! distribution and the determinant formula side by side.

use fel_extortion::ce::{derive_ce_strategy, feasible_region};
use fel_extortion::game::UtilityTable;
use fel_extortion::harness::{sample_config, ParameterSampler};
use fel_extortion::markov::{
    build_transition_matrix, ce_identity_residual, det_expected_utilities, expected_utilities,
    stationary_distribution, DeviceStrategy, STATIONARY_TOL,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let chi = 2.0;
    let sampler = ParameterSampler {
        n: 3,
        data_size: 2000.0,
        require_positive_payoffs: false,
        ..ParameterSampler::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = sample_config(&sampler, &[chi], &mut rng)?.config;
    let table = UtilityTable::build(&cfg)?;
    let gamma = feasible_region(&table, chi).midpoint_gamma().unwrap();
    let ce = derive_ce_strategy(&table, chi, gamma)?;

    for trial in 0..5 {
        let strategies: Vec<DeviceStrategy> = (0..cfg.n())
            .map(|i| {
                if (trial + i) % 2 == 0 {
                    DeviceStrategy::Scalar(rng.random())
                } else {
                    DeviceStrategy::Full((0..table.eta()).map(|_| rng.random()).collect())
                }
            })
            .collect();
        let m = build_transition_matrix(&ce.p, &strategies)?;
        let dist = stationary_distribution(&m, STATIONARY_TOL)?;
        let stat = expected_utilities(&dist, &table)?;
        let det = det_expected_utilities(&m, &table)?;
        println!(
            "trial {trial}: E_s = {:.6} (det {:.6}), residual {:.2e}",
            stat.server,
            det.server,
            ce_identity_residual(&table, chi, &stat)
        );
    }
    Ok(())
}
