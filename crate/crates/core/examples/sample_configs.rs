//! Draw games from the evaluation parameter ranges, keep the ones that admit
//! a CE strategy for every extortion factor, and save one as TOML.

use fel_extortion::config::{config_to_toml, load_config, save_config};
use fel_extortion::harness::{sample_config, ParameterSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sampler = ParameterSampler::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let chis = [1.0, 2.0, 3.0, 4.0];

    let mut total = 0;
    for _ in 0..10 {
        let s = sample_config(&sampler, &chis, &mut rng)?;
        total += s.rejections;
    }
    println!("10 accepted configs after {total} rejected draws");

    let kept = sample_config(&sampler, &chis, &mut rng)?.config;
    let path = std::env::temp_dir().join("fel_ce_sampled.toml");
    save_config(&kept, &path)?;
    assert_eq!(load_config(&path)?, kept);
    println!("saved to {}\n", path.display());
    print!("{}", config_to_toml(&kept)?.lines().take(22).collect::<Vec<_>>().join("\n"));
    println!("\n...");
    Ok(())
}
