//! Build a small game by hand, print its utility table and check that it is
//! a social dilemma: everyone prefers mutual cooperation to mutual defection,
//! yet defection dominates.

use fel_extortion::game::{
    check_viability, verify_defection_dominance, DeviceParams, GameConfig, Outcome, ServerParams, UtilityTable,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
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
    let device = |alpha: f64| DeviceParams {
        alpha,
        beta: 1.0,
        psi_hi: 1.9,
        psi_lo: 0.4,
        lambda: 0.5,
        delta: 0.018,
        data_size: 3000.0,
    };
    let cfg = GameConfig::new(server, vec![device(2.5), device(2.9)])?;
    let table = UtilityTable::build(&cfg)?;

    println!("outcome  u_s       u_1      u_2");
    for j in 1..=table.eta() {
        let g = Outcome::from_index(j, cfg.n())?;
        println!(
            "{:>2} {}  {:>8.4} {:>8.4} {:>8.4}",
            j,
            g.label(),
            table.server_at(g),
            table.device_at(1, g),
            table.device_at(2, g)
        );
    }

    let v = check_viability(&cfg)?;
    println!("\nserver profit range: [{:.4}, {:.4}]", v.phi_min, v.phi_max);
    println!("server viable: {}, devices viable: {:?}", v.server, v.devices);
    println!("defection dominant: {}", verify_defection_dominance(&cfg)?);
    Ok(())
}
