//! On-disk formats written by experiment runs.

use std::collections::BTreeSet;
use std::path::Path;

use fel_extortion::config::load_config;
use fel_extortion::harness::{run_experiment, ExperimentSpec, Scenario};

fn small(scenario: Scenario, dir: &Path) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(scenario);
    spec.replicates = 2;
    spec.rounds = 30;
    spec.out_dir = dir.to_path_buf();
    spec
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn csv_headers_and_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(Scenario, &str, &[&str], usize); 6] = [
        (Scenario::Fig2, "fig2_q0_0.4.csv", &["round", "CE", "ALLC", "ALLD", "TFT", "WSLS"], 31),
        (Scenario::Fig3, "fig3.csv", &["strategy", "server", "device"], 5),
        (Scenario::Fig4, "fig4.csv", &["q0", "server", "device"], 4),
        (Scenario::Fig5_6, "fig6_tft.csv", &["round", "server", "device"], 30),
        (Scenario::Fig7_8, "fig7.csv", &["round", "chi_1", "chi_2", "chi_3", "chi_4"], 31),
        (Scenario::Custom, "custom.csv", &["chi", "q0", "round", "q", "server", "device"], 30),
    ];
    for (scenario, file, header, rows) in cases {
        run_experiment(&small(scenario, dir.path())).unwrap();
        let (h, r) = read_csv(&dir.path().join(file));
        assert_eq!(h, header, "{file}");
        assert_eq!(r.len(), rows, "{file}");
        assert!(r.iter().all(|row| row.len() == header.len()), "{file}");
    }
    let (_, stable) = read_csv(&dir.path().join("fig8_stable.csv"));
    assert_eq!(stable.len(), 4);
    let (_, fig3) = read_csv(&dir.path().join("fig3.csv"));
    let names: BTreeSet<&str> = fig3.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, BTreeSet::from(["ALLC", "ALLD", "CE", "TFT", "WSLS"]));
}

#[test]
fn manifest_lists_files_and_configs_reload() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment(&small(Scenario::Fig4, dir.path())).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["scenario"], "fig4");
    assert_eq!(manifest["seed"], 2024);
    for file in manifest["files"].as_array().unwrap() {
        assert!(dir.path().join(file.as_str().unwrap()).exists(), "{file}");
    }
    for (r, cfg) in result.configs.iter().enumerate() {
        let path = dir.path().join(format!("configs/replicate_{r:03}.toml"));
        assert_eq!(&load_config(&path).unwrap(), cfg);
    }
}
