use diffsamp_core::scenario::Severity;
use diffsamp_core::sim::generate_optimal_system;
use diffsamp_core::theory::{self, Stability};
use diffsamp_core::{monte_carlo, CombinationRule, ScenarioConfig, ScenarioSpec, Topology};

fn preset(name: &str) -> ScenarioSpec {
    ScenarioConfig::preset(name).unwrap().resolve().unwrap()
}

#[test]
fn small_step_simulation_matches_exact_model() {
    let spec = preset("scenario2").with_realizations(500).with_horizon(2000);
    let exact = theory::exact_steady_state(&spec).unwrap().db;
    let sim = monte_carlo(&spec, None).unwrap();
    assert_eq!(sim.diverged, 0);
    let gap = (sim.steady_state_db.unwrap() - exact).abs();
    assert!(gap < 0.5, "gap {gap} dB");
}

#[test]
fn small_step_models_coincide() {
    let spec = preset("scenario2");
    let exact = theory::exact_nmsd_curve(&spec, 2000).unwrap();
    let approx = theory::approx_nmsd_curve(&spec, 2000).unwrap();
    let gap = exact.nmsd_db.iter().zip(&approx.nmsd_db).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap < 0.15, "gap {gap} dB");
}

#[test]
fn oversized_step_diverges_without_cooperation() {
    let s = preset("scenario1");
    let spec = ScenarioSpec { filter_length: 100, optimal_system: generate_optimal_system(100, 1), ..s }
        .with_rule(CombinationRule::NonCooperative)
        .with_horizon(10_000)
        .with_realizations(5);
    let rho = theory::ModelMatrices::new(&spec).spectral_radius().unwrap();
    assert_eq!(Stability::classify(rho), Stability::Unstable);
    let r = monte_carlo(&spec, None).unwrap();
    assert_eq!(r.diverged, 5);
    assert!(r.nmsd.is_empty() && r.steady_state_db.is_none());
}

#[test]
fn long_filter_preset_is_stable_only_with_cooperation() {
    let spec = preset("scenario3");
    let issues = spec.issues();
    assert_eq!(issues.len(), 1);
    assert_eq!(issues[0].severity, Severity::Warning);
    let coop = theory::ModelMatrices::new(&spec).spectral_radius().unwrap();
    let alone = theory::ModelMatrices::new(&spec.clone().with_rule(CombinationRule::NonCooperative))
        .spectral_radius()
        .unwrap();
    assert!(coop < 1.0 && alone > 1.0, "cooperative {coop}, isolated {alone}");
}

#[test]
fn stability_sweep_shapes() {
    let s = preset("scenario1");
    let spec = ScenarioSpec { filter_length: 100, optimal_system: generate_optimal_system(100, 1), ..s };
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let alone = theory::stability_sweep(&spec.clone().with_rule(CombinationRule::NonCooperative), &grid).unwrap();
    assert!(alone.windows(2).all(|w| w[1].1 > w[0].1));
    for rule in [CombinationRule::Uniform, CombinationRule::Metropolis] {
        let rows = theory::stability_sweep(&spec.clone().with_rule(rule), &grid).unwrap();
        assert!((rows[0].1 - 1.0).abs() < 1e-9);
        assert!(rows[1..].iter().all(|&(_, rho)| rho < 1.0));
        assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), grid);
    }
    assert!(theory::stability_sweep(&spec, &[]).is_err());
}

#[test]
fn config_with_topology_file() {
    let dir = tempfile::tempdir().unwrap();
    Topology::path_graph(4).unwrap().save(dir.path().join("path.toml")).unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        r#"
mu = 0.05
filter_length = 3
p_zeta = 0.5
noise_variances = [0.01, 0.02, 0.01, 0.02]
rule = "uniform"
horizon = 20
realizations = 3
master_seed = 9
topology = "path.toml"
"#,
    )
    .unwrap();
    let spec = ScenarioConfig::load(&cfg_path).unwrap().resolve().unwrap();
    assert_eq!(spec.topology, Topology::path_graph(4).unwrap());
    assert!(spec.issues().is_empty());
    let r = monte_carlo(&spec, Some(2)).unwrap();
    assert_eq!(r.nmsd.len(), 21);
}

#[test]
fn preset_graph_matches_reference_size() {
    for name in ScenarioConfig::preset_names() {
        let spec = preset(name);
        assert_eq!(spec.node_count(), 20);
        assert_eq!(spec.topology.neighborhood_sizes().iter().sum::<usize>(), 104);
        assert!(spec.noise_variances.iter().all(|&s| (0.001..=0.01).contains(&s)));
    }
}
