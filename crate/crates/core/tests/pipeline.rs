use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zps_core::atom::{NUM_STATES, NUM_TRANSITIONS};
use zps_core::config::{RunConfig, RunConfigFile};
use zps_core::dynamics::{apply_repump, PopulationState, RepumpModel};
use zps_core::measurement::Shots;
use zps_core::pipeline::{pump, pump_scan_fit, scan_and_fit};

fn config(text: &str) -> RunConfig {
    RunConfigFile::from_json(text).unwrap().resolve().unwrap()
}

const BASE: &str = r#"{
    "atom": {"omega_b_hz": 910000, "omega_0_hz": 120000},
    "protocol": {"leak_rate": 2875},
    "readout": {"accuracy": 1.0, "background_p4": 0.006},
    "scan": {"shots_per_point": 1000},
    "seed": 3
}"#;

#[test]
fn analytic_pipeline_recovers_the_pumped_state_exactly() {
    for m in [-2, 0, 1, 3] {
        let mut cfg = config(BASE);
        cfg.retarget(m).unwrap();
        cfg.scan.shots_per_point = Shots::Analytic;
        let run = pump_scan_fit(&cfg).unwrap();
        let truth = run.pump.outcome.final_state.f3_populations();
        for (fit, t) in run.fit.parameters.populations.iter().zip(&truth) {
            assert!((fit - t).abs() < 1e-6, "m={m}: {fit} vs {t}");
        }
        assert!((run.fit.parameters.omega_b / cfg.atom.omega_b - 1.0).abs() < 1e-8);
    }
}

#[test]
fn calibrated_leak_lands_near_0_57_for_inner_targets() {
    // The band-limited chain starves far lines once the carrier moves out to
    // m = ±3, so the calibration only holds near the centre.
    for m in [-2, -1, 0, 1, 2] {
        let mut cfg = config(BASE);
        cfg.retarget(m).unwrap();
        let p = pump(&cfg).unwrap().outcome.final_state.f3(m);
        assert!((p - 0.57).abs() < 0.01, "m={m}: {p}");
    }
}

#[test]
fn the_target_population_is_the_largest() {
    let cfg = config(BASE);
    let run = pump(&cfg).unwrap();
    let p = run.outcome.final_state.f3(0);
    let others = run.outcome.final_state.f3_populations();
    assert!(others.iter().enumerate().all(|(i, q)| i == 3 || *q < p));
    assert_eq!(run.rates[3], 0.0);
    assert!(run.rates[2] > 0.0 && run.rates[4] > 0.0);
}

#[test]
fn readout_error_shrinks_fitted_populations_by_the_contrast() {
    let mut cfg = config(BASE);
    cfg.scan.shots_per_point = Shots::Analytic;
    cfg.readout.accuracy = 0.98;
    let run = pump_scan_fit(&cfg).unwrap();
    let truth = run.pump.outcome.final_state.f3_populations();
    for (fit, t) in run.fit.parameters.populations.iter().zip(&truth) {
        assert!((fit - 0.96 * t).abs() < 1e-6);
    }
}

#[test]
fn random_state_after_repump_fits_to_unit_sum() {
    // Repump-only preparation: an arbitrary state pushed back into F=3.
    let cfg = config(
        r#"{"atom": {"omega_b_hz": 910000, "omega_0_hz": 120000},
            "readout": {"accuracy": 1.0, "background_p4": 0.006},
            "scan": {"shots_per_point": 1000}}"#,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let raw: Vec<f64> = (0..NUM_STATES)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let total: f64 = raw.iter().sum();
        let pops: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let state = apply_repump(
            &PopulationState::from_slice(&pops).unwrap(),
            &RepumpModel::ideal_uniform(),
        );
        let mut cfg = cfg.clone();
        cfg.scan.rng_seed = Some(seed);
        let (_, _, fit) = scan_and_fit(&cfg, &state).unwrap();
        worst = worst.max((fit.population_sum - 1.0).abs());
    }
    assert!(worst <= 0.08, "worst |sum - 1| = {worst}");
}

#[test]
fn shipped_config_round_trips_through_serde() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/headline_m1.json");
    let file = RunConfigFile::load(&path).unwrap();
    let text = serde_json::to_string(&file).unwrap();
    assert_eq!(RunConfigFile::from_json(&text).unwrap(), file);
    let cfg = file.resolve().unwrap();
    assert_eq!(cfg.protocol.target_m, 1);
    assert_eq!(cfg.noise_chain.notch_center_hz, 910e3);
    assert_eq!(cfg.noise_chain.carrier_offset_hz, 910e3);
    assert_eq!(NUM_TRANSITIONS, 7);
}
