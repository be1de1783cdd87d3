//! End-to-end paths through config, allocation, simulation and CSV output.

use sensmat::alloc::Allocator;
use sensmat::config::{parse_config, RawConfig};
use sensmat::energy::{expected_sensings, total_search_energy, HandoverTerm};
use sensmat::experiments::{run_experiment_sweep, Preset};
use sensmat::sim::{run_simulation, SimConfig};
use sensmat::table::{emit_csv, parse_csv};
use sensmat::throughput::expected_throughput_exact;

fn sim_config(text: &str) -> SimConfig {
    let cfg = parse_config(text).unwrap();
    SimConfig {
        profile: cfg.profile(),
        timing: cfg.timing(),
        quality: cfg.quality(),
        energy: cfg.energy(),
        ns: cfg.ns,
        n_slots: cfg.n_slots,
        seed: cfg.seed,
        allocator: Allocator::Sms,
        rebuild_per_slot: false,
    }
}

#[test]
fn simulated_sms_throughput_matches_exact() {
    let sc = sim_config("sensing = error_free\nn_slots = 40000\nseed = 3\ntau_ms = 2\n");
    let r = run_simulation(&sc).unwrap();
    let exact = expected_throughput_exact(&r.first_matrix, &sc.profile, &sc.timing).unwrap();
    assert!((r.network_throughput - exact).abs() <= 3.0 * r.network_throughput_se);
}

#[test]
fn simulated_sensings_match_exact_count_not_accounting_form() {
    let sc = sim_config("sensing = error_free\nn_slots = 40000\nseed = 5\np0 = [0.4, 0.5, 0.3, 0.2, 0.6]\n");
    let r = run_simulation(&sc).unwrap();
    let sm = &r.first_matrix;
    let exact: f64 = (0..sm.ns()).map(|su| expected_sensings(&sm.sequence(su), &sc.profile)).sum();
    assert!((r.sensings_per_slot - exact).abs() <= 3.0 * r.sensings_per_slot_se);
    let accounted = total_search_energy(sm, &sc.profile, &sc.energy, HandoverTerm::Drop);
    assert!(accounted > exact);
}

#[test]
fn fig4_csv_file_round_trip() {
    let preset = Preset::Fig4;
    let cfg = preset
        .configure(RawConfig::parse("n_slots = 500\nsweep_values = [2, 1]\n").unwrap())
        .unwrap();
    let table = run_experiment_sweep(preset, &cfg).unwrap();
    assert_eq!(table.numbers("tau_ms").unwrap(), vec![1.0, 2.0]);
    let path = std::env::temp_dir().join(format!("sensmat-fig4-{}.csv", std::process::id()));
    emit_csv(&table, &path).unwrap();
    let back = parse_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(back.to_csv_string().unwrap(), table.to_csv_string().unwrap());
    for col in ["sms_sim", "optimal_analytic"] {
        for (a, b) in back.numbers(col).unwrap().iter().zip(table.numbers(col).unwrap()) {
            assert!((a - b).abs() <= 1e-8 * b.abs());
        }
    }
    assert_eq!(back.meta_value("config_digest"), Some(cfg.digest().as_str()));
    for gap in back.numbers("relative_gap").unwrap() {
        assert!(gap <= 0.03);
    }
}

#[test]
fn missing_directory_error_names_path() {
    let table = sensmat::table::Table::new(&["x"]);
    let err = emit_csv(&table, std::path::Path::new("/nonexistent-dir/out.csv")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
}

#[test]
fn fig8_unit_persistence_row_is_msms() {
    let preset = Preset::Fig8;
    let cfg = preset
        .configure(RawConfig::parse("n_slots = 2000\nsweep_values = [1.0]\n").unwrap())
        .unwrap();
    let t = run_experiment_sweep(preset, &cfg).unwrap();
    assert_eq!(t.numbers("pmsms").unwrap(), t.numbers("msms").unwrap());
}

#[test]
fn fig6_energy_non_increasing() {
    let preset = Preset::Fig6;
    let cfg = preset.configure(RawConfig::parse("n_slots = 4000\n").unwrap()).unwrap();
    let t = run_experiment_sweep(preset, &cfg).unwrap();
    for col in ["sms_energy_exact", "optimal_energy_exact", "closed_form"] {
        let v = t.numbers(col).unwrap();
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{col}: {v:?}");
    }
}
