use std::path::PathBuf;

use proptest::prelude::*;
use risradar::config::ExperimentConfig;
use risradar::scene::{derive_constants, SceneConfig, SPEED_OF_LIGHT};

fn shipped_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

#[test]
fn shipped_config_is_the_reference_scene() {
    let cfg = ExperimentConfig::from_path(&shipped_config()).unwrap();
    assert_eq!(cfg, ExperimentConfig::new(SceneConfig::reference()));
}

#[test]
fn reference_scene_aliases_the_target() {
    let scene = SceneConfig::reference();
    let consts = derive_constants(&scene).unwrap();
    let warnings = scene.alias_warnings(&consts);
    assert_eq!(warnings.len(), 2, "{warnings:?}");
    assert!(warnings[0].starts_with("target"));
    assert!((consts.fold_range(30.0) - (30.0 - 2.0 * consts.unambiguous_range_m)).abs() < 1e-9);
}

#[test]
fn bad_values_name_their_key() {
    let text = std::fs::read_to_string(shipped_config()).unwrap();
    let err = ExperimentConfig::from_toml_str(&text.replace("n_symbols = 100", "n_symbols = 99"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("n_symbols"), "{err}");
    let err = ExperimentConfig::from_toml_str(&text.replace("step = 0.1", "stpe = 0.1"))
        .unwrap_err()
        .to_string();
    assert!(err.contains("angle_grid_deg") && err.contains("stpe"), "{err}");
}

proptest! {
    #[test]
    fn constants_follow_the_numerology(
        fc in 1e9f64..1e11, bw in 1e6f64..1e9, n in 2usize..256, m in 2usize..200,
    ) {
        let mut cfg = SceneConfig::reference();
        cfg.carrier_freq_hz = fc;
        cfg.bandwidth_hz = bw;
        cfg.n_subcarriers = n;
        cfg.n_symbols = 2 * m;
        let c = derive_constants(&cfg).unwrap();
        let df = bw / n as f64;
        prop_assert!((c.delta_f_hz - df).abs() <= 1e-12 * df);
        prop_assert!((c.range_resolution_m * n as f64 - c.unambiguous_range_m).abs() <= 1e-9 * c.unambiguous_range_m);
        let v = SPEED_OF_LIGHT / (2.0 * fc * (2 * m) as f64 * c.symbol_period_s);
        prop_assert!((c.velocity_resolution_mps - v).abs() <= 1e-12 * v);
        prop_assert!(c.subcarrier_wavelengths_m.windows(2).all(|w| w[1] < w[0]));
    }
}
