//! Python bindings: scene constants, frame synthesis, angle estimation,
//! RIS training and range-velocity localization.
//!
//! Every function takes an optional TOML config string in the same format
//! as the CLI; without one the reference scene is used.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use risradar::config::ExperimentConfig;
use risradar::doa::estimate_angles as music;
use risradar::experiments::train_and_convolve;
use risradar::risopt::{evaluate_sinr, pattern_gain_at};
use risradar::rvmap::{apparent_range_m, measure_target};
use risradar::scene::{derive_constants, SceneConfig};
use risradar::waveform::{synthesize, ArrayManifold, RisConfig, SymbolBook};

fn err(e: risradar::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load(config: Option<&str>) -> PyResult<ExperimentConfig> {
    match config {
        Some(text) => ExperimentConfig::from_toml_str(text).map_err(err),
        None => Ok(ExperimentConfig::new(SceneConfig::reference())),
    }
}

/// Probing frame with a random-phase surface, as `simulate` writes it.
fn probe(scene: &SceneConfig, seed: u64) -> risradar::Result<(RisConfig, risradar::waveform::SymbolGrid)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ris = RisConfig::random(scene.n_ris_elements, scene.n_symbols, &mut rng);
    let book = SymbolBook::probing(scene.n_subcarriers, scene.n_symbols, scene.psk_order, seed);
    let grid = synthesize(scene, &ris, &book, true, &mut rng)?;
    Ok((ris, grid))
}

/// The reference scene as TOML.
#[pyfunction]
fn reference_config() -> PyResult<String> {
    ExperimentConfig::new(SceneConfig::reference()).to_toml_string().map_err(err)
}

#[pyfunction]
#[pyo3(signature = (config=None))]
fn constants<'py>(py: Python<'py>, config: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config)?;
    let c = derive_constants(&cfg.scene).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("delta_f_hz", c.delta_f_hz)?;
    d.set_item("symbol_period_s", c.symbol_period_s)?;
    d.set_item("unambiguous_range_m", c.unambiguous_range_m)?;
    d.set_item("range_resolution_m", c.range_resolution_m)?;
    d.set_item("velocity_resolution_mps", c.velocity_resolution_mps)?;
    d.set_item("alias_warnings", cfg.scene.alias_warnings(&c))?;
    Ok(d)
}

/// Received grid (subcarrier rows, symbol columns) and the per-slot
/// surface coefficients (element rows).
#[pyfunction]
#[pyo3(signature = (config=None, seed=0))]
fn simulate(config: Option<&str>, seed: u64) -> PyResult<(Vec<Vec<Complex64>>, Vec<Vec<Complex64>>)> {
    let cfg = load(config)?;
    let (ris, grid) = probe(&cfg.scene, seed).map_err(err)?;
    let rows = |m: &ndarray::Array2<Complex64>| m.rows().into_iter().map(|r| r.to_vec()).collect();
    Ok((rows(&grid.data), rows(&ris.matrix())))
}

/// Target and interference angles in degrees.
#[pyfunction]
#[pyo3(signature = (config=None, seed=0))]
fn estimate_angles(config: Option<&str>, seed: u64) -> PyResult<(f64, f64)> {
    let cfg = load(config)?;
    let manifold = ArrayManifold::from_scene(&cfg.scene).map_err(err)?;
    let (ris, grid) = probe(&cfg.scene, seed).map_err(err)?;
    let mut opts = cfg.train.estimate.clone();
    opts.angle_grid = cfg.scene.angle_grid;
    let est = music(&manifold, &grid, &ris, &opts).map_err(err)?;
    Ok((est.theta_target, est.theta_interf))
}

/// Trains the surface for blend weight `beta`, applies the notch and
/// reports SINR and interference gain before and after.
#[pyfunction]
#[pyo3(signature = (beta, config=None))]
fn train<'py>(py: Python<'py>, beta: f64, config: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config)?;
    let scene = &cfg.scene;
    let t = py.detach(|| train_and_convolve(scene, beta, &cfg.train)).map_err(err)?;
    let manifold = ArrayManifold::from_scene(scene).map_err(err)?;
    let (tt, ti) = (scene.target.angle_deg, scene.interferer.angle_deg);
    let all: Vec<usize> = (0..scene.n_subcarriers).collect();
    let r = &t.report;
    let d = PyDict::new(py);
    d.set_item("initial_sinr_db", r.initial_sinr_db)?;
    d.set_item("sinr_db", r.final_sinr_db)?;
    d.set_item(
        "convolved_sinr_db",
        evaluate_sinr(&manifold, &t.convolved, tt, ti, scene.noise_power, &all).map_err(err)?,
    )?;
    let grid = scene.angle_grid;
    d.set_item("interference_gain_db", pattern_gain_at(&manifold, &r.final_ris, &grid, 0, ti).map_err(err)?)?;
    d.set_item(
        "convolved_interference_gain_db",
        pattern_gain_at(&manifold, &t.convolved, &grid, 0, ti).map_err(err)?,
    )?;
    d.set_item("theta_hat", (r.final_theta_t_hat, r.final_theta_i_hat))?;
    d.set_item("best_iteration", r.best_iteration)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

/// One range-velocity measurement through a random surface.
#[pyfunction]
#[pyo3(signature = (config=None, seed=0))]
fn localize<'py>(py: Python<'py>, config: Option<&str>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let cfg = load(config)?;
    let scene = &cfg.scene;
    let consts = derive_constants(scene).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ris = RisConfig::random(scene.n_ris_elements, scene.n_symbols, &mut rng);
    let est = measure_target(scene, &consts, &ris, seed, &mut rng, cfg.sweep.window, &cfg.sweep.detection)
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("range_hat_m", est.range_hat_m)?;
    d.set_item("velocity_hat_mps", est.velocity_hat_mps)?;
    d.set_item("apparent_range_m", apparent_range_m(scene).map_err(err)?)?;
    d.set_item("alias_flag", est.alias_flag)?;
    Ok(d)
}

#[pymodule]
fn pyrisradar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(reference_config, m)?)?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_angles, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    Ok(())
}
