//! RIS tuning: the angle-to-phase network, the beta-weighted loss, the
//! closed estimation/training loop, the convolution notch, and the SINR and
//! beam-pattern figures of merit.

pub mod loss;
pub mod mlp;
pub mod notch;
pub mod train;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::AngleGrid;
use crate::waveform::{ArrayManifold, RisConfig};

pub use loss::{loss_gradient, LossBreakdown, LossSetup, PhaseGradient};
pub use mlp::{mlp_forward, MlpModel, OutputHead};
pub use notch::{convolve_notch, notch_kernel, NotchMode};
pub use train::{train, IterationRecord, Optimizer, TrainParams, TrainReport};

/// Beam-pattern floor so exact nulls stay finite in dB.
pub const PATTERN_FLOOR_DB: f64 = -300.0;

fn array_gain(manifold: &ArrayManifold, c_eff: &Array2<Complex64>, n: usize, theta_deg: f64) -> f64 {
    let b = manifold.steering(n, theta_deg.to_radians());
    c_eff.t().dot(&b).iter().map(|v| v.norm_sqr()).sum()
}

fn check_subcarriers(manifold: &ArrayManifold, subcarriers: &[usize]) -> Result<()> {
    if subcarriers.is_empty() {
        return Err(Error::EmptySubcarrierSet);
    }
    match subcarriers.iter().find(|&&n| n >= manifold.n_subcarriers()) {
        Some(&n) => Err(Error::SubcarrierOutOfRange {
            index: n,
            n: manifold.n_subcarriers(),
        }),
        None => Ok(()),
    }
}

fn check_elements(manifold: &ArrayManifold, ris: &RisConfig) -> Result<()> {
    if ris.n_elements() != manifold.n_elements() {
        return Err(Error::DimensionMismatch {
            context: "RIS elements vs geometry",
            expected: manifold.n_elements().to_string(),
            got: ris.n_elements().to_string(),
        });
    }
    Ok(())
}

/// `10 log10( sum_n ||C^T b_n(theta_t)||^2 / (sum_n ||C^T b_n(theta_i)||^2 + sigma^2) )`
/// over the effective (sign-folded) configuration.
pub fn evaluate_sinr(
    manifold: &ArrayManifold,
    ris: &RisConfig,
    theta_t_deg: f64,
    theta_i_deg: f64,
    sigma2: f64,
    subcarriers: &[usize],
) -> Result<f64> {
    check_subcarriers(manifold, subcarriers)?;
    check_elements(manifold, ris)?;
    let c = ris.effective();
    let sig: f64 = subcarriers.iter().map(|&n| array_gain(manifold, &c, n, theta_t_deg)).sum();
    let int: f64 = subcarriers.iter().map(|&n| array_gain(manifold, &c, n, theta_i_deg)).sum();
    Ok(10.0 * (sig / (int + sigma2)).log10())
}

/// Target-over-interference array gain in dB, summed over `subcarriers`.
pub fn gain_advantage_db(
    manifold: &ArrayManifold,
    ris: &RisConfig,
    theta_t_deg: f64,
    theta_i_deg: f64,
    subcarriers: &[usize],
) -> Result<f64> {
    check_subcarriers(manifold, subcarriers)?;
    check_elements(manifold, ris)?;
    let c = ris.effective();
    let sig: f64 = subcarriers.iter().map(|&n| array_gain(manifold, &c, n, theta_t_deg)).sum();
    let int: f64 = subcarriers.iter().map(|&n| array_gain(manifold, &c, n, theta_i_deg)).sum();
    Ok(10.0 * (sig / int).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternPoint {
    pub angle_deg: f64,
    pub gain_db: f64,
}

/// `||C^T b_n(theta)||^2` over the grid, normalized to its maximum, in dB.
pub fn beam_pattern(
    manifold: &ArrayManifold,
    ris: &RisConfig,
    grid: &AngleGrid,
    subcarrier: usize,
) -> Result<Vec<PatternPoint>> {
    grid.validate()?;
    check_subcarriers(manifold, &[subcarrier])?;
    check_elements(manifold, ris)?;
    let kernel = crate::doa::NullSpectrum::new(manifold, subcarrier, &ris.effective(), None)?;
    let pts = grid.points();
    let gains: Vec<f64> = pts.iter().map(|&a| kernel.eval_deg(a)).collect();
    let peak = gains.iter().copied().fold(0.0, f64::max);
    Ok(pts
        .iter()
        .zip(gains)
        .map(|(&angle_deg, g)| PatternPoint {
            angle_deg,
            gain_db: if peak > 0.0 && g > 0.0 {
                (10.0 * (g / peak).log10()).max(PATTERN_FLOOR_DB)
            } else {
                PATTERN_FLOOR_DB
            },
        })
        .collect())
}

/// Normalized pattern gain in dB at one angle (same normalization as
/// [`beam_pattern`] over `grid`).
pub fn pattern_gain_at(
    manifold: &ArrayManifold,
    ris: &RisConfig,
    grid: &AngleGrid,
    subcarrier: usize,
    theta_deg: f64,
) -> Result<f64> {
    grid.validate()?;
    check_subcarriers(manifold, &[subcarrier])?;
    check_elements(manifold, ris)?;
    let kernel = crate::doa::NullSpectrum::new(manifold, subcarrier, &ris.effective(), None)?;
    let peak = grid
        .points()
        .iter()
        .map(|&a| kernel.eval_deg(a))
        .fold(0.0, f64::max);
    let g = kernel.eval_deg(theta_deg);
    Ok(if g > 0.0 && peak > 0.0 {
        (10.0 * (g / peak).log10()).max(PATTERN_FLOOR_DB)
    } else {
        PATTERN_FLOOR_DB
    })
}
