//! Two-tap convolution that places an exact array-factor null at the
//! interference angle.
//!
//! On the design subcarrier a column `c` has array factor
//! `AF(theta) = sum_l c_l beta_l z^l`, with `beta_l = exp(-j 2 pi d_l / lambda_n)` and
//! `z = exp(-j slope sin(theta))`. Writing `u_l = c_l beta_l`, the polynomial
//! `U(z) (1 - z / z_i)` vanishes at `z_i`, i.e. convolving `u` with the kernel
//! `[1, -exp(+j slope sin(theta_i))]`. For half-wavelength spacing on the
//! carrier this is `[1, -exp(j pi sin(theta_i))]`: the sign of the phase is
//! the opposite of the steering phase. Dividing the result by `beta_l`
//! returns to RIS weights.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{ArrayManifold, RisConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NotchMode {
    /// Input has L-1 active rows (last row zero); the output uses all L.
    #[default]
    Convolution,
    /// Input has L active rows; the last is dropped before convolving.
    Truncation,
}

/// The 2-tap kernel `[1, -exp(+j slope sin(theta_i))]` on subcarrier `n`.
pub fn notch_kernel(manifold: &ArrayManifold, n: usize, theta_i_deg: f64) -> [Complex64; 2] {
    let slope = manifold.phase_slope(n);
    [
        Complex64::new(1.0, 0.0),
        -Complex64::from_polar(1.0, slope * theta_i_deg.to_radians().sin()),
    ]
}

/// Convolves every effective column with the notch kernel of
/// `design_subcarrier`. The output amplitudes are generally not unit modulus.
pub fn convolve_notch(
    manifold: &ArrayManifold,
    ris: &RisConfig,
    theta_i_deg: f64,
    mode: NotchMode,
    design_subcarrier: usize,
) -> Result<RisConfig> {
    if !(theta_i_deg > -90.0 && theta_i_deg < 90.0) {
        return Err(Error::InvalidAngle(theta_i_deg));
    }
    if design_subcarrier >= manifold.n_subcarriers() {
        return Err(Error::SubcarrierOutOfRange {
            index: design_subcarrier,
            n: manifold.n_subcarriers(),
        });
    }
    let l = ris.n_elements();
    if l != manifold.n_elements() || l < 2 {
        return Err(Error::DimensionMismatch {
            context: "RIS elements vs geometry",
            expected: manifold.n_elements().to_string(),
            got: l.to_string(),
        });
    }
    let eff = ris.effective();
    if mode == NotchMode::Convolution && eff.row(l - 1).iter().any(|v| v.norm() > 0.0) {
        return Err(Error::Config(
            "convolution mode needs the last RIS element switched off; use truncation mode".into(),
        ));
    }
    let beta = manifold.distance_phasors(design_subcarrier);
    let [h0, h1] = notch_kernel(manifold, design_subcarrier, theta_i_deg);
    let out = Array2::from_shape_fn(eff.dim(), |(i, k)| {
        let u = |j: usize| eff[[j, k]] * beta[j];
        let cur = if i < l - 1 { u(i) * h0 } else { Complex64::new(0.0, 0.0) };
        let prev = if i > 0 { u(i - 1) * h1 } else { Complex64::new(0.0, 0.0) };
        (cur + prev) / beta[i]
    });
    Ok(RisConfig::from_effective(&out))
}
