//! Symbol-domain synthesis of the received OFDM radar frame.
//!
//! Everything here lives after the receiver FFT and the division by the
//! victim's own transmitted symbols, so a frame is an N x M grid
//! `y[n, m]` (subcarrier x OFDM symbol). The target echo and the interfering
//! radar both reach the receiver through the RIS; the line-of-sight leakage
//! does not.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{
    delay_of, derive_constants, doppler_of, DerivedConstants, RisGeometry, SceneConfig,
};

/// Geometry plus numerology: everything needed to evaluate `b_n(theta)`.
#[derive(Debug, Clone)]
pub struct ArrayManifold {
    pub geometry: RisGeometry,
    pub consts: DerivedConstants,
}

impl ArrayManifold {
    pub fn new(geometry: RisGeometry, consts: DerivedConstants) -> Self {
        Self { geometry, consts }
    }

    pub fn from_scene(cfg: &SceneConfig) -> Result<Self> {
        Ok(Self::new(cfg.geometry()?, derive_constants(cfg)?))
    }

    pub fn n_elements(&self) -> usize {
        self.geometry.n_elements()
    }

    pub fn n_subcarriers(&self) -> usize {
        self.consts.n_subcarriers()
    }

    /// Per-element phasors `exp(-j 2 pi d_l / lambda_n)`.
    pub fn distance_phasors(&self, n: usize) -> Array1<Complex64> {
        let lambda_n = self.consts.subcarrier_wavelengths_m[n];
        self.geometry
            .element_to_rx_dist_m
            .iter()
            .map(|&d| Complex64::from_polar(1.0, -2.0 * PI * d / lambda_n))
            .collect()
    }

    /// Inter-element phase slope per unit `sin(theta)` on subcarrier `n`:
    /// element `l` picks up `exp(-j * slope * l * sin(theta))`.
    pub fn phase_slope(&self, n: usize) -> f64 {
        let kappa = self.consts.carrier_wavelength_m / self.consts.subcarrier_wavelengths_m[n];
        2.0 * PI * self.geometry.element_spacing_wavelengths * kappa
    }

    /// Unchecked steering vector, angle in radians.
    pub fn steering(&self, n: usize, theta_rad: f64) -> Array1<Complex64> {
        let base = self.distance_phasors(n);
        let z = Complex64::from_polar(1.0, -self.phase_slope(n) * theta_rad.sin());
        let mut acc = Complex64::new(1.0, 0.0);
        base.iter()
            .map(|&b| {
                let v = b * acc;
                acc *= z;
                v
            })
            .collect()
    }
}

/// Steering vector of the RIS seen from the receiver on subcarrier `n`.
///
/// Element `l` (0-based) is `exp(-j 2 pi d_l / lambda_n) * exp(-j 2 pi s (lambda / lambda_n) l sin(theta))`
/// with `s` the element spacing in carrier wavelengths.
pub fn steering_vector(
    n: usize,
    theta_deg: f64,
    geom: &RisGeometry,
    consts: &DerivedConstants,
) -> Result<Array1<Complex64>> {
    if n >= consts.n_subcarriers() {
        return Err(Error::SubcarrierOutOfRange {
            index: n,
            n: consts.n_subcarriers(),
        });
    }
    if !(theta_deg > -90.0 && theta_deg < 90.0) {
        return Err(Error::InvalidAngle(theta_deg));
    }
    let manifold = ArrayManifold::new(geom.clone(), consts.clone());
    Ok(manifold.steering(n, theta_deg.to_radians()))
}

/// The L x M RIS configuration matrix `C[l, m] = a[l, m] * exp(j phi[l, m]) * s[m]`.
///
/// Consecutive slot pairs `(2k, 2k+1)` carry opposite signs so that their
/// difference removes the line-of-sight leakage. Folding the signs back out
/// leaves `M/2` effective columns, see [`RisConfig::effective`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisConfig {
    pub phases: Array2<f64>,
    pub amplitudes: Array2<f64>,
    pub sign_pattern: Vec<f64>,
}

impl RisConfig {
    pub fn new(phases: Array2<f64>, amplitudes: Array2<f64>, sign_pattern: Vec<f64>) -> Result<Self> {
        if phases.dim() != amplitudes.dim() {
            return Err(Error::DimensionMismatch {
                context: "RIS amplitudes",
                expected: format!("{:?}", phases.dim()),
                got: format!("{:?}", amplitudes.dim()),
            });
        }
        let (l, m) = phases.dim();
        if l == 0 || m == 0 || m % 2 != 0 {
            return Err(Error::Config(format!(
                "RIS matrix must be non-empty with an even slot count, got {l}x{m}"
            )));
        }
        if sign_pattern.len() != m {
            return Err(Error::DimensionMismatch {
                context: "RIS sign pattern",
                expected: m.to_string(),
                got: sign_pattern.len().to_string(),
            });
        }
        let pairs_ok = sign_pattern
            .chunks(2)
            .all(|p| (p[0] == 1.0 || p[0] == -1.0) && p[1] == -p[0]);
        if !pairs_ok {
            return Err(Error::Config(
                "sign pattern must be +-1 and alternate within slot pairs".into(),
            ));
        }
        if phases.iter().chain(amplitudes.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("RIS configuration"));
        }
        Ok(Self {
            phases,
            amplitudes,
            sign_pattern,
        })
    }

    /// `[+1, -1, +1, -1, ...]`.
    pub fn alternating_signs(n_slots: usize) -> Vec<f64> {
        (0..n_slots)
            .map(|m| if m % 2 == 0 { 1.0 } else { -1.0 })
            .collect()
    }

    /// All-zero phases (C = all ones up to the sign pattern).
    pub fn uniform(n_elements: usize, n_slots: usize) -> Self {
        Self::from_effective_phases(&Array2::zeros((n_elements, n_slots / 2)))
    }

    /// Independent uniform phases per element and effective slot.
    pub fn random<R: Rng + ?Sized>(n_elements: usize, n_slots: usize, rng: &mut R) -> Self {
        let eff = Array2::from_shape_fn((n_elements, n_slots / 2), |_| {
            rng.random_range(-PI..PI)
        });
        Self::from_effective_phases(&eff)
    }

    /// Unit-modulus configuration from an L x M_eff phase matrix; each
    /// effective column drives both slots of its pair.
    pub fn from_effective_phases(phases_eff: &Array2<f64>) -> Self {
        let amps = Array2::ones(phases_eff.dim());
        Self::from_effective_parts(phases_eff, &amps)
    }

    /// Configuration whose effective matrix equals `eff` exactly.
    pub fn from_effective(eff: &Array2<Complex64>) -> Self {
        let phases = eff.mapv(|c| c.arg());
        let amps = eff.mapv(|c| c.norm());
        Self::from_effective_parts(&phases, &amps)
    }

    fn from_effective_parts(phases_eff: &Array2<f64>, amps_eff: &Array2<f64>) -> Self {
        let (l, k) = phases_eff.dim();
        let m = 2 * k;
        let phases = Array2::from_shape_fn((l, m), |(i, j)| phases_eff[[i, j / 2]]);
        let amplitudes = Array2::from_shape_fn((l, m), |(i, j)| amps_eff[[i, j / 2]]);
        Self {
            phases,
            amplitudes,
            sign_pattern: Self::alternating_signs(m),
        }
    }

    pub fn n_elements(&self) -> usize {
        self.phases.nrows()
    }

    pub fn n_slots(&self) -> usize {
        self.phases.ncols()
    }

    pub fn n_effective(&self) -> usize {
        self.n_slots() / 2
    }

    /// Full signed L x M matrix C.
    pub fn matrix(&self) -> Array2<Complex64> {
        let mut c = Array2::zeros(self.phases.dim());
        Zip::indexed(&mut c).for_each(|(l, m), v| {
            *v = Complex64::from_polar(self.amplitudes[[l, m]], self.phases[[l, m]])
                * self.sign_pattern[m];
        });
        c
    }

    /// L x M/2 matrix seen after folding out the slot-pair signs:
    /// column k is `(s[2k] C[:, 2k] + s[2k+1] C[:, 2k+1]) / 2`.
    pub fn effective(&self) -> Array2<Complex64> {
        let c = self.matrix();
        let (l, m) = c.dim();
        Array2::from_shape_fn((l, m / 2), |(i, k)| {
            (c[[i, 2 * k]] * self.sign_pattern[2 * k]
                + c[[i, 2 * k + 1]] * self.sign_pattern[2 * k + 1])
                * 0.5
        })
    }

    /// The configuration -C.
    pub fn negated(&self) -> Self {
        Self {
            phases: self.phases.clone(),
            amplitudes: self.amplitudes.clone(),
            sign_pattern: self.sign_pattern.iter().map(|s| -s).collect(),
        }
    }

    /// The configuration z * C.
    pub fn scaled(&self, z: Complex64) -> Self {
        Self {
            phases: self.phases.mapv(|p| p + z.arg()),
            amplitudes: self.amplitudes.mapv(|a| a * z.norm()),
            sign_pattern: self.sign_pattern.clone(),
        }
    }

    pub fn is_unit_modulus(&self, tol: f64) -> bool {
        self.amplitudes.iter().all(|a| (a - 1.0).abs() <= tol)
    }
}

/// Transmitted PSK symbols of the victim and of the interfering radar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolBook {
    pub victim: Array2<Complex64>,
    pub interferer: Array2<Complex64>,
    pub psk_order: usize,
}

const VICTIM_STREAM: u64 = 1;
const INTERFERER_STREAM: u64 = 2;

fn psk_symbols(
    n: usize,
    m: usize,
    order: usize,
    seed: u64,
    stream: u64,
    hold_over_slots: bool,
) -> Array2<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut draw = || {
        let k = rng.random_range(0..order);
        Complex64::from_polar(1.0, 2.0 * PI * k as f64 / order as f64)
    };
    if hold_over_slots {
        let per_row: Vec<Complex64> = (0..n).map(|_| draw()).collect();
        Array2::from_shape_fn((n, m), |(i, _)| per_row[i])
    } else {
        let mut out = Array2::zeros((n, m));
        out.iter_mut().for_each(|v| *v = draw());
        out
    }
}

impl SymbolBook {
    /// Independent PSK symbols on every resource element (a data frame).
    pub fn random(n: usize, m: usize, psk_order: usize, seed: u64) -> Self {
        Self {
            victim: psk_symbols(n, m, psk_order, seed, VICTIM_STREAM, false),
            interferer: psk_symbols(n, m, psk_order, seed, INTERFERER_STREAM, false),
            psk_order,
        }
    }

    /// Stationary probing frame: each subcarrier repeats one symbol over all
    /// slots, for both radars, so the per-subcarrier path gains are constant
    /// across the frame.
    pub fn probing(n: usize, m: usize, psk_order: usize, seed: u64) -> Self {
        Self {
            victim: psk_symbols(n, m, psk_order, seed, VICTIM_STREAM, true),
            interferer: psk_symbols(n, m, psk_order, seed, INTERFERER_STREAM, true),
            psk_order,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.victim.dim()
    }
}

/// Demodulated N x M observation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    pub data: Array2<Complex64>,
    pub seed: u64,
}

impl SymbolGrid {
    pub fn new(data: Array2<Complex64>, seed: u64) -> Result<Self> {
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("symbol grid"));
        }
        Ok(Self { data, seed })
    }

    pub fn n_subcarriers(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_symbols(&self) -> usize {
        self.data.ncols()
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Multiplies every slot by its RIS sign so the RIS paths see the
    /// unsigned configuration.
    pub fn compensate_signs(&self, ris: &RisConfig) -> Result<Self> {
        if ris.n_slots() != self.n_symbols() {
            return Err(Error::DimensionMismatch {
                context: "sign compensation",
                expected: self.n_symbols().to_string(),
                got: ris.n_slots().to_string(),
            });
        }
        let mut data = self.data.clone();
        for (mut col, &s) in data.columns_mut().into_iter().zip(&ris.sign_pattern) {
            col.mapv_inplace(|v| v * s);
        }
        Ok(Self {
            data,
            seed: self.seed,
        })
    }
}

/// Synthesizes `y[n, m]` for the two RIS paths, optional LoS leakage, and
/// circular Gaussian noise of variance `noise_power` drawn from `rng`.
///
/// Per element:
/// `eta_t e^{-j2pi n df tau_t} e^{j2pi fc nu_t m T} C_m^T b_n(theta_t)
///  + eta_i (d_i/d_v) e^{-j2pi n df tau_i} e^{j2pi fc nu_i m T} C_m^T b_n(theta_i)
///  + g_los e^{-j2pi n df tau_los} + z`.
pub fn synthesize<R: Rng + ?Sized>(
    cfg: &SceneConfig,
    ris: &RisConfig,
    book: &SymbolBook,
    include_los: bool,
    rng: &mut R,
) -> Result<SymbolGrid> {
    let (n_sc, m_sym, l) = (cfg.n_subcarriers, cfg.n_symbols, cfg.n_ris_elements);
    if ris.phases.dim() != (l, m_sym) {
        return Err(Error::DimensionMismatch {
            context: "RIS configuration vs scene",
            expected: format!("({l}, {m_sym})"),
            got: format!("{:?}", ris.phases.dim()),
        });
    }
    if book.dim() != (n_sc, m_sym) {
        return Err(Error::DimensionMismatch {
            context: "symbol book vs scene",
            expected: format!("({n_sc}, {m_sym})"),
            got: format!("{:?}", book.dim()),
        });
    }
    for g in [cfg.target.gain, cfg.interferer.gain, cfg.los.gain] {
        if !g.re.is_finite() || !g.im.is_finite() {
            return Err(Error::NonFinite("path gain"));
        }
    }
    let manifold = ArrayManifold::from_scene(cfg)?;
    let consts = &manifold.consts;
    let c = ris.matrix();

    let tau_t = delay_of(&cfg.target);
    let tau_i = delay_of(&cfg.interferer);
    let tau_los = 2.0 * cfg.los.range_m / crate::scene::SPEED_OF_LIGHT;
    let doppler_step_t = 2.0 * PI * consts.carrier_freq_hz * doppler_of(&cfg.target) * consts.symbol_period_s;
    let doppler_step_i =
        2.0 * PI * consts.carrier_freq_hz * doppler_of(&cfg.interferer) * consts.symbol_period_s;
    let theta_t = cfg.target.angle_deg.to_radians();
    let theta_i = cfg.interferer.angle_deg.to_radians();
    let noise_std = (cfg.noise_power / 2.0).sqrt();

    let mut data = Array2::zeros((n_sc, m_sym));
    for n in 0..n_sc {
        let b_t = manifold.steering(n, theta_t);
        let b_i = manifold.steering(n, theta_i);
        let range_phase = |tau: f64| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * consts.delta_f_hz * tau);
        let a_t = cfg.target.gain * range_phase(tau_t);
        let a_i = cfg.interferer.gain * range_phase(tau_i);
        let los = if include_los {
            cfg.los.gain * range_phase(tau_los)
        } else {
            Complex64::new(0.0, 0.0)
        };
        for m in 0..m_sym {
            let col = c.column(m);
            let gain_t: Complex64 = col.iter().zip(b_t.iter()).map(|(a, b)| a * b).sum();
            let gain_i: Complex64 = col.iter().zip(b_i.iter()).map(|(a, b)| a * b).sum();
            let ratio = book.interferer[[n, m]] / book.victim[[n, m]];
            let mf = m as f64;
            let target = a_t * Complex64::from_polar(1.0, doppler_step_t * mf) * gain_t;
            let interf = a_i * ratio * Complex64::from_polar(1.0, doppler_step_i * mf) * gain_i;
            data[[n, m]] = target + interf + los;
        }
    }
    if noise_std > 0.0 {
        for v in data.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re, im) * noise_std;
        }
    }
    SymbolGrid::new(data, cfg.rng_seed)
}

/// Removes the LoS leakage from two frames acquired with `C` and `-C` and
/// identical symbols: `(even - odd) / 2`.
pub fn cancel_los(raw_even: &SymbolGrid, raw_odd: &SymbolGrid) -> Result<SymbolGrid> {
    if raw_even.data.dim() != raw_odd.data.dim() {
        return Err(Error::DimensionMismatch {
            context: "LoS cancellation",
            expected: format!("{:?}", raw_even.data.dim()),
            got: format!("{:?}", raw_odd.data.dim()),
        });
    }
    let data = (&raw_even.data - &raw_odd.data).mapv(|v| v * 0.5);
    SymbolGrid::new(data, raw_even.seed)
}
