//! Physical scenario: carrier, OFDM numerology, RIS geometry and the two
//! propagation paths (target echo and interfering radar).
//!
//! Angles are stored in degrees at the API boundary, measured from the RIS
//! broadside, positive toward increasing element index. Everything else is SI.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// One reflecting path seen by the RIS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub angle_deg: f64,
    pub range_m: f64,
    #[serde(default)]
    pub velocity_mps: f64,
    /// Effective complex path amplitude, written `[re, im]` in config files.
    pub gain: Complex64,
}

impl PathSpec {
    pub fn new(angle_deg: f64, range_m: f64, gain: Complex64) -> Self {
        Self {
            angle_deg,
            range_m,
            velocity_mps: 0.0,
            gain,
        }
    }

    fn validate(&self, which: &str) -> Result<()> {
        if !(self.angle_deg > -90.0 && self.angle_deg < 90.0) {
            return Err(Error::Config(format!(
                "{which}.angle_deg = {} must lie in (-90, 90)",
                self.angle_deg
            )));
        }
        if !(self.range_m > 0.0) || !self.range_m.is_finite() {
            return Err(Error::Config(format!(
                "{which}.range_m = {} must be positive",
                self.range_m
            )));
        }
        if !self.velocity_mps.is_finite() || !self.gain.re.is_finite() || !self.gain.im.is_finite()
        {
            return Err(Error::Config(format!("{which} has non-finite fields")));
        }
        Ok(())
    }
}

/// Direct antenna-to-antenna (line-of-sight) leakage. It never touches the RIS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosSpec {
    pub gain: Complex64,
    pub range_m: f64,
}

impl Default for LosSpec {
    fn default() -> Self {
        Self {
            gain: Complex64::new(0.0, 0.0),
            range_m: 0.5,
        }
    }
}

/// Where the receive antenna sits relative to the RIS line array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    #[serde(default = "default_spacing")]
    pub element_spacing_wavelengths: f64,
    /// Distance of the receiver from the array centre along the broadside axis.
    #[serde(default = "default_rx_offset")]
    pub rx_offset_m: f64,
    /// Per-element override of the element-to-receiver distances.
    #[serde(default)]
    pub element_to_rx_dist_m: Option<Vec<f64>>,
}

fn default_spacing() -> f64 {
    0.5
}

fn default_rx_offset() -> f64 {
    1.0
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            element_spacing_wavelengths: default_spacing(),
            rx_offset_m: default_rx_offset(),
            element_to_rx_dist_m: None,
        }
    }
}

/// Resolved RIS geometry: spacing plus the L element-to-receiver distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisGeometry {
    pub element_spacing_wavelengths: f64,
    pub element_to_rx_dist_m: Vec<f64>,
}

impl RisGeometry {
    /// Half-wavelength array with all d_l = 0, the textbook steering vector.
    pub fn colocated(n_elements: usize) -> Self {
        Self {
            element_spacing_wavelengths: 0.5,
            element_to_rx_dist_m: vec![0.0; n_elements],
        }
    }

    pub fn n_elements(&self) -> usize {
        self.element_to_rx_dist_m.len()
    }
}

/// Search grid for spectra and beam patterns, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleGrid {
    #[serde(rename = "start")]
    pub start_deg: f64,
    #[serde(rename = "stop")]
    pub stop_deg: f64,
    #[serde(rename = "step")]
    pub step_deg: f64,
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self {
            start_deg: -90.0,
            stop_deg: 90.0,
            step_deg: 0.1,
        }
    }
}

impl AngleGrid {
    pub fn new(start_deg: f64, stop_deg: f64, step_deg: f64) -> Self {
        Self {
            start_deg,
            stop_deg,
            step_deg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_deg > 0.0) || !(self.stop_deg > self.start_deg) {
            return Err(Error::Config(format!(
                "angle grid needs step > 0 and stop > start (got {:?})",
                self
            )));
        }
        if self.start_deg < -90.0 || self.stop_deg > 90.0 {
            return Err(Error::Config("angle grid must stay within [-90, 90]".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.stop_deg - self.start_deg) / self.step_deg + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.start_deg + i as f64 * self.step_deg)
            .collect()
    }
}

/// Full scenario description. Mirrors the `[scene]` section of a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub n_ris_elements: usize,
    #[serde(default)]
    pub cyclic_prefix_s: f64,
    pub target: PathSpec,
    pub interferer: PathSpec,
    #[serde(default)]
    pub los: LosSpec,
    /// Linear noise variance per demodulated symbol.
    pub noise_power: f64,
    pub rng_seed: u64,
    #[serde(default = "default_psk_order")]
    pub psk_order: usize,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default, rename = "angle_grid_deg")]
    pub angle_grid: AngleGrid,
}

fn default_psk_order() -> usize {
    4
}

impl SceneConfig {
    /// 77 GHz / 200 MHz radar, 20 subcarriers x 100 symbols, 50-element RIS,
    /// target at 20 deg / 30 m and interferer at 50 deg / 15 m.
    pub fn reference() -> Self {
        Self {
            carrier_freq_hz: 77e9,
            bandwidth_hz: 200e6,
            n_subcarriers: 20,
            n_symbols: 100,
            n_ris_elements: 50,
            cyclic_prefix_s: 0.0,
            target: PathSpec::new(20.0, 30.0, Complex64::new(1.0, 0.0)),
            interferer: PathSpec::new(50.0, 15.0, Complex64::new(10f64.sqrt(), 0.0)),
            los: LosSpec {
                gain: Complex64::new(5.0, 0.0),
                range_m: 0.5,
            },
            noise_power: 1.0,
            rng_seed: 1,
            psk_order: 4,
            geometry: GeometrySpec::default(),
            angle_grid: AngleGrid::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers < 2 {
            return Err(Error::Config(format!(
                "n_subcarriers = {} must be at least 2",
                self.n_subcarriers
            )));
        }
        if self.n_symbols < 4 || self.n_symbols % 2 != 0 {
            return Err(Error::Config(format!(
                "n_symbols = {} must be even and at least 4",
                self.n_symbols
            )));
        }
        if self.n_ris_elements < 2 {
            return Err(Error::Config(format!(
                "n_ris_elements = {} must be at least 2",
                self.n_ris_elements
            )));
        }
        if !(self.carrier_freq_hz > 0.0) || !(self.bandwidth_hz > 0.0) {
            return Err(Error::Config("carrier and bandwidth must be positive".into()));
        }
        if !(self.noise_power >= 0.0) || !self.noise_power.is_finite() {
            return Err(Error::Config(format!(
                "noise_power = {} must be finite and non-negative",
                self.noise_power
            )));
        }
        if !(self.cyclic_prefix_s >= 0.0) {
            return Err(Error::Config("cyclic_prefix_s must be non-negative".into()));
        }
        if self.psk_order < 2 {
            return Err(Error::Config("psk_order must be at least 2".into()));
        }
        self.target.validate("target")?;
        self.interferer.validate("interferer")?;
        if !(self.los.range_m > 0.0) || !self.los.gain.re.is_finite() || !self.los.gain.im.is_finite()
        {
            return Err(Error::Config("los needs a positive range and finite gain".into()));
        }
        self.angle_grid.validate()?;
        self.geometry()?;
        Ok(())
    }

    pub fn carrier_wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// Resolves the element-to-receiver distances for this scene.
    pub fn geometry(&self) -> Result<RisGeometry> {
        let spec = &self.geometry;
        if !(spec.element_spacing_wavelengths > 0.0) {
            return Err(Error::Config("element_spacing_wavelengths must be positive".into()));
        }
        let l = self.n_ris_elements;
        let dist = match &spec.element_to_rx_dist_m {
            Some(d) => {
                if d.len() != l {
                    return Err(Error::Config(format!(
                        "geometry.element_to_rx_dist_m has {} entries, expected {l}",
                        d.len()
                    )));
                }
                if d.iter().any(|&x| !(x >= 0.0)) {
                    return Err(Error::Config("element distances must be non-negative".into()));
                }
                d.clone()
            }
            None => {
                if !(spec.rx_offset_m >= 0.0) {
                    return Err(Error::Config("geometry.rx_offset_m must be non-negative".into()));
                }
                let pitch = spec.element_spacing_wavelengths * self.carrier_wavelength_m();
                let centre = (l as f64 - 1.0) / 2.0;
                (0..l)
                    .map(|i| {
                        let x = (i as f64 - centre) * pitch;
                        spec.rx_offset_m.hypot(x)
                    })
                    .collect()
            }
        };
        Ok(RisGeometry {
            element_spacing_wavelengths: spec.element_spacing_wavelengths,
            element_to_rx_dist_m: dist,
        })
    }

    /// Human-readable warnings for paths beyond the unambiguous range.
    pub fn alias_warnings(&self, consts: &DerivedConstants) -> Vec<String> {
        let mut out = Vec::new();
        for (name, path) in [("target", &self.target), ("interferer", &self.interferer)] {
            if path.range_m >= consts.unambiguous_range_m {
                out.push(format!(
                    "{name} range {:.3} m exceeds the unambiguous range {:.3} m; it folds to {:.3} m",
                    path.range_m,
                    consts.unambiguous_range_m,
                    consts.fold_range(path.range_m)
                ));
            }
        }
        out
    }
}

/// Quantities derived from the OFDM numerology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub delta_f_hz: f64,
    pub carrier_freq_hz: f64,
    pub carrier_wavelength_m: f64,
    /// lambda_n = c / (f_c + n * delta_f) for every subcarrier.
    pub subcarrier_wavelengths_m: Vec<f64>,
    pub symbol_period_s: f64,
    pub unambiguous_range_m: f64,
    pub range_resolution_m: f64,
    /// Velocity spacing of one Doppler bin over an M-symbol frame.
    pub velocity_resolution_mps: f64,
}

impl DerivedConstants {
    pub fn n_subcarriers(&self) -> usize {
        self.subcarrier_wavelengths_m.len()
    }

    /// Range modulo the unambiguous range, in [0, R_u).
    pub fn fold_range(&self, range_m: f64) -> f64 {
        range_m.rem_euclid(self.unambiguous_range_m)
    }
}

/// Derives the OFDM constants of a scene.
pub fn derive_constants(cfg: &SceneConfig) -> Result<DerivedConstants> {
    if cfg.n_subcarriers == 0 {
        return Err(Error::Config("n_subcarriers must be positive".into()));
    }
    if !(cfg.bandwidth_hz > 0.0) {
        return Err(Error::Config(format!(
            "bandwidth_hz = {} must be positive",
            cfg.bandwidth_hz
        )));
    }
    if !(cfg.carrier_freq_hz > 0.0) {
        return Err(Error::Config("carrier_freq_hz must be positive".into()));
    }
    let n = cfg.n_subcarriers;
    let delta_f = cfg.bandwidth_hz / n as f64;
    let symbol_period = 1.0 / delta_f + cfg.cyclic_prefix_s;
    let wavelengths = (0..n)
        .map(|i| SPEED_OF_LIGHT / (cfg.carrier_freq_hz + i as f64 * delta_f))
        .collect();
    let range_resolution = SPEED_OF_LIGHT / (2.0 * cfg.bandwidth_hz);
    let m = cfg.n_symbols.max(1) as f64;
    Ok(DerivedConstants {
        delta_f_hz: delta_f,
        carrier_freq_hz: cfg.carrier_freq_hz,
        carrier_wavelength_m: SPEED_OF_LIGHT / cfg.carrier_freq_hz,
        subcarrier_wavelengths_m: wavelengths,
        symbol_period_s: symbol_period,
        unambiguous_range_m: SPEED_OF_LIGHT / (2.0 * delta_f),
        range_resolution_m: range_resolution,
        velocity_resolution_mps: SPEED_OF_LIGHT / (2.0 * cfg.carrier_freq_hz * m * symbol_period),
    })
}

/// Round-trip delay 2R/c of a path.
pub fn delay_of(path: &PathSpec) -> f64 {
    2.0 * path.range_m / SPEED_OF_LIGHT
}

/// Normalized Doppler shift 2v/c of a path.
pub fn doppler_of(path: &PathSpec) -> f64 {
    2.0 * path.velocity_mps / SPEED_OF_LIGHT
}
