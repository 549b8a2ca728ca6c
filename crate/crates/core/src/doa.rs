//! Direction finding through the RIS.
//!
//! The M RIS slots form a virtual array: after folding out the slot-pair
//! signs, subcarrier n yields one snapshot `y_n = C_eff^T (a_n b_n(theta_t) + c_n b_n(theta_i)) + noise`
//! of length `M_eff`. The sample covariance over subcarriers gives the noise
//! subspace `Q`, and the spectrum is `P(theta) = 1 / ||Q^H C_eff^T b_n(theta)||^2`.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, HermitianEigen};
use crate::scene::AngleGrid;
use crate::waveform::{ArrayManifold, RisConfig, SymbolGrid};

/// Relative tolerance under which two peak powers count as tied.
pub const PEAK_TIE_RTOL: f64 = 1e-9;

/// Default minimum height of a source peak above the spectrum median.
pub const DEFAULT_PEAK_PROMINENCE_DB: f64 = 10.0;

/// Sign-compensated, pair-averaged snapshots: an N x M_eff matrix whose row
/// n is `(s[2k] y[n, 2k] + s[2k+1] y[n, 2k+1]) / 2` for k = 0..M_eff.
///
/// Anything that does not pass through the RIS (the LoS leakage) cancels.
pub fn effective_snapshots(grid: &SymbolGrid, ris: &RisConfig) -> Result<Array2<Complex64>> {
    if grid.n_symbols() != ris.n_slots() {
        return Err(Error::DimensionMismatch {
            context: "grid slots vs RIS slots",
            expected: ris.n_slots().to_string(),
            got: grid.n_symbols().to_string(),
        });
    }
    let s = &ris.sign_pattern;
    Ok(Array2::from_shape_fn(
        (grid.n_subcarriers(), ris.n_effective()),
        |(n, k)| {
            (grid.data[[n, 2 * k]] * s[2 * k] + grid.data[[n, 2 * k + 1]] * s[2 * k + 1]) * 0.5
        },
    ))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub matrix: Array2<Complex64>,
    pub n_snapshots: usize,
    pub subcarriers: Vec<usize>,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigen(&self) -> Result<HermitianEigen> {
        hermitian_eigen(&self.matrix)
    }
}

fn covariance_of_rows(snap: &Array2<Complex64>, rows: &[usize]) -> Array2<Complex64> {
    let k = snap.ncols();
    let mut r = Array2::<Complex64>::zeros((k, k));
    for &n in rows {
        let y = snap.row(n);
        for i in 0..k {
            let yi = y[i];
            for j in 0..k {
                r[[i, j]] += yi * y[j].conj();
            }
        }
    }
    r.mapv_inplace(|v| v / rows.len() as f64);
    r
}

/// `R = (1/|S|) sum_{n in S} y_n y_n^H` over the effective snapshots.
pub fn estimate_covariance(
    grid: &SymbolGrid,
    ris: &RisConfig,
    subcarriers: &[usize],
) -> Result<CovarianceEstimate> {
    if subcarriers.is_empty() {
        return Err(Error::EmptySubcarrierSet);
    }
    if let Some(&bad) = subcarriers.iter().find(|&&n| n >= grid.n_subcarriers()) {
        return Err(Error::SubcarrierOutOfRange {
            index: bad,
            n: grid.n_subcarriers(),
        });
    }
    let snap = effective_snapshots(grid, ris)?;
    Ok(CovarianceEstimate {
        matrix: covariance_of_rows(&snap, subcarriers),
        n_snapshots: subcarriers.len(),
        subcarriers: subcarriers.to_vec(),
    })
}

/// Eigenvectors of the `dim - n_sources` smallest eigenvalues, ascending.
pub fn noise_subspace(cov: &CovarianceEstimate, n_sources: usize) -> Result<Array2<Complex64>> {
    if n_sources >= cov.dim() {
        return Err(Error::Config(format!(
            "n_sources = {n_sources} leaves no noise subspace in dimension {}",
            cov.dim()
        )));
    }
    let eig = cov.eigen()?;
    Ok(eig
        .vectors
        .slice(ndarray::s![.., ..cov.dim() - n_sources])
        .to_owned())
}

/// Fast evaluator of `D(theta) = ||Q^H C^T b_n(theta)||^2` on one subcarrier.
///
/// With `W = conj(C) Q` and `H = W W^H`, `D = b^H H b`. Because
/// `b_l = beta_l z^l` with `z = exp(-j slope sin(theta))`, `D` collapses to
/// the trigonometric polynomial `h_0 + 2 Re sum_{d>0} h_d z^d`, evaluated by
/// Horner in O(L) per angle.
#[derive(Debug, Clone)]
pub struct NullSpectrum {
    coeffs: Vec<Complex64>,
    slope: f64,
}

impl NullSpectrum {
    /// `basis = None` evaluates the plain array gain `||C^T b_n(theta)||^2`.
    pub fn new(
        manifold: &ArrayManifold,
        n: usize,
        c_eff: &Array2<Complex64>,
        basis: Option<&Array2<Complex64>>,
    ) -> Result<Self> {
        let h = gram_matrix(c_eff, basis)?;
        Ok(Self::from_gram(manifold, n, &h))
    }

    /// Builds the evaluator from a precomputed `H = W W^H` (L x L).
    pub fn from_gram(manifold: &ArrayManifold, n: usize, h: &Array2<Complex64>) -> Self {
        let beta = manifold.distance_phasors(n);
        let l = beta.len();
        let coeffs = (0..l)
            .map(|d| {
                (0..l - d)
                    .map(|i| beta[i].conj() * h[[i, i + d]] * beta[i + d])
                    .sum()
            })
            .collect();
        Self {
            coeffs,
            slope: manifold.phase_slope(n),
        }
    }

    pub fn eval_rad(&self, theta_rad: f64) -> f64 {
        let z = Complex64::from_polar(1.0, -self.slope * theta_rad.sin());
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.coeffs[1..].iter().rev() {
            acc = (acc + c) * z;
        }
        (self.coeffs[0].re + 2.0 * acc.re).max(0.0)
    }

    pub fn eval_deg(&self, theta_deg: f64) -> f64 {
        self.eval_rad(theta_deg.to_radians())
    }
}

/// `H = W W^H` with `W = conj(C) Q` (or `conj(C)` without a basis).
pub fn gram_matrix(
    c_eff: &Array2<Complex64>,
    basis: Option<&Array2<Complex64>>,
) -> Result<Array2<Complex64>> {
    let w = match basis {
        Some(q) => {
            if q.nrows() != c_eff.ncols() {
                return Err(Error::DimensionMismatch {
                    context: "noise basis rows vs effective RIS slots",
                    expected: c_eff.ncols().to_string(),
                    got: q.nrows().to_string(),
                });
            }
            c_eff.mapv(|v| v.conj()).dot(q)
        }
        None => c_eff.mapv(|v| v.conj()),
    };
    Ok(w.dot(&w.t().mapv(|v| v.conj())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Peak {
    angle_deg: f64,
    power: f64,
}

/// Minimizes `d` near `center` by repeated 3-point parabolic steps with a
/// halving bracket. Working on the null function rather than on log P keeps
/// the model exact near deep nulls, where `d` is locally quadratic.
fn refine_minimum(d: &dyn Fn(f64) -> f64, center_deg: f64, step_deg: f64) -> (f64, f64) {
    let mut c = center_deg;
    let mut h = step_deg;
    let mut dc = d(c);
    while h > 1e-9 {
        let lo = (c - h).max(-89.999_999);
        let hi = (c + h).min(89.999_999);
        let (dl, dh) = (d(lo), d(hi));
        let den = dl - 2.0 * dc + dh;
        let mut next = c;
        if den > 0.0 && (hi - c - (c - lo)).abs() < 1e-12 {
            let delta = 0.5 * h * (dl - dh) / den;
            next = c + delta.clamp(-h, h);
        } else if dl < dc || dh < dc {
            next = if dl < dh { lo } else { hi };
        }
        let dn = d(next);
        if dn <= dc {
            c = next;
            dc = dn;
        }
        h *= 0.5;
    }
    (c, dc)
}

/// Interior local minima of `d` on the grid, refined, as spectrum peaks
/// sorted by descending power.
fn find_peaks(d: &dyn Fn(f64) -> f64, angles: &[f64], values: &[f64], step: f64) -> Vec<Peak> {
    let mut peaks = Vec::new();
    for i in 1..values.len().saturating_sub(1) {
        if values[i] < values[i - 1] && values[i] <= values[i + 1] {
            let (a, dv) = refine_minimum(d, angles[i], step);
            peaks.push(Peak {
                angle_deg: a,
                power: 1.0 / dv.max(f64::MIN_POSITIVE),
            });
        }
    }
    peaks.sort_by(|a, b| b.power.total_cmp(&a.power));
    peaks
}

/// Larger peak is the interference. Ties go to the peak closer to the
/// previous interference estimate, or else to the larger angle.
fn label(peaks: &[Peak], previous_interf: Option<f64>) -> Result<(Peak, Peak)> {
    match peaks {
        [] => Err(Error::PeaksMerged {
            angle_deg: f64::NAN,
        }),
        [only] => Err(Error::PeaksMerged {
            angle_deg: only.angle_deg,
        }),
        [a, b, ..] => {
            let tie = (a.power - b.power).abs() <= PEAK_TIE_RTOL * a.power;
            if !tie {
                return Ok((*b, *a));
            }
            let a_is_interf = match previous_interf {
                Some(p) => (a.angle_deg - p).abs() <= (b.angle_deg - p).abs(),
                None => a.angle_deg >= b.angle_deg,
            };
            Ok(if a_is_interf { (*b, *a) } else { (*a, *b) })
        }
    }
}

/// One MUSIC spectrum with labelled peaks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MusicResult {
    /// `(angle_deg, P(theta))` over the search grid.
    pub spectrum: Vec<(f64, f64)>,
    pub theta_hat_target: f64,
    pub theta_hat_interf: f64,
    pub noise_basis: Array2<Complex64>,
    pub peak_power_target: f64,
    pub peak_power_interf: f64,
    pub subcarrier: usize,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Spectrum on the grid plus the labelled (target, interference) peaks.
/// Local maxima less than `prominence_db` above the spectrum median are
/// sidelobes of the noise subspace, not sources.
fn labelled_spectrum(
    d: &dyn Fn(f64) -> f64,
    grid: &AngleGrid,
    previous_interf: Option<f64>,
    prominence_db: f64,
) -> Result<(Vec<(f64, f64)>, Peak, Peak)> {
    grid.validate()?;
    let angles = grid.points();
    let values: Vec<f64> = angles.iter().map(|&a| d(a)).collect();
    let spectrum: Vec<(f64, f64)> = angles
        .iter()
        .zip(&values)
        .map(|(&a, &v)| (a, 1.0 / v.max(f64::MIN_POSITIVE)))
        .collect();
    let floor = median(&spectrum.iter().map(|p| p.1).collect::<Vec<_>>())
        * 10f64.powf(prominence_db / 10.0);
    let mut peaks = find_peaks(d, &angles, &values, grid.step_deg);
    let strongest = peaks.first().copied();
    peaks.retain(|p| p.power >= floor);
    if peaks.len() < 2 {
        let angle_deg = peaks
            .first()
            .or(strongest.as_ref())
            .map_or(f64::NAN, |p| p.angle_deg);
        return Err(Error::PeaksMerged { angle_deg });
    }
    let (t, i) = label(&peaks, previous_interf)?;
    Ok((spectrum, t, i))
}

/// MUSIC spectrum of subcarrier `n` for a given noise basis.
pub fn music_spectrum(
    manifold: &ArrayManifold,
    noise_basis: &Array2<Complex64>,
    ris: &RisConfig,
    subcarrier: usize,
    opts: &EstimateOptions,
) -> Result<MusicResult> {
    if subcarrier >= manifold.n_subcarriers() {
        return Err(Error::SubcarrierOutOfRange {
            index: subcarrier,
            n: manifold.n_subcarriers(),
        });
    }
    let kernel = NullSpectrum::new(manifold, subcarrier, &ris.effective(), Some(noise_basis))?;
    let d = |a: f64| kernel.eval_deg(a);
    let (spectrum, t, i) = labelled_spectrum(
        &d,
        &opts.angle_grid,
        opts.previous_interf,
        opts.min_peak_prominence_db,
    )?;
    Ok(MusicResult {
        spectrum,
        theta_hat_target: t.angle_deg,
        theta_hat_interf: i.angle_deg,
        noise_basis: noise_basis.clone(),
        peak_power_target: t.power,
        peak_power_interf: i.power,
        subcarrier,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMode {
    /// Per-subcarrier spectra, angle estimates averaged over subcarriers.
    #[default]
    Averaged,
    /// One spectrum from the subcarrier-averaged null function.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateOptions {
    #[serde(default)]
    pub mode: EstimateMode,
    /// Set from the scene's `angle_grid_deg` by callers that have a scene.
    #[serde(skip)]
    pub angle_grid: AngleGrid,
    /// Half-width of the subcarrier window feeding each subcarrier's
    /// covariance. `None` pools every subcarrier into one shared basis.
    #[serde(default)]
    pub subcarrier_window: Option<usize>,
    #[serde(default = "default_sources")]
    pub n_sources: usize,
    /// Local maxima below `median(P) * 10^(db/10)` are not source peaks.
    #[serde(default = "default_prominence")]
    pub min_peak_prominence_db: f64,
    #[serde(skip)]
    pub previous_interf: Option<f64>,
}

fn default_sources() -> usize {
    2
}

fn default_prominence() -> f64 {
    DEFAULT_PEAK_PROMINENCE_DB
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            mode: EstimateMode::Averaged,
            angle_grid: AngleGrid::default(),
            subcarrier_window: None,
            n_sources: 2,
            min_peak_prominence_db: DEFAULT_PEAK_PROMINENCE_DB,
            previous_interf: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubcarrierEstimate {
    pub subcarrier: usize,
    pub theta_target: Option<f64>,
    pub theta_interf: Option<f64>,
    pub peak_power_target: Option<f64>,
    pub peak_power_interf: Option<f64>,
    /// `P(theta)` on the search grid.
    pub spectrum: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngleEstimate {
    pub theta_target: f64,
    pub theta_interf: f64,
    /// Geometric mean over resolved subcarriers of `P(theta_i) / P(theta_t)`.
    pub peak_ratio: f64,
    pub angle_grid: AngleGrid,
    pub per_subcarrier: Vec<SubcarrierEstimate>,
    /// Noise basis used for each subcarrier.
    #[serde(skip)]
    pub noise_bases: Vec<Array2<Complex64>>,
    /// Eigenvalues (ascending) of the first subcarrier's covariance.
    pub eigenvalues: Vec<f64>,
}

impl AngleEstimate {
    pub fn n_resolved(&self) -> usize {
        self.per_subcarrier
            .iter()
            .filter(|s| s.theta_target.is_some())
            .count()
    }
}

/// Noise bases per subcarrier together with the eigenvalues of the first.
pub fn noise_bases(
    grid: &SymbolGrid,
    ris: &RisConfig,
    window: Option<usize>,
    n_sources: usize,
) -> Result<(Vec<Array2<Complex64>>, Vec<f64>)> {
    let n_sc = grid.n_subcarriers();
    let all: Vec<usize> = (0..n_sc).collect();
    match window {
        None => {
            let cov = estimate_covariance(grid, ris, &all)?;
            let eig = cov.eigen()?;
            let q = eig
                .vectors
                .slice(ndarray::s![.., ..cov.dim().saturating_sub(n_sources)])
                .to_owned();
            if n_sources >= cov.dim() {
                return Err(Error::Config("n_sources leaves no noise subspace".into()));
            }
            Ok((vec![q; n_sc], eig.values))
        }
        Some(w) => {
            let mut out = Vec::with_capacity(n_sc);
            let mut first_values = Vec::new();
            for n in 0..n_sc {
                let lo = n.saturating_sub(w);
                let hi = (n + w).min(n_sc - 1);
                let rows: Vec<usize> = (lo..=hi).collect();
                let cov = estimate_covariance(grid, ris, &rows)?;
                if n_sources >= cov.dim() {
                    return Err(Error::Config("n_sources leaves no noise subspace".into()));
                }
                let eig = cov.eigen()?;
                if n == 0 {
                    first_values = eig.values.clone();
                }
                out.push(
                    eig.vectors
                        .slice(ndarray::s![.., ..cov.dim() - n_sources])
                        .to_owned(),
                );
            }
            Ok((out, first_values))
        }
    }
}

/// Covariance, noise subspace and spectrum chain over all subcarriers.
pub fn estimate_angles(
    manifold: &ArrayManifold,
    grid: &SymbolGrid,
    ris: &RisConfig,
    opts: &EstimateOptions,
) -> Result<AngleEstimate> {
    opts.angle_grid.validate()?;
    if grid.n_subcarriers() != manifold.n_subcarriers() {
        return Err(Error::DimensionMismatch {
            context: "grid subcarriers vs scene",
            expected: manifold.n_subcarriers().to_string(),
            got: grid.n_subcarriers().to_string(),
        });
    }
    if ris.n_elements() != manifold.n_elements() {
        return Err(Error::DimensionMismatch {
            context: "RIS elements vs scene",
            expected: manifold.n_elements().to_string(),
            got: ris.n_elements().to_string(),
        });
    }
    let (bases, eigenvalues) = noise_bases(grid, ris, opts.subcarrier_window, opts.n_sources)?;
    let c_eff = ris.effective();
    let n_sc = grid.n_subcarriers();
    let shared = opts.subcarrier_window.is_none();
    let shared_gram = if shared {
        Some(gram_matrix(&c_eff, Some(&bases[0]))?)
    } else {
        None
    };
    let kernels: Vec<NullSpectrum> = (0..n_sc)
        .map(|n| match &shared_gram {
            Some(h) => Ok(NullSpectrum::from_gram(manifold, n, h)),
            None => NullSpectrum::new(manifold, n, &c_eff, Some(&bases[n])),
        })
        .collect::<Result<_>>()?;

    match opts.mode {
        EstimateMode::Averaged => {
            let mut per = Vec::with_capacity(n_sc);
            for (n, k) in kernels.iter().enumerate() {
                let d = |a: f64| k.eval_deg(a);
                let entry = match labelled_spectrum(
                    &d,
                    &opts.angle_grid,
                    opts.previous_interf,
                    opts.min_peak_prominence_db,
                ) {
                    Ok((spec, t, i)) => SubcarrierEstimate {
                        subcarrier: n,
                        theta_target: Some(t.angle_deg),
                        theta_interf: Some(i.angle_deg),
                        peak_power_target: Some(t.power),
                        peak_power_interf: Some(i.power),
                        spectrum: spec.into_iter().map(|(_, p)| p).collect(),
                    },
                    Err(Error::PeaksMerged { .. }) => SubcarrierEstimate {
                        subcarrier: n,
                        theta_target: None,
                        theta_interf: None,
                        peak_power_target: None,
                        peak_power_interf: None,
                        spectrum: opts
                            .angle_grid
                            .points()
                            .iter()
                            .map(|&a| 1.0 / d(a).max(f64::MIN_POSITIVE))
                            .collect(),
                    },
                    Err(e) => return Err(e),
                };
                per.push(entry);
            }
            let resolved: Vec<&SubcarrierEstimate> =
                per.iter().filter(|s| s.theta_target.is_some()).collect();
            if 2 * resolved.len() <= n_sc {
                // Report the strongest single peak of the first subcarrier.
                let grid_pts = opts.angle_grid.points();
                let spec = &per[0].spectrum;
                let best = spec
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| grid_pts[i])
                    .unwrap_or(f64::NAN);
                return Err(Error::PeaksMerged { angle_deg: best });
            }
            let cnt = resolved.len() as f64;
            let theta_target = resolved.iter().map(|s| s.theta_target.unwrap()).sum::<f64>() / cnt;
            let theta_interf = resolved.iter().map(|s| s.theta_interf.unwrap()).sum::<f64>() / cnt;
            let log_ratio = resolved
                .iter()
                .map(|s| (s.peak_power_interf.unwrap() / s.peak_power_target.unwrap()).ln())
                .sum::<f64>()
                / cnt;
            Ok(AngleEstimate {
                theta_target,
                theta_interf,
                peak_ratio: log_ratio.exp(),
                angle_grid: opts.angle_grid.clone(),
                per_subcarrier: per,
                noise_bases: bases,
                eigenvalues,
            })
        }
        EstimateMode::Pooled => {
            let d = |a: f64| {
                let r = a.to_radians();
                kernels.iter().map(|k| k.eval_rad(r)).sum::<f64>() / n_sc as f64
            };
            let (spec, t, i) = labelled_spectrum(
                    &d,
                    &opts.angle_grid,
                    opts.previous_interf,
                    opts.min_peak_prominence_db,
                )?;
            Ok(AngleEstimate {
                theta_target: t.angle_deg,
                theta_interf: i.angle_deg,
                peak_ratio: i.power / t.power,
                angle_grid: opts.angle_grid.clone(),
                per_subcarrier: vec![SubcarrierEstimate {
                    subcarrier: 0,
                    theta_target: Some(t.angle_deg),
                    theta_interf: Some(i.angle_deg),
                    peak_power_target: Some(t.power),
                    peak_power_interf: Some(i.power),
                    spectrum: spec.into_iter().map(|(_, p)| p).collect(),
                }],
                noise_bases: bases,
                eigenvalues,
            })
        }
    }
}

/// Brute-force `||Q^H C^T b||^2` straight from the definition.
pub fn null_function_direct(
    c_eff: &Array2<Complex64>,
    basis: &Array2<Complex64>,
    b: &Array1<Complex64>,
) -> f64 {
    let phi = c_eff.t().dot(b);
    let proj = basis.t().mapv(|v| v.conj()).dot(&phi);
    proj.iter().map(|v| v.norm_sqr()).sum()
}
