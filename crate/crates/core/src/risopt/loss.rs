//! The beta-weighted training loss and its gradient with respect to the RIS
//! phases and the network parameters.
//!
//! Per subcarrier n, with `phi_n(theta) = C^T b_n(theta)`:
//!
//! * spectrum term: `||Q_n^H phi_n(theta_i)||^2 / ||Q_n^H phi_n(theta_t)||^2`
//! * SINR term: `(||phi_n(theta_i)||^2 + sigma^2) / ||phi_n(theta_t)||^2`
//!
//! Both are summed over subcarriers and blended as
//! `beta * spectrum + (1 - beta) * sinr`. The noise bases are constants.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risopt::mlp::{angle_input, output_gradient, phases_from_output, MlpModel, OutputHead};
use crate::waveform::ArrayManifold;

/// Denominators below this are replaced by [`GUARD_PENALTY`].
pub const GUARD_EPS: f64 = 1e-30;
pub const GUARD_PENALTY: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub spectrum_term: f64,
    pub sinr_term: f64,
    pub beta: f64,
    pub total: f64,
    /// Set when a denominator hit the guard.
    pub guarded: bool,
}

/// Phase gradients of both terms and of the blend.
#[derive(Debug, Clone)]
pub struct PhaseGradient {
    pub spectrum: Array2<f64>,
    pub sinr: Array2<f64>,
    pub total: Array2<f64>,
}

#[derive(Debug, Clone)]
struct SubcarrierTerm {
    b_t: Array1<Complex64>,
    b_i: Array1<Complex64>,
    q: Array2<Complex64>,
    q_h: Array2<Complex64>,
}

/// Everything the loss needs besides the configuration itself.
#[derive(Debug, Clone)]
pub struct LossSetup {
    terms: Vec<SubcarrierTerm>,
    pub beta: f64,
    pub sigma2: f64,
}

/// `||v||^2` or `||Q^H v||^2` together with the vector `w` whose phase
/// gradient is `-2 Im(conj(w_k) C_lk b_l)`.
fn norm_and_weight(
    v: &Array1<Complex64>,
    q: Option<(&Array2<Complex64>, &Array2<Complex64>)>,
) -> (f64, Array1<Complex64>) {
    match q {
        None => (v.iter().map(|x| x.norm_sqr()).sum(), v.clone()),
        Some((q, q_h)) => {
            let p = q_h.dot(v);
            (p.iter().map(|x| x.norm_sqr()).sum(), q.dot(&p))
        }
    }
}

/// Accumulates `scale * d f / d phi_lk = scale * (-2 Im(conj(w_k) C_lk b_l))`.
fn add_phase_grad(
    out: &mut Array2<f64>,
    c: &Array2<Complex64>,
    b: &Array1<Complex64>,
    w: &Array1<Complex64>,
    scale: f64,
) {
    if scale == 0.0 {
        return;
    }
    let (l, k) = c.dim();
    for li in 0..l {
        let bl = b[li];
        for ki in 0..k {
            let z = w[ki].conj() * c[[li, ki]] * bl;
            out[[li, ki]] += -2.0 * scale * z.im;
        }
    }
}

impl LossSetup {
    /// `noise_bases` holds either one basis per subcarrier of the scene
    /// (indexed by subcarrier) or a single basis shared by all.
    pub fn new(
        manifold: &ArrayManifold,
        noise_bases: &[Array2<Complex64>],
        subcarriers: &[usize],
        theta_t_deg: f64,
        theta_i_deg: f64,
        beta: f64,
        sigma2: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Config(format!("beta = {beta} outside [0, 1]")));
        }
        if !(sigma2 >= 0.0) {
            return Err(Error::Config(format!("sigma2 = {sigma2} must be >= 0")));
        }
        if subcarriers.is_empty() {
            return Err(Error::EmptySubcarrierSet);
        }
        if noise_bases.is_empty() {
            return Err(Error::Config("no noise basis supplied".into()));
        }
        angle_input(theta_t_deg, theta_i_deg)?;
        let mut terms = Vec::with_capacity(subcarriers.len());
        for &n in subcarriers {
            if n >= manifold.n_subcarriers() {
                return Err(Error::SubcarrierOutOfRange {
                    index: n,
                    n: manifold.n_subcarriers(),
                });
            }
            let q = if noise_bases.len() == 1 {
                &noise_bases[0]
            } else {
                noise_bases.get(n).ok_or(Error::DimensionMismatch {
                    context: "noise bases per subcarrier",
                    expected: manifold.n_subcarriers().to_string(),
                    got: noise_bases.len().to_string(),
                })?
            };
            terms.push(SubcarrierTerm {
                b_t: manifold.steering(n, theta_t_deg.to_radians()),
                b_i: manifold.steering(n, theta_i_deg.to_radians()),
                q: q.clone(),
                q_h: q.t().mapv(|v| v.conj()),
            });
        }
        Ok(Self {
            terms,
            beta,
            sigma2,
        })
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        Self {
            beta,
            ..self.clone()
        }
    }

    fn check(&self, c_eff: &Array2<Complex64>) -> Result<()> {
        let t = &self.terms[0];
        if c_eff.nrows() != t.b_t.len() || c_eff.ncols() != t.q.nrows() {
            return Err(Error::DimensionMismatch {
                context: "RIS effective matrix vs loss setup",
                expected: format!("({}, {})", t.b_t.len(), t.q.nrows()),
                got: format!("{:?}", c_eff.dim()),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, c_eff: &Array2<Complex64>) -> Result<LossBreakdown> {
        Ok(self.run(c_eff, false)?.0)
    }

    pub fn evaluate_with_gradient(
        &self,
        c_eff: &Array2<Complex64>,
    ) -> Result<(LossBreakdown, PhaseGradient)> {
        let (loss, grad) = self.run(c_eff, true)?;
        Ok((loss, grad.unwrap()))
    }

    fn run(
        &self,
        c_eff: &Array2<Complex64>,
        with_grad: bool,
    ) -> Result<(LossBreakdown, Option<PhaseGradient>)> {
        self.check(c_eff)?;
        let dim = c_eff.dim();
        let mut g_spec = Array2::zeros(if with_grad { dim } else { (0, 0) });
        let mut g_sinr = Array2::zeros(if with_grad { dim } else { (0, 0) });
        let mut spec = 0.0;
        let mut sinr = 0.0;
        let mut guarded = false;
        let ct = c_eff.t();
        for t in &self.terms {
            let v_t = ct.dot(&t.b_t);
            let v_i = ct.dot(&t.b_i);
            let proj = Some((&t.q, &t.q_h));

            let (num, w_num) = norm_and_weight(&v_i, proj);
            let (den, w_den) = norm_and_weight(&v_t, proj);
            if den < GUARD_EPS {
                spec += GUARD_PENALTY;
                guarded = true;
            } else {
                spec += num / den;
                if with_grad {
                    add_phase_grad(&mut g_spec, c_eff, &t.b_i, &w_num, 1.0 / den);
                    add_phase_grad(&mut g_spec, c_eff, &t.b_t, &w_den, -num / (den * den));
                }
            }

            let (pi, w_pi) = norm_and_weight(&v_i, None);
            let (pt, w_pt) = norm_and_weight(&v_t, None);
            if pt < GUARD_EPS {
                sinr += GUARD_PENALTY;
                guarded = true;
            } else {
                let num = pi + self.sigma2;
                sinr += num / pt;
                if with_grad {
                    add_phase_grad(&mut g_sinr, c_eff, &t.b_i, &w_pi, 1.0 / pt);
                    add_phase_grad(&mut g_sinr, c_eff, &t.b_t, &w_pt, -num / (pt * pt));
                }
            }
        }
        let beta = self.beta;
        let loss = LossBreakdown {
            spectrum_term: spec,
            sinr_term: sinr,
            beta,
            total: beta * spec + (1.0 - beta) * sinr,
            guarded,
        };
        let grad = with_grad.then(|| {
            let total = &g_spec * beta + &g_sinr * (1.0 - beta);
            PhaseGradient {
                spectrum: g_spec,
                sinr: g_sinr,
                total,
            }
        });
        Ok((loss, grad))
    }
}

/// Effective RIS matrix from trained phases. When `l_phase = n_elements - 1`
/// the last element is held switched off (amplitude zero) for the notch.
pub fn effective_from_phases(phases: &Array2<f64>, n_elements: usize) -> Array2<Complex64> {
    let (l_phase, m_eff) = phases.dim();
    Array2::from_shape_fn((n_elements, m_eff), |(l, k)| {
        if l < l_phase {
            Complex64::from_polar(1.0, phases[[l, k]])
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Loss and its gradient with respect to every network parameter, for a
/// network fed with the given angle estimates.
pub fn loss_gradient(
    model: &MlpModel,
    setup: &LossSetup,
    theta_t_hat: f64,
    theta_i_hat: f64,
    head: OutputHead,
    n_elements: usize,
    l_phase: usize,
    m_eff: usize,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let cache = model.forward_cached(&angle_input(theta_t_hat, theta_i_hat)?)?;
    let phases = phases_from_output(&cache.output, head, l_phase, m_eff)?;
    let c_eff = effective_from_phases(&phases, n_elements);
    let (loss, grad) = setup.evaluate_with_gradient(&c_eff)?;
    let active = grad.total.slice(ndarray::s![..l_phase, ..]).to_owned();
    let g_out = output_gradient(&active, head);
    Ok((loss, model.backward(&cache, &g_out)))
}
