//! Closed loop: probe the scene with the current RIS, estimate angles,
//! refresh the noise bases, take gradient steps on the network, regenerate
//! the RIS.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doa::{estimate_angles, EstimateOptions};
use crate::error::{Error, Result};
use crate::risopt::loss::{effective_from_phases, loss_gradient, LossBreakdown, LossSetup};
use crate::risopt::mlp::{angle_input, phases_from_output, MlpModel, OutputHead};
use crate::risopt::notch::NotchMode;
use crate::risopt::evaluate_sinr;
use crate::scene::SceneConfig;
use crate::waveform::{synthesize, ArrayManifold, RisConfig, SymbolBook};

const FRAME_STREAM: u64 = 10;
const NOISE_STREAM: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Gradient descent with heavy-ball momentum.
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub hidden: Vec<usize>,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub inner_steps: usize,
    pub max_outer_iterations: usize,
    pub patience: usize,
    /// Relative improvement of the best loss that resets the patience window.
    pub tolerance: f64,
    /// Consecutive unresolved angle estimates tolerated before aborting.
    pub max_unresolved: usize,
    pub head: OutputHead,
    /// Convolution mode trains L-1 elements and leaves the last one off.
    pub notch_mode: NotchMode,
    pub design_subcarrier: usize,
    pub estimate: EstimateOptions,
    /// Network initialization seed; defaults to the scene seed.
    pub init_seed: Option<u64>,
    /// Subcarriers entering the loss; all when absent.
    pub loss_subcarriers: Option<Vec<usize>>,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            optimizer: Optimizer::Sgd,
            learning_rate: 1e-3,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            inner_steps: 50,
            max_outer_iterations: 20,
            patience: 3,
            tolerance: 1e-3,
            max_unresolved: 3,
            head: OutputHead::Full,
            notch_mode: NotchMode::Convolution,
            design_subcarrier: 0,
            estimate: EstimateOptions::default(),
            init_seed: None,
            loss_subcarriers: None,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("train.hidden must list positive widths".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum)
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
        {
            return Err(Error::Config("momentum and Adam betas must lie in [0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("train.patience must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of trainable RIS rows for an `n_elements` surface.
    pub fn phase_rows(&self, n_elements: usize) -> usize {
        match self.notch_mode {
            NotchMode::Convolution => n_elements - 1,
            NotchMode::Truncation => n_elements,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub theta_t_hat: f64,
    pub theta_i_hat: f64,
    /// False when the estimate fell back to the previous angles.
    pub resolved: bool,
    /// `P(theta_i) / P(theta_t)` of the measured spectrum on subcarrier 0;
    /// NaN when that subcarrier did not resolve two peaks.
    pub peak_ratio: f64,
    /// `P(theta_i) / P(theta_t)` of subcarrier 0 as the loss sees it after
    /// this iteration's gradient steps: this measurement's noise basis, the
    /// updated configuration. NaN when no steps were taken.
    pub stepped_peak_ratio: f64,
    /// Array SINR at the true angles, dB.
    pub sinr_db: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub beta: f64,
    pub records: Vec<IterationRecord>,
    pub initial_ris: RisConfig,
    /// Best configuration seen (lowest measured loss).
    pub final_ris: RisConfig,
    pub best_iteration: usize,
    pub converged: bool,
    pub aborted: Option<String>,
    /// Pipeline stage that produced `final_ris`.
    pub stage: String,
    pub initial_sinr_db: f64,
    pub final_sinr_db: f64,
    pub final_theta_t_hat: f64,
    pub final_theta_i_hat: f64,
    pub final_peak_ratio: f64,
    /// Measured MUSIC spectrum `P(theta)` of subcarrier 0 for `final_ris`
    /// on the scene's angle grid; empty if that measurement fell back.
    pub final_spectrum: Vec<f64>,
    /// Kept out of the serialized report so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn best_record(&self) -> &IterationRecord {
        &self.records[self.best_iteration]
    }
}

enum OptState {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl OptState {
    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::Sgd => OptState::Sgd {
                velocity: vec![0.0; n],
            },
            Optimizer::Adam => OptState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], p: &TrainParams) {
        match self {
            OptState::Sgd { velocity } => {
                for ((x, g), vel) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *vel = p.momentum * *vel - p.learning_rate * g;
                    *x += *vel;
                }
            }
            OptState::Adam { m, v, t } => {
                *t += 1;
                let b1t = 1.0 - p.adam_beta1.powi(*t);
                let b2t = 1.0 - p.adam_beta2.powi(*t);
                for i in 0..params.len() {
                    let g = grad[i];
                    m[i] = p.adam_beta1 * m[i] + (1.0 - p.adam_beta1) * g;
                    v[i] = p.adam_beta2 * v[i] + (1.0 - p.adam_beta2) * g * g;
                    let mh = m[i] / b1t;
                    let vh = v[i] / b2t;
                    params[i] -= p.learning_rate * mh / (vh.sqrt() + p.adam_eps);
                }
            }
        }
    }
}

fn ris_from_model(
    model: &MlpModel,
    input: [f64; 2],
    head: OutputHead,
    n_elements: usize,
    l_phase: usize,
    m_eff: usize,
) -> Result<RisConfig> {
    let out = model.forward(&input)?;
    let phases = phases_from_output(&out, head, l_phase, m_eff)?;
    Ok(RisConfig::from_effective(&effective_from_phases(&phases, n_elements)))
}

/// Runs the closed loop for one scene and blend weight.
///
/// The first probe uses the network's response to a zero input, which is
/// its output bias: uniformly random phases. Unresolved estimates fall back
/// to the previous angles; `max_unresolved` consecutive failures abort the
/// run, and the report then carries the reason with the best configuration
/// found so far.
pub fn train(scene: &SceneConfig, beta: f64, params: &TrainParams) -> Result<TrainReport> {
    let start = Instant::now();
    scene.validate()?;
    params.validate()?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta = {beta} outside [0, 1]")));
    }
    let manifold = ArrayManifold::from_scene(scene)?;
    let n_elements = scene.n_ris_elements;
    let m_eff = scene.n_symbols / 2;
    let l_phase = params.phase_rows(n_elements);
    if params.design_subcarrier >= scene.n_subcarriers {
        return Err(Error::SubcarrierOutOfRange {
            index: params.design_subcarrier,
            n: scene.n_subcarriers,
        });
    }
    let all: Vec<usize> = (0..scene.n_subcarriers).collect();
    let loss_subcarriers = params.loss_subcarriers.clone().unwrap_or_else(|| all.clone());

    let out_dim = match params.head {
        OutputHead::Full => l_phase * m_eff,
        OutputHead::Shared => l_phase,
    };
    let mut sizes = vec![2];
    sizes.extend(&params.hidden);
    sizes.push(out_dim);
    let mut model = MlpModel::init(&sizes, params.init_seed.unwrap_or(scene.rng_seed))?;
    let mut opt = OptState::new(params.optimizer, model.n_params());

    let mut frame_rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
    frame_rng.set_stream(FRAME_STREAM);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
    noise_rng.set_stream(NOISE_STREAM);

    let mut ris = ris_from_model(&model, [0.0, 0.0], params.head, n_elements, l_phase, m_eff)?;
    let initial_ris = ris.clone();
    let sinr_of = |r: &RisConfig| {
        evaluate_sinr(
            &manifold,
            r,
            scene.target.angle_deg,
            scene.interferer.angle_deg,
            scene.noise_power,
            &all,
        )
    };
    let initial_sinr_db = sinr_of(&initial_ris)?;

    let mut records: Vec<IterationRecord> = Vec::new();
    let mut best: Option<(usize, f64, RisConfig, Vec<f64>)> = None;
    let mut best_history: Vec<f64> = Vec::new();
    let mut previous: Option<(f64, f64)> = None;
    let mut unresolved = 0usize;
    let mut converged = false;
    let mut aborted = None;

    for iteration in 0..=params.max_outer_iterations {
        let book = SymbolBook::probing(
            scene.n_subcarriers,
            scene.n_symbols,
            scene.psk_order,
            frame_rng.next_u64(),
        );
        let frame = synthesize(scene, &ris, &book, true, &mut noise_rng)?;
        let mut opts = params.estimate.clone();
        opts.angle_grid = scene.angle_grid;
        opts.previous_interf = previous.map(|p| p.1);
        let (theta_t, theta_i, resolved, peak_ratio, bases, spectrum) =
            match estimate_angles(&manifold, &frame, &ris, &opts) {
                Ok(est) => {
                    unresolved = 0;
                    let first = est.per_subcarrier.iter().find(|s| s.subcarrier == 0);
                    let ratio = match first.map(|s| (s.peak_power_interf, s.peak_power_target)) {
                        Some((Some(pi), Some(pt))) => pi / pt,
                        _ => f64::NAN,
                    };
                    let spectrum = first.map(|s| s.spectrum.clone()).unwrap_or_default();
                    (est.theta_target, est.theta_interf, true, ratio, est.noise_bases, spectrum)
                }
                Err(Error::PeaksMerged { .. }) => {
                    unresolved += 1;
                    let Some((t, i)) = previous else {
                        aborted = Some("angles unresolved on the first probe".to_string());
                        break;
                    };
                    if unresolved >= params.max_unresolved {
                        aborted = Some(format!(
                            "angles unresolved for {unresolved} consecutive iterations"
                        ));
                        break;
                    }
                    // Noise bases still follow the current measurement.
                    let (bases, _) = crate::doa::noise_bases(
                        &frame,
                        &ris,
                        opts.subcarrier_window,
                        opts.n_sources,
                    )?;
                    (t, i, false, f64::NAN, bases, Vec::new())
                }
                Err(e) => return Err(e),
            };
        if angle_input(theta_t, theta_i).is_err() {
            aborted = Some(format!("estimated angles ({theta_t}, {theta_i}) out of range"));
            break;
        }
        previous = Some((theta_t, theta_i));

        let setup = LossSetup::new(
            &manifold,
            &bases,
            &loss_subcarriers,
            theta_t,
            theta_i,
            beta,
            scene.noise_power,
        )?;
        let loss = setup.evaluate(&ris.effective())?;
        records.push(IterationRecord {
            iteration,
            loss,
            theta_t_hat: theta_t,
            theta_i_hat: theta_i,
            resolved,
            peak_ratio,
            stepped_peak_ratio: f64::NAN,
            sinr_db: sinr_of(&ris)?,
        });
        if best.as_ref().is_none_or(|b| loss.total < b.1) {
            best = Some((records.len() - 1, loss.total, ris.clone(), spectrum));
        }
        let best_loss = best.as_ref().unwrap().1;
        best_history.push(best_loss);
        if best_history.len() > params.patience {
            let then = best_history[best_history.len() - 1 - params.patience];
            if best_loss > then - params.tolerance * then.abs() {
                converged = true;
                break;
            }
        }
        if iteration == params.max_outer_iterations {
            break;
        }

        let input = angle_input(theta_t, theta_i)?;
        for _ in 0..params.inner_steps {
            let (_, grad) = loss_gradient(
                &model, &setup, theta_t, theta_i, params.head, n_elements, l_phase, m_eff,
            )?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite("loss gradient"));
            }
            opt.step(&mut model.params, &grad, params);
        }
        ris = ris_from_model(&model, input, params.head, n_elements, l_phase, m_eff)?;
        let first = LossSetup::new(&manifold, &bases, &[0], theta_t, theta_i, 1.0, 0.0)?;
        records.last_mut().unwrap().stepped_peak_ratio =
            1.0 / first.evaluate(&ris.effective())?.spectrum_term;
    }

    let Some((best_iteration, _, final_ris, final_spectrum)) = best else {
        return Err(Error::TrainingAborted(
            aborted.unwrap_or_else(|| "no iteration completed".into()),
        ));
    };
    let rec = &records[best_iteration];
    Ok(TrainReport {
        beta,
        initial_ris,
        best_iteration,
        converged,
        aborted,
        stage: "trained".into(),
        initial_sinr_db,
        final_sinr_db: rec.sinr_db,
        final_theta_t_hat: rec.theta_t_hat,
        final_theta_i_hat: rec.theta_i_hat,
        final_peak_ratio: rec.peak_ratio,
        final_spectrum,
        final_ris,
        records,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
