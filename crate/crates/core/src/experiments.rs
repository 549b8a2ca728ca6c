//! Multi-run studies built from the pipeline stages: the beta sweep, the
//! closely-spaced-angles study and the INR error sweep. Runs are independent
//! and fan out over rayon; results come back in input order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risopt::{convolve_notch, evaluate_sinr, gain_advantage_db, train, TrainParams, TrainReport};
use crate::rvmap::{error_sweep, Stage, SweepOptions, SweepRow, SweepStage};
use crate::scene::SceneConfig;
use crate::waveform::{ArrayManifold, RisConfig};

/// A trained surface and its notch-convolved counterpart.
#[derive(Debug, Clone)]
pub struct TrainedRis {
    pub report: TrainReport,
    pub convolved: RisConfig,
}

/// Trains, then places the notch at the final interference estimate.
pub fn train_and_convolve(scene: &SceneConfig, beta: f64, params: &TrainParams) -> Result<TrainedRis> {
    let report = train(scene, beta, params)?;
    let manifold = ArrayManifold::from_scene(scene)?;
    let convolved = convolve_notch(
        &manifold,
        &report.final_ris,
        report.final_theta_i_hat,
        params.notch_mode,
        params.design_subcarrier,
    )?;
    Ok(TrainedRis { report, convolved })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRun {
    pub beta: f64,
    pub seed: u64,
    pub initial_sinr_db: f64,
    pub sinr_db: f64,
    pub convolved_sinr_db: f64,
    /// Target-over-interference pattern gain over all subcarriers.
    pub gain_advantage_db: f64,
    pub convolved_gain_advantage_db: f64,
    pub peak_ratio: f64,
    pub theta_t_hat: f64,
    pub theta_i_hat: f64,
    pub converged: bool,
    pub aborted: Option<String>,
}

fn summarize(scene: &SceneConfig, beta: f64, t: &TrainedRis) -> Result<BetaRun> {
    let manifold = ArrayManifold::from_scene(scene)?;
    let all: Vec<usize> = (0..scene.n_subcarriers).collect();
    let (tt, ti) = (scene.target.angle_deg, scene.interferer.angle_deg);
    let r = &t.report;
    Ok(BetaRun {
        beta,
        seed: scene.rng_seed,
        initial_sinr_db: r.initial_sinr_db,
        sinr_db: r.final_sinr_db,
        convolved_sinr_db: evaluate_sinr(&manifold, &t.convolved, tt, ti, scene.noise_power, &all)?,
        gain_advantage_db: gain_advantage_db(&manifold, &r.final_ris, tt, ti, &all)?,
        convolved_gain_advantage_db: gain_advantage_db(&manifold, &t.convolved, tt, ti, &all)?,
        peak_ratio: r.final_peak_ratio,
        theta_t_hat: r.final_theta_t_hat,
        theta_i_hat: r.final_theta_i_hat,
        converged: r.converged,
        aborted: r.aborted.clone(),
    })
}

/// Seeds `scene.rng_seed .. scene.rng_seed + n_seeds`.
pub fn seeded_scenes(scene: &SceneConfig, n_seeds: usize) -> Vec<SceneConfig> {
    (0..n_seeds as u64)
        .map(|k| {
            let mut s = scene.clone();
            s.rng_seed = scene.rng_seed.wrapping_add(k);
            s
        })
        .collect()
}

/// One training run per (beta, seed), ordered beta-major.
pub fn beta_sweep(
    scene: &SceneConfig,
    params: &TrainParams,
    betas: &[f64],
    n_seeds: usize,
) -> Result<Vec<BetaRun>> {
    let scenes = seeded_scenes(scene, n_seeds);
    let jobs: Vec<(f64, &SceneConfig)> = betas
        .iter()
        .flat_map(|&b| scenes.iter().map(move |s| (b, s)))
        .collect();
    jobs.par_iter()
        .map(|&(beta, s)| summarize(s, beta, &train_and_convolve(s, beta, params)?))
        .collect()
}

/// Median of `f` over the runs of each beta, in `betas` order. NaN entries
/// are dropped.
pub fn per_beta_median(runs: &[BetaRun], betas: &[f64], f: impl Fn(&BetaRun) -> f64) -> Vec<f64> {
    betas
        .iter()
        .map(|&b| {
            let mut v: Vec<f64> = runs
                .iter()
                .filter(|r| r.beta == b)
                .map(&f)
                .filter(|x| !x.is_nan())
                .collect();
            v.sort_by(f64::total_cmp);
            match v.len() {
                0 => f64::NAN,
                k if k % 2 == 1 => v[k / 2],
                k => 0.5 * (v[k / 2 - 1] + v[k / 2]),
            }
        })
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingRun {
    pub separation_deg: f64,
    pub seed: u64,
    pub theta_t_deg: f64,
    pub theta_i_deg: f64,
    /// Both final estimates within tolerance and training not aborted.
    pub resolved: bool,
    pub theta_t_hat: f64,
    pub theta_i_hat: f64,
    pub gain_advantage_db: f64,
    pub convolved_gain_advantage_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingSummary {
    pub separation_deg: f64,
    pub resolved_fraction: f64,
    pub median_gain_advantage_db: f64,
    pub median_convolved_gain_advantage_db: f64,
}

/// Moves the target to `theta_i - separation` for every separation and seed.
pub fn spacing_sweep(
    scene: &SceneConfig,
    params: &TrainParams,
    beta: f64,
    separations_deg: &[f64],
    n_seeds: usize,
    tolerance_deg: f64,
) -> Result<(Vec<SpacingRun>, Vec<SpacingSummary>)> {
    let jobs: Vec<(f64, SceneConfig)> = separations_deg
        .iter()
        .flat_map(|&d| {
            let mut base = scene.clone();
            base.target.angle_deg = scene.interferer.angle_deg - d;
            seeded_scenes(&base, n_seeds).into_iter().map(move |s| (d, s))
        })
        .collect();
    if let Some((_, s)) = jobs.iter().find(|(_, s)| s.target.angle_deg <= -90.0) {
        return Err(Error::InvalidAngle(s.target.angle_deg));
    }
    let runs: Vec<SpacingRun> = jobs
        .par_iter()
        .map(|(d, s)| -> Result<SpacingRun> {
            let t = train_and_convolve(s, beta, params)?;
            let b = summarize(s, beta, &t)?;
            let ok = b.aborted.is_none()
                && (b.theta_t_hat - s.target.angle_deg).abs() <= tolerance_deg
                && (b.theta_i_hat - s.interferer.angle_deg).abs() <= tolerance_deg;
            Ok(SpacingRun {
                separation_deg: *d,
                seed: s.rng_seed,
                theta_t_deg: s.target.angle_deg,
                theta_i_deg: s.interferer.angle_deg,
                resolved: ok,
                theta_t_hat: b.theta_t_hat,
                theta_i_hat: b.theta_i_hat,
                gain_advantage_db: b.gain_advantage_db,
                convolved_gain_advantage_db: b.convolved_gain_advantage_db,
            })
        })
        .collect::<Result<_>>()?;
    let summary = separations_deg
        .iter()
        .map(|&d| {
            let sel: Vec<&SpacingRun> = runs.iter().filter(|r| r.separation_deg == d).collect();
            let med = |f: &dyn Fn(&SpacingRun) -> f64| {
                let mut v: Vec<f64> = sel.iter().map(|r| f(r)).collect();
                v.sort_by(f64::total_cmp);
                let k = v.len();
                if k % 2 == 1 {
                    v[k / 2]
                } else {
                    0.5 * (v[k / 2 - 1] + v[k / 2])
                }
            };
            SpacingSummary {
                separation_deg: d,
                resolved_fraction: sel.iter().filter(|r| r.resolved).count() as f64 / sel.len() as f64,
                median_gain_advantage_db: med(&|r| r.gain_advantage_db),
                median_convolved_gain_advantage_db: med(&|r| r.convolved_gain_advantage_db),
            }
        })
        .collect();
    Ok((runs, summary))
}

/// Trains once on `scene`, then sweeps the INR for the random, trained and
/// convolved stages.
pub fn inr_sweep(
    scene: &SceneConfig,
    params: &TrainParams,
    beta: f64,
    inr_db: &[f64],
    opts: &SweepOptions,
) -> Result<(TrainedRis, Vec<SweepRow>)> {
    let trained = train_and_convolve(scene, beta, params)?;
    let stages = [
        SweepStage {
            stage: Stage::Random,
            ris: None,
        },
        SweepStage {
            stage: Stage::Trained,
            ris: Some(trained.report.final_ris.clone()),
        },
        SweepStage {
            stage: Stage::Convolved,
            ris: Some(trained.convolved.clone()),
        },
    ];
    let ratios: Vec<f64> = inr_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
    let rows = error_sweep(scene, &ratios, &stages, opts)?;
    Ok((trained, rows))
}
