use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risradar::experiments::train_and_convolve;
use risradar::linalg::hermitian_eigen;
use risradar::risopt::loss::effective_from_phases;
use risradar::risopt::mlp::{mlp_forward, MlpModel};
use risradar::risopt::{
    beam_pattern, convolve_notch, evaluate_sinr, loss_gradient, pattern_gain_at, LossSetup, NotchMode,
    OutputHead, TrainParams,
};
use risradar::scene::{derive_constants, AngleGrid, RisGeometry, SceneConfig};
use risradar::waveform::{ArrayManifold, RisConfig};

fn small_manifold(l: usize, n_sc: usize, seed: u64) -> ArrayManifold {
    let mut cfg = SceneConfig::reference();
    cfg.n_ris_elements = l;
    cfg.n_subcarriers = n_sc;
    cfg.bandwidth_hz = 10e6 * n_sc as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let geom = RisGeometry {
        element_spacing_wavelengths: 0.5,
        element_to_rx_dist_m: (0..l).map(|_| rng.random_range(0.5..1.5)).collect(),
    };
    ArrayManifold::new(geom, derive_constants(&cfg).unwrap())
}

/// Noise basis: the eigenvectors of a random Hermitian matrix.
fn random_basis(k: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<Complex64> {
    let a = Array2::from_shape_fn((k, k), |_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = &a + &a.t().mapv(|v| v.conj());
    hermitian_eigen(&h).unwrap().vectors.slice(ndarray::s![.., ..cols]).to_owned()
}

#[test]
fn network_gradient_matches_central_differences() {
    let (l, m_eff, n_sc) = (4, 4, 2);
    let h = 1e-5;
    let mut failures = Vec::new();
    for seed in 0..20u64 {
        let manifold = small_manifold(l, n_sc, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bases: Vec<_> = (0..n_sc).map(|_| random_basis(m_eff, 2, &mut rng)).collect();
        let beta = rng.random_range(0.0..1.0);
        let sigma2 = rng.random_range(0.0..2.0);
        let (tt, ti) = (rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0));
        let setup = LossSetup::new(&manifold, &bases, &[0, 1], tt, ti, beta, sigma2).unwrap();
        let model = MlpModel::init(&[2, 8, 8, l * m_eff], seed).unwrap();
        let (_, grad) = loss_gradient(&model, &setup, tt, ti, OutputHead::Full, l, l, m_eff).unwrap();
        let f = |p: &MlpModel| {
            let ph = mlp_forward(p, tt, ti, OutputHead::Full, l, m_eff).unwrap();
            setup.evaluate(&effective_from_phases(&ph, l)).unwrap().total
        };
        for i in 0..model.n_params() {
            let mut up = model.clone();
            up.params[i] += h;
            let mut dn = model.clone();
            dn.params[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / (grad[i].abs() + 1e-8);
            if rel >= 1e-4 {
                failures.push((seed, i, grad[i], fd));
            }
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn gradient_is_affine_in_beta() {
    let manifold = small_manifold(4, 2, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bases: Vec<_> = (0..2).map(|_| random_basis(4, 2, &mut rng)).collect();
    let phases = Array2::from_shape_fn((4, 4), |_| rng.random_range(-PI..PI));
    let c = effective_from_phases(&phases, 4);
    let setup = LossSetup::new(&manifold, &bases, &[0, 1], 20.0, 50.0, 0.0, 0.3).unwrap();
    let (_, g0) = setup.evaluate_with_gradient(&c).unwrap();
    for beta in [0.0, 0.5, 1.0] {
        let (loss, g) = setup.with_beta(beta).evaluate_with_gradient(&c).unwrap();
        assert!((loss.total - (beta * loss.spectrum_term + (1.0 - beta) * loss.sinr_term)).abs() < 1e-12 * loss.total);
        for ((t, s), r) in g.total.iter().zip(g0.spectrum.iter()).zip(g0.sinr.iter()) {
            assert!((t - (beta * s + (1.0 - beta) * r)).abs() < 1e-12 * (1.0 + t.abs()));
        }
    }
}

#[test]
fn single_element_loss_is_stationary() {
    // One element and one slot: both loss terms are phase independent.
    let cfg = SceneConfig::reference();
    let manifold = ArrayManifold::new(RisGeometry::colocated(1), derive_constants(&cfg).unwrap());
    let q = Array2::from_elem((1, 1), Complex64::new(1.0, 0.0));
    let setup = LossSetup::new(&manifold, &[q], &[0], 20.0, 50.0, 0.5, 0.3).unwrap();
    let c = effective_from_phases(&Array2::from_elem((1, 1), 0.7), 1);
    let (_, g) = setup.evaluate_with_gradient(&c).unwrap();
    assert!(g.total[[0, 0]].abs() < 1e-8);
}

#[test]
fn mlp_golden_fixture() {
    let m = MlpModel::init(&[2, 64, 64, 49 * 50], 1).unwrap();
    let p = mlp_forward(&m, 20.0, 50.0, OutputHead::Full, 49, 50).unwrap();
    let v: Vec<f64> = p.iter().copied().collect();
    let first = [
        1.4523616277003815,
        2.1661422840273383,
        0.7506981143135071,
        0.22886805774947322,
        0.8774170282310988,
        0.8753528882551764,
    ];
    for (a, b) in v.iter().zip(first) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    let last = [0.25980049650785386, 2.050226778267041, 2.302042713344795];
    for (a, b) in v[v.len() - 3..].iter().zip(last) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!((v.iter().sum::<f64>() - -12.023999865799539).abs() < 1e-9);
    assert!((v.iter().map(|x| x * x).sum::<f64>() - 8188.33073206768).abs() < 1e-8);
}

#[test]
fn matched_column_sinr_closed_form() {
    let mut cfg = SceneConfig::reference();
    cfg.geometry.element_to_rx_dist_m = Some(vec![0.0; 50]);
    let manifold = ArrayManifold::from_scene(&cfg).unwrap();
    let b_t = manifold.steering(0, 20f64.to_radians());
    let b_i = manifold.steering(0, 50f64.to_radians());
    let col = Array2::from_shape_fn((50, 1), |(l, _)| b_t[l].conj());
    let ris = RisConfig::from_effective(&col);
    let inner: Complex64 = b_t.iter().zip(b_i.iter()).map(|(a, b)| a.conj() * b).sum();
    let want = 10.0 * (2500.0 / inner.norm_sqr()).log10();
    let got = evaluate_sinr(&manifold, &ris, 20.0, 50.0, 0.0, &[0]).unwrap();
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn notch_is_exact_and_leaves_other_angles() {
    let cfg = SceneConfig::reference();
    let manifold = ArrayManifold::from_scene(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ris = RisConfig::random(50, 100, &mut rng);
    let out = convolve_notch(&manifold, &ris, 50.0, NotchMode::Truncation, 0).unwrap();
    let c = out.effective();
    let b_i = manifold.steering(0, 50f64.to_radians());
    let b_t = manifold.steering(0, 20f64.to_radians());
    for k in 0..c.ncols() {
        let col = c.column(k);
        let l1: f64 = col.iter().map(|v| v.norm()).sum();
        let af_i: Complex64 = col.iter().zip(b_i.iter()).map(|(a, b)| a * b).sum();
        let af_t: Complex64 = col.iter().zip(b_t.iter()).map(|(a, b)| a * b).sum();
        assert!(af_i.norm() < 1e-12 * l1);
        assert!(af_t.norm() > 1e-6 * l1);
    }
    assert!(!out.is_unit_modulus(1e-9));
}

#[test]
fn trained_surface_then_notch() {
    let scene = SceneConfig::reference();
    let params = TrainParams::default();
    let t = train_and_convolve(&scene, 0.8, &params).unwrap();
    let r = &t.report;

    let best = r.records.iter().map(|x| x.loss.total).fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_record().loss.total, best);
    // Convolution mode trains L-1 elements; the last is switched off.
    let amps = &r.final_ris.amplitudes;
    assert!(amps.slice(ndarray::s![..49, ..]).iter().all(|a| (a - 1.0).abs() < 1e-12));
    assert!(amps.row(49).iter().all(|&a| a == 0.0));
    assert!(r.records.iter().all(|x| x.sinr_db.is_finite()));
    assert!(r.final_peak_ratio > 1.0, "{}", r.final_peak_ratio);

    let manifold = ArrayManifold::from_scene(&scene).unwrap();
    let grid = AngleGrid::default();
    let pre = pattern_gain_at(&manifold, &r.final_ris, &grid, 0, 50.0).unwrap();
    let post = pattern_gain_at(&manifold, &t.convolved, &grid, 0, 50.0).unwrap();
    assert!(post <= pre - 20.0, "pre {pre} dB, post {post} dB");

    let pattern = beam_pattern(&manifold, &r.final_ris, &grid, 0).unwrap();
    let peak = pattern.iter().max_by(|a, b| a.gain_db.total_cmp(&b.gain_db)).unwrap();
    assert!((peak.angle_deg - 20.0).abs() <= 1.0, "peak at {}", peak.angle_deg);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn network_output_is_unit_modulus(seed in 0u64..10_000, tt in -89.0f64..89.0, ti in -89.0f64..89.0) {
        let m = MlpModel::init(&[2, 8, 8, 12], seed).unwrap();
        let ph = mlp_forward(&m, tt, ti, OutputHead::Full, 3, 4).unwrap();
        let c = effective_from_phases(&ph, 4);
        for (l, row) in c.rows().into_iter().enumerate() {
            for v in row {
                if l < 3 {
                    prop_assert!((v.norm() - 1.0).abs() < 1e-12);
                } else {
                    prop_assert!(v.norm() == 0.0);
                }
            }
        }
    }

    #[test]
    fn loss_is_affine_in_beta(seed in 0u64..10_000, beta in 0.0f64..1.0) {
        let manifold = small_manifold(3, 1, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_basis(4, 2, &mut rng);
        let phases = Array2::from_shape_fn((3, 4), |_| rng.random_range(-PI..PI));
        let c = effective_from_phases(&phases, 3);
        let setup = LossSetup::new(&manifold, &[q], &[0], 10.0, 40.0, 0.0, 0.1).unwrap();
        let at = |b: f64| setup.with_beta(b).evaluate(&c).unwrap().total;
        let (l0, l1, lb) = (at(0.0), at(1.0), at(beta));
        prop_assert!((lb - ((1.0 - beta) * l0 + beta * l1)).abs() <= 1e-12 * (l0.abs() + l1.abs()));
    }
}
