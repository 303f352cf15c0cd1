mod common;

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use rodd::decoder::{
    build_interp_table, build_prior, conditional_mean_var, select_index, DecodeOptions, DecodeStatus, Decoder,
    InterpGrid, PriorGrid, PriorModel,
};
use rodd::geometry::{AmplitudeLaw, NetworkParams};
use rodd::phy::{synthesize_instance, ObservationInstance, RoddParams, SyntheticSpec};

const THETA: f64 = 1e-6;

fn reference_prior(l: u32) -> PriorModel {
    build_prior(THETA, 4.0, l, &PriorGrid::default()).unwrap()
}

/// Shared priors for the tests that only decode.
fn shared_prior(l: u32) -> Arc<PriorModel> {
    static CACHE: [OnceLock<Arc<PriorModel>>; 5] = [const { OnceLock::new() }; 5];
    CACHE[l as usize - 1].get_or_init(|| Arc::new(reference_prior(l))).clone()
}

fn law() -> AmplitudeLaw {
    NetworkParams::reference().amplitude_law()
}

fn micro_atoms() -> Vec<(f64, f64)> {
    vec![(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]
}

fn assert_micro_rounds(damping: f64) {
    let inst = common::micro_instance();
    let opts = DecodeOptions {
        iterations: 6,
        tolerance: 0.0,
        damping,
        exact_denoiser: true,
        record_states: true,
        ..DecodeOptions::default()
    };
    let prior = PriorModel::discrete(micro_atoms()).unwrap();
    let got = Decoder::new(Arc::new(prior), opts).decode(&inst).unwrap();
    let want = common::reference_rounds(&inst, &micro_atoms(), opts.iterations, opts.initial_tau, damping);
    assert_eq!(got.states.len(), want.len());
    assert_eq!(got.edges, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    for (g, w) in got.states.iter().zip(&want) {
        for i in 0..2 {
            assert!((g.tau[i] - w.tau[i]).abs() <= 1e-12, "tau {:?} vs {:?}", g.tau, w.tau);
        }
        for e in 0..4 {
            for i in 0..2 {
                assert!((g.z[e][i] - w.z[e][i]).abs() <= 1e-12);
                assert!((g.mean[e][i] - w.mean[e][i]).abs() <= 1e-12);
                assert!((g.var[e][i] - w.var[e][i]).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn micro_instance_matches_hand_evaluation() {
    assert_micro_rounds(1.0);
}

#[test]
fn micro_instance_matches_hand_evaluation_with_damping() {
    assert_micro_rounds(0.9);
}

#[test]
fn single_noiseless_neighbor_is_recovered() {
    for l in 1..=5 {
        let prior = shared_prior(l);
        let dec = Decoder::new(
            prior,
            DecodeOptions {
                iterations: 2,
                ..DecodeOptions::default()
            },
        );
        for seed in 0..20 {
            let spec = SyntheticSpec {
                neighbors: 1,
                rodd: RoddParams::new(l, 200, 0.1).unwrap(),
                snr: 1e6,
                noise_variance: 1.9,
                law: law(),
                noiseless: true,
            };
            let inst = synthesize_instance(&spec, seed).unwrap();
            let res = dec.decode(&inst).unwrap();
            assert_eq!(res.indices, inst.true_indices, "l = {l}, seed = {seed}");
        }
    }
}

/// `K` neighbors, `2^l` columns each, every column on its own pair of rows.
fn orthogonal_instance(k: usize, l: u32, truth: &[usize], coefficients: &[Complex64], snr: f64) -> ObservationInstance {
    let size = 1usize << l;
    let cols = k * size;
    let rows = 2 * cols;
    let mut signs = vec![vec![0i8; cols]; rows];
    for c in 0..cols {
        signs[2 * c][c] = 1;
        signs[2 * c + 1][c] = if c % 2 == 0 { 1 } else { -1 };
    }
    let rodd = RoddParams::new(l, 4 * rows, 0.5).unwrap();
    let scale = 1.0 / rodd.column_norm();
    let sensing = common::sensing_from_signs(&signs, scale);
    let mut y = vec![Complex64::new(0.0, 0.0); rows];
    for j in 0..k {
        let c = j * size + truth[j];
        for (r, row) in signs.iter().enumerate() {
            y[r] += coefficients[j] * (snr.sqrt() * row[c] as f64 * scale);
        }
    }
    ObservationInstance {
        receiver: 0,
        neighbors: (1..=k).collect(),
        rodd,
        off_slots: (0..rows as u32).collect(),
        sensing,
        y,
        coefficients: coefficients.to_vec(),
        true_indices: truth.to_vec(),
        noise_variance: 1.0,
        effective_snr: snr,
    }
}

#[test]
fn orthogonal_noiseless_columns_decode_exactly() {
    let prior = shared_prior(2);
    let dec = Decoder::new(
        prior,
        DecodeOptions {
            exact_denoiser: true,
            ..DecodeOptions::default()
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let truth: Vec<usize> = (0..3).map(|_| rng.random_range(0..4)).collect();
        let coefs: Vec<Complex64> = (0..3)
            .map(|_| Complex64::from_polar(law().sample(&mut rng), rng.random::<f64>() * std::f64::consts::TAU))
            .collect();
        let inst = orthogonal_instance(3, 2, &truth, &coefs, 1e9);
        assert_eq!(dec.decode(&inst).unwrap().indices, truth);
    }
}

#[test]
fn interpolation_tracks_the_exact_denoiser() {
    let prior = shared_prior(5);
    let std = prior.variance().sqrt();
    for noise_var in [1e-9, THETA * 0.1, THETA, THETA * 30.0, 1e-3, prior.variance(), 1.0, 5e4] {
        let table = build_interp_table(&prior, noise_var, &InterpGrid::default()).unwrap();
        let w = noise_var.sqrt();
        // where the decoder makes decisions the error is held to the prior's
        // scale; for noisier inputs, to the noise scale
        let limit = if noise_var <= prior.variance() { 1e-3 * std } else { 1e-2 * w };
        let span = 2.0 * (8.0 * w + prior.support());
        let mut worst = 0.0f64;
        for i in -4000..=4000 {
            // dense near the origin, reaching twice past the table
            let y = span * (i as f64 / 4000.0).powi(3);
            let (m, _) = conditional_mean_var(y, noise_var, &prior).unwrap();
            worst = worst.max((table.eval(y).0 - m).abs());
        }
        assert!(worst < limit, "noise {noise_var}: {worst} vs {limit}");
    }
}

/// Samples of the real part of a uniformly phased neighbor coefficient.
fn real_part_samples(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let law = law();
    (0..n)
        .map(|_| law.sample(&mut rng) * (rng.random::<f64>() * std::f64::consts::TAU).cos())
        .collect()
}

#[test]
fn tabulated_density_matches_sampled_histogram() {
    let prior = shared_prior(5);
    let samples = real_part_samples(1_000_000, 17);
    // symmetric bins, fine around the minimum amplitude sqrt(theta)
    let r = THETA.sqrt();
    let cuts = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0, 30.0, 100.0];
    let mut edges: Vec<f64> = cuts.iter().rev().map(|c| -c * r).collect();
    edges.extend(cuts[1..].iter().map(|c| c * r));
    edges.insert(0, f64::NEG_INFINITY);
    edges.push(f64::INFINITY);
    let mass = prior.continuous_mass();
    let mut chi2 = 0.0;
    for w in edges.windows(2) {
        let lo = w[0].max(-prior.support());
        let hi = w[1].min(prior.support());
        let p = prior.continuous_mass_between(lo, hi) / mass;
        let observed = samples.iter().filter(|&&s| s > w[0] && s <= w[1]).count() as f64;
        let expected = p * samples.len() as f64;
        chi2 += (observed - expected).powi(2) / expected;
    }
    let dof = (edges.len() - 2) as f64;
    let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.99);
    assert!(chi2 < critical, "chi2 = {chi2}, critical = {critical}");
}

#[test]
fn posterior_mean_matches_weighted_sampling() {
    let l = 5;
    let prior = reference_prior(l);
    let active = 1.0 / (1u64 << l) as f64;
    let values = real_part_samples(10_000_000, 23);
    let s = THETA;
    for k in 0..5 {
        let y = 0.5 * k as f64 * THETA.sqrt();
        // mixture: atom at zero plus the sampled continuous part, weighted by
        // the Gaussian likelihood
        let w0 = (1.0 - active) * (-y * y / (2.0 * s)).exp();
        let n = values.len() as f64;
        let (mut sw, mut swx, mut sw2, mut sw2x, mut sw2x2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &v in &values {
            let w = active * (-(y - v).powi(2) / (2.0 * s)).exp();
            sw += w;
            swx += w * v;
            sw2 += w * w;
            sw2x += w * w * v;
            sw2x2 += w * w * v * v;
        }
        let (a, b) = (swx / n, w0 + sw / n);
        let mean = a / b;
        // delta-method error of the ratio of sample means
        let var_num = sw2x2 / n - a * a;
        let var_den = sw2 / n - (sw / n).powi(2);
        let cov = sw2x / n - a * (sw / n);
        let se = ((var_num - 2.0 * mean * cov + mean * mean * var_den) / n).sqrt() / b;
        let (got, _) = conditional_mean_var(y, s, &prior).unwrap();
        assert!((got - mean).abs() <= 3.0 * se + 1e-12, "y = {y}: {got} vs {mean} +- {se}");
    }
}

fn synthetic(k: usize, l: u32, frame_len: usize, snr: f64, seed: u64) -> ObservationInstance {
    let spec = SyntheticSpec {
        neighbors: k,
        rodd: RoddParams::new(l, frame_len, 1.0 / (k as f64 + 1.0)).unwrap(),
        snr,
        noise_variance: 1.9,
        law: law(),
        noiseless: false,
    };
    synthesize_instance(&spec, seed).unwrap()
}

fn error_rate(dec: &Decoder, k: usize, l: u32, frame_len: usize, trials: u64) -> (f64, f64) {
    let mut rates = Vec::new();
    for seed in 0..trials {
        let inst = synthetic(k, l, frame_len, 1e6, seed);
        rates.push(dec.decode(&inst).unwrap().errors(&inst) as f64 / k as f64);
    }
    let mean = rates.iter().sum::<f64>() / trials as f64;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    (mean, (var / trials as f64).sqrt())
}

#[test]
fn error_rate_does_not_grow_with_frame_length() {
    let dec = Decoder::new(shared_prior(3), DecodeOptions::default());
    let grid = [60, 90, 140, 200];
    let rates: Vec<(f64, f64)> = grid.iter().map(|&m| error_rate(&dec, 8, 3, m, 60)).collect();
    for (w, m) in rates.windows(2).zip(grid.windows(2)) {
        let slack = 2.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        assert!(w[1].0 <= w[0].0 + slack, "M_s {:?}: {:?}", m, w);
    }
    assert!(rates[0].0 > rates[3].0);
}

#[test]
fn degree_substitution_gap_shrinks_with_frame_length() {
    let prior = shared_prior(2);
    let table = Decoder::new(prior.clone(), DecodeOptions::default());
    let exact = Decoder::new(
        prior,
        DecodeOptions {
            exact_denoiser: true,
            ..DecodeOptions::default()
        },
    );
    let mut gaps = Vec::new();
    for m in [16, 64] {
        let (a, sa) = error_rate(&table, 2, 2, m, 60);
        let (b, sb) = error_rate(&exact, 2, 2, m, 60);
        gaps.push(((a - b).abs(), (sa * sa + sb * sb).sqrt()));
    }
    assert!(gaps[1].0 <= gaps[0].0 + 2.0 * gaps[1].1, "{gaps:?}");
}

#[test]
fn degenerate_instances_report_every_neighbor_missed() {
    let mut inst = synthetic(3, 2, 40, 1e6, 1);
    inst.off_slots.clear();
    inst.y.clear();
    inst.sensing = common::sensing_from_signs(&[vec![0; 12]], 1.0);
    inst.sensing.rows = 0;
    let dec = Decoder::new(shared_prior(2), DecodeOptions::default());
    let res = dec.decode(&inst).unwrap();
    assert_eq!(res.status, DecodeStatus::Degenerate);
    assert_eq!(res.errors(&inst), 3);
}

#[test]
fn traces_are_written_as_csv() {
    let inst = synthetic(4, 3, 120, 1e6, 2);
    let dec = Decoder::new(
        shared_prior(3),
        DecodeOptions {
            record_trace: true,
            ..DecodeOptions::default()
        },
    );
    let res = dec.decode(&inst).unwrap();
    assert_eq!(res.trace.len(), res.rounds);
    let mut buf = Vec::new();
    res.write_trace_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("iteration,tau_re,tau_im,residual\n"));
    assert_eq!(text.lines().count(), res.rounds + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn argmax_is_invariant_to_positive_rescaling(
        parts in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..16),
        scale in 1e-6f64..1e6,
    ) {
        let block: Vec<Complex64> = parts.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
        let i = select_index(&block);
        let scaled: Vec<Complex64> = block.iter().map(|c| c * scale).collect();
        prop_assert_eq!(select_index(&scaled), i);
        prop_assert!(block.iter().all(|c| c.norm_sqr() <= block[i].norm_sqr()));
        prop_assert!(block[..i].iter().all(|c| c.norm_sqr() < block[i].norm_sqr()));
    }

    #[test]
    fn posterior_mean_is_monotone_with_nonnegative_variance(
        a in -0.05f64..0.05,
        b in -0.05f64..0.05,
        log_noise in -16f64..0.0,
    ) {
        let prior = shared_prior(5);
        let s = 10f64.powf(log_noise);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (m_lo, v_lo) = conditional_mean_var(lo, s, &prior).unwrap();
        let (m_hi, v_hi) = conditional_mean_var(hi, s, &prior).unwrap();
        prop_assert!(v_lo >= 0.0 && v_hi >= 0.0);
        prop_assert!(m_hi >= m_lo - 1e-12 * m_lo.abs().max(1e-12));
        prop_assert!(m_lo.abs() <= prior.support() && m_hi.abs() <= prior.support());
    }

    #[test]
    fn decoder_state_invariants(seed in 0u64..10_000, k in 1usize..6, frame_len in 20usize..120) {
        let inst = synthetic(k, 2, frame_len, 1e5, seed);
        let dec = Decoder::new(
            shared_prior(2),
            DecodeOptions { record_states: true, iterations: 8, ..DecodeOptions::default() },
        );
        let res = dec.decode(&inst).unwrap();
        prop_assert_eq!(res.indices.len(), k);
        prop_assert!(res.indices.iter().all(|&i| i < 4));
        if inst.is_degenerate() {
            prop_assert_eq!(res.status, DecodeStatus::Degenerate);
        } else {
            // the edge set is exactly the support of S
            let dense = inst.sensing.to_dense();
            let support: Vec<(usize, usize)> = (0..dense.len())
                .flat_map(|r| (0..dense[r].len()).map(move |c| (r, c)))
                .filter(|&(r, c)| dense[r][c] != 0.0)
                .collect();
            prop_assert_eq!(&res.edges, &support);
            for st in &res.states {
                prop_assert!(st.tau[0] > 0.0 && st.tau[1] > 0.0);
                prop_assert!(st.var.iter().all(|v| v[0] >= 0.0 && v[1] >= 0.0));
            }
        }
    }
}
