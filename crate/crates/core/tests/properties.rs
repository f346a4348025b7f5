use mimo_arena_core::channel::{apply_awgn_with, draw_channel, draw_channel_with};
use mimo_arena_core::detect::{detect, detect_ml_brute, detect_sphere, DetectOptions, DetectorKind};
use mimo_arena_core::fec::{bits_to_bytes, bytes_to_bits, conv_encode, crc_attach, crc_check, viterbi_decode};
use mimo_arena_core::linksim::stats::wilson_interval;
use mimo_arena_core::modem::{build_constellation, hard_slice, modulate, scalar_maxlog_llr};
use mimo_arena_core::numerics::{hermitian_solve, least_squares_solve, qr_decompose, ComplexMatrix};
use mimo_arena_core::rng::{Purpose, SimRng};
use mimo_arena_core::Complex64;
use proptest::prelude::*;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
    let mut rng = SimRng::from_seed(seed, Purpose::Aux, 0);
    ComplexMatrix::from_fn(rows, cols, |_, _| rng.complex_gaussian())
}

fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = SimRng::from_seed(seed, Purpose::Aux, 1);
    (0..n).map(|_| rng.complex_gaussian()).collect()
}

fn mask_of(n: usize) -> u8 {
    ((1u16 << n) - 1) as u8
}

/// Received vector for random labels on a random channel.
fn scenario(nt: usize, nr: usize, order: u32, snr_db: f64, seed: u64) -> (ComplexMatrix, Vec<Complex64>, Vec<usize>) {
    let c = build_constellation(order).unwrap();
    let mut ch = SimRng::from_seed(seed, Purpose::Channel, 0);
    let h = draw_channel_with(&mut ch, nt, mask_of(nr));
    let mut pay = SimRng::from_seed(seed, Purpose::Payload, 0);
    let labels: Vec<usize> = (0..nt).map(|_| (pay.next_u64() % c.size() as u64) as usize).collect();
    let x: Vec<Complex64> = labels.iter().map(|&l| c.point(l)).collect();
    let mut noise = SimRng::from_seed(seed, Purpose::Noise, 0);
    let mut y = Vec::new();
    apply_awgn_with(&h, &x, 10f64.powf(-snr_db / 10.0), &mut noise, &mut y).unwrap();
    (h, y, labels)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn qr_reconstructs_with_unitary_q(rows in 1usize..8, extra in 0usize..4, seed in any::<u64>()) {
        let cols = rows.saturating_sub(extra).max(1);
        let a = random_matrix(rows, cols, seed);
        let (q, r) = qr_decompose(&a).unwrap();
        prop_assert!(q.mul(&r).max_abs_diff(&a) < 1e-10);
        prop_assert!(q.gram().max_abs_diff(&ComplexMatrix::identity(cols)) < 1e-10);
        for i in 0..cols {
            prop_assert!(r[(i, i)].re > 0.0 && r[(i, i)].im == 0.0);
            for j in 0..i {
                prop_assert_eq!(r[(i, j)], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn least_squares_residual_is_orthogonal(rows in 1usize..8, extra in 0usize..4, seed in any::<u64>()) {
        let cols = rows.saturating_sub(extra).max(1);
        let a = random_matrix(rows, cols, seed);
        let b = random_vec(rows, seed);
        let x = least_squares_solve(&a, &b).unwrap();
        let ax = a.mul_vec(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
        for g in a.adjoint_mul_vec(&r) {
            prop_assert!(g.norm() < 1e-9);
        }
    }

    #[test]
    fn hermitian_solve_satisfies_system(n in 1usize..7, seed in any::<u64>()) {
        let g = random_matrix(n + 2, n, seed);
        let a = g.gram();
        let b = random_matrix(n, 2, seed ^ 1);
        let x = hermitian_solve(&a, &b).unwrap();
        prop_assert!(a.mul(&x).max_abs_diff(&b) < 1e-8 * (1.0 + a.max_abs()));
    }

    #[test]
    fn modulate_then_slice_round_trips(order in prop::sample::select(vec![4u32, 16, 64]), seed in any::<u64>()) {
        let c = build_constellation(order).unwrap();
        let mut rng = SimRng::from_seed(seed, Purpose::Payload, 0);
        let bits: Vec<u8> = (0..c.bits_per_symbol() * 20).map(|_| rng.bit()).collect();
        let symbols = modulate(&bits, &c).unwrap();
        let back: Vec<u8> = symbols.iter().flat_map(|&s| hard_slice(s, &c).1).collect();
        prop_assert_eq!(back, bits);
    }

    #[test]
    fn llr_signs_agree_with_transmitted_bits(order in prop::sample::select(vec![4u32, 16, 64]), label in 0usize..64, n0 in 0.01f64..1.0) {
        let c = build_constellation(order).unwrap();
        let label = label % c.size();
        let llrs = scalar_maxlog_llr(c.point(label), &c, n0);
        for (k, l) in llrs.iter().enumerate() {
            if c.label_bit(label, k) == 0 {
                prop_assert!(*l > 0.0);
            } else {
                prop_assert!(*l < 0.0);
            }
        }
    }

    #[test]
    fn sphere_matches_brute_force(
        nt in 1usize..4,
        order in prop::sample::select(vec![4u32, 16]),
        snr_db in 0.0f64..30.0,
        seed in any::<u64>(),
    ) {
        let c = build_constellation(order).unwrap();
        let (h, y, _) = scenario(nt, nt, order, snr_db, seed);
        let n0 = 10f64.powf(-snr_db / 10.0);
        let brute = detect_ml_brute(&h, &y, &c, n0, false).unwrap();
        let sphere = detect_sphere(&h, &y, &c, n0);
        prop_assert_eq!(&sphere.labels, &brute.labels);
        prop_assert!(sphere.nodes_visited <= brute.nodes_visited);
        prop_assert_eq!(brute.nodes_visited, (c.size() as u64).pow(nt as u32));
    }

    #[test]
    fn overloaded_sphere_matches_regularized_brute_force(nr in 1usize..3, seed in any::<u64>(), snr_db in 0.0f64..30.0) {
        let c = build_constellation(4).unwrap();
        let (h, y, _) = scenario(4, nr, 4, snr_db, seed);
        let n0 = 10f64.powf(-snr_db / 10.0);
        let brute = detect_ml_brute(&h, &y, &c, n0, true).unwrap();
        let sphere = detect_sphere(&h, &y, &c, n0);
        prop_assert!(sphere.regularized);
        prop_assert_eq!(sphere.labels, brute.labels);
    }

    #[test]
    fn hard_decisions_invariant_to_common_scaling(
        kind in prop::sample::select(DetectorKind::ALL.to_vec()),
        scale in 0.1f64..10.0,
        seed in any::<u64>(),
    ) {
        let c = build_constellation(16).unwrap();
        let (h, y, _) = scenario(3, 4, 16, 15.0, seed);
        let n0 = 10f64.powf(-1.5);
        let s = Complex64::new(scale, 0.0);
        let ys: Vec<Complex64> = y.iter().map(|v| v * s).collect();
        let opts = DetectOptions::default();
        let a = detect(kind, &h, &y, &c, n0, opts).unwrap();
        let b = detect(kind, &h.scale(s), &ys, &c, n0 * scale * scale, opts).unwrap();
        prop_assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn noiseless_viterbi_recovers_payload(bytes in prop::collection::vec(any::<u8>(), 1..40)) {
        let bits = bytes_to_bits(&bytes);
        let llrs: Vec<f64> = conv_encode(&bits).iter().map(|&b| if b == 0 { 4.0 } else { -4.0 }).collect();
        let decoded = viterbi_decode(&llrs, bits.len()).unwrap();
        prop_assert_eq!(bits_to_bytes(&decoded), bytes);
    }

    #[test]
    fn crc_catches_every_single_bit_flip(bytes in prop::collection::vec(any::<u8>(), 0..40), pos in any::<usize>()) {
        let mut frame = crc_attach(&bytes);
        prop_assert!(crc_check(&frame));
        let bit = pos % (frame.len() * 8);
        frame[bit / 8] ^= 0x80 >> (bit % 8);
        prop_assert!(!crc_check(&frame));
    }

    #[test]
    fn channel_draws_are_reproducible(seed in any::<u64>(), mask in 1u8..=255, nt in 1usize..=4) {
        let a = draw_channel(mask.count_ones() as usize, nt, mask, seed).unwrap();
        let b = draw_channel(mask.count_ones() as usize, nt, mask, seed).unwrap();
        prop_assert_eq!(a.h, b.h);
    }

    #[test]
    fn wilson_interval_brackets_estimate(trials in 1u64..100_000, frac in 0.0f64..=1.0) {
        let errors = ((trials as f64) * frac).floor() as u64;
        let (lo, hi) = wilson_interval(errors, trials);
        let p = errors as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
        let (mlo, mhi) = wilson_interval(trials - errors, trials);
        prop_assert!((mlo - (1.0 - hi)).abs() < 1e-12 && (mhi - (1.0 - lo)).abs() < 1e-12);
    }
}
