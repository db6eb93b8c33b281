use std::f64::consts::{FRAC_PI_4, SQRT_2};

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use parchsh::extraction::{self, RelabelStep};
use parchsh::game::{self, TSIRELSON};
use parchsh::linalg::{self, ComplexMatrix, Side, StateVector};
use parchsh::strategy::{self, NoiseSpec, Strategy};
use parchsh::verifier::{self, CertifyOptions, JunkPolicy};
use parchsh::BitString;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn random_hermitian(dim: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    random_matrix(dim, dim, rng).hermitian_part()
}

fn random_strategy(n: usize, seed: u64) -> Strategy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim_a = rng.random_range(1..=3);
    let dim_b = rng.random_range(1..=3);
    strategy::random_strategy(n, dim_a, dim_b, &mut rng).unwrap()
}

fn strategy_diff(a: &Strategy, b: &Strategy) -> f64 {
    let mut worst = a.state().distance(b.state());
    for side in [Side::Alice, Side::Bob] {
        for (ra, rb) in a.table(side).iter().zip(b.table(side)) {
            for (ma, mb) in ra.iter().zip(rb) {
                worst = worst.max(ma.max_abs_diff(mb));
            }
        }
    }
    worst
}

/// Smallest `|λ|` over Bob's `N^q_k ± N^{q̄}_k`. Sign normalization maps zero
/// eigenvalues to +1, so the extracted operators only transform covariantly
/// under relabeling when these sums are nonsingular.
fn bob_sum_gap(s: &Strategy) -> f64 {
    let half = s.half();
    let mut gap = f64::INFINITY;
    for q in BitString::all(half) {
        for k in 1..=half {
            let a = s.observable(Side::Bob, &q, k).unwrap();
            let b = s.observable(Side::Bob, &q.complement(), k).unwrap();
            for m in [a + b, a - b] {
                let eig = linalg::hermitian_eigen(&m).unwrap();
                gap = eig.eigenvalues.iter().fold(gap, |g, l| g.min(l.abs()));
            }
        }
    }
    gap
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_is_associative(seed in any::<u64>(), d1 in 1usize..3, d2 in 1usize..3, d3 in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(d1, d1, &mut rng);
        let b = random_matrix(d2, d2, &mut rng);
        let c = random_matrix(d3, d3, &mut rng);
        let left = linalg::tensor(&linalg::tensor(&a, &b), &c);
        let right = linalg::tensor(&a, &linalg::tensor(&b, &c));
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn tensor_is_mixed_product_compatible(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_matrix(2, 2, &mut rng), random_matrix(3, 3, &mut rng));
        let (c, d) = (random_matrix(2, 2, &mut rng), random_matrix(3, 3, &mut rng));
        let lhs = &linalg::tensor(&a, &b) * &linalg::tensor(&c, &d);
        let rhs = linalg::tensor(&(&a * &c), &(&b * &d));
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn operator_abs_is_psd_square_root(seed in any::<u64>(), dim in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_hermitian(dim, &mut rng);
        let abs = linalg::operator_abs(&m).unwrap();
        prop_assert!(abs.is_hermitian());
        prop_assert!((&abs * &abs).max_abs_diff(&(&m * &m)) < 1e-10);
        let eig = linalg::hermitian_eigen(&abs).unwrap();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l > -1e-10));
    }

    #[test]
    fn sign_normalize_is_commuting_involution(seed in any::<u64>(), dim in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_hermitian(dim, &mut rng);
        let s = linalg::sign_normalize(&m, linalg::DEFAULT_ZERO_TOL).unwrap();
        prop_assert!(s.is_hermitian() && s.is_unitary());
        prop_assert!((&s * &s).max_abs_diff(&ComplexMatrix::identity(dim)) < 1e-9);
        prop_assert!(s.commutator(&m).max_abs() < 1e-9);
        // S·M = |M| on the support of M.
        let abs = linalg::operator_abs(&m).unwrap();
        prop_assert!((&s * &m).max_abs_diff(&abs) < 1e-9);
    }

    #[test]
    fn ordered_product_of_diagonals_is_entrywise(seed in any::<u64>(), t in 0u64..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let diags: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ops: Vec<ComplexMatrix> = diags.iter().map(|d| ComplexMatrix::diagonal(d)).collect();
        let t = BitString::new(4, t).unwrap();
        let prod = linalg::ordered_product(&ops, &t).unwrap();
        let expected: Vec<f64> = (0..3)
            .map(|i| (1..=4).filter(|&k| t.get(k).unwrap()).map(|k| diags[k - 1][i]).product())
            .collect();
        prop_assert!(prod.max_abs_diff(&ComplexMatrix::diagonal(&expected)) < 1e-12);
    }

    #[test]
    fn relabel_preserves_value_n4(seed in any::<u64>(), steps in proptest::collection::vec((any::<bool>(), 1usize..=2), 0..6)) {
        let s = random_strategy(4, seed);
        let steps: Vec<RelabelStep> = steps
            .into_iter()
            .map(|(alice, bit)| RelabelStep { party: if alice { Side::Alice } else { Side::Bob }, bit })
            .collect();
        let t = extraction::apply_transcript(&s, &steps).unwrap();
        let before = game::exact_value(&s).unwrap().value;
        let after = game::exact_value(&t).unwrap().value;
        prop_assert!((before - after).abs() < 1e-9);
        let mut back = steps.clone();
        back.reverse();
        let restored = extraction::apply_transcript(&t, &back).unwrap();
        prop_assert!(strategy_diff(&s, &restored) < 1e-12);
    }

    #[test]
    fn born_probabilities_form_a_distribution(seed in any::<u64>(), qa in 0u64..4, qb in 0u64..4) {
        let s = random_strategy(4, seed);
        let q_a = BitString::new(2, qa).unwrap();
        let q_b = BitString::new(2, qb).unwrap();
        let mut total = 0.0;
        for x in BitString::all(2) {
            for y in BitString::all(2) {
                let p = strategy::born_probability(&s, &q_a, &q_b, &x, &y).unwrap();
                prop_assert!(p > -1e-12);
                total += p;
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn game_value_is_within_tsirelson(seed in any::<u64>()) {
        let s = random_strategy(4, seed);
        let v = game::exact_value(&s).unwrap().value;
        prop_assert!(v.abs() <= TSIRELSON + 1e-9);
    }

    #[test]
    fn rotated_family_matches_closed_form(eta in -3.0f64..3.0, n in prop::sample::select(vec![2usize, 4, 6])) {
        let s = strategy::noisy_strategy(n, NoiseSpec::bob_rotation(eta).unwrap()).unwrap();
        let v = game::exact_value(&s).unwrap().value;
        prop_assert!((v - TSIRELSON * eta.cos()).abs() < 1e-9);
    }

    #[test]
    fn partial_entanglement_matches_closed_form(theta in 1e-3f64..FRAC_PI_4, n in prop::sample::select(vec![2usize, 4])) {
        let s = strategy::noisy_strategy(n, NoiseSpec::partial_entanglement(theta).unwrap()).unwrap();
        let v = game::exact_value(&s).unwrap().value;
        prop_assert!((v - SQRT_2 * (1.0 + (2.0 * theta).sin())).abs() < 1e-9);
    }

    #[test]
    fn strategy_json_round_trip_is_exact(seed in any::<u64>()) {
        let s = random_strategy(2, seed);
        let back = Strategy::from_json(&s.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn extracted_operators_are_binary_observables(seed in any::<u64>()) {
        let s = random_strategy(4, seed);
        let ops = extraction::build_xz(&s).unwrap();
        prop_assert!(ops.invariant_residual() < 1e-8);
        let out = verifier::swap_isometry_apply(&ops, s.state()).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The pigeonhole steps and the explicit-constant bounds are theorems about
    /// every strategy, so certification must pass on arbitrary inputs.
    #[test]
    fn certification_passes_for_random_strategies(seed in any::<u64>(), n in prop::sample::select(vec![2usize, 4])) {
        let s = random_strategy(n, seed);
        let r = verifier::certify(&s, &CertifyOptions::default());
        match r {
            Ok(r) => {
                prop_assert!(r.violations.is_empty(), "{:?}", r.violations);
                prop_assert!(r.pass.all);
                for d in &r.distances {
                    prop_assert!(d.optimal <= d.fixed + 1e-9);
                }
            }
            // A vanishing partial overlap is the one documented refusal.
            Err(parchsh::Error::JunkExtraction(_)) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn certification_is_relabel_invariant(
        seed in any::<u64>(),
        n in prop::sample::select(vec![2usize, 4]),
        steps in proptest::collection::vec((any::<bool>(), 1usize..=2), 1..5),
    ) {
        let s = random_strategy(n, seed);
        prop_assume!(bob_sum_gap(&s) > 1e-6);
        let steps: Vec<RelabelStep> = steps
            .into_iter()
            .map(|(alice, bit)| RelabelStep {
                party: if alice { Side::Alice } else { Side::Bob },
                bit: bit.min(n / 2),
            })
            .collect();
        let t = extraction::apply_transcript(&s, &steps).unwrap();
        let options = CertifyOptions::default();
        if let (Ok(a), Ok(b)) = (verifier::certify(&s, &options), verifier::certify(&t, &options)) {
            prop_assert!((a.epsilon - b.epsilon).abs() < 1e-9);
            let (ma, mb) = (a.measured.epsilons(), b.measured.epsilons());
            prop_assert!((ma.eps1 - mb.eps1).abs() < 1e-8);
            prop_assert!((ma.eps2 - mb.eps2).abs() < 1e-8);
            prop_assert!((ma.eps3 - mb.eps3).abs() < 1e-8);
        }
    }

    #[test]
    fn single_pair_bounds_hold_per_subtest(eta in 0.0f64..0.5, n in prop::sample::select(vec![2usize, 4, 6])) {
        let s = strategy::noisy_strategy(n, NoiseSpec::bob_rotation(eta).unwrap()).unwrap();
        let canon = extraction::canonicalize(&s).unwrap();
        let search = extraction::search_questions(&canon).unwrap();
        let ops = extraction::build_xz(&canon.strategy).unwrap();
        for (k, &delta) in search.per_subtest_delta.iter().enumerate() {
            let norms = verifier::subtest_norms(&canon.strategy, &ops, k + 1).unwrap();
            let (anti, cross) = verifier::single_pair_bounds(delta);
            prop_assert!(norms.anticommute_alice <= anti + 1e-9);
            prop_assert!(norms.anticommute_bob <= anti + 1e-9);
            prop_assert!(norms.cross_xz <= cross + 1e-9);
            prop_assert!(norms.cross_zx <= cross + 1e-9);
        }
    }
}

#[test]
fn sampled_answers_follow_born_rule() {
    let s = strategy::noisy_strategy(2, NoiseSpec::bob_rotation(0.4).unwrap()).unwrap();
    let q_a = BitString::new(1, 1).unwrap();
    let q_b = BitString::new(1, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 200_000;
    let mut counts = [[0u64; 2]; 2];
    for _ in 0..trials {
        let (x, y) = strategy::sample_answers(&s, &q_a, &q_b, &mut rng).unwrap();
        counts[x.value() as usize][y.value() as usize] += 1;
    }
    for x in 0..2u64 {
        for y in 0..2u64 {
            let p = strategy::born_probability(
                &s,
                &q_a,
                &q_b,
                &BitString::new(1, x).unwrap(),
                &BitString::new(1, y).unwrap(),
            )
            .unwrap();
            let freq = counts[x as usize][y as usize] as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((freq - p).abs() <= 5.0 * sigma + 1e-12, "({x},{y}): {freq} vs {p}");
        }
    }
}

#[test]
fn fixed_junk_distance_matches_dense_construction() {
    // Dense check of Φ and the fixed-junk distance at n = 2 on a noisy strategy.
    let s = strategy::noisy_strategy(2, NoiseSpec::bob_rotation(0.3).unwrap()).unwrap();
    let ops = extraction::build_xz(&s).unwrap();
    let psi_ideal = verifier::ideal_target(&BitString::zeros(2), &BitString::zeros(2)).unwrap();
    let phi = verifier::swap_isometry_apply(&ops, s.state()).unwrap();
    // Junk = normalized (I ⊗ ⟨ψ|) Φ(ψ'), with the ancilla index fastest.
    let anc = 4;
    let joint = phi.dim() / anc;
    let mut junk = vec![Complex64::new(0.0, 0.0); joint];
    for (j, slot) in junk.iter_mut().enumerate() {
        for (a, t) in psi_ideal.iter().enumerate() {
            *slot += t.conj() * phi.amplitudes()[j * anc + a];
        }
    }
    let junk = StateVector::new(junk).unwrap().normalized();
    let ideal = StateVector::new(psi_ideal).unwrap();
    let expected = phi.distance(&junk.tensor(&ideal));
    let zeros = BitString::zeros(2);
    let got = verifier::extraction_distance(&s, &ops, &zeros, &zeros, JunkPolicy::Fixed).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}
