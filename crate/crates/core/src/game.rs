//! The parallel CHSH game: win predicate, per-subtest CHSH functional, exact
//! value and a Monte Carlo referee.
//!
//! Scores are +4 for a win and −4 for a loss, so the expected score equals the
//! average CHSH value over subtests and is at most 2√2 for quantum players.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::linalg::{self, Side};
use crate::strategy::{self, Strategy};

/// Quantum optimum of the CHSH expression.
pub const TSIRELSON: f64 = 2.0 * SQRT_2;

/// Largest `n` for exhaustive sums over question pairs.
pub const MAX_EXACT_N: usize = 12;

/// Default number of referee workers; part of the reproducibility contract.
pub const DEFAULT_WORKERS: usize = 8;

/// `q_k q_{k+n/2} = x_k ⊕ y_k` for the full `n`-bit question `q`.
pub fn win(q: &BitString, k: usize, x_k: bool, y_k: bool) -> Result<bool> {
    if !q.len().is_multiple_of(2) {
        return Err(Error::OddLength(q.len()));
    }
    let half = q.len() / 2;
    if k == 0 || k > half {
        return Err(Error::IndexOutOfRange { index: k, len: half });
    }
    Ok((q.bit(k) && q.bit(k + half)) == (x_k ^ y_k))
}

fn chsh(c00: f64, c01: f64, c10: f64, c11: f64) -> f64 {
    c00 + c01 + c10 - c11
}

/// Orders `{q, q̄}` so that the member with bit `k` clear comes first. This
/// makes `f(q_a, ·, k)` and `f(q̄_a, ·, k)` bitwise identical.
fn pair_by_bit(q: BitString, k: usize) -> (BitString, BitString) {
    if q.bit(k) {
        (q.complement(), q)
    } else {
        (q, q.complement())
    }
}

fn expectation(strategy: &Strategy, a: &crate::linalg::ComplexMatrix, b: &crate::linalg::ComplexMatrix) -> f64 {
    let space = strategy.space();
    let psi = strategy.state().amplitudes();
    let left = space.apply(Side::Alice, a, psi);
    let right = space.apply(Side::Bob, b, psi);
    linalg::inner(&left, &right).re
}

/// `f(q_a, q_b, k)`: the CHSH value of subtest `k` built from the observables
/// of `q_a, q̄_a, q_b, q̄_b`, each term signed by `(−1)^{(r_a)_k (r_b)_k}`.
///
/// Computed directly from the state; see [`Correlations`] for the tabulated form.
pub fn subtest_value(strategy: &Strategy, q_a: &BitString, q_b: &BitString, k: usize) -> Result<f64> {
    strategy.observable(Side::Alice, q_a, k)?;
    strategy.observable(Side::Bob, q_b, k)?;
    let (a0, a1) = pair_by_bit(*q_a, k);
    let (b0, b1) = pair_by_bit(*q_b, k);
    let m = |q: &BitString| &strategy.table(Side::Alice)[q.index()][k - 1];
    let nb = |q: &BitString| &strategy.table(Side::Bob)[q.index()][k - 1];
    Ok(chsh(
        expectation(strategy, m(&a0), nb(&b0)),
        expectation(strategy, m(&a0), nb(&b1)),
        expectation(strategy, m(&a1), nb(&b0)),
        expectation(strategy, m(&a1), nb(&b1)),
    ))
}

/// All two-party correlators `⟨ψ'| M'^{q_a}_k ⊗ N'^{q_b}_{k+n/2} |ψ'⟩`.
#[derive(Clone, Debug)]
pub struct Correlations {
    n: usize,
    half: usize,
    questions: usize,
    data: Vec<f64>,
}

impl Correlations {
    pub fn compute(strategy: &Strategy) -> Result<Self> {
        let n = strategy.n();
        if n > MAX_EXACT_N {
            return Err(Error::TooLarge {
                n,
                limit: MAX_EXACT_N,
                what: "exhaustive question sums",
            });
        }
        let half = strategy.half();
        let questions = 1usize << half;
        let space = strategy.space();
        let psi = strategy.state().amplitudes();
        let side_vectors = |side: Side| -> Vec<Vec<Vec<Complex64>>> {
            strategy
                .table(side)
                .par_iter()
                .map(|family| family.iter().map(|m| space.apply(side, m, psi)).collect())
                .collect()
        };
        let left = side_vectors(Side::Alice);
        let right = side_vectors(Side::Bob);
        let data: Vec<f64> = (0..questions)
            .into_par_iter()
            .flat_map_iter(|qa| {
                let left = &left;
                let right = &right;
                (0..questions).flat_map(move |qb| {
                    (0..half).map(move |k| linalg::inner(&left[qa][k], &right[qb][k]).re)
                })
            })
            .collect();
        Ok(Self {
            n,
            half,
            questions,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, qa: BitString, qb: BitString, k: usize) -> f64 {
        self.data[(qa.index() * self.questions + qb.index()) * self.half + (k - 1)]
    }

    pub fn correlator(&self, q_a: &BitString, q_b: &BitString, k: usize) -> f64 {
        self.at(*q_a, *q_b, k)
    }

    /// Tabulated `f(q_a, q_b, k)`.
    pub fn f(&self, q_a: &BitString, q_b: &BitString, k: usize) -> f64 {
        let (a0, a1) = pair_by_bit(*q_a, k);
        let (b0, b1) = pair_by_bit(*q_b, k);
        chsh(
            self.at(a0, b0, k),
            self.at(a0, b1, k),
            self.at(a1, b0, k),
            self.at(a1, b1, k),
        )
    }

    /// `(2/n) Σ_k f(q_a, q_b, k)`: the mean CHSH value over subtests.
    pub fn subtest_mean(&self, q_a: &BitString, q_b: &BitString) -> f64 {
        let sum: f64 = (1..=self.half).map(|k| self.f(q_a, q_b, k)).sum();
        sum / self.half as f64
    }

    /// `g(q_b) = (1/(n 2^{n/2−1})) Σ_{q_a} Σ_k f(q_a, q_b, k)`.
    pub fn bob_average(&self, q_b: &BitString) -> f64 {
        let sum: f64 = BitString::all(self.half)
            .flat_map(|qa| (1..=self.half).map(move |k| (qa, k)))
            .map(|(qa, k)| self.f(&qa, q_b, k))
            .sum();
        sum / (self.n as f64 * (1u64 << (self.half - 1)) as f64)
    }

    /// `(1/2^{n/2}) Σ_{q_a} f(q_a, q_b, k)`.
    pub fn subtest_average(&self, q_b: &BitString, k: usize) -> f64 {
        let sum: f64 = BitString::all(self.half).map(|qa| self.f(&qa, q_b, k)).sum();
        sum / self.questions as f64
    }

    /// `(1/(n 2^{n−1})) Σ_{q_b} Σ_{q_a} Σ_k f(q_a, q_b, k)`.
    pub fn value(&self) -> f64 {
        let sum: f64 = BitString::all(self.half)
            .flat_map(|qb| BitString::all(self.half).map(move |qa| (qa, qb)))
            .map(|(qa, qb)| (1..=self.half).map(|k| self.f(&qa, &qb, k)).sum::<f64>())
            .sum();
        sum / (self.n as f64 * (1u64 << (self.n - 1)) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueMode {
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameValue {
    pub value: f64,
    pub mode: ValueMode,
    /// Rounds played; zero in exact mode.
    pub rounds: u64,
    pub stderr: f64,
    pub win_rate: f64,
    /// Worker count of a sampled run; results reproduce for fixed (seed, workers).
    pub workers: usize,
    pub seed: Option<u64>,
}

impl GameValue {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            mode: ValueMode::Exact,
            rounds: 0,
            stderr: 0.0,
            win_rate: (value / 4.0 + 1.0) / 2.0,
            workers: 0,
            seed: None,
        }
    }
}

pub fn exact_value(strategy: &Strategy) -> Result<GameValue> {
    Ok(GameValue::exact(Correlations::compute(strategy)?.value()))
}

/// Plays `rounds` rounds with a caller-supplied generator; returns the win count.
pub fn play_rounds<R: Rng + ?Sized>(strategy: &Strategy, rounds: u64, rng: &mut R) -> Result<u64> {
    let half = strategy.half();
    let mut wins = 0u64;
    for _ in 0..rounds {
        let q_a = BitString::from_value(half, rng.random_range(0..1u64 << half));
        let q_b = BitString::from_value(half, rng.random_range(0..1u64 << half));
        let (x, y) = strategy::sample_answers(strategy, &q_a, &q_b, rng)?;
        let k = rng.random_range(1..=half);
        let q = q_a.concat(&q_b)?;
        if win(&q, k, x.bit(k), y.bit(k))? {
            wins += 1;
        }
    }
    Ok(wins)
}

/// Monte Carlo referee. Rounds are split over `workers` chunks, chunk `i`
/// drawing from ChaCha8 stream `i` of `seed`; output depends only on
/// `(seed, workers)`, not on thread scheduling.
pub fn referee_simulate(strategy: &Strategy, rounds: u64, seed: u64, workers: usize) -> Result<GameValue> {
    if rounds == 0 {
        return Err(Error::InvalidLength("rounds must be at least 1".into()));
    }
    let workers = workers.max(1);
    let base = rounds / workers as u64;
    let extra = rounds % workers as u64;
    let wins: u64 = (0..workers)
        .into_par_iter()
        .map(|i| {
            let chunk = base + u64::from((i as u64) < extra);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            play_rounds(strategy, chunk, &mut rng)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum();
    let p = wins as f64 / rounds as f64;
    let mean = 4.0 * (2.0 * p - 1.0);
    let stderr = if rounds > 1 {
        let r = rounds as f64;
        let var = r * (16.0 - mean * mean) / (r - 1.0);
        (var.max(0.0) / r).sqrt()
    } else {
        0.0
    };
    Ok(GameValue {
        value: mean,
        mode: ValueMode::Sampled,
        rounds,
        stderr,
        win_rate: p,
        workers,
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::{classical_strategy, ideal_strategy, noisy_strategy, NoiseSpec};

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn win_rule() {
        assert!(win(&bs("11"), 1, false, true).unwrap());
        assert!(win(&bs("01"), 1, true, true).unwrap());
        assert!(!win(&bs("11"), 1, false, false).unwrap());
        assert!(win(&bs("11"), 2, false, false).is_err());
        assert!(win(&bs("0110"), 0, false, false).is_err());
    }

    #[test]
    fn ideal_subtests_hit_tsirelson() {
        let s = ideal_strategy(4).unwrap();
        let c = Correlations::compute(&s).unwrap();
        for qa in BitString::all(2) {
            for qb in BitString::all(2) {
                for k in 1..=2 {
                    let direct = subtest_value(&s, &qa, &qb, k).unwrap();
                    assert!((direct - TSIRELSON).abs() < 1e-9);
                    assert!((c.f(&qa, &qb, k) - direct).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn f_is_complement_invariant() {
        let s = noisy_strategy(4, NoiseSpec::bob_rotation(0.37).unwrap()).unwrap();
        for qa in BitString::all(2) {
            for qb in BitString::all(2) {
                let f = subtest_value(&s, &qa, &qb, 2).unwrap();
                assert_eq!(f, subtest_value(&s, &qa.complement(), &qb, 2).unwrap());
                assert_eq!(f, subtest_value(&s, &qa, &qb.complement(), 2).unwrap());
            }
        }
    }

    #[test]
    fn constant_plus_one_strategy() {
        let s = classical_strategy(2, |_, _, _| false).unwrap();
        assert_eq!(subtest_value(&s, &bs("0"), &bs("1"), 1).unwrap(), 2.0);
        assert_eq!(exact_value(&s).unwrap().value, 2.0);
    }

    #[test]
    fn subtest_value_rejects_bad_keys() {
        let s = ideal_strategy(4).unwrap();
        assert!(subtest_value(&s, &bs("010"), &bs("01"), 1).is_err());
        assert!(subtest_value(&s, &bs("01"), &bs("01"), 3).is_err());
    }

    #[test]
    fn exact_value_guard() {
        let s = classical_strategy(14, |_, _, _| false).unwrap();
        assert!(matches!(exact_value(&s), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn single_round_scores_plus_or_minus_four() {
        let s = ideal_strategy(2).unwrap();
        for seed in 0..20 {
            let v = referee_simulate(&s, 1, seed, DEFAULT_WORKERS).unwrap();
            assert!(v.value == 4.0 || v.value == -4.0);
            assert_eq!(v.stderr, 0.0);
        }
        assert!(referee_simulate(&s, 0, 0, 1).is_err());
    }

    #[test]
    fn referee_is_reproducible() {
        let s = ideal_strategy(2).unwrap();
        let a = referee_simulate(&s, 5_000, 42, 4).unwrap();
        let b = referee_simulate(&s, 5_000, 42, 4).unwrap();
        assert_eq!(a, b);
    }
}
