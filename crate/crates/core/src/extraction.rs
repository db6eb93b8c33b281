//! Construction of the candidate qubit operators `X'_k`, `Z'_k` from a
//! strategy, together with the relabeling symmetries and question searches
//! that move a high-scoring strategy into the form the construction needs.
//!
//! Operator indices run over `1..=n`; `1..=n/2` act on Alice's system and
//! `n/2+1..=n` on Bob's.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::game::{Correlations, TSIRELSON};
use crate::linalg::{self, ComplexMatrix, Side, DEFAULT_ZERO_TOL};
use crate::strategy::{check_n, Strategy};

/// Two candidates closer than this are tied; ties go to the lexicographically
/// smallest question.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedOperators {
    n: usize,
    x_ops: Vec<ComplexMatrix>,
    z_ops: Vec<ComplexMatrix>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    X,
    Z,
}

impl ExtractedOperators {
    pub fn new(n: usize, x_ops: Vec<ComplexMatrix>, z_ops: Vec<ComplexMatrix>) -> Result<Self> {
        check_n(n)?;
        if x_ops.len() != n || z_ops.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} X' and Z' operators, got {} and {}",
                x_ops.len(),
                z_ops.len()
            )));
        }
        let half = n / 2;
        for ops in [&x_ops, &z_ops] {
            for side in [&ops[..half], &ops[half..]] {
                let dim = side[0].rows();
                if side.iter().any(|m| m.rows() != dim || m.cols() != dim) {
                    return Err(Error::DimensionMismatch(
                        "extracted operators on one side must share a square shape".into(),
                    ));
                }
            }
        }
        if x_ops[0].rows() != z_ops[0].rows() || x_ops[half].rows() != z_ops[half].rows() {
            return Err(Error::DimensionMismatch(
                "X' and Z' operators disagree on local dimensions".into(),
            ));
        }
        Ok(Self { n, x_ops, z_ops })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x_ops[0].rows(), self.x_ops[self.n / 2].rows())
    }

    /// Party holding operator index `k` (1-indexed).
    pub fn side(&self, k: usize) -> Side {
        if k <= self.n / 2 {
            Side::Alice
        } else {
            Side::Bob
        }
    }

    pub fn x(&self, k: usize) -> &ComplexMatrix {
        &self.x_ops[k - 1]
    }

    pub fn z(&self, k: usize) -> &ComplexMatrix {
        &self.z_ops[k - 1]
    }

    pub fn get(&self, which: Pauli, k: usize) -> &ComplexMatrix {
        match which {
            Pauli::X => self.x(k),
            Pauli::Z => self.z(k),
        }
    }

    pub fn x_ops(&self) -> &[ComplexMatrix] {
        &self.x_ops
    }

    pub fn z_ops(&self) -> &[ComplexMatrix] {
        &self.z_ops
    }

    /// Worst residual among: Hermiticity and unitarity of every operator, and
    /// pairwise commutation of Alice's X' family and of Alice's Z' family.
    pub fn invariant_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in self.x_ops.iter().chain(&self.z_ops) {
            worst = worst.max(m.hermitian_residual()).max(m.unitary_residual());
        }
        let half = self.n / 2;
        for ops in [&self.x_ops[..half], &self.z_ops[..half]] {
            for (i, a) in ops.iter().enumerate() {
                for b in &ops[i + 1..] {
                    worst = worst.max(a.commutator(b).max_abs());
                }
            }
        }
        worst
    }

    /// Negates or otherwise transforms a single operator; used to build
    /// deliberately broken operator sets.
    pub fn with_operator(mut self, which: Pauli, k: usize, op: ComplexMatrix) -> Result<Self> {
        let slot = match which {
            Pauli::X => &mut self.x_ops[k - 1],
            Pauli::Z => &mut self.z_ops[k - 1],
        };
        if op.rows() != slot.rows() || op.cols() != slot.cols() {
            return Err(Error::DimensionMismatch("replacement operator shape".into()));
        }
        *slot = op;
        Ok(self)
    }
}

/// Builds `X'`, `Z'` from the questions `0…0` and `1…1`:
/// Alice `X'_k = M'^{0…0}_k`, `Z'_k = M'^{1…1}_k`; Bob
/// `X'_k = sgn(N'^{0…0}_k − N'^{1…1}_k)`, `Z'_k = sgn(N'^{0…0}_k + N'^{1…1}_k)`.
pub fn build_xz(strategy: &Strategy) -> Result<ExtractedOperators> {
    let half = strategy.half();
    let zeros = BitString::zeros(half);
    let ones = BitString::ones(half);
    let mut x_ops = Vec::with_capacity(strategy.n());
    let mut z_ops = Vec::with_capacity(strategy.n());
    for k in 1..=half {
        x_ops.push(strategy.observable(Side::Alice, &zeros, k)?.clone());
        z_ops.push(strategy.observable(Side::Alice, &ones, k)?.clone());
    }
    for k in 1..=half {
        let b0 = strategy.observable(Side::Bob, &zeros, k)?;
        let b1 = strategy.observable(Side::Bob, &ones, k)?;
        x_ops.push(linalg::sign_normalize(&(b0 - b1), DEFAULT_ZERO_TOL)?);
        z_ops.push(linalg::sign_normalize(&(b0 + b1), DEFAULT_ZERO_TOL)?);
    }
    ExtractedOperators::new(strategy.n(), x_ops, z_ops)
}

/// One relabeling symmetry: flip question bit `bit` on `party`'s side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelabelStep {
    pub party: Side,
    pub bit: usize,
}

/// Re-keys `party`'s tables by `q ↦ q ⊕ 1_k` and multiplies the other
/// party's `k`-th observable for question `q` by `(−1)^{q_k}`. Preserves the
/// game value and is an involution.
pub fn relabel(strategy: &Strategy, step: RelabelStep) -> Result<Strategy> {
    let half = strategy.half();
    let k = step.bit;
    let flip = BitString::unit(half, k)?;
    let (n, dim_a, dim_b) = (strategy.n(), strategy.dim_a(), strategy.dim_b());
    let (state, alice, bob) = strategy.clone().into_parts();
    let (own, other) = match step.party {
        Side::Alice => (alice, bob),
        Side::Bob => (bob, alice),
    };
    let rekeyed: Vec<Vec<ComplexMatrix>> = BitString::all(half)
        .map(|q| own[q.xor(&flip).expect("same length").index()].clone())
        .collect();
    let signed: Vec<Vec<ComplexMatrix>> = other
        .into_iter()
        .enumerate()
        .map(|(q, mut family)| {
            if BitString::from_value(half, q as u64).bit(k) {
                family[k - 1] = family[k - 1].scale_real(-1.0);
            }
            family
        })
        .collect();
    let (alice, bob) = match step.party {
        Side::Alice => (rekeyed, signed),
        Side::Bob => (signed, rekeyed),
    };
    Strategy::new(n, dim_a, dim_b, state, alice, bob)
}

pub fn relabel_alice_bit(strategy: &Strategy, k: usize) -> Result<Strategy> {
    relabel(strategy, RelabelStep { party: Side::Alice, bit: k })
}

pub fn relabel_bob_bit(strategy: &Strategy, k: usize) -> Result<Strategy> {
    relabel(strategy, RelabelStep { party: Side::Bob, bit: k })
}

pub fn apply_transcript(strategy: &Strategy, steps: &[RelabelStep]) -> Result<Strategy> {
    steps
        .iter()
        .try_fold(strategy.clone(), |s, &step| relabel(&s, step))
}

/// First maximizer in iteration order, up to [`TIE_TOL`].
fn argmax(candidates: impl Iterator<Item = (BitString, f64)>) -> Option<(BitString, f64)> {
    candidates.fold(None, |best, (q, v)| match best {
        Some((_, b)) if v <= b + TIE_TOL => best,
        _ => Some((q, v)),
    })
}

/// Question `q_b` maximizing `g(q_b)`, and that average.
pub fn best_qb(corr: &Correlations) -> (BitString, f64) {
    let half = corr.n() / 2;
    argmax(BitString::all(half).map(|qb| (qb, corr.bob_average(&qb)))).expect("non-empty")
}

/// Question `q_a` maximizing `(2/n) Σ_k f(q_a, 0…0, k)`, and that average.
pub fn best_qa(corr: &Correlations) -> (BitString, f64) {
    let half = corr.n() / 2;
    let zeros = BitString::zeros(half);
    argmax(BitString::all(half).map(|qa| (qa, corr.subtest_mean(&qa, &zeros)))).expect("non-empty")
}

pub fn find_best_qb(strategy: &Strategy) -> Result<BitString> {
    Ok(best_qb(&Correlations::compute(strategy)?).0)
}

pub fn find_best_qa(strategy: &Strategy) -> Result<BitString> {
    Ok(best_qa(&Correlations::compute(strategy)?).0)
}

#[derive(Clone, Debug)]
pub struct Canonicalization {
    pub strategy: Strategy,
    pub transcript: Vec<RelabelStep>,
    /// Pigeonhole choices in the labels of the input strategy (`q_a*` in the
    /// labels after the Bob remap).
    pub q_b_star: BitString,
    pub q_a_star: BitString,
    /// `g(q_b*)`.
    pub bob_average: f64,
    /// `(2/n) Σ_k f(q_a*, 0…0, k)` after the Bob remap.
    pub alice_average: f64,
}

/// Relabels so the best `q_b` becomes `0…0`, then the best `q_a` (against
/// `q_b = 0…0`) becomes `0…0`.
pub fn canonicalize(strategy: &Strategy) -> Result<Canonicalization> {
    let (q_b_star, bob_average) = best_qb(&Correlations::compute(strategy)?);
    let mut transcript: Vec<RelabelStep> = (1..=strategy.half())
        .filter(|&k| q_b_star.bit(k))
        .map(|bit| RelabelStep { party: Side::Bob, bit })
        .collect();
    let remapped = apply_transcript(strategy, &transcript)?;

    let (q_a_star, alice_average) = best_qa(&Correlations::compute(&remapped)?);
    let alice_steps: Vec<RelabelStep> = (1..=strategy.half())
        .filter(|&k| q_a_star.bit(k))
        .map(|bit| RelabelStep { party: Side::Alice, bit })
        .collect();
    let canonical = apply_transcript(&remapped, &alice_steps)?;
    transcript.extend(alice_steps);

    Ok(Canonicalization {
        strategy: canonical,
        transcript,
        q_b_star,
        q_a_star,
        bob_average,
        alice_average,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairQuestion {
    pub k: usize,
    pub l: usize,
    pub question: BitString,
    pub f_k: f64,
    pub f_l: f64,
}

/// Searches questions with bits `(k, l) = (0, 1)` for the largest
/// `min(f(q_a, 0…0, k), f(q_a, 0…0, l))`. Because `f` is invariant under
/// `q_a ↦ q̄_a`, this also covers every question with pattern `(1, 0)`.
pub fn pair_question(corr: &Correlations, k: usize, l: usize) -> Result<PairQuestion> {
    let half = corr.n() / 2;
    for idx in [k, l] {
        if idx == 0 || idx > half {
            return Err(Error::IndexOutOfRange { index: idx, len: half });
        }
    }
    if k == l {
        return Err(Error::SameIndex(k));
    }
    let zeros = BitString::zeros(half);
    let admissible = BitString::all(half).filter(|q| !q.bit(k) && q.bit(l));
    let (question, _) = argmax(admissible.map(|q| {
        let v = corr.f(&q, &zeros, k).min(corr.f(&q, &zeros, l));
        (q, v)
    }))
    .expect("half >= 2 leaves admissible questions");
    Ok(PairQuestion {
        k,
        l,
        question,
        f_k: corr.f(&question, &zeros, k),
        f_l: corr.f(&question, &zeros, l),
    })
}

pub fn find_pair_question(strategy: &Strategy, k: usize, l: usize) -> Result<BitString> {
    Ok(pair_question(&Correlations::compute(strategy)?, k, l)?.question)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionSearchResult {
    pub q_b_star: BitString,
    pub q_a_star: BitString,
    /// `max(0, 2√2 − f(0…0, 0…0, k))` per subtest, after canonicalization.
    pub per_subtest_delta: Vec<f64>,
    pub pair_questions: Vec<PairQuestion>,
}

/// Runs the per-subtest and pair-question searches on an already
/// canonicalized strategy.
pub fn search_questions(canon: &Canonicalization) -> Result<QuestionSearchResult> {
    let corr = Correlations::compute(&canon.strategy)?;
    let half = canon.strategy.half();
    let zeros = BitString::zeros(half);
    let per_subtest_delta = (1..=half)
        .map(|k| (TSIRELSON - corr.f(&zeros, &zeros, k)).max(0.0))
        .collect();
    let mut pair_questions = Vec::new();
    for k in 1..=half {
        for l in k + 1..=half {
            pair_questions.push(pair_question(&corr, k, l)?);
        }
    }
    Ok(QuestionSearchResult {
        q_b_star: canon.q_b_star,
        q_a_star: canon.q_a_star,
        per_subtest_delta,
        pair_questions,
    })
}

/// `O(log n)` questions separating every pair of subtests: question `j` has
/// bit `k` set iff bit `j` of the binary representation of `k` is set.
/// A single subtest needs no pair questions.
pub fn log_question_set(n: usize) -> Result<Vec<BitString>> {
    check_n(n)?;
    let half = n / 2;
    if half > crate::bits::MAX_BITS {
        return Err(Error::TooLarge {
            n,
            limit: 2 * crate::bits::MAX_BITS,
            what: "question strings",
        });
    }
    if half < 2 {
        return Ok(Vec::new());
    }
    let width = (usize::BITS - half.leading_zeros()) as usize;
    Ok((0..width)
        .map(|j| {
            let bits: Vec<bool> = (1..=half).map(|k| (k >> j) & 1 == 1).collect();
            BitString::from_bits(&bits).expect("half <= 64")
        })
        .collect())
}
