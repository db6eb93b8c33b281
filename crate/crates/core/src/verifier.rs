//! Condition norms, the swap isometry, extraction distances and the full
//! certification pipeline.
//!
//! All operator actions are applied to vectors; no `2^{2n}`-dimensional
//! matrix is ever formed.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::extraction::{self, ExtractedOperators, Pauli, QuestionSearchResult, RelabelStep};
use crate::game::{Correlations, TSIRELSON};
use crate::linalg::{self, Bipartite, StateVector};
use crate::strategy::{self, Strategy};

/// Largest `n` accepted by [`certify`].
pub const MAX_CERTIFY_N: usize = 8;
/// Largest `n` for which the general conditions are enumerated by default.
pub const EXHAUSTIVE_MAX_N: usize = 6;
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Largest `n` for which every `(p, q)` distance is evaluated.
pub const EXHAUSTIVE_DISTANCE_MAX_N: usize = 4;
pub const SAMPLED_DISTANCE_PAIRS: usize = 256;
/// Pass flags allow measured values to exceed certified ones by this much.
pub const PASS_SLACK: f64 = 1e-9;
/// Floating-point slack for the pigeonhole guarantees.
pub const GUARANTEE_SLACK: f64 = 1e-12;
/// Partial overlaps below this norm cannot define a junk state.
pub const JUNK_MIN_NORM: f64 = 1e-12;

type Amps = Vec<Complex64>;

fn check_dims(strategy: &Strategy, ops: &ExtractedOperators) -> Result<()> {
    if ops.n() != strategy.n() || ops.dims() != (strategy.dim_a(), strategy.dim_b()) {
        return Err(Error::DimensionMismatch(format!(
            "operators for n = {} on {:?} do not fit a strategy with n = {} on ({}, {})",
            ops.n(),
            ops.dims(),
            strategy.n(),
            strategy.dim_a(),
            strategy.dim_b()
        )));
    }
    Ok(())
}

/// Applies single extracted operators and ordered products to joint vectors.
struct OpAction<'a> {
    ops: &'a ExtractedOperators,
    space: Bipartite,
}

impl<'a> OpAction<'a> {
    fn new(ops: &'a ExtractedOperators) -> Self {
        let (da, db) = ops.dims();
        Self {
            ops,
            space: Bipartite::new(da, db),
        }
    }

    fn apply(&self, which: Pauli, k: usize, v: &[Complex64]) -> Amps {
        self.space.apply(self.ops.side(k), self.ops.get(which, k), v)
    }

    /// `P^t v` with `P^t = P_1^{t_1} ⋯ P_n^{t_n}`, so the highest index acts first.
    fn product(&self, which: Pauli, t: &BitString, v: &[Complex64]) -> Amps {
        let mut out = v.to_vec();
        for k in (1..=self.ops.n()).rev() {
            if t.bit(k) {
                out = self.apply(which, k, &out);
            }
        }
        out
    }

    /// `P^t v` for every `t ∈ {0,1}^n`, indexed by the packed value of `t`.
    /// Each entry costs one application: `P^t = P_j P^{t ⊕ 1_j}` with `j` the
    /// lowest set index.
    fn all_products(&self, which: Pauli, v: &[Complex64]) -> Vec<Amps> {
        let n = self.ops.n();
        let mut table: Vec<Amps> = Vec::with_capacity(1 << n);
        table.push(v.to_vec());
        for t in 1..(1u64 << n) {
            let lead = t.leading_zeros() as usize - (64 - n);
            let j = lead + 1;
            let rest = t ^ (1u64 << (n - j));
            let next = self.apply(which, j, &table[rest as usize]);
            table.push(next);
        }
        table
    }
}

fn sign(parity: bool) -> f64 {
    if parity {
        -1.0
    } else {
        1.0
    }
}

/// `‖a − s·b‖` for a real sign `s`.
fn signed_distance(a: &[Complex64], b: &[Complex64], s: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y * s).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Index paired with `k` by the identification condition (`k + n/2` mod `n`).
fn partner(k: usize, n: usize) -> usize {
    if k <= n / 2 {
        k + n / 2
    } else {
        k - n / 2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Epsilons {
    /// `max_{k≠l} ‖X'_k Z'_l ψ − Z'_l X'_k ψ‖`.
    pub eps1: f64,
    /// `max_k ‖X'_k ψ − Z'_{k+n/2} ψ‖`, indices mod `n`.
    pub eps2: f64,
    /// `max_k ‖Z'_k X'_k ψ + X'_k Z'_k ψ‖`.
    pub eps3: f64,
}

impl Epsilons {
    pub fn max(&self) -> f64 {
        self.eps1.max(self.eps2).max(self.eps3)
    }
}

pub fn measure_epsilons(strategy: &Strategy, ops: &ExtractedOperators) -> Result<Epsilons> {
    check_dims(strategy, ops)?;
    let act = OpAction::new(ops);
    let psi = strategy.state().amplitudes();
    let n = ops.n();
    let xs: Vec<Amps> = (1..=n).map(|k| act.apply(Pauli::X, k, psi)).collect();
    let zs: Vec<Amps> = (1..=n).map(|k| act.apply(Pauli::Z, k, psi)).collect();

    let eps1 = (1..=n)
        .into_par_iter()
        .map(|k| {
            (1..=n)
                .filter(|&l| l != k)
                .map(|l| {
                    let xz = act.apply(Pauli::X, k, &zs[l - 1]);
                    let zx = act.apply(Pauli::Z, l, &xs[k - 1]);
                    linalg::distance(&xz, &zx)
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let eps2 = (1..=n)
        .map(|k| linalg::distance(&xs[k - 1], &zs[partner(k, n) - 1]))
        .fold(0.0, f64::max);
    let eps3 = (1..=n)
        .map(|k| {
            let zx = act.apply(Pauli::Z, k, &xs[k - 1]);
            let xz = act.apply(Pauli::X, k, &zs[k - 1]);
            signed_distance(&zx, &xz, -1.0)
        })
        .fold(0.0, f64::max);
    Ok(Epsilons { eps1, eps2, eps3 })
}

/// Per-subtest norms controlled by that subtest's CHSH deficit alone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtestNorms {
    pub anticommute_alice: f64,
    pub anticommute_bob: f64,
    /// `‖X'_k ψ − Z'_{k+n/2} ψ‖`.
    pub cross_xz: f64,
    /// `‖X'_{k+n/2} ψ − Z'_k ψ‖`.
    pub cross_zx: f64,
}

pub fn subtest_norms(strategy: &Strategy, ops: &ExtractedOperators, k: usize) -> Result<SubtestNorms> {
    check_dims(strategy, ops)?;
    let half = ops.n() / 2;
    if k == 0 || k > half {
        return Err(Error::IndexOutOfRange { index: k, len: half });
    }
    let act = OpAction::new(ops);
    let psi = strategy.state().amplitudes();
    let anti = |j: usize| {
        let zx = act.apply(Pauli::Z, j, &act.apply(Pauli::X, j, psi));
        let xz = act.apply(Pauli::X, j, &act.apply(Pauli::Z, j, psi));
        signed_distance(&zx, &xz, -1.0)
    };
    let b = k + half;
    Ok(SubtestNorms {
        anticommute_alice: anti(k),
        anticommute_bob: anti(b),
        cross_xz: linalg::distance(&act.apply(Pauli::X, k, psi), &act.apply(Pauli::Z, b, psi)),
        cross_zx: linalg::distance(&act.apply(Pauli::X, b, psi), &act.apply(Pauli::Z, k, psi)),
    })
}

/// `(anticommutation bound, cross-identification bound)` for a CHSH deficit δ:
/// `4(δ√2)^{1/2}` and `4(δ√2)^{1/4}`.
pub fn single_pair_bounds(delta: f64) -> (f64, f64) {
    let d = (delta.max(0.0) * SQRT_2).max(0.0);
    (4.0 * d.sqrt(), 4.0 * d.powf(0.25))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverageMode {
    /// Exhaustive iff `n ≤ 6`.
    Auto,
    Exhaustive,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Coverage {
    Exhaustive,
    Sampled { count: usize, seed: u64 },
}

impl Coverage {
    pub fn resolve(mode: CoverageMode, n: usize, samples: usize, seed: u64) -> Self {
        let exhaustive = match mode {
            CoverageMode::Auto => n <= EXHAUSTIVE_MAX_N,
            CoverageMode::Exhaustive => true,
            CoverageMode::Sampled => false,
        };
        if exhaustive {
            Coverage::Exhaustive
        } else {
            Coverage::Sampled {
                count: samples,
                seed,
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralConditions {
    /// `max_{s,t} ‖Z'^t X'^s ψ − (−1)^{s·t} X'^s Z'^t ψ‖`.
    pub anticommute_max: f64,
    /// `max_s ‖Z'^{s_b s_a} ψ − (−1)^{s_a·s_b} X'^s ψ‖`.
    pub swap_max: f64,
    pub coverage: Coverage,
}

fn swap_term(act: &OpAction, psi: &[Complex64], s: BitString, xs: Option<&Amps>) -> f64 {
    let (sa, sb) = s.split_halves().expect("n even");
    let swapped = sb.concat(&sa).expect("n <= 64");
    let z = act.product(Pauli::Z, &swapped, psi);
    let x_owned;
    let x = match xs {
        Some(v) => v,
        None => {
            x_owned = act.product(Pauli::X, &s, psi);
            &x_owned
        }
    };
    signed_distance(&z, x, sign(sa.dot_parity(&sb).expect("same length")))
}

pub fn measure_general_conditions(
    strategy: &Strategy,
    ops: &ExtractedOperators,
    coverage: Coverage,
) -> Result<GeneralConditions> {
    check_dims(strategy, ops)?;
    let n = ops.n();
    let act = OpAction::new(ops);
    let psi = strategy.state().amplitudes();
    let (anticommute_max, swap_max) = match coverage {
        Coverage::Exhaustive => {
            let xs = act.all_products(Pauli::X, psi);
            let zs = act.all_products(Pauli::Z, psi);
            let anti = (0..1u64 << n)
                .into_par_iter()
                .map(|s| {
                    let s = BitString::from_value(n, s);
                    let zx = act.all_products(Pauli::Z, &xs[s.index()]);
                    BitString::all(n)
                        .map(|t| {
                            let xz = act.product(Pauli::X, &s, &zs[t.index()]);
                            let par = s.dot_parity(&t).expect("same length");
                            signed_distance(&zx[t.index()], &xz, sign(par))
                        })
                        .fold(0.0, f64::max)
                })
                .reduce(|| 0.0, f64::max);
            let swap = BitString::all(n)
                .map(|s| swap_term(&act, psi, s, Some(&xs[s.index()])))
                .fold(0.0, f64::max);
            (anti, swap)
        }
        Coverage::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs: Vec<(BitString, BitString)> = (0..count)
                .map(|_| {
                    let s = BitString::from_value(n, rng.random_range(0..1u64 << n));
                    let t = BitString::from_value(n, rng.random_range(0..1u64 << n));
                    (s, t)
                })
                .collect();
            pairs
                .par_iter()
                .map(|&(s, t)| {
                    let zx = act.product(Pauli::Z, &t, &act.product(Pauli::X, &s, psi));
                    let xz = act.product(Pauli::X, &s, &act.product(Pauli::Z, &t, psi));
                    let anti = signed_distance(&zx, &xz, sign(s.dot_parity(&t).expect("same length")));
                    (anti, swap_term(&act, psi, s, None))
                })
                .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
        }
    };
    Ok(GeneralConditions {
        anticommute_max,
        swap_max,
        coverage,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionNorms {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub general_anticommute_max: f64,
    pub general_swap_max: f64,
    pub coverage: Coverage,
}

impl ConditionNorms {
    pub fn from_parts(eps: Epsilons, general: GeneralConditions) -> Self {
        Self {
            eps1: eps.eps1,
            eps2: eps.eps2,
            eps3: eps.eps3,
            general_anticommute_max: general.anticommute_max,
            general_swap_max: general.swap_max,
            coverage: general.coverage,
        }
    }

    pub fn epsilons(&self) -> Epsilons {
        Epsilons {
            eps1: self.eps1,
            eps2: self.eps2,
            eps3: self.eps3,
        }
    }
}

pub fn measure_conditions(
    strategy: &Strategy,
    ops: &ExtractedOperators,
    coverage: Coverage,
) -> Result<ConditionNorms> {
    Ok(ConditionNorms::from_parts(
        measure_epsilons(strategy, ops)?,
        measure_general_conditions(strategy, ops, coverage)?,
    ))
}

/// Swap isometry `Φ`: appends `n` ancilla qubits and, for `k = 1..n`, maps
/// `u ⊗ |0⟩ ↦ ½[(I + Z'_k)u ⊗ |0⟩ + X'_k(I − Z'_k)u ⊗ |1⟩]` on ancilla `k`.
///
/// The result is indexed `joint · 2^n + ancilla`, ancilla 1 most significant,
/// Alice's ancillas before Bob's.
pub fn swap_isometry_apply(ops: &ExtractedOperators, v: &StateVector) -> Result<StateVector> {
    let (da, db) = ops.dims();
    if v.dim() != da * db {
        return Err(Error::DimensionMismatch(format!(
            "vector of dimension {} for operators on {da}·{db}",
            v.dim()
        )));
    }
    let blocks = swap_blocks(&OpAction::new(ops), v.amplitudes());
    Ok(StateVector::from_amplitudes(interleave(&blocks)))
}

/// Branches of `Φ(v)` indexed by ancilla string.
fn swap_blocks(act: &OpAction, v: &[Complex64]) -> Vec<Amps> {
    let mut blocks = vec![v.to_vec()];
    for k in 1..=act.ops.n() {
        let mut next = Vec::with_capacity(blocks.len() * 2);
        for b in &blocks {
            let zb = act.apply(Pauli::Z, k, b);
            let plus: Amps = b.iter().zip(&zb).map(|(x, y)| (x + y) * 0.5).collect();
            let minus: Amps = b.iter().zip(&zb).map(|(x, y)| (x - y) * 0.5).collect();
            next.push(plus);
            next.push(act.apply(Pauli::X, k, &minus));
        }
        blocks = next;
    }
    blocks
}

fn interleave(blocks: &[Amps]) -> Amps {
    let anc = blocks.len();
    let dim = blocks[0].len();
    let mut out = vec![Complex64::new(0.0, 0.0); anc * dim];
    for (a, block) in blocks.iter().enumerate() {
        for (j, z) in block.iter().enumerate() {
            out[j * anc + a] = *z;
        }
    }
    out
}

/// Amplitudes of `X^q Z^p |ψ⟩` for the ideal `n`-qubit state
/// `|ψ⟩ = 2^{−n/2} Σ_u (−1)^{u_a·u_b} |u⟩`.
pub fn ideal_target(p: &BitString, q: &BitString) -> Result<Vec<Complex64>> {
    let n = p.len();
    strategy::check_n(n)?;
    if q.len() != n {
        return Err(Error::InvalidLength(format!("p has {n} bits, q has {}", q.len())));
    }
    let amp = 1.0 / ((1u64 << n) as f64).sqrt();
    Ok(BitString::all(n)
        .map(|u| {
            let src = u.xor(q).expect("same length");
            let (ua, ub) = src.split_halves().expect("n even");
            let par = ua.dot_parity(&ub).expect("same length") ^ p.dot_parity(&src).expect("same length");
            Complex64::new(sign(par) * amp, 0.0)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JunkPolicy {
    /// One junk state for all `(p, q)`, extracted at `p = q = 0`.
    Fixed,
    /// Per-`(p, q)` optimal junk state.
    Optimal,
}

/// Evaluates `‖Φ(X'^q Z'^p ψ') − |junk⟩ ⊗ X^q Z^p ψ‖` for many `(p, q)`.
pub struct DistanceEvaluator<'a> {
    act: OpAction<'a>,
    psi: &'a [Complex64],
    junk: Amps,
    junk_norm: f64,
}

/// `(I ⊗ ⟨φ|) Φ`, given `Φ` as branches per ancilla string.
fn partial_overlap(blocks: &[Amps], phi: &[Complex64]) -> Amps {
    let dim = blocks[0].len();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for (block, c) in blocks.iter().zip(phi) {
        let c = c.conj();
        if c == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (o, z) in out.iter_mut().zip(block) {
            *o += c * z;
        }
    }
    out
}

/// `‖Φ − junk ⊗ target‖` with `Φ` given as branches per ancilla string.
fn product_distance(blocks: &[Amps], junk: &[Complex64], target: &[Complex64]) -> f64 {
    let mut sum = 0.0;
    for (block, t) in blocks.iter().zip(target) {
        for (z, j) in block.iter().zip(junk) {
            sum += (z - j * t).norm_sqr();
        }
    }
    sum.sqrt()
}

impl<'a> DistanceEvaluator<'a> {
    pub fn new(strategy: &'a Strategy, ops: &'a ExtractedOperators) -> Result<Self> {
        check_dims(strategy, ops)?;
        Self::for_state(ops, strategy.state().amplitudes())
    }

    /// Evaluator for an arbitrary joint state `ψ'`.
    pub fn for_state(ops: &'a ExtractedOperators, psi: &'a [Complex64]) -> Result<Self> {
        let (da, db) = ops.dims();
        if psi.len() != da * db {
            return Err(Error::DimensionMismatch(format!(
                "state of dimension {} for operators on {da}·{db}",
                psi.len()
            )));
        }
        let act = OpAction::new(ops);
        let n = ops.n();
        let blocks = swap_blocks(&act, psi);
        let ideal = ideal_target(&BitString::zeros(n), &BitString::zeros(n))?;
        let overlap = partial_overlap(&blocks, &ideal);
        let junk_norm = linalg::norm_sqr(&overlap).sqrt();
        if junk_norm < JUNK_MIN_NORM {
            return Err(Error::JunkExtraction(junk_norm));
        }
        let junk = overlap.iter().map(|z| z / junk_norm).collect();
        Ok(Self {
            act,
            psi,
            junk,
            junk_norm,
        })
    }

    /// Norm of `(I ⊗ ⟨ψ|) Φ(ψ')` before normalization.
    pub fn junk_norm(&self) -> f64 {
        self.junk_norm
    }

    pub fn junk(&self) -> &[Complex64] {
        &self.junk
    }

    pub fn distance(&self, p: &BitString, q: &BitString, policy: JunkPolicy) -> Result<f64> {
        let n = self.act.ops.n();
        if p.len() != n || q.len() != n {
            return Err(Error::InvalidLength(format!(
                "p and q need {n} bits, got {} and {}",
                p.len(),
                q.len()
            )));
        }
        let v = self.act.product(Pauli::X, q, &self.act.product(Pauli::Z, p, self.psi));
        let blocks = swap_blocks(&self.act, &v);
        let target = ideal_target(p, q)?;
        Ok(match policy {
            JunkPolicy::Fixed => product_distance(&blocks, &self.junk, &target),
            JunkPolicy::Optimal => {
                // The minimizer over unit junk states is the normalized partial
                // overlap; evaluating the residual directly avoids the
                // cancellation in ‖out‖² + 1 − 2‖overlap‖.
                let overlap = partial_overlap(&blocks, &target);
                let norm = linalg::norm_sqr(&overlap).sqrt();
                if norm < JUNK_MIN_NORM {
                    let out_norm: f64 = blocks.iter().map(|b| linalg::norm_sqr(b)).sum();
                    (out_norm + 1.0).sqrt()
                } else {
                    let junk: Amps = overlap.iter().map(|z| z / norm).collect();
                    product_distance(&blocks, &junk, &target)
                }
            }
        })
    }
}

pub fn extraction_distance(
    strategy: &Strategy,
    ops: &ExtractedOperators,
    p: &BitString,
    q: &BitString,
    policy: JunkPolicy,
) -> Result<f64> {
    DistanceEvaluator::new(strategy, ops)?.distance(p, q, policy)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifiedEpsilons {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

impl CertifiedEpsilons {
    /// `32(δ√2)^{1/4}`, `4(δ√2)^{1/4}`, `4(δ√2)^{1/2}`.
    pub fn from_delta(delta: f64) -> Self {
        let d = delta.max(0.0) * SQRT_2;
        Self {
            eps1: 32.0 * d.powf(0.25),
            eps2: 4.0 * d.powf(0.25),
            eps3: 4.0 * d.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub coverage: CoverageMode,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            coverage: CoverageMode::Auto,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceEntry {
    pub p: BitString,
    pub q: BitString,
    pub fixed: f64,
    pub optimal: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassFlags {
    pub eps1: bool,
    pub eps2: bool,
    pub eps3: bool,
    pub guarantees: bool,
    pub all: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTestReport {
    pub n: usize,
    pub value: f64,
    /// `max(0, 2√2 − value)`.
    pub epsilon: f64,
    pub delta_per_subtest: Vec<f64>,
    /// `n·ε`.
    pub delta_cert: f64,
    pub certified_eps: CertifiedEpsilons,
    pub measured: ConditionNorms,
    /// `general max / (n² · max(ε₁, ε₂, ε₃))`; trend only.
    pub general_ratio: Option<f64>,
    pub transcript: Vec<RelabelStep>,
    pub search: QuestionSearchResult,
    pub bob_average: f64,
    pub alice_average: f64,
    pub distances: Vec<DistanceEntry>,
    pub distance_coverage: Coverage,
    pub dist_fixed_max: f64,
    pub dist_opt_max: f64,
    pub junk_norm: f64,
    /// `dist_fixed_max / (n^{9/8} ε^{1/8})`; trend only, absent at ε = 0.
    pub scaling_ratio: Option<f64>,
    pub violations: Vec<String>,
    pub pass: PassFlags,
}

fn guarantee_violations(
    n: usize,
    value: f64,
    epsilon: f64,
    canon: &extraction::Canonicalization,
    search: &QuestionSearchResult,
) -> Vec<String> {
    let mut out = Vec::new();
    if canon.bob_average < value - GUARANTEE_SLACK {
        out.push(format!(
            "g(q_b*) = {} below game value {value}",
            canon.bob_average
        ));
    }
    if canon.alice_average < canon.bob_average - GUARANTEE_SLACK {
        out.push(format!(
            "best q_a average {} below g(q_b*) = {}",
            canon.alice_average, canon.bob_average
        ));
    }
    let per_k = n as f64 / 2.0 * epsilon;
    for (k, &d) in search.per_subtest_delta.iter().enumerate() {
        if d > per_k + GUARANTEE_SLACK {
            out.push(format!("subtest {}: delta {d} exceeds (n/2)ε = {per_k}", k + 1));
        }
    }
    let floor = TSIRELSON - n as f64 * epsilon;
    for pq in &search.pair_questions {
        if pq.f_k.min(pq.f_l) < floor - GUARANTEE_SLACK {
            out.push(format!(
                "pair ({}, {}): question {} reaches {} below 2√2 − nε = {floor}",
                pq.k,
                pq.l,
                pq.question,
                pq.f_k.min(pq.f_l)
            ));
        }
    }
    out
}

fn distance_pairs(n: usize, seed: u64) -> (Vec<(BitString, BitString)>, Coverage) {
    if n <= EXHAUSTIVE_DISTANCE_MAX_N {
        let pairs = BitString::all(n)
            .flat_map(|p| BitString::all(n).map(move |q| (p, q)))
            .collect();
        (pairs, Coverage::Exhaustive)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut pairs = vec![(BitString::zeros(n), BitString::zeros(n))];
        while pairs.len() < SAMPLED_DISTANCE_PAIRS {
            pairs.push((
                BitString::from_value(n, rng.random_range(0..1u64 << n)),
                BitString::from_value(n, rng.random_range(0..1u64 << n)),
            ));
        }
        (
            pairs,
            Coverage::Sampled {
                count: SAMPLED_DISTANCE_PAIRS,
                seed,
            },
        )
    }
}

/// Full pipeline: value → ε → canonicalization → question searches →
/// certified ε's with `δ = nε` → `X'`/`Z'` → measured norms → distances.
///
/// Broken pigeonhole guarantees are recorded in `violations`, not raised.
pub fn certify(strategy: &Strategy, options: &CertifyOptions) -> Result<SelfTestReport> {
    let n = strategy.n();
    if n > MAX_CERTIFY_N {
        return Err(Error::TooLarge {
            n,
            limit: MAX_CERTIFY_N,
            what: "certification",
        });
    }
    let validation = strategy::validate(strategy);
    if !validation.passed {
        return Err(Error::InvalidStrategy(format!("{validation:?}")));
    }

    let value = Correlations::compute(strategy)?.value();
    let epsilon = (TSIRELSON - value).max(0.0);
    let canon = extraction::canonicalize(strategy)?;
    let search = extraction::search_questions(&canon)?;
    let delta_cert = n as f64 * epsilon;
    let certified_eps = CertifiedEpsilons::from_delta(delta_cert);

    let ops = extraction::build_xz(&canon.strategy)?;
    let coverage = Coverage::resolve(options.coverage, n, options.samples, options.seed);
    let measured = measure_conditions(&canon.strategy, &ops, coverage)?;

    let evaluator = DistanceEvaluator::new(&canon.strategy, &ops)?;
    let (pairs, distance_coverage) = distance_pairs(n, options.seed);
    let distances = pairs
        .par_iter()
        .map(|(p, q)| {
            Ok(DistanceEntry {
                p: *p,
                q: *q,
                fixed: evaluator.distance(p, q, JunkPolicy::Fixed)?,
                optimal: evaluator.distance(p, q, JunkPolicy::Optimal)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dist_fixed_max = distances.iter().map(|d| d.fixed).fold(0.0, f64::max);
    let dist_opt_max = distances.iter().map(|d| d.optimal).fold(0.0, f64::max);

    let eps_max = measured.epsilons().max();
    let general_max = measured.general_anticommute_max.max(measured.general_swap_max);
    let general_ratio = (eps_max > 0.0).then(|| general_max / ((n * n) as f64 * eps_max));
    let scaling_ratio = (epsilon > 0.0)
        .then(|| dist_fixed_max / ((n as f64).powf(9.0 / 8.0) * epsilon.powf(1.0 / 8.0)));

    let violations = guarantee_violations(n, value, epsilon, &canon, &search);
    let eps1 = measured.eps1 <= certified_eps.eps1 + PASS_SLACK;
    let eps2 = measured.eps2 <= certified_eps.eps2 + PASS_SLACK;
    let eps3 = measured.eps3 <= certified_eps.eps3 + PASS_SLACK;
    let guarantees = violations.is_empty();
    let pass = PassFlags {
        eps1,
        eps2,
        eps3,
        guarantees,
        all: eps1 && eps2 && eps3 && guarantees,
    };

    Ok(SelfTestReport {
        n,
        value,
        epsilon,
        delta_per_subtest: search.per_subtest_delta.clone(),
        delta_cert,
        certified_eps,
        measured,
        general_ratio,
        transcript: canon.transcript.clone(),
        bob_average: canon.bob_average,
        alice_average: canon.alice_average,
        search,
        distances,
        distance_coverage,
        dist_fixed_max,
        dist_opt_max,
        junk_norm: evaluator.junk_norm(),
        scaling_ratio,
        violations,
        pass,
    })
}

/// Rounds to 12 significant digits.
pub fn round_sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(num) => {
            if num.is_f64() {
                if let Some(r) = num.as_f64().map(round_sig12).and_then(serde_json::Number::from_f64) {
                    *num = r;
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with every real number rounded to 12 significant digits.
pub fn to_json_sig12<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    Ok(serde_json::to_string_pretty(&v)?)
}

impl SelfTestReport {
    pub fn to_json(&self) -> Result<String> {
        to_json_sig12(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::build_xz;
    use crate::linalg::{pauli, ComplexMatrix};
    use crate::strategy::{classical_strategy, ideal_strategy, noisy_strategy, NoiseSpec};

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn ideal_epsilons_vanish() {
        for n in [2, 4, 6] {
            let s = ideal_strategy(n).unwrap();
            let ops = build_xz(&s).unwrap();
            let e = measure_epsilons(&s, &ops).unwrap();
            assert!(e.max() <= 1e-8, "n = {n}: {e:?}");
        }
    }

    #[test]
    fn negated_partner_gives_eps2_of_two() {
        let s = ideal_strategy(2).unwrap();
        let ops = build_xz(&s).unwrap();
        let flipped = ops.z(2).scale_real(-1.0);
        let ops = ops.with_operator(Pauli::Z, 2, flipped).unwrap();
        let e = measure_epsilons(&s, &ops).unwrap();
        assert!((e.eps2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_products_give_zero_norms() {
        let s = noisy_strategy(4, NoiseSpec::bob_rotation(0.7).unwrap()).unwrap();
        let ops = build_xz(&s).unwrap();
        let act = OpAction::new(&ops);
        let psi = s.state().amplitudes();
        let z = BitString::zeros(4);
        let a = act.product(Pauli::Z, &z, &act.product(Pauli::X, &z, psi));
        assert_eq!(a, psi.to_vec());
        assert_eq!(swap_term(&act, psi, z, None), 0.0);
    }

    #[test]
    fn all_products_match_direct_products() {
        let s = noisy_strategy(4, NoiseSpec::bob_rotation(0.3).unwrap()).unwrap();
        let ops = build_xz(&s).unwrap();
        let act = OpAction::new(&ops);
        let psi = s.state().amplitudes();
        let table = act.all_products(Pauli::X, psi);
        for t in BitString::all(4) {
            let direct = act.product(Pauli::X, &t, psi);
            assert!(linalg::distance(&table[t.index()], &direct) < 1e-13);
        }
    }

    #[test]
    fn product_uses_increasing_index_order() {
        // X'^{11} = X'_1 X'_2; compare against the explicit Kronecker form.
        let s = noisy_strategy(2, NoiseSpec::bob_rotation(0.3).unwrap()).unwrap();
        let ops = build_xz(&s).unwrap();
        let act = OpAction::new(&ops);
        let psi = s.state().amplitudes();
        let x1 = linalg::tensor(ops.x(1), &ComplexMatrix::identity(2));
        let x2 = linalg::tensor(&ComplexMatrix::identity(2), ops.x(2));
        let expected = (&x1 * &x2).apply_slice(psi);
        assert!(linalg::distance(&act.product(Pauli::X, &bs("11"), psi), &expected) < 1e-14);
    }

    #[test]
    fn sampled_coverage_runs() {
        let s = ideal_strategy(4).unwrap();
        let ops = build_xz(&s).unwrap();
        let cov = Coverage::Sampled { count: 200, seed: 9 };
        let g = measure_general_conditions(&s, &ops, cov).unwrap();
        assert!(g.anticommute_max <= 1e-7 && g.swap_max <= 1e-7);
        assert_eq!(g.coverage, cov);
        assert_eq!(Coverage::resolve(CoverageMode::Auto, 6, 10, 0), Coverage::Exhaustive);
        assert_eq!(
            Coverage::resolve(CoverageMode::Auto, 8, 10, 3),
            Coverage::Sampled { count: 10, seed: 3 }
        );
    }

    #[test]
    fn identity_operators_leave_ancillas_in_zero() {
        let n = 2;
        let id = ComplexMatrix::identity(2);
        let ops = ExtractedOperators::new(n, vec![id.clone(); 2], vec![id.clone(); 2]).unwrap();
        let v = StateVector::from_real(&[0.1, 0.7, -0.7, 0.1]).unwrap();
        let out = swap_isometry_apply(&ops, &v).unwrap();
        let expected = v.tensor(&StateVector::basis(4, 0));
        assert!(out.distance(&expected) < 1e-15);
    }

    #[test]
    fn isometry_preserves_norm() {
        let s = noisy_strategy(4, NoiseSpec::bob_rotation(0.5).unwrap()).unwrap();
        let ops = build_xz(&s).unwrap();
        let out = swap_isometry_apply(&ops, s.state()).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-9);
        assert_eq!(out.dim(), 16 * 16);
        let bad = StateVector::basis(3, 0);
        assert!(swap_isometry_apply(&ops, &bad).is_err());
    }

    #[test]
    fn swap_extracts_ideal_state() {
        for n in [2, 4] {
            let s = ideal_strategy(n).unwrap();
            let ops = build_xz(&s).unwrap();
            let out = swap_isometry_apply(&ops, s.state()).unwrap();
            let ideal = StateVector::new(ideal_target(&BitString::zeros(n), &BitString::zeros(n)).unwrap()).unwrap();
            let eval = DistanceEvaluator::new(&s, &ops).unwrap();
            let junk = StateVector::new(eval.junk().to_vec()).unwrap();
            assert!(out.distance(&junk.tensor(&ideal)) < 1e-7);
            assert!((eval.junk_norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ideal_target_is_graph_state() {
        let t = ideal_target(&bs("00"), &bs("00")).unwrap();
        let re: Vec<f64> = t.iter().map(|z| z.re).collect();
        assert_eq!(re, [0.5, 0.5, 0.5, -0.5]);
        // X on qubit 1 maps it to (|10⟩+|11⟩+|00⟩−|01⟩)/2.
        let t = ideal_target(&bs("00"), &bs("10")).unwrap();
        let re: Vec<f64> = t.iter().map(|z| z.re).collect();
        assert_eq!(re, [0.5, -0.5, 0.5, 0.5]);
        let t = ideal_target(&bs("01"), &bs("00")).unwrap();
        let re: Vec<f64> = t.iter().map(|z| z.re).collect();
        assert_eq!(re, [0.5, -0.5, 0.5, 0.5]);
    }

    #[test]
    fn optimal_policy_never_worse() {
        let s = noisy_strategy(2, NoiseSpec::bob_rotation(0.25).unwrap()).unwrap();
        let ops = build_xz(&s).unwrap();
        let eval = DistanceEvaluator::new(&s, &ops).unwrap();
        for p in BitString::all(2) {
            for q in BitString::all(2) {
                let f = eval.distance(&p, &q, JunkPolicy::Fixed).unwrap();
                let o = eval.distance(&p, &q, JunkPolicy::Optimal).unwrap();
                assert!(o <= f + 1e-12);
            }
        }
        assert!(eval.distance(&bs("0"), &bs("00"), JunkPolicy::Fixed).is_err());
    }

    #[test]
    fn junk_norm_is_partial_overlap() {
        // Z' = −I routes everything to ancilla |11⟩, so Φ(ψ') = ψ' ⊗ |11⟩ and
        // the partial overlap has norm |⟨11|ψ⟩| = 1/2.
        let minus_id = ComplexMatrix::identity(2).scale_real(-1.0);
        let ops = ExtractedOperators::new(
            2,
            vec![ComplexMatrix::identity(2), ComplexMatrix::identity(2)],
            vec![minus_id.clone(), minus_id],
        )
        .unwrap();
        let s = ideal_strategy(2).unwrap();
        let eval = DistanceEvaluator::new(&s, &ops).unwrap();
        assert!((eval.junk_norm() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn vanishing_junk_is_rejected() {
        // Z'_1 = Z_A, X'_1 = X_A, Z'_2 = Z_B, X'_2 = I on (|00⟩ − |10⟩)/√2:
        // the |00⟩ and |10⟩ ancilla branches cancel against ⟨ψ|.
        let ops = ExtractedOperators::new(
            2,
            vec![pauli::x(), ComplexMatrix::identity(2)],
            vec![pauli::z(), pauli::z()],
        )
        .unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let v = StateVector::from_real(&[h, 0.0, -h, 0.0]).unwrap();
        assert!(matches!(
            DistanceEvaluator::for_state(&ops, v.amplitudes()),
            Err(Error::JunkExtraction(_))
        ));
    }

    #[test]
    fn certified_constants() {
        let c = CertifiedEpsilons::from_delta(0.0);
        assert_eq!((c.eps1, c.eps2, c.eps3), (0.0, 0.0, 0.0));
        let d: f64 = 0.5;
        let c = CertifiedEpsilons::from_delta(d);
        let base = d * SQRT_2;
        assert!((c.eps1 - 32.0 * base.powf(0.25)).abs() < 1e-15);
        assert!((c.eps2 - 4.0 * base.powf(0.25)).abs() < 1e-15);
        assert!((c.eps3 - 4.0 * base.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn certify_classical_strategy() {
        let s = classical_strategy(2, |_, _, _| false).unwrap();
        let r = certify(&s, &CertifyOptions::default()).unwrap();
        assert!((r.epsilon - (TSIRELSON - 2.0)).abs() < 1e-12);
        assert!(r.certified_eps.eps1 > 2.0 && r.certified_eps.eps2 > 2.0 && r.certified_eps.eps3 > 2.0);
    }

    #[test]
    fn certify_guard() {
        let s = classical_strategy(10, |_, _, _| false).unwrap();
        assert!(matches!(
            certify(&s, &CertifyOptions::default()),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn sig12_rounding() {
        assert_eq!(round_sig12(2.0 * SQRT_2), 2.82842712475);
        assert_eq!(round_sig12(0.0), 0.0);
        assert_eq!(round_sig12(1.234567890123456e-20), 1.23456789012e-20);
    }
}
