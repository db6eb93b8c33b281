//! Players' behaviour: a shared pure state plus, for every question, a family
//! of commuting ±1 observables (one per answer bit).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::linalg::{self, pauli, Bipartite, ComplexMatrix, Side, StateVector};

/// Residual ceiling used by [`validate`] for every check.
pub const VALIDATION_TOL: f64 = 1e-8;

/// Largest `n` for which question tables are materialized (`2^{n/2}` entries per side).
pub const MAX_N: usize = 24;

#[derive(Clone, Debug, PartialEq)]
pub struct Strategy {
    n: usize,
    space: Bipartite,
    state: StateVector,
    /// `alice[q][k-1] = M'^{q}_k`, indexed by the packed question value.
    alice: Vec<Vec<ComplexMatrix>>,
    /// `bob[q][k-1] = N'^{q}_{k+n/2}`.
    bob: Vec<Vec<ComplexMatrix>>,
}

pub(crate) fn check_n(n: usize) -> Result<()> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidN(n));
    }
    Ok(())
}

impl Strategy {
    /// Checks shapes only; numerical properties are reported by [`validate`].
    pub fn new(
        n: usize,
        dim_a: usize,
        dim_b: usize,
        state: StateVector,
        alice: Vec<Vec<ComplexMatrix>>,
        bob: Vec<Vec<ComplexMatrix>>,
    ) -> Result<Self> {
        check_n(n)?;
        if n > MAX_N {
            return Err(Error::TooLarge {
                n,
                limit: MAX_N,
                what: "question tables",
            });
        }
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::DimensionMismatch("local dimensions must be positive".into()));
        }
        if state.dim() != dim_a * dim_b {
            return Err(Error::DimensionMismatch(format!(
                "state has dimension {}, expected {dim_a}·{dim_b}",
                state.dim()
            )));
        }
        let half = n / 2;
        for (side, table, dim) in [(Side::Alice, &alice, dim_a), (Side::Bob, &bob, dim_b)] {
            if table.len() != 1 << half {
                return Err(Error::DimensionMismatch(format!(
                    "{side:?} has {} questions, expected {}",
                    table.len(),
                    1usize << half
                )));
            }
            for (q, family) in table.iter().enumerate() {
                if family.len() != half {
                    return Err(Error::DimensionMismatch(format!(
                        "{side:?} question {} has {} observables, expected {half}",
                        BitString::from_value(half, q as u64),
                        family.len()
                    )));
                }
                if let Some(m) = family.iter().find(|m| m.rows() != dim || m.cols() != dim) {
                    return Err(Error::DimensionMismatch(format!(
                        "{side:?} observable is {}x{}, expected {dim}x{dim}",
                        m.rows(),
                        m.cols()
                    )));
                }
            }
        }
        Ok(Self {
            n,
            space: Bipartite::new(dim_a, dim_b),
            state,
            alice,
            bob,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of parallel CHSH subtests, `n/2`.
    pub fn half(&self) -> usize {
        self.n / 2
    }

    pub fn dim_a(&self) -> usize {
        self.space.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.space.dim_b
    }

    pub fn space(&self) -> Bipartite {
        self.space
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn table(&self, side: Side) -> &[Vec<ComplexMatrix>] {
        match side {
            Side::Alice => &self.alice,
            Side::Bob => &self.bob,
        }
    }

    pub(crate) fn into_parts(self) -> (StateVector, Vec<Vec<ComplexMatrix>>, Vec<Vec<ComplexMatrix>>) {
        (self.state, self.alice, self.bob)
    }

    fn check_question(&self, q: &BitString) -> Result<()> {
        if q.len() != self.half() {
            return Err(Error::MissingQuestion(format!(
                "{q} (expected {} bits)",
                self.half()
            )));
        }
        Ok(())
    }

    /// Observable for answer bit `k` (1-indexed within the party) of question `q`.
    pub fn observable(&self, side: Side, q: &BitString, k: usize) -> Result<&ComplexMatrix> {
        self.check_question(q)?;
        if k == 0 || k > self.half() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.half(),
            });
        }
        Ok(&self.table(side)[q.index()][k - 1])
    }

    pub fn family(&self, side: Side, q: &BitString) -> Result<&[ComplexMatrix]> {
        self.check_question(q)?;
        Ok(&self.table(side)[q.index()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    None,
    BobRotation,
    PartialEntanglement,
}

impl NoiseModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::BobRotation => "bob-rotation",
            NoiseModel::PartialEntanglement => "partial-entanglement",
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseModel::None),
            "bob-rotation" => Ok(NoiseModel::BobRotation),
            "partial-entanglement" => Ok(NoiseModel::PartialEntanglement),
            other => Err(Error::InvalidNoise(format!("unknown model '{other}'"))),
        }
    }
}

/// Perturbation applied to the ideal strategy.
///
/// `param` is a rotation angle in radians for `BobRotation` and the Schmidt
/// angle θ ∈ (0, π/4] for `PartialEntanglement`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub param: f64,
}

impl NoiseSpec {
    pub fn new(model: NoiseModel, param: f64) -> Result<Self> {
        let spec = Self { model, param };
        spec.check()?;
        Ok(spec)
    }

    pub fn none() -> Self {
        Self {
            model: NoiseModel::None,
            param: 0.0,
        }
    }

    pub fn bob_rotation(eta: f64) -> Result<Self> {
        Self::new(NoiseModel::BobRotation, eta)
    }

    pub fn partial_entanglement(theta: f64) -> Result<Self> {
        Self::new(NoiseModel::PartialEntanglement, theta)
    }

    pub fn check(&self) -> Result<()> {
        if !self.param.is_finite() {
            return Err(Error::InvalidNoise(format!("parameter {} is not finite", self.param)));
        }
        match self.model {
            NoiseModel::None if self.param != 0.0 => Err(Error::InvalidNoise(
                "model 'none' takes no parameter".into(),
            )),
            NoiseModel::PartialEntanglement if !(self.param > 0.0 && self.param <= FRAC_PI_4) => {
                Err(Error::InvalidNoise(format!(
                    "partial-entanglement angle {} outside (0, π/4]",
                    self.param
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Bob's ideal observable for one question bit: `(σ_z ± σ_x)/√2`.
fn bob_ideal(bit: bool) -> ComplexMatrix {
    let s = if bit { -1.0 } else { 1.0 };
    (&pauli::z() + &pauli::x().scale_real(s)).scale_real(FRAC_1_SQRT_2)
}

fn alice_ideal(bit: bool) -> ComplexMatrix {
    if bit {
        pauli::z()
    } else {
        pauli::x()
    }
}

/// Pair state `cos θ |0+⟩ + sin θ |1−⟩`; θ = π/4 is the one-edge graph state.
fn pair_amplitudes(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    let h = FRAC_1_SQRT_2;
    [[c * h, c * h], [s * h, -s * h]]
}

fn product_state(half: usize, theta: f64) -> StateVector {
    let pair = pair_amplitudes(theta);
    let dim = 1usize << half;
    let mut amps = Vec::with_capacity(dim * dim);
    for ua in 0..dim {
        for ub in 0..dim {
            let mut amp = 1.0;
            for k in 0..half {
                let a = (ua >> (half - 1 - k)) & 1;
                let b = (ub >> (half - 1 - k)) & 1;
                amp *= pair[a][b];
            }
            amps.push(Complex64::new(amp, 0.0));
        }
    }
    StateVector::from_amplitudes(amps)
}

fn local_table(half: usize, single: impl Fn(bool) -> ComplexMatrix) -> Vec<Vec<ComplexMatrix>> {
    let zero = single(false);
    let one = single(true);
    BitString::all(half)
        .map(|q| {
            (1..=half)
                .map(|k| pauli::embed(if q.bit(k) { &one } else { &zero }, k, half))
                .collect()
        })
        .collect()
}

/// The optimal strategy: `n/2` graph-state pairs with Alice measuring
/// σ_x / σ_z and Bob `(σ_z ± σ_x)/√2` on question bit 0 / 1.
pub fn ideal_strategy(n: usize) -> Result<Strategy> {
    noisy_strategy(n, NoiseSpec::none())
}

pub fn noisy_strategy(n: usize, noise: NoiseSpec) -> Result<Strategy> {
    check_n(n)?;
    if n > MAX_N {
        return Err(Error::TooLarge {
            n,
            limit: MAX_N,
            what: "question tables",
        });
    }
    noise.check()?;
    let half = n / 2;
    let dim = 1usize << half;
    let theta = match noise.model {
        NoiseModel::PartialEntanglement => noise.param,
        _ => FRAC_PI_4,
    };
    let state = product_state(half, theta);
    let alice = local_table(half, alice_ideal);
    let bob = match noise.model {
        NoiseModel::BobRotation => {
            let r = pauli::ry(noise.param);
            let rd = r.adjoint();
            local_table(half, |bit| &(&r * &bob_ideal(bit)) * &rd)
        }
        _ => local_table(half, bob_ideal),
    };
    Strategy::new(n, dim, dim, state, alice, bob)
}

/// A deterministic strategy on one-dimensional systems: `answer(side, q, k)`
/// gives the answer bit, realized as the observable `(−1)^bit · I`.
pub fn classical_strategy(
    n: usize,
    answer: impl Fn(Side, &BitString, usize) -> bool,
) -> Result<Strategy> {
    check_n(n)?;
    let half = n / 2;
    let table = |side: Side| -> Vec<Vec<ComplexMatrix>> {
        BitString::all(half)
            .map(|q| {
                (1..=half)
                    .map(|k| {
                        let s = if answer(side, &q, k) { -1.0 } else { 1.0 };
                        ComplexMatrix::diagonal(&[s])
                    })
                    .collect()
            })
            .collect()
    };
    Strategy::new(
        n,
        1,
        1,
        StateVector::basis(1, 0),
        table(Side::Alice),
        table(Side::Bob),
    )
}

fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    let mut g = |_: usize, _: usize| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    };
    let m = ComplexMatrix::from_fn(dim, dim, &mut g);
    let h = m.hermitian_part();
    linalg::hermitian_eigen(&h)
        .expect("Gaussian Hermitian matrices are diagonalizable")
        .eigenvectors
}

/// A random valid strategy: Gaussian state, and for each question a random
/// eigenbasis with independent random ±1 spectra per answer bit.
pub fn random_strategy<R: Rng + ?Sized>(
    n: usize,
    dim_a: usize,
    dim_b: usize,
    rng: &mut R,
) -> Result<Strategy> {
    check_n(n)?;
    let half = n / 2;
    let amps: Vec<Complex64> = (0..dim_a * dim_b)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let state = StateVector::from_amplitudes(amps).normalized();
    let mut table = |dim: usize| -> Vec<Vec<ComplexMatrix>> {
        (0..1usize << half)
            .map(|_| {
                let u = random_unitary(dim, rng);
                let ud = u.adjoint();
                (0..half)
                    .map(|_| {
                        let signs: Vec<f64> = (0..dim)
                            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                            .collect();
                        let d = ComplexMatrix::diagonal(&signs);
                        (&(&u * &d) * &ud).hermitian_part()
                    })
                    .collect()
            })
            .collect()
    };
    let alice = table(dim_a);
    let bob = table(dim_b);
    Strategy::new(n, dim_a, dim_b, state, alice, bob)
}

/// Worst residuals of the projective-measurement model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub hermitian: f64,
    pub unitary: f64,
    pub commutation: f64,
    pub normalization: f64,
    pub passed: bool,
}

pub fn validate(strategy: &Strategy) -> ValidationReport {
    let mut hermitian = 0.0f64;
    let mut unitary = 0.0f64;
    let mut commutation = 0.0f64;
    for side in [Side::Alice, Side::Bob] {
        for family in strategy.table(side) {
            for (i, m) in family.iter().enumerate() {
                hermitian = hermitian.max(m.hermitian_residual());
                unitary = unitary.max(m.unitary_residual());
                for other in &family[i + 1..] {
                    commutation = commutation.max(m.commutator(other).max_abs());
                }
            }
        }
    }
    let normalization = strategy.state.normalization_residual();
    let passed = [hermitian, unitary, commutation, normalization]
        .iter()
        .all(|&r| r <= VALIDATION_TOL);
    ValidationReport {
        hermitian,
        unitary,
        commutation,
        normalization,
        passed,
    }
}

/// `Π^{q}_{answer} = ∏_k (I + (−1)^{answer_k} M'^{q}_k)/2`.
pub fn joint_projector(
    strategy: &Strategy,
    side: Side,
    question: &BitString,
    answer: &BitString,
) -> Result<ComplexMatrix> {
    let family = strategy.family(side, question)?;
    if answer.len() != strategy.half() {
        return Err(Error::InvalidLength(format!(
            "answer {answer} has {} bits, expected {}",
            answer.len(),
            strategy.half()
        )));
    }
    let mut residual = 0.0f64;
    for (i, m) in family.iter().enumerate() {
        for other in &family[i + 1..] {
            residual = residual.max(m.commutator(other).max_abs());
        }
    }
    if residual > VALIDATION_TOL {
        return Err(Error::NonCommuting {
            question: question.to_string(),
            residual,
        });
    }
    let dim = strategy.space.side_dim(side);
    let id = ComplexMatrix::identity(dim);
    let mut acc = id.clone();
    for (k, m) in family.iter().enumerate() {
        let signed = if answer.bit(k + 1) { m.scale_real(-1.0) } else { m.clone() };
        let gamma = (&id + &signed).scale_real(0.5);
        acc = &acc * &gamma;
    }
    Ok(acc)
}

/// Exact `⟨ψ'| Π^{q_a}_x ⊗ Π^{q_b}_y |ψ'⟩`.
pub fn born_probability(
    strategy: &Strategy,
    q_a: &BitString,
    q_b: &BitString,
    x: &BitString,
    y: &BitString,
) -> Result<f64> {
    let pa = joint_projector(strategy, Side::Alice, q_a, x)?;
    let pb = joint_projector(strategy, Side::Bob, q_b, y)?;
    let space = strategy.space;
    let v = space.apply(Side::Alice, &pa, strategy.state.amplitudes());
    let v = space.apply(Side::Bob, &pb, &v);
    Ok(linalg::norm_sqr(&v))
}

/// Draws `(x, y)` from the Born distribution by measuring the answer bits one
/// at a time through the single-bit projectors `(I ± M'_k)/2`.
pub fn sample_answers<R: Rng + ?Sized>(
    strategy: &Strategy,
    q_a: &BitString,
    q_b: &BitString,
    rng: &mut R,
) -> Result<(BitString, BitString)> {
    let fa = strategy.family(Side::Alice, q_a)?;
    let fb = strategy.family(Side::Bob, q_b)?;
    let space = strategy.space;
    let mut v = strategy.state.amplitudes().to_vec();
    let mut mv = vec![Complex64::new(0.0, 0.0); v.len()];
    let mut out = [0u64; 2];
    for (slot, side, family) in [(0, Side::Alice, fa), (1, Side::Bob, fb)] {
        for m in family {
            space.apply_into(side, m, &v, &mut mv);
            let total = linalg::norm_sqr(&v);
            let plus: f64 = v
                .iter()
                .zip(&mv)
                .map(|(a, b)| ((a + b) * 0.5).norm_sqr())
                .sum();
            let p0 = if total > 0.0 { plus / total } else { 1.0 };
            let bit = rng.random::<f64>() >= p0;
            let sign = if bit { -0.5 } else { 0.5 };
            for (a, b) in v.iter_mut().zip(&mv) {
                *a = *a * 0.5 + b * sign;
            }
            out[slot] = (out[slot] << 1) | bit as u64;
        }
    }
    let half = strategy.half();
    Ok((
        BitString::from_value(half, out[0]),
        BitString::from_value(half, out[1]),
    ))
}

/// On-disk strategy document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyFile {
    pub n: usize,
    #[serde(rename = "dim_A")]
    pub dim_a: usize,
    #[serde(rename = "dim_B")]
    pub dim_b: usize,
    pub state: Vec<[f64; 2]>,
    pub alice_obs: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
    pub bob_obs: BTreeMap<String, Vec<Vec<[f64; 2]>>>,
}

fn pairs(z: &[Complex64]) -> Vec<[f64; 2]> {
    z.iter().map(|c| [c.re, c.im]).collect()
}

fn unpairs(p: &[[f64; 2]]) -> Vec<Complex64> {
    p.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
}

impl From<&Strategy> for StrategyFile {
    fn from(s: &Strategy) -> Self {
        let half = s.half();
        let table = |side: Side| {
            s.table(side)
                .iter()
                .enumerate()
                .map(|(q, family)| {
                    (
                        BitString::from_value(half, q as u64).to_string(),
                        family.iter().map(|m| pairs(m.as_slice())).collect(),
                    )
                })
                .collect()
        };
        StrategyFile {
            n: s.n,
            dim_a: s.dim_a(),
            dim_b: s.dim_b(),
            state: pairs(s.state.amplitudes()),
            alice_obs: table(Side::Alice),
            bob_obs: table(Side::Bob),
        }
    }
}

impl TryFrom<StrategyFile> for Strategy {
    type Error = Error;

    fn try_from(f: StrategyFile) -> Result<Self> {
        check_n(f.n)?;
        if f.n > MAX_N {
            return Err(Error::TooLarge {
                n: f.n,
                limit: MAX_N,
                what: "question tables",
            });
        }
        let half = f.n / 2;
        let table = |obs: &BTreeMap<String, Vec<Vec<[f64; 2]>>>, dim: usize| {
            BitString::all(half)
                .map(|q| {
                    let key = q.to_string();
                    let family = obs
                        .get(&key)
                        .ok_or_else(|| Error::MissingQuestion(key.clone()))?;
                    family
                        .iter()
                        .map(|m| ComplexMatrix::new(dim, dim, unpairs(m)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        };
        let alice = table(&f.alice_obs, f.dim_a)?;
        let bob = table(&f.bob_obs, f.dim_b)?;
        let state = StateVector::new(unpairs(&f.state))?;
        Strategy::new(f.n, f.dim_a, f.dim_b, state, alice, bob)
    }
}

impl Strategy {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&StrategyFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: StrategyFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn ideal_two_qubit_state() {
        let s = ideal_strategy(2).unwrap();
        let expected = StateVector::from_real(&[0.5, 0.5, 0.5, -0.5]).unwrap();
        assert!(s.state().distance(&expected) < 1e-15);
    }

    #[test]
    fn ideal_state_matches_closed_form() {
        // (1/√2^n) Σ (−1)^{u_a·u_b} |u⟩
        let n = 6;
        let s = ideal_strategy(n).unwrap();
        let half = n / 2;
        let norm = (1u64 << n) as f64;
        for u in BitString::all(n) {
            let (ua, ub) = u.split_halves().unwrap();
            let sign = if ua.dot(&ub).unwrap() % 2 == 1 { -1.0 } else { 1.0 };
            let amp = s.state().amplitudes()[u.index()];
            assert!((amp.re - sign / norm.sqrt()).abs() < 1e-14);
            assert_eq!(amp.im, 0.0);
        }
        assert_eq!(s.dim_a(), 1 << half);
    }

    #[test]
    fn ideal_shapes() {
        let s = ideal_strategy(4).unwrap();
        assert_eq!(s.state().dim(), 16);
        assert_eq!(s.table(Side::Alice).len(), 4);
        assert!(s.table(Side::Alice).iter().all(|f| f.len() == 2));
        assert!(matches!(ideal_strategy(3), Err(Error::InvalidN(3))));
        assert!(matches!(ideal_strategy(0), Err(Error::InvalidN(0))));
    }

    #[test]
    fn validation_of_generated_strategies() {
        let r = validate(&ideal_strategy(4).unwrap());
        assert!(r.passed);
        assert!(r.hermitian <= 1e-10 && r.unitary <= 1e-10);
        assert!(r.commutation <= 1e-10 && r.normalization <= 1e-10);
        for noise in [
            NoiseSpec::bob_rotation(0.3).unwrap(),
            NoiseSpec::partial_entanglement(0.5).unwrap(),
        ] {
            assert!(validate(&noisy_strategy(4, noise).unwrap()).passed);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(validate(&random_strategy(4, 3, 2, &mut rng).unwrap()).passed);
    }

    #[test]
    fn validation_flags_non_unitary() {
        let ideal = ideal_strategy(2).unwrap();
        let (state, mut alice, bob) = ideal.into_parts();
        alice[0][0] = pauli::x().scale_real(0.5);
        let bad = Strategy::new(2, 2, 2, state, alice, bob).unwrap();
        let r = validate(&bad);
        assert!((r.unitary - 0.75).abs() < 1e-12);
        assert!(!r.passed);
    }

    #[test]
    fn validation_flags_non_commuting() {
        let x = pauli::embed(&pauli::x(), 1, 1);
        let z = pauli::z();
        let state = StateVector::from_real(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let fam = vec![vec![x.clone(), z.clone()]; 4];
        let mut fam_b = fam.clone();
        fam_b.iter_mut().for_each(|f| *f = vec![pauli::x(), pauli::x()]);
        let s = Strategy::new(4, 2, 2, state, fam, fam_b).unwrap();
        let r = validate(&s);
        assert!((r.commutation - 2.0).abs() < 1e-12);
        assert!(!r.passed);
        let err = joint_projector(&s, Side::Alice, &bs("00"), &bs("00"));
        assert!(matches!(err, Err(Error::NonCommuting { .. })));
    }

    #[test]
    fn projectors_complete_and_idempotent() {
        let s = ideal_strategy(4).unwrap();
        for q in BitString::all(2) {
            let mut total = ComplexMatrix::zeros(4, 4);
            for a in BitString::all(2) {
                let p = joint_projector(&s, Side::Bob, &q, &a).unwrap();
                assert!((&p * &p).max_abs_diff(&p) < 1e-10);
                total = &total + &p;
            }
            assert!(total.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
        }
    }

    #[test]
    fn ideal_projector_is_x_eigenprojector() {
        let s = ideal_strategy(2).unwrap();
        let p = joint_projector(&s, Side::Alice, &bs("0"), &bs("0")).unwrap();
        let expected = (&pauli::i2() + &pauli::x()).scale_real(0.5);
        assert!(p.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn born_distribution_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for s in [
            ideal_strategy(4).unwrap(),
            noisy_strategy(4, NoiseSpec::bob_rotation(0.2).unwrap()).unwrap(),
            random_strategy(4, 2, 3, &mut rng).unwrap(),
        ] {
            for qa in BitString::all(2) {
                for qb in BitString::all(2) {
                    let mut sum = 0.0;
                    for x in BitString::all(2) {
                        for y in BitString::all(2) {
                            sum += born_probability(&s, &qa, &qb, &x, &y).unwrap();
                        }
                    }
                    assert!((sum - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn deterministic_strategy_gives_fixed_answers() {
        let s = classical_strategy(4, |side, _, k| side == Side::Alice && k == 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (x, y) = sample_answers(&s, &bs("01"), &bs("11"), &mut rng).unwrap();
            assert_eq!((x, y), (bs("01"), bs("00")));
        }
    }

    #[test]
    fn noise_spec_checks() {
        assert!(NoiseSpec::new(NoiseModel::None, 0.1).is_err());
        assert!(NoiseSpec::bob_rotation(f64::NAN).is_err());
        assert!(NoiseSpec::partial_entanglement(0.0).is_err());
        assert!(NoiseSpec::partial_entanglement(1.0).is_err());
        assert!(NoiseSpec::partial_entanglement(FRAC_PI_4).is_ok());
        assert!("sideways".parse::<NoiseModel>().is_err());
        assert_eq!(
            "partial-entanglement".parse::<NoiseModel>().unwrap(),
            NoiseModel::PartialEntanglement
        );
        let ideal = ideal_strategy(2).unwrap();
        assert_eq!(noisy_strategy(2, NoiseSpec::none()).unwrap(), ideal);
        let full = noisy_strategy(2, NoiseSpec::partial_entanglement(FRAC_PI_4).unwrap()).unwrap();
        assert!(full.state().distance(ideal.state()) < 1e-15);
    }

    #[test]
    fn partially_entangled_state_is_normalized() {
        let s = noisy_strategy(6, NoiseSpec::partial_entanglement(0.3).unwrap()).unwrap();
        assert!(s.state().is_normalized());
    }

    #[test]
    fn json_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_strategy(4, 2, 3, &mut rng).unwrap();
        let text = s.to_json().unwrap();
        let back = Strategy::from_json(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn json_rejects_missing_question() {
        let s = ideal_strategy(2).unwrap();
        let mut file = StrategyFile::from(&s);
        file.bob_obs.remove("1");
        let text = serde_json::to_string(&file).unwrap();
        assert!(matches!(Strategy::from_json(&text), Err(Error::MissingQuestion(_))));
    }
}
