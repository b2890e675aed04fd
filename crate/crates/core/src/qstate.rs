//! Four-qubit density operators, their Pauli correlation tensors, X-type
//! classification, and partial traces of multi-mode pure states.
//!
//! Basis convention: a computational-basis index `b1 b2 b3 b4` has qubit 1
//! as the most significant bit. The same holds for [`ModeState`], where the
//! first listed mode is the most significant bit.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Hilbert-space dimension of four qubits.
pub const DIM: usize = 16;

/// Entrywise Hermiticity tolerance used by [`DensityOperator::validate`].
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Trace tolerance used by [`DensityOperator::validate`].
pub const TRACE_TOL: f64 = 1e-12;
/// Smallest eigenvalue still accepted as positive semidefinite.
pub const EIGENVALUE_FLOOR: f64 = -1e-10;
/// Default threshold for [`classify_xtype`].
pub const XTYPE_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Entry `σ_k[row][col]` of a Pauli matrix (`σ_0` is the identity).
pub(crate) fn pauli_entry(k: usize, row: usize, col: usize) -> C64 {
    match (k, row, col) {
        (0, r, c) if r == c => ONE,
        (1, r, c) if r != c => ONE,
        (2, 0, 1) => C64::new(0.0, -1.0),
        (2, 1, 0) => C64::new(0.0, 1.0),
        (3, 0, 0) => ONE,
        (3, 1, 1) => -ONE,
        _ => ZERO,
    }
}

/// Bit of qubit `q` (0-based, qubit 0 most significant) in a 4-qubit index.
#[inline]
fn qubit_bit(index: usize, q: usize) -> usize {
    (index >> (3 - q)) & 1
}

/// XOR mask of the basis flips done by `σ_{i}⊗σ_{j}⊗σ_{k}⊗σ_{l}`.
#[inline]
fn flip_mask(ops: [usize; 4]) -> usize {
    ops.iter()
        .enumerate()
        .filter(|(_, &k)| k == 1 || k == 2)
        .fold(0, |m, (q, _)| m | (1 << (3 - q)))
}

/// Entry `[row][col]` of `σ_{ops[0]}⊗…⊗σ_{ops[3]}`.
fn pauli_string_entry(ops: [usize; 4], row: usize, col: usize) -> C64 {
    (0..4).fold(ONE, |acc, q| {
        acc * pauli_entry(ops[q], qubit_bit(row, q), qubit_bit(col, q))
    })
}

/// A 16×16 complex matrix standing for a four-qubit density operator.
///
/// Construction only checks the shape; call [`validate`](Self::validate) or
/// [`DensityOperator::checked`] for the physical invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: DMatrix<C64>,
}

/// Outcome of [`DensityOperator::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Largest `|ρ[r][c] − conj(ρ[c][r])|`.
    pub hermiticity_defect: f64,
    /// `|tr ρ − 1|`.
    pub trace_defect: f64,
    /// Smallest eigenvalue of the Hermitian part.
    pub min_eigenvalue: f64,
    pub passed: bool,
}

impl DensityOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != DIM || matrix.ncols() != DIM {
            return Err(Error::DimensionMismatch {
                expected: DIM,
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        Ok(Self { matrix })
    }

    /// Like [`new`](Self::new) but also rejects matrices failing validation.
    pub fn checked(matrix: DMatrix<C64>) -> Result<Self> {
        let rho = Self::new(matrix)?;
        let report = rho.validate();
        if !report.passed {
            return Err(Error::InvalidState(format!(
                "hermiticity defect {:.3e}, trace defect {:.3e}, min eigenvalue {:.3e}",
                report.hermiticity_defect, report.trace_defect, report.min_eigenvalue
            )));
        }
        Ok(rho)
    }

    /// `|ψ⟩⟨ψ|` for a 16-component amplitude vector (normalized here).
    pub fn from_pure(amplitudes: &[C64]) -> Result<Self> {
        if amplitudes.len() != DIM {
            return Err(Error::DimensionMismatch {
                expected: DIM,
                rows: amplitudes.len(),
                cols: 1,
            });
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let m = DMatrix::from_fn(DIM, DIM, |r, c| amplitudes[r] * amplitudes[c].conj() / (norm * norm));
        Self::new(m)
    }

    /// `α|0000⟩ + √(1−α²)|1111⟩`.
    pub fn ghz(alpha: f64) -> Self {
        let mut amps = [ZERO; DIM];
        amps[0] = C64::from(alpha);
        amps[DIM - 1] = C64::from((1.0 - alpha * alpha).max(0.0).sqrt());
        Self::from_pure(&amps).expect("GHZ amplitudes are nonzero")
    }

    /// `I/16`.
    pub fn maximally_mixed() -> Self {
        Self {
            matrix: DMatrix::from_diagonal_element(DIM, DIM, C64::from(1.0 / DIM as f64)),
        }
    }

    /// Computational basis state `|index⟩⟨index|`.
    pub fn basis_state(index: usize) -> Self {
        let mut m = DMatrix::zeros(DIM, DIM);
        m[(index, index)] = ONE;
        Self { matrix: m }
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn validate(&self) -> ValidationReport {
        let m = &self.matrix;
        let mut herm = 0.0f64;
        for r in 0..DIM {
            for c in r..DIM {
                herm = herm.max((m[(r, c)] - m[(c, r)].conj()).norm());
            }
        }
        let trace_defect = (m.trace() - ONE).norm();
        let hermitian_part = (m + m.adjoint()) * C64::from(0.5);
        let min_eigenvalue = hermitian_part
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        ValidationReport {
            hermiticity_defect: herm,
            trace_defect,
            min_eigenvalue,
            passed: herm <= HERMITICITY_TOL
                && trace_defect <= TRACE_TOL
                && min_eigenvalue >= EIGENVALUE_FLOOR,
        }
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &DensityOperator) -> f64 {
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `⟨σ3⊗σ3⊗σ3⊗σ3⟩`, the signed diagonal sum.
    pub fn zzzz(&self) -> f64 {
        (0..DIM).map(|k| parity_sign(k) * self.matrix[(k, k)].re).sum()
    }
}

/// `(−1)^{popcount(k)}`: the sign of basis state `k` under `σ3⊗4`.
pub fn parity_sign(k: usize) -> f64 {
    if k.count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for DensityOperator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = |f: fn(&C64) -> f64| {
            (0..DIM)
                .map(|r| (0..DIM).map(|c| f(&self.matrix[(r, c)])).collect())
                .collect()
        };
        MatrixJson {
            dim: DIM,
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityOperator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = MatrixJson::deserialize(d)?;
        let ok = j.dim == DIM
            && j.re.len() == DIM
            && j.im.len() == DIM
            && j.re.iter().chain(j.im.iter()).all(|row| row.len() == DIM);
        if !ok {
            return Err(D::Error::custom(format!("expected dim {DIM} with {DIM}x{DIM} re/im arrays")));
        }
        let m = DMatrix::from_fn(DIM, DIM, |r, c| C64::new(j.re[r][c], j.im[r][c]));
        DensityOperator::new(m).map_err(D::Error::custom)
    }
}

/// The 256 real Pauli coefficients `t_ijkl = tr[ρ σ_i⊗σ_j⊗σ_k⊗σ_l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTensor {
    t: [[[[f64; 4]; 4]; 4]; 4],
}

impl CorrelationTensor {
    pub fn zero() -> Self {
        Self {
            t: [[[[0.0; 4]; 4]; 4]; 4],
        }
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.t[i][j][k][l]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, value: f64) {
        self.t[i][j][k][l] = value;
    }

    /// The correlation matrix `T_ij` (rows `k`, columns `l`), `i, j ∈ 1..=3`.
    pub fn block(&self, i: usize, j: usize) -> Matrix3<f64> {
        assert!((1..=3).contains(&i) && (1..=3).contains(&j), "block indices are 1..=3");
        Matrix3::from_fn(|k, l| self.t[i][j][k + 1][l + 1])
    }

    /// All nine blocks, `blocks()[i-1][j-1] = T_ij`.
    pub fn blocks(&self) -> [[Matrix3<f64>; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.block(i + 1, j + 1)))
    }

    /// `ρ = (1/16) Σ t_ijkl σ_i⊗σ_j⊗σ_k⊗σ_l`.
    pub fn reconstruct(&self) -> DensityOperator {
        let mut m = DMatrix::<C64>::zeros(DIM, DIM);
        for ops in pauli_indices() {
            let coeff = self.t[ops[0]][ops[1]][ops[2]][ops[3]];
            if coeff == 0.0 {
                continue;
            }
            let mask = flip_mask(ops);
            for r in 0..DIM {
                let c = r ^ mask;
                m[(r, c)] += pauli_string_entry(ops, r, c) * coeff;
            }
        }
        m /= C64::from(DIM as f64);
        DensityOperator { matrix: m }
    }

    pub fn iter(&self) -> impl Iterator<Item = ([usize; 4], f64)> + '_ {
        pauli_indices().map(move |o| (o, self.t[o[0]][o[1]][o[2]][o[3]]))
    }
}

fn pauli_indices() -> impl Iterator<Item = [usize; 4]> {
    (0..256usize).map(|n| [n >> 6, (n >> 4) & 3, (n >> 2) & 3, n & 3])
}

/// Pauli expansion of `ρ`. Imaginary parts of the traces are dropped.
pub fn pauli_tensor(rho: &DensityOperator) -> CorrelationTensor {
    let m = &rho.matrix;
    let mut out = CorrelationTensor::zero();
    for ops in pauli_indices() {
        let mask = flip_mask(ops);
        // tr(ρP) = Σ_c ρ[r][c] P[c][r] with r = c ^ mask
        let tr: C64 = (0..DIM)
            .map(|c| {
                let r = c ^ mask;
                m[(r, c)] * pauli_string_entry(ops, c, r)
            })
            .sum();
        out.t[ops[0]][ops[1]][ops[2]][ops[3]] = tr.re;
    }
    out
}

/// Diagonal plus (at most) one anti-diagonal conjugate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XTypeState {
    diag: [f64; DIM],
    /// 1-based row `i ∈ 1..=8` of the coherence `ρ_{i,17−i}`.
    pair_index: usize,
    pair_value: C64,
}

impl XTypeState {
    pub fn new(diag: [f64; DIM], pair_index: usize, pair_value: C64) -> Result<Self> {
        if !(1..=8).contains(&pair_index) {
            return Err(Error::InvalidState(format!("pair index {pair_index} outside 1..=8")));
        }
        let sum: f64 = diag.iter().sum();
        if (sum - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("diagonal sums to {sum}")));
        }
        if let Some(bad) = diag.iter().find(|&&d| d < -TRACE_TOL) {
            return Err(Error::InvalidState(format!("negative population {bad}")));
        }
        let (i, j) = (pair_index - 1, DIM - pair_index);
        if pair_value.norm_sqr() > diag[i] * diag[j] + 1e-12 {
            return Err(Error::InvalidState(format!(
                "|ρ_{{{},{}}}|² = {} exceeds ρ_ii·ρ_jj = {}",
                pair_index,
                DIM + 1 - pair_index,
                pair_value.norm_sqr(),
                diag[i] * diag[j]
            )));
        }
        Ok(Self {
            diag,
            pair_index,
            pair_value,
        })
    }

    pub fn diag(&self) -> &[f64; DIM] {
        &self.diag
    }

    pub fn pair_index(&self) -> usize {
        self.pair_index
    }

    /// 1-based column of the coherence, `17 − pair_index`.
    pub fn pair_partner(&self) -> usize {
        DIM + 1 - self.pair_index
    }

    pub fn pair_value(&self) -> C64 {
        self.pair_value
    }

    /// `N = Σ_k (−1)^{popcount(k)} ρ_kk`.
    pub fn signed_diagonal_sum(&self) -> f64 {
        self.diag.iter().enumerate().map(|(k, d)| parity_sign(k) * d).sum()
    }

    /// Random valid X-type state.
    ///
    /// Populations are normalized exponentials; the pair and occasionally one
    /// other population are boosted so both branches of the closed form get
    /// exercised. The coherence has a uniform phase and a modulus anywhere up
    /// to the PSD limit.
    pub fn random(rng: &mut impl rand::Rng) -> Self {
        let pair_index = rng.gen_range(1..=8);
        let (i, j) = (pair_index - 1, DIM - pair_index);
        let mut w: [f64; DIM] = std::array::from_fn(|_| -(1.0 - rng.gen::<f64>()).ln());
        let boost = 10f64.powf(2.0 * rng.gen::<f64>());
        w[i] *= boost;
        w[j] *= boost;
        if rng.gen_bool(0.3) {
            w[rng.gen_range(0..DIM)] *= 10f64.powf(2.0 * rng.gen::<f64>());
        }
        let total: f64 = w.iter().sum();
        let diag = w.map(|x| x / total);
        let modulus = rng.gen::<f64>().sqrt() * (diag[i] * diag[j]).sqrt();
        let value = C64::from_polar(modulus, rng.gen::<f64>() * std::f64::consts::TAU);
        Self::new(diag, pair_index, value).expect("sampler produces valid states")
    }

    pub fn with_pair_value(&self, value: C64) -> Result<Self> {
        Self::new(self.diag, self.pair_index, value)
    }

    pub fn to_density(&self) -> DensityOperator {
        let mut m = DMatrix::from_fn(DIM, DIM, |r, c| if r == c { C64::from(self.diag[r]) } else { ZERO });
        let (i, j) = (self.pair_index - 1, DIM - self.pair_index);
        m[(i, j)] = self.pair_value;
        m[(j, i)] = self.pair_value.conj();
        DensityOperator { matrix: m }
    }
}

/// Recognizes X-type operators.
///
/// Every coherence off the anti-diagonal must be below `tol` in modulus and at
/// most one anti-diagonal pair may exceed it. A purely diagonal operator is
/// reported with pair index 1 and value 0.
pub fn classify_xtype(rho: &DensityOperator, tol: f64) -> Result<XTypeState> {
    let m = &rho.matrix;
    for r in 0..DIM {
        for c in 0..DIM {
            if r != c && r + c != DIM - 1 && m[(r, c)].norm() >= tol {
                return Err(Error::NotXType(format!(
                    "coherence ρ_{{{},{}}} = {} off the anti-diagonal",
                    r + 1,
                    c + 1,
                    m[(r, c)]
                )));
            }
        }
    }
    let active: Vec<usize> = (0..DIM / 2)
        .filter(|&i| m[(i, DIM - 1 - i)].norm().max(m[(DIM - 1 - i, i)].norm()) > tol)
        .collect();
    let (pair_index, pair_value) = match active.as_slice() {
        [] => (1, ZERO),
        [i] => (i + 1, m[(*i, DIM - 1 - i)]),
        _ => {
            return Err(Error::NotXType(format!(
                "{} anti-diagonal pairs above tolerance",
                active.len()
            )))
        }
    };
    let mut diag = [0.0; DIM];
    for (k, d) in diag.iter_mut().enumerate() {
        *d = m[(k, k)].re;
    }
    XTypeState::new(diag, pair_index, pair_value)
}

/// Physical role of a field mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeKind {
    /// Global (Kruskal) mode of an observer in the asymptotically flat region.
    Kruskal,
    /// Schwarzschild exterior mode.
    Out,
    /// Schwarzschild interior mode.
    In,
    /// SdS exterior mode near the black-hole horizon.
    A,
    /// SdS exterior mode near the cosmological horizon.
    B,
    /// SdS mode behind the black-hole horizon.
    L,
    /// SdS mode beyond the cosmological horizon.
    R,
}

impl ModeKind {
    fn tag(self) -> &'static str {
        match self {
            ModeKind::Kruskal => "kruskal",
            ModeKind::Out => "out",
            ModeKind::In => "in",
            ModeKind::A => "A",
            ModeKind::B => "B",
            ModeKind::L => "L",
            ModeKind::R => "R",
        }
    }
}

/// A mode label such as `out2` or `A1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeLabel {
    pub kind: ModeKind,
    pub index: u32,
}

impl ModeLabel {
    pub const fn new(kind: ModeKind, index: u32) -> Self {
        Self { kind, index }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.tag(), self.index)
    }
}

impl FromStr for ModeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| Error::Parse(format!("mode label `{s}` has no index")))?;
        let (tag, idx) = s.split_at(split);
        let kind = match tag {
            "kruskal" => ModeKind::Kruskal,
            "out" => ModeKind::Out,
            "in" => ModeKind::In,
            "A" => ModeKind::A,
            "B" => ModeKind::B,
            "L" => ModeKind::L,
            "R" => ModeKind::R,
            _ => return Err(Error::Parse(format!("unknown mode kind `{tag}`"))),
        };
        let index = idx
            .parse()
            .map_err(|_| Error::Parse(format!("bad mode index in `{s}`")))?;
        Ok(Self { kind, index })
    }
}

impl Serialize for ModeLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModeLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A normalized pure state over `K` labeled two-level modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModeStateJson", into = "ModeStateJson")]
pub struct ModeState {
    modes: Vec<ModeLabel>,
    amplitudes: Vec<C64>,
}

#[derive(Serialize, Deserialize)]
struct ModeStateJson {
    modes: Vec<ModeLabel>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl TryFrom<ModeStateJson> for ModeState {
    type Error = Error;

    fn try_from(j: ModeStateJson) -> Result<Self> {
        if j.re.len() != j.im.len() {
            return Err(Error::Parse("re/im lengths differ".into()));
        }
        let amps = j.re.iter().zip(&j.im).map(|(&r, &i)| C64::new(r, i)).collect();
        ModeState::new(j.modes, amps)
    }
}

impl From<ModeState> for ModeStateJson {
    fn from(s: ModeState) -> Self {
        ModeStateJson {
            re: s.amplitudes.iter().map(|z| z.re).collect(),
            im: s.amplitudes.iter().map(|z| z.im).collect(),
            modes: s.modes,
        }
    }
}

impl ModeState {
    /// Checks `2^K` amplitudes, distinct labels and unit norm (within 1e-12).
    pub fn new(modes: Vec<ModeLabel>, amplitudes: Vec<C64>) -> Result<Self> {
        let expected = 1usize
            .checked_shl(modes.len() as u32)
            .ok_or_else(|| Error::InvalidState("too many modes".into()))?;
        if amplitudes.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                rows: amplitudes.len(),
                cols: 1,
            });
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(Error::DuplicateMode(m.to_string()));
            }
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("state norm is {norm}")));
        }
        Ok(Self { modes, amplitudes })
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude_of(&self, bits: &[(ModeLabel, u8)]) -> Result<C64> {
        let mut idx = 0usize;
        let k = self.modes.len();
        for (label, bit) in bits {
            let pos = self.position(label)?;
            if *bit == 1 {
                idx |= 1 << (k - 1 - pos);
            }
        }
        Ok(self.amplitudes[idx])
    }

    fn position(&self, label: &ModeLabel) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    /// Reduced density matrix over `keep` (in the listed order), any size.
    pub fn reduced_matrix(&self, keep: &[ModeLabel]) -> Result<DMatrix<C64>> {
        let k = self.modes.len();
        let mut kept_pos = Vec::with_capacity(keep.len());
        for (i, label) in keep.iter().enumerate() {
            if keep[..i].contains(label) {
                return Err(Error::DuplicateMode(label.to_string()));
            }
            kept_pos.push(self.position(label)?);
        }
        let env_pos: Vec<usize> = (0..k).filter(|p| !kept_pos.contains(p)).collect();
        let (dk, de) = (1usize << kept_pos.len(), 1usize << env_pos.len());

        let bits_of = |idx: usize, positions: &[usize]| {
            positions
                .iter()
                .fold(0usize, |acc, &p| (acc << 1) | ((idx >> (k - 1 - p)) & 1))
        };
        let mut psi = DMatrix::<C64>::zeros(dk, de);
        for (idx, amp) in self.amplitudes.iter().enumerate() {
            if *amp != ZERO {
                psi[(bits_of(idx, &kept_pos), bits_of(idx, &env_pos))] = *amp;
            }
        }
        Ok(&psi * psi.adjoint())
    }
}

/// Traces out everything except the four modes in `keep`.
pub fn partial_trace(psi: &ModeState, keep: &[ModeLabel]) -> Result<DensityOperator> {
    if keep.len() != 4 {
        return Err(Error::WrongKeepCount {
            expected: 4,
            got: keep.len(),
        });
    }
    DensityOperator::new(psi.reduced_matrix(keep)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ghz() -> DensityOperator {
        DensityOperator::ghz(std::f64::consts::FRAC_1_SQRT_2)
    }

    fn random_mixed(rng: &mut impl Rng, terms: usize) -> DensityOperator {
        let mut m = DMatrix::<C64>::zeros(DIM, DIM);
        let weights: Vec<f64> = (0..terms).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        for w in weights {
            let v: Vec<C64> = (0..DIM)
                .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let p = DensityOperator::from_pure(&v).unwrap();
            m += p.matrix * C64::from(w / total);
        }
        DensityOperator::new(m).unwrap()
    }

    #[test]
    fn ghz_validates() {
        let r = ghz().validate();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn short_trace_fails_with_defect() {
        let m = ghz().into_matrix() * C64::from(0.9);
        let r = DensityOperator::new(m).unwrap().validate();
        assert!(!r.passed);
        assert!((r.trace_defect - 0.1).abs() < 1e-12);
    }

    #[test]
    fn negative_eigenvalue_fails_psd() {
        let mut m = DMatrix::<C64>::zeros(DIM, DIM);
        m[(0, 0)] = C64::from(1.05);
        m[(1, 1)] = C64::from(-0.05);
        let r = DensityOperator::new(m).unwrap().validate();
        assert!(r.hermiticity_defect == 0.0 && r.trace_defect < 1e-15);
        assert!((r.min_eigenvalue + 0.05).abs() < 1e-12);
        assert!(!r.passed);
    }

    #[test]
    fn wrong_dimension_rejected() {
        let err = DensityOperator::new(DMatrix::zeros(8, 8)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { rows: 8, .. }));
    }

    #[test]
    fn ghz_tensor_entries() {
        let t = pauli_tensor(&ghz());
        assert!((t.get(0, 0, 0, 0) - 1.0).abs() < 1e-12);
        assert!((t.get(3, 3, 3, 3) - 1.0).abs() < 1e-12);
        // T_11 = 2ρ_{1,16}·diag(1, −1, 0) with ρ_{1,16} = 1/2
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0);
        assert!((t.block(1, 1) - expected).abs().max() < 1e-12);
        let t12 = Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!((t.block(1, 2) - t12).abs().max() < 1e-12);
        assert!((t.block(2, 1) - t12).abs().max() < 1e-12);
        assert!((t.block(2, 2) + expected).abs().max() < 1e-12);
        assert!(t.block(1, 3).abs().max() < 1e-12);
    }

    #[test]
    fn tensor_round_trip_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let terms = rng.gen_range(1..5);
            let rho = random_mixed(&mut rng, terms);
            let t = pauli_tensor(&rho);
            assert!((t.get(0, 0, 0, 0) - 1.0).abs() < 1e-12);
            assert!(t.iter().all(|(_, v)| v.abs() <= 1.0 + 1e-12));
            assert!(t.reconstruct().max_abs_diff(&rho) < 1e-12);
        }
    }

    #[test]
    fn classify_ghz() {
        let x = classify_xtype(&ghz(), XTYPE_TOL).unwrap();
        assert_eq!(x.pair_index(), 1);
        assert!((x.pair_value() - C64::from(0.5)).norm() < 1e-12);
        assert!((x.diag()[0] - 0.5).abs() < 1e-12 && (x.diag()[15] - 0.5).abs() < 1e-12);
        assert!(x.diag()[1..15].iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn classify_diagonal_tie_break() {
        let x = classify_xtype(&DensityOperator::maximally_mixed(), XTYPE_TOL).unwrap();
        assert_eq!(x.pair_index(), 1);
        assert_eq!(x.pair_value(), ZERO);
        assert!(x.diag().iter().all(|d| (d - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn classify_rejects_off_antidiagonal_coherence() {
        let mut m = DensityOperator::maximally_mixed().into_matrix();
        m[(1, 2)] = C64::from(0.1);
        m[(2, 1)] = C64::from(0.1);
        let rho = DensityOperator::new(m).unwrap();
        assert!(matches!(classify_xtype(&rho, XTYPE_TOL), Err(Error::NotXType(_))));
    }

    #[test]
    fn classify_rejects_two_pairs() {
        let mut m = DensityOperator::maximally_mixed().into_matrix();
        for i in [0usize, 3] {
            m[(i, 15 - i)] = C64::from(0.02);
            m[(15 - i, i)] = C64::from(0.02);
        }
        let rho = DensityOperator::new(m).unwrap();
        assert!(matches!(classify_xtype(&rho, XTYPE_TOL), Err(Error::NotXType(_))));
    }

    #[test]
    fn xtype_rejects_non_psd_pair() {
        let mut diag = [0.0; DIM];
        diag[2] = 0.5;
        diag[13] = 0.5;
        assert!(XTypeState::new(diag, 3, C64::new(0.3, 0.45)).is_err());
        let x = XTypeState::new(diag, 3, C64::new(0.3, 0.3)).unwrap();
        assert_eq!(x.pair_partner(), 14);
        assert!(x.to_density().validate().passed);
    }

    #[test]
    fn product_state_single_mode_trace() {
        let x = ModeLabel::new(ModeKind::Kruskal, 1);
        let y = ModeLabel::new(ModeKind::Kruskal, 2);
        let psi = ModeState::new(vec![x, y], vec![ONE, ZERO, ZERO, ZERO]).unwrap();
        let r = psi.reduced_matrix(&[x]).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]));
    }

    #[test]
    fn partial_trace_errors() {
        let labels: Vec<ModeLabel> = (1..=5).map(|i| ModeLabel::new(ModeKind::Kruskal, i)).collect();
        let mut amps = vec![ZERO; 32];
        amps[0] = ONE;
        let psi = ModeState::new(labels.clone(), amps).unwrap();
        assert!(matches!(
            partial_trace(&psi, &labels[..3]),
            Err(Error::WrongKeepCount { got: 3, .. })
        ));
        let stranger = ModeLabel::new(ModeKind::R, 1);
        assert!(matches!(
            partial_trace(&psi, &[labels[0], labels[1], labels[2], stranger]),
            Err(Error::UnknownMode(_))
        ));
    }

    #[test]
    fn partial_trace_preserves_trace_and_hermiticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels: Vec<ModeLabel> = (1..=6).map(|i| ModeLabel::new(ModeKind::Out, i)).collect();
        for _ in 0..20 {
            let mut amps: Vec<C64> = (0..64)
                .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            let n = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            amps.iter_mut().for_each(|a| *a /= n);
            let psi = ModeState::new(labels.clone(), amps).unwrap();
            let keep = [labels[4], labels[1], labels[0], labels[3]];
            let rho = partial_trace(&psi, &keep).unwrap();
            assert!(rho.validate().passed);
        }
    }

    #[test]
    fn mode_label_text_round_trip() {
        for s in ["kruskal3", "out1", "in2", "A1", "B4", "L2", "R3"] {
            assert_eq!(s.parse::<ModeLabel>().unwrap().to_string(), s);
        }
        assert!("Q1".parse::<ModeLabel>().is_err());
        assert!("out".parse::<ModeLabel>().is_err());
    }

    #[test]
    fn density_json_shape() {
        let json = serde_json::to_value(ghz()).unwrap();
        assert_eq!(json["dim"], 16);
        assert!((json["re"][0][15].as_f64().unwrap() - 0.5).abs() < 1e-15);
        let back: DensityOperator = serde_json::from_value(json).unwrap();
        assert!(back.max_abs_diff(&ghz()) == 0.0);
        let bad = serde_json::json!({"dim": 4, "re": [[1.0]], "im": [[0.0]]});
        assert!(serde_json::from_value::<DensityOperator>(bad).is_err());
    }
}
