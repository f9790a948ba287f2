//! Sparse state-vector simulator over named registers.
//!
//! States are immutable maps from structured basis labels to complex
//! amplitudes. The protocol stack only needs reversible classical register
//! maps, computational-basis measurement (collapsing and non-collapsing),
//! permutations, and discrete Fourier transforms, so there is no gate-level
//! circuit machinery here. Labels are kept in a BTreeMap so every iteration
//! order, and therefore every seeded sampling outcome, is deterministic.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, RngExt};
use thiserror::Error;

use crate::affine::{CanonicalRep, Point};

/// Amplitudes below this magnitude are pruned after unitary application.
pub const AMP_PRUNE_THRESHOLD: f64 = 1e-15;
/// A state's squared norm must stay within this distance of 1.
pub const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum QsimError {
    #[error("state support must be nonempty")]
    EmptySupport,
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("register `{0}` already exists")]
    DuplicateRegister(String),
    #[error("label has {got} register values, layout has {expected}")]
    LabelWidthMismatch { expected: usize, got: usize },
    #[error("register `{register}` holds values outside the unitary's domain of size {domain}")]
    DomainMismatch { register: String, domain: u64 },
    #[error("register `{0}` must hold scalar values for this operation")]
    NotScalar(String),
    #[error("permutation map is not a bijection")]
    NotBijection,
    #[error("matrix is not square or not unitary")]
    NotUnitary,
    #[error("uncompute mismatch: register value is not the claimed function of the rest")]
    UncomputeMismatch,
}

/// One register's value inside a basis label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegValue {
    Scalar(u64),
    Point(Point),
    Tag(CanonicalRep),
}

impl RegValue {
    pub fn as_scalar(&self) -> Option<u64> {
        match self {
            RegValue::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<&Point> {
        match self {
            RegValue::Point(p) => Some(p),
            _ => None,
        }
    }
}

/// A computational-basis label: one value per register, in layout order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisLabel(Vec<RegValue>);

impl BasisLabel {
    pub fn new(values: Vec<RegValue>) -> Self {
        BasisLabel(values)
    }

    pub fn values(&self) -> &[RegValue] {
        &self.0
    }

    pub fn value(&self, index: usize) -> &RegValue {
        &self.0[index]
    }
}

/// Register names, fixed at state preparation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    names: Vec<String>,
}

impl Layout {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Layout { names: names.into_iter().map(Into::into).collect() }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// The unitaries the simulator applies to a single scalar register.
#[derive(Debug, Clone)]
pub enum Unitary {
    /// Relabeling `v -> map[v]` on the domain `0..map.len()`.
    Permutation(Vec<u64>),
    /// Discrete Fourier transform on `0..size`; the forward kernel is
    /// `omega^(jv) / sqrt(size)` with `omega = exp(2 pi i / size)`.
    Dft { size: u64, inverse: bool },
    /// An explicit small unitary matrix (row index = output value).
    Explicit(Vec<Vec<Complex64>>),
}

impl Unitary {
    pub fn permutation(map: Vec<u64>) -> Result<Self, QsimError> {
        let len = map.len() as u64;
        let mut seen = vec![false; map.len()];
        for &v in &map {
            if v >= len || seen[v as usize] {
                return Err(QsimError::NotBijection);
            }
            seen[v as usize] = true;
        }
        Ok(Unitary::Permutation(map))
    }

    pub fn dft(size: u64) -> Self {
        Unitary::Dft { size, inverse: false }
    }

    pub fn dft_inverse(size: u64) -> Self {
        Unitary::Dft { size, inverse: true }
    }

    pub fn explicit(matrix: Vec<Vec<Complex64>>) -> Result<Self, QsimError> {
        let d = matrix.len();
        if d == 0 || matrix.iter().any(|row| row.len() != d) {
            return Err(QsimError::NotUnitary);
        }
        // Check U U^dagger = I within a loose tolerance.
        for i in 0..d {
            for j in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, b) in matrix[i].iter().zip(&matrix[j]) {
                    acc += a * b.conj();
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                if (acc - expect).norm() > 1e-8 {
                    return Err(QsimError::NotUnitary);
                }
            }
        }
        Ok(Unitary::Explicit(matrix))
    }

    pub fn dimension(&self) -> u64 {
        match self {
            Unitary::Permutation(map) => map.len() as u64,
            Unitary::Dft { size, .. } => *size,
            Unitary::Explicit(m) => m.len() as u64,
        }
    }

    /// Dense matrix form, used by the hidden-variable reference checks.
    pub fn as_dense(&self) -> Vec<Vec<Complex64>> {
        match self {
            Unitary::Permutation(map) => {
                let d = map.len();
                let mut m = vec![vec![Complex64::new(0.0, 0.0); d]; d];
                for (from, &to) in map.iter().enumerate() {
                    m[to as usize][from] = Complex64::new(1.0, 0.0);
                }
                m
            }
            Unitary::Dft { size, inverse } => {
                let d = *size as usize;
                let scale = 1.0 / (d as f64).sqrt();
                let sign = if *inverse { -1.0 } else { 1.0 };
                (0..d)
                    .map(|j| {
                        (0..d)
                            .map(|v| {
                                let angle = sign * TAU * (j as f64) * (v as f64) / d as f64;
                                Complex64::from_polar(scale, angle)
                            })
                            .collect()
                    })
                    .collect()
            }
            Unitary::Explicit(m) => m.clone(),
        }
    }
}

/// Probabilities over basis labels (the Born distribution of some state).
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: BTreeMap<BasisLabel, f64>,
}

impl Distribution {
    pub fn probs(&self) -> &BTreeMap<BasisLabel, f64> {
        &self.probs
    }

    pub fn prob(&self, label: &BasisLabel) -> f64 {
        self.probs.get(label).copied().unwrap_or(0.0)
    }

    /// Half the L1 distance to another distribution.
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        let mut keys: Vec<&BasisLabel> = self.probs.keys().collect();
        keys.extend(other.probs.keys());
        keys.sort();
        keys.dedup();
        0.5 * keys.iter().map(|k| (self.prob(k) - other.prob(k)).abs()).sum::<f64>()
    }
}

/// An immutable sparse pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    layout: Arc<Layout>,
    amps: BTreeMap<BasisLabel, Complex64>,
}

impl State {
    /// Equal positive real amplitudes on exactly the given labels.
    pub fn prepare_uniform(layout: Layout, support: impl IntoIterator<Item = BasisLabel>) -> Result<State, QsimError> {
        let layout = Arc::new(layout);
        let mut amps = BTreeMap::new();
        for label in support {
            if label.0.len() != layout.len() {
                return Err(QsimError::LabelWidthMismatch { expected: layout.len(), got: label.0.len() });
            }
            amps.insert(label, Complex64::new(0.0, 0.0));
        }
        if amps.is_empty() {
            return Err(QsimError::EmptySupport);
        }
        let amp = Complex64::new(1.0 / (amps.len() as f64).sqrt(), 0.0);
        for v in amps.values_mut() {
            *v = amp;
        }
        Ok(State { layout, amps })
    }

    /// A state with the given amplitudes, normalized.
    pub fn from_amplitudes(
        layout: Layout,
        amps: impl IntoIterator<Item = (BasisLabel, Complex64)>,
    ) -> Result<State, QsimError> {
        let layout = Arc::new(layout);
        let mut map = BTreeMap::new();
        for (label, amp) in amps {
            if label.0.len() != layout.len() {
                return Err(QsimError::LabelWidthMismatch { expected: layout.len(), got: label.0.len() });
            }
            if amp.norm() > AMP_PRUNE_THRESHOLD {
                map.insert(label, amp);
            }
        }
        if map.is_empty() {
            return Err(QsimError::EmptySupport);
        }
        let norm = map.values().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for v in map.values_mut() {
            *v /= norm;
        }
        Ok(State { layout, amps: map })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn support(&self) -> impl Iterator<Item = &BasisLabel> {
        self.amps.keys()
    }

    pub fn support_len(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &BTreeMap<BasisLabel, Complex64> {
        &self.amps
    }

    pub fn amplitude(&self, label: &BasisLabel) -> Complex64 {
        self.amps.get(label).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn born_distribution(&self) -> Distribution {
        Distribution { probs: self.amps.iter().map(|(l, a)| (l.clone(), a.norm_sqr())).collect() }
    }

    fn register_index(&self, name: &str) -> Result<usize, QsimError> {
        self.layout.index_of(name).ok_or_else(|| QsimError::UnknownRegister(name.into()))
    }

    /// Reversibly adjoins a register computed from the existing label:
    /// `|x> -> |x>|g(x)>`. Amplitudes are unchanged.
    pub fn adjoin_computed<G>(&self, target: &str, g: G) -> Result<State, QsimError>
    where
        G: Fn(&BasisLabel) -> RegValue,
    {
        if self.layout.index_of(target).is_some() {
            return Err(QsimError::DuplicateRegister(target.into()));
        }
        let mut names: Vec<String> = self.layout.names.clone();
        names.push(target.into());
        let layout = Arc::new(Layout { names });
        let amps = self
            .amps
            .iter()
            .map(|(label, &amp)| {
                let mut values = label.0.clone();
                values.push(g(label));
                (BasisLabel(values), amp)
            })
            .collect();
        Ok(State { layout, amps })
    }

    /// Inverse of [`State::adjoin_computed`]: removes `target` after checking
    /// that its value is exactly `g` of the remaining registers.
    pub fn unadjoin_computed<G>(&self, target: &str, g: G) -> Result<State, QsimError>
    where
        G: Fn(&BasisLabel) -> RegValue,
    {
        let idx = self.register_index(target)?;
        let mut names = self.layout.names.clone();
        names.remove(idx);
        let layout = Arc::new(Layout { names });
        let mut amps = BTreeMap::new();
        for (label, &amp) in &self.amps {
            let mut values = label.0.clone();
            let removed = values.remove(idx);
            let rest = BasisLabel(values);
            if g(&rest) != removed {
                return Err(QsimError::UncomputeMismatch);
            }
            if amps.insert(rest, amp).is_some() {
                return Err(QsimError::UncomputeMismatch);
            }
        }
        Ok(State { layout, amps })
    }

    /// Exact Born masses of each value of one register.
    pub fn measurement_distribution(&self, register: &str) -> Result<BTreeMap<RegValue, f64>, QsimError> {
        let idx = self.register_index(register)?;
        let mut masses: BTreeMap<RegValue, f64> = BTreeMap::new();
        for (label, amp) in &self.amps {
            *masses.entry(label.0[idx].clone()).or_insert(0.0) += amp.norm_sqr();
        }
        Ok(masses)
    }

    /// Collapsing measurement of one register in the computational basis.
    /// Returns the sampled outcome and the renormalized post-measurement state.
    pub fn measure_collapse<R: Rng>(&self, register: &str, rng: &mut R) -> Result<(RegValue, State), QsimError> {
        let idx = self.register_index(register)?;
        let masses = self.measurement_distribution(register)?;
        let total: f64 = masses.values().sum();
        let mut draw = rng.random::<f64>() * total;
        let mut outcome = None;
        for (value, mass) in &masses {
            if draw < *mass {
                outcome = Some(value.clone());
                break;
            }
            draw -= mass;
        }
        let outcome = outcome.unwrap_or_else(|| masses.keys().next_back().expect("nonempty").clone());
        let mass = masses[&outcome];
        let scale = 1.0 / mass.sqrt();
        let amps: BTreeMap<BasisLabel, Complex64> = self
            .amps
            .iter()
            .filter(|(label, _)| label.0[idx] == outcome)
            .map(|(label, &amp)| (label.clone(), amp * scale))
            .collect();
        Ok((outcome, State { layout: self.layout.clone(), amps }))
    }

    /// `k` independent draws from the state's Born distribution. The state is
    /// not touched; callers can verify it is structurally identical afterwards.
    pub fn sample_noncollapsing<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<BasisLabel> {
        assert!(k >= 1, "need at least one sample");
        let mut cumulative: Vec<(f64, &BasisLabel)> = Vec::with_capacity(self.amps.len());
        let mut acc = 0.0;
        for (label, amp) in &self.amps {
            acc += amp.norm_sqr();
            cumulative.push((acc, label));
        }
        let total = acc;
        (0..k)
            .map(|_| {
                let draw = rng.random::<f64>() * total;
                let pos = cumulative.partition_point(|(c, _)| *c <= draw);
                cumulative[pos.min(cumulative.len() - 1)].1.clone()
            })
            .collect()
    }

    /// Applies a unitary to one scalar register, independently for each
    /// setting of the other registers. Norm is preserved within tolerance.
    pub fn apply_unitary_on(&self, register: &str, u: &Unitary) -> Result<State, QsimError> {
        let idx = self.register_index(register)?;
        let dim = u.dimension();
        for label in self.amps.keys() {
            match label.0[idx] {
                RegValue::Scalar(v) if v < dim => {}
                RegValue::Scalar(_) => {
                    return Err(QsimError::DomainMismatch { register: register.into(), domain: dim })
                }
                _ => return Err(QsimError::NotScalar(register.into())),
            }
        }
        let amps = match u {
            Unitary::Permutation(map) => {
                Unitary::permutation(map.clone())?;
                self.amps
                    .iter()
                    .map(|(label, &amp)| {
                        let mut values = label.0.clone();
                        let v = values[idx].as_scalar().expect("checked scalar");
                        values[idx] = RegValue::Scalar(map[v as usize]);
                        (BasisLabel(values), amp)
                    })
                    .collect()
            }
            Unitary::Dft { size, inverse } => {
                let m = *size;
                let scale = 1.0 / (m as f64).sqrt();
                let sign = if *inverse { -1.0 } else { 1.0 };
                let roots: Vec<Complex64> =
                    (0..m).map(|k| Complex64::from_polar(1.0, sign * TAU * k as f64 / m as f64)).collect();
                let mut out: BTreeMap<BasisLabel, Complex64> = BTreeMap::new();
                for (rest, group) in self.group_by_rest(idx) {
                    for j in 0..m {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for &(v, amp) in &group {
                            acc += amp * roots[(j * v % m) as usize];
                        }
                        acc *= scale;
                        if acc.norm() > AMP_PRUNE_THRESHOLD {
                            let mut values = rest.clone();
                            values.insert(idx, RegValue::Scalar(j));
                            out.insert(BasisLabel(values), acc);
                        }
                    }
                }
                out
            }
            Unitary::Explicit(matrix) => {
                let d = matrix.len() as u64;
                let mut out: BTreeMap<BasisLabel, Complex64> = BTreeMap::new();
                for (rest, group) in self.group_by_rest(idx) {
                    for j in 0..d {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for &(v, amp) in &group {
                            acc += matrix[j as usize][v as usize] * amp;
                        }
                        if acc.norm() > AMP_PRUNE_THRESHOLD {
                            let mut values = rest.clone();
                            values.insert(idx, RegValue::Scalar(j));
                            out.insert(BasisLabel(values), acc);
                        }
                    }
                }
                out
            }
        };
        let state = State { layout: self.layout.clone(), amps };
        debug_assert!((state.norm_sqr() - 1.0).abs() <= NORM_TOLERANCE, "norm drifted: {}", state.norm_sqr());
        Ok(state)
    }

    /// Groups support labels by their values on every register except `idx`.
    fn group_by_rest(&self, idx: usize) -> BTreeMap<Vec<RegValue>, Vec<(u64, Complex64)>> {
        let mut groups: BTreeMap<Vec<RegValue>, Vec<(u64, Complex64)>> = BTreeMap::new();
        for (label, &amp) in &self.amps {
            let mut rest = label.0.clone();
            let v = rest.remove(idx).as_scalar().expect("checked scalar");
            groups.entry(rest).or_default().push((v, amp));
        }
        groups
    }
}
