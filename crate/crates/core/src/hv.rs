//! Hidden-variable dynamics over the simulator's states.
//!
//! The implemented theory is the block-product rule: given a unitary layer,
//! the variable's next position is drawn from the evolved state's Born
//! distribution restricted to the block of the unitary containing its current
//! position. That rule satisfies the marginalization and indifference axioms
//! exactly and samples in time proportional to the support, without ever
//! materializing a transition matrix. A dense reference construction exists
//! for axiom checks at small dimension.
//!
//! The same machinery powers the juggle subroutines: hash the items of a
//! uniform superposition into a small range, mix each hash block with forward
//! and inverse Fourier transforms, and read off which items the variable
//! visits between round trips.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::is_prime;
use crate::qsim::{BasisLabel, Layout, QsimError, RegValue, State, Unitary};

/// Entries of an explicit unitary below this magnitude do not connect blocks.
pub const BLOCK_EPSILON: f64 = 1e-12;
/// Blocks with less evolved mass than this fall back to a uniform row.
pub const ZERO_MASS_THRESHOLD: f64 = 1e-12;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum HvError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("dimension {0} too large for a dense reference (max 64)")]
    DimensionTooLarge(u64),
    #[error("state and unitary dimensions disagree")]
    DimensionMismatch,
    #[error("position is not in the state's support")]
    PositionOutsideSupport,
    #[error("set size estimate must be at least 3")]
    SetSizeTooSmall,
    #[error("no prime in the hash range window")]
    NoPrimeInRange,
    #[error("item register values must fit in {item_bits} bits")]
    ItemOutOfRange { item_bits: u32 },
    #[error("item bit-length {0} too large to mix (max 20)")]
    ItemBitsTooLarge(u32),
    #[error("support of size {support} exceeds the declared bound {bound}")]
    SupportExceeded { support: usize, bound: usize },
}

/// Disjoint blocks of a unitary: connected components of the graph with an
/// edge wherever the matrix couples two basis values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Vec<u64>>,
    block_of: Vec<usize>,
}

impl BlockPartition {
    pub fn blocks(&self) -> &[Vec<u64>] {
        &self.blocks
    }

    pub fn block_index_of(&self, value: u64) -> usize {
        self.block_of[value as usize]
    }

    pub fn block_of(&self, value: u64) -> &[u64] {
        &self.blocks[self.block_of[value as usize]]
    }

    pub fn same_block(&self, a: u64, b: u64) -> bool {
        self.block_of[a as usize] == self.block_of[b as usize]
    }
}

/// Blocks of `u`. Permutations split into orbits, a DFT is one block, and an
/// explicit matrix uses the `epsilon` coupling threshold.
pub fn block_partition(u: &Unitary, epsilon: f64) -> BlockPartition {
    let d = u.dimension() as usize;
    let mut parent: Vec<usize> = (0..d).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let union = |parent: &mut [usize], a: usize, b: usize| {
        let (ra, rb) = (find(parent, a), find(parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    };
    match u {
        Unitary::Permutation(map) => {
            for (from, &to) in map.iter().enumerate() {
                union(&mut parent, from, to as usize);
            }
        }
        Unitary::Dft { .. } => {
            for v in 1..d {
                union(&mut parent, 0, v);
            }
        }
        Unitary::Explicit(matrix) => {
            for (i, row) in matrix.iter().enumerate() {
                for (j, entry) in row.iter().enumerate() {
                    if entry.norm() > epsilon {
                        union(&mut parent, i, j);
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<u64>> = BTreeMap::new();
    for v in 0..d {
        groups.entry(find(&mut parent, v)).or_default().push(v as u64);
    }
    let blocks: Vec<Vec<u64>> = groups.into_values().collect();
    let mut block_of = vec![0usize; d];
    for (i, block) in blocks.iter().enumerate() {
        for &v in block {
            block_of[v as usize] = i;
        }
    }
    BlockPartition { blocks, block_of }
}

/// A singly stochastic matrix (rows sum to 1): entry `(i, j)` is the
/// probability of moving from position `i` to position `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    rows: Vec<Vec<f64>>,
}

impl StochasticMatrix {
    pub fn dimension(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }
}

fn dense_state_vector(state: &State, d: usize) -> Result<Vec<Complex64>, HvError> {
    if state.layout().len() != 1 {
        return Err(HvError::DimensionMismatch);
    }
    let mut psi = vec![Complex64::new(0.0, 0.0); d];
    for (label, &amp) in state.amplitudes() {
        let Some(v) = label.value(0).as_scalar() else {
            return Err(HvError::DimensionMismatch);
        };
        if v as usize >= d {
            return Err(HvError::DimensionMismatch);
        }
        psi[v as usize] = amp;
    }
    Ok(psi)
}

/// The block-product transition matrix, materialized densely for checks at
/// small dimension: within each block of `u`, every row equals the evolved
/// state's Born distribution renormalized to the block; entries across
/// blocks are zero; blocks with no evolved mass get uniform rows.
pub fn dense_stochastic_reference(state: &State, u: &Unitary, epsilon: f64) -> Result<StochasticMatrix, HvError> {
    let d = u.dimension();
    if d > 64 {
        return Err(HvError::DimensionTooLarge(d));
    }
    let d = d as usize;
    let psi = dense_state_vector(state, d)?;
    let matrix = u.as_dense();
    let mut after = vec![Complex64::new(0.0, 0.0); d];
    for (j, row) in matrix.iter().enumerate() {
        for (v, &amp) in psi.iter().enumerate() {
            after[j] += row[v] * amp;
        }
    }
    let partition = block_partition(u, epsilon);
    let mut rows = vec![vec![0.0f64; d]; d];
    for block in partition.blocks() {
        let mass: f64 = block.iter().map(|&j| after[j as usize].norm_sqr()).sum();
        if mass < ZERO_MASS_THRESHOLD {
            let uniform = 1.0 / block.len() as f64;
            for &i in block {
                for &j in block {
                    rows[i as usize][j as usize] = uniform;
                }
            }
        } else {
            for &i in block {
                for &j in block {
                    rows[i as usize][j as usize] = after[j as usize].norm_sqr() / mass;
                }
            }
        }
    }
    Ok(StochasticMatrix { rows })
}

/// Outcome of one hidden-variable step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub next: BasisLabel,
    /// True when the target block carried no evolved mass and the step fell
    /// back to a uniform draw within the block.
    pub uniform_fallback: bool,
}

/// Advances the hidden variable across one unitary layer applied to
/// `register`, sampling from the block-product rule without materializing
/// the full transition matrix.
pub fn block_product_transition<R: Rng>(
    state: &State,
    register: &str,
    u: &Unitary,
    pos: &BasisLabel,
    rng: &mut R,
) -> Result<Transition, HvError> {
    let idx = state.layout().index_of(register).ok_or(QsimError::UnknownRegister(register.into()))?;
    if state.amplitude(pos).norm_sqr() == 0.0 {
        return Err(HvError::PositionOutsideSupport);
    }
    let Some(pos_value) = pos.value(idx).as_scalar() else {
        return Err(HvError::DimensionMismatch);
    };
    let partition = block_partition(u, BLOCK_EPSILON);
    let block = partition.block_of(pos_value);

    // Amplitudes of the evolved state inside the block, with the other
    // registers pinned to the position's values: only in-block inputs
    // contribute because the unitary never couples across blocks.
    let in_block: Vec<(u64, Complex64)> = state
        .amplitudes()
        .iter()
        .filter_map(|(label, &amp)| {
            let v = label.value(idx).as_scalar()?;
            let mut rest = label.values().to_vec();
            rest.remove(idx);
            let mut pos_rest = pos.values().to_vec();
            pos_rest.remove(idx);
            (rest == pos_rest && partition.same_block(v, pos_value)).then_some((v, amp))
        })
        .collect();
    let weights: Vec<(u64, f64)> = match u {
        Unitary::Permutation(map) => in_block.iter().map(|&(v, amp)| (map[v as usize], amp.norm_sqr())).collect(),
        Unitary::Dft { size, inverse } => {
            let m = *size;
            let scale = 1.0 / m as f64;
            let sign = if *inverse { -1.0 } else { 1.0 };
            block
                .iter()
                .map(|&j| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for &(v, amp) in &in_block {
                        acc += amp * Complex64::from_polar(1.0, sign * TAU * ((j * v % m) as f64) / m as f64);
                    }
                    (j, acc.norm_sqr() * scale)
                })
                .collect()
        }
        Unitary::Explicit(matrix) => block
            .iter()
            .map(|&j| {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(v, amp) in &in_block {
                    acc += matrix[j as usize][v as usize] * amp;
                }
                (j, acc.norm_sqr())
            })
            .collect(),
    };
    let mass: f64 = weights.iter().map(|(_, w)| w).sum();
    let (next_value, uniform_fallback) = if mass < ZERO_MASS_THRESHOLD {
        let pick = block[rng.random_range(0..block.len())];
        (pick, true)
    } else {
        let mut draw = rng.random::<f64>() * mass;
        let mut picked = weights.last().expect("block nonempty").0;
        for &(j, w) in &weights {
            if draw < w {
                picked = j;
                break;
            }
            draw -= w;
        }
        (picked, false)
    };
    let mut values = pos.values().to_vec();
    values[idx] = RegValue::Scalar(next_value);
    Ok(Transition { next: BasisLabel::new(values), uniform_fallback })
}

/// One unitary layer of a circuit: which register it acts on and what it does.
#[derive(Debug, Clone)]
pub struct Layer {
    pub register: String,
    pub op: Unitary,
}

/// A hidden-variable history: the variable's position after each layer,
/// starting with its position in the initial state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    pub positions: Vec<BasisLabel>,
}

impl History {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn final_position(&self) -> &BasisLabel {
        self.positions.last().expect("history has the initial position")
    }
}

/// Samples one full history of the hidden variable through a layered circuit.
/// The initial position is Born-distributed; each layer advances both the
/// state (exactly) and the variable (stochastically).
pub fn history_sample<R: Rng>(initial: &State, layers: &[Layer], rng: &mut R) -> Result<History, HvError> {
    let mut positions = Vec::with_capacity(layers.len() + 1);
    let mut pos = initial.sample_noncollapsing(1, rng).remove(0);
    positions.push(pos.clone());
    let mut state = initial.clone();
    for layer in layers {
        let transition = block_product_transition(&state, &layer.register, &layer.op, &pos, rng)?;
        pos = transition.next;
        positions.push(pos.clone());
        state = state.apply_unitary_on(&layer.register, &layer.op)?;
    }
    Ok(History { positions })
}

/// A member of the modular pairwise-independent family
/// `h(x) = ((a x + b) mod P) mod range`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamilyMember {
    pub multiplier: u64,
    pub offset: u64,
    pub modulus: u64,
    pub range: u64,
}

impl HashFamilyMember {
    pub fn eval(&self, x: u64) -> u64 {
        let p = self.modulus as u128;
        (((self.multiplier as u128 * x as u128 + self.offset as u128) % p) as u64) % self.range
    }
}

/// The family for a fixed item length and set-size estimate: the range is the
/// smallest prime between `2s - 4` and `3s - 3` (so a fixed item collides
/// with exactly one other with constant probability), and the modulus is a
/// prime far above `2^item_bits * range` to keep the fold-down bias tiny.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseHashFamily {
    pub item_bits: u32,
    pub range: u64,
    pub modulus: u64,
}

impl PairwiseHashFamily {
    pub fn new(item_bits: u32, set_size_estimate: u64) -> Result<Self, HvError> {
        if set_size_estimate < 3 {
            return Err(HvError::SetSizeTooSmall);
        }
        let s = set_size_estimate;
        let lo = (2 * s).saturating_sub(4).max(2);
        let hi = 3 * s - 3;
        let range = (lo..=hi).find(|&m| is_prime(m)).ok_or(HvError::NoPrimeInRange)?;
        let mut modulus = (1u64 << (item_bits + 16)) * range + 1;
        while !is_prime(modulus) {
            modulus += 1;
        }
        Ok(PairwiseHashFamily { item_bits, range, modulus })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> HashFamilyMember {
        HashFamilyMember {
            multiplier: rng.random_range(1..self.modulus),
            offset: rng.random_range(0..self.modulus),
            modulus: self.modulus,
            range: self.range,
        }
    }
}

/// Draws a fresh hash for `item_bits`-bit items and a set of roughly
/// `set_size_estimate` elements.
pub fn draw_hash<R: Rng>(item_bits: u32, set_size_estimate: u64, rng: &mut R) -> Result<HashFamilyMember, HvError> {
    Ok(PairwiseHashFamily::new(item_bits, set_size_estimate)?.draw(rng))
}

/// Sizing for the juggle subroutines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JuggleParams {
    /// Items live in `0..2^item_bits`; the mixing DFT has size `2^item_bits`.
    pub item_bits: u32,
    /// Declared bound on the support size; also sizes the hash range.
    pub support_bound: usize,
    /// Fourier round trips per hash.
    pub inner_reps: usize,
    /// Fresh hashes drawn over the whole run.
    pub outer_reps: usize,
}

impl JuggleParams {
    /// Desk-scale defaults: 8 round trips per hash and a coupon-collector
    /// number of hashes. Visit rates for these defaults are measured, not
    /// derived from the asymptotic repetition counts.
    pub fn defaults(item_bits: u32, support_bound: usize) -> Self {
        let s = support_bound.max(1) as f64;
        let outer_reps = (5.0 * s * (s + 1.0).ln()).ceil() as usize;
        JuggleParams { item_bits, support_bound, inner_reps: 8, outer_reps: outer_reps.max(8) }
    }

    /// The conservative inner count `2 * item_bits^2` from the asymptotic
    /// analysis, for fidelity experiments.
    pub fn with_faithful_inner(mut self) -> Self {
        self.inner_reps = 2 * (self.item_bits as usize).pow(2);
        self
    }
}

/// Core juggle loop over raw `(item, amplitude)` pairs.
///
/// Per outer repetition: draw a fresh hash, conceptually adjoin `h(item)`,
/// run `inner_reps` forward/inverse DFT round trips on the item register, and
/// uncompute the hash. The variable's hash value never changes inside a
/// repetition (the transforms act only on the item register), so each
/// round trip re-samples the variable within its hash block: forward by the
/// Fourier column superposition of the block, inverse by the block's own
/// amplitudes. Returns every item value the variable occupied at a point
/// where the underlying state was back to the original superposition.
///
/// The declared `support_bound` sizes the hash range only; the loop itself
/// tolerates any encodable support (a cheating prover can exceed the honest
/// bound, and the physics keeps working with degraded mixing).
pub fn juggle_visited<R: Rng>(
    items: &[(u64, Complex64)],
    params: &JuggleParams,
    rng: &mut R,
) -> Result<BTreeSet<u64>, HvError> {
    if params.item_bits > 20 {
        return Err(HvError::ItemBitsTooLarge(params.item_bits));
    }
    let m = 1u64 << params.item_bits;
    if items.iter().any(|&(v, _)| v >= m) {
        return Err(HvError::ItemOutOfRange { item_bits: params.item_bits });
    }
    assert!(!items.is_empty(), "juggle needs a nonempty support");
    let family = PairwiseHashFamily::new(params.item_bits, (params.support_bound as u64).max(3))?;
    let roots: Vec<Complex64> = (0..m).map(|k| Complex64::from_polar(1.0, TAU * k as f64 / m as f64)).collect();

    let total_mass: f64 = items.iter().map(|(_, a)| a.norm_sqr()).sum();
    let born = |rng: &mut R| {
        let mut draw = rng.random::<f64>() * total_mass;
        let mut picked = items.last().expect("nonempty").0;
        for &(v, a) in items {
            let w = a.norm_sqr();
            if draw < w {
                picked = v;
                break;
            }
            draw -= w;
        }
        picked
    };

    let mut pos = born(rng);
    let mut visited = BTreeSet::new();
    visited.insert(pos);
    for _ in 0..params.outer_reps {
        let h = family.draw(rng);
        let my_hash = h.eval(pos);
        let group: Vec<(u64, Complex64)> = items.iter().copied().filter(|&(v, _)| h.eval(v) == my_hash).collect();
        let group_mass: f64 = group.iter().map(|(_, a)| a.norm_sqr()).sum();
        for _ in 0..params.inner_reps {
            // Forward DFT: the variable lands on a Fourier index of its hash
            // block. The landing index is part of the physical history but
            // carries no information the next step uses, because the inverse
            // transform's target distribution is block-determined.
            let _fourier_pos = if group.len() == 1 {
                // A one-item block spreads uniformly over all indices.
                rng.random_range(0..m)
            } else {
                let mut weights = Vec::with_capacity(m as usize);
                let mut acc_total = 0.0;
                for j in 0..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for &(v, a) in &group {
                        acc += a * roots[(j * v % m) as usize];
                    }
                    let w = acc.norm_sqr();
                    acc_total += w;
                    weights.push(w);
                }
                let mut draw = rng.random::<f64>() * acc_total;
                let mut picked = m - 1;
                for (j, &w) in weights.iter().enumerate() {
                    if draw < w {
                        picked = j as u64;
                        break;
                    }
                    draw -= w;
                }
                picked
            };
            // Inverse DFT: the state returns to the hashed superposition, so
            // the variable re-samples within its block from the original
            // amplitudes, forgetting where it was.
            let mut draw = rng.random::<f64>() * group_mass;
            let mut picked = group.last().expect("block contains the position").0;
            for &(v, a) in &group {
                let w = a.norm_sqr();
                if draw < w {
                    picked = v;
                    break;
                }
                draw -= w;
            }
            pos = picked;
            visited.insert(pos);
        }
        // Uncomputing the hash moves the variable deterministically; the item
        // value is unchanged.
    }
    Ok(visited)
}

/// The generalized juggle subroutine on a single-register state uniformly
/// supported on at most `support_bound` items: returns the set of visited
/// item labels. The underlying state is a value and is never modified.
pub fn generalized_juggle<R: Rng>(
    state: &State,
    params: &JuggleParams,
    rng: &mut R,
) -> Result<BTreeSet<BasisLabel>, HvError> {
    if state.layout().len() != 1 {
        return Err(HvError::DimensionMismatch);
    }
    if state.support_len() > params.support_bound {
        return Err(HvError::SupportExceeded { support: state.support_len(), bound: params.support_bound });
    }
    let items: Vec<(u64, Complex64)> = state
        .amplitudes()
        .iter()
        .map(|(label, &amp)| label.value(0).as_scalar().ok_or(HvError::DimensionMismatch).map(|v| (v, amp)))
        .collect::<Result<_, _>>()?;
    let visited = juggle_visited(&items, params, rng)?;
    Ok(visited.into_iter().map(|v| BasisLabel::new(vec![RegValue::Scalar(v)])).collect())
}

/// One random-instance axiom check for the dense reference theory.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomRecord {
    pub instance: usize,
    pub dimension: usize,
    pub kind: String,
    /// `max_j |sum_i S_ij rho_ii - (U rho U^dagger)_jj|`.
    pub marginalization_residual: f64,
    /// Transition entries across blocks of the unitary are exactly zero.
    pub indifference_ok: bool,
    /// `max_i |sum_j S_ij - 1|`.
    pub max_row_sum_error: f64,
}

/// Gram-Schmidt orthonormalization of a random complex Gaussian matrix.
pub fn random_unitary<R: Rng>(d: usize, rng: &mut R) -> Vec<Vec<Complex64>> {
    let gaussian = |rng: &mut R| {
        // Box-Muller.
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    };
    let mut rows: Vec<Vec<Complex64>> =
        (0..d).map(|_| (0..d).map(|_| Complex64::new(gaussian(rng), gaussian(rng))).collect()).collect();
    gram_schmidt(&mut rows);
    rows
}

#[allow(clippy::needless_range_loop)] // rows i and j are read and written simultaneously
pub(crate) fn gram_schmidt(rows: &mut [Vec<Complex64>]) {
    let d = rows.len();
    for i in 0..d {
        for j in 0..i {
            let proj: Complex64 = (0..d).map(|k| rows[j][k].conj() * rows[i][k]).sum();
            for k in 0..d {
                let delta = proj * rows[j][k];
                rows[i][k] -= delta;
            }
        }
        let norm: f64 = rows[i].iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        for k in 0..d {
            rows[i][k] /= norm;
        }
    }
}

/// A random single-register pure state of dimension `d` with full support.
pub fn random_state<R: Rng>(d: usize, rng: &mut R) -> State {
    let amps = (0..d as u64).map(|v| {
        let re = 0.15 + rng.random::<f64>();
        let im = rng.random::<f64>() - 0.5;
        (BasisLabel::new(vec![RegValue::Scalar(v)]), Complex64::new(re, im))
    });
    State::from_amplitudes(Layout::new(["v"]), amps).expect("nonempty support")
}

fn random_instance_unitary<R: Rng>(d: usize, kind: usize, rng: &mut R) -> (String, Unitary) {
    match kind {
        0 => ("dense".into(), Unitary::Explicit(random_unitary(d, rng))),
        1 => {
            let mut map: Vec<u64> = (0..d as u64).collect();
            for i in (1..d).rev() {
                map.swap(i, rng.random_range(0..=i));
            }
            ("permutation".into(), Unitary::Permutation(map))
        }
        2 => ("dft".into(), Unitary::dft(d as u64)),
        _ => {
            // Block-diagonal: two dense blocks, to exercise indifference.
            let d1 = 1 + rng.random_range(0..d - 1);
            let b1 = random_unitary(d1, rng);
            let b2 = random_unitary(d - d1, rng);
            let mut matrix = vec![vec![Complex64::new(0.0, 0.0); d]; d];
            for i in 0..d1 {
                matrix[i][..d1].copy_from_slice(&b1[i]);
            }
            for i in 0..d - d1 {
                for j in 0..d - d1 {
                    matrix[d1 + i][d1 + j] = b2[i][j];
                }
            }
            ("block-diagonal".into(), Unitary::Explicit(matrix))
        }
    }
}

/// Runs the marginalization / indifference / row-sum checks on random
/// instances of dimension up to `max_dim`.
pub fn run_axiom_suite(instances: usize, max_dim: usize, seed: u64) -> Vec<AxiomRecord> {
    let mut records = Vec::with_capacity(instances);
    for instance in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(instance as u64 + 1);
        let d = rng.random_range(2..=max_dim.max(2));
        let kind = rng.random_range(0..4usize);
        let (kind_name, u) = random_instance_unitary(d, kind, &mut rng);
        let state = random_state(d, &mut rng);
        let s = dense_stochastic_reference(&state, &u, BLOCK_EPSILON).expect("dims in range");

        let psi = dense_state_vector(&state, d).expect("single register");
        let rho: Vec<f64> = psi.iter().map(|a| a.norm_sqr()).collect();
        let dense = u.as_dense();
        let mut after = vec![Complex64::new(0.0, 0.0); d];
        for (j, row) in dense.iter().enumerate() {
            for (v, &amp) in psi.iter().enumerate() {
                after[j] += row[v] * amp;
            }
        }
        let marginalization_residual = (0..d)
            .map(|j| {
                let pushed: f64 = (0..d).map(|i| s.entry(i, j) * rho[i]).sum();
                (pushed - after[j].norm_sqr()).abs()
            })
            .fold(0.0, f64::max);
        let partition = block_partition(&u, BLOCK_EPSILON);
        let mut indifference_ok = true;
        for i in 0..d as u64 {
            for j in 0..d as u64 {
                if !partition.same_block(i, j) && s.entry(i as usize, j as usize) != 0.0 {
                    indifference_ok = false;
                }
            }
        }
        let max_row_sum_error = (0..d)
            .map(|i| (s.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max);
        records.push(AxiomRecord {
            instance,
            dimension: d,
            kind: kind_name,
            marginalization_residual,
            indifference_ok,
            max_row_sum_error,
        });
    }
    records
}
