//! Prime-field arithmetic, field-size selection, and exact multivariate
//! polynomial fitting over F_q.
//!
//! Everything in this module is integer arithmetic mod q. There is no
//! floating point, so interpolation outcomes are exact and reproducible.

use std::collections::BTreeMap;

use thiserror::Error;

/// An element of F_q, stored reduced into `[0, q)`.
pub type Felt = u64;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("invalid field spec: {0}")]
    InvalidSpec(String),
    #[error("point has arity {got}, expected {expected}")]
    ArityMismatch { expected: usize, got: usize },
}

pub fn add_mod(a: Felt, b: Felt, q: u64) -> Felt {
    (a + b) % q
}

pub fn sub_mod(a: Felt, b: Felt, q: u64) -> Felt {
    (a + q - b % q) % q
}

pub fn mul_mod(a: Felt, b: Felt, q: u64) -> Felt {
    ((a as u128 * b as u128) % q as u128) as u64
}

pub fn pow_mod(base: Felt, mut exp: u64, q: u64) -> Felt {
    let mut acc: Felt = 1 % q;
    let mut base = base % q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Multiplicative inverse in F_q (q prime, a nonzero), via Fermat.
pub fn inv_mod(a: Felt, q: u64) -> Felt {
    debug_assert!(a % q != 0, "inverse of zero");
    pow_mod(a, q - 2, q)
}

/// Deterministic Miller-Rabin, valid for every u64.
pub fn is_prime(x: u64) -> bool {
    if x < 2 {
        return false;
    }
    const SMALL: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for p in SMALL {
        if x == p {
            return true;
        }
        if x % p == 0 {
            return false;
        }
    }
    let mut d = x - 1;
    let mut r = 0u32;
    while d % 2 == 0 {
        d /= 2;
        r += 1;
    }
    'witness: for a in SMALL {
        let mut y = pow_mod(a, d, x);
        if y == 1 || y == x - 1 {
            continue;
        }
        for _ in 1..r {
            y = mul_mod(y, y, x);
            if y == x - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Smallest prime `q` with `q >= max(n + 2, sigma_size + 1, ldt_factor * n)`.
///
/// The `ldt_factor` knob scales the field relative to the query length for
/// line-test headroom; the default factor 1 is validated empirically rather
/// than by any analytic constant.
pub fn choose_field_size(n: usize, sigma_size: u64, ldt_factor: u64) -> u64 {
    debug_assert!(n >= 1 && sigma_size >= 2);
    let n = n as u64;
    let mut q = (n + 2).max(sigma_size + 1).max(ldt_factor * n).max(2);
    while !is_prime(q) {
        q += 1;
    }
    q
}

/// Field and alphabet parameters shared by the whole protocol stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    /// Prime modulus.
    pub q: u64,
    /// Number of point coordinates (query length in bits).
    pub n: usize,
    /// Alphabet cardinality; symbols embed as the field elements `0..sigma_size`.
    pub sigma_size: u64,
}

impl FieldSpec {
    pub fn new(q: u64, n: usize, sigma_size: u64) -> Result<Self, FieldError> {
        if n < 1 {
            return Err(FieldError::InvalidSpec("n must be >= 1".into()));
        }
        if sigma_size < 2 {
            return Err(FieldError::InvalidSpec("sigma_size must be >= 2".into()));
        }
        if !is_prime(q) {
            return Err(FieldError::InvalidSpec(format!("{q} is not prime")));
        }
        if q < n as u64 + 2 {
            return Err(FieldError::InvalidSpec(format!("q = {q} < n + 2 = {}", n + 2)));
        }
        if q <= sigma_size {
            return Err(FieldError::InvalidSpec(format!(
                "q = {q} does not embed the size-{sigma_size} alphabet injectively"
            )));
        }
        Ok(FieldSpec { q, n, sigma_size })
    }

    /// Spec with the smallest admissible prime for the given parameters.
    pub fn with_default_field(n: usize, sigma_size: u64, ldt_factor: u64) -> Result<Self, FieldError> {
        Self::new(choose_field_size(n, sigma_size, ldt_factor), n, sigma_size)
    }
}

/// Exponent tuples `e` with `sum(e) <= degree`, in lexicographic order.
pub fn monomials(arity: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(pos: usize, arity: usize, remaining: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos == arity {
            out.push(cur.clone());
            return;
        }
        for e in 0..=remaining {
            cur[pos] = e;
            rec(pos + 1, arity, remaining - e, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u32; arity];
    rec(0, arity, degree as u32, &mut cur, &mut out);
    out
}

/// A multivariate polynomial over F_q with a total-degree bound.
///
/// Zero coefficients are never stored, so structural equality is equality of
/// polynomials (given matching arity, bound and modulus).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiPoly {
    arity: usize,
    degree_bound: usize,
    modulus: u64,
    coeffs: BTreeMap<Vec<u32>, Felt>,
}

impl MultiPoly {
    pub fn new(arity: usize, degree_bound: usize, modulus: u64, coeffs: BTreeMap<Vec<u32>, Felt>) -> Self {
        let coeffs = coeffs
            .into_iter()
            .map(|(e, c)| (e, c % modulus))
            .filter(|(e, c)| {
                debug_assert!(e.len() == arity);
                debug_assert!(e.iter().sum::<u32>() as usize <= degree_bound);
                *c != 0
            })
            .collect();
        MultiPoly { arity, degree_bound, modulus, coeffs }
    }

    pub fn constant(arity: usize, degree_bound: usize, modulus: u64, value: Felt) -> Self {
        let mut coeffs = BTreeMap::new();
        if value % modulus != 0 {
            coeffs.insert(vec![0u32; arity], value % modulus);
        }
        MultiPoly { arity, degree_bound, modulus, coeffs }
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<u32>, Felt> {
        &self.coeffs
    }

    pub fn evaluate(&self, point: &[Felt]) -> Result<Felt, FieldError> {
        if point.len() != self.arity {
            return Err(FieldError::ArityMismatch { expected: self.arity, got: point.len() });
        }
        let q = self.modulus;
        let mut acc = 0u64;
        for (exps, &c) in &self.coeffs {
            let mut term = c;
            for (i, &e) in exps.iter().enumerate() {
                if e > 0 {
                    term = mul_mod(term, pow_mod(point[i] % q, e as u64, q), q);
                }
            }
            acc = add_mod(acc, term, q);
        }
        Ok(acc)
    }
}

/// Exact evaluation of `p` at `point` (mod q).
pub fn eval_poly(p: &MultiPoly, point: &[Felt]) -> Result<Felt, FieldError> {
    p.evaluate(point)
}

/// Outcome of exact polynomial fitting.
///
/// `NonUnique` (underdetermined on the given points) is deliberately distinct
/// from `Inconsistent` (no polynomial of the given degree fits): the verifier
/// rejects on both, but they are different failures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FitOutcome {
    Unique(MultiPoly),
    Inconsistent,
    NonUnique,
}

pub(crate) enum LinearSolution {
    Unique(Vec<Felt>),
    Inconsistent,
    Underdetermined,
}

/// Gauss-Jordan elimination over F_q on an augmented matrix
/// (`cols` coefficient columns plus one right-hand-side column per row).
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve_exact(mut rows: Vec<Vec<Felt>>, cols: usize, q: u64) -> LinearSolution {
    let n_rows = rows.len();
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut pivot_row = 0usize;
    for col in 0..cols {
        let Some(r) = (pivot_row..n_rows).find(|&r| rows[r][col] != 0) else {
            continue;
        };
        rows.swap(pivot_row, r);
        let inv = inv_mod(rows[pivot_row][col], q);
        for x in rows[pivot_row].iter_mut() {
            *x = mul_mod(*x, inv, q);
        }
        for r2 in 0..n_rows {
            if r2 != pivot_row && rows[r2][col] != 0 {
                let factor = rows[r2][col];
                for c in 0..=cols {
                    let delta = mul_mod(factor, rows[pivot_row][c], q);
                    rows[r2][c] = sub_mod(rows[r2][c], delta, q);
                }
            }
        }
        pivot_cols.push(col);
        pivot_row += 1;
        if pivot_row == n_rows {
            break;
        }
    }
    for row in &rows {
        if row[..cols].iter().all(|&x| x == 0) && row[cols] != 0 {
            return LinearSolution::Inconsistent;
        }
    }
    if pivot_cols.len() < cols {
        return LinearSolution::Underdetermined;
    }
    let mut solution = vec![0u64; cols];
    for (i, &col) in pivot_cols.iter().enumerate() {
        solution[col] = rows[i][cols];
    }
    LinearSolution::Unique(solution)
}

/// Rank of a set of vectors over F_q.
#[allow(clippy::needless_range_loop)]
pub(crate) fn rank_of(mut rows: Vec<Vec<Felt>>, q: u64) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    let mut rank = 0usize;
    for col in 0..cols {
        let Some(r) = (rank..rows.len()).find(|&r| rows[r][col] % q != 0) else {
            continue;
        };
        rows.swap(rank, r);
        let inv = inv_mod(rows[rank][col] % q, q);
        for x in rows[rank].iter_mut() {
            *x = mul_mod(*x % q, inv, q);
        }
        for r2 in 0..rows.len() {
            if r2 != rank && rows[r2][col] % q != 0 {
                let factor = rows[r2][col] % q;
                for c in 0..cols {
                    let delta = mul_mod(factor, rows[rank][c], q);
                    rows[r2][c] = sub_mod(rows[r2][c] % q, delta, q);
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// Fits the unique polynomial over F_q of total degree <= `degree_bound`
/// through the samples, or reports why none/many exist.
pub fn fit_total_degree(
    samples: &[(Vec<Felt>, Felt)],
    arity: usize,
    degree_bound: usize,
    q: u64,
) -> Result<FitOutcome, FieldError> {
    for (point, _) in samples {
        if point.len() != arity {
            return Err(FieldError::ArityMismatch { expected: arity, got: point.len() });
        }
    }
    let mons = monomials(arity, degree_bound);
    let cols = mons.len();
    let rows: Vec<Vec<Felt>> = samples
        .iter()
        .map(|(point, value)| {
            let mut row = Vec::with_capacity(cols + 1);
            for exps in &mons {
                let mut term = 1u64;
                for (i, &e) in exps.iter().enumerate() {
                    if e > 0 {
                        term = mul_mod(term, pow_mod(point[i] % q, e as u64, q), q);
                    }
                }
                row.push(term);
            }
            row.push(value % q);
            row
        })
        .collect();
    Ok(match solve_exact(rows, cols, q) {
        LinearSolution::Unique(sol) => {
            let coeffs = mons.into_iter().zip(sol).filter(|(_, c)| *c != 0).collect();
            FitOutcome::Unique(MultiPoly { arity, degree_bound, modulus: q, coeffs })
        }
        LinearSolution::Inconsistent => FitOutcome::Inconsistent,
        LinearSolution::Underdetermined => FitOutcome::NonUnique,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Trial-division oracle, kept independent of `is_prime`.
    fn is_prime_slow(x: u64) -> bool {
        if x < 2 {
            return false;
        }
        let mut d = 2;
        while d * d <= x {
            if x % d == 0 {
                return false;
            }
            d += 1;
        }
        true
    }

    fn smallest_prime_at_least(bound: u64) -> u64 {
        let mut q = bound.max(2);
        while !is_prime_slow(q) {
            q += 1;
        }
        q
    }

    #[test]
    fn field_size_examples() {
        assert_eq!(choose_field_size(4, 3, 1), 7);
        assert_eq!(choose_field_size(3, 3, 1), 5);
        assert_eq!(choose_field_size(1, 2, 1), 3);
    }

    #[test]
    fn field_size_is_smallest_admissible_prime_up_to_n_32() {
        for n in 1..=32usize {
            for sigma in [2u64, 3, 8] {
                for factor in [1u64, 2, 4] {
                    let q = choose_field_size(n, sigma, factor);
                    assert!(is_prime_slow(q));
                    assert!(q >= n as u64 + 2 && q > sigma && q >= factor * n as u64);
                    let bound = (n as u64 + 2).max(sigma + 1).max(factor * n as u64);
                    assert_eq!(q, smallest_prime_at_least(bound));
                }
            }
        }
    }

    #[test]
    fn miller_rabin_matches_trial_division() {
        for x in 0..2000u64 {
            assert_eq!(is_prime(x), is_prime_slow(x), "mismatch at {x}");
        }
        for x in [1_000_003u64, 1_000_033, 67_280_421_310_721 % 65_536, 2u64.pow(31) - 1] {
            assert_eq!(is_prime(x), is_prime_slow(x));
        }
    }

    #[test]
    fn constant_fit_over_full_grid() {
        let q = 5;
        let mut samples = Vec::new();
        for a in 0..q {
            for b in 0..q {
                for c in 0..q {
                    samples.push((vec![a, b, c], 4u64));
                }
            }
        }
        let outcome = fit_total_degree(&samples, 3, 2, q).unwrap();
        assert_eq!(outcome, FitOutcome::Unique(MultiPoly::constant(3, 2, q, 4)));
    }

    #[test]
    fn univariate_line_fit() {
        let samples = vec![(vec![0], 1), (vec![1], 2), (vec![2], 3)];
        let FitOutcome::Unique(p) = fit_total_degree(&samples, 1, 1, 5).unwrap() else {
            panic!("expected unique fit");
        };
        // z + 1
        assert_eq!(p.coeffs().get(&vec![0u32]), Some(&1));
        assert_eq!(p.coeffs().get(&vec![1u32]), Some(&1));
        assert_eq!(p.evaluate(&[4]).unwrap(), 0);
    }

    #[test]
    fn inconsistent_samples_detected() {
        let samples = vec![(vec![0], 0), (vec![1], 1), (vec![2], 2), (vec![3], 4)];
        // Oracle: no linear polynomial a*z + b over F_5 fits all four samples.
        let mut any_fits = false;
        for a in 0..5u64 {
            for b in 0..5u64 {
                if samples.iter().all(|(p, v)| add_mod(mul_mod(a, p[0], 5), b, 5) == *v) {
                    any_fits = true;
                }
            }
        }
        assert!(!any_fits);
        assert_eq!(fit_total_degree(&samples, 1, 1, 5).unwrap(), FitOutcome::Inconsistent);
    }

    #[test]
    fn underdetermined_is_non_unique() {
        // A single sample cannot pin down a linear polynomial in one variable.
        let samples = vec![(vec![1], 3)];
        assert_eq!(fit_total_degree(&samples, 1, 1, 5).unwrap(), FitOutcome::NonUnique);
    }

    #[test]
    fn arity_mismatch_is_an_error() {
        let samples = vec![(vec![1, 2], 3)];
        assert!(fit_total_degree(&samples, 1, 1, 5).is_err());
        let p = MultiPoly::constant(2, 1, 5, 3);
        assert!(p.evaluate(&[1]).is_err());
    }

    #[test]
    fn fitted_polynomial_round_trips_sample_points() {
        let q = 7;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut samples = Vec::new();
            for a in 0..q {
                for b in 0..q {
                    samples.push((vec![a, b], rng.random_range(0..q)));
                }
            }
            // Whatever the outcome, a unique fit must reproduce every sample.
            if let FitOutcome::Unique(p) = fit_total_degree(&samples, 2, 13, q).unwrap() {
                for (point, value) in &samples {
                    assert_eq!(p.evaluate(point).unwrap(), *value);
                }
            }
        }
    }

    #[test]
    fn uniqueness_on_cube_minus_plane() {
        // Two degree-<=3 trivariate polynomials over F_5 that agree on all of
        // F_5^* x F_5 x F_5 are identical: fitting any polynomial's values on
        // that point set recovers it coefficient-for-coefficient.
        let q = 5u64;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let mons = monomials(3, 3);
            let coeffs: BTreeMap<Vec<u32>, Felt> =
                mons.iter().map(|m| (m.clone(), rng.random_range(0..q))).collect();
            let p = MultiPoly::new(3, 3, q, coeffs);
            let mut samples = Vec::new();
            for t1 in 1..q {
                for t2 in 0..q {
                    for t3 in 0..q {
                        let point = vec![t1, t2, t3];
                        let value = p.evaluate(&point).unwrap();
                        samples.push((point, value));
                    }
                }
            }
            assert_eq!(fit_total_degree(&samples, 3, 3, q).unwrap(), FitOutcome::Unique(p.clone()));

            // And a random different polynomial must disagree somewhere on the set.
            let other = loop {
                let coeffs2: BTreeMap<Vec<u32>, Felt> =
                    monomials(3, 3).into_iter().map(|m| (m, rng.random_range(0..q))).collect();
                let cand = MultiPoly::new(3, 3, q, coeffs2);
                if cand != p {
                    break cand;
                }
            };
            let disagrees = samples.iter().any(|(point, value)| other.evaluate(point).unwrap() != *value);
            assert!(disagrees);
        }
    }

    proptest! {
        #[test]
        fn prop_fit_round_trip(seed in 0u64..1000) {
            let q = 5u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let arity = rng.random_range(1..=3usize);
            let degree = rng.random_range(0..=2usize);
            let coeffs: BTreeMap<Vec<u32>, Felt> = monomials(arity, degree)
                .into_iter()
                .map(|m| (m, rng.random_range(0..q)))
                .collect();
            let p = MultiPoly::new(arity, degree, q, coeffs);
            let mut samples = Vec::new();
            let total = q.pow(arity as u32);
            for idx in 0..total {
                let mut v = idx;
                let mut point = vec![0u64; arity];
                for c in (0..arity).rev() {
                    point[c] = v % q;
                    v /= q;
                }
                let value = p.evaluate(&point).unwrap();
                samples.push((point, value));
            }
            prop_assert_eq!(fit_total_degree(&samples, arity, degree, q).unwrap(), FitOutcome::Unique(p));
        }
    }
}
