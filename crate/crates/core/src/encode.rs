//! Proof tables over the Boolean cube, their multilinear extensions over F_q,
//! and the lines-point low-degree tester.

use rand::{Rng, RngExt};
use thiserror::Error;

use crate::affine::Point;
use crate::field::{self, Felt, FieldSpec, FitOutcome};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("table must have 2^n entries for n in 1..=16, got n = {0}")]
    BadTableSize(usize),
    #[error("symbol {symbol} out of range for alphabet of size {sigma_size}")]
    SymbolOutOfRange { symbol: u8, sigma_size: u64 },
    #[error("table is over {table_n} bits but the field spec expects {spec_n}")]
    LengthMismatch { table_n: usize, spec_n: usize },
    #[error("point has arity {got}, expected {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("proof table parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A total function from `{0,1}^n` to symbol indices.
///
/// Entries are indexed by the big-endian integer value of the bitstring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofTable {
    n: usize,
    entries: Vec<u8>,
}

impl ProofTable {
    pub fn new(n: usize, entries: Vec<u8>) -> Result<Self, EncodeError> {
        if n == 0 || n > 16 || entries.len() != 1 << n {
            return Err(EncodeError::BadTableSize(n));
        }
        Ok(ProofTable { n, entries })
    }

    pub fn constant(n: usize, symbol: u8) -> Result<Self, EncodeError> {
        Self::new(n, vec![symbol; 1 << n])
    }

    pub fn random<R: Rng>(n: usize, sigma_size: u64, rng: &mut R) -> Result<Self, EncodeError> {
        let entries = (0..1usize << n).map(|_| rng.random_range(0..sigma_size) as u8).collect();
        Self::new(n, entries)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn value_at_index(&self, index: usize) -> u8 {
        self.entries[index]
    }

    pub fn set_index(&mut self, index: usize, symbol: u8) {
        self.entries[index] = symbol;
    }

    /// One line per Boolean point: `<bitstring> <symbol-index>`, big-endian
    /// bitstrings in increasing order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (idx, symbol) in self.entries.iter().enumerate() {
            for bit in (0..self.n).rev() {
                out.push(if idx >> bit & 1 == 1 { '1' } else { '0' });
            }
            out.push(' ');
            out.push_str(&symbol.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, EncodeError> {
        let mut n: Option<usize> = None;
        let mut entries: Vec<Option<u8>> = Vec::new();
        for (line_idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: &str| EncodeError::Parse { line: line_idx + 1, message: message.into() };
            let mut parts = line.split_whitespace();
            let bits = parts.next().ok_or_else(|| err("missing bitstring"))?;
            let value = parts.next().ok_or_else(|| err("missing symbol index"))?;
            if parts.next().is_some() {
                return Err(err("trailing tokens"));
            }
            let this_n = bits.len();
            match n {
                None => {
                    if this_n == 0 || this_n > 16 {
                        return Err(err("bitstring length must be 1..=16"));
                    }
                    n = Some(this_n);
                    entries = vec![None; 1 << this_n];
                }
                Some(expect) if expect != this_n => return Err(err("inconsistent bitstring length")),
                Some(_) => {}
            }
            let mut index = 0usize;
            for ch in bits.chars() {
                index = index << 1
                    | match ch {
                        '0' => 0,
                        '1' => 1,
                        _ => return Err(err("bitstring must be 0/1")),
                    };
            }
            let symbol: u8 = value.parse().map_err(|_| err("bad symbol index"))?;
            if entries[index].replace(symbol).is_some() {
                return Err(err("duplicate point"));
            }
        }
        let n = n.ok_or(EncodeError::Parse { line: 0, message: "empty table".into() })?;
        let entries = entries
            .into_iter()
            .enumerate()
            .map(|(idx, e)| e.ok_or(EncodeError::Parse { line: 0, message: format!("point index {idx} missing") }))
            .collect::<Result<Vec<u8>, _>>()?;
        ProofTable::new(n, entries)
    }
}

/// Symbols embed as the field elements `0..sigma_size`.
pub fn embed_symbol(symbol: u8) -> Felt {
    symbol as Felt
}

/// Inverse of the embedding; `None` when the value is outside the alphabet.
pub fn unembed_value(spec: &FieldSpec, value: Felt) -> Option<u8> {
    (value < spec.sigma_size).then_some(value as u8)
}

/// Evaluator for the unique multilinear extension of an embedded proof table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtensionOracle {
    spec: FieldSpec,
    table: ProofTable,
}

impl ExtensionOracle {
    pub fn new(spec: FieldSpec, table: ProofTable) -> Result<Self, EncodeError> {
        if table.n != spec.n {
            return Err(EncodeError::LengthMismatch { table_n: table.n, spec_n: spec.n });
        }
        if let Some(&symbol) = table.entries.iter().find(|&&s| s as u64 >= spec.sigma_size) {
            return Err(EncodeError::SymbolOutOfRange { symbol, sigma_size: spec.sigma_size });
        }
        Ok(ExtensionOracle { spec, table })
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn table(&self) -> &ProofTable {
        &self.table
    }

    /// Evaluates the extension at `z` by folding one coordinate at a time:
    /// each fold replaces the pair `(f0, f1)` over the leading remaining bit
    /// with `f0 (1 - z_i) + f1 z_i`, for a total cost of O(2^n).
    pub fn evaluate(&self, z: &Point) -> Result<Felt, EncodeError> {
        let n = self.spec.n;
        let q = self.spec.q;
        if z.dim() != n {
            return Err(EncodeError::ArityMismatch { expected: n, got: z.dim() });
        }
        let mut cur: Vec<Felt> = self.table.entries.iter().map(|&s| embed_symbol(s)).collect();
        for (i, &zi) in z.coords().iter().enumerate() {
            let zi = zi % q;
            let one_minus = field::sub_mod(1, zi, q);
            let half = 1usize << (n - 1 - i);
            for j in 0..half {
                cur[j] = field::add_mod(
                    field::mul_mod(cur[j], one_minus, q),
                    field::mul_mod(cur[j + half], zi, q),
                    q,
                );
            }
            cur.truncate(half);
        }
        Ok(cur[0])
    }
}

/// The multilinear extension of the oracle's table, evaluated at `z`.
pub fn multilinear_extend(oracle: &ExtensionOracle, z: &Point) -> Result<Felt, EncodeError> {
    oracle.evaluate(z)
}

/// How the line tester reads back a fitted line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineTestMode {
    /// Check every point of the line against the fitted polynomial. Strictly
    /// stronger than sampling a single point; the default.
    FullLine,
    /// Check one uniformly random point of the line.
    SampledPoint,
}

fn random_point<R: Rng>(q: u64, n: usize, rng: &mut R) -> Point {
    Point::new((0..n).map(|_| rng.random_range(0..q)).collect())
}

/// Lines-point low-degree tester.
///
/// Each trial draws a uniformly random affine line through two distinct
/// random points, reads `f` on all q points of the line, fits a univariate
/// polynomial of degree <= `degree` through the first `degree + 1` of them,
/// and counts a failure when the read-back (per `mode`) disagrees. Returns
/// the empirical failure rate. Degenerate draws with coincident endpoints are
/// resampled and never counted.
pub fn line_test<F, R>(
    f: F,
    spec: &FieldSpec,
    degree: usize,
    trials: usize,
    mode: LineTestMode,
    rng: &mut R,
) -> f64
where
    F: Fn(&Point) -> Felt,
    R: Rng,
{
    assert!(trials >= 1, "line_test needs at least one trial");
    let q = spec.q;
    assert!(q as usize > degree + 1, "need q > degree + 1 to have check points");
    let n = spec.n;
    let mut failures = 0usize;
    for _ in 0..trials {
        let (a, b) = loop {
            let a = random_point(q, n, rng);
            let b = random_point(q, n, rng);
            if a != b {
                break (a, b);
            }
        };
        let dir: Vec<Felt> = a
            .coords()
            .iter()
            .zip(b.coords())
            .map(|(&x, &y)| field::sub_mod(y, x, q))
            .collect();
        let values: Vec<Felt> = (0..q)
            .map(|t| {
                let coords = a
                    .coords()
                    .iter()
                    .zip(&dir)
                    .map(|(&x, &d)| field::add_mod(x, field::mul_mod(d, t, q), q))
                    .collect();
                f(&Point::new(coords))
            })
            .collect();
        let samples: Vec<(Vec<Felt>, Felt)> =
            (0..=degree as u64).map(|t| (vec![t], values[t as usize])).collect();
        let FitOutcome::Unique(g) = field::fit_total_degree(&samples, 1, degree, q).expect("univariate samples")
        else {
            unreachable!("degree + 1 distinct points determine a unique univariate fit");
        };
        let disagrees_at = |t: u64| g.evaluate(&[t]).expect("arity 1") != values[t as usize];
        let failed = match mode {
            LineTestMode::FullLine => (degree as u64 + 1..q).any(disagrees_at),
            LineTestMode::SampledPoint => disagrees_at(rng.random_range(0..q)),
        };
        if failed {
            failures += 1;
        }
    }
    failures as f64 / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::all_points;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(q: u64, n: usize, sigma: u64) -> FieldSpec {
        FieldSpec::new(q, n, sigma).unwrap()
    }

    #[test]
    fn extension_agrees_on_boolean_cube() {
        let spec = spec(7, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let table = ProofTable::random(3, 3, &mut rng).unwrap();
        let oracle = ExtensionOracle::new(spec, table.clone()).unwrap();
        for idx in 0..8usize {
            let z = Point::new((0..3).rev().map(|b| (idx >> b & 1) as u64).collect());
            assert_eq!(oracle.evaluate(&z).unwrap(), embed_symbol(table.value_at_index(idx)));
        }
    }

    #[test]
    fn extension_single_bit_example() {
        // n = 1 over F_5 with table 0 -> 2, 1 -> 3: at z = 4 the extension is
        // 2 * (1 - 4) + 3 * 4 = 6 = 1 (mod 5).
        let spec = spec(5, 1, 4);
        let table = ProofTable::new(1, vec![2, 3]).unwrap();
        let oracle = ExtensionOracle::new(spec, table).unwrap();
        assert_eq!(oracle.evaluate(&Point::new(vec![4])).unwrap(), 1);
    }

    #[test]
    fn constant_table_extends_to_constant() {
        let spec = spec(7, 3, 3);
        let oracle = ExtensionOracle::new(spec, ProofTable::constant(3, 2).unwrap()).unwrap();
        for z in all_points(7, 3) {
            assert_eq!(oracle.evaluate(&z).unwrap(), 2);
        }
    }

    #[test]
    fn extension_is_affine_in_each_coordinate() {
        let spec = spec(7, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let table = ProofTable::random(4, 3, &mut rng).unwrap();
        let oracle = ExtensionOracle::new(spec, table).unwrap();
        for _ in 0..50 {
            let base: Vec<u64> = (0..4).map(|_| rng.random_range(0..7)).collect();
            let coord = rng.random_range(0..4usize);
            let at = |v: u64| {
                let mut c = base.clone();
                c[coord] = v;
                oracle.evaluate(&Point::new(c)).unwrap()
            };
            // Per-variable degree <= 1: consecutive differences are constant.
            let d0 = field::sub_mod(at(1), at(0), 7);
            let d1 = field::sub_mod(at(2), at(1), 7);
            assert_eq!(d0, d1);
        }
    }

    #[test]
    fn line_test_accepts_honest_extension() {
        let spec = spec(7, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let table = ProofTable::random(3, 3, &mut rng).unwrap();
        let oracle = ExtensionOracle::new(spec, table).unwrap();
        let f = |z: &Point| oracle.evaluate(z).unwrap();
        for mode in [LineTestMode::FullLine, LineTestMode::SampledPoint] {
            let rate = line_test(f, &spec, 3, 200, mode, &mut rng);
            assert_eq!(rate, 0.0);
        }
    }

    #[test]
    fn line_test_rejects_random_table() {
        let spec = spec(7, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let values: Vec<Felt> = (0..343).map(|_| rng.random_range(0..7)).collect();
        let f = |z: &Point| {
            let idx = z.coords().iter().fold(0usize, |acc, &c| acc * 7 + c as usize);
            values[idx]
        };
        let rate = line_test(f, &spec, 3, 500, LineTestMode::FullLine, &mut rng);
        assert!(rate >= 0.99, "rate = {rate}");
    }

    #[test]
    fn line_test_rate_for_single_corruption() {
        // Exact rate oracle at n = 2, q = 5: a uniformly random line (two
        // distinct uniform endpoints) passes through a fixed point with
        // probability q^(1-n). Enumerate all ordered endpoint pairs to check.
        let q = 5u64;
        let corrupted = Point::new(vec![1, 2]);
        let all = all_points(q, 2);
        let mut through = 0usize;
        let mut total = 0usize;
        for a in &all {
            for b in &all {
                if a == b {
                    continue;
                }
                total += 1;
                let hits = (0..q).any(|t| {
                    let coords: Vec<u64> = a
                        .coords()
                        .iter()
                        .zip(b.coords())
                        .map(|(&x, &y)| field::add_mod(x, field::mul_mod(field::sub_mod(y, x, q), t, q), q))
                        .collect();
                    Point::new(coords) == corrupted
                });
                if hits {
                    through += 1;
                }
            }
        }
        assert_eq!(through * 5, total); // exactly q^(1-n) = 1/5 of lines

        // Monte-Carlo at n = 3, q = 7: expected rate 7^(-2) = 1/49 ~ 0.0204.
        let spec = spec(7, 3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let table = ProofTable::random(3, 3, &mut rng).unwrap();
        let oracle = ExtensionOracle::new(spec, table).unwrap();
        let corrupted = Point::new(vec![3, 1, 6]);
        let f = |z: &Point| {
            let honest = oracle.evaluate(z).unwrap();
            if *z == corrupted { field::add_mod(honest, 1, 7) } else { honest }
        };
        let rate = line_test(f, &spec, 3, 5000, LineTestMode::FullLine, &mut rng);
        assert!((0.012..=0.030).contains(&rate), "rate = {rate}, expected near 1/49");
    }

    #[test]
    fn table_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let table = ProofTable::random(4, 3, &mut rng).unwrap();
        let text = table.to_text();
        assert_eq!(ProofTable::parse(&text).unwrap(), table);
        assert!(text.starts_with("0000 "));
    }

    #[test]
    fn table_parse_rejects_malformed_tables() {
        assert!(ProofTable::parse("00 1\n01 2\n10 0\n").is_err());
        assert!(ProofTable::parse("00 1\n01 2\n10 0\n11 1\n11 2\n").is_err());
        assert!(ProofTable::parse("0x 1\n").is_err());
    }

    proptest! {
        #[test]
        fn prop_extension_matches_direct_sum(seed in 0u64..200) {
            // Cross-check the fold against the basis-product formula
            // sum_x pi(x) * prod_i (x_i z_i + (1 - x_i)(1 - z_i)).
            let spec = FieldSpec::new(5, 3, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let table = ProofTable::random(3, 3, &mut rng).unwrap();
            let oracle = ExtensionOracle::new(spec, table.clone()).unwrap();
            let z: Vec<u64> = (0..3).map(|_| rng.random_range(0..5)).collect();
            let q = 5u64;
            let mut direct = 0u64;
            for idx in 0..8usize {
                let mut weight = embed_symbol(table.value_at_index(idx));
                for (bit, &z_bit) in z.iter().enumerate() {
                    let x_i = (idx >> (2 - bit) & 1) as u64;
                    let factor = if x_i == 1 { z_bit } else { field::sub_mod(1, z_bit, q) };
                    weight = field::mul_mod(weight, factor, q);
                }
                direct = field::add_mod(direct, weight, q);
            }
            prop_assert_eq!(oracle.evaluate(&Point::new(z)).unwrap(), direct);
        }
    }
}
