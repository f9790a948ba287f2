//! Toy two-query constraint-graph instances and a brute-force soundness
//! oracle. A proof assigns one alphabet symbol to every vertex (a bitstring
//! in `{0,1}^n`); the verifier samples an edge uniformly and accepts when the
//! endpoint symbols form an allowed pair.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngExt};
use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum PcpError {
    #[error("instance parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("instance has no edges")]
    NoEdges,
    #[error("edge id {0} out of range")]
    BadEdgeId(usize),
    #[error("instance invalid: {0}")]
    Invalid(String),
    #[error("instance too large for brute force ({0} assignments)")]
    TooLargeForBruteForce(f64),
}

/// An edge with its set of allowed ordered symbol pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub allowed: BTreeSet<(u8, u8)>,
}

/// A two-query constraint graph over vertex indices in `{0,1}^n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintGraphInstance {
    n: usize,
    sigma_size: u8,
    vertices: BTreeSet<u32>,
    edges: Vec<Edge>,
}

/// Big-endian bit decomposition of a vertex index.
pub fn index_to_bits(index: u32, n: usize) -> Vec<u8> {
    (0..n).rev().map(|b| (index >> b & 1) as u8).collect()
}

pub fn bits_to_index(bits: &[u8]) -> u32 {
    bits.iter().fold(0u32, |acc, &b| acc << 1 | b as u32)
}

impl ConstraintGraphInstance {
    pub fn new(n: usize, sigma_size: u8, edges: Vec<Edge>) -> Result<Self, PcpError> {
        if n == 0 || n > 16 {
            return Err(PcpError::Invalid("n must be in 1..=16".into()));
        }
        if sigma_size < 2 {
            return Err(PcpError::Invalid("alphabet must have at least 2 symbols".into()));
        }
        let mut vertices = BTreeSet::new();
        for edge in &edges {
            if edge.u == edge.v {
                return Err(PcpError::Invalid("self-loops are not allowed".into()));
            }
            let limit = 1u32 << n;
            if edge.u >= limit || edge.v >= limit {
                return Err(PcpError::Invalid(format!("edge endpoint out of {{0,1}}^{n}")));
            }
            for &(a, b) in &edge.allowed {
                if a >= sigma_size || b >= sigma_size {
                    return Err(PcpError::Invalid("allowed pair outside the alphabet".into()));
                }
            }
            vertices.insert(edge.u);
            vertices.insert(edge.v);
        }
        Ok(ConstraintGraphInstance { n, sigma_size, vertices, edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma_size(&self) -> u8 {
        self.sigma_size
    }

    pub fn vertices(&self) -> &BTreeSet<u32> {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// A uniformly random edge, returned as its endpoint queries.
    pub fn sample_queries<R: Rng>(&self, rng: &mut R) -> Result<QueryPair, PcpError> {
        if self.edges.is_empty() {
            return Err(PcpError::NoEdges);
        }
        let edge_id = rng.random_range(0..self.edges.len());
        let edge = &self.edges[edge_id];
        Ok(QueryPair { w: edge.u, w2: edge.v, edge_id })
    }

    /// Accept iff `(a, a2)` is an allowed pair for the edge.
    pub fn decide(&self, edge_id: usize, a: u8, a2: u8) -> Result<bool, PcpError> {
        let edge = self.edges.get(edge_id).ok_or(PcpError::BadEdgeId(edge_id))?;
        Ok(edge.allowed.contains(&(a, a2)))
    }

    /// The maximum, over all proofs, of the fraction of edges accepted.
    /// Exhaustive with branch-and-bound pruning; bounded to ~2^26 assignments.
    pub fn brute_force_soundness(&self) -> Result<f64, PcpError> {
        let (_, best_violations) = self.best_assignment()?;
        Ok(1.0 - best_violations as f64 / self.edges.len() as f64)
    }

    /// A proof minimizing the number of violated edges, with that count.
    pub fn best_assignment(&self) -> Result<(BTreeMap<u32, u8>, usize), PcpError> {
        if self.edges.is_empty() {
            return Err(PcpError::NoEdges);
        }
        let cost = (self.sigma_size as f64).powi(self.vertices.len() as i32);
        if cost > (1u64 << 26) as f64 {
            return Err(PcpError::TooLargeForBruteForce(cost));
        }
        let order: Vec<u32> = self.vertices.iter().copied().collect();
        let position: BTreeMap<u32, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        // Edges become checkable once both endpoints are assigned; index each
        // edge at the later of its two endpoint positions.
        let mut edges_at: Vec<Vec<&Edge>> = vec![Vec::new(); order.len()];
        for edge in &self.edges {
            let at = position[&edge.u].max(position[&edge.v]);
            edges_at[at].push(edge);
        }
        let mut best_violations = usize::MAX;
        let mut best: Vec<u8> = Vec::new();
        let mut current = vec![0u8; order.len()];
        #[allow(clippy::too_many_arguments)]
        fn dfs(
            depth: usize,
            violations: usize,
            order: &[u32],
            position: &BTreeMap<u32, usize>,
            edges_at: &[Vec<&Edge>],
            sigma: u8,
            current: &mut Vec<u8>,
            best_violations: &mut usize,
            best: &mut Vec<u8>,
        ) {
            if violations >= *best_violations {
                return;
            }
            if depth == order.len() {
                *best_violations = violations;
                *best = current.clone();
                return;
            }
            for symbol in 0..sigma {
                current[depth] = symbol;
                let mut added = 0usize;
                for edge in &edges_at[depth] {
                    let a = current[position[&edge.u]];
                    let b = current[position[&edge.v]];
                    if !edge.allowed.contains(&(a, b)) {
                        added += 1;
                    }
                }
                dfs(depth + 1, violations + added, order, position, edges_at, sigma, current, best_violations, best);
                if *best_violations == 0 {
                    return;
                }
            }
        }
        dfs(0, 0, &order, &position, &edges_at, self.sigma_size, &mut current, &mut best_violations, &mut best);
        let assignment = order.into_iter().zip(best).collect();
        Ok((assignment, best_violations))
    }

    /// Header `n sigma_size`, then one `edge u v : a1,b1 a2,b2 ...` line per
    /// edge; endpoints as big-endian bitstrings.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.sigma_size);
        for edge in &self.edges {
            let bits = |v: u32| index_to_bits(v, self.n).iter().map(|b| b.to_string()).collect::<String>();
            out.push_str(&format!("edge {} {} :", bits(edge.u), bits(edge.v)));
            for (a, b) in &edge.allowed {
                out.push_str(&format!(" {a},{b}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PcpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (header_line, header) =
            lines.next().ok_or(PcpError::Parse { line: 0, message: "empty instance".into() })?;
        let mut parts = header.split_whitespace();
        let err = |line: usize, message: &str| PcpError::Parse { line, message: message.into() };
        let n: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err(header_line, "header must be `n sigma_size`"))?;
        let sigma_size: u8 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err(header_line, "header must be `n sigma_size`"))?;
        if parts.next().is_some() {
            return Err(err(header_line, "trailing tokens in header"));
        }
        let mut edges = Vec::new();
        for (line_no, line) in lines {
            let rest = line.strip_prefix("edge").ok_or_else(|| err(line_no, "expected `edge` line"))?;
            let (endpoints, pairs) =
                rest.split_once(':').ok_or_else(|| err(line_no, "expected `:` separator"))?;
            let mut ends = endpoints.split_whitespace();
            let parse_vertex = |tok: Option<&str>| -> Result<u32, PcpError> {
                let tok = tok.ok_or_else(|| err(line_no, "missing endpoint"))?;
                if tok.len() != n || !tok.chars().all(|c| c == '0' || c == '1') {
                    return Err(err(line_no, "endpoint must be an n-bit string"));
                }
                Ok(tok.chars().fold(0u32, |acc, c| acc << 1 | (c == '1') as u32))
            };
            let u = parse_vertex(ends.next())?;
            let v = parse_vertex(ends.next())?;
            if ends.next().is_some() {
                return Err(err(line_no, "too many endpoints"));
            }
            let mut allowed = BTreeSet::new();
            for pair in pairs.split_whitespace() {
                let (a, b) = pair.split_once(',').ok_or_else(|| err(line_no, "pairs are `a,b`"))?;
                let a: u8 = a.parse().map_err(|_| err(line_no, "bad symbol"))?;
                let b: u8 = b.parse().map_err(|_| err(line_no, "bad symbol"))?;
                allowed.insert((a, b));
            }
            edges.push(Edge { u, v, allowed });
        }
        ConstraintGraphInstance::new(n, sigma_size, edges)
    }
}

/// The two endpoints of a sampled edge, as query indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryPair {
    pub w: u32,
    pub w2: u32,
    pub edge_id: usize,
}

fn inequality_pairs(sigma: u8) -> BTreeSet<(u8, u8)> {
    let mut allowed = BTreeSet::new();
    for a in 0..sigma {
        for b in 0..sigma {
            if a != b {
                allowed.insert((a, b));
            }
        }
    }
    allowed
}

/// Triangle strip on 16 vertices (edges i~i+1 and i~i+2) with inequality
/// constraints over a 3-symbol alphabet. Properly 3-colorable (color i mod 3),
/// so its soundness value is 1.
pub fn tri16() -> ConstraintGraphInstance {
    let allowed = inequality_pairs(3);
    let mut edges = Vec::new();
    for i in 0..15u32 {
        edges.push(Edge { u: i, v: i + 1, allowed: allowed.clone() });
    }
    for i in 0..14u32 {
        edges.push(Edge { u: i, v: i + 2, allowed: allowed.clone() });
    }
    ConstraintGraphInstance::new(4, 3, edges).expect("valid builtin")
}

/// Complete graph on 4 vertices with binary inequality constraints, padded
/// into `{0,1}^3`. Unsatisfiable: at most 4 of its 6 edges can be cut, so the
/// soundness value is 2/3.
pub fn k4bin() -> ConstraintGraphInstance {
    let allowed = inequality_pairs(2);
    let mut edges = Vec::new();
    for u in 0..4u32 {
        for v in u + 1..4 {
            edges.push(Edge { u, v, allowed: allowed.clone() });
        }
    }
    ConstraintGraphInstance::new(3, 2, edges).expect("valid builtin")
}

/// Path on 8 vertices with inequality constraints over 3 symbols; satisfiable.
pub fn path8() -> ConstraintGraphInstance {
    let allowed = inequality_pairs(3);
    let edges = (0..7u32).map(|i| Edge { u: i, v: i + 1, allowed: allowed.clone() }).collect();
    ConstraintGraphInstance::new(3, 3, edges).expect("valid builtin")
}

/// Bundled instances by name.
pub fn builtin(name: &str) -> Option<ConstraintGraphInstance> {
    match name {
        "tri16" => Some(tri16()),
        "k4bin" => Some(k4bin()),
        "path8" => Some(path8()),
        _ => None,
    }
}

/// Stored soundness for the bundled instances as `(violated, total)` edge
/// counts of a best proof; cross-checked against the brute-force oracle in
/// tests. `1 - violated / total` reproduces the oracle value bit-for-bit.
pub fn builtin_soundness_ratio(name: &str) -> Option<(usize, usize)> {
    match name {
        "tri16" => Some((0, 29)),
        "k4bin" => Some((2, 6)),
        "path8" => Some((0, 7)),
        _ => None,
    }
}

/// Stored soundness value for a bundled instance.
pub fn builtin_soundness(name: &str) -> Option<f64> {
    builtin_soundness_ratio(name).map(|(violated, total)| 1.0 - violated as f64 / total as f64)
}
