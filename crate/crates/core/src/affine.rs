//! Affine lines, planes, and cubes in F_q^n, their parametrizations, and the
//! canonical-representative map that labels each cube fiber through a fixed
//! plane with a single point.

use std::collections::HashMap;

use thiserror::Error;

use crate::field::{self, Felt};

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum AffineError {
    #[error("points must share dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("base points are affinely dependent")]
    DependentPoints,
}

/// A point of F_q^n. Coordinates are stored reduced into `[0, q)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Point(Vec<Felt>);

impl Point {
    pub fn new(coords: Vec<Felt>) -> Self {
        Point(coords)
    }

    pub fn zero(n: usize) -> Self {
        Point(vec![0; n])
    }

    pub fn coords(&self) -> &[Felt] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn nonzero_count(&self) -> usize {
        self.0.iter().filter(|&&c| c != 0).count()
    }
}

fn vsub(a: &Point, b: &Point, q: u64) -> Vec<Felt> {
    a.coords()
        .iter()
        .zip(b.coords())
        .map(|(&x, &y)| field::sub_mod(x, y, q))
        .collect()
}

/// `base + sum_i scale_i * dir_i` (mod q).
fn affine_combine(base: &Point, terms: &[(&[Felt], Felt)], q: u64) -> Point {
    let mut out = base.coords().to_vec();
    for (dir, scale) in terms {
        for (o, &d) in out.iter_mut().zip(dir.iter()) {
            *o = field::add_mod(*o, field::mul_mod(d, *scale, q), q);
        }
    }
    Point(out)
}

/// Every point of F_q^n in lexicographic coordinate order.
pub fn all_points(q: u64, n: usize) -> Vec<Point> {
    let total = (q as u128).pow(n as u32);
    assert!(total <= 1 << 24, "point enumeration too large");
    let mut out = Vec::with_capacity(total as usize);
    let mut coords = vec![0u64; n];
    loop {
        out.push(Point(coords.clone()));
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            coords[i] += 1;
            if coords[i] < q {
                break;
            }
            coords[i] = 0;
        }
    }
}

/// Affine independence: the directions from the first point to the rest have
/// full rank.
pub fn affinely_independent(points: &[&Point], q: u64) -> bool {
    if points.len() < 2 {
        return true;
    }
    let dirs: Vec<Vec<Felt>> = points[1..].iter().map(|p| vsub(p, points[0], q)).collect();
    field::rank_of(dirs, q) == points.len() - 1
}

/// The four corners of an affine cube: the parametrization
/// `(t1, t2, t3) -> w + (y - w) t1 + (w2 - w) t2 + (w3 - w) t3`
/// is a bijection from F_q^3 onto the cube.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubeFrame {
    w: Point,
    y: Point,
    w2: Point,
    w3: Point,
    q: u64,
}

impl CubeFrame {
    pub fn new(w: Point, y: Point, w2: Point, w3: Point, q: u64) -> Result<Self, AffineError> {
        let n = w.dim();
        for p in [&y, &w2, &w3] {
            if p.dim() != n {
                return Err(AffineError::DimensionMismatch { expected: n, got: p.dim() });
            }
        }
        let dirs = vec![vsub(&y, &w, q), vsub(&w2, &w, q), vsub(&w3, &w, q)];
        if field::rank_of(dirs, q) != 3 {
            return Err(AffineError::DependentPoints);
        }
        Ok(CubeFrame { w, y, w2, w3, q })
    }

    pub fn w(&self) -> &Point {
        &self.w
    }

    pub fn y(&self) -> &Point {
        &self.y
    }

    pub fn w2(&self) -> &Point {
        &self.w2
    }

    pub fn w3(&self) -> &Point {
        &self.w3
    }

    pub fn q(&self) -> u64 {
        self.q
    }
}

/// Evaluates the cube parametrization at `t`.
pub fn cube_point(frame: &CubeFrame, t: (Felt, Felt, Felt)) -> Point {
    let q = frame.q;
    let d1 = vsub(&frame.y, &frame.w, q);
    let d2 = vsub(&frame.w2, &frame.w, q);
    let d3 = vsub(&frame.w3, &frame.w, q);
    affine_combine(&frame.w, &[(&d1, t.0), (&d2, t.1), (&d3, t.2)], q)
}

/// Inverts the cube parametrization: the unique `t` with
/// `cube_point(frame, t) = z`, or `None` when `z` is outside the cube.
pub fn cube_coords(frame: &CubeFrame, z: &Point) -> Option<(Felt, Felt, Felt)> {
    let q = frame.q;
    let n = frame.w.dim();
    if z.dim() != n {
        return None;
    }
    let d1 = vsub(&frame.y, &frame.w, q);
    let d2 = vsub(&frame.w2, &frame.w, q);
    let d3 = vsub(&frame.w3, &frame.w, q);
    let rhs = vsub(z, &frame.w, q);
    let rows: Vec<Vec<Felt>> = (0..n).map(|i| vec![d1[i], d2[i], d3[i], rhs[i]]).collect();
    match field::solve_exact(rows, 3, q) {
        field::LinearSolution::Unique(t) => Some((t[0], t[1], t[2])),
        field::LinearSolution::Inconsistent => None,
        // A valid frame has independent directions, so the system can never
        // be underdetermined.
        field::LinearSolution::Underdetermined => unreachable!("frame directions are independent"),
    }
}

/// Does `y` lie on the affine plane through `a`, `b`, `c`?
fn on_plane(a: &Point, b: &Point, c: &Point, y: &Point, q: u64) -> bool {
    let d1 = vsub(b, a, q);
    let d2 = vsub(c, a, q);
    let rhs = vsub(y, a, q);
    let rows: Vec<Vec<Felt>> = (0..a.dim()).map(|i| vec![d1[i], d2[i], rhs[i]]).collect();
    !matches!(field::solve_exact(rows, 2, q), field::LinearSolution::Inconsistent)
}

/// Outcome of the canonical-representative map.
///
/// `OnPlane` is a tagged value rather than the all-zero point: the origin can
/// itself be a legitimate representative when it lies off the plane, so the
/// plane marker must not collide with it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CanonicalRep {
    OnPlane,
    Rep(Point),
}

/// All `q^3 - q^2` points of the cube that are off the base plane
/// (`t1 != 0`), in lexicographic `t` order.
pub fn enumerate_cube_minus_plane(frame: &CubeFrame) -> Vec<Point> {
    let q = frame.q;
    let d1 = vsub(&frame.y, &frame.w, q);
    let d2 = vsub(&frame.w2, &frame.w, q);
    let d3 = vsub(&frame.w3, &frame.w, q);
    let mut out = Vec::with_capacity(((q - 1) * q * q) as usize);
    for t1 in 1..q {
        let base1 = affine_combine(&frame.w, &[(&d1, t1)], q);
        for t2 in 0..q {
            let base2 = affine_combine(&base1, &[(&d2, t2)], q);
            for t3 in 0..q {
                out.push(affine_combine(&base2, &[(&d3, t3)], q));
            }
        }
    }
    out
}

fn min_representative(points: &[Point]) -> Point {
    points
        .iter()
        .min_by(|x, y| (x.nonzero_count(), x.coords()).cmp(&(y.nonzero_count(), y.coords())))
        .expect("cube-minus-plane set is nonempty")
        .clone()
}

/// The canonical-representative map `C_{a,b,c}`.
///
/// Points on the plane through `(a, b, c)` map to `OnPlane`; any other `y`
/// maps to the member of its cube-minus-plane set with the fewest nonzero
/// coordinates, ties broken by lexicographic order on the coordinate tuple
/// (entries compared as integers, leftmost first). Every point of one
/// cube-minus-plane set therefore maps to the same representative.
pub fn canonical_rep(a: &Point, b: &Point, c: &Point, y: &Point, q: u64) -> Result<CanonicalRep, AffineError> {
    let dirs = vec![vsub(b, a, q), vsub(c, a, q)];
    if field::rank_of(dirs, q) != 2 {
        return Err(AffineError::DependentPoints);
    }
    if on_plane(a, b, c, y, q) {
        return Ok(CanonicalRep::OnPlane);
    }
    let frame = CubeFrame::new(a.clone(), y.clone(), b.clone(), c.clone(), q)?;
    Ok(CanonicalRep::Rep(min_representative(&enumerate_cube_minus_plane(&frame))))
}

/// Tags every point of F_q^n at once: the plane through `(a, b, c)` maps to
/// `OnPlane`, and each cube fiber shares one representative. Cubes through a
/// common plane intersect only on that plane, so fibers partition the
/// complement and each fiber is enumerated exactly once.
pub fn canonical_tag_map(
    a: &Point,
    b: &Point,
    c: &Point,
    q: u64,
) -> Result<HashMap<Point, CanonicalRep>, AffineError> {
    let dirs = vec![vsub(b, a, q), vsub(c, a, q)];
    if field::rank_of(dirs, q) != 2 {
        return Err(AffineError::DependentPoints);
    }
    let n = a.dim();
    let mut tags: HashMap<Point, CanonicalRep> = HashMap::new();
    let d1 = vsub(b, a, q);
    let d2 = vsub(c, a, q);
    for t1 in 0..q {
        for t2 in 0..q {
            tags.insert(affine_combine(a, &[(&d1, t1), (&d2, t2)], q), CanonicalRep::OnPlane);
        }
    }
    for z in all_points(q, n) {
        if tags.contains_key(&z) {
            continue;
        }
        let frame = CubeFrame::new(a.clone(), z.clone(), b.clone(), c.clone(), q)?;
        let fiber = enumerate_cube_minus_plane(&frame);
        let rep = min_representative(&fiber);
        for member in fiber {
            let prev = tags.insert(member, CanonicalRep::Rep(rep.clone()));
            debug_assert!(prev.is_none(), "cube fibers must be disjoint");
        }
    }
    Ok(tags)
}
