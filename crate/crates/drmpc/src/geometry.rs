//! Polytopic obstacles, safe regions and the closed-form safety loss.
//!
//! An obstacle is a compact convex polytope `{y : c_j' y <= d_j, j = 1..m}`.
//! Its safe region is the complement of the open interior, a union of
//! halfspaces `{y : c_j' y >= d_j}`. Under a translation `w` the distance of a
//! point to the translated safe region has the closed form
//!
//! ```text
//! dist(y, safe + w) = [ min_j (d_j - c_j'(y - w)) / ||c_j||_2 ]+
//! ```
//!
//! i.e. the smallest point-to-halfspace distance, clamped at zero.

use nalgebra::{DMatrix, DVector};
use std::ops::Deref;

use crate::error::{Error, Result};

/// Strict-interior classification tolerance. Points within this normalized
/// margin of a facet count as boundary, hence safe.
pub const INTERIOR_TOL: f64 = 1e-9;

/// Feasibility slack for vertex enumeration and membership tests.
const FEAS_TOL: f64 = 1e-9;

/// A random translation of an obstacle in output space.
#[derive(Debug, Clone, PartialEq)]
pub struct Translation(pub DVector<f64>);

impl Translation {
    pub fn zero(dim: usize) -> Self {
        Translation(DVector::zeros(dim))
    }
}

impl Deref for Translation {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl From<DVector<f64>> for Translation {
    fn from(w: DVector<f64>) -> Self {
        Translation(w)
    }
}

/// Compact convex polytope `{y : c_j' y <= d_j}` occupied by an obstacle.
#[derive(Debug, Clone)]
pub struct ObstaclePolytope {
    rows: Vec<(DVector<f64>, f64)>,
    dim: usize,
}

impl ObstaclePolytope {
    /// Builds a polytope and verifies it is nonempty and bounded.
    ///
    /// Boundedness is decided by a recession-cone test, nonemptiness by
    /// vertex enumeration; both are exact up to tolerance for the supported
    /// dimensions (1, 2 and 3).
    pub fn new(rows: Vec<(DVector<f64>, f64)>) -> Result<Self> {
        let poly = Self::from_rows_unchecked(rows)?;
        if poly.dim > 3 {
            return Err(Error::InvalidInput(format!(
                "polytopes supported up to dimension 3, got {}",
                poly.dim
            )));
        }
        if poly.recession_cone_nontrivial() {
            return Err(Error::Unbounded(
                "facet normals do not positively span the space".into(),
            ));
        }
        if poly.vertices().is_empty() {
            return Err(Error::Empty("no feasible vertex".into()));
        }
        Ok(poly)
    }

    /// Builds a polytope from rows without the boundedness/nonemptiness check.
    ///
    /// Still rejects empty row lists, zero normals and inconsistent
    /// dimensions. Intended for synthetic instances (e.g. unbounded wedges in
    /// solver tests); scenario loading always goes through [`Self::new`].
    pub fn from_rows_unchecked(rows: Vec<(DVector<f64>, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("polytope needs at least one row".into()));
        }
        let dim = rows[0].0.len();
        for (c, _) in &rows {
            if c.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.len(),
                });
            }
            if c.norm() == 0.0 {
                return Err(Error::InvalidInput("zero facet normal".into()));
            }
        }
        Ok(ObstaclePolytope { rows, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[(DVector<f64>, f64)] {
        &self.rows
    }

    /// `(C, d)` with the body `{y : C y <= d}`.
    pub fn matrix_form(&self) -> (DMatrix<f64>, DVector<f64>) {
        let m = self.rows.len();
        let mut c = DMatrix::zeros(m, self.dim);
        let mut d = DVector::zeros(m);
        for (j, (cj, dj)) in self.rows.iter().enumerate() {
            c.row_mut(j).copy_from(&cj.transpose());
            d[j] = *dj;
        }
        (c, d)
    }

    /// The polytope shifted by `w`: `{y + w : y in self}`.
    pub fn translated(&self, w: &Translation) -> Result<Self> {
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: w.len(),
            });
        }
        let rows = self
            .rows
            .iter()
            .map(|(c, d)| (c.clone(), d + c.dot(w)))
            .collect();
        Ok(ObstaclePolytope {
            rows,
            dim: self.dim,
        })
    }

    /// Outward offset by `margin` in Euclidean distance (halfspace form of the
    /// Minkowski sum with a ball; exact on facets, conservative at corners).
    pub fn inflated(&self, margin: f64) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|(c, d)| (c.clone(), d + margin * c.norm()))
            .collect();
        ObstaclePolytope {
            rows,
            dim: self.dim,
        }
    }

    /// Normalized margins `(d_j - c_j' y) / ||c_j||` for every facet; positive
    /// inside, negative outside the corresponding halfspace.
    fn margins(&self, y: &DVector<f64>) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(c, d)| (d - c.dot(y)) / c.norm())
            .collect()
    }

    /// True iff the recession cone `{y : C y <= 0}` contains a nonzero ray.
    fn recession_cone_nontrivial(&self) -> bool {
        let satisfies_all = |y: &DVector<f64>| {
            self.rows
                .iter()
                .all(|(c, _)| c.dot(y) <= FEAS_TOL * c.norm())
        };
        match self.dim {
            1 => {
                let pos = DVector::from_vec(vec![1.0]);
                let neg = DVector::from_vec(vec![-1.0]);
                satisfies_all(&pos) || satisfies_all(&neg)
            }
            2 => {
                // A nonempty intersection of closed half-circles contains an
                // endpoint of one of them.
                for (c, _) in &self.rows {
                    let a = c[1].atan2(c[0]);
                    for t in [a + std::f64::consts::FRAC_PI_2, a - std::f64::consts::FRAC_PI_2] {
                        let y = DVector::from_vec(vec![t.cos(), t.sin()]);
                        if satisfies_all(&y) {
                            return true;
                        }
                    }
                }
                false
            }
            3 => {
                // Rank deficiency of the normal matrix gives a lineality ray;
                // otherwise any extreme ray lies on a pair of facet planes.
                let (c_mat, _) = self.matrix_form();
                let svd = c_mat.clone().svd(false, true);
                let max_sv = svd.singular_values.max();
                if svd.singular_values.len() < 3
                    || svd.singular_values.min() <= 1e-12 * max_sv.max(1.0)
                {
                    if let Some(v_t) = svd.v_t {
                        if svd.singular_values.len() >= 3 {
                            let y = v_t.row(2).transpose();
                            if y.norm() > 0.5 {
                                return true;
                            }
                        } else {
                            return true;
                        }
                    }
                }
                for (i, (ci, _)) in self.rows.iter().enumerate() {
                    for (cj, _) in self.rows.iter().skip(i + 1) {
                        let cross = ci.cross(cj);
                        let n = cross.norm();
                        if n <= 1e-12 * ci.norm() * cj.norm() {
                            continue;
                        }
                        let y = cross / n;
                        if satisfies_all(&y) || satisfies_all(&(-&y)) {
                            return true;
                        }
                    }
                }
                false
            }
            _ => false,
        }
    }

    /// All vertices (intersections of `dim` facets that satisfy every row).
    pub fn vertices(&self) -> Vec<DVector<f64>> {
        let m = self.rows.len();
        let n = self.dim;
        let mut verts: Vec<DVector<f64>> = Vec::new();
        let mut push_unique = |v: DVector<f64>| {
            if verts.iter().all(|u| (u - &v).norm() > 1e-7) {
                verts.push(v);
            }
        };
        let feasible = |v: &DVector<f64>| {
            self.rows
                .iter()
                .all(|(c, d)| c.dot(v) <= d + FEAS_TOL * (1.0 + d.abs()) * c.norm().max(1.0))
        };
        let mut combos: Vec<Vec<usize>> = Vec::new();
        match n {
            1 => combos.extend((0..m).map(|i| vec![i])),
            2 => {
                for i in 0..m {
                    for j in (i + 1)..m {
                        combos.push(vec![i, j]);
                    }
                }
            }
            3 => {
                for i in 0..m {
                    for j in (i + 1)..m {
                        for k in (j + 1)..m {
                            combos.push(vec![i, j, k]);
                        }
                    }
                }
            }
            _ => return verts,
        }
        for combo in combos {
            let mut a = DMatrix::zeros(n, n);
            let mut b = DVector::zeros(n);
            let mut scale: f64 = 0.0;
            for (r, &idx) in combo.iter().enumerate() {
                let (c, d) = &self.rows[idx];
                a.row_mut(r).copy_from(&c.transpose());
                b[r] = *d;
                scale = scale.max(c.norm());
            }
            let lu = a.clone().full_piv_lu();
            if let Some(v) = lu.solve(&b) {
                // Reject ill-conditioned intersections.
                let residual = (&a * &v - &b).norm();
                if residual <= 1e-6 * (1.0 + b.norm()) && feasible(&v) {
                    push_unique(v);
                }
            }
            let _ = scale;
        }
        verts
    }
}

/// Safe region of an obstacle: the union of outward halfspaces, stored with
/// unit-normalized rows `G = -c_j'/||c_j||`, `g = d_j/||c_j||` so that the
/// facet margins are `G (y - w) + g`.
#[derive(Debug, Clone)]
pub struct SafeRegion {
    source: ObstaclePolytope,
    g_mat: DMatrix<f64>,
    g_vec: DVector<f64>,
}

impl SafeRegion {
    pub fn new(source: ObstaclePolytope) -> Self {
        let m = source.num_rows();
        let n = source.dim();
        let mut g_mat = DMatrix::zeros(m, n);
        let mut g_vec = DVector::zeros(m);
        for (j, (c, d)) in source.rows().iter().enumerate() {
            let norm = c.norm();
            g_mat.row_mut(j).copy_from(&(-c / norm).transpose());
            g_vec[j] = d / norm;
        }
        SafeRegion {
            source,
            g_mat,
            g_vec,
        }
    }

    pub fn source(&self) -> &ObstaclePolytope {
        &self.source
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn num_halfspaces(&self) -> usize {
        self.source.num_rows()
    }

    /// Unit-row matrix `G` (m x n_y).
    pub fn g_matrix(&self) -> &DMatrix<f64> {
        &self.g_mat
    }

    /// Offset vector `g` (m).
    pub fn g_vector(&self) -> &DVector<f64> {
        &self.g_vec
    }

    /// Facet margins `p_j(y, w) = G_j (y - w) + g_j`.
    pub fn facet_margins(&self, y: &DVector<f64>, w: &Translation) -> Result<DVector<f64>> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: w.len(),
            });
        }
        Ok(&self.g_mat * (y - &w.0) + &self.g_vec)
    }
}

/// Distance from `y` to the safe region translated by `w`:
/// `[min_j (d_j - c_j'(y - w)) / ||c_j||]+`. Zero iff `y` is outside the open
/// translated obstacle.
pub fn distance_to_safe_region(
    y: &DVector<f64>,
    region: &SafeRegion,
    w: &Translation,
) -> Result<f64> {
    let p = region.facet_margins(y, w)?;
    Ok(p.min().max(0.0))
}

/// Strict-interior test of the translated obstacle, with facet points (within
/// [`INTERIOR_TOL`]) classified as safe.
pub fn point_in_obstacle(
    y: &DVector<f64>,
    obs: &ObstaclePolytope,
    w: &Translation,
) -> Result<bool> {
    if y.len() != obs.dim() {
        return Err(Error::DimensionMismatch {
            expected: obs.dim(),
            got: y.len(),
        });
    }
    if w.len() != obs.dim() {
        return Err(Error::DimensionMismatch {
            expected: obs.dim(),
            got: w.len(),
        });
    }
    let shifted = y - &w.0;
    let margins = obs.margins(&shifted);
    Ok(margins.into_iter().all(|p| p > INTERIOR_TOL))
}

/// Convex hull of a point cloud as a facet-form polytope.
///
/// Gift wrapping in 2D (minimal vertex set), brute-force facet enumeration in
/// 3D. Inputs of lower affine dimension are rejected.
pub fn convex_hull_overapprox(points: &[DVector<f64>]) -> Result<ObstaclePolytope> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points".into()));
    }
    let dim = points[0].len();
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
    }
    if points.len() < dim + 1 {
        return Err(Error::Degenerate(format!(
            "need at least {} points in dimension {}",
            dim + 1,
            dim
        )));
    }
    if affine_rank(points) < dim {
        return Err(Error::Degenerate(
            "points span a lower-dimensional affine subspace".into(),
        ));
    }
    match dim {
        2 => hull_2d(points),
        3 => hull_3d(points),
        _ => Err(Error::InvalidInput(format!(
            "convex hull supported in 2D/3D, got {dim}"
        ))),
    }
}

fn affine_rank(points: &[DVector<f64>]) -> usize {
    let dim = points[0].len();
    let n = points.len();
    let mut centroid = DVector::zeros(dim);
    for p in points {
        centroid += p;
    }
    centroid /= n as f64;
    let mut mat = DMatrix::zeros(n, dim);
    let mut scale: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        let r = p - &centroid;
        scale = scale.max(r.norm());
        mat.row_mut(i).copy_from(&r.transpose());
    }
    if scale == 0.0 {
        return 0;
    }
    let svd = mat.svd(false, false);
    svd.singular_values
        .iter()
        .filter(|&&s| s > 1e-9 * scale)
        .count()
}

fn hull_2d(points: &[DVector<f64>]) -> Result<ObstaclePolytope> {
    // Jarvis march; collinear candidates resolved by taking the farthest.
    let mut start = 0;
    for (i, p) in points.iter().enumerate() {
        if (p[1], p[0]) < (points[start][1], points[start][0]) {
            start = i;
        }
    }
    let cross = |o: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<usize> = vec![start];
    let mut current = start;
    loop {
        let mut next = (current + 1) % points.len();
        for i in 0..points.len() {
            if i == current {
                continue;
            }
            let c = cross(&points[current], &points[next], &points[i]);
            let dist_next = (&points[next] - &points[current]).norm();
            let dist_i = (&points[i] - &points[current]).norm();
            let scale = dist_next * dist_i;
            if c < -1e-12 * scale.max(1e-300)
                || (c.abs() <= 1e-12 * scale.max(1e-300) && dist_i > dist_next)
            {
                next = i;
            }
        }
        if next == start {
            break;
        }
        hull.push(next);
        current = next;
        if hull.len() > points.len() {
            return Err(Error::Degenerate("gift wrapping failed to close".into()));
        }
    }
    if hull.len() < 3 {
        return Err(Error::Degenerate("hull collapsed to fewer than 3 vertices".into()));
    }
    // CCW ring to outward facet normals.
    let mut rows = Vec::with_capacity(hull.len());
    for i in 0..hull.len() {
        let a = &points[hull[i]];
        let b = &points[hull[(i + 1) % hull.len()]];
        let t = b - a;
        let normal = DVector::from_vec(vec![t[1], -t[0]]);
        let d = normal.dot(a);
        rows.push((normal, d));
    }
    ObstaclePolytope::new(rows)
}

fn hull_3d(points: &[DVector<f64>]) -> Result<ObstaclePolytope> {
    let n = points.len();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut scale: f64 = 0.0;
    for p in points {
        scale = scale.max(p.norm());
    }
    let tol = 1e-9 * scale.max(1.0);
    let mut push_unique = |normal: DVector<f64>, d: f64| {
        for (c, dd) in rows.iter() {
            if (c - &normal).norm() < 1e-7 && (dd - d).abs() < 1e-7 * scale.max(1.0) {
                return;
            }
        }
        rows.push((normal, d));
    };
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let u = &points[j] - &points[i];
                let v = &points[k] - &points[i];
                let cr = u.cross(&v);
                let nn = cr.norm();
                if nn <= 1e-12 * scale.max(1.0).powi(2) {
                    continue;
                }
                let normal = cr / nn;
                let d = normal.dot(&points[i]);
                let mut all_below = true;
                let mut all_above = true;
                for p in points {
                    let s = normal.dot(p) - d;
                    if s > tol {
                        all_below = false;
                    }
                    if s < -tol {
                        all_above = false;
                    }
                    if !all_below && !all_above {
                        break;
                    }
                }
                if all_below {
                    push_unique(normal.clone(), d);
                }
                if all_above {
                    push_unique(-normal, -d);
                }
            }
        }
    }
    if rows.len() < 4 {
        return Err(Error::Degenerate("facet enumeration found no closed hull".into()));
    }
    ObstaclePolytope::new(rows)
}
