//! Kendall's shape space of landmark configurations.
//!
//! A configuration of k landmarks in R^m becomes a pre-shape by removing
//! translation (centering) and scale (unit Frobenius norm); shapes are
//! pre-shapes modulo rotations SO(m). Shapes are stored as pre-shape
//! representatives and every binary operation aligns its second argument
//! first, which keeps all results rotation-invariant without a quotient
//! representation.
//!
//! For planar shapes (m = 2) the module provides closed forms for the
//! vertical component, parallel transport and the curvature tensor.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent, POINT_TOL};

/// Minimum number of landmarks for a valid configuration.
pub const MIN_LANDMARKS: usize = 3;

/// Below this value of λ_{m-1} + λ_m the optimal rotation is not unique.
pub const UNIQUENESS_TOL: f64 = 1e-10;

/// Centered, unit-norm m×k landmark matrix: a point on the pre-shape sphere.
///
/// Landmarks are the columns; each coordinate row sums to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PreShape(DMatrix<f64>);

impl PreShape {
    /// Wraps a matrix that already satisfies the pre-shape invariants.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_dims(m.nrows(), m.ncols())?;
        let mean = m.column_mean();
        if mean.amax() > POINT_TOL {
            return Err(Error::InvalidInput(
                "pre-shape is not centered (landmark sum nonzero)".into(),
            ));
        }
        if (m.norm() - 1.0).abs() > POINT_TOL {
            return Err(Error::InvalidInput(format!(
                "pre-shape is not unit-norm (|x| = {})",
                m.norm()
            )));
        }
        Ok(PreShape(m))
    }

    /// Projects a raw landmark configuration to the pre-shape sphere by
    /// centering and scaling. Fails when all landmarks coincide.
    pub fn from_landmarks(raw: &DMatrix<f64>) -> Result<Self> {
        check_dims(raw.nrows(), raw.ncols())?;
        let mut x = raw.clone();
        center_columns(&mut x);
        let n = x.norm();
        if n <= 1e-12 {
            return Err(Error::Degenerate(
                "all landmarks coincide; no shape after centering".into(),
            ));
        }
        x /= n;
        Ok(PreShape(x))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.0.nrows(), self.0.ncols())
    }

    /// Flattened (column-major) ambient coordinates.
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(self.0.as_slice())
    }

    pub fn from_vector(v: &DVector<f64>, m: usize, k: usize) -> Result<Self> {
        if v.len() != m * k {
            return Err(Error::InvalidInput(format!(
                "expected {}x{} = {} entries, got {}",
                m,
                k,
                m * k,
                v.len()
            )));
        }
        PreShape::new(DMatrix::from_column_slice(m, k, v.as_slice()))
    }
}

fn check_dims(m: usize, k: usize) -> Result<()> {
    if m < 2 || k < MIN_LANDMARKS {
        return Err(Error::InvalidInput(format!(
            "landmark matrix must be at least 2x{MIN_LANDMARKS}, got {m}x{k}"
        )));
    }
    Ok(())
}

fn center_columns(x: &mut DMatrix<f64>) {
    let mean = x.column_mean();
    for mut col in x.column_iter_mut() {
        col -= &mean;
    }
}

fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Result of Procrustes alignment of `y` onto `x`.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Rotation in SO(m) applied to `y`.
    pub rotation: DMatrix<f64>,
    /// Pseudo-singular values λ_1 ≥ … ≥ λ_{m-1} ≥ |λ_m| of y xᵗ.
    pub pseudo_singular_values: DVector<f64>,
    /// False when λ_{m-1} + λ_m ≤ [`UNIQUENESS_TOL`]: any minimizer is
    /// returned but it is not the only one.
    pub unique: bool,
}

impl Alignment {
    pub fn lambda_sum(&self) -> f64 {
        self.pseudo_singular_values.sum()
    }
}

/// Rotates `y` into optimal position over `x`: the returned representative
/// minimizes the spherical distance to `x` over SO(m) and satisfies
/// (Ry) xᵗ symmetric (well-positioned).
pub fn align(x: &PreShape, y: &PreShape) -> (PreShape, Alignment) {
    let (m, _) = x.dims();
    assert_eq!(x.dims(), y.dims(), "shape dimension mismatch");
    let a = y.matrix() * x.matrix().transpose(); // y xᵗ, m×m
    let alignment = if m == 2 {
        optimal_rotation_2d(&a)
    } else {
        optimal_rotation_svd(&a)
    };
    let rotated = &alignment.rotation * y.matrix();
    (PreShape(rotated), alignment)
}

/// Closed form for m = 2: tr(A R(θ)) = cos θ tr A + sin θ (A₁₂ - A₂₁).
fn optimal_rotation_2d(a: &DMatrix<f64>) -> Alignment {
    let tr = a[(0, 0)] + a[(1, 1)];
    let sk = a[(0, 1)] - a[(1, 0)];
    let theta = sk.atan2(tr);
    let (s, c) = theta.sin_cos();
    let rotation = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    let nsq = a.norm_squared();
    let sum = (nsq + 2.0 * det.abs()).max(0.0).sqrt(); // σ1 + σ2
    let diff = (nsq - 2.0 * det.abs()).max(0.0).sqrt(); // σ1 - σ2
    let sigma1 = 0.5 * (sum + diff);
    let sigma2 = 0.5 * (sum - diff);
    let lambda2 = if det < 0.0 { -sigma2 } else { sigma2 };
    let lambda = DVector::from_vec(vec![sigma1, lambda2]);
    let unique = sigma1 + lambda2 > UNIQUENESS_TOL;
    Alignment {
        rotation,
        pseudo_singular_values: lambda,
        unique,
    }
}

/// General case: SVD of A = y xᵗ with the smallest singular value's sign
/// flipped when the orthogonal factor product has negative determinant.
fn optimal_rotation_svd(a: &DMatrix<f64>) -> Alignment {
    let m = a.nrows();
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let sigma = svd.singular_values;
    debug_assert!(sigma.iter().zip(sigma.iter().skip(1)).all(|(a, b)| a >= b));
    let v = v_t.transpose();
    let s = (v.determinant() * u.determinant()).signum();
    // R = V diag(1,…,1,s) Uᵗ maximizes tr(A R) over SO(m)
    let mut d = DMatrix::identity(m, m);
    d[(m - 1, m - 1)] = s;
    let rotation = &v * d * u.transpose();
    let mut lambda = sigma.clone();
    lambda[m - 1] *= s;
    let unique = lambda[m - 2] + lambda[m - 1] > UNIQUENESS_TOL;
    Alignment {
        rotation,
        pseudo_singular_values: DVector::from_iterator(m, lambda.iter().copied()),
        unique,
    }
}

/// Procrustes distance arccos Σλᵢ; values lie in [0, π/2].
///
/// Evaluated chordally on the aligned representative, which resolves small
/// distances to machine precision (arccos of Σλ cannot).
pub fn shape_distance(x: &PreShape, y: &PreShape) -> f64 {
    let (y_al, _) = align(x, y);
    2.0 * ((x.matrix() - y_al.matrix()).norm() / 2.0).clamp(-1.0, 1.0).asin()
}

/// Point at parameter `t` on the horizontal geodesic from `x` through the
/// aligned representative of `y`. Returns `x` when the shapes coincide.
pub fn shape_geodesic(x: &PreShape, y: &PreShape, t: f64) -> PreShape {
    let (y_al, _) = align(x, y);
    let c = frob_inner(x.matrix(), y_al.matrix()).clamp(-1.0, 1.0);
    let phi = c.acos();
    if phi < 1e-9 {
        let mut p = x.matrix() * (1.0 - t) + y_al.matrix() * t;
        let n = p.norm();
        if n < 1e-12 {
            return x.clone();
        }
        p /= n;
        return PreShape(p);
    }
    let s = phi.sin();
    let mut p = x.matrix() * (((1.0 - t) * phi).sin() / s) + y_al.matrix() * ((t * phi).sin() / s);
    let n = p.norm();
    p /= n;
    PreShape(p)
}

/// The fixed rotation by π/2 acting on planar configurations from the left;
/// it is the complex structure of the planar shape space.
pub fn cmat() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

/// Splits an ambient vector at `x` into radial, vertical and horizontal parts
/// (after projecting away any un-centered component).
#[derive(Debug, Clone)]
pub struct TangentSplit {
    pub radial: DMatrix<f64>,
    pub vertical: DMatrix<f64>,
    pub horizontal: DMatrix<f64>,
}

/// Computes the radial/vertical/horizontal decomposition of `w` at `x`.
///
/// The skew matrix A of the vertical part Ax solves
/// A(xxᵗ) + (xxᵗ)A = wxᵗ − xwᵗ; for m = 2 the solution is the closed form
/// A = wxᵗ − xwᵗ. Fails when rank(x) < m−1 (singular rotation fiber).
pub fn decompose_tangent(x: &PreShape, w: &DMatrix<f64>) -> Result<TangentSplit> {
    let mut wc = w.clone();
    center_columns(&mut wc);
    let radial = x.matrix() * frob_inner(&wc, x.matrix());
    let w0 = &wc - &radial;
    let a = vertical_generator(x, &w0)?;
    let vertical = &a * x.matrix();
    let horizontal = &w0 - &vertical;
    Ok(TangentSplit {
        radial,
        vertical,
        horizontal,
    })
}

/// Horizontal part of `w` at `x`; see [`decompose_tangent`].
pub fn horizontal_project(x: &PreShape, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(decompose_tangent(x, w)?.horizontal)
}

/// Skew matrix generating the vertical component of `w` at `x`.
fn vertical_generator(x: &PreShape, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, _) = x.dims();
    let rhs_mat = w * x.matrix().transpose() - x.matrix() * w.transpose();
    if m == 2 {
        // A S + S A = tr(S) A for skew A and symmetric 2×2 S, and tr(xxᵗ) = 1
        return Ok(rhs_mat);
    }
    // rank(x) >= m-1 keeps the fiber regular
    let sv = x.matrix().clone().svd(false, false).singular_values;
    if sv[m - 2] < 1e-10 {
        return Err(Error::SingularFiber);
    }
    let s = x.matrix() * x.matrix().transpose();
    let p = m * (m - 1) / 2;
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| ((a + 1)..m).map(move |b| (a, b)))
        .collect();
    let mut sys = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for (col, &(a, b)) in pairs.iter().enumerate() {
        let mut e = DMatrix::zeros(m, m);
        e[(a, b)] = 1.0;
        e[(b, a)] = -1.0;
        let img = &e * &s + &s * &e;
        for (row, &(c, d)) in pairs.iter().enumerate() {
            sys[(row, col)] = img[(c, d)];
        }
    }
    for (row, &(c, d)) in pairs.iter().enumerate() {
        rhs[row] = rhs_mat[(c, d)];
    }
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularFiber)?;
    let mut a_mat = DMatrix::zeros(m, m);
    for (idx, &(a, b)) in pairs.iter().enumerate() {
        a_mat[(a, b)] = sol[idx];
        a_mat[(b, a)] = -sol[idx];
    }
    Ok(a_mat)
}

/// Horizontal log of the shape space: aligns `y` to `x` and lifts the
/// spherical log, which is automatically horizontal for well-positioned
/// pairs. Fails on the cut locus (distance ≥ π/2).
pub fn shape_log(x: &PreShape, y: &PreShape) -> Result<DMatrix<f64>> {
    let (y_al, alignment) = align(x, y);
    let c = alignment.lambda_sum();
    if c <= 1e-12 {
        return Err(Error::Domain(
            "log undefined at distance >= pi/2 (cut locus)".into(),
        ));
    }
    let c = c.clamp(-1.0, 1.0);
    let phi = 2.0 * ((x.matrix() - y_al.matrix()).norm() / 2.0).clamp(-1.0, 1.0).asin();
    let perp = y_al.matrix() - x.matrix() * c;
    let n = perp.norm();
    if n < 1e-12 {
        return Ok(DMatrix::zeros(x.dims().0, x.dims().1));
    }
    Ok(perp * (phi / n))
}

/// Spherical exponential at `x`; for horizontal `u` the image represents the
/// shape-space exponential.
pub fn shape_exp(x: &PreShape, u: &DMatrix<f64>) -> PreShape {
    let phi = u.norm();
    if phi == 0.0 {
        return x.clone();
    }
    if phi < 1e-12 {
        let mut p = x.matrix() + u;
        let n = p.norm();
        p /= n;
        return PreShape(p);
    }
    let mut p = x.matrix() * phi.cos() + u * (phi.sin() / phi);
    let n = p.norm();
    p /= n;
    PreShape(p)
}

/// Closed-form geometry of planar (m = 2) shapes.
pub mod planar {
    use super::*;

    /// Parallel transport of the horizontal vector `u` from `x` to `y` along
    /// the connecting shape geodesic; `x` and `y` must be well-positioned
    /// and non-antipodal.
    ///
    /// The result is the horizontal representative of the shape-space
    /// transport, not the horizontal component of the spherical transport.
    pub fn transport_well_positioned(
        x: &PreShape,
        y: &PreShape,
        u: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        require_planar(x)?;
        let c = frob_inner(x.matrix(), y.matrix()).clamp(-1.0, 1.0);
        let perp = y.matrix() - x.matrix() * c;
        let n = perp.norm();
        if n < 1e-12 {
            if c > 0.0 {
                return Ok(u.clone());
            }
            return Err(Error::Domain("transport undefined: antipodal".into()));
        }
        let phi = if c >= 0.0 {
            2.0 * ((x.matrix() - y.matrix()).norm() / 2.0).clamp(-1.0, 1.0).asin()
        } else {
            c.acos()
        };
        let v = perp / n; // unit initial velocity of the geodesic
        let cmat = u * v.transpose() - &v * u.transpose(); // 2×2 skew
        let xy = x.matrix() + y.matrix();
        let denom = xy.norm_squared();
        let op = DMatrix::identity(2, 2) * frob_inner(u, y.matrix()) + cmat * phi.sin();
        Ok(u - (&op * &xy) * (2.0 / denom))
    }

    /// Curvature tensor R(X,Y)Z of the planar shape space for horizontal
    /// fields, via the complex structure 𝒞.
    pub fn curvature(
        x: &PreShape,
        xx: &DMatrix<f64>,
        yy: &DMatrix<f64>,
        zz: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        require_planar(x)?;
        let c = cmat();
        let cx = &c * xx;
        let cy = &c * yy;
        let cz = &c * zz;
        Ok(xx * frob_inner(yy, zz) - yy * frob_inner(xx, zz) + &cx * frob_inner(&cy, zz)
            - &cy * frob_inner(&cx, zz)
            - cz * (2.0 * frob_inner(&cx, yy)))
    }

    /// Sectional curvature of the plane spanned by horizontal X, Y; ranges
    /// over [1, 4] with holomorphic planes at 4.
    pub fn sectional(x: &PreShape, xx: &DMatrix<f64>, yy: &DMatrix<f64>) -> Result<f64> {
        require_planar(x)?;
        let c = cmat();
        let denom = xx.norm_squared() * yy.norm_squared() - frob_inner(xx, yy).powi(2);
        if denom <= 1e-14 {
            return Err(Error::Domain(
                "sectional curvature undefined for a degenerate plane".into(),
            ));
        }
        let mix = frob_inner(xx, &(&c * yy));
        Ok(1.0 + 3.0 * mix * mix / denom)
    }

    fn require_planar(x: &PreShape) -> Result<()> {
        if x.dims().0 != 2 {
            return Err(Error::Unsupported(
                "closed-form planar geometry requires m = 2".into(),
            ));
        }
        Ok(())
    }
}

/// Kendall's shape space Σ = S_m^k / SO(m) as a [`Manifold`] over flattened
/// pre-shape representatives.
///
/// Tangent vectors are horizontal; `log` aligns its target first, so
/// `exp(x, log(x, y))` reproduces `y` up to rotation (zero shape distance).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KendallShapeSpace {
    m: usize,
    k: usize,
}

impl KendallShapeSpace {
    pub fn new(m: usize, k: usize) -> Result<Self> {
        check_dims(m, k)?;
        Ok(KendallShapeSpace { m, k })
    }

    /// Planar shapes with k landmarks.
    pub fn planar(k: usize) -> Result<Self> {
        KendallShapeSpace::new(2, k)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn to_mat(&self, v: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.m, self.k, v.as_slice())
    }

    pub fn to_vec(&self, m: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_column_slice(m.as_slice())
    }

    fn preshape(&self, v: &Point) -> PreShape {
        PreShape(self.to_mat(v))
    }
}

impl Manifold for KendallShapeSpace {
    fn ambient_dim(&self) -> usize {
        self.m * self.k
    }

    fn intrinsic_dim(&self) -> usize {
        // centered (−m), unit norm (−1), rotations (−m(m−1)/2)
        self.m * self.k - self.m - 1 - self.m * (self.m - 1) / 2
    }

    fn injectivity_radius(&self) -> f64 {
        std::f64::consts::FRAC_PI_2
    }

    fn convexity_radius(&self) -> f64 {
        // sectional curvature is bounded by 4, so π/√Δ = π/2 = r_inj
        std::f64::consts::FRAC_PI_4
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::InvalidInput(format!(
                "expected {} coordinates, got {}",
                self.ambient_dim(),
                x.len()
            )));
        }
        PreShape::new(self.to_mat(x)).map(|_| ())
    }

    fn check_tangent(&self, x: &Point, v: &Tangent) -> Result<()> {
        self.check_point(x)?;
        if v.len() != self.ambient_dim() {
            return Err(Error::InvalidInput("tangent dimension mismatch".into()));
        }
        let h = self.project_tangent(x, v);
        if (h - v).norm() > POINT_TOL * v.norm().max(1.0) {
            return Err(Error::InvalidInput(
                "vector is not horizontal at the base pre-shape".into(),
            ));
        }
        Ok(())
    }

    fn distance(&self, x: &Point, y: &Point) -> f64 {
        shape_distance(&self.preshape(x), &self.preshape(y))
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Point {
        let p = shape_exp(&self.preshape(x), &self.to_mat(v));
        self.to_vec(p.matrix())
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        let u = shape_log(&self.preshape(x), &self.preshape(y))?;
        Ok(self.to_vec(&u))
    }

    fn project_tangent(&self, x: &Point, w: &DVector<f64>) -> Tangent {
        let split = decompose_tangent(&self.preshape(x), &self.to_mat(w))
            .expect("pre-shape rank >= m-1 required for horizontal projection");
        self.to_vec(&split.horizontal)
    }

    fn transport(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
        if self.m != 2 {
            return Err(Error::Unsupported(
                "parallel transport is only available for planar shapes".into(),
            ));
        }
        let xp = self.preshape(x);
        let (y_al, alignment) = align(&xp, &self.preshape(y));
        let w = planar::transport_well_positioned(&xp, &y_al, &self.to_mat(v))?;
        // pull the vector back to the caller's representative of y
        let back = alignment.rotation.transpose() * w;
        Ok(self.to_vec(&back))
    }

    fn geodesic(&self, x: &Point, y: &Point, t: f64) -> Result<Point> {
        let p = shape_geodesic(&self.preshape(x), &self.preshape(y), t);
        Ok(self.to_vec(p.matrix()))
    }

    fn curvature(&self, x: &Point, u: &Tangent, v: &Tangent, w: &Tangent) -> Option<Tangent> {
        if self.m != 2 {
            return None;
        }
        planar::curvature(
            &self.preshape(x),
            &self.to_mat(u),
            &self.to_mat(v),
            &self.to_mat(w),
        )
        .ok()
        .map(|r| self.to_vec(&r))
    }

    /// Closed-form Jacobi fields of the planar shape space: the normal
    /// bundle along a geodesic splits into the parallel holomorphic line
    /// 𝒞γ̇ (sectional curvature 4, frequency-doubled sine profile) and its
    /// complement (curvature 1, spherical profile); tangential modes decay
    /// linearly. Falls back to finite differences for m ≥ 3 and near the
    /// φ = π/2 conjugate point.
    fn curve_adjoint(
        &self,
        x: &Point,
        y: &Point,
        terms: &[(f64, Tangent)],
    ) -> Result<Option<(Tangent, Tangent)>> {
        if self.m != 2 {
            return Ok(None);
        }
        let xp = self.preshape(x);
        let (y_al, alignment) = align(&xp, &self.preshape(y));
        let v = shape_log(&xp, &y_al)?;
        let phi = v.norm();
        let sin_2phi = (2.0 * phi).sin();
        if phi < 1e-8 || sin_2phi < 1e-6 {
            return Ok(None);
        }
        let sin_phi = phi.sin();
        let c = cmat();
        let e0 = &v / phi;
        let e1 = &e0 * phi.cos() - xp.matrix() * sin_phi;
        let ce0 = &c * &e0;
        let ce1 = &c * &e1;
        let mut gx = DMatrix::zeros(2, self.k);
        let mut gy = DMatrix::zeros(2, self.k);
        for (t, s) in terms {
            let s_mat = self.to_mat(s);
            let (st, ct) = (t * phi).sin_cos();
            let epar = &e0 * ct - xp.matrix() * st;
            let ec = &c * &epar;
            let a = s_mat.dot(&epar);
            let b = s_mat.dot(&ec);
            let s_rest = &s_mat - &epar * a - &ec * b;
            let pt = PreShape(xp.matrix() * ct + &e0 * st); // Φ(t), unit norm
            debug_assert!((pt.matrix().norm() - 1.0).abs() < 1e-9);
            let back_x = planar::transport_well_positioned(&pt, &xp, &s_rest)?;
            let back_y = planar::transport_well_positioned(&pt, &y_al, &s_rest)?;
            gx += &e0 * ((1.0 - t) * a)
                + &ce0 * (b * (2.0 * (1.0 - t) * phi).sin() / sin_2phi)
                + back_x * (((1.0 - t) * phi).sin() / sin_phi);
            gy += &e1 * (t * a)
                + &ce1 * (b * (2.0 * t * phi).sin() / sin_2phi)
                + back_y * ((t * phi).sin() / sin_phi);
        }
        // express the y-gradient at the caller's representative of y
        let gy_orig = alignment.rotation.transpose() * gy;
        Ok(Some((self.to_vec(&gx), self.to_vec(&gy_orig))))
    }
}
