//! Riemannian manifold interface with unit-sphere and Euclidean implementations.
//!
//! Points and tangent vectors are ambient coordinate vectors (`DVector<f64>`);
//! each manifold knows how to project, map and measure them. The sphere is
//! used both as the S² test manifold and as the backbone of the pre-shape
//! sphere in [`crate::kendall`].

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Tolerance for validating manifold membership of external inputs.
pub const POINT_TOL: f64 = 1e-9;

/// Gram-Schmidt rejection threshold for near-parallel basis candidates.
pub const BASIS_TOL: f64 = 1e-8;

/// Default step for central finite differences on manifolds.
pub const FD_STEP: f64 = 1e-5;

pub type Point = DVector<f64>;
pub type Tangent = DVector<f64>;

/// A Riemannian manifold with points embedded in Euclidean ambient space.
///
/// `exp` and `log` are mutually inverse within the injectivity radius.
/// The metric is the ambient inner product restricted to tangent spaces.
pub trait Manifold: Sync {
    /// Dimension of the ambient coordinate vectors.
    fn ambient_dim(&self) -> usize;

    /// Intrinsic dimension, i.e. the number of tangent basis vectors.
    fn intrinsic_dim(&self) -> usize;

    /// Lower bound on the injectivity radius (may be `f64::INFINITY`).
    fn injectivity_radius(&self) -> f64;

    /// Radius within which means and averaged geodesics are well defined:
    /// half of min(r_inj, π/√Δ) with Δ an upper curvature bound.
    fn convexity_radius(&self) -> f64 {
        self.injectivity_radius() / 2.0
    }

    /// Validates that `x` lies on the manifold within [`POINT_TOL`].
    fn check_point(&self, x: &Point) -> Result<()>;

    /// Validates that `v` is tangent at `x` within [`POINT_TOL`].
    fn check_tangent(&self, x: &Point, v: &Tangent) -> Result<()>;

    /// Geodesic distance.
    fn distance(&self, x: &Point, y: &Point) -> f64;

    /// Exponential map at `x`.
    fn exp(&self, x: &Point, v: &Tangent) -> Point;

    /// Logarithm map at `x`; fails where no unique minimizing geodesic exists.
    fn log(&self, x: &Point, y: &Point) -> Result<Tangent>;

    /// Orthogonal projection of an ambient vector onto the tangent space at `x`.
    fn project_tangent(&self, x: &Point, w: &DVector<f64>) -> Tangent;

    /// Parallel transport of `v` along the geodesic from `x` to `y`.
    fn transport(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent>;

    /// Point at parameter `t` on the geodesic from `x` (t=0) to `y` (t=1).
    /// `t` outside `[0,1]` extrapolates.
    fn geodesic(&self, x: &Point, y: &Point, t: f64) -> Result<Point> {
        let v = self.log(x, y)?;
        Ok(self.exp(x, &(v * t)))
    }

    /// Curvature tensor R(u,v)w at `x`, if this manifold exposes one.
    fn curvature(&self, _x: &Point, _u: &Tangent, _v: &Tangent, _w: &Tangent) -> Option<Tangent> {
        None
    }

    /// Adjoint differential of the curve map Φ(x,y,t) = exp_x(t log_x y):
    /// pulls cotangents s_i at Φ(x,y,tᵢ) back to the endpoints,
    /// accumulating Σᵢ (dΦ/dx)*sᵢ and Σᵢ (dΦ/dy)*sᵢ.
    ///
    /// `Ok(None)` means no closed form is available; callers fall back to
    /// finite differences. Implementations use closed-form Jacobi fields.
    fn curve_adjoint(
        &self,
        _x: &Point,
        _y: &Point,
        _terms: &[(f64, Tangent)],
    ) -> Result<Option<(Tangent, Tangent)>> {
        Ok(None)
    }

    fn inner(&self, _x: &Point, u: &Tangent, v: &Tangent) -> f64 {
        u.dot(v)
    }

    fn norm(&self, x: &Point, v: &Tangent) -> f64 {
        self.inner(x, v, v).sqrt()
    }

    /// Orthonormal basis of the tangent space at `x`.
    ///
    /// Built by Gram-Schmidt over the ambient basis vectors, skipping
    /// candidates whose tangential residual falls below [`BASIS_TOL`];
    /// deterministic and dimension-agnostic.
    fn tangent_basis(&self, x: &Point) -> Vec<Tangent> {
        let n = self.ambient_dim();
        let d = self.intrinsic_dim();
        let mut basis: Vec<Tangent> = Vec::with_capacity(d);
        for i in 0..n {
            if basis.len() == d {
                break;
            }
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            let mut w = self.project_tangent(x, &e);
            for b in &basis {
                let c = w.dot(b);
                w.axpy(-c, b, 1.0);
            }
            let nw = w.norm();
            if nw > BASIS_TOL {
                basis.push(w / nw);
            }
        }
        basis
    }
}

/// Riemannian gradient of a scalar field by central finite differences.
///
/// Differences `f` along `exp_x` over an orthonormal tangent basis; agrees
/// with analytic gradients to O(h²).
pub fn gradient_fd<M, F>(manifold: &M, f: F, x: &Point, h: f64) -> Tangent
where
    M: Manifold + ?Sized,
    F: Fn(&Point) -> f64,
{
    let basis = manifold.tangent_basis(x);
    let mut grad = DVector::zeros(manifold.ambient_dim());
    for e in &basis {
        let fp = f(&manifold.exp(x, &(e * h)));
        let fm = f(&manifold.exp(x, &(e * -h)));
        grad.axpy((fp - fm) / (2.0 * h), e, 1.0);
    }
    grad
}

fn clamp_unit(t: f64) -> f64 {
    t.clamp(-1.0, 1.0)
}

/// Angle between unit vectors, accurate near zero.
///
/// The chordal form 2 asin(|x-y|/2) resolves small angles to machine
/// precision where arccos of the inner product loses half the digits.
pub(crate) fn unit_angle(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    if x.dot(y) >= 0.0 {
        2.0 * ((x - y).norm() / 2.0).clamp(-1.0, 1.0).asin()
    } else {
        clamp_unit(x.dot(y)).acos()
    }
}

/// Unit sphere S^{d} embedded in R^{d+1}, sectional curvature +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sphere {
    ambient: usize,
}

impl Sphere {
    /// Sphere with the given ambient dimension (d+1 coordinates).
    pub fn new(ambient: usize) -> Self {
        assert!(ambient >= 2, "sphere needs ambient dimension >= 2");
        Sphere { ambient }
    }

    /// The 2-sphere in R³.
    pub fn s2() -> Self {
        Sphere::new(3)
    }

    /// Closed-form spherical linear interpolation with extrapolation.
    ///
    /// Returns `x` for all `t` when the points coincide and fails when
    /// they are antipodal (no unique great circle).
    pub fn slerp(&self, x: &Point, y: &Point, t: f64) -> Result<Point> {
        if x == y {
            return Ok(x.clone());
        }
        let c = clamp_unit(x.dot(y));
        let phi = c.acos();
        if phi < 1e-9 {
            // nearly equal points: normalized lerp is exact to O(phi^2)
            let mut p = x * (1.0 - t) + y * t;
            let n = p.norm();
            if n < 1e-12 {
                return Ok(x.clone());
            }
            p /= n;
            return Ok(p);
        }
        if std::f64::consts::PI - phi < 1e-9 {
            return Err(Error::Domain(
                "slerp undefined for antipodal endpoints".into(),
            ));
        }
        let s = phi.sin();
        let mut p = x * (((1.0 - t) * phi).sin() / s) + y * ((t * phi).sin() / s);
        p.normalize_mut();
        Ok(p)
    }
}

impl Manifold for Sphere {
    fn ambient_dim(&self) -> usize {
        self.ambient
    }

    fn intrinsic_dim(&self) -> usize {
        self.ambient - 1
    }

    fn injectivity_radius(&self) -> f64 {
        std::f64::consts::PI
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.len() != self.ambient {
            return Err(Error::InvalidInput(format!(
                "expected {} coordinates, got {}",
                self.ambient,
                x.len()
            )));
        }
        if (x.norm() - 1.0).abs() > POINT_TOL {
            return Err(Error::InvalidInput(format!(
                "point is not unit-norm (|x| = {})",
                x.norm()
            )));
        }
        Ok(())
    }

    fn check_tangent(&self, x: &Point, v: &Tangent) -> Result<()> {
        self.check_point(x)?;
        if v.len() != self.ambient {
            return Err(Error::InvalidInput("tangent dimension mismatch".into()));
        }
        if x.dot(v).abs() > POINT_TOL * v.norm().max(1.0) {
            return Err(Error::InvalidInput(
                "vector is not tangent (not orthogonal to base point)".into(),
            ));
        }
        Ok(())
    }

    fn distance(&self, x: &Point, y: &Point) -> f64 {
        unit_angle(x, y)
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Point {
        let phi = v.norm();
        if phi == 0.0 {
            return x.clone();
        }
        if phi < 1e-12 {
            let mut p = x + v;
            p.normalize_mut();
            return p;
        }
        let mut p = x * phi.cos() + v * (phi.sin() / phi);
        p.normalize_mut();
        p
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        let c = clamp_unit(x.dot(y));
        let phi = unit_angle(x, y);
        let perp = y - x * c;
        let n = perp.norm();
        if n < 1e-12 {
            if c > 0.0 {
                return Ok(DVector::zeros(self.ambient));
            }
            return Err(Error::Antipodal);
        }
        Ok(perp * (phi / n))
    }

    fn project_tangent(&self, x: &Point, w: &DVector<f64>) -> Tangent {
        w - x * x.dot(w)
    }

    fn transport(&self, x: &Point, y: &Point, v: &Tangent) -> Result<Tangent> {
        let u = self.log(x, y)?;
        let phi = u.norm();
        if phi < 1e-12 {
            return Ok(v.clone());
        }
        let e = u / phi;
        let a = v.dot(&e);
        // tangential component along the geodesic rotates in the (e, x) plane
        Ok(v + &e * (a * (phi.cos() - 1.0)) - x * (a * phi.sin()))
    }

    fn geodesic(&self, x: &Point, y: &Point, t: f64) -> Result<Point> {
        self.slerp(x, y, t)
    }

    fn curvature(&self, _x: &Point, u: &Tangent, v: &Tangent, w: &Tangent) -> Option<Tangent> {
        // constant curvature one: R(u,v)w = <v,w>u - <u,w>v
        Some(u * v.dot(w) - v * u.dot(w))
    }

    /// Closed-form Jacobi fields of the unit sphere: tangential modes decay
    /// linearly, normal modes as sin((1−t)φ)/sin φ; normal directions are
    /// orthogonal to the geodesic plane and transport trivially.
    fn curve_adjoint(
        &self,
        x: &Point,
        y: &Point,
        terms: &[(f64, Tangent)],
    ) -> Result<Option<(Tangent, Tangent)>> {
        let v = self.log(x, y)?;
        let phi = v.norm();
        if phi < 1e-8 {
            return Ok(None);
        }
        let e0 = &v / phi;
        let sin_phi = phi.sin();
        let e1 = &e0 * phi.cos() - x * sin_phi; // geodesic direction at y
        let mut gx = DVector::zeros(self.ambient);
        let mut gy = DVector::zeros(self.ambient);
        for (t, s) in terms {
            let (st, ct) = (t * phi).sin_cos();
            let epar = &e0 * ct - x * st;
            let a = s.dot(&epar);
            let sperp = s - &epar * a;
            gx.axpy((1.0 - t) * a, &e0, 1.0);
            gx.axpy(((1.0 - t) * phi).sin() / sin_phi, &sperp, 1.0);
            gy.axpy(t * a, &e1, 1.0);
            gy.axpy((t * phi).sin() / sin_phi, &sperp, 1.0);
        }
        Ok(Some((gx, gy)))
    }
}

/// Flat Euclidean space R^d; geodesics are straight lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Euclidean {
    dim: usize,
}

impl Euclidean {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Euclidean { dim }
    }
}

impl Manifold for Euclidean {
    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn intrinsic_dim(&self) -> usize {
        self.dim
    }

    fn injectivity_radius(&self) -> f64 {
        f64::INFINITY
    }

    fn check_point(&self, x: &Point) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "expected {} coordinates, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }

    fn check_tangent(&self, x: &Point, v: &Tangent) -> Result<()> {
        self.check_point(x)?;
        self.check_point(v)
    }

    fn distance(&self, x: &Point, y: &Point) -> f64 {
        (x - y).norm()
    }

    fn exp(&self, x: &Point, v: &Tangent) -> Point {
        x + v
    }

    fn log(&self, x: &Point, y: &Point) -> Result<Tangent> {
        Ok(y - x)
    }

    fn project_tangent(&self, _x: &Point, w: &DVector<f64>) -> Tangent {
        w.clone()
    }

    fn transport(&self, _x: &Point, _y: &Point, v: &Tangent) -> Result<Tangent> {
        Ok(v.clone())
    }

    fn geodesic(&self, x: &Point, y: &Point, t: f64) -> Result<Point> {
        Ok(x * (1.0 - t) + y * t)
    }

    fn curvature(&self, _x: &Point, _u: &Tangent, _v: &Tangent, _w: &Tangent) -> Option<Tangent> {
        Some(DVector::zeros(self.dim))
    }

    fn curve_adjoint(
        &self,
        _x: &Point,
        _y: &Point,
        terms: &[(f64, Tangent)],
    ) -> Result<Option<(Tangent, Tangent)>> {
        let mut gx = DVector::zeros(self.dim);
        let mut gy = DVector::zeros(self.dim);
        for (t, s) in terms {
            gx.axpy(1.0 - t, s, 1.0);
            gy.axpy(*t, s, 1.0);
        }
        Ok(Some((gx, gy)))
    }
}
