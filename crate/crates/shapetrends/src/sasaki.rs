//! Sasaki metric on the tangent bundle: exponential by geodesic integration,
//! log by shooting, and the Karcher mean.
//!
//! Sasaki geodesics follow the curvature-coupled system ∇_v v = −R(u,w,v),
//! ∇_v w = 0 and are integrated by a first-order scheme in a parallel
//! frame, which keeps every state on the manifold at every step. This is
//! the baseline the functional L² approach is compared against; it needs
//! the curvature tensor, so it is available on spheres, planar Kendall
//! space and flat space only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geodesic_space::GeodesicPoint;
use crate::manifold::{Manifold, Point, Tangent};

/// A point of the tangent bundle: footpoint plus tangent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct BundlePoint {
    pub p: Point,
    pub u: Tangent,
}

/// A tangent vector of the bundle at some footpoint: horizontal part `v`
/// (footpoint velocity) and vertical part `w` (fiber velocity).
#[derive(Debug, Clone, PartialEq)]
pub struct BundleVector {
    pub v: Tangent,
    pub w: Tangent,
}

impl BundleVector {
    pub fn norm(&self) -> f64 {
        (self.v.norm_squared() + self.w.norm_squared()).sqrt()
    }

    pub fn zero(dim: usize) -> Self {
        BundleVector {
            v: DVector::zeros(dim),
            w: DVector::zeros(dim),
        }
    }
}

/// Tunables for integration, shooting and averaging.
#[derive(Debug, Clone, Copy)]
pub struct SasakiOptions {
    /// Integration steps over s ∈ [0,1].
    pub steps: usize,
    /// Residual tolerance of the shooting solver.
    pub shoot_tol: f64,
    pub max_shoot_iter: usize,
    /// Forward-difference step for the shooting Jacobian.
    pub fd_step: f64,
    /// Karcher update tolerance.
    pub mean_tol: f64,
    pub max_mean_iter: usize,
}

impl Default for SasakiOptions {
    fn default() -> Self {
        SasakiOptions {
            steps: 100,
            shoot_tol: 1e-10,
            max_shoot_iter: 60,
            fd_step: 1e-6,
            mean_tol: 1e-9,
            max_mean_iter: 100,
        }
    }
}

fn require_curvature<M: Manifold + ?Sized>(manifold: &M, at: &Point) -> Result<()> {
    let z = DVector::zeros(manifold.ambient_dim());
    if manifold.curvature(at, &z, &z, &z).is_none() {
        return Err(Error::Unsupported(
            "Sasaki geodesics need a curvature tensor on this manifold".into(),
        ));
    }
    Ok(())
}

/// Sasaki exponential map by geodesic Euler with a parallel-transported
/// frame: advance the footpoint by exp, transport the state, step the fiber
/// by h·w and bend the velocity by the curvature term. Conserves
/// ‖v‖² + ‖w‖² up to O(h).
pub fn sasaki_exp<M: Manifold + ?Sized>(
    manifold: &M,
    base: &BundlePoint,
    vec: &BundleVector,
    steps: usize,
) -> Result<BundlePoint> {
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one integration step".into()));
    }
    require_curvature(manifold, &base.p)?;
    let h = 1.0 / steps as f64;
    let mut p = base.p.clone();
    let mut u = base.u.clone();
    let mut v = vec.v.clone();
    let mut w = vec.w.clone();
    for _ in 0..steps {
        let p_next = manifold.exp(&p, &(&v * h));
        u = manifold.project_tangent(&p_next, &manifold.transport(&p, &p_next, &u)?);
        v = manifold.project_tangent(&p_next, &manifold.transport(&p, &p_next, &v)?);
        w = manifold.project_tangent(&p_next, &manifold.transport(&p, &p_next, &w)?);
        u.axpy(h, &w, 1.0);
        let bend = manifold
            .curvature(&p_next, &u, &w, &v)
            .expect("curvature checked above");
        v.axpy(-h, &bend, 1.0);
        p = p_next;
    }
    Ok(BundlePoint { p, u })
}

/// Coordinates of the mismatch between `reached` and `target`, measured at
/// the reached footpoint: intrinsic footpoint offset plus fiber offset
/// after transporting the target's vector over.
fn shooting_residual<M: Manifold + ?Sized>(
    manifold: &M,
    reached: &BundlePoint,
    target: &BundlePoint,
    basis: &[Tangent],
) -> Result<DVector<f64>> {
    let foot = manifold.log(&reached.p, &target.p)?;
    let fiber = manifold.transport(&target.p, &reached.p, &target.u)? - &reached.u;
    let d = basis.len();
    let mut r = DVector::zeros(2 * d);
    for (j, e) in basis.iter().enumerate() {
        r[j] = foot.dot(e);
        r[d + j] = fiber.dot(e);
    }
    Ok(r)
}

/// Sasaki log map by damped Gauss–Newton shooting on the 2·dim(M) unknown.
///
/// Converges for targets within the shooting basin of the base; the result
/// reproduces `target` under [`sasaki_exp`] within the shooting tolerance.
pub fn sasaki_log<M: Manifold + ?Sized>(
    manifold: &M,
    base: &BundlePoint,
    target: &BundlePoint,
    opts: &SasakiOptions,
) -> Result<BundleVector> {
    require_curvature(manifold, &base.p)?;
    let basis = manifold.tangent_basis(&base.p);
    let d = basis.len();

    // first-order initial guess: connect footpoints, compare fibers at base
    let v0 = manifold.log(&base.p, &target.p)?;
    let w0 = manifold.transport(&target.p, &base.p, &target.u)? - &base.u;
    let mut xi = DVector::zeros(2 * d);
    for (j, e) in basis.iter().enumerate() {
        xi[j] = v0.dot(e);
        xi[d + j] = w0.dot(e);
    }

    let assemble = |xi: &DVector<f64>| -> BundleVector {
        let mut v = DVector::zeros(manifold.ambient_dim());
        let mut w = DVector::zeros(manifold.ambient_dim());
        for (j, e) in basis.iter().enumerate() {
            v.axpy(xi[j], e, 1.0);
            w.axpy(xi[d + j], e, 1.0);
        }
        BundleVector { v, w }
    };
    let residual = |xi: &DVector<f64>| -> Result<DVector<f64>> {
        let reached = sasaki_exp(manifold, base, &assemble(xi), opts.steps)?;
        let rbasis = manifold.tangent_basis(&reached.p);
        shooting_residual(manifold, &reached, target, &rbasis)
    };

    let mut r = residual(&xi)?;
    let mut rn = r.norm();
    for _ in 0..opts.max_shoot_iter {
        if rn <= opts.shoot_tol {
            return Ok(assemble(&xi));
        }
        // forward-difference Jacobian of the residual
        let mut jac = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..2 * d {
            let mut xp = xi.clone();
            xp[i] += opts.fd_step;
            let rp = residual(&xp)?;
            for j in 0..2 * d {
                jac[(j, i)] = (rp[j] - r[j]) / opts.fd_step;
            }
        }
        let delta = jac
            .lu()
            .solve(&(-&r))
            .ok_or_else(|| Error::NonConvergence {
                context: "singular shooting Jacobian".into(),
                residual: rn,
            })?;
        // damping: halve until the residual decreases
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &xi + &delta * alpha;
            if let Ok(rc) = residual(&cand) {
                if rc.norm() < rn {
                    xi = cand;
                    r = rc;
                    rn = r.norm();
                    improved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if rn <= opts.shoot_tol {
        Ok(assemble(&xi))
    } else {
        Err(Error::NonConvergence {
            context: "Sasaki log shooting".into(),
            residual: rn,
        })
    }
}

/// Karcher mean on the tangent bundle: average the Sasaki logs at the
/// current estimate and step along the Sasaki exponential until the update
/// norm drops below tolerance.
pub fn sasaki_mean<M: Manifold + ?Sized>(
    manifold: &M,
    points: &[BundlePoint],
    opts: &SasakiOptions,
) -> Result<BundlePoint> {
    if points.is_empty() {
        return Err(Error::InvalidInput("mean of an empty set".into()));
    }
    if points.len() == 1 {
        return Ok(points[0].clone());
    }
    let mut mean = points[0].clone();
    let dim = manifold.ambient_dim();
    for _ in 0..opts.max_mean_iter {
        let mut avg = BundleVector::zero(dim);
        for p in points {
            let l = sasaki_log(manifold, &mean, p, opts)?;
            avg.v.axpy(1.0 / points.len() as f64, &l.v, 1.0);
            avg.w.axpy(1.0 / points.len() as f64, &l.w, 1.0);
        }
        if avg.norm() <= opts.mean_tol {
            return Ok(mean);
        }
        mean = sasaki_exp(manifold, &mean, &avg, opts.steps)?;
    }
    Err(Error::NonConvergence {
        context: "Sasaki mean iteration".into(),
        residual: f64::NAN,
    })
}

/// Endpoint pair (x, y) to tangent-bundle representation (x, log_x y).
pub fn bundle_from_geodesic<M: Manifold + ?Sized>(
    manifold: &M,
    g: &GeodesicPoint,
) -> Result<BundlePoint> {
    Ok(BundlePoint {
        p: g.x.clone(),
        u: manifold.log(&g.x, &g.y)?,
    })
}

/// Tangent-bundle point back to its endpoint pair.
pub fn geodesic_from_bundle<M: Manifold + ?Sized>(manifold: &M, b: &BundlePoint) -> GeodesicPoint {
    GeodesicPoint {
        x: b.p.clone(),
        y: manifold.exp(&b.p, &b.u),
    }
}
