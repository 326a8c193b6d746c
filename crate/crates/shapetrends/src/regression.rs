//! Geodesic regression, Fréchet means and tangent PCA over any [`Manifold`].
//!
//! The first stage of the hierarchical trend model: each subject's
//! time-stamped observations are summarized by the best-fitting geodesic,
//! found by Riemannian steepest descent with Armijo backtracking on the
//! endpoint parametrization Φ(x,y,t) = exp_x(t log_x y).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic_space::GeodesicPoint;
use crate::manifold::{Manifold, Point, Tangent};

/// One subject's time-stamped observations on a manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub subject_id: String,
    times: Vec<f64>,
    observations: Vec<Point>,
}

impl Trajectory {
    pub fn new(subject_id: impl Into<String>, times: Vec<f64>, observations: Vec<Point>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidInput(
                "a trajectory needs at least two observations".into(),
            ));
        }
        if times.len() != observations.len() {
            return Err(Error::InvalidInput(format!(
                "{} times but {} observations",
                times.len(),
                observations.len()
            )));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "observation times must be strictly increasing".into(),
            ));
        }
        Ok(Trajectory {
            subject_id: subject_id.into(),
            times,
            observations,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn observations(&self) -> &[Point] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 2 by construction
    }
}

/// Affine map sending the smallest time to 0 and the largest to 1.
pub fn normalize_times(times: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
            (lo.min(t), hi.max(t))
        });
    if !(hi - lo).is_finite() || hi - lo <= 0.0 {
        return Err(Error::InvalidInput(
            "cannot normalize times: no spread".into(),
        ));
    }
    Ok(times.iter().map(|&t| (t - lo) / (hi - lo)).collect())
}

/// Options for the geodesic least-squares solver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop when the Riemannian gradient norm falls below this.
    pub gradient_tol: f64,
    pub max_iter: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Backtracking shrink factor.
    pub shrink: f64,
    /// Step for finite-difference differentiation of the curve map.
    pub fd_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            gradient_tol: 1e-8,
            max_iter: 500,
            armijo_c: 1e-4,
            shrink: 0.5,
            fd_step: 1e-5,
        }
    }
}

/// Result of a weighted geodesic least-squares fit.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub geodesic: GeodesicPoint,
    /// Final value of the weighted sum of squared distances.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after every accepted step, starting with the initial
    /// value; non-increasing.
    pub history: Vec<f64>,
}

/// Weighted squared-distance objective F(x,y) = Σ wᵢ d²(qᵢ, Φ(x,y,tᵢ)).
fn objective<M: Manifold + ?Sized>(
    manifold: &M,
    data: &[(f64, Point, f64)],
    x: &Point,
    y: &Point,
) -> Result<f64> {
    let v = manifold.log(x, y)?;
    let mut f = 0.0;
    for (t, q, w) in data {
        let p = manifold.exp(x, &(&v * *t));
        let d = manifold.distance(&p, q);
        f += w * d * d;
    }
    Ok(f)
}

/// Gradient of F assembled from the distance-gradient identity
/// ∇ρ_q(p) = −2 log_p q applied at the curve points, pulled back to the
/// endpoints through the adjoint differential of the curve map: closed-form
/// Jacobi fields where the manifold provides them, otherwise central finite
/// differences of Φ in each endpoint over an orthonormal tangent basis.
fn assembled_gradient<M: Manifold + ?Sized>(
    manifold: &M,
    data: &[(f64, Point, f64)],
    x: &Point,
    y: &Point,
    h: f64,
) -> Result<(Tangent, Tangent)> {
    let v = manifold.log(x, y)?;
    let mut sens: Vec<(f64, Tangent)> = Vec::with_capacity(data.len());
    for (t, q, w) in data {
        let p = manifold.exp(x, &(&v * *t));
        sens.push((*t, manifold.log(&p, q)? * (-2.0 * w)));
    }
    if let Some(grads) = manifold.curve_adjoint(x, y, &sens)? {
        return Ok(grads);
    }

    let n = manifold.ambient_dim();
    let mut grad_x = DVector::zeros(n);
    for e in manifold.tangent_basis(x) {
        let xp = manifold.exp(x, &(&e * h));
        let xm = manifold.exp(x, &(&e * -h));
        let vp = manifold.log(&xp, y)?;
        let vm = manifold.log(&xm, y)?;
        let mut g = 0.0;
        for (t, s) in &sens {
            let dp = (manifold.exp(&xp, &(&vp * *t)) - manifold.exp(&xm, &(&vm * *t))) / (2.0 * h);
            g += s.dot(&dp);
        }
        grad_x.axpy(g, &e, 1.0);
    }
    let mut grad_y = DVector::zeros(n);
    for e in manifold.tangent_basis(y) {
        let yp = manifold.exp(y, &(&e * h));
        let ym = manifold.exp(y, &(&e * -h));
        let vp = manifold.log(x, &yp)?;
        let vm = manifold.log(x, &ym)?;
        let mut g = 0.0;
        for (t, s) in &sens {
            let dp = (manifold.exp(x, &(&vp * *t)) - manifold.exp(x, &(&vm * *t))) / (2.0 * h);
            g += s.dot(&dp);
        }
        grad_y.axpy(g, &e, 1.0);
    }
    Ok((grad_x, grad_y))
}

/// Minimizes the weighted squared-distance objective over endpoint pairs.
///
/// Steepest descent on M×M with Armijo backtracking; the objective is
/// non-increasing across iterations. Non-convergence within `max_iter`
/// returns the best iterate with `converged = false`.
pub fn fit_geodesic<M: Manifold + ?Sized>(
    manifold: &M,
    data: &[(f64, Point, f64)],
    init: (Point, Point),
    opts: &FitOptions,
) -> Result<FitOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidInput("no data to fit".into()));
    }
    let (mut x, mut y) = init;
    let mut f = objective(manifold, data, &x, &y)?;
    let mut history = vec![f];
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it;
        let (gx, gy) = assembled_gradient(manifold, data, &x, &y, opts.fd_step)?;
        let slope = gx.norm_squared() + gy.norm_squared();
        if slope.sqrt() <= opts.gradient_tol {
            converged = true;
            break;
        }
        // backtracking from a step that grows again after each success
        let mut alpha = (step * 2.0).min(1e3);
        let mut accepted = false;
        while alpha * slope.sqrt() > 1e-17 {
            let xc = manifold.exp(&x, &(&gx * -alpha));
            let yc = manifold.exp(&y, &(&gy * -alpha));
            match objective(manifold, data, &xc, &yc) {
                Ok(fc) if fc <= f - opts.armijo_c * alpha * slope => {
                    x = xc;
                    y = yc;
                    f = fc;
                    step = alpha;
                    accepted = true;
                    break;
                }
                _ => alpha *= opts.shrink,
            }
        }
        if !accepted {
            // no productive step available; gradient is at noise level
            break;
        }
        debug_assert!(f <= history[history.len() - 1] + 1e-15);
        history.push(f);
    }

    Ok(FitOutcome {
        geodesic: GeodesicPoint { x, y },
        value: f,
        iterations,
        converged,
        history,
    })
}

/// A fitted per-subject geodesic trend with its goodness of fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedGeodesic {
    pub geodesic: GeodesicPoint,
    /// Minimum of the regression objective.
    pub f_min: f64,
    /// Minimum of the pointwise objective about the Fréchet mean.
    pub g_min: f64,
    /// Coefficient of determination 1 − f_min/g_min.
    pub r_squared: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits a geodesic to one subject's trajectory in the least-squares sense.
///
/// Times are normalized to [0,1]; the observation pair at the extreme times
/// serves as the initial guess. `weights` multiply the squared distances
/// term-wise (all ones by default).
pub fn geodesic_regression<M: Manifold + ?Sized>(
    manifold: &M,
    traj: &Trajectory,
    weights: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<FittedGeodesic> {
    let times = normalize_times(traj.times())?;
    let obs = traj.observations();
    if let Some(w) = weights {
        if w.len() != obs.len() {
            return Err(Error::InvalidInput("weight count mismatch".into()));
        }
    }
    let ones = vec![1.0; obs.len()];
    let w = weights.unwrap_or(&ones);

    // observations should sit well inside a convex ball for the fit to be
    // uniquely defined
    let radius = manifold.injectivity_radius() / 2.0;
    let mut max_d: f64 = 0.0;
    for i in 0..obs.len() {
        for j in (i + 1)..obs.len() {
            max_d = max_d.max(manifold.distance(&obs[i], &obs[j]));
        }
    }
    if max_d >= radius {
        log::warn!(
            "trajectory {}: observation spread {max_d:.4} exceeds the convex ball bound {radius:.4}",
            traj.subject_id
        );
    }

    let data: Vec<(f64, Point, f64)> = times
        .iter()
        .zip(obs.iter())
        .zip(w.iter())
        .map(|((t, q), w)| (*t, q.clone(), *w))
        .collect();
    let init = (obs[0].clone(), obs[obs.len() - 1].clone());
    let fit = fit_geodesic(manifold, &data, init, opts)?;

    let mean = frechet_mean(manifold, obs, Some(w), &MeanOptions::default())?;
    let g_min: f64 = obs
        .iter()
        .zip(w.iter())
        .map(|(q, w)| {
            let d = manifold.distance(&mean, q);
            w * d * d
        })
        .sum();
    let r2 = r_squared(fit.value, g_min)?;
    Ok(FittedGeodesic {
        geodesic: fit.geodesic,
        f_min: fit.value,
        g_min,
        r_squared: r2,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

/// Coefficient of determination R² = 1 − F_min/G_min, clamped to [0,1].
pub fn r_squared(f_min: f64, g_min: f64) -> Result<f64> {
    if g_min <= 0.0 {
        return Err(Error::UndefinedVariance);
    }
    if f_min < 0.0 || f_min > g_min * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= f_min <= g_min, got f_min = {f_min}, g_min = {g_min}"
        )));
    }
    Ok((1.0 - f_min / g_min).clamp(0.0, 1.0))
}

/// Options for the iterative tangent-averaging mean.
#[derive(Debug, Clone, Copy)]
pub struct MeanOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MeanOptions {
    fn default() -> Self {
        MeanOptions {
            tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Fréchet mean by iterative tangent averaging (Karcher iteration).
///
/// Warns when the point spread violates the convex-ball bound; returns the
/// local minimizer of the weighted sum of squared distances.
pub fn frechet_mean<M: Manifold + ?Sized>(
    manifold: &M,
    points: &[Point],
    weights: Option<&[f64]>,
    opts: &MeanOptions,
) -> Result<Point> {
    if points.is_empty() {
        return Err(Error::InvalidInput("mean of an empty set".into()));
    }
    if points.len() == 1 {
        return Ok(points[0].clone());
    }
    let ones = vec![1.0; points.len()];
    let w = weights.unwrap_or(&ones);
    if w.len() != points.len() {
        return Err(Error::InvalidInput("weight count mismatch".into()));
    }
    let w_total: f64 = w.iter().sum();
    if w_total <= 0.0 {
        return Err(Error::InvalidInput("weights must have positive sum".into()));
    }

    let radius = manifold.injectivity_radius() / 2.0;
    let mut spread: f64 = 0.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            spread = spread.max(manifold.distance(&points[i], &points[j]));
        }
    }
    if spread >= radius {
        log::warn!("point spread {spread:.4} exceeds the convex ball bound {radius:.4}");
    }

    let mut mean = points[0].clone();
    for _ in 0..opts.max_iter {
        let mut avg = DVector::zeros(manifold.ambient_dim());
        for (p, wi) in points.iter().zip(w.iter()) {
            avg.axpy(wi / w_total, &manifold.log(&mean, p)?, 1.0);
        }
        if avg.norm() <= opts.tol {
            return Ok(mean);
        }
        mean = manifold.exp(&mean, &avg);
    }
    Err(Error::NonConvergence {
        context: "Fréchet mean iteration".into(),
        residual: f64::NAN,
    })
}

/// Principal geodesic directions at the Fréchet mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TangentPca {
    pub mean: Point,
    /// Full eigenvalue spectrum of the empirical tangent covariance,
    /// in decreasing order.
    pub eigenvalues: Vec<f64>,
    /// The leading principal directions as ambient tangent vectors at the mean.
    pub components: Vec<Tangent>,
    /// Per-point coordinates along the leading directions.
    pub scores: Vec<Vec<f64>>,
}

/// Tangent PCA: log-map the points at their Fréchet mean, flatten over an
/// orthonormal tangent basis, and eigendecompose the (1/N) covariance.
pub fn tangent_pca<M: Manifold + ?Sized>(
    manifold: &M,
    points: &[Point],
    n_components: usize,
) -> Result<TangentPca> {
    if points.len() < 2 {
        return Err(Error::InvalidInput("tangent PCA needs at least 2 points".into()));
    }
    let mean = frechet_mean(manifold, points, None, &MeanOptions::default())?;
    let basis = manifold.tangent_basis(&mean);
    let d = basis.len();
    let n = points.len();
    let mut z = DMatrix::zeros(n, d);
    for (i, p) in points.iter().enumerate() {
        let v = manifold.log(&mean, p)?;
        for (j, e) in basis.iter().enumerate() {
            z[(i, j)] = v.dot(e);
        }
    }
    let cov = z.transpose() * &z / (n as f64);
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let rank = eigenvalues
        .iter()
        .filter(|&&l| l > eigenvalues[0].max(0.0) * 1e-12)
        .count();
    let keep = n_components.min(d);
    if n_components > rank {
        log::warn!("requested {n_components} components but spectrum has rank {rank}; truncating");
    }

    let mut components = Vec::with_capacity(keep);
    let mut dirs = Vec::with_capacity(keep);
    for &i in order.iter().take(keep) {
        let col = eig.eigenvectors.column(i);
        let mut ambient = DVector::zeros(manifold.ambient_dim());
        for (j, e) in basis.iter().enumerate() {
            ambient.axpy(col[j], e, 1.0);
        }
        components.push(ambient);
        dirs.push(col.clone_owned());
    }
    let scores = (0..n)
        .map(|i| {
            dirs.iter()
                .map(|dir| z.row(i).transpose().dot(dir))
                .collect()
        })
        .collect();
    Ok(TangentPca {
        mean,
        eigenvalues,
        components,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{gradient_fd, Euclidean, Sphere};
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_point(s: &Sphere, rng: &mut impl Rng) -> Point {
        let mut v = DVector::from_fn(s.ambient_dim(), |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        v.normalize_mut();
        v
    }

    fn tangent_at(s: &Sphere, x: &Point, rng: &mut impl Rng) -> Tangent {
        s.project_tangent(x, &random_point(s, rng))
    }

    #[test]
    fn normalize_times_rats_ages() {
        let ages = [7.0, 14.0, 21.0, 30.0, 40.0, 60.0, 90.0, 150.0];
        let t = normalize_times(&ages).unwrap();
        for (a, b) in ages.iter().zip(t.iter()) {
            assert_relative_eq!(*b, (a - 7.0) / 143.0, epsilon = 1e-15);
        }
        assert_eq!(t[0], 0.0);
        assert_eq!(t[7], 1.0);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(normalize_times(&[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(normalize_times(&[3.0, 3.0]).is_err());
    }

    #[test]
    fn perfect_fit_on_geodesic_samples() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = random_point(&s, &mut rng);
        let mut v = tangent_at(&s, &x, &mut rng);
        v *= 0.9 / v.norm();
        let times = vec![0.0, 0.15, 0.4, 0.55, 0.8, 1.0];
        let obs: Vec<Point> = times.iter().map(|&t| s.exp(&x, &(&v * t))).collect();
        let traj = Trajectory::new("synthetic", times, obs).unwrap();
        let fit = geodesic_regression(&s, &traj, None, &FitOptions::default()).unwrap();
        assert!(fit.f_min <= 1e-10, "f_min = {}", fit.f_min);
        assert!(fit.r_squared > 1.0 - 1e-8);
        assert!(fit.converged);
    }

    #[test]
    fn two_point_fit_interpolates() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let a = random_point(&s, &mut rng);
        let b = random_point(&s, &mut rng);
        let traj = Trajectory::new("pair", vec![3.0, 9.0], vec![a.clone(), b.clone()]).unwrap();
        let fit = geodesic_regression(&s, &traj, None, &FitOptions::default()).unwrap();
        assert!(fit.f_min <= 1e-10);
        assert!(s.distance(&fit.geodesic.x, &a) < 1e-7);
        assert!(s.distance(&fit.geodesic.y, &b) < 1e-7);
    }

    #[test]
    fn objective_history_is_monotone() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let x = random_point(&s, &mut rng);
        let mut v = tangent_at(&s, &x, &mut rng);
        v *= 0.8 / v.norm();
        let times: Vec<f64> = (0..7).map(|i| i as f64 / 6.0).collect();
        let obs: Vec<Point> = times
            .iter()
            .map(|&t| {
                let p = s.exp(&x, &(&v * t));
                let noise = s.project_tangent(&p, &random_point(&s, &mut rng)) * 0.05;
                s.exp(&p, &noise)
            })
            .collect();
        let data: Vec<(f64, Point, f64)> =
            times.iter().zip(obs.iter()).map(|(t, q)| (*t, q.clone(), 1.0)).collect();
        let fit = fit_geodesic(
            &s,
            &data,
            (obs[0].clone(), obs[6].clone()),
            &FitOptions::default(),
        )
        .unwrap();
        for w in fit.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "objective increased: {} -> {}", w[0], w[1]);
        }
        assert!(fit.converged);
    }

    #[test]
    fn assembled_gradient_matches_fd_of_objective() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..5 {
            let x = random_point(&s, &mut rng);
            let y = s.exp(&x, &(tangent_at(&s, &x, &mut rng) * 0.4));
            let data: Vec<(f64, Point, f64)> = (0..5)
                .map(|i| {
                    let t = i as f64 / 4.0;
                    let q = s.exp(&random_point(&s, &mut rng), &DVector::zeros(3));
                    (t, q, 1.0 + 0.3 * i as f64)
                })
                .collect();
            // keep data in a reasonable neighbourhood of the curve
            let data: Vec<_> = data
                .into_iter()
                .filter(|(_, q, _)| s.distance(&x, q) < 2.0)
                .collect();
            if data.is_empty() {
                continue;
            }
            let (gx, gy) = assembled_gradient(&s, &data, &x, &y, 1e-5).unwrap();
            let fx = gradient_fd(&s, |p| objective(&s, &data, p, &y).unwrap(), &x, 1e-5);
            let fy = gradient_fd(&s, |p| objective(&s, &data, &x, p).unwrap(), &y, 1e-5);
            let scale = fx.norm().max(fy.norm()).max(1e-12);
            assert!(
                (gx - fx).norm() / scale < 1e-5,
                "x-gradient disagrees beyond 1e-5 relative"
            );
            assert!(
                (gy - fy).norm() / scale < 1e-5,
                "y-gradient disagrees beyond 1e-5 relative"
            );
        }
    }

    #[test]
    fn analytic_gradient_matches_fd_on_kendall() {
        use crate::kendall::{KendallShapeSpace, PreShape};
        use nalgebra::DMatrix;
        let space = KendallShapeSpace::planar(6).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let mut random_shape = |rng: &mut ChaCha12Rng| -> Point {
            let raw =
                DMatrix::from_fn(2, 6, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            PreShape::from_landmarks(&raw).unwrap().to_vector()
        };
        for _ in 0..5 {
            let x = random_shape(&mut rng);
            let dir = space.project_tangent(&x, &random_shape(&mut rng));
            let y = space.exp(&x, &(&dir * (0.4 / dir.norm())));
            let data: Vec<(f64, Point, f64)> = (0..4)
                .map(|i| {
                    let t = i as f64 / 3.0;
                    let q = random_shape(&mut rng);
                    (t, q, 0.5 + 0.5 * i as f64)
                })
                .collect();
            let (gx, gy) = assembled_gradient(&space, &data, &x, &y, 1e-5).unwrap();
            let fx = gradient_fd(&space, |p| objective(&space, &data, p, &y).unwrap(), &x, 1e-5);
            let fy = gradient_fd(&space, |p| objective(&space, &data, &x, p).unwrap(), &y, 1e-5);
            let scale = fx.norm().max(fy.norm()).max(1e-12);
            assert!(
                (gx - fx).norm() / scale < 1e-5,
                "kendall x-gradient disagrees with finite differences"
            );
            assert!(
                (gy - fy).norm() / scale < 1e-5,
                "kendall y-gradient disagrees with finite differences"
            );
        }
    }

    #[test]
    fn fit_is_invariant_under_data_reordering() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let x = random_point(&s, &mut rng);
        let mut v = tangent_at(&s, &x, &mut rng);
        v *= 0.7 / v.norm();
        let mut data: Vec<(f64, Point, f64)> = (0..6)
            .map(|i| {
                let t = i as f64 / 5.0;
                let p = s.exp(&x, &(&v * t));
                let noise = s.project_tangent(&p, &random_point(&s, &mut rng)) * 0.03;
                (t, s.exp(&p, &noise), 1.0)
            })
            .collect();
        let init = (data[0].1.clone(), data[5].1.clone());
        let f1 = fit_geodesic(&s, &data, init.clone(), &FitOptions::default()).unwrap();
        data.reverse();
        let f2 = fit_geodesic(&s, &data, init, &FitOptions::default()).unwrap();
        let g1 = f1.value;
        let g2 = f2.value;
        let r1 = r_squared(g1, 1.0).unwrap();
        let r2v = r_squared(g2, 1.0).unwrap();
        assert!((r1 - r2v).abs() < 1e-12);
    }

    #[test]
    fn weights_multiply_termwise() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let x = random_point(&s, &mut rng);
        let y = s.exp(&x, &(tangent_at(&s, &x, &mut rng) * 0.5));
        let q = s.exp(&x, &(tangent_at(&s, &x, &mut rng) * 0.3));
        let doubled = vec![(0.3, q.clone(), 2.0)];
        let duplicated = vec![(0.3, q.clone(), 1.0), (0.3, q.clone(), 1.0)];
        let a = objective(&s, &doubled, &x, &y).unwrap();
        let b = objective(&s, &duplicated, &x, &y).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-15);
    }

    #[test]
    fn r_squared_edges() {
        assert_eq!(r_squared(0.0, 2.0).unwrap(), 1.0);
        assert_eq!(r_squared(2.0, 2.0).unwrap(), 0.0);
        assert!(matches!(r_squared(0.0, 0.0), Err(Error::UndefinedVariance)));
        assert!(r_squared(3.0, 2.0).is_err());
    }

    #[test]
    fn frechet_mean_trivial_and_midpoint() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let a = random_point(&s, &mut rng);
        assert_eq!(
            frechet_mean(&s, &[a.clone()], None, &MeanOptions::default()).unwrap(),
            a
        );
        let b = s.exp(&a, &(tangent_at(&s, &a, &mut rng) * 0.8));
        let mean = frechet_mean(&s, &[a.clone(), b.clone()], None, &MeanOptions::default()).unwrap();
        let mid = s.geodesic(&a, &b, 0.5).unwrap();
        assert!(s.distance(&mean, &mid) < 1e-10);
    }

    #[test]
    fn frechet_mean_matches_grid_search() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let c = random_point(&s, &mut rng);
        let pts: Vec<Point> = (0..3)
            .map(|_| s.exp(&c, &(tangent_at(&s, &c, &mut rng) * 0.4)))
            .collect();
        let mean = frechet_mean(&s, &pts, None, &MeanOptions::default()).unwrap();

        // independent oracle: two-stage dense grid over a tangent patch at c
        let basis = s.tangent_basis(&c);
        let g = |p: &Point| -> f64 {
            pts.iter().map(|q| s.distance(p, q).powi(2)).sum()
        };
        let eval = |a: f64, b: f64| -> (f64, Point) {
            let p = s.exp(&c, &(&basis[0] * a + &basis[1] * b));
            (g(&p), p)
        };
        let mut best = (f64::INFINITY, c.clone());
        let mut center = (0.0, 0.0);
        for (range, step) in [(0.6, 1e-2), (2.5e-2, 1e-4)] {
            let n = (2.0 * range / step) as i64;
            let mut local_best = (f64::INFINITY, c.clone(), (0.0, 0.0));
            for i in 0..=n {
                for j in 0..=n {
                    let a = center.0 - range + i as f64 * step;
                    let b = center.1 - range + j as f64 * step;
                    let (val, p) = eval(a, b);
                    if val < local_best.0 {
                        local_best = (val, p, (a, b));
                    }
                }
            }
            best = (local_best.0, local_best.1);
            center = local_best.2;
        }
        assert!(
            s.distance(&mean, &best.1) < 1e-4,
            "mean differs from grid optimum by {}",
            s.distance(&mean, &best.1)
        );
    }

    #[test]
    fn frechet_mean_of_mirrored_pairs() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let p = random_point(&s, &mut rng);
        let mut pts = Vec::new();
        for _ in 0..4 {
            let v = tangent_at(&s, &p, &mut rng) * 0.3;
            pts.push(s.exp(&p, &v));
            pts.push(s.exp(&p, &(-v)));
        }
        let mean = frechet_mean(&s, &pts, None, &MeanOptions::default()).unwrap();
        assert!(s.distance(&mean, &p) < 1e-8);
    }

    #[test]
    fn tangent_pca_rank_one_and_trace() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let c = random_point(&s, &mut rng);
        let mut v = tangent_at(&s, &c, &mut rng);
        v /= v.norm();
        // symmetric samples on one geodesic through c
        let pts: Vec<Point> = [-0.4, -0.2, 0.2, 0.4]
            .iter()
            .map(|&t| s.exp(&c, &(&v * t)))
            .collect();
        let pca = tangent_pca(&s, &pts, 2).unwrap();
        assert!(pca.eigenvalues[1] <= 1e-10 * pca.eigenvalues[0]);
        // total variance equals the mean squared distance to the mean
        let total: f64 = pca.eigenvalues.iter().sum();
        let msd: f64 = pts
            .iter()
            .map(|q| s.distance(&pca.mean, q).powi(2))
            .sum::<f64>()
            / pts.len() as f64;
        assert_relative_eq!(total, msd, epsilon = 1e-10);
    }

    #[test]
    fn tangent_pca_two_points() {
        let s = Sphere::s2();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let a = random_point(&s, &mut rng);
        let b = s.exp(&a, &(tangent_at(&s, &a, &mut rng) * 0.6));
        let d = s.distance(&a, &b);
        let pca = tangent_pca(&s, &[a, b], 1).unwrap();
        assert_eq!(pca.scores.len(), 2);
        let s0 = pca.scores[0][0];
        let s1 = pca.scores[1][0];
        assert_relative_eq!(s0.abs(), d / 2.0, epsilon = 1e-9);
        assert_relative_eq!(s1.abs(), d / 2.0, epsilon = 1e-9);
        assert!(s0 * s1 < 0.0, "scores lie on opposite sides");
    }

    #[test]
    fn regression_works_on_euclidean_space() {
        let m = Euclidean::new(2);
        // exact line y = (1,2) + t (3,-1) sampled with zero noise
        let times = vec![0.0, 0.5, 1.0];
        let obs: Vec<Point> = times
            .iter()
            .map(|&t| DVector::from_vec(vec![1.0 + 3.0 * t, 2.0 - t]))
            .collect();
        let traj = Trajectory::new("line", times, obs).unwrap();
        let fit = geodesic_regression(&m, &traj, None, &FitOptions::default()).unwrap();
        assert!(fit.f_min < 1e-12);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn trajectory_validation() {
        let p = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(Trajectory::new("a", vec![0.0], vec![p.clone()]).is_err());
        assert!(Trajectory::new("b", vec![0.0, 0.0], vec![p.clone(), p.clone()]).is_err());
        assert!(Trajectory::new("c", vec![1.0, 0.5], vec![p.clone(), p.clone()]).is_err());
        assert!(Trajectory::new("d", vec![0.0, 1.0], vec![p.clone()]).is_err());
        assert!(Trajectory::new("e", vec![0.0, 1.0], vec![p.clone(), p]).is_ok());
    }
}
