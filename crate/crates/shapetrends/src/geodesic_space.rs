//! The space of geodesics under a functional L² metric.
//!
//! A geodesic is identified with its ordered endpoint pair (x, y); the
//! squared distance between two geodesics integrates the squared pointwise
//! manifold distance over the parameter interval. Shortest paths between
//! geodesics and means of geodesics are computed by variational time
//! discretization: discrete paths of geodesics minimize the discrete path
//! energy E_n, whose interior updates reduce to weighted geodesic
//! regression. None of this needs the curvature tensor or a
//! horizontal/vertical decomposition.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point};
use crate::regression::{fit_geodesic, FitOptions};

/// Number of discretization segments used throughout the experiments.
pub const DEFAULT_SEGMENTS: usize = 2;

/// Number of nodes of the default composite trapezoid rule.
pub const DEFAULT_QUADRATURE_NODES: usize = 17;

/// A geodesic encoded by its endpoints: start at t=0, end at t=1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicPoint {
    pub x: Point,
    pub y: Point,
}

impl GeodesicPoint {
    pub fn new(x: Point, y: Point) -> Self {
        GeodesicPoint { x, y }
    }

    /// Validates both endpoints and the unique-geodesic bound.
    pub fn check<M: Manifold + ?Sized>(&self, manifold: &M) -> Result<()> {
        manifold.check_point(&self.x)?;
        manifold.check_point(&self.y)?;
        let d = manifold.distance(&self.x, &self.y);
        if d >= manifold.injectivity_radius() {
            return Err(Error::Domain(format!(
                "endpoint distance {d:.4} reaches the injectivity bound; no unique geodesic"
            )));
        }
        Ok(())
    }
}

/// A discrete curve in the space of geodesics: n+1 geodesic nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePath {
    nodes: Vec<GeodesicPoint>,
}

impl DiscretePath {
    pub fn new(nodes: Vec<GeodesicPoint>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput(
                "a discrete path needs at least two nodes".into(),
            ));
        }
        Ok(DiscretePath { nodes })
    }

    pub fn nodes(&self) -> &[GeodesicPoint] {
        &self.nodes
    }

    /// Number of segments n.
    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn reversed(&self) -> Self {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        DiscretePath { nodes }
    }
}

/// Quadrature rule on [0,1]: nodes tᵢ and positive weights ωᵢ summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    label: String,
}

impl QuadratureRule {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::InvalidInput("node/weight count mismatch".into()));
        }
        if nodes.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidInput("quadrature nodes must lie in [0,1]".into()));
        }
        if weights.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidInput("quadrature weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "quadrature weights sum to {total}, expected 1"
            )));
        }
        Ok(QuadratureRule {
            nodes,
            weights,
            label: label.into(),
        })
    }

    /// Composite trapezoid rule on `k` uniform nodes (k ≥ 2).
    pub fn trapezoid(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput("trapezoid rule needs at least 2 nodes".into()));
        }
        let h = 1.0 / (k as f64 - 1.0);
        let nodes: Vec<f64> = (0..k).map(|i| i as f64 * h).collect();
        let mut weights = vec![h; k];
        weights[0] = h / 2.0;
        weights[k - 1] = h / 2.0;
        QuadratureRule::new(nodes, weights, format!("trapezoid:{k}"))
    }

    /// Gauss–Legendre rule with `k` nodes, mapped from [-1,1] to [0,1].
    pub fn gauss_legendre(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("gauss rule needs at least 1 node".into()));
        }
        let mut nodes = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        for i in 1..=k {
            // Newton iteration from the Chebyshev-like initial guess
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (k as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(k, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            nodes.push((1.0 + x) / 2.0);
            weights.push(1.0 / ((1.0 - x * x) * dp * dp));
        }
        nodes.reverse();
        weights.reverse();
        QuadratureRule::new(nodes, weights, format!("gauss:{k}"))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Parses `trapezoid:K` or `gauss:K`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, count) = spec
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("bad quadrature spec '{spec}'")))?;
        let k: usize = count
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad quadrature node count '{count}'")))?;
        match kind {
            "trapezoid" => QuadratureRule::trapezoid(k),
            "gauss" => QuadratureRule::gauss_legendre(k),
            other => Err(Error::InvalidInput(format!("unknown quadrature rule '{other}'"))),
        }
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::trapezoid(DEFAULT_QUADRATURE_NODES).expect("default rule is valid")
    }
}

/// Legendre polynomial P_k and derivative at x, by three-term recurrence.
fn legendre(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=k {
        let pj = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = pj;
    }
    if k == 0 {
        return (1.0, 0.0);
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Evaluates a geodesic at the quadrature nodes.
pub fn sample_geodesic<M: Manifold + ?Sized>(
    manifold: &M,
    g: &GeodesicPoint,
    quad: &QuadratureRule,
) -> Result<Vec<Point>> {
    let v = manifold.log(&g.x, &g.y)?;
    Ok(quad
        .nodes()
        .iter()
        .map(|&t| manifold.exp(&g.x, &(&v * t)))
        .collect())
}

fn delta_sq_sampled<M: Manifold + ?Sized>(
    manifold: &M,
    sa: &[Point],
    sb: &[Point],
    quad: &QuadratureRule,
) -> f64 {
    quad.weights()
        .iter()
        .zip(sa.iter().zip(sb.iter()))
        .map(|(w, (p, q))| {
            let d = manifold.distance(p, q);
            w * d * d
        })
        .sum()
}

/// Squared L² distance between two geodesics: Σᵢ ωᵢ d²(Φ(a,tᵢ), Φ(b,tᵢ)).
///
/// Symmetric, and zero exactly when the geodesics agree at every quadrature
/// node. Warns when the curves leave a common convex neighbourhood.
pub fn delta_sq<M: Manifold + ?Sized>(
    manifold: &M,
    a: &GeodesicPoint,
    b: &GeodesicPoint,
    quad: &QuadratureRule,
) -> Result<f64> {
    let sa = sample_geodesic(manifold, a, quad)?;
    let sb = sample_geodesic(manifold, b, quad)?;
    let bound = manifold.injectivity_radius() / 2.0;
    if bound.is_finite() {
        let max_d = sa
            .iter()
            .zip(sb.iter())
            .map(|(p, q)| manifold.distance(p, q))
            .fold(0.0f64, f64::max);
        if max_d >= bound {
            log::warn!(
                "geodesics are {max_d:.4} apart pointwise, beyond the convex bound {bound:.4}"
            );
        }
    }
    Ok(delta_sq_sampled(manifold, &sa, &sb, quad))
}

fn path_samples<M: Manifold + ?Sized>(
    manifold: &M,
    path: &DiscretePath,
    quad: &QuadratureRule,
) -> Result<Vec<Vec<Point>>> {
    path.nodes()
        .iter()
        .map(|g| sample_geodesic(manifold, g, quad))
        .collect()
}

/// Discrete path energy E_n = n Σᵢ δ²(Hᵢ, Hᵢ₊₁).
pub fn discrete_energy<M: Manifold + ?Sized>(
    manifold: &M,
    path: &DiscretePath,
    quad: &QuadratureRule,
) -> Result<f64> {
    let samples = path_samples(manifold, path, quad)?;
    let n = path.segments() as f64;
    Ok(n * samples
        .windows(2)
        .map(|w| delta_sq_sampled(manifold, &w[0], &w[1], quad))
        .sum::<f64>())
}

/// Discrete path length L_n = Σᵢ δ(Hᵢ, Hᵢ₊₁); additive under concatenation.
pub fn discrete_length<M: Manifold + ?Sized>(
    manifold: &M,
    path: &DiscretePath,
    quad: &QuadratureRule,
) -> Result<f64> {
    let samples = path_samples(manifold, path, quad)?;
    Ok(samples
        .windows(2)
        .map(|w| delta_sq_sampled(manifold, &w[0], &w[1], quad).sqrt())
        .sum())
}

/// Options for the iterative-averaging path solver.
#[derive(Debug, Clone)]
pub struct PathOptions {
    /// Stop when the relative energy change per sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    pub fit: FitOptions,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            tol: 1e-9,
            max_sweeps: 100,
            fit: FitOptions::default(),
        }
    }
}

/// A computed discrete shortest path with its energy history.
#[derive(Debug, Clone)]
pub struct PathSolution {
    pub path: DiscretePath,
    /// Final discrete energy E_n.
    pub energy: f64,
    /// E_n after initialization and after every sweep; non-increasing.
    pub energy_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Equidistant initialization along the endpoint geodesics.
fn initial_path<M: Manifold + ?Sized>(
    manifold: &M,
    alpha: &GeodesicPoint,
    beta: &GeodesicPoint,
    n: usize,
) -> Result<Vec<GeodesicPoint>> {
    (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            Ok(GeodesicPoint {
                x: manifold.geodesic(&alpha.x, &beta.x, s)?,
                y: manifold.geodesic(&alpha.y, &beta.y, s)?,
            })
        })
        .collect()
}

/// Replaces interior node `i` by the discrete average of its neighbours,
/// i.e. the solution of the 2-geodesic problem, which coincides with a
/// weighted geodesic regression against the sampled neighbour curves.
fn relax_node<M: Manifold + ?Sized>(
    manifold: &M,
    nodes: &mut [GeodesicPoint],
    samples: &mut [Vec<Point>],
    i: usize,
    quad: &QuadratureRule,
    fit_opts: &FitOptions,
) -> Result<()> {
    let mut data: Vec<(f64, Point, f64)> =
        Vec::with_capacity(2 * quad.nodes().len());
    for (t, (w, q)) in quad
        .nodes()
        .iter()
        .zip(quad.weights().iter().zip(samples[i - 1].iter()))
    {
        data.push((*t, q.clone(), *w));
    }
    for (t, (w, q)) in quad
        .nodes()
        .iter()
        .zip(quad.weights().iter().zip(samples[i + 1].iter()))
    {
        data.push((*t, q.clone(), *w));
    }
    let init = (nodes[i].x.clone(), nodes[i].y.clone());
    let fit = fit_geodesic(manifold, &data, init, fit_opts)?;
    nodes[i] = fit.geodesic;
    samples[i] = sample_geodesic(manifold, &nodes[i], quad)?;
    Ok(())
}

/// Discrete shortest path between two geodesics by iterative averaging.
///
/// Starts from the equidistant endpoint initialization and sweeps the
/// interior nodes in forward order, each update solving a 2-geodesic
/// (weighted regression) problem; every averaging step weakly decreases
/// the discrete path energy. Endpoints stay fixed.
pub fn discrete_shortest_path<M: Manifold + ?Sized>(
    manifold: &M,
    alpha: &GeodesicPoint,
    beta: &GeodesicPoint,
    n: usize,
    quad: &QuadratureRule,
    opts: &PathOptions,
) -> Result<PathSolution> {
    if n < 1 {
        return Err(Error::InvalidInput("need at least one segment".into()));
    }
    let d_start = manifold.distance(&alpha.x, &beta.x);
    let d_end = manifold.distance(&alpha.y, &beta.y);
    let bound = manifold.injectivity_radius() / 2.0;
    if d_start.max(d_end) >= bound {
        log::warn!(
            "endpoint geodesics are {:.4} apart, beyond the convex bound {bound:.4}",
            d_start.max(d_end)
        );
    }

    let mut nodes = initial_path(manifold, alpha, beta, n)?;
    let mut samples: Vec<Vec<Point>> = nodes
        .iter()
        .map(|g| sample_geodesic(manifold, g, quad))
        .collect::<Result<_>>()?;

    let energy = |samples: &[Vec<Point>]| -> f64 {
        n as f64
            * samples
                .windows(2)
                .map(|w| delta_sq_sampled(manifold, &w[0], &w[1], quad))
                .sum::<f64>()
    };
    let mut e = energy(&samples);
    let mut trace = vec![e];
    let mut converged = n == 1 || e == 0.0;
    let mut sweeps = 0;

    if !converged {
        for sweep in 0..opts.max_sweeps {
            sweeps = sweep + 1;
            for i in 1..n {
                relax_node(manifold, &mut nodes, &mut samples, i, quad, &opts.fit)?;
            }
            let e_new = energy(&samples);
            debug_assert!(e_new <= e * (1.0 + 1e-12) + 1e-15, "energy increased in sweep");
            trace.push(e_new);
            let rel = (e - e_new).abs() / e.max(f64::MIN_POSITIVE);
            e = e_new;
            if rel <= opts.tol {
                converged = true;
                break;
            }
        }
    }

    Ok(PathSolution {
        path: DiscretePath { nodes },
        energy: e,
        energy_trace: trace,
        sweeps,
        converged,
    })
}

/// Initial velocity of the discrete geodesic from `base` to `target` in the
/// space of geodesics: the scaled first step of the discrete shortest path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeodesicTangent {
    /// n·log of the first interior start point, tangent at `base.x`.
    pub u_x: DVector<f64>,
    /// n·log of the first interior end point, tangent at `base.y`.
    pub u_y: DVector<f64>,
}

impl GeodesicTangent {
    pub fn norm(&self) -> f64 {
        (self.u_x.norm_squared() + self.u_y.norm_squared()).sqrt()
    }
}

/// Log-map surrogate in the space of geodesics; exact in the flat case and
/// convergent to the true initial velocity as n grows.
pub fn geodesic_log<M: Manifold + ?Sized>(
    manifold: &M,
    base: &GeodesicPoint,
    target: &GeodesicPoint,
    n: usize,
    quad: &QuadratureRule,
    opts: &PathOptions,
) -> Result<GeodesicTangent> {
    let sol = discrete_shortest_path(manifold, base, target, n, quad, opts)?;
    let first = &sol.path.nodes()[1];
    Ok(GeodesicTangent {
        u_x: manifold.log(&base.x, &first.x)? * n as f64,
        u_y: manifold.log(&base.y, &first.y)? * n as f64,
    })
}

/// Options for the alternating mean-geodesic solver.
#[derive(Debug, Clone)]
pub struct MeanGeodesicOptions {
    /// Stop when the relative change of the objective falls below this.
    pub tol: f64,
    pub max_outer: usize,
    pub path: PathOptions,
}

impl Default for MeanGeodesicOptions {
    fn default() -> Self {
        MeanGeodesicOptions {
            tol: 1e-9,
            max_outer: 100,
            path: PathOptions::default(),
        }
    }
}

/// Mean geodesic together with the connecting discrete paths.
#[derive(Debug, Clone)]
pub struct MeanGeodesicResult {
    pub mean: GeodesicPoint,
    /// One discrete path per input, from the mean to that geodesic.
    pub paths: Vec<DiscretePath>,
    /// Final value of the summed discrete path energies.
    pub value: f64,
    /// Objective after every outer iteration of the final level.
    pub value_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean of geodesics under the functional L² metric.
///
/// Alternating optimization: the mean is refit by weighted geodesic
/// regression against the sampled first interior nodes, then each path's
/// interior nodes are relaxed by an averaging sweep. A cascadic hierarchy
/// in the number of segments (k = 1,…,n) initializes each level with the
/// previous solution.
pub fn mean_geodesic<M: Manifold + ?Sized>(
    manifold: &M,
    geodesics: &[GeodesicPoint],
    n: usize,
    quad: &QuadratureRule,
    opts: &MeanGeodesicOptions,
) -> Result<MeanGeodesicResult> {
    if geodesics.is_empty() {
        return Err(Error::InvalidInput("mean of no geodesics".into()));
    }
    if n < 1 {
        return Err(Error::InvalidInput("need at least one segment".into()));
    }
    let bound = manifold.convexity_radius();
    if bound.is_finite() {
        let mut spread: f64 = 0.0;
        for i in 0..geodesics.len() {
            for j in (i + 1)..geodesics.len() {
                spread = spread
                    .max(manifold.distance(&geodesics[i].x, &geodesics[j].x))
                    .max(manifold.distance(&geodesics[i].y, &geodesics[j].y));
            }
        }
        if spread >= bound {
            log::warn!(
                "geodesic spread {spread:.4} exceeds the well-definedness bound {bound:.4}"
            );
        }
    }

    // pointwise Fréchet means of the endpoints initialize the level-1 mean
    let starts: Vec<Point> = geodesics.iter().map(|g| g.x.clone()).collect();
    let ends: Vec<Point> = geodesics.iter().map(|g| g.y.clone()).collect();
    let mean_opts = crate::regression::MeanOptions::default();
    let mut mean = GeodesicPoint {
        x: crate::regression::frechet_mean(manifold, &starts, None, &mean_opts)?,
        y: crate::regression::frechet_mean(manifold, &ends, None, &mean_opts)?,
    };

    let mut paths: Vec<Vec<GeodesicPoint>> = Vec::new();
    let mut value = f64::NAN;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for k in 1..=n {
        // initialize level k: direct connection at k = 1, otherwise refine
        // the previous level's paths
        paths = if k == 1 {
            geodesics
                .iter()
                .map(|g| vec![mean.clone(), g.clone()])
                .collect()
        } else {
            let mut refined = Vec::with_capacity(paths.len());
            for old in &paths {
                refined.push(refine_path(manifold, old, k)?);
            }
            refined
        };

        let mut samples: Vec<Vec<Vec<Point>>> = paths
            .par_iter()
            .map(|nodes| {
                nodes
                    .iter()
                    .map(|g| sample_geodesic(manifold, g, quad))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let objective = |samples: &[Vec<Vec<Point>>]| -> f64 {
            samples
                .iter()
                .map(|s| {
                    k as f64
                        * s.windows(2)
                            .map(|w| delta_sq_sampled(manifold, &w[0], &w[1], quad))
                            .sum::<f64>()
                })
                .sum()
        };

        value = objective(&samples);
        trace = vec![value];
        converged = value == 0.0;
        iterations = 0;

        while !converged && iterations < opts.max_outer {
            iterations += 1;
            // (a) refit the mean against the sampled first interior nodes
            let mut data: Vec<(f64, Point, f64)> =
                Vec::with_capacity(geodesics.len() * quad.nodes().len());
            for s in &samples {
                for (t, (w, q)) in quad
                    .nodes()
                    .iter()
                    .zip(quad.weights().iter().zip(s[1].iter()))
                {
                    data.push((*t, q.clone(), *w));
                }
            }
            let fit = fit_geodesic(
                manifold,
                &data,
                (mean.x.clone(), mean.y.clone()),
                &opts.path.fit,
            )?;
            mean = fit.geodesic;
            let mean_samples = sample_geodesic(manifold, &mean, quad)?;
            for (nodes, s) in paths.iter_mut().zip(samples.iter_mut()) {
                nodes[0] = mean.clone();
                s[0] = mean_samples.clone();
            }

            // (b) one averaging sweep over each path's interior nodes
            if k >= 2 {
                paths
                    .par_iter_mut()
                    .zip(samples.par_iter_mut())
                    .try_for_each(|(nodes, s)| -> Result<()> {
                        for i in 1..k {
                            relax_node(manifold, nodes, s, i, quad, &opts.path.fit)?;
                        }
                        Ok(())
                    })?;
            }

            let new_value = objective(&samples);
            debug_assert!(
                new_value <= value * (1.0 + 1e-12) + 1e-15,
                "mean objective increased"
            );
            trace.push(new_value);
            let rel = (value - new_value).abs() / value.max(f64::MIN_POSITIVE);
            value = new_value;
            if rel <= opts.tol {
                converged = true;
            }
        }
        if !converged {
            log::warn!("mean geodesic level {k} stopped at {} outer iterations", opts.max_outer);
        }
    }

    Ok(MeanGeodesicResult {
        mean,
        paths: paths
            .into_iter()
            .map(|nodes| DiscretePath { nodes })
            .collect(),
        value,
        value_trace: trace,
        iterations,
        converged,
    })
}

/// Prolongs a discrete path to one more segment by arclength-proportional
/// interpolation between the old nodes.
fn refine_path<M: Manifold + ?Sized>(
    manifold: &M,
    old: &[GeodesicPoint],
    k: usize,
) -> Result<Vec<GeodesicPoint>> {
    let k_old = old.len() - 1;
    let mut nodes = Vec::with_capacity(k + 1);
    nodes.push(old[0].clone());
    for i in 1..k {
        let sigma = i as f64 / k as f64 * k_old as f64;
        let a = (sigma.floor() as usize).min(k_old - 1);
        let theta = sigma - a as f64;
        nodes.push(GeodesicPoint {
            x: manifold.geodesic(&old[a].x, &old[a + 1].x, theta)?,
            y: manifold.geodesic(&old[a].y, &old[a + 1].y, theta)?,
        });
    }
    nodes.push(old[k_old].clone());
    Ok(nodes)
}
