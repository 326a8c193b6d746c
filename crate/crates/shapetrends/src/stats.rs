//! Second-stage group statistics on the space of geodesics: covariances,
//! the manifold Hotelling T² statistic and permutation testing.
//!
//! Subject trends enter as fitted geodesics (stage-1 results, which are
//! permutation-invariant); every relabeling recomputes only the stage-2
//! means, logs and covariances.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic_space::{
    geodesic_log, mean_geodesic, GeodesicPoint, MeanGeodesicOptions, QuadratureRule,
    DEFAULT_SEGMENTS,
};
use crate::manifold::{Manifold, Tangent};

/// Relative eigenvalue cutoff of the covariance pseudo-inverse.
pub const EIGENVALUE_TRUNCATION: f64 = 1e-8;

/// One labeled group of subject geodesics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSample {
    pub label: String,
    pub geodesics: Vec<GeodesicPoint>,
}

impl GroupSample {
    pub fn new(label: impl Into<String>, geodesics: Vec<GeodesicPoint>) -> Result<Self> {
        if geodesics.is_empty() {
            return Err(Error::InvalidInput("group sample is empty".into()));
        }
        Ok(GroupSample {
            label: label.into(),
            geodesics,
        })
    }
}

/// Outcome of a permutation test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub t2: f64,
    pub p_value: f64,
    pub permutations: usize,
    /// The statistic under every relabeling, in permutation order.
    pub null_t2: Vec<f64>,
}

/// Options shared by the statistic and the permutation driver.
#[derive(Debug, Clone)]
pub struct TestOptions {
    /// Discretization level of the mean/log computations.
    pub n_segments: usize,
    pub quad: QuadratureRule,
    pub mean: MeanGeodesicOptions,
    /// Smoothed p-value (#{≥}+1)/(B+1) instead of the plain proportion.
    pub smoothed_p: bool,
}

impl Default for TestOptions {
    fn default() -> Self {
        TestOptions {
            n_segments: DEFAULT_SEGMENTS,
            quad: QuadratureRule::default(),
            mean: MeanGeodesicOptions::default(),
            smoothed_p: false,
        }
    }
}

/// Orthonormal bases at both endpoints of a mean geodesic; tangent pairs
/// flatten into coordinate vectors of length 2·dim(M) against these.
struct MeanFrame {
    mean: GeodesicPoint,
    basis_x: Vec<Tangent>,
    basis_y: Vec<Tangent>,
}

impl MeanFrame {
    fn new<M: Manifold + ?Sized>(manifold: &M, mean: GeodesicPoint) -> Self {
        let basis_x = manifold.tangent_basis(&mean.x);
        let basis_y = manifold.tangent_basis(&mean.y);
        MeanFrame {
            mean,
            basis_x,
            basis_y,
        }
    }

    fn dim(&self) -> usize {
        self.basis_x.len() + self.basis_y.len()
    }

    /// Coordinates of the log of `target` at the mean.
    fn flatten_log<M: Manifold + ?Sized>(
        &self,
        manifold: &M,
        target: &GeodesicPoint,
        opts: &TestOptions,
    ) -> Result<DVector<f64>> {
        let tangent = geodesic_log(
            manifold,
            &self.mean,
            target,
            opts.n_segments,
            &opts.quad,
            &opts.mean.path,
        )?;
        let d = self.basis_x.len();
        let mut z = DVector::zeros(self.dim());
        for (j, e) in self.basis_x.iter().enumerate() {
            z[j] = tangent.u_x.dot(e);
        }
        for (j, e) in self.basis_y.iter().enumerate() {
            z[d + j] = tangent.u_y.dot(e);
        }
        Ok(z)
    }
}

/// Empirical (1/n) second-moment matrix of the group's logs at its mean.
pub fn group_covariance<M: Manifold + ?Sized>(
    manifold: &M,
    sample: &GroupSample,
    mean: &GeodesicPoint,
    opts: &TestOptions,
) -> Result<DMatrix<f64>> {
    if sample.geodesics.is_empty() {
        return Err(Error::InvalidInput("group sample is empty".into()));
    }
    let frame = MeanFrame::new(manifold, mean.clone());
    let mut w = DMatrix::zeros(frame.dim(), frame.dim());
    for g in &sample.geodesics {
        let z = frame.flatten_log(manifold, g, opts)?;
        w.syger(1.0 / sample.geodesics.len() as f64, &z, &z, 1.0);
    }
    // syger fills the lower triangle; mirror it
    w.fill_upper_triangle_with_lower_triangle();
    Ok(w)
}

/// Quadratic form vᵗ W⁺ v with eigenvalues below
/// [`EIGENVALUE_TRUNCATION`]·λ_max treated as zero. Rank deficiency loses
/// the truncated directions instead of failing.
fn pseudo_inverse_quadratic(w: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let eig = w.clone().symmetric_eigen();
    let lmax = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    if lmax <= 0.0 {
        return 0.0;
    }
    let thresh = lmax * EIGENVALUE_TRUNCATION;
    let mut q = 0.0;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > thresh {
            let c = eig.eigenvectors.column(i).dot(v);
            q += c * c / l;
        }
    }
    q
}

fn t2_from_groups<M: Manifold + ?Sized>(
    manifold: &M,
    gx: &[GeodesicPoint],
    gy: &[GeodesicPoint],
    opts: &TestOptions,
) -> Result<f64> {
    let mean_x = mean_geodesic(manifold, gx, opts.n_segments, &opts.quad, &opts.mean)?.mean;
    let mean_y = mean_geodesic(manifold, gy, opts.n_segments, &opts.quad, &opts.mean)?.mean;
    t2_with_means(manifold, gx, gy, &mean_x, &mean_y, opts)
}

/// The statistic given precomputed group means.
fn t2_with_means<M: Manifold + ?Sized>(
    manifold: &M,
    gx: &[GeodesicPoint],
    gy: &[GeodesicPoint],
    mean_x: &GeodesicPoint,
    mean_y: &GeodesicPoint,
    opts: &TestOptions,
) -> Result<f64> {
    let frame_x = MeanFrame::new(manifold, mean_x.clone());
    let frame_y = MeanFrame::new(manifold, mean_y.clone());

    let v_x = frame_x.flatten_log(manifold, mean_y, opts)?;
    let v_y = frame_y.flatten_log(manifold, mean_x, opts)?;

    let cov = |frame: &MeanFrame, group: &[GeodesicPoint]| -> Result<DMatrix<f64>> {
        let mut w = DMatrix::zeros(frame.dim(), frame.dim());
        for g in group {
            let z = frame.flatten_log(manifold, g, opts)?;
            w.syger(1.0 / group.len() as f64, &z, &z, 1.0);
        }
        w.fill_upper_triangle_with_lower_triangle();
        Ok(w)
    };
    let w_x = cov(&frame_x, gx)?;
    let w_y = cov(&frame_y, gy)?;

    Ok(0.5 * (pseudo_inverse_quadratic(&w_x, &v_x) + pseudo_inverse_quadratic(&w_y, &v_y)))
}

/// Two-sample Hotelling T² statistic on the space of geodesics:
/// ½(v_xᵗ W_x⁻¹ v_x + v_yᵗ W_y⁻¹ v_y) with cross-logs at the group means.
pub fn hotelling_t2<M: Manifold + ?Sized>(
    manifold: &M,
    gx: &GroupSample,
    gy: &GroupSample,
    opts: &TestOptions,
) -> Result<f64> {
    if gx.geodesics.is_empty() || gy.geodesics.is_empty() {
        return Err(Error::InvalidInput("both groups must be non-empty".into()));
    }
    t2_from_groups(manifold, &gx.geodesics, &gy.geodesics, opts)
}

/// Permutation test of the group difference.
///
/// Draws `permutations` relabelings with preserved group sizes from a
/// counter-based generator (ChaCha12, one stream per permutation index), so
/// results are reproducible bit-for-bit for a fixed seed and independent of
/// evaluation order. p is the plain proportion #{t²_perm ≥ t²_obs}/B; ties
/// count against rejection.
pub fn permutation_test<M: Manifold + ?Sized>(
    manifold: &M,
    gx: &GroupSample,
    gy: &GroupSample,
    permutations: usize,
    seed: u64,
    opts: &TestOptions,
) -> Result<TestResult> {
    if permutations == 0 {
        return Err(Error::InvalidInput("need at least one permutation".into()));
    }
    let t2 = hotelling_t2(manifold, gx, gy, opts)?;
    let n1 = gx.geodesics.len();
    let pool: Vec<GeodesicPoint> = gx
        .geodesics
        .iter()
        .chain(gy.geodesics.iter())
        .cloned()
        .collect();

    let null_t2: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let mut idx: Vec<usize> = (0..pool.len()).collect();
            idx.shuffle(&mut rng);
            let ga: Vec<GeodesicPoint> = idx[..n1].iter().map(|&i| pool[i].clone()).collect();
            let gb: Vec<GeodesicPoint> = idx[n1..].iter().map(|&i| pool[i].clone()).collect();
            t2_from_groups(manifold, &ga, &gb, opts)
        })
        .collect::<Result<_>>()?;

    let exceed = null_t2.iter().filter(|&&t| t >= t2).count();
    let p_value = if opts.smoothed_p {
        (exceed + 1) as f64 / (permutations + 1) as f64
    } else {
        exceed as f64 / permutations as f64
    };
    Ok(TestResult {
        t2,
        p_value,
        permutations,
        null_t2,
    })
}

impl TestResult {
    /// Re-derives the p-value from the stored null statistics.
    pub fn consistent_with_counting_rule(&self, smoothed: bool) -> bool {
        let exceed = self.null_t2.iter().filter(|&&t| t >= self.t2).count();
        let p = if smoothed {
            (exceed + 1) as f64 / (self.permutations + 1) as f64
        } else {
            exceed as f64 / self.permutations as f64
        };
        p == self.p_value && self.null_t2.len() == self.permutations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kendall::{KendallShapeSpace, PreShape};
    use crate::manifold::{Euclidean, Point, Sphere};
    use approx::assert_relative_eq;
    use rand::prelude::*;

    fn flat_geodesic(x: f64, y: f64) -> GeodesicPoint {
        GeodesicPoint::new(DVector::from_vec(vec![x]), DVector::from_vec(vec![y]))
    }

    #[test]
    fn covariance_of_mean_only_sample_is_zero() {
        let e = Euclidean::new(1);
        let mean = flat_geodesic(0.2, 0.8);
        let sample = GroupSample::new("g", vec![mean.clone(), mean.clone()]).unwrap();
        let w = group_covariance(&e, &sample, &mean, &TestOptions::default()).unwrap();
        assert!(w.norm() < 1e-20);
    }

    #[test]
    fn covariance_flat_hand_computed() {
        // two geodesics at ±(a, b) around the mean have covariance
        // [[a², ab], [ab, b²]]
        let e = Euclidean::new(1);
        let (a, b) = (0.3, -0.7);
        let mean = flat_geodesic(0.0, 0.0);
        let sample = GroupSample::new(
            "g",
            vec![flat_geodesic(a, b), flat_geodesic(-a, -b)],
        )
        .unwrap();
        let w = group_covariance(&e, &sample, &mean, &TestOptions::default()).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[a * a, a * b, a * b, b * b]);
        assert!((w.clone() - expect).norm() < 1e-12, "W = {w}");
        // trace identity
        let trace_expect = a * a + b * b;
        assert_relative_eq!(w.trace(), trace_expect, epsilon = 1e-12);
    }

    #[test]
    fn t2_zero_for_identical_groups_and_symmetric() {
        let e = Euclidean::new(1);
        let gs: Vec<GeodesicPoint> = vec![
            flat_geodesic(0.1, 0.5),
            flat_geodesic(-0.2, 0.4),
            flat_geodesic(0.05, 0.65),
        ];
        let ga = GroupSample::new("a", gs.clone()).unwrap();
        let gb = GroupSample::new("b", gs).unwrap();
        let opts = TestOptions::default();
        let t = hotelling_t2(&e, &ga, &gb, &opts).unwrap();
        assert!(t < 1e-16);

        // exchange symmetry on distinct groups
        let gc = GroupSample::new(
            "c",
            vec![
                flat_geodesic(1.0, 1.3),
                flat_geodesic(1.2, 1.1),
                flat_geodesic(0.9, 1.25),
            ],
        )
        .unwrap();
        let ab = hotelling_t2(&e, &ga, &gc, &opts).unwrap();
        let ba = hotelling_t2(&e, &gc, &ga, &opts).unwrap();
        assert!((ab - ba).abs() < 1e-10);
        assert!(ab > 0.0);
    }

    #[test]
    fn t2_flat_scalar_closed_form() {
        // groups with offsets {(±a,0), (0,±b)} about their means have
        // diagonal covariance diag(a²/2, b²/2); with both groups alike and
        // means δ apart, t² = 2δx²/a² + 2δy²/b²
        let e = Euclidean::new(1);
        let (a, b) = (0.4, 0.3);
        let (dx, dy) = (0.05, -0.02);
        let around = |cx: f64, cy: f64| -> Vec<GeodesicPoint> {
            vec![
                flat_geodesic(cx + a, cy),
                flat_geodesic(cx - a, cy),
                flat_geodesic(cx, cy + b),
                flat_geodesic(cx, cy - b),
            ]
        };
        let ga = GroupSample::new("a", around(0.0, 1.0)).unwrap();
        let gb = GroupSample::new("b", around(dx, 1.0 + dy)).unwrap();
        let t = hotelling_t2(&e, &ga, &gb, &TestOptions::default()).unwrap();
        let expect = 2.0 * dx * dx / (a * a) + 2.0 * dy * dy / (b * b);
        assert_relative_eq!(t, expect, max_relative = 1e-8);
    }

    #[test]
    fn t2_invariant_under_common_rotation() {
        // triangles keep the flattened dimension (4) below the group size,
        // so both covariances are full rank and the statistic well scaled
        let space = KendallShapeSpace::planar(3).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let mut random_shape = |rng: &mut rand_chacha::ChaCha12Rng| -> Point {
            let raw = DMatrix::from_fn(2, 3, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            PreShape::from_landmarks(&raw).unwrap().to_vector()
        };
        let base_a = random_shape(&mut rng);
        let base_b = {
            let dir = space.project_tangent(&base_a, &random_shape(&mut rng));
            space.exp(&base_a, &(&dir * (0.08 / dir.norm())))
        };
        let mk_group = |base: &Point, rng: &mut rand_chacha::ChaCha12Rng| -> Vec<GeodesicPoint> {
            (0..6)
                .map(|_| {
                    let wiggle = |p: &Point, rng: &mut rand_chacha::ChaCha12Rng| {
                        let noise = DVector::from_fn(6, |_, _| {
                            rng.sample::<f64, _>(rand_distr::StandardNormal)
                        });
                        let h = space.project_tangent(p, &noise) * 0.05;
                        space.exp(p, &h)
                    };
                    let x = wiggle(base, rng);
                    let dir = space.project_tangent(
                        &x,
                        &DVector::from_fn(6, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal)),
                    );
                    let y = space.exp(&x, &(dir * 0.1));
                    GeodesicPoint::new(x, y)
                })
                .collect()
        };
        let ga = mk_group(&base_a, &mut rng);
        let gb = mk_group(&base_b, &mut rng);
        let theta: f64 = 0.83;
        let rotate = |g: &GeodesicPoint| -> GeodesicPoint {
            let r = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
            GeodesicPoint::new(
                space.to_vec(&(&r * space.to_mat(&g.x))),
                space.to_vec(&(&r * space.to_mat(&g.y))),
            )
        };
        let ga_r: Vec<GeodesicPoint> = ga.iter().map(rotate).collect();
        let gb_r: Vec<GeodesicPoint> = gb.iter().map(rotate).collect();

        // algebraic equivariance: with corresponding (rotated) means given,
        // the n = 1 statistic is solver-free and must agree to 1e-8
        let mut direct = TestOptions::default();
        direct.n_segments = 1;
        let mx = mean_geodesic(&space, &ga, 1, &direct.quad, &direct.mean).unwrap().mean;
        let my = mean_geodesic(&space, &gb, 1, &direct.quad, &direct.mean).unwrap().mean;
        let t_orig = t2_with_means(&space, &ga, &gb, &mx, &my, &direct).unwrap();
        let t_rot =
            t2_with_means(&space, &ga_r, &gb_r, &rotate(&mx), &rotate(&my), &direct).unwrap();
        assert!(
            (t_orig - t_rot).abs() < 1e-8 * t_orig.max(1.0),
            "t² changed under rotation: {t_orig} vs {t_rot}"
        );

        // full pipeline with independently re-solved means agrees to the
        // optimizer's noise floor (value-based line search resolves the
        // means to about 1e-9, which the covariance inversion amplifies)
        let opts = TestOptions::default();
        let p_orig = t2_from_groups(&space, &ga, &gb, &opts).unwrap();
        let p_rot = t2_from_groups(&space, &ga_r, &gb_r, &opts).unwrap();
        assert!(
            (p_orig - p_rot).abs() < 1e-6 * p_orig.max(1.0),
            "resolved t² drifted beyond solver noise: {p_orig} vs {p_rot}"
        );
    }

    #[test]
    fn permutation_identical_groups_gives_p_one() {
        let e = Euclidean::new(1);
        let gs: Vec<GeodesicPoint> = vec![
            flat_geodesic(0.0, 0.1),
            flat_geodesic(0.2, 0.3),
            flat_geodesic(-0.1, 0.0),
        ];
        let ga = GroupSample::new("a", gs.clone()).unwrap();
        let gb = GroupSample::new("b", gs).unwrap();
        let res = permutation_test(&e, &ga, &gb, 50, 7, &TestOptions::default()).unwrap();
        assert_eq!(res.p_value, 1.0);
        assert!(res.consistent_with_counting_rule(false));
    }

    #[test]
    fn permutation_separated_groups_rejects() {
        let s = Sphere::s2();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(21);
        let pole = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let mk = |center: &Point, rng: &mut rand_chacha::ChaCha12Rng| -> Vec<GeodesicPoint> {
            (0..8)
                .map(|_| {
                    let jitter = |p: &Point, rng: &mut rand_chacha::ChaCha12Rng| {
                        let mut n = DVector::from_fn(3, |_, _| {
                            rng.sample::<f64, _>(rand_distr::StandardNormal)
                        });
                        n = s.project_tangent(p, &n) * 0.05;
                        s.exp(p, &n)
                    };
                    let x = jitter(center, rng);
                    let y = jitter(&s.exp(center, &(s.project_tangent(center, &pole) * 0.4)), rng);
                    GeodesicPoint::new(x, y)
                })
                .collect()
        };
        let ca = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let cb = DVector::from_vec(vec![(0.6f64).cos(), (0.6f64).sin(), 0.0]);
        let ga = GroupSample::new("a", mk(&ca, &mut rng)).unwrap();
        let gb = GroupSample::new("b", mk(&cb, &mut rng)).unwrap();
        let res = permutation_test(&s, &ga, &gb, 99, 3, &TestOptions::default()).unwrap();
        assert!(res.p_value <= 0.05, "p = {}", res.p_value);
    }

    #[test]
    fn permutation_test_is_deterministic() {
        let e = Euclidean::new(1);
        let ga = GroupSample::new(
            "a",
            vec![flat_geodesic(0.0, 0.1), flat_geodesic(0.3, 0.2), flat_geodesic(0.1, 0.4)],
        )
        .unwrap();
        let gb = GroupSample::new(
            "b",
            vec![flat_geodesic(0.5, 0.6), flat_geodesic(0.7, 0.5), flat_geodesic(0.6, 0.8)],
        )
        .unwrap();
        let opts = TestOptions::default();
        let r1 = permutation_test(&e, &ga, &gb, 64, 42, &opts).unwrap();
        let r2 = permutation_test(&e, &ga, &gb, 64, 42, &opts).unwrap();
        assert_eq!(r1, r2);
        let r3 = permutation_test(&e, &ga, &gb, 64, 43, &opts).unwrap();
        assert_ne!(r1.null_t2, r3.null_t2);
        // smoothed variant lands on the (k+1)/(B+1) grid
        let mut smoothed = TestOptions::default();
        smoothed.smoothed_p = true;
        let r4 = permutation_test(&e, &ga, &gb, 64, 42, &smoothed).unwrap();
        let k = (r4.p_value * 65.0).round();
        assert_relative_eq!(r4.p_value, k / 65.0, epsilon = 1e-12);
        assert!(r4.consistent_with_counting_rule(true));
    }
}
