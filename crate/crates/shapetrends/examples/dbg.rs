use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use shapetrends::geodesic_space::*;
use shapetrends::manifold::{Manifold, Point, Sphere};
use std::time::Instant;

fn main() {
    let s = Sphere::s2();
    let mut rng = ChaCha12Rng::seed_from_u64(21);
    let mk = |rng: &mut ChaCha12Rng| -> Vec<GeodesicPoint> {
        (0..8).map(|_| {
            let mut x = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
            x.normalize_mut();
            let dir = s.project_tangent(&x, &DVector::from_fn(3, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal)));
            let y = s.exp(&x, &(dir * 0.3));
            GeodesicPoint::new(x, y)
        }).collect()
    };
    // cluster them near one point for realism
    let center: Point = DVector::from_vec(vec![1.0, 0.0, 0.0]);
    let gs: Vec<GeodesicPoint> = (0..16).map(|_| {
        let n = s.project_tangent(&center, &DVector::from_fn(3, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))) * 0.1;
        let x = s.exp(&center, &n);
        let dir = s.project_tangent(&x, &DVector::from_fn(3, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))) * 0.4;
        GeodesicPoint::new(x.clone(), s.exp(&x, &dir))
    }).collect();
    let _ = mk;

    for (n, quad) in [(1usize, QuadratureRule::gauss_legendre(5).unwrap()), (2, QuadratureRule::default())] {
        let t0 = Instant::now();
        let mut total_iters = 0;
        for _ in 0..10 {
            let r = mean_geodesic(&s, &gs, n, &quad, &MeanGeodesicOptions::default()).unwrap();
            total_iters += r.iterations;
        }
        println!("mean n={n} quad={}: {:?} per call, iters avg {}", quad.label(), t0.elapsed() / 10, total_iters / 10);
    }
}
