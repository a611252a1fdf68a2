use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatwalk::field::{soft_distance, soft_distance_grad, DistanceField};

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)))
        .collect()
}

fn query(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(-1.0..1.0))
}

fn nn(points: &[Vector3<f64>], x: &Vector3<f64>) -> f64 {
    points.iter().map(|p| (x - p).norm()).fold(f64::INFINITY, f64::min)
}

#[test]
fn sandwich_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut count = 0;
    for (n, beta) in [(50, 10.0), (400, 50.0), (2000, 200.0), (1, 50.0)] {
        let pts = cloud(&mut rng, n);
        let field = DistanceField::new(&pts, beta).unwrap();
        for _ in 0..2500 {
            let x = query(&mut rng);
            let d = soft_distance(&x, &field);
            let dnn = nn(&pts, &x);
            assert!(d <= dnn + 1e-12, "{d} > {dnn}");
            assert!(d >= dnn - (n as f64).ln() / beta - 1e-12);
            count += 1;
        }
    }
    assert_eq!(count, 10_000);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let pts = cloud(&mut rng, 500);
    let field = DistanceField::new(&pts, 50.0).unwrap();
    let h = 1e-6;
    for _ in 0..1000 {
        let x = query(&mut rng);
        let g = soft_distance_grad(&x, &field);
        let mut fd = Vector3::zeros();
        for k in 0..3 {
            let mut a = x;
            let mut b = x;
            a[k] += h;
            b[k] -= h;
            fd[k] = (soft_distance(&a, &field) - soft_distance(&b, &field)) / (2.0 * h);
        }
        assert!((g - fd).norm() <= 1e-4 * fd.norm(), "{g:?} vs {fd:?}");
    }
}

#[test]
fn one_lipschitz() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let pts = cloud(&mut rng, 300);
    let field = DistanceField::new(&pts, 50.0).unwrap();
    for _ in 0..10_000 {
        let x = query(&mut rng);
        let y = if rng.gen_bool(0.5) { query(&mut rng) } else { x + Vector3::new(rng.gen_range(-0.01..0.01), 0.0, rng.gen_range(-0.01..0.01)) };
        let lhs = (soft_distance(&x, &field) - soft_distance(&y, &field)).abs();
        assert!(lhs <= (x - y).norm() + 1e-12);
    }
}

proptest! {
    #[test]
    fn soft_distance_is_permutation_invariant(seed in 0u64..1000, beta in 1.0f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = cloud(&mut rng, 40);
        let mut rev = pts.clone();
        rev.reverse();
        let a = DistanceField::new(&pts, beta).unwrap();
        let b = DistanceField::new(&rev, beta).unwrap();
        let x = query(&mut rng);
        prop_assert!((soft_distance(&x, &a) - soft_distance(&x, &b)).abs() < 1e-12);
    }

    #[test]
    fn soft_distance_tends_to_hard_distance(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = cloud(&mut rng, 30);
        let field = DistanceField::new(&pts, 1e4).unwrap();
        let x = query(&mut rng);
        prop_assert!((soft_distance(&x, &field) - nn(&pts, &x)).abs() <= (30f64).ln() / 1e4 + 1e-12);
    }
}
