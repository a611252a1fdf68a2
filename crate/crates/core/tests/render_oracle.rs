use nalgebra::{Matrix2, Matrix2x3, Quaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatwalk::gauss::{Gaussian3D, GaussianSet};
use splatwalk::render::{project_gaussian, project_point, project_sorted, render, Camera, RenderConfig};

fn random_scene(rng: &mut ChaCha8Rng) -> (GaussianSet, Camera) {
    let n = rng.gen_range(1..=200);
    let set: GaussianSet = (0..n)
        .map(|_| {
            Gaussian3D::new(
                Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                Vector3::new(rng.gen_range(0.01..0.3), rng.gen_range(0.01..0.3), rng.gen_range(0.01..0.3)),
                Quaternion::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ),
                rng.gen_range(0.05..0.99),
                Vector3::new(rng.gen(), rng.gen(), rng.gen()),
            )
            .unwrap()
        })
        .collect();
    let w = rng.gen_range(8..=64);
    let h = rng.gen_range(8..=64);
    let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let eye = Vector3::new(3.0 * a.cos(), 3.0 * a.sin(), rng.gen_range(-1.0..2.0));
    let cam = Camera::look_at(eye, Vector3::zeros(), Vector3::z(), rng.gen_range(20.0..60.0), [w, h]).unwrap();
    (set, cam)
}

/// Every splat at every pixel, composited front to back with an independently
/// computed conic.
fn brute_force(scene: &GaussianSet, cam: &Camera, cfg: &RenderConfig, x: u32, y: u32) -> [f64; 3] {
    let splats = project_sorted(scene, cam, cfg);
    let u = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
    let mut rgb = [0.0; 3];
    let mut t = 1.0;
    for s in &splats {
        let conic = s.cov.try_inverse().unwrap();
        let d = u - s.center;
        let power = -0.5 * (d.transpose() * conic * d)[(0, 0)];
        if power < -cfg.cutoff {
            continue;
        }
        let a = (s.opacity * power.exp()).min(cfg.max_alpha);
        for c in 0..3 {
            rgb[c] += a * t * s.color[c];
        }
        t *= 1.0 - a;
        if t < cfg.min_transmittance {
            break;
        }
    }
    let bg = cfg.background;
    [0, 1, 2].map(|c| (rgb[c] + t * bg[c]).clamp(0.0, 1.0))
}

#[test]
fn tile_renderer_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = RenderConfig { background: [0.1, 0.2, 0.3], ..Default::default() };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (scene, cam) = random_scene(&mut rng);
        let img = render(&scene, &cam, &cfg).unwrap();
        for y in 0..cam.height {
            for x in 0..cam.width {
                let want = brute_force(&scene, &cam, &cfg, x, y);
                let got = img.pixel(x, y);
                for c in 0..3 {
                    worst = worst.max((want[c] - got[c]).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-5, "max channel deviation {worst}");
}

fn numeric_jacobian(cam: &Camera, p: &Vector3<f64>) -> Matrix2x3<f64> {
    let h = 1e-6;
    let mut j = Matrix2x3::zeros();
    for k in 0..3 {
        let mut a = *p;
        let mut b = *p;
        a[k] += h;
        b[k] -= h;
        let d = (project_point(cam, &cam.to_camera(&a)) - project_point(cam, &cam.to_camera(&b))) / (2.0 * h);
        j.set_column(k, &d);
    }
    j
}

#[test]
fn screen_covariance_matches_numeric_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = RenderConfig::default();
    let mut checked = 0;
    for _ in 0..100 {
        let (scene, cam) = random_scene(&mut rng);
        for (i, g) in scene.iter().enumerate() {
            let Some(s) = project_gaussian(g, i, &cam, &cfg) else { continue };
            let j = numeric_jacobian(&cam, &g.center());
            let want = j * g.covariance() * j.transpose() + Matrix2::identity() * cfg.dilation;
            let rel = (s.cov - want).norm() / want.norm();
            assert!(rel <= 1e-4, "relative error {rel}");
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn rendering_ignores_input_order_when_depths_differ() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = RenderConfig::default();
    for _ in 0..10 {
        let (scene, cam) = random_scene(&mut rng);
        let mut v = scene.as_slice().to_vec();
        v.reverse();
        let a = render(&scene, &cam, &cfg).unwrap();
        let b = render(&GaussianSet::new(v), &cam, &cfg).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-12);
    }
}

#[test]
fn repeated_renders_are_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (scene, cam) = random_scene(&mut rng);
    let cfg = RenderConfig::default();
    assert_eq!(render(&scene, &cam, &cfg).unwrap(), render(&scene, &cam, &cfg).unwrap());
}
