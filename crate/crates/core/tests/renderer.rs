use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatocc::diffcore::ops::{mul, sum};
use splatocc::diffcore::{check_tape_fn, Tensor};
use splatocc::gaussian_field::{GaussianField, GaussianPrimitive, Provenance};
use splatocc::renderer::camera::Camera;
use splatocc::renderer::{rasterize, rasterize_op};

const ID: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn cam(w: usize, h: usize) -> Camera<f64> {
    Camera::new(24.0, 24.0, w as f64 / 2.0, h as f64 / 2.0, ID, [0.0; 3], w, h).unwrap()
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn splat(mu: [f64; 3], sigma: f64, alpha: f64, rgb: [f64; 3]) -> GaussianPrimitive<f64> {
    GaussianPrimitive { mu, log_scale: [sigma.ln(); 3], rot: [1.0, 0.0, 0.0, 0.0], opacity_logit: logit(alpha), color: rgb.map(logit) }
}

fn field(prims: Vec<GaussianPrimitive<f64>>) -> GaussianField<f64> {
    let n = prims.len();
    GaussianField::new(prims, vec![Provenance::PointAnchor; n])
}

#[test]
fn zero_field_is_background_exactly() {
    let bg = [0.1, 0.25, 0.7];
    let (img, _) = rasterize(&GaussianField::default(), &cam(9, 7), bg);
    assert!(img.pixels.chunks(3).all(|p| p == bg));
}

/// A splat whose mean lands on a pixel center contributes its full opacity
/// there: `C = c·α + (1 − α)·bg`.
#[test]
fn centered_splat_hand_formula() {
    let c = cam(10, 10);
    // mean projects to (5.5, 5.5), the center of pixel (5, 5)
    let z = 4.0;
    let mu = [0.5 * z / 24.0, 0.5 * z / 24.0, z];
    let (alpha, rgb, bg) = (0.6, [0.9, 0.2, 0.4], [0.05, 0.1, 0.3]);
    let g = splat(mu, 0.05, alpha, rgb);
    let (img, _) = rasterize(&field(vec![g]), &c, bg);
    let a = 1.0 / (1.0 + (-g.opacity_logit).exp());
    let col = g.rgb();
    let px = img.pixel(5, 5);
    for k in 0..3 {
        let want = col[k] * a + (1.0 - a) * bg[k];
        assert!((px[k] - want).abs() < 1e-12, "channel {k}: {} vs {want}", px[k]);
        assert!((col[k] - rgb[k]).abs() < 1e-12);
    }
}

/// Two splats on the same ray: `C = c₁α₁ + c₂α₂(1 − α₁) + bg(1 − α₁)(1 − α₂)`.
#[test]
fn two_splat_compositing() {
    let c = cam(10, 10);
    let on_ray = |z: f64| [0.5 * z / 24.0, 0.5 * z / 24.0, z];
    let (a1, c1) = (0.5, [0.8, 0.1, 0.2]);
    let (a2, c2) = (0.7, [0.1, 0.6, 0.9]);
    let bg = [0.2, 0.2, 0.2];
    // listed back to front to exercise the depth sort
    let far = splat(on_ray(6.0), 0.05, a2, c2);
    let near = splat(on_ray(3.0), 0.05, a1, c1);
    let (img, _) = rasterize(&field(vec![far, near]), &c, bg);
    let px = img.pixel(5, 5);
    let (a1, a2) = (near.opacity(), far.opacity());
    let (c1, c2) = (near.rgb(), far.rgb());
    for k in 0..3 {
        let want = c1[k] * a1 + c2[k] * a2 * (1.0 - a1) + bg[k] * (1.0 - a1) * (1.0 - a2);
        assert!((px[k] - want).abs() < 1e-12);
    }
}

fn random_prims(rng: &mut ChaCha8Rng, n: usize) -> Vec<GaussianPrimitive<f64>> {
    (0..n)
        .map(|_| {
            let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            GaussianPrimitive {
                mu: [rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(2.5..4.0)],
                log_scale: std::array::from_fn(|_| rng.random_range(0.08f64..0.2).ln()),
                rot: q,
                opacity_logit: rng.random_range(-0.5..1.5),
                color: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            }
        })
        .collect()
}

#[test]
fn rasterizer_gradients_all_groups() {
    let c = cam(16, 16);
    let bg = [0.1, 0.2, 0.3];
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let f = field(random_prims(&mut rng, 4));
        let weights = Tensor::new(&[16, 16, 3], (0..768).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let params = f.to_parameters().to_vec();
        let report = check_tape_fn(
            |tape, v| {
                let (img, _) = rasterize_op(tape, [v[0], v[1], v[2], v[3], v[4]], &c, bg)?;
                let w = tape.constant(weights.clone());
                let p = mul(tape, img, w)?;
                Ok(sum(tape, p))
            },
            &params,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.pass(), "seed {seed}: {report}");
    }
}
