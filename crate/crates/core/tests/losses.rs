use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatocc::diffcore::ops::softmax;
use splatocc::diffcore::{check_tape_fn, Parameter, Tensor};
use splatocc::losses::*;
use splatocc::renderer::Image;

fn random_tensor(rng: &mut ChaCha8Rng, n: usize, k: usize, spread: f64) -> Tensor<f64> {
    let data = (0..n * k).map(|_| rng.random_range(-spread..spread)).collect();
    Tensor::new(&[n, k], data).unwrap()
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image<f64> {
    Image::new(w, h, (0..w * h * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
}

#[test]
fn cross_entropy_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let logits = random_tensor(&mut rng, 7, 5, 3.0);
        let labels: Vec<usize> = (0..7).map(|_| rng.random_range(0..5)).collect();
        let mut want = 0.0;
        for i in 0..7 {
            let denom: f64 = (0..5).map(|c| logits.at(i, c).exp()).sum();
            want += -(logits.at(i, labels[i]).exp() / denom).ln();
        }
        want /= 7.0;
        let got = cross_entropy(&logits, &labels, None).unwrap().value;
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn uniform_logits_give_ln_k() {
    let logits = Tensor::<f64>::zeros(&[3, 4]);
    let v = cross_entropy(&logits, &[0, 1, 3], None).unwrap().value;
    assert!((v - 4f64.ln()).abs() < 1e-12);
}

/// Lovász extension evaluated directly on the chain of sorted prefixes of the
/// error vector, with the Jaccard loss `|S| / |G ∪ S|` as the set function.
fn lovasz_chain_oracle(probs: &Tensor<f64>, labels: &[usize]) -> f64 {
    let k = probs.cols();
    let n = labels.len();
    let mut total = 0.0;
    let mut present = 0;
    for c in 0..k {
        let gt: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        if !gt.iter().any(|&g| g) {
            continue;
        }
        present += 1;
        let m: Vec<f64> = (0..n).map(|i| if gt[i] { 1.0 - probs.at(i, c) } else { probs.at(i, c) }).collect();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| m[b].partial_cmp(&m[a]).unwrap());
        let set_fn = |s: &[usize]| {
            let mut union: Vec<usize> = (0..n).filter(|&i| gt[i]).collect();
            for &i in s {
                if !union.contains(&i) {
                    union.push(i);
                }
            }
            s.len() as f64 / union.len() as f64
        };
        let mut prev = 0.0;
        for j in 0..n {
            let f = set_fn(&idx[..=j]);
            total += m[idx[j]] * (f - prev);
            prev = f;
        }
    }
    total / present as f64
}

#[test]
fn lovasz_matches_chain_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let n = 1 + trial % 6;
        let k = 2 + trial % 3;
        let probs = splatocc::diffcore::ops::softmax_values(&random_tensor(&mut rng, n, k, 2.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let got = lovasz_softmax(&probs, &labels, None).unwrap().value;
        let want = lovasz_chain_oracle(&probs, &labels);
        assert!((got - want).abs() < 1e-10, "trial {trial}: {got} vs {want}");
    }
}

#[test]
fn lovasz_on_hard_predictions_is_one_minus_jaccard() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let k = 3;
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut probs = Tensor::<f64>::zeros(&[n, k]);
        for i in 0..n {
            probs.data_mut()[i * k + pred[i]] = 1.0;
        }
        let mut want = 0.0;
        let mut present = 0;
        for c in 0..k {
            let g = (0..n).filter(|&i| labels[i] == c).count();
            if g == 0 {
                continue;
            }
            present += 1;
            let inter = (0..n).filter(|&i| labels[i] == c && pred[i] == c).count();
            let union = (0..n).filter(|&i| labels[i] == c || pred[i] == c).count();
            want += 1.0 - inter as f64 / union as f64;
        }
        want /= present as f64;
        let got = lovasz_softmax(&probs, &labels, None).unwrap().value;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

#[test]
fn occupancy_loss_is_sum_of_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let logits = random_tensor(&mut rng, 9, 4, 2.0);
    let labels: Vec<usize> = (0..9).map(|_| rng.random_range(0..4)).collect();
    let ce = cross_entropy(&logits, &labels, None).unwrap().value;
    let lv = lovasz_softmax(&splatocc::diffcore::ops::softmax_values(&logits), &labels, None).unwrap().value;
    assert_eq!(occupancy_loss(&logits, &labels, None).unwrap(), ce + lv);
}

#[test]
fn occupancy_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let logits = random_tensor(&mut rng, 6, 4, 1.5);
    let labels = vec![0, 1, 2, 3, 1, 0];
    let params = vec![Parameter::new("logits", logits)];
    let report = check_tape_fn(|tape, v| Ok(occupancy_loss_op(tape, v[0], &labels, None)?.total), &params, 1e-5, 1e-5).unwrap();
    assert!(report.pass(), "{report}");
    let report = check_tape_fn(
        |tape, v| {
            let p = softmax(tape, v[0]);
            cross_entropy_op(tape, v[0], &labels, None).and_then(|ce| {
                let l = lovasz_softmax_op(tape, p, &labels, None)?;
                splatocc::diffcore::ops::add(tape, ce, l)
            })
        },
        &params,
        1e-5,
        1e-5,
    )
    .unwrap();
    assert!(report.pass(), "{report}");
}

#[test]
fn ssim_is_symmetric_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = SsimParams::default();
    for _ in 0..5 {
        let a = random_image(&mut rng, 14, 12);
        let b = random_image(&mut rng, 14, 12);
        let ab = ssim(&a, &b, &p).unwrap();
        let ba = ssim(&b, &a, &p).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        let d = d_ssim(&a, &b, &p).unwrap();
        assert!((0.0..=1.0).contains(&d));
    }
}

#[test]
fn d_ssim_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = SsimParams::default();
    let a = random_image(&mut rng, 13, 12);
    let b = random_image(&mut rng, 13, 12);
    let (_, g) = d_ssim_with_grad(&a, &b, &p).unwrap();
    let eps = 1e-5;
    for idx in (0..a.pixels.len()).step_by(7) {
        let mut hi = a.clone();
        hi.pixels[idx] += eps;
        let mut lo = a.clone();
        lo.pixels[idx] -= eps;
        let fd = (d_ssim(&hi, &b, &p).unwrap() - d_ssim(&lo, &b, &p).unwrap()) / (2.0 * eps);
        let err = (fd - g[idx]).abs() / fd.abs().max(g[idx].abs()).max(1e-6);
        assert!(err < 1e-4, "pixel {idx}: analytic {} fd {fd}", g[idx]);
    }
}

#[test]
fn photometric_recombines_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random_image(&mut rng, 16, 16);
    let b = random_image(&mut rng, 16, 16);
    let p = SsimParams::default();
    let l1: f64 = a.pixels.iter().zip(&b.pixels).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.pixels.len() as f64;
    let ds = d_ssim(&a, &b, &p).unwrap();
    let pm = photometric_loss(&a, &b, 0.2, &p).unwrap();
    assert!((pm.total - (0.8 * l1 + 0.2 * ds)).abs() < 1e-12);
}

#[test]
fn photometric_op_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let target = random_image(&mut rng, 12, 11);
    let rendered = random_image(&mut rng, 12, 11);
    let params = vec![Parameter::new("image", Tensor::new(&[11, 12, 3], rendered.pixels.clone()).unwrap())];
    let p = SsimParams::default();
    let report = check_tape_fn(|tape, v| Ok(photometric_op(tape, v[0], &target, 0.2, &p)?.0), &params, 1e-5, 1e-4).unwrap();
    assert!(report.pass(), "{report}");
}
