//! Cross-entropy and Lovász-softmax over per-voxel class scores.

use crate::diffcore::ops::softmax_values;
use crate::diffcore::{Tape, Tensor, Var, Vjp};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Value and gradient of a loss over an `N×K` input.
#[derive(Clone, Debug)]
pub struct LossValue<T: Real> {
    pub value: T,
    pub grad: Tensor<T>,
    /// Set when every label was ignored (the loss is then zero).
    pub all_ignored: bool,
}

fn check_labels<T: Real>(x: &Tensor<T>, labels: &[usize], ignore: Option<usize>) -> Result<()> {
    if x.shape().len() != 2 || x.rows() != labels.len() {
        return Err(Error::dim(format!("{:?} scores for {} labels", x.shape(), labels.len())));
    }
    let k = x.cols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k && Some(l) != ignore) {
        return Err(Error::Range(format!("label {bad} outside [0, {k})")));
    }
    Ok(())
}

/// Mean of `−log softmax(logits)[label]` over non-ignored rows.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize], ignore: Option<usize>) -> Result<LossValue<T>> {
    check_labels(logits, labels, ignore)?;
    let k = logits.cols();
    let probs = softmax_values(logits);
    let valid: Vec<usize> = (0..labels.len()).filter(|&i| Some(labels[i]) != ignore).collect();
    let mut grad = Tensor::zeros(logits.shape());
    if valid.is_empty() {
        log::warn!("cross_entropy: every label ignored");
        return Ok(LossValue { value: T::zero(), grad, all_ignored: true });
    }
    let inv_n = T::one() / T::of_usize(valid.len());
    let mut total = T::zero();
    for &i in &valid {
        let row = logits.row(i);
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        total = total + (lse - row[labels[i]]);
        let g = grad.row_mut(i);
        for c in 0..k {
            let onehot = if c == labels[i] { T::one() } else { T::zero() };
            g[c] = (probs.at(i, c) - onehot) * inv_n;
        }
    }
    Ok(LossValue { value: total * inv_n, grad, all_ignored: false })
}

/// Gradient of the Lovász extension of the Jaccard loss along a sorted
/// ground-truth indicator.
pub fn lovasz_grad<T: Real>(gt_sorted: &[bool]) -> Vec<T> {
    let gts = gt_sorted.iter().filter(|&&g| g).count();
    let mut out = Vec::with_capacity(gt_sorted.len());
    let mut cum_fg = 0usize;
    let mut cum_bg = 0usize;
    let mut prev = T::zero();
    for &g in gt_sorted {
        if g {
            cum_fg += 1;
        } else {
            cum_bg += 1;
        }
        let inter = T::of_usize(gts - cum_fg);
        let union = T::of_usize(gts + cum_bg);
        let jac = T::one() - inter / union;
        out.push(jac - prev);
        prev = jac;
    }
    out
}

/// Lovász-softmax averaged over the classes present in `labels`.
///
/// The sort is treated as piecewise constant in the gradient.
pub fn lovasz_softmax<T: Real>(probs: &Tensor<T>, labels: &[usize], ignore: Option<usize>) -> Result<LossValue<T>> {
    check_labels(probs, labels, ignore)?;
    let k = probs.cols();
    let valid: Vec<usize> = (0..labels.len()).filter(|&i| Some(labels[i]) != ignore).collect();
    let mut grad = Tensor::zeros(probs.shape());
    let present: Vec<usize> = (0..k).filter(|&c| valid.iter().any(|&i| labels[i] == c)).collect();
    if present.is_empty() {
        return Ok(LossValue { value: T::zero(), grad, all_ignored: valid.is_empty() });
    }
    let inv_c = T::one() / T::of_usize(present.len());
    let mut total = T::zero();
    let mut order: Vec<usize> = Vec::with_capacity(valid.len());
    let mut errors: Vec<T> = vec![T::zero(); labels.len()];
    for &c in &present {
        for &i in &valid {
            let p = probs.at(i, c);
            errors[i] = if labels[i] == c { T::one() - p } else { p };
        }
        order.clear();
        order.extend_from_slice(&valid);
        order.sort_by(|&a, &b| errors[b].partial_cmp(&errors[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
        let gt_sorted: Vec<bool> = order.iter().map(|&i| labels[i] == c).collect();
        let lg = lovasz_grad::<T>(&gt_sorted);
        for (rank, &i) in order.iter().enumerate() {
            total = total + errors[i] * lg[rank];
            let sign = if labels[i] == c { -T::one() } else { T::one() };
            let cols = grad.cols();
            grad.data_mut()[i * cols + c] = sign * lg[rank] * inv_c;
        }
    }
    Ok(LossValue { value: total * inv_c, grad, all_ignored: false })
}

struct PrecomputedGrad<T: Real> {
    grad: Tensor<T>,
    name: &'static str,
}

impl<T: Real> Vjp<T> for PrecomputedGrad<T> {
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, _i: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(self.grad.scale(g.data()[0]))]
    }
}

/// Records a scalar loss whose gradient with respect to its single input was
/// computed during the forward pass.
pub(crate) fn push_loss<T: Real>(tape: &mut Tape<T>, input: Var, lv: LossValue<T>, name: &'static str) -> Var {
    tape.push(&[input], Tensor::scalar(lv.value), PrecomputedGrad { grad: lv.grad, name })
}

pub fn cross_entropy_op<T: Real>(tape: &mut Tape<T>, logits: Var, labels: &[usize], ignore: Option<usize>) -> Result<Var> {
    let lv = cross_entropy(tape.value(logits), labels, ignore)?;
    Ok(push_loss(tape, logits, lv, "cross_entropy"))
}

pub fn lovasz_softmax_op<T: Real>(tape: &mut Tape<T>, probs: Var, labels: &[usize], ignore: Option<usize>) -> Result<Var> {
    let lv = lovasz_softmax(tape.value(probs), labels, ignore)?;
    Ok(push_loss(tape, probs, lv, "lovasz_softmax"))
}

/// Occupancy loss terms recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct OccupancyLossVars {
    pub ce: Var,
    pub lovasz: Var,
    pub total: Var,
}

/// Unweighted sum of cross-entropy on the logits and Lovász-softmax on their
/// softmax.
pub fn occupancy_loss_op<T: Real>(tape: &mut Tape<T>, logits: Var, labels: &[usize], ignore: Option<usize>) -> Result<OccupancyLossVars> {
    let ce = cross_entropy_op(tape, logits, labels, ignore)?;
    let probs = crate::diffcore::ops::softmax(tape, logits);
    let lovasz = lovasz_softmax_op(tape, probs, labels, ignore)?;
    let total = crate::diffcore::ops::add(tape, ce, lovasz)?;
    Ok(OccupancyLossVars { ce, lovasz, total })
}

/// Value-only occupancy loss.
pub fn occupancy_loss<T: Real>(logits: &Tensor<T>, labels: &[usize], ignore: Option<usize>) -> Result<T> {
    let ce = cross_entropy(logits, labels, ignore)?;
    let lv = lovasz_softmax(&softmax_values(logits), labels, ignore)?;
    Ok(ce.value + lv.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::<f64>::zeros(&[3, 4]);
        let lv = cross_entropy(&logits, &[0, 1, 3], None).unwrap();
        assert!((lv.value - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_give_zero() {
        let logits = Tensor::from_rows(&[vec![100.0, 0.0, 0.0], vec![0.0, 0.0, 100.0]]);
        let lv = cross_entropy(&logits, &[0, 2], None).unwrap();
        assert!(lv.value < 1e-40);
    }

    #[test]
    fn all_ignored_is_zero_with_flag() {
        let logits = Tensor::<f64>::zeros(&[2, 3]);
        let lv = cross_entropy(&logits, &[255, 255], Some(255)).unwrap();
        assert_eq!(lv.value, 0.0);
        assert!(lv.all_ignored);
    }

    #[test]
    fn bad_label_rejected() {
        let logits = Tensor::<f64>::zeros(&[1, 3]);
        assert!(cross_entropy(&logits, &[3], None).is_err());
    }

    #[test]
    fn lovasz_single_element_is_its_error() {
        let probs = Tensor::<f64>::from_rows(&[vec![0.7, 0.3]]);
        let lv = lovasz_softmax(&probs, &[1], None).unwrap();
        assert!((lv.value - 0.7).abs() < 1e-15);
    }

    #[test]
    fn lovasz_perfect_prediction_is_zero() {
        let probs = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(lovasz_softmax(&probs, &[0, 1, 0], None).unwrap().value, 0.0);
    }

    #[test]
    fn lovasz_no_present_classes() {
        let probs = Tensor::from_rows(&[vec![0.5, 0.5]]);
        assert_eq!(lovasz_softmax(&probs, &[9], Some(9)).unwrap().value, 0.0);
    }
}
