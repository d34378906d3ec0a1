use std::fmt::Write as _;

use crate::diffcore::ops::{row_dot, scale, shift, softmax, softmax_values};
use crate::diffcore::{mlp_forward, Activation, Mlp, MlpVars, RngStream, Tape, Tensor, Var, Vjp};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Maps a query feature to a distribution over candidate neighborhood sizes.
#[derive(Clone, Debug)]
pub struct KSelectorParams<T: Real> {
    pub mlp: Mlp<T>,
    pub candidates: Vec<usize>,
    pub tau: T,
}

impl<T: Real> KSelectorParams<T> {
    /// Default selector: `C → 2C → |K|` with ReLU.
    pub fn new(c: usize, candidates: Vec<usize>, tau: T, rng: &mut RngStream) -> Result<Self> {
        let mlp = Mlp::new("k_selector", &[c, 2 * c, candidates.len()], Activation::Relu, rng);
        Self::from_parts(mlp, candidates, tau)
    }

    pub fn from_parts(mlp: Mlp<T>, candidates: Vec<usize>, tau: T) -> Result<Self> {
        if candidates.is_empty() || candidates[0] < 1 || candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!("candidates must be strictly increasing and ≥ 1, got {candidates:?}")));
        }
        if mlp.out_dim() != candidates.len() {
            return Err(Error::Config(format!("selector emits {} logits for {} candidates", mlp.out_dim(), candidates.len())));
        }
        if !(tau > T::zero()) {
            return Err(Error::Config(format!("temperature must be positive, got {tau}")));
        }
        Ok(Self { mlp, candidates, tau })
    }

    pub fn k_max(&self) -> usize {
        *self.candidates.last().expect("validated non-empty")
    }

    fn candidate_values(&self) -> Vec<T> {
        self.candidates.iter().map(|&k| T::of_usize(k)).collect()
    }

    /// Candidate nearest to `e`, ties toward the larger one. For consecutive
    /// candidates this is round-half-up.
    pub fn discretize(&self, e: T) -> usize {
        let mut best = self.candidates[0];
        for &k in &self.candidates[1..] {
            if (T::of_usize(k) - e).abs() <= (T::of_usize(best) - e).abs() {
                best = k;
            }
        }
        best
    }
}

/// One query's neighborhood-size decision.
#[derive(Clone, Debug, PartialEq)]
pub struct KDecision<T> {
    pub k: usize,
    pub z: Vec<T>,
    pub expectation: T,
    pub logits: Vec<T>,
}

/// Standard Gumbel noise, one row per query; row `i` comes from
/// `rng.child(keys[i])`, so a query's noise depends only on its key.
pub fn gumbel_noise<T: Real>(rng: &RngStream, keys: &[u64], k: usize) -> Tensor<T> {
    let n = keys.len();
    let mut data = Vec::with_capacity(n * k);
    for &key in keys {
        let mut r = rng.child(key);
        data.extend((0..k).map(|_| T::of(r.gumbel())));
    }
    Tensor::new(&[n, k], data).expect("noise shape")
}

/// `softmax((logits + g) / τ)` for a single logit vector with fresh noise.
pub fn gumbel_softmax<T: Real>(logits: &Tensor<T>, tau: T, rng: &mut RngStream) -> Result<Tensor<T>> {
    if !(tau > T::zero()) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    let data = logits.data().iter().map(|&l| (l + T::of(rng.gumbel())) / tau).collect();
    let z = Tensor::new(logits.shape(), data)?;
    Ok(softmax_values(&z))
}

/// Tape version with the noise supplied (and held constant).
pub fn gumbel_softmax_op<T: Real>(tape: &mut Tape<T>, logits: Var, noise: &Tensor<T>, tau: T) -> Result<Var> {
    let shifted = shift(tape, logits, noise)?;
    let scaled = scale(tape, shifted, T::one() / tau);
    Ok(softmax(tape, scaled))
}

/// Forward: snap to the nearest candidate. Backward: identity.
struct StraightThrough;

impl<T: Real> Vjp<T> for StraightThrough {
    fn name(&self) -> &'static str {
        "straight_through"
    }

    fn backward(&self, _i: &[&Tensor<T>], _o: &Tensor<T>, g: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        vec![Some(g.clone())]
    }
}

/// How the discrete `k` enters the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KMode {
    /// Rounded forward, identity backward.
    StraightThrough,
    /// `k` is the expectation itself; used to verify the estimator.
    Relaxed,
}

pub struct KSelection<T> {
    /// Per-query `k` as seen by the rest of the graph, shape `[N]`.
    pub k: Var,
    pub z: Var,
    pub expectation: Var,
    pub decisions: Vec<KDecision<T>>,
}

/// Batched selector over query rows `feats: N×C`.
pub fn select_k_op<T: Real>(
    tape: &mut Tape<T>,
    feats: Var,
    kp: &KSelectorParams<T>,
    mlp: &MlpVars,
    noise: &Tensor<T>,
    mode: KMode,
) -> Result<KSelection<T>> {
    let logits = mlp_forward(tape, feats, &mlp.layers)?;
    let z = gumbel_softmax_op(tape, logits, noise, kp.tau)?;
    let expectation = row_dot(tape, z, &kp.candidate_values())?;
    let kk = kp.candidates.len();
    let (lv, zv, ev) = (tape.value(logits), tape.value(z), tape.value(expectation));
    let decisions: Vec<KDecision<T>> = (0..ev.len())
        .map(|i| KDecision {
            k: kp.discretize(ev.data()[i]),
            z: zv.data()[i * kk..(i + 1) * kk].to_vec(),
            expectation: ev.data()[i],
            logits: lv.data()[i * kk..(i + 1) * kk].to_vec(),
        })
        .collect();
    let k = match mode {
        KMode::Relaxed => expectation,
        KMode::StraightThrough => {
            let snapped = Tensor::vector(decisions.iter().map(|d| T::of_usize(d.k)).collect());
            tape.push(&[expectation], snapped, StraightThrough)
        }
    };
    Ok(KSelection { k, z, expectation, decisions })
}

/// Single-query decision without a tape.
pub fn select_k<T: Real>(query_feat: &Tensor<T>, kp: &KSelectorParams<T>, rng: &mut RngStream) -> Result<KDecision<T>> {
    if query_feat.len() != kp.mlp.in_dim() {
        return Err(Error::dim(format!("query has {} channels, selector expects {}", query_feat.len(), kp.mlp.in_dim())));
    }
    let x = query_feat.clone().reshape(&[1, query_feat.len()])?;
    let logits = kp.mlp.eval(&x)?;
    let z = gumbel_softmax(&logits, kp.tau, rng)?;
    Ok(decision_from(kp, logits.into_data(), z.into_data()))
}

/// Builds a decision from given relaxed probabilities.
pub fn decision_from<T: Real>(kp: &KSelectorParams<T>, logits: Vec<T>, z: Vec<T>) -> KDecision<T> {
    let expectation = z.iter().zip(&kp.candidates).map(|(&p, &c)| p * T::of_usize(c)).sum();
    KDecision { k: kp.discretize(expectation), z, expectation, logits }
}

/// `query_index,k,expectation,p1,..,p|K|`.
pub fn decisions_csv<T: Real>(decisions: &[KDecision<T>]) -> String {
    let kk = decisions.first().map_or(4, |d| d.z.len());
    let mut s = String::from("query_index,k,expectation");
    for i in 1..=kk {
        write!(s, ",p{i}").unwrap();
    }
    s.push('\n');
    for (i, d) in decisions.iter().enumerate() {
        write!(s, "{i},{},{}", d.k, d.expectation).unwrap();
        for p in &d.z {
            write!(s, ",{p}").unwrap();
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Layer;

    fn zero_selector() -> KSelectorParams<f64> {
        let mlp = Mlp::from_layers(vec![Layer::zeros("s", 2, 4, Activation::Identity)]).unwrap();
        KSelectorParams::from_parts(mlp, vec![1, 2, 3, 4], 1.0).unwrap()
    }

    #[test]
    fn one_hot_on_three() {
        let kp = zero_selector();
        let d = decision_from(&kp, vec![0.0; 4], vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!((d.k, d.expectation), (3, 3.0));
    }

    #[test]
    fn uniform_rounds_half_up() {
        let kp = zero_selector();
        let d = decision_from(&kp, vec![0.0; 4], vec![0.25; 4]);
        assert_eq!((d.k, d.expectation), (3, 2.5));
    }

    #[test]
    fn noise_free_is_softmax() {
        let mut t = Tape::new();
        let l = t.leaf(Tensor::<f64>::from_rows(&[vec![0.3, -1.0, 2.0, 0.0]]));
        let z = gumbel_softmax_op(&mut t, l, &Tensor::zeros(&[1, 4]), 0.5).unwrap();
        let want = softmax_values(&Tensor::from_rows(&[vec![0.6, -2.0, 4.0, 0.0]]));
        for (a, b) in t.value(z).data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_temperature_is_uniform() {
        let mut rng = RngStream::new(1);
        let z = gumbel_softmax(&Tensor::<f64>::vector(vec![5.0, -3.0, 0.0, 1.0]), 1e6, &mut rng).unwrap();
        assert!(z.data().iter().all(|&p| (p - 0.25).abs() < 1e-3));
    }

    #[test]
    fn tiny_temperature_is_one_hot() {
        let mut t = Tape::new();
        let l = t.leaf(Tensor::from_rows(&[vec![0.0, 0.1, -0.5, 0.2]]));
        let z = gumbel_softmax_op(&mut t, l, &Tensor::zeros(&[1, 4]), 1e-3).unwrap();
        assert!(t.value(z).data()[3] > 0.999);
    }

    #[test]
    fn rejects_bad_candidates() {
        let mlp = Mlp::from_layers(vec![Layer::<f64>::zeros("s", 2, 3, Activation::Identity)]).unwrap();
        assert!(KSelectorParams::from_parts(mlp.clone(), vec![1, 3, 2], 1.0).is_err());
        assert!(KSelectorParams::from_parts(mlp.clone(), vec![0, 1, 2], 1.0).is_err());
        assert!(KSelectorParams::from_parts(mlp.clone(), vec![1, 2], 1.0).is_err());
        assert!(KSelectorParams::from_parts(mlp, vec![1, 2, 3], 0.0).is_err());
    }

    #[test]
    fn non_consecutive_candidates_snap() {
        let mlp = Mlp::from_layers(vec![Layer::<f64>::zeros("s", 2, 3, Activation::Identity)]).unwrap();
        let kp = KSelectorParams::from_parts(mlp, vec![1, 2, 8], 1.0).unwrap();
        assert_eq!(kp.discretize(4.9), 2);
        assert_eq!(kp.discretize(5.0), 8);
    }

    #[test]
    fn csv_header() {
        let kp = zero_selector();
        let csv = decisions_csv(&[decision_from(&kp, vec![0.0; 4], vec![0.25; 4])]);
        assert!(csv.starts_with("query_index,k,expectation,p1,p2,p3,p4\n0,3,2.5,0.25,"));
    }
}
