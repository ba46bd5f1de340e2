//! Transition-tuple classifier: target tuples are labeled 1, simulated
//! tuples 0. Its logit is the identification reward.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::nn::{self, AdamState, MlpNet, NetCheckpoint};
use crate::rng::Rng;
use crate::trajectory::TransitionTuple;

/// Score clamp: `d` lies in `[EPS, 1 - EPS]`.
pub const EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    /// Total minibatch size, split evenly between real and simulated tuples.
    pub minibatch: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { hidden: vec![64, 64], lr: 1e-3, epochs: 5, minibatch: 256 }
    }
}

/// Per-dimension affine input normalizer, frozen after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Statistics of `rows`; each std is floored at 1e-6.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| contract("cannot fit a normalizer on no data"))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            if r.len() != dim {
                return Err(contract("rows differ in length"));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        Ok(Self { mean, std: var.into_iter().map(|v| v.sqrt().max(1e-6)).collect() })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: MlpNet,
    pub norm: Normalizer,
    pub opt: AdamState,
}

pub const DISCRIMINATOR_FORMAT: &str = "advsim-discriminator";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorCheckpoint {
    pub format: String,
    pub version: u32,
    pub norm: Normalizer,
    pub net: NetCheckpoint,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Binary cross-entropy of a logit against a 0/1 label.
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    label * softplus(-logit) + (1.0 - label) * softplus(logit)
}

impl Discriminator {
    /// Fresh discriminator over `input_dim`-long tuples, normalized with
    /// statistics of `target` tuples.
    pub fn new(target: &[TransitionTuple], cfg: &DiscriminatorConfig, rng: &mut Rng) -> Result<Self> {
        let rows: Vec<Vec<f64>> = target.iter().map(TransitionTuple::to_vec).collect();
        let norm = Normalizer::fit(&rows)?;
        let mut sizes = vec![norm.mean.len()];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let net = MlpNet::new(&sizes, 1.0, rng)?;
        let opt = AdamState::new(net.num_params(), cfg.lr);
        Ok(Self { net, norm, opt })
    }

    /// Zero-weight discriminator (logit 0 everywhere) with identity normalization.
    pub fn zeros(input_dim: usize, hidden: &[usize], lr: f64) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend(hidden);
        sizes.push(1);
        let net = MlpNet::zeros(&sizes)?;
        let opt = AdamState::new(net.num_params(), lr);
        Ok(Self { net, norm: Normalizer::identity(input_dim), opt })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(contract(format!("discriminator expects {} inputs, got {}", self.input_dim(), x.len())));
        }
        Ok(())
    }

    /// Raw logit of a flattened `(o, a, o')` vector.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.net.forward(&self.norm.apply(x))?[0])
    }

    /// Clamped sigmoid score of a flattened tuple.
    pub fn score_vec(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?).clamp(EPS, 1.0 - EPS))
    }

    pub fn score(&self, tuple: &TransitionTuple) -> Result<f64> {
        self.score_vec(&tuple.to_vec())
    }

    /// Mean BCE over the two sets (each weighted by its own count).
    pub fn loss(&self, real: &[Vec<f64>], sim: &[Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for x in real {
            total += bce_with_logit(self.logit(x)?, 1.0) / real.len() as f64;
        }
        for x in sim {
            total += bce_with_logit(self.logit(x)?, 0.0) / sim.len() as f64;
        }
        Ok(0.5 * total)
    }

    /// Gradient of [`Discriminator::loss`] with respect to the net parameters.
    pub fn loss_gradient(&self, real: &[Vec<f64>], sim: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.net.num_params()];
        let mut total = 0.0;
        for (set, label) in [(real, 1.0), (sim, 0.0)] {
            let w = 0.5 / set.len() as f64;
            for x in set {
                self.check(x)?;
                let cache = self.net.forward_cached(&self.norm.apply(x))?;
                let l = cache.output()[0];
                total += w * bce_with_logit(l, label);
                self.net.backward(&cache, &[w * (sigmoid(l) - label)], &mut grad)?;
            }
        }
        Ok((total, grad))
    }

    /// One Adam step on a balanced minibatch.
    pub fn step(&mut self, real: &[Vec<f64>], sim: &[Vec<f64>]) -> Result<f64> {
        if real.is_empty() || sim.is_empty() {
            return Err(contract("discriminator minibatch needs both real and simulated tuples"));
        }
        let (loss, grad) = self.loss_gradient(real, sim)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingDiverged("discriminator loss became non-finite".into()));
        }
        self.opt.step(self.net.params_mut(), &grad)?;
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> DiscriminatorCheckpoint {
        DiscriminatorCheckpoint {
            format: DISCRIMINATOR_FORMAT.into(),
            version: nn::NET_VERSION,
            norm: self.norm.clone(),
            net: self.net.to_checkpoint(),
        }
    }

    /// Restore from a checkpoint; the optimizer restarts with learning rate `lr`.
    pub fn from_checkpoint(ckpt: &DiscriminatorCheckpoint, lr: f64) -> Result<Self> {
        if ckpt.format != DISCRIMINATOR_FORMAT || ckpt.version != nn::NET_VERSION {
            return Err(Error::Schema(format!("unsupported discriminator checkpoint {} v{}", ckpt.format, ckpt.version)));
        }
        let net = MlpNet::from_checkpoint(&ckpt.net)?;
        if net.output_dim() != 1 || ckpt.norm.mean.len() != net.input_dim() || ckpt.norm.std.len() != net.input_dim() {
            return Err(Error::Schema("discriminator checkpoint dimensions disagree".into()));
        }
        let opt = AdamState::new(net.num_params(), lr);
        Ok(Self { net, norm: ckpt.norm.clone(), opt })
    }
}

/// Train for `epochs` passes. Each pass visits `min(|real|, |sim|)` tuples
/// of each class in shuffled order; every minibatch holds `minibatch / 2`
/// real and `minibatch / 2` simulated tuples. Returns the mean loss per epoch.
pub fn train_discriminator(
    d: &mut Discriminator,
    real: &[TransitionTuple],
    sim: &[TransitionTuple],
    epochs: usize,
    minibatch: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if real.is_empty() || sim.is_empty() {
        return Err(contract("discriminator training needs non-empty real and simulated batches"));
    }
    let real: Vec<Vec<f64>> = real.iter().map(TransitionTuple::to_vec).collect();
    let sim: Vec<Vec<f64>> = sim.iter().map(TransitionTuple::to_vec).collect();
    let n = real.len().min(sim.len());
    let half = (minibatch / 2).max(1);
    let mut ri: Vec<usize> = (0..real.len()).collect();
    let mut si: Vec<usize> = (0..sim.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        ri.shuffle(rng);
        si.shuffle(rng);
        let (mut sum, mut batches) = (0.0, 0);
        for start in (0..n).step_by(half) {
            let end = (start + half).min(n);
            let rb: Vec<Vec<f64>> = ri[start..end].iter().map(|&i| real[i].clone()).collect();
            let sb: Vec<Vec<f64>> = si[start..end].iter().map(|&i| sim[i].clone()).collect();
            sum += d.step(&rb, &sb)?;
            batches += 1;
        }
        history.push(sum / batches as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn tuple(v: &[f64]) -> TransitionTuple {
        TransitionTuple { obs: v[..2].to_vec(), action: v[2..3].to_vec(), next_obs: v[3..].to_vec() }
    }

    #[test]
    fn zero_network_scores_half() {
        let d = Discriminator::zeros(5, &[4], 1e-3).unwrap();
        assert_eq!(d.score(&tuple(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap(), 0.5);
    }

    #[test]
    fn large_logit_is_clamped() {
        let mut d = Discriminator::zeros(5, &[4], 1e-3).unwrap();
        d.net.output_bias_mut()[0] = 20.0;
        let s = d.score_vec(&[0.0; 5]).unwrap();
        assert_eq!(s, 1.0 - EPS);
        assert!(((s / (1.0 - s)).ln() - 13.8155).abs() < 1e-3);
        d.net.output_bias_mut()[0] = -20.0;
        assert_eq!(d.score_vec(&[0.0; 5]).unwrap(), EPS);
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let d = Discriminator::zeros(5, &[4], 1e-3).unwrap();
        assert!(matches!(d.score_vec(&[0.0; 4]), Err(Error::Contract(_))));
    }

    #[test]
    fn zero_logit_loss_is_ln2() {
        let d = Discriminator::zeros(5, &[4], 1e-3).unwrap();
        let real = vec![vec![1.0; 5], vec![-1.0; 5]];
        let sim = vec![vec![0.3; 5]];
        assert!((d.loss(&real, &sim).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_leaves_weights() {
        let mut rng = from_seed(3);
        let data: Vec<TransitionTuple> = (0..10).map(|i| tuple(&[i as f64, 1.0, 0.5, 2.0, -1.0])).collect();
        let mut d = Discriminator::new(&data, &DiscriminatorConfig { hidden: vec![8], lr: 0.0, ..Default::default() }, &mut rng)
            .unwrap();
        let before = d.net.params().to_vec();
        let other: Vec<TransitionTuple> = (0..10).map(|i| tuple(&[-(i as f64), 0.0, 0.1, 1.0, 1.0])).collect();
        train_discriminator(&mut d, &data, &other, 1, 256, &mut rng).unwrap();
        assert_eq!(d.net.params(), &before[..]);
    }

    #[test]
    fn empty_batches_are_rejected() {
        let mut d = Discriminator::zeros(5, &[4], 1e-3).unwrap();
        let data = vec![tuple(&[0.0; 5])];
        assert!(matches!(train_discriminator(&mut d, &data, &[], 1, 8, &mut from_seed(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn separable_data_is_learned() {
        let mut rng = from_seed(5);
        let draw = |shift: f64, rng: &mut Rng| -> TransitionTuple {
            let v: Vec<f64> = (0..5).map(|_| StandardNormal.sample(rng)).collect::<Vec<f64>>();
            let mut v = v;
            v[0] += shift;
            tuple(&v)
        };
        let real: Vec<_> = (0..512).map(|_| draw(4.0, &mut rng)).collect();
        let sim: Vec<_> = (0..512).map(|_| draw(-4.0, &mut rng)).collect();
        let cfg = DiscriminatorConfig { hidden: vec![16], ..Default::default() };
        let mut d = Discriminator::new(&real, &cfg, &mut rng).unwrap();
        train_discriminator(&mut d, &real, &sim, 100, 256, &mut rng).unwrap();
        let correct = real.iter().filter(|t| d.score(t).unwrap() > 0.5).count()
            + sim.iter().filter(|t| d.score(t).unwrap() < 0.5).count();
        assert!(correct as f64 / 1024.0 > 0.95, "{correct}");
    }

    #[test]
    fn identical_data_stays_at_chance() {
        let mut rng = from_seed(6);
        let data: Vec<TransitionTuple> = (0..512)
            .map(|_| tuple(&(0..5).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>()))
            .collect();
        let cfg = DiscriminatorConfig { hidden: vec![16], ..Default::default() };
        let mut d = Discriminator::new(&data, &cfg, &mut rng).unwrap();
        let hist = train_discriminator(&mut d, &data, &data, 5, 256, &mut rng).unwrap();
        assert!(hist.iter().all(|l| *l >= std::f64::consts::LN_2 - 0.01), "{hist:?}");
        let mean = data.iter().map(|t| d.score(t).unwrap()).sum::<f64>() / data.len() as f64;
        assert!((mean - 0.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mut rng = from_seed(9);
        let data: Vec<TransitionTuple> = (0..6).map(|i| tuple(&[i as f64 * 0.3, 1.0, -0.5, 0.2, i as f64])).collect();
        let d = Discriminator::new(&data, &DiscriminatorConfig { hidden: vec![6, 5], ..Default::default() }, &mut rng)
            .unwrap();
        let real: Vec<Vec<f64>> = data.iter().map(TransitionTuple::to_vec).collect();
        let sim: Vec<Vec<f64>> = real.iter().map(|r| r.iter().map(|v| v * 0.7 + 0.1).collect()).collect();
        let (_, grad) = d.loss_gradient(&real, &sim).unwrap();
        let h = 1e-5;
        for k in 0..d.net.num_params() {
            let mut p = d.clone();
            p.net.params_mut()[k] += h;
            let up = p.loss(&real, &sim).unwrap();
            p.net.params_mut()[k] -= 2.0 * h;
            let down = p.loss(&real, &sim).unwrap();
            let fd = (up - down) / (2.0 * h);
            let denom = fd.abs().max(grad[k].abs()).max(1e-8);
            assert!((fd - grad[k]).abs() / denom < 1e-4 || (fd - grad[k]).abs() < 1e-9, "param {k}: {fd} vs {}", grad[k]);
        }
    }
}
