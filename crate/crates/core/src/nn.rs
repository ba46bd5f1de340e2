//! Small feed-forward networks with exact backpropagation, diagonal Gaussian
//! heads and an Adam optimizer. Everything learned in the crate (policies,
//! value functions, the simulation-parameter function, the discriminator) is
//! built from these pieces.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::rng::Rng;

pub const LOG_SIGMA_MIN: f64 = -5.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Multi-layer perceptron with tanh hidden layers and a linear output layer.
///
/// Parameters live in one flat vector. Layer `l` (mapping `sizes[l]` inputs
/// to `sizes[l + 1]` outputs) stores its weights row-major (one row per
/// output unit) followed by its biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass, consumed by [`MlpNet::backward`].
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpNet {
    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&s| s == 0) {
            return Err(contract(format!("invalid layer sizes {layer_sizes:?}")));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; param_count(layer_sizes)],
        })
    }

    /// Fan-in uniform init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    /// biases zero. The last layer's weights are multiplied by `output_scale`.
    pub fn new(layer_sizes: &[usize], output_scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        let n_layers = net.num_layers();
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let scale = if l + 1 == n_layers { output_scale } else { 1.0 };
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = scale * rng.random_range(-bound..=bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offsets of (weights, biases) of layer `l` in the flat parameter vector.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut offset = 0;
        for k in 0..l {
            offset += self.layer_sizes[k] * self.layer_sizes[k + 1] + self.layer_sizes[k + 1];
        }
        (offset, offset + self.layer_sizes[l] * self.layer_sizes[l + 1])
    }

    /// Mutable view of the biases of the output layer.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let (_, b) = self.layer_offsets(self.num_layers() - 1);
        let out = self.output_dim();
        &mut self.params[b..b + out]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(contract(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let mut offset = 0;
        for l in 0..self.num_layers() {
            let next = self.layer(l, offset, &a);
            offset += self.layer_sizes[l] * self.layer_sizes[l + 1] + self.layer_sizes[l + 1];
            a = next;
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut activations = Vec::with_capacity(self.layer_sizes.len());
        activations.push(x.to_vec());
        let mut offset = 0;
        for l in 0..self.num_layers() {
            let next = self.layer(l, offset, activations.last().expect("non-empty"));
            offset += self.layer_sizes[l] * self.layer_sizes[l + 1] + self.layer_sizes[l + 1];
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    fn layer(&self, l: usize, offset: usize, input: &[f64]) -> Vec<f64> {
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        let hidden = l + 1 < self.num_layers();
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                if hidden {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Backpropagate `loss_grad` (d loss / d output) through the pass recorded
    /// in `cache`, accumulating d loss / d params into `grad`. Returns
    /// d loss / d input.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if cache.is_empty() {
            return Err(contract("backward called without a recorded forward pass"));
        }
        if cache.activations.len() != self.layer_sizes.len()
            || cache.activations.iter().zip(&self.layer_sizes).any(|(a, &s)| a.len() != s)
        {
            return Err(contract("forward cache does not belong to this network"));
        }
        if loss_grad.len() != self.output_dim() {
            return Err(contract(format!(
                "loss gradient has length {}, network output is {}",
                loss_grad.len(),
                self.output_dim()
            )));
        }
        if grad.len() != self.params.len() {
            return Err(contract("gradient buffer has the wrong length"));
        }
        let n_layers = self.num_layers();
        // delta = d loss / d pre-activation of the current layer
        let mut delta = loss_grad.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (w_off, b_off) = self.layer_offsets(l);
            let input = &cache.activations[l];
            for o in 0..n_out {
                let d = delta[o];
                grad[b_off + o] += d;
                if d != 0.0 {
                    let g_row = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                    for (g, x) in g_row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            let w = &self.params[w_off..w_off + n_in * n_out];
            let mut d_input = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d != 0.0 {
                    for (di, wi) in d_input.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *di += d * wi;
                    }
                }
            }
            if l > 0 {
                // input to layer l is tanh output of layer l-1
                for (di, a) in d_input.iter_mut().zip(input) {
                    *di *= 1.0 - a * a;
                }
            }
            delta = d_input;
        }
        Ok(delta)
    }

    /// Convenience wrapper returning a fresh gradient vector.
    pub fn gradient(&self, cache: &ForwardCache, loss_grad: &[f64]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward(cache, loss_grad, &mut grad)?;
        Ok(grad)
    }

    pub fn to_checkpoint(&self) -> NetCheckpoint {
        let layers = (0..self.num_layers())
            .map(|l| {
                let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
                let (w, b) = self.layer_offsets(l);
                LayerCheckpoint {
                    weights: (0..n_out)
                        .map(|o| self.params[w + o * n_in..w + (o + 1) * n_in].to_vec())
                        .collect(),
                    biases: self.params[b..b + n_out].to_vec(),
                }
            })
            .collect();
        NetCheckpoint {
            format: NET_FORMAT.to_string(),
            version: NET_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            hidden_activation: "tanh".to_string(),
            output_activation: "identity".to_string(),
            layers,
        }
    }

    pub fn from_checkpoint(ckpt: &NetCheckpoint) -> Result<Self> {
        if ckpt.format != NET_FORMAT {
            return Err(Error::Schema(format!("unexpected network format {:?}", ckpt.format)));
        }
        if ckpt.version != NET_VERSION {
            return Err(Error::Schema(format!("unsupported network schema version {}", ckpt.version)));
        }
        if ckpt.hidden_activation != "tanh" || ckpt.output_activation != "identity" {
            return Err(Error::Schema("only tanh hidden / identity output networks are supported".into()));
        }
        let mut net = Self::zeros(&ckpt.layer_sizes)?;
        if ckpt.layers.len() != net.num_layers() {
            return Err(Error::Schema("layer count does not match layer_sizes".into()));
        }
        for (l, layer) in ckpt.layers.iter().enumerate() {
            let (n_in, n_out) = (net.layer_sizes[l], net.layer_sizes[l + 1]);
            if layer.weights.len() != n_out
                || layer.weights.iter().any(|r| r.len() != n_in)
                || layer.biases.len() != n_out
            {
                return Err(Error::Schema(format!("layer {l} has the wrong shape")));
            }
            let (w, b) = net.layer_offsets(l);
            for (o, row) in layer.weights.iter().enumerate() {
                net.params[w + o * n_in..w + (o + 1) * n_in].copy_from_slice(row);
            }
            net.params[b..b + n_out].copy_from_slice(&layer.biases);
        }
        Ok(net)
    }
}

pub const NET_FORMAT: &str = "advsim-mlp";
pub const NET_VERSION: u32 = 1;

/// JSON form of an [`MlpNet`]: `weights[o][i]` connects input `i` to output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: String,
    pub output_activation: String,
    pub layers: Vec<LayerCheckpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// Diagonal Gaussian with log standard deviations clamped to
/// `[LOG_SIGMA_MIN, LOG_SIGMA_MAX]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
    // false where the raw log_sigma was clamped (zero gradient there)
    log_sigma_free: Vec<bool>,
}

impl GaussianHead {
    pub fn new(mu: Vec<f64>, raw_log_sigma: Vec<f64>) -> Self {
        assert_eq!(mu.len(), raw_log_sigma.len(), "mu and log_sigma lengths differ");
        let log_sigma_free = raw_log_sigma
            .iter()
            .map(|&s| (LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&s))
            .collect();
        let log_sigma = raw_log_sigma
            .into_iter()
            .map(|s| if s.is_nan() { LOG_SIGMA_MIN } else { s.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX) })
            .collect();
        Self { mu, log_sigma, log_sigma_free }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|s| s.exp()).collect()
    }

    /// Reparameterized draw `mu + sigma * z`, z ~ N(0, I), with its log-density.
    pub fn sample(&self, rng: &mut Rng) -> (Vec<f64>, f64) {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let x = self.sample_from_noise(&z);
        let lp = self.log_prob(&x);
        (x, lp)
    }

    pub fn sample_from_noise(&self, z: &[f64]) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.log_sigma)
            .zip(z)
            .map(|((m, s), z)| m + s.exp() * z)
            .collect()
    }

    pub fn log_prob(&self, x: &[f64]) -> f64 {
        gaussian_log_prob(&self.mu, &self.log_sigma, x)
    }

    pub fn entropy(&self) -> f64 {
        self.log_sigma.iter().map(|s| s + 0.5 + HALF_LN_2PI).sum()
    }

    /// Gradient of `log_prob(x)` w.r.t. (mu, raw log_sigma).
    pub fn grad_log_prob(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut d_mu = Vec::with_capacity(self.dim());
        let mut d_ls = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let inv_var = (-2.0 * self.log_sigma[i]).exp();
            let diff = x[i] - self.mu[i];
            d_mu.push(diff * inv_var);
            d_ls.push(if self.log_sigma_free[i] { diff * diff * inv_var - 1.0 } else { 0.0 });
        }
        (d_mu, d_ls)
    }

    /// Gradient of the entropy w.r.t. raw log_sigma.
    pub fn grad_entropy(&self) -> Vec<f64> {
        self.log_sigma_free.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect()
    }
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(mu: &[f64], log_sigma: &[f64], x: &[f64]) -> f64 {
    mu.iter()
        .zip(log_sigma)
        .zip(x)
        .map(|((m, ls), x)| {
            let z = (x - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

/// Log-density of a standard normal vector.
pub fn standard_normal_log_prob(z: &[f64]) -> f64 {
    z.iter().map(|z| -0.5 * z * z - HALF_LN_2PI).sum()
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(contract(format!(
                "adam state has {} slots, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Rescale `grad` in place so its L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;

    fn seeded_242() -> MlpNet {
        MlpNet::new(&[2, 4, 2], 1.0, &mut from_seed(42)).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpNet::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut net = MlpNet::zeros(&[2, 2]).unwrap();
        net.params_mut()[..4].copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn forward_matches_hand_rolled_matmul() {
        let net = seeded_242();
        let ckpt = net.to_checkpoint();
        let x = [0.5, -0.5];
        // independent evaluation from the serialized weight matrices
        let l0 = &ckpt.layers[0];
        let h: Vec<f64> = (0..4)
            .map(|o| (l0.biases[o] + l0.weights[o][0] * x[0] + l0.weights[o][1] * x[1]).tanh())
            .collect();
        let l1 = &ckpt.layers[1];
        let expected: Vec<f64> = (0..2)
            .map(|o| l1.biases[o] + (0..4).map(|i| l1.weights[o][i] * h[i]).sum::<f64>())
            .collect();
        let got = net.forward(&x).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let net = seeded_242();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_without_forward_is_contract_error() {
        let net = seeded_242();
        let mut g = vec![0.0; net.num_params()];
        let err = net.backward(&ForwardCache::default(), &[1.0, 0.0], &mut g);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn linear_bias_gradient_is_one() {
        let net = MlpNet::new(&[3, 2], 1.0, &mut from_seed(1)).unwrap();
        let cache = net.forward_cached(&[0.3, 0.1, -0.2]).unwrap();
        let g = net.gradient(&cache, &[1.0, 0.0]).unwrap();
        let (_, b) = net.layer_offsets(0);
        assert_eq!(g[b], 1.0);
        assert_eq!(g[b + 1], 0.0);
    }

    #[test]
    fn constant_loss_gives_zero_gradient() {
        let net = seeded_242();
        let cache = net.forward_cached(&[0.1, 0.2]).unwrap();
        let g = net.gradient(&cache, &[0.0, 0.0]).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = MlpNet::new(&[3, 8, 8, 2], 0.5, &mut from_seed(3)).unwrap();
        let json = serde_json::to_string(&net.to_checkpoint()).unwrap();
        let back = MlpNet::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn checkpoint_rejects_unknown_version() {
        let mut ckpt = seeded_242().to_checkpoint();
        ckpt.version = 99;
        assert!(matches!(MlpNet::from_checkpoint(&ckpt), Err(Error::Schema(_))));
    }

    #[test]
    fn standard_normal_at_mean() {
        let head = GaussianHead::new(vec![0.0], vec![0.0]);
        assert!((head.log_prob(&[0.0]) + 0.918_938_533_204_672_8).abs() < 1e-12);
    }

    #[test]
    fn closed_form_two_dim_density() {
        let ls = 0.5f64.ln();
        let head = GaussianHead::new(vec![1.0, -1.0], vec![ls, ls]);
        let expected = -(2.0 * std::f64::consts::PI).ln() - 2.0 * 0.5f64.ln();
        assert!((head.log_prob(&[1.0, -1.0]) - expected).abs() < 1e-12);
        assert!((expected + 0.451_582_705_289_454_9).abs() < 1e-12);
    }

    #[test]
    fn tiny_sigma_sample_equals_mean() {
        let head = GaussianHead::new(vec![0.7, -0.2], vec![-5.0, -5.0]);
        assert_eq!(head.sample_from_noise(&[0.0, 0.0]), vec![0.7, -0.2]);
    }

    #[test]
    fn log_sigma_is_clamped() {
        let head = GaussianHead::new(vec![0.0, 0.0], vec![-30.0, 9.0]);
        assert_eq!(head.log_sigma, vec![LOG_SIGMA_MIN, LOG_SIGMA_MAX]);
        let (_, d_ls) = head.grad_log_prob(&[1.0, 1.0]);
        assert_eq!(d_ls, vec![0.0, 0.0]);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = vec![0.3, -1.2, 4.0];
        let before = p.clone();
        let mut adam = AdamState::new(3, 1e-2);
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn adam_zero_lr_is_noop() {
        let mut p = vec![0.3, -1.2];
        let before = p.clone();
        let mut adam = AdamState::new(2, 0.0);
        adam.step(&mut p, &[1.0, -3.0]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn clip_grad_norm_caps_length() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }
}
