//! Fixed-topology feed-forward networks with hand-written backprop.
//!
//! Batches are row-major `[batch][features]`. A [`Dense`] layer with
//! `groups > 1` applies the same weights to each of `groups` consecutive
//! chunks of its input row, which is how the weight-shared per-sub-band
//! stage is expressed.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
        }
    }

    /// Multiplies `grad` by the derivative, expressed via the output `y`.
    fn backprop(self, y: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Identity => {}
            Activation::Relu => grad.iter_mut().zip(y).for_each(|(g, &y)| {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => grad.iter_mut().zip(y).for_each(|(g, &y)| *g *= 1.0 - y * y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Output features per group.
    pub rows: usize,
    /// Input features per group.
    pub cols: usize,
    /// `rows x cols`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub groups: usize,
    pub activation: Activation,
}

impl Dense {
    /// Uniform in `+-sqrt(3 / fan_in)` (unit-variance-preserving), zero bias.
    pub fn init(rows: usize, cols: usize, groups: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let bound = (3.0 / cols as f64).sqrt();
        let weight = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        Self { rows, cols, weight, bias: vec![0.0; rows], groups, activation }
    }

    pub fn input_len(&self) -> usize {
        self.cols * self.groups
    }

    pub fn output_len(&self) -> usize {
        self.rows * self.groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Dense>,
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    /// `outputs[0]` is the input, `outputs[i + 1]` the output of layer `i`.
    pub outputs: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("cache holds the input at least")
    }
}

/// Gradients laid out like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weight: net.layers.iter().map(|l| vec![0.0; l.weight.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).flatten().all(|x| x.is_finite())
    }
}

/// `C = alpha * A * B + beta * C` on strided views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k.max(1) - 1) * csa || k == 0);
    assert!(b.len() > (k.max(1) - 1) * rsb + (n - 1) * csb || k == 0);
    assert!(c.len() >= (m - 1) * rsc + n);
    // SAFETY: the asserts above keep every strided access in bounds and the
    // output slice is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

impl Network {
    pub fn input_len(&self) -> usize {
        self.layers[0].input_len()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().expect("non-empty network").output_len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    pub fn forward(&self, input: &[f64], batch: usize) -> ForwardCache {
        assert_eq!(input.len(), batch * self.input_len(), "forward input length");
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(input.to_vec());
        for layer in &self.layers {
            let x = outputs.last().expect("input pushed");
            let rows = batch * layer.groups;
            let mut y = vec![0.0; rows * layer.rows];
            for chunk in y.chunks_exact_mut(layer.rows) {
                chunk.copy_from_slice(&layer.bias);
            }
            // Y[rows x out] += X[rows x in] * W^T.
            gemm(rows, layer.cols, layer.rows, x, (layer.cols, 1), &layer.weight, (1, layer.cols), 1.0, &mut y, layer.rows);
            layer.activation.apply(&mut y);
            outputs.push(y);
        }
        ForwardCache { batch, outputs }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the network output) and
    /// overwrites `grads`. Returns the gradient w.r.t. the input when
    /// `want_input_grad` is set.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_out: &[f64],
        grads: &mut Gradients,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let batch = cache.batch;
        assert_eq!(d_out.len(), batch * self.output_len(), "backward gradient length");
        let mut delta = d_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &cache.outputs[i + 1];
            let x = &cache.outputs[i];
            let rows = batch * layer.groups;
            layer.activation.backprop(y, &mut delta);

            // dW[out x in] = delta^T[out x rows] * X[rows x in].
            gemm(layer.rows, rows, layer.cols, &delta, (1, layer.rows), x, (layer.cols, 1), 0.0, &mut grads.weight[i], layer.cols);
            let db = &mut grads.bias[i];
            db.iter_mut().for_each(|v| *v = 0.0);
            for chunk in delta.chunks_exact(layer.rows) {
                db.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
            }

            if i == 0 && !want_input_grad {
                return None;
            }
            // dX[rows x in] = delta[rows x out] * W[out x in].
            let mut dx = vec![0.0; rows * layer.cols];
            gemm(rows, layer.rows, layer.cols, &delta, (layer.rows, 1), &layer.weight, (layer.cols, 1), 0.0, &mut dx, layer.cols);
            delta = dx;
        }
        Some(delta)
    }

    /// Mutable views of every parameter tensor, weights then bias per layer.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_forward(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &net.layers {
            let mut next = Vec::with_capacity(l.output_len());
            for g in 0..l.groups {
                for o in 0..l.rows {
                    let mut s = l.bias[o];
                    for i in 0..l.cols {
                        s += l.weight[o * l.cols + i] * cur[g * l.cols + i];
                    }
                    next.push(match l.activation {
                        Activation::Identity => s,
                        Activation::Relu => s.max(0.0),
                        Activation::Tanh => s.tanh(),
                    });
                }
            }
            cur = next;
        }
        cur
    }

    fn small_net(seed: u64) -> Network {
        let mut rng = seeded_rng(seed, 0);
        Network {
            layers: vec![
                Dense::init(3, 4, 2, Activation::Relu, &mut rng),
                Dense::init(5, 6, 1, Activation::Tanh, &mut rng),
                Dense::init(2, 5, 1, Activation::Identity, &mut rng),
            ],
        }
    }

    #[test]
    fn batched_forward_matches_naive() {
        let mut net = small_net(1);
        net.layers[0].bias = vec![0.1, -0.2, 0.3];
        let x: Vec<f64> = (0..24).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect();
        let cache = net.forward(&x, 3);
        for b in 0..3 {
            let want = naive_forward(&net, &x[b * 8..(b + 1) * 8]);
            let got = &cache.output()[b * 2..(b + 1) * 2];
            for (w, g) in want.iter().zip(got) {
                assert!((w - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut net = small_net(2);
        let x: Vec<f64> = (0..16).map(|i| ((i * 5) % 9) as f64 / 4.0 - 1.0).collect();
        // Loss = sum of outputs weighted by fixed coefficients.
        let coef = [0.3, -1.1, 0.7, 0.2];
        let loss = |n: &Network| -> f64 {
            n.forward(&x, 2).output().iter().zip(&coef).map(|(a, b)| a * b).sum()
        };
        let cache = net.forward(&x, 2);
        let mut grads = Gradients::zeros_like(&net);
        let dx = net.backward(&cache, &coef, &mut grads, true).unwrap();
        assert_eq!(dx.len(), x.len());
        let eps = 1e-6;
        for li in 0..net.layers.len() {
            for wi in 0..net.layers[li].weight.len() {
                let orig = net.layers[li].weight[wi];
                net.layers[li].weight[wi] = orig + eps;
                let up = loss(&net);
                net.layers[li].weight[wi] = orig - eps;
                let down = loss(&net);
                net.layers[li].weight[wi] = orig;
                let fd = (up - down) / (2.0 * eps);
                assert!((fd - grads.weight[li][wi]).abs() < 1e-7, "layer {li} w{wi}: {fd} vs {}", grads.weight[li][wi]);
            }
        }
    }

    #[test]
    fn init_bounded_and_deterministic() {
        let a = small_net(5);
        assert_eq!(a, small_net(5));
        assert_ne!(a, small_net(6));
        for l in &a.layers {
            let bound = (3.0 / l.cols as f64).sqrt();
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
        }
    }
}
