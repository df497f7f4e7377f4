//! Fully connected rectifier network in `f32` with manual backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HeadError;

/// One affine layer; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f32>,
    pub bias: Array1<f32>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Rectifier MLP; every layer but the last is followed by `max(0, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Parameter gradients, one `(weight, bias)` pair per layer.
pub type Gradients = Vec<(Array2<f32>, Array1<f32>)>;

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

impl Mlp {
    /// He-uniform weights, zero biases.
    pub fn new(input: usize, hidden: &[usize], output: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = layer_sizes(input, hidden, output);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt() as f32;
                let weight = Array2::from_shape_simple_fn((w[1], w[0]), || rng.random_range(-bound..bound));
                Layer {
                    weight,
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(input: usize, hidden: &[usize], output: usize) -> Self {
        let sizes = layer_sizes(input, hidden, output);
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, HeadError> {
        if layers.is_empty() {
            return Err(HeadError::InvalidConfig("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(HeadError::ShapeMismatch {
                    expected: l.out_dim(),
                    got: l.bias.len(),
                });
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(HeadError::ShapeMismatch {
                    expected: layers[i - 1].out_dim(),
                    got: l.in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &ArrayView2<f32>) -> Result<(), HeadError> {
        if x.ncols() != self.input_dim() {
            return Err(HeadError::ShapeMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    fn affine(layer: &Layer, x: &ArrayView2<f32>) -> Array2<f32> {
        let mut h = x.dot(&layer.weight.t());
        h += &layer.bias;
        h
    }

    /// Batched forward pass; `x` is `n x input`, the result `n x output`.
    pub fn forward(&self, x: ArrayView2<f32>) -> Result<Array2<f32>, HeadError> {
        self.check_input(&x)?;
        let mut h = Self::affine(&self.layers[0], &x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(|v| v.max(0.0));
            h = Self::affine(layer, &h.view());
        }
        Ok(h)
    }

    /// Forward pass that also returns each layer's input, for `backward`.
    pub fn forward_train(&self, x: ArrayView2<f32>) -> Result<(Array2<f32>, Vec<Array2<f32>>), HeadError> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = Self::affine(&self.layers[0], &x);
        inputs.push(x.to_owned());
        for layer in &self.layers[1..] {
            h.mapv_inplace(|v| v.max(0.0));
            let next = Self::affine(layer, &h.view());
            inputs.push(h);
            h = next;
        }
        Ok((h, inputs))
    }

    /// Gradients of a scalar objective given its gradient `grad_out`
    /// (`n x output`) with respect to the network output.
    pub fn backward(&self, inputs: &[Array2<f32>], grad_out: Array2<f32>) -> Gradients {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &inputs[i];
            let gw = delta.t().dot(x);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut dx = delta.dot(&layer.weight);
                // The layer input is a rectifier output: zero means inactive.
                ndarray::Zip::from(&mut dx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = dx;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        grads
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    t: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f32) -> Self {
        let zeros: Gradients = net
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        let update = |p: &mut f32, m: &mut f32, v: &mut f32, g: f32| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            ndarray::Zip::from(&mut layer.weight)
                .and(mw)
                .and(vw)
                .and(gw)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(gb)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(6, &[4, 4], 2);
        let x = Array2::from_shape_fn((3, 6), |(i, j)| (i * 7 + j) as f32 - 5.0);
        assert!(net.forward(x.view()).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_is_deterministic() {
        let a = Mlp::new(8, &[16, 16], 2, 3);
        let b = Mlp::new(8, &[16, 16], 2, 3);
        assert_eq!(a, b);
        let x = Array2::from_shape_fn((5, 8), |(i, j)| ((i + 2 * j) as f32).sin());
        assert_eq!(a.forward(x.view()).unwrap(), b.forward(x.view()).unwrap());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = Mlp::new(8, &[4], 2, 0);
        let x = Array2::<f32>::zeros((1, 7));
        assert!(matches!(net.forward(x.view()), Err(HeadError::ShapeMismatch { expected: 8, got: 7 })));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = Mlp::new(5, &[7, 6], 2, 9);
        let x = Array2::from_shape_fn((4, 5), |(i, j)| ((3 * i + j) as f32 * 0.37).cos());
        // Objective: sum of out[:,0] * 0.7 - out[:,1] * 1.3.
        let weights = array![0.7f32, -1.3];
        let objective = |n: &Mlp| -> f64 {
            let out = n.forward(x.view()).unwrap();
            out.rows().into_iter().map(|r| (r[0] * weights[0] + r[1] * weights[1]) as f64).sum()
        };
        let (out, inputs) = net.forward_train(x.view()).unwrap();
        let grad_out = Array2::from_shape_fn(out.raw_dim(), |(_, j)| weights[j]);
        let grads = net.backward(&inputs, grad_out);
        let h = 1e-2f32;
        for (li, (gw, gb)) in grads.iter().enumerate() {
            for (r, c) in [(0, 0), (1, 2), (gw.nrows() - 1, gw.ncols() - 1)] {
                let mut plus = net.clone();
                plus.layers[li].weight[[r, c]] += h;
                let mut minus = net.clone();
                minus.layers[li].weight[[r, c]] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h as f64);
                assert!((fd - gw[[r, c]] as f64).abs() < 1e-2, "layer {li} w[{r},{c}]: {fd} vs {}", gw[[r, c]]);
            }
            let mut plus = net.clone();
            plus.layers[li].bias[0] += h;
            let mut minus = net.clone();
            minus.layers[li].bias[0] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h as f64);
            assert!((fd - gb[0] as f64).abs() < 1e-2);
        }
    }

    #[test]
    fn adam_reduces_quadratic_loss() {
        let mut net = Mlp::new(3, &[8], 2, 1);
        let x = Array2::from_shape_fn((16, 3), |(i, j)| ((i * 3 + j) as f32 * 0.21).sin());
        let target = Array2::from_shape_fn((16, 2), |(i, j)| x[[i, j]] * 2.0 - x[[i, 2]]);
        let mse = |n: &Mlp| {
            let out = n.forward(x.view()).unwrap();
            (&out - &target).mapv(|v| v * v).sum()
        };
        let before = mse(&net);
        let mut opt = Adam::new(&net, 1e-2);
        for _ in 0..300 {
            let (out, inputs) = net.forward_train(x.view()).unwrap();
            let grads = net.backward(&inputs, (&out - &target) * 2.0);
            opt.step(&mut net, &grads);
        }
        assert!(mse(&net) < 0.1 * before);
    }
}
