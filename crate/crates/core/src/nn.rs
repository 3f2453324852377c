//! Small dense networks with hand-written backprop and Adam.
//!
//! Everything here is deterministic given the RNG stream: initialization
//! draws weights in a fixed order, and all math is straight-line ndarray
//! code with no threading.

use crate::real::Real;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One dense layer, `y = x W^T + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

/// Multi-layer perceptron with SiLU hidden activations and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    layers: Vec<Linear<T>>,
}

/// Per-layer gradient buffers shaped like an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrads<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

/// Forward-pass intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    /// Input to each layer.
    inputs: Vec<Array2<T>>,
    /// Pre-activation of each hidden layer.
    preacts: Vec<Array2<T>>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

fn silu_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

impl<T: Real> Mlp<T> {
    /// Xavier-uniform initialization. Draw order (layer by layer, weights
    /// row-major, biases zero) is part of the determinism contract.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = T::of((6.0 / (fan_in + fan_out) as f64).sqrt());
                let weight =
                    Array2::from_shape_fn((fan_out, fan_in), |_| T::uniform(rng, -limit, limit));
                Linear {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Mlp { layers }
    }

    /// All-zero network of the given shape (used by tests that need a
    /// predictable function).
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .map(|w| Linear {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Mlp { layers }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weight.ncols()];
        dims.extend(self.layers.iter().map(|l| l.weight.nrows()));
        dims
    }

    pub fn layers(&self) -> &[Linear<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            h = if i < last { z.mapv(silu) } else { z };
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<T>) -> (Array2<T>, MlpCache<T>) {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len() - 1),
        };
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            cache.inputs.push(h.clone());
            let mut z = h.dot(&layer.weight.t());
            z += &layer.bias;
            if i < last {
                cache.preacts.push(z.clone());
                h = z.mapv(silu);
            } else {
                h = z;
            }
        }
        (h, cache)
    }

    /// Backpropagate `grad_out` (dL/d output), accumulating parameter
    /// gradients into `grads` and returning dL/d input.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        grad_out: &Array2<T>,
        grads: &mut MlpGrads<T>,
    ) -> Array2<T> {
        let last = self.layers.len() - 1;
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                g = &g * &cache.preacts[i].mapv(silu_grad);
            }
            let x = &cache.inputs[i];
            grads.layers[i].0 += &g.t().dot(x);
            grads.layers[i].1 += &g.sum_axis(Axis(0));
            g = g.dot(&self.layers[i].weight);
        }
        g
    }

    /// `self = rho * other + (1 - rho) * self`, the target-network tracker.
    pub fn soft_update_from(&mut self, other: &Mlp<T>, rho: T) {
        assert_eq!(self.dims(), other.dims(), "shape mismatch in soft update");
        let keep = T::one() - rho;
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            mine.weight.zip_mut_with(&theirs.weight, |a, &b| *a = keep * *a + rho * b);
            mine.bias.zip_mut_with(&theirs.bias, |a, &b| *a = keep * *a + rho * b);
        }
    }

    /// Flatten parameters (layer order, weights row-major, then bias).
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn from_flat(dims: &[usize], data: &[T]) -> Option<Self> {
        let mut net = Mlp::zeros(dims);
        let mut it = data.iter().copied();
        for l in &mut net.layers {
            for w in l.weight.iter_mut() {
                *w = it.next()?;
            }
            for b in l.bias.iter_mut() {
                *b = it.next()?;
            }
        }
        if it.next().is_some() {
            return None;
        }
        Some(net)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// True when every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite()))
    }
}

impl<T: Real> MlpGrads<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.dim())))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: T) {
        for (w, b) in &mut self.layers {
            w.mapv_inplace(|v| v * factor);
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub fn add(&mut self, other: &MlpGrads<T>) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite()))
    }
}

/// Adam with bias correction, one instance per network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: u64,
    m: Vec<(Array2<T>, Array1<T>)>,
    v: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(net: &Mlp<T>, lr: T) -> Self {
        let zeros: Vec<(Array2<T>, Array1<T>)> = net
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.dim())))
            .collect();
        Adam {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grads: &MlpGrads<T>) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for i in 0..net.layers.len() {
            let (gw, gb) = &grads.layers[i];
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            mw.zip_mut_with(gw, |m, &g| *m = self.beta1 * *m + (T::one() - self.beta1) * g);
            mb.zip_mut_with(gb, |m, &g| *m = self.beta1 * *m + (T::one() - self.beta1) * g);
            vw.zip_mut_with(gw, |v, &g| *v = self.beta2 * *v + (T::one() - self.beta2) * g * g);
            vb.zip_mut_with(gb, |v, &g| *v = self.beta2 * *v + (T::one() - self.beta2) * g * g);
            let layer = &mut net.layers[i];
            for ((p, m), v) in layer.weight.iter_mut().zip(mw.iter()).zip(vw.iter()) {
                *p = *p - self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            }
            for ((p, m), v) in layer.bias.iter_mut().zip(mb.iter()).zip(vb.iter()) {
                *p = *p - self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_hand_computation() {
        // 2 -> 2 -> 1 with known weights
        let mut net = Mlp::<f64>::zeros(&[2, 2, 1]);
        net.layers[0].weight = arr2(&[[1.0, 0.0], [0.0, -1.0]]);
        net.layers[0].bias = ndarray::arr1(&[0.0, 0.5]);
        net.layers[1].weight = arr2(&[[1.0, 2.0]]);
        net.layers[1].bias = ndarray::arr1(&[0.25]);
        let x = arr2(&[[0.3, 0.7]]);
        let y = net.forward(&x);
        let z0 = 0.3;
        let z1 = -0.7 + 0.5;
        let h0 = z0 / (1.0 + (-z0 as f64).exp());
        let h1 = z1 / (1.0 + (-z1 as f64).exp());
        let expect = h0 + 2.0 * h1 + 0.25;
        assert!((y[(0, 0)] - expect).abs() < 1e-14);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut net = Mlp::<f64>::init(&[3, 5, 2], &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| f64::uniform(&mut rng, -1.0, 1.0));
        let target = Array2::from_shape_fn((4, 2), |_| f64::uniform(&mut rng, -1.0, 1.0));

        let loss = |net: &Mlp<f64>| -> f64 {
            let y = net.forward(&x);
            (&y - &target).mapv(|d| d * d).sum() / 4.0
        };

        let (y, cache) = net.forward_cached(&x);
        let grad_out = (&y - &target).mapv(|d| 2.0 * d / 4.0);
        let mut grads = MlpGrads::zeros_like(&net);
        net.backward(&cache, &grad_out, &mut grads);

        let h = 1e-6;
        for li in 0..net.layers().len() {
            for idx in 0..net.layers[li].weight.len() {
                let (r, c) = (idx / net.layers[li].weight.ncols(), idx % net.layers[li].weight.ncols());
                let orig = net.layers[li].weight[(r, c)];
                net.layers[li].weight[(r, c)] = orig + h;
                let up = loss(&net);
                net.layers[li].weight[(r, c)] = orig - h;
                let down = loss(&net);
                net.layers[li].weight[(r, c)] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.layers[li].0[(r, c)];
                assert!(
                    (fd - an).abs() <= 1e-6 + 1e-4 * fd.abs().max(an.abs()),
                    "layer {li} w({r},{c}): fd {fd} vs an {an}"
                );
            }
            for bi in 0..net.layers[li].bias.len() {
                let orig = net.layers[li].bias[bi];
                net.layers[li].bias[bi] = orig + h;
                let up = loss(&net);
                net.layers[li].bias[bi] = orig - h;
                let down = loss(&net);
                net.layers[li].bias[bi] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.layers[li].1[bi];
                assert!(
                    (fd - an).abs() <= 1e-6 + 1e-4 * fd.abs().max(an.abs()),
                    "layer {li} b({bi}): fd {fd} vs an {an}"
                );
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net = Mlp::<f64>::init(&[3, 4, 1], &mut rng);
        let mut x = Array2::from_shape_fn((1, 3), |_| f64::uniform(&mut rng, -1.0, 1.0));
        let (y, cache) = net.forward_cached(&x);
        let grad_out = Array2::from_elem(y.dim(), 1.0);
        let mut grads = MlpGrads::zeros_like(&net);
        let gx = net.backward(&cache, &grad_out, &mut grads);
        let h = 1e-6;
        for j in 0..3 {
            let orig = x[(0, j)];
            x[(0, j)] = orig + h;
            let up = net.forward(&x)[(0, 0)];
            x[(0, j)] = orig - h;
            let down = net.forward(&x)[(0, 0)];
            x[(0, j)] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - gx[(0, j)]).abs() < 1e-7, "input {j}");
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut net = Mlp::<f64>::zeros(&[1, 1]);
        net.layers[0].weight[(0, 0)] = 3.0;
        let mut opt = Adam::new(&net, 0.05);
        let x = arr2(&[[1.0]]);
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let (y, cache) = net.forward_cached(&x);
            let loss = y[(0, 0)] * y[(0, 0)];
            let mut grads = MlpGrads::zeros_like(&net);
            net.backward(&cache, &arr2(&[[2.0 * y[(0, 0)]]]), &mut grads);
            opt.step(&mut net, &grads);
            last = loss;
        }
        assert!(last < 1e-3, "loss {last}");
    }

    #[test]
    fn soft_update_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let online = Mlp::<f64>::init(&[2, 3, 1], &mut rng);
        let mut target = Mlp::<f64>::zeros(&[2, 3, 1]);
        target.soft_update_from(&online, 0.0);
        assert!(target.flatten().iter().all(|&v| v == 0.0));
        target.soft_update_from(&online, 1.0);
        assert_eq!(target.flatten(), online.flatten());
        let mut target = Mlp::<f64>::zeros(&[2, 3, 1]);
        target.soft_update_from(&online, 0.005);
        for (t, o) in target.flatten().iter().zip(online.flatten()) {
            assert!((t - 0.005 * o).abs() < 1e-15);
        }
    }

    #[test]
    fn flatten_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = Mlp::<f64>::init(&[4, 7, 3], &mut rng);
        let flat = net.flatten();
        assert_eq!(flat.len(), net.param_count());
        let back = Mlp::from_flat(&net.dims(), &flat).unwrap();
        assert_eq!(net, back);
        assert!(Mlp::<f64>::from_flat(&[4, 7, 3], &flat[..10]).is_none());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Mlp::<f64>::init(&[5, 8, 2], &mut ChaCha8Rng::seed_from_u64(1)).flatten();
        let b = Mlp::<f64>::init(&[5, 8, 2], &mut ChaCha8Rng::seed_from_u64(1)).flatten();
        assert_eq!(a, b);
    }
}
