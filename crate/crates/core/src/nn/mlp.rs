use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Elu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Elu => {
                if x > T::zero() {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative at pre-activation `x`.
    #[inline]
    pub fn derivative<T: Real>(self, x: T) -> T {
        match (self, x > T::zero()) {
            (_, true) => T::one(),
            (Activation::Elu, false) => x.exp(),
            (Activation::Relu, false) => T::zero(),
        }
    }
}

/// Layer widths and activation of a fully connected network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub activation: Activation,
    /// Scale of the orthogonal initialization of the output layer.
    pub output_gain: f64,
}

pub const DEFAULT_HIDDEN: [usize; 3] = [512, 256, 128];

impl MlpSpec {
    pub fn new(input: usize, output: usize) -> Self {
        Self {
            input,
            hidden: DEFAULT_HIDDEN.to_vec(),
            output,
            activation: Activation::Elu,
            output_gain: 1.0,
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        self.hidden = hidden.to_vec();
        self
    }

    pub fn with_output_gain(mut self, gain: f64) -> Self {
        self.output_gain = gain;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::Config("an MLP needs at least one hidden layer".into()));
        }
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("MLP widths must be positive".into()));
        }
        if !(self.output_gain.is_finite() && self.output_gain >= 0.0) {
            return Err(Error::Config("MLP output gain must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every affine layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input);
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Network parameters in one flat buffer: for each layer the row-major
/// `fan_out × fan_in` weight matrix followed by the bias.
#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Mlp<T: Real> {
    spec: MlpSpec,
    params: Vec<T>,
    /// Bumped on every mutable access; caches remember it.
    #[serde(skip, default = "fresh_id")]
    version: u64,
}

impl<T: Real> Clone for Mlp<T> {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            params: self.params.clone(),
            version: fresh_id(),
        }
    }
}

impl<T: Real> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params == other.params
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache<T: Real> {
    batch: usize,
    version: u64,
    /// Input of every layer, the network input first.
    inputs: Vec<Vec<T>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T: Real> {
    /// Same layout as [`Mlp::params`].
    pub params: Vec<T>,
    /// `batch × input` gradient with respect to the network input.
    pub input: Vec<T>,
}

/// `C (m×n) = A (m×k) · op(B)`; `b_t` selects `B` stored as `n×k`.
#[allow(clippy::too_many_arguments)]
fn matmul<T: Real>(m: usize, k: usize, n: usize, a: &[T], a_t: bool, b: &[T], b_t: bool, c: &mut [T], beta: T) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the assertion above bounds every access of the strided views.
    unsafe {
        T::gemm(m, k, n, T::one(), a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

/// Orthonormal rows (or columns, whichever are fewer) scaled by `gain`,
/// from Gram-Schmidt on a Gaussian matrix.
pub fn orthogonal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, gain: f64) -> Vec<f64> {
    let (n, len) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut w = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            w[r * cols + c] = gain * if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    w
}

impl<T: Real> Mlp<T> {
    /// Orthogonal weights with gain √2 on hidden layers and
    /// `spec.output_gain` on the output layer; zero biases.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.layer_shapes();
        let mut params = Vec::with_capacity(spec.parameter_count());
        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let gain = if l + 1 == shapes.len() { spec.output_gain } else { 2f64.sqrt() };
            params.extend(orthogonal(rng, fan_out, fan_in, gain).into_iter().map(T::of));
            params.extend(std::iter::repeat_n(T::zero(), fan_out));
        }
        Ok(Self {
            spec,
            params,
            version: fresh_id(),
        })
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let params = vec![T::zero(); spec.parameter_count()];
        Ok(Self {
            spec,
            params,
            version: fresh_id(),
        })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<T>) -> Result<Self> {
        spec.validate()?;
        check_len("MLP parameters", spec.parameter_count(), params.len())?;
        Ok(Self {
            spec,
            params,
            version: fresh_id(),
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Mutable flat view; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [T] {
        self.version = fresh_id();
        &mut self.params
    }

    /// `(weight offset, bias offset)` of layer `l` in the flat buffer.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let shapes = self.spec.layer_shapes();
        let start: usize = shapes[..l].iter().map(|(i, o)| i * o + o).sum();
        let (i, o) = shapes[l];
        (start, start + i * o)
    }

    pub fn weights(&self, l: usize) -> &[T] {
        let (w, b) = self.layer_offsets(l);
        &self.params[w..b]
    }

    pub fn bias(&self, l: usize) -> &[T] {
        let (_, b) = self.layer_offsets(l);
        &self.params[b..b + self.spec.layer_shapes()[l].1]
    }

    /// Row-major `batch × input` in, `batch × output` out.
    pub fn forward(&self, x: &[T], batch: usize) -> Result<(Vec<T>, MlpCache<T>)> {
        self.run(x, batch, true)
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: &[T], batch: usize) -> Result<Vec<T>> {
        self.run(x, batch, false).map(|(y, _)| y)
    }

    fn run(&self, x: &[T], batch: usize, keep: bool) -> Result<(Vec<T>, MlpCache<T>)> {
        check_len("MLP input", batch * self.spec.input, x.len())?;
        let shapes = self.spec.layer_shapes();
        let last = shapes.len() - 1;
        let mut cache = MlpCache {
            batch,
            version: self.version,
            inputs: Vec::new(),
            pre: Vec::new(),
        };
        let mut h = x.to_vec();
        let mut offset = 0;
        for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut z = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            matmul(batch, fan_in, fan_out, &h, false, w, true, &mut z, T::one());
            if l == last {
                if keep {
                    cache.inputs.push(h);
                }
                return Ok((z, cache));
            }
            let act = self.spec.activation;
            let a: Vec<T> = z.iter().map(|&v| act.apply(v)).collect();
            if keep {
                cache.inputs.push(std::mem::replace(&mut h, a));
                cache.pre.push(z);
            } else {
                h = a;
            }
        }
        unreachable!("validated specs have an output layer")
    }

    /// Reverse-mode gradients of `sum(dy ⊙ y)` for the forward pass that
    /// produced `cache`.
    pub fn backward(&self, cache: &MlpCache<T>, dy: &[T]) -> Result<MlpGrads<T>> {
        if cache.version != self.version || cache.inputs.len() != self.spec.hidden.len() + 1 {
            return Err(Error::Contract("MLP cache does not belong to these parameters".into()));
        }
        let batch = cache.batch;
        check_len("MLP upstream gradient", batch * self.spec.output, dy.len())?;
        let shapes = self.spec.layer_shapes();
        let mut grads = vec![T::zero(); self.params.len()];
        let mut dz = dy.to_vec();
        for l in (0..shapes.len()).rev() {
            let (fan_in, fan_out) = shapes[l];
            let (w_off, b_off) = self.layer_offsets(l);
            let x = &cache.inputs[l];
            // dW = dZᵀ X
            matmul(fan_out, batch, fan_in, &dz, true, x, false, &mut grads[w_off..b_off], T::zero());
            let db = &mut grads[b_off..b_off + fan_out];
            for row in dz.chunks_exact(fan_out) {
                db.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
            }
            // dX = dZ W
            let mut dx = vec![T::zero(); batch * fan_in];
            matmul(batch, fan_out, fan_in, &dz, false, &self.params[w_off..b_off], false, &mut dx, T::zero());
            if l == 0 {
                return Ok(MlpGrads { params: grads, input: dx });
            }
            let act = self.spec.activation;
            dx.iter_mut()
                .zip(&cache.pre[l - 1])
                .for_each(|(d, &z)| *d *= act.derivative(z));
            dz = dx;
        }
        unreachable!("validated specs have an input layer")
    }
}

/// Single-vector forward pass.
pub fn mlp_forward<T: Real>(net: &Mlp<T>, x: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
    net.forward(x, 1)
}

pub fn mlp_backward<T: Real>(net: &Mlp<T>, cache: &MlpCache<T>, dy: &[T]) -> Result<MlpGrads<T>> {
    net.backward(cache, dy)
}
