use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NnError, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply<F: Scalar>(self, z: F) -> F {
        match self {
            Activation::Elu => {
                if z > F::zero() {
                    z
                } else {
                    z.exp() - F::one()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(F::zero()),
        }
    }

    #[inline]
    fn d1<F: Scalar>(self, z: F) -> F {
        match self {
            Activation::Elu => {
                if z > F::zero() {
                    F::one()
                } else {
                    z.exp()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                F::one() - t * t
            }
            Activation::Relu => {
                if z > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
        }
    }

    #[inline]
    fn d2<F: Scalar>(self, z: F) -> F {
        match self {
            Activation::Elu => {
                if z > F::zero() {
                    F::zero()
                } else {
                    z.exp()
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                let two = F::one() + F::one();
                -two * t * (F::one() - t * t)
            }
            Activation::Relu => F::zero(),
        }
    }
}

/// Fully connected network with a linear output layer. Parameters live in
/// one contiguous vector: for each layer, the `out × in` row-major weight
/// matrix followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F: Scalar> {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<F>,
}

/// Per-layer inputs and pre-activations retained by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache<F: Scalar> {
    inputs: Vec<Array2<F>>,
    pre: Vec<Array2<F>>,
}

impl<F: Scalar> MlpCache<F> {
    pub fn batch(&self) -> usize {
        self.inputs[0].nrows()
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<F: Scalar> Mlp<F> {
    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "invalid layer sizes {sizes:?}");
        Self { sizes: sizes.to_vec(), activation, params: vec![F::zero(); param_count(sizes)] }
    }

    /// Weights uniform in ±1/√fan_in, biases zero. `last_gain` scales the
    /// output layer's weights.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, last_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, activation);
        let layers = net.num_layers();
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let bound = (1.0 / n_in as f64).sqrt() * if l + 1 == layers { last_gain } else { 1.0 };
            for p in &mut net.params[off..off + n_in * n_out] {
                *p = F::cast_from(rng.random_range(-1.0..=1.0) * bound);
            }
            off += n_in * n_out + n_out;
        }
        net
    }

    pub fn from_params(sizes: &[usize], activation: Activation, params: Vec<F>) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::ShapeMismatch { expected: 2, got: sizes.len() });
        }
        let n = param_count(sizes);
        if params.len() != n {
            return Err(NnError::ShapeMismatch { expected: n, got: params.len() });
        }
        Ok(Self { sizes: sizes.to_vec(), activation, params })
    }

    pub fn cast<G: Scalar>(&self) -> Mlp<G> {
        Mlp {
            sizes: self.sizes.clone(),
            activation: self.activation,
            params: self.params.iter().map(|p| G::cast_from(p.as_f64())).collect(),
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[F] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [F] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        param_count(&self.sizes[..=layer])
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, F> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        ArrayView2::from_shape((n_out, n_in), &self.params[off..off + n_in * n_out]).unwrap()
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, F> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l) + n_in * n_out;
        ArrayView1::from(&self.params[off..off + n_out])
    }

    fn grad_views<'g>(&self, l: usize, grad: &'g mut [F]) -> (ArrayViewMut2<'g, F>, ArrayViewMut1<'g, F>) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        let (w, rest) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
        (ArrayViewMut2::from_shape((n_out, n_in), w).unwrap(), ArrayViewMut1::from(rest))
    }

    fn check_input(&self, x: &ArrayView2<'_, F>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::ShapeMismatch { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(())
    }

    fn affine(&self, l: usize, u: &ArrayView2<'_, F>) -> Array2<F> {
        let mut z = Array2::from_shape_fn((u.nrows(), self.sizes[l + 1]), |_| F::zero());
        z += &self.bias(l);
        general_mat_mul(F::one(), u, &self.weight(l).t(), F::one(), &mut z);
        z
    }

    /// Batched forward pass (one sample per row) without a cache.
    pub fn predict(&self, x: ArrayView2<'_, F>) -> Result<Array2<F>, NnError> {
        self.check_input(&x)?;
        let layers = self.num_layers();
        let mut u = self.affine(0, &x);
        for l in 1..layers {
            let act = self.activation;
            u.mapv_inplace(|z| act.apply(z));
            u = self.affine(l, &u.view());
        }
        Ok(u)
    }

    pub fn forward(&self, x: ArrayView2<'_, F>) -> Result<(Array2<F>, MlpCache<F>), NnError> {
        self.check_input(&x)?;
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        inputs.push(x.to_owned());
        for l in 0..layers {
            let z = self.affine(l, &inputs[l].view());
            if l + 1 < layers {
                let act = self.activation;
                inputs.push(z.mapv(|v| act.apply(v)));
            }
            pre.push(z);
        }
        let y = pre[layers - 1].clone();
        Ok((y, MlpCache { inputs, pre }))
    }

    /// Accumulates parameter gradients into `grad` and returns dL/dx.
    pub fn backward(&self, cache: &MlpCache<F>, dy: ArrayView2<'_, F>, grad: &mut [F]) -> Result<Array2<F>, NnError> {
        if dy.ncols() != self.output_dim() || dy.nrows() != cache.batch() {
            return Err(NnError::ShapeMismatch { expected: self.output_dim(), got: dy.ncols() });
        }
        if grad.len() != self.num_params() {
            return Err(NnError::ShapeMismatch { expected: self.num_params(), got: grad.len() });
        }
        Ok(self.backprop(cache, dy.to_owned(), None, grad))
    }

    /// Reverse pass with optional extra gradients injected directly on each
    /// layer's pre-activation.
    fn backprop(&self, cache: &MlpCache<F>, dy: Array2<F>, inject: Option<&[Array2<F>]>, grad: &mut [F]) -> Array2<F> {
        let layers = self.num_layers();
        let mut dz = dy;
        for l in (0..layers).rev() {
            if let Some(inj) = inject {
                dz += &inj[l];
            }
            let (mut gw, mut gb) = self.grad_views(l, grad);
            general_mat_mul(F::one(), &dz.t(), &cache.inputs[l], F::one(), &mut gw);
            gb += &dz.sum_axis(Axis(0));
            let mut da = Array2::from_shape_fn((dz.nrows(), self.sizes[l]), |_| F::zero());
            general_mat_mul(F::one(), &dz, &self.weight(l), F::zero(), &mut da);
            if l == 0 {
                return da;
            }
            let act = self.activation;
            Zip::from(&mut da).and(&cache.pre[l - 1]).for_each(|d, &z| *d = *d * act.d1(z));
            dz = da;
        }
        unreachable!()
    }

    /// Per-sample gradient of a scalar-output network with respect to its input.
    pub fn input_gradient(&self, cache: &MlpCache<F>) -> Result<Array2<F>, NnError> {
        self.input_gradient_chain(cache).map(|(g, _)| g.into_iter().next().unwrap())
    }

    /// Returns `gbar[l]` (gradient of the output w.r.t. `inputs[l]`) for
    /// every layer and `delta[l]` (w.r.t. `pre[l]`).
    #[allow(clippy::type_complexity)]
    fn input_gradient_chain(&self, cache: &MlpCache<F>) -> Result<(Vec<Array2<F>>, Vec<Array2<F>>), NnError> {
        if self.output_dim() != 1 {
            return Err(NnError::ShapeMismatch { expected: 1, got: self.output_dim() });
        }
        let layers = self.num_layers();
        let n = cache.batch();
        let mut delta = vec![Array2::<F>::zeros((0, 0)); layers];
        let mut gbar = vec![Array2::<F>::zeros((0, 0)); layers];
        delta[layers - 1] = Array2::from_elem((n, 1), F::one());
        for l in (0..layers).rev() {
            gbar[l] = delta[l].dot(&self.weight(l));
            if l > 0 {
                let act = self.activation;
                let mut d = gbar[l].clone();
                Zip::from(&mut d).and(&cache.pre[l - 1]).for_each(|v, &z| *v = *v * act.d1(z));
                delta[l - 1] = d;
            }
        }
        Ok((gbar, delta))
    }

    /// For a scalar-output network, accumulates into `grad` the parameter
    /// gradient of `weight · Σ_i ‖∂y_i/∂x_i‖²` and returns the per-sample
    /// squared input-gradient norms.
    pub fn input_grad_penalty_backward(&self, cache: &MlpCache<F>, weight: F, grad: &mut [F]) -> Result<Array1<F>, NnError> {
        if grad.len() != self.num_params() {
            return Err(NnError::ShapeMismatch { expected: self.num_params(), got: grad.len() });
        }
        let (gbar, delta) = self.input_gradient_chain(cache)?;
        let layers = self.num_layers();
        let n = cache.batch();
        let norms = gbar[0].map_axis(Axis(1), |row| row.iter().fold(F::zero(), |s, &v| s + v * v));

        let two = F::one() + F::one();
        let mut r = gbar[0].mapv(|v| two * weight * v);
        let mut inject: Vec<Array2<F>> = (0..layers).map(|l| Array2::zeros((n, self.sizes[l + 1]))).collect();
        for l in 0..layers {
            let (mut gw, _) = self.grad_views(l, grad);
            general_mat_mul(F::one(), &delta[l].t(), &r, F::one(), &mut gw);
            if l + 1 == layers {
                break;
            }
            let s = r.dot(&self.weight(l).t());
            let act = self.activation;
            let mut r_next = s.clone();
            Zip::from(&mut r_next).and(&cache.pre[l]).for_each(|v, &z| *v = *v * act.d1(z));
            Zip::from(&mut inject[l])
                .and(&s)
                .and(&gbar[l + 1])
                .and(&cache.pre[l])
                .for_each(|o, &sv, &g, &z| *o = sv * g * act.d2(z));
            r = r_next;
        }
        let dy = Array2::zeros((n, 1));
        self.backprop(cache, dy, Some(&inject), grad);
        Ok(norms)
    }
}
