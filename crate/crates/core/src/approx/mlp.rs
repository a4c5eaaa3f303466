use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// Multilayer perceptron with flat parameters.
///
/// Layer `l` stores its `out x in` weight matrix row-major followed by its
/// `out` biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations recorded by [`Mlp::trace`]; `acts[0]` is the input.
#[derive(Clone, Debug)]
pub struct Trace {
    pub acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; Self::param_count(sizes)],
        }
    }

    /// Uniform fan-in initialization, `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        Self::with_output_scale(sizes, rng, None)
    }

    /// Like [`Mlp::new`] but the final layer is drawn from `U(-scale, scale)`.
    pub fn with_output_scale(sizes: &[usize], rng: &mut Rng, scale: Option<f64>) -> Self {
        let mut mlp = Self::zeros(sizes);
        let n_layers = sizes.len() - 1;
        let mut offset = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = match scale {
                Some(s) if l + 1 == n_layers => s,
                _ => 1.0 / (w[0] as f64).sqrt(),
            };
            let len = w[0] * w[1] + w[1];
            for p in &mut mlp.params[offset..offset + len] {
                *p = rng.gen_range(-bound..=bound);
            }
            offset += len;
        }
        mlp
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape("an MLP needs input and output sizes".into()));
        }
        let expected = Self::param_count(sizes);
        if params.len() != expected {
            return Err(Error::Shape(format!(
                "{} parameters given, layer sizes {sizes:?} need {expected}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("MLP parameters".into()));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Copy with the parameter vector replaced (same architecture).
    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.params.len());
        Self {
            sizes: self.sizes.clone(),
            params: params.to_vec(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.sizes[0] {
            return Err(Error::Shape(format!(
                "input width {} but network expects {}",
                x.len(),
                self.sizes[0]
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.eval(x))
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    /// Forward pass without the shape check.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.sizes[0]);
        let n_layers = self.sizes.len() - 1;
        let mut cur = x.to_vec();
        let mut offset = 0;
        for l in 0..n_layers {
            let next = self.layer(l, offset, &cur);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
            cur = next;
        }
        cur
    }

    fn layer(&self, l: usize, offset: usize, x: &[f64]) -> Vec<f64> {
        let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
        let w = &self.params[offset..offset + inp * out];
        let b = &self.params[offset + inp * out..offset + inp * out + out];
        let hidden = l + 2 < self.sizes.len();
        (0..out)
            .map(|o| {
                let row = &w[o * inp..(o + 1) * inp];
                let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                if hidden {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    }

    pub fn trace(&self, x: &[f64]) -> Trace {
        debug_assert_eq!(x.len(), self.sizes[0]);
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let next = self.layer(l, offset, &acts[l]);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
            acts.push(next);
        }
        Trace { acts }
    }

    /// Reverse pass: accumulates `dout`-weighted parameter gradients into
    /// `grad` and returns the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace, dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(dout.len(), self.output_dim());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = dout.to_vec();
        for l in (0..n_layers).rev() {
            let (inp, out) = (self.sizes[l], self.sizes[l + 1]);
            let base = offsets[l];
            let x = &trace.acts[l];
            let mut dx = vec![0.0; inp];
            for o in 0..out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = base + o * inp;
                let w = &self.params[row..row + inp];
                let g = &mut grad[row..row + inp];
                for i in 0..inp {
                    g[i] += d * x[i];
                    dx[i] += d * w[i];
                }
                grad[base + inp * out + o] += d;
            }
            if l > 0 {
                for (d, a) in dx.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = dx;
        }
        delta
    }
}
