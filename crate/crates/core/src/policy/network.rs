//! One-hidden-layer MLP approximating `Q(s, .)`.
//!
//! Parameters are stored as a flat list of row-major tensors:
//! `[w1, b1, w2, b2]` for the plain head and `[w1, b1, wv, bv, wa, ba]`
//! for the dueling head, where `Q = V + A - mean(A)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::DqnVariant;
use crate::error::{DdrError, Result};

const W1: usize = 0;
const B1: usize = 1;
// Plain head.
const W2: usize = 2;
const B2: usize = 3;
// Dueling heads.
const WV: usize = 2;
const BV: usize = 3;
const WA: usize = 4;
const BA: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        Tensor {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
        }
    }

    #[inline]
    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Activations kept from a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub hidden: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    input_dim: usize,
    hidden_dim: usize,
    output_dim: usize,
    dueling: bool,
    params: Vec<Tensor>,
}

impl QNetwork {
    /// Uniform `±1/sqrt(fan_in)` initialisation for weights and biases.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        variant: DqnVariant,
        rng: &mut R,
    ) -> Self {
        let b_in = 1.0 / (input_dim as f64).sqrt();
        let b_hid = 1.0 / (hidden_dim as f64).sqrt();
        let mut params = vec![
            Tensor::uniform(hidden_dim, input_dim, b_in, rng),
            Tensor::uniform(hidden_dim, 1, b_in, rng),
        ];
        let dueling = variant == DqnVariant::Dueling;
        if dueling {
            params.push(Tensor::uniform(1, hidden_dim, b_hid, rng));
            params.push(Tensor::uniform(1, 1, b_hid, rng));
        }
        params.push(Tensor::uniform(output_dim, hidden_dim, b_hid, rng));
        params.push(Tensor::uniform(output_dim, 1, b_hid, rng));
        QNetwork {
            input_dim,
            hidden_dim,
            output_dim,
            dueling,
            params,
        }
    }

    /// A network with every parameter set to zero.
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize, variant: DqnVariant) -> Self {
        let mut params = vec![Tensor::zeros(hidden_dim, input_dim), Tensor::zeros(hidden_dim, 1)];
        let dueling = variant == DqnVariant::Dueling;
        if dueling {
            params.push(Tensor::zeros(1, hidden_dim));
            params.push(Tensor::zeros(1, 1));
        }
        params.push(Tensor::zeros(output_dim, hidden_dim));
        params.push(Tensor::zeros(output_dim, 1));
        QNetwork {
            input_dim,
            hidden_dim,
            output_dim,
            dueling,
            params,
        }
    }

    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        dueling: bool,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        let net = QNetwork {
            input_dim,
            hidden_dim,
            output_dim,
            dueling,
            params,
        };
        let expected = Self::zeros(
            input_dim,
            hidden_dim,
            output_dim,
            if dueling { DqnVariant::Dueling } else { DqnVariant::Vanilla },
        );
        let shapes_match = net.params.len() == expected.params.len()
            && net
                .params
                .iter()
                .zip(&expected.params)
                .all(|(a, b)| a.rows == b.rows && a.cols == b.cols && a.data.len() == b.data.len());
        if !shapes_match {
            return Err(DdrError::Checkpoint("parameter shapes do not match the layer sizes".into()));
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn is_dueling(&self) -> bool {
        self.dueling
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Zeroed gradient buffers shaped like the parameters.
    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|p| Tensor::zeros(p.rows, p.cols))
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.q)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim {
            return Err(DdrError::Shape {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let w1 = &self.params[W1];
        let b1 = &self.params[B1].data;
        // State vectors are mostly one-hot; skip the zeros.
        let nz: Vec<(usize, f64)> = x
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, v)| v != 0.0)
            .collect();
        let hidden: Vec<f64> = (0..self.hidden_dim)
            .map(|j| {
                let row = w1.row(j);
                let z = nz.iter().fold(b1[j], |acc, &(i, v)| acc + row[i] * v);
                z.max(0.0)
            })
            .collect();
        let q = if self.dueling {
            let value = dot(self.params[WV].row(0), &hidden) + self.params[BV].data[0];
            let wa = &self.params[WA];
            let ba = &self.params[BA].data;
            let adv: Vec<f64> = (0..self.output_dim)
                .map(|a| dot(wa.row(a), &hidden) + ba[a])
                .collect();
            let mean = adv.iter().sum::<f64>() / self.output_dim as f64;
            adv.iter().map(|a| value + (a - mean)).collect()
        } else {
            let w2 = &self.params[W2];
            let b2 = &self.params[B2].data;
            (0..self.output_dim)
                .map(|a| dot(w2.row(a), &hidden) + b2[a])
                .collect()
        };
        Ok(ForwardCache { hidden, q })
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the outputs is `dq`.
    pub fn backward(&self, x: &[f64], cache: &ForwardCache, dq: &[f64], grads: &mut [Tensor]) {
        let h = &cache.hidden;
        let mut dh = vec![0.0; self.hidden_dim];
        if self.dueling {
            let dv: f64 = dq.iter().sum();
            let mean_dq = dv / self.output_dim as f64;
            for (j, g) in grads[WV].row_mut(0).iter_mut().enumerate() {
                *g += dv * h[j];
            }
            grads[BV].data[0] += dv;
            let wv = self.params[WV].row(0);
            for j in 0..self.hidden_dim {
                dh[j] += dv * wv[j];
            }
            for (a, &d) in dq.iter().enumerate() {
                let da = d - mean_dq;
                if da == 0.0 {
                    continue;
                }
                for (g, &hj) in grads[WA].row_mut(a).iter_mut().zip(h) {
                    *g += da * hj;
                }
                grads[BA].data[a] += da;
                for (dhj, &w) in dh.iter_mut().zip(self.params[WA].row(a)) {
                    *dhj += da * w;
                }
            }
        } else {
            for (a, &d) in dq.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (g, &hj) in grads[W2].row_mut(a).iter_mut().zip(h) {
                    *g += d * hj;
                }
                grads[B2].data[a] += d;
                for (dhj, &w) in dh.iter_mut().zip(self.params[W2].row(a)) {
                    *dhj += d * w;
                }
            }
        }
        let nz: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
        for j in 0..self.hidden_dim {
            if h[j] <= 0.0 || dh[j] == 0.0 {
                continue;
            }
            let dz = dh[j];
            let row = grads[W1].row_mut(j);
            for &i in &nz {
                row[i] += dz * x[i];
            }
            grads[B1].data[j] += dz;
        }
    }

    /// Mean squared error between `Q(s_i, a_i)` and `targets[i]`, with its
    /// gradient.
    pub fn loss_and_grads(
        &self,
        states: &[&[f64]],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Vec<Tensor>)> {
        let batch = states.len();
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        let mut dq = vec![0.0; self.output_dim];
        for i in 0..batch {
            let cache = self.forward_cached(states[i])?;
            let a = actions[i];
            if a >= self.output_dim {
                return Err(DdrError::Shape {
                    expected: self.output_dim,
                    got: a,
                });
            }
            let err = cache.q[a] - targets[i];
            loss += err * err;
            dq.fill(0.0);
            dq[a] = 2.0 * err / batch as f64;
            self.backward(states[i], &cache, &dq, &mut grads);
        }
        Ok((loss / batch as f64, grads))
    }
}
