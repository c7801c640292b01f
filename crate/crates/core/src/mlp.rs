//! Two-hidden-layer feedforward network with sigmoid activations and a
//! linear output layer.
//!
//! Parameters live in one flat vector laid out as
//! `W1 (N1 x n, row-major), b1 (N1), W2 (N2 x N1, row-major), b2 (N2),
//! W0 (n x N2, row-major), b0 (n)`, so that
//! `T(x) = W0 s(W2 s(W1 x + b1) + b2) + b0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sigmoid,
    /// Linear activation; only useful for checking the chain rule.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    fn slope(self, act: f64) -> f64 {
        match self {
            Activation::Sigmoid => act * (1.0 - act),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    #[serde(default, skip_serializing_if = "is_sigmoid")]
    pub activation: Activation,
}

fn is_sigmoid(a: &Activation) -> bool {
    *a == Activation::Sigmoid
}

impl MlpConfig {
    pub fn new(n: usize, n1: usize, n2: usize) -> Result<Self> {
        if n == 0 || n1 == 0 || n2 == 0 {
            return Err(Error::InvalidArgument("layer widths must be at least 1".into()));
        }
        Ok(MlpConfig {
            n,
            n1,
            n2,
            activation: Activation::Sigmoid,
        })
    }

    /// Five neurons in each hidden layer.
    pub fn default_for(n: usize) -> Self {
        MlpConfig::new(n, 5, 5).expect("n >= 1")
    }

    pub fn param_count(&self) -> usize {
        let (n, n1, n2) = (self.n, self.n1, self.n2);
        n1 * n + n1 + n2 * n1 + n2 + n * n2 + n
    }

    fn offsets(&self) -> Offsets {
        let (n, n1, n2) = (self.n, self.n1, self.n2);
        let w1 = 0;
        let b1 = w1 + n1 * n;
        let w2 = b1 + n1;
        let b2 = w2 + n2 * n1;
        let w0 = b2 + n2;
        let b0 = w0 + n * n2;
        Offsets { w1, b1, w2, b2, w0, b0 }
    }

    fn check(&self, p: &[f64], x: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w0: usize,
    b0: usize,
}

/// Structured view of a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w0: Matrix,
    pub b0: Vec<f64>,
}

pub fn unpack(cfg: &MlpConfig, p: &[f64]) -> Result<Layers> {
    if p.len() != cfg.param_count() {
        return Err(Error::DimensionMismatch {
            expected: cfg.param_count(),
            got: p.len(),
        });
    }
    let o = cfg.offsets();
    let (n, n1, n2) = (cfg.n, cfg.n1, cfg.n2);
    Ok(Layers {
        w1: Matrix::from_row_major(n1, n, p[o.w1..o.b1].to_vec())?,
        b1: p[o.b1..o.w2].to_vec(),
        w2: Matrix::from_row_major(n2, n1, p[o.w2..o.b2].to_vec())?,
        b2: p[o.b2..o.w0].to_vec(),
        w0: Matrix::from_row_major(n, n2, p[o.w0..o.b0].to_vec())?,
        b0: p[o.b0..].to_vec(),
    })
}

pub fn pack(layers: &Layers) -> Vec<f64> {
    let mut p = Vec::new();
    p.extend_from_slice(layers.w1.as_slice());
    p.extend_from_slice(&layers.b1);
    p.extend_from_slice(layers.w2.as_slice());
    p.extend_from_slice(&layers.b2);
    p.extend_from_slice(layers.w0.as_slice());
    p.extend_from_slice(&layers.b0);
    p
}

/// Scratch buffers for allocation-free forward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    h1: Vec<f64>,
    h2: Vec<f64>,
}

impl Workspace {
    pub fn new(cfg: &MlpConfig) -> Self {
        Workspace {
            h1: vec![0.0; cfg.n1],
            h2: vec![0.0; cfg.n2],
        }
    }
}

/// Forward pass into `out` without dimension checks.
#[inline]
pub(crate) fn forward_into(cfg: &MlpConfig, p: &[f64], x: &[f64], ws: &mut Workspace, out: &mut [f64]) {
    let o = cfg.offsets();
    let (n, n1, n2) = (cfg.n, cfg.n1, cfg.n2);
    let act = cfg.activation;
    for i in 0..n1 {
        let row = &p[o.w1 + i * n..o.w1 + (i + 1) * n];
        let mut s = p[o.b1 + i];
        for (w, xv) in row.iter().zip(x) {
            s += w * xv;
        }
        ws.h1[i] = act.apply(s);
    }
    for i in 0..n2 {
        let row = &p[o.w2 + i * n1..o.w2 + (i + 1) * n1];
        let mut s = p[o.b2 + i];
        for (w, hv) in row.iter().zip(&ws.h1) {
            s += w * hv;
        }
        ws.h2[i] = act.apply(s);
    }
    for (j, o_j) in out.iter_mut().enumerate().take(n) {
        let row = &p[o.w0 + j * n2..o.w0 + (j + 1) * n2];
        let mut s = p[o.b0 + j];
        for (w, hv) in row.iter().zip(&ws.h2) {
            s += w * hv;
        }
        *o_j = s;
    }
}

pub fn forward(cfg: &MlpConfig, p: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    cfg.check(p, x)?;
    let mut ws = Workspace::new(cfg);
    let mut out = vec![0.0; cfg.n];
    forward_into(cfg, p, x, &mut ws, &mut out);
    Ok(out)
}

/// Exact input Jacobian `dT/dx` (n x n) by the chain rule.
pub fn input_jacobian(cfg: &MlpConfig, p: &[f64], x: &[f64]) -> Result<Matrix> {
    cfg.check(p, x)?;
    let l = unpack(cfg, p)?;
    let act = cfg.activation;
    let (n, n1, n2) = (cfg.n, cfg.n1, cfg.n2);
    let pre1: Vec<f64> = (0..n1)
        .map(|i| l.b1[i] + l.w1.row_slice(i).iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    let h1: Vec<f64> = pre1.iter().map(|&v| act.apply(v)).collect();
    let pre2: Vec<f64> = (0..n2)
        .map(|i| l.b2[i] + l.w2.row_slice(i).iter().zip(&h1).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    let h2: Vec<f64> = pre2.iter().map(|&v| act.apply(v)).collect();
    // d h1 / dx = diag(s1') W1
    let mut d1 = Matrix::zeros(n1, n);
    for i in 0..n1 {
        let s = act.slope(h1[i]);
        for k in 0..n {
            d1[(i, k)] = s * l.w1[(i, k)];
        }
    }
    let mut d2 = &l.w2 * &d1;
    for i in 0..n2 {
        let s = act.slope(h2[i]);
        for k in 0..n {
            d2[(i, k)] *= s;
        }
    }
    Ok(&l.w0 * &d2)
}

/// Entries uniform in `[-0.5, 0.5]` from a ChaCha20 stream keyed by `seed`.
pub fn init_random(cfg: &MlpConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..cfg.param_count()).map(|_| rng.gen_range(-0.5..=0.5)).collect()
}
