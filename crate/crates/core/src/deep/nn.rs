//! Small fully connected networks with hand-written backpropagation.
//!
//! Batches are row-major `[n x dim]` slices. Parameters of a network live in
//! one flat vector laid out layer by layer as `W (out x in)` then `b (out)`.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

const WEIGHTS_MAGIC: &[u8; 8] = b"RSPECNN1";
/// Final-layer weights start in `U(-FINAL_INIT, FINAL_INIT)`.
const FINAL_INIT: f64 = 3e-3;

/// Output activation of the top layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopActivation {
    /// `clamp(raw, 0, 1)`.
    Clamp01,
    /// `tanh(raw)`.
    Tanh,
    /// `clamp(raw, -10, 6)`.
    ClampLog,
}

impl TopActivation {
    pub fn apply(self, raw: f64) -> f64 {
        match self {
            TopActivation::Clamp01 => raw.clamp(0.0, 1.0),
            TopActivation::Tanh => raw.tanh(),
            TopActivation::ClampLog => raw.clamp(-10.0, 6.0),
        }
    }

    /// Derivative of [`apply`](Self::apply); clamps pass gradient only inside their range.
    pub fn derivative(self, raw: f64) -> f64 {
        match self {
            TopActivation::Clamp01 => f64::from(u8::from((0.0..=1.0).contains(&raw))),
            TopActivation::Tanh => 1.0 - raw.tanh().powi(2),
            TopActivation::ClampLog => f64::from(u8::from((-10.0..=6.0).contains(&raw))),
        }
    }

    fn code(self) -> u8 {
        match self {
            TopActivation::Clamp01 => 0,
            TopActivation::Tanh => 1,
            TopActivation::ClampLog => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(TopActivation::Clamp01),
            1 => Some(TopActivation::Tanh),
            2 => Some(TopActivation::ClampLog),
            _ => None,
        }
    }
}

/// Feed-forward network with rectifier hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
    top: TopActivation,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    n: usize,
    /// Input of each layer; `acts[0]` is the network input.
    acts: Vec<Vec<f64>>,
    /// Pre-activation output of the top layer.
    pub raw: Vec<f64>,
}

fn layer_offsets(sizes: &[usize]) -> Vec<usize> {
    let mut offs = vec![0];
    for w in sizes.windows(2) {
        offs.push(offs.last().unwrap() + w[0] * w[1] + w[1]);
    }
    offs
}

/// `c[m x n] = a[m x k] * b` with arbitrary strides on `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides describe in-bounds views of `a`, `b` and `c` for
    // the given dimensions, and `c` does not alias the inputs.
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
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// Uniform fan-in initialization; the final layer starts near zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], top: TopActivation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::param("layer sizes", "need at least input and output, all positive"));
        }
        let offs = layer_offsets(sizes);
        let mut params = vec![0.0; *offs.last().unwrap()];
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = if l + 1 == layers { FINAL_INIT } else { 1.0 / (fan_in as f64).sqrt() };
            let w = &mut params[offs[l]..offs[l] + fan_in * fan_out];
            for x in w {
                *x = rng.random_range(-bound..=bound);
            }
            for x in &mut params[offs[l] + fan_in * fan_out..offs[l + 1]] {
                *x = rng.random_range(-bound..=bound);
            }
        }
        Ok(Self { sizes: sizes.to_vec(), params, top })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn top(&self) -> TopActivation {
        self.top
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

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let offs = layer_offsets(&self.sizes);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        (&self.params[offs[l]..offs[l] + i * o], &self.params[offs[l] + i * o..offs[l + 1]])
    }

    /// Sets every bias of the given layers to `value`.
    pub fn fill_biases(&mut self, value: f64, layers: impl IntoIterator<Item = usize>) {
        let offs = layer_offsets(&self.sizes);
        for l in layers {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            self.params[offs[l] + i * o..offs[l + 1]].fill(value);
        }
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Tape {
        assert_eq!(x.len(), n * self.input_dim(), "input batch shape");
        let layers = self.num_layers();
        let mut acts = Vec::with_capacity(layers);
        let mut cur = x.to_vec();
        for l in 0..layers {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer(l);
            let mut out = vec![0.0; n * o];
            for row in out.chunks_exact_mut(o) {
                row.copy_from_slice(b);
            }
            gemm(n, i, o, &cur, (i, 1), w, (1, i), &mut out, 1.0);
            if l + 1 < layers {
                for h in &mut out {
                    *h = h.max(0.0);
                }
            }
            acts.push(std::mem::replace(&mut cur, out));
        }
        Tape { n, acts, raw: cur }
    }

    /// Top-activated outputs.
    pub fn predict(&self, x: &[f64], n: usize) -> Vec<f64> {
        self.forward(x, n).raw.into_iter().map(|r| self.top.apply(r)).collect()
    }

    /// Backpropagates `d_raw` (gradient w.r.t. the pre-activation output).
    ///
    /// Parameter gradients are accumulated into `grad` when given; the input
    /// gradient is returned when `want_input` is set.
    pub fn backward(
        &self,
        tape: &Tape,
        d_raw: &[f64],
        mut grad: Option<&mut [f64]>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let n = tape.n;
        assert_eq!(d_raw.len(), n * self.output_dim(), "output gradient shape");
        let offs = layer_offsets(&self.sizes);
        let mut delta = d_raw.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let input = &tape.acts[l];
            if let Some(g) = grad.as_deref_mut() {
                let (gw, gb) = g[offs[l]..offs[l + 1]].split_at_mut(i * o);
                gemm(o, n, i, &delta, (1, o), input, (i, 1), gw, 1.0);
                for row in delta.chunks_exact(o) {
                    for (b, d) in gb.iter_mut().zip(row) {
                        *b += d;
                    }
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; n * i];
            gemm(n, o, i, &delta, (o, 1), w, (i, 1), &mut prev, 0.0);
            if l > 0 {
                for (d, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Some(delta)
    }

    /// `self <- tau * src + (1 - tau) * self`.
    pub fn soft_update(&mut self, src: &Mlp, tau: f64) {
        for (t, s) in self.params.iter_mut().zip(&src.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}

/// Adaptive moment estimation over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; num_params], v: vec![0.0; num_params], t: 0 }
    }

    /// One descent step along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Writes named networks to a `RSPECNN1` file.
pub fn save_networks(path: impl AsRef<Path>, nets: &[(&str, &Mlp)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(WEIGHTS_MAGIC);
    buf.extend_from_slice(&(nets.len() as u64).to_le_bytes());
    for (name, net) in nets {
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(net.top.code());
        buf.extend_from_slice(&(net.sizes.len() as u64).to_le_bytes());
        for &s in &net.sizes {
            buf.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for p in &net.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(len)?)?;
        self.pos += len;
        Some(s)
    }

    fn word(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

pub fn load_networks(path: impl AsRef<Path>) -> Result<Vec<(String, Mlp)>> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    let bad = |why: &str| Error::format(path, why.to_string());
    if buf.len() < 16 || &buf[..8] != WEIGHTS_MAGIC {
        return Err(bad("missing RSPECNN1 header"));
    }
    let mut cur = Cursor { buf: &buf, pos: 8 };
    let truncated = || bad("truncated weights file");
    let count = cur.word().ok_or_else(truncated)? as usize;
    let mut nets = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let name_len = cur.word().ok_or_else(truncated)? as usize;
        let name = cur.take(name_len).ok_or_else(truncated)?;
        let name = String::from_utf8(name.to_vec()).map_err(|_| bad("network name"))?;
        let code = cur.take(1).ok_or_else(truncated)?[0];
        let top = TopActivation::from_code(code).ok_or_else(|| bad("activation code"))?;
        let layers = cur.word().ok_or_else(truncated)? as usize;
        if !(2..=64).contains(&layers) {
            return Err(bad("layer count"));
        }
        let sizes = (0..layers)
            .map(|_| cur.word().map(|w| w as usize).ok_or_else(truncated))
            .collect::<Result<Vec<_>>>()?;
        let n = *layer_offsets(&sizes).last().unwrap();
        let params = (0..n)
            .map(|_| cur.word().map(f64::from_bits).ok_or_else(truncated))
            .collect::<Result<Vec<_>>>()?;
        nets.push((name, Mlp { sizes, params, top }));
    }
    Ok(nets)
}
