//! The learnable radiance field: frequency encoding, an MLP trunk with SiLU
//! activations, a softplus density head, a direction-conditioned sigmoid
//! colour head and, for the joint baseline, a sigmoid mask head reading the
//! trunk features only.
//!
//! Evaluation is batched over sample rows (row-major `n x features`
//! matrices). `forward_with_tape` keeps the activations needed by
//! `backward`, which accumulates parameter gradients in fixed order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadType {
    RgbSigma,
    RgbSigmaMask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub pos_frequencies: usize,
    pub dir_frequencies: usize,
    pub trunk_depth: usize,
    pub trunk_width: usize,
    pub head_type: HeadType,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            pos_frequencies: 6,
            dir_frequencies: 2,
            trunk_depth: 4,
            trunk_width: 64,
            head_type: HeadType::RgbSigma,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pos_frequencies == 0 || self.dir_frequencies == 0 || self.trunk_depth == 0 || self.trunk_width == 0 {
            return Err(Error::InvalidArgument(format!(
                "field configuration values must all be positive: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn pos_dim(&self) -> usize {
        encoded_len(self.pos_frequencies)
    }

    pub fn dir_dim(&self) -> usize {
        encoded_len(self.dir_frequencies)
    }

    pub fn color_width(&self) -> usize {
        (self.trunk_width / 2).max(1)
    }

    pub fn has_mask(&self) -> bool {
        self.head_type == HeadType::RgbSigmaMask
    }

    pub fn layout(&self) -> Layout {
        let mut layers = Vec::new();
        let mut offset = 0;
        let mut push = |input: usize, output: usize| {
            let l = Dense {
                input,
                output,
                weight: offset,
                bias: offset + input * output,
            };
            offset += input * output + output;
            l
        };
        let w = self.trunk_width;
        for i in 0..self.trunk_depth {
            layers.push(push(if i == 0 { self.pos_dim() } else { w }, w));
        }
        let density = push(w, 1);
        let color_hidden = push(w + self.dir_dim(), self.color_width());
        let color_out = push(self.color_width(), 3);
        let mask = self.has_mask().then(|| push(w, 1));
        Layout {
            trunk: layers,
            density,
            color_hidden,
            color_out,
            mask,
            len: offset,
        }
    }

    /// Total number of weights and biases.
    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

/// A dense layer's position inside the flat parameter vector. Weights are
/// stored row-major as `input x output`, followed by `output` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub trunk: Vec<Dense>,
    pub density: Dense,
    pub color_hidden: Dense,
    pub color_out: Dense,
    pub mask: Option<Dense>,
    pub len: usize,
}

pub fn encoded_len(frequencies: usize) -> usize {
    3 + 6 * frequencies
}

/// `[x, sin(2^l pi x), cos(2^l pi x)]` for `l = 0..frequencies`; each
/// frequency contributes the three sines followed by the three cosines.
pub fn encode(x: [f64; 3], frequencies: usize) -> Vec<f64> {
    let mut out = vec![0.0; encoded_len(frequencies)];
    encode_into(x, frequencies, &mut out);
    out
}

pub fn encode_into<T: Scalar>(x: [f64; 3], frequencies: usize, out: &mut [T]) {
    debug_assert_eq!(out.len(), encoded_len(frequencies));
    for j in 0..3 {
        out[j] = T::from_f64(x[j]);
        let (mut s, mut c) = (std::f64::consts::PI * x[j]).sin_cos();
        for l in 0..frequencies {
            if l > 0 {
                // double-angle recurrence; error stays near f64 epsilon for
                // the handful of octaves used here
                let (s2, c2) = (2.0 * s * c, c * c - s * s);
                s = s2;
                c = c2;
            }
            out[3 + 6 * l + j] = T::from_f64(s);
            out[6 + 6 * l + j] = T::from_f64(c);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOutput {
    pub color: [f32; 3],
    pub sigma: f32,
    pub mask: Option<f32>,
}

/// Batched field outputs: `sigma[n]`, `rgb[3n]`, optional `mask[n]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BatchOutput<T> {
    pub sigma: Vec<T>,
    pub rgb: Vec<T>,
    pub mask: Option<Vec<T>>,
}

/// Upstream gradients of a scalar loss with respect to the batch outputs.
#[derive(Debug, Clone, Copy)]
pub struct Upstream<'a, T> {
    pub sigma: &'a [T],
    pub rgb: &'a [T],
    pub mask: Option<&'a [T]>,
}

/// Activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    n: usize,
    pos: Vec<T>,
    dir: Vec<T>,
    trunk: TrunkState<T>,
    sigma_raw: Vec<T>,
    color_pre: Vec<T>,
    color_sig: Vec<T>,
    color_act: Vec<T>,
    out: BatchOutput<T>,
}

#[derive(Debug, Clone)]
struct TrunkState<T> {
    pre: Vec<Vec<T>>,
    sig: Vec<Vec<T>>,
    act: Vec<Vec<T>>,
}

impl<T> Default for TrunkState<T> {
    fn default() -> Self {
        Self {
            pre: Vec::new(),
            sig: Vec::new(),
            act: Vec::new(),
        }
    }
}

impl<T> Tape<T> {
    pub fn output(&self) -> &BatchOutput<T> {
        &self.out
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams<T = f32> {
    pub config: FieldConfig,
    pub values: Vec<T>,
}

impl<T: Scalar> FieldParams<T> {
    /// He-style uniform fan-in initialization for hidden layers, a narrower
    /// fan-in range for the output heads, zero biases.
    pub fn init(config: FieldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut values = vec![T::zero(); layout.len];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |layer: &Dense, gain: f64| {
            let bound = (gain / layer.input as f64).sqrt();
            for v in &mut values[layer.weight..layer.bias] {
                *v = T::from_f64(rng.gen_range(-bound..bound));
            }
        };
        for layer in &layout.trunk {
            fill(layer, 6.0);
        }
        fill(&layout.density, 1.0);
        fill(&layout.color_hidden, 6.0);
        fill(&layout.color_out, 1.0);
        if let Some(mask) = &layout.mask {
            fill(mask, 1.0);
        }
        Ok(Self { config, values })
    }

    pub fn from_values(config: FieldConfig, values: Vec<T>) -> Result<Self> {
        config.validate()?;
        let want = config.param_count();
        if values.len() != want {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, configuration needs {want}",
                values.len()
            )));
        }
        Ok(Self { config, values })
    }

    pub fn cast<U: Scalar>(&self) -> FieldParams<U> {
        FieldParams {
            config: self.config,
            values: self.values.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn encode_batch(&self, points: &[[T; 3]], dirs: Option<&[[T; 3]]>) -> (Vec<T>, Vec<T>) {
        let cfg = &self.config;
        let (pd, dd) = (cfg.pos_dim(), cfg.dir_dim());
        let mut pos = vec![T::zero(); points.len() * pd];
        for (p, row) in points.iter().zip(pos.chunks_exact_mut(pd)) {
            encode_into([p[0].as_f64(), p[1].as_f64(), p[2].as_f64()], cfg.pos_frequencies, row);
        }
        let mut dir = Vec::new();
        if let Some(dirs) = dirs {
            dir = vec![T::zero(); dirs.len() * dd];
            for (d, row) in dirs.iter().zip(dir.chunks_exact_mut(dd)) {
                encode_into([d[0].as_f64(), d[1].as_f64(), d[2].as_f64()], cfg.dir_frequencies, row);
            }
        }
        (pos, dir)
    }

    /// Runs the trunk; returns per-layer pre-activations, sigmoids of the
    /// pre-activations and activations.
    fn trunk(&self, layout: &Layout, pos: &[T], n: usize, keep: bool) -> TrunkState<T> {
        let mut st = TrunkState::default();
        let mut input: Vec<T> = Vec::new();
        for (i, layer) in layout.trunk.iter().enumerate() {
            let x = if i == 0 { pos } else { &input[..] };
            let mut pre = vec![T::zero(); n * layer.output];
            dense_forward(&self.values, layer, x, n, &mut pre);
            let mut act = vec![T::zero(); pre.len()];
            let mut sig = vec![T::zero(); pre.len()];
            T::silu_forward(&pre, &mut act, &mut sig);
            if keep {
                st.pre.push(pre);
                st.sig.push(sig);
                st.act.push(act.clone());
            }
            input = act;
        }
        if !keep {
            st.act.push(input);
        }
        st
    }

    /// Last trunk activations (`n x trunk_width`).
    pub fn trunk_features(&self, points: &[[T; 3]]) -> Vec<T> {
        let (pos, _) = self.encode_batch(points, None);
        let layout = self.config.layout();
        self.trunk(&layout, &pos, points.len(), false).act.pop().unwrap_or_default()
    }

    /// Density only; skips the colour and mask heads.
    pub fn density_batch(&self, points: &[[T; 3]]) -> Vec<T> {
        let layout = self.config.layout();
        let feat = self.trunk_features(points);
        let n = points.len();
        let mut raw = vec![T::zero(); n];
        dense_forward(&self.values, &layout.density, &feat, n, &mut raw);
        raw.into_iter().map(Scalar::softplus).collect()
    }

    pub fn forward_batch(&self, points: &[[T; 3]], dirs: &[[T; 3]]) -> BatchOutput<T> {
        self.forward_impl(points, dirs).out
    }

    pub fn forward_with_tape(&self, points: &[[T; 3]], dirs: &[[T; 3]]) -> Tape<T> {
        self.forward_impl(points, dirs)
    }

    fn forward_impl(&self, points: &[[T; 3]], dirs: &[[T; 3]]) -> Tape<T> {
        assert_eq!(points.len(), dirs.len(), "one direction per point");
        let n = points.len();
        let layout = self.config.layout();
        let (pos, dir) = self.encode_batch(points, Some(dirs));
        let trunk = self.trunk(&layout, &pos, n, true);
        let feat = trunk.act.last().expect("trunk depth >= 1");

        let mut sigma_raw = vec![T::zero(); n];
        dense_forward(&self.values, &layout.density, feat, n, &mut sigma_raw);
        let sigma = sigma_raw.iter().map(|&z| z.softplus()).collect();

        let ch = &layout.color_hidden;
        let width = self.config.trunk_width;
        let mut color_pre = vec![T::zero(); n * ch.output];
        for row in color_pre.chunks_exact_mut(ch.output) {
            row.copy_from_slice(&self.values[ch.bias..ch.bias + ch.output]);
        }
        let w = &self.values[ch.weight..ch.bias];
        matmul(feat, &w[..width * ch.output], &mut color_pre, n, width, ch.output, T::one());
        matmul(&dir, &w[width * ch.output..], &mut color_pre, n, ch.input - width, ch.output, T::one());
        let mut color_act = vec![T::zero(); color_pre.len()];
        let mut color_sig = vec![T::zero(); color_pre.len()];
        T::silu_forward(&color_pre, &mut color_act, &mut color_sig);
        let mut rgb = vec![T::zero(); n * 3];
        dense_forward(&self.values, &layout.color_out, &color_act, n, &mut rgb);
        for v in &mut rgb {
            *v = v.sigmoid();
        }

        let mask = layout.mask.as_ref().map(|m| {
            let mut raw = vec![T::zero(); n];
            dense_forward(&self.values, m, feat, n, &mut raw);
            raw.into_iter().map(Scalar::sigmoid).collect()
        });

        Tape {
            n,
            pos,
            dir,
            trunk,
            sigma_raw,
            color_pre,
            color_sig,
            color_act,
            out: BatchOutput { sigma, rgb, mask },
        }
    }

    /// Accumulates `d loss / d params` into `grad` for the loss whose output
    /// gradients are `upstream`.
    pub fn backward(&self, tape: &Tape<T>, upstream: Upstream<'_, T>, grad: &mut [T]) -> Result<()> {
        let n = tape.n;
        let layout = self.config.layout();
        if grad.len() != layout.len {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries, expected {}",
                grad.len(),
                layout.len
            )));
        }
        if upstream.sigma.len() != n || upstream.rgb.len() != 3 * n {
            return Err(Error::Shape(format!(
                "upstream gradients sized ({}, {}) for a batch of {n}",
                upstream.sigma.len(),
                upstream.rgb.len()
            )));
        }
        if upstream.mask.is_some() && layout.mask.is_none() {
            return Err(Error::Shape("mask gradient supplied to a field without a mask head".into()));
        }
        let width = self.config.trunk_width;
        let feat = tape.trunk.act.last().expect("trunk depth >= 1");
        let mut d_feat = vec![T::zero(); n * width];

        // colour head
        let out_rgb = &tape.out.rgb;
        let d_rgb_raw: Vec<T> = upstream
            .rgb
            .iter()
            .zip(out_rgb)
            .map(|(&g, &c)| g * c * (T::one() - c))
            .collect();
        let co = &layout.color_out;
        let mut d_color_act = vec![T::zero(); n * co.input];
        dense_backward(&self.values, co, &tape.color_act, &d_rgb_raw, n, grad, Some(&mut d_color_act));
        let mut d_color_pre = vec![T::zero(); d_color_act.len()];
        T::silu_backward(&d_color_act, &tape.color_pre, &tape.color_sig, &mut d_color_pre);
        let ch = &layout.color_hidden;
        {
            let (gw, gb) = grad[ch.weight..ch.bias + ch.output].split_at_mut(ch.input * ch.output);
            let (gw_feat, gw_dir) = gw.split_at_mut(width * ch.output);
            matmul_tn(feat, &d_color_pre, gw_feat, n, width, ch.output);
            matmul_tn(&tape.dir, &d_color_pre, gw_dir, n, ch.input - width, ch.output);
            column_sums_into(&d_color_pre, ch.output, gb);
            let w = &self.values[ch.weight..ch.weight + width * ch.output];
            matmul_nt(&d_color_pre, w, &mut d_feat, n, ch.output, width, T::one());
        }

        // density head
        let d_sigma_raw: Vec<T> = upstream
            .sigma
            .iter()
            .zip(&tape.sigma_raw)
            .map(|(&g, &z)| g * z.sigmoid())
            .collect();
        dense_backward_accumulate(&self.values, &layout.density, feat, &d_sigma_raw, n, grad, &mut d_feat);

        // mask head
        if let (Some(m), Some(dm)) = (&layout.mask, upstream.mask) {
            let mask = tape.out.mask.as_ref().expect("mask head outputs");
            if dm.len() != n {
                return Err(Error::Shape(format!("mask gradient has {} entries for {n} samples", dm.len())));
            }
            let d_raw: Vec<T> = dm.iter().zip(mask).map(|(&g, &p)| g * p * (T::one() - p)).collect();
            dense_backward_accumulate(&self.values, m, feat, &d_raw, n, grad, &mut d_feat);
        }

        // trunk
        let mut d_act = d_feat;
        for (i, layer) in layout.trunk.iter().enumerate().rev() {
            let mut d_pre = vec![T::zero(); d_act.len()];
            T::silu_backward(&d_act, &tape.trunk.pre[i], &tape.trunk.sig[i], &mut d_pre);
            let input = if i == 0 { &tape.pos } else { &tape.trunk.act[i - 1] };
            if i == 0 {
                dense_backward(&self.values, layer, input, &d_pre, n, grad, None);
                break;
            }
            let mut d_in = vec![T::zero(); n * layer.input];
            dense_backward(&self.values, layer, input, &d_pre, n, grad, Some(&mut d_in));
            d_act = d_in;
        }
        Ok(())
    }
}

/// Evaluates the field at a single point and direction.
pub fn field_forward(params: &FieldParams<f32>, x: [f64; 3], d: [f64; 3]) -> Result<FieldOutput> {
    if x.iter().chain(d.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("field query at {x:?} along {d:?}")));
    }
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!("direction must be unit length, |d| = {norm}")));
    }
    let p = [[x[0] as f32, x[1] as f32, x[2] as f32]];
    let dir = [[d[0] as f32, d[1] as f32, d[2] as f32]];
    let out = params.forward_batch(&p, &dir);
    Ok(FieldOutput {
        color: [out.rgb[0], out.rgb[1], out.rgb[2]],
        sigma: out.sigma[0],
        mask: out.mask.map(|m| m[0]),
    })
}

/// Parameter gradient of the scalar loss implied by `upstream` over a batch
/// of `(point, direction)` pairs.
pub fn field_backward<T: Scalar>(
    params: &FieldParams<T>,
    points: &[[T; 3]],
    dirs: &[[T; 3]],
    upstream: Upstream<'_, T>,
) -> Result<Vec<T>> {
    if points.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if points.len() != dirs.len() {
        return Err(Error::Shape(format!("{} points but {} directions", points.len(), dirs.len())));
    }
    let tape = params.forward_with_tape(points, dirs);
    let mut grad = vec![T::zero(); params.len()];
    params.backward(&tape, upstream, &mut grad)?;
    Ok(grad)
}

/// `out = x * W + b` for an `n x input` batch.
fn dense_forward<T: Scalar>(params: &[T], layer: &Dense, x: &[T], n: usize, out: &mut [T]) {
    let bias = &params[layer.bias..layer.bias + layer.output];
    for row in out.chunks_exact_mut(layer.output) {
        row.copy_from_slice(bias);
    }
    matmul(x, &params[layer.weight..layer.bias], out, n, layer.input, layer.output, T::one());
}

/// Accumulates weight/bias gradients and optionally writes `d_input`.
fn dense_backward<T: Scalar>(
    params: &[T],
    layer: &Dense,
    x: &[T],
    d_out: &[T],
    n: usize,
    grad: &mut [T],
    d_input: Option<&mut [T]>,
) {
    let (gw, gb) = grad[layer.weight..layer.bias + layer.output].split_at_mut(layer.input * layer.output);
    matmul_tn(x, d_out, gw, n, layer.input, layer.output);
    column_sums_into(d_out, layer.output, gb);
    if let Some(d_in) = d_input {
        let w = &params[layer.weight..layer.bias];
        matmul_nt(d_out, w, d_in, n, layer.output, layer.input, T::zero());
    }
}

fn dense_backward_accumulate<T: Scalar>(
    params: &[T],
    layer: &Dense,
    x: &[T],
    d_out: &[T],
    n: usize,
    grad: &mut [T],
    d_input: &mut [T],
) {
    let (gw, gb) = grad[layer.weight..layer.bias + layer.output].split_at_mut(layer.input * layer.output);
    matmul_tn(x, d_out, gw, n, layer.input, layer.output);
    column_sums_into(d_out, layer.output, gb);
    let w = &params[layer.weight..layer.bias];
    matmul_nt(d_out, w, d_input, n, layer.output, layer.input, T::one());
}

fn column_sums_into<T: Scalar>(m: &[T], cols: usize, out: &mut [T]) {
    for row in m.chunks_exact(cols) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
}

/// Output widths at or below this skip the packed gemm kernels, which
/// would mostly compute padding.
const NARROW: usize = 4;

/// Dot product with eight independent accumulators so it vectorizes.
#[inline(always)]
fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (xc, yc) = (x.chunks_exact(8), y.chunks_exact(8));
    let tail = xc.remainder().iter().zip(yc.remainder()).fold(T::zero(), |s, (&a, &b)| s + a * b);
    for (a, b) in xc.zip(yc) {
        for l in 0..8 {
            acc[l] = acc[l] + a[l] * b[l];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// `c = a * b + beta * c` with `a: m x k`, `b: k x n`.
fn matmul<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize, beta: T) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if n <= NARROW {
        let mut bt = vec![T::zero(); k * n];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        for (row, out) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
            for j in 0..n {
                let col = &bt[j * k..(j + 1) * k];
                let dot = dot(row, col);
                out[j] = if beta == T::zero() { dot } else { beta * out[j] + dot };
            }
        }
        return;
    }
    // SAFETY: bounds asserted above; c is a distinct mutable slice.
    unsafe {
        T::gemm(
            m, k, n, T::one(), a.as_ptr(), k as isize, 1, b.as_ptr(), n as isize, 1, beta, c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c += a^T * b` with `a: m x k`, `b: m x n`, `c: k x n`.
fn matmul_tn<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    assert!(a.len() >= m * k && b.len() >= m * n && c.len() >= k * n);
    if k == 0 || n == 0 {
        return;
    }
    if n <= NARROW {
        for (row, d) in a.chunks_exact(k).zip(b.chunks_exact(n)).take(m) {
            for (j, &dj) in d.iter().enumerate() {
                for (p, &x) in row.iter().enumerate() {
                    c[p * n + j] = c[p * n + j] + x * dj;
                }
            }
        }
        return;
    }
    // SAFETY: bounds asserted above; c is a distinct mutable slice.
    unsafe {
        T::gemm(
            k, m, n, T::one(), a.as_ptr(), 1, k as isize, b.as_ptr(), n as isize, 1, T::one(), c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `c = a * b^T + beta * c` with `a: m x n`, `b: k x n`, `c: m x k`.
fn matmul_nt<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, k: usize, beta: T) {
    assert!(a.len() >= m * n && b.len() >= k * n && c.len() >= m * k);
    if m == 0 || k == 0 {
        return;
    }
    if n <= NARROW {
        for (d, out) in a.chunks_exact(n).zip(c.chunks_exact_mut(k)).take(m) {
            for (p, o) in out.iter_mut().enumerate() {
                let row = &b[p * n..(p + 1) * n];
                let s = dot(d, row);
                *o = if beta == T::zero() { s } else { beta * *o + s };
            }
        }
        return;
    }
    // SAFETY: bounds asserted above; c is a distinct mutable slice.
    unsafe {
        T::gemm(
            m, n, k, T::one(), a.as_ptr(), n as isize, 1, b.as_ptr(), 1, n as isize, beta, c.as_mut_ptr(), k as isize, 1,
        );
    }
}
