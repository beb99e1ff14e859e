//! Network layers: forward, backward, parameter access.
//!
//! Layouts are channels-last and row-major throughout:
//! sequences are [batch, time, channels], images are
//! [batch, height, width, channels]. Convolutions run as im2col plus
//! a tight matrix product; the column matrix is rebuilt in backward
//! rather than cached, trading a little arithmetic for memory.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{gemm_a_bt, gemm_acc, gemm_at_b, Tensor};
use super::NnError;

/// Train vs eval: Dropout and BatchNorm behave differently.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub enum Layer {
    /// Code lookup table [vocab, dim]; input [B,T] of integer codes.
    Embedding { table: Tensor },
    /// Valid 1-D convolution, stride 1. weight [K, Cin, Cout].
    Conv1d { weight: Tensor, bias: Tensor },
    /// Zero-padded strided 2-D convolution. weight [K, K, Cin, Cout].
    Conv2d { weight: Tensor, bias: Tensor, stride: usize, padding: usize },
    /// Transposed 2-D convolution. weight [Cin, K, K, Cout].
    ConvTranspose2d { weight: Tensor, bias: Tensor, stride: usize, padding: usize },
    /// Affine map. weight [Din, Dout].
    Dense { weight: Tensor, bias: Tensor },
    /// Per-channel max over the time axis: [B,T,C] -> [B,C].
    MaxOverTime,
    LeakyRelu { alpha: f64 },
    Tanh,
    Sigmoid,
    /// Row-wise softmax over the last axis of [B,C].
    Softmax,
    /// Per-channel normalization over batch and spatial axes.
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        running_mean: Tensor,
        running_var: Tensor,
        eps: f64,
        momentum: f64,
    },
    /// Inverted dropout: scales kept activations by 1/(1-rate).
    Dropout { rate: f64 },
}

/// Per-layer state captured by a training forward pass, consumed by
/// backward.
pub struct Cache {
    pub input: Tensor,
    aux: Aux,
}

enum Aux {
    None,
    ArgMax(Vec<usize>),
    Mask(Vec<f64>),
    Output(Tensor),
    Bn { xhat: Vec<f64>, inv_std: Vec<f64>, new_mean: Vec<f64>, new_var: Vec<f64> },
}

fn shape_err(layer: &'static str, expected: impl Into<String>, got: &Tensor) -> NnError {
    NnError::Shape { layer, expected: expected.into(), got: got.shape.clone() }
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl Layer {
    pub fn embedding_init(vocab: usize, dim: usize, rng: &mut ChaCha8Rng) -> Layer {
        Layer::Embedding { table: Tensor::uniform(&[vocab, dim], 0.1, rng) }
    }

    pub fn conv1d_init(k: usize, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Layer {
        let limit = glorot(k * c_in, k * c_out);
        Layer::Conv1d {
            weight: Tensor::uniform(&[k, c_in, c_out], limit, rng),
            bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn conv2d_init(
        k: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Layer {
        let limit = glorot(k * k * c_in, k * k * c_out);
        Layer::Conv2d {
            weight: Tensor::uniform(&[k, k, c_in, c_out], limit, rng),
            bias: Tensor::zeros(&[c_out]),
            stride,
            padding,
        }
    }

    pub fn convt2d_init(
        c_in: usize,
        k: usize,
        c_out: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Layer {
        let limit = glorot(k * k * c_in, k * k * c_out);
        Layer::ConvTranspose2d {
            weight: Tensor::uniform(&[c_in, k, k, c_out], limit, rng),
            bias: Tensor::zeros(&[c_out]),
            stride,
            padding,
        }
    }

    pub fn dense_init(d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Layer {
        let limit = glorot(d_in, d_out);
        Layer::Dense {
            weight: Tensor::uniform(&[d_in, d_out], limit, rng),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn batchnorm(c: usize) -> Layer {
        Layer::BatchNorm {
            gamma: Tensor::filled(&[c], 1.0),
            beta: Tensor::zeros(&[c]),
            running_mean: Tensor::zeros(&[c]),
            running_var: Tensor::filled(&[c], 1.0),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    /// Trainable parameters, in the order backward reports gradients.
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Embedding { table } => vec![table],
            Layer::Conv1d { weight, bias }
            | Layer::Conv2d { weight, bias, .. }
            | Layer::ConvTranspose2d { weight, bias, .. }
            | Layer::Dense { weight, bias } => vec![weight, bias],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Embedding { table } => vec![table],
            Layer::Conv1d { weight, bias }
            | Layer::Conv2d { weight, bias, .. }
            | Layer::ConvTranspose2d { weight, bias, .. }
            | Layer::Dense { weight, bias } => vec![weight, bias],
            Layer::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
            _ => vec![],
        }
    }

    /// Everything a checkpoint must persist: trainable parameters plus
    /// BatchNorm running statistics.
    pub fn state(&self) -> Vec<&Tensor> {
        match self {
            Layer::BatchNorm { gamma, beta, running_mean, running_var, .. } => {
                vec![gamma, beta, running_mean, running_var]
            }
            other => other.params(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::BatchNorm { gamma, beta, running_mean, running_var, .. } => {
                vec![gamma, beta, running_mean, running_var]
            }
            other => other.params_mut(),
        }
    }

    /// Mode-dispatching forward. Train mode returns the cache needed
    /// for backward; the RNG is consumed only by Dropout.
    pub fn forward(
        &self,
        input: &Tensor,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Option<Cache>), NnError> {
        match mode {
            Mode::Train => self.forward_train(input, rng).map(|(t, c)| (t, Some(c))),
            Mode::Eval => self.forward_eval(input).map(|t| (t, None)),
        }
    }

    pub fn forward_eval(&self, input: &Tensor) -> Result<Tensor, NnError> {
        match self {
            Layer::Dropout { .. } => Ok(input.clone()),
            Layer::BatchNorm { gamma, beta, running_mean, running_var, eps, .. } => {
                let c = gamma.len();
                check_channels_last(input, c, "batchnorm")?;
                let mut out = input.clone();
                for (i, v) in out.data.iter_mut().enumerate() {
                    let ch = i % c;
                    *v = gamma.data[ch] * (*v - running_mean.data[ch])
                        / (running_var.data[ch] + eps).sqrt()
                        + beta.data[ch];
                }
                Ok(out)
            }
            _ => {
                // Stateless in eval vs train; reuse the train path. The
                // RNG is untouched for every kind but Dropout/BatchNorm,
                // which are handled above.
                let mut unused = rand_chacha::ChaCha8Rng::seed_from_u64(0);
                self.forward_train(input, &mut unused).map(|(t, _)| t)
            }
        }
    }

    pub fn forward_train(
        &self,
        input: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Cache), NnError> {
        let out = match self {
            Layer::Embedding { table } => {
                if input.rank() != 2 {
                    return Err(shape_err("embedding", "[B,T]", input));
                }
                let (v, e) = (table.shape[0], table.shape[1]);
                let (b, t) = (input.shape[0], input.shape[1]);
                let mut out = Tensor::zeros(&[b, t, e]);
                for (i, &code) in input.data.iter().enumerate() {
                    let idx = code.round();
                    if idx < 0.0 || idx >= v as f64 {
                        return Err(NnError::BadIndex { index: code, vocab: v });
                    }
                    let idx = idx as usize;
                    out.data[i * e..(i + 1) * e].copy_from_slice(&table.data[idx * e..(idx + 1) * e]);
                }
                (out, Aux::None)
            }
            Layer::Conv1d { weight, bias } => {
                let (k, c_in, c_out) = (weight.shape[0], weight.shape[1], weight.shape[2]);
                if input.rank() != 3 || input.shape[2] != c_in || input.shape[1] < k {
                    return Err(shape_err("conv1d", format!("[B,T>={k},{c_in}]"), input));
                }
                let (b, t) = (input.shape[0], input.shape[1]);
                let t_out = t - k + 1;
                let col = im2col_1d(input, k);
                let mut out = Tensor::zeros(&[b, t_out, c_out]);
                gemm_acc(b * t_out, k * c_in, c_out, &col, &weight.data, &mut out.data);
                add_bias(&mut out.data, &bias.data);
                (out, Aux::None)
            }
            Layer::Conv2d { weight, bias, stride, padding } => {
                let (k, c_in, c_out) = (weight.shape[0], weight.shape[2], weight.shape[3]);
                let (h_out, w_out) = conv2d_out_dims(input, k, c_in, *stride, *padding)?;
                let b = input.shape[0];
                let col = im2col_2d(input, k, *stride, *padding, h_out, w_out);
                let mut out = Tensor::zeros(&[b, h_out, w_out, c_out]);
                gemm_acc(b * h_out * w_out, k * k * c_in, c_out, &col, &weight.data, &mut out.data);
                add_bias(&mut out.data, &bias.data);
                (out, Aux::None)
            }
            Layer::ConvTranspose2d { weight, bias, stride, padding } => {
                let (c_in, k, c_out) = (weight.shape[0], weight.shape[1], weight.shape[3]);
                if input.rank() != 4 || input.shape[3] != c_in {
                    return Err(shape_err("conv_transpose2d", format!("[B,H,W,{c_in}]"), input));
                }
                let (b, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
                let h_out = (h - 1) * stride + k;
                let (h_out, w_out) = (
                    h_out.checked_sub(2 * padding).ok_or_else(|| {
                        shape_err("conv_transpose2d", "padding smaller than output", input)
                    })?,
                    ((w - 1) * stride + k)
                        .checked_sub(2 * padding)
                        .ok_or_else(|| shape_err("conv_transpose2d", "padding smaller than output", input))?,
                );
                let kkco = k * k * c_out;
                let mut cols = vec![0.0; b * h * w * kkco];
                gemm_acc(b * h * w, c_in, kkco, &input.data, &weight.data, &mut cols);
                let mut out = Tensor::zeros(&[b, h_out, w_out, c_out]);
                scatter_cols_t2d(&cols, b, h, w, k, *stride, *padding, h_out, w_out, c_out, &mut out.data);
                for (i, v) in out.data.iter_mut().enumerate() {
                    *v += bias.data[i % c_out];
                }
                (out, Aux::None)
            }
            Layer::Dense { weight, bias } => {
                let (d_in, d_out) = (weight.shape[0], weight.shape[1]);
                if input.rank() != 2 || input.shape[1] != d_in {
                    return Err(shape_err("dense", format!("[B,{d_in}]"), input));
                }
                let b = input.shape[0];
                let mut out = Tensor::zeros(&[b, d_out]);
                gemm_acc(b, d_in, d_out, &input.data, &weight.data, &mut out.data);
                add_bias(&mut out.data, &bias.data);
                (out, Aux::None)
            }
            Layer::MaxOverTime => {
                if input.rank() != 3 {
                    return Err(shape_err("max_over_time", "[B,T,C]", input));
                }
                let (b, t, c) = (input.shape[0], input.shape[1], input.shape[2]);
                let mut out = Tensor::zeros(&[b, c]);
                let mut arg = vec![0usize; b * c];
                for bi in 0..b {
                    for ci in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_t = 0;
                        for ti in 0..t {
                            let v = input.data[(bi * t + ti) * c + ci];
                            if v > best {
                                best = v;
                                best_t = ti;
                            }
                        }
                        out.data[bi * c + ci] = best;
                        arg[bi * c + ci] = best_t;
                    }
                }
                (out, Aux::ArgMax(arg))
            }
            Layer::LeakyRelu { alpha } => {
                let mut out = input.clone();
                for v in &mut out.data {
                    if *v < 0.0 {
                        *v *= alpha;
                    }
                }
                (out, Aux::None)
            }
            Layer::Tanh => {
                let mut out = input.clone();
                for v in &mut out.data {
                    *v = v.tanh();
                }
                let aux = Aux::Output(out.clone());
                (out, aux)
            }
            Layer::Sigmoid => {
                let mut out = input.clone();
                for v in &mut out.data {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
                let aux = Aux::Output(out.clone());
                (out, aux)
            }
            Layer::Softmax => {
                if input.rank() != 2 {
                    return Err(shape_err("softmax", "[B,C]", input));
                }
                let (b, c) = (input.shape[0], input.shape[1]);
                let mut out = input.clone();
                for bi in 0..b {
                    let row = &mut out.data[bi * c..(bi + 1) * c];
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        sum += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= sum;
                    }
                }
                let aux = Aux::Output(out.clone());
                (out, aux)
            }
            Layer::BatchNorm { gamma, beta, running_mean, running_var, eps, momentum } => {
                let c = gamma.len();
                check_channels_last(input, c, "batchnorm")?;
                let n = input.len() / c;
                let mut mean = vec![0.0; c];
                for (i, &v) in input.data.iter().enumerate() {
                    mean[i % c] += v;
                }
                for m in &mut mean {
                    *m /= n as f64;
                }
                let mut var = vec![0.0; c];
                for (i, &v) in input.data.iter().enumerate() {
                    let d = v - mean[i % c];
                    var[i % c] += d * d;
                }
                for v in &mut var {
                    *v /= n as f64;
                }
                let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
                let mut xhat = vec![0.0; input.len()];
                let mut out = input.clone();
                for (i, v) in out.data.iter_mut().enumerate() {
                    let ch = i % c;
                    let xh = (*v - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    *v = gamma.data[ch] * xh + beta.data[ch];
                }
                let new_mean: Vec<f64> = running_mean
                    .data
                    .iter()
                    .zip(&mean)
                    .map(|(&r, &m)| (1.0 - momentum) * r + momentum * m)
                    .collect();
                let new_var: Vec<f64> = running_var
                    .data
                    .iter()
                    .zip(&var)
                    .map(|(&r, &v)| (1.0 - momentum) * r + momentum * v)
                    .collect();
                (out, Aux::Bn { xhat, inv_std, new_mean, new_var })
            }
            Layer::Dropout { rate } => {
                let keep = 1.0 - rate;
                let mut mask = vec![0.0; input.len()];
                let mut out = input.clone();
                for (m, v) in mask.iter_mut().zip(&mut out.data) {
                    if rng.random::<f64>() >= *rate {
                        *m = 1.0 / keep;
                        *v *= *m;
                    } else {
                        *v = 0.0;
                    }
                }
                (out, Aux::Mask(mask))
            }
        };
        Ok((out.0, Cache { input: input.clone(), aux: out.1 }))
    }

    /// Gradients of the loss w.r.t. the layer input and parameters,
    /// given the cache of the matching forward pass.
    pub fn backward(
        &self,
        cache: &Cache,
        upstream: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>), NnError> {
        let input = &cache.input;
        match self {
            Layer::Embedding { table } => {
                let e = table.shape[1];
                let mut d_table = Tensor::zeros(&table.shape);
                for (i, &code) in input.data.iter().enumerate() {
                    let idx = code.round() as usize * e;
                    for j in 0..e {
                        d_table.data[idx + j] += upstream.data[i * e + j];
                    }
                }
                Ok((Tensor::zeros(&input.shape), vec![d_table]))
            }
            Layer::Conv1d { weight, .. } => {
                let (k, c_in, c_out) = (weight.shape[0], weight.shape[1], weight.shape[2]);
                let (b, t) = (input.shape[0], input.shape[1]);
                let t_out = t - k + 1;
                let rows = b * t_out;
                let col = im2col_1d(input, k);
                let mut d_w = Tensor::zeros(&weight.shape);
                gemm_at_b(rows, k * c_in, c_out, &col, &upstream.data, &mut d_w.data);
                let d_b = bias_grad(&upstream.data, c_out);
                let mut d_col = vec![0.0; rows * k * c_in];
                gemm_a_bt(rows, k * c_in, c_out, &upstream.data, &weight.data, &mut d_col);
                let mut d_in = Tensor::zeros(&input.shape);
                col2im_1d(&d_col, b, t, c_in, k, &mut d_in.data);
                Ok((d_in, vec![d_w, d_b]))
            }
            Layer::Conv2d { weight, stride, padding, .. } => {
                let (k, c_in, c_out) = (weight.shape[0], weight.shape[2], weight.shape[3]);
                let (h_out, w_out) = conv2d_out_dims(input, k, c_in, *stride, *padding)?;
                let b = input.shape[0];
                let rows = b * h_out * w_out;
                let col = im2col_2d(input, k, *stride, *padding, h_out, w_out);
                let mut d_w = Tensor::zeros(&weight.shape);
                gemm_at_b(rows, k * k * c_in, c_out, &col, &upstream.data, &mut d_w.data);
                let d_b = bias_grad(&upstream.data, c_out);
                let mut d_col = vec![0.0; rows * k * k * c_in];
                gemm_a_bt(rows, k * k * c_in, c_out, &upstream.data, &weight.data, &mut d_col);
                let mut d_in = Tensor::zeros(&input.shape);
                col2im_2d(&d_col, input, k, *stride, *padding, h_out, w_out, &mut d_in.data);
                Ok((d_in, vec![d_w, d_b]))
            }
            Layer::ConvTranspose2d { weight, stride, padding, .. } => {
                let (c_in, k, c_out) = (weight.shape[0], weight.shape[1], weight.shape[3]);
                let (b, h, w) = (input.shape[0], input.shape[1], input.shape[2]);
                let (h_out, w_out) = (upstream.shape[1], upstream.shape[2]);
                let kkco = k * k * c_out;
                // Reverse of the forward scatter: gather upstream into
                // column layout, then two matrix products.
                let mut d_cols = vec![0.0; b * h * w * kkco];
                gather_cols_t2d(
                    &upstream.data,
                    b,
                    h,
                    w,
                    k,
                    *stride,
                    *padding,
                    h_out,
                    w_out,
                    c_out,
                    &mut d_cols,
                );
                let mut d_in = Tensor::zeros(&input.shape);
                gemm_a_bt(b * h * w, c_in, kkco, &d_cols, &weight.data, &mut d_in.data);
                let mut d_w = Tensor::zeros(&weight.shape);
                gemm_at_b(b * h * w, c_in, kkco, &input.data, &d_cols, &mut d_w.data);
                let d_b = bias_grad(&upstream.data, c_out);
                Ok((d_in, vec![d_w, d_b]))
            }
            Layer::Dense { weight, .. } => {
                let (d_in_dim, d_out) = (weight.shape[0], weight.shape[1]);
                let b = input.shape[0];
                let mut d_w = Tensor::zeros(&weight.shape);
                gemm_at_b(b, d_in_dim, d_out, &input.data, &upstream.data, &mut d_w.data);
                let d_b = bias_grad(&upstream.data, d_out);
                let mut d_in = Tensor::zeros(&input.shape);
                gemm_a_bt(b, d_in_dim, d_out, &upstream.data, &weight.data, &mut d_in.data);
                Ok((d_in, vec![d_w, d_b]))
            }
            Layer::MaxOverTime => {
                let Aux::ArgMax(arg) = &cache.aux else {
                    return Err(NnError::MissingCache("max_over_time"));
                };
                let (b, t, c) = (input.shape[0], input.shape[1], input.shape[2]);
                let mut d_in = Tensor::zeros(&input.shape);
                for bi in 0..b {
                    for ci in 0..c {
                        let ti = arg[bi * c + ci];
                        d_in.data[(bi * t + ti) * c + ci] += upstream.data[bi * c + ci];
                    }
                }
                Ok((d_in, vec![]))
            }
            Layer::LeakyRelu { alpha } => {
                let mut d_in = upstream.clone();
                for (d, &x) in d_in.data.iter_mut().zip(&input.data) {
                    if x < 0.0 {
                        *d *= alpha;
                    }
                }
                Ok((d_in, vec![]))
            }
            Layer::Tanh => {
                let Aux::Output(y) = &cache.aux else {
                    return Err(NnError::MissingCache("tanh"));
                };
                let mut d_in = upstream.clone();
                for (d, &yv) in d_in.data.iter_mut().zip(&y.data) {
                    *d *= 1.0 - yv * yv;
                }
                Ok((d_in, vec![]))
            }
            Layer::Sigmoid => {
                let Aux::Output(y) = &cache.aux else {
                    return Err(NnError::MissingCache("sigmoid"));
                };
                let mut d_in = upstream.clone();
                for (d, &yv) in d_in.data.iter_mut().zip(&y.data) {
                    *d *= yv * (1.0 - yv);
                }
                Ok((d_in, vec![]))
            }
            Layer::Softmax => {
                let Aux::Output(y) = &cache.aux else {
                    return Err(NnError::MissingCache("softmax"));
                };
                let (b, c) = (y.shape[0], y.shape[1]);
                let mut d_in = Tensor::zeros(&input.shape);
                for bi in 0..b {
                    let yr = &y.data[bi * c..(bi + 1) * c];
                    let ur = &upstream.data[bi * c..(bi + 1) * c];
                    let dot: f64 = yr.iter().zip(ur).map(|(&yv, &uv)| yv * uv).sum();
                    for ci in 0..c {
                        d_in.data[bi * c + ci] = yr[ci] * (ur[ci] - dot);
                    }
                }
                Ok((d_in, vec![]))
            }
            Layer::BatchNorm { gamma, .. } => {
                let Aux::Bn { xhat, inv_std, .. } = &cache.aux else {
                    return Err(NnError::MissingCache("batchnorm"));
                };
                let c = gamma.len();
                let n = input.len() / c;
                let mut d_gamma = Tensor::zeros(&[c]);
                let mut d_beta = Tensor::zeros(&[c]);
                for (i, &u) in upstream.data.iter().enumerate() {
                    let ch = i % c;
                    d_gamma.data[ch] += u * xhat[i];
                    d_beta.data[ch] += u;
                }
                let mut d_in = Tensor::zeros(&input.shape);
                let nf = n as f64;
                for (i, d) in d_in.data.iter_mut().enumerate() {
                    let ch = i % c;
                    *d = gamma.data[ch] * inv_std[ch] / nf
                        * (nf * upstream.data[i]
                            - d_beta.data[ch]
                            - xhat[i] * d_gamma.data[ch]);
                }
                Ok((d_in, vec![d_gamma, d_beta]))
            }
            Layer::Dropout { .. } => {
                let Aux::Mask(mask) = &cache.aux else {
                    return Err(NnError::MissingCache("dropout"));
                };
                let mut d_in = upstream.clone();
                for (d, &m) in d_in.data.iter_mut().zip(mask) {
                    *d *= m;
                }
                Ok((d_in, vec![]))
            }
        }
    }

    /// Fold the batch statistics a training forward computed into the
    /// running statistics. No-op for every other kind.
    pub fn apply_bn_update(&mut self, cache: &Cache) {
        if let (
            Layer::BatchNorm { running_mean, running_var, .. },
            Aux::Bn { new_mean, new_var, .. },
        ) = (self, &cache.aux)
        {
            running_mean.data.copy_from_slice(new_mean);
            running_var.data.copy_from_slice(new_var);
        }
    }
}

fn check_channels_last(input: &Tensor, c: usize, layer: &'static str) -> Result<(), NnError> {
    if input.rank() < 2 || *input.shape.last().unwrap() != c {
        return Err(shape_err(layer, format!("[..., {c}]"), input));
    }
    Ok(())
}

fn add_bias(data: &mut [f64], bias: &[f64]) {
    let c = bias.len();
    for (i, v) in data.iter_mut().enumerate() {
        *v += bias[i % c];
    }
}

fn bias_grad(upstream: &[f64], c: usize) -> Tensor {
    let mut d_b = Tensor::zeros(&[c]);
    for (i, &u) in upstream.iter().enumerate() {
        d_b.data[i % c] += u;
    }
    d_b
}

fn im2col_1d(input: &Tensor, k: usize) -> Vec<f64> {
    let (b, t, c) = (input.shape[0], input.shape[1], input.shape[2]);
    let t_out = t - k + 1;
    let mut col = vec![0.0; b * t_out * k * c];
    let row_len = k * c;
    for bi in 0..b {
        let base = bi * t * c;
        for to in 0..t_out {
            let dst = (bi * t_out + to) * row_len;
            let src = base + to * c;
            col[dst..dst + row_len].copy_from_slice(&input.data[src..src + row_len]);
        }
    }
    col
}

fn col2im_1d(col: &[f64], b: usize, t: usize, c: usize, k: usize, out: &mut [f64]) {
    let t_out = t - k + 1;
    let row_len = k * c;
    for bi in 0..b {
        let base = bi * t * c;
        for to in 0..t_out {
            let src = (bi * t_out + to) * row_len;
            let dst = base + to * c;
            for j in 0..row_len {
                out[dst + j] += col[src + j];
            }
        }
    }
}

fn conv2d_out_dims(
    input: &Tensor,
    k: usize,
    c_in: usize,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize), NnError> {
    if input.rank() != 4 || input.shape[3] != c_in {
        return Err(shape_err("conv2d", format!("[B,H,W,{c_in}]"), input));
    }
    let (h, w) = (input.shape[1], input.shape[2]);
    if h + 2 * padding < k || w + 2 * padding < k {
        return Err(shape_err("conv2d", format!("spatial dims >= {k} after padding"), input));
    }
    Ok(((h + 2 * padding - k) / stride + 1, (w + 2 * padding - k) / stride + 1))
}

#[allow(clippy::too_many_arguments)]
fn im2col_2d(
    input: &Tensor,
    k: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
) -> Vec<f64> {
    let (b, h, w, c) = (input.shape[0], input.shape[1], input.shape[2], input.shape[3]);
    let row_len = k * k * c;
    let mut col = vec![0.0; b * h_out * w_out * row_len];
    for bi in 0..b {
        for ho in 0..h_out {
            for wo in 0..w_out {
                let row = ((bi * h_out + ho) * w_out + wo) * row_len;
                for kh in 0..k {
                    let hi = (ho * stride + kh) as isize - padding as isize;
                    if hi < 0 || hi >= h as isize {
                        continue;
                    }
                    for kw in 0..k {
                        let wi = (wo * stride + kw) as isize - padding as isize;
                        if wi < 0 || wi >= w as isize {
                            continue;
                        }
                        let src = ((bi * h + hi as usize) * w + wi as usize) * c;
                        let dst = row + (kh * k + kw) * c;
                        col[dst..dst + c].copy_from_slice(&input.data[src..src + c]);
                    }
                }
            }
        }
    }
    col
}

#[allow(clippy::too_many_arguments)]
fn col2im_2d(
    col: &[f64],
    input: &Tensor,
    k: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
    out: &mut [f64],
) {
    let (b, h, w, c) = (input.shape[0], input.shape[1], input.shape[2], input.shape[3]);
    let row_len = k * k * c;
    for bi in 0..b {
        for ho in 0..h_out {
            for wo in 0..w_out {
                let row = ((bi * h_out + ho) * w_out + wo) * row_len;
                for kh in 0..k {
                    let hi = (ho * stride + kh) as isize - padding as isize;
                    if hi < 0 || hi >= h as isize {
                        continue;
                    }
                    for kw in 0..k {
                        let wi = (wo * stride + kw) as isize - padding as isize;
                        if wi < 0 || wi >= w as isize {
                            continue;
                        }
                        let dst = ((bi * h + hi as usize) * w + wi as usize) * c;
                        let src = row + (kh * k + kw) * c;
                        for j in 0..c {
                            out[dst + j] += col[src + j];
                        }
                    }
                }
            }
        }
    }
}

/// Forward scatter for transposed conv: each input position's column
/// of k*k*c_out products lands at strided output positions.
#[allow(clippy::too_many_arguments)]
fn scatter_cols_t2d(
    cols: &[f64],
    b: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
    c_out: usize,
    out: &mut [f64],
) {
    let kkco = k * k * c_out;
    for bi in 0..b {
        for hi in 0..h {
            for wi in 0..w {
                let row = ((bi * h + hi) * w + wi) * kkco;
                for kh in 0..k {
                    let ho = (hi * stride + kh) as isize - padding as isize;
                    if ho < 0 || ho >= h_out as isize {
                        continue;
                    }
                    for kw in 0..k {
                        let wo = (wi * stride + kw) as isize - padding as isize;
                        if wo < 0 || wo >= w_out as isize {
                            continue;
                        }
                        let dst = ((bi * h_out + ho as usize) * w_out + wo as usize) * c_out;
                        let src = row + (kh * k + kw) * c_out;
                        for j in 0..c_out {
                            out[dst + j] += cols[src + j];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of `scatter_cols_t2d`: gather output-space gradients back
/// into column layout.
#[allow(clippy::too_many_arguments)]
fn gather_cols_t2d(
    upstream: &[f64],
    b: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    h_out: usize,
    w_out: usize,
    c_out: usize,
    cols: &mut [f64],
) {
    let kkco = k * k * c_out;
    for bi in 0..b {
        for hi in 0..h {
            for wi in 0..w {
                let row = ((bi * h + hi) * w + wi) * kkco;
                for kh in 0..k {
                    let ho = (hi * stride + kh) as isize - padding as isize;
                    if ho < 0 || ho >= h_out as isize {
                        continue;
                    }
                    for kw in 0..k {
                        let wo = (wi * stride + kw) as isize - padding as isize;
                        if wo < 0 || wo >= w_out as isize {
                            continue;
                        }
                        let src = ((bi * h_out + ho as usize) * w_out + wo as usize) * c_out;
                        let dst = row + (kh * k + kw) * c_out;
                        for j in 0..c_out {
                            cols[dst + j] += upstream[src + j];
                        }
                    }
                }
            }
        }
    }
}

use rand_chacha::rand_core::SeedableRng;

/// A stack of layers trained as one unit.
#[derive(Debug, Clone)]
pub struct Model {
    pub layers: Vec<Layer>,
}

impl Model {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward_eval(&self, input: &Tensor) -> Result<Tensor, NnError> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward_eval(&x)?;
        }
        Ok(x)
    }

    /// Training forward. BatchNorm running statistics are folded in
    /// immediately; the returned caches feed `backward`.
    pub fn forward_train(
        &mut self,
        input: &Tensor,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Vec<Cache>), NnError> {
        let mut x = input.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (out, cache) = layer.forward_train(&x, rng)?;
            layer.apply_bn_update(&cache);
            caches.push(cache);
            x = out;
        }
        Ok((x, caches))
    }

    /// Backward through the whole stack. Returns the input gradient
    /// and one gradient tensor per entry of `params_mut()`.
    pub fn backward(
        &self,
        caches: &[Cache],
        upstream: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>), NnError> {
        let mut grad = upstream.clone();
        let mut per_layer: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let (d_in, d_params) = layer.backward(cache, &grad)?;
            per_layer.push(d_params);
            grad = d_in;
        }
        per_layer.reverse();
        Ok((grad, per_layer.into_iter().flatten().collect()))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.params()).map(|t| t.len()).sum()
    }
}
