//! Model layers with hand-derived backward passes.
//!
//! Every layer caches what its backward pass needs during forward; calling
//! backward without a recorded forward is a state error.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tensor::Tensor4;
use crate::{Error, Result};

/// 2D convolution, square kernel, zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// [out_c][in_c][k][k]
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    cache: Option<Tensor4>,
}

impl Conv2d {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = (in_c * k * k) as f64;
        let scale = (1.0 / fan_in).sqrt();
        let weight = (0..out_c * in_c * k * k)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        let bias = vec![0.0; out_c];
        Conv2d {
            in_c,
            out_c,
            k,
            stride,
            pad,
            grad_weight: vec![0.0; out_c * in_c * k * k],
            grad_bias: vec![0.0; out_c],
            weight,
            bias,
            cache: None,
        }
    }

    fn out_dim(&self, d: usize) -> usize {
        (d + 2 * self.pad - self.k) / self.stride + 1
    }

    #[inline]
    fn w_at(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((oc * self.in_c + ic) * self.k + ky) * self.k + kx]
    }

    pub fn forward(&mut self, input: &Tensor4, _training: bool) -> Tensor4 {
        assert_eq!(input.c, self.in_c, "conv input channels");
        let (oh, ow) = (self.out_dim(input.h), self.out_dim(input.w));
        let mut out = Tensor4::zeros(input.n, self.out_c, oh, ow);
        let in_len = input.sample_len();
        let out_len = out.sample_len();
        let this = &*self;
        out.data
            .par_chunks_mut(out_len)
            .zip(input.data.par_chunks(in_len))
            .for_each(|(o, i)| this.forward_sample(i, o, input.h, input.w, oh, ow));
        self.cache = Some(input.clone());
        out
    }

    fn forward_sample(
        &self,
        input: &[f64],
        out: &mut [f64],
        ih: usize,
        iw: usize,
        oh: usize,
        ow: usize,
    ) {
        for oc in 0..self.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias[oc];
                    for ic in 0..self.in_c {
                        for ky in 0..self.k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy as usize >= ih {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix as usize >= iw {
                                    continue;
                                }
                                acc += self.w_at(oc, ic, ky, kx)
                                    * input[(ic * ih + iy as usize) * iw + ix as usize];
                            }
                        }
                    }
                    out[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let input = self
            .cache
            .take()
            .ok_or_else(|| Error::State("conv backward without forward".into()))?;
        let (ih, iw) = (input.h, input.w);
        let (oh, ow) = (grad_out.h, grad_out.w);
        let mut grad_in = Tensor4::zeros(input.n, self.in_c, ih, iw);
        let in_len = input.sample_len();
        let out_len = grad_out.sample_len();
        let this = &*self;

        // Per-sample weight/bias gradients, reduced in sample order so the
        // result is deterministic regardless of thread scheduling.
        let per_sample: Vec<(Vec<f64>, Vec<f64>)> = grad_out
            .data
            .par_chunks(out_len)
            .zip(input.data.par_chunks(in_len))
            .zip(grad_in.data.par_chunks_mut(in_len))
            .map(|((go, inp), gi)| {
                let mut gw = vec![0.0; this.weight.len()];
                let mut gb = vec![0.0; this.bias.len()];
                this.backward_sample(inp, go, gi, &mut gw, &mut gb, ih, iw, oh, ow);
                (gw, gb)
            })
            .collect();
        for (gw, gb) in per_sample {
            for (a, b) in self.grad_weight.iter_mut().zip(gw) {
                *a += b;
            }
            for (a, b) in self.grad_bias.iter_mut().zip(gb) {
                *a += b;
            }
        }
        Ok(grad_in)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_sample(
        &self,
        input: &[f64],
        grad_out: &[f64],
        grad_in: &mut [f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
        ih: usize,
        iw: usize,
        oh: usize,
        ow: usize,
    ) {
        for oc in 0..self.out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = grad_out[(oc * oh + oy) * ow + ox];
                    if g == 0.0 {
                        continue;
                    }
                    grad_b[oc] += g;
                    for ic in 0..self.in_c {
                        for ky in 0..self.k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy as usize >= ih {
                                continue;
                            }
                            for kx in 0..self.k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix as usize >= iw {
                                    continue;
                                }
                                let ii = (ic * ih + iy as usize) * iw + ix as usize;
                                let wi = ((oc * self.in_c + ic) * self.k + ky) * self.k + kx;
                                grad_w[wi] += g * input[ii];
                                grad_in[ii] += g * self.weight[wi];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Parametric rectifier with one learnable negative slope per channel.
#[derive(Debug, Clone)]
pub struct PRelu {
    pub slope: Vec<f64>,
    pub grad_slope: Vec<f64>,
    cache: Option<Tensor4>,
}

impl PRelu {
    pub fn new(channels: usize, init: f64) -> Self {
        PRelu {
            slope: vec![init; channels],
            grad_slope: vec![0.0; channels],
            cache: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor4, _training: bool) -> Tensor4 {
        let mut out = input.clone();
        let plane = input.h * input.w;
        for ni in 0..input.n {
            for ci in 0..input.c {
                let s = self.slope[ci];
                let base = (ni * input.c + ci) * plane;
                for v in &mut out.data[base..base + plane] {
                    if *v < 0.0 {
                        *v *= s;
                    }
                }
            }
        }
        self.cache = Some(input.clone());
        out
    }

    /// Signs of the last forward's inputs (true = negative side of the kink).
    /// Used by gradient checks to detect non-differentiable crossings.
    pub fn cached_signs(&self) -> Option<Vec<bool>> {
        self.cache
            .as_ref()
            .map(|t| t.data.iter().map(|v| *v < 0.0).collect())
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let input = self
            .cache
            .take()
            .ok_or_else(|| Error::State("prelu backward without forward".into()))?;
        let mut grad_in = grad_out.clone();
        let plane = input.h * input.w;
        for ni in 0..input.n {
            for ci in 0..input.c {
                let s = self.slope[ci];
                let base = (ni * input.c + ci) * plane;
                let mut gs = 0.0;
                for j in base..base + plane {
                    let x = input.data[j];
                    if x < 0.0 {
                        gs += grad_out.data[j] * x;
                        grad_in.data[j] *= s;
                    }
                }
                self.grad_slope[ci] += gs;
            }
        }
        Ok(grad_in)
    }
}

/// Inverted dropout. The mask can be frozen for finite-difference checks.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    pub frozen: bool,
    mask: Option<Vec<f64>>,
    active: bool,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        Dropout {
            rate,
            frozen: false,
            mask: None,
            active: false,
        }
    }

    pub fn forward(&mut self, input: &Tensor4, training: bool, rng: &mut ChaCha8Rng) -> Tensor4 {
        self.active = training && self.rate > 0.0;
        if !self.active {
            return input.clone();
        }
        let reuse = self.frozen
            && self
                .mask
                .as_ref()
                .is_some_and(|m| m.len() == input.data.len());
        if !reuse {
            let keep = 1.0 - self.rate;
            self.mask = Some(
                (0..input.data.len())
                    .map(|_| {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            );
        }
        let mask = self.mask.as_ref().unwrap();
        let mut out = input.clone();
        for (v, m) in out.data.iter_mut().zip(mask) {
            *v *= m;
        }
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        if !self.active {
            return Ok(grad_out.clone());
        }
        let mask = self
            .mask
            .as_ref()
            .ok_or_else(|| Error::State("dropout backward without forward".into()))?;
        let mut grad_in = grad_out.clone();
        for (v, m) in grad_in.data.iter_mut().zip(mask) {
            *v *= m;
        }
        Ok(grad_in)
    }
}

/// Nearest-neighbor 2x upsampling.
#[derive(Debug, Clone, Default)]
pub struct Upsample2x {
    in_shape: Option<(usize, usize, usize, usize)>,
}

impl Upsample2x {
    pub fn forward(&mut self, input: &Tensor4) -> Tensor4 {
        let mut out = Tensor4::zeros(input.n, input.c, input.h * 2, input.w * 2);
        for ni in 0..input.n {
            for ci in 0..input.c {
                for y in 0..out.h {
                    for x in 0..out.w {
                        out.set(ni, ci, y, x, input.get(ni, ci, y / 2, x / 2));
                    }
                }
            }
        }
        self.in_shape = Some((input.n, input.c, input.h, input.w));
        out
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let (n, c, h, w) = self
            .in_shape
            .take()
            .ok_or_else(|| Error::State("upsample backward without forward".into()))?;
        let mut grad_in = Tensor4::zeros(n, c, h, w);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..grad_out.h {
                    for x in 0..grad_out.w {
                        let i = grad_in.index(ni, ci, y / 2, x / 2);
                        grad_in.data[i] += grad_out.get(ni, ci, y, x);
                    }
                }
            }
        }
        Ok(grad_in)
    }
}

/// Callback receiving each (name, values, grads) parameter array.
pub type ParamVisitor<'a> = dyn FnMut(String, &mut Vec<f64>, &mut Vec<f64>) + 'a;

/// One model layer; the stack is a plain sequence of these.
#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    PRelu(PRelu),
    Dropout(Dropout),
    Upsample(Upsample2x),
}

impl Layer {
    pub fn forward(&mut self, input: &Tensor4, training: bool, rng: &mut ChaCha8Rng) -> Tensor4 {
        match self {
            Layer::Conv(l) => l.forward(input, training),
            Layer::PRelu(l) => l.forward(input, training),
            Layer::Dropout(l) => l.forward(input, training, rng),
            Layer::Upsample(l) => l.forward(input),
        }
    }

    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        match self {
            Layer::Conv(l) => l.backward(grad_out),
            Layer::PRelu(l) => l.backward(grad_out),
            Layer::Dropout(l) => l.backward(grad_out),
            Layer::Upsample(l) => l.backward(grad_out),
        }
    }

    /// Visit every (name, values, grads) parameter array of this layer.
    pub fn visit_params(&mut self, prefix: &str, f: &mut ParamVisitor<'_>) {
        match self {
            Layer::Conv(l) => {
                f(
                    format!("{prefix}.weight"),
                    &mut l.weight,
                    &mut l.grad_weight,
                );
                f(format!("{prefix}.bias"), &mut l.bias, &mut l.grad_bias);
            }
            Layer::PRelu(l) => {
                f(format!("{prefix}.slope"), &mut l.slope, &mut l.grad_slope);
            }
            Layer::Dropout(_) | Layer::Upsample(_) => {}
        }
    }

    pub fn set_dropout_frozen(&mut self, frozen: bool) {
        if let Layer::Dropout(d) = self {
            d.frozen = frozen;
            if !frozen {
                d.mask = None;
            }
        }
    }
}
