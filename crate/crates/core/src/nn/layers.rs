use super::{gemm, Act, Grads, Init, MatMut, MatRef, ParamBuilder, ParamId, ParamSet, Scalar};
use crate::error::{Error, Result};

/// Interleaved `[sin(p w_0), cos(p w_0), sin(p w_1), ...]` with
/// `w_i = 10000^(-i / (dim / 2))`.
pub fn sinusoidal_embedding(position: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Config(format!(
            "embedding dimension must be even and positive, got {dim}"
        )));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        let a = position * freq;
        out.push(a.sin());
        out.push(a.cos());
    }
    Ok(out)
}

/// `[dim, len]` table of positional encodings for positions `0..len`.
pub fn positional_table<T: Scalar>(dim: usize, len: usize) -> Result<Vec<T>> {
    let mut table = vec![T::zero(); dim * len];
    for p in 0..len {
        let e = sinusoidal_embedding(p as f64, dim)?;
        for (d, v) in e.into_iter().enumerate() {
            table[d * len + p] = T::of(v);
        }
    }
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub din: usize,
    pub dout: usize,
}

#[derive(Debug, Clone, Default)]
pub struct LinearCache<T> {
    input: Vec<T>,
    n: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<T>,
        name: &str,
        din: usize,
        dout: usize,
        bias: bool,
    ) -> Self {
        let bound = 1.0 / (din as f64).sqrt();
        let w = pb.add(format!("{name}.weight"), &[dout, din], Init::Uniform(bound));
        let b = bias.then(|| pb.add(format!("{name}.bias"), &[dout], Init::Uniform(bound)));
        Self { w, b, din, dout }
    }

    /// Bias-free square map initialized to the identity.
    pub fn identity<T: Scalar>(pb: &mut ParamBuilder<T>, name: &str, dim: usize) -> Self {
        let w = pb.add(format!("{name}.weight"), &[dim, dim], Init::Identity);
        Self {
            w,
            b: None,
            din: dim,
            dout: dim,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Act<T>,
        cache: Option<&mut LinearCache<T>>,
    ) -> Result<Act<T>> {
        if x.c != self.din {
            return Err(Error::Shape(format!(
                "linear expects {} input channels, got {}",
                self.din, x.c
            )));
        }
        let n = x.cols();
        let mut y = Act::zeros(self.dout, x.b, x.l);
        gemm(
            T::one(),
            MatRef::contiguous(ps.get(self.w), self.dout, self.din),
            x.mat(),
            T::zero(),
            MatMut::contiguous(&mut y.data, self.dout, n),
        );
        if let Some(b) = self.b {
            add_row_bias(&mut y.data, ps.get(b), n);
        }
        if let Some(c) = cache {
            c.input = x.data.clone();
            c.n = n;
        }
        Ok(y)
    }

    pub fn backward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        cache: &LinearCache<T>,
        dy: &Act<T>,
        grads: &mut Grads<T>,
    ) -> Act<T> {
        let n = cache.n;
        gemm(
            T::one(),
            dy.mat(),
            MatRef::contiguous(&cache.input, self.din, n).t(),
            T::one(),
            MatMut::contiguous(grads.get_mut(self.w), self.dout, self.din),
        );
        if let Some(b) = self.b {
            accumulate_row_sums(grads.get_mut(b), &dy.data, n);
        }
        let mut dx = Act::zeros(self.din, dy.b, dy.l);
        gemm(
            T::one(),
            MatRef::contiguous(ps.get(self.w), self.dout, self.din).t(),
            dy.mat(),
            T::zero(),
            MatMut::contiguous(&mut dx.data, self.din, n),
        );
        dx
    }
}

fn add_row_bias<T: Scalar>(y: &mut [T], bias: &[T], n: usize) {
    for (row, &b) in y.chunks_exact_mut(n).zip(bias) {
        for v in row {
            *v += b;
        }
    }
}

fn accumulate_row_sums<T: Scalar>(g: &mut [T], dy: &[T], n: usize) {
    for (gb, row) in g.iter_mut().zip(dy.chunks_exact(n)) {
        *gb += row.iter().copied().sum::<T>();
    }
}

/// 1D convolution (cross-correlation) with zero padding, lowered to
/// im2col plus one matrix product.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ConvCache<T> {
    cols: Vec<T>,
    batch: usize,
    lin: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        zero_init: bool,
    ) -> Self {
        let init = if zero_init {
            Init::Zeros
        } else {
            Init::Uniform(1.0 / ((cin * kernel) as f64).sqrt())
        };
        let w = pb.add(format!("{name}.weight"), &[cout, cin, kernel], init);
        let b = pb.add(format!("{name}.bias"), &[cout], init);
        Self {
            w,
            b,
            cin,
            cout,
            kernel,
            stride,
            pad,
        }
    }

    /// Kernel 3, stride 1, "same" padding.
    pub fn same<T: Scalar>(pb: &mut ParamBuilder<T>, name: &str, cin: usize, cout: usize) -> Self {
        Self::new(pb, name, cin, cout, 3, 1, 1, false)
    }

    pub fn pointwise<T: Scalar>(
        pb: &mut ParamBuilder<T>,
        name: &str,
        cin: usize,
        cout: usize,
        zero_init: bool,
    ) -> Self {
        Self::new(pb, name, cin, cout, 1, 1, 0, zero_init)
    }

    pub fn out_len(&self, lin: usize) -> usize {
        (lin + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn im2col<T: Scalar>(&self, x: &Act<T>, lout: usize) -> Vec<T> {
        let n = x.b * lout;
        let mut cols = vec![T::zero(); self.cin * self.kernel * n];
        for ci in 0..self.cin {
            for j in 0..self.kernel {
                let dst_row = &mut cols[(ci * self.kernel + j) * n..(ci * self.kernel + j + 1) * n];
                for b in 0..x.b {
                    let src = x.row(ci, b);
                    let dst = &mut dst_row[b * lout..(b + 1) * lout];
                    for (o, d) in dst.iter_mut().enumerate() {
                        let pos = (o * self.stride + j) as isize - self.pad as isize;
                        if pos >= 0 && (pos as usize) < x.l {
                            *d = src[pos as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Act<T>,
        cache: Option<&mut ConvCache<T>>,
    ) -> Result<Act<T>> {
        if x.c != self.cin {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {}",
                self.cin, x.c
            )));
        }
        if x.l + 2 * self.pad < self.kernel {
            return Err(Error::Shape(format!(
                "conv input length {} shorter than kernel {}",
                x.l, self.kernel
            )));
        }
        let lout = self.out_len(x.l);
        let n = x.b * lout;
        let pointwise = self.kernel == 1 && self.stride == 1 && self.pad == 0;
        let owned;
        let cols: &[T] = if pointwise {
            &x.data
        } else {
            owned = self.im2col(x, lout);
            &owned
        };
        let mut y = Act::zeros(self.cout, x.b, lout);
        gemm(
            T::one(),
            MatRef::contiguous(ps.get(self.w), self.cout, self.cin * self.kernel),
            MatRef::contiguous(cols, self.cin * self.kernel, n),
            T::zero(),
            MatMut::contiguous(&mut y.data, self.cout, n),
        );
        add_row_bias(&mut y.data, ps.get(self.b), n);
        if let Some(c) = cache {
            c.cols = cols.to_vec();
            c.batch = x.b;
            c.lin = x.l;
        }
        Ok(y)
    }

    pub fn backward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        cache: &ConvCache<T>,
        dy: &Act<T>,
        grads: &mut Grads<T>,
    ) -> Act<T> {
        let lout = dy.l;
        let n = cache.batch * lout;
        let ck = self.cin * self.kernel;
        gemm(
            T::one(),
            dy.mat(),
            MatRef::contiguous(&cache.cols, ck, n).t(),
            T::one(),
            MatMut::contiguous(grads.get_mut(self.w), self.cout, ck),
        );
        accumulate_row_sums(grads.get_mut(self.b), &dy.data, n);
        let mut dcols = vec![T::zero(); ck * n];
        gemm(
            T::one(),
            MatRef::contiguous(ps.get(self.w), self.cout, ck).t(),
            dy.mat(),
            T::zero(),
            MatMut::contiguous(&mut dcols, ck, n),
        );
        if self.kernel == 1 && self.stride == 1 && self.pad == 0 {
            return Act::from_vec(self.cin, cache.batch, cache.lin, dcols);
        }
        let mut dx = Act::zeros(self.cin, cache.batch, cache.lin);
        for ci in 0..self.cin {
            for j in 0..self.kernel {
                let src_row = &dcols[(ci * self.kernel + j) * n..(ci * self.kernel + j + 1) * n];
                for b in 0..cache.batch {
                    let src = &src_row[b * lout..(b + 1) * lout];
                    let dst = dx.row_mut(ci, b);
                    for (o, &v) in src.iter().enumerate() {
                        let pos = (o * self.stride + j) as isize - self.pad as isize;
                        if pos >= 0 && (pos as usize) < cache.lin {
                            dst[pos as usize] += v;
                        }
                    }
                }
            }
        }
        dx
    }
}

#[derive(Debug, Clone, Default)]
pub struct NormCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

/// Group normalization over `(channels in group, length)` per sample.
#[derive(Debug, Clone)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    pub groups: usize,
    pub eps: f64,
}

impl GroupNorm {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<T>, name: &str, channels: usize, groups: usize) -> Self {
        assert!(groups > 0 && channels % groups == 0, "groups must divide channels");
        let gamma = pb.add(format!("{name}.weight"), &[channels], Init::Ones);
        let beta = pb.add(format!("{name}.bias"), &[channels], Init::Zeros);
        Self {
            gamma,
            beta,
            channels,
            groups,
            eps: 1e-5,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Act<T>,
        cache: Option<&mut NormCache<T>>,
    ) -> Result<Act<T>> {
        if x.c != self.channels {
            return Err(Error::Shape(format!(
                "group norm expects {} channels, got {}",
                self.channels, x.c
            )));
        }
        let cpg = self.channels / self.groups;
        let count = (cpg * x.l) as f64;
        let gamma = ps.get(self.gamma);
        let beta = ps.get(self.beta);
        let mut y = Act::zeros(x.c, x.b, x.l);
        let mut xhat = vec![T::zero(); x.data.len()];
        let mut rstds = vec![T::zero(); x.b * self.groups];
        for b in 0..x.b {
            for g in 0..self.groups {
                let chans = g * cpg..(g + 1) * cpg;
                let mut sum = 0.0;
                for c in chans.clone() {
                    sum += x.row(c, b).iter().map(|v| v.f64()).sum::<f64>();
                }
                let mean = sum / count;
                let mut var = 0.0;
                for c in chans.clone() {
                    var += x.row(c, b).iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>();
                }
                let rstd = 1.0 / (var / count + self.eps).sqrt();
                rstds[b * self.groups + g] = T::of(rstd);
                let (mean_t, rstd_t) = (T::of(mean), T::of(rstd));
                for c in chans {
                    let start = (c * x.b + b) * x.l;
                    for i in start..start + x.l {
                        let h = (x.data[i] - mean_t) * rstd_t;
                        xhat[i] = h;
                        y.data[i] = h * gamma[c] + beta[c];
                    }
                }
            }
        }
        if let Some(cache) = cache {
            cache.xhat = xhat;
            cache.rstd = rstds;
        }
        Ok(y)
    }

    pub fn backward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        cache: &NormCache<T>,
        dy: &Act<T>,
        grads: &mut Grads<T>,
    ) -> Act<T> {
        let (cc, bb, ll) = dy.shape();
        let cpg = self.channels / self.groups;
        let count = T::of((cpg * ll) as f64);
        let gamma = ps.get(self.gamma);
        {
            let gg = grads.get_mut(self.gamma);
            for c in 0..cc {
                for b in 0..bb {
                    let start = (c * bb + b) * ll;
                    gg[c] += (start..start + ll)
                        .map(|i| dy.data[i] * cache.xhat[i])
                        .sum::<T>();
                }
            }
        }
        {
            let gb = grads.get_mut(self.beta);
            for c in 0..cc {
                for b in 0..bb {
                    gb[c] += dy.row(c, b).iter().copied().sum::<T>();
                }
            }
        }
        let mut dx = Act::zeros(cc, bb, ll);
        for b in 0..bb {
            for g in 0..self.groups {
                let chans = g * cpg..(g + 1) * cpg;
                let mut m1 = T::zero();
                let mut m2 = T::zero();
                for c in chans.clone() {
                    let start = (c * bb + b) * ll;
                    for i in start..start + ll {
                        let d = dy.data[i] * gamma[c];
                        m1 += d;
                        m2 += d * cache.xhat[i];
                    }
                }
                m1 = m1 / count;
                m2 = m2 / count;
                let rstd = cache.rstd[b * self.groups + g];
                for c in chans {
                    let start = (c * bb + b) * ll;
                    for i in start..start + ll {
                        let d = dy.data[i] * gamma[c];
                        dx.data[i] = rstd * (d - m1 - cache.xhat[i] * m2);
                    }
                }
            }
        }
        dx
    }
}

/// Layer normalization across channels at every `(sample, position)`.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Scalar>(pb: &mut ParamBuilder<T>, name: &str, channels: usize) -> Self {
        let gamma = pb.add(format!("{name}.weight"), &[channels], Init::Ones);
        let beta = pb.add(format!("{name}.bias"), &[channels], Init::Zeros);
        Self {
            gamma,
            beta,
            channels,
            eps: 1e-5,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Act<T>,
        cache: Option<&mut NormCache<T>>,
    ) -> Result<Act<T>> {
        if x.c != self.channels {
            return Err(Error::Shape(format!(
                "layer norm expects {} channels, got {}",
                self.channels, x.c
            )));
        }
        let n = x.cols();
        let c = x.c as f64;
        let mut mean = vec![0.0f64; n];
        let mut var = vec![0.0f64; n];
        for row in x.data.chunks_exact(n) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= c);
        for row in x.data.chunks_exact(n) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v.f64() - m).powi(2);
            }
        }
        let rstd: Vec<T> = var
            .iter()
            .map(|s| T::of(1.0 / (s / c + self.eps).sqrt()))
            .collect();
        let mean: Vec<T> = mean.into_iter().map(T::of).collect();
        let gamma = ps.get(self.gamma);
        let beta = ps.get(self.beta);
        let mut xhat = vec![T::zero(); x.data.len()];
        let mut y = Act::zeros(x.c, x.b, x.l);
        for ch in 0..x.c {
            for j in 0..n {
                let i = ch * n + j;
                let h = (x.data[i] - mean[j]) * rstd[j];
                xhat[i] = h;
                y.data[i] = h * gamma[ch] + beta[ch];
            }
        }
        if let Some(cache) = cache {
            cache.xhat = xhat;
            cache.rstd = rstd;
        }
        Ok(y)
    }

    pub fn backward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        cache: &NormCache<T>,
        dy: &Act<T>,
        grads: &mut Grads<T>,
    ) -> Act<T> {
        let n = dy.cols();
        let gamma = ps.get(self.gamma);
        {
            let gg = grads.get_mut(self.gamma);
            for ch in 0..dy.c {
                gg[ch] += (0..n)
                    .map(|j| dy.data[ch * n + j] * cache.xhat[ch * n + j])
                    .sum::<T>();
            }
        }
        accumulate_row_sums(grads.get_mut(self.beta), &dy.data, n);
        let mut m1 = vec![T::zero(); n];
        let mut m2 = vec![T::zero(); n];
        for ch in 0..dy.c {
            for j in 0..n {
                let d = dy.data[ch * n + j] * gamma[ch];
                m1[j] += d;
                m2[j] += d * cache.xhat[ch * n + j];
            }
        }
        let c = T::of(dy.c as f64);
        let mut dx = Act::zeros(dy.c, dy.b, dy.l);
        for ch in 0..dy.c {
            for j in 0..n {
                let i = ch * n + j;
                let d = dy.data[i] * gamma[ch];
                dx.data[i] = cache.rstd[j] * (d - m1[j] / c - cache.xhat[i] * m2[j] / c);
            }
        }
        dx
    }
}

pub fn silu<T: Scalar>(x: &Act<T>) -> Act<T> {
    let data = x
        .data
        .iter()
        .map(|&v| v / (T::one() + (-v).exp()))
        .collect();
    Act::from_vec(x.c, x.b, x.l, data)
}

/// Gradient of SiLU given its input `x`.
pub fn silu_backward<T: Scalar>(x: &Act<T>, dy: &Act<T>) -> Act<T> {
    let data = x
        .data
        .iter()
        .zip(&dy.data)
        .map(|(&v, &d)| {
            let s = T::one() / (T::one() + (-v).exp());
            d * s * (T::one() + v * (T::one() - s))
        })
        .collect();
    Act::from_vec(x.c, x.b, x.l, data)
}

/// Adds `e[c, b]` (an activation with `l == 1`) at every position of `h`.
pub fn add_channel_bias<T: Scalar>(h: &mut Act<T>, e: &Act<T>) {
    assert_eq!((h.c, h.b, 1), (e.c, e.b, e.l), "channel bias shape");
    for c in 0..h.c {
        for b in 0..h.b {
            let v = e.data[c * e.b + b];
            h.row_mut(c, b).iter_mut().for_each(|x| *x += v);
        }
    }
}

pub fn sum_over_length<T: Scalar>(dh: &Act<T>) -> Act<T> {
    let mut out = Act::zeros(dh.c, dh.b, 1);
    for c in 0..dh.c {
        for b in 0..dh.b {
            out.data[c * dh.b + b] = dh.row(c, b).iter().copied().sum();
        }
    }
    out
}

/// Nearest-neighbour upsampling by two along the length axis.
pub fn upsample2<T: Scalar>(x: &Act<T>) -> Act<T> {
    let mut y = Act::zeros(x.c, x.b, 2 * x.l);
    for (src, dst) in x.data.chunks_exact(x.l).zip(y.data.chunks_exact_mut(2 * x.l)) {
        for (i, &v) in src.iter().enumerate() {
            dst[2 * i] = v;
            dst[2 * i + 1] = v;
        }
    }
    y
}

pub fn upsample2_backward<T: Scalar>(dy: &Act<T>) -> Act<T> {
    let l = dy.l / 2;
    let mut dx = Act::zeros(dy.c, dy.b, l);
    for (src, dst) in dy.data.chunks_exact(dy.l).zip(dx.data.chunks_exact_mut(l)) {
        for (i, d) in dst.iter_mut().enumerate() {
            *d = src[2 * i] + src[2 * i + 1];
        }
    }
    dx
}

pub fn concat_channels<T: Scalar>(a: &Act<T>, b: &Act<T>) -> Result<Act<T>> {
    if (a.b, a.l) != (b.b, b.l) {
        return Err(Error::Shape(format!(
            "cannot concatenate [{}, {}, {}] with [{}, {}, {}]",
            a.c, a.b, a.l, b.c, b.b, b.l
        )));
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Ok(Act::from_vec(a.c + b.c, a.b, a.l, data))
}

pub fn split_channels<T: Scalar>(d: &Act<T>, first: usize) -> (Act<T>, Act<T>) {
    let cut = first * d.b * d.l;
    (
        Act::from_vec(first, d.b, d.l, d.data[..cut].to_vec()),
        Act::from_vec(d.c - first, d.b, d.l, d.data[cut..].to_vec()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_at_zero_is_sin0_cos1() {
        let e = sinusoidal_embedding(0.0, 8).unwrap();
        for pair in e.chunks(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
        assert!(sinusoidal_embedding(1.0, 7).is_err());
    }

    #[test]
    fn conv_matches_direct_loop() {
        let mut pb = ParamBuilder::<f64>::new(1);
        let conv = Conv1d::new(&mut pb, "c", 2, 3, 3, 2, 1, false);
        let ps = pb.finish();
        let x = Act::from_vec(2, 2, 7, (0..28).map(|i| (i as f64 * 0.37).sin()).collect());
        let y = conv.forward(&ps, &x, None).unwrap();
        assert_eq!(y.l, 4);
        let w = ps.get(conv.w);
        for o in 0..3 {
            for b in 0..2 {
                for p in 0..4 {
                    let mut acc = ps.get(conv.b)[o];
                    for ci in 0..2 {
                        for j in 0..3 {
                            let pos = (p * 2 + j) as isize - 1;
                            if (0..7).contains(&pos) {
                                acc += w[(o * 2 + ci) * 3 + j] * x.row(ci, b)[pos as usize];
                            }
                        }
                    }
                    assert!((y.row(o, b)[p] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn group_norm_output_is_standardized() {
        let mut pb = ParamBuilder::<f64>::new(0);
        let gn = GroupNorm::new(&mut pb, "n", 4, 2);
        let ps = pb.finish();
        let x = Act::from_vec(4, 1, 5, (0..20).map(|i| (i * i) as f64).collect());
        let y = gn.forward(&ps, &x, None).unwrap();
        let g0: Vec<f64> = y.data[..10].to_vec();
        let mean = g0.iter().sum::<f64>() / 10.0;
        let var = g0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 10.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_constant_input_is_finite() {
        let mut pb = ParamBuilder::<f32>::new(0);
        let ln = LayerNorm::new(&mut pb, "ln", 6);
        let ps = pb.finish();
        let y = ln.forward(&ps, &Act::zeros(6, 2, 3), None).unwrap();
        assert!(y.is_finite());
        assert!(y.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn upsample_round_trip_sums() {
        let x = Act::from_vec(1, 1, 3, vec![1.0f64, 2.0, 3.0]);
        let y = upsample2(&x);
        assert_eq!(y.data, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        assert_eq!(upsample2_backward(&y).data, vec![2.0, 4.0, 6.0]);
    }
}
