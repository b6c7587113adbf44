use super::{gemm, Act, Grads, Linear, LinearCache, MatMut, MatRef, ParamBuilder, ParamSet, Scalar};
use crate::error::{Error, Result};

/// Multi-head scaled dot-product attention.
///
/// Queries come from `f(h)` and keys/values from `g(c)` / `v(c)`; each of
/// `f`, `g`, `v` is a bias-free linear map into the shared inner width and
/// is followed by its own bias-free `W_Q`, `W_K`, `W_V` projection. The
/// second projections start at the identity. Heads are concatenated and
/// passed through a biased output projection.
#[derive(Debug, Clone)]
pub struct Attention {
    f: Linear,
    wq: Linear,
    g: Linear,
    wk: Linear,
    v: Linear,
    wv: Linear,
    out: Linear,
    pub heads: usize,
    pub inner: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AttentionCache<T> {
    f: LinearCache<T>,
    wq: LinearCache<T>,
    g: LinearCache<T>,
    wk: LinearCache<T>,
    v: LinearCache<T>,
    wv: LinearCache<T>,
    out: LinearCache<T>,
    q: Option<Act<T>>,
    k: Option<Act<T>>,
    val: Option<Act<T>>,
    /// Row-stochastic weights, `[B, heads, Lq, Lk]`.
    pub probs: Vec<T>,
    /// Scaled pre-softmax scores, filled only when `keep_logits` is set.
    pub logits: Vec<T>,
    pub keep_logits: bool,
    /// Concatenated head outputs before the output projection.
    pub attended: Option<Act<T>>,
}

impl Attention {
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<T>,
        name: &str,
        query_dim: usize,
        key_dim: usize,
        inner: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || inner % heads != 0 {
            return Err(Error::Config(format!(
                "inner_dim {inner} is not divisible by n_heads {heads}"
            )));
        }
        Ok(Self {
            f: Linear::new(pb, &format!("{name}.f"), query_dim, inner, false),
            wq: Linear::identity(pb, &format!("{name}.w_q"), inner),
            g: Linear::new(pb, &format!("{name}.g"), key_dim, inner, false),
            wk: Linear::identity(pb, &format!("{name}.w_k"), inner),
            v: Linear::new(pb, &format!("{name}.v"), key_dim, inner, false),
            wv: Linear::identity(pb, &format!("{name}.w_v"), inner),
            out: Linear::new(pb, &format!("{name}.out"), inner, inner, true),
            heads,
            inner,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.inner / self.heads
    }

    /// `query [Cq, B, Lq]`, `context [Ck, B, Lk]` -> `[inner, B, Lq]`.
    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        query: &Act<T>,
        context: &Act<T>,
        mut cache: Option<&mut AttentionCache<T>>,
    ) -> Result<Act<T>> {
        if query.b != context.b {
            return Err(Error::Shape(format!(
                "query batch {} != context batch {}",
                query.b, context.b
            )));
        }
        let fq = self.f.forward(ps, query, cache.as_deref_mut().map(|c| &mut c.f))?;
        let q = self.wq.forward(ps, &fq, cache.as_deref_mut().map(|c| &mut c.wq))?;
        let gk = self.g.forward(ps, context, cache.as_deref_mut().map(|c| &mut c.g))?;
        let k = self.wk.forward(ps, &gk, cache.as_deref_mut().map(|c| &mut c.wk))?;
        let vc = self.v.forward(ps, context, cache.as_deref_mut().map(|c| &mut c.v))?;
        let val = self.wv.forward(ps, &vc, cache.as_deref_mut().map(|c| &mut c.wv))?;

        let (b, lq, lk, dh) = (query.b, query.l, context.l, self.head_dim());
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let block = lq * lk;
        let mut probs = vec![T::zero(); b * self.heads * block];
        let keep_logits = cache.as_ref().is_some_and(|c| c.keep_logits);
        let mut logits = if keep_logits { vec![T::zero(); probs.len()] } else { Vec::new() };
        let mut o = Act::zeros(self.inner, b, lq);
        for bi in 0..b {
            for h in 0..self.heads {
                let idx = (bi * self.heads + h) * block;
                attend_block(
                    head_view(&q, bi, h, dh),
                    head_view(&k, bi, h, dh),
                    head_view(&val, bi, h, dh),
                    scale,
                    &mut probs[idx..idx + block],
                    keep_logits.then(|| &mut logits[idx..idx + block]),
                    head_view_mut(&mut o, bi, h, dh),
                );
            }
        }
        let y = self.out.forward(ps, &o, cache.as_deref_mut().map(|c| &mut c.out))?;
        if let Some(c) = cache {
            c.q = Some(q);
            c.k = Some(k);
            c.val = Some(val);
            c.probs = probs;
            c.logits = logits;
            c.attended = Some(o);
        }
        Ok(y)
    }

    /// Returns gradients with respect to `(query, context)`.
    pub fn backward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        cache: &AttentionCache<T>,
        dy: &Act<T>,
        grads: &mut Grads<T>,
    ) -> (Act<T>, Act<T>) {
        let q = cache.q.as_ref().expect("attention cache missing queries");
        let k = cache.k.as_ref().expect("attention cache missing keys");
        let val = cache.val.as_ref().expect("attention cache missing values");
        let d_o = self.out.backward(ps, &cache.out, dy, grads);
        let (b, lq, lk, dh) = (q.b, q.l, k.l, self.head_dim());
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let block = lq * lk;
        let mut dq = Act::zeros(self.inner, b, lq);
        let mut dk = Act::zeros(self.inner, b, lk);
        let mut dv = Act::zeros(self.inner, b, lk);
        let mut dp = vec![T::zero(); block];
        for bi in 0..b {
            for h in 0..self.heads {
                let idx = (bi * self.heads + h) * block;
                let p = MatRef::contiguous(&cache.probs[idx..idx + block], lq, lk);
                let d_oh = head_view(&d_o, bi, h, dh);
                // dV = P^T dO
                gemm(T::one(), p.t(), d_oh, T::zero(), head_view_mut(&mut dv, bi, h, dh));
                // dP = dO V^T
                gemm(
                    T::one(),
                    d_oh,
                    head_view(val, bi, h, dh).t(),
                    T::zero(),
                    MatMut::contiguous(&mut dp, lq, lk),
                );
                let probs = &cache.probs[idx..idx + block];
                for (drow, prow) in dp.chunks_exact_mut(lk).zip(probs.chunks_exact(lk)) {
                    let dot: T = drow.iter().zip(prow).map(|(d, p)| *d * *p).sum();
                    for (d, p) in drow.iter_mut().zip(prow) {
                        *d = *p * (*d - dot) * scale;
                    }
                }
                let ds = MatRef::contiguous(&dp, lq, lk);
                gemm(
                    T::one(),
                    ds,
                    head_view(k, bi, h, dh),
                    T::zero(),
                    head_view_mut(&mut dq, bi, h, dh),
                );
                gemm(
                    T::one(),
                    ds.t(),
                    head_view(q, bi, h, dh),
                    T::zero(),
                    head_view_mut(&mut dk, bi, h, dh),
                );
            }
        }
        let dfq = self.wq.backward(ps, &cache.wq, &dq, grads);
        let dquery = self.f.backward(ps, &cache.f, &dfq, grads);
        let dgk = self.wk.backward(ps, &cache.wk, &dk, grads);
        let mut dcontext = self.g.backward(ps, &cache.g, &dgk, grads);
        let dvc = self.wv.backward(ps, &cache.wv, &dv, grads);
        dcontext.add_assign(&self.v.backward(ps, &cache.v, &dvc, grads));
        (dquery, dcontext)
    }
}

/// `[L, dh]` view of head `h` of sample `b` inside a `[inner, B, L]` tensor.
fn head_view<T>(x: &Act<T>, b: usize, h: usize, dh: usize) -> MatRef<'_, T> {
    MatRef {
        data: &x.data,
        offset: (h * dh * x.b + b) * x.l,
        rows: x.l,
        cols: dh,
        rs: 1,
        cs: x.b * x.l,
    }
}

fn head_view_mut<T>(x: &mut Act<T>, b: usize, h: usize, dh: usize) -> MatMut<'_, T> {
    let (bb, l) = (x.b, x.l);
    MatMut {
        data: &mut x.data,
        offset: (h * dh * bb + b) * l,
        rows: l,
        cols: dh,
        rs: 1,
        cs: bb * l,
    }
}

fn attend_block<T: Scalar>(
    q: MatRef<'_, T>,
    k: MatRef<'_, T>,
    v: MatRef<'_, T>,
    scale: T,
    probs: &mut [T],
    logits: Option<&mut [T]>,
    out: MatMut<'_, T>,
) {
    let (lq, lk) = (q.rows, k.rows);
    gemm(scale, q, k.t(), T::zero(), MatMut::contiguous(probs, lq, lk));
    if let Some(l) = logits {
        l.copy_from_slice(probs);
    }
    for row in probs.chunks_exact_mut(lk) {
        softmax_in_place(row);
    }
    gemm(T::one(), MatRef::contiguous(probs, lq, lk), v, T::zero(), out);
}

fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    row.iter_mut().for_each(|v| *v *= inv);
}

/// Single-head attention on contiguous row-major matrices:
/// `q [lq, d]`, `k [lk, d]`, `v [lk, dv]`. Returns `(output [lq, dv],
/// weights [lq, lk])`.
pub fn scaled_dot_attention<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    lq: usize,
    lk: usize,
    d: usize,
    dv: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    if q.len() != lq * d || k.len() != lk * d || v.len() != lk * dv {
        return Err(Error::Shape("attention operand sizes do not match".into()));
    }
    let mut probs = vec![T::zero(); lq * lk];
    let mut out = vec![T::zero(); lq * dv];
    attend_block(
        MatRef::contiguous(q, lq, d),
        MatRef::contiguous(k, lk, d),
        MatRef::contiguous(v, lk, dv),
        T::of(1.0 / (d as f64).sqrt()),
        &mut probs,
        None,
        MatMut::contiguous(&mut out, lq, dv),
    );
    Ok((out, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut row = vec![1.0f32, -3.0, 10.0, 0.5];
        softmax_in_place(&mut row);
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(row.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn rejects_heads_not_dividing_inner() {
        let mut pb = ParamBuilder::<f32>::new(0);
        assert!(Attention::new(&mut pb, "a", 4, 4, 10, 4).is_err());
    }
}
