//! Noise-prediction network: a 1D U-Net with timestep embedding and,
//! optionally, a voltage-condition encoder whose latent is injected at every
//! encoder level and in the bottleneck.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::{ConditionEncoder, ConditionEncoderConfig, InjectBlock, InjectCache};
use crate::nn::{
    add_channel_bias, concat_channels, silu, silu_backward, sinusoidal_embedding, split_channels,
    sum_over_length, upsample2, upsample2_backward, Act, Conv1d, ConvCache, GroupNorm, Grads,
    Linear, LinearCache, NormCache, ParamBuilder, ParamSet, Scalar,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub length: usize,
    pub base_channels: usize,
    pub channel_multipliers: Vec<usize>,
    pub time_embed_dim: usize,
    pub n_heads: usize,
    pub inner_dim: usize,
    pub encoder_depth: usize,
    pub condition_enabled: bool,
    pub norm_groups: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            length: crate::signal::DEFAULT_LENGTH,
            base_channels: 32,
            channel_multipliers: vec![1, 2, 4, 8],
            time_embed_dim: 128,
            n_heads: 4,
            inner_dim: 128,
            encoder_depth: 2,
            condition_enabled: true,
            norm_groups: 8,
        }
    }
}

impl DenoiserConfig {
    pub fn levels(&self) -> usize {
        self.channel_multipliers.len()
    }

    /// Total downsampling factor between the input and the bottleneck.
    pub fn downsample_factor(&self) -> usize {
        1 << (self.levels().saturating_sub(1))
    }

    pub fn channels(&self) -> Vec<usize> {
        self.channel_multipliers
            .iter()
            .map(|m| m * self.base_channels)
            .collect()
    }

    pub fn encoder_config(&self) -> ConditionEncoderConfig {
        ConditionEncoderConfig {
            depth: self.encoder_depth,
            inner_dim: self.inner_dim,
            n_heads: self.n_heads,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.levels() == 0 || self.channel_multipliers.contains(&0) {
            return bad("channel_multipliers must be nonempty and positive".into());
        }
        if self.base_channels == 0 || self.norm_groups == 0 {
            return bad("base_channels and norm_groups must be positive".into());
        }
        if self.length == 0 || self.length % self.downsample_factor() != 0 {
            return bad(format!(
                "length {} is not divisible by the downsampling factor {}",
                self.length,
                self.downsample_factor()
            ));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return bad(format!("time_embed_dim {} must be even", self.time_embed_dim));
        }
        if self.condition_enabled {
            self.encoder_config().validate()?;
        }
        Ok(())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone)]
struct ResBlock {
    n1: GroupNorm,
    c1: Conv1d,
    temb: Linear,
    n2: GroupNorm,
    c2: Conv1d,
    skip: Option<Conv1d>,
}

#[derive(Debug, Clone, Default)]
struct ResCache<T> {
    n1: NormCache<T>,
    h1: Option<Act<T>>,
    c1: ConvCache<T>,
    temb: LinearCache<T>,
    n2: NormCache<T>,
    h2: Option<Act<T>>,
    c2: ConvCache<T>,
    skip: ConvCache<T>,
}

impl ResBlock {
    fn new<T: Scalar>(
        pb: &mut ParamBuilder<T>,
        name: &str,
        cin: usize,
        cout: usize,
        tdim: usize,
        groups: usize,
    ) -> Self {
        Self {
            n1: GroupNorm::new(pb, &format!("{name}.norm1"), cin, gcd(cin, groups)),
            c1: Conv1d::same(pb, &format!("{name}.conv1"), cin, cout),
            temb: Linear::new(pb, &format!("{name}.time_proj"), tdim, cout, true),
            n2: GroupNorm::new(pb, &format!("{name}.norm2"), cout, gcd(cout, groups)),
            c2: Conv1d::same(pb, &format!("{name}.conv2"), cout, cout),
            skip: (cin != cout).then(|| Conv1d::pointwise(pb, &format!("{name}.skip"), cin, cout, false)),
        }
    }

    fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Act<T>,
        temb: &Act<T>,
        mut cache: Option<&mut ResCache<T>>,
    ) -> Result<Act<T>> {
        let h1 = self.n1.forward(ps, x, cache.as_deref_mut().map(|c| &mut c.n1))?;
        let mut h = self.c1.forward(ps, &silu(&h1), cache.as_deref_mut().map(|c| &mut c.c1))?;
        let e = self.temb.forward(ps, temb, cache.as_deref_mut().map(|c| &mut c.temb))?;
        add_channel_bias(&mut h, &e);
        let h2 = self.n2.forward(ps, &h, cache.as_deref_mut().map(|c| &mut c.n2))?;
        let mut out = self.c2.forward(ps, &silu(&h2), cache.as_deref_mut().map(|c| &mut c.c2))?;
        match &self.skip {
            Some(s) => out.add_assign(&s.forward(ps, x, cache.as_deref_mut().map(|c| &mut c.skip))?),
            None => out.add_assign(x),
        }
        if let Some(c) = cache {
            c.h1 = Some(h1);
            c.h2 = Some(h2);
        }
        Ok(out)
    }

    /// Returns `(dx, dtemb)`.
    fn backward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        cache: &ResCache<T>,
        dout: &Act<T>,
        grads: &mut Grads<T>,
    ) -> (Act<T>, Act<T>) {
        let ds2 = self.c2.backward(ps, &cache.c2, dout, grads);
        let dh2 = silu_backward(cache.h2.as_ref().expect("res cache"), &ds2);
        let dh = self.n2.backward(ps, &cache.n2, &dh2, grads);
        let dtemb = self.temb.backward(ps, &cache.temb, &sum_over_length(&dh), grads);
        let ds1 = self.c1.backward(ps, &cache.c1, &dh, grads);
        let dh1 = silu_backward(cache.h1.as_ref().expect("res cache"), &ds1);
        let mut dx = self.n1.backward(ps, &cache.n1, &dh1, grads);
        match &self.skip {
            Some(s) => dx.add_assign(&s.backward(ps, &cache.skip, dout, grads)),
            None => dx.add_assign(dout),
        }
        (dx, dtemb)
    }
}

#[derive(Debug, Clone)]
struct UNet {
    time1: Linear,
    time2: Linear,
    input: Conv1d,
    enc: Vec<ResBlock>,
    down: Vec<Conv1d>,
    mid1: ResBlock,
    mid2: ResBlock,
    dec: Vec<ResBlock>,
    up: Vec<Conv1d>,
    out_norm: GroupNorm,
    out_conv: Conv1d,
    // Present only for conditional models.
    encoder: Option<ConditionEncoder>,
    inject: Vec<InjectBlock>,
    mid_inject: Option<InjectBlock>,
}

/// Activations saved by a training forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    e1: Option<Act<T>>,
    e2: Option<Act<T>>,
    time1: LinearCache<T>,
    time2: LinearCache<T>,
    input: ConvCache<T>,
    enc: Vec<ResCache<T>>,
    inject: Vec<InjectCache<T>>,
    down: Vec<ConvCache<T>>,
    mid1: ResCache<T>,
    mid_inject: InjectCache<T>,
    mid2: ResCache<T>,
    dec: Vec<ResCache<T>>,
    up: Vec<ConvCache<T>>,
    out_norm: NormCache<T>,
    out_pre: Option<Act<T>>,
    out_conv: ConvCache<T>,
    encoder: crate::guidance::EncoderCache<T>,
    conditioned: bool,
}

impl UNet {
    fn build<T: Scalar>(cfg: &DenoiserConfig, pb: &mut ParamBuilder<T>) -> Result<Self> {
        let chs = cfg.channels();
        let n = chs.len();
        let (tdim, groups) = (cfg.time_embed_dim, cfg.norm_groups);
        // Backbone parameters are allocated before any condition parameters,
        // so conditional and unconditional models with the same seed share
        // the backbone initialization.
        let time1 = Linear::new(pb, "time_mlp.0", tdim, tdim, true);
        let time2 = Linear::new(pb, "time_mlp.1", tdim, tdim, true);
        let input = Conv1d::same(pb, "input", 1, chs[0]);
        let mut enc = Vec::with_capacity(n);
        let mut down = Vec::with_capacity(n - 1);
        let mut cin = chs[0];
        for (i, &c) in chs.iter().enumerate() {
            enc.push(ResBlock::new(pb, &format!("down.{i}.res"), cin, c, tdim, groups));
            if i + 1 < n {
                down.push(Conv1d::new(pb, &format!("down.{i}.downsample"), c, c, 3, 2, 1, false));
            }
            cin = c;
        }
        let mid1 = ResBlock::new(pb, "mid.res1", cin, cin, tdim, groups);
        let mid2 = ResBlock::new(pb, "mid.res2", cin, cin, tdim, groups);
        let mut dec = Vec::with_capacity(n);
        let mut up = Vec::with_capacity(n - 1);
        let mut cur = cin;
        for i in (0..n).rev() {
            dec.push(ResBlock::new(pb, &format!("up.{i}.res"), cur + chs[i], chs[i], tdim, groups));
            cur = chs[i];
            if i > 0 {
                up.push(Conv1d::same(pb, &format!("up.{i}.upsample"), cur, cur));
            }
        }
        let out_norm = GroupNorm::new(pb, "out.norm", chs[0], gcd(chs[0], groups));
        let out_conv = Conv1d::same(pb, "out.conv", chs[0], 1);

        let (encoder, inject, mid_inject) = if cfg.condition_enabled {
            let ec = cfg.encoder_config();
            let encoder = ConditionEncoder::new(pb, &ec, cfg.downsample_factor())?;
            let inject = chs
                .iter()
                .enumerate()
                .map(|(i, &c)| InjectBlock::new(pb, &format!("down.{i}.guidance"), c, gcd(c, groups), &ec))
                .collect::<Result<Vec<_>>>()?;
            let mid = InjectBlock::new(pb, "mid.guidance", cin, gcd(cin, groups), &ec)?;
            (Some(encoder), inject, Some(mid))
        } else {
            (None, Vec::new(), None)
        };
        Ok(Self {
            time1,
            time2,
            input,
            enc,
            down,
            mid1,
            mid2,
            dec,
            up,
            out_norm,
            out_conv,
            encoder,
            inject,
            mid_inject,
        })
    }

    fn time_input<T: Scalar>(&self, t: &[usize], dim: usize) -> Result<Act<T>> {
        let mut te = Act::zeros(dim, t.len(), 1);
        for (b, &step) in t.iter().enumerate() {
            for (c, v) in sinusoidal_embedding(step as f64, dim)?.into_iter().enumerate() {
                te.data[c * t.len() + b] = T::of(v);
            }
        }
        Ok(te)
    }

    fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Act<T>,
        t: &[usize],
        latent: Option<&Act<T>>,
        mut cache: Option<&mut ForwardCache<T>>,
        mut capture: Option<&mut InjectCache<T>>,
    ) -> Result<Act<T>> {
        let n = self.enc.len();
        macro_rules! slot {
            ($($f:tt)+) => {
                cache.as_deref_mut().map(|c| &mut c.$($f)+)
            };
        }
        if let Some(c) = cache.as_deref_mut() {
            c.enc = vec![ResCache::default(); n];
            c.inject = vec![InjectCache::default(); n];
            c.down = vec![ConvCache::default(); n.saturating_sub(1)];
            c.dec = vec![ResCache::default(); n];
            c.up = vec![ConvCache::default(); n.saturating_sub(1)];
            c.conditioned = latent.is_some();
        }

        let te = self.time_input::<T>(t, self.time1.din)?;
        let e1 = self.time1.forward(ps, &te, slot!(time1))?;
        let e2 = self.time2.forward(ps, &silu(&e1), slot!(time2))?;
        let temb = silu(&e2);

        let mut h = self.input.forward(ps, x, slot!(input))?;
        let mut skips = Vec::with_capacity(n);
        for i in 0..n {
            h = self.enc[i].forward(ps, &h, &temb, slot!(enc[i]))?;
            if let Some(lat) = latent {
                let site = match (i, capture.as_deref_mut()) {
                    (0, Some(cap)) => {
                        cap.attn.keep_logits = true;
                        Some(cap)
                    }
                    _ => slot!(inject[i]),
                };
                h = self.inject[i].forward(ps, &h, lat, site)?;
            }
            skips.push(h.clone());
            if i + 1 < n {
                h = self.down[i].forward(ps, &h, slot!(down[i]))?;
            }
        }
        h = self.mid1.forward(ps, &h, &temb, slot!(mid1))?;
        if let (Some(lat), Some(mid)) = (latent, &self.mid_inject) {
            h = mid.forward(ps, &h, lat, slot!(mid_inject))?;
        }
        h = self.mid2.forward(ps, &h, &temb, slot!(mid2))?;
        for (j, i) in (0..n).rev().enumerate() {
            let cat = concat_channels(&h, &skips[i])?;
            h = self.dec[j].forward(ps, &cat, &temb, slot!(dec[j]))?;
            if i > 0 {
                h = self.up[j].forward(ps, &upsample2(&h), slot!(up[j]))?;
            }
        }
        let o = self.out_norm.forward(ps, &h, slot!(out_norm))?;
        let y = self.out_conv.forward(ps, &silu(&o), slot!(out_conv))?;
        if let Some(c) = cache {
            c.e1 = Some(e1);
            c.e2 = Some(e2);
            c.out_pre = Some(o);
        }
        Ok(y)
    }

    /// Returns the gradient with respect to the condition latent when the
    /// forward pass was conditioned.
    fn backward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        cache: &ForwardCache<T>,
        dy: &Act<T>,
        grads: &mut Grads<T>,
    ) -> Option<Act<T>> {
        let n = self.enc.len();
        let ds = self.out_conv.backward(ps, &cache.out_conv, dy, grads);
        let dout = silu_backward(cache.out_pre.as_ref().expect("forward cache"), &ds);
        let mut dh = self.out_norm.backward(ps, &cache.out_norm, &dout, grads);
        let mut dtemb: Option<Act<T>> = None;
        let acc = |d: Act<T>, into: &mut Option<Act<T>>| match into {
            Some(a) => a.add_assign(&d),
            None => *into = Some(d),
        };
        let mut dskips: Vec<Option<Act<T>>> = vec![None; n];
        for (j, i) in (0..n).rev().enumerate().rev() {
            // Walk the decoder from its last stage back to its first.
            if i > 0 {
                let du = self.up[j].backward(ps, &cache.up[j], &dh, grads);
                dh = upsample2_backward(&du);
            }
            let (dcat, dt) = self.dec[j].backward(ps, &cache.dec[j], &dh, grads);
            acc(dt, &mut dtemb);
            let cur = dcat.c - self.enc[i].c2.cout;
            let (dprev, dskip) = split_channels(&dcat, cur);
            dh = dprev;
            dskips[i] = Some(dskip);
        }
        let (dx, dt) = self.mid2.backward(ps, &cache.mid2, &dh, grads);
        acc(dt, &mut dtemb);
        dh = dx;
        let mut dlatent: Option<Act<T>> = None;
        if cache.conditioned {
            let mid = self.mid_inject.as_ref().expect("conditional model");
            let (dx, dl) = mid.backward(ps, &cache.mid_inject, &dh, grads);
            dh = dx;
            acc(dl, &mut dlatent);
        }
        let (dx, dt) = self.mid1.backward(ps, &cache.mid1, &dh, grads);
        acc(dt, &mut dtemb);
        dh = dx;
        for i in (0..n).rev() {
            if i + 1 < n {
                dh = self.down[i].backward(ps, &cache.down[i], &dh, grads);
            }
            dh.add_assign(dskips[i].as_ref().expect("skip gradient"));
            if cache.conditioned {
                let (dx, dl) = self.inject[i].backward(ps, &cache.inject[i], &dh, grads);
                dh = dx;
                acc(dl, &mut dlatent);
            }
            let (dx, dt) = self.enc[i].backward(ps, &cache.enc[i], &dh, grads);
            acc(dt, &mut dtemb);
            dh = dx;
        }
        self.input.backward(ps, &cache.input, &dh, grads);

        let dtemb = dtemb.expect("time embedding gradient");
        let de2 = silu_backward(cache.e2.as_ref().expect("forward cache"), &dtemb);
        let ds1 = self.time2.backward(ps, &cache.time2, &de2, grads);
        let de1 = silu_backward(cache.e1.as_ref().expect("forward cache"), &ds1);
        self.time1.backward(ps, &cache.time1, &de1, grads);
        dlatent
    }
}

/// Noise predictor `eps_theta(x_t, t[, c])` with its parameters.
#[derive(Debug, Clone)]
pub struct Denoiser<T> {
    cfg: DenoiserConfig,
    net: UNet,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Denoiser<T> {
    pub fn new(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut pb = ParamBuilder::new(seed);
        let net = UNet::build(&cfg, &mut pb)?;
        Ok(Self {
            cfg,
            net,
            params: pb.finish(),
        })
    }

    /// Rebuilds the network for `cfg` and installs `params`, which must match
    /// the layout by name and shape.
    pub fn with_params(cfg: DenoiserConfig, params: ParamSet<T>) -> Result<Self> {
        let mut model = Self::new(cfg, 0)?;
        let expected = model.params.entries();
        if expected.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (e, p) in expected.iter().zip(params.entries()) {
            if e.name != p.name || e.shape != p.shape || p.data.len() != e.data.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match expected {} {:?}",
                    p.name, p.shape, e.name, e.shape
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    fn check_input(&self, x: &Act<T>, t: &[usize]) -> Result<()> {
        if x.c != 1 || x.l != self.cfg.length {
            return Err(Error::Shape(format!(
                "denoiser input must be [1, B, {}], got [{}, {}, {}]",
                self.cfg.length, x.c, x.b, x.l
            )));
        }
        if t.len() != x.b {
            return Err(Error::Shape(format!(
                "{} timesteps for a batch of {}",
                t.len(),
                x.b
            )));
        }
        Ok(())
    }

    fn check_condition(&self, x: &Act<T>, c: &Act<T>) -> Result<()> {
        if !self.cfg.condition_enabled {
            return Err(Error::Config(
                "a condition was supplied to a model built without the condition branch".into(),
            ));
        }
        if c.shape() != x.shape() {
            return Err(Error::Shape(format!(
                "condition shape {:?} does not match input {:?}",
                c.shape(),
                x.shape()
            )));
        }
        Ok(())
    }

    /// Encodes a `[1, B, L]` condition once so repeated denoiser calls can
    /// reuse the latent.
    pub fn encode_condition(&self, c: &Act<T>) -> Result<Act<T>> {
        let enc = self.net.encoder.as_ref().ok_or_else(|| {
            Error::Config("a condition was supplied to a model built without the condition branch".into())
        })?;
        enc.forward(&self.params, c, None)
    }

    /// Predicts the noise in `x [1, B, L]` at steps `t`. With `c == None`
    /// the guidance branch is skipped entirely.
    pub fn forward(&self, x: &Act<T>, t: &[usize], c: Option<&Act<T>>) -> Result<Act<T>> {
        self.check_input(x, t)?;
        let latent = match c {
            Some(c) => {
                self.check_condition(x, c)?;
                Some(self.encode_condition(c)?)
            }
            None => None,
        };
        self.net.forward(&self.params, x, t, latent.as_ref(), None, None)
    }

    pub fn forward_with_latent(&self, x: &Act<T>, t: &[usize], latent: Option<&Act<T>>) -> Result<Act<T>> {
        self.check_input(x, t)?;
        if latent.is_some() && !self.cfg.condition_enabled {
            return Err(Error::Config(
                "a condition latent was supplied to an unconditional model".into(),
            ));
        }
        self.net.forward(&self.params, x, t, latent, None, None)
    }

    /// Forward pass that also returns the state of the first guidance site.
    pub fn forward_capture(&self, x: &Act<T>, t: &[usize], c: &Act<T>) -> Result<(Act<T>, InjectCache<T>)> {
        self.check_input(x, t)?;
        self.check_condition(x, c)?;
        let latent = self.encode_condition(c)?;
        let mut cap = InjectCache::default();
        let y = self
            .net
            .forward(&self.params, x, t, Some(&latent), None, Some(&mut cap))?;
        Ok((y, cap))
    }

    pub fn forward_train(
        &self,
        x: &Act<T>,
        t: &[usize],
        c: Option<&Act<T>>,
    ) -> Result<(Act<T>, ForwardCache<T>)> {
        self.check_input(x, t)?;
        let mut cache = ForwardCache::default();
        let latent = match c {
            Some(c) => {
                self.check_condition(x, c)?;
                let enc = self.net.encoder.as_ref().expect("validated");
                Some(enc.forward(&self.params, c, Some(&mut cache.encoder))?)
            }
            None => None,
        };
        let y = self
            .net
            .forward(&self.params, x, t, latent.as_ref(), Some(&mut cache), None)?;
        Ok((y, cache))
    }

    /// Gradients of `sum(dy * output)` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache<T>, dy: &Act<T>) -> Grads<T> {
        let mut grads = Grads::zeros_like(&self.params);
        self.backward_into(cache, dy, &mut grads);
        grads
    }

    pub fn backward_into(&self, cache: &ForwardCache<T>, dy: &Act<T>, grads: &mut Grads<T>) {
        if let Some(dl) = self.net.backward(&self.params, cache, dy, grads) {
            let enc = self.net.encoder.as_ref().expect("conditioned forward");
            enc.backward(&self.params, &cache.encoder, &dl, grads);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(cond: bool) -> DenoiserConfig {
        DenoiserConfig {
            length: 16,
            base_channels: 4,
            channel_multipliers: vec![1, 2],
            time_embed_dim: 8,
            n_heads: 2,
            inner_dim: 8,
            encoder_depth: 1,
            condition_enabled: cond,
            norm_groups: 2,
        }
    }

    #[test]
    fn output_shape_matches_input() {
        let m = Denoiser::<f32>::new(tiny(true), 1).unwrap();
        let x = Act::from_vec(1, 3, 16, (0..48).map(|i| (i as f32 * 0.1).sin()).collect());
        let c = Act::from_vec(1, 3, 16, vec![0.5; 48]);
        let y = m.forward(&x, &[0, 10, 999], Some(&c)).unwrap();
        assert_eq!(y.shape(), (1, 3, 16));
        assert!(y.is_finite());
    }

    #[test]
    fn rejects_indivisible_length() {
        let mut cfg = tiny(false);
        cfg.length = 15;
        assert!(matches!(Denoiser::<f32>::new(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn condition_on_unconditional_model_is_error() {
        let m = Denoiser::<f32>::new(tiny(false), 1).unwrap();
        let x = Act::zeros(1, 1, 16);
        assert!(matches!(m.forward(&x, &[3], Some(&x)), Err(Error::Config(_))));
    }

    #[test]
    fn backbone_init_shared_between_variants() {
        let a = Denoiser::<f32>::new(tiny(true), 7).unwrap();
        let b = Denoiser::<f32>::new(tiny(false), 7).unwrap();
        for e in b.params.entries() {
            let id = a.params.find(&e.name).unwrap();
            assert_eq!(a.params.get(id), &e.data[..]);
        }
    }

    #[test]
    fn zero_init_guidance_is_neutral() {
        let m = Denoiser::<f64>::new(tiny(true), 3).unwrap();
        let x = Act::from_vec(1, 2, 16, (0..32).map(|i| (i as f64 * 0.3).cos()).collect());
        let c = Act::from_vec(1, 2, 16, (0..32).map(|i| (i as f64 * 0.7).sin()).collect());
        let with = m.forward(&x, &[5, 50], Some(&c)).unwrap();
        let without = m.forward(&x, &[5, 50], None).unwrap();
        assert_eq!(with.data, without.data);
    }
}
