//! Voltage-condition guidance: the condition encoder, the cross-attention
//! injection block that adds condition information to denoiser latents
//! through a zero-initialized pointwise convolution, and attention-map
//! extraction for diagnostics.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::nn::{
    positional_table, silu, silu_backward, Act, Attention, AttentionCache, Conv1d, ConvCache,
    GroupNorm, Grads, LayerNorm, Linear, LinearCache, NormCache, ParamBuilder, ParamSet, Scalar,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionEncoderConfig {
    pub depth: usize,
    pub inner_dim: usize,
    pub n_heads: usize,
}

impl ConditionEncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.inner_dim / self.n_heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("condition encoder depth must be at least 1".into()));
        }
        if self.n_heads == 0 || self.inner_dim == 0 || self.inner_dim % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "inner_dim {} must be a positive multiple of n_heads {}",
                self.inner_dim, self.n_heads
            )));
        }
        if self.inner_dim % 2 != 0 {
            return Err(Error::Config("inner_dim must be even".into()));
        }
        Ok(())
    }
}

fn add_positional<T: Scalar>(h: &mut Act<T>) -> Result<()> {
    let table = positional_table::<T>(h.c, h.l)?;
    for c in 0..h.c {
        let pe = &table[c * h.l..(c + 1) * h.l];
        for b in 0..h.b {
            for (v, p) in h.row_mut(c, b).iter_mut().zip(pe) {
                *v += *p;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    conv: Conv1d,
    norm: LayerNorm,
    attn: Attention,
}

#[derive(Debug, Clone, Default)]
struct EncoderBlockCache<T> {
    conv: ConvCache<T>,
    norm: NormCache<T>,
    attn: AttentionCache<T>,
}

#[derive(Debug, Clone, Default)]
pub struct EncoderCache<T> {
    blocks: Vec<EncoderBlockCache<T>>,
}

/// Embeds the voltage signal into a `[inner_dim, B, L / patch]` latent.
///
/// The first block patchifies with a stride-`patch` convolution and adds
/// sinusoidal positions; every block is conv -> layer norm -> residual
/// multi-head self-attention.
#[derive(Debug, Clone)]
pub struct ConditionEncoder {
    blocks: Vec<EncoderBlock>,
    pub patch: usize,
    pub inner: usize,
}

impl ConditionEncoder {
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<T>,
        cfg: &ConditionEncoderConfig,
        patch: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        let blocks = (0..cfg.depth)
            .map(|i| {
                let name = format!("cond_encoder.{i}");
                let conv = if i == 0 {
                    Conv1d::new(pb, &format!("{name}.conv"), 1, cfg.inner_dim, patch, patch, 0, false)
                } else {
                    Conv1d::same(pb, &format!("{name}.conv"), cfg.inner_dim, cfg.inner_dim)
                };
                Ok(EncoderBlock {
                    conv,
                    norm: LayerNorm::new(pb, &format!("{name}.norm"), cfg.inner_dim),
                    attn: Attention::new(
                        pb,
                        &format!("{name}.self_attn"),
                        cfg.inner_dim,
                        cfg.inner_dim,
                        cfg.inner_dim,
                        cfg.n_heads,
                    )?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            blocks,
            patch,
            inner: cfg.inner_dim,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        c: &Act<T>,
        mut cache: Option<&mut EncoderCache<T>>,
    ) -> Result<Act<T>> {
        if c.c != 1 || c.l % self.patch != 0 {
            return Err(Error::Shape(format!(
                "condition must be [1, B, L] with L divisible by {}, got [{}, {}, {}]",
                self.patch, c.c, c.b, c.l
            )));
        }
        if let Some(cache) = cache.as_deref_mut() {
            cache.blocks = vec![EncoderBlockCache::default(); self.blocks.len()];
        }
        let mut h = c.clone();
        for (i, blk) in self.blocks.iter().enumerate() {
            let mut bc = cache.as_deref_mut().map(|c| &mut c.blocks[i]);
            h = blk.conv.forward(ps, &h, bc.as_deref_mut().map(|c| &mut c.conv))?;
            if i == 0 {
                add_positional(&mut h)?;
            }
            let n = blk.norm.forward(ps, &h, bc.as_deref_mut().map(|c| &mut c.norm))?;
            let a = blk.attn.forward(ps, &n, &n, bc.as_deref_mut().map(|c| &mut c.attn))?;
            h = n;
            h.add_assign(&a);
        }
        Ok(h)
    }

    pub fn backward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        cache: &EncoderCache<T>,
        dlatent: &Act<T>,
        grads: &mut Grads<T>,
    ) {
        let mut dh = dlatent.clone();
        for (blk, bc) in self.blocks.iter().zip(&cache.blocks).rev() {
            let (dq, dctx) = blk.attn.backward(ps, &bc.attn, &dh, grads);
            dh.add_assign(&dq);
            dh.add_assign(&dctx);
            let dconv = blk.norm.backward(ps, &bc.norm, &dh, grads);
            dh = blk.conv.backward(ps, &bc.conv, &dconv, grads);
        }
    }
}

/// Cross-attention guidance block: `z = x + zero_conv(ff(attn(norm(x), c)))`.
#[derive(Debug, Clone)]
pub struct InjectBlock {
    norm: GroupNorm,
    attn: Attention,
    ff_norm: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
    zero: Conv1d,
    pub channels: usize,
}

#[derive(Debug, Clone, Default)]
pub struct InjectCache<T> {
    norm: NormCache<T>,
    pub attn: AttentionCache<T>,
    ff_norm: NormCache<T>,
    ff_in: LinearCache<T>,
    ff_hidden: Option<Act<T>>,
    ff_out: LinearCache<T>,
    zero: ConvCache<T>,
    /// Guidance residual added to the latent.
    pub residual: Option<Act<T>>,
}

impl InjectBlock {
    pub fn new<T: Scalar>(
        pb: &mut ParamBuilder<T>,
        name: &str,
        channels: usize,
        groups: usize,
        cfg: &ConditionEncoderConfig,
    ) -> Result<Self> {
        let inner = cfg.inner_dim;
        Ok(Self {
            norm: GroupNorm::new(pb, &format!("{name}.norm"), channels, groups),
            attn: Attention::new(
                pb,
                &format!("{name}.cross_attn"),
                channels,
                inner,
                inner,
                cfg.n_heads,
            )?,
            ff_norm: LayerNorm::new(pb, &format!("{name}.ff_norm"), inner),
            ff_in: Linear::new(pb, &format!("{name}.ff_in"), inner, 2 * inner, true),
            ff_out: Linear::new(pb, &format!("{name}.ff_out"), 2 * inner, inner, true),
            zero: Conv1d::pointwise(pb, &format!("{name}.zero_conv"), inner, channels, true),
            channels,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        x: &Act<T>,
        latent: &Act<T>,
        mut cache: Option<&mut InjectCache<T>>,
    ) -> Result<Act<T>> {
        if x.c != self.channels {
            return Err(Error::Shape(format!(
                "inject block expects {} channels, got {}",
                self.channels, x.c
            )));
        }
        let mut q = self.norm.forward(ps, x, cache.as_deref_mut().map(|c| &mut c.norm))?;
        add_positional(&mut q)?;
        let mut a = self
            .attn
            .forward(ps, &q, latent, cache.as_deref_mut().map(|c| &mut c.attn))?;
        let u = self.ff_norm.forward(ps, &a, cache.as_deref_mut().map(|c| &mut c.ff_norm))?;
        let hidden = self.ff_in.forward(ps, &u, cache.as_deref_mut().map(|c| &mut c.ff_in))?;
        let f = self
            .ff_out
            .forward(ps, &silu(&hidden), cache.as_deref_mut().map(|c| &mut c.ff_out))?;
        a.add_assign(&f);
        let r = self.zero.forward(ps, &a, cache.as_deref_mut().map(|c| &mut c.zero))?;
        let mut z = x.clone();
        z.add_assign(&r);
        if let Some(c) = cache {
            c.ff_hidden = Some(hidden);
            c.residual = Some(r);
        }
        Ok(z)
    }

    /// Returns gradients with respect to `(x, latent)`.
    pub fn backward<T: Scalar>(
        &self,
        ps: &ParamSet<T>,
        cache: &InjectCache<T>,
        dz: &Act<T>,
        grads: &mut Grads<T>,
    ) -> (Act<T>, Act<T>) {
        let mut dx = dz.clone();
        let mut da = self.zero.backward(ps, &cache.zero, dz, grads);
        let ds = self.ff_out.backward(ps, &cache.ff_out, &da, grads);
        let hidden = cache.ff_hidden.as_ref().expect("inject cache missing hidden");
        let dh = silu_backward(hidden, &ds);
        let du = self.ff_in.backward(ps, &cache.ff_in, &dh, grads);
        da.add_assign(&self.ff_norm.backward(ps, &cache.ff_norm, &du, grads));
        let (dq, dlatent) = self.attn.backward(ps, &cache.attn, &da, grads);
        dx.add_assign(&self.norm.backward(ps, &cache.norm, &dq, grads));
        (dx, dlatent)
    }
}

/// Attention diagnostics from the full-resolution guidance site.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScores {
    pub heads: usize,
    pub query_len: usize,
    pub key_len: usize,
    /// Scaled pre-softmax scores, `[heads, query_len, key_len]`.
    pub logits: Vec<f32>,
    /// Softmaxed scores, same layout as `logits`.
    pub scores: Vec<f32>,
    pub summary_channels: usize,
    pub summary_len: usize,
    /// Guidance residual per channel, `[summary_channels, summary_len]`.
    pub channel_summary: Vec<f32>,
}

impl AttentionScores {
    pub fn row_sums(&self) -> Vec<f32> {
        self.scores
            .chunks_exact(self.key_len)
            .map(|r| r.iter().map(|v| *v as f64).sum::<f64>() as f32)
            .collect()
    }
}

/// Runs one denoiser evaluation on a single sample and captures the
/// attention of the first (full-resolution) guidance site.
pub fn extract_attention_map<T: Scalar>(
    model: &Denoiser<T>,
    x_t: &Act<T>,
    t: usize,
    c: &Act<T>,
) -> Result<AttentionScores> {
    if !model.config().condition_enabled {
        return Err(Error::Unsupported(
            "model has no condition branch; attention maps are unavailable".into(),
        ));
    }
    if x_t.b != 1 {
        return Err(Error::Shape(format!(
            "attention extraction takes one sample, got batch {}",
            x_t.b
        )));
    }
    let (_, cap) = model.forward_capture(x_t, &[t], c)?;
    let to_f32 = |v: &[T]| v.iter().map(|x| x.f64() as f32).collect::<Vec<f32>>();
    let residual = cap.residual.as_ref().expect("capture holds residual");
    let query_len = x_t.l;
    let key_len = cap.attn.probs.len() / (model.config().n_heads * query_len);
    Ok(AttentionScores {
        heads: model.config().n_heads,
        query_len,
        key_len,
        logits: to_f32(&cap.attn.logits),
        scores: to_f32(&cap.attn.probs),
        summary_channels: residual.c,
        summary_len: residual.l,
        channel_summary: to_f32(&residual.data),
    })
}

pub const ATTENTION_DUMP_MAGIC: &str = "VGCDM-ATTN 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Logits,
    Softmax,
    Summary,
}

impl DumpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DumpKind::Logits => "logits",
            DumpKind::Softmax => "softmax",
            DumpKind::Summary => "summary",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "logits" => Ok(DumpKind::Logits),
            "softmax" => Ok(DumpKind::Softmax),
            "summary" => Ok(DumpKind::Summary),
            other => Err(Error::InvalidManifest(format!("unknown dump kind {other:?}"))),
        }
    }
}

/// Attention dump file: a text header terminated by a line `end`, then a
/// little-endian `f32` payload in row-major order of `shape`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub kind: DumpKind,
    pub shape: Vec<usize>,
    pub t: usize,
    pub condition: String,
    pub values: Vec<f32>,
}

impl AttentionDump {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        let header = format!(
            "{ATTENTION_DUMP_MAGIC}\nkind {}\nshape {}\nt {}\ncondition {}\nend\n",
            self.kind.as_str(),
            dims.join(" "),
            self.t,
            self.condition.replace('\n', " "),
        );
        let mut out = header.into_bytes();
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidManifest(format!("attention dump: {m}"));
        let mut pos = 0;
        let mut lines = Vec::new();
        loop {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("unterminated header"))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not utf-8"))?;
            pos += end + 1;
            if line == "end" {
                break;
            }
            lines.push(line.to_string());
        }
        if lines.first().map(String::as_str) != Some(ATTENTION_DUMP_MAGIC) {
            return Err(bad("bad magic"));
        }
        let field = |key: &str| {
            lines
                .iter()
                .find_map(|l| l.strip_prefix(&format!("{key} ")).map(str::to_string))
                .ok_or_else(|| bad(&format!("missing {key}")))
        };
        let kind = DumpKind::parse(&field("kind")?)?;
        let shape = field("shape")?
            .split_whitespace()
            .map(|d| d.parse::<usize>().map_err(|_| bad("bad shape")))
            .collect::<Result<Vec<_>>>()?;
        let t = field("t")?.parse().map_err(|_| bad("bad t"))?;
        let condition = field("condition")?;
        let payload = &bytes[pos..];
        let n: usize = shape.iter().product();
        if payload.len() != n * 4 {
            return Err(Error::PayloadMismatch {
                file: "attention dump".into(),
                expected: (n * 4) as u64,
                found: payload.len() as u64,
            });
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            kind,
            shape,
            t,
            condition,
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
