use candle_core::{DType, Device, Tensor, D};
use rand_chacha::ChaCha8Rng;

use super::params::{LayerNorm, Linear, ParamStore};
use crate::error::Result;

/// Additive mask value for disallowed attention edges.
const MASKED: f64 = -1e9;

pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// `(n, n)` additive mask: position `i` may attend to `j <= i` only.
pub fn causal_mask(n: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let data: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| if j <= i { 0.0 } else { MASKED }))
        .collect();
    Ok(Tensor::from_vec(data, (n, n), device)?.to_dtype(dtype)?)
}

/// `(rows, 1, 1, n)` additive mask hiding padded keys; `valid[r]` is the
/// number of leading real positions in row `r`.
pub fn key_padding_mask(valid: &[usize], n: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let data: Vec<f64> = valid
        .iter()
        .flat_map(|&v| (0..n).map(move |j| if j < v { 0.0 } else { MASKED }))
        .collect();
    Ok(Tensor::from_vec(data, (valid.len(), 1, 1, n), device)?.to_dtype(dtype)?)
}

#[derive(Debug, Clone)]
pub struct SelfAttention {
    qkv: Linear,
    out: Linear,
    heads: usize,
}

impl SelfAttention {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            qkv: Linear::new(store, &format!("{name}.qkv"), d, 3 * d, true, rng)?,
            out: Linear::new(store, &format!("{name}.out"), d, d, true, rng)?,
            heads,
        })
    }

    /// `x: (b, n, d)`; `mask` broadcastable to `(b, heads, n, n)`.
    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let (b, n, d) = x.dims3()?;
        let dh = d / self.heads;
        let qkv = self.qkv.forward(x)?.reshape((b, n, 3, self.heads, dh))?;
        let split = |i: usize| -> Result<Tensor> {
            Ok(qkv.narrow(2, i, 1)?.squeeze(2)?.transpose(1, 2)?.contiguous()?)
        };
        let (q, k, v) = (split(0)?, split(1)?, split(2)?);
        let scores = (q.matmul(&k.t()?)? / (dh as f64).sqrt())?.broadcast_add(mask)?;
        let att = softmax_last(&scores)?;
        let y = att.matmul(&v)?.transpose(1, 2)?.reshape((b, n, d))?;
        self.out.forward(&y)
    }
}

/// Pre-norm transformer layer with a GELU feed-forward block.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    norm1: LayerNorm,
    attn: SelfAttention,
    norm2: LayerNorm,
    ff_in: Linear,
    ff_out: Linear,
}

impl TransformerBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        ffn_mult: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d, rng)?,
            attn: SelfAttention::new(store, &format!("{name}.attn"), d, heads, rng)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d, rng)?,
            ff_in: Linear::new(store, &format!("{name}.ff_in"), d, ffn_mult * d, true, rng)?,
            ff_out: Linear::new(store, &format!("{name}.ff_out"), ffn_mult * d, d, true, rng)?,
        })
    }

    pub fn forward(&self, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
        let x = (x + self.attn.forward(&self.norm1.forward(x)?, mask)?)?;
        let h = self.ff_in.forward(&self.norm2.forward(&x)?)?.gelu()?;
        Ok((&x + self.ff_out.forward(&h)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0], [0.0, 0.0, -1e9]], &Device::Cpu).unwrap();
        let s = softmax_last(&x).unwrap().sum(1).unwrap().to_vec1::<f64>().unwrap();
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let l = log_softmax_last(&x).unwrap().exp().unwrap().sum(1).unwrap().to_vec1::<f64>().unwrap();
        assert!(l.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn causal_mask_shape() {
        let m = causal_mask(3, DType::F64, &Device::Cpu).unwrap().to_vec2::<f64>().unwrap();
        assert_eq!(m[0], vec![0.0, MASKED, MASKED]);
        assert_eq!(m[2], vec![0.0, 0.0, 0.0]);
    }
}
