//! Distillation losses over already-paired features.

use candle_core::{DType, Tensor, D};

use crate::error::{bail, Result};
use crate::model::layers::{log_softmax_last, softmax_last};

/// Norms below this are treated as zero when normalizing for cosine similarity.
const MIN_NORM: f64 = 1e-12;

fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norms = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?;
    let min = norms.to_dtype(DType::F64)?.flatten_all()?.min(0)?.to_scalar::<f64>()?;
    if !(min > MIN_NORM) {
        bail!(Similarity, "projected feature with zero norm");
    }
    Ok(x.broadcast_div(&norms)?)
}

/// `(K_s, K_t)` cosine similarities between rows of `zs` and rows of `zt`.
pub fn similarity_matrix(zs: &Tensor, zt: &Tensor) -> Result<Tensor> {
    if zs.rank() != 2 || zt.rank() != 2 || zs.dim(1)? != zt.dim(1)? {
        bail!(Input, "similarity needs matching (K, d) inputs, got {:?} and {:?}", zs.dims(), zt.dims());
    }
    Ok(l2_normalize(zs)?.matmul(&l2_normalize(zt)?.t()?)?)
}

/// Hard negatives from a square similarity matrix `s[student][teacher]`:
/// for each anchor `k`, the teacher index `i != k` maximizing `s[k][i]` and the
/// student index `j != k` maximizing `s[j][k]`. Ties go to the lowest index.
/// Empty when `K < 2`.
pub fn hard_negatives(s: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>) {
    let k = s.len();
    if k < 2 {
        return (Vec::new(), Vec::new());
    }
    let pick = |score: &dyn Fn(usize) -> f64, anchor: usize| {
        let mut best = usize::MAX;
        for c in (0..k).filter(|&c| c != anchor) {
            if best == usize::MAX || score(c) > score(best) {
                best = c;
            }
        }
        best
    };
    let rows = (0..k).map(|a| pick(&|i| s[a][i], a)).collect();
    let cols = (0..k).map(|a| pick(&|j| s[j][a], a)).collect();
    (rows, cols)
}

fn selector(rows: usize, picks: impl Iterator<Item = (usize, usize)>, like: &Tensor) -> Result<Tensor> {
    let mut data = vec![0.0f64; rows * rows];
    for (r, c) in picks {
        data[r * rows + c] = 1.0;
    }
    Ok(Tensor::from_vec(data, (rows, rows), like.device())?.to_dtype(like.dtype())?)
}

/// Triplet loss with in-batch hard negatives over projected pairs
/// `zs[k] <-> zt[k]`, summed over `k`. Returns a scalar tensor.
pub fn ccd_loss_projected(zs: &Tensor, zt: &Tensor, alpha: f64) -> Result<Tensor> {
    if zs.dims() != zt.dims() {
        bail!(Input, "paired features differ in shape: {:?} vs {:?}", zs.dims(), zt.dims());
    }
    let k = zs.dim(0)?;
    if k == 0 {
        bail!(Input, "empty tap batch");
    }
    let s = similarity_matrix(zs, zt)?;
    if k == 1 {
        return Ok((s.sum_all()? * 0.0)?);
    }
    let values = s.to_dtype(DType::F64)?.to_vec2::<f64>()?;
    let (neg_t, neg_s) = hard_negatives(&values);
    let eye = selector(k, (0..k).map(|a| (a, a)), &s)?;
    let sel_t = selector(k, neg_t.iter().enumerate().map(|(a, &i)| (a, i)), &s)?;
    let sel_s = selector(k, neg_s.iter().enumerate().map(|(a, &j)| (j, a)), &s)?;
    let pos = (&s * &eye)?.sum(1)?;
    let anchored_s = (&s * &sel_t)?.sum(1)?;
    let anchored_t = (&s * &sel_s)?.sum(0)?;
    let h1 = ((anchored_s - &pos)? + alpha)?;
    let h2 = ((anchored_t - &pos)? + alpha)?;
    let hinge = |h: Tensor| -> Result<Tensor> {
        // Constant activity mask: the boundary h = 0 gets gradient 0.
        let active = h.detach().gt(0.0)?.to_dtype(h.dtype())?;
        Ok((h * active)?.sum_all()?)
    };
    Ok((hinge(h1)? + hinge(h2)?)?)
}

/// Mean squared difference over pairs and feature dimensions.
pub fn feature_l2_projected(zs: &Tensor, zt: &Tensor) -> Result<Tensor> {
    if zs.dims() != zt.dims() {
        bail!(Input, "paired features differ in shape: {:?} vs {:?}", zs.dims(), zt.dims());
    }
    if zs.elem_count() == 0 {
        bail!(Input, "empty tap batch");
    }
    Ok((zs - zt)?.sqr()?.mean_all()?)
}

/// `KL(softmax(teacher / tau) || softmax(student / tau)) * tau^2`, averaged
/// over positions where `mask` is 1. Logits are `(..., V)`, the mask drops the
/// last dimension.
pub fn logits_distill_loss(student: &Tensor, teacher: &Tensor, mask: &Tensor, tau: f64) -> Result<Tensor> {
    if student.dims() != teacher.dims() {
        bail!(Input, "logit shapes differ: {:?} vs {:?}", student.dims(), teacher.dims());
    }
    if student.rank() < 1 || mask.dims() != &student.dims()[..student.rank() - 1] {
        bail!(Input, "mask shape {:?} does not match logits {:?}", mask.dims(), student.dims());
    }
    if !(tau > 0.0) {
        bail!(Config, "temperature must be positive");
    }
    let count = mask.to_dtype(DType::F64)?.sum_all()?.to_scalar::<f64>()?;
    if count <= 0.0 {
        bail!(Input, "logits distillation over zero positions");
    }
    let teacher = teacher.detach();
    let p_t = softmax_last(&(teacher.clone() / tau)?)?;
    let log_t = log_softmax_last(&(teacher / tau)?)?;
    let log_s = log_softmax_last(&(student / tau)?)?;
    let kl = (p_t * (log_t - log_s)?)?.sum(D::Minus1)?;
    Ok(((kl * mask)?.sum_all()? * (tau * tau / count))?)
}

/// `l_cap + w * l_distill`, rejecting non-finite parts.
pub fn combined_loss(l_cap: &Tensor, l_distill: &Tensor, w: f64) -> Result<Tensor> {
    let cap = l_cap.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    let dis = l_distill.to_dtype(DType::F64)?.to_scalar::<f64>()?;
    if !cap.is_finite() || !dis.is_finite() || !w.is_finite() {
        bail!(Numeric, "non-finite loss: l_cap={cap}, l_distill={dis}, w={w}");
    }
    if w == 0.0 {
        return Ok(l_cap.clone());
    }
    Ok((l_cap + (l_distill * w)?)?)
}
