#![allow(dead_code)]

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ccd::data::{generate_corpus, CorpusSplit, GeneratorConfig};
use ccd::model::{ArchConfig, Modality, ModelConfig};

pub fn tiny_arch(d: usize) -> ArchConfig {
    ArchConfig {
        d,
        temporal_layers: 1,
        output_layers: 1,
        heads: 2,
        text_layers: 1,
        ffn_mult: 2,
        max_len: 24,
        max_steps: 9,
    }
}

/// The smallest configuration used for finite-difference checks.
pub fn grad_config(modality: Modality) -> ModelConfig {
    ModelConfig {
        arch: ArchConfig {
            max_len: 6,
            max_steps: 4,
            ..tiny_arch(8)
        },
        modality,
        vocab_size: 11,
        n_ingredients: 5,
        d_frame: Some(4),
    }
}

pub fn small_corpus(seed: u64, n: usize) -> CorpusSplit {
    generate_corpus(seed, n, &GeneratorConfig::default()).unwrap()
}

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

pub fn flat(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap()
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    flat(a).iter().zip(flat(b)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Compares analytic gradients of `f` with central differences on up to
/// `per_var` entries of every variable. Returns the worst relative error,
/// measured as |a - n| / max(|a| + |n|, 1e-6) * 2.
pub fn grad_check(vars: &[(String, Var)], f: &dyn Fn() -> Tensor, per_var: usize, seed: u64) -> f64 {
    let loss = f();
    let grads = loss.backward().unwrap();
    let mut r = rng(seed);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for (name, var) in vars {
        let shape = var.as_tensor().dims().to_vec();
        let base = flat(var.as_tensor());
        let analytic = match grads.get(var.as_tensor()) {
            Some(g) => flat(g),
            None => vec![0.0; base.len()],
        };
        for _ in 0..per_var.min(base.len()) {
            let i = r.random_range(0..base.len());
            let eval = |delta: f64| {
                let mut v = base.clone();
                v[i] += delta;
                var.set(&Tensor::from_vec(v, shape.as_slice(), &Device::Cpu).unwrap()).unwrap();
                scalar(&f())
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            var.set(&Tensor::from_vec(base.clone(), shape.as_slice(), &Device::Cpu).unwrap()).unwrap();
            let a = analytic[i];
            let rel = 2.0 * (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-6);
            if rel > worst {
                worst = rel;
                if rel > 1e-3 {
                    eprintln!("{name}[{i}]: analytic {a} numeric {numeric}");
                }
            }
        }
    }
    worst
}

/// A random procedure over `grad_config`'s vocabulary (ids 4..11), with
/// `n_frames` random frames of width 4 per step.
pub fn toy_sample(r: &mut ChaCha8Rng, id: u64, n_steps: usize, n_frames: usize) -> ccd::data::ProcedureSample {
    use ccd::data::{ProcedureSample, StepRecord, EOS};
    let steps = (0..n_steps)
        .map(|_| {
            let len = r.random_range(1..=5);
            let mut text: Vec<u32> = (0..len).map(|_| r.random_range(4..11)).collect();
            text.push(EOS);
            let frames = (0..n_frames).map(|_| (0..4).map(|_| r.random_range(-1.0f32..1.0)).collect()).collect();
            StepRecord { text, frames }
        })
        .collect();
    let mut ingredients: Vec<u32> = (0..r.random_range(1..=3)).map(|_| r.random_range(0..5)).collect();
    ingredients.sort();
    ingredients.dedup();
    ProcedureSample { id, ingredients, steps }
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Enumerates every negative for every anchor and keeps the largest hinge.
pub fn ccd_oracle(zs: &[Vec<f64>], zt: &[Vec<f64>], alpha: f64) -> f64 {
    let k = zs.len();
    let mut total = 0.0;
    for a in 0..k {
        let pos = cos(&zs[a], &zt[a]);
        let mut worst_t: f64 = 0.0;
        let mut worst_s: f64 = 0.0;
        for n in (0..k).filter(|&n| n != a) {
            worst_t = worst_t.max(alpha - pos + cos(&zs[a], &zt[n]));
            worst_s = worst_s.max(alpha - pos + cos(&zs[n], &zt[a]));
        }
        total += worst_t + worst_s;
    }
    total
}

/// Every hinge argument, for checking distance from the kink.
pub fn hinge_args(zs: &[Vec<f64>], zt: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    let k = zs.len();
    let mut out = Vec::new();
    for a in 0..k {
        let pos = cos(&zs[a], &zt[a]);
        for n in (0..k).filter(|&n| n != a) {
            out.push(alpha - pos + cos(&zs[a], &zt[n]));
            out.push(alpha - pos + cos(&zs[n], &zt[a]));
        }
    }
    out
}

/// BLEU straight from the definition: clipped n-gram precision by brute-force
/// counting, geometric mean, brevity penalty on corpus lengths.
pub fn oracle_bleu(cands: &[Vec<&str>], refs: &[Vec<&str>], max_n: usize) -> f64 {
    let count = |seq: &[&str], gram: &[&str]| -> usize {
        if seq.len() < gram.len() {
            return 0;
        }
        (0..=seq.len() - gram.len()).filter(|&i| &seq[i..i + gram.len()] == gram).count()
    };
    let mut log_p = 0.0;
    for n in 1..=max_n {
        let (mut num, mut den) = (0usize, 0usize);
        for (c, r) in cands.iter().zip(refs) {
            if c.len() < n {
                continue;
            }
            let mut seen: Vec<&[&str]> = Vec::new();
            for i in 0..=c.len() - n {
                let g = &c[i..i + n];
                den += 1;
                if seen.contains(&g) {
                    continue;
                }
                seen.push(g);
                num += count(c, g).min(count(r, g));
            }
        }
        if num == 0 {
            return 0.0;
        }
        log_p += (num as f64 / den as f64).ln() / max_n as f64;
    }
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * log_p.exp()
}
