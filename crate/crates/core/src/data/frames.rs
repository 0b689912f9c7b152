//! Synthetic per-step frame features: a lossy, order-free view of the step text.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::vocab::{EOS, PAD};
use crate::error::{bail, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub n_frames: usize,
    pub d_frame: usize,
    /// Standard deviation of the i.i.d. per-frame noise.
    pub sigma: f64,
    /// Probability that a content token is masked out before projection.
    pub p_drop: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            n_frames: 8,
            d_frame: 64,
            sigma: 0.1,
            p_drop: 0.3,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 || self.d_frame == 0 {
            bail!(Config, "n_frames and d_frame must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            bail!(Config, "sigma must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.p_drop) {
            bail!(Config, "p_drop must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Fixed Gaussian projection from token ids to frame space, one row per id.
#[derive(Debug, Clone)]
pub struct FrameProjector {
    d_frame: usize,
    rows: Vec<f32>,
}

impl FrameProjector {
    pub fn new(corpus_seed: u64, vocab_len: usize, d_frame: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(corpus_seed, &[0x9e37_79b9]));
        let rows = (0..vocab_len * d_frame)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self { d_frame, rows }
    }

    pub fn d_frame(&self) -> usize {
        self.d_frame
    }

    fn row(&self, id: u32) -> &[f32] {
        let start = id as usize * self.d_frame;
        &self.rows[start..start + self.d_frame]
    }
}

/// Which content tokens survive masking. The uniform draws are taken in token
/// order before anything else, so a larger `p_drop` masks a superset.
fn keep_mask(text: &[u32], rng: &mut ChaCha8Rng, p_drop: f64) -> Vec<bool> {
    text.iter()
        .map(|&id| {
            let u: f64 = rng.random();
            id != EOS && id != PAD && u >= p_drop
        })
        .collect()
}

/// Fraction of content tokens that reach the frame features.
pub fn represented_fraction(text: &[u32], sample_seed: u64, p_drop: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let content = text.iter().filter(|&&t| t != EOS && t != PAD).count();
    if content == 0 {
        return 0.0;
    }
    let kept = keep_mask(text, &mut rng, p_drop).iter().filter(|&&k| k).count();
    kept as f64 / content as f64
}

/// `n_frames` copies of the projected bag of unmasked words, each with its own noise.
pub fn synthesize_frames(
    text: &[u32],
    sample_seed: u64,
    noise: &NoiseConfig,
    projector: &FrameProjector,
) -> Result<Vec<Vec<f32>>> {
    noise.validate()?;
    if projector.d_frame() != noise.d_frame {
        bail!(Config, "projector width {} != d_frame {}", projector.d_frame(), noise.d_frame);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
    let keep = keep_mask(text, &mut rng, noise.p_drop);
    let mut base = vec![0f32; noise.d_frame];
    for (&id, _) in text.iter().zip(&keep).filter(|(_, &k)| k) {
        for (b, p) in base.iter_mut().zip(projector.row(id)) {
            *b += p;
        }
    }
    let sigma = noise.sigma as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(sample_seed, &[1]));
    let frames = (0..noise.n_frames)
        .map(|_| {
            base.iter()
                .map(|&b| {
                    let z: f32 = StandardNormal.sample(&mut rng);
                    b + sigma * z
                })
                .collect()
        })
        .collect();
    Ok(frames)
}

/// Mixes a base seed with a list of tags (SplitMix64 finalizer per tag).
pub fn mix_seed(base: u64, tags: &[u64]) -> u64 {
    let mut x = base;
    for &t in tags {
        x = x.wrapping_add(t.wrapping_mul(0x9e37_79b9_7f4a_7c15)).wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text() -> Vec<u32> {
        vec![4, 9, 12, 5, 7, EOS]
    }

    #[test]
    fn zero_noise_rows_identical() {
        let cfg = NoiseConfig { sigma: 0.0, p_drop: 0.0, ..Default::default() };
        let proj = FrameProjector::new(1, 20, cfg.d_frame);
        let f = synthesize_frames(&text(), 42, &cfg, &proj).unwrap();
        assert_eq!(f.len(), cfg.n_frames);
        assert!(f.iter().all(|r| r == &f[0]));
        assert!(f[0].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn full_masking_ignores_text() {
        let cfg = NoiseConfig { p_drop: 1.0, ..Default::default() };
        let proj = FrameProjector::new(1, 20, cfg.d_frame);
        let a = synthesize_frames(&text(), 42, &cfg, &proj).unwrap();
        let b = synthesize_frames(&[6, 6, 8, 10, EOS], 42, &cfg, &proj).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_given_inputs() {
        let cfg = NoiseConfig { sigma: 0.1, p_drop: 0.3, ..Default::default() };
        let proj = FrameProjector::new(9, 20, cfg.d_frame);
        let a = synthesize_frames(&text(), 5, &cfg, &proj).unwrap();
        let b = synthesize_frames(&text(), 5, &cfg, &FrameProjector::new(9, 20, cfg.d_frame)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_degenerate_shapes() {
        let proj = FrameProjector::new(1, 20, 64);
        let cfg = NoiseConfig { n_frames: 0, ..Default::default() };
        assert!(synthesize_frames(&text(), 1, &cfg, &proj).is_err());
        let cfg = NoiseConfig { d_frame: 0, ..Default::default() };
        assert!(synthesize_frames(&text(), 1, &cfg, &proj).is_err());
    }

    #[test]
    fn represented_fraction_is_monotone_in_p_drop() {
        let t: Vec<u32> = (4..40).chain([EOS]).collect();
        for seed in 0..20 {
            let mut prev = 1.0;
            for k in 0..=10 {
                let f = represented_fraction(&t, seed, k as f64 / 10.0);
                assert!(f <= prev);
                prev = f;
            }
            assert_eq!(represented_fraction(&t, seed, 0.0), 1.0);
            assert_eq!(represented_fraction(&t, seed, 1.0), 0.0);
        }
    }
}
