use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::ProviderError;
use crate::text::tokenize;

/// Maps texts to unit-norm vectors of a fixed dimension.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;

    /// The output dimension, once known.
    fn dimension(&self) -> Option<usize>;

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

pub(crate) fn check_inputs(texts: &[&str]) -> Result<(), ProviderError> {
    if texts.is_empty() {
        return Err(ProviderError::EmptyInput);
    }
    if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(ProviderError::EmptyText { index });
    }
    Ok(())
}

pub(crate) fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm < 1e-12 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Offline embedder: every token gets a pseudo-random Gaussian unit vector
/// seeded by a hash of its bytes, and a text is the normalized mean of its
/// token vectors.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIMENSION: usize = 64;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let digest = Sha256::digest(token.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let v: Vec<f64> = (0..self.dimension).map(|_| StandardNormal.sample(&mut rng)).collect();
            if let Some(unit) = normalize(v) {
                return unit;
            }
        }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

impl Embedder for HashEmbedder {
    fn name(&self) -> &str {
        "hash-embedder"
    }

    fn dimension(&self) -> Option<usize> {
        Some(self.dimension)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        check_inputs(texts)?;
        texts
            .iter()
            .enumerate()
            .map(|(index, text)| {
                let tokens = tokenize(text);
                if tokens.is_empty() {
                    return Err(ProviderError::EmptyText { index });
                }
                let mut mean = vec![0.0; self.dimension];
                for tok in &tokens {
                    for (m, x) in mean.iter_mut().zip(self.token_vector(tok)) {
                        *m += x;
                    }
                }
                normalize(mean).ok_or_else(|| {
                    ProviderError::InvalidResponse(format!("token vectors of input {index} cancel out"))
                })
            })
            .collect()
    }
}
