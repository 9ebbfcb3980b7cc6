//! Deterministic offline embedder: signed feature hashing of token unigrams
//! and bigrams, L2-normalized. Texts that share more tokens share more hashed
//! features and so score a higher cosine in expectation.

use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{normalize, Embedder, EmbeddingError, EmbeddingSpace, EmbeddingVector};
use crate::text;

pub const MOCK_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

const UNIGRAM_WEIGHT: f64 = 1.0;
const BIGRAM_WEIGHT: f64 = 0.5;
const EMPTY_FEATURE: &str = "\u{0}empty";

/// Embeds `text` into `space`. Pure in (text, space name, [`MOCK_SEED`]).
pub fn embed_mock(text: &str, space: &EmbeddingSpace) -> EmbeddingVector {
    let dim = space.dimension;
    let seed = xxh3_64_with_seed(space.name.as_bytes(), MOCK_SEED);
    let mut acc = vec![0.0f64; dim];
    let tokens = text::tokenize(text);
    let mut add = |feature: &str, weight: f64| {
        let h = xxh3_64_with_seed(feature.as_bytes(), seed);
        // Two signed slots per feature halve the variance of collisions.
        let (lo, hi) = (h as u32 as u64, h >> 32);
        let s1 = if h & (1 << 31) == 0 { 1.0 } else { -1.0 };
        let s2 = if h & (1 << 63) == 0 { 1.0 } else { -1.0 };
        acc[(lo % dim as u64) as usize] += s1 * weight;
        acc[(hi % dim as u64) as usize] += s2 * weight;
    };
    if tokens.is_empty() {
        add(EMPTY_FEATURE, 1.0);
    }
    for t in &tokens {
        add(&format!("u\u{1}{t}"), UNIGRAM_WEIGHT);
    }
    for pair in tokens.windows(2) {
        add(&format!("b\u{1}{}\u{1}{}", pair[0], pair[1]), BIGRAM_WEIGHT);
    }
    let components = match normalize(&acc) {
        Ok(c) => c,
        // Every feature cancelled out; fall back to the empty-text vector.
        Err(_) => return embed_mock("", space),
    };
    EmbeddingVector { space: space.name.clone(), components }
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    space: EmbeddingSpace,
}

impl MockEmbedder {
    pub fn new(space: EmbeddingSpace) -> Self {
        Self { space }
    }
}

impl Embedder for MockEmbedder {
    fn space(&self) -> &EmbeddingSpace {
        &self.space
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        Ok(crate::parallel::map_slice(texts, |t| embed_mock(t, &self.space)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
        a.components.iter().zip(&b.components).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
    }

    fn space() -> EmbeddingSpace {
        EmbeddingSpace::mock("mock", 256)
    }

    #[test]
    fn identical_texts_identical_vectors() {
        let a = embed_mock("graph layout for networks", &space());
        let b = embed_mock("graph layout for networks", &space());
        assert_eq!(a, b);
        assert!((dot(&a, &a) - 1.0).abs() <= 1e-6);
        assert!((a.norm() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn space_name_changes_the_vector() {
        let other = EmbeddingSpace::mock("other", 256);
        assert_ne!(embed_mock("same text", &space()).components, embed_mock("same text", &other).components);
    }

    #[test]
    fn empty_text_is_unit() {
        let v = embed_mock("", &space());
        assert!((v.norm() - 1.0).abs() <= 1e-6);
        assert_eq!(v, embed_mock("  ... ", &space()));
    }

    /// Monte Carlo over the mock itself: t2 shares 9 of 10 tokens with t1,
    /// t3 shares none. Frozen requirement: t2 wins on at least 95 of 100 draws.
    #[test]
    fn shared_tokens_raise_cosine() {
        let vocab: Vec<String> = (0..500).map(|i| format!("w{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut wins = 0;
        for _ in 0..100 {
            let mut pool = vocab.clone();
            pool.shuffle(&mut rng);
            let t1: Vec<String> = pool[..10].to_vec();
            let mut t2 = t1.clone();
            let swap = rng.random_range(0..10);
            t2[swap] = pool[10].clone();
            let t3: Vec<String> = pool[11..21].to_vec();
            let (e1, e2, e3) =
                (embed_mock(&t1.join(" "), &space()), embed_mock(&t2.join(" "), &space()), embed_mock(&t3.join(" "), &space()));
            if dot(&e1, &e2) > dot(&e1, &e3) {
                wins += 1;
            }
        }
        assert!(wins >= 95, "only {wins}/100");
    }
}
