//! Stable hashing primitives shared by digests, embeddings, and seeded noise.
//!
//! Everything here is deterministic across runs and platforms; the std
//! hasher is deliberately avoided so that persisted digests and golden
//! files never depend on the Rust release.

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// FNV-1a over a sequence of string tokens with a separator byte, so that
/// `["ab","c"]` and `["a","bc"]` hash differently.
pub fn fnv1a64_tokens<I, S>(tokens: I) -> u64
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for token in tokens {
        for &b in token.as_ref().as_bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
        hash ^= 0x1f;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Mix several u64s into one seed. Used to derive per-call RNG seeds from
/// the master seed plus call-site coordinates.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &p in parts {
        for b in p.to_le_bytes() {
            hash ^= u64::from(b);
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

/// Accumulate one token into a feature-hashed vector: the token picks a
/// dimension and a sign, and `weight` is added there.
pub fn hash_feature(values: &mut [f64], token: &str, weight: f64) {
    let h = fnv1a64(token.as_bytes());
    let dim = (h % values.len() as u64) as usize;
    let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
    values[dim] += sign * weight;
}

/// Lowercased alphanumeric tokens of a text. Punctuation splits tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Cosine similarity between two hashed-token vectors built from texts.
/// Used for the semantic refinement of heuristic clusters.
pub fn text_cosine(a: &str, b: &str, dims: usize) -> f64 {
    let embed = |text: &str| {
        let mut v = vec![0.0; dims];
        for tok in tokenize(text) {
            hash_feature(&mut v, &tok, 1.0);
        }
        v
    };
    let va = embed(a);
    let vb = embed(b);
    let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
