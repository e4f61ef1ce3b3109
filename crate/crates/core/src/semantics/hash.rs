//! Feature-hashing embedder: deterministic, model-free sentence vectors.

use super::EmbeddingVector;
use crate::text::tokenize;

pub const DEFAULT_HASH_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Signed token counts hashed into `dim` buckets, L2-normalized. Text
/// without tokens maps to the first basis vector.
///
/// # Panics
///
/// If `dim` is zero.
pub fn hash_embedding(caption_id: i64, text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 1, "embedding dimension must be at least 1");
    let mut v = vec![0.0f64; dim];
    for token in tokenize(text) {
        let h = fnv1a_64(token.as_bytes());
        let bucket = (h % dim as u64) as usize;
        v[bucket] += if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
    }
    // integer-valued components: the sum of squares is exact
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    EmbeddingVector::new(caption_id, v).expect("unit vector")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::semantic_variability;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a_64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a_64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a_64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_first_basis_vector() {
        let v = hash_embedding(1, "", 8);
        assert_eq!(v.values(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let v = hash_embedding(1, "?!", 1);
        assert_eq!(v.values(), &[1.0]);
    }

    #[test]
    fn identical_texts_are_bitwise_identical() {
        let a = hash_embedding(1, "a dog on the grass", 64);
        let b = hash_embedding(2, "a dog on the grass", 64);
        assert!(a
            .values()
            .iter()
            .zip(b.values())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn variability_of_mixed_triple_is_below_one() {
        let set = [
            hash_embedding(1, "a dog", 64),
            hash_embedding(2, "a dog", 64),
            hash_embedding(3, "red car", 64),
        ];
        let s = semantic_variability(&set).unwrap();
        assert!((0.0..1.0).contains(&s));
    }

    proptest! {
        #[test]
        fn unit_norm(text in "\\PC{0,80}", dim in 1usize..128) {
            let v = hash_embedding(0, &text, dim);
            prop_assert_eq!(v.dim(), dim);
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }
}
