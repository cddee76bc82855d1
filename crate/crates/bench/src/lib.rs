//! Seeded inputs shared by the benchmarks.

use prodreid_core::{FeatureVector, GallerySnapshot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `n` random unit vectors spread over 18 labels.
pub fn random_gallery(n: usize, dim: usize, seed: u64) -> GallerySnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n).map(|i| {
        FeatureVector::new(format!("r{i:07}"), format!("c{:02}", i % 18), unit_vector(&mut rng, dim))
            .expect("finite unit vector")
    });
    GallerySnapshot::from_records(dim, records).expect("unique ids")
}

pub fn random_queries(count: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| unit_vector(&mut rng, dim)).collect()
}
