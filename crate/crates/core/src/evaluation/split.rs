use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;
use crate::features::FeatureVector;

pub trait Labeled {
    fn label(&self) -> &str;
}

impl Labeled for FeatureVector {
    fn label(&self) -> &str {
        FeatureVector::label(self)
    }
}

impl<T: Labeled> Labeled for &T {
    fn label(&self) -> &str {
        (**self).label()
    }
}

/// Per-class stratified split into `(gallery, queries)`.
///
/// Each class of `n` items puts `min(ceil(fraction * n), n - 1)` items in the
/// gallery, so every class keeps at least one query. Classes are visited in
/// label order and shuffled with one seeded stream.
pub fn split<T: Labeled>(
    items: Vec<T>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for item in items {
        by_class.entry(item.label().to_owned()).or_default().push(item);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gallery = Vec::new();
    let mut queries = Vec::new();
    for (label, mut members) in by_class {
        let n = members.len();
        if n < 2 {
            return Err(EvalError::ClassTooSmall(label));
        }
        members.shuffle(&mut rng);
        let g = ((train_fraction * n as f64).ceil() as usize).min(n - 1);
        let rest = members.split_off(g);
        gallery.extend(members);
        queries.extend(rest);
    }
    Ok((gallery, queries))
}
