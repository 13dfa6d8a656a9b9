//! Leave-one-subject-out folds with a seeded two-subject validation split.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{subject_order_key, Label};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub test_subject: String,
    /// Every subject except the test subject.
    pub train_subjects: Vec<String>,
    /// One subject per class drawn from `train_subjects` for early stopping.
    pub val_subjects: Vec<String>,
}

impl FoldSpec {
    /// Subjects whose windows update the parameters and fit the scaler.
    pub fn fit_subjects(&self) -> Vec<String> {
        self.train_subjects
            .iter()
            .filter(|s| !self.val_subjects.contains(s))
            .cloned()
            .collect()
    }
}

/// Derives an independent stream seed for `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 finaliser.
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded one-per-class validation pair over all subjects, for a model
/// trained without a held-out test subject. Returns `(fit, val)`.
pub fn validation_split(subjects: &[(String, Label)], seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    let mut subjects = subjects.to_vec();
    subjects.sort_by_key(|s| subject_order_key(&s.0));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let mut val = Vec::new();
    for class in [Label::Addicted, Label::NotAddicted] {
        let pool: Vec<&String> = subjects.iter().filter(|s| s.1 == class).map(|s| &s.0).collect();
        if pool.len() < 2 {
            return Err(Error::ClassMissing(format!(
                "{} subjects of class {}; training needs one for validation",
                pool.len(),
                class.as_str()
            )));
        }
        val.push((*pool.choose(&mut rng).expect("non-empty")).clone());
    }
    let fit = subjects.iter().map(|s| s.0.clone()).filter(|s| !val.contains(s)).collect();
    Ok((fit, val))
}

pub fn loso_folds(subjects: &[(String, Label)], seed: u64) -> Result<Vec<FoldSpec>> {
    let mut subjects = subjects.to_vec();
    subjects.sort_by_key(|s| subject_order_key(&s.0));
    if subjects.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "LOSO needs at least 4 subjects, got {}",
            subjects.len()
        )));
    }
    for class in [Label::Addicted, Label::NotAddicted] {
        let n = subjects.iter().filter(|s| s.1 == class).count();
        if n < 2 {
            return Err(Error::ClassMissing(format!(
                "{} subjects of class {}; every fold needs one for validation",
                n,
                class.as_str()
            )));
        }
    }
    subjects
        .iter()
        .enumerate()
        .map(|(k, (test, _))| {
            let train: Vec<&(String, Label)> = subjects.iter().filter(|s| &s.0 != test).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
            let val = [Label::Addicted, Label::NotAddicted]
                .iter()
                .map(|&class| {
                    let pool: Vec<&String> = train.iter().filter(|s| s.1 == class).map(|s| &s.0).collect();
                    (*pool.choose(&mut rng).expect("class present")).clone()
                })
                .collect();
            Ok(FoldSpec {
                test_subject: test.clone(),
                train_subjects: train.iter().map(|s| s.0.clone()).collect(),
                val_subjects: val,
            })
        })
        .collect()
}
