use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::train::mix_seed;

/// One leave-one-specimen-out split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub held_out: String,
    pub train: Vec<String>,
    pub seed: u64,
}

/// One fold per specimen, in the given order.
pub fn make_folds(specimens: &[String], seed: u64) -> Result<Vec<FoldSpec>> {
    let unique: BTreeSet<&String> = specimens.iter().collect();
    if unique.len() != specimens.len() {
        return Err(Error::InvalidInput("duplicate specimen ids".into()));
    }
    if specimens.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs at least 2 specimens, got {}",
            specimens.len()
        )));
    }
    Ok(specimens
        .iter()
        .enumerate()
        .map(|(i, s)| FoldSpec {
            held_out: s.clone(),
            train: specimens.iter().filter(|o| *o != s).cloned().collect(),
            seed: mix_seed(seed, &[i as u64]),
        })
        .collect())
}
