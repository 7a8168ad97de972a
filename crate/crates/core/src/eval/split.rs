//! Stratified evaluation splits over Reference cells.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CellMetadata, Split};

pub const TRAIN_FRACTION: f64 = 0.5;
pub const VAL_FRACTION: f64 = 0.2;
pub const TEST_FRACTION: f64 = 0.3;
pub const SEEN_TYPE_FRACTION: f64 = 0.6;
/// Types smaller than this go entirely to Train.
pub const MIN_STRATIFIED_TYPE_SIZE: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Supervised,
    ZeroShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
    Test,
    Seen,
    Unseen,
    /// Query cells and unlabeled cells take no part in the split.
    Excluded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub seed: u64,
    pub roles: Vec<Role>,
    /// Zero-shot only: types whose cells are Seen.
    pub seen_types: Vec<String>,
    pub unseen_types: Vec<String>,
}

impl SplitPlan {
    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    pub fn cells_with(&self, role: Role) -> Vec<usize> {
        (0..self.roles.len()).filter(|&i| self.roles[i] == role).collect()
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Reference cells grouped by cell type, in type-name order.
fn reference_by_type(meta: &CellMetadata) -> BTreeMap<&str, Vec<usize>> {
    let mut by_type: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in meta.iter().enumerate() {
        if r.split == Split::Reference {
            if let Some(t) = &r.cell_type {
                by_type.entry(t.as_str()).or_default().push(i);
            }
        }
    }
    by_type
}

/// Supervised: per type, round-half-up 50% Train and 20% Val, the rest
/// Test. Zero-shot: ⌈60%⌉ of types Seen, the rest Unseen.
pub fn make_split(meta: &CellMetadata, mode: SplitMode, seed: u64) -> Result<SplitPlan> {
    let by_type = reference_by_type(meta);
    if by_type.is_empty() {
        return Err(Error::Data("no labeled reference cells to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut roles = vec![Role::Excluded; meta.len()];
    let mut seen_types = Vec::new();
    let mut unseen_types = Vec::new();
    match mode {
        SplitMode::Supervised => {
            for (t, cells) in &by_type {
                let n = cells.len();
                if n < MIN_STRATIFIED_TYPE_SIZE {
                    log::warn!("cell type `{t}` has {n} cells; all placed in train");
                    for &c in cells {
                        roles[c] = Role::Train;
                    }
                    continue;
                }
                let mut shuffled = cells.clone();
                shuffled.shuffle(&mut rng);
                let n_train = round_half_up(TRAIN_FRACTION * n as f64);
                let n_val = round_half_up(VAL_FRACTION * n as f64).min(n - n_train);
                for (k, &c) in shuffled.iter().enumerate() {
                    roles[c] = if k < n_train {
                        Role::Train
                    } else if k < n_train + n_val {
                        Role::Val
                    } else {
                        Role::Test
                    };
                }
            }
        }
        SplitMode::ZeroShot => {
            let mut types: Vec<&str> = by_type.keys().copied().collect();
            types.shuffle(&mut rng);
            let n_seen = (SEEN_TYPE_FRACTION * types.len() as f64).ceil() as usize;
            for (k, t) in types.iter().enumerate() {
                let role = if k < n_seen { Role::Seen } else { Role::Unseen };
                for &c in &by_type[t] {
                    roles[c] = role;
                }
                if role == Role::Seen {
                    seen_types.push(t.to_string());
                } else {
                    unseen_types.push(t.to_string());
                }
            }
            seen_types.sort();
            unseen_types.sort();
        }
    }
    Ok(SplitPlan {
        mode,
        seed,
        roles,
        seen_types,
        unseen_types,
    })
}
