//! Comparison linkers and heuristic disclosure diagnostics.
//!
//! All baselines are evaluated under the same blocking constraint as the
//! main pipeline when a scheme is supplied, so linkage feasibility estimates
//! remain comparable.

pub mod distance;
pub mod fs;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::data::{Dataset, GroundTruth};
use crate::linkage::{assign_blocks, BlockIndex, BlockingScheme, LinkageError};
use crate::rng::{substream, tag};

pub use distance::{dcr, distance_diagnostics, nndr, rce, DistanceDiagnostics};
pub use fs::{
    fs_assess, fs_equals_cvpl_check, fs_fit, fs_precision_at_1, FsModel, FsRecord, FsReport,
};

#[derive(Error, Debug)]
pub enum BaselineError {
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("attribute {0:?} is not binary")]
    NotBinary(String),
    #[error("need at least two original records")]
    TooFewOriginals,
    #[error(transparent)]
    Linkage(#[from] LinkageError),
}

/// One uniformly chosen candidate per original record.
#[derive(Debug, Clone, Serialize)]
pub struct RandomBlockReport {
    /// Selected protected index per original record; null for empty blocks.
    pub selections: Vec<Option<usize>>,
}

impl RandomBlockReport {
    /// Fraction of originals with a counterpart whose selection hit it.
    pub fn precision_at_1(&self, gt: &GroundTruth) -> Result<f64, BaselineError> {
        if gt.is_empty() {
            return Err(BaselineError::EmptyGroundTruth);
        }
        let by_original = gt.by_original();
        let hits = by_original
            .iter()
            .filter(|(&i, targets)| self.selections[i].is_some_and(|j| targets.contains(&j)))
            .count();
        Ok(hits as f64 / by_original.len() as f64)
    }
}

/// Non-informative attacker restricted only by blocking: pick one candidate
/// uniformly at random per original record.
pub fn random_within_block(
    dor: &Dataset,
    dpr: &Dataset,
    scheme: &BlockingScheme,
    seed: u64,
) -> Result<RandomBlockReport, BaselineError> {
    let or_blocks = assign_blocks(dor, scheme)?;
    let pr_blocks = assign_blocks(dpr, scheme)?;
    let index = BlockIndex::build(&pr_blocks);
    let selections = or_blocks
        .iter()
        .enumerate()
        .map(|(i, block)| {
            let cands = index.candidates(block);
            if cands.is_empty() {
                None
            } else {
                let mut rng = substream(seed, &[tag("random_pick"), i as u64]);
                Some(cands[rng.gen_range(0..cands.len())])
            }
        })
        .collect();
    Ok(RandomBlockReport { selections })
}
