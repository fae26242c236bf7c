//! Per-record linkage assessment: exact within-block top-1 similarity,
//! computed in fixed-size chunks, with a seeded fixed-size non-match sample
//! per record. The report is computed once and re-thresholded for any tau.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, GroundTruth};
use crate::matrix::Matrix;
use crate::rng::{substream, tag};
use crate::stats::quantile;

use super::blocking::{assign_blocks, BlockIndex, BlockingScheme};
use super::encode::Encoder;
use super::project::{project, Projection};
use super::similarity::Similarity;
use super::LinkageError;

/// Candidates are scored in fixed-size chunks so no full similarity matrix is
/// ever materialized; the accumulation order is row-major and deterministic.
const CHUNK: usize = 1024;

/// Assessment parameters.
#[derive(Debug, Clone)]
pub struct AssessOptions {
    pub similarity: Similarity,
    /// Blocks larger than this are truncated by seeded subsampling and the
    /// report is flagged as a lower bound. `None` disables truncation.
    pub max_block_size: Option<usize>,
    /// Per-record non-match sample size.
    pub nonmatch_sample_size: usize,
    pub seed: u64,
    /// Leave-one-out mode: skip the candidate with the same row index.
    pub exclude_identity: bool,
}

impl Default for AssessOptions {
    fn default() -> Self {
        Self {
            similarity: Similarity::Cosine,
            max_block_size: Some(5_000),
            nonmatch_sample_size: 100,
            seed: 42,
            exclude_identity: false,
        }
    }
}

/// Outcome for one original record.
#[derive(Debug, Clone, Serialize)]
pub struct RecordAssessment {
    pub block: String,
    pub candidates: usize,
    /// Maximum similarity over the candidate set; null iff no candidates.
    pub max_similarity: Option<f64>,
    /// Argmax candidate index (lowest index wins ties).
    pub argmax: Option<usize>,
    /// Highest similarity among co-blocked true counterparts, when ground
    /// truth was supplied.
    pub true_similarity: Option<f64>,
}

/// Similarity of one ground-truth pair.
#[derive(Debug, Clone, Serialize)]
pub struct GtPairSimilarity {
    pub original: usize,
    pub protected: usize,
    pub co_blocked: bool,
    pub similarity: f64,
}

/// Block-size distribution of the release-side blocks.
#[derive(Debug, Clone, Serialize)]
pub struct BlockSummary {
    pub blocks: usize,
    pub min: usize,
    pub max: usize,
    pub median: f64,
    pub mean: f64,
}

/// Identifies the fitted pipeline a report came from.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineFingerprint {
    pub scheme_label: String,
    pub encoder_hash: String,
    pub projection_strategy: String,
    pub similarity: String,
    pub seed: u64,
    /// Set when truncation or sampling was active; rates are then lower bounds.
    pub lower_bound_mode: bool,
}

/// Full per-record assessment. Supports evaluating any threshold without
/// recomputation.
#[derive(Debug, Clone, Serialize)]
pub struct AssessmentReport {
    pub fingerprint: PipelineFingerprint,
    pub n_original: usize,
    pub n_protected: usize,
    pub records: Vec<RecordAssessment>,
    /// Seeded fixed-size non-match similarity sample per record.
    pub nonmatch_samples: Vec<Vec<f64>>,
    /// Ground-truth pair similarities, when ground truth was supplied.
    pub gt_pairs: Option<Vec<GtPairSimilarity>>,
    pub block_summary: BlockSummary,
}

impl AssessmentReport {
    /// Fraction of original records with at least one candidate at or above
    /// `tau`. The denominator is all original records, including those with
    /// empty candidate sets.
    pub fn cvpl_lr(&self, tau: f64) -> f64 {
        let linked = self
            .records
            .iter()
            .filter(|r| r.max_similarity.is_some_and(|s| s >= tau))
            .count();
        linked as f64 / self.records.len() as f64
    }

    /// Linkage rate over a resampled multiset of record indices.
    pub fn cvpl_lr_over(&self, tau: f64, indices: &[usize]) -> f64 {
        if indices.is_empty() {
            return 0.0;
        }
        let linked = indices
            .iter()
            .filter(|&&i| self.records[i].max_similarity.is_some_and(|s| s >= tau))
            .count();
        linked as f64 / indices.len() as f64
    }

    /// Linkage-rate curve over a threshold grid.
    pub fn curve(&self, taus: &[f64]) -> Vec<(f64, f64)> {
        taus.iter().map(|&t| (t, self.cvpl_lr(t))).collect()
    }

    /// Mean candidate-set size over original records.
    pub fn mean_candidates(&self) -> f64 {
        let total: usize = self.records.iter().map(|r| r.candidates).sum();
        total as f64 / self.records.len() as f64
    }

    /// All stored non-match similarities pooled into one sample.
    pub fn pooled_nonmatch(&self) -> Vec<f64> {
        self.nonmatch_samples.iter().flatten().copied().collect()
    }
}

fn block_summary(index: &BlockIndex) -> BlockSummary {
    let mut sizes = index.block_sizes();
    if sizes.is_empty() {
        return BlockSummary { blocks: 0, min: 0, max: 0, median: 0.0, mean: 0.0 };
    }
    sizes.sort_unstable();
    let sf: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    BlockSummary {
        blocks: sizes.len(),
        min: sizes[0],
        max: *sizes.last().unwrap(),
        median: quantile(&sf, 0.5),
        mean: sf.iter().sum::<f64>() / sf.len() as f64,
    }
}

/// Deterministic truncation of an oversized block, seeded by block label.
fn truncate_block(members: &[usize], limit: usize, seed: u64, label: &str) -> Vec<usize> {
    let mut rng = substream(seed, &[tag("block_truncation"), tag(label)]);
    let mut pool: Vec<usize> = members.to_vec();
    for i in 0..limit {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut kept = pool[..limit].to_vec();
    kept.sort_unstable();
    kept
}

pub(crate) struct PreparedBlocks {
    pub or_blocks: Vec<String>,
    pub pr_blocks: Vec<String>,
}

/// Core assessment over already-projected latent rows.
pub(crate) fn assess_latents(
    z_or: &Matrix,
    z_pr: &Matrix,
    blocks: &PreparedBlocks,
    options: &AssessOptions,
    gt: Option<&GroundTruth>,
    fingerprint_base: PipelineFingerprint,
) -> Result<AssessmentReport, LinkageError> {
    if z_or.n_cols() != z_pr.n_cols() {
        return Err(LinkageError::DimensionMismatch { expected: z_or.n_cols(), got: z_pr.n_cols() });
    }
    let n = z_or.n_rows();
    let m = z_pr.n_rows();
    let pr_index = BlockIndex::build(&blocks.pr_blocks);
    let summary = block_summary(&pr_index);

    // Group original records by block so evaluation parallelizes per block.
    let mut or_groups: std::collections::HashMap<&str, Vec<usize>> = std::collections::HashMap::new();
    for (i, b) in blocks.or_blocks.iter().enumerate() {
        or_groups.entry(b.as_str()).or_default().push(i);
    }
    let mut group_list: Vec<(&str, Vec<usize>)> = or_groups.into_iter().collect();
    group_list.sort_by(|a, b| a.0.cmp(b.0));

    let lower_bound = options
        .max_block_size
        .is_some_and(|limit| pr_index.iter().any(|(_, members)| members.len() > limit));

    let sim = options.similarity;
    let results: Vec<(usize, RecordAssessment, Vec<f64>)> = group_list
        .par_iter()
        .flat_map(|(label, originals)| {
            let full = pr_index.candidates(label);
            let cands: Vec<usize> = match options.max_block_size {
                Some(limit) if full.len() > limit => truncate_block(full, limit, options.seed, label),
                _ => full.to_vec(),
            };
            originals
                .iter()
                .map(|&i| {
                    let zx = z_or.row(i);
                    let mut best: Option<(f64, usize)> = None;
                    let mut evaluated = 0usize;
                    for chunk in cands.chunks(CHUNK) {
                        for &j in chunk {
                            if options.exclude_identity && j == i {
                                continue;
                            }
                            evaluated += 1;
                            let s = sim.score(zx, z_pr.row(j));
                            if best.map_or(true, |(bs, _)| s > bs) {
                                best = Some((s, j));
                            }
                        }
                    }
                    // Seeded per-record non-match sample, drawn without
                    // replacement from the non-argmax candidates.
                    let sample = match best {
                        Some((_, argmax)) => {
                            let mut others: Vec<usize> = cands
                                .iter()
                                .copied()
                                .filter(|&j| j != argmax && !(options.exclude_identity && j == i))
                                .collect();
                            let take = options.nonmatch_sample_size.min(others.len());
                            let mut rng = substream(options.seed, &[tag("nonmatch"), i as u64]);
                            for t in 0..take {
                                let j = rng.gen_range(t..others.len());
                                others.swap(t, j);
                            }
                            others[..take].iter().map(|&j| sim.score(zx, z_pr.row(j))).collect()
                        }
                        None => Vec::new(),
                    };
                    let record = RecordAssessment {
                        block: (*label).to_string(),
                        candidates: evaluated,
                        max_similarity: best.map(|(s, _)| s),
                        argmax: best.map(|(_, j)| j),
                        true_similarity: None,
                    };
                    (i, record, sample)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut records: Vec<Option<RecordAssessment>> = (0..n).map(|_| None).collect();
    let mut samples: Vec<Vec<f64>> = (0..n).map(|_| Vec::new()).collect();
    for (i, rec, sample) in results {
        records[i] = Some(rec);
        samples[i] = sample;
    }
    let mut records: Vec<RecordAssessment> =
        records.into_iter().map(|r| r.expect("every record assessed")).collect();

    let gt_pairs = gt.map(|gt| {
        gt.pairs()
            .iter()
            .map(|&(i, j)| {
                debug_assert!(i < n && j < m);
                GtPairSimilarity {
                    original: i,
                    protected: j,
                    co_blocked: blocks.or_blocks[i] == blocks.pr_blocks[j],
                    similarity: sim.score(z_or.row(i), z_pr.row(j)),
                }
            })
            .collect::<Vec<_>>()
    });
    if let Some(pairs) = &gt_pairs {
        for p in pairs {
            if p.co_blocked && !(options.exclude_identity && p.original == p.protected) {
                let slot = &mut records[p.original].true_similarity;
                if slot.map_or(true, |s| p.similarity > s) {
                    *slot = Some(p.similarity);
                }
            }
        }
    }

    Ok(AssessmentReport {
        fingerprint: PipelineFingerprint { lower_bound_mode: lower_bound, ..fingerprint_base },
        n_original: n,
        n_protected: m,
        records,
        nonmatch_samples: samples,
        gt_pairs,
        block_summary: summary,
    })
}

/// Assess every original record against its within-block candidates.
///
/// Encoder and projection must have been fitted on this dataset pair; the
/// result is deterministic and independent of thread scheduling.
pub fn assess(
    dor: &Dataset,
    dpr: &Dataset,
    scheme: &BlockingScheme,
    encoder: &Encoder,
    projection: &Projection,
    options: &AssessOptions,
    gt: Option<&GroundTruth>,
) -> Result<AssessmentReport, LinkageError> {
    if projection.input_dim() != encoder.dim() {
        return Err(LinkageError::DimensionMismatch {
            expected: encoder.dim(),
            got: projection.input_dim(),
        });
    }
    let z_or = project(projection, &encoder.encode(dor)?)?;
    let z_pr = project(projection, &encoder.encode(dpr)?)?;
    let blocks = PreparedBlocks {
        or_blocks: assign_blocks(dor, scheme)?,
        pr_blocks: assign_blocks(dpr, scheme)?,
    };
    let fingerprint = PipelineFingerprint {
        scheme_label: scheme.label.clone(),
        encoder_hash: encoder.hash(),
        projection_strategy: projection.strategy.as_str().to_string(),
        similarity: options.similarity.as_str().to_string(),
        seed: options.seed,
        lower_bound_mode: false,
    };
    assess_latents(&z_or, &z_pr, &blocks, options, gt, fingerprint)
}

/// Fraction of original records whose maximum candidate similarity reaches
/// `tau`; re-thresholds the stored report without recomputation.
pub fn cvpl_lr(report: &AssessmentReport, tau: f64) -> f64 {
    report.cvpl_lr(tau)
}
