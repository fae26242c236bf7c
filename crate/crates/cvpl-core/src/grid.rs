//! Factorial experiment grid: protection family x strength x outlier
//! fraction x replicate seed, each cell running the full pipeline plus
//! baselines and utility.

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{
    distance_diagnostics, fs_assess, fs_fit, fs_precision_at_1, rce,
};
use crate::config::ExperimentConfig;
use crate::data::{AttrRole, Dataset, GroundTruth};
use crate::eval::{bootstrap_ci, metrics, utility, MetricBundle, UtilityReport};
use crate::linkage::run_pipeline;
use crate::protect::{k_anonymize, min_equivalence_class, perturb_with, synthesize, PerturbLevel};
use crate::rng::tag;
use crate::sim::{generate, inject_anomalies};

/// Protection family of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    KAnonymity,
    Perturbation,
    Synthetic,
}

impl Family {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "k-anon" | "k-anonymity" | "kanon" => Some(Family::KAnonymity),
            "b" | "perturb" | "perturbation" => Some(Family::Perturbation),
            "c" | "synthetic" | "synth" => Some(Family::Synthetic),
            _ => None,
        }
    }

    pub fn letter(&self) -> &'static str {
        match self {
            Family::KAnonymity => "A",
            Family::Perturbation => "B",
            Family::Synthetic => "C",
        }
    }
}

/// Protection applied in one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Mechanism {
    KAnon(usize),
    Perturb(PerturbLevelParam),
    Synthetic(f64),
}

/// Perturbation level with its configured magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbLevelParam {
    pub level: &'static str,
    pub age_mag: i64,
    pub time_mag: i64,
    pub swap_p: f64,
}

/// Identity of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellKey {
    pub family: String,
    pub level: String,
    pub p_out: f64,
    pub replicate: usize,
}

impl CellKey {
    pub fn label(&self) -> String {
        format!("{}|{}|{}|{}", self.family, self.level, self.p_out, self.replicate)
    }

    /// Filesystem-safe stem for per-cell artifacts.
    pub fn file_stem(&self) -> String {
        format!("{}_{}_p{}_r{}", self.family, self.level.replace('.', "_"), self.p_out, self.replicate)
            .replace('.', "_")
    }
}

/// Everything measured in one cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub key: CellKey,
    pub seed: u64,
    pub n_original: usize,
    pub n_protected: usize,
    /// Linkage rate at the default threshold.
    pub cvpl_lr: f64,
    pub cvpl_lr_ci: (f64, f64),
    pub fs_lr: f64,
    pub cvpl_precision_at_1: f64,
    pub fs_precision_at_1: f64,
    pub utility: UtilityReport,
    pub dcr_mean: f64,
    pub nndr_mean: f64,
    pub rce: f64,
    /// Verified smallest equivalence class (k-anonymity cells only).
    pub min_class: Option<usize>,
    pub ladder_position: Option<usize>,
    /// Linkage-rate curve over the threshold grid.
    pub curve: Vec<(f64, f64)>,
    /// Metric bundles over the threshold grid.
    pub bundles: Vec<MetricBundle>,
    pub lower_bound_mode: bool,
}

/// Grid specification: which cells to run.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub config: ExperimentConfig,
    pub families: Vec<Family>,
    /// Restrict k-anonymity levels; `None` uses the configured grid.
    pub k_values: Option<Vec<usize>>,
    pub levels: Option<Vec<PerturbLevel>>,
    pub rhos: Option<Vec<f64>>,
    /// Restrict outlier fractions; `None` uses the configured list.
    pub outlier_fractions: Option<Vec<f64>>,
    /// Restrict replicate count; `None` uses the configured seeds.
    pub replicates: Option<usize>,
}

impl GridSpec {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            config,
            families: vec![Family::KAnonymity, Family::Perturbation, Family::Synthetic],
            k_values: None,
            levels: None,
            rhos: None,
            outlier_fractions: None,
            replicates: None,
        }
    }

    /// All cells in deterministic order.
    pub fn cells(&self) -> Vec<(CellKey, Mechanism)> {
        let noise = &self.config.protection.noise_levels;
        let level_param = |l: PerturbLevel| {
            let n = match l {
                PerturbLevel::Low => &noise.low,
                PerturbLevel::Medium => &noise.medium,
                PerturbLevel::High => &noise.high,
            };
            PerturbLevelParam {
                level: l.as_str(),
                age_mag: n.age.round() as i64,
                time_mag: n.time.round() as i64,
                swap_p: l.magnitudes().2,
            }
        };
        let mut mechanisms: Vec<(String, String, Mechanism)> = Vec::new();
        for family in &self.families {
            match family {
                Family::KAnonymity => {
                    let ks = self.k_values.clone().unwrap_or_else(|| self.config.protection.k_anonymity.clone());
                    for k in ks {
                        mechanisms.push(("A".into(), format!("k{k}"), Mechanism::KAnon(k)));
                    }
                }
                Family::Perturbation => {
                    let levels = self
                        .levels
                        .clone()
                        .unwrap_or_else(|| vec![PerturbLevel::Low, PerturbLevel::Medium, PerturbLevel::High]);
                    for l in levels {
                        mechanisms.push(("B".into(), l.as_str().into(), Mechanism::Perturb(level_param(l))));
                    }
                }
                Family::Synthetic => {
                    let rhos =
                        self.rhos.clone().unwrap_or_else(|| self.config.protection.synthetic_grid.clone());
                    for rho in rhos {
                        mechanisms.push(("C".into(), format!("rho{rho}"), Mechanism::Synthetic(rho)));
                    }
                }
            }
        }
        let p_outs = self
            .outlier_fractions
            .clone()
            .unwrap_or_else(|| self.config.data.outlier_fraction.clone());
        let replicates = self.replicates.unwrap_or(self.config.evaluation.seeds);
        let mut cells = Vec::new();
        for (family, level, mech) in &mechanisms {
            for &p_out in &p_outs {
                for rep in 0..replicates {
                    cells.push((
                        CellKey { family: family.clone(), level: level.clone(), p_out, replicate: rep },
                        *mech,
                    ));
                }
            }
        }
        cells
    }
}

/// Cell seed: base seed plus a stable hash of the cell identity, so each
/// cell reproduces in isolation.
pub fn cell_seed(base: u64, key: &CellKey) -> u64 {
    base.wrapping_add(tag(&key.label()))
}

fn qi_names(ds: &Dataset) -> Vec<String> {
    ds.schema()
        .attrs()
        .iter()
        .filter(|a| a.role == AttrRole::QuasiIdentifier)
        .map(|a| a.name.clone())
        .collect()
}

/// Run one grid cell end to end.
pub fn run_cell(
    config: &ExperimentConfig,
    key: &CellKey,
    mechanism: Mechanism,
) -> Result<CellResult, String> {
    let seed = cell_seed(config.data.seed, key);
    fn err(stage: &'static str) -> impl Fn(String) -> String {
        move |e| format!("{stage}: {e}")
    }

    let sim_cfg = config.data.sim_config(seed, 0.0);
    let mut dor = generate(&sim_cfg).map_err(|e| e.to_string()).map_err(err("simulate"))?;
    if key.p_out > 0.0 {
        dor = inject_anomalies(&dor, key.p_out, seed)
            .map_err(|e| e.to_string())
            .map_err(err("anomalies"))?;
    }

    let mut aligned = None;
    let (dpr, gt, min_class, ladder_position): (Dataset, GroundTruth, Option<usize>, Option<usize>) =
        match mechanism {
            Mechanism::KAnon(k) => {
                let (dpr, map, gt) =
                    k_anonymize(&dor, k).map_err(|e| e.to_string()).map_err(err("protect"))?;
                let verified = min_equivalence_class(&dpr, &qi_names(&dpr))
                    .map_err(|e| e.to_string())
                    .map_err(err("verify"))?;
                aligned = Some(map.aligned_scheme());
                (dpr, gt, Some(verified), Some(map.ladder_position))
            }
            Mechanism::Perturb(p) => {
                let (dpr, gt) = perturb_with(&dor, p.age_mag, p.time_mag, p.swap_p, p.level, seed)
                    .map_err(|e| e.to_string())
                    .map_err(err("protect"))?;
                (dpr, gt, None, None)
            }
            Mechanism::Synthetic(rho) => {
                let (dpr, gt) =
                    synthesize(&dor, rho, seed).map_err(|e| e.to_string()).map_err(err("protect"))?;
                (dpr, gt, None, None)
            }
        };

    let mut pipeline = config
        .pipeline_config(seed, dor.schema())
        .map_err(|e| e.to_string())
        .map_err(err("config"))?;
    // Generalization cells assess under protection-aligned blocking: the
    // candidate set is then the equivalence class itself, every true pair is
    // co-blocked, and pool size scales with k.
    if let Some(scheme) = aligned.as_ref() {
        pipeline.scheme = scheme.clone();
    }
    let report = run_pipeline(&dor, &dpr, &pipeline, Some(&gt))
        .map_err(|e| e.to_string())
        .map_err(err("assess"))?;

    let taus = config.thresholds.tau_grid();
    let tau_default = config.thresholds.default;
    let bundles: Vec<MetricBundle> = taus
        .iter()
        .map(|&t| metrics(&report, &gt, t))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())
        .map_err(err("metrics"))?;
    let bundle_default =
        metrics(&report, &gt, tau_default).map_err(|e| e.to_string()).map_err(err("metrics"))?;
    let ci = bootstrap_ci(
        |r, idx| r.cvpl_lr_over(tau_default, idx),
        &report,
        config.evaluation.bootstrap,
        config.evaluation.confidence_level,
        true,
        seed,
    );

    let scheme = pipeline.scheme.clone();
    let fs_model =
        fs_fit(&dor, &dpr, &scheme, &gt, 0.5).map_err(|e| e.to_string()).map_err(err("fs"))?;
    let fs_report =
        fs_assess(&fs_model, &dor, &dpr, &scheme).map_err(|e| e.to_string()).map_err(err("fs"))?;
    let fs_p1 =
        fs_precision_at_1(&fs_report, &gt).map_err(|e| e.to_string()).map_err(err("fs"))?;

    let diag =
        distance_diagnostics(&dpr, &dor).map_err(|e| e.to_string()).map_err(err("distance"))?;
    let rce_value =
        rce(&diag, &gt, dpr.n_rows()).map_err(|e| e.to_string()).map_err(err("distance"))?;

    let utility_report =
        utility(&dor, &dpr, Some(&gt), seed).map_err(|e| e.to_string()).map_err(err("utility"))?;

    Ok(CellResult {
        key: key.clone(),
        seed,
        n_original: dor.n_rows(),
        n_protected: dpr.n_rows(),
        cvpl_lr: report.cvpl_lr(tau_default),
        cvpl_lr_ci: ci,
        fs_lr: fs_report.fs_lr,
        cvpl_precision_at_1: bundle_default.precision_at_1,
        fs_precision_at_1: fs_p1,
        utility: utility_report,
        dcr_mean: diag.dcr_mean,
        nndr_mean: diag.nndr_mean,
        rce: rce_value,
        min_class,
        ladder_position,
        curve: report.curve(&taus),
        bundles,
        lower_bound_mode: report.fingerprint.lower_bound_mode,
    })
}

/// Outcome of a grid run; failing cells are isolated, not fatal.
#[derive(Debug)]
pub struct GridOutcome {
    pub cells: Vec<CellResult>,
    pub failures: Vec<(CellKey, String)>,
}

/// Run every cell of the grid. Cells execute in parallel; results are
/// ordered by cell enumeration order regardless of scheduling.
pub fn run_grid(spec: &GridSpec) -> GridOutcome {
    let cells = spec.cells();
    let results: Vec<Result<CellResult, (CellKey, String)>> = cells
        .par_iter()
        .map(|(key, mech)| run_cell(&spec.config, key, *mech).map_err(|e| (key.clone(), e)))
        .collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(c) => ok.push(c),
            Err(f) => failures.push(f),
        }
    }
    GridOutcome { cells: ok, failures }
}

/// Seed-averaged summary, one row per (family, level, p_out).
pub fn summary_csv(cells: &[CellResult]) -> String {
    let mut groups: Vec<(String, String, f64, Vec<&CellResult>)> = Vec::new();
    for cell in cells {
        match groups
            .iter_mut()
            .find(|(f, l, p, _)| *f == cell.key.family && *l == cell.key.level && *p == cell.key.p_out)
        {
            Some((_, _, _, members)) => members.push(cell),
            None => groups.push((cell.key.family.clone(), cell.key.level.clone(), cell.key.p_out, vec![cell])),
        }
    }
    let mut out = String::from(
        "family,level,p_out,replicates,cvpl_lr,cvpl_lr_ci_low,cvpl_lr_ci_high,fs_lr,cvpl_p1,fs_p1,utility,dcr,nndr,rce\n",
    );
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    for (family, level, p_out, members) in groups {
        let pick = |f: &dyn Fn(&CellResult) -> f64| -> f64 {
            mean(&members.iter().map(|c| f(c)).collect::<Vec<_>>())
        };
        out.push_str(&format!(
            "{family},{level},{p_out},{n},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            pick(&|c| c.cvpl_lr),
            pick(&|c| c.cvpl_lr_ci.0),
            pick(&|c| c.cvpl_lr_ci.1),
            pick(&|c| c.fs_lr),
            pick(&|c| c.cvpl_precision_at_1),
            pick(&|c| c.fs_precision_at_1),
            pick(&|c| c.utility.composite),
            pick(&|c| c.dcr_mean),
            pick(&|c| c.nndr_mean),
            pick(&|c| c.rce),
            n = members.len(),
        ));
    }
    out
}
