//! Scratch probe for directional behavior across the protection grid.

use cvpl_core::baselines::{fs_assess, fs_fit, fs_precision_at_1};
use cvpl_core::config::ExperimentConfig;
use cvpl_core::eval::metrics;
use cvpl_core::linkage::{fit_pipeline, progressive_assess, run_pipeline, AssessOptions};
use cvpl_core::protect::{k_anonymize, perturb, synthesize, PerturbLevel};
use cvpl_core::sim::generate;

fn main() {
    let cfg = ExperimentConfig::default();
    let sim_cfg = cfg.data.sim_config(42, 0.0);
    let dor = generate(&sim_cfg).unwrap();
    let base_pipeline = cfg.pipeline_config(42, dor.schema()).unwrap();
    let taus = [0.80, 0.85, 0.90, 0.95];

    println!("=== k-anonymity family (aligned blocking) ===");
    for k in [2usize, 3, 5, 7, 10, 15, 20, 30, 50] {
        let (dpr, map, gt) = k_anonymize(&dor, k).unwrap();
        let mut pipeline = base_pipeline.clone();
        pipeline.scheme = map.aligned_scheme();
        let report = run_pipeline(&dor, &dpr, &pipeline, Some(&gt)).unwrap();
        let b = metrics(&report, &gt, 0.90).unwrap();
        let fs = fs_fit(&dor, &dpr, &pipeline.scheme, &gt, 0.5).unwrap();
        let fs_rep = fs_assess(&fs, &dor, &dpr, &pipeline.scheme).unwrap();
        print!("k={k:<3} pos={} | ", map.ladder_position);
        for t in taus {
            print!("LR({t})={:.4} ", report.cvpl_lr(t));
        }
        println!(
            "TLR={:.3} P@1={:.3} FS-LR={:.3} FS-P1={:.3} meanB={:.0}",
            b.tlr,
            b.precision_at_1,
            fs_rep.fs_lr,
            fs_precision_at_1(&fs_rep, &gt).unwrap(),
            report.mean_candidates(),
        );
    }

    println!("=== perturbation family ===");
    for level in [PerturbLevel::Low, PerturbLevel::Medium, PerturbLevel::High] {
        let (dpr, gt) = perturb(&dor, level, 42).unwrap();
        let report = run_pipeline(&dor, &dpr, &base_pipeline, Some(&gt)).unwrap();
        let b = metrics(&report, &gt, 0.90).unwrap();
        let fs = fs_fit(&dor, &dpr, &base_pipeline.scheme, &gt, 0.5).unwrap();
        let fs_rep = fs_assess(&fs, &dor, &dpr, &base_pipeline.scheme).unwrap();
        println!(
            "{:<6} LR(0.9)={:.4} TLR={:.3} P@1={:.3} FS-LR={:.3} FS-P1={:.3}",
            level.as_str(),
            report.cvpl_lr(0.90),
            b.tlr,
            b.precision_at_1,
            fs_rep.fs_lr,
            fs_precision_at_1(&fs_rep, &gt).unwrap(),
        );
    }

    println!("=== synthetic family ===");
    for rho in [0.95, 0.90, 0.85, 0.80, 0.75, 0.70, 0.60] {
        let (dpr, gt) = synthesize(&dor, rho, 42).unwrap();
        let report = run_pipeline(&dor, &dpr, &base_pipeline, Some(&gt)).unwrap();
        let b = metrics(&report, &gt, 0.90).unwrap();
        println!(
            "rho={rho:<5} LR(0.9)={:.4} TLR={:.3} P@1={:.4}",
            report.cvpl_lr(0.90),
            b.tlr,
            b.precision_at_1
        );
    }

    println!("=== progressive ladder on perturb-medium ===");
    let (dpr, _) = perturb(&dor, PerturbLevel::Medium, 42).unwrap();
    let fitted = fit_pipeline(&dor, &dpr, &base_pipeline).unwrap();
    let ladder = cfg.blocking.ladder_schemes().unwrap();
    let opts = AssessOptions { seed: 42, ..AssessOptions::default() };
    let result = progressive_assess(
        &dor, &dpr, &ladder, &fitted.encoder, &fitted.projection, &opts, 0.90, -1.0,
    )
    .unwrap();
    println!("rates: {:?}", result.rates);
}
