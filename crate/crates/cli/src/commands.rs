//! Subcommand implementations.
//!
//! Commands over many cases share one shape: validate configuration up
//! front (usage errors abort the whole run), then process cases on a
//! sized worker pool where each failure is caught and recorded instead
//! of stopping the batch. Reports are assembled single-threaded from
//! outcomes sorted by case id, so a re-run with any worker count writes
//! byte-identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use modaprep_core::augment::{at_variant_path, expand_dataset, reduce_tumor_signal};
use modaprep_core::ensemble::{
    argmax_labels, average_probs, kfold_split, read_probability_volume,
};
use modaprep_core::error::{Error, Result};
use modaprep_core::fid::fid_between_files;
use modaprep_core::manifest::{CaseEntry, DatasetManifest, RunConfig};
use modaprep_core::metrics::{aggregate, evaluate_case, render_table, AggregateReport, CaseMetrics};
use modaprep_core::nifti;
use modaprep_core::pipeline::{normalize_intensity, preprocess_case, stack_z};
use modaprep_core::slice_io::{export_slices, import_slices, SliceFormat, SIDECAR_NAME};
use modaprep_core::volume::{LABEL_COCHLEA, LABEL_TUMOR};

use crate::args::{self, Cli, Command};
use crate::report::RunReport;

/// Labels scored by `evaluate`: tumor and cochlea (background skipped).
pub const EVAL_LABELS: [u8; 2] = [LABEL_TUMOR, LABEL_COCHLEA];

/// Whether a command run completed cleanly or with failed cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Every case succeeded.
    Success,
    /// At least one case failed; details are in the run report.
    PartialFailure,
}

/// Dispatch a parsed command line.
pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Stack(args) => cmd_stack(args),
        Command::Ensemble(args) => cmd_ensemble(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Fid(args) => cmd_fid(args),
        Command::Split(args) => cmd_split(args),
    }
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Err(Error::Config("jobs must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

type CaseOutcome = (String, std::result::Result<(), String>);

fn outcome_of(report: &RunReport) -> Outcome {
    if report.all_ok() {
        Outcome::Success
    } else {
        Outcome::PartialFailure
    }
}

fn nifti_stem(name: &str) -> Option<&str> {
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
}

// Label volumes in a directory: either `<case>.nii[.gz]` files at the
// top level, or `<case>/label.nii[.gz]` as written by `preprocess`.
fn discover_label_volumes(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut found = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if path.is_file() {
            if let Some(stem) = nifti_stem(&name) {
                found.insert(stem.to_string(), path);
            }
        } else if path.is_dir() {
            for label_name in ["label.nii.gz", "label.nii"] {
                let candidate = path.join(label_name);
                if candidate.is_file() {
                    found.insert(name.clone(), candidate);
                    break;
                }
            }
        }
    }
    Ok(found)
}

fn cmd_preprocess(args: args::PreprocessArgs) -> Result<Outcome> {
    let mut config = load_run_config(args.config.as_deref())?;
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    config.validate()?;

    let manifest = DatasetManifest::load(&args.manifest)?;
    std::fs::create_dir_all(&args.out)?;
    config.save_into(&args.out)?;

    if manifest.cases.is_empty() {
        eprintln!("warning: manifest '{}' has no cases", manifest.dataset);
    }

    let format = if args.png {
        SliceFormat::Png16
    } else {
        SliceFormat::F32
    };
    let out_dir = args.out.clone();
    let pipeline = config.pipeline.clone();

    let process = |case: &CaseEntry| -> Result<()> {
        let image = nifti::read_scalar(&case.image)?;
        let label = case
            .label
            .as_ref()
            .map(nifti::read_label)
            .transpose()?;
        let (stack, cropped_label) = preprocess_case(&image, label.as_ref(), &pipeline)?;
        let case_dir = out_dir.join(&case.case_id);
        export_slices(&stack, &case.case_id, &case_dir, format)?;
        if let Some(l) = cropped_label {
            nifti::write_label(&l, case_dir.join("label.nii.gz"))?;
        }
        Ok(())
    };

    let outcomes: Vec<CaseOutcome> = with_pool(config.jobs, || {
        manifest
            .cases
            .par_iter()
            .map(|case| {
                (
                    case.case_id.clone(),
                    process(case).map_err(|e| e.to_string()),
                )
            })
            .collect()
    })?;

    let report = RunReport::from_outcomes("preprocess", outcomes);
    report.save_into(&args.out)?;
    report.print_summary();
    Ok(outcome_of(&report))
}

fn cmd_augment(args: args::AugmentArgs) -> Result<Outcome> {
    let mut config = load_run_config(args.config.as_deref())?;
    if let Some(factor) = args.factor {
        config.augment.intensity_factor = factor;
    }
    if let Some(label) = args.label {
        config.augment.target_label = label;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    let spec = config.augment;
    spec.validate()?; // config errors abort before anything is written

    let manifest = DatasetManifest::load(&args.manifest)?;
    let expanded = expand_dataset(&manifest, &spec)?;

    let normalize_first = args.normalize_first;
    let materialize = |case: &CaseEntry| -> Result<()> {
        let label_path = case.label.as_ref().expect("filtered to labeled cases");
        let image = nifti::read_scalar(&case.image)?;
        let image = if normalize_first {
            normalize_intensity(&image)
        } else {
            image
        };
        let labels = nifti::read_label(label_path)?;
        let variant = reduce_tumor_signal(&image, &labels, &spec)?;
        nifti::write_scalar(&variant, at_variant_path(&case.image))?;
        Ok(())
    };

    let to_process: Vec<&CaseEntry> = manifest
        .cases
        .iter()
        .filter(|c| !c.augmented && c.label.is_some())
        .collect();
    let outcomes: Vec<CaseOutcome> = with_pool(config.jobs, || {
        to_process
            .par_iter()
            .map(|case| {
                (
                    format!("{}_at", case.case_id),
                    materialize(case).map_err(|e| e.to_string()),
                )
            })
            .collect()
    })?;

    let out_path = args.out.clone().unwrap_or_else(|| {
        let stem = args
            .manifest
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "manifest".into());
        args.manifest.with_file_name(format!("{stem}_at.json"))
    });
    expanded.save(&out_path)?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        config.save_into(dir)?;
    }
    println!(
        "augment: expanded {} -> {} cases, manifest written to {}",
        manifest.cases.len(),
        expanded.cases.len(),
        out_path.display()
    );

    let report = RunReport::from_outcomes("augment", outcomes);
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(dir.join("augment_report.json"), json)?;
    }
    report.print_summary();
    Ok(outcome_of(&report))
}

fn cmd_stack(args: args::StackArgs) -> Result<Outcome> {
    // Either a single case directory or a directory of case directories.
    let mut case_dirs: Vec<PathBuf> = Vec::new();
    if args.slices.join(SIDECAR_NAME).is_file() {
        case_dirs.push(args.slices.clone());
    } else {
        for entry in std::fs::read_dir(&args.slices)? {
            let path = entry?.path();
            if path.is_dir() && path.join(SIDECAR_NAME).is_file() {
                case_dirs.push(path);
            }
        }
        case_dirs.sort();
    }
    if case_dirs.is_empty() {
        return Err(Error::Config(format!(
            "no {SIDECAR_NAME} found under {}",
            args.slices.display()
        )));
    }

    std::fs::create_dir_all(&args.out)?;
    let out_dir = args.out.clone();
    let process = |dir: &Path| -> Result<String> {
        let sidecar = modaprep_core::slice_io::read_sidecar(dir)?;
        let stack = import_slices(dir)?;
        let volume = stack_z(&stack)?;
        nifti::write_scalar(&volume, out_dir.join(format!("{}.nii.gz", sidecar.case_id)))?;
        Ok(sidecar.case_id)
    };

    let jobs = args.jobs.unwrap_or(1);
    let outcomes: Vec<CaseOutcome> = with_pool(jobs, || {
        case_dirs
            .par_iter()
            .map(|dir| {
                let fallback = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| dir.display().to_string());
                match process(dir) {
                    Ok(case_id) => (case_id, Ok(())),
                    Err(e) => (fallback, Err(e.to_string())),
                }
            })
            .collect()
    })?;

    let report = RunReport::from_outcomes("stack", outcomes);
    report.save_into(&args.out)?;
    report.print_summary();
    Ok(outcome_of(&report))
}

// Probability sidecars in a member directory: every `<case>.json`
// except files this toolkit writes for other purposes.
fn probability_sidecars(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    const RESERVED: [&str; 4] = [
        "report.json",
        "run_config.json",
        "evaluation.json",
        "folds.json",
    ];
    let mut found = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if path.is_file() && name.ends_with(".json") && !RESERVED.contains(&name.as_str()) {
            found.insert(name.trim_end_matches(".json").to_string(), path);
        }
    }
    Ok(found)
}

fn cmd_ensemble(args: args::EnsembleArgs) -> Result<Outcome> {
    let member_cases: Vec<BTreeMap<String, PathBuf>> = args
        .members
        .iter()
        .map(|dir| probability_sidecars(dir))
        .collect::<Result<_>>()?;
    let mut all_cases: Vec<String> = member_cases
        .iter()
        .flat_map(|m| m.keys().cloned())
        .collect();
    all_cases.sort_unstable();
    all_cases.dedup();
    if all_cases.is_empty() {
        return Err(Error::Config(
            "no probability sidecars found in the member directories".into(),
        ));
    }

    std::fs::create_dir_all(&args.out)?;
    let out_dir = args.out.clone();
    let members = &member_cases;
    let member_dirs = &args.members;
    let process = |case_id: &str| -> Result<()> {
        let mut volumes = Vec::with_capacity(members.len());
        for (m, cases) in members.iter().enumerate() {
            let sidecar = cases.get(case_id).ok_or_else(|| {
                Error::Manifest(format!(
                    "case '{case_id}' is missing from member {}",
                    member_dirs[m].display()
                ))
            })?;
            volumes.push(read_probability_volume(sidecar)?);
        }
        let mean = average_probs(&volumes)?;
        let labels = argmax_labels(&mean);
        nifti::write_label(&labels, out_dir.join(format!("{case_id}.nii.gz")))?;
        Ok(())
    };

    let jobs = args.jobs.unwrap_or(1);
    let outcomes: Vec<CaseOutcome> = with_pool(jobs, || {
        all_cases
            .par_iter()
            .map(|case_id| (case_id.clone(), process(case_id).map_err(|e| e.to_string())))
            .collect()
    })?;

    let report = RunReport::from_outcomes("ensemble", outcomes);
    report.save_into(&args.out)?;
    report.print_summary();
    Ok(outcome_of(&report))
}

/// JSON document written by `evaluate`.
#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    /// Experiment name from the command line.
    pub experiment: String,
    /// Per-case metrics, keyed by case id.
    pub cases: BTreeMap<String, CaseMetrics>,
    /// Mean ± std over the evaluated cases.
    pub aggregate: AggregateReport,
    /// Cases that could not be evaluated.
    pub failed: Vec<crate::report::FailedCase>,
}

fn cmd_evaluate(args: args::EvaluateArgs) -> Result<Outcome> {
    let gt_volumes = discover_label_volumes(&args.gt)?;
    if gt_volumes.is_empty() {
        return Err(Error::Config(format!(
            "no label volumes found in {}",
            args.gt.display()
        )));
    }
    let pred_volumes = discover_label_volumes(&args.pred)?;

    let pairs: Vec<(String, PathBuf, Option<PathBuf>)> = gt_volumes
        .iter()
        .map(|(id, gt_path)| {
            (
                id.clone(),
                gt_path.clone(),
                pred_volumes.get(id).cloned(),
            )
        })
        .collect();

    let score = |gt_path: &Path, pred_path: Option<&Path>| -> Result<CaseMetrics> {
        let pred_path = pred_path.ok_or_else(|| {
            Error::Manifest(format!("no prediction found in {}", args.pred.display()))
        })?;
        let gt = nifti::read_label(gt_path)?;
        let pred = nifti::read_label(pred_path)?;
        evaluate_case(&pred, &gt, &EVAL_LABELS)
    };

    let jobs = args.jobs.unwrap_or(1);
    let results: Vec<(String, std::result::Result<CaseMetrics, String>)> =
        with_pool(jobs, || {
            pairs
                .par_iter()
                .map(|(id, gt_path, pred_path)| {
                    (
                        id.clone(),
                        score(gt_path, pred_path.as_deref()).map_err(|e| e.to_string()),
                    )
                })
                .collect()
        })?;

    let mut cases: BTreeMap<String, CaseMetrics> = BTreeMap::new();
    let mut failed = Vec::new();
    for (id, result) in results {
        match result {
            Ok(metrics) => {
                cases.insert(id, metrics);
            }
            Err(error) => failed.push(crate::report::FailedCase {
                case_id: id,
                error,
            }),
        }
    }
    failed.sort_unstable_by(|a, b| a.case_id.cmp(&b.case_id));
    if cases.is_empty() {
        return Err(Error::Manifest(format!(
            "no case could be evaluated; first failure: {}",
            failed
                .first()
                .map(|f| format!("{}: {}", f.case_id, f.error))
                .unwrap_or_default()
        )));
    }

    let ordered: Vec<CaseMetrics> = cases.values().cloned().collect();
    let summary = aggregate(&ordered)?;
    print!("{}", render_table(&[(args.name.clone(), &summary)]));
    if !failed.is_empty() {
        for failure in &failed {
            eprintln!("  {}: {}", failure.case_id, failure.error);
        }
    }

    let had_failures = !failed.is_empty();
    let report = EvaluationReport {
        experiment: args.name,
        cases,
        aggregate: summary,
        failed,
    };
    let out_path = args
        .out
        .unwrap_or_else(|| args.pred.join("evaluation.json"));
    std::fs::write(
        &out_path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    println!("report written to {}", out_path.display());

    Ok(if had_failures {
        Outcome::PartialFailure
    } else {
        Outcome::Success
    })
}

fn cmd_fid(args: args::FidArgs) -> Result<Outcome> {
    let fid = fid_between_files(&args.features_a, &args.features_b)?;
    println!("{fid}");
    if let Some(out) = args.out {
        let json = serde_json::json!({ "fid": fid });
        std::fs::write(out, serde_json::to_string_pretty(&json).expect("serializes"))?;
    }
    Ok(Outcome::Success)
}

fn cmd_split(args: args::SplitArgs) -> Result<Outcome> {
    let manifest = DatasetManifest::load(&args.manifest)?;
    let ids: Vec<String> = manifest.cases.iter().map(|c| c.case_id.clone()).collect();
    let assignment = kfold_split(&ids, args.folds, args.seed)?;
    let json = serde_json::to_string_pretty(&assignment).expect("assignment serializes");
    match args.out {
        Some(path) => {
            std::fs::write(&path, json)?;
            println!(
                "split: {} cases into {} folds, written to {}",
                ids.len(),
                args.folds,
                path.display()
            );
        }
        None => println!("{json}"),
    }
    Ok(Outcome::Success)
}
