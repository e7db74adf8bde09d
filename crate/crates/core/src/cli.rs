//! Command-line interface.
//!
//! Subcommands mirror the pipeline stages: `synth`, `preprocess`, `train`,
//! `segment`, `profile`, `grade`, `evaluate`, `report`, `agreement`. Every
//! run-configuration field can be set in a JSON config file (`--config`)
//! and overridden by a flag. Exit codes: 0 success, 2 validation error,
//! 3 stage failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::grading::{svm_predict, SvmModel};
use crate::pipeline::{
    clinician_agreement, metrics_from_artifacts, pipeline_run, read_predictions_csv,
    write_agreement_json, Manifest, ManifestRecord, MetricReport, RunConfig,
};
use crate::preprocess::{extract_retina, BinarizeMethod};
use crate::profiles::{
    grade_features, read_features_json, thickness, write_features_json, write_profile_csv,
};
use crate::rng::Rng;
use crate::scan::{
    generate_synthetic, read_mask, read_scan, write_mask, write_scan, write_sidecar, BoundarySet,
    GradeLabel, LayerMask, ScanSidecar, SynthConfig,
};
use crate::train::{split_indices, train, write_history_csv, TrainSample};

#[derive(Parser)]
#[command(
    name = "rgc-oct",
    about = "RGC-aware glaucoma analysis on ONH OCT B-scans",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flag overrides for [`RunConfig`]; unset flags keep the config-file or
/// default value.
#[derive(Args, Debug, Default, Clone)]
struct ConfigOverrides {
    /// JSON run-configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for every stage.
    #[arg(long)]
    seed: Option<u64>,
    /// Axial pixel pitch in micrometers per pixel.
    #[arg(long)]
    axial_scale: Option<f64>,
    /// Training fraction of the dataset split.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Stratify the split by grade.
    #[arg(long)]
    stratified: bool,
    /// Network input height (divisible by 16).
    #[arg(long)]
    net_height: Option<usize>,
    /// Network input width (divisible by 16).
    #[arg(long)]
    net_width: Option<usize>,
    /// Tensor smoothing sigma in pixels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Trace outlier-rejection distance in pixels.
    #[arg(long)]
    tau: Option<usize>,
    /// Median filter window (odd) for trace smoothing.
    #[arg(long)]
    median_window: Option<usize>,
    /// Binarize with a fixed threshold in [0,1] instead of Otsu.
    #[arg(long)]
    fixed_threshold: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Iterations per epoch.
    #[arg(long)]
    iters_per_epoch: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Dice-loss weight.
    #[arg(long)]
    alpha1: Option<f64>,
    /// Cross-entropy weight.
    #[arg(long)]
    alpha2: Option<f64>,
    /// Segmentation head weight in the joint objective.
    #[arg(long)]
    seg_weight: Option<f64>,
    /// Classification head weight in the joint objective.
    #[arg(long)]
    cls_weight: Option<f64>,
    /// ADADELTA decay factor.
    #[arg(long)]
    rho: Option<f64>,
    /// ADADELTA epsilon.
    #[arg(long)]
    adadelta_eps: Option<f64>,
    /// ADADELTA learning-rate scale.
    #[arg(long)]
    lr: Option<f64>,
    /// Augmented copies per training scan (0 disables augmentation).
    #[arg(long)]
    augment_copies: Option<usize>,
    /// SVM regularization strength.
    #[arg(long)]
    svm_lambda: Option<f64>,
    /// SVM subgradient epochs.
    #[arg(long)]
    svm_epochs: Option<usize>,
    /// Baseline grader threshold on mean RNFL thickness (um).
    #[arg(long)]
    rnfl_threshold: Option<f64>,
    /// Screening probability threshold.
    #[arg(long)]
    screening_threshold: Option<f64>,
}

impl ConfigOverrides {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.axial_scale {
            cfg.axial_scale_um_per_px = Some(v);
        }
        if let Some(v) = self.train_fraction {
            cfg.train_fraction = v;
        }
        if self.stratified {
            cfg.stratified_split = true;
        }
        if let Some(v) = self.net_height {
            cfg.net_input_height = v;
        }
        if let Some(v) = self.net_width {
            cfg.net_input_width = v;
        }
        if let Some(v) = self.sigma {
            cfg.preprocess.smoothing_sigma = v;
        }
        if let Some(v) = self.tau {
            cfg.preprocess.tau_px = v;
        }
        if let Some(v) = self.median_window {
            cfg.preprocess.median_window = v;
        }
        if let Some(v) = self.fixed_threshold {
            cfg.preprocess.binarize = BinarizeMethod::Fixed(v);
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.iters_per_epoch {
            cfg.train.iters_per_epoch = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.alpha1 {
            cfg.train.loss.alpha1 = v;
        }
        if let Some(v) = self.alpha2 {
            cfg.train.loss.alpha2 = v;
        }
        if let Some(v) = self.seg_weight {
            cfg.train.seg_weight = v;
        }
        if let Some(v) = self.cls_weight {
            cfg.train.cls_weight = v;
        }
        if let Some(v) = self.rho {
            cfg.train.adadelta_rho = v;
        }
        if let Some(v) = self.adadelta_eps {
            cfg.train.adadelta_eps = v;
        }
        if let Some(v) = self.lr {
            cfg.train.adadelta_lr = v;
        }
        if let Some(v) = self.augment_copies {
            if v == 0 {
                cfg.train.augment = None;
            } else {
                let mut aug = cfg.train.augment.unwrap_or_default();
                aug.copies_per_scan = v;
                cfg.train.augment = Some(aug);
            }
        }
        if let Some(v) = self.svm_lambda {
            cfg.svm_lambda = v;
        }
        if let Some(v) = self.svm_epochs {
            cfg.svm_epochs = v;
        }
        if let Some(v) = self.rnfl_threshold {
            cfg.rnfl_threshold_um = v;
        }
        if let Some(v) = self.screening_threshold {
            cfg.screening_threshold = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (scans, masks, sidecars, manifest).
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Healthy scans to generate.
        #[arg(long, default_value_t = 20)]
        healthy: usize,
        /// Early-glaucoma scans to generate.
        #[arg(long, default_value_t = 20)]
        early: usize,
        /// Advanced-glaucoma scans to generate.
        #[arg(long, default_value_t = 20)]
        advanced: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Intensity noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Axial pixel pitch in micrometers per pixel.
        #[arg(long, default_value_t = 3.0)]
        scale: f64,
        /// Skip the severity-dependent ONH cup on glaucomatous scans.
        #[arg(long)]
        no_cup: bool,
    },
    /// Structure-tensor retina extraction for one scan.
    Preprocess {
        /// Input scan (PNG or PGM).
        #[arg(long = "in")]
        input: PathBuf,
        /// Extracted retina image.
        #[arg(long)]
        out: PathBuf,
        /// Binary retina mask image.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Smoothed trace CSV (`col,ilm,gcl,ipl,choroid,valid`).
        #[arg(long)]
        traces: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Train the hybrid network on a manifest's training split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Output model container.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Segment one scan with a trained model.
    Segment {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Predicted label mask output.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Thickness profile and features from a label mask.
    Profile {
        #[arg(long)]
        mask: PathBuf,
        /// Profile CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Feature JSON output.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Axial pixel pitch in micrometers per pixel.
        #[arg(long, default_value_t = crate::scan::DEFAULT_AXIAL_SCALE_UM_PER_PX)]
        scale: f64,
    },
    /// Grade a feature vector with a trained SVM model.
    Grade {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Run the full pipeline end to end and emit a metric report.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Artifact output directory.
        #[arg(long)]
        out: PathBuf,
        /// Reuse a trained model instead of training.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Recompute the metric report from cached artifacts.
    Report {
        #[arg(long)]
        manifest: PathBuf,
        /// Artifact directory from a previous `evaluate` run.
        #[arg(long)]
        artifacts: PathBuf,
        /// Optional path for the regenerated report JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Per-clinician Pearson agreement table.
    Agreement {
        #[arg(long)]
        manifest: PathBuf,
        /// predictions.csv from an `evaluate` run.
        #[arg(long)]
        predictions: PathBuf,
        /// Agreement JSON output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth {
            out,
            healthy,
            early,
            advanced,
            height,
            width,
            seed,
            noise,
            scale,
            no_cup,
        } => cmd_synth(
            &out, healthy, early, advanced, height, width, seed, noise, scale, no_cup,
        ),
        Command::Preprocess {
            input,
            out,
            mask,
            traces,
            overrides,
        } => cmd_preprocess(&input, &out, mask.as_deref(), traces.as_deref(), &overrides),
        Command::Train {
            manifest,
            out,
            history,
            overrides,
        } => cmd_train(&manifest, &out, history.as_deref(), &overrides),
        Command::Segment {
            model,
            input,
            out,
            overrides,
        } => cmd_segment(&model, &input, &out, &overrides),
        Command::Profile {
            mask,
            out,
            features,
            scale,
        } => cmd_profile(&mask, &out, features.as_deref(), scale),
        Command::Grade { model, features } => cmd_grade(&model, &features),
        Command::Evaluate {
            manifest,
            out,
            model,
            overrides,
        } => cmd_evaluate(&manifest, &out, model.as_deref(), &overrides),
        Command::Report {
            manifest,
            artifacts,
            out,
            overrides,
        } => cmd_report(&manifest, &artifacts, out.as_deref(), &overrides),
        Command::Agreement {
            manifest,
            predictions,
            out,
        } => cmd_agreement(&manifest, &predictions, out.as_deref()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    out: &Path,
    healthy: usize,
    early: usize,
    advanced: usize,
    height: usize,
    width: usize,
    seed: u64,
    noise: f64,
    scale: f64,
    no_cup: bool,
) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rng = Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let cohorts = [
        (GradeLabel::Healthy, healthy),
        (GradeLabel::EarlyGlaucoma, early),
        (GradeLabel::AdvancedGlaucoma, advanced),
    ];
    let mut index = 0usize;
    for (grade, count) in cohorts {
        for _ in 0..count {
            let cup_region = if no_cup {
                None
            } else {
                SynthConfig::cohort_cup(grade, width, &mut rng)
            };
            let cfg =
                SynthConfig::for_grade(grade, height, width, scale, noise, cup_region, &mut rng);
            let synth = generate_synthetic(&cfg)?;
            let id = format!("scan{index:03}");
            let scan_file = format!("{id}.png");
            let mask_file = format!("{id}_mask.png");
            write_scan(&synth.scan, out.join(&scan_file))?;
            write_mask(&synth.mask, out.join(&mask_file))?;
            write_sidecar(
                &ScanSidecar {
                    id: id.clone(),
                    axial_scale_um_per_px: scale,
                    grade: Some(synth.grade),
                },
                &out.join(&scan_file),
            )?;
            records.push(ManifestRecord {
                scan_path: out.join(&scan_file),
                mask_path: Some(out.join(&mask_file)),
                grade: Some(synth.grade),
                clinician_grades: [None; 4],
            });
            index += 1;
        }
    }
    if records.is_empty() {
        return Err(Error::invalid("no scans requested"));
    }
    let manifest = Manifest { records };
    manifest.save(out.join("manifest.csv"))?;
    println!(
        "wrote {} scans ({} healthy, {} early, {} advanced) to {}",
        index,
        healthy,
        early,
        advanced,
        out.display()
    );
    Ok(())
}

fn cmd_preprocess(
    input: &Path,
    out: &Path,
    mask_out: Option<&Path>,
    traces_out: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<()> {
    let cfg = overrides.build()?;
    let scan = read_scan(input)?;
    let extraction = extract_retina(&scan, &cfg.preprocess)?;
    write_scan(&extraction.retina, out)?;
    if let Some(path) = mask_out {
        let mask = LayerMask::new(extraction.mask.clone(), scan.height(), scan.width())?;
        write_mask(&mask, path)?;
    }
    if let Some(path) = traces_out {
        // Only ILM and choroid exist at this stage; the inner columns
        // repeat them so the file matches the boundary CSV schema.
        let w = extraction.ilm.len();
        let bs = BoundarySet::new(
            extraction.ilm.clone(),
            extraction.ilm.clone(),
            extraction.choroid.clone(),
            extraction.choroid.clone(),
            vec![true; w],
        )?;
        crate::scan::write_boundaries_csv(&bs, path)?;
    }
    println!("retina written to {}", out.display());
    Ok(())
}

fn load_training_samples(
    manifest: &Manifest,
    cfg: &RunConfig,
) -> Result<(Vec<TrainSample>, Vec<usize>, Vec<usize>)> {
    let mut grades = Vec::new();
    let mut samples = Vec::new();
    for r in &manifest.records {
        let scan = read_scan(&r.scan_path)?;
        let mask_path = r.mask_path.as_ref().ok_or_else(|| {
            Error::invalid(format!(
                "record `{}` has no mask; training requires ground-truth masks",
                r.scan_id()
            ))
        })?;
        let mask = read_mask(mask_path)?;
        let grade = r
            .grade
            .or(crate::scan::read_sidecar(&r.scan_path)?.and_then(|s| s.grade))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "record `{}` has no grade; the screening head needs labels",
                    r.scan_id()
                ))
            })?;
        let extraction = extract_retina(&scan, &cfg.preprocess)?;
        let net_scan = if extraction.retina.height() == cfg.net_input_height
            && extraction.retina.width() == cfg.net_input_width
        {
            extraction.retina
        } else {
            extraction
                .retina
                .resized(cfg.net_input_height, cfg.net_input_width)?
        };
        let net_mask =
            if mask.height() == cfg.net_input_height && mask.width() == cfg.net_input_width {
                mask
            } else {
                mask.resized(cfg.net_input_height, cfg.net_input_width)?
            };
        grades.push(grade);
        samples.push(TrainSample {
            scan: net_scan,
            mask: net_mask,
            grade,
        });
    }
    let stratify = cfg.stratified_split.then_some(grades.as_slice());
    let (train_idx, test_idx) =
        split_indices(samples.len(), cfg.train_fraction, cfg.seed, stratify)?;
    Ok((samples, train_idx, test_idx))
}

fn cmd_train(
    manifest_path: &Path,
    out: &Path,
    history_out: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<()> {
    let cfg = overrides.build()?;
    let manifest = Manifest::load(manifest_path)?;
    let (samples, train_idx, _) = load_training_samples(&manifest, &cfg)?;
    let train_set: Vec<TrainSample> = train_idx.iter().map(|&i| samples[i].clone()).collect();
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let spec = crate::nn::toy_hybrid_spec(cfg.net_input_height, cfg.net_input_width)?;
    let outcome = train(spec, &train_set, &train_cfg)?;
    crate::nn::serialize::save_network(&outcome.network, out)?;
    if let Some(path) = history_out {
        write_history_csv(&outcome.history, path)?;
    }
    let last = outcome.history.last();
    println!(
        "trained {} epochs on {} scans; final loss {}",
        outcome.history.len(),
        train_set.len(),
        last.map(|h| h.total.to_string())
            .unwrap_or_else(|| "n/a".into())
    );
    println!("model written to {}", out.display());
    Ok(())
}

fn cmd_segment(model: &Path, input: &Path, out: &Path, overrides: &ConfigOverrides) -> Result<()> {
    let cfg = overrides.build()?;
    let mut network = crate::nn::serialize::load_network(model)?;
    let scan = read_scan(input)?;
    let extraction = extract_retina(&scan, &cfg.preprocess)?;
    let (_, nh, nw) = network.spec.input_shape;
    let net_scan = if extraction.retina.height() == nh && extraction.retina.width() == nw {
        extraction.retina
    } else {
        extraction.retina.resized(nh, nw)?
    };
    let pred = crate::train::predict_mask(&mut network, &net_scan)?;
    let pred = if pred.height() == scan.height() && pred.width() == scan.width() {
        pred
    } else {
        pred.resized(scan.height(), scan.width())?
    };
    write_mask(&pred, out)?;
    let prob = crate::train::predict_screening(&mut network, &net_scan)?;
    println!(
        "mask written to {}; glaucoma probability {prob:.4}",
        out.display()
    );
    Ok(())
}

fn cmd_profile(
    mask_path: &Path,
    out: &Path,
    features_out: Option<&Path>,
    scale: f64,
) -> Result<()> {
    let mask = read_mask(mask_path)?;
    let profile = thickness(&mask, scale)?;
    write_profile_csv(&profile, out)?;
    if let Some(path) = features_out {
        let features = grade_features(&profile)?;
        write_features_json(&features, path)?;
    }
    println!(
        "profile written to {} ({} of {} columns valid)",
        out.display(),
        profile.valid_count(),
        profile.width()
    );
    Ok(())
}

fn cmd_grade(model_path: &Path, features_path: &Path) -> Result<()> {
    let model = SvmModel::load_json(model_path)?;
    if !model.degenerate_features.is_empty() {
        eprintln!(
            "warning: features {:?} had zero variance at training time",
            model.degenerate_features
        );
    }
    let features = read_features_json(features_path)?;
    let (severity, margin) = svm_predict(&model, &features);
    println!(
        "{}",
        serde_json::json!({
            "grade": severity.to_grade().as_str(),
            "margin": margin,
        })
    );
    Ok(())
}

fn cmd_evaluate(
    manifest_path: &Path,
    out: &Path,
    model: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<()> {
    let cfg = overrides.build()?;
    let manifest = Manifest::load(manifest_path)?;
    let report = pipeline_run(&manifest, &cfg, out, model)?;
    print_report_summary(&report);
    println!("report written to {}", out.join("report.json").display());
    Ok(())
}

fn cmd_report(
    manifest_path: &Path,
    artifacts: &Path,
    out: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<()> {
    // Prefer the configuration cached with the artifacts so the recomputed
    // report matches the original run.
    let cached_cfg = artifacts.join("run_config.json");
    let cfg = if overrides.config.is_none() && cached_cfg.exists() {
        let mut o = overrides.clone();
        o.config = Some(cached_cfg);
        o.build()?
    } else {
        overrides.build()?
    };
    let manifest = Manifest::load(manifest_path)?;
    let report = metrics_from_artifacts(&manifest, &cfg, artifacts)?;
    let json = report.to_json()?;
    match out {
        Some(path) => {
            std::fs::write(path, &json).map_err(|e| Error::io(path, e))?;
            println!("report written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn cmd_agreement(manifest_path: &Path, predictions_path: &Path, out: Option<&Path>) -> Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    let predictions = read_predictions_csv(predictions_path)?;
    let rows = clinician_agreement(&manifest, &predictions);
    for row in &rows {
        match &row.result {
            Some(r) => println!(
                "{}: r = {:.4}, p = {:.3e}, n = {}",
                row.clinician, r.r, r.p_value, r.n
            ),
            None => println!(
                "{}: undefined (insufficient overlap or zero variance)",
                row.clinician
            ),
        }
    }
    if let Some(path) = out {
        write_agreement_json(&rows, path)?;
        println!("agreement table written to {}", path.display());
    }
    Ok(())
}

fn print_report_summary(report: &MetricReport) {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into());
    println!(
        "screening: acc {}, tpr {}, tnr {}, f1 {}",
        fmt(report.confusion.rates.accuracy),
        fmt(report.confusion.rates.recall),
        fmt(report.confusion.rates.specificity),
        fmt(report.confusion.rates.f1),
    );
    println!(
        "segmentation: mean dice {}, mean mask precision {}",
        fmt(report.seg.mean_dice),
        fmt(report.seg.mean_mask_precision)
    );
    if let Some(roc) = &report.roc {
        println!("roc auc: {:.4}", roc.auc);
    }
    if let Some(g) = &report.grading {
        println!(
            "grading: acc {}, baseline {}",
            fmt(g.accuracy),
            fmt(g.baseline_accuracy)
        );
    }
    if report.meta.axial_scale_assumed {
        println!(
            "note: axial scale {} um/px is an assumed default",
            report.meta.axial_scale_um_per_px
        );
    }
}
