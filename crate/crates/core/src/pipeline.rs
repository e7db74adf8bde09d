//! End-to-end orchestration: manifests, run configuration, the staged
//! pipeline (preprocess, train, segment, profile, screen, grade, evaluate),
//! artifact layout, and report emission.
//!
//! Stage order follows the analysis flow: every scan is preprocessed to its
//! retina/ONH content, the hybrid network is trained on the training split,
//! test scans are segmented and profiled, the classification head screens
//! them, and only screened-glaucomatous scans receive an SVM severity
//! grade. All artifacts are plain files under one output directory so the
//! metrics stage can be re-run on cached outputs byte-for-byte.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grading::{svm_predict, svm_train, threshold_grade, Severity, ThresholdGrader};
use crate::metrics::{
    confusion_metrics, pearson, roc, segmentation_score, ConfusionCounts, ConfusionMetrics,
    CorrelationResult, RocCurve, SegmentationScore,
};
use crate::nn::{serialize, toy_hybrid_spec};
use crate::preprocess::{extract_retina, PreprocessConfig};
use crate::profiles::{grade_features, thickness, write_features_json, write_profile_csv};
use crate::scan::{
    read_mask, read_scan, write_mask, write_scan, GradeLabel, LayerMask, Scan,
    DEFAULT_AXIAL_SCALE_UM_PER_PX,
};
use crate::train::{
    predict_mask, predict_screening, split_indices, train, TrainConfig, TrainSample,
};

/// Marker dropped while a run is writing artifacts; its presence flags the
/// directory contents as stale.
const INCOMPLETE_MARKER: &str = "INCOMPLETE";

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub scan_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub grade: Option<GradeLabel>,
    pub clinician_grades: [Option<GradeLabel>; 4],
}

impl ManifestRecord {
    pub fn scan_id(&self) -> String {
        self.scan_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    /// Load a manifest CSV with header `scan,mask,grade,c1,c2,c3,c4`.
    /// Paths are resolved relative to the manifest location and must exist.
    /// Fields may be left empty; paths must not contain commas.
    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty manifest"))?;
        if header.trim() != "scan,mask,grade,c1,c2,c3,c4" {
            return Err(Error::format(
                path,
                format!("unexpected header `{header}`; expected scan,mask,grade,c1,c2,c3,c4"),
            ));
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 7 {
                return Err(Error::format(
                    path,
                    format!(
                        "line {}: expected 7 fields, found {}",
                        lineno + 2,
                        fields.len()
                    ),
                ));
            }
            let scan_path = base.join(fields[0]);
            if !scan_path.exists() {
                return Err(Error::invalid(format!(
                    "manifest line {}: scan `{}` does not exist",
                    lineno + 2,
                    scan_path.display()
                )));
            }
            let mask_path = if fields[1].is_empty() {
                None
            } else {
                let p = base.join(fields[1]);
                if !p.exists() {
                    return Err(Error::invalid(format!(
                        "manifest line {}: mask `{}` does not exist",
                        lineno + 2,
                        p.display()
                    )));
                }
                Some(p)
            };
            let parse_grade = |s: &str| -> Result<Option<GradeLabel>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    GradeLabel::parse(s).map(Some)
                }
            };
            let grade = parse_grade(fields[2])?;
            let clinician_grades = [
                parse_grade(fields[3])?,
                parse_grade(fields[4])?,
                parse_grade(fields[5])?,
                parse_grade(fields[6])?,
            ];
            records.push(ManifestRecord {
                scan_path,
                mask_path,
                grade,
                clinician_grades,
            });
        }
        if records.is_empty() {
            return Err(Error::invalid("manifest has no records"));
        }
        let mut ids = BTreeSet::new();
        for r in &records {
            if !ids.insert(r.scan_id()) {
                return Err(Error::invalid(format!(
                    "duplicate scan id `{}` in manifest",
                    r.scan_id()
                )));
            }
        }
        Ok(Manifest { records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("."));
        let rel = |p: &Path| -> String {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        let mut out = String::from("scan,mask,grade,c1,c2,c3,c4\n");
        for r in &self.records {
            let grade = r.grade.map(|g| g.as_str().to_string()).unwrap_or_default();
            let cs: Vec<String> = r
                .clinician_grades
                .iter()
                .map(|c| c.map(|g| g.as_str().to_string()).unwrap_or_default())
                .collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rel(&r.scan_path),
                r.mask_path.as_deref().map(rel).unwrap_or_default(),
                grade,
                cs[0],
                cs[1],
                cs[2],
                cs[3],
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Root seed; every stage derives its randomness from it.
    pub seed: u64,
    /// Axial pixel pitch override. When unset, sidecar metadata or the
    /// documented default applies and the report flags the assumption.
    pub axial_scale_um_per_px: Option<f64>,
    pub train_fraction: f64,
    pub stratified_split: bool,
    /// Fixed network input size (height, width); scans are resized in and
    /// predicted masks resized back out when dimensions differ.
    pub net_input_height: usize,
    pub net_input_width: usize,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub rnfl_threshold_um: f64,
    /// Glaucoma probability at or above which a scan screens positive.
    pub screening_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            axial_scale_um_per_px: None,
            train_fraction: 0.7,
            stratified_split: false,
            net_input_height: 128,
            net_input_width: 256,
            preprocess: PreprocessConfig::default(),
            train: TrainConfig::default(),
            svm_lambda: 1e-3,
            svm_epochs: 300,
            rnfl_threshold_um: ThresholdGrader::default().rnfl_threshold_um,
            screening_threshold: 0.5,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("invalid run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("config serialization failed: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie in (0, 1)"));
        }
        if !self.net_input_height.is_multiple_of(16) || !self.net_input_width.is_multiple_of(16) {
            return Err(Error::invalid(
                "network input dimensions must be divisible by 16",
            ));
        }
        if !(0.0..=1.0).contains(&self.screening_threshold) {
            return Err(Error::invalid("screening threshold must lie in [0, 1]"));
        }
        if let Some(s) = self.axial_scale_um_per_px {
            if !(s > 0.0) {
                return Err(Error::invalid("axial scale must be positive"));
            }
        }
        self.preprocess.validate()?;
        self.train.loss.validate()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionReport {
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub rates: ConfusionMetrics,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GradingReport {
    /// Advanced treated as the positive class.
    #[serde(flatten)]
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    /// Accuracy of the mean-RNFL threshold baseline on the same scans.
    pub baseline_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub axial_scale_um_per_px: f64,
    /// True when the axial scale came from the built-in default rather than
    /// configuration or sidecar metadata.
    pub axial_scale_assumed: bool,
    pub train_count: usize,
    pub test_count: usize,
    pub network: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    /// Screening (healthy vs glaucomatous), scan-wise on the test split.
    pub confusion: ConfusionReport,
    pub seg: SegmentationScore,
    pub roc: Option<RocCurve>,
    /// Predicted vs reference grade ordinals over the test split.
    pub correlation: Option<CorrelationResult>,
    pub grading: Option<GradingReport>,
    pub meta: ReportMeta,
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("report serialization failed: {e}")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MetricReport> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("invalid report JSON: {e}")))
    }
}

// ---------------------------------------------------------------------------
// Prediction records (the cached per-scan outcome of a run)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub scan_id: String,
    pub true_grade: Option<GradeLabel>,
    pub glaucoma_prob: f64,
    /// Final three-level prediction: healthy if screened negative, else the
    /// SVM severity.
    pub pred_grade: GradeLabel,
    pub svm_margin: Option<f64>,
    pub baseline_grade: Option<GradeLabel>,
    pub mean_rnfl_um: f64,
    pub mean_gcip_um: f64,
    pub mean_gcc_um: f64,
}

pub fn write_predictions_csv(records: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(
        "scan_id,true_grade,glaucoma_prob,pred_grade,svm_margin,baseline_grade,mean_rnfl_um,mean_gcip_um,mean_gcc_um\n",
    );
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.scan_id,
            r.true_grade.map(|g| g.as_str()).unwrap_or(""),
            r.glaucoma_prob,
            r.pred_grade.as_str(),
            r.svm_margin.map(|m| m.to_string()).unwrap_or_default(),
            r.baseline_grade.map(|g| g.as_str()).unwrap_or(""),
            r.mean_rnfl_um,
            r.mean_gcip_um,
            r.mean_gcc_um,
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty predictions file"))?;
    if !header.starts_with("scan_id,true_grade,glaucoma_prob") {
        return Err(Error::format(path, "unexpected predictions header"));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::format(path, format!("bad predictions row `{line}`")));
        }
        let opt_grade = |s: &str| -> Result<Option<GradeLabel>> {
            if s.is_empty() {
                Ok(None)
            } else {
                GradeLabel::parse(s).map(Some)
            }
        };
        let parse_f64 = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::format(path, format!("bad number `{s}`")))
        };
        out.push(PredictionRecord {
            scan_id: f[0].to_string(),
            true_grade: opt_grade(f[1])?,
            glaucoma_prob: parse_f64(f[2])?,
            pred_grade: GradeLabel::parse(f[3])?,
            svm_margin: if f[4].is_empty() {
                None
            } else {
                Some(parse_f64(f[4])?)
            },
            baseline_grade: opt_grade(f[5])?,
            mean_rnfl_um: parse_f64(f[6])?,
            mean_gcip_um: parse_f64(f[7])?,
            mean_gcc_um: parse_f64(f[8])?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        other => Error::stage(name, other.to_string()),
    })
}

struct LoadedRecord {
    id: String,
    scan: Scan,
    mask: Option<LayerMask>,
    grade: Option<GradeLabel>,
    scale_assumed: bool,
}

fn load_records(manifest: &Manifest, config: &RunConfig) -> Result<Vec<LoadedRecord>> {
    let mut out = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let mut scan = read_scan(&r.scan_path)?;
        let sidecar = crate::scan::read_sidecar(&r.scan_path)?;
        let mut scale_assumed = false;
        if let Some(s) = config.axial_scale_um_per_px {
            scan = Scan::new(
                scan.pixels().to_vec(),
                scan.height(),
                scan.width(),
                s,
                scan.id.clone(),
            )?;
        } else if sidecar.is_none() {
            scale_assumed = true; // default pitch in effect
        }
        let mask = match &r.mask_path {
            Some(p) => {
                let m = read_mask(p)?;
                if m.height() != scan.height() || m.width() != scan.width() {
                    return Err(Error::shape(format!(
                        "mask `{}` does not match its scan dimensions",
                        p.display()
                    )));
                }
                Some(m)
            }
            None => None,
        };
        let grade = r.grade.or(sidecar.as_ref().and_then(|s| s.grade));
        out.push(LoadedRecord {
            id: r.scan_id(),
            scan,
            mask,
            grade,
            scale_assumed,
        });
    }
    Ok(out)
}

/// Run the full pipeline and write every artifact under `out_dir`:
/// `retina/`, `masks_pred/`, `profiles/`, `features/`, `model.bin`,
/// `svm.json`, `history.csv`, `predictions.csv`, `report.json`.
/// When `model_in` is given, training is skipped and the model is loaded.
pub fn pipeline_run(
    manifest: &Manifest,
    config: &RunConfig,
    out_dir: &Path,
    model_in: Option<&Path>,
) -> Result<MetricReport> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    std::fs::write(out_dir.join(INCOMPLETE_MARKER), b"run in progress")
        .map_err(|e| Error::io(out_dir.join(INCOMPLETE_MARKER), e))?;
    for sub in ["retina", "masks_pred", "profiles", "features"] {
        std::fs::create_dir_all(out_dir.join(sub)).map_err(|e| Error::io(out_dir.join(sub), e))?;
    }

    let records = stage("load", load_records(manifest, config))?;

    // Training prerequisites.
    if model_in.is_none() {
        if records.iter().any(|r| r.mask.is_none()) {
            return Err(Error::invalid(
                "manifest provides no mask for at least one scan; training requires \
                 ground-truth masks (add mask paths or pass an existing model)",
            ));
        }
        if records.iter().any(|r| r.grade.is_none()) {
            return Err(Error::invalid(
                "manifest provides no grade for at least one scan; training the screening \
                 head requires grade labels",
            ));
        }
    }

    // Split.
    let grades: Vec<GradeLabel> = records
        .iter()
        .map(|r| r.grade.unwrap_or(GradeLabel::Healthy))
        .collect();
    let stratify = config.stratified_split.then_some(grades.as_slice());
    let (train_idx, test_idx) = stage(
        "split",
        split_indices(records.len(), config.train_fraction, config.seed, stratify),
    )?;

    // Preprocess every scan and persist the retina artifacts.
    let mut retinas: Vec<Scan> = Vec::with_capacity(records.len());
    for r in &records {
        let extraction = stage("preprocess", extract_retina(&r.scan, &config.preprocess))?;
        stage(
            "preprocess",
            write_scan(
                &extraction.retina,
                out_dir.join("retina").join(format!("{}.png", r.id)),
            ),
        )?;
        retinas.push(extraction.retina);
    }

    // Network input preparation: preprocessed scans resized to the fixed
    // network resolution (masks by nearest neighbor).
    let (net_h, net_w) = (config.net_input_height, config.net_input_width);
    let prepare_scan = |s: &Scan| -> Result<Scan> {
        if s.height() == net_h && s.width() == net_w {
            Ok(s.clone())
        } else {
            s.resized(net_h, net_w)
        }
    };

    // Train or load.
    let mut network = match model_in {
        Some(path) => stage("train", serialize::load_network(path))?,
        None => {
            let mut samples = Vec::with_capacity(train_idx.len());
            for &i in &train_idx {
                let scan = prepare_scan(&retinas[i])?;
                let mask = records[i].mask.as_ref().expect("checked above");
                let mask = if mask.height() == net_h && mask.width() == net_w {
                    mask.clone()
                } else {
                    mask.resized(net_h, net_w)?
                };
                samples.push(TrainSample {
                    scan,
                    mask,
                    grade: records[i].grade.expect("checked above"),
                });
            }
            let mut train_cfg = config.train.clone();
            train_cfg.seed = config.seed;
            let outcome = stage(
                "train",
                train(toy_hybrid_spec(net_h, net_w)?, &samples, &train_cfg),
            )?;
            stage(
                "train",
                crate::train::write_history_csv(&outcome.history, out_dir.join("history.csv")),
            )?;
            outcome.network
        }
    };
    stage(
        "train",
        serialize::save_network(&network, out_dir.join("model.bin")),
    )?;

    // Segment, profile, and screen every test scan.
    let mut predictions: Vec<PredictionRecord> = Vec::new();
    let mut test_features = Vec::new();
    for &i in &test_idx {
        let r = &records[i];
        let net_scan = prepare_scan(&retinas[i])?;
        let pred_small = stage("segment", predict_mask(&mut network, &net_scan))?;
        let pred_mask =
            if pred_small.height() == r.scan.height() && pred_small.width() == r.scan.width() {
                pred_small
            } else {
                pred_small.resized(r.scan.height(), r.scan.width())?
            };
        stage(
            "segment",
            write_mask(
                &pred_mask,
                out_dir.join("masks_pred").join(format!("{}.png", r.id)),
            ),
        )?;

        let profile = stage(
            "profile",
            thickness(&pred_mask, r.scan.axial_scale_um_per_px()),
        )?;
        stage(
            "profile",
            write_profile_csv(
                &profile,
                out_dir.join("profiles").join(format!("{}.csv", r.id)),
            ),
        )?;
        let features = match grade_features(&profile) {
            Ok(f) => f,
            // A (mis)segmented scan can lack both regions everywhere; carry
            // zero features rather than aborting the run.
            Err(_) => crate::profiles::GradeFeatures {
                mean_rnfl_um: 0.0,
                mean_gcip_um: 0.0,
                mean_gcc_um: 0.0,
                std_rnfl_um: 0.0,
                std_gcip_um: 0.0,
                std_gcc_um: 0.0,
                axial_scale_um_per_px: r.scan.axial_scale_um_per_px(),
            },
        };
        stage(
            "profile",
            write_features_json(
                &features,
                out_dir.join("features").join(format!("{}.json", r.id)),
            ),
        )?;

        let prob = stage("screen", predict_screening(&mut network, &net_scan))?;
        test_features.push(features);
        predictions.push(PredictionRecord {
            scan_id: r.id.clone(),
            true_grade: r.grade,
            glaucoma_prob: prob,
            pred_grade: GradeLabel::Healthy, // graded below
            svm_margin: None,
            baseline_grade: None,
            mean_rnfl_um: features.mean_rnfl_um,
            mean_gcip_um: features.mean_gcip_um,
            mean_gcc_um: features.mean_gcc_um,
        });
    }

    // SVM training on the training split's predicted profiles (glaucomatous
    // scans only: the grader only ever sees screened cases).
    let mut svm_features = Vec::new();
    let mut svm_labels = Vec::new();
    for &i in &train_idx {
        let Some(grade) = records[i].grade else {
            continue;
        };
        let Ok(sev) = Severity::from_grade(grade) else {
            continue;
        };
        let net_scan = prepare_scan(&retinas[i])?;
        let pred_small = stage("grade", predict_mask(&mut network, &net_scan))?;
        let pred_mask = if pred_small.height() == records[i].scan.height()
            && pred_small.width() == records[i].scan.width()
        {
            pred_small
        } else {
            pred_small.resized(records[i].scan.height(), records[i].scan.width())?
        };
        let profile = thickness(&pred_mask, records[i].scan.axial_scale_um_per_px())?;
        if let Ok(f) = grade_features(&profile) {
            svm_features.push(f);
            svm_labels.push(sev);
        }
    }
    let svm = if svm_features.len() >= 2
        && svm_labels.contains(&Severity::Early)
        && svm_labels.contains(&Severity::Advanced)
    {
        let model = stage(
            "grade",
            svm_train(
                &svm_features,
                &svm_labels,
                config.svm_lambda,
                config.svm_epochs,
                config.seed,
            ),
        )?;
        model.save_json(out_dir.join("svm.json"))?;
        Some(model)
    } else {
        None
    };

    // Final grading of screened-positive test scans.
    let baseline = ThresholdGrader::new(config.rnfl_threshold_um)?;
    for (k, _) in test_idx.iter().enumerate() {
        let screened = predictions[k].glaucoma_prob >= config.screening_threshold;
        if !screened {
            predictions[k].pred_grade = GradeLabel::Healthy;
            continue;
        }
        let f = &test_features[k];
        predictions[k].baseline_grade = Some(threshold_grade(f, &baseline).to_grade());
        match &svm {
            Some(model) => {
                let (sev, margin) = svm_predict(model, f);
                predictions[k].pred_grade = sev.to_grade();
                predictions[k].svm_margin = Some(margin);
            }
            None => {
                // No trained grader available: fall back to the baseline.
                predictions[k].pred_grade = threshold_grade(f, &baseline).to_grade();
            }
        }
    }

    stage(
        "report",
        write_predictions_csv(&predictions, out_dir.join("predictions.csv")),
    )?;
    config.save(out_dir.join("run_config.json"))?;
    manifest.save(out_dir.join("manifest.csv"))?;

    let report = stage(
        "report",
        metrics_from_artifact_parts(manifest, config, out_dir, &records),
    )?;
    report.save(out_dir.join("report.json"))?;
    std::fs::remove_file(out_dir.join(INCOMPLETE_MARKER))
        .map_err(|e| Error::io(out_dir.join(INCOMPLETE_MARKER), e))?;
    Ok(report)
}

/// Recompute the metric report from cached artifacts only. Fails if the
/// artifact directory is stale (a run aborted midway).
pub fn metrics_from_artifacts(
    manifest: &Manifest,
    config: &RunConfig,
    out_dir: &Path,
) -> Result<MetricReport> {
    if out_dir.join(INCOMPLETE_MARKER).exists() {
        return Err(Error::stage(
            "report",
            "artifact directory is stale: a pipeline run did not complete".to_string(),
        ));
    }
    let records = load_records(manifest, config)?;
    metrics_from_artifact_parts(manifest, config, out_dir, &records)
}

fn metrics_from_artifact_parts(
    manifest: &Manifest,
    config: &RunConfig,
    out_dir: &Path,
    records: &[LoadedRecord],
) -> Result<MetricReport> {
    let predictions = read_predictions_csv(out_dir.join("predictions.csv"))?;
    let grades: Vec<GradeLabel> = records
        .iter()
        .map(|r| r.grade.unwrap_or(GradeLabel::Healthy))
        .collect();
    let stratify = config.stratified_split.then_some(grades.as_slice());
    let (train_idx, test_idx) =
        split_indices(records.len(), config.train_fraction, config.seed, stratify)?;

    // Screening confusion and ROC over the test split.
    let mut counts = ConfusionCounts::default();
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut pred_ord = Vec::new();
    let mut true_ord = Vec::new();
    let mut grading_counts = ConfusionCounts::default();
    let mut grading_total = 0u64;
    let mut grading_correct = 0u64;
    let mut baseline_total = 0u64;
    let mut baseline_correct = 0u64;

    for p in &predictions {
        let Some(true_grade) = p.true_grade else {
            continue;
        };
        let actual = true_grade.is_glaucomatous();
        let predicted = p.glaucoma_prob >= config.screening_threshold;
        counts.record(predicted, actual);
        scores.push(p.glaucoma_prob);
        labels.push(actual);
        pred_ord.push(p.pred_grade.ordinal());
        true_ord.push(true_grade.ordinal());

        // Severity grading quality on truly glaucomatous scans that were
        // screened positive.
        if actual && predicted && p.pred_grade.is_glaucomatous() {
            let pred_adv = p.pred_grade == GradeLabel::AdvancedGlaucoma;
            let true_adv = true_grade == GradeLabel::AdvancedGlaucoma;
            grading_counts.record(pred_adv, true_adv);
            grading_total += 1;
            if pred_adv == true_adv {
                grading_correct += 1;
            }
            if let Some(bg) = p.baseline_grade {
                baseline_total += 1;
                if (bg == GradeLabel::AdvancedGlaucoma) == true_adv {
                    baseline_correct += 1;
                }
            }
        }
    }

    let roc_curve = if labels.iter().any(|l| *l) && labels.iter().any(|l| !*l) {
        Some(roc(&scores, &labels)?)
    } else {
        None
    };
    let correlation = pearson(&pred_ord, &true_ord).ok();

    // Segmentation quality: predicted masks vs ground truth on the test
    // split, skipping records without reference masks.
    let mut pairs_owned = Vec::new();
    for &i in &test_idx {
        let r = &records[i];
        let Some(gt) = &r.mask else { continue };
        let pred_path = out_dir.join("masks_pred").join(format!("{}.png", r.id));
        if !pred_path.exists() {
            return Err(Error::stage(
                "report",
                format!("missing predicted mask artifact for `{}`", r.id),
            ));
        }
        pairs_owned.push((read_mask(&pred_path)?, gt.clone()));
    }
    let pairs: Vec<(&LayerMask, &LayerMask)> = pairs_owned.iter().map(|(p, g)| (p, g)).collect();
    let seg = if pairs.is_empty() {
        SegmentationScore {
            per_class: Default::default(),
            mean_dice: None,
            mean_mask_precision: None,
        }
    } else {
        segmentation_score(&pairs)?
    };

    let scale = config
        .axial_scale_um_per_px
        .unwrap_or(DEFAULT_AXIAL_SCALE_UM_PER_PX);
    let axial_scale_assumed =
        config.axial_scale_um_per_px.is_none() && records.iter().any(|r| r.scale_assumed);
    let _ = manifest;
    Ok(MetricReport {
        confusion: ConfusionReport {
            counts,
            rates: confusion_metrics(&counts),
        },
        seg,
        roc: roc_curve,
        correlation,
        grading: (grading_total > 0).then_some(GradingReport {
            counts: grading_counts,
            accuracy: Some(grading_correct as f64 / grading_total as f64),
            baseline_accuracy: (baseline_total > 0)
                .then(|| baseline_correct as f64 / baseline_total as f64),
        }),
        meta: ReportMeta {
            seed: config.seed,
            axial_scale_um_per_px: scale,
            axial_scale_assumed,
            train_count: train_idx.len(),
            test_count: test_idx.len(),
            network: "hybrid-toy".to_string(),
        },
    })
}

// ---------------------------------------------------------------------------
// Clinician agreement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ClinicianAgreement {
    pub clinician: String,
    /// Correlation of the framework's grades with this clinician's, both
    /// ordinal-coded (healthy 0, early 1, advanced 2); absent when fewer
    /// than 3 overlapping gradings exist or a side has zero variance.
    pub result: Option<CorrelationResult>,
}

/// Per-clinician Pearson agreement between framework predictions and
/// clinician gradings.
pub fn clinician_agreement(
    manifest: &Manifest,
    predictions: &[PredictionRecord],
) -> Vec<ClinicianAgreement> {
    let by_id: std::collections::BTreeMap<&str, &PredictionRecord> = predictions
        .iter()
        .map(|p| (p.scan_id.as_str(), p))
        .collect();
    (0..4)
        .map(|c| {
            let mut ours = Vec::new();
            let mut theirs = Vec::new();
            for r in &manifest.records {
                let id = r.scan_id();
                if let (Some(p), Some(g)) = (by_id.get(id.as_str()), r.clinician_grades[c]) {
                    ours.push(p.pred_grade.ordinal());
                    theirs.push(g.ordinal());
                }
            }
            let result = if ours.len() >= 3 {
                pearson(&ours, &theirs).ok()
            } else {
                None
            };
            ClinicianAgreement {
                clinician: format!("clinician-{}", c + 1),
                result,
            }
        })
        .collect()
}

pub fn write_agreement_json(rows: &[ClinicianAgreement], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(rows)
        .map_err(|e| Error::invalid(format!("agreement serialization failed: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}
