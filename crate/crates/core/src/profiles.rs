//! Retinal thickness profiles.
//!
//! Boundaries are recovered from a label mask (not from the preprocessing
//! traces) so predicted and ground-truth masks are scored by the same rule:
//! per column, the ILM is the first RNFL row, the GCL interface sits one
//! past the last RNFL row, and the IPL boundary one past the last GC-IPL
//! row. Thickness is the absolute boundary difference scaled by the axial
//! pixel pitch; the GCC spans ILM to IPL, so per column it is exactly
//! RNFL + GC-IPL. Columns lacking either region (e.g. inside the ONH cup)
//! are flagged invalid and excluded from the means.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scan::{BoundarySet, LayerMask, LABEL_GCIPL, LABEL_RNFL};

#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessProfile {
    pub rnfl_um: Vec<f64>,
    pub gcip_um: Vec<f64>,
    pub gcc_um: Vec<f64>,
    pub valid: Vec<bool>,
    pub axial_scale_um_per_px: f64,
}

impl ThicknessProfile {
    pub fn width(&self) -> usize {
        self.valid.len()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Per-feature mean and population standard deviation over valid columns.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GradeFeatures {
    #[serde(rename = "mean_rnfl")]
    pub mean_rnfl_um: f64,
    #[serde(rename = "mean_gcip")]
    pub mean_gcip_um: f64,
    #[serde(rename = "mean_gcc")]
    pub mean_gcc_um: f64,
    #[serde(rename = "std_rnfl")]
    pub std_rnfl_um: f64,
    #[serde(rename = "std_gcip")]
    pub std_gcip_um: f64,
    #[serde(rename = "std_gcc")]
    pub std_gcc_um: f64,
    #[serde(rename = "axial_scale")]
    pub axial_scale_um_per_px: f64,
}

impl GradeFeatures {
    /// The raw 3-vector fed to the severity grader.
    pub fn as_vector(&self) -> [f64; 3] {
        [self.mean_rnfl_um, self.mean_gcip_um, self.mean_gcc_um]
    }
}

/// Recover boundary rows from a mask. Columns missing either region are
/// invalid; the choroid is not represented in a label mask, so the choroid
/// column repeats the IPL boundary.
pub fn boundaries_from_mask(mask: &LayerMask) -> BoundarySet {
    let w = mask.width();
    let mut ilm = vec![0.0; w];
    let mut gcl = vec![0.0; w];
    let mut ipl = vec![0.0; w];
    let mut valid = vec![false; w];
    for col in 0..w {
        let mut first_rnfl: Option<usize> = None;
        let mut last_rnfl: Option<usize> = None;
        let mut last_gcip: Option<usize> = None;
        for row in 0..mask.height() {
            match mask.at(row, col) {
                LABEL_RNFL => {
                    if first_rnfl.is_none() {
                        first_rnfl = Some(row);
                    }
                    last_rnfl = Some(row);
                }
                LABEL_GCIPL => last_gcip = Some(row),
                _ => {}
            }
        }
        if let (Some(first), Some(last), Some(gc)) = (first_rnfl, last_rnfl, last_gcip) {
            // Predicted masks are not guaranteed to respect the layer
            // ordering; a column whose boundaries would come out inverted
            // is degenerate and stays invalid.
            if gc >= last {
                ilm[col] = first as f64;
                gcl[col] = (last + 1) as f64;
                ipl[col] = (gc + 1) as f64;
                valid[col] = true;
            }
        }
    }
    let choroid = ipl.clone();
    BoundarySet::new(ilm, gcl, ipl, choroid, valid)
        .expect("invalid columns are zeroed, ordering holds on valid ones")
}

/// Per-column thickness in micrometers.
pub fn thickness(mask: &LayerMask, axial_scale_um_per_px: f64) -> Result<ThicknessProfile> {
    if !(axial_scale_um_per_px > 0.0) {
        return Err(Error::invalid("axial scale must be positive"));
    }
    let b = boundaries_from_mask(mask);
    let w = mask.width();
    let mut rnfl = vec![0.0; w];
    let mut gcip = vec![0.0; w];
    let mut gcc = vec![0.0; w];
    for col in 0..w {
        if b.valid[col] {
            rnfl[col] = (b.gcl[col] - b.ilm[col]).abs() * axial_scale_um_per_px;
            gcip[col] = (b.ipl[col] - b.gcl[col]).abs() * axial_scale_um_per_px;
            // ILM-to-IPL span; summing the parts keeps gcc = rnfl + gcip
            // exact instead of merely within rounding.
            gcc[col] = rnfl[col] + gcip[col];
        }
    }
    Ok(ThicknessProfile {
        rnfl_um: rnfl,
        gcip_um: gcip,
        gcc_um: gcc,
        valid: b.valid,
        axial_scale_um_per_px,
    })
}

/// Mean and population standard deviation over the valid columns.
pub fn grade_features(profile: &ThicknessProfile) -> Result<GradeFeatures> {
    let cols: Vec<usize> = (0..profile.width()).filter(|&c| profile.valid[c]).collect();
    if cols.is_empty() {
        return Err(Error::invalid(
            "no valid columns: thickness features are undefined",
        ));
    }
    let stats = |values: &[f64]| {
        let n = cols.len() as f64;
        let mean = cols.iter().map(|&c| values[c]).sum::<f64>() / n;
        let var = cols
            .iter()
            .map(|&c| (values[c] - mean).powi(2))
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    };
    let (mean_rnfl, std_rnfl) = stats(&profile.rnfl_um);
    let (mean_gcip, std_gcip) = stats(&profile.gcip_um);
    let (mean_gcc, std_gcc) = stats(&profile.gcc_um);
    Ok(GradeFeatures {
        mean_rnfl_um: mean_rnfl,
        mean_gcip_um: mean_gcip,
        mean_gcc_um: mean_gcc,
        std_rnfl_um: std_rnfl,
        std_gcip_um: std_gcip,
        std_gcc_um: std_gcc,
        axial_scale_um_per_px: profile.axial_scale_um_per_px,
    })
}

/// CSV export with header `col,rnfl_um,gcip_um,gcc_um,valid`.
pub fn write_profile_csv(profile: &ThicknessProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("col,rnfl_um,gcip_um,gcc_um,valid\n");
    for col in 0..profile.width() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            col,
            profile.rnfl_um[col],
            profile.gcip_um[col],
            profile.gcc_um[col],
            u8::from(profile.valid[col])
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_features_json(features: &GradeFeatures, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(features)
        .map_err(|e| Error::invalid(format!("feature serialization failed: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_features_json(path: impl AsRef<Path>) -> Result<GradeFeatures> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::format(path, format!("invalid features JSON: {e}")))
}
