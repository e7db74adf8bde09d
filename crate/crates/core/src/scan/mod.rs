//! Core scan-domain data types.
//!
//! Orientation convention: rows run along the axial (depth) direction and
//! columns are individual A-scans, so a stored B-scan of width 951 and height
//! 456 is a 456-row x 951-column array. Intensities live in [0, 1]; label
//! maps use 0 = background, 1 = RNFL, 2 = GC-IPL, and the GCC region is
//! always derived as the union of labels 1 and 2, never stored.

mod io;
mod synth;

pub use io::{
    read_mask, read_scan, read_sidecar, write_boundaries_csv, write_mask, write_scan,
    write_sidecar, ScanSidecar,
};
pub use synth::{generate_synthetic, CupRegion, SynthConfig, Synthetic};

use crate::error::{Error, Result};

/// Default axial pixel pitch in micrometers per pixel. The acquisition
/// device's true pitch is not part of the image files, so this value is an
/// assumption; reports carry a flag whenever it was used.
pub const DEFAULT_AXIAL_SCALE_UM_PER_PX: f64 = 2.6;

/// Reference mean RNFL thickness for early-stage glaucomatous cohorts (um).
pub const REF_EARLY_MEAN_RNFL_UM: f64 = 93.50;
/// Reference mean RNFL thickness for advanced-stage cohorts (um).
pub const REF_ADVANCED_MEAN_RNFL_UM: f64 = 69.46;

/// Midpoint of the early/advanced reference means; the default decision
/// threshold for the RNFL-only baseline grader.
pub const RNFL_GRADE_THRESHOLD_UM: f64 = 0.5 * (REF_EARLY_MEAN_RNFL_UM + REF_ADVANCED_MEAN_RNFL_UM);

/// Upper edge of the early band: the early mean mirrored about the
/// early/advanced midpoint. RNFL at or above this reads as healthy.
pub const RNFL_HEALTHY_THRESHOLD_UM: f64 =
    REF_EARLY_MEAN_RNFL_UM + (REF_EARLY_MEAN_RNFL_UM - RNFL_GRADE_THRESHOLD_UM);

// ---------------------------------------------------------------------------
// Scan
// ---------------------------------------------------------------------------

/// A 2-D grayscale OCT B-scan with axial pixel-scale metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pixels: Vec<f64>,
    height_px: usize,
    width_px: usize,
    axial_scale_um_per_px: f64,
    pub id: String,
}

impl Scan {
    pub fn new(
        pixels: Vec<f64>,
        height_px: usize,
        width_px: usize,
        axial_scale_um_per_px: f64,
        id: impl Into<String>,
    ) -> Result<Self> {
        if height_px == 0 || width_px == 0 {
            return Err(Error::invalid("scan dimensions must be positive"));
        }
        if pixels.len() != height_px * width_px {
            return Err(Error::shape(format!(
                "scan buffer length {} does not match {height_px}x{width_px}",
                pixels.len()
            )));
        }
        if !(axial_scale_um_per_px > 0.0) {
            return Err(Error::invalid("axial_scale_um_per_px must be positive"));
        }
        if !pixels.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::invalid("scan intensities must lie in [0, 1]"));
        }
        Ok(Scan {
            pixels,
            height_px,
            width_px,
            axial_scale_um_per_px,
            id: id.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.height_px
    }

    pub fn width(&self) -> usize {
        self.width_px
    }

    pub fn axial_scale_um_per_px(&self) -> f64 {
        self.axial_scale_um_per_px
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width_px + col]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.pixels[row * self.width_px..(row + 1) * self.width_px]
    }

    /// Bilinear resize; used when a fixed network input size differs from the
    /// stored scan size.
    pub fn resized(&self, new_h: usize, new_w: usize) -> Result<Scan> {
        if new_h == 0 || new_w == 0 {
            return Err(Error::invalid("resize target must be positive"));
        }
        let mut out = vec![0.0; new_h * new_w];
        let sy = self.height_px as f64 / new_h as f64;
        let sx = self.width_px as f64 / new_w as f64;
        for y in 0..new_h {
            let src_y = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height_px - 1) as f64);
            let y0 = src_y.floor() as usize;
            let y1 = (y0 + 1).min(self.height_px - 1);
            let fy = src_y - y0 as f64;
            for x in 0..new_w {
                let src_x = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width_px - 1) as f64);
                let x0 = src_x.floor() as usize;
                let x1 = (x0 + 1).min(self.width_px - 1);
                let fx = src_x - x0 as f64;
                let v = self.at(y0, x0) * (1.0 - fy) * (1.0 - fx)
                    + self.at(y0, x1) * (1.0 - fy) * fx
                    + self.at(y1, x0) * fy * (1.0 - fx)
                    + self.at(y1, x1) * fy * fx;
                out[y * new_w + x] = v.clamp(0.0, 1.0);
            }
        }
        Scan::new(
            out,
            new_h,
            new_w,
            self.axial_scale_um_per_px,
            self.id.clone(),
        )
    }
}

// ---------------------------------------------------------------------------
// LayerMask
// ---------------------------------------------------------------------------

/// Background / RNFL / GC-IPL labels.
pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_RNFL: u8 = 1;
pub const LABEL_GCIPL: u8 = 2;

/// Per-pixel label map over {0 = background, 1 = RNFL, 2 = GC-IPL}.
///
/// Invariant: within any column, every RNFL pixel lies strictly above every
/// GC-IPL pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMask {
    labels: Vec<u8>,
    height_px: usize,
    width_px: usize,
}

impl LayerMask {
    pub fn new(labels: Vec<u8>, height_px: usize, width_px: usize) -> Result<Self> {
        if labels.len() != height_px * width_px {
            return Err(Error::shape(format!(
                "mask buffer length {} does not match {height_px}x{width_px}",
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&v| v > 2) {
            return Err(Error::invalid(format!(
                "mask labels must be 0, 1 or 2 (found {bad})"
            )));
        }
        let mask = LayerMask {
            labels,
            height_px,
            width_px,
        };
        mask.check_ordering()?;
        Ok(mask)
    }

    /// Construct without the column-ordering check. Reserved for internal
    /// producers (e.g. rotation augmentation) whose output may locally bend
    /// the RNFL/GC-IPL interface across a column.
    pub(crate) fn from_labels_unchecked(
        labels: Vec<u8>,
        height_px: usize,
        width_px: usize,
    ) -> Self {
        debug_assert_eq!(labels.len(), height_px * width_px);
        LayerMask {
            labels,
            height_px,
            width_px,
        }
    }

    fn check_ordering(&self) -> Result<()> {
        for col in 0..self.width_px {
            let mut last_rnfl: Option<usize> = None;
            let mut first_gcipl: Option<usize> = None;
            for row in 0..self.height_px {
                match self.at(row, col) {
                    LABEL_RNFL => last_rnfl = Some(row),
                    LABEL_GCIPL if first_gcipl.is_none() => first_gcipl = Some(row),
                    _ => {}
                }
            }
            if let (Some(r), Some(g)) = (last_rnfl, first_gcipl) {
                if r >= g {
                    return Err(Error::invalid(format!(
                        "column {col}: RNFL pixel at row {r} not strictly above GC-IPL at row {g}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height_px
    }

    pub fn width(&self) -> usize {
        self.width_px
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width_px + col]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Number of pixels carrying the given label.
    pub fn count_label(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&v| v == label).count()
    }

    /// GCC membership: true where the pixel is RNFL or GC-IPL.
    #[inline]
    pub fn is_gcc(&self, row: usize, col: usize) -> bool {
        self.at(row, col) != LABEL_BACKGROUND
    }

    /// Nearest-neighbor resize; labels are preserved exactly.
    pub fn resized(&self, new_h: usize, new_w: usize) -> Result<LayerMask> {
        if new_h == 0 || new_w == 0 {
            return Err(Error::invalid("resize target must be positive"));
        }
        let mut out = vec![0u8; new_h * new_w];
        for y in 0..new_h {
            let src_y = (((y as f64 + 0.5) * self.height_px as f64 / new_h as f64 - 0.5).round())
                .clamp(0.0, (self.height_px - 1) as f64) as usize;
            for x in 0..new_w {
                let src_x = (((x as f64 + 0.5) * self.width_px as f64 / new_w as f64 - 0.5).round())
                    .clamp(0.0, (self.width_px - 1) as f64) as usize;
                out[y * new_w + x] = self.at(src_y, src_x);
            }
        }
        Ok(LayerMask::from_labels_unchecked(out, new_h, new_w))
    }
}

// ---------------------------------------------------------------------------
// BoundarySet
// ---------------------------------------------------------------------------

/// Per-column boundary rows (real-valued after smoothing) with validity
/// flags. For every valid column, `ilm <= gcl <= ipl <= choroid`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySet {
    pub ilm: Vec<f64>,
    pub gcl: Vec<f64>,
    pub ipl: Vec<f64>,
    pub choroid: Vec<f64>,
    pub valid: Vec<bool>,
}

impl BoundarySet {
    pub fn new(
        ilm: Vec<f64>,
        gcl: Vec<f64>,
        ipl: Vec<f64>,
        choroid: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        let w = ilm.len();
        if gcl.len() != w || ipl.len() != w || choroid.len() != w || valid.len() != w {
            return Err(Error::shape("boundary arrays must share one length"));
        }
        for col in 0..w {
            if valid[col] {
                let (a, b, c, d) = (ilm[col], gcl[col], ipl[col], choroid[col]);
                if !(a <= b && b <= c && c <= d) {
                    return Err(Error::invalid(format!(
                        "column {col}: boundary ordering violated ({a}, {b}, {c}, {d})"
                    )));
                }
            }
        }
        Ok(BoundarySet {
            ilm,
            gcl,
            ipl,
            choroid,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.ilm.len()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

// ---------------------------------------------------------------------------
// GradeLabel
// ---------------------------------------------------------------------------

/// Scan-level grade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradeLabel {
    Healthy,
    #[serde(rename = "early")]
    EarlyGlaucoma,
    #[serde(rename = "advanced")]
    AdvancedGlaucoma,
}

impl GradeLabel {
    /// Ordinal coding used for correlation against clinician gradings:
    /// healthy = 0, early = 1, advanced = 2.
    pub fn ordinal(self) -> f64 {
        match self {
            GradeLabel::Healthy => 0.0,
            GradeLabel::EarlyGlaucoma => 1.0,
            GradeLabel::AdvancedGlaucoma => 2.0,
        }
    }

    pub fn is_glaucomatous(self) -> bool {
        self != GradeLabel::Healthy
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GradeLabel::Healthy => "healthy",
            GradeLabel::EarlyGlaucoma => "early",
            GradeLabel::AdvancedGlaucoma => "advanced",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "healthy" | "h" => Ok(GradeLabel::Healthy),
            "early" | "eg" => Ok(GradeLabel::EarlyGlaucoma),
            "advanced" | "ag" => Ok(GradeLabel::AdvancedGlaucoma),
            other => Err(Error::invalid(format!("unknown grade label `{other}`"))),
        }
    }

    /// Grade implied by a mean RNFL thickness in micrometers: advanced below
    /// the early/advanced midpoint, healthy at or above the early mean
    /// mirrored about that midpoint, early in between.
    pub fn from_rnfl_um(rnfl_um: f64) -> Self {
        if rnfl_um < RNFL_GRADE_THRESHOLD_UM {
            GradeLabel::AdvancedGlaucoma
        } else if rnfl_um < RNFL_HEALTHY_THRESHOLD_UM {
            GradeLabel::EarlyGlaucoma
        } else {
            GradeLabel::Healthy
        }
    }
}

impl std::fmt::Display for GradeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
