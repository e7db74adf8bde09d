//! Synthetic B-scan generation.
//!
//! Renders a bright RNFL band and a dimmer GC-IPL band under a sinusoidal
//! inner limiting membrane, followed by an outer-retina slab and a bright
//! RPE strip so that boundary tracing has a realistic last transition. An
//! optional cup region pinches both inner bands to zero thickness, imitating
//! the optic nerve head. The generator is the ground-truth oracle for the
//! preprocessing, profile, and end-to-end tests.

use super::{
    BoundarySet, GradeLabel, LayerMask, Scan, LABEL_BACKGROUND, LABEL_GCIPL, LABEL_RNFL,
    REF_ADVANCED_MEAN_RNFL_UM, REF_EARLY_MEAN_RNFL_UM, RNFL_GRADE_THRESHOLD_UM,
};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Rows of moderately reflective outer retina rendered below the GC-IPL.
const OUTER_RETINA_PX: usize = 18;
/// Rows of the bright RPE strip that terminates the retina.
const RPE_PX: usize = 6;

const INTENSITY_BACKGROUND: f64 = 0.04;
const INTENSITY_RNFL: f64 = 0.85;
const INTENSITY_GCIPL: f64 = 0.62;
const INTENSITY_OUTER: f64 = 0.38;
const INTENSITY_RPE: f64 = 0.92;

/// Columns where the inner bands thin out to imitate the ONH cup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CupRegion {
    pub center_col: usize,
    pub width_px: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width_px: usize,
    pub height_px: usize,
    /// Peak deviation of the ILM waveform, in pixels.
    pub ilm_amplitude_px: f64,
    /// Period of the ILM waveform, in pixels.
    pub ilm_period_px: f64,
    /// Baseline ILM row.
    pub ilm_offset_px: f64,
    pub rnfl_thickness_px: f64,
    pub gcip_thickness_px: f64,
    pub cup: Option<CupRegion>,
    /// Standard deviation of additive Gaussian intensity noise.
    pub noise_std: f64,
    pub axial_scale_um_per_px: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width_px: 256,
            height_px: 128,
            ilm_amplitude_px: 5.0,
            ilm_period_px: 220.0,
            ilm_offset_px: 24.0,
            rnfl_thickness_px: 36.0,
            gcip_thickness_px: 24.0,
            cup: None,
            noise_std: 0.0,
            axial_scale_um_per_px: super::DEFAULT_AXIAL_SCALE_UM_PER_PX,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::invalid("synthetic scan dimensions must be positive"));
        }
        if !(self.rnfl_thickness_px > 0.0) || !(self.gcip_thickness_px > 0.0) {
            return Err(Error::invalid("band thicknesses must be positive"));
        }
        if !(self.ilm_period_px > 0.0) {
            return Err(Error::invalid("ilm_period_px must be positive"));
        }
        if self.ilm_amplitude_px < 0.0 || self.noise_std < 0.0 {
            return Err(Error::invalid(
                "amplitude and noise_std must be nonnegative",
            ));
        }
        if !(self.axial_scale_um_per_px > 0.0) {
            return Err(Error::invalid("axial_scale_um_per_px must be positive"));
        }
        let deepest = self.ilm_offset_px
            + self.ilm_amplitude_px
            + self.rnfl_thickness_px
            + self.gcip_thickness_px
            + (OUTER_RETINA_PX + RPE_PX) as f64;
        if deepest + 1.0 >= self.height_px as f64 {
            return Err(Error::invalid(format!(
                "layer stack reaches row {deepest:.1} but the scan is only {} rows tall; \
                 reduce thicknesses or the ILM offset",
                self.height_px
            )));
        }
        if self.ilm_offset_px - self.ilm_amplitude_px < 0.0 {
            return Err(Error::invalid("ILM waveform rises above the first row"));
        }
        Ok(())
    }

    /// ILM row of the analytic waveform at a column.
    pub fn ilm_at(&self, col: usize) -> f64 {
        self.ilm_offset_px
            + self.ilm_amplitude_px
                * (std::f64::consts::TAU * col as f64 / self.ilm_period_px).sin()
    }

    /// Thickness multiplier at a column: 1 away from the cup, dropping to 0
    /// at the cup center on a raised-cosine profile.
    pub fn cup_factor(&self, col: usize) -> f64 {
        match self.cup {
            None => 1.0,
            Some(cup) => {
                let half = cup.width_px as f64 / 2.0;
                let d = (col as f64 - cup.center_col as f64).abs();
                if d >= half || half == 0.0 {
                    1.0
                } else {
                    let depression = 0.5 * (1.0 + (std::f64::consts::PI * d / half).cos());
                    1.0 - depression
                }
            }
        }
    }

    /// Cohort-typical cup assignment: healthy discs render without a cup,
    /// glaucomatous ones get a cup whose width grows with severity.
    pub fn cohort_cup(grade: GradeLabel, width_px: usize, rng: &mut Rng) -> Option<CupRegion> {
        let (lo, hi) = match grade {
            GradeLabel::Healthy => return None,
            GradeLabel::EarlyGlaucoma => (width_px / 8, width_px / 6),
            GradeLabel::AdvancedGlaucoma => (width_px / 5, width_px / 4),
        };
        let cup_width = lo + rng.index((hi - lo).max(1));
        let margin = cup_width / 2 + 4;
        let center = margin + rng.index(width_px.saturating_sub(2 * margin).max(1));
        Some(CupRegion {
            center_col: center,
            width_px: cup_width,
        })
    }

    /// Draw a config for one cohort member. Thicknesses are sampled around
    /// the cohort reference means and clamped symmetrically so every draw
    /// stays inside its grade band while the cohort mean is preserved.
    pub fn for_grade(
        grade: GradeLabel,
        height_px: usize,
        width_px: usize,
        axial_scale_um_per_px: f64,
        noise_std: f64,
        cup: Option<CupRegion>,
        rng: &mut Rng,
    ) -> SynthConfig {
        let (rnfl_mean, rnfl_std) = match grade {
            GradeLabel::Healthy => (115.0, 6.0),
            GradeLabel::EarlyGlaucoma => (REF_EARLY_MEAN_RNFL_UM, 9.84),
            GradeLabel::AdvancedGlaucoma => (REF_ADVANCED_MEAN_RNFL_UM, 5.17),
        };
        let (gcip_mean, gcip_std) = match grade {
            GradeLabel::Healthy => (75.0, 4.0),
            GradeLabel::EarlyGlaucoma => (62.23, 5.67),
            GradeLabel::AdvancedGlaucoma => (33.96, 7.53),
        };
        // Half-width of the grade band around the early mean; clip draws so
        // the assigned grade always matches the requested cohort.
        let early_halfwidth = REF_EARLY_MEAN_RNFL_UM - RNFL_GRADE_THRESHOLD_UM - 1.0;
        let rnfl_clip = match grade {
            GradeLabel::EarlyGlaucoma => (early_halfwidth / rnfl_std).min(1.5),
            _ => 1.5,
        };
        let rnfl_um = rng.normal_clamped(rnfl_mean, rnfl_std, rnfl_clip);
        let gcip_um = rng.normal_clamped(gcip_mean, gcip_std, 1.5).max(10.0);
        let rnfl_px = rnfl_um / axial_scale_um_per_px;
        let gcip_px = gcip_um / axial_scale_um_per_px;
        let amplitude = rng.uniform_in(3.0, 6.0);
        // Keep the full stack inside the scan: pull the baseline up if the
        // drawn offset would push the RPE past the bottom row.
        let drawn_offset = rng.uniform_in(18.0, 26.0);
        let max_offset = height_px as f64
            - amplitude
            - rnfl_px
            - gcip_px
            - (OUTER_RETINA_PX + RPE_PX) as f64
            - 4.0;
        let offset = drawn_offset.min(max_offset).max(amplitude);
        SynthConfig {
            width_px,
            height_px,
            ilm_amplitude_px: amplitude,
            ilm_period_px: rng.uniform_in(180.0, 320.0),
            ilm_offset_px: offset,
            rnfl_thickness_px: rnfl_px,
            gcip_thickness_px: gcip_px,
            cup,
            noise_std,
            axial_scale_um_per_px,
            seed: rng.next_u64(),
        }
    }
}

/// Output bundle of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub scan: Scan,
    pub mask: LayerMask,
    pub boundaries: BoundarySet,
    pub grade: GradeLabel,
}

/// Render a synthetic scan, its ground-truth mask and boundaries, and the
/// grade implied by the configured RNFL thickness. Deterministic for a fixed
/// config (including the seed).
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let (h, w) = (cfg.height_px, cfg.width_px);
    let mut pixels = vec![INTENSITY_BACKGROUND; h * w];
    let mut labels = vec![LABEL_BACKGROUND; h * w];

    let mut ilm = vec![0.0; w];
    let mut gcl = vec![0.0; w];
    let mut ipl = vec![0.0; w];
    let mut choroid = vec![0.0; w];
    let mut valid = vec![false; w];

    for col in 0..w {
        let factor = cfg.cup_factor(col);
        let t_rnfl = (cfg.rnfl_thickness_px * factor).round().max(0.0) as usize;
        let t_gcip = (cfg.gcip_thickness_px * factor).round().max(0.0) as usize;
        let ilm_row = cfg.ilm_at(col).round().max(0.0) as usize;
        let gcl_row = ilm_row + t_rnfl;
        let ipl_row = gcl_row + t_gcip;
        let choroid_row = ipl_row + OUTER_RETINA_PX + RPE_PX;

        let mut paint = |r0: usize, r1: usize, value: f64, label: u8| {
            for row in r0..r1.min(h) {
                pixels[row * w + col] = value;
                if label != LABEL_BACKGROUND {
                    labels[row * w + col] = label;
                }
            }
        };
        paint(ilm_row, gcl_row, INTENSITY_RNFL, LABEL_RNFL);
        paint(gcl_row, ipl_row, INTENSITY_GCIPL, LABEL_GCIPL);
        paint(
            ipl_row,
            ipl_row + OUTER_RETINA_PX,
            INTENSITY_OUTER,
            LABEL_BACKGROUND,
        );
        paint(
            ipl_row + OUTER_RETINA_PX,
            choroid_row,
            INTENSITY_RPE,
            LABEL_BACKGROUND,
        );

        ilm[col] = ilm_row as f64;
        gcl[col] = gcl_row as f64;
        ipl[col] = ipl_row as f64;
        choroid[col] = choroid_row as f64;
        valid[col] = t_rnfl > 0 && t_gcip > 0;
    }

    if cfg.noise_std > 0.0 {
        let mut rng = Rng::seed_from_u64(cfg.seed);
        for v in pixels.iter_mut() {
            *v = (*v + rng.normal_with(0.0, cfg.noise_std)).clamp(0.0, 1.0);
        }
    }

    let id = format!("synth-{:016x}", cfg.seed);
    let scan = Scan::new(pixels, h, w, cfg.axial_scale_um_per_px, id)?;
    let mask = LayerMask::new(labels, h, w)?;
    let boundaries = BoundarySet::new(ilm, gcl, ipl, choroid, valid)?;
    let grade = GradeLabel::from_rnfl_um(cfg.rnfl_thickness_px * cfg.axial_scale_um_per_px);
    Ok(Synthetic {
        scan,
        mask,
        boundaries,
        grade,
    })
}
