//! Retina and ONH extraction.
//!
//! The stage turns a raw B-scan into a retina-only scan plus a binary
//! retina mask:
//!
//! 1. Per-pixel structure tensor: Gaussian-smoothed outer products of the
//!    horizontal and vertical image gradients. The symmetric 2x2 matrix has
//!    three unique components (sxx, sxy, syy).
//! 2. The component with the largest whole-image norm becomes an 8-bit
//!    grayscale "coherent tensor" image. (Selection is per image, one tensor
//!    represents the scan; per-pixel selection would be an alternative.)
//! 3. Per column, the first and last background-to-foreground transitions of
//!    the binarized tensor image propose ILM and choroid rows. A candidate
//!    is accepted only when it lies within `tau_px` rows of the last
//!    accepted value in that trace; the first candidate column initializes
//!    a trace unconditionally.
//! 4. Rejected columns are filled by linear interpolation between valid
//!    neighbors and the trace is median-filtered.
//! 5. The rows between the smoothed ILM and choroid are kept; everything
//!    else multiplies to zero.

use crate::error::{Error, Result};
use crate::scan::Scan;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum BinarizeMethod {
    /// Histogram-based threshold maximizing between-class variance.
    Otsu,
    /// Fixed threshold on [0, 1] intensities; foreground is `v >= t`.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PreprocessConfig {
    /// Standard deviation of the tensor smoothing filter, in pixels.
    pub smoothing_sigma: f64,
    /// Maximum allowed row jump between consecutive accepted trace values.
    pub tau_px: usize,
    pub binarize: BinarizeMethod,
    /// Median filter width for trace smoothing; must be odd.
    pub median_window: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            // A 1-px kernel keeps the blurred edge skirt inside the 2-px
            // trace tolerance; larger sigmas push the first binarized row
            // 3+ px above the true boundary on clean scans.
            smoothing_sigma: 1.0,
            tau_px: 20,
            binarize: BinarizeMethod::Otsu,
            median_window: 5,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing_sigma > 0.0) {
            return Err(Error::invalid("smoothing_sigma must be positive"));
        }
        if self.tau_px == 0 {
            return Err(Error::invalid("tau_px must be at least 1"));
        }
        if self.median_window == 0 || self.median_window.is_multiple_of(2) {
            return Err(Error::invalid("median_window must be odd and positive"));
        }
        if let BinarizeMethod::Fixed(t) = self.binarize {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid("fixed threshold must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Gradients and the structure tensor
// ---------------------------------------------------------------------------

/// Central-difference image gradients with replicated borders. `gx` runs
/// along columns (0 degrees), `gy` along rows (90 degrees).
#[derive(Debug, Clone)]
pub struct GradientField {
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    height: usize,
    width: usize,
}

impl GradientField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

pub fn gradients(scan: &Scan) -> GradientField {
    let (h, w) = (scan.height(), scan.width());
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let left = scan.at(r, c.saturating_sub(1));
            let right = scan.at(r, (c + 1).min(w - 1));
            gx[r * w + c] = (right - left) / 2.0;
            let up = scan.at(r.saturating_sub(1), c);
            let down = scan.at((r + 1).min(h - 1), c);
            gy[r * w + c] = (down - up) / 2.0;
        }
    }
    GradientField {
        gx,
        gy,
        height: h,
        width: w,
    }
}

/// The three unique components of the smoothed gradient outer-product
/// matrix per pixel.
#[derive(Debug, Clone)]
pub struct StructureTensorField {
    pub sxx: Vec<f64>,
    pub sxy: Vec<f64>,
    pub syy: Vec<f64>,
    height: usize,
    width: usize,
}

impl StructureTensorField {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Separable Gaussian blur with replicated borders, kernel truncated at
/// three standard deviations.
fn gaussian_blur(data: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for k in -radius..=radius {
        kernel.push((-0.5 * (k as f64 / sigma).powi(2)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for v in kernel.iter_mut() {
        *v /= norm;
    }

    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let cc = (c as i64 + ki as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += kv * data[r * w + cc];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let rr = (r as i64 + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[rr * w + c];
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Smoothed gradient outer products for every pixel.
pub fn structure_tensor(scan: &Scan, cfg: &PreprocessConfig) -> Result<StructureTensorField> {
    cfg.validate()?;
    let g = gradients(scan);
    let (h, w) = (g.height, g.width);
    let mut pxx = vec![0.0; h * w];
    let mut pxy = vec![0.0; h * w];
    let mut pyy = vec![0.0; h * w];
    for i in 0..h * w {
        pxx[i] = g.gx[i] * g.gx[i];
        pxy[i] = g.gx[i] * g.gy[i];
        pyy[i] = g.gy[i] * g.gy[i];
    }
    Ok(StructureTensorField {
        sxx: gaussian_blur(&pxx, h, w, cfg.smoothing_sigma),
        sxy: gaussian_blur(&pxy, h, w, cfg.smoothing_sigma),
        syy: gaussian_blur(&pyy, h, w, cfg.smoothing_sigma),
        height: h,
        width: w,
    })
}

/// Pick the tensor component with the largest Frobenius norm over the whole
/// image and rescale it affinely through 8-bit grayscale back to [0, 1].
/// An all-zero field maps to an all-zero image.
pub fn coherent_tensor_image(st: &StructureTensorField, source: &Scan) -> Scan {
    let frob = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let components = [&st.sxx, &st.sxy, &st.syy];
    let norms = [frob(&st.sxx), frob(&st.sxy), frob(&st.syy)];
    let mut best = 0;
    for i in 1..3 {
        if norms[i] > norms[best] {
            best = i;
        }
    }
    let chosen = components[best];
    let lo = chosen.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = chosen.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pixels: Vec<f64> = if hi > lo {
        chosen
            .iter()
            .map(|&v| ((v - lo) / (hi - lo) * 255.0).round() / 255.0)
            .collect()
    } else {
        vec![0.0; chosen.len()]
    };
    Scan::new(
        pixels,
        st.height,
        st.width,
        source.axial_scale_um_per_px(),
        format!("{}-tensor", source.id),
    )
    .expect("rescaled tensor image is always a valid scan")
}

// ---------------------------------------------------------------------------
// Binarization
// ---------------------------------------------------------------------------

/// Foreground map of a [0, 1] image under the configured threshold.
pub fn binarize(img: &Scan, method: BinarizeMethod) -> Vec<bool> {
    let threshold = match method {
        BinarizeMethod::Fixed(t) => t,
        BinarizeMethod::Otsu => otsu_threshold(img),
    };
    img.pixels().iter().map(|&v| v >= threshold).collect()
}

/// Otsu's threshold over a 256-bin histogram, returned on the [0, 1] scale.
/// The returned value is the lower edge of the first foreground bin.
fn otsu_threshold(img: &Scan) -> f64 {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[(v * 255.0).round().clamp(0.0, 255.0) as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    let total_f = total as f64;
    let global_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &n)| i as f64 * n as f64)
        .sum();

    let mut best_t = 0usize;
    let mut best_var = -1.0;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    // Threshold t means: background <= t, foreground > t.
    for t in 0..255 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total_f - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (global_sum - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if between > best_var {
            best_var = between;
            best_t = t;
        }
    }
    (best_t as f64 + 1.0) / 255.0 - 0.5 / 255.0
}

// ---------------------------------------------------------------------------
// Boundary tracing
// ---------------------------------------------------------------------------

/// A raw per-column trace: candidate rows plus acceptance flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rows: Vec<f64>,
    pub valid: Vec<bool>,
}

impl Trace {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

/// Trace the first and last foreground transitions per column of the
/// binarized tensor image, rejecting candidates that jump more than
/// `tau_px` rows from the last accepted value.
pub fn trace_boundaries(tensor_img: &Scan, cfg: &PreprocessConfig) -> Result<(Trace, Trace)> {
    cfg.validate()?;
    let fg = binarize(tensor_img, cfg.binarize);
    let (h, w) = (tensor_img.height(), tensor_img.width());
    let tau = cfg.tau_px as f64;

    let mut ilm = Trace {
        rows: vec![0.0; w],
        valid: vec![false; w],
    };
    let mut choroid = Trace {
        rows: vec![0.0; w],
        valid: vec![false; w],
    };
    // Columns of the last accepted candidate per trace.
    let mut anchor_ilm: Option<usize> = None;
    let mut anchor_cho: Option<usize> = None;

    for c in 0..w {
        let mut first: Option<usize> = None;
        let mut last: Option<usize> = None;
        for r in 0..h {
            if fg[r * w + c] {
                if first.is_none() {
                    first = Some(r);
                }
                last = Some(r);
            }
        }
        let (Some(p1), Some(p2)) = (first, last) else {
            continue; // no foreground: column stays invalid
        };

        match anchor_ilm {
            None => {
                // First column with any candidate initializes the trace.
                ilm.rows[c] = p1 as f64;
                ilm.valid[c] = true;
                anchor_ilm = Some(c);
            }
            Some(v) => {
                if (p1 as f64 - ilm.rows[v]).abs() <= tau {
                    ilm.rows[c] = p1 as f64;
                    ilm.valid[c] = true;
                    anchor_ilm = Some(c);
                }
            }
        }
        match anchor_cho {
            None => {
                choroid.rows[c] = p2 as f64;
                choroid.valid[c] = true;
                anchor_cho = Some(c);
            }
            Some(v) => {
                if (p2 as f64 - choroid.rows[v]).abs() <= tau {
                    choroid.rows[c] = p2 as f64;
                    choroid.valid[c] = true;
                    anchor_cho = Some(c);
                }
            }
        }
    }
    Ok((ilm, choroid))
}

/// Fill invalid gaps by linear interpolation between the nearest valid
/// columns (edges extend the nearest valid value), then median-filter.
pub fn fill_and_smooth(trace: &Trace, cfg: &PreprocessConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let w = trace.rows.len();
    let valid_cols: Vec<usize> = (0..w).filter(|&c| trace.valid[c]).collect();
    if valid_cols.len() < 2 {
        return Err(Error::TracingFailed(format!(
            "only {} valid column(s); the scan has no traceable retina",
            valid_cols.len()
        )));
    }

    let mut filled = vec![0.0; w];
    let mut next_valid_idx = 0;
    for c in 0..w {
        if trace.valid[c] {
            filled[c] = trace.rows[c];
            continue;
        }
        while next_valid_idx < valid_cols.len() && valid_cols[next_valid_idx] < c {
            next_valid_idx += 1;
        }
        let after = valid_cols.get(next_valid_idx).copied();
        let before = if next_valid_idx == 0 {
            None
        } else {
            Some(valid_cols[next_valid_idx - 1])
        };
        filled[c] = match (before, after) {
            (Some(b), Some(a)) => {
                let t = (c - b) as f64 / (a - b) as f64;
                trace.rows[b] + t * (trace.rows[a] - trace.rows[b])
            }
            (Some(b), None) => trace.rows[b],
            (None, Some(a)) => trace.rows[a],
            (None, None) => unreachable!("at least two valid columns exist"),
        };
    }

    let half = cfg.median_window / 2;
    let mut smoothed = vec![0.0; w];
    let mut window = Vec::with_capacity(cfg.median_window);
    for c in 0..w {
        window.clear();
        let lo = c.saturating_sub(half);
        let hi = (c + half + 1).min(w);
        window.extend_from_slice(&filled[lo..hi]);
        window.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = window.len();
        smoothed[c] = if n % 2 == 1 {
            window[n / 2]
        } else {
            0.5 * (window[n / 2 - 1] + window[n / 2])
        };
    }
    Ok(smoothed)
}

// ---------------------------------------------------------------------------
// Retina extraction
// ---------------------------------------------------------------------------

/// Result of the full preprocessing chain.
#[derive(Debug, Clone)]
pub struct RetinaExtraction {
    /// The input scan multiplied by the retina mask.
    pub retina: Scan,
    /// Binary retina mask, row-major, 1 between ILM and choroid inclusive.
    pub mask: Vec<u8>,
    /// Smoothed ILM trace.
    pub ilm: Vec<f64>,
    /// Smoothed choroid trace.
    pub choroid: Vec<f64>,
}

/// Run the full chain: tensor, grayscale conversion, tracing, smoothing,
/// mask generation, and multiplication with the original scan.
pub fn extract_retina(scan: &Scan, cfg: &PreprocessConfig) -> Result<RetinaExtraction> {
    let st = structure_tensor(scan, cfg)?;
    let tensor_img = coherent_tensor_image(&st, scan);
    let (raw_ilm, raw_cho) = trace_boundaries(&tensor_img, cfg)?;
    let ilm = fill_and_smooth(&raw_ilm, cfg)?;
    let choroid = fill_and_smooth(&raw_cho, cfg)?;

    let (h, w) = (scan.height(), scan.width());
    let mut mask = vec![0u8; h * w];
    let mut retina_px = vec![0.0; h * w];
    for c in 0..w {
        let top = ilm[c].round().clamp(0.0, (h - 1) as f64) as usize;
        let bottom = choroid[c].round().clamp(0.0, (h - 1) as f64) as usize;
        for r in top..=bottom.max(top) {
            mask[r * w + c] = 1;
            retina_px[r * w + c] = scan.at(r, c);
        }
    }
    let retina = Scan::new(
        retina_px,
        h,
        w,
        scan.axial_scale_um_per_px(),
        format!("{}-retina", scan.id),
    )?;
    Ok(RetinaExtraction {
        retina,
        mask,
        ilm,
        choroid,
    })
}
