//! Training-set augmentation: horizontal flips, small rotations, and
//! additive Gaussian intensity noise.
//!
//! Geometry is applied identically to the scan and its mask (bilinear for
//! intensities, nearest-neighbor for labels); noise touches the scan only
//! and is clamped back to [0, 1].

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scan::{LayerMask, Scan};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AugmentConfig {
    /// Randomly mirror copies left-right.
    pub horizontal_flip: bool,
    /// Rotation angles are drawn uniformly from [-limit, +limit] degrees.
    pub rotation_deg_limit: f64,
    /// Variance of the zero-mean Gaussian intensity noise.
    pub gaussian_noise_variance: f64,
    pub copies_per_scan: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            horizontal_flip: true,
            rotation_deg_limit: 5.0,
            gaussian_noise_variance: 0.01,
            copies_per_scan: 44,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gaussian_noise_variance < 0.0 {
            return Err(Error::invalid("noise variance must be nonnegative"));
        }
        if self.rotation_deg_limit < 0.0 {
            return Err(Error::invalid("rotation limit must be nonnegative"));
        }
        if self.copies_per_scan == 0 {
            return Err(Error::invalid("copies_per_scan must be positive"));
        }
        Ok(())
    }
}

pub fn flip_scan_horizontal(scan: &Scan) -> Scan {
    let (h, w) = (scan.height(), scan.width());
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = scan.at(r, w - 1 - c);
        }
    }
    Scan::new(out, h, w, scan.axial_scale_um_per_px(), scan.id.clone())
        .expect("mirroring preserves validity")
}

pub fn flip_mask_horizontal(mask: &LayerMask) -> LayerMask {
    let (h, w) = (mask.height(), mask.width());
    let mut out = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = mask.at(r, w - 1 - c);
        }
    }
    LayerMask::from_labels_unchecked(out, h, w)
}

/// Rotate scan and mask by the same angle about the image center. The scan
/// is resampled bilinearly, the mask by nearest neighbor; pixels pulled
/// from outside the frame become background.
pub fn rotate_pair(scan: &Scan, mask: &LayerMask, angle_deg: f64) -> (Scan, LayerMask) {
    let (h, w) = (scan.height(), scan.width());
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let mut spx = vec![0.0; h * w];
    let mut mpx = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            // Inverse map: rotate the output coordinate back into the source.
            let dy = r as f64 - cy;
            let dx = c as f64 - cx;
            let sy = cy + dy * cos - dx * sin;
            let sx = cx + dy * sin + dx * cos;
            if sy < 0.0 || sy > (h - 1) as f64 || sx < 0.0 || sx > (w - 1) as f64 {
                continue;
            }
            let y0 = sy.floor() as usize;
            let x0 = sx.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let x1 = (x0 + 1).min(w - 1);
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            spx[r * w + c] = (scan.at(y0, x0) * (1.0 - fy) * (1.0 - fx)
                + scan.at(y0, x1) * (1.0 - fy) * fx
                + scan.at(y1, x0) * fy * (1.0 - fx)
                + scan.at(y1, x1) * fy * fx)
                .clamp(0.0, 1.0);
            let ny = sy.round() as usize;
            let nx = sx.round() as usize;
            mpx[r * w + c] = mask.at(ny.min(h - 1), nx.min(w - 1));
        }
    }
    let scan_out = Scan::new(spx, h, w, scan.axial_scale_um_per_px(), scan.id.clone())
        .expect("rotation preserves validity");
    (scan_out, LayerMask::from_labels_unchecked(mpx, h, w))
}

/// Produce `copies_per_scan` augmented (scan, mask) pairs.
pub fn augment(
    scan: &Scan,
    mask: &LayerMask,
    cfg: &AugmentConfig,
) -> Result<Vec<(Scan, LayerMask)>> {
    cfg.validate()?;
    if scan.height() != mask.height() || scan.width() != mask.width() {
        return Err(Error::shape("scan and mask dimensions differ"));
    }
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let noise_std = cfg.gaussian_noise_variance.sqrt();
    let mut out = Vec::with_capacity(cfg.copies_per_scan);
    for _ in 0..cfg.copies_per_scan {
        let (mut s, mut m) = if cfg.horizontal_flip && rng.bool() {
            (flip_scan_horizontal(scan), flip_mask_horizontal(mask))
        } else {
            (scan.clone(), mask.clone())
        };
        let angle = if cfg.rotation_deg_limit > 0.0 {
            rng.uniform_in(-cfg.rotation_deg_limit, cfg.rotation_deg_limit)
        } else {
            0.0
        };
        if angle != 0.0 {
            let (rs, rm) = rotate_pair(&s, &m, angle);
            s = rs;
            m = rm;
        }
        if noise_std > 0.0 {
            let mut px = s.pixels().to_vec();
            for v in px.iter_mut() {
                *v = (*v + rng.normal_with(0.0, noise_std)).clamp(0.0, 1.0);
            }
            s = Scan::new(
                px,
                s.height(),
                s.width(),
                s.axial_scale_um_per_px(),
                s.id.clone(),
            )?;
        }
        out.push((s, m));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scan::{generate_synthetic, SynthConfig};

    fn fixture() -> (Scan, LayerMask) {
        let synth = generate_synthetic(&SynthConfig {
            width_px: 64,
            height_px: 128,
            ..SynthConfig::default()
        })
        .unwrap();
        (synth.scan, synth.mask)
    }

    #[test]
    fn double_flip_restores_the_original() {
        let (scan, mask) = fixture();
        let back = flip_scan_horizontal(&flip_scan_horizontal(&scan));
        assert_eq!(back.pixels(), scan.pixels());
        let mback = flip_mask_horizontal(&flip_mask_horizontal(&mask));
        assert_eq!(mback.labels(), mask.labels());
    }

    #[test]
    fn zero_angle_rotation_is_exact_identity() {
        let (scan, mask) = fixture();
        let (s, m) = rotate_pair(&scan, &mask, 0.0);
        assert_eq!(s.pixels(), scan.pixels());
        assert_eq!(m.labels(), mask.labels());
    }

    #[test]
    fn augmented_masks_keep_the_label_set_and_shape() {
        let (scan, mask) = fixture();
        let cfg = AugmentConfig {
            copies_per_scan: 8,
            seed: 3,
            ..AugmentConfig::default()
        };
        let copies = augment(&scan, &mask, &cfg).unwrap();
        assert_eq!(copies.len(), 8);
        for (s, m) in &copies {
            assert_eq!((s.height(), s.width()), (scan.height(), scan.width()));
            assert_eq!((m.height(), m.width()), (mask.height(), mask.width()));
            assert!(m.labels().iter().all(|&v| v <= 2));
            assert!(s.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn augmentation_is_seed_deterministic() {
        let (scan, mask) = fixture();
        let cfg = AugmentConfig {
            copies_per_scan: 3,
            seed: 17,
            ..AugmentConfig::default()
        };
        let a = augment(&scan, &mask, &cfg).unwrap();
        let b = augment(&scan, &mask, &cfg).unwrap();
        for ((sa, ma), (sb, mb)) in a.iter().zip(&b) {
            assert_eq!(sa.pixels(), sb.pixels());
            assert_eq!(ma.labels(), mb.labels());
        }
    }

    #[test]
    fn default_copy_count_reproduces_the_training_total() {
        // 137 source scans at the default 44 copies each yields 6,028
        // training samples.
        let cfg = AugmentConfig::default();
        assert_eq!(137 * cfg.copies_per_scan, 6_028);
        let (scan, mask) = fixture();
        let one = augment(
            &scan,
            &mask,
            &AugmentConfig {
                copies_per_scan: 44,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(one.len(), 44);
    }
}
