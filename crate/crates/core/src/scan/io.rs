//! Scan, mask, and sidecar file encodings.
//!
//! Scans and masks are stored as 8-bit grayscale PNG or binary PGM (P5),
//! chosen by extension. Scan intensities map to bytes by `round(v * 255)`
//! on write and `v / 255` on read. Masks store the raw label values
//! {0, 1, 2} so the write-then-read round trip is exact. Per-scan metadata
//! (id, axial scale, optional grade) lives in a JSON sidecar.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GradeLabel, LayerMask, Scan, DEFAULT_AXIAL_SCALE_UM_PER_PX};
use crate::error::{Error, Result};

/// Sidecar metadata stored next to a scan file.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScanSidecar {
    pub id: String,
    pub axial_scale_um_per_px: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grade: Option<GradeLabel>,
}

/// `scan.png` -> `scan.meta.json`.
pub fn sidecar_path(image_path: &Path) -> std::path::PathBuf {
    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    image_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_sidecar(meta: &ScanSidecar, image_path: &Path) -> Result<()> {
    let path = sidecar_path(image_path);
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::invalid(format!("sidecar serialization failed: {e}")))?;
    std::fs::write(&path, json).map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(image_path: &Path) -> Result<Option<ScanSidecar>> {
    let path = sidecar_path(image_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(path.clone(), e))?;
    let meta = serde_json::from_str(&text)
        .map_err(|e| Error::format(path, format!("invalid sidecar JSON: {e}")))?;
    Ok(Some(meta))
}

// ---------------------------------------------------------------------------
// 8-bit grayscale image carrier
// ---------------------------------------------------------------------------

enum ImageFormat {
    Png,
    Pgm,
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm") => Ok(ImageFormat::Pgm),
        other => Err(Error::format(
            path,
            format!(
                "unknown image extension {:?}; expected .png or .pgm",
                other.unwrap_or("<none>")
            ),
        )),
    }
}

fn read_gray8(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    match format_for(path)? {
        ImageFormat::Png => read_png_gray8(path),
        ImageFormat::Pgm => read_pgm(path),
    }
}

fn write_gray8(path: &Path, bytes: &[u8], width: usize, height: usize) -> Result<()> {
    match format_for(path)? {
        ImageFormat::Png => write_png_gray8(path, bytes, width, height),
        ImageFormat::Pgm => write_pgm(path, bytes, width, height),
    }
}

fn read_png_gray8(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, format!("png decode failed: {e}")))?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, format!("png frame decode failed: {e}")))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::format(
            path,
            format!(
                "expected 8-bit grayscale, found {:?}/{:?}",
                info.color_type, info.bit_depth
            ),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    buf.truncate(w * h);
    Ok((buf, w, h))
}

fn write_png_gray8(path: &Path, bytes: &[u8], width: usize, height: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| Error::format(path, format!("png encode failed: {e}")))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| Error::format(path, format!("png encode failed: {e}")))
}

fn read_pgm(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    // Header: "P5" <whitespace/comments> width height maxval, one whitespace, raster.
    let mut pos = 0usize;
    let mut fields = Vec::new();
    if raw.get(0..2) != Some(b"P5") {
        return Err(Error::format(path, "not a binary PGM (missing P5 magic)"));
    }
    pos += 2;
    while fields.len() < 3 && pos < raw.len() {
        match raw[pos] {
            b'#' => {
                while pos < raw.len() && raw[pos] != b'\n' {
                    pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => pos += 1,
            _ => {
                let start = pos;
                while pos < raw.len() && !raw[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                let token = std::str::from_utf8(&raw[start..pos])
                    .map_err(|_| Error::format(path, "malformed PGM header"))?;
                let value: usize = token
                    .parse()
                    .map_err(|_| Error::format(path, "malformed PGM header"))?;
                fields.push(value);
            }
        }
    }
    if fields.len() != 3 || pos >= raw.len() {
        return Err(Error::format(path, "truncated PGM header"));
    }
    pos += 1; // single whitespace after maxval
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 255 {
        return Err(Error::format(
            path,
            format!("PGM maxval {maxval}, expected 255"),
        ));
    }
    let need = w * h;
    if raw.len() < pos + need {
        return Err(Error::format(
            path,
            "PGM raster shorter than header promises",
        ));
    }
    Ok((raw[pos..pos + need].to_vec(), w, h))
}

fn write_pgm(path: &Path, bytes: &[u8], width: usize, height: usize) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        write!(out, "P5\n{width} {height}\n255\n")?;
        out.write_all(bytes)
    })()
    .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Scan / mask entry points
// ---------------------------------------------------------------------------

/// Read an 8-bit grayscale scan; intensities become `byte / 255`. Metadata
/// comes from the sidecar when present, otherwise the file stem names the
/// scan and the default axial scale applies.
pub fn read_scan(path: impl AsRef<Path>) -> Result<Scan> {
    let path = path.as_ref();
    let (bytes, w, h) = read_gray8(path)?;
    let pixels: Vec<f64> = bytes.iter().map(|&b| b as f64 / 255.0).collect();
    let meta = read_sidecar(path)?;
    let (id, scale) = match meta {
        Some(m) => (m.id, m.axial_scale_um_per_px),
        None => (
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scan".to_string()),
            DEFAULT_AXIAL_SCALE_UM_PER_PX,
        ),
    };
    Scan::new(pixels, h, w, scale, id)
}

pub fn write_scan(scan: &Scan, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = scan
        .pixels()
        .iter()
        .map(|&v| (v * 255.0).round() as u8)
        .collect();
    write_gray8(path.as_ref(), &bytes, scan.width(), scan.height())
}

/// Read a label image; every byte must be 0, 1, or 2. The column-ordering
/// invariant is not enforced on file reads: predicted masks are legitimate
/// artifacts and may locally bend the layer interface.
pub fn read_mask(path: impl AsRef<Path>) -> Result<LayerMask> {
    let path = path.as_ref();
    let (bytes, w, h) = read_gray8(path)?;
    if let Some(bad) = bytes.iter().find(|&&b| b > 2) {
        return Err(Error::format(
            path,
            format!("mask byte {bad} outside the label set {{0,1,2}}"),
        ));
    }
    Ok(LayerMask::from_labels_unchecked(bytes, h, w))
}

pub fn write_mask(mask: &LayerMask, path: impl AsRef<Path>) -> Result<()> {
    write_gray8(path.as_ref(), mask.labels(), mask.width(), mask.height())
}

/// Dump boundary traces as CSV with header `col,ilm,gcl,ipl,choroid,valid`.
pub fn write_boundaries_csv(bs: &super::BoundarySet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("col,ilm,gcl,ipl,choroid,valid\n");
    for col in 0..bs.width() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            col,
            bs.ilm[col],
            bs.gcl[col],
            bs.ipl[col],
            bs.choroid[col],
            u8::from(bs.valid[col]),
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
