//! On-disk file formats.
//!
//! All binary formats share one layout: a single JSON header line
//! (UTF-8, terminated by `\n`) followed by a raw little-endian payload.
//!
//! * image (`.img`) — header `{"h":H,"w":W,"spacing_mm":[row,col]}`,
//!   payload H·W f32 values, row-major.
//! * activation stack (`.act`) — header `{"n":N,"h":H,"w":W}`, payload
//!   N·H·W f32 values, channel-major.
//! * label map (`.mask`) — header
//!   `{"h":H,"w":W,"spacing_mm":[row,col],"labels":[...]}`, payload H·W
//!   u8 label indices, row-major; 0 is background, `k` is `labels[k-1]`.
//!
//! Landmarks cross the tool boundary as CSV with header `index,x,y` and
//! coordinates in the normalized [-1, 1] range, LF line endings. Reports
//! are CSV (`frame_id,organ,method,dice,hausdorff_mm,runtime_ms`, sweeps
//! prepend an `offset` column and omit the runtime so reruns are
//! byte-identical) or JSON. 8-bit PGM export is provided for quick
//! visualization only; it quantizes.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::FormatError;
use crate::geom::{LandmarkSet, Point2, TransformModel};
use crate::landmarks::ActivationStack;
use crate::metrics::MetricSample;
use crate::phantom::{LabeledMask, Phantom, PhantomFrame};
use crate::pipeline::{RegistrationReport, SweepRow};
use crate::warp::{ImageGrid, SegmentationMask};

#[derive(Serialize, Deserialize)]
struct ImgHeader {
    h: usize,
    w: usize,
    spacing_mm: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct ActHeader {
    n: usize,
    h: usize,
    w: usize,
}

#[derive(Serialize, Deserialize)]
struct MaskHeader {
    h: usize,
    w: usize,
    spacing_mm: [f64; 2],
    labels: Vec<String>,
}

fn read_header_line(reader: &mut impl BufRead, what: &str) -> Result<String, FormatError> {
    let mut line = String::new();
    let n = reader.read_line(&mut line)?;
    if n == 0 || !line.ends_with('\n') {
        return Err(FormatError::malformed(what, "missing JSON header line"));
    }
    Ok(line)
}

fn read_f32_payload(
    reader: &mut impl Read,
    count: usize,
    what: &str,
) -> Result<Vec<f64>, FormatError> {
    let mut bytes = vec![0u8; count * 4];
    reader.read_exact(&mut bytes).map_err(|_| {
        FormatError::malformed(what, format!("payload shorter than {count} f32 values"))
    })?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing)? != 0 {
        return Err(FormatError::malformed(what, "trailing bytes after payload"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn write_f32_payload(writer: &mut impl Write, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(4096);
    for v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
        if buf.len() >= 4096 {
            writer.write_all(&buf)?;
            buf.clear();
        }
    }
    writer.write_all(&buf)
}

/// Write an image as a raw-float file (values round to f32).
pub fn write_image(path: &Path, img: &ImageGrid) -> Result<(), FormatError> {
    let header = ImgHeader {
        h: img.height(),
        w: img.width(),
        spacing_mm: [img.spacing_mm().0, img.spacing_mm().1],
    };
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut f, &header).map_err(std::io::Error::other)?;
    f.write_all(b"\n")?;
    write_f32_payload(&mut f, img.values().iter().copied())?;
    Ok(())
}

pub fn read_image(path: &Path) -> Result<ImageGrid, FormatError> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let line = read_header_line(&mut reader, "image file")?;
    let header: ImgHeader = serde_json::from_str(&line)
        .map_err(|e| FormatError::malformed("image header", e.to_string()))?;
    if header.h == 0 || header.w == 0 {
        return Err(FormatError::malformed("image header", "empty shape"));
    }
    if !(header.spacing_mm[0] > 0.0 && header.spacing_mm[1] > 0.0) {
        return Err(FormatError::malformed(
            "image header",
            "spacing must be positive",
        ));
    }
    let values = read_f32_payload(&mut reader, header.h * header.w, "image file")?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(FormatError::malformed("image file", "non-finite pixels"));
    }
    Ok(ImageGrid::new(
        header.h,
        header.w,
        (header.spacing_mm[0], header.spacing_mm[1]),
        values,
    ))
}

/// Write an activation stack (f32, channel-major).
pub fn write_activations(path: &Path, stack: &ActivationStack) -> Result<(), FormatError> {
    let header = ActHeader {
        n: stack.channels(),
        h: stack.height(),
        w: stack.width(),
    };
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut f, &header).map_err(std::io::Error::other)?;
    f.write_all(b"\n")?;
    write_f32_payload(&mut f, stack.data().iter().copied())?;
    Ok(())
}

pub fn read_activations(path: &Path) -> Result<ActivationStack, FormatError> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let line = read_header_line(&mut reader, "activation file")?;
    let header: ActHeader = serde_json::from_str(&line)
        .map_err(|e| FormatError::malformed("activation header", e.to_string()))?;
    if header.n == 0 || header.h == 0 || header.w == 0 {
        return Err(FormatError::malformed("activation header", "empty shape"));
    }
    let data = read_f32_payload(&mut reader, header.n * header.h * header.w, "activation file")?;
    if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(FormatError::malformed(
            "activation file",
            "activations must be finite and non-negative",
        ));
    }
    Ok(ActivationStack::new(header.n, header.h, header.w, data))
}

/// Write labeled masks as one label-map file. Masks must be disjoint.
pub fn write_label_masks(path: &Path, masks: &[LabeledMask]) -> Result<(), FormatError> {
    let first = masks
        .first()
        .ok_or_else(|| FormatError::malformed("label map", "no masks to write"))?;
    let (h, w) = (first.mask.height(), first.mask.width());
    let mut payload = vec![0u8; h * w];
    for (k, lm) in masks.iter().enumerate() {
        if lm.mask.height() != h || lm.mask.width() != w {
            return Err(FormatError::malformed("label map", "mask shapes differ"));
        }
        for (i, &v) in lm.mask.values().iter().enumerate() {
            if v {
                if payload[i] != 0 {
                    return Err(FormatError::malformed(
                        "label map",
                        "overlapping masks cannot share a label map",
                    ));
                }
                payload[i] = (k + 1) as u8;
            }
        }
    }
    let header = MaskHeader {
        h,
        w,
        spacing_mm: [first.mask.spacing_mm().0, first.mask.spacing_mm().1],
        labels: masks.iter().map(|m| m.label.clone()).collect(),
    };
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut f, &header).map_err(std::io::Error::other)?;
    f.write_all(b"\n")?;
    f.write_all(&payload)?;
    Ok(())
}

pub fn read_label_masks(path: &Path) -> Result<Vec<LabeledMask>, FormatError> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let line = read_header_line(&mut reader, "label map")?;
    let header: MaskHeader = serde_json::from_str(&line)
        .map_err(|e| FormatError::malformed("label map header", e.to_string()))?;
    if header.h == 0 || header.w == 0 || header.labels.is_empty() {
        return Err(FormatError::malformed("label map header", "empty shape or labels"));
    }
    if header.labels.len() > 255 {
        return Err(FormatError::malformed("label map header", "too many labels"));
    }
    let mut payload = vec![0u8; header.h * header.w];
    reader.read_exact(&mut payload).map_err(|_| {
        FormatError::malformed("label map", "payload shorter than H*W bytes")
    })?;
    if payload.iter().any(|&b| b as usize > header.labels.len()) {
        return Err(FormatError::malformed("label map", "label index out of range"));
    }
    let spacing = (header.spacing_mm[0], header.spacing_mm[1]);
    Ok(header
        .labels
        .iter()
        .enumerate()
        .map(|(k, label)| LabeledMask {
            label: label.clone(),
            mask: SegmentationMask::new(
                header.h,
                header.w,
                spacing,
                payload.iter().map(|&b| b as usize == k + 1).collect(),
            ),
        })
        .collect())
}

/// Write landmarks as `index,x,y` CSV with LF endings.
pub fn write_landmarks_csv(path: &Path, set: &LandmarkSet) -> Result<(), FormatError> {
    let mut out = String::from("index,x,y\n");
    for (i, p) in set.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", p.x, p.y));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_landmarks_csv(path: &Path) -> Result<LandmarkSet, FormatError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("index,x,y") => {}
        _ => {
            return Err(FormatError::malformed(
                "landmark csv",
                "expected header `index,x,y`",
            ))
        }
    }
    let mut points = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let idx: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::malformed("landmark csv", format!("bad index on line {}", lineno + 2)))?;
        if idx != points.len() {
            return Err(FormatError::malformed(
                "landmark csv",
                format!("indices must be consecutive from 0, got {idx} on line {}", lineno + 2),
            ));
        }
        let x: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::malformed("landmark csv", format!("bad x on line {}", lineno + 2)))?;
        let y: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::malformed("landmark csv", format!("bad y on line {}", lineno + 2)))?;
        if parts.next().is_some() {
            return Err(FormatError::malformed(
                "landmark csv",
                format!("too many fields on line {}", lineno + 2),
            ));
        }
        const RANGE_SLACK: f64 = 1e-9;
        if !(x.is_finite() && y.is_finite())
            || x.abs() > 1.0 + RANGE_SLACK
            || y.abs() > 1.0 + RANGE_SLACK
        {
            return Err(FormatError::malformed(
                "landmark csv",
                format!("coordinates outside [-1,1] on line {}", lineno + 2),
            ));
        }
        points.push(Point2::new(x, y));
    }
    LandmarkSet::new(points)
        .map_err(|e| FormatError::malformed("landmark csv", e.to_string()))
}

/// Rows of a plain registration metrics report.
pub fn write_metrics_csv(
    path: &Path,
    rows: &[(MetricSample, String, f64)],
) -> Result<(), FormatError> {
    let mut out = String::from("frame_id,organ,method,dice,hausdorff_mm,runtime_ms\n");
    for (sample, method, runtime_ms) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sample.frame_id, sample.organ_label, method, sample.dice, sample.hausdorff_mm, runtime_ms
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Sweep report: metrics schema plus the leading offset column. Runtime
/// is intentionally absent so identical configs produce byte-identical
/// files.
pub fn sweep_rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("offset,frame_id,organ,method,dice,hausdorff_mm\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.offset, r.frame_id, r.organ, r.method, r.dice, r.hausdorff_mm
        ));
    }
    out
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), FormatError> {
    fs::write(path, sweep_rows_to_csv(rows))?;
    Ok(())
}

/// Per-organ mean ± std table as CSV.
pub fn summaries_to_csv(summaries: &[crate::metrics::OrganSummary]) -> String {
    let mut out =
        String::from("organ,count,dice_mean,dice_std,hausdorff_mean_mm,hausdorff_std_mm\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.organ_label, s.count, s.dice_mean, s.dice_std, s.hausdorff_mean_mm, s.hausdorff_std_mm
        ));
    }
    out
}

pub fn write_report_json(path: &Path, report: &RegistrationReport) -> Result<(), FormatError> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| FormatError::malformed("report", e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

/// Ground-truth sidecar for one phantom frame.
#[derive(Debug, Serialize, Deserialize)]
pub struct FrameGroundTruth {
    pub frame_id: usize,
    pub transform: TransformModel,
    pub landmarks: LandmarkSet,
}

/// Write a phantom dataset directory:
/// `template.img/.mask/.act` plus `frame_NNN.img/.mask/.act/.json`.
pub fn write_phantom_dataset(dir: &Path, phantom: &Phantom) -> Result<(), FormatError> {
    fs::create_dir_all(dir)?;
    let write_frame = |stem: &str, frame: &PhantomFrame| -> Result<(), FormatError> {
        write_image(&dir.join(format!("{stem}.img")), &frame.image)?;
        write_label_masks(&dir.join(format!("{stem}.mask")), &frame.masks)?;
        write_activations(&dir.join(format!("{stem}.act")), &frame.oracle_activations)?;
        Ok(())
    };
    write_frame("template", &phantom.template)?;
    for (i, frame) in phantom.frames.iter().enumerate() {
        let stem = format!("frame_{i:03}");
        write_frame(&stem, frame)?;
        let gt = FrameGroundTruth {
            frame_id: i,
            transform: frame.ground_truth.clone(),
            landmarks: frame.oracle_landmarks.clone(),
        };
        let json = serde_json::to_string_pretty(&gt)
            .map_err(|e| FormatError::malformed("ground truth", e.to_string()))?;
        fs::write(dir.join(format!("{stem}.json")), json)?;
    }
    Ok(())
}

/// 8-bit binary PGM export (quantizes; for quick visualization only).
pub fn write_pgm(path: &Path, img: &ImageGrid) -> Result<(), FormatError> {
    let (lo, hi) = img.min_max();
    let range = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.values()
            .iter()
            .map(|v| (((v - lo) / range) * 255.0).round() as u8),
    );
    fs::write(path, out)?;
    Ok(())
}

/// Read an 8-bit binary PGM produced by [`write_pgm`] or compatible
/// tools, as intensities in [0, 1] at the given spacing.
pub fn read_pgm(path: &Path, spacing_mm: (f64, f64)) -> Result<ImageGrid, FormatError> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0usize;
    // P5 header: magic, width, height, maxval, single whitespace, payload
    while fields.len() < 4 && pos < bytes.len() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(&bytes[start..pos]);
    }
    if fields.len() != 4 || fields[0] != b"P5" {
        return Err(FormatError::malformed("pgm", "expected binary P5 header"));
    }
    let parse = |b: &[u8], what: &str| -> Result<usize, FormatError> {
        std::str::from_utf8(b)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::malformed("pgm", format!("bad {what}")))
    };
    let w = parse(fields[1], "width")?;
    let h = parse(fields[2], "height")?;
    let maxval = parse(fields[3], "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(FormatError::malformed("pgm", "only 8-bit PGM supported"));
    }
    pos += 1; // single whitespace after maxval
    if bytes.len() < pos + h * w {
        return Err(FormatError::malformed("pgm", "payload too short"));
    }
    let values = bytes[pos..pos + h * w]
        .iter()
        .map(|&b| b as f64 / maxval as f64)
        .collect();
    Ok(ImageGrid::new(h, w, spacing_mm, values))
}
