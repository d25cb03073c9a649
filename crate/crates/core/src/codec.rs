//! File formats: SGM grid volumes, binary PPM overlays, the subject manifest
//! and the CSV DSC report.
//!
//! # SGM
//!
//! One ASCII header line followed by a raw little-endian payload:
//!
//! ```text
//! SGM1 <width> <height> <depth> <dtype>\n
//! ```
//!
//! `dtype` is `f32` (score and intensity volumes) or `u8` (masks). The payload
//! holds exactly `width * height * depth` values, slice-major then row-major.
//! Header integers are canonical decimals, so decoding and re-encoding a valid
//! file reproduces it byte for byte.
//!
//! All writers go through a temporary file in the destination directory that is
//! renamed into place, so a failed write never leaves a partial file behind.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result, SgmErrorKind};
use crate::grid::{BinaryMask, IntensityMap, Raster, ScoreMap, Shape, Volume, VolumeKind};
use crate::metrics::{summary_stats, DscReport, SummaryStats};
use crate::overlay::RgbImage;

const SGM_MAGIC: &[u8; 4] = b"SGM1";
const MAX_HEADER_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgmDtype {
    F32,
    U8,
}

impl SgmDtype {
    pub fn as_str(self) -> &'static str {
        match self {
            SgmDtype::F32 => "f32",
            SgmDtype::U8 => "u8",
        }
    }

    pub fn value_size(self) -> usize {
        match self {
            SgmDtype::F32 => 4,
            SgmDtype::U8 => 1,
        }
    }

    pub fn for_kind(kind: VolumeKind) -> Self {
        match kind {
            VolumeKind::Mask => SgmDtype::U8,
            VolumeKind::Score | VolumeKind::Intensity => SgmDtype::F32,
        }
    }
}

impl fmt::Display for SgmDtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SgmHeader {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub dtype: SgmDtype,
}

impl SgmHeader {
    pub fn shape(&self) -> Shape {
        Shape {
            width: self.width,
            height: self.height,
            depth: self.depth,
        }
    }

    pub fn encode(&self) -> String {
        format!(
            "SGM1 {} {} {} {}\n",
            self.width, self.height, self.depth, self.dtype
        )
    }

    /// Parses the header line and returns it along with its length in bytes
    /// (including the newline).
    pub fn parse(bytes: &[u8]) -> Result<(SgmHeader, usize)> {
        let err = |offset: usize, kind| Error::Sgm {
            offset: offset as u64,
            kind,
        };
        if bytes.len() < 4 || &bytes[..4] != SGM_MAGIC {
            return Err(err(0, SgmErrorKind::BadMagic));
        }
        let limit = bytes.len().min(MAX_HEADER_LEN);
        let newline = bytes[..limit].iter().position(|&b| b == b'\n').ok_or_else(|| {
            err(
                limit,
                SgmErrorKind::BadHeader("no newline terminating the header".into()),
            )
        })?;
        let line = std::str::from_utf8(&bytes[..newline])
            .map_err(|e| err(e.valid_up_to(), SgmErrorKind::BadHeader("non-ASCII header".into())))?;

        let mut offset = 0;
        let mut tokens = Vec::with_capacity(5);
        for token in line.split(' ') {
            tokens.push((offset, token));
            offset += token.len() + 1;
        }
        if tokens.len() != 5 {
            return Err(err(
                0,
                SgmErrorKind::BadHeader(format!(
                    "expected 5 space-separated fields, found {}",
                    tokens.len()
                )),
            ));
        }

        let mut dims = [0usize; 3];
        for (slot, &(at, token)) in dims.iter_mut().zip(&tokens[1..4]) {
            let canonical = !token.is_empty()
                && token.bytes().all(|b| b.is_ascii_digit())
                && !token.starts_with('0');
            *slot = match token.parse::<usize>() {
                Ok(v) if canonical => v,
                _ => {
                    return Err(err(
                        at,
                        SgmErrorKind::BadHeader(format!("{token:?} is not a positive integer")),
                    ))
                }
            };
        }
        let (at, dtype) = tokens[4];
        let dtype = match dtype {
            "f32" => SgmDtype::F32,
            "u8" => SgmDtype::U8,
            other => {
                return Err(err(
                    at,
                    SgmErrorKind::BadHeader(format!("unknown dtype {other:?}")),
                ))
            }
        };
        Ok((
            SgmHeader {
                width: dims[0],
                height: dims[1],
                depth: dims[2],
                dtype,
            },
            newline + 1,
        ))
    }
}

/// A decoded SGM volume, tagged with the kind it was read as.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Score(Volume<ScoreMap>),
    Mask(Volume<BinaryMask>),
    Intensity(Volume<IntensityMap>),
}

impl AnyVolume {
    pub fn shape(&self) -> Shape {
        match self {
            AnyVolume::Score(v) => v.shape(),
            AnyVolume::Mask(v) => v.shape(),
            AnyVolume::Intensity(v) => v.shape(),
        }
    }

    pub fn kind(&self) -> VolumeKind {
        match self {
            AnyVolume::Score(_) => VolumeKind::Score,
            AnyVolume::Mask(_) => VolumeKind::Mask,
            AnyVolume::Intensity(_) => VolumeKind::Intensity,
        }
    }
}

/// Pixel types with an SGM payload encoding.
pub trait SgmPixel: Copy {
    const DTYPE: SgmDtype;
    fn put_le(self, out: &mut Vec<u8>);
}

impl SgmPixel for f32 {
    const DTYPE: SgmDtype = SgmDtype::F32;
    fn put_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl SgmPixel for u8 {
    const DTYPE: SgmDtype = SgmDtype::U8;
    fn put_le(self, out: &mut Vec<u8>) {
        out.push(self);
    }
}

pub fn encode_sgm<T>(volume: &Volume<T>) -> Vec<u8>
where
    T: Raster,
    T::Pixel: SgmPixel,
{
    let header = SgmHeader {
        width: volume.width(),
        height: volume.height(),
        depth: volume.depth(),
        dtype: <T::Pixel as SgmPixel>::DTYPE,
    }
    .encode();
    let mut out =
        Vec::with_capacity(header.len() + volume.shape().voxels() * header_value_size::<T>());
    out.extend_from_slice(header.as_bytes());
    for slice in volume.slices() {
        for &v in slice.pixels() {
            v.put_le(&mut out);
        }
    }
    out
}

fn header_value_size<T: Raster>() -> usize
where
    T::Pixel: SgmPixel,
{
    <T::Pixel as SgmPixel>::DTYPE.value_size()
}

/// Decodes an SGM byte stream as a volume of the requested kind.
pub fn decode_sgm(bytes: &[u8], kind: VolumeKind) -> Result<AnyVolume> {
    let (header, header_len) = SgmHeader::parse(bytes)?;
    let expected_dtype = SgmDtype::for_kind(kind);
    if header.dtype != expected_dtype {
        return Err(Error::Sgm {
            offset: (header_len - 1 - header.dtype.as_str().len()) as u64,
            kind: SgmErrorKind::DtypeMismatch {
                expected: expected_dtype.as_str(),
                found: header.dtype.as_str(),
            },
        });
    }

    let plane = header
        .width
        .checked_mul(header.height)
        .ok_or_else(|| Error::Sgm {
            offset: 0,
            kind: SgmErrorKind::BadHeader("dimensions overflow".into()),
        })?;
    let payload_len = plane
        .checked_mul(header.depth)
        .and_then(|n| n.checked_mul(header.dtype.value_size()))
        .ok_or_else(|| Error::Sgm {
            offset: 0,
            kind: SgmErrorKind::BadHeader("dimensions overflow".into()),
        })?;
    let payload = &bytes[header_len..];
    if payload.len() < payload_len {
        return Err(Error::Sgm {
            offset: bytes.len() as u64,
            kind: SgmErrorKind::ShortPayload {
                expected: payload_len as u64,
                actual: payload.len() as u64,
            },
        });
    }
    if payload.len() > payload_len {
        return Err(Error::Sgm {
            offset: (header_len + payload_len) as u64,
            kind: SgmErrorKind::TrailingBytes {
                count: (payload.len() - payload_len) as u64,
            },
        });
    }

    let at = |index: usize| (header_len + index * header.dtype.value_size()) as u64;
    let (w, h) = (header.width, header.height);
    match kind {
        VolumeKind::Mask => {
            if let Some(i) = payload.iter().position(|&v| v > 1) {
                return Err(Error::Sgm {
                    offset: at(i),
                    kind: SgmErrorKind::NotBinary { value: payload[i] },
                });
            }
            let slices = payload
                .chunks_exact(plane)
                .map(|c| BinaryMask::from_labels_unchecked(w, h, c.to_vec()))
                .collect();
            Ok(AnyVolume::Mask(Volume::new(slices)?))
        }
        VolumeKind::Score | VolumeKind::Intensity => {
            let values: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            for (i, &v) in values.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Sgm {
                        offset: at(i),
                        kind: SgmErrorKind::NonFinite,
                    });
                }
                if kind == VolumeKind::Score && !(0.0..=1.0).contains(&v) {
                    return Err(Error::Sgm {
                        offset: at(i),
                        kind: SgmErrorKind::OutOfRange { value: v },
                    });
                }
            }
            let chunks = values.chunks_exact(plane);
            if kind == VolumeKind::Score {
                let slices = chunks
                    .map(|c| ScoreMap::new(w, h, c.to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(AnyVolume::Score(Volume::new(slices)?))
            } else {
                let slices = chunks
                    .map(|c| IntensityMap::new(w, h, c.to_vec()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(AnyVolume::Intensity(Volume::new(slices)?))
            }
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(e).in_file(path))
}

pub fn read_sgm(path: impl AsRef<Path>, kind: VolumeKind) -> Result<AnyVolume> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    decode_sgm(&bytes, kind).map_err(|e| e.in_file(path))
}

/// Reads only the header, e.g. to decide how to load a file of unknown kind.
pub fn read_sgm_header(path: impl AsRef<Path>) -> Result<SgmHeader> {
    use std::io::Read;
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(MAX_HEADER_LEN);
    std::fs::File::open(path)
        .and_then(|f| f.take(MAX_HEADER_LEN as u64).read_to_end(&mut buf))
        .map_err(|e| Error::Io(e).in_file(path))?;
    SgmHeader::parse(&buf)
        .map(|(h, _)| h)
        .map_err(|e| e.in_file(path))
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Volume<ScoreMap>> {
    match read_sgm(path, VolumeKind::Score)? {
        AnyVolume::Score(v) => Ok(v),
        _ => unreachable!("decode_sgm returns the requested kind"),
    }
}

pub fn read_masks(path: impl AsRef<Path>) -> Result<Volume<BinaryMask>> {
    match read_sgm(path, VolumeKind::Mask)? {
        AnyVolume::Mask(v) => Ok(v),
        _ => unreachable!("decode_sgm returns the requested kind"),
    }
}

pub fn read_intensities(path: impl AsRef<Path>) -> Result<Volume<IntensityMap>> {
    match read_sgm(path, VolumeKind::Intensity)? {
        AnyVolume::Intensity(v) => Ok(v),
        _ => unreachable!("decode_sgm returns the requested kind"),
    }
}

pub fn write_sgm<T>(volume: &Volume<T>, path: impl AsRef<Path>) -> Result<()>
where
    T: Raster,
    T::Pixel: SgmPixel,
{
    write_atomically(path.as_ref(), &encode_sgm(volume))
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn write_ppm(image: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    write_atomically(path.as_ref(), &encode_ppm(image))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let write = || -> std::io::Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    };
    write().map_err(|e| Error::Io(e).in_file(path))
}

/// One subject's files: ground truth, N model score volumes and an optional
/// intensity volume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub gt_path: PathBuf,
    pub model_paths: Vec<PathBuf>,
    pub intensity_path: Option<PathBuf>,
}

/// Parses manifest text. Relative paths are joined onto `base_dir`.
///
/// Each non-blank, non-`#` line is
/// `subject_id<TAB>gt_path<TAB>model_1;model_2;...[<TAB>intensity_path]`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<SubjectRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Manifest {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(bad(format!(
                "expected 3 or 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(bad("empty subject id".into()));
        }
        if fields[1].is_empty() {
            return Err(bad("empty ground-truth path".into()));
        }
        let models: Vec<&str> = fields[2].split(';').collect();
        if models.iter().any(|m| m.is_empty()) {
            return Err(bad("empty model path in model list".into()));
        }
        let intensity = match fields.get(3).copied() {
            Some("") => return Err(bad("empty intensity path".into())),
            Some(p) => Some(base_dir.join(p)),
            None => None,
        };
        if !seen.insert(id.to_string()) {
            return Err(Error::DuplicateSubject {
                line: line_no,
                id: id.to_string(),
            });
        }
        records.push(SubjectRecord {
            subject_id: id.to_string(),
            gt_path: base_dir.join(fields[1]),
            model_paths: models.iter().map(|m| base_dir.join(m)).collect(),
            intensity_path: intensity,
        });
    }
    Ok(records)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<SubjectRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(e).in_file(path))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base).map_err(|e| e.in_file(path))
}

/// Formats records as manifest lines, writing paths verbatim.
pub fn format_manifest(records: &[SubjectRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let models: Vec<String> = r
            .model_paths
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        out.push_str(&format!(
            "{}\t{}\t{}",
            r.subject_id,
            r.gt_path.display(),
            models.join(";")
        ));
        if let Some(p) = &r.intensity_path {
            out.push_str(&format!("\t{}", p.display()));
        }
        out.push('\n');
    }
    out
}

pub const REPORT_HEADER: &str = "subject,method,dsc";
pub const STATS_HEADER: &str = "statistic,method,value";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders the DSC report: one row per (subject, method), then a blank line and
/// a `statistic,method,value` block with the six summary statistics for each
/// method. All numbers use four decimals.
pub fn format_csv_report(reports: &[DscReport]) -> Result<String> {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    let Some(first) = reports.first() else {
        return Ok(out);
    };
    let methods: Vec<&str> = first.methods().collect();
    let method_set: HashSet<&str> = methods.iter().copied().collect();
    for r in reports {
        let set: HashSet<&str> = r.methods().collect();
        if set != method_set || r.per_method.len() != methods.len() {
            return Err(Error::invalid(
                "report set",
                format!(
                    "subject {} has methods {:?}, expected {:?}",
                    r.subject_id,
                    r.methods().collect::<Vec<_>>(),
                    methods
                ),
            ));
        }
        for (method, dsc) in &r.per_method {
            out.push_str(&format!(
                "{},{},{:.4}\n",
                csv_field(&r.subject_id),
                csv_field(method),
                dsc
            ));
        }
    }

    out.push('\n');
    out.push_str(STATS_HEADER);
    out.push('\n');
    for method in methods {
        let values: Vec<f64> = reports
            .iter()
            .map(|r| r.get(method).expect("method sets checked above"))
            .collect();
        let stats = summary_stats(&values)?;
        for (name, value) in stats.rows() {
            out.push_str(&format!("{},{},{:.4}\n", name, csv_field(method), value));
        }
    }
    Ok(out)
}

pub fn write_csv_report(reports: &[DscReport], path: impl AsRef<Path>) -> Result<()> {
    let text = format_csv_report(reports)?;
    write_atomically(path.as_ref(), text.as_bytes())
}

/// Extracts a numeric column from the per-subject block of a report (or any
/// headed CSV), optionally keeping only rows whose `method` column matches.
pub fn parse_report_column(text: &str, column: &str, method: Option<&str>) -> Result<Vec<f64>> {
    // The per-subject table ends at the first blank line.
    let table = text
        .split("\n\n")
        .next()
        .unwrap_or_default()
        .split("\r\n\r\n")
        .next()
        .unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(table.as_bytes());
    let csv_err = |e: csv::Error| Error::invalid("csv", e.to_string());
    let headers = reader.headers().map_err(csv_err)?.clone();
    let col = headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::invalid("csv", format!("no column named {column:?}")))?;
    let method_col = match method {
        Some(_) => Some(
            headers
                .iter()
                .position(|h| h == "method")
                .ok_or_else(|| Error::invalid("csv", "no \"method\" column to filter on"))?,
        ),
        None => None,
    };

    let mut values = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        if let (Some(mc), Some(m)) = (method_col, method) {
            if row.get(mc) != Some(m) {
                continue;
            }
        }
        let cell = row.get(col).unwrap_or_default();
        let v: f64 = cell.trim().parse().map_err(|_| {
            Error::invalid("csv", format!("row {}: {cell:?} is not a number", i + 2))
        })?;
        values.push(v);
    }
    Ok(values)
}

pub fn read_report_column(
    path: impl AsRef<Path>,
    column: &str,
    method: Option<&str>,
) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(e).in_file(path))?;
    parse_report_column(&text, column, method).map_err(|e| e.in_file(path))
}

/// Formats the six statistics as `name value` lines at four decimals.
pub fn format_stats(stats: &SummaryStats) -> String {
    stats
        .rows()
        .iter()
        .map(|(name, v)| format!("{name} {v:.4}\n"))
        .collect()
}
