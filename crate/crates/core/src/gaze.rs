//! Gaze JSONL ingest: screen geometry, raw samples and per-trial streams.
//!
//! A gaze file starts with a header line carrying the sampling rate and the
//! screen geometry, followed by one sample record per line:
//!
//! ```text
//! {"header": {"sampling_rate_hz": 60.0, "screen": {"width_px": 1920, ...}}}
//! {"participant_id": "p01", "method_id": "m01", "t_us": 0, "x": 0.5, "y": 0.5, "valid": true}
//! ```
//!
//! Coordinates are normalized display coordinates in `[0, 1]`, origin at the
//! top-left corner. Invalid samples may carry `null` coordinates.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warning::{Warning, WarningKind};

/// Physical description of the display the stimulus was shown on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenGeometry {
    pub width_px: u32,
    pub height_px: u32,
    pub width_mm: f64,
    pub height_mm: f64,
    pub viewer_distance_mm: f64,
}

impl Default for ScreenGeometry {
    /// 24 inch 16:9 panel at 1920x1080, viewed from 65 cm.
    fn default() -> Self {
        Self {
            width_px: 1920,
            height_px: 1080,
            width_mm: 531.3,
            height_mm: 298.9,
            viewer_distance_mm: 650.0,
        }
    }
}

impl ScreenGeometry {
    /// Errors if any dimension is non-positive; warns if the pixel and
    /// millimetre aspect ratios disagree by more than 5%.
    pub fn validate(&self) -> Result<Vec<Warning>> {
        let positive = self.width_px > 0
            && self.height_px > 0
            && self.width_mm > 0.0
            && self.height_mm > 0.0
            && self.viewer_distance_mm > 0.0;
        if !positive || !self.width_mm.is_finite() || !self.height_mm.is_finite() {
            return Err(Error::Validation(format!(
                "screen geometry must be strictly positive: {self:?}"
            )));
        }
        let px_aspect = f64::from(self.width_px) / f64::from(self.height_px);
        let mm_aspect = self.width_mm / self.height_mm;
        let mut warnings = Vec::new();
        if (px_aspect / mm_aspect - 1.0).abs() > 0.05 {
            warnings.push(Warning::new(
                WarningKind::AspectMismatch,
                format!("pixel aspect {px_aspect:.3} vs physical aspect {mm_aspect:.3}"),
            ));
        }
        Ok(warnings)
    }

    pub fn mm_per_px_x(&self) -> f64 {
        self.width_mm / f64::from(self.width_px)
    }

    pub fn mm_per_px_y(&self) -> f64 {
        self.height_mm / f64::from(self.height_px)
    }

    pub fn norm_to_px(&self, x: f64, y: f64) -> (f64, f64) {
        (x * f64::from(self.width_px), y * f64::from(self.height_px))
    }

    pub fn px_to_norm(&self, x: f64, y: f64) -> (f64, f64) {
        (x / f64::from(self.width_px), y / f64::from(self.height_px))
    }

    /// Visual angle in degrees subtended by a planar displacement of
    /// `(dx_mm, dy_mm)` on the screen, symmetric about the line of sight.
    pub fn angle_deg_mm(&self, dx_mm: f64, dy_mm: f64) -> f64 {
        let d = dx_mm.hypot(dy_mm);
        (2.0 * (d / (2.0 * self.viewer_distance_mm)).atan()).to_degrees()
    }

    pub fn angle_deg_px(&self, dx_px: f64, dy_px: f64) -> f64 {
        self.angle_deg_mm(dx_px * self.mm_per_px_x(), dy_px * self.mm_per_px_y())
    }

    /// Visual angle between two points in normalized display coordinates.
    pub fn angle_deg_norm(&self, a: (f64, f64), b: (f64, f64)) -> f64 {
        self.angle_deg_mm((b.0 - a.0) * self.width_mm, (b.1 - a.1) * self.height_mm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t_us: i64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

impl GazeSample {
    pub fn valid(t_us: i64, x: f64, y: f64) -> Self {
        Self {
            t_us,
            x,
            y,
            valid: true,
        }
    }

    pub fn invalid(t_us: i64) -> Self {
        Self {
            t_us,
            x: f64::NAN,
            y: f64::NAN,
            valid: false,
        }
    }

    pub fn position(&self) -> Option<(f64, f64)> {
        self.valid.then_some((self.x, self.y))
    }
}

/// All samples of one (participant, method) trial.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeStream {
    pub participant_id: String,
    pub method_id: String,
    pub sampling_rate_hz: f64,
    pub samples: Vec<GazeSample>,
}

impl GazeStream {
    pub fn key(&self) -> (&str, &str) {
        (&self.participant_id, &self.method_id)
    }

    pub fn nominal_period_us(&self) -> f64 {
        1e6 / self.sampling_rate_hz
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.samples.windows(2).all(|w| w[0].t_us < w[1].t_us)
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.valid).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeHeader {
    pub sampling_rate_hz: f64,
    pub screen: ScreenGeometry,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: GazeHeader,
}

/// Wire form of a single gaze sample. Shared by ingest and the synthetic
/// generator so both sides speak one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GazeRecord {
    pub participant_id: String,
    pub method_id: String,
    pub t_us: i64,
    #[serde(default)]
    pub x: Option<f64>,
    #[serde(default)]
    pub y: Option<f64>,
    pub valid: bool,
}

impl GazeRecord {
    fn from_sample(stream: &GazeStream, s: &GazeSample) -> Self {
        let coord = |v: f64| v.is_finite().then_some(v);
        Self {
            participant_id: stream.participant_id.clone(),
            method_id: stream.method_id.clone(),
            t_us: s.t_us,
            x: coord(s.x),
            y: coord(s.y),
            valid: s.valid,
        }
    }

    fn to_sample(&self, line: usize) -> Result<GazeSample> {
        let x = self.x.unwrap_or(f64::NAN);
        let y = self.y.unwrap_or(f64::NAN);
        if self.valid {
            let in_range = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
            if !in_range(x) || !in_range(y) {
                return Err(Error::Validation(format!(
                    "line {line}: valid sample for trial ({}, {}) has coordinates ({x}, {y}) outside [0, 1]",
                    self.participant_id, self.method_id
                )));
            }
        }
        Ok(GazeSample {
            t_us: self.t_us,
            x,
            y,
            valid: self.valid,
        })
    }
}

/// Contents of one gaze file. `header` is `None` only for an empty file.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeFile {
    pub header: Option<GazeHeader>,
    pub streams: Vec<GazeStream>,
}

pub fn load_gaze_file(path: &Path) -> Result<GazeFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_gaze_jsonl(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Loads every trial in a gaze file, grouped by (participant, method) and
/// ordered by that key.
pub fn load_gaze_streams(path: &Path) -> Result<Vec<GazeStream>> {
    load_gaze_file(path).map(|f| f.streams)
}

pub fn read_gaze_jsonl<R: BufRead>(reader: R) -> Result<GazeFile> {
    let mut header: Option<GazeHeader> = None;
    let mut trials: BTreeMap<(String, String), Vec<GazeSample>> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io("<gaze input>", e))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if header.is_none() {
            let parsed: HeaderLine = serde_json::from_str(text)
                .map_err(|e| Error::parse(lineno, format!("expected header line: {e}")))?;
            if !(parsed.header.sampling_rate_hz > 0.0) {
                return Err(Error::Validation(format!(
                    "line {lineno}: sampling_rate_hz must be positive"
                )));
            }
            parsed.header.screen.validate()?;
            header = Some(parsed.header);
            continue;
        }
        let record: GazeRecord =
            serde_json::from_str(text).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let sample = record.to_sample(lineno)?;
        let samples = trials
            .entry((record.participant_id.clone(), record.method_id.clone()))
            .or_default();
        if let Some(last) = samples.last() {
            if sample.t_us <= last.t_us {
                return Err(Error::Validation(format!(
                    "line {lineno}: timestamps not strictly increasing in trial ({}, {}): {} after {}",
                    record.participant_id, record.method_id, sample.t_us, last.t_us
                )));
            }
        }
        samples.push(sample);
    }

    let rate = header.map(|h| h.sampling_rate_hz).unwrap_or(0.0);
    let streams = trials
        .into_iter()
        .map(|((participant_id, method_id), samples)| GazeStream {
            participant_id,
            method_id,
            sampling_rate_hz: rate,
            samples,
        })
        .collect();
    Ok(GazeFile { header, streams })
}

/// Writes the header line followed by every sample, stream by stream.
pub fn write_gaze_jsonl<W: Write>(
    mut writer: W,
    header: &GazeHeader,
    streams: &[GazeStream],
) -> Result<()> {
    let io = |e| Error::io("<gaze output>", e);
    serde_json::to_writer(&mut writer, &HeaderLine { header: *header })?;
    writer.write_all(b"\n").map_err(io)?;
    for stream in streams {
        for sample in &stream.samples {
            serde_json::to_writer(&mut writer, &GazeRecord::from_sample(stream, sample))?;
            writer.write_all(b"\n").map_err(io)?;
        }
    }
    writer.flush().map_err(io)
}

pub fn save_gaze_file(path: &Path, header: &GazeHeader, streams: &[GazeStream]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_gaze_jsonl(BufWriter::new(file), header, streams).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Non-fatal quality checks on one stream: declared vs observed rate,
/// mostly-invalid data, and trials shorter than one second.
pub fn validate_stream(stream: &GazeStream) -> Vec<Warning> {
    let mut warnings = Vec::new();
    let trial = format!("trial ({}, {})", stream.participant_id, stream.method_id);

    if !(stream.sampling_rate_hz > 0.0) {
        warnings.push(Warning::new(
            WarningKind::RateMismatch,
            format!(
                "{trial}: declared sampling rate {} is not positive",
                stream.sampling_rate_hz
            ),
        ));
    } else if let Some(gap) = median_gap_us(&stream.samples) {
        let expected = stream.nominal_period_us();
        if ((gap - expected) / expected).abs() > 0.2 {
            warnings.push(Warning::new(
                WarningKind::RateMismatch,
                format!(
                    "{trial}: declared {} Hz but median gap {gap:.0} us implies {:.1} Hz",
                    stream.sampling_rate_hz,
                    1e6 / gap
                ),
            ));
        }
    }

    let n = stream.samples.len();
    if n > 0 {
        let invalid = n - stream.valid_count();
        if invalid * 2 > n {
            warnings.push(Warning::new(
                WarningKind::MostlyInvalid,
                format!("{trial}: {invalid} of {n} samples invalid"),
            ));
        }
    }

    let span_us = match (stream.samples.first(), stream.samples.last()) {
        (Some(a), Some(b)) if stream.sampling_rate_hz > 0.0 => {
            (b.t_us - a.t_us) as f64 + stream.nominal_period_us()
        }
        (Some(a), Some(b)) => (b.t_us - a.t_us) as f64,
        _ => 0.0,
    };
    if span_us < 1e6 {
        warnings.push(Warning::new(
            WarningKind::ShortTrial,
            format!("{trial}: duration {:.0} ms below 1 s", span_us / 1e3),
        ));
    }
    warnings
}

fn median_gap_us(samples: &[GazeSample]) -> Option<f64> {
    let mut gaps: Vec<i64> = samples.windows(2).map(|w| w[1].t_us - w[0].t_us).collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_unstable();
    let mid = gaps.len() / 2;
    Some(if gaps.len() % 2 == 1 {
        gaps[mid] as f64
    } else {
        (gaps[mid - 1] + gaps[mid]) as f64 / 2.0
    })
}
