//! Mapping fixations onto token AOIs and extracting word-level scanpaths.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixation::Fixation;
use crate::gaze::ScreenGeometry;
use crate::stimulus::{StimulusLayout, TokenKind};
use crate::warning::{Warning, WarningKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanpathConfig {
    /// How far (visual angle) a fixation may land from a token and still
    /// snap to it.
    pub tolerance_deg: f64,
    pub include_comments: bool,
}

impl Default for ScanpathConfig {
    fn default() -> Self {
        Self {
            tolerance_deg: 0.7,
            include_comments: true,
        }
    }
}

/// Ordered words one participant fixated while reading one method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scanpath {
    pub participant_id: String,
    pub method_id: String,
    pub words: Vec<String>,
}

impl Scanpath {
    pub fn key(&self) -> (&str, &str) {
        (&self.participant_id, &self.method_id)
    }
}

/// Index of the token a fixation lands on, with comments eligible.
pub fn map_fixation(
    fix: &Fixation,
    layout: &StimulusLayout,
    geom: &ScreenGeometry,
    tolerance_deg: f64,
) -> Option<usize> {
    map_fixation_with(
        fix,
        layout,
        geom,
        &ScanpathConfig {
            tolerance_deg,
            include_comments: true,
        },
    )
}

/// A fixation inside a non-punctuation AOI maps to it. Otherwise it snaps to
/// the nearest non-punctuation AOI within tolerance, measured from the
/// fixation to the AOI's box. A fixation on punctuation with nothing
/// substantive nearby keeps the punctuation token.
pub fn map_fixation_with(
    fix: &Fixation,
    layout: &StimulusLayout,
    geom: &ScreenGeometry,
    cfg: &ScanpathConfig,
) -> Option<usize> {
    let (px, py) = geom.norm_to_px(fix.centroid_x, fix.centroid_y);
    let eligible = |kind: TokenKind| cfg.include_comments || kind != TokenKind::Comment;

    let containing = layout
        .tokens
        .iter()
        .position(|t| eligible(t.kind) && t.bbox.contains(px, py));
    if let Some(i) = containing {
        if !layout.tokens[i].is_punctuation() {
            return Some(i);
        }
    }

    let nearest = layout
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| eligible(t.kind) && !t.is_punctuation())
        .map(|(i, t)| {
            let (dx, dy) = t.bbox.offset_from(px, py);
            let (cx, cy) = t.bbox.center();
            (geom.angle_deg_px(dx, dy), (cx - px).hypot(cy - py), i)
        })
        .min_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
    match nearest {
        Some((deg, _, i)) if deg <= cfg.tolerance_deg => Some(i),
        _ => containing,
    }
}

/// Maps every fixation, drops the unmapped ones and collapses consecutive
/// repeats of the same word. The result is the full-length scanpath.
pub fn extract_scanpath(
    participant_id: &str,
    fixations: &[Fixation],
    layout: &StimulusLayout,
    geom: &ScreenGeometry,
    cfg: &ScanpathConfig,
) -> (Scanpath, Vec<Warning>) {
    let mut words: Vec<String> = Vec::new();
    for fix in fixations {
        let Some(i) = map_fixation_with(fix, layout, geom, cfg) else {
            continue;
        };
        let lexeme = &layout.tokens[i].lexeme;
        if words.last() != Some(lexeme) {
            words.push(lexeme.clone());
        }
    }
    let mut warnings = Vec::new();
    if words.is_empty() {
        warnings.push(Warning::new(
            WarningKind::EmptyScanpath,
            format!(
                "trial ({participant_id}, {}): none of {} fixations mapped to a token",
                layout.method_id,
                fixations.len()
            ),
        ));
    }
    let scanpath = Scanpath {
        participant_id: participant_id.to_string(),
        method_id: layout.method_id.clone(),
        words,
    };
    (scanpath, warnings)
}

/// The first `min(n, len)` words; never pads.
pub fn first_n(scanpath: &Scanpath, n: usize) -> Result<&[String]> {
    truncate_words(&scanpath.words, n)
}

pub fn truncate_words(words: &[String], n: usize) -> Result<&[String]> {
    if n == 0 {
        return Err(Error::Parameter("n must be >= 1".into()));
    }
    Ok(&words[..n.min(words.len())])
}

pub fn write_scanpaths_jsonl<W: Write>(mut writer: W, scanpaths: &[Scanpath]) -> Result<()> {
    for s in scanpaths {
        serde_json::to_writer(&mut writer, s)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<scanpath output>", e))?;
    }
    Ok(())
}

pub fn read_scanpaths_jsonl<R: BufRead>(reader: R) -> Result<Vec<Scanpath>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<scanpath input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn load_scanpaths(path: &Path) -> Result<Vec<Scanpath>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_scanpaths_jsonl(BufReader::new(file))
}
