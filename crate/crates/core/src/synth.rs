//! Synthetic gaze generation from scripted token sequences, and a
//! study-shaped synthetic corpus for exercising the full pipeline.

use std::io::{BufRead, Write};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{STUDY_METHODS, STUDY_METHODS_PER_PARTICIPANT, STUDY_PARTICIPANTS};
use crate::error::{Error, Result};
use crate::fixation::FilterConfig;
use crate::gaze::{GazeSample, GazeStream, ScreenGeometry};
use crate::predictors::find_method_name;
use crate::stimulus::{CodePane, MethodSource, StimulusLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub sampling_rate_hz: f64,
    pub dwell_ms_per_token: f64,
    pub saccade_ms: f64,
    pub noise_sd_norm: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sampling_rate_hz: 60.0,
            dwell_ms_per_token: 300.0,
            saccade_ms: 20.0,
            noise_sd_norm: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate_hz > 0.0) {
            return Err(Error::Parameter("sampling_rate_hz must be > 0".into()));
        }
        let min_dwell = FilterConfig::default().min_fixation_duration_ms;
        if !(self.dwell_ms_per_token >= min_dwell) {
            return Err(Error::Parameter(format!(
                "dwell_ms_per_token {} is below the {min_dwell} ms minimum fixation",
                self.dwell_ms_per_token
            )));
        }
        if self.dwell_ms_per_token < 1e3 / self.sampling_rate_hz {
            return Err(Error::Parameter(
                "dwell is shorter than one sample period".into(),
            ));
        }
        if !(self.saccade_ms >= 0.0) || !(self.noise_sd_norm >= 0.0) {
            return Err(Error::Parameter(
                "saccade_ms and noise_sd_norm must be >= 0".into(),
            ));
        }
        Ok(())
    }

    fn samples_for(&self, ms: f64) -> usize {
        (ms * self.sampling_rate_hz / 1e3).round() as usize
    }
}

fn token_center_norm(layout: &StimulusLayout, geom: &ScreenGeometry, index: usize) -> (f64, f64) {
    let (cx, cy) = layout.tokens[index].bbox.center();
    geom.px_to_norm(cx, cy)
}

/// Gaze for a participant reading `script` (token indices into `layout`):
/// a jittered dwell on each token's center, joined by linearly interpolated
/// saccade samples. Every saccade must be faster than the default I-VT
/// threshold, so scripted tokens that are too close together are rejected.
pub fn generate(
    participant_id: &str,
    layout: &StimulusLayout,
    script: &[usize],
    cfg: &SynthConfig,
    geom: &ScreenGeometry,
) -> Result<GazeStream> {
    cfg.validate()?;
    if let Some(bad) = script.iter().find(|&&i| i >= layout.tokens.len()) {
        return Err(Error::Parameter(format!(
            "script index {bad} out of range for `{}` ({} tokens)",
            layout.method_id,
            layout.tokens.len()
        )));
    }
    let period_us = 1e6 / cfg.sampling_rate_hz;
    let dwell = cfg.samples_for(cfg.dwell_ms_per_token).max(1);
    let saccade = cfg.samples_for(cfg.saccade_ms);
    let threshold = FilterConfig::default().velocity_threshold_deg_s;
    let centers: Vec<(f64, f64)> = script
        .iter()
        .map(|&i| token_center_norm(layout, geom, i))
        .collect();

    for (k, pair) in centers.windows(2).enumerate() {
        let hop_deg = geom.angle_deg_norm(pair[0], pair[1]) / (saccade + 1) as f64;
        let velocity = hop_deg / (period_us / 1e6);
        if velocity <= threshold {
            return Err(Error::Parameter(format!(
                "saccade {k} in `{}` ({} -> {}) peaks at {velocity:.1} deg/s, not above the {threshold} deg/s threshold",
                layout.method_id, layout.tokens[script[k]].lexeme, layout.tokens[script[k + 1]].lexeme
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise =
        Normal::new(0.0, cfg.noise_sd_norm).map_err(|e| Error::Parameter(format!("noise: {e}")))?;
    let mut samples = Vec::with_capacity(centers.len() * (dwell + saccade));
    let push = |x: f64, y: f64, samples: &mut Vec<GazeSample>| {
        let t = (samples.len() as f64 * period_us).round() as i64;
        samples.push(GazeSample::valid(t, x.clamp(0.0, 1.0), y.clamp(0.0, 1.0)));
    };
    for (k, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..dwell {
            let (dx, dy) = if cfg.noise_sd_norm > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            push(cx + dx, cy + dy, &mut samples);
        }
        if let Some(&(nx, ny)) = centers.get(k + 1) {
            for s in 1..=saccade {
                let f = s as f64 / (saccade + 1) as f64;
                push(cx + (nx - cx) * f, cy + (ny - cy) * f, &mut samples);
            }
        }
    }
    Ok(GazeStream {
        participant_id: participant_id.to_string(),
        method_id: layout.method_id.clone(),
        sampling_rate_hz: cfg.sampling_rate_hz,
        samples,
    })
}

/// A scripted trial: which tokens the synthetic participant reads, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedTrial {
    pub participant_id: String,
    pub method_id: String,
    pub script: Vec<usize>,
}

pub fn write_scripts_jsonl<W: Write>(mut writer: W, trials: &[ScriptedTrial]) -> Result<()> {
    for t in trials {
        serde_json::to_writer(&mut writer, t)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<scripts>", e))?;
    }
    Ok(())
}

pub fn read_scripts_jsonl<R: BufRead>(reader: R) -> Result<Vec<ScriptedTrial>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<scripts>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Minimum visual angle between consecutive scripted tokens. Keeps every
/// saccade above the default velocity threshold at 60 and 120 Hz with the
/// default 20 ms saccade, and keeps neighbours out of merge range.
pub const SCRIPT_MIN_SEPARATION_DEG: f64 = 1.5;

/// Random script of up to `len` non-punctuation tokens. Consecutive tokens
/// are at least `min_sep_deg` apart and never share a lexeme. When
/// `start_with_name` is set and the method has a detectable name, the
/// script opens on it.
pub fn random_script<R: Rng>(
    layout: &StimulusLayout,
    geom: &ScreenGeometry,
    len: usize,
    min_sep_deg: f64,
    start_with_name: bool,
    rng: &mut R,
) -> Vec<usize> {
    let substantive: Vec<usize> = (0..layout.tokens.len())
        .filter(|&i| !layout.tokens[i].is_punctuation())
        .collect();
    let mut script: Vec<usize> = Vec::with_capacity(len);
    let name = if start_with_name {
        find_method_name(layout)
    } else {
        None
    };
    while script.len() < len {
        let next = match (script.last(), name) {
            (None, Some(n)) => Some(n),
            (None, None) => substantive.choose(rng).copied(),
            (Some(&prev), _) => {
                let from = token_center_norm(layout, geom, prev);
                let options: Vec<usize> = substantive
                    .iter()
                    .copied()
                    .filter(|&i| {
                        layout.tokens[i].lexeme != layout.tokens[prev].lexeme
                            && geom.angle_deg_norm(from, token_center_norm(layout, geom, i))
                                >= min_sep_deg
                    })
                    .collect();
                options.choose(rng).copied()
            }
        };
        match next {
            Some(i) => script.push(i),
            None => break,
        }
    }
    script
}

/// Methods and scripted trials shaped like the original study: 27
/// participants, each reading 25 of 68 methods.
#[derive(Debug, Clone)]
pub struct SyntheticStudy {
    pub methods: Vec<MethodSource>,
    pub trials: Vec<ScriptedTrial>,
}

const VERBS: &[&str] = &[
    "get", "set", "update", "compute", "parse", "load", "save", "check", "build", "find", "remove",
    "apply", "handle", "create", "read", "write", "merge", "resolve", "validate", "render",
];
const NOUNS: &[&str] = &[
    "Buffer", "Node", "Config", "Entry", "Token", "Value", "Record", "Index", "Range", "Filter",
    "Stream", "Cache", "Header", "Item", "Session", "Path", "Count", "Table", "Event", "Result",
];
const LOCALS: &[&str] = &[
    "count", "total", "value", "result", "index", "buffer", "offset", "limit", "entry", "name",
    "size", "flag", "temp", "item", "node",
];
const TYPES: &[&str] = &["int", "long", "String", "boolean", "double"];

/// A plausible Java method with a distinctive name. Deterministic in `rng`.
pub fn synthetic_method<R: Rng>(rng: &mut R, ordinal: usize) -> String {
    let name = format!(
        "{}{}{}",
        VERBS.choose(rng).unwrap(),
        NOUNS.choose(rng).unwrap(),
        ordinal
    );
    let ret = *["void", "int", "String", "boolean"].choose(rng).unwrap();
    let param_ty = *TYPES.choose(rng).unwrap();
    let param = *LOCALS.choose(rng).unwrap();
    let mut body: Vec<String> = Vec::new();
    let statements = rng.random_range(3..=7);
    for s in 0..statements {
        let local = LOCALS.choose(rng).unwrap();
        let other = NOUNS.choose(rng).unwrap();
        let line = match rng.random_range(0..6) {
            0 => format!("    int {local}{s} = {param}.hashCode() + {};", rng.random_range(1..100)),
            1 => format!("    if ({local}{s}Ready()) {{\n      process{other}({param});\n    }}"),
            2 => format!("    for (int i = 0; i < {local}s.length; i++) {{\n      {local}s[i] = null;\n    }}"),
            3 => format!("    // refresh the {} before use", other.to_lowercase()),
            4 => format!("    log(\"{other} {local} updated\");"),
            _ => format!("    this.{local} = new {other}({param});"),
        };
        body.push(line);
    }
    let tail = match ret {
        "void" => String::new(),
        "int" => format!("\n    return {};", rng.random_range(0..10)),
        "String" => format!("\n    return {param}.toString();"),
        _ => "\n    return true;".to_string(),
    };
    format!(
        "public {ret} {name}({param_ty} {param}) {{\n{}{tail}\n}}",
        body.join("\n")
    )
}

/// Builds the study-shaped corpus: participant `i` reads methods
/// `(25 i + k) mod 68` for `k < 25`, so every method is seen by 9 or 10
/// participants. Scripts hold 3 to 8 tokens and open on the method name
/// about 60% of the time.
pub fn study_shaped(seed: u64, pane: CodePane, geom: &ScreenGeometry) -> Result<SyntheticStudy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let methods: Vec<MethodSource> = (0..STUDY_METHODS)
        .map(|k| MethodSource {
            method_id: format!("m{k:03}"),
            source: synthetic_method(&mut rng, k),
        })
        .collect();
    let layouts = methods
        .iter()
        .map(|m| StimulusLayout::build(&m.method_id, &m.source, pane))
        .collect::<Result<Vec<_>>>()?;
    let mut trials = Vec::with_capacity(STUDY_PARTICIPANTS * STUDY_METHODS_PER_PARTICIPANT);
    for p in 0..STUDY_PARTICIPANTS {
        for k in 0..STUDY_METHODS_PER_PARTICIPANT {
            let layout = &layouts[(p * STUDY_METHODS_PER_PARTICIPANT + k) % STUDY_METHODS];
            let len = rng.random_range(3..=8);
            let name_first = rng.random_bool(0.6);
            let script = random_script(
                layout,
                geom,
                len,
                SCRIPT_MIN_SEPARATION_DEG,
                name_first,
                &mut rng,
            );
            trials.push(ScriptedTrial {
                participant_id: format!("p{:02}", p + 1),
                method_id: layout.method_id.clone(),
                script,
            });
        }
    }
    trials
        .sort_by(|a, b| (&a.participant_id, &a.method_id).cmp(&(&b.participant_id, &b.method_id)));
    Ok(SyntheticStudy { methods, trials })
}
