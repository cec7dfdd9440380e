//! Fixation detection: moving-median denoising, velocity-threshold (I-VT)
//! classification and merging of adjacent fixations.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::{GazeSample, GazeStream, ScreenGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub smoothing_window_samples: usize,
    pub velocity_threshold_deg_s: f64,
    pub min_fixation_duration_ms: f64,
    pub merge_max_gap_ms: f64,
    pub merge_max_dist_deg: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            smoothing_window_samples: 3,
            velocity_threshold_deg_s: 30.0,
            min_fixation_duration_ms: 100.0,
            merge_max_gap_ms: 75.0,
            merge_max_dist_deg: 0.7,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.smoothing_window_samples;
        if w == 0 || w.is_multiple_of(2) {
            return Err(Error::Parameter(format!(
                "smoothing_window_samples must be odd and >= 1, got {w}"
            )));
        }
        if !(self.velocity_threshold_deg_s > 0.0) {
            return Err(Error::Parameter(
                "velocity_threshold_deg_s must be > 0".into(),
            ));
        }
        if !(self.min_fixation_duration_ms > 0.0) {
            return Err(Error::Parameter(
                "min_fixation_duration_ms must be > 0".into(),
            ));
        }
        if !(self.merge_max_gap_ms >= 0.0) || !(self.merge_max_dist_deg >= 0.0) {
            return Err(Error::Parameter("merge thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixation {
    pub t_start_us: i64,
    /// End of the last member sample's interval: the timestamp of the sample
    /// that follows the run, or one nominal period past the last member.
    pub t_end_us: i64,
    pub centroid_x: f64,
    pub centroid_y: f64,
    pub sample_count: usize,
}

impl Fixation {
    pub fn duration_us(&self) -> i64 {
        self.t_end_us - self.t_start_us
    }

    pub fn centroid(&self) -> (f64, f64) {
        (self.centroid_x, self.centroid_y)
    }
}

/// Centered moving median over valid samples. Invalid samples stay invalid
/// and never contribute to a neighbour's median; windows shrink at the edges.
pub fn low_pass(stream: &GazeStream, window: usize) -> Result<GazeStream> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "smoothing window must be odd and >= 1, got {window}"
        )));
    }
    if window > stream.samples.len() {
        return Err(Error::Parameter(format!(
            "smoothing window {window} exceeds stream length {}",
            stream.samples.len()
        )));
    }
    let half = window / 2;
    let src = &stream.samples;
    let mut xs = Vec::with_capacity(window);
    let mut ys = Vec::with_capacity(window);
    let samples = src
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if !s.valid || window == 1 {
                return *s;
            }
            xs.clear();
            ys.clear();
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(src.len() - 1);
            for n in src[lo..=hi].iter().filter(|n| n.valid) {
                xs.push(n.x);
                ys.push(n.y);
            }
            GazeSample::valid(s.t_us, median(&mut xs), median(&mut ys))
        })
        .collect();
    Ok(GazeStream {
        samples,
        ..stream.clone()
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

/// Angular velocity in deg/s between each consecutive pair of samples.
/// Entry `i` covers samples `i` and `i + 1`; it is `None` when either sample
/// is invalid. Streams with fewer than two valid samples yield no entries.
pub fn angular_velocity(stream: &GazeStream, geom: &ScreenGeometry) -> Vec<Option<f64>> {
    if stream.valid_count() < 2 {
        return Vec::new();
    }
    stream
        .samples
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].position()?, w[1].position()?);
            let dt_s = (w[1].t_us - w[0].t_us) as f64 / 1e6;
            Some(geom.angle_deg_norm(a, b) / dt_s)
        })
        .collect()
}

/// Velocity-threshold classification. Maximal runs of valid samples whose
/// consecutive velocities are all below the threshold become fixations;
/// runs shorter than the minimum duration are dropped.
pub fn ivt_classify(
    stream: &GazeStream,
    cfg: &FilterConfig,
    geom: &ScreenGeometry,
) -> Vec<Fixation> {
    let samples = &stream.samples;
    let velocity = angular_velocity(stream, geom);
    let period = stream.nominal_period_us().round() as i64;
    let min_duration_us = cfg.min_fixation_duration_ms * 1e3;

    let mut fixations = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, sample) in samples.iter().enumerate() {
        if !sample.valid {
            run_start = None;
            continue;
        }
        let start = *run_start.get_or_insert(i);
        let continues =
            matches!(velocity.get(i), Some(Some(v)) if *v < cfg.velocity_threshold_deg_s);
        if continues {
            continue;
        }
        run_start = None;
        let members = &samples[start..=i];
        let t_end_us = samples
            .get(i + 1)
            .map_or(sample.t_us + period, |next| next.t_us);
        let fixation = Fixation {
            t_start_us: members[0].t_us,
            t_end_us,
            centroid_x: members.iter().map(|s| s.x).sum::<f64>() / members.len() as f64,
            centroid_y: members.iter().map(|s| s.y).sum::<f64>() / members.len() as f64,
            sample_count: members.len(),
        };
        if fixation.duration_us() as f64 >= min_duration_us {
            fixations.push(fixation);
        }
    }
    fixations
}

/// Merges consecutive fixations that are close in both time and space,
/// repeating left-to-right passes until nothing changes.
pub fn merge_fixations(
    fixations: &[Fixation],
    cfg: &FilterConfig,
    geom: &ScreenGeometry,
) -> Result<Vec<Fixation>> {
    if let Some(w) = fixations
        .windows(2)
        .find(|w| w[1].t_start_us < w[0].t_start_us)
    {
        return Err(Error::Parameter(format!(
            "fixations not ordered by start time: {} after {}",
            w[1].t_start_us, w[0].t_start_us
        )));
    }
    let max_gap_us = cfg.merge_max_gap_ms * 1e3;
    let mut current = fixations.to_vec();
    loop {
        let mut merged: Vec<Fixation> = Vec::with_capacity(current.len());
        for f in &current {
            match merged.last_mut() {
                Some(last)
                    if ((f.t_start_us - last.t_end_us) as f64) <= max_gap_us
                        && geom.angle_deg_norm(last.centroid(), f.centroid())
                            <= cfg.merge_max_dist_deg =>
                {
                    *last = combine(last, f);
                }
                _ => merged.push(*f),
            }
        }
        if merged.len() == current.len() {
            return Ok(merged);
        }
        current = merged;
    }
}

fn combine(a: &Fixation, b: &Fixation) -> Fixation {
    let wa = a.duration_us() as f64;
    let wb = b.duration_us() as f64;
    let total = wa + wb;
    Fixation {
        t_start_us: a.t_start_us.min(b.t_start_us),
        t_end_us: a.t_end_us.max(b.t_end_us),
        centroid_x: (a.centroid_x * wa + b.centroid_x * wb) / total,
        centroid_y: (a.centroid_y * wa + b.centroid_y * wb) / total,
        sample_count: a.sample_count + b.sample_count,
    }
}

/// Full per-trial chain: denoise, classify, merge. The smoothing window is
/// narrowed to the largest odd size that fits very short streams.
pub fn detect_fixations(
    stream: &GazeStream,
    cfg: &FilterConfig,
    geom: &ScreenGeometry,
) -> Result<Vec<Fixation>> {
    cfg.validate()?;
    if stream.samples.is_empty() {
        return Ok(Vec::new());
    }
    let mut window = cfg.smoothing_window_samples.min(stream.samples.len());
    if window.is_multiple_of(2) {
        window -= 1;
    }
    let smoothed = low_pass(stream, window)?;
    let candidates = ivt_classify(&smoothed, cfg, geom);
    merge_fixations(&candidates, cfg, geom)
}

/// Fixations of one trial, as carried through the fixation JSONL.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFixations {
    pub participant_id: String,
    pub method_id: String,
    pub fixations: Vec<Fixation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixationRecord {
    participant_id: String,
    method_id: String,
    t_start_us: i64,
    t_end_us: i64,
    x: f64,
    y: f64,
    sample_count: usize,
}

pub fn write_fixations_jsonl<W: Write>(mut writer: W, trials: &[TrialFixations]) -> Result<()> {
    for trial in trials {
        for f in &trial.fixations {
            let record = FixationRecord {
                participant_id: trial.participant_id.clone(),
                method_id: trial.method_id.clone(),
                t_start_us: f.t_start_us,
                t_end_us: f.t_end_us,
                x: f.centroid_x,
                y: f.centroid_y,
                sample_count: f.sample_count,
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer
                .write_all(b"\n")
                .map_err(|e| Error::io("<fixation output>", e))?;
        }
    }
    Ok(())
}

/// Reads fixation JSONL, grouping consecutive lines of the same trial.
/// Trials come back in file order.
pub fn read_fixations_jsonl<R: BufRead>(reader: R) -> Result<Vec<TrialFixations>> {
    let mut trials: Vec<TrialFixations> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<fixation input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: FixationRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        let fixation = Fixation {
            t_start_us: r.t_start_us,
            t_end_us: r.t_end_us,
            centroid_x: r.x,
            centroid_y: r.y,
            sample_count: r.sample_count,
        };
        match trials.last_mut() {
            Some(t) if t.participant_id == r.participant_id && t.method_id == r.method_id => {
                t.fixations.push(fixation)
            }
            _ => trials.push(TrialFixations {
                participant_id: r.participant_id,
                method_id: r.method_id,
                fixations: vec![fixation],
            }),
        }
    }
    Ok(trials)
}

pub fn load_fixations(path: &Path) -> Result<Vec<TrialFixations>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_fixations_jsonl(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream_from(rate: f64, points: &[(f64, f64)]) -> GazeStream {
        let period = 1e6 / rate;
        GazeStream {
            participant_id: "p".into(),
            method_id: "m".into(),
            sampling_rate_hz: rate,
            samples: points
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| GazeSample::valid((i as f64 * period).round() as i64, x, y))
                .collect(),
        }
    }

    fn fixation(t0_ms: i64, t1_ms: i64, x: f64, y: f64) -> Fixation {
        Fixation {
            t_start_us: t0_ms * 1000,
            t_end_us: t1_ms * 1000,
            centroid_x: x,
            centroid_y: y,
            sample_count: 1,
        }
    }

    #[test]
    fn window_one_is_identity() {
        let s = stream_from(60.0, &[(0.1, 0.2), (0.4, 0.9), (0.3, 0.3)]);
        assert_eq!(low_pass(&s, 1).unwrap(), s);
    }

    #[test]
    fn constant_stream_unchanged_by_median() {
        let s = stream_from(60.0, &[(0.3, 0.6); 10]);
        assert_eq!(low_pass(&s, 5).unwrap(), s);
    }

    #[test]
    fn single_sample_spike_removed() {
        let mut pts = vec![(0.4, 0.5); 7];
        pts[3].0 += 0.2;
        let out = low_pass(&stream_from(60.0, &pts), 3).unwrap();
        assert_eq!(out.samples[3].x, 0.4);
        assert_eq!(out.samples[2].x, 0.4);
        assert_eq!(out.samples[4].x, 0.4);
    }

    #[test]
    fn invalid_samples_are_excluded_from_the_window() {
        let mut s = stream_from(60.0, &[(0.1, 0.1), (0.2, 0.2), (0.9, 0.9), (0.2, 0.2)]);
        s.samples[1] = GazeSample::invalid(s.samples[1].t_us);
        let out = low_pass(&s, 3).unwrap();
        assert!(!out.samples[1].valid);
        // neighbours of index 2 are {invalid, 0.2}: median of {0.9, 0.2}
        assert!((out.samples[2].x - 0.55).abs() < 1e-12);
        assert_eq!(out.samples[0].x, 0.1);
    }

    #[test]
    fn even_or_zero_window_rejected() {
        let s = stream_from(60.0, &[(0.1, 0.1); 5]);
        assert!(low_pass(&s, 0).is_err());
        assert!(low_pass(&s, 4).is_err());
        assert!(low_pass(&s, 7).is_err());
    }

    #[test]
    fn identical_positions_have_zero_velocity() {
        let v = angular_velocity(
            &stream_from(60.0, &[(0.5, 0.5), (0.5, 0.5)]),
            &ScreenGeometry::default(),
        );
        assert_eq!(v, vec![Some(0.0)]);
    }

    #[test]
    fn ten_mm_step_velocity() {
        // 10 mm at 650 mm over 16.67 ms: 2*atan(5/650) = 0.88141 deg -> 52.88 deg/s
        let geom = ScreenGeometry::default();
        let dx = 10.0 / geom.width_mm;
        let s = GazeStream {
            participant_id: "p".into(),
            method_id: "m".into(),
            sampling_rate_hz: 60.0,
            samples: vec![
                GazeSample::valid(0, 0.5, 0.5),
                GazeSample::valid(16_670, 0.5 + dx, 0.5),
            ],
        };
        let v = angular_velocity(&s, &geom)[0].unwrap();
        let expected = 2.0 * (5.0f64 / 650.0).atan().to_degrees() / 0.01667;
        assert!((v - expected).abs() < 1e-9);
        assert!((v - 52.875).abs() < 0.01, "{v}");
    }

    #[test]
    fn pair_straddling_invalid_is_undefined() {
        let mut s = stream_from(60.0, &[(0.5, 0.5); 3]);
        s.samples[1] = GazeSample::invalid(s.samples[1].t_us);
        assert_eq!(
            angular_velocity(&s, &ScreenGeometry::default()),
            vec![None, None]
        );
    }

    #[test]
    fn fewer_than_two_valid_samples_gives_no_velocity() {
        let mut s = stream_from(60.0, &[(0.5, 0.5); 3]);
        s.samples[0] = GazeSample::invalid(0);
        s.samples[2] = GazeSample::invalid(s.samples[2].t_us);
        assert!(angular_velocity(&s, &ScreenGeometry::default()).is_empty());
    }

    #[test]
    fn constant_gaze_is_one_fixation() {
        let s = stream_from(60.0, &vec![(0.3, 0.4); 120]);
        let f = ivt_classify(&s, &FilterConfig::default(), &ScreenGeometry::default());
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].sample_count, 120);
        assert!((f[0].duration_us() - 2_000_000).abs() <= 20);
    }

    #[test]
    fn alternating_jumps_give_no_fixations() {
        let pts: Vec<_> = (0..120)
            .map(|i| if i % 2 == 0 { (0.1, 0.1) } else { (0.9, 0.9) })
            .collect();
        let f = ivt_classify(
            &stream_from(60.0, &pts),
            &FilterConfig::default(),
            &ScreenGeometry::default(),
        );
        assert!(f.is_empty());
    }

    #[test]
    fn invalid_gap_splits_runs() {
        let mut s = stream_from(60.0, &vec![(0.3, 0.4); 40]);
        s.samples[20] = GazeSample::invalid(s.samples[20].t_us);
        let f = ivt_classify(&s, &FilterConfig::default(), &ScreenGeometry::default());
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].sample_count, 20);
        assert_eq!(f[1].sample_count, 19);
        assert!(f[0].t_end_us <= f[1].t_start_us);
    }

    #[test]
    fn close_fixations_merge() {
        // 40 ms apart, 0.2 deg apart; thresholds 75 ms / 0.7 deg
        let geom = ScreenGeometry::default();
        let step = {
            // normalized x displacement subtending 0.2 deg
            let mm = 2.0 * geom.viewer_distance_mm * (0.1f64).to_radians().tan();
            mm / geom.width_mm
        };
        let a = fixation(0, 200, 0.5, 0.5);
        let b = fixation(240, 440, 0.5 + step, 0.5);
        let merged = merge_fixations(&[a, b], &FilterConfig::default(), &geom).unwrap();
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].t_start_us, 0);
        assert_eq!(merged[0].t_end_us, 440_000);
        assert!((merged[0].centroid_x - (0.5 + step / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn distant_in_time_fixations_stay_apart() {
        let a = fixation(0, 200, 0.5, 0.5);
        let b = fixation(700, 900, 0.5, 0.5);
        let out = merge_fixations(
            &[a, b],
            &FilterConfig::default(),
            &ScreenGeometry::default(),
        )
        .unwrap();
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn merge_of_empty_is_empty() {
        assert!(
            merge_fixations(&[], &FilterConfig::default(), &ScreenGeometry::default())
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn unordered_merge_input_rejected() {
        let a = fixation(0, 200, 0.5, 0.5);
        let b = fixation(300, 500, 0.5, 0.5);
        assert!(merge_fixations(
            &[b, a],
            &FilterConfig::default(),
            &ScreenGeometry::default()
        )
        .is_err());
    }

    #[test]
    fn fixation_jsonl_round_trip() {
        let trials = vec![
            TrialFixations {
                participant_id: "p1".into(),
                method_id: "m1".into(),
                fixations: vec![fixation(0, 200, 0.25, 0.5), fixation(300, 500, 0.75, 0.5)],
            },
            TrialFixations {
                participant_id: "p1".into(),
                method_id: "m2".into(),
                fixations: vec![fixation(0, 150, 0.1, 0.9)],
            },
        ];
        let mut buf = Vec::new();
        write_fixations_jsonl(&mut buf, &trials).unwrap();
        assert_eq!(read_fixations_jsonl(buf.as_slice()).unwrap(), trials);
    }
}
