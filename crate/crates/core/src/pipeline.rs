//! The subcommands behind the `scanpath` binary. Each reads its inputs from
//! the experiment config, fans per-trial or per-split work out over a
//! bounded pool, and writes results in a fixed order so reruns produce
//! identical bytes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::dataset::{
    make_splits, materialize_split, write_predictions_jsonl, write_prompt_file, Corpus, PromptMode,
    SplitKind, SplitManifest, SplitSpec,
};
use crate::error::{Error, Result};
use crate::fixation::{detect_fixations, load_fixations, write_fixations_jsonl, TrialFixations};
use crate::gaze::{load_gaze_file, validate_stream, write_gaze_jsonl, GazeHeader};
use crate::metrics::{
    aggregate, histogram, score, write_aggregate_csv, write_histogram_csv, write_report_csv,
    write_scores_csv, ScorePair, ScoreRecord,
};
use crate::predictors::{
    load_completions, load_external_predictions, markov_predict, markov_train, name_first_predict,
    reading_order_predict, Decoding, PredictionRecord,
};
use crate::scanpath::{extract_scanpath, load_scanpaths, write_scanpaths_jsonl, Scanpath};
use crate::stimulus::{load_methods, write_layout_dump, write_methods_jsonl, StimulusLayout};
use crate::synth::{
    generate, read_scripts_jsonl, study_shaped, write_scripts_jsonl, ScriptedTrial,
};
use crate::warning::{Warning, WarningKind};

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker threads; 0 lets rayon pick.
    pub jobs: usize,
    /// Overrides the configured seed where a subcommand uses one.
    pub seed: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            seed: None,
        }
    }
}

/// What a subcommand did: files written and non-fatal findings.
#[derive(Debug, Default)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<Warning>,
}

impl Outcome {
    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Parameter(format!("worker pool: {e}")))
}

fn remove_dir(dir: &Path) -> Result<()> {
    match fs::remove_dir_all(dir) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn in_trial(participant_id: &str, method_id: &str, e: Error) -> Error {
    Error::Validation(format!("trial ({participant_id}, {method_id}): {e}"))
}

/// File-system safe form of an id, for per-split directories.
pub fn sanitize_id(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() || s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

fn count_by_kind(warnings: &[Warning]) -> BTreeMap<&'static str, usize> {
    let mut counts = BTreeMap::new();
    for w in warnings {
        *counts.entry(w.kind.as_str()).or_insert(0) += 1;
    }
    counts
}

fn load_layouts(
    cfg: &ExperimentConfig,
    workers: &rayon::ThreadPool,
) -> Result<BTreeMap<String, StimulusLayout>> {
    let methods = load_methods(&cfg.paths.corpus)?;
    let built: Vec<StimulusLayout> = workers.install(|| {
        methods
            .par_iter()
            .map(|m| {
                StimulusLayout::build(&m.method_id, &m.source, cfg.pane)
                    .map_err(|e| Error::Validation(format!("method `{}`: {e}", m.method_id)))
            })
            .collect::<Result<_>>()
    })?;
    let mut layouts = BTreeMap::new();
    for l in built {
        let id = l.method_id.clone();
        if layouts.insert(id.clone(), l).is_some() {
            return Err(Error::Validation(format!(
                "method `{id}` appears twice in the corpus"
            )));
        }
    }
    Ok(layouts)
}

/// Method corpus plus the extracted scanpaths.
pub fn load_corpus(
    cfg: &ExperimentConfig,
    workers: &rayon::ThreadPool,
) -> Result<(Corpus, Vec<Warning>)> {
    let layouts = load_layouts(cfg, workers)?;
    let scanpaths = load_scanpaths(&cfg.scanpaths_path())?;
    Corpus::new(layouts, scanpaths)
}

/// Where generated trials come from.
#[derive(Debug, Clone)]
pub enum SynthSource {
    /// Generate methods and scripts shaped like the original study.
    Study,
    /// Scripted trials over the configured method corpus.
    Scripts(PathBuf),
}

pub fn cmd_synth(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    source: &SynthSource,
) -> Result<Outcome> {
    let workers = pool(opts.jobs)?;
    let mut out = Outcome::default();
    if cfg.paths.gaze.is_empty() {
        return Err(Error::Config(
            "paths.gaze must name at least one gaze file to write".into(),
        ));
    }
    let seed = opts.seed.unwrap_or(cfg.synth.seed);
    let (layouts, trials) = match source {
        SynthSource::Study => {
            let study = study_shaped(seed, cfg.pane, &cfg.screen)?;
            let mut buf = Vec::new();
            write_methods_jsonl(&mut buf, &study.methods)?;
            out.write(&cfg.paths.corpus, &buf)?;
            let mut buf = Vec::new();
            write_scripts_jsonl(&mut buf, &study.trials)?;
            out.write(&cfg.paths.output.join("scripts.jsonl"), &buf)?;
            (load_layouts(cfg, &workers)?, study.trials)
        }
        SynthSource::Scripts(path) => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let trials = read_scripts_jsonl(std::io::BufReader::new(file))?;
            (load_layouts(cfg, &workers)?, trials)
        }
    };

    let participants: Vec<&str> = trials
        .iter()
        .map(|t| t.participant_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let file_of = |t: &ScriptedTrial| {
        participants
            .binary_search(&t.participant_id.as_str())
            .unwrap()
            % cfg.paths.gaze.len()
    };
    let streams = workers.install(|| {
        trials
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                let layout = layouts.get(&t.method_id).ok_or_else(|| {
                    in_trial(
                        &t.participant_id,
                        &t.method_id,
                        Error::Validation("unknown method".into()),
                    )
                })?;
                let file = file_of(t);
                let sc = cfg
                    .synth
                    .synth_config(cfg.synth.rate_for_file(file), seed.wrapping_add(i as u64));
                generate(&t.participant_id, layout, &t.script, &sc, &cfg.screen)
                    .map(|s| (file, s))
                    .map_err(|e| in_trial(&t.participant_id, &t.method_id, e))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    for (f, path) in cfg.paths.gaze.iter().enumerate() {
        let mut batch: Vec<_> = streams
            .iter()
            .filter(|(file, _)| *file == f)
            .map(|(_, s)| s.clone())
            .collect();
        batch.sort_by(|a, b| a.key().cmp(&b.key()));
        let header = GazeHeader {
            sampling_rate_hz: cfg.synth.rate_for_file(f),
            screen: cfg.screen,
        };
        let mut buf = Vec::new();
        write_gaze_jsonl(&mut buf, &header, &batch)?;
        out.write(path, &buf)?;
    }
    Ok(out)
}

fn fixation_file_name(gaze: &Path) -> String {
    let stem = gaze
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    format!("{}.jsonl", sanitize_id(&stem))
}

/// Fixation files, one per configured gaze file, in config order.
pub fn fixation_paths(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let mut seen = HashSet::new();
    cfg.paths
        .gaze
        .iter()
        .map(|g| {
            let name = fixation_file_name(g);
            if !seen.insert(name.clone()) {
                return Err(Error::Config(format!(
                    "gaze files map to the same fixation file `{name}`; rename one"
                )));
            }
            Ok(cfg.fixations_dir().join(name))
        })
        .collect()
}

pub fn cmd_fixations(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let workers = pool(opts.jobs)?;
    let mut out = Outcome::default();
    let targets = fixation_paths(cfg)?;
    remove_dir(&cfg.fixations_dir())?;
    out.warnings.extend(cfg.screen.validate()?);
    let mut log = String::new();
    for (gaze_path, target) in cfg.paths.gaze.iter().zip(&targets) {
        let file = load_gaze_file(gaze_path)?;
        let mut warnings = Vec::new();
        match &file.header {
            None => warnings.push(Warning::new(
                WarningKind::EmptyInput,
                format!("{}: empty gaze file", gaze_path.display()),
            )),
            Some(h) if h.screen != cfg.screen => warnings.push(Warning::new(
                WarningKind::ScreenMismatch,
                format!(
                    "{}: header screen {:?} differs from the configured screen; using the configured one",
                    gaze_path.display(),
                    h.screen
                ),
            )),
            Some(_) => {}
        }
        let results = workers.install(|| {
            file.streams
                .par_iter()
                .map(|s| {
                    let fixations = detect_fixations(s, &cfg.filter, &cfg.screen)
                        .map_err(|e| in_trial(&s.participant_id, &s.method_id, e))?;
                    Ok((
                        validate_stream(s),
                        TrialFixations {
                            participant_id: s.participant_id.clone(),
                            method_id: s.method_id.clone(),
                            fixations,
                        },
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut trials = Vec::with_capacity(results.len());
        for (w, t) in results {
            warnings.extend(w);
            trials.push(t);
        }
        let without: Vec<&TrialFixations> =
            trials.iter().filter(|t| t.fixations.is_empty()).collect();
        for t in &without {
            warnings.push(Warning::new(
                WarningKind::EmptyScanpath,
                format!(
                    "trial ({}, {}): no fixations detected; dropped",
                    t.participant_id, t.method_id
                ),
            ));
        }
        let mut buf = Vec::new();
        write_fixations_jsonl(&mut buf, &trials)?;
        out.write(target, &buf)?;

        let samples: usize = file.streams.iter().map(|s| s.samples.len()).sum();
        let fixations: usize = trials.iter().map(|t| t.fixations.len()).sum();
        let name = gaze_path
            .file_name()
            .map(|n| n.to_string_lossy())
            .unwrap_or_default();
        let _ = writeln!(
            log,
            "{name}: trials={} samples={samples} fixations={fixations} dropped_trials={}",
            trials.len(),
            without.len()
        );
        for (kind, count) in count_by_kind(&warnings) {
            let _ = writeln!(log, "{name}: warning {kind}={count}");
        }
        out.warnings.extend(warnings);
    }
    out.write(&cfg.paths.output.join("fixations.log"), log.as_bytes())?;
    Ok(out)
}

pub fn cmd_scanpaths(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let workers = pool(opts.jobs)?;
    let mut out = Outcome::default();
    let layouts = load_layouts(cfg, &workers)?;
    let mut trials = Vec::new();
    for path in fixation_paths(cfg)? {
        trials.extend(load_fixations(&path)?);
    }
    let results = workers.install(|| {
        trials
            .par_iter()
            .map(|t| {
                let layout = layouts.get(&t.method_id).ok_or_else(|| {
                    in_trial(
                        &t.participant_id,
                        &t.method_id,
                        Error::Validation("method not in corpus".into()),
                    )
                })?;
                Ok(extract_scanpath(
                    &t.participant_id,
                    &t.fixations,
                    layout,
                    &cfg.screen,
                    &cfg.scanpath,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut scanpaths: Vec<Scanpath> = Vec::new();
    let mut excluded = 0;
    for (s, w) in results {
        if s.words.is_empty() {
            excluded += 1;
        } else {
            scanpaths.push(s);
        }
        out.warnings.extend(w);
    }
    scanpaths.sort_by(|a, b| a.key().cmp(&b.key()));
    if let Some(w) = scanpaths.windows(2).find(|w| w[0].key() == w[1].key()) {
        return Err(Error::Validation(format!(
            "trial ({}, {}) appears in more than one fixation file",
            w[0].participant_id, w[0].method_id
        )));
    }

    let mut buf = Vec::new();
    write_scanpaths_jsonl(&mut buf, &scanpaths)?;
    out.write(&cfg.scanpaths_path(), &buf)?;
    let mut buf = Vec::new();
    write_layout_dump(&mut buf, &layouts.values().collect::<Vec<_>>())?;
    out.write(&cfg.paths.output.join("layouts.jsonl"), &buf)?;

    let mut log = format!(
        "trials={} scanpaths={} excluded_empty={excluded}\n",
        trials.len(),
        scanpaths.len()
    );
    for (kind, count) in count_by_kind(&out.warnings) {
        let _ = writeln!(log, "warning {kind}={count}");
    }
    out.write(&cfg.paths.output.join("scanpaths.log"), log.as_bytes())?;
    Ok(out)
}

fn split_dirs(specs: &[SplitSpec]) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    specs
        .iter()
        .map(|s| {
            let dir = sanitize_id(&s.test_id);
            if !seen.insert(dir.clone()) {
                return Err(Error::Validation(format!(
                    "ids `{}` and another map to the same directory `{dir}`",
                    s.test_id
                )));
            }
            Ok(dir)
        })
        .collect()
}

pub fn cmd_splits(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let workers = pool(opts.jobs)?;
    let mut out = Outcome::default();
    let (corpus, warnings) = load_corpus(cfg, &workers)?;
    out.warnings.extend(warnings);
    remove_dir(&cfg.splits_dir())?;
    for &kind in &cfg.evaluation.split_kinds {
        let specs = make_splits(&corpus, kind)?;
        let dirs = split_dirs(&specs)?;
        let rendered = workers.install(|| {
            specs
                .par_iter()
                .map(|spec| {
                    let split = materialize_split(&corpus, spec, cfg.evaluation.prompt_n)?;
                    let mut manifest =
                        serde_json::to_vec_pretty(&SplitManifest::from_split(&split))?;
                    manifest.push(b'\n');
                    let mut train = Vec::new();
                    write_prompt_file(&mut train, &split.train, PromptMode::Finetune)?;
                    let mut val = Vec::new();
                    write_prompt_file(&mut val, &split.val, PromptMode::Finetune)?;
                    let mut test = Vec::new();
                    write_prompt_file(&mut test, &split.test, PromptMode::Inference)?;
                    Ok([manifest, train, val, test])
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let base = cfg.splits_dir().join(kind.as_str());
        for (dir, files) in dirs.iter().zip(rendered) {
            for (name, bytes) in ["manifest.json", "train.txt", "val.txt", "test.txt"]
                .iter()
                .zip(files)
            {
                out.write(&base.join(dir).join(name), &bytes)?;
            }
        }
    }
    Ok(out)
}

/// Baseline predictors available to `predict`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    ReadingOrder,
    NameFirst,
    Markov,
}

impl Predictor {
    pub const ALL: [Predictor; 3] = [
        Predictor::ReadingOrder,
        Predictor::NameFirst,
        Predictor::Markov,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Predictor::ReadingOrder => "reading-order",
            Predictor::NameFirst => "name-first",
            Predictor::Markov => "markov",
        }
    }
}

impl std::str::FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Predictor::ALL
            .into_iter()
            .find(|p| p.as_str() == s || p.as_str().replace('-', "_") == s)
            .ok_or_else(|| Error::Parameter(format!("unknown predictor `{s}`")))
    }
}

pub fn predictions_path(cfg: &ExperimentConfig, predictor: Predictor, kind: SplitKind) -> PathBuf {
    cfg.predictions_dir()
        .join(predictor.as_str())
        .join(format!("{kind}.jsonl"))
}

/// Baseline predictions for every test trial of every split, one record
/// per configured `n`. Each trial is decoded once at the largest `n` and
/// the shorter predictions are its prefixes. `sampled` switches the Markov
/// baseline from greedy to seeded sampling.
pub fn cmd_predict(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    predictor: Predictor,
    sampled: bool,
) -> Result<Outcome> {
    let workers = pool(opts.jobs)?;
    let mut out = Outcome::default();
    let (corpus, warnings) = load_corpus(cfg, &workers)?;
    out.warnings.extend(warnings);
    let max_n = *cfg
        .evaluation
        .n_values
        .iter()
        .max()
        .expect("validated non-empty");
    let seed = opts.seed.unwrap_or(cfg.synth.seed);
    for &kind in &cfg.evaluation.split_kinds {
        let specs = make_splits(&corpus, kind)?;
        let per_split = workers.install(|| {
            specs
                .par_iter()
                .enumerate()
                .map(|(k, spec)| {
                    predict_split(
                        &corpus,
                        spec,
                        predictor,
                        max_n,
                        sampled.then(|| seed.wrapping_add(k as u64)),
                    )
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut records = Vec::new();
        for (recs, w) in per_split {
            records.extend(recs);
            out.warnings.extend(w);
        }
        let mut lines = Vec::new();
        for r in &records {
            for &n in &cfg.evaluation.n_values {
                let mut line = r.to_line();
                line.words.truncate(n);
                line.n = n;
                lines.push(line);
            }
        }
        lines.sort_by(|a, b| {
            (&a.participant_id, &a.method_id, a.n).cmp(&(&b.participant_id, &b.method_id, b.n))
        });
        let mut buf = Vec::new();
        write_predictions_jsonl(&mut buf, &lines)?;
        out.write(&predictions_path(cfg, predictor, kind), &buf)?;
    }
    Ok(out)
}

fn predict_split(
    corpus: &Corpus,
    spec: &SplitSpec,
    predictor: Predictor,
    n: usize,
    seed: Option<u64>,
) -> Result<(Vec<PredictionRecord>, Vec<Warning>)> {
    let test: Vec<&Scanpath> = corpus
        .scanpaths
        .iter()
        .filter(|s| {
            !s.words.is_empty() && spec.kind.key_of(&s.participant_id, &s.method_id) == spec.test_id
        })
        .collect();
    let model = match predictor {
        Predictor::Markov => {
            let train_ids: BTreeSet<&str> = spec.train_ids.iter().map(String::as_str).collect();
            let train: Vec<&Scanpath> = corpus
                .scanpaths
                .iter()
                .filter(|s| train_ids.contains(spec.kind.key_of(&s.participant_id, &s.method_id)))
                .collect();
            Some(markov_train(&train, &corpus.layouts)?)
        }
        _ => None,
    };
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut warnings = Vec::new();
    let mut records = Vec::with_capacity(test.len());
    for s in test {
        let layout = &corpus.layouts[&s.method_id];
        let words = match (predictor, &model) {
            (Predictor::ReadingOrder, _) => reading_order_predict(layout, n)?,
            (Predictor::NameFirst, _) => {
                let (words, w) = name_first_predict(layout, n)?;
                warnings.extend(w);
                words
            }
            (Predictor::Markov, Some(model)) => {
                let decoding = match rng.as_mut() {
                    Some(r) => Decoding::Sampled { seed: r.random() },
                    None => Decoding::Greedy,
                };
                markov_predict(model, layout, n, decoding)
            }
            (Predictor::Markov, None) => unreachable!("model trained above"),
        };
        records.push(PredictionRecord {
            participant_id: s.participant_id.clone(),
            method_id: s.method_id.clone(),
            n,
            words,
            source: match predictor {
                Predictor::ReadingOrder => crate::predictors::PredictionSource::ReadingOrder,
                Predictor::NameFirst => crate::predictors::PredictionSource::NameFirst,
                Predictor::Markov => crate::predictors::PredictionSource::Markov,
            },
        });
    }
    Ok((records, warnings))
}

/// A set of predictions to score under one split family.
#[derive(Debug, Clone)]
pub enum PredictionInput {
    /// Predictions JSONL with explicit `n` per line.
    Jsonl(PathBuf),
    /// Directory of raw completion files named `<split dir>.txt`, paired
    /// with the manifests written by `splits`. Each completion is scored
    /// at every configured `n`.
    Completions(PathBuf),
}

fn gather_predictions(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    kind: SplitKind,
    input: &PredictionInput,
) -> Result<(Vec<PredictionRecord>, Vec<Warning>)> {
    match input {
        PredictionInput::Jsonl(path) => load_external_predictions(path, corpus),
        PredictionInput::Completions(dir) => {
            let specs = make_splits(corpus, kind)?;
            let mut records = Vec::new();
            let mut warnings = Vec::new();
            for name in split_dirs(&specs)? {
                let manifest = SplitManifest::load(
                    &cfg.splits_dir()
                        .join(kind.as_str())
                        .join(&name)
                        .join("manifest.json"),
                )?;
                let (recs, w) =
                    load_completions(&dir.join(format!("{name}.txt")), &manifest, corpus)?;
                warnings.extend(w);
                for r in recs {
                    for &n in &cfg.evaluation.n_values {
                        let mut words = r.words.clone();
                        words.truncate(n);
                        records.push(PredictionRecord {
                            n,
                            words,
                            ..r.clone()
                        });
                    }
                }
            }
            Ok((records, warnings))
        }
    }
}

/// Scores predictions against the reference scanpaths and writes per-trial
/// scores, the table-shaped report, its long form with counts, and one
/// Levenshtein histogram per (experiment, n).
pub fn cmd_score(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    inputs: &[(SplitKind, PredictionInput)],
) -> Result<Outcome> {
    if inputs.is_empty() {
        return Err(Error::Parameter("no predictions given to score".into()));
    }
    let workers = pool(opts.jobs)?;
    let mut out = Outcome::default();
    let (corpus, warnings) = load_corpus(cfg, &workers)?;
    out.warnings.extend(warnings);
    let mut kinds_seen = HashSet::new();
    let mut all_scores: Vec<ScoreRecord> = Vec::new();
    for (kind, input) in inputs {
        if !kinds_seen.insert(*kind) {
            return Err(Error::Parameter(format!(
                "predictions for {kind} given more than once"
            )));
        }
        let (mut records, warnings) = gather_predictions(cfg, &corpus, *kind, input)?;
        out.warnings.extend(warnings);
        if records.is_empty() {
            return Err(Error::Validation(format!(
                "no predictions to score for {kind}"
            )));
        }
        records.sort_by(|a, b| {
            (&a.participant_id, &a.method_id, a.n).cmp(&(&b.participant_id, &b.method_id, b.n))
        });
        if let Some(w) = records.windows(2).find(|w| {
            (&w[0].participant_id, &w[0].method_id, w[0].n)
                == (&w[1].participant_id, &w[1].method_id, w[1].n)
        }) {
            return Err(Error::Validation(format!(
                "{kind}: duplicate prediction for ({}, {}) at n = {}",
                w[0].participant_id, w[0].method_id, w[0].n
            )));
        }
        let scored = workers.install(|| {
            records
                .par_iter()
                .map(|r| {
                    let reference = corpus
                        .scanpath(&r.participant_id, &r.method_id)
                        .expect("loader checked keys");
                    let sim = score(&r.words, &reference.words, r.n)
                        .map_err(|e| in_trial(&r.participant_id, &r.method_id, e))?;
                    Ok(ScoreRecord {
                        experiment: kind.as_str().to_string(),
                        kind_id: kind.key_of(&r.participant_id, &r.method_id).to_string(),
                        pair: ScorePair {
                            participant_id: r.participant_id.clone(),
                            method_id: r.method_id.clone(),
                            n: r.n,
                            levenshtein: sim.levenshtein,
                            gestalt: sim.gestalt,
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        all_scores.extend(scored);
    }

    let dir = cfg.scores_dir();
    remove_dir(&dir)?;
    let rows = aggregate(&all_scores);
    let mut buf = Vec::new();
    write_scores_csv(&mut buf, &all_scores)?;
    out.write(&dir.join("scores.csv"), &buf)?;
    let mut buf = Vec::new();
    write_report_csv(&mut buf, &rows, &cfg.evaluation.n_values)?;
    out.write(&dir.join("report.csv"), &buf)?;
    let mut buf = Vec::new();
    write_aggregate_csv(&mut buf, &rows)?;
    out.write(&dir.join("report_long.csv"), &buf)?;
    for row in &rows {
        let lev: Vec<f64> = all_scores
            .iter()
            .filter(|s| s.experiment == row.experiment && s.pair.n == row.n)
            .map(|s| s.pair.levenshtein)
            .collect();
        let bins = histogram(&lev, cfg.evaluation.histogram_bin_width)?;
        let mut buf = Vec::new();
        write_histogram_csv(&mut buf, &bins)?;
        out.write(
            &dir.join(format!("histogram_{}_n{}.csv", row.experiment, row.n)),
            &buf,
        )?;
    }
    Ok(out)
}

/// One line per warning kind with its count and first message.
pub fn summarize_warnings(warnings: &[Warning]) -> Vec<String> {
    let mut first: BTreeMap<&str, &Warning> = BTreeMap::new();
    for w in warnings {
        first.entry(w.kind.as_str()).or_insert(w);
    }
    count_by_kind(warnings)
        .into_iter()
        .map(|(kind, count)| format!("warning: {count} x {kind} (first: {})", first[kind].message))
        .collect()
}
