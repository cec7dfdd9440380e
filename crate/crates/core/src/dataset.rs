//! Leave-one-out split families and the TDAT/SEQ prompt format.
//!
//! A fine-tuning prompt is the method source followed by the scanpath:
//!
//! ```text
//! TDAT: {source}
//!  SEQ: <s> {word} {word} ... </s>
//! ```
//!
//! The inference prompt is the same text cut right after `SEQ:`. Prompt
//! files hold one prompt per record with a blank line between records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scanpath::{truncate_words, Scanpath};
use crate::stimulus::StimulusLayout;
use crate::warning::{Warning, WarningKind};

pub const STUDY_PARTICIPANTS: usize = 27;
pub const STUDY_METHODS: usize = 68;
pub const STUDY_METHODS_PER_PARTICIPANT: usize = 25;

#[derive(Debug, Clone)]
pub struct Corpus {
    pub layouts: BTreeMap<String, StimulusLayout>,
    /// Sorted by (participant, method).
    pub scanpaths: Vec<Scanpath>,
}

impl Corpus {
    /// Errors when a scanpath refers to an unknown method or a trial appears
    /// twice; warns when the corpus is not shaped like the original study
    /// (27 participants, 25 methods each, 68 methods overall).
    pub fn new(
        layouts: BTreeMap<String, StimulusLayout>,
        mut scanpaths: Vec<Scanpath>,
    ) -> Result<(Self, Vec<Warning>)> {
        scanpaths.sort_by(|a, b| a.key().cmp(&b.key()));
        if let Some(s) = scanpaths
            .iter()
            .find(|s| !layouts.contains_key(&s.method_id))
        {
            return Err(Error::Validation(format!(
                "scanpath ({}, {}) refers to an unknown method",
                s.participant_id, s.method_id
            )));
        }
        if let Some(w) = scanpaths.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::Validation(format!(
                "duplicate trial ({}, {})",
                w[0].participant_id, w[0].method_id
            )));
        }
        let corpus = Self { layouts, scanpaths };
        let warnings = corpus.shape_warnings();
        Ok((corpus, warnings))
    }

    fn shape_warnings(&self) -> Vec<Warning> {
        let mut per_participant: BTreeMap<&str, usize> = BTreeMap::new();
        let mut methods: BTreeSet<&str> = BTreeSet::new();
        for s in &self.scanpaths {
            *per_participant.entry(&s.participant_id).or_default() += 1;
            methods.insert(&s.method_id);
        }
        let mut issues = Vec::new();
        if per_participant.len() != STUDY_PARTICIPANTS {
            issues.push(format!("{} participants", per_participant.len()));
        }
        if methods.len() != STUDY_METHODS {
            issues.push(format!("{} methods", methods.len()));
        }
        let off: Vec<_> = per_participant
            .iter()
            .filter(|(_, c)| **c != STUDY_METHODS_PER_PARTICIPANT)
            .collect();
        if !off.is_empty() {
            issues.push(format!(
                "{} participants without exactly {STUDY_METHODS_PER_PARTICIPANT} trials",
                off.len()
            ));
        }
        if issues.is_empty() {
            return Vec::new();
        }
        vec![Warning::new(
            WarningKind::CorpusShape,
            format!(
                "corpus differs from the {STUDY_PARTICIPANTS}x{STUDY_METHODS_PER_PARTICIPANT} of {STUDY_METHODS} study shape: {} ({} trials)",
                issues.join(", "),
                self.scanpaths.len()
            ),
        )]
    }

    pub fn scanpath(&self, participant_id: &str, method_id: &str) -> Option<&Scanpath> {
        self.scanpaths
            .binary_search_by(|s| s.key().cmp(&(participant_id, method_id)))
            .ok()
            .map(|i| &self.scanpaths[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SplitKind {
    #[serde(rename = "participant-holdout")]
    ParticipantHoldout,
    #[serde(rename = "method-holdout")]
    MethodHoldout,
}

impl SplitKind {
    pub const ALL: [SplitKind; 2] = [SplitKind::ParticipantHoldout, SplitKind::MethodHoldout];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::ParticipantHoldout => "participant-holdout",
            SplitKind::MethodHoldout => "method-holdout",
        }
    }

    /// The id a trial is routed by under this split family.
    pub fn key_of<'a>(self, participant_id: &'a str, method_id: &'a str) -> &'a str {
        match self {
            SplitKind::ParticipantHoldout => participant_id,
            SplitKind::MethodHoldout => method_id,
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "participant-holdout" | "participant_holdout" => Ok(SplitKind::ParticipantHoldout),
            "method-holdout" | "method_holdout" => Ok(SplitKind::MethodHoldout),
            other => Err(Error::Parameter(format!("unknown split kind `{other}`"))),
        }
    }
}

/// One leave-one-out split. `train_ids` excludes both the test and the
/// validation id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub test_id: String,
    pub validation_id: String,
    pub train_ids: Vec<String>,
}

impl SplitSpec {
    /// Train-side pool: training ids plus the validation id.
    pub fn train_side(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.validation_id.as_str())
            .chain(self.train_ids.iter().map(String::as_str))
    }
}

/// One split per distinct id of the given kind (over trials with a
/// non-empty scanpath). The validation id is the lexicographically smallest
/// id on the train side.
pub fn make_splits(corpus: &Corpus, kind: SplitKind) -> Result<Vec<SplitSpec>> {
    let ids: BTreeSet<&str> = corpus
        .scanpaths
        .iter()
        .filter(|s| !s.words.is_empty())
        .map(|s| kind.key_of(&s.participant_id, &s.method_id))
        .collect();
    if ids.len() < 3 {
        return Err(Error::Validation(format!(
            "{kind} needs at least 3 distinct ids for train/validation/test, found {}",
            ids.len()
        )));
    }
    Ok(ids
        .iter()
        .map(|test| {
            let mut rest = ids.iter().filter(|id| *id != test).map(|id| id.to_string());
            let validation_id = rest.next().expect("at least two remaining ids");
            SplitSpec {
                kind,
                test_id: test.to_string(),
                validation_id,
                train_ids: rest.collect(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub participant_id: String,
    pub method_id: String,
    pub tdat: String,
    pub seq: Vec<String>,
    pub n: usize,
}

#[derive(Debug, Clone)]
pub struct MaterializedSplit {
    pub spec: SplitSpec,
    pub n: Option<usize>,
    pub train: Vec<PromptRecord>,
    pub val: Vec<PromptRecord>,
    pub test: Vec<PromptRecord>,
    pub warnings: Vec<Warning>,
}

/// Routes every trial by its split key and truncates SEQ to the first `n`
/// words (`None` keeps full scanpaths). Trials with empty scanpaths are left
/// out with a warning.
pub fn materialize_split(
    corpus: &Corpus,
    split: &SplitSpec,
    n: Option<usize>,
) -> Result<MaterializedSplit> {
    let train_ids: BTreeSet<&str> = split.train_ids.iter().map(String::as_str).collect();
    let mut out = MaterializedSplit {
        spec: split.clone(),
        n,
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        warnings: Vec::new(),
    };
    for s in &corpus.scanpaths {
        if s.words.is_empty() {
            out.warnings.push(Warning::new(
                WarningKind::EmptyScanpath,
                format!(
                    "trial ({}, {}) has an empty scanpath; excluded",
                    s.participant_id, s.method_id
                ),
            ));
            continue;
        }
        let seq = match n {
            Some(n) => truncate_words(&s.words, n)?.to_vec(),
            None => s.words.clone(),
        };
        let record = PromptRecord {
            participant_id: s.participant_id.clone(),
            method_id: s.method_id.clone(),
            tdat: corpus.layouts[&s.method_id].source.clone(),
            n: n.unwrap_or(seq.len()),
            seq,
        };
        let key = split.kind.key_of(&s.participant_id, &s.method_id);
        if key == split.test_id {
            out.test.push(record);
        } else if key == split.validation_id {
            out.val.push(record);
        } else if train_ids.contains(key) {
            out.train.push(record);
        } else {
            return Err(Error::Validation(format!(
                "trial ({}, {}) has id `{key}` unknown to the {} split for `{}`",
                s.participant_id, s.method_id, split.kind, split.test_id
            )));
        }
    }
    Ok(out)
}

pub fn render_finetune_prompt(rec: &PromptRecord) -> Result<String> {
    if rec.seq.is_empty() {
        return Err(Error::Parameter(format!(
            "cannot render a fine-tuning prompt with an empty SEQ for ({}, {})",
            rec.participant_id, rec.method_id
        )));
    }
    Ok(format!(
        "{} <s> {} </s>\n",
        render_inference_prompt(rec),
        rec.seq.join(" ")
    ))
}

pub fn render_inference_prompt(rec: &PromptRecord) -> String {
    format!("TDAT: {}\n SEQ:", rec.tdat)
}

/// The two recoverable parts of a rendered fine-tuning prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPrompt {
    pub tdat: String,
    pub seq: Vec<String>,
}

/// Inverse of [`render_finetune_prompt`]. The SEQ line is located by the
/// last `"\n SEQ: "`, so sources may contain anything.
pub fn parse_finetune_prompt(text: &str) -> Result<ParsedPrompt> {
    let body = text
        .strip_prefix("TDAT: ")
        .ok_or_else(|| Error::parse(1, "prompt does not start with `TDAT: `"))?;
    let cut = body
        .rfind("\n SEQ: ")
        .ok_or_else(|| Error::parse(1, "prompt has no SEQ line"))?;
    let seq_line = &body[cut + "\n SEQ: ".len()..];
    let words = seq_line
        .strip_prefix("<s> ")
        .and_then(|s| s.strip_suffix(" </s>\n"))
        .ok_or_else(|| Error::parse(body[..cut].matches('\n').count() + 2, "malformed SEQ line"))?;
    Ok(ParsedPrompt {
        tdat: body[..cut].to_string(),
        seq: words.split(' ').map(str::to_string).collect(),
    })
}

/// Lenient reading of model output: the words between the first `<s>` and
/// the next `</s>`.
pub fn parse_prediction(completion: &str) -> (Vec<String>, Vec<Warning>) {
    let Some(start) = completion.find("<s>") else {
        return (
            Vec::new(),
            vec![Warning::new(
                WarningKind::MissingStartTag,
                format!("no <s> in completion {completion:?}"),
            )],
        );
    };
    let rest = &completion[start + 3..];
    let (body, warnings) = match rest.find("</s>") {
        Some(end) => (&rest[..end], Vec::new()),
        None => (
            rest,
            vec![Warning::new(
                WarningKind::TruncatedPrediction,
                format!("no </s> in completion {completion:?}; read to end"),
            )],
        ),
    };
    (
        body.split_whitespace().map(str::to_string).collect(),
        warnings,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    Finetune,
    Inference,
}

pub fn write_prompt_file<W: Write>(
    mut writer: W,
    records: &[PromptRecord],
    mode: PromptMode,
) -> Result<()> {
    let io = |e| Error::io("<prompt file>", e);
    for (i, rec) in records.iter().enumerate() {
        if i > 0 {
            writer.write_all(b"\n").map_err(io)?;
        }
        let text = match mode {
            PromptMode::Finetune => render_finetune_prompt(rec)?,
            PromptMode::Inference => render_inference_prompt(rec) + "\n",
        };
        writer.write_all(text.as_bytes()).map_err(io)?;
    }
    Ok(())
}

/// Splits a prompt file back into rendered prompts. A record ends at its
/// SEQ line; the blank separator line that follows is dropped.
pub fn split_prompt_file(text: &str, mode: PromptMode) -> Vec<String> {
    let mut records = Vec::new();
    let mut current = String::new();
    let mut skip_separator = false;
    for line in text.split_inclusive('\n') {
        if skip_separator {
            skip_separator = false;
            if line == "\n" {
                continue;
            }
        }
        current.push_str(line);
        let done = match mode {
            PromptMode::Finetune => line.starts_with(" SEQ: <s> ") && line.ends_with(" </s>\n"),
            PromptMode::Inference => line == " SEQ:\n" || line == " SEQ:",
        };
        if done {
            if mode == PromptMode::Inference {
                current.pop();
            }
            records.push(std::mem::take(&mut current));
            skip_separator = true;
        }
    }
    records
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialKey {
    pub participant_id: String,
    pub method_id: String,
}

impl TrialKey {
    fn of(rec: &PromptRecord) -> Self {
        Self {
            participant_id: rec.participant_id.clone(),
            method_id: rec.method_id.clone(),
        }
    }
}

/// Per-split manifest. The order of `test` is the order of the inference
/// prompts, and hence of raw completions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub kind: SplitKind,
    pub test_id: String,
    pub validation_id: String,
    pub train_ids: Vec<String>,
    pub n: Option<usize>,
    pub train: Vec<TrialKey>,
    pub val: Vec<TrialKey>,
    pub test: Vec<TrialKey>,
}

impl SplitManifest {
    pub fn from_split(split: &MaterializedSplit) -> Self {
        Self {
            kind: split.spec.kind,
            test_id: split.spec.test_id.clone(),
            validation_id: split.spec.validation_id.clone(),
            train_ids: split.spec.train_ids.clone(),
            n: split.n,
            train: split.train.iter().map(TrialKey::of).collect(),
            val: split.val.iter().map(TrialKey::of).collect(),
            test: split.test.iter().map(TrialKey::of).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// One line of the predictions JSONL exchanged with external predictors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionLine {
    pub participant_id: String,
    pub method_id: String,
    pub n: usize,
    pub words: Vec<String>,
}

pub fn write_predictions_jsonl<W: Write>(mut writer: W, lines: &[PredictionLine]) -> Result<()> {
    for l in lines {
        serde_json::to_writer(&mut writer, l)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<predictions>", e))?;
    }
    Ok(())
}

/// Returns each parsed line with its 1-based line number.
pub fn read_predictions_jsonl<R: BufRead>(reader: R) -> Result<Vec<(usize, PredictionLine)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<predictions>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed =
            serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        out.push((idx + 1, parsed));
    }
    Ok(out)
}
