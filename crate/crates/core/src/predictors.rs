//! Baseline scanpath predictors and ingestion of external predictions.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    parse_prediction, read_predictions_jsonl, Corpus, PredictionLine, SplitManifest,
};
use crate::error::{Error, Result};
use crate::scanpath::Scanpath;
use crate::stimulus::{StimulusLayout, TokenKind};
use crate::warning::{Warning, WarningKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    ReadingOrder,
    NameFirst,
    Markov,
    External,
}

impl PredictionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ReadingOrder => "reading_order",
            Self::NameFirst => "name_first",
            Self::Markov => "markov",
            Self::External => "external",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionRecord {
    pub participant_id: String,
    pub method_id: String,
    pub n: usize,
    pub words: Vec<String>,
    pub source: PredictionSource,
}

impl PredictionRecord {
    pub fn to_line(&self) -> PredictionLine {
        PredictionLine {
            participant_id: self.participant_id.clone(),
            method_id: self.method_id.clone(),
            n: self.n,
            words: self.words.clone(),
        }
    }
}

fn push_collapsed(words: &mut Vec<String>, lexeme: &str) {
    if words.last().map(String::as_str) != Some(lexeme) {
        words.push(lexeme.to_string());
    }
}

/// First `n` non-punctuation words in source order.
pub fn reading_order_predict(layout: &StimulusLayout, n: usize) -> Result<Vec<String>> {
    let mut words = Vec::new();
    for t in layout.tokens.iter().filter(|t| !t.is_punctuation()) {
        if words.len() == n {
            break;
        }
        push_collapsed(&mut words, &t.lexeme);
    }
    if words.is_empty() && n > 0 {
        return Err(Error::Parameter(format!(
            "method `{}` has no non-punctuation tokens",
            layout.method_id
        )));
    }
    Ok(words)
}

/// Index of the declared method's name: the first identifier at brace and
/// paren depth zero that is directly followed by `(` and is not an
/// annotation name.
pub fn find_method_name(layout: &StimulusLayout) -> Option<usize> {
    let code: Vec<usize> = (0..layout.tokens.len())
        .filter(|&i| layout.tokens[i].kind != TokenKind::Comment)
        .collect();
    let mut depth = 0i32;
    for (pos, &i) in code.iter().enumerate() {
        let t = &layout.tokens[i];
        if t.kind == TokenKind::Punctuation {
            match t.lexeme.as_str() {
                "{" | "(" | "[" => depth += 1,
                "}" | ")" | "]" => depth -= 1,
                _ => {}
            }
            continue;
        }
        if depth != 0 || t.kind != TokenKind::Identifier {
            continue;
        }
        let next_is_paren = code
            .get(pos + 1)
            .is_some_and(|&j| layout.tokens[j].lexeme == "(");
        let after_at = pos > 0 && layout.tokens[code[pos - 1]].lexeme == "@";
        if next_is_paren && !after_at {
            return Some(i);
        }
    }
    None
}

/// Method name first, then reading order for the rest. Falls back to plain
/// reading order, with a warning, when no method name is found.
pub fn name_first_predict(
    layout: &StimulusLayout,
    n: usize,
) -> Result<(Vec<String>, Vec<Warning>)> {
    let Some(name) = find_method_name(layout) else {
        let warning = Warning::new(
            WarningKind::MethodNameNotFound,
            format!(
                "no method name in `{}`; using reading order",
                layout.method_id
            ),
        );
        return Ok((reading_order_predict(layout, n)?, vec![warning]));
    };
    let mut words = Vec::new();
    if n == 0 {
        return Ok((words, Vec::new()));
    }
    words.push(layout.tokens[name].lexeme.clone());
    for (i, t) in layout.tokens.iter().enumerate() {
        if words.len() == n {
            break;
        }
        if i != name && !t.is_punctuation() {
            push_collapsed(&mut words, &t.lexeme);
        }
    }
    Ok((words, Vec::new()))
}

const DECILES: usize = 10;
/// Token kind x line decile.
pub const CATEGORY_COUNT: usize = TokenKind::ALL.len() * DECILES;

/// Category of a token: its kind crossed with the decile of its line within
/// the method.
pub fn token_category(layout: &StimulusLayout, index: usize) -> usize {
    let t = &layout.tokens[index];
    let decile = (t.line * DECILES / layout.line_count()).min(DECILES - 1);
    t.kind.index() * DECILES + decile
}

/// First-order Markov chain over token categories with add-one smoothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovModel {
    initial: Vec<u64>,
    transitions: Vec<u64>,
}

impl MarkovModel {
    pub fn initial_count(&self, category: usize) -> u64 {
        self.initial[category]
    }

    pub fn transition_count(&self, from: usize, to: usize) -> u64 {
        self.transitions[from * CATEGORY_COUNT + to]
    }

    pub fn initial_prob(&self, category: usize) -> f64 {
        let total: u64 = self.initial.iter().sum();
        (self.initial[category] + 1) as f64 / (total + CATEGORY_COUNT as u64) as f64
    }

    pub fn transition_prob(&self, from: usize, to: usize) -> f64 {
        let row = &self.transitions[from * CATEGORY_COUNT..(from + 1) * CATEGORY_COUNT];
        let total: u64 = row.iter().sum();
        (row[to] + 1) as f64 / (total + CATEGORY_COUNT as u64) as f64
    }
}

/// Counts initial categories and category transitions over the training
/// scanpaths. Each word is placed at its first occurrence in the method;
/// words absent from the method are skipped.
pub fn markov_train(
    train: &[&Scanpath],
    layouts: &BTreeMap<String, StimulusLayout>,
) -> Result<MarkovModel> {
    if train.is_empty() {
        return Err(Error::Parameter(
            "markov baseline needs at least one training scanpath".into(),
        ));
    }
    let mut model = MarkovModel {
        initial: vec![0; CATEGORY_COUNT],
        transitions: vec![0; CATEGORY_COUNT * CATEGORY_COUNT],
    };
    for s in train {
        let layout = layouts
            .get(&s.method_id)
            .ok_or_else(|| Error::Validation(format!("no layout for method `{}`", s.method_id)))?;
        let cats = s.words.iter().filter_map(|w| {
            layout
                .tokens
                .iter()
                .position(|t| &t.lexeme == w)
                .map(|i| token_category(layout, i))
        });
        let mut prev: Option<usize> = None;
        for c in cats {
            match prev {
                None => model.initial[c] += 1,
                Some(p) => model.transitions[p * CATEGORY_COUNT + c] += 1,
            }
            prev = Some(c);
        }
    }
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decoding {
    #[default]
    Greedy,
    Sampled {
        seed: u64,
    },
}

/// Decodes up to `n` words. Each step picks a category (greedy: most
/// probable, lowest index on ties) among those that still have a usable
/// token in this method, then emits that category's earliest unused token.
/// Tokens are never reused, and a token repeating the previous word is
/// skipped, so decoding stops early once the method runs out.
pub fn markov_predict(
    model: &MarkovModel,
    layout: &StimulusLayout,
    n: usize,
    decoding: Decoding,
) -> Vec<String> {
    let cats: Vec<usize> = (0..layout.tokens.len())
        .map(|i| token_category(layout, i))
        .collect();
    let mut used = vec![false; layout.tokens.len()];
    let mut rng = match decoding {
        Decoding::Sampled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Decoding::Greedy => None,
    };
    let mut words: Vec<String> = Vec::new();
    let mut prev: Option<usize> = None;
    while words.len() < n {
        let mut first_of: Vec<Option<usize>> = vec![None; CATEGORY_COUNT];
        for (i, t) in layout.tokens.iter().enumerate() {
            if used[i] || words.last() == Some(&t.lexeme) {
                continue;
            }
            first_of[cats[i]].get_or_insert(i);
        }
        let candidates: Vec<(usize, f64)> = (0..CATEGORY_COUNT)
            .filter(|c| first_of[*c].is_some())
            .map(|c| {
                let p = match prev {
                    None => model.initial_prob(c),
                    Some(from) => model.transition_prob(from, c),
                };
                (c, p)
            })
            .collect();
        let Some(&(mut chosen, _)) = candidates.first() else {
            break;
        };
        match rng.as_mut() {
            None => {
                let mut best = f64::NEG_INFINITY;
                for &(c, p) in &candidates {
                    if p > best {
                        best = p;
                        chosen = c;
                    }
                }
            }
            Some(rng) => {
                let total: f64 = candidates.iter().map(|(_, p)| p).sum();
                let mut draw = rng.random::<f64>() * total;
                for &(c, p) in &candidates {
                    chosen = c;
                    if draw < p {
                        break;
                    }
                    draw -= p;
                }
            }
        }
        let token = first_of[chosen].expect("candidate has a token");
        used[token] = true;
        words.push(layout.tokens[token].lexeme.clone());
        prev = Some(chosen);
    }
    words
}

fn check_words_len(
    line: usize,
    mut words: Vec<String>,
    n: usize,
    warnings: &mut Vec<Warning>,
) -> Vec<String> {
    if words.len() > n {
        warnings.push(Warning::new(
            WarningKind::PredictionTooLong,
            format!("line {line}: {} words for n = {n}; truncated", words.len()),
        ));
        words.truncate(n);
    }
    words
}

/// Reads external predictions in the predictions JSONL format. Every line
/// must name a trial present in the corpus.
pub fn load_external_predictions(
    path: &Path,
    corpus: &Corpus,
) -> Result<(Vec<PredictionRecord>, Vec<Warning>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines = read_predictions_jsonl(BufReader::new(file))?;
    let unknown: Vec<String> = lines
        .iter()
        .filter(|(_, l)| corpus.scanpath(&l.participant_id, &l.method_id).is_none())
        .map(|(no, l)| format!("line {no}: ({}, {})", l.participant_id, l.method_id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Validation(format!(
            "{}: predictions for unknown trials: {}",
            path.display(),
            unknown.join("; ")
        )));
    }
    let mut warnings = Vec::new();
    let records = lines
        .into_iter()
        .map(|(no, l)| PredictionRecord {
            words: check_words_len(no, l.words, l.n, &mut warnings),
            participant_id: l.participant_id,
            method_id: l.method_id,
            n: l.n,
            source: PredictionSource::External,
        })
        .collect();
    Ok((records, warnings))
}

/// Reads a raw completions file: one completion per line, paired in order
/// with the manifest's test trials. Each completion goes through
/// [`parse_prediction`]; its warnings are passed on.
pub fn load_completions(
    path: &Path,
    manifest: &SplitManifest,
    corpus: &Corpus,
) -> Result<(Vec<PredictionRecord>, Vec<Warning>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let completions: Vec<&str> = text.lines().collect();
    if completions.len() != manifest.test.len() {
        return Err(Error::Validation(format!(
            "{}: {} completions for {} manifest test trials",
            path.display(),
            completions.len(),
            manifest.test.len()
        )));
    }
    let unknown: Vec<String> = manifest
        .test
        .iter()
        .enumerate()
        .filter(|(_, k)| corpus.scanpath(&k.participant_id, &k.method_id).is_none())
        .map(|(i, k)| format!("line {}: ({}, {})", i + 1, k.participant_id, k.method_id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::Validation(format!(
            "{}: completions paired with unknown trials: {}",
            path.display(),
            unknown.join("; ")
        )));
    }
    let mut warnings = Vec::new();
    let mut records = Vec::with_capacity(completions.len());
    for (i, (completion, key)) in completions.iter().zip(&manifest.test).enumerate() {
        let (words, parse_warnings) = parse_prediction(completion);
        warnings.extend(parse_warnings.into_iter().map(|w| Warning {
            message: format!("line {}: {}", i + 1, w.message),
            ..w
        }));
        let (n, words) = match manifest.n {
            Some(n) => (n, check_words_len(i + 1, words, n, &mut warnings)),
            None => (words.len(), words),
        };
        records.push(PredictionRecord {
            participant_id: key.participant_id.clone(),
            method_id: key.method_id.clone(),
            n,
            words,
            source: PredictionSource::External,
        });
    }
    Ok((records, warnings))
}
