//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scanpath_core::fixation::{detect_fixations, FilterConfig};
use scanpath_core::gaze::ScreenGeometry;
use scanpath_core::scanpath::{extract_scanpath, ScanpathConfig};
use scanpath_core::stimulus::{CodePane, StimulusLayout};
use scanpath_core::synth::{
    generate, random_script, synthetic_method, SynthConfig, SCRIPT_MIN_SEPARATION_DEG,
};

pub const NEGATIVE_PARSE: &str = "  public void  testNegativeParseCases() {\n    verbose(\"--->Negative parse tests  START\");\n    for (int i = 0; i < negativeParseTests.length; i++) {\n      parseFilter(negativeParseTests[i], false);\n    }\n    checkDelete(); }";

/// Lexemes as they come out of real Java methods, including ones that
/// share long substrings.
pub const JAVA_VOCAB: &[&str] = &[
    "public",
    "void",
    "int",
    "for",
    "if",
    "return",
    "new",
    "this",
    "null",
    "false",
    "true",
    "i",
    "=",
    "<",
    "++",
    "+",
    "0",
    "1",
    "length",
    "verbose",
    "parseFilter",
    "negativeParseTests",
    "testNegativeParseCases",
    "checkDelete",
    "String",
    "get",
    "getValue",
    "setValue",
    "value",
    "count",
    "\"START\"",
    "size",
    "index",
    "indexOf",
    "parse",
    "tests",
];

/// Edit distance with unit insert/delete and substitution cost 2, as a
/// plain dynamic program over chars.
pub fn indel_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = if a[i - 1] == b[j - 1] { 0 } else { 2 };
            d[i][j] = (d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1)
                .min(d[i - 1][j - 1] + sub);
        }
    }
    d[a.len()][b.len()]
}

pub fn levenshtein_oracle(a: &str, b: &str) -> f64 {
    let total = a.chars().count() + b.chars().count();
    if total == 0 {
        return 1.0;
    }
    (total - indel_distance(a, b)) as f64 / total as f64
}

/// Brute-force longest common block: leftmost in `a`, then leftmost in `b`.
fn longest_block(a: &[char], b: &[char]) -> (usize, usize, usize) {
    let mut best = (0, 0, 0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            let mut k = 0;
            while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                k += 1;
            }
            if k > best.2 {
                best = (i, j, k);
            }
        }
    }
    best
}

fn gestalt_matches(a: &[char], b: &[char]) -> usize {
    let (i, j, k) = longest_block(a, b);
    if k == 0 {
        return 0;
    }
    k + gestalt_matches(&a[..i], &b[..j]) + gestalt_matches(&a[i + k..], &b[j + k..])
}

/// Plain recursion in the given argument order.
pub fn gestalt_oracle_directed(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    2.0 * gestalt_matches(&a, &b) as f64 / total as f64
}

pub fn join(words: &[String]) -> String {
    words.join(" ")
}

pub fn random_words(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<String> {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| JAVA_VOCAB[rng.random_range(0..JAVA_VOCAB.len())].to_string())
        .collect()
}

/// A seeded synthetic trial: layout of a generated method plus a script
/// of 3 to 8 tokens, opening on the method name half the time.
pub fn scripted_trial(seed: u64) -> (StimulusLayout, Vec<usize>) {
    let geom = ScreenGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = synthetic_method(&mut rng, seed as usize);
    let layout = StimulusLayout::build(format!("m{seed}"), source, CodePane::default()).unwrap();
    let len = rng.random_range(3..=8);
    let name_first = rng.random_bool(0.5);
    let script = random_script(
        &layout,
        &geom,
        len,
        SCRIPT_MIN_SEPARATION_DEG,
        name_first,
        &mut rng,
    );
    (layout, script)
}

pub fn script_words(layout: &StimulusLayout, script: &[usize]) -> Vec<String> {
    script
        .iter()
        .map(|&i| layout.tokens[i].lexeme.clone())
        .collect()
}

/// Runs generate, fixation detection and scanpath extraction with default
/// settings. Returns the merged fixation count and the recovered words.
pub fn recover(
    layout: &StimulusLayout,
    script: &[usize],
    cfg: &SynthConfig,
) -> (usize, Vec<String>) {
    let geom = ScreenGeometry::default();
    let stream = generate("p", layout, script, cfg, &geom).unwrap();
    let fixations = detect_fixations(&stream, &FilterConfig::default(), &geom).unwrap();
    let (scanpath, _) =
        extract_scanpath("p", &fixations, layout, &geom, &ScanpathConfig::default());
    (fixations.len(), scanpath.words)
}

/// The metric's contract: the lexicographically smaller string goes first.
pub fn gestalt_oracle(a: &str, b: &str) -> f64 {
    if a <= b {
        gestalt_oracle_directed(a, b)
    } else {
        gestalt_oracle_directed(b, a)
    }
}
