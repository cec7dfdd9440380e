//! Acceptance checks. Runs as a plain binary (`cargo test --test
//! acceptance`) and prints one PASS/FAIL line per criterion; exits non-zero
//! if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::{
    gestalt_oracle, levenshtein_oracle, random_words, recover, script_words, scripted_trial,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scanpath_core::dataset::{
    make_splits, materialize_split, parse_finetune_prompt, render_finetune_prompt, Corpus,
    PromptRecord, SplitKind,
};
use scanpath_core::gaze::ScreenGeometry;
use scanpath_core::metrics::{
    gestalt_similarity, histogram, levenshtein_similarity, score, serialize_words,
};
use scanpath_core::scanpath::Scanpath;
use scanpath_core::stimulus::{CodePane, StimulusLayout};
use scanpath_core::synth::{study_shaped, SynthConfig};

const METRIC_PAIRS: usize = 1000;
const METRIC_SEED: u64 = 2024;
const METRIC_TIME_LIMIT_S: f64 = 10.0;
const ROUND_TRIP_SEEDS: u64 = 50;
const NOISE_SD_NORM: f64 = 0.004;
const FIRST_WORD_TARGET: f64 = 0.90;
const RATE_AGREEMENT_TARGET: f64 = 0.95;
const PROMPT_CASES: u32 = 500;
const STUDY_SEED: u64 = 7;
const HISTOGRAM_BIN_WIDTH: f64 = 0.1;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_corpus() -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(METRIC_SEED);
    (0..METRIC_PAIRS)
        .map(|_| {
            let a = random_words(&mut rng, 8);
            let b = random_words(&mut rng, 8);
            (serialize_words(&a), serialize_words(&b))
        })
        .collect()
}

fn metric_oracle_equivalence() -> Verdict {
    let pairs = metric_corpus();
    let start = Instant::now();
    let mismatches = pairs
        .iter()
        .filter(|(a, b)| {
            levenshtein_similarity(a, b) != levenshtein_oracle(a, b)
                || gestalt_similarity(a, b) != gestalt_oracle(a, b)
        })
        .count();
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < METRIC_TIME_LIMIT_S,
        format!(
            "{} pairs, {mismatches} mismatches, {secs:.2} s (limit {METRIC_TIME_LIMIT_S} s)",
            pairs.len()
        ),
    )
}

fn metric_laws() -> Verdict {
    let pairs = metric_corpus();
    let mut violations = 0;
    for (a, b) in &pairs {
        for f in [levenshtein_similarity, gestalt_similarity] {
            let ab = f(a, b);
            violations += usize::from(ab != f(b, a));
            violations += usize::from(!(0.0..=1.0).contains(&ab));
            violations += usize::from(f(a, a) != 1.0);
        }
    }
    check(
        violations == 0,
        format!("{} pairs x 2 metrics, {violations} violations", pairs.len()),
    )
}

fn synth_cfg(rate: f64, noise: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        sampling_rate_hz: rate,
        noise_sd_norm: noise,
        seed,
        ..Default::default()
    }
}

fn zero_noise_round_trip() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for rate in [60.0, 120.0] {
        let exact = (0..ROUND_TRIP_SEEDS)
            .filter(|&seed| {
                let (layout, script) = scripted_trial(seed);
                recover(&layout, &script, &synth_cfg(rate, 0.0, seed)).1
                    == script_words(&layout, &script)
            })
            .count();
        pass &= exact as u64 == ROUND_TRIP_SEEDS;
        details.push(format!("{rate} Hz exact {exact}/{ROUND_TRIP_SEEDS}"));
    }
    for rate in [60.0, 120.0] {
        let first = (0..ROUND_TRIP_SEEDS)
            .filter(|&seed| {
                let (layout, script) = scripted_trial(seed);
                let (_, words) = recover(&layout, &script, &synth_cfg(rate, NOISE_SD_NORM, seed));
                words.first() == script_words(&layout, &script).first()
            })
            .count();
        let fraction = first as f64 / ROUND_TRIP_SEEDS as f64;
        pass &= fraction >= FIRST_WORD_TARGET;
        details.push(format!(
            "{rate} Hz noise {NOISE_SD_NORM} first word {first}/{ROUND_TRIP_SEEDS} (target {FIRST_WORD_TARGET})"
        ));
    }
    check(pass, details.join("; "))
}

fn rate_robustness() -> Verdict {
    let agree = (0..ROUND_TRIP_SEEDS)
        .filter(|&seed| {
            let (layout, script) = scripted_trial(seed);
            recover(&layout, &script, &synth_cfg(60.0, 0.0, seed))
                == recover(&layout, &script, &synth_cfg(120.0, 0.0, seed))
        })
        .count();
    let fraction = agree as f64 / ROUND_TRIP_SEEDS as f64;
    check(
        fraction >= RATE_AGREEMENT_TARGET,
        format!("60 vs 120 Hz agree on fixation count and scanpath in {agree}/{ROUND_TRIP_SEEDS} (target {RATE_AGREEMENT_TARGET})"),
    )
}

fn study_corpus() -> Corpus {
    let geom = ScreenGeometry::default();
    let study = study_shaped(STUDY_SEED, CodePane::default(), &geom).unwrap();
    let layouts: BTreeMap<String, StimulusLayout> = study
        .methods
        .iter()
        .map(|m| {
            (
                m.method_id.clone(),
                StimulusLayout::build(&m.method_id, &m.source, CodePane::default()).unwrap(),
            )
        })
        .collect();
    let scanpaths = study
        .trials
        .iter()
        .map(|t| Scanpath {
            participant_id: t.participant_id.clone(),
            method_id: t.method_id.clone(),
            words: script_words(&layouts[&t.method_id], &t.script),
        })
        .collect();
    Corpus::new(layouts, scanpaths).unwrap().0
}

fn split_structure() -> Verdict {
    let corpus = study_corpus();
    let mut details = vec![format!("{} trials", corpus.scanpaths.len())];
    let mut pass = true;
    for (kind, splits_expected) in [
        (SplitKind::ParticipantHoldout, 27),
        (SplitKind::MethodHoldout, 68),
    ] {
        let specs = make_splits(&corpus, kind).unwrap();
        let mut leaks = 0;
        let mut bad_shape = 0;
        for spec in &specs {
            bad_shape += usize::from(
                spec.train_side().count() != splits_expected - 1
                    || spec.train_ids.len() != splits_expected - 2,
            );
            let split = materialize_split(&corpus, spec, None).unwrap();
            let keys = |recs: &[PromptRecord]| -> BTreeSet<String> {
                recs.iter()
                    .map(|r| kind.key_of(&r.participant_id, &r.method_id).to_string())
                    .collect()
            };
            let (train, val, test) = (keys(&split.train), keys(&split.val), keys(&split.test));
            leaks += train.intersection(&test).count()
                + train.intersection(&val).count()
                + val.intersection(&test).count();
            leaks += usize::from(test != BTreeSet::from([spec.test_id.clone()]));
            leaks += usize::from(val != BTreeSet::from([spec.validation_id.clone()]));
            leaks += usize::from(
                split.train.len() + split.val.len() + split.test.len() != corpus.scanpaths.len(),
            );
        }
        pass &= specs.len() == splits_expected && bad_shape == 0 && leaks == 0;
        details.push(format!(
            "{kind}: {} splits (want {splits_expected}), {} train-side ids each, {bad_shape} misshapen, {leaks} leaks",
            specs.len(),
            splits_expected - 1
        ));
    }
    check(pass, details.join("; "))
}

fn prompt_byte_exactness() -> Verdict {
    let golden = include_str!("golden/negative_parse_prompt.txt");
    let rendered = render_finetune_prompt(&PromptRecord {
        participant_id: "133".into(),
        method_id: "testNegativeParseCases".into(),
        tdat: common::NEGATIVE_PARSE.into(),
        seq: vec!["testNegativeParseCases".into()],
        n: 1,
    })
    .unwrap();
    let golden_ok = rendered.as_bytes() == golden.as_bytes();

    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: PROMPT_CASES,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let strategy = (
        any::<String>(),
        prop::collection::vec("[^\\s]{1,12}", 1..10),
    );
    let round_trips = runner.run(&strategy, |(tdat, seq)| {
        let rec = PromptRecord {
            participant_id: "p".into(),
            method_id: "m".into(),
            n: seq.len(),
            tdat,
            seq,
        };
        let parsed = parse_finetune_prompt(&render_finetune_prompt(&rec).unwrap()).unwrap();
        prop_assert_eq!(parsed.tdat, rec.tdat);
        prop_assert_eq!(parsed.seq, rec.seq);
        Ok(())
    });
    check(
        golden_ok && round_trips.is_ok(),
        format!(
            "golden {} bytes {}; {PROMPT_CASES} render/parse round trips {}",
            golden.len(),
            if golden_ok { "identical" } else { "DIFFER" },
            match &round_trips {
                Ok(()) => "ok".to_string(),
                Err(e) => format!("failed: {e}"),
            }
        ),
    )
}

const BIN: &str = env!("CARGO_BIN_EXE_scanpath");

fn run_pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fs::write(
        dir.join("experiment.toml"),
        "[paths]\ncorpus = \"methods.jsonl\"\ngaze = [\"gaze_60.jsonl\", \"gaze_120.jsonl\"]\noutput = \"out\"\n\n[synth]\nrates_hz = [60.0, 120.0]\nnoise_sd_norm = 0.002\nseed = 7\n",
    )
    .map_err(|e| e.to_string())?;
    let steps: [&[&str]; 7] = [
        &["synth", "--study"],
        &["fixations"],
        &["scanpaths"],
        &["splits"],
        &["predict", "--predictor", "markov"],
        &["predict", "--predictor", "name-first"],
        &["score", "--predictor", "markov"],
    ];
    for step in steps {
        let out = Command::new(BIN)
            .args(step)
            .args(["--config", "experiment.toml", "--jobs", "8"])
            .current_dir(dir)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "{step:?} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            ));
        }
    }
    let mut csvs = BTreeMap::new();
    for entry in fs::read_dir(dir.join("out/scores")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        csvs.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&path).map_err(|e| e.to_string())?,
        );
    }
    Ok(csvs)
}

fn end_to_end_determinism() -> Verdict {
    let a = tempfile::TempDir::new().unwrap();
    let b = tempfile::TempDir::new().unwrap();
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    let identical = first == second;
    let report = String::from_utf8_lossy(&first["report.csv"]).into_owned();
    let mut rows = csv::Reader::from_reader(report.as_bytes());
    let header: Vec<String> = rows.headers().unwrap().iter().map(str::to_string).collect();
    let cells: Vec<Vec<String>> = rows
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect();
    let expected_rows = [
        ("participant-holdout", "levenshtein"),
        ("participant-holdout", "gestalt"),
        ("method-holdout", "levenshtein"),
        ("method-holdout", "gestalt"),
    ];
    let shape_ok = header == ["experiment", "metric", "n=1", "n=2", "n=3", "n=4"]
        && cells.len() == expected_rows.len()
        && cells.iter().zip(expected_rows).all(|(row, (exp, metric))| {
            row[0] == exp
                && row[1] == metric
                && row[2..]
                    .iter()
                    .all(|c| c.parse::<f64>().is_ok_and(|v| (0.0..=1.0).contains(&v)))
        });
    check(
        identical && shape_ok,
        format!(
            "{} CSVs {} across two --jobs 8 runs; report {} rows x {} n-columns ({})",
            first.len(),
            if identical {
                "byte-identical"
            } else {
                "DIFFER"
            },
            cells.len(),
            header.len().saturating_sub(2),
            if shape_ok {
                "2 experiments x 2 metrics x n=1..4"
            } else {
                "wrong shape"
            }
        ),
    )
}

fn histogram_partition() -> Verdict {
    let corpus = study_corpus();
    let mut details = Vec::new();
    let mut pass = true;
    for n in 1..=4 {
        let lev: Vec<f64> = corpus
            .scanpaths
            .iter()
            .map(|s| score(&s.words, &s.words, n).unwrap().levenshtein)
            .collect();
        let bins = histogram(&lev, HISTOGRAM_BIN_WIDTH).unwrap();
        let total: usize = bins.iter().map(|b| b.count).sum();
        let exact = bins
            .iter()
            .find(|b| b.is_exact_one())
            .map_or(0, |b| b.count);
        pass &= total == lev.len() && exact == lev.len();
        details.push(format!(
            "self n={n}: {total}/{} counted, {exact} in exact-1.0 bin",
            lev.len()
        ));
    }
    // a mixed set: the reference against a shifted copy
    let mixed: Vec<f64> = corpus
        .scanpaths
        .iter()
        .map(|s| {
            let shifted: Vec<String> = s.words.iter().skip(1).cloned().collect();
            score(&shifted, &s.words, 4).unwrap().levenshtein
        })
        .collect();
    let bins = histogram(&mixed, HISTOGRAM_BIN_WIDTH).unwrap();
    let total: usize = bins.iter().map(|b| b.count).sum();
    let ones = mixed.iter().filter(|v| **v == 1.0).count();
    let exact = bins
        .iter()
        .find(|b| b.is_exact_one())
        .map_or(0, |b| b.count);
    pass &= total == mixed.len() && exact == ones;
    details.push(format!(
        "shifted n=4: {total}/{} counted, exact-1.0 bin {exact} = perfect {ones}",
        mixed.len()
    ));
    check(pass, details.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("metric-oracle-equivalence", metric_oracle_equivalence),
        ("metric-laws", metric_laws),
        ("zero-noise-round-trip", zero_noise_round_trip),
        ("rate-robustness", rate_robustness),
        ("split-structure", split_structure),
        ("prompt-byte-exactness", prompt_byte_exactness),
        ("end-to-end-determinism", end_to_end_determinism),
        ("histogram-partition", histogram_partition),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let verdict =
            panic::catch_unwind(criterion).unwrap_or_else(|_| Err("panicked".to_string()));
        match verdict {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
