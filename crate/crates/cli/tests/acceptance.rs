//! Acceptance criteria 1-9, one PASS/FAIL line each.
//!
//! Run with `cargo test -p judgecorr --test acceptance -- --nocapture` to see
//! the lines; the test fails if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;
use std::time::{Duration, Instant};

use judgecorr::corpus::{canonicalize_gold, CanonicalAnswer, Item, TaskKind, TaskSpec};
use judgecorr::extraction::{extract_answer, extract_verdict, VerdictFamily};
use judgecorr::metrics::{
    classify_strength, partial_correlation, partial_correlation_from_series, pearson, Strength, TripletSeries,
};
use judgecorr::pipeline::{
    read_json, read_jsonl, run_judgment_stage, GenerationRecord, JudgmentItem, JudgmentRecord, PipelineError,
    PromptLog, RunLayout, RunManifest,
};
use judgecorr::prompts::{Strategy, TemplateRegistry};
use judgecorr::providers::{Client, MockBackend, ModelEndpoint};
use judgecorr::report::{emit_judge_table, AnalysisReport, TableFormat};
use nalgebra::{DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn frac(v: &Value) -> f64 {
    let p = v.as_array().expect("fraction pair");
    p[0].as_f64().unwrap() / p[1].as_f64().unwrap()
}

// ---------------------------------------------------------------------------
// 1. covariance-matrix oracle

fn covariance(cols: [&[bool]; 3]) -> Matrix3<f64> {
    let n = cols[0].len();
    let data = DMatrix::from_fn(n, 3, |r, c| if cols[c][r] { 1.0 } else { 0.0 });
    let means = data.row_mean();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Matrix3::from_fn(|r, c| cov[(r, c)])
}

fn oracle(cov: &Matrix3<f64>) -> Option<f64> {
    let sd: Vec<f64> = (0..3).map(|i| cov[(i, i)].sqrt()).collect();
    if sd.iter().any(|s| *s == 0.0) {
        return None;
    }
    let r = |a: usize, b: usize| cov[(a, b)] / (sd[a] * sd[b]);
    let (gj, ga, ja) = (r(0, 1), r(0, 2), r(1, 2));
    let den = (1.0 - ga * ga) * (1.0 - ja * ja);
    (den > 0.0).then(|| (gj - ga * ja) / den.sqrt())
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 1000 {
        let mut cols = [Vec::new(), Vec::new(), Vec::new()];
        let (pg, pa) = (rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8));
        for _ in 0..50 {
            let g = rng.gen_bool(pg);
            let a = rng.gen_bool(pa);
            let j = rng.gen_bool(0.25 + 0.35 * g as u8 as f64 + 0.2 * a as u8 as f64);
            cols[0].push(g);
            cols[1].push(j);
            cols[2].push(a);
        }
        let Some(expected) = oracle(&covariance([&cols[0], &cols[1], &cols[2]])) else {
            continue;
        };
        let [g, j, a] = cols;
        let got = partial_correlation_from_series(&TripletSeries::new(g, j, a).unwrap()).map_err(|e| e.to_string())?;
        ensure!(!got.degenerate, "non-degenerate draw flagged degenerate");
        worst = worst.max((got.value - expected).abs());
        checked += 1;
    }
    let elapsed = started.elapsed();
    ensure!(worst <= 1e-12, "max deviation {worst:e}");
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{checked} series, max deviation {worst:.1e}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// 2. formula identities

fn random_bits(rng: &mut ChaCha8Rng, n: usize) -> Vec<bool> {
    loop {
        let v: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if v.iter().any(|b| *b) && v.iter().any(|b| !*b) {
            return v;
        }
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let r: f64 = rng.gen_range(-1.0..=1.0);
        let got = partial_correlation(r, 0.0, 0.0).map_err(|e| e.to_string())?;
        ensure!(close(got.value, r), "partial(r,0,0) = {} for r = {r}", got.value);
    }
    for _ in 0..100 {
        let (a, b): (f64, f64) = (rng.gen_range(-0.999..0.999), rng.gen_range(-0.999..0.999));
        let got = partial_correlation(a * b, a, b).map_err(|e| e.to_string())?;
        ensure!(close(got.value, 0.0), "partial(ab,a,b) = {} for ({a},{b})", got.value);
    }
    for _ in 0..100 {
        let n = rng.gen_range(5..60);
        let x = random_bits(&mut rng, n);
        let y = random_bits(&mut rng, n);
        let flipped: Vec<bool> = x.iter().map(|b| !b).collect();
        let xx = pearson(&x, &x).map_err(|e| e.to_string())?;
        ensure!(close(xx.value, 1.0) && !xx.degenerate, "pearson(x,x) = {}", xx.value);
        let xy = pearson(&x, &y).map_err(|e| e.to_string())?.value;
        let fy = pearson(&flipped, &y).map_err(|e| e.to_string())?.value;
        ensure!(close(fy, -xy), "pearson(1-x,y) = {fy}, pearson(x,y) = {xy}");
    }
    Ok("300 identity checks within 1e-12".into())
}

// ---------------------------------------------------------------------------
// 3. degenerate reproduction

fn criterion_3() -> Outcome {
    let g = vec![true; 12];
    let j = vec![true, false, true, true, false, true, true, true, false, true, true, false];
    let a = vec![true, true, false, true, false, false, true, true, false, true, false, true];
    let got = partial_correlation_from_series(&TripletSeries::new(g, j, a).unwrap()).map_err(|e| e.to_string())?;
    ensure!(got.degenerate, "not flagged degenerate");
    ensure!(got.value == 0.0, "value {}", got.value);
    Ok("all-ones G gives degenerate 0".into())
}

// ---------------------------------------------------------------------------
// 4. strength bands

fn criterion_4() -> Outcome {
    let cases = [(0.1869, Strength::Weak), (0.3950, Strength::Moderate), (0.5931, Strength::Strong)];
    for (v, want) in cases {
        let got = classify_strength(v).map_err(|e| e.to_string())?;
        ensure!(got == want, "{v} classified {got:?}, want {want:?}");
    }
    Ok("0.1869 Weak, 0.3950 Moderate, 0.5931 Strong".into())
}

// ---------------------------------------------------------------------------
// 5. parsing suite

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn criterion_5() -> Outcome {
    let reference = "Let's think step by step.\nLeo begins with 20 apples.\n...\nThe answer is 17.";
    let assistant = "Let's think step by step.\nLeo starts with 20 apples.\n...\nThe answer is 11.";
    let num = |t: &str| extract_answer(t, TaskKind::NumericQA).answer().cloned();
    ensure!(num(reference) == Some(CanonicalAnswer::numeric(17)), "reference parsed as {:?}", num(reference));
    ensure!(num(assistant) == Some(CanonicalAnswer::numeric(11)), "assistant parsed as {:?}", num(assistant));

    // the answer marker plus the three verdict token families
    ensure!(
        extract_answer("The answer is (B).", TaskKind::MultipleChoice).answer() == Some(&CanonicalAnswer::Choice('B')),
        "answer marker with a letter"
    );
    for (text, want) in [("[[Correct]]", true), ("[[Incorrect]]", false)] {
        ensure!(extract_verdict(text, VerdictFamily::Pointwise).judgment() == Some(want), "pointwise {text}");
    }
    for (text, want) in [("**[[Correct]]**", true), ("**[[Incorrect]]**", false)] {
        ensure!(extract_verdict(text, VerdictFamily::MetaJudge).judgment() == Some(want), "meta-judge {text}");
    }
    for (text, want) in [("[[A]]", 'A'), ("[[B]]", 'B'), ("[[C]]", 'C')] {
        let got = extract_verdict(text, VerdictFamily::PairwiseChoice);
        ensure!(
            got.answer().map(CanonicalAnswer::render) == Some(want.to_string()),
            "pairwise {text} gave {:?}",
            got.answer()
        );
    }

    let fixture: Value = serde_json::from_str(&fs::read_to_string(fixtures().join("parsing/adversarial.json")).unwrap())
        .map_err(|e| e.to_string())?;
    let cases = fixture["cases"].as_array().unwrap();
    ensure!(cases.len() == 50, "fixture has {} cases", cases.len());
    let mut failures = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let text = case["text"].as_str().unwrap();
        let expect = case["expect"].as_str();
        let outcome = match case["parser"].as_str().unwrap() {
            "numeric" => extract_answer(text, TaskKind::NumericQA),
            "choice" => extract_answer(text, TaskKind::MultipleChoice),
            "pointwise" => extract_verdict(text, VerdictFamily::Pointwise),
            "meta-judge" => extract_verdict(text, VerdictFamily::MetaJudge),
            "pairwise" => extract_verdict(text, VerdictFamily::PairwiseChoice),
            other => return Err(format!("unknown parser `{other}`")),
        };
        let ok = match (case["parser"].as_str().unwrap(), expect) {
            (_, None) => {
                !outcome.valid
                    && format!("{:?}", outcome.failure_reason.unwrap()) == case["failure"].as_str().unwrap()
            }
            ("numeric", Some(e)) => outcome.answer() == canonicalize_gold(e, TaskKind::NumericQA).ok().as_ref(),
            ("choice", Some(e)) => outcome.answer() == canonicalize_gold(e, TaskKind::MultipleChoice).ok().as_ref(),
            ("pairwise", Some(e)) => outcome.answer() == canonicalize_gold(e, TaskKind::PairwiseVerdict).ok().as_ref(),
            (_, Some(e)) => outcome.judgment() == Some(e == "correct"),
        };
        if !ok {
            failures.push(format!("case {} {text:?}: got {:?}", i + 1, outcome));
        }
    }
    ensure!(failures.is_empty(), "{} adversarial failures: {}", failures.len(), failures.join("; "));
    Ok("worked-example texts, 4 token families, 50/50 adversarial cases".into())
}

// ---------------------------------------------------------------------------
// end-to-end mock run shared by criteria 6-8

struct MockRun {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    cache: PathBuf,
    elapsed: Duration,
}

impl MockRun {
    fn run_dir(&self) -> PathBuf {
        self.root.join("run")
    }
}

fn harness(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_judgecorr"))
        .args(args)
        // any stray HTTP request would hit a closed port
        .env("HTTP_PROXY", "http://127.0.0.1:9")
        .env("HTTPS_PROXY", "http://127.0.0.1:9")
        .env("ALL_PROXY", "http://127.0.0.1:9")
        .output()
        .expect("harness binary runs")
}

fn harness_ok(args: &[&str]) -> Result<Output, String> {
    let out = harness(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`judgecorr {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn mock_run() -> Result<MockRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().to_path_buf();
    copy_dir(&fixtures().join("arith"), &root.join("fixture"));
    let config = root.join("fixture/run.json");
    let cache = root.join("cache");
    let (c, k, r) = (config.to_str().unwrap(), cache.to_str().unwrap(), root.join("run"));
    let r = r.to_str().unwrap();
    let started = Instant::now();
    harness_ok(&["--cache", k, "generate", "--config", c, "--task", "arith", "--models", "judge-model,agent-one,agent-two", "--out", r])?;
    for strategy in ["cot", "self-ref"] {
        harness_ok(&["--cache", k, "judge", "--config", c, "--judge", "judge-model", "--agents", "agent-one,agent-two", "--strategy", strategy, "--out", r])?;
    }
    for policy in ["exclude", "count-incorrect"] {
        let out = root.join(format!("report-{policy}.json"));
        harness_ok(&["analyze", "--run", r, "--invalid-policy", policy, "--out", out.to_str().unwrap()])?;
    }
    Ok(MockRun {
        elapsed: started.elapsed(),
        _dir: dir,
        root,
        config,
        cache,
    })
}

fn load_report(path: &Path) -> Result<AnalysisReport, String> {
    serde_json::from_str(&fs::read_to_string(path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// 6. end-to-end numbers

fn check_counts(got: &judgecorr::metrics::ConfusionCounts, want: &Value) -> Result<(), String> {
    let g = [got.tp, got.fp, got.fn_, got.tn, got.invalid_count];
    let w: Vec<usize> = ["tp", "fp", "fn", "tn", "invalid_count"]
        .iter()
        .map(|k| want[k].as_u64().unwrap() as usize)
        .collect();
    ensure!(g.as_slice() == w.as_slice(), "counts {g:?}, want {w:?}");
    Ok(())
}

fn criterion_6(run: &MockRun) -> Outcome {
    let expected: Value =
        serde_json::from_str(&fs::read_to_string(fixtures().join("arith/expected.json")).unwrap()).unwrap();
    ensure!(run.elapsed < Duration::from_secs(10), "mock run took {:?}", run.elapsed);

    let config: Value = serde_json::from_str(&fs::read_to_string(&run.config).unwrap()).unwrap();
    ensure!(
        config["models"].as_array().unwrap().iter().all(|m| m["mock_script"].is_string() && m.get("base_url").is_none()),
        "fixture roster must be fully scripted"
    );

    let layout = RunLayout::new(run.run_dir());
    for (model, want) in expected["generation_accuracy"].as_object().unwrap() {
        let recs: Vec<GenerationRecord> = read_jsonl(&layout.generation("arith", model)).map_err(|e| e.to_string())?;
        ensure!(recs.len() == 20, "{model}: {} generation records", recs.len());
        let acc = recs.iter().filter(|r| r.correct).count() as f64 / 20.0;
        ensure!(close(acc, want.as_f64().unwrap()), "{model} accuracy {acc}, want {want}");
    }
    let cot: Vec<JudgmentRecord> =
        read_jsonl(&layout.judgment("arith", Strategy::CoT, "judge-model")).map_err(|e| e.to_string())?;
    ensure!(cot.len() == expected["judgment_records"].as_u64().unwrap() as usize, "{} CoT judgment records", cot.len());

    for (policy, file) in [("exclude", "report-exclude.json"), ("count-incorrect", "report-count-incorrect.json")] {
        let report = load_report(&run.root.join(file))?;
        let cell = report
            .cell("judge-model", "arith", Strategy::CoT)
            .ok_or("no CoT cell in the report")?;
        ensure!(
            close(cell.generation_accuracy, expected["generation_accuracy"]["judge-model"].as_f64().unwrap()),
            "judge accuracy in report {}",
            cell.generation_accuracy
        );
        let want = &expected["cot"][policy];
        check_counts(&cell.judgment.counts, &want["counts"]).map_err(|e| format!("{policy}: {e}"))?;
        ensure!(close(cell.judgment.precision, frac(&want["precision"])), "{policy}: P {}", cell.judgment.precision);
        ensure!(close(cell.judgment.recall, frac(&want["recall"])), "{policy}: R {}", cell.judgment.recall);
        ensure!(close(cell.judgment.f1, frac(&want["f1"])), "{policy}: F1 {}", cell.judgment.f1);
        let sizes = [cell.two_way.judge_correct.n, cell.two_way.judge_incorrect.n];
        let want_sizes: Vec<usize> = want["two_way_sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
        ensure!(sizes.as_slice() == want_sizes.as_slice(), "{policy}: two-way sizes {sizes:?}");
        ensure!(close(cell.two_way.judge_correct.f1, frac(&want["f1_plus"])), "{policy}: F1+ {}", cell.two_way.judge_correct.f1);
        ensure!(close(cell.two_way.judge_incorrect.f1, frac(&want["f1_minus"])), "{policy}: F1- {}", cell.two_way.judge_incorrect.f1);
        ensure!(close(cell.two_way.delta, frac(&want["delta"])), "{policy}: delta {}", cell.two_way.delta);
        ensure!(
            cell.two_way.delta == cell.two_way.judge_correct.f1 - cell.two_way.judge_incorrect.f1,
            "{policy}: delta is not F1+ - F1-"
        );
        if let Some(four) = want.get("four_way_sizes") {
            let subsets = cell.four_way.subsets();
            let got: Vec<usize> = subsets.iter().map(|s| s.n).collect();
            let w: Vec<usize> = four.as_array().unwrap().iter().map(|v| v.as_u64().unwrap() as usize).collect();
            ensure!(got == w, "four-way sizes {got:?}, want {w:?}");
            for (i, s) in subsets.iter().enumerate() {
                ensure!(close(s.f1, frac(&want["four_way_f1"][i])), "four-way F1 #{i} {}", s.f1);
                ensure!(
                    close(s.accuracy.unwrap(), frac(&want["four_way_accuracy"][i])),
                    "four-way accuracy #{i} {:?}",
                    s.accuracy
                );
            }
        }
        ensure!(
            close(cell.overconfidence.unwrap(), frac(&expected["cot"]["overconfidence"])),
            "{policy}: overconfidence {:?}",
            cell.overconfidence
        );

        let sr = report
            .cell("judge-model", "arith", Strategy::SelfReference)
            .ok_or("no self-ref cell in the report")?;
        let want = &expected["self-ref"]["exclude"];
        check_counts(&sr.judgment.counts, &want["counts"]).map_err(|e| format!("self-ref: {e}"))?;
        ensure!(close(sr.judgment.f1, frac(&want["f1"])), "self-ref F1 {}", sr.judgment.f1);
        ensure!(close(sr.two_way.judge_correct.f1, frac(&want["f1_plus"])), "self-ref F1+");
        ensure!(close(sr.two_way.judge_incorrect.f1, frac(&want["f1_minus"])), "self-ref F1-");
    }
    Ok(format!("40 judgments, both policies match hand values, {:.2?}, no network", run.elapsed))
}

// ---------------------------------------------------------------------------
// 7. self-reference wiring

fn criterion_7(run: &MockRun) -> Outcome {
    let layout = RunLayout::new(run.run_dir());
    let own: HashMap<String, GenerationRecord> = read_jsonl::<GenerationRecord>(&layout.generation("arith", "judge-model"))
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|r| (r.item_id.clone(), r))
        .collect();
    let prompts: Vec<PromptLog> = read_jsonl(&layout.judgment_prompts("arith", Strategy::SelfReference, "judge-model"))
        .map_err(|e| e.to_string())?;
    ensure!(prompts.len() == 40, "{} self-ref prompts persisted", prompts.len());
    for p in &prompts {
        let block = format!(
            "[The Start of Reference Answer]\n{}\n[The End of Reference Answer]",
            own[&p.item_id].raw_text
        );
        ensure!(p.text.contains(&block), "prompt for {}/{} lacks the judge's own answer", p.agent_model_id, p.item_id);
    }

    // in process: one judge generation missing, no request made
    let items: Vec<Item> = judgecorr::corpus::load_dataset(
        &layout.items("arith"),
        &TaskSpec::new("arith", TaskKind::NumericQA),
    )
    .map_err(|e| e.to_string())?;
    let jitems: Vec<JudgmentItem> = items
        .iter()
        .map(|i| JudgmentItem {
            task_id: "arith".into(),
            item_id: i.item_id.clone(),
            question: i.question.clone(),
            agent_model_id: "agent-one".into(),
            agent_answer_text: "The answer is 1.".into(),
            y_star: false,
        })
        .collect();
    let mut partial = own.clone();
    partial.remove("q07");
    let judge = Client::new(ModelEndpoint::new("judge-model"), Arc::new(MockBackend::new()));
    let err = run_judgment_stage(&judge, &jitems, &items, Strategy::SelfReference, &partial, &TemplateRegistry::builtin(), &[]);
    ensure!(
        matches!(err, Err(PipelineError::MissingSelfReference(ref id)) if id == "q07"),
        "expected MissingSelfReference(q07), got {:?}",
        err.map(|o| o.records.len())
    );
    ensure!(judge.stats().provider_calls == 0, "requests were made before failing");

    // through the binary: drop one line of the judge's generation file
    let broken = run.root.join("broken");
    copy_dir(&run.run_dir(), &broken);
    let gen_path = RunLayout::new(&broken).generation("arith", "judge-model");
    let kept: Vec<String> = fs::read_to_string(&gen_path)
        .unwrap()
        .lines()
        .filter(|l| !l.contains("\"item_id\":\"q07\""))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&gen_path, kept.concat()).unwrap();
    let out = harness(&[
        "--cache", run.root.join("cold-cache").to_str().unwrap(),
        "judge", "--config", run.config.to_str().unwrap(), "--judge", "judge-model",
        "--agents", "agent-one,agent-two", "--strategy", "self-ref", "--out", broken.to_str().unwrap(),
    ]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    ensure!(!out.status.success(), "judge succeeded without a self reference");
    ensure!(stderr.contains("no own generation for item `q07`"), "unexpected error: {stderr}");
    Ok("40/40 prompts carry the judge's answer; missing reference fails before any call".into())
}

// ---------------------------------------------------------------------------
// 8. determinism

fn collect_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap());
    }
    out
}

fn criterion_8(run: &MockRun) -> Outcome {
    let r = run.run_dir();
    let r = r.to_str().unwrap();
    let mut rounds = Vec::new();
    for round in 0..2 {
        let base = run.root.join(format!("det-{round}"));
        let report = base.join("report.json");
        harness_ok(&["analyze", "--run", r, "--invalid-policy", "exclude", "--out", report.to_str().unwrap()])?;
        let out = base.join("out");
        for emit in ["tables", "heatmaps", "scatter"] {
            harness_ok(&["report", "--report", report.to_str().unwrap(), "--format", "csv", "--emit", emit, "--out", out.to_str().unwrap()])?;
        }
        let mut files = collect_files(&out);
        files.insert("report.json".into(), fs::read(&report).unwrap());
        rounds.push(files);
    }
    ensure!(rounds[0].keys().eq(rounds[1].keys()), "different file sets");
    for (name, bytes) in &rounds[0] {
        ensure!(&rounds[1][name] == bytes, "{name} differs between runs");
    }
    let csv = rounds[0].keys().filter(|k| k.ends_with(".csv")).count();
    let svg = rounds[0].keys().filter(|k| k.ends_with(".svg")).count();
    ensure!(csv > 0 && svg > 0, "expected CSV and SVG outputs, got {:?}", rounds[0].keys());

    harness_ok(&[
        "--cache", run.cache.to_str().unwrap(),
        "judge", "--config", run.config.to_str().unwrap(), "--judge", "judge-model",
        "--agents", "agent-one,agent-two", "--strategy", "cot", "--out", r,
    ])?;
    let manifest: RunManifest = read_json(&RunLayout::new(run.run_dir()).judgment_manifest("arith", Strategy::CoT, "judge-model"))
        .map_err(|e| e.to_string())?;
    ensure!(manifest.cache_stats.provider_calls == 0, "warm judge made {} provider calls", manifest.cache_stats.provider_calls);
    ensure!(manifest.cache_stats.cache_hits == 40, "warm judge had {} cache hits", manifest.cache_stats.cache_hits);
    Ok(format!("report.json + {csv} CSV + {svg} SVG byte-identical; warm judge: 0 provider calls"))
}

// ---------------------------------------------------------------------------
// 9. table shape

fn criterion_9(run: &MockRun) -> Outcome {
    let mut report = load_report(&run.root.join("report-exclude.json"))?;
    report.cells.retain(|c| c.strategy == Strategy::CoT);
    let cell = &mut report.cells[0];
    cell.two_way.judge_correct.f1 = 0.9685;
    cell.two_way.judge_incorrect.f1 = 0.0;
    cell.two_way.delta = 0.9685;
    let csv = String::from_utf8(emit_judge_table(&report, Strategy::CoT, TableFormat::Csv).map_err(|e| e.to_string())?).unwrap();
    let want = "Judge model,arith ✓,arith ✗,arith Δ\njudge-model,96.85,0.00,96.85\n";
    ensure!(csv == want, "got {csv:?}");
    let md = String::from_utf8(emit_judge_table(&report, Strategy::CoT, TableFormat::Markdown).map_err(|e| e.to_string())?).unwrap();
    ensure!(md.contains("| judge-model | 96.85 | 0.00 | 96.85 |"), "markdown: {md}");
    Ok("✓ 96.85, ✗ 0.00, Δ 96.85".into())
}

// ---------------------------------------------------------------------------

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "partial-correlation oracle", criterion_1()),
        (2, "formula identities", criterion_2()),
        (3, "degenerate reproduction", criterion_3()),
        (4, "strength classification", criterion_4()),
        (5, "parsing suite", criterion_5()),
    ];
    match mock_run() {
        Ok(run) => {
            results.push((6, "end-to-end mock run", criterion_6(&run)));
            results.push((7, "self-reference wiring", criterion_7(&run)));
            results.push((8, "determinism", criterion_8(&run)));
            results.push((9, "table shape", criterion_9(&run)));
        }
        Err(e) => {
            for (n, name) in [(6, "end-to-end mock run"), (7, "self-reference wiring"), (8, "determinism"), (9, "table shape")] {
                results.push((n, name, Err(format!("mock run failed: {e}"))));
            }
        }
    }
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {why}");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
