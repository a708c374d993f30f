//! Two-stage experiment: answer generation, judgment-set construction, and
//! judging under a strategy.
//!
//! Provider failures never abort a stage. They become records with `error`
//! set, which a resumed run retries while keeping every successful record.
//! Output order is always (model, item) in input order, independent of the
//! order in which requests complete.

mod config;
mod store;

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use config::{ConfigError, RunConfig, TaskEntry};
pub use store::{read_json, read_jsonl, read_jsonl_or_empty, write_json, write_jsonl, RunLayout, StoreError};

use crate::corpus::{Item, TaskKind};
use crate::extraction::{extract_answer, extract_verdict, ParseOutcome, VerdictFamily};
use crate::metrics::{Graded, Judged};
use crate::prompts::{PromptError, RenderedPrompt, Strategy, TemplateRegistry};
use crate::providers::{CallStats, Client};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("no models given")]
    NoModels,
    #[error("items span several tasks ({0} and {1})")]
    MixedTasks(String, String),
    #[error("no item `{0}` in the evaluation set")]
    MissingItem(String),
    #[error("judge has no own generation for item `{0}` to use as reference")]
    MissingSelfReference(String),
    #[error("judgment label for agent `{agent}` on `{item}` disagrees with its generation record")]
    LabelMismatch { agent: String, item: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub model_id: String,
    pub task_id: String,
    pub item_id: String,
    pub raw_text: String,
    pub parsed: ParseOutcome,
    /// Parsed answer equals gold; false whenever the parse is invalid.
    pub correct: bool,
    /// Provider failure; the record is retried on resume.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GenerationRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

impl Graded for GenerationRecord {
    fn is_correct(&self) -> bool {
        self.correct
    }
}

/// One agent answer to be judged, with its true correctness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentItem {
    pub task_id: String,
    pub item_id: String,
    pub question: String,
    pub agent_model_id: String,
    pub agent_answer_text: String,
    pub y_star: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub judge_model_id: String,
    pub agent_model_id: String,
    pub task_id: String,
    pub item_id: String,
    pub strategy: Strategy,
    pub raw_text: String,
    pub parsed: ParseOutcome,
    pub y_star: bool,
    pub y_pred: Option<bool>,
    /// Whether the verdict matches `y_star`; absent when the verdict is unparseable.
    pub j_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl JudgmentRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

impl Judged for JudgmentRecord {
    fn item_id(&self) -> &str {
        &self.item_id
    }
    fn agent_id(&self) -> &str {
        &self.agent_model_id
    }
    fn label(&self) -> bool {
        self.y_star
    }
    fn prediction(&self) -> Option<bool> {
        self.y_pred
    }
}

/// The exact prompt sent for one judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLog {
    pub judge_model_id: String,
    pub agent_model_id: String,
    pub item_id: String,
    pub strategy: Strategy,
    pub template_id: String,
    pub prompt_digest: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentStageOutput {
    pub records: Vec<JudgmentRecord>,
    pub prompts: Vec<PromptLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Generation,
    Judgment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    /// Finished with failed records; rerun with resume.
    Incomplete,
}

/// Everything needed to re-execute a stage against the cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub stage: StageKind,
    pub seed: u64,
    pub tasks: Vec<String>,
    pub agents: Vec<String>,
    pub judges: Vec<String>,
    pub strategy: Option<Strategy>,
    pub template_digests: std::collections::BTreeMap<String, String>,
    /// How rendered prompts are delivered to the endpoint.
    pub prompt_delivery: String,
    pub max_tokens: std::collections::BTreeMap<String, u32>,
    /// Models run at nonzero temperature.
    pub non_reproducible: Vec<String>,
    pub cache_dir: Option<String>,
    pub cache_stats: CallStats,
    pub failures: usize,
    pub status: RunStatus,
    pub started_at: u64,
    pub finished_at: Option<u64>,
}

pub const PROMPT_DELIVERY: &str = "single user message";

fn single_task(items: &[Item]) -> Result<(), PipelineError> {
    if let Some(first) = items.first() {
        if let Some(other) = items.iter().find(|i| i.task_id != first.task_id) {
            return Err(PipelineError::MixedTasks(first.task_id.clone(), other.task_id.clone()));
        }
    }
    Ok(())
}

/// Runs `f` over `inputs` with at most `max_in_flight` concurrent calls,
/// returning results in input order.
fn fan_out<T: Sync, R: Send>(inputs: &[T], max_in_flight: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = max_in_flight.max(1).min(inputs.len());
    if workers <= 1 {
        return inputs.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..inputs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= inputs.len() {
                    break;
                }
                let r = f(&inputs[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

/// Parses a raw generation and compares it against gold.
pub fn grade(item: &Item, raw_text: &str) -> (ParseOutcome, bool) {
    let parsed = extract_answer(raw_text, item.kind());
    let correct = parsed.answer().is_some_and(|a| *a == item.gold);
    (parsed, correct)
}

pub fn generation_tag(item_id: &str) -> String {
    format!("generation/{item_id}")
}

pub fn judgment_tag(strategy: Strategy, agent_model_id: &str, item_id: &str) -> String {
    format!("judgment/{}/{agent_model_id}/{item_id}", strategy.slug())
}

/// Generates one answer per (model, item). Models listed twice (for example
/// as both agent and judge) generate once. Records from `previous` without
/// an error are reused as-is.
pub fn run_generation_stage(
    models: &[Client],
    items: &[Item],
    registry: &TemplateRegistry,
    previous: &[GenerationRecord],
) -> Result<Vec<GenerationRecord>, PipelineError> {
    if models.is_empty() {
        return Err(PipelineError::NoModels);
    }
    single_task(items)?;
    let prompts = items
        .iter()
        .map(|item| Ok(registry.render_generation_prompt(item)?.with_tag(generation_tag(&item.item_id))))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let done: HashMap<(&str, &str), &GenerationRecord> = previous
        .iter()
        .filter(|r| !r.failed())
        .map(|r| ((r.model_id.as_str(), r.item_id.as_str()), r))
        .collect();

    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(models.len() * items.len());
    for client in models {
        if !seen.insert(client.model_id().to_string()) {
            continue;
        }
        let work: Vec<(&Item, &RenderedPrompt)> = items.iter().zip(&prompts).collect();
        let out = fan_out(&work, client.endpoint().max_in_flight, |(item, prompt)| {
            if let Some(prev) = done.get(&(client.model_id(), item.item_id.as_str())) {
                return (*prev).clone();
            }
            match client.complete(prompt) {
                Ok(result) => {
                    let (parsed, correct) = grade(item, &result.text);
                    GenerationRecord {
                        model_id: client.model_id().to_string(),
                        task_id: item.task_id.clone(),
                        item_id: item.item_id.clone(),
                        raw_text: result.text,
                        parsed,
                        correct,
                        error: None,
                    }
                }
                Err(e) => GenerationRecord {
                    model_id: client.model_id().to_string(),
                    task_id: item.task_id.clone(),
                    item_id: item.item_id.clone(),
                    raw_text: String::new(),
                    parsed: ParseOutcome::failed(crate::extraction::FailureReason::NoMarker),
                    correct: false,
                    error: Some(e.to_string()),
                },
            }
        });
        records.extend(out);
    }
    Ok(records)
}

/// One judgment item per agent record, labeled with the record's correctness.
pub fn build_judgment_dataset(
    agent_records: &[GenerationRecord],
    items: &[Item],
) -> Result<Vec<JudgmentItem>, PipelineError> {
    let by_id: HashMap<&str, &Item> = items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    agent_records
        .iter()
        .map(|r| {
            let item = by_id
                .get(r.item_id.as_str())
                .ok_or_else(|| PipelineError::MissingItem(r.item_id.clone()))?;
            Ok(JudgmentItem {
                task_id: item.task_id.clone(),
                item_id: item.item_id.clone(),
                question: item.question.clone(),
                agent_model_id: r.model_id.clone(),
                agent_answer_text: r.raw_text.clone(),
                y_star: r.correct,
            })
        })
        .collect()
}

/// Judges every item with one judge.
///
/// Under [`Strategy::SelfReference`] the judge's own raw generation for the
/// item is inserted as the reference answer; every item must have one
/// before any request is made.
pub fn run_judgment_stage(
    judge: &Client,
    jitems: &[JudgmentItem],
    items: &[Item],
    strategy: Strategy,
    judge_generation: &HashMap<String, GenerationRecord>,
    registry: &TemplateRegistry,
    previous: &[JudgmentRecord],
) -> Result<JudgmentStageOutput, PipelineError> {
    let by_id: HashMap<&str, &Item> = items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let mut prompts = Vec::with_capacity(jitems.len());
    for ji in jitems {
        let item = by_id
            .get(ji.item_id.as_str())
            .ok_or_else(|| PipelineError::MissingItem(ji.item_id.clone()))?;
        let reference = match strategy {
            Strategy::CoT => None,
            Strategy::SelfReference => {
                let own = judge_generation
                    .get(&ji.item_id)
                    .filter(|r| !r.failed() && !r.raw_text.trim().is_empty())
                    .ok_or_else(|| PipelineError::MissingSelfReference(ji.item_id.clone()))?;
                Some(own.raw_text.as_str())
            }
        };
        let prompt = registry
            .render_judgment_prompt(item, &ji.agent_answer_text, strategy, reference)?
            .with_tag(judgment_tag(strategy, &ji.agent_model_id, &ji.item_id));
        prompts.push((ji, *item, prompt));
    }

    let done: HashMap<(&str, &str), &JudgmentRecord> = previous
        .iter()
        .filter(|r| !r.failed() && r.judge_model_id == judge.model_id() && r.strategy == strategy)
        .map(|r| ((r.agent_model_id.as_str(), r.item_id.as_str()), r))
        .collect();

    let records = fan_out(&prompts, judge.endpoint().max_in_flight, |(ji, item, prompt)| {
        if let Some(prev) = done.get(&(ji.agent_model_id.as_str(), ji.item_id.as_str())) {
            if prev.y_star == ji.y_star {
                return (*prev).clone();
            }
        }
        let family = VerdictFamily::for_judging(item.kind());
        let (raw_text, error) = match judge.complete(prompt) {
            Ok(result) => (result.text, None),
            Err(e) => (String::new(), Some(e.to_string())),
        };
        let parsed = if error.is_some() {
            ParseOutcome::failed(crate::extraction::FailureReason::NoMarker)
        } else {
            extract_verdict(&raw_text, family)
        };
        let y_pred = parsed.judgment();
        JudgmentRecord {
            judge_model_id: judge.model_id().to_string(),
            agent_model_id: ji.agent_model_id.clone(),
            task_id: ji.task_id.clone(),
            item_id: ji.item_id.clone(),
            strategy,
            raw_text,
            parsed,
            y_star: ji.y_star,
            y_pred,
            j_correct: y_pred.map(|p| p == ji.y_star),
            error,
        }
    });

    let prompts = prompts
        .into_iter()
        .map(|(ji, _, p)| PromptLog {
            judge_model_id: judge.model_id().to_string(),
            agent_model_id: ji.agent_model_id.clone(),
            item_id: ji.item_id.clone(),
            strategy,
            template_id: p.template_id.clone(),
            prompt_digest: p.digest(),
            text: p.text,
        })
        .collect();
    Ok(JudgmentStageOutput { records, prompts })
}

/// Checks every judgment label against the agent generation it came from.
pub fn verify_labels(judgments: &[JudgmentRecord], agent_records: &[GenerationRecord]) -> Result<(), PipelineError> {
    let truth: HashMap<(&str, &str), bool> = agent_records
        .iter()
        .map(|r| ((r.model_id.as_str(), r.item_id.as_str()), r.correct))
        .collect();
    for j in judgments {
        match truth.get(&(j.agent_model_id.as_str(), j.item_id.as_str())) {
            Some(&c) if c == j.y_star => {}
            _ => {
                return Err(PipelineError::LabelMismatch {
                    agent: j.agent_model_id.clone(),
                    item: j.item_id.clone(),
                })
            }
        }
    }
    Ok(())
}

/// Judge kinds never interleave two agents' answers in one pointwise prompt.
pub fn is_pointwise(kind: TaskKind) -> bool {
    kind != TaskKind::PairwiseVerdict
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CanonicalAnswer, Verdict};
    use crate::providers::{MockBackend, ModelEndpoint};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    const APPLES: &str = "Leo starts with 20 apples. He gives half to his sister. Then, he buys a new bag of 12 apples. After that, he uses 5 apples to bake a pie. How many apples does Leo have left?";

    fn item(id: &str, gold: i64) -> Item {
        Item {
            item_id: id.into(),
            task_id: "gsm8k".into(),
            question: format!("question {id}"),
            options: vec![],
            response_a: None,
            response_b: None,
            gold: CanonicalAnswer::numeric(gold),
            meta: BTreeMap::new(),
        }
    }

    fn client(model: &str, mock: MockBackend) -> Client {
        Client::new(ModelEndpoint::new(model), Arc::new(mock))
    }

    #[test]
    fn accuracy_numerator_from_mock() {
        let items: Vec<Item> = (0..4).map(|i| item(&format!("q{i}"), 10 + i)).collect();
        let mut mock = MockBackend::new();
        for (i, it) in items.iter().enumerate() {
            let answer = if i == 3 { 0 } else { 10 + i as i64 };
            mock.respond_to_tag("m", &generation_tag(&it.item_id), &format!("Reasoning. The answer is {answer}."));
        }
        let reg = TemplateRegistry::builtin();
        let recs = run_generation_stage(&[client("m", mock)], &items, &reg, &[]).unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs.iter().filter(|r| r.correct).count(), 3);
        assert_eq!(crate::metrics::generation_accuracy(&recs).unwrap(), 0.75);
        let ids: Vec<_> = recs.iter().map(|r| r.item_id.as_str()).collect();
        assert_eq!(ids, ["q0", "q1", "q2", "q3"]);
    }

    #[test]
    fn overlapping_roster_generates_once() {
        let items = vec![item("q0", 1)];
        let mut mock = MockBackend::new();
        mock.respond_to_tag("shared", "generation/q0", "The answer is 1.");
        let shared = client("shared", mock);
        let reg = TemplateRegistry::builtin();
        let recs = run_generation_stage(&[shared.clone(), shared.clone()], &items, &reg, &[]).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(shared.stats().provider_calls, 1);
    }

    #[test]
    fn provider_failures_become_records_and_resume_retries_only_them() {
        let items = vec![item("q0", 1), item("q1", 2)];
        let mut mock = MockBackend::new();
        mock.respond_to_tag("m", "generation/q0", "The answer is 1.");
        let reg = TemplateRegistry::builtin();
        let first = run_generation_stage(&[client("m", mock)], &items, &reg, &[]).unwrap();
        assert!(first[0].error.is_none());
        assert!(first[1].error.as_deref().unwrap().contains("no scripted response"));
        assert!(!first[1].correct);

        let mut fixed = MockBackend::new();
        fixed.respond_to_tag("m", "generation/q1", "The answer is 2.");
        let c = client("m", fixed);
        let second = run_generation_stage(&[c.clone()], &items, &reg, &first).unwrap();
        assert_eq!(c.stats().provider_calls, 1);
        assert!(second.iter().all(|r| r.correct && r.error.is_none()));
    }

    #[test]
    fn mixed_tasks_and_empty_roster_rejected() {
        let mut other = item("x", 1);
        other.task_id = "other".into();
        let reg = TemplateRegistry::builtin();
        let mock = client("m", MockBackend::new());
        assert!(matches!(
            run_generation_stage(&[mock.clone()], &[item("a", 1), other], &reg, &[]),
            Err(PipelineError::MixedTasks(..))
        ));
        assert!(matches!(run_generation_stage(&[], &[item("a", 1)], &reg, &[]), Err(PipelineError::NoModels)));
    }

    fn gen_record(model: &str, item_id: &str, text: &str, correct: bool) -> GenerationRecord {
        GenerationRecord {
            model_id: model.into(),
            task_id: "gsm8k".into(),
            item_id: item_id.into(),
            raw_text: text.into(),
            parsed: extract_answer(text, TaskKind::NumericQA),
            correct,
            error: None,
        }
    }

    #[test]
    fn judgment_dataset_triples_with_three_agents() {
        let items: Vec<Item> = (0..100).map(|i| item(&format!("q{i}"), i)).collect();
        let recs: Vec<GenerationRecord> = ["a1", "a2", "a3"]
            .iter()
            .flat_map(|a| items.iter().map(move |it| gen_record(a, &it.item_id, "The answer is 0.", false)))
            .collect();
        assert_eq!(build_judgment_dataset(&recs, &items).unwrap().len(), 300);
        assert!(build_judgment_dataset(&[], &items).unwrap().is_empty());
        let unknown = gen_record("a1", "nope", "", false);
        assert!(matches!(build_judgment_dataset(&[unknown], &items), Err(PipelineError::MissingItem(id)) if id == "nope"));
    }

    #[test]
    fn invalid_agent_parse_gives_negative_label() {
        let it = item("q0", 5);
        let (parsed, correct) = grade(&it, "I am not sure.");
        assert!(!parsed.valid && !correct);
        let rec = GenerationRecord {
            parsed,
            correct,
            ..gen_record("a", "q0", "I am not sure.", false)
        };
        assert!(!build_judgment_dataset(&[rec], &[it]).unwrap()[0].y_star);
    }

    #[test]
    fn worked_example_self_reference_judgment() {
        let mut it = item("g1", 17);
        it.question = APPLES.into();
        let judge_text = "Let's think step by step.\nLeo begins with 20 apples.\n...\nThe answer is 17.\n";
        let agent_text = "Let's think step by step.\nLeo starts with 20 apples.\n...\nThe answer is 11.\n";
        let (_, agent_correct) = grade(&it, agent_text);
        let agent = gen_record("agent", "g1", agent_text, agent_correct);
        let jitems = build_judgment_dataset(&[agent], std::slice::from_ref(&it)).unwrap();
        assert!(!jitems[0].y_star);

        let mut mock = MockBackend::new();
        mock.respond_to_tag(
            "judge",
            &judgment_tag(Strategy::SelfReference, "agent", "g1"),
            "The assistant's answer of 11 differs from the reference answer of 17. [[Incorrect]]",
        );
        let own: HashMap<String, GenerationRecord> =
            [("g1".to_string(), gen_record("judge", "g1", judge_text, true))].into_iter().collect();
        let out = run_judgment_stage(
            &client("judge", mock),
            &jitems,
            std::slice::from_ref(&it),
            Strategy::SelfReference,
            &own,
            &TemplateRegistry::builtin(),
            &[],
        )
        .unwrap();
        let r = &out.records[0];
        assert_eq!(r.y_pred, Some(false));
        assert_eq!(r.j_correct, Some(true));
        assert!(out.prompts[0]
            .text
            .contains(&format!("[The Start of Reference Answer]\n{judge_text}\n[The End of Reference Answer]")));
    }

    #[test]
    fn missing_self_reference_fails_before_any_call() {
        let it = item("g1", 17);
        let jitems = build_judgment_dataset(&[gen_record("agent", "g1", "The answer is 1.", false)], std::slice::from_ref(&it)).unwrap();
        let judge = client("judge", MockBackend::new());
        let err = run_judgment_stage(
            &judge,
            &jitems,
            &[it],
            Strategy::SelfReference,
            &HashMap::new(),
            &TemplateRegistry::builtin(),
            &[],
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::MissingSelfReference(id) if id == "g1"));
        assert_eq!(judge.stats().provider_calls, 0);
    }

    #[test]
    fn missing_verdict_is_flagged_invalid() {
        let it = item("g1", 17);
        let jitems = build_judgment_dataset(&[gen_record("agent", "g1", "The answer is 17.", true)], std::slice::from_ref(&it)).unwrap();
        let mut mock = MockBackend::new();
        mock.respond_to_tag("judge", &judgment_tag(Strategy::CoT, "agent", "g1"), "Looks fine to me.");
        let out = run_judgment_stage(
            &client("judge", mock),
            &jitems,
            &[it],
            Strategy::CoT,
            &HashMap::new(),
            &TemplateRegistry::builtin(),
            &[],
        )
        .unwrap();
        let r = &out.records[0];
        assert!(!r.parsed.valid);
        assert_eq!(r.y_pred, None);
        assert_eq!(r.j_correct, None);
        assert!(r.error.is_none());
    }

    #[test]
    fn pairwise_agent_verdict_graded_against_human_label() {
        let it = Item {
            item_id: "p1".into(),
            task_id: "arena".into(),
            question: "q".into(),
            options: vec![],
            response_a: Some("a".into()),
            response_b: Some("b".into()),
            gold: CanonicalAnswer::Verdict(Verdict::C),
            meta: BTreeMap::new(),
        };
        assert!(grade(&it, "Both equal. [[C]]").1);
        assert!(!grade(&it, "[[A]]").1);
        assert!(!grade(&it, "no verdict").1);
        let mut mock = MockBackend::new();
        mock.respond_to_tag("judge", &judgment_tag(Strategy::CoT, "agent", "p1"), "**[[Correct]]**");
        let agent = GenerationRecord {
            model_id: "agent".into(),
            task_id: "arena".into(),
            item_id: "p1".into(),
            raw_text: "[[C]]".into(),
            parsed: extract_answer("[[C]]", TaskKind::PairwiseVerdict),
            correct: true,
            error: None,
        };
        let jitems = build_judgment_dataset(&[agent], std::slice::from_ref(&it)).unwrap();
        let out = run_judgment_stage(
            &client("judge", mock),
            &jitems,
            &[it],
            Strategy::CoT,
            &HashMap::new(),
            &TemplateRegistry::builtin(),
            &[],
        )
        .unwrap();
        assert_eq!(out.records[0].y_pred, Some(true));
        assert_eq!(out.prompts[0].template_id, "judgment-meta-cot");
    }

    #[test]
    fn fan_out_preserves_order() {
        let inputs: Vec<usize> = (0..200).collect();
        let out = fan_out(&inputs, 8, |i| {
            std::thread::sleep(std::time::Duration::from_micros((200 - *i as u64) * 5));
            i * 2
        });
        assert_eq!(out, inputs.iter().map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn label_verification() {
        let agent = vec![gen_record("a", "q0", "The answer is 1.", true)];
        let mut j = JudgmentRecord {
            judge_model_id: "j".into(),
            agent_model_id: "a".into(),
            task_id: "gsm8k".into(),
            item_id: "q0".into(),
            strategy: Strategy::CoT,
            raw_text: "[[Correct]]".into(),
            parsed: extract_verdict("[[Correct]]", VerdictFamily::Pointwise),
            y_star: true,
            y_pred: Some(true),
            j_correct: Some(true),
            error: None,
        };
        assert!(verify_labels(std::slice::from_ref(&j), &agent).is_ok());
        j.y_star = false;
        assert!(matches!(verify_labels(&[j], &agent), Err(PipelineError::LabelMismatch { .. })));
    }
}
