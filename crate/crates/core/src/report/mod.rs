//! Per-cell analysis of a run and emission of tables, heatmaps and scatter
//! plots.
//!
//! A cell is one (judge, task, strategy) combination. Judgments pooled over
//! all agents in a cell feed every metric.

mod emit;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use emit::{
    emit_correlation_table, emit_heatmap_accuracy_matrix, emit_heatmap_matrix, emit_judge_table,
    emit_metrics_table, emit_overconfidence_table, emit_scatter, Scatter, TableFormat, HEATMAP_COLUMNS,
};

use crate::corpus::{load_dataset, CanonicalAnswer, CorpusError, TaskKind, Verdict};
use crate::metrics::{
    classify_strength, generation_accuracy, judge_prf1, overconfidence, partial_correlation_from_series,
    pearson_triple, prf1_from_counts, split_four_way, split_two_way, weighted_mean, ConfusionCounts,
    CorrelationResult, InvalidPolicy, MetricsError, PearsonTriple, Prf1, Strength, TripletSeries,
};
use crate::pipeline::{
    read_json, read_jsonl, read_jsonl_or_empty, verify_labels, GenerationRecord, JudgmentRecord, PipelineError,
    RunConfig, RunLayout, StoreError,
};
use crate::prompts::Strategy;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("report is incomplete: no cell for {0}")]
    IncompleteReport(String),
    #[error("no generation records of `{model}` for task `{task}`")]
    MissingGeneration { model: String, task: String },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// F1 and judgment accuracy over one subset of a cell's judgments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    /// Judgments in the subset, scored or not.
    pub n: usize,
    pub f1: f64,
    pub f1_undefined: bool,
    /// Share of scored judgments whose verdict matched the label.
    pub accuracy: Option<f64>,
    pub counts: ConfusionCounts,
}

impl SubsetScore {
    fn of(records: &[&JudgmentRecord], policy: InvalidPolicy) -> Self {
        let prf = match judge_prf1(records.iter().copied(), policy) {
            Ok(p) => p,
            Err(_) => prf1_from_counts(ConfusionCounts::default()),
        };
        let c = prf.counts;
        let scored = c.tp + c.fp + c.fn_ + c.tn;
        SubsetScore {
            n: records.len(),
            f1: prf.f1,
            f1_undefined: prf.f1_undefined,
            accuracy: (scored > 0).then(|| (c.tp + c.tn) as f64 / scored as f64),
            counts: c,
        }
    }

    /// No judgment in the subset could be scored.
    pub fn is_empty(&self) -> bool {
        let c = &self.counts;
        c.tp + c.fp + c.fn_ + c.tn == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoWayReport {
    /// D_J+: the judge answered the item correctly itself.
    pub judge_correct: SubsetScore,
    /// D_J-.
    pub judge_incorrect: SubsetScore,
    /// `judge_correct.f1 - judge_incorrect.f1`.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourWayReport {
    pub judge_correct_agent_correct: SubsetScore,
    pub judge_correct_agent_incorrect: SubsetScore,
    pub judge_incorrect_agent_correct: SubsetScore,
    pub judge_incorrect_agent_incorrect: SubsetScore,
}

impl FourWayReport {
    pub fn subsets(&self) -> [&SubsetScore; 4] {
        [
            &self.judge_correct_agent_correct,
            &self.judge_correct_agent_incorrect,
            &self.judge_incorrect_agent_correct,
            &self.judge_incorrect_agent_incorrect,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub judge: String,
    pub task: String,
    pub strategy: Strategy,
    pub agents: Vec<String>,
    /// The judge's own answer-generation accuracy on the task.
    pub generation_accuracy: f64,
    pub generation_n: usize,
    pub generation_failures: usize,
    /// Judgment records in the cell, including failed and unparseable ones.
    pub judgments: usize,
    /// Provider failures; left out of every metric.
    pub failures: usize,
    /// Verdicts that could not be parsed.
    pub invalid: usize,
    pub judgment: Prf1,
    pub two_way: TwoWayReport,
    pub four_way: FourWayReport,
    pub overconfidence: Option<f64>,
    /// Parsed verdicts behind `overconfidence`.
    pub overconfidence_n: usize,
    pub pearson: Option<PearsonTriple>,
    pub partial_correlation: Option<CorrelationResult>,
    pub strength: Option<Strength>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedOverconfidence {
    pub judge: String,
    pub strategy: Strategy,
    pub value: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub run_id: String,
    pub invalid_policy: InvalidPolicy,
    pub exclude_ties: bool,
    /// Judges in roster order.
    pub judges: Vec<String>,
    /// Tasks in configuration order.
    pub tasks: Vec<String>,
    pub cells: Vec<CellReport>,
    pub overconfidence_weighted: Vec<WeightedOverconfidence>,
}

impl AnalysisReport {
    pub fn cell(&self, judge: &str, task: &str, strategy: Strategy) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.judge == judge && c.task == task && c.strategy == strategy)
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        [Strategy::CoT, Strategy::SelfReference]
            .into_iter()
            .filter(|s| self.cells.iter().any(|c| c.strategy == *s))
            .collect()
    }

    /// Judges with at least one cell under `strategy`, in roster order.
    pub fn judges_for(&self, strategy: Strategy) -> Vec<&str> {
        self.judges
            .iter()
            .filter(|j| self.cells.iter().any(|c| &c.judge == *j && c.strategy == strategy))
            .map(String::as_str)
            .collect()
    }

    /// Tasks with at least one cell under `strategy`, in configuration order.
    pub fn tasks_for(&self, strategy: Strategy) -> Vec<&str> {
        self.tasks
            .iter()
            .filter(|t| self.cells.iter().any(|c| &c.task == *t && c.strategy == strategy))
            .map(String::as_str)
            .collect()
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serializes");
        bytes.push(b'\n');
        bytes
    }
}

/// Everything the analysis reads, already loaded.
#[derive(Debug, Clone, Default)]
pub struct AnalysisInput {
    pub run_id: String,
    /// Determines judge row order; judges absent from it follow, sorted.
    pub roster: Vec<String>,
    /// Determines task order; unlisted tasks follow, sorted.
    pub tasks: Vec<String>,
    pub generations: Vec<GenerationRecord>,
    pub judgments: Vec<JudgmentRecord>,
    /// (task, item) pairs left out of every metric.
    pub excluded_items: HashSet<(String, String)>,
}

fn ordered(preferred: &[String], present: impl IntoIterator<Item = String>) -> Vec<String> {
    let present: HashSet<String> = present.into_iter().collect();
    let mut out: Vec<String> = preferred.iter().filter(|x| present.contains(*x)).cloned().collect();
    let mut rest: Vec<String> = present.into_iter().filter(|x| !preferred.contains(x)).collect();
    rest.sort();
    out.extend(rest);
    out
}

fn strategy_rank(s: Strategy) -> u8 {
    match s {
        Strategy::CoT => 0,
        Strategy::SelfReference => 1,
    }
}

pub fn analyze(input: &AnalysisInput, policy: InvalidPolicy, exclude_ties: bool) -> Result<AnalysisReport, ReportError> {
    let keep = |task: &str, item: &str| !input.excluded_items.contains(&(task.to_string(), item.to_string()));

    // generation records by (task, model)
    let mut gens: HashMap<(&str, &str), Vec<&GenerationRecord>> = HashMap::new();
    for g in input.generations.iter().filter(|g| keep(&g.task_id, &g.item_id)) {
        gens.entry((g.task_id.as_str(), g.model_id.as_str())).or_default().push(g);
    }

    let mut grouped: BTreeMap<(String, String, u8), Vec<JudgmentRecord>> = BTreeMap::new();
    for j in input.judgments.iter().filter(|j| keep(&j.task_id, &j.item_id)) {
        grouped
            .entry((j.judge_model_id.clone(), j.task_id.clone(), strategy_rank(j.strategy)))
            .or_default()
            .push(j.clone());
    }

    let judges = ordered(&input.roster, grouped.keys().map(|k| k.0.clone()));
    let tasks = ordered(&input.tasks, grouped.keys().map(|k| k.1.clone()));

    let mut cells = Vec::new();
    for judge in &judges {
        for task in &tasks {
            for rank in 0..2u8 {
                let Some(records) = grouped.get(&(judge.clone(), task.clone(), rank)) else {
                    continue;
                };
                cells.push(analyze_cell(judge, task, records, &gens, policy)?);
            }
        }
    }

    let mut overconfidence_weighted = Vec::new();
    for judge in &judges {
        for strategy in [Strategy::CoT, Strategy::SelfReference] {
            let parts: Vec<(usize, f64)> = cells
                .iter()
                .filter(|c| &c.judge == judge && c.strategy == strategy)
                .filter_map(|c| c.overconfidence.map(|v| (c.overconfidence_n, v)))
                .collect();
            if !cells.iter().any(|c| &c.judge == judge && c.strategy == strategy) {
                continue;
            }
            overconfidence_weighted.push(WeightedOverconfidence {
                judge: judge.clone(),
                strategy,
                value: weighted_mean(&parts).ok(),
                n: parts.iter().map(|(n, _)| n).sum(),
            });
        }
    }

    Ok(AnalysisReport {
        run_id: input.run_id.clone(),
        invalid_policy: policy,
        exclude_ties,
        judges,
        tasks,
        cells,
        overconfidence_weighted,
    })
}

fn analyze_cell(
    judge: &str,
    task: &str,
    records: &[JudgmentRecord],
    gens: &HashMap<(&str, &str), Vec<&GenerationRecord>>,
    policy: InvalidPolicy,
) -> Result<CellReport, ReportError> {
    let strategy = records[0].strategy;
    let own = gens.get(&(task, judge)).ok_or_else(|| ReportError::MissingGeneration {
        model: judge.to_string(),
        task: task.to_string(),
    })?;
    let own_flags: Vec<bool> = own.iter().map(|g| g.correct).collect();
    let judge_gen: HashMap<String, bool> = own.iter().map(|g| (g.item_id.clone(), g.correct)).collect();

    let failures = records.iter().filter(|r| r.failed()).count();
    let scored: Vec<JudgmentRecord> = records.iter().filter(|r| !r.failed()).cloned().collect();

    let mut agents: Vec<String> = Vec::new();
    let mut agent_correct = HashMap::new();
    let mut agent_records = Vec::new();
    for r in &scored {
        if !agents.contains(&r.agent_model_id) {
            agents.push(r.agent_model_id.clone());
            let recs = gens
                .get(&(task, r.agent_model_id.as_str()))
                .ok_or_else(|| ReportError::MissingGeneration {
                    model: r.agent_model_id.clone(),
                    task: task.to_string(),
                })?;
            for g in recs {
                agent_correct.insert((g.model_id.clone(), g.item_id.clone()), g.correct);
                agent_records.push((*g).clone());
            }
        }
    }
    verify_labels(&scored, &agent_records)?;

    let judgment = match judge_prf1(&scored, policy) {
        Ok(p) => p,
        Err(MetricsError::EmptyInput) => prf1_from_counts(ConfusionCounts::default()),
        Err(e) => return Err(e.into()),
    };
    let invalid = scored.iter().filter(|r| r.y_pred.is_none()).count();

    let two = split_two_way(&scored, &judge_gen)?;
    let plus = SubsetScore::of(&two.judge_correct, policy);
    let minus = SubsetScore::of(&two.judge_incorrect, policy);
    let four = split_four_way(&scored, &judge_gen, &agent_correct)?;
    let [a, b, c, d] = four.subsets().map(|s| SubsetScore::of(s, policy));

    let overconfidence_n = scored.iter().filter(|r| r.y_pred.is_some()).count();
    let over = match overconfidence(&scored) {
        Ok(v) => Some(v),
        Err(MetricsError::EmptyInput) => None,
        Err(e) => return Err(e.into()),
    };

    let series = TripletSeries::from_judgments(&scored, &judge_gen, policy)?;
    let (pearson, partial, strength) = if series.is_empty() {
        (None, None, None)
    } else {
        let partial = partial_correlation_from_series(&series)?;
        (
            Some(pearson_triple(&series)?),
            Some(partial),
            Some(classify_strength(partial.value)?),
        )
    };

    Ok(CellReport {
        judge: judge.to_string(),
        task: task.to_string(),
        strategy,
        agents,
        generation_accuracy: generation_accuracy(&own_flags)?,
        generation_n: own.len(),
        generation_failures: own.iter().filter(|g| g.failed()).count(),
        judgments: records.len(),
        failures,
        invalid,
        judgment,
        two_way: TwoWayReport {
            judge_correct: plus,
            judge_incorrect: minus,
            delta: plus.f1 - minus.f1,
        },
        four_way: FourWayReport {
            judge_correct_agent_correct: a,
            judge_correct_agent_incorrect: b,
            judge_incorrect_agent_correct: c,
            judge_incorrect_agent_incorrect: d,
        },
        overconfidence: over,
        overconfidence_n,
        pearson,
        partial_correlation: partial,
        strength,
    })
}

/// Loads every record of a run directory and analyzes it.
///
/// With `exclude_ties`, pairwise items whose human label is a tie are left
/// out of every metric.
pub fn analyze_run(layout: &RunLayout, policy: InvalidPolicy, exclude_ties: bool) -> Result<AnalysisReport, ReportError> {
    let cfg: RunConfig = read_json(&layout.config())?;
    let mut judgments = Vec::new();
    for path in layout.judgment_files()? {
        judgments.extend(read_jsonl::<JudgmentRecord>(&path)?);
    }
    let tasks: HashSet<&str> = judgments.iter().map(|j| j.task_id.as_str()).collect();
    let mut models: Vec<&str> = judgments
        .iter()
        .flat_map(|j| [j.judge_model_id.as_str(), j.agent_model_id.as_str()])
        .collect();
    models.sort();
    models.dedup();

    let mut generations = Vec::new();
    let mut excluded_items = HashSet::new();
    let mut task_list: Vec<&str> = tasks.into_iter().collect();
    task_list.sort();
    for task in task_list {
        for model in &models {
            generations.extend(read_jsonl_or_empty::<GenerationRecord>(&layout.generation(task, model))?);
        }
        if exclude_ties {
            if let Ok(entry) = cfg.task(task) {
                if entry.spec.kind == TaskKind::PairwiseVerdict {
                    for item in load_dataset(&layout.items(task), &entry.spec)? {
                        if item.gold == CanonicalAnswer::Verdict(Verdict::C) {
                            excluded_items.insert((task.to_string(), item.item_id));
                        }
                    }
                }
            }
        }
    }

    let input = AnalysisInput {
        run_id: cfg.run_id.clone(),
        roster: cfg.roster(),
        tasks: cfg.tasks.iter().map(|t| t.spec.task_id.clone()).collect(),
        generations,
        judgments,
        excluded_items,
    };
    analyze(&input, policy, exclude_ties)
}
