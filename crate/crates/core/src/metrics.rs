//! Accuracy, judge precision/recall/F1, Pearson and partial correlation,
//! D_J+/D_J- splits, overconfidence and correlation-strength bands.
//!
//! "Positive" throughout means the label or prediction `Correct`.
//! Zero denominators and constant inputs never produce NaN: the affected
//! value is reported as 0 and flagged.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation input {0} outside [-1, 1]")]
    OutOfRangeInput(f64),
    #[error("coefficients ({r_gj}, {r_ga}, {r_ja}) are not jointly attainable")]
    InconsistentCorrelations { r_gj: f64, r_ga: f64, r_ja: f64 },
    #[error("value {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("no judge generation for item `{0}`")]
    MissingJudgeGeneration(String),
    #[error("no agent correctness flag for agent `{agent}` on item `{item}`")]
    MissingCorrectnessFlag { agent: String, item: String },
}

/// A graded answer-generation outcome.
pub trait Graded {
    fn is_correct(&self) -> bool;
}

/// A judgment of one agent answer on one item.
pub trait Judged {
    fn item_id(&self) -> &str;
    fn agent_id(&self) -> &str;
    /// Whether the agent's answer was actually correct.
    fn label(&self) -> bool;
    /// The judge's parsed verdict; `None` when unparseable.
    fn prediction(&self) -> Option<bool>;
}

impl Graded for bool {
    fn is_correct(&self) -> bool {
        *self
    }
}

pub fn generation_accuracy<R: Graded>(records: &[R]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let correct = records.iter().filter(|r| r.is_correct()).count();
    Ok(correct as f64 / records.len() as f64)
}

/// Treatment of judgments whose verdict could not be parsed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidPolicy {
    /// Dropped from the confusion matrix and counted separately.
    #[default]
    Exclude,
    /// Scored as the wrong verdict: a false negative on a correct answer,
    /// a false positive on an incorrect one.
    #[serde(rename = "count-incorrect")]
    CountAsIncorrectPrediction,
}

impl InvalidPolicy {
    pub fn slug(self) -> &'static str {
        match self {
            InvalidPolicy::Exclude => "exclude",
            InvalidPolicy::CountAsIncorrectPrediction => "count-incorrect",
        }
    }

    /// Effective prediction under this policy; `None` means the record is dropped.
    pub fn resolve(self, label: bool, prediction: Option<bool>) -> Option<bool> {
        match (prediction, self) {
            (Some(p), _) => Some(p),
            (None, InvalidPolicy::Exclude) => None,
            (None, InvalidPolicy::CountAsIncorrectPrediction) => Some(!label),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// Records left out of the four cells.
    pub invalid_count: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn + self.invalid_count
    }

    fn record(&mut self, label: bool, prediction: Option<bool>) {
        match prediction {
            Some(true) if label => self.tp += 1,
            Some(true) => self.fp += 1,
            Some(false) if label => self.fn_ += 1,
            Some(false) => self.tn += 1,
            None => self.invalid_count += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Binary precision, recall and F1 of a judge with `Correct` as the positive class.
pub fn judge_prf1<'a, R, I>(records: I, policy: InvalidPolicy) -> Result<Prf1, MetricsError>
where
    R: Judged + 'a,
    I: IntoIterator<Item = &'a R>,
{
    let mut counts = ConfusionCounts::default();
    let mut any = false;
    for r in records {
        any = true;
        counts.record(r.label(), policy.resolve(r.label(), r.prediction()));
    }
    if !any {
        return Err(MetricsError::EmptyInput);
    }
    Ok(prf1_from_counts(counts))
}

pub fn prf1_from_counts(counts: ConfusionCounts) -> Prf1 {
    let (precision, precision_undefined) = ratio(counts.tp, counts.tp + counts.fp);
    let (recall, recall_undefined) = ratio(counts.tp, counts.tp + counts.fn_);
    let sum = precision + recall;
    let (f1, f1_undefined) = if sum == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / sum, false)
    };
    Prf1 {
        precision,
        recall,
        f1,
        counts,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub value: f64,
    /// Undefined correlation (a constant input); `value` is then 0.
    pub degenerate: bool,
    pub n: usize,
}

impl CorrelationResult {
    fn degenerate(n: usize) -> Self {
        CorrelationResult {
            value: 0.0,
            degenerate: true,
            n,
        }
    }
}

/// Pearson coefficient of two bit vectors.
///
/// Computed from exact integer counts; sample and population normalization
/// give the same coefficient.
pub fn pearson(x: &[bool], y: &[bool]) -> Result<CorrelationResult, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = x.len() as i128;
    let (mut sx, mut sy, mut sxy) = (0i128, 0i128, 0i128);
    for (&a, &b) in x.iter().zip(y) {
        sx += a as i128;
        sy += b as i128;
        sxy += (a && b) as i128;
    }
    let var_x = sx * (n - sx);
    let var_y = sy * (n - sy);
    if var_x == 0 || var_y == 0 {
        return Ok(CorrelationResult::degenerate(x.len()));
    }
    let cov = n * sxy - sx * sy;
    let value = cov as f64 / ((var_x as f64) * (var_y as f64)).sqrt();
    Ok(CorrelationResult {
        value: value.clamp(-1.0, 1.0),
        degenerate: false,
        n: x.len(),
    })
}

/// First-order partial correlation of G and J controlling for A.
pub fn partial_correlation(r_gj: f64, r_ga: f64, r_ja: f64) -> Result<CorrelationResult, MetricsError> {
    for r in [r_gj, r_ga, r_ja] {
        if !(-1.0..=1.0).contains(&r) {
            return Err(MetricsError::OutOfRangeInput(r));
        }
    }
    let denom_sq = (1.0 - r_ga * r_ga) * (1.0 - r_ja * r_ja);
    if denom_sq <= 0.0 {
        return Ok(CorrelationResult::degenerate(0));
    }
    let value = (r_gj - r_ga * r_ja) / denom_sq.sqrt();
    if value.abs() > 1.0 + 1e-9 {
        return Err(MetricsError::InconsistentCorrelations { r_gj, r_ga, r_ja });
    }
    Ok(CorrelationResult {
        value: value.clamp(-1.0, 1.0),
        degenerate: false,
        n: 0,
    })
}

/// Aligned per-judgment indicators: judge answered correctly (G), judge
/// judged correctly (J), agent answered correctly (A).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletSeries {
    g: Vec<bool>,
    j: Vec<bool>,
    a: Vec<bool>,
}

impl TripletSeries {
    pub fn new(g: Vec<bool>, j: Vec<bool>, a: Vec<bool>) -> Result<Self, MetricsError> {
        if g.len() != j.len() {
            return Err(MetricsError::LengthMismatch(g.len(), j.len()));
        }
        if g.len() != a.len() {
            return Err(MetricsError::LengthMismatch(g.len(), a.len()));
        }
        Ok(TripletSeries { g, j, a })
    }

    /// One triplet per judgment record that survives `policy`.
    pub fn from_judgments<R: Judged>(
        records: &[R],
        judge_gen: &HashMap<String, bool>,
        policy: InvalidPolicy,
    ) -> Result<Self, MetricsError> {
        let (mut g, mut j, mut a) = (Vec::new(), Vec::new(), Vec::new());
        for r in records {
            let gen = *judge_gen
                .get(r.item_id())
                .ok_or_else(|| MetricsError::MissingJudgeGeneration(r.item_id().to_string()))?;
            let Some(pred) = policy.resolve(r.label(), r.prediction()) else {
                continue;
            };
            g.push(gen);
            j.push(pred == r.label());
            a.push(r.label());
        }
        Ok(TripletSeries { g, j, a })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn g(&self) -> &[bool] {
        &self.g
    }

    pub fn j(&self) -> &[bool] {
        &self.j
    }

    pub fn a(&self) -> &[bool] {
        &self.a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonTriple {
    pub gj: CorrelationResult,
    pub ga: CorrelationResult,
    pub ja: CorrelationResult,
}

pub fn pearson_triple(t: &TripletSeries) -> Result<PearsonTriple, MetricsError> {
    Ok(PearsonTriple {
        gj: pearson(&t.g, &t.j)?,
        ga: pearson(&t.g, &t.a)?,
        ja: pearson(&t.j, &t.a)?,
    })
}

/// Partial correlation of G and J given A over a series. Any constant
/// component makes the result degenerate (0, flagged).
pub fn partial_correlation_from_series(t: &TripletSeries) -> Result<CorrelationResult, MetricsError> {
    let p = pearson_triple(t)?;
    if p.gj.degenerate || p.ga.degenerate || p.ja.degenerate {
        return Ok(CorrelationResult::degenerate(t.len()));
    }
    let mut r = partial_correlation(p.gj.value, p.ga.value, p.ja.value)?;
    r.n = t.len();
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strength {
    Weak,
    Moderate,
    Strong,
}

/// `|v| < 0.3` weak, `0.3 <= |v| <= 0.5` moderate, above 0.5 strong.
pub fn classify_strength(value: f64) -> Result<Strength, MetricsError> {
    if !(-1.0..=1.0).contains(&value) {
        return Err(MetricsError::OutOfRange(value));
    }
    let v = value.abs();
    Ok(if v < 0.3 {
        Strength::Weak
    } else if v <= 0.5 {
        Strength::Moderate
    } else {
        Strength::Strong
    })
}

/// Judgments split by whether the judge answered the item correctly itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoWaySplit<'a, R> {
    pub judge_correct: Vec<&'a R>,
    pub judge_incorrect: Vec<&'a R>,
}

pub fn split_two_way<'a, R: Judged>(
    records: &'a [R],
    judge_gen: &HashMap<String, bool>,
) -> Result<TwoWaySplit<'a, R>, MetricsError> {
    let mut split = TwoWaySplit {
        judge_correct: Vec::new(),
        judge_incorrect: Vec::new(),
    };
    for r in records {
        match judge_gen.get(r.item_id()) {
            Some(true) => split.judge_correct.push(r),
            Some(false) => split.judge_incorrect.push(r),
            None => return Err(MetricsError::MissingJudgeGeneration(r.item_id().to_string())),
        }
    }
    Ok(split)
}

/// The two-way split refined by agent correctness, in heatmap column order.
#[derive(Debug, Clone, PartialEq)]
pub struct FourWaySplit<'a, R> {
    pub judge_correct_agent_correct: Vec<&'a R>,
    pub judge_correct_agent_incorrect: Vec<&'a R>,
    pub judge_incorrect_agent_correct: Vec<&'a R>,
    pub judge_incorrect_agent_incorrect: Vec<&'a R>,
}

impl<'a, R> FourWaySplit<'a, R> {
    pub fn subsets(&self) -> [&Vec<&'a R>; 4] {
        [
            &self.judge_correct_agent_correct,
            &self.judge_correct_agent_incorrect,
            &self.judge_incorrect_agent_correct,
            &self.judge_incorrect_agent_incorrect,
        ]
    }
}

pub fn split_four_way<'a, R: Judged>(
    records: &'a [R],
    judge_gen: &HashMap<String, bool>,
    agent_correct: &HashMap<(String, String), bool>,
) -> Result<FourWaySplit<'a, R>, MetricsError> {
    let mut split = FourWaySplit {
        judge_correct_agent_correct: Vec::new(),
        judge_correct_agent_incorrect: Vec::new(),
        judge_incorrect_agent_correct: Vec::new(),
        judge_incorrect_agent_incorrect: Vec::new(),
    };
    for r in records {
        let judge = *judge_gen
            .get(r.item_id())
            .ok_or_else(|| MetricsError::MissingJudgeGeneration(r.item_id().to_string()))?;
        let agent = *agent_correct
            .get(&(r.agent_id().to_string(), r.item_id().to_string()))
            .ok_or_else(|| MetricsError::MissingCorrectnessFlag {
                agent: r.agent_id().to_string(),
                item: r.item_id().to_string(),
            })?;
        let bucket = match (judge, agent) {
            (true, true) => &mut split.judge_correct_agent_correct,
            (true, false) => &mut split.judge_correct_agent_incorrect,
            (false, true) => &mut split.judge_incorrect_agent_correct,
            (false, false) => &mut split.judge_incorrect_agent_incorrect,
        };
        bucket.push(r);
    }
    Ok(split)
}

/// Share of valid judgments predicting `Correct` minus share labeled `Correct`.
pub fn overconfidence<'a, R, I>(records: I) -> Result<f64, MetricsError>
where
    R: Judged + 'a,
    I: IntoIterator<Item = &'a R>,
{
    let (mut n, mut predicted, mut labeled) = (0usize, 0usize, 0usize);
    for r in records {
        if let Some(p) = r.prediction() {
            n += 1;
            predicted += p as usize;
            labeled += r.label() as usize;
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok((predicted as f64 - labeled as f64) / n as f64)
}

/// Sample-count weighted mean of per-task values.
pub fn weighted_mean(values: &[(usize, f64)]) -> Result<f64, MetricsError> {
    let total: usize = values.iter().map(|(n, _)| n).sum();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok(values.iter().map(|(n, v)| *n as f64 * v).sum::<f64>() / total as f64)
}
