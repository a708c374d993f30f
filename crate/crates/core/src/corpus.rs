//! Task datasets: JSONL ingestion, gold-answer normalization and seeded sampling.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: missing field `{name}`")]
    MissingField { line: usize, name: &'static str },
    #[error("line {line}: gold answer cannot be canonicalized")]
    BadGold { line: usize },
    #[error("line {line}: {reason}")]
    InvalidItem { line: usize, reason: String },
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("cannot sample {requested} items from {available}")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("unparseable gold answer `{0}`")]
    Unparseable(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Answer format of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    NumericQA,
    MultipleChoice,
    PairwiseVerdict,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaskKind::NumericQA => "NumericQA",
            TaskKind::MultipleChoice => "MultipleChoice",
            TaskKind::PairwiseVerdict => "PairwiseVerdict",
        };
        f.write_str(s)
    }
}

fn default_sample_size() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub kind: TaskKind,
    #[serde(default)]
    pub display_name: String,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, kind: TaskKind) -> Self {
        let task_id = task_id.into();
        TaskSpec {
            display_name: task_id.clone(),
            task_id,
            kind,
            sample_size: default_sample_size(),
        }
    }

    pub fn label(&self) -> &str {
        if self.display_name.is_empty() {
            &self.task_id
        } else {
            &self.display_name
        }
    }
}

/// Human preference label of a pairwise comparison; `C` is a tie.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    A,
    B,
    C,
}

impl Verdict {
    pub fn from_letter(c: char) -> Option<Verdict> {
        match c.to_ascii_uppercase() {
            'A' => Some(Verdict::A),
            'B' => Some(Verdict::B),
            'C' => Some(Verdict::C),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Verdict::A => 'A',
            Verdict::B => 'B',
            Verdict::C => 'C',
        }
    }
}

/// A gold or extracted answer in exactly comparable form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CanonicalAnswer {
    Numeric(BigRational),
    Choice(char),
    Verdict(Verdict),
}

impl CanonicalAnswer {
    pub fn numeric(value: i64) -> Self {
        CanonicalAnswer::Numeric(BigRational::from_integer(BigInt::from(value)))
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            CanonicalAnswer::Numeric(_) => TaskKind::NumericQA,
            CanonicalAnswer::Choice(_) => TaskKind::MultipleChoice,
            CanonicalAnswer::Verdict(_) => TaskKind::PairwiseVerdict,
        }
    }

    /// Text form accepted back by [`canonicalize_gold`].
    pub fn render(&self) -> String {
        match self {
            CanonicalAnswer::Numeric(r) => render_rational(r),
            CanonicalAnswer::Choice(c) => c.to_string(),
            CanonicalAnswer::Verdict(v) => v.letter().to_string(),
        }
    }
}

impl fmt::Display for CanonicalAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
enum AnswerRepr {
    Numeric(String),
    Choice(String),
    Verdict(Verdict),
}

impl Serialize for CanonicalAnswer {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            CanonicalAnswer::Numeric(r) => AnswerRepr::Numeric(render_rational(r)),
            CanonicalAnswer::Choice(c) => AnswerRepr::Choice(c.to_string()),
            CanonicalAnswer::Verdict(v) => AnswerRepr::Verdict(*v),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CanonicalAnswer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match AnswerRepr::deserialize(deserializer)? {
            AnswerRepr::Numeric(s) => parse_rational(&s)
                .map(CanonicalAnswer::Numeric)
                .ok_or_else(|| D::Error::custom(format!("bad rational `{s}`"))),
            AnswerRepr::Choice(s) => {
                let mut chars = s.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) if c.is_ascii_uppercase() => Ok(CanonicalAnswer::Choice(c)),
                    _ => Err(D::Error::custom(format!("bad choice letter `{s}`"))),
                }
            }
            AnswerRepr::Verdict(v) => Ok(CanonicalAnswer::Verdict(v)),
        }
    }
}

/// Parses an optionally signed integer, terminating decimal or `p/q` fraction.
/// Commas are not accepted here; callers strip them first.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim().trim_start_matches('+')).ok()?;
        let den = BigInt::from_str(den.trim()).ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (negative, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let mantissa = BigInt::from_str(if digits.is_empty() { "0" } else { &digits }).ok()?;
    let scale = num_traits::pow(BigInt::from(10u32), frac_part.len());
    let value = BigRational::new(mantissa, scale);
    Some(if negative { -value } else { value })
}

/// Integer, exact decimal when the denominator divides a power of ten, otherwise `p/q`.
pub fn render_rational(r: &BigRational) -> String {
    if r.is_integer() {
        return r.numer().to_string();
    }
    let mut den = r.denom().clone();
    let two = BigInt::from(2u32);
    let five = BigInt::from(5u32);
    let (mut twos, mut fives) = (0usize, 0usize);
    while (&den % &two).is_zero() {
        den /= &two;
        twos += 1;
    }
    while (&den % &five).is_zero() {
        den /= &five;
        fives += 1;
    }
    if !den.is_one() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let places = twos.max(fives);
    let scaled = (r * BigRational::from_integer(num_traits::pow(BigInt::from(10u32), places))).to_integer();
    let negative = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = format!("{digits:0>width$}", width = places + 1);
    let (int_part, frac_part) = digits.split_at(digits.len() - places);
    format!("{}{}.{}", if negative { "-" } else { "" }, int_part, frac_part)
}

const CURRENCY: &[char] = &['$', '€', '£', '¥', '₹'];

/// Normalizes a raw gold label into its canonical comparable form.
pub fn canonicalize_gold(raw: &str, kind: TaskKind) -> Result<CanonicalAnswer, CorpusError> {
    let bad = || CorpusError::Unparseable(raw.to_string());
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(bad());
    }
    match kind {
        TaskKind::NumericQA => {
            let cleaned: String = trimmed
                .chars()
                .filter(|c| *c != ',' && !c.is_whitespace() && !CURRENCY.contains(c))
                .collect();
            let cleaned = cleaned.strip_suffix('.').unwrap_or(&cleaned);
            parse_rational(cleaned).map(CanonicalAnswer::Numeric).ok_or_else(bad)
        }
        TaskKind::MultipleChoice => {
            let cleaned: String = trimmed
                .chars()
                .filter(|c| !matches!(c, '(' | ')') && !c.is_whitespace())
                .collect();
            let mut chars = cleaned.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_alphabetic() => {
                    Ok(CanonicalAnswer::Choice(c.to_ascii_uppercase()))
                }
                _ => Err(bad()),
            }
        }
        TaskKind::PairwiseVerdict => {
            let lowered = trimmed.to_ascii_lowercase();
            let verdict = match lowered.as_str() {
                "a" | "model_a" => Verdict::A,
                "b" | "model_b" => Verdict::B,
                "c" | "tie" => Verdict::C,
                _ => return Err(bad()),
            };
            Ok(CanonicalAnswer::Verdict(verdict))
        }
    }
}

/// One benchmark question with its gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub item_id: String,
    pub task_id: String,
    pub question: String,
    #[serde(default)]
    pub options: Vec<String>,
    #[serde(default)]
    pub response_a: Option<String>,
    #[serde(default)]
    pub response_b: Option<String>,
    pub gold: CanonicalAnswer,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Item {
    pub fn kind(&self) -> TaskKind {
        self.gold.kind()
    }

    /// Options as `A. first`, `B. second`, ... one per line.
    pub fn lettered_options(&self) -> String {
        self.options
            .iter()
            .enumerate()
            .map(|(i, opt)| format!("{}. {}", option_letter(i), opt))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

const RESERVED_KEYS: &[&str] = &["id", "question", "gold", "options", "response_a", "response_b", "meta"];

fn required_str(obj: &Map<String, Value>, line: usize, name: &'static str) -> Result<String, CorpusError> {
    match obj.get(name) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        _ => Err(CorpusError::MissingField { line, name }),
    }
}

fn parse_line(obj: &Map<String, Value>, line: usize, spec: &TaskSpec) -> Result<Item, CorpusError> {
    let item_id = required_str(obj, line, "id")?;
    let question = required_str(obj, line, "question")?;
    let raw_gold = required_str(obj, line, "gold")?;
    let gold = canonicalize_gold(&raw_gold, spec.kind).map_err(|_| CorpusError::BadGold { line })?;

    let mut options = Vec::new();
    let (mut response_a, mut response_b) = (None, None);
    match spec.kind {
        TaskKind::NumericQA => {}
        TaskKind::MultipleChoice => {
            let Some(Value::Array(values)) = obj.get("options") else {
                return Err(CorpusError::MissingField { line, name: "options" });
            };
            for v in values {
                match v {
                    Value::String(s) => options.push(s.clone()),
                    other => options.push(other.to_string()),
                }
            }
            if options.len() < 2 {
                return Err(CorpusError::InvalidItem {
                    line,
                    reason: format!("multiple-choice item needs at least 2 options, got {}", options.len()),
                });
            }
            if options.len() > 26 {
                return Err(CorpusError::InvalidItem {
                    line,
                    reason: "more than 26 options".into(),
                });
            }
            if let CanonicalAnswer::Choice(c) = gold {
                if (c as usize - 'A' as usize) >= options.len() {
                    return Err(CorpusError::BadGold { line });
                }
            }
        }
        TaskKind::PairwiseVerdict => {
            response_a = Some(required_str(obj, line, "response_a")?);
            response_b = Some(required_str(obj, line, "response_b")?);
        }
    }

    let mut meta = BTreeMap::new();
    if let Some(Value::Object(m)) = obj.get("meta") {
        for (k, v) in m {
            if let Value::String(s) = v {
                meta.insert(k.clone(), s.clone());
            }
        }
    }
    for (k, v) in obj {
        if RESERVED_KEYS.contains(&k.as_str()) {
            continue;
        }
        if let Value::String(s) = v {
            meta.insert(k.clone(), s.clone());
        }
    }

    Ok(Item {
        item_id,
        task_id: spec.task_id.clone(),
        question,
        options,
        response_a,
        response_b,
        gold,
        meta,
    })
}

/// Parses JSONL dataset text. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset(text: &str, spec: &TaskSpec) -> Result<Vec<Item>, CorpusError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(raw_line).map_err(|source| CorpusError::Json { line, source })?;
        let Value::Object(obj) = value else {
            return Err(CorpusError::InvalidItem {
                line,
                reason: "expected a JSON object".into(),
            });
        };
        let item = parse_line(&obj, line, spec)?;
        if !seen.insert(item.item_id.clone()) {
            return Err(CorpusError::InvalidItem {
                line,
                reason: format!("duplicate id `{}`", item.item_id),
            });
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    Ok(items)
}

pub fn load_dataset(path: &Path, spec: &TaskSpec) -> Result<Vec<Item>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_dataset(&text, spec)
}

/// Serializes one item back into the dataset JSONL schema.
pub fn item_to_json(item: &Item) -> Value {
    let mut obj = Map::new();
    obj.insert("id".into(), Value::String(item.item_id.clone()));
    obj.insert("question".into(), Value::String(item.question.clone()));
    if item.kind() == TaskKind::MultipleChoice {
        obj.insert(
            "options".into(),
            Value::Array(item.options.iter().cloned().map(Value::String).collect()),
        );
    }
    if let Some(a) = &item.response_a {
        obj.insert("response_a".into(), Value::String(a.clone()));
    }
    if let Some(b) = &item.response_b {
        obj.insert("response_b".into(), Value::String(b.clone()));
    }
    obj.insert("gold".into(), Value::String(item.gold.render()));
    if !item.meta.is_empty() {
        let meta = item
            .meta
            .iter()
            .map(|(k, v)| (k.clone(), Value::String(v.clone())))
            .collect();
        obj.insert("meta".into(), Value::Object(meta));
    }
    Value::Object(obj)
}

pub fn save_dataset(path: &Path, items: &[Item]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item_to_json(item)).expect("in-memory JSON write");
        out.push(b'\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}

/// Draws `n` distinct items; a pure function of `(items, n, seed)`.
pub fn sample_items(items: &[Item], n: usize, seed: u64) -> Result<Vec<Item>, CorpusError> {
    if n > items.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: items.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut rng);
    Ok(order.into_iter().take(n).map(|i| items[i].clone()).collect())
}

/// Provenance of one sampled evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub task_id: String,
    pub seed: u64,
    pub sample_size: usize,
    pub source_path: String,
    pub source_sha256: String,
}

impl SampleManifest {
    pub fn for_file(spec: &TaskSpec, seed: u64, path: &Path) -> Result<Self, CorpusError> {
        let bytes = fs::read(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(SampleManifest {
            task_id: spec.task_id.clone(),
            seed,
            sample_size: spec.sample_size,
            source_path: path.display().to_string(),
            source_sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}
