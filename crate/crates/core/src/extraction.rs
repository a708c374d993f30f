//! Final-answer and verdict extraction from raw model text.
//!
//! Both parsers are total and apply a last-occurrence rule: the final marker
//! in the text is authoritative, earlier ones are ignored. Markers are
//! matched case-insensitively; bracket tokens must be exact.

use std::sync::LazyLock;

use num_rational::BigRational;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_rational, CanonicalAnswer, TaskKind, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureReason {
    NoMarker,
    /// Never produced under the last-occurrence rule; kept for schema stability.
    Ambiguous,
    BadNumber,
    BadChoice,
}

/// What a parser recovered: an answer, or a correct/incorrect judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsedValue {
    Answer(CanonicalAnswer),
    Judgment(bool),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub value: Option<ParsedValue>,
    /// Byte offsets into the raw text, from the marker start to the end of the value.
    pub matched_span: Option<(usize, usize)>,
    pub valid: bool,
    pub failure_reason: Option<FailureReason>,
}

impl ParseOutcome {
    fn ok(value: ParsedValue, span: (usize, usize)) -> Self {
        ParseOutcome {
            value: Some(value),
            matched_span: Some(span),
            valid: true,
            failure_reason: None,
        }
    }

    pub fn failed(reason: FailureReason) -> Self {
        ParseOutcome {
            value: None,
            matched_span: None,
            valid: false,
            failure_reason: Some(reason),
        }
    }

    pub fn answer(&self) -> Option<&CanonicalAnswer> {
        match &self.value {
            Some(ParsedValue::Answer(a)) => Some(a),
            _ => None,
        }
    }

    pub fn judgment(&self) -> Option<bool> {
        match self.value {
            Some(ParsedValue::Judgment(b)) => Some(b),
            _ => None,
        }
    }
}

/// Verdict token family a judge output is expected to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictFamily {
    /// `[[Correct]]` / `[[Incorrect]]`
    Pointwise,
    /// `[[A]]` / `[[B]]` / `[[C]]`
    PairwiseChoice,
    /// `**[[Correct]]**` / `**[[Incorrect]]**`
    MetaJudge,
}

impl VerdictFamily {
    pub fn for_judging(kind: TaskKind) -> VerdictFamily {
        match kind {
            TaskKind::PairwiseVerdict => VerdictFamily::MetaJudge,
            _ => VerdictFamily::Pointwise,
        }
    }
}

static ANSWER_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)the answer is").unwrap());
static MARKER_FILLER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^[\s:*$]*(?:\(arabic numerals\)[\s:*$]*)?").unwrap());
static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[-+]?\$?(?:\d{1,3}(?:,\d{3})+|\d+)?(?:\.\d+)?(?:/\d+)?").unwrap());
// A number running on into more digits or separators ("1,23,456", "12.5.3") is malformed.
static NUMBER_RUN_ON: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:\d|[.,/]\d)").unwrap());
// A bare letter must be uppercase; lowercase is accepted only inside parentheses.
static CHOICE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:\(([A-Za-z])\)|([A-Z]))(?:[^A-Za-z0-9]|$)").unwrap());
static CORRECTNESS_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\[\[(correct|incorrect)\]\]").unwrap());
static CHOICE_TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\[\[([abc])\]\]").unwrap());

/// Extracts the final answer following the last "The answer is" marker.
///
/// Pairwise outputs carry `[[A]]`-style verdicts rather than a marker and are
/// delegated to [`extract_verdict`].
pub fn extract_answer(text: &str, kind: TaskKind) -> ParseOutcome {
    if kind == TaskKind::PairwiseVerdict {
        return extract_verdict(text, VerdictFamily::PairwiseChoice);
    }
    let Some(marker) = ANSWER_MARKER.find_iter(text).last() else {
        return ParseOutcome::failed(FailureReason::NoMarker);
    };
    let rest_start = marker.end() + MARKER_FILLER.find(&text[marker.end()..]).map_or(0, |m| m.end());
    let rest = &text[rest_start..];
    match kind {
        TaskKind::NumericQA => match parse_number_prefix(rest) {
            Some((value, len)) => ParseOutcome::ok(
                ParsedValue::Answer(CanonicalAnswer::Numeric(value)),
                (marker.start(), rest_start + len),
            ),
            None => ParseOutcome::failed(FailureReason::BadNumber),
        },
        TaskKind::MultipleChoice => match CHOICE.captures(rest) {
            Some(caps) => {
                let letter = caps.get(1).or_else(|| caps.get(2)).expect("one alternative matched");
                let c = letter.as_str().chars().next().unwrap().to_ascii_uppercase();
                let end = rest_start + letter.end() + usize::from(caps.get(1).is_some());
                ParseOutcome::ok(ParsedValue::Answer(CanonicalAnswer::Choice(c)), (marker.start(), end))
            }
            None => ParseOutcome::failed(FailureReason::BadChoice),
        },
        TaskKind::PairwiseVerdict => unreachable!(),
    }
}

fn parse_number_prefix(s: &str) -> Option<(BigRational, usize)> {
    let m = NUMBER.find(s)?;
    let token = m.as_str();
    if !token.bytes().any(|b| b.is_ascii_digit()) || NUMBER_RUN_ON.is_match(&s[m.end()..]) {
        return None;
    }
    let cleaned: String = token.chars().filter(|c| *c != ',' && *c != '$').collect();
    parse_rational(&cleaned).map(|v| (v, m.end()))
}

/// Extracts the last verdict token of the given family.
pub fn extract_verdict(text: &str, family: VerdictFamily) -> ParseOutcome {
    match family {
        VerdictFamily::Pointwise | VerdictFamily::MetaJudge => match CORRECTNESS_TOKEN.captures_iter(text).last() {
            Some(caps) => {
                let whole = caps.get(0).unwrap();
                let correct = caps[1].eq_ignore_ascii_case("correct");
                ParseOutcome::ok(ParsedValue::Judgment(correct), (whole.start(), whole.end()))
            }
            None => ParseOutcome::failed(FailureReason::NoMarker),
        },
        VerdictFamily::PairwiseChoice => match CHOICE_TOKEN.captures_iter(text).last() {
            Some(caps) => {
                let whole = caps.get(0).unwrap();
                let verdict = Verdict::from_letter(caps[1].chars().next().unwrap()).unwrap();
                ParseOutcome::ok(
                    ParsedValue::Answer(CanonicalAnswer::Verdict(verdict)),
                    (whole.start(), whole.end()),
                )
            }
            None => ParseOutcome::failed(FailureReason::NoMarker),
        },
    }
}
