use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::protocol::{Label, Trial};
use super::DataError;
use crate::metrics::ScoreSet;

/// What to do when a protocol trial has no score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    #[default]
    Error,
    Skip,
}

pub fn parse_scores_str(text: &str) -> Result<Vec<(String, f64)>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let parse_err = |detail: String| DataError::Parse {
            line: i + 1,
            detail,
        };
        if fields.len() != 2 {
            return Err(parse_err(format!(
                "expected `<utt_id> <score>`, found {} fields",
                fields.len()
            )));
        }
        let score: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("score {:?} is not a number", fields[1])))?;
        if !score.is_finite() {
            return Err(parse_err(format!("score {score} is not finite")));
        }
        out.push((fields[0].to_string(), score));
    }
    Ok(out)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_scores_str(&text)
}

pub fn format_scores(entries: &[(String, f64)]) -> String {
    entries
        .iter()
        .map(|(id, s)| format!("{id} {s:.6}\n"))
        .collect()
}

pub fn write_scores(entries: &[(String, f64)], path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, format_scores(entries)).map_err(|e| DataError::io(path, e))
}

/// Pairs scores with protocol labels. Scores for utterances absent from the
/// protocol are always an error.
pub fn join_scores(
    trials: &[Trial],
    entries: &[(String, f64)],
    missing: MissingPolicy,
) -> Result<ScoreSet, DataError> {
    let mut by_id: HashMap<&str, f64> = HashMap::with_capacity(entries.len());
    for (id, s) in entries {
        if by_id.insert(id.as_str(), *s).is_some() {
            return Err(DataError::Join(format!("duplicate score for {id}")));
        }
    }
    let known: HashMap<&str, Label> = trials.iter().map(|t| (t.utt_id.as_str(), t.key)).collect();
    if let Some((id, _)) = entries
        .iter()
        .find(|(id, _)| !known.contains_key(id.as_str()))
    {
        return Err(DataError::Join(format!("score for unknown utterance {id}")));
    }
    let mut set = ScoreSet::default();
    for t in trials {
        match by_id.get(t.utt_id.as_str()) {
            Some(&s) => match t.key {
                Label::Bonafide => set.bonafide.push(s),
                Label::Spoof => set.spoof.push(s),
            },
            None if missing == MissingPolicy::Skip => {}
            None => return Err(DataError::Join(format!("no score for trial {}", t.utt_id))),
        }
    }
    Ok(set)
}
