use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Spoof,
    Bonafide,
}

impl Label {
    /// Class index used by the classifier: 0 = spoof, 1 = bona fide.
    pub fn class_index(self) -> usize {
        match self {
            Label::Spoof => 0,
            Label::Bonafide => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Spoof => "spoof",
            Label::Bonafide => "bonafide",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(other.to_string()),
        }
    }
}

/// One protocol line: `speaker utt system attack key`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub speaker_id: String,
    pub utt_id: String,
    pub system_id: String,
    pub attack_id: String,
    pub key: Label,
}

impl fmt::Display for Trial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.speaker_id, self.utt_id, self.system_id, self.attack_id, self.key
        )
    }
}

pub fn parse_protocol_str(text: &str) -> Result<Vec<Trial>, DataError> {
    let mut seen = HashSet::new();
    let mut trials = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(DataError::Parse {
                line: line_no,
                detail: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let key = fields[4].parse().map_err(|bad| DataError::Parse {
            line: line_no,
            detail: format!("unknown key label {bad:?}"),
        })?;
        if !seen.insert(fields[1].to_string()) {
            return Err(DataError::DuplicateId {
                line: line_no,
                utt_id: fields[1].to_string(),
            });
        }
        trials.push(Trial {
            speaker_id: fields[0].to_string(),
            utt_id: fields[1].to_string(),
            system_id: fields[2].to_string(),
            attack_id: fields[3].to_string(),
            key,
        });
    }
    Ok(trials)
}

pub fn parse_protocol(path: impl AsRef<Path>) -> Result<Vec<Trial>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_protocol_str(&text)
}

pub fn serialize_protocol(trials: &[Trial]) -> String {
    trials.iter().map(|t| format!("{t}\n")).collect()
}

pub fn write_protocol(trials: &[Trial], path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, serialize_protocol(trials)).map_err(|e| DataError::io(path, e))
}

/// (bona fide, spoof) counts.
pub fn label_counts(trials: &[Trial]) -> (usize, usize) {
    let bona = trials.iter().filter(|t| t.key == Label::Bonafide).count();
    (bona, trials.len() - bona)
}
