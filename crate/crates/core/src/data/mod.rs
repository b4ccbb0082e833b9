//! Trial protocols, score files and the synthetic replay corpus.

mod protocol;
mod scores;
pub mod synth;

use std::path::Path;

use thiserror::Error;

pub use protocol::{
    label_counts, parse_protocol, parse_protocol_str, serialize_protocol, write_protocol, Label,
    Trial,
};
pub use scores::{
    format_scores, join_scores, parse_scores_str, read_scores, write_scores, MissingPolicy,
};
pub use synth::{build_corpus, corpus_plan, stream_seed, synth_utterance, Split, SynthConfig};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("line {line}: duplicate utterance id {utt_id}")]
    DuplicateId { line: usize, utt_id: String },
    #[error("score join: {0}")]
    Join(String),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {detail}")]
    Io { path: String, detail: String },
}

impl DataError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        }
    }
}
