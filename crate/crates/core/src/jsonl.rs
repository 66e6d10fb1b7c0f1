//! JSONL wire records and streaming line helpers.
//!
//! One JSON object per line, so corpora stream in constant space. The
//! record shapes here are the external contract of the CLI:
//!
//! * channel pairs — `{"id", "text_tokens", "speech_tokens"}`
//! * mixed streams — `{"id", "pattern", "r_text", "r_speech", "tokens"}`
//! * frame streams — `{"id", "k", "frames": [[text, [speech, ...]], ...]}`
//! * decode traces — `{"i", "ev", "id"?}`, one line per event
//!
//! Serialization uses the struct field order above and no extra
//! whitespace, so identical values produce identical bytes.

use crate::demux::DemuxEvent;
use crate::patterns::{ChannelPair, Frame, FrameSequence, InterleaveConfig, MixedSequence, Pattern};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::io::{BufRead, Write};
use thiserror::Error;

/// Wire form of a [`ChannelPair`] with its corpus id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub text_tokens: Vec<u32>,
    pub speech_tokens: Vec<u32>,
}

impl PairRecord {
    pub fn new(id: impl Into<String>, pair: ChannelPair) -> Self {
        PairRecord {
            id: id.into(),
            text_tokens: pair.text_tokens,
            speech_tokens: pair.speech_tokens,
        }
    }

    pub fn into_pair(self) -> (String, ChannelPair) {
        (
            self.id,
            ChannelPair::new(self.text_tokens, self.speech_tokens),
        )
    }
}

/// Wire form of a [`MixedSequence`].
///
/// The speech-EOS mode is a processing flag, not part of the stream, so it
/// is not serialized; [`MixedRecord::into_sequence`] takes it explicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedRecord {
    pub id: String,
    pub pattern: Pattern,
    pub r_text: usize,
    pub r_speech: usize,
    pub tokens: Vec<u32>,
}

impl MixedRecord {
    pub fn new(id: impl Into<String>, seq: MixedSequence) -> Self {
        MixedRecord {
            id: id.into(),
            pattern: seq.pattern,
            r_text: seq.config.r_text,
            r_speech: seq.config.r_speech,
            tokens: seq.tokens,
        }
    }

    pub fn into_sequence(self, append_speech_eos: bool) -> (String, MixedSequence) {
        let config = InterleaveConfig {
            r_text: self.r_text,
            r_speech: self.r_speech,
            append_speech_eos,
        };
        (
            self.id,
            MixedSequence {
                tokens: self.tokens,
                pattern: self.pattern,
                config,
            },
        )
    }
}

/// Wire form of a [`FrameSequence`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub id: String,
    pub k: usize,
    pub frames: Vec<Frame>,
}

impl FrameRecord {
    pub fn new(id: impl Into<String>, seq: FrameSequence) -> Self {
        FrameRecord {
            id: id.into(),
            k: seq.k,
            frames: seq.frames,
        }
    }

    pub fn into_sequence(self) -> (String, FrameSequence) {
        (
            self.id,
            FrameSequence {
                frames: self.frames,
                k: self.k,
            },
        )
    }
}

/// One decode-trace line: which event the token at index `i` produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub i: usize,
    pub ev: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<u32>,
}

impl TraceRecord {
    pub fn new(i: usize, event: DemuxEvent) -> Self {
        let (ev, id) = match event {
            DemuxEvent::TextToken(t) => ("text", Some(t)),
            DemuxEvent::TextDone => ("text_done", None),
            DemuxEvent::SpeechToken(t) => ("speech", Some(t)),
            DemuxEvent::SpeechDone => ("speech_done", None),
            DemuxEvent::StreamDone => ("done", None),
        };
        TraceRecord {
            i,
            ev: ev.to_string(),
            id,
        }
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Iterate records from a JSONL reader, skipping blank lines. Parse errors
/// carry the 1-based line number.
pub fn read_jsonl<T, R>(reader: R) -> impl Iterator<Item = Result<T, JsonlError>>
where
    T: DeserializeOwned,
    R: BufRead,
{
    reader
        .lines()
        .enumerate()
        .filter_map(|(idx, line)| match line {
            Err(e) => Some(Err(JsonlError::Io(e))),
            Ok(line) if line.trim().is_empty() => None,
            Ok(line) => Some(
                serde_json::from_str(&line).map_err(|source| JsonlError::Parse {
                    line: idx + 1,
                    source,
                }),
            ),
        })
}

/// Write one record as a single JSON line.
pub fn write_jsonl<T, W>(writer: &mut W, record: &T) -> Result<(), JsonlError>
where
    T: Serialize,
    W: Write,
{
    serde_json::to_writer(&mut *writer, record)
        .map_err(|e| JsonlError::Io(std::io::Error::from(e)))?;
    writer.write_all(b"\n")?;
    Ok(())
}
