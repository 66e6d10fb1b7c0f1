//! Token-id universe and classification.
//!
//! Every muxer, demuxer and simulator consults a [`VocabSpec`] to decide
//! what a raw token id means: text content, speech content, or one of the
//! four special ids (text EOS, text pad, the speech-only marker, speech EOS).
//! Ids are opaque integers; there is no tokenizer here.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open id interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdRange {
    pub start: u32,
    pub end: u32,
}

impl IdRange {
    pub const fn new(start: u32, end: u32) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, id: u32) -> bool {
        id >= self.start && id < self.end
    }

    pub fn len(&self) -> u32 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    fn overlaps(&self, other: &IdRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Token-id layout shared by every codec in this crate.
///
/// Immutable after construction; cheap to copy and safe to share across
/// threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSpec {
    /// Ids carrying text content (the special text ids live inside it).
    pub text_range: IdRange,
    /// Ids carrying speech content (speech EOS lives inside it).
    pub speech_range: IdRange,
    /// End-of-sentence token for the text channel.
    pub eos_text_id: u32,
    /// Text padding token filling text slots once the text channel is done.
    pub pad_text_id: u32,
    /// Marker signalling that all remaining tokens are speech.
    pub marker_id: u32,
    /// End-of-stream token for the speech channel.
    pub eos_speech_id: u32,
}

/// Outcome of classifying one token id. Special ids take precedence over
/// range membership; ids outside all ranges are `Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    TextContent,
    TextEos,
    TextPad,
    Marker,
    SpeechContent,
    SpeechEos,
    Unknown,
}

impl TokenClass {
    /// True for ids flowing through the text channel (content, EOS, pad).
    pub fn is_text_side(&self) -> bool {
        matches!(
            self,
            TokenClass::TextContent | TokenClass::TextEos | TokenClass::TextPad
        )
    }

    /// True for ids flowing through the speech channel (content, EOS).
    pub fn is_speech_side(&self) -> bool {
        matches!(self, TokenClass::SpeechContent | TokenClass::SpeechEos)
    }
}

impl std::fmt::Display for TokenClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            TokenClass::TextContent => "text-content",
            TokenClass::TextEos => "text-eos",
            TokenClass::TextPad => "text-pad",
            TokenClass::Marker => "marker",
            TokenClass::SpeechContent => "speech-content",
            TokenClass::SpeechEos => "speech-eos",
            TokenClass::Unknown => "unknown",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("text_range and speech_range must be non-empty")]
    EmptyRange,
    #[error("text_range and speech_range overlap")]
    OverlappingRanges,
    #[error("{name} ({id}) must lie inside {range}_range")]
    SpecialOutsideRange {
        name: &'static str,
        id: u32,
        range: &'static str,
    },
    #[error("marker_id ({0}) must lie outside both ranges")]
    MarkerInsideRange(u32),
    #[error("special ids must be pairwise distinct")]
    DuplicateSpecials,
}

impl VocabSpec {
    pub fn new(
        text_range: IdRange,
        speech_range: IdRange,
        eos_text_id: u32,
        pad_text_id: u32,
        marker_id: u32,
        eos_speech_id: u32,
    ) -> Result<Self, VocabError> {
        let spec = Self {
            text_range,
            speech_range,
            eos_text_id,
            pad_text_id,
            marker_id,
            eos_speech_id,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), VocabError> {
        if self.text_range.is_empty() || self.speech_range.is_empty() {
            return Err(VocabError::EmptyRange);
        }
        if self.text_range.overlaps(&self.speech_range) {
            return Err(VocabError::OverlappingRanges);
        }
        if !self.text_range.contains(self.eos_text_id) {
            return Err(VocabError::SpecialOutsideRange {
                name: "eos_text_id",
                id: self.eos_text_id,
                range: "text",
            });
        }
        if !self.text_range.contains(self.pad_text_id) {
            return Err(VocabError::SpecialOutsideRange {
                name: "pad_text_id",
                id: self.pad_text_id,
                range: "text",
            });
        }
        if !self.speech_range.contains(self.eos_speech_id) {
            return Err(VocabError::SpecialOutsideRange {
                name: "eos_speech_id",
                id: self.eos_speech_id,
                range: "speech",
            });
        }
        if self.text_range.contains(self.marker_id) || self.speech_range.contains(self.marker_id) {
            return Err(VocabError::MarkerInsideRange(self.marker_id));
        }
        let ids = [
            self.eos_text_id,
            self.pad_text_id,
            self.marker_id,
            self.eos_speech_id,
        ];
        for i in 0..ids.len() {
            for j in (i + 1)..ids.len() {
                if ids[i] == ids[j] {
                    return Err(VocabError::DuplicateSpecials);
                }
            }
        }
        Ok(())
    }

    /// Classify a token id. Total over all of `u32`; never fails.
    pub fn classify(&self, token: u32) -> TokenClass {
        if token == self.eos_text_id {
            TokenClass::TextEos
        } else if token == self.pad_text_id {
            TokenClass::TextPad
        } else if token == self.marker_id {
            TokenClass::Marker
        } else if token == self.eos_speech_id {
            TokenClass::SpeechEos
        } else if self.text_range.contains(token) {
            TokenClass::TextContent
        } else if self.speech_range.contains(token) {
            TokenClass::SpeechContent
        } else {
            TokenClass::Unknown
        }
    }
}

/// Placeholder layout: text ids `[0, 4096)`, speech ids `[4096, 10646)`,
/// specials at the range tails, marker just past the speech range. Real
/// deployments load their own spec from JSON.
impl Default for VocabSpec {
    fn default() -> Self {
        Self {
            text_range: IdRange::new(0, 4096),
            speech_range: IdRange::new(4096, 10646),
            eos_text_id: 4094,
            pad_text_id: 4095,
            marker_id: 10646,
            eos_speech_id: 10645,
        }
    }
}
