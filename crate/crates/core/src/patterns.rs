//! Sequence layouts for joint speech-text decoding.
//!
//! A [`ChannelPair`] holds the two logical channels of one utterance: the
//! text answer (ending in text EOS) and its spoken form as discrete speech
//! tokens (ending in speech EOS when that mode is on). The muxers here
//! weave a pair into the single training/inference stream each layout uses:
//!
//! * [`mux_interleaved`] — fixed-ratio chunks of `r_text` text slots then
//!   `r_speech` speech tokens; once the text channel runs out, its slots are
//!   filled with the pad token so the ratio stays constant.
//! * [`mux_esi`] — early-stop interleaving: same chunking while text
//!   remains, but the chunk that drains the text channel emits the marker
//!   token right after text EOS and then all remaining speech contiguously.
//!   No pad ever appears and the total length is always
//!   `|text| + 1 + |speech|`.
//! * [`mux_parallel`] — per-step frames of one text slot plus `k` speech
//!   tokens; text slots after EOS are pads, and the final frame's speech
//!   side is filled with repeated speech EOS unless that mode is off.
//!
//! All muxers are pure; see [`crate::demux`] for the inverse direction.

use crate::vocab::{TokenClass, VocabSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One demultiplexed utterance: a text token sequence and a speech token
/// sequence.
///
/// `text_tokens` is content followed by exactly one text EOS. With the
/// speech-EOS mode on (the default), `speech_tokens` is content followed by
/// exactly one speech EOS; with it off, content only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPair {
    pub text_tokens: Vec<u32>,
    pub speech_tokens: Vec<u32>,
}

impl ChannelPair {
    pub fn new(text_tokens: Vec<u32>, speech_tokens: Vec<u32>) -> Self {
        Self {
            text_tokens,
            speech_tokens,
        }
    }

    /// Check channel structure against a vocab. `expect_speech_eos` selects
    /// whether the speech channel must end in speech EOS.
    pub fn validate(&self, vocab: &VocabSpec, expect_speech_eos: bool) -> Result<(), MuxError> {
        if self.text_tokens.is_empty() {
            return Err(MuxError::InvalidPair("text channel is empty"));
        }
        let (last, interior) = self.text_tokens.split_last().expect("non-empty");
        if vocab.classify(*last) != TokenClass::TextEos {
            return Err(MuxError::InvalidPair("text channel must end in text EOS"));
        }
        if interior
            .iter()
            .any(|&t| vocab.classify(t) != TokenClass::TextContent)
        {
            return Err(MuxError::InvalidPair(
                "text channel interior must be text content",
            ));
        }
        if self.speech_tokens.is_empty() {
            return Err(MuxError::InvalidPair("speech channel is empty"));
        }
        if expect_speech_eos {
            let (last, interior) = self.speech_tokens.split_last().expect("non-empty");
            if vocab.classify(*last) != TokenClass::SpeechEos {
                return Err(MuxError::InvalidPair(
                    "speech channel must end in speech EOS",
                ));
            }
            if interior
                .iter()
                .any(|&t| vocab.classify(t) != TokenClass::SpeechContent)
            {
                return Err(MuxError::InvalidPair(
                    "speech channel interior must be speech content",
                ));
            }
        } else if self
            .speech_tokens
            .iter()
            .any(|&t| vocab.classify(t) != TokenClass::SpeechContent)
        {
            return Err(MuxError::InvalidPair(
                "speech channel must be speech content when speech EOS mode is off",
            ));
        }
        Ok(())
    }
}

/// Chunking ratio for the interleaved and early-stop layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterleaveConfig {
    /// Text slots per chunk.
    pub r_text: usize,
    /// Speech tokens per chunk.
    pub r_speech: usize,
    /// Whether streams carry an explicit speech EOS (self-delimiting).
    #[serde(default = "default_true")]
    pub append_speech_eos: bool,
}

fn default_true() -> bool {
    true
}

impl InterleaveConfig {
    pub fn new(r_text: usize, r_speech: usize) -> Self {
        Self {
            r_text,
            r_speech,
            append_speech_eos: true,
        }
    }

    pub fn without_speech_eos(mut self) -> Self {
        self.append_speech_eos = false;
        self
    }

    pub fn validate(&self) -> Result<(), MuxError> {
        if self.r_text == 0 || self.r_speech == 0 {
            return Err(MuxError::InvalidConfig("ratio terms must be positive"));
        }
        Ok(())
    }
}

/// Frame shape for the parallel layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelConfig {
    /// Speech tokens per frame.
    pub k: usize,
    /// Whether the final frame's speech side is filled with repeated speech
    /// EOS (and streams terminate on it).
    #[serde(default = "default_true")]
    pub append_speech_eos: bool,
}

impl ParallelConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            append_speech_eos: true,
        }
    }

    pub fn without_speech_eos(mut self) -> Self {
        self.append_speech_eos = false;
        self
    }

    pub fn validate(&self) -> Result<(), MuxError> {
        if self.k == 0 {
            return Err(MuxError::InvalidConfig("k must be positive"));
        }
        Ok(())
    }
}

/// Which single-stream layout a [`MixedSequence`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "interleaved")]
    Interleaved,
    #[serde(rename = "esi")]
    EarlyStopInterleaved,
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pattern::Interleaved => f.write_str("interleaved"),
            Pattern::EarlyStopInterleaved => f.write_str("esi"),
        }
    }
}

/// A multiplexed single-stream sequence plus the layout that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedSequence {
    pub tokens: Vec<u32>,
    pub pattern: Pattern,
    pub config: InterleaveConfig,
}

impl MixedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One parallel-layout step: a text slot and its `k` speech slots.
///
/// Serializes as `[text, [speech, ...]]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame(pub u32, pub Vec<u32>);

impl Frame {
    pub fn text_slot(&self) -> u32 {
        self.0
    }

    pub fn speech_slots(&self) -> &[u32] {
        &self.1
    }
}

/// The multiplexed form of the parallel layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub k: usize,
}

impl FrameSequence {
    /// Total slot count when frames are flattened text-slot-first.
    pub fn flat_len(&self) -> usize {
        self.frames.iter().map(|f| 1 + f.1.len()).sum()
    }

    /// Frames flattened text-slot-first into one token stream.
    pub fn flatten(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.flat_len());
        for frame in &self.frames {
            out.push(frame.0);
            out.extend_from_slice(&frame.1);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MuxError {
    /// The speech channel ran out while text tokens were still unemitted.
    /// A spoken answer is never shorter than its text at real token rates,
    /// so this input is rejected rather than truncated.
    #[error(
        "speech underrun: speech channel exhausted with {text_remaining} text token(s) unemitted"
    )]
    SpeechUnderrun { text_remaining: usize },
    #[error("invalid channel pair: {0}")]
    InvalidPair(&'static str),
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Vocab(#[from] crate::vocab::VocabError),
}

/// Weave a pair into the fixed-ratio interleaved layout.
///
/// Chunks of `r_text` text slots then up to `r_speech` speech tokens repeat
/// until the speech channel is exhausted; text slots past the text channel
/// carry the pad token. A chunk only starts while speech remains, so the
/// stream always ends on the last real speech token.
pub fn mux_interleaved(
    pair: &ChannelPair,
    cfg: &InterleaveConfig,
    vocab: &VocabSpec,
) -> Result<MixedSequence, MuxError> {
    vocab.validate()?;
    cfg.validate()?;
    pair.validate(vocab, cfg.append_speech_eos)?;

    let text = &pair.text_tokens;
    let speech = &pair.speech_tokens;
    let mut tokens = Vec::with_capacity(text.len() + speech.len());
    let mut ti = 0;
    let mut si = 0;
    while si < speech.len() {
        for _ in 0..cfg.r_text {
            if ti < text.len() {
                tokens.push(text[ti]);
                ti += 1;
            } else {
                tokens.push(vocab.pad_text_id);
            }
        }
        let take = cfg.r_speech.min(speech.len() - si);
        tokens.extend_from_slice(&speech[si..si + take]);
        si += take;
    }
    if ti < text.len() {
        return Err(MuxError::SpeechUnderrun {
            text_remaining: text.len() - ti,
        });
    }
    Ok(MixedSequence {
        tokens,
        pattern: Pattern::Interleaved,
        config: *cfg,
    })
}

/// Weave a pair into the early-stop interleaved layout.
///
/// Chunks follow the interleaved rule while text remains; the chunk that
/// drains the text channel emits its remaining text tokens (ending in text
/// EOS), then the marker, then every remaining speech token contiguously.
/// The output never contains a pad and its length is exactly
/// `|text| + 1 + |speech|`.
pub fn mux_esi(
    pair: &ChannelPair,
    cfg: &InterleaveConfig,
    vocab: &VocabSpec,
) -> Result<MixedSequence, MuxError> {
    vocab.validate()?;
    cfg.validate()?;
    pair.validate(vocab, cfg.append_speech_eos)?;

    let text = &pair.text_tokens;
    let speech = &pair.speech_tokens;
    let mut tokens = Vec::with_capacity(text.len() + 1 + speech.len());
    let mut ti = 0;
    let mut si = 0;
    loop {
        if si >= speech.len() {
            // Speech ran dry before the final text chunk could start.
            return Err(MuxError::SpeechUnderrun {
                text_remaining: text.len() - ti,
            });
        }
        let take_text = cfg.r_text.min(text.len() - ti);
        tokens.extend_from_slice(&text[ti..ti + take_text]);
        ti += take_text;
        if ti == text.len() {
            tokens.push(vocab.marker_id);
            tokens.extend_from_slice(&speech[si..]);
            break;
        }
        if speech.len() - si < cfg.r_speech {
            return Err(MuxError::SpeechUnderrun {
                text_remaining: text.len() - ti,
            });
        }
        tokens.extend_from_slice(&speech[si..si + cfg.r_speech]);
        si += cfg.r_speech;
    }
    Ok(MixedSequence {
        tokens,
        pattern: Pattern::EarlyStopInterleaved,
        config: *cfg,
    })
}

/// Arrange a pair into parallel frames of one text slot plus `k` speech
/// tokens.
///
/// Frame `i` carries `text_tokens[i]` while available and the pad token
/// after; its speech side takes the next `k` speech tokens. With the
/// speech-EOS mode on the final frame is filled to `k` with repeated speech
/// EOS; with it off the final frame may be short.
pub fn mux_parallel(
    pair: &ChannelPair,
    cfg: &ParallelConfig,
    vocab: &VocabSpec,
) -> Result<FrameSequence, MuxError> {
    vocab.validate()?;
    cfg.validate()?;
    pair.validate(vocab, cfg.append_speech_eos)?;

    let text = &pair.text_tokens;
    let speech = &pair.speech_tokens;
    let n_frames = speech.len().div_ceil(cfg.k);
    if n_frames < text.len() {
        return Err(MuxError::SpeechUnderrun {
            text_remaining: text.len() - n_frames,
        });
    }
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let text_slot = text.get(i).copied().unwrap_or(vocab.pad_text_id);
        let lo = i * cfg.k;
        let hi = ((i + 1) * cfg.k).min(speech.len());
        let mut slots = speech[lo..hi].to_vec();
        if cfg.append_speech_eos {
            slots.resize(cfg.k, vocab.eos_speech_id);
        }
        frames.push(Frame(text_slot, slots));
    }
    Ok(FrameSequence {
        frames,
        k: cfg.k,
    })
}

/// Pad count of the interleaved layout for a pair, without building it.
pub fn interleaved_pad_count(pair: &ChannelPair, cfg: &InterleaveConfig) -> usize {
    let chunks = pair.speech_tokens.len().div_ceil(cfg.r_speech);
    (chunks * cfg.r_text).saturating_sub(pair.text_tokens.len())
}
