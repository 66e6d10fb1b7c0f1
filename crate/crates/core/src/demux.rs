//! Streaming demultiplexers: the exact inverses of the muxers in
//! [`crate::patterns`].
//!
//! A [`Demuxer`] is fed one token at a time and routes each to the text or
//! speech channel according to the layout's slot schedule, yielding
//! [`DemuxEvent`]s as it goes. Structural tokens (pads, the early-stop
//! marker, the repeated speech-EOS fill of parallel frames) are consumed
//! silently; channel tokens come back out in order, so a consumer can act
//! on text the moment it arrives instead of waiting for the stream to end.
//!
//! The demuxer is strict: it accepts exactly the streams its paired muxer
//! can produce. Any deviation — a token on the wrong side of the schedule,
//! a pad before text EOS, a stray marker, trailing tokens, an id outside
//! the vocab — fails fast with a [`DemuxError`] carrying the offending
//! token's index. After an error the demuxer is poisoned and every further
//! call returns that same error.
//!
//! Feeding a whole in-memory sequence is a two-liner; [`demux_all`] and
//! [`demux_all_frames`] wrap that for convenience and are what the batch
//! paths use. Streaming and batch decoding agree token-for-token.

use crate::patterns::{
    ChannelPair, Frame, FrameSequence, InterleaveConfig, MixedSequence, MuxError, ParallelConfig,
    Pattern,
};
use crate::vocab::{TokenClass, VocabSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Incremental output of a [`Demuxer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemuxEvent {
    /// A text content token, in text-channel order.
    TextToken(u32),
    /// Text EOS arrived; the text channel is complete.
    TextDone,
    /// A speech content token, in speech-channel order.
    SpeechToken(u32),
    /// Speech EOS arrived (or was implied at finish); the speech channel is
    /// complete.
    SpeechDone,
    /// The final token of a well-formed stream was consumed.
    StreamDone,
}

/// Events produced by one [`Demuxer::feed`] call: zero, one, or two items,
/// returned by value so feeding never allocates.
#[derive(Debug, Clone, Copy)]
pub struct Events {
    buf: [Option<DemuxEvent>; 2],
    pos: usize,
}

impl Events {
    fn none() -> Self {
        Events {
            buf: [None, None],
            pos: 0,
        }
    }

    fn one(e: DemuxEvent) -> Self {
        Events {
            buf: [Some(e), None],
            pos: 0,
        }
    }

    fn two(a: DemuxEvent, b: DemuxEvent) -> Self {
        Events {
            buf: [Some(a), Some(b)],
            pos: 0,
        }
    }
}

impl Iterator for Events {
    type Item = DemuxEvent;

    fn next(&mut self) -> Option<DemuxEvent> {
        let e = self.buf.get(self.pos).copied().flatten();
        if e.is_some() {
            self.pos += 1;
        }
        e
    }
}

/// What went wrong, independent of position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DemuxErrorKind {
    /// The token's class is not one the current slot accepts.
    WrongChannel,
    /// A pad arrived in a text slot before text EOS.
    PadBeforeEos,
    /// The marker arrived anywhere other than immediately after text EOS in
    /// the early-stop layout.
    UnexpectedMarker,
    /// A token arrived after the stream had already completed.
    TokenAfterFinish,
    /// The id is outside both channel ranges and is no special token.
    UnknownToken,
    /// The stream ended (or its speech channel closed) before both channels
    /// were complete.
    TruncatedStream,
}

impl std::fmt::Display for DemuxErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DemuxErrorKind::WrongChannel => "WrongChannel",
            DemuxErrorKind::PadBeforeEos => "PadBeforeEos",
            DemuxErrorKind::UnexpectedMarker => "UnexpectedMarker",
            DemuxErrorKind::TokenAfterFinish => "TokenAfterFinish",
            DemuxErrorKind::UnknownToken => "UnknownToken",
            DemuxErrorKind::TruncatedStream => "TruncatedStream",
        })
    }
}

/// A demultiplexing failure at a specific token position.
///
/// `index` is the 0-based position of the offending token; for truncation
/// discovered at [`Demuxer::finish`] it is the position where input was
/// still required.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind} at index {index}")]
pub struct DemuxError {
    pub index: usize,
    pub kind: DemuxErrorKind,
}

/// Setup or stream failure from the batch decode helpers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Setup(#[from] MuxError),
    #[error(transparent)]
    Stream(#[from] DemuxError),
}

/// Result of draining a demuxer.
///
/// `closing_events` is empty except in no-speech-EOS mode, where the end of
/// input itself completes the stream and the implied `SpeechDone` and
/// `StreamDone` are delivered here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemuxOutcome {
    pub pair: ChannelPair,
    pub closing_events: Vec<DemuxEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Cycling through the slot schedule (all layouts).
    Chunked { slot: usize },
    /// Early-stop only: text EOS consumed, the marker must come next.
    AwaitMarker,
    /// Early-stop only: past the marker, speech tokens to the end.
    SpeechOnly,
    Finished,
    Failed,
}

/// Incremental single-pass decoder for one multiplexed stream.
#[derive(Debug, Clone)]
pub struct Demuxer {
    vocab: VocabSpec,
    text_slots: usize,
    speech_slots: usize,
    early_stop: bool,
    parallel: bool,
    append_speech_eos: bool,
    phase: Phase,
    index: usize,
    text: Vec<u32>,
    speech: Vec<u32>,
    text_done: bool,
    speech_done: bool,
    last_was_speech: bool,
    marker_index: Option<usize>,
    error: Option<DemuxError>,
}

impl Demuxer {
    fn new(
        text_slots: usize,
        speech_slots: usize,
        early_stop: bool,
        parallel: bool,
        append_speech_eos: bool,
        vocab: VocabSpec,
    ) -> Result<Self, MuxError> {
        vocab.validate()?;
        Ok(Demuxer {
            vocab,
            text_slots,
            speech_slots,
            early_stop,
            parallel,
            append_speech_eos,
            phase: Phase::Chunked { slot: 0 },
            index: 0,
            text: Vec::new(),
            speech: Vec::new(),
            text_done: false,
            speech_done: false,
            last_was_speech: false,
            marker_index: None,
            error: None,
        })
    }

    /// Decoder for [`crate::patterns::mux_interleaved`] streams.
    pub fn interleaved(cfg: InterleaveConfig, vocab: VocabSpec) -> Result<Self, MuxError> {
        cfg.validate()?;
        Self::new(
            cfg.r_text,
            cfg.r_speech,
            false,
            false,
            cfg.append_speech_eos,
            vocab,
        )
    }

    /// Decoder for [`crate::patterns::mux_esi`] streams.
    pub fn early_stop(cfg: InterleaveConfig, vocab: VocabSpec) -> Result<Self, MuxError> {
        cfg.validate()?;
        Self::new(
            cfg.r_text,
            cfg.r_speech,
            true,
            false,
            cfg.append_speech_eos,
            vocab,
        )
    }

    /// Decoder for flattened [`crate::patterns::mux_parallel`] frames.
    pub fn parallel(cfg: ParallelConfig, vocab: VocabSpec) -> Result<Self, MuxError> {
        cfg.validate()?;
        Self::new(1, cfg.k, false, true, cfg.append_speech_eos, vocab)
    }

    /// Tokens consumed so far.
    pub fn tokens_consumed(&self) -> usize {
        self.index
    }

    /// Position of the early-stop marker, once consumed.
    pub fn marker_index(&self) -> Option<usize> {
        self.marker_index
    }

    pub fn text_done(&self) -> bool {
        self.text_done
    }

    pub fn speech_done(&self) -> bool {
        self.speech_done
    }

    /// Whether the stream completed (StreamDone was emitted).
    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    fn fail(&mut self, kind: DemuxErrorKind) -> DemuxError {
        let err = DemuxError {
            index: self.index,
            kind,
        };
        self.phase = Phase::Failed;
        self.error = Some(err.clone());
        err
    }

    /// Advance the slot cursor; returns true when a chunk/frame boundary was
    /// crossed.
    fn advance_slot(&mut self) -> bool {
        if let Phase::Chunked { slot } = &mut self.phase {
            *slot += 1;
            if *slot == self.text_slots + self.speech_slots {
                *slot = 0;
                return true;
            }
        }
        false
    }

    /// Consume one token, routing it per the slot schedule.
    pub fn feed(&mut self, token: u32) -> Result<Events, DemuxError> {
        match self.phase {
            Phase::Failed => return Err(self.error.clone().expect("failed phase stores an error")),
            Phase::Finished => return Err(self.fail(DemuxErrorKind::TokenAfterFinish)),
            _ => {}
        }
        let class = self.vocab.classify(token);
        if class == TokenClass::Unknown {
            return Err(self.fail(DemuxErrorKind::UnknownToken));
        }
        let events = match self.phase {
            Phase::Chunked { slot } => self.feed_chunked(slot, token, class)?,
            Phase::AwaitMarker => self.feed_await_marker(class)?,
            Phase::SpeechOnly => self.feed_speech_only(token, class)?,
            Phase::Finished | Phase::Failed => unreachable!("handled above"),
        };
        self.last_was_speech = class == TokenClass::SpeechContent;
        self.index += 1;
        Ok(events)
    }

    fn feed_chunked(
        &mut self,
        slot: usize,
        token: u32,
        class: TokenClass,
    ) -> Result<Events, DemuxError> {
        if slot < self.text_slots {
            self.feed_text_slot(token, class)
        } else {
            self.feed_speech_slot(token, class)
        }
    }

    fn feed_text_slot(&mut self, token: u32, class: TokenClass) -> Result<Events, DemuxError> {
        if self.text_done {
            // Fill territory: interleaved and parallel pad out finished text.
            return match class {
                TokenClass::TextPad => {
                    self.advance_slot();
                    Ok(Events::none())
                }
                TokenClass::Marker => Err(self.fail(DemuxErrorKind::UnexpectedMarker)),
                _ => Err(self.fail(DemuxErrorKind::WrongChannel)),
            };
        }
        match class {
            TokenClass::TextContent => {
                self.text.push(token);
                self.advance_slot();
                Ok(Events::one(DemuxEvent::TextToken(token)))
            }
            TokenClass::TextEos => {
                self.text.push(token);
                self.text_done = true;
                if self.early_stop {
                    self.phase = Phase::AwaitMarker;
                } else {
                    self.advance_slot();
                }
                Ok(Events::one(DemuxEvent::TextDone))
            }
            TokenClass::TextPad => Err(self.fail(DemuxErrorKind::PadBeforeEos)),
            TokenClass::Marker => Err(self.fail(DemuxErrorKind::UnexpectedMarker)),
            _ => Err(self.fail(DemuxErrorKind::WrongChannel)),
        }
    }

    fn feed_speech_slot(&mut self, token: u32, class: TokenClass) -> Result<Events, DemuxError> {
        if self.speech_done {
            // Parallel final-frame drain: only repeated speech EOS is left.
            return match class {
                TokenClass::SpeechEos => {
                    if self.advance_slot() {
                        self.phase = Phase::Finished;
                        Ok(Events::one(DemuxEvent::StreamDone))
                    } else {
                        Ok(Events::none())
                    }
                }
                TokenClass::Marker => Err(self.fail(DemuxErrorKind::UnexpectedMarker)),
                _ => Err(self.fail(DemuxErrorKind::WrongChannel)),
            };
        }
        match class {
            TokenClass::SpeechContent => {
                self.speech.push(token);
                self.advance_slot();
                Ok(Events::one(DemuxEvent::SpeechToken(token)))
            }
            TokenClass::SpeechEos => {
                if !self.append_speech_eos {
                    // Nothing may close a stream that is closed by its end.
                    return Err(self.fail(DemuxErrorKind::WrongChannel));
                }
                if !self.text_done {
                    return Err(self.fail(DemuxErrorKind::TruncatedStream));
                }
                self.speech.push(token);
                self.speech_done = true;
                if self.parallel && !self.advance_slot() {
                    // Mid-frame: the frame still drains with EOS fill.
                    Ok(Events::one(DemuxEvent::SpeechDone))
                } else {
                    self.phase = Phase::Finished;
                    Ok(Events::two(DemuxEvent::SpeechDone, DemuxEvent::StreamDone))
                }
            }
            TokenClass::Marker => Err(self.fail(DemuxErrorKind::UnexpectedMarker)),
            _ => Err(self.fail(DemuxErrorKind::WrongChannel)),
        }
    }

    fn feed_await_marker(&mut self, class: TokenClass) -> Result<Events, DemuxError> {
        match class {
            TokenClass::Marker => {
                self.marker_index = Some(self.index);
                self.phase = Phase::SpeechOnly;
                Ok(Events::none())
            }
            _ => Err(self.fail(DemuxErrorKind::WrongChannel)),
        }
    }

    fn feed_speech_only(&mut self, token: u32, class: TokenClass) -> Result<Events, DemuxError> {
        match class {
            TokenClass::SpeechContent => {
                self.speech.push(token);
                Ok(Events::one(DemuxEvent::SpeechToken(token)))
            }
            TokenClass::SpeechEos if self.append_speech_eos => {
                self.speech.push(token);
                self.speech_done = true;
                self.phase = Phase::Finished;
                Ok(Events::two(DemuxEvent::SpeechDone, DemuxEvent::StreamDone))
            }
            TokenClass::Marker => Err(self.fail(DemuxErrorKind::UnexpectedMarker)),
            _ => Err(self.fail(DemuxErrorKind::WrongChannel)),
        }
    }

    /// End of input: recover the channel pair or report why the stream is
    /// incomplete.
    ///
    /// With speech EOS on, the stream must have completed through its EOS.
    /// With it off, input ending on a speech content token after text EOS is
    /// the legitimate terminator and the implied channel-close events are
    /// returned in [`DemuxOutcome::closing_events`].
    pub fn finish(self) -> Result<DemuxOutcome, DemuxError> {
        if self.phase == Phase::Failed {
            return Err(self.error.expect("failed phase stores an error"));
        }
        let complete = if self.append_speech_eos {
            self.phase == Phase::Finished
        } else {
            self.text_done && self.last_was_speech
        };
        if !complete {
            return Err(DemuxError {
                index: self.index,
                kind: DemuxErrorKind::TruncatedStream,
            });
        }
        let closing_events = if self.append_speech_eos {
            Vec::new()
        } else {
            vec![DemuxEvent::SpeechDone, DemuxEvent::StreamDone]
        };
        Ok(DemuxOutcome {
            pair: ChannelPair::new(self.text, self.speech),
            closing_events,
        })
    }
}

/// Decode a whole interleaved or early-stop sequence in one call.
pub fn demux_all(seq: &MixedSequence, vocab: &VocabSpec) -> Result<ChannelPair, DecodeError> {
    let mut d = match seq.pattern {
        Pattern::Interleaved => Demuxer::interleaved(seq.config, *vocab)?,
        Pattern::EarlyStopInterleaved => Demuxer::early_stop(seq.config, *vocab)?,
    };
    for &token in &seq.tokens {
        d.feed(token)?;
    }
    Ok(d.finish()?.pair)
}

/// Decode a whole frame sequence (flattened text-slot-first) in one call.
pub fn demux_all_frames(
    frames: &FrameSequence,
    vocab: &VocabSpec,
    append_speech_eos: bool,
) -> Result<ChannelPair, DecodeError> {
    let cfg = ParallelConfig {
        k: frames.k,
        append_speech_eos,
    };
    let mut d = Demuxer::parallel(cfg, *vocab)?;
    for Frame(text_slot, speech_slots) in &frames.frames {
        d.feed(*text_slot)?;
        for &s in speech_slots {
            d.feed(s)?;
        }
    }
    Ok(d.finish()?.pair)
}
