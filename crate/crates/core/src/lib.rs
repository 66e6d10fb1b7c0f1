//! Reversible single-stream layouts for joint text + speech-token decoding,
//! plus the tooling that surrounds them.
//!
//! A model that emits text and discrete speech tokens through one decoder
//! needs the two channels woven into a single stream. This crate implements
//! three such layouts as exact codecs — every multiplex has a demultiplex
//! that rebuilds the original channels, and every malformed stream is
//! rejected with a position and a reason:
//!
//! - **Interleaved** ([`mux_interleaved`]): fixed chunks of `r_text` text
//!   slots then `r_speech` speech tokens; text slots past the end of the
//!   text channel carry a pad token.
//! - **Early-stop interleaved** ([`mux_esi`]): same chunking until the text
//!   channel finishes, then a marker token and all remaining speech with no
//!   pads at all.
//! - **Parallel** ([`mux_parallel`]): frames of one text slot and `k`
//!   speech slots advancing in lockstep.
//!
//! Around the codecs:
//!
//! - [`demux`] — a push-based streaming decoder ([`Demuxer`]) that emits
//!   channel events token by token and fails fast on malformed input.
//! - [`analytics`] — sequence-length accounting: pad counts, early-stop
//!   reduction, corpus percentiles, and the closed-form reduction estimate.
//! - [`metrics`] — spoken-QA scoring: normalized containment accuracy and
//!   word error rate with a full edit breakdown.
//! - [`curation`] — the rewrite → TTS → ASR → WER-filter pipeline behind
//!   QA corpus preparation, with pluggable clients and a deterministic
//!   mock suite.
//! - [`simulator`] — stream replay, seeded corruption, and decode
//!   throughput measurement.
//! - [`jsonl`] — the line-delimited JSON wire formats shared by the CLI
//!   and tests.
//!
//! The commonly used types are re-exported at the crate root; modules stay
//! public for everything else.

pub mod analytics;
pub mod curation;
pub mod demux;
pub mod jsonl;
pub mod metrics;
pub mod patterns;
pub mod simulator;
pub mod vocab;

pub use analytics::{corpus_report, expected_reduction, length_report, CorpusReport, LengthReport};
pub use demux::{
    demux_all, demux_all_frames, DecodeError, DemuxError, DemuxErrorKind, DemuxEvent, Demuxer,
};
pub use metrics::{answer_hit, evaluate, normalize, wer, EvalReport, WerBreakdown};
pub use patterns::{
    mux_esi, mux_interleaved, mux_parallel, ChannelPair, Frame, FrameSequence, InterleaveConfig,
    MixedSequence, MuxError, ParallelConfig, Pattern,
};
pub use simulator::{bench, run, Generator, RunTranscript, Schedule};
pub use vocab::{IdRange, TokenClass, VocabError, VocabSpec};
