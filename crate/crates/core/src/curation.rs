//! QA data curation: rewrite short answers into sentences, synthesize
//! speech, transcribe it back, and keep only records whose answer survives
//! the round trip.
//!
//! The pipeline runs per record: rewrite(question, answer) → TTS of the
//! question and the answer sentence under one speaker prompt drawn from a
//! seeded pool → ASR of the answer audio → word error rate between the
//! answer sentence and its transcript (via [`crate::metrics::wer`]). A
//! record is kept iff that WER is at or below the threshold — strictly
//! *greater* is discarded, so a WER of exactly 0.20 survives the default
//! 0.20 threshold.
//!
//! External services sit behind the [`AnswerRewriter`], [`TtsClient`] and
//! [`AsrClient`] traits. This crate ships only the deterministic
//! [`mock_clients`] suite (template rewriter, content-hash TTS, seeded
//! word-corrupting ASR); real clients are configured by the caller.
//! Client failures drop the record with the failing stage named and the
//! pipeline continues.
//!
//! Determinism: speaker draws depend only on (seed, record position), and
//! the mock ASR's corruption depends only on (seed, audio ref), so
//! identical inputs produce byte-identical outputs even if records were
//! processed concurrently.

use crate::metrics::{self, MetricsError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Opaque handle to synthesized audio, as returned by a [`TtsClient`].
pub type AudioRef = String;

/// A source QA record: `{"id", "question", "answer"}` on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaSourceRecord {
    pub id: String,
    #[serde(rename = "question")]
    pub question_text: String,
    #[serde(rename = "answer")]
    pub answer_phrase: String,
}

/// Why a record was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Answer WER exceeded the threshold.
    WerTooHigh,
    /// WER was undefined (empty answer sentence against a non-empty
    /// transcript).
    WerUndefined,
    /// Question or answer was empty.
    InvalidRecord,
    RewriteFailed,
    TtsFailed,
    AsrFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurationStatus {
    Kept,
    Dropped,
}

/// Per-record curation outcome. Fields from stages that never ran are
/// `null` on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedRecord {
    pub id: String,
    #[serde(rename = "question")]
    pub question_text: String,
    pub answer_sentence: Option<String>,
    pub question_audio_ref: Option<AudioRef>,
    pub answer_audio_ref: Option<AudioRef>,
    pub answer_transcript: Option<String>,
    pub answer_wer: Option<f64>,
    /// Speaker prompt id used for both syntheses.
    pub speaker_id: u64,
    pub status: CurationStatus,
    pub reason: Option<DropReason>,
    /// Client failure message, when a stage failed.
    pub error: Option<String>,
}

/// Kept/dropped tallies for one curation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CurationSummary {
    pub total: usize,
    pub kept: usize,
    pub dropped: usize,
    pub reasons: BTreeMap<DropReason, usize>,
}

/// External-service failure; the pipeline records it and moves on.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct ClientError {
    pub message: String,
}

impl ClientError {
    pub fn new(message: impl Into<String>) -> Self {
        ClientError {
            message: message.into(),
        }
    }
}

/// Rewrites a short answer phrase into a full answer sentence.
pub trait AnswerRewriter: Send + Sync {
    fn rewrite(&self, question: &str, answer_phrase: &str) -> Result<String, ClientError>;
}

/// Synthesizes text into audio under a speaker prompt.
pub trait TtsClient: Send + Sync {
    fn synthesize(&self, text: &str, speaker_id: u64) -> Result<AudioRef, ClientError>;
}

/// Transcribes synthesized audio back to text.
pub trait AsrClient: Send + Sync {
    fn transcribe(&self, audio: &AudioRef) -> Result<String, ClientError>;
}

/// The three external services the pipeline orchestrates.
pub struct ClientSuite {
    pub rewriter: Box<dyn AnswerRewriter>,
    pub tts: Box<dyn TtsClient>,
    pub asr: Box<dyn AsrClient>,
}

/// Word-level corruption rates for the mock ASR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Probability a word is dropped from the transcript.
    pub deletion_rate: f64,
    /// Probability a surviving word is replaced by a wrong one.
    pub substitution_rate: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        deletion_rate: 0.0,
        substitution_rate: 0.0,
    };

    pub fn validate(&self) -> Result<(), CurationError> {
        for rate in [self.deletion_rate, self.substitution_rate] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(CurationError::InvalidNoiseRate(rate));
            }
        }
        Ok(())
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::NONE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurationConfig {
    /// Records with WER strictly above this are dropped.
    pub wer_threshold: f64,
    pub speaker_pool_size: u64,
    pub seed: u64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            wer_threshold: 0.2,
            speaker_pool_size: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurationError {
    #[error("wer threshold must be in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("speaker pool must hold at least one prompt")]
    EmptySpeakerPool,
    #[error("noise rate must be in [0, 1], got {0}")]
    InvalidNoiseRate(f64),
}

/// Streaming curation pipeline; feed records in input order and collect a
/// [`CurationSummary`] at the end.
pub struct Curator<'a> {
    clients: &'a ClientSuite,
    config: CurationConfig,
    speaker_rng: ChaCha8Rng,
    total: usize,
    kept: usize,
    reasons: BTreeMap<DropReason, usize>,
}

impl<'a> Curator<'a> {
    pub fn new(clients: &'a ClientSuite, config: CurationConfig) -> Result<Self, CurationError> {
        if !(config.wer_threshold > 0.0 && config.wer_threshold <= 1.0) {
            return Err(CurationError::InvalidThreshold(config.wer_threshold));
        }
        if config.speaker_pool_size == 0 {
            return Err(CurationError::EmptySpeakerPool);
        }
        Ok(Curator {
            clients,
            config,
            speaker_rng: ChaCha8Rng::seed_from_u64(config.seed),
            total: 0,
            kept: 0,
            reasons: BTreeMap::new(),
        })
    }

    /// Run one record through rewrite → TTS → ASR → WER filter.
    pub fn process(&mut self, record: QaSourceRecord) -> CuratedRecord {
        self.total += 1;
        // One speaker draw per record, unconditionally, so a record's
        // speaker depends only on (seed, position).
        let speaker_id = self.speaker_rng.random_range(0..self.config.speaker_pool_size);
        let mut out = CuratedRecord {
            id: record.id,
            question_text: record.question_text,
            answer_sentence: None,
            question_audio_ref: None,
            answer_audio_ref: None,
            answer_transcript: None,
            answer_wer: None,
            speaker_id,
            status: CurationStatus::Dropped,
            reason: None,
            error: None,
        };

        if out.question_text.trim().is_empty() || record.answer_phrase.trim().is_empty() {
            return self.drop(out, DropReason::InvalidRecord, None);
        }
        let sentence = match self
            .clients
            .rewriter
            .rewrite(&out.question_text, &record.answer_phrase)
        {
            Ok(s) => s,
            Err(e) => return self.drop(out, DropReason::RewriteFailed, Some(e)),
        };
        out.answer_sentence = Some(sentence.clone());
        match self.clients.tts.synthesize(&out.question_text, speaker_id) {
            Ok(r) => out.question_audio_ref = Some(r),
            Err(e) => return self.drop(out, DropReason::TtsFailed, Some(e)),
        }
        let answer_audio = match self.clients.tts.synthesize(&sentence, speaker_id) {
            Ok(r) => {
                out.answer_audio_ref = Some(r.clone());
                r
            }
            Err(e) => return self.drop(out, DropReason::TtsFailed, Some(e)),
        };
        let transcript = match self.clients.asr.transcribe(&answer_audio) {
            Ok(t) => t,
            Err(e) => return self.drop(out, DropReason::AsrFailed, Some(e)),
        };
        out.answer_transcript = Some(transcript.clone());
        match metrics::wer(&sentence, &transcript) {
            Ok(breakdown) => {
                out.answer_wer = Some(breakdown.wer);
                if breakdown.wer > self.config.wer_threshold {
                    self.drop(out, DropReason::WerTooHigh, None)
                } else {
                    self.kept += 1;
                    out.status = CurationStatus::Kept;
                    out
                }
            }
            Err(MetricsError::EmptyReference) => self.drop(out, DropReason::WerUndefined, None),
            Err(e) => unreachable!("wer returns no other error: {e}"),
        }
    }

    fn drop(
        &mut self,
        mut record: CuratedRecord,
        reason: DropReason,
        error: Option<ClientError>,
    ) -> CuratedRecord {
        *self.reasons.entry(reason).or_insert(0) += 1;
        record.status = CurationStatus::Dropped;
        record.reason = Some(reason);
        record.error = error.map(|e| e.message);
        record
    }

    pub fn summary(&self) -> CurationSummary {
        CurationSummary {
            total: self.total,
            kept: self.kept,
            dropped: self.total - self.kept,
            reasons: self.reasons.clone(),
        }
    }
}

/// Batch convenience over [`Curator`].
pub fn curate<I>(
    records: I,
    clients: &ClientSuite,
    config: CurationConfig,
) -> Result<(Vec<CuratedRecord>, CurationSummary), CurationError>
where
    I: IntoIterator<Item = QaSourceRecord>,
{
    let mut curator = Curator::new(clients, config)?;
    let out = records.into_iter().map(|r| curator.process(r)).collect();
    Ok((out, curator.summary()))
}

/// Deterministic stand-ins for the rewrite/TTS/ASR services.
///
/// The rewriter emits `"The answer is {phrase}."`. The TTS returns a
/// content-hash handle and remembers the text so the mock ASR can read it
/// back. The ASR normalizes the text and applies word-level deletions and
/// substitutions at the configured rates, seeded per audio ref so the
/// corruption of a record never depends on processing order. With zero
/// noise, `asr(tts(x))` is exactly `normalize(x)`.
pub fn mock_clients(seed: u64, noise: NoiseSpec) -> Result<ClientSuite, CurationError> {
    noise.validate()?;
    let store: SharedAudioStore = Arc::new(Mutex::new(HashMap::new()));
    Ok(ClientSuite {
        rewriter: Box::new(MockRewriter),
        tts: Box::new(MockTts {
            store: Arc::clone(&store),
        }),
        asr: Box::new(MockAsr { store, seed, noise }),
    })
}

type SharedAudioStore = Arc<Mutex<HashMap<AudioRef, String>>>;

struct MockRewriter;

impl AnswerRewriter for MockRewriter {
    fn rewrite(&self, _question: &str, answer_phrase: &str) -> Result<String, ClientError> {
        Ok(format!("The answer is {answer_phrase}."))
    }
}

struct MockTts {
    store: SharedAudioStore,
}

impl TtsClient for MockTts {
    fn synthesize(&self, text: &str, speaker_id: u64) -> Result<AudioRef, ClientError> {
        let mut hash = fnv1a64(text.as_bytes());
        hash ^= fnv1a64(&speaker_id.to_le_bytes());
        let audio_ref = format!("mock:{hash:016x}");
        self.store
            .lock()
            .expect("mock audio store lock")
            .insert(audio_ref.clone(), text.to_string());
        Ok(audio_ref)
    }
}

struct MockAsr {
    store: SharedAudioStore,
    seed: u64,
    noise: NoiseSpec,
}

impl AsrClient for MockAsr {
    fn transcribe(&self, audio: &AudioRef) -> Result<String, ClientError> {
        let text = self
            .store
            .lock()
            .expect("mock audio store lock")
            .get(audio)
            .cloned()
            .ok_or_else(|| ClientError::new(format!("unknown audio ref {audio}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a64(audio.as_bytes()));
        let mut words = Vec::new();
        for word in crate::metrics::normalize(&text).split_whitespace() {
            if rng.random::<f64>() < self.noise.deletion_rate {
                continue;
            }
            if rng.random::<f64>() < self.noise.substitution_rate {
                words.push(format!("{word}x"));
            } else {
                words.push(word.to_string());
            }
        }
        Ok(words.join(" "))
    }
}

/// FNV-1a, used over a std hasher for cross-version stability of mock
/// audio refs.
fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}
