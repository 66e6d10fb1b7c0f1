//! Length and padding statistics for the sequence layouts.
//!
//! Everything here is measured by running the canonical muxers from
//! [`crate::patterns`] on real pairs — lengths come from construction, not
//! from closed forms. The one closed form offered, [`expected_reduction`],
//! is the analytical companion used to sanity-check corpus measurements:
//! given a pad-to-text ratio it predicts how much shorter the early-stop
//! layout is than the fixed-ratio interleaved one.
//!
//! A corpus whose interleaved streams carry 2.95 pads per text token at a
//! 1:2 ratio shrinks to about 75% of its original length under the
//! early-stop layout; [`CorpusReport`] reproduces that measurement and
//! [`expected_reduction`] its 0.7511 closed form.

use crate::patterns::{mux_esi, mux_interleaved, ChannelPair, InterleaveConfig, MuxError};
use crate::vocab::{TokenClass, VocabSpec};
use serde::Serialize;
use thiserror::Error;

/// Speech tokens produced per second of audio by the assumed tokenizer.
pub const DEFAULT_TOKENS_PER_SECOND: f64 = 25.0;

/// Per-pair length accounting under both interleaved layouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthReport {
    pub len_interleaved: usize,
    pub len_esi: usize,
    /// Pad tokens in the interleaved stream (the early-stop stream never
    /// has any).
    pub pad_count: usize,
    /// `len_esi / len_interleaved`. For pad-free pairs the marker makes the
    /// early-stop stream one token longer, so this can slightly exceed 1
    /// (at most `1 + 1/len_interleaved`); it is reported uncapped.
    pub reduction: f64,
    /// 0-based index of the first speech token in the interleaved stream.
    pub first_speech_interleaved: usize,
    /// 0-based index of the first speech token in the early-stop stream.
    pub first_speech_esi: usize,
    /// Speech content length divided by the token rate.
    pub est_audio_seconds: f64,
}

/// One failed record inside an otherwise usable corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordFailure {
    /// 0-based position in the input stream.
    pub index: usize,
    pub error: String,
}

/// Corpus-level aggregation of [`LengthReport`]s.
///
/// Statistics cover the records that multiplex successfully; failures are
/// collected in `failures` rather than aborting the pass. All statistics
/// are order-independent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    /// Records that multiplexed successfully.
    pub n: usize,
    pub n_failed: usize,
    pub mean_len_interleaved: f64,
    pub median_len_interleaved: f64,
    pub mean_len_esi: f64,
    pub median_len_esi: f64,
    /// Mean of per-record `len_esi / len_interleaved`.
    pub mean_reduction: f64,
    /// Total pads over total text tokens, the text EOS counted as text.
    pub pad_to_text_ratio: f64,
    /// Same numerator with the text EOS excluded from the denominator.
    pub pad_to_text_ratio_excl_eos: f64,
    pub p50_len_interleaved: usize,
    pub p90_len_interleaved: usize,
    pub p99_len_interleaved: usize,
    pub p50_len_esi: usize,
    pub p90_len_esi: usize,
    pub p99_len_esi: usize,
    pub failures: Vec<RecordFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("no record multiplexed successfully ({failed} failed)")]
    NoUsableRecords { failed: usize },
    #[error(transparent)]
    Mux(#[from] MuxError),
}

/// Closed-form length reduction predicted for a corpus with the given
/// pad-to-text ratio, in both the asymptotic and finite-length readings.
///
/// With `p` pads per text token, each text token drags along
/// `s = (1 + p) · r_speech / r_text` speech tokens. The interleaved stream
/// then spends `1 + p + s` tokens per text token while the early-stop
/// stream spends `1 + s` plus a single marker for the whole sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectedReduction {
    pub pad_to_text_ratio: f64,
    /// Speech tokens per text token implied by the ratio and the config.
    pub speech_per_text: f64,
    /// `(1 + s) / (1 + p + s)` — the marker amortized away entirely.
    pub asymptotic: f64,
}

impl ExpectedReduction {
    /// The finite-length reduction `(T + 1 + S) / (T + P + S)` for a text
    /// channel of `text_len` tokens, charging the marker its single token.
    pub fn with_marker(&self, text_len: f64) -> f64 {
        let p = self.pad_to_text_ratio * text_len;
        let s = self.speech_per_text * text_len;
        (text_len + 1.0 + s) / (text_len + p + s)
    }
}

/// Measure one pair under both interleaved layouts by muxing it.
pub fn length_report(
    pair: &ChannelPair,
    cfg: &InterleaveConfig,
    vocab: &VocabSpec,
    tokens_per_second: f64,
) -> Result<LengthReport, MuxError> {
    if tokens_per_second.is_nan() || tokens_per_second <= 0.0 {
        return Err(MuxError::InvalidConfig("tokens_per_second must be positive"));
    }
    let interleaved = mux_interleaved(pair, cfg, vocab)?;
    let esi = mux_esi(pair, cfg, vocab)?;
    let pad_count = interleaved
        .tokens
        .iter()
        .filter(|&&t| vocab.classify(t) == TokenClass::TextPad)
        .count();
    let first_speech = |tokens: &[u32]| {
        tokens
            .iter()
            .position(|&t| vocab.classify(t).is_speech_side())
            .expect("valid pairs have a non-empty speech channel")
    };
    let speech_content = pair
        .speech_tokens
        .iter()
        .filter(|&&t| vocab.classify(t) == TokenClass::SpeechContent)
        .count();
    Ok(LengthReport {
        len_interleaved: interleaved.len(),
        len_esi: esi.len(),
        pad_count,
        reduction: esi.len() as f64 / interleaved.len() as f64,
        first_speech_interleaved: first_speech(&interleaved.tokens),
        first_speech_esi: first_speech(&esi.tokens),
        est_audio_seconds: speech_content as f64 / tokens_per_second,
    })
}

/// Aggregate [`length_report`] over a corpus in one pass.
///
/// Records that fail to multiplex are collected into
/// [`CorpusReport::failures`]; only a corpus with zero usable records is an
/// error.
pub fn corpus_report<I>(
    pairs: I,
    cfg: &InterleaveConfig,
    vocab: &VocabSpec,
) -> Result<CorpusReport, AnalyticsError>
where
    I: IntoIterator<Item = ChannelPair>,
{
    vocab.validate().map_err(MuxError::from)?;
    cfg.validate()?;

    let mut il_lens: Vec<usize> = Vec::new();
    let mut esi_lens: Vec<usize> = Vec::new();
    let mut reduction_sum = 0.0;
    let mut total_pads = 0usize;
    let mut total_text = 0usize;
    let mut failures = Vec::new();

    for (index, pair) in pairs.into_iter().enumerate() {
        match length_report(&pair, cfg, vocab, DEFAULT_TOKENS_PER_SECOND) {
            Ok(report) => {
                il_lens.push(report.len_interleaved);
                esi_lens.push(report.len_esi);
                reduction_sum += report.reduction;
                total_pads += report.pad_count;
                total_text += pair.text_tokens.len();
            }
            Err(error) => failures.push(RecordFailure {
                index,
                error: error.to_string(),
            }),
        }
    }

    let n = il_lens.len();
    if n == 0 {
        return Err(AnalyticsError::NoUsableRecords {
            failed: failures.len(),
        });
    }
    il_lens.sort_unstable();
    esi_lens.sort_unstable();
    let mean = |lens: &[usize]| lens.iter().sum::<usize>() as f64 / lens.len() as f64;
    let total_text_content = total_text - n; // one EOS per record
    Ok(CorpusReport {
        n,
        n_failed: failures.len(),
        mean_len_interleaved: mean(&il_lens),
        median_len_interleaved: median(&il_lens),
        mean_len_esi: mean(&esi_lens),
        median_len_esi: median(&esi_lens),
        mean_reduction: reduction_sum / n as f64,
        pad_to_text_ratio: total_pads as f64 / total_text as f64,
        pad_to_text_ratio_excl_eos: if total_text_content == 0 {
            0.0
        } else {
            total_pads as f64 / total_text_content as f64
        },
        p50_len_interleaved: percentile(&il_lens, 50.0),
        p90_len_interleaved: percentile(&il_lens, 90.0),
        p99_len_interleaved: percentile(&il_lens, 99.0),
        p50_len_esi: percentile(&esi_lens, 50.0),
        p90_len_esi: percentile(&esi_lens, 90.0),
        p99_len_esi: percentile(&esi_lens, 99.0),
        failures,
    })
}

/// Closed-form reduction for a corpus at the given pad-to-text ratio.
///
/// Scale-invariant in the chunking: only `r_speech / r_text` matters, so
/// 1:2 and 5:10 predict identically.
///
/// # Panics
/// If `pad_to_text_ratio` is negative or the config is invalid.
pub fn expected_reduction(pad_to_text_ratio: f64, cfg: &InterleaveConfig) -> ExpectedReduction {
    assert!(
        pad_to_text_ratio >= 0.0,
        "pad_to_text_ratio must be non-negative"
    );
    assert!(cfg.validate().is_ok(), "config must be valid");
    let speech_per_text = (1.0 + pad_to_text_ratio) * cfg.r_speech as f64 / cfg.r_text as f64;
    ExpectedReduction {
        pad_to_text_ratio,
        speech_per_text,
        asymptotic: (1.0 + speech_per_text) / (1.0 + pad_to_text_ratio + speech_per_text),
    }
}

/// Nearest-rank percentile over an ascending-sorted slice.
fn percentile(sorted: &[usize], q: f64) -> usize {
    debug_assert!(!sorted.is_empty());
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn median(sorted: &[usize]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    }
}
