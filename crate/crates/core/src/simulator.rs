//! Stream simulation and throughput measurement: drive a [`Demuxer`] with
//! generated token streams — faithful replays of channel pairs, fixed
//! scripts, or deliberately corrupted variants — and record everything it
//! does.
//!
//! [`run`] executes one stream and yields a [`RunTranscript`]: the indexed
//! event log, the first decode error (if any), and timing. A transcript
//! carries an error exactly when the stream failed to reach `StreamDone`.
//! [`bench`] replays a whole corpus (optionally across threads) and
//! summarizes per-stream decode throughput.
//!
//! Corruption is reproducible: replacements come from a seeded RNG, and
//! [`corrupt_token`] exposes the single-token replacement rule so tests can
//! target exact positions. `OppositeClass` swaps a token across channels
//! (text-side ids become uniform speech-range ids and vice versa; the
//! early-stop marker becomes a coin-flip of either), which a demuxer must
//! reject at exactly the corrupted index. `UniformRandom` redraws over the
//! whole id space and may — rarely — land on a token that still parses.

use crate::demux::{DemuxError, DemuxEvent, Demuxer};
use crate::patterns::{
    mux_esi, mux_interleaved, mux_parallel, ChannelPair, InterleaveConfig, MuxError,
    ParallelConfig,
};
use crate::vocab::VocabSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::{Duration, Instant};

/// Which layout a simulated stream uses, with its shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Interleaved(InterleaveConfig),
    EarlyStop(InterleaveConfig),
    Parallel(ParallelConfig),
}

impl Schedule {
    /// Multiplex a pair into the flat token stream this schedule decodes.
    pub fn mux_tokens(&self, pair: &ChannelPair, vocab: &VocabSpec) -> Result<Vec<u32>, MuxError> {
        match self {
            Schedule::Interleaved(cfg) => Ok(mux_interleaved(pair, cfg, vocab)?.tokens),
            Schedule::EarlyStop(cfg) => Ok(mux_esi(pair, cfg, vocab)?.tokens),
            Schedule::Parallel(cfg) => Ok(mux_parallel(pair, cfg, vocab)?.flatten()),
        }
    }

    /// A fresh streaming decoder for this schedule.
    pub fn demuxer(&self, vocab: VocabSpec) -> Result<Demuxer, MuxError> {
        match self {
            Schedule::Interleaved(cfg) => Demuxer::interleaved(*cfg, vocab),
            Schedule::EarlyStop(cfg) => Demuxer::early_stop(*cfg, vocab),
            Schedule::Parallel(cfg) => Demuxer::parallel(*cfg, vocab),
        }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Schedule::Interleaved(c) => write!(f, "interleaved {}:{}", c.r_text, c.r_speech),
            Schedule::EarlyStop(c) => write!(f, "esi {}:{}", c.r_text, c.r_speech),
            Schedule::Parallel(c) => write!(f, "parallel k={}", c.k),
        }
    }
}

/// How a corrupted token is replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionMode {
    /// Replace with a uniform id from the *other* channel's range (marker:
    /// coin-flip of either range). Guaranteed to violate the layout at the
    /// corrupted position.
    OppositeClass,
    /// Replace with a uniform id over the whole vocabulary.
    UniformRandom,
}

/// Produces the token stream a simulation run decodes.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// Emit these tokens verbatim.
    Scripted(Vec<u32>),
    /// Multiplex this pair under the run's schedule — always a well-formed
    /// stream.
    Replay(ChannelPair),
    /// Corrupt another generator's output: each token is independently
    /// replaced with probability `rate`, reproducibly from `seed`.
    Corrupting {
        inner: Box<Generator>,
        rate: f64,
        seed: u64,
        mode: CorruptionMode,
    },
}

impl Generator {
    fn materialize(&self, schedule: Schedule, vocab: &VocabSpec) -> Result<Vec<u32>, MuxError> {
        match self {
            Generator::Scripted(tokens) => Ok(tokens.clone()),
            Generator::Replay(pair) => schedule.mux_tokens(pair, vocab),
            Generator::Corrupting {
                inner,
                rate,
                seed,
                mode,
            } => {
                if !(0.0..=1.0).contains(rate) {
                    return Err(MuxError::InvalidConfig("corruption rate must be in [0, 1]"));
                }
                let tokens = inner.materialize(schedule, vocab)?;
                Ok(corrupt_stream(&tokens, *rate, *mode, *seed, vocab).0)
            }
        }
    }
}

/// Replace each token independently with probability `rate`; returns the
/// corrupted stream and the positions that actually changed.
pub fn corrupt_stream(
    tokens: &[u32],
    rate: f64,
    mode: CorruptionMode,
    seed: u64,
    vocab: &VocabSpec,
) -> (Vec<u32>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(tokens.len());
    let mut changed = Vec::new();
    for (i, &tok) in tokens.iter().enumerate() {
        let emit = if rng.random::<f64>() < rate {
            corrupt_token(tok, mode, vocab, &mut rng)
        } else {
            tok
        };
        if emit != tok {
            changed.push(i);
        }
        out.push(emit);
    }
    (out, changed)
}

/// The single-token replacement rule behind [`CorruptionMode`].
pub fn corrupt_token(
    original: u32,
    mode: CorruptionMode,
    vocab: &VocabSpec,
    rng: &mut impl Rng,
) -> u32 {
    let text = vocab.text_range;
    let speech = vocab.speech_range;
    match mode {
        CorruptionMode::OppositeClass => {
            let class = vocab.classify(original);
            let to_speech = if class == crate::vocab::TokenClass::Marker {
                rng.random::<bool>()
            } else {
                class.is_text_side()
            };
            if to_speech {
                rng.random_range(speech.start..speech.end)
            } else {
                rng.random_range(text.start..text.end)
            }
        }
        CorruptionMode::UniformRandom => {
            let top = text
                .end
                .max(speech.end)
                .max(vocab.marker_id + 1)
                .max(vocab.eos_speech_id + 1);
            rng.random_range(0..top)
        }
    }
}

/// Everything one simulated stream did.
#[derive(Debug, Clone)]
pub struct RunTranscript {
    /// Demux events paired with the index of the token that produced them;
    /// events emitted at finish carry the stream length.
    pub events: Vec<(usize, DemuxEvent)>,
    /// First decode error. Present exactly when `StreamDone` was not
    /// reached.
    pub error: Option<DemuxError>,
    /// Tokens accepted before the stream ended or failed.
    pub tokens_consumed: usize,
    pub elapsed: Duration,
    /// Tokens consumed per second of decode time.
    pub throughput: f64,
}

impl RunTranscript {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Generate one stream, decode it to completion or first error, and report.
///
/// `Err` is reserved for setup problems (invalid config/vocab, or a
/// [`Generator::Replay`] pair the schedule cannot express); stream-level
/// decode failures land in the transcript instead.
pub fn run(
    generator: &Generator,
    schedule: Schedule,
    vocab: &VocabSpec,
) -> Result<RunTranscript, MuxError> {
    let tokens = generator.materialize(schedule, vocab)?;
    let mut demuxer = schedule.demuxer(*vocab)?;
    let started = Instant::now();
    let mut events = Vec::new();
    let mut error = None;
    for &token in &tokens {
        let i = demuxer.tokens_consumed();
        match demuxer.feed(token) {
            Ok(evs) => events.extend(evs.map(|e| (i, e))),
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    let tokens_consumed = demuxer.tokens_consumed();
    if error.is_none() && !demuxer.is_finished() {
        match demuxer.finish() {
            Ok(outcome) => events.extend(
                outcome
                    .closing_events
                    .into_iter()
                    .map(|e| (tokens_consumed, e)),
            ),
            Err(e) => error = Some(e),
        }
    }
    let elapsed = started.elapsed();
    let secs = elapsed.as_secs_f64().max(1e-9);
    Ok(RunTranscript {
        events,
        error,
        tokens_consumed,
        elapsed,
        throughput: tokens_consumed as f64 / secs,
    })
}

/// Decode-throughput summary over a corpus. Timing fields vary run to run
/// by nature; token counts are deterministic.
#[derive(Debug, Clone, Serialize)]
pub struct BenchSummary {
    /// Streams decoded (corpus size × repetitions).
    pub streams: usize,
    pub total_tokens: usize,
    pub elapsed_seconds: f64,
    /// Median per-stream decode rate, tokens/second.
    pub p50_tokens_per_sec: f64,
    /// 99th-percentile (nearest-rank) per-stream decode rate.
    pub p99_tokens_per_sec: f64,
    /// Total tokens over wall time.
    pub aggregate_tokens_per_sec: f64,
    /// Per-stream token counts in corpus × repetition order.
    #[serde(skip)]
    pub stream_tokens: Vec<usize>,
}

/// Multiplex `corpus` under `schedule` and decode every stream `reps`
/// times, split across `workers` threads; per-stream results keep corpus
/// order regardless of worker count.
pub fn bench(
    corpus: &[ChannelPair],
    schedule: Schedule,
    vocab: &VocabSpec,
    reps: usize,
    workers: usize,
) -> Result<BenchSummary, MuxError> {
    if corpus.is_empty() || reps == 0 {
        return Err(MuxError::InvalidConfig(
            "bench needs a non-empty corpus and at least one repetition",
        ));
    }
    if workers == 0 {
        return Err(MuxError::InvalidConfig("bench needs at least one worker"));
    }
    let mut streams = Vec::with_capacity(corpus.len() * reps);
    for pair in corpus {
        streams.push(schedule.mux_tokens(pair, vocab)?);
    }
    let items: Vec<&[u32]> = (0..reps)
        .flat_map(|_| streams.iter().map(Vec::as_slice))
        .collect();

    let decode_one = |tokens: &[u32]| -> (usize, f64) {
        let mut demuxer = schedule
            .demuxer(*vocab)
            .expect("schedule validated while muxing");
        let started = Instant::now();
        for &token in tokens {
            demuxer
                .feed(token)
                .expect("muxed streams decode without error");
        }
        (tokens.len(), started.elapsed().as_secs_f64().max(1e-9))
    };

    let started = Instant::now();
    let chunk = items.len().div_ceil(workers);
    let per_stream: Vec<(usize, f64)> = std::thread::scope(|scope| {
        let decode_one = &decode_one;
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|chunk| scope.spawn(move || chunk.iter().map(|t| decode_one(t)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("bench worker panicked"))
            .collect()
    });
    let elapsed_seconds = started.elapsed().as_secs_f64().max(1e-9);

    let total_tokens: usize = per_stream.iter().map(|(n, _)| n).sum();
    let mut rates: Vec<f64> = per_stream
        .iter()
        .map(|&(n, secs)| n as f64 / secs)
        .collect();
    rates.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    Ok(BenchSummary {
        streams: per_stream.len(),
        total_tokens,
        elapsed_seconds,
        p50_tokens_per_sec: percentile_f64(&rates, 50.0),
        p99_tokens_per_sec: percentile_f64(&rates, 99.0),
        aggregate_tokens_per_sec: total_tokens as f64 / elapsed_seconds,
        stream_tokens: per_stream.iter().map(|&(n, _)| n).collect(),
    })
}

/// Nearest-rank percentile of an ascending slice.
fn percentile_f64(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
