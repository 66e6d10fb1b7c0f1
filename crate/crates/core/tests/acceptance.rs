//! Release gate: one test per shipped guarantee, each printing a single
//! `[PASS]`/`[FAIL]` line (visible under `--nocapture`). Every check runs
//! against independently generated data with fixed seeds, and numeric
//! claims carry explicit tolerances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::time::Instant;
use tokweave::curation::{
    curate, AnswerRewriter, AsrClient, AudioRef, ClientError, ClientSuite, CurationConfig,
    CurationStatus, QaSourceRecord, TtsClient,
};
use tokweave::demux::{demux_all, demux_all_frames, DemuxError, DemuxEvent};
use tokweave::metrics::{evaluate, wer, Containment, QaEvalRecord};
use tokweave::patterns::{
    mux_esi, mux_interleaved, mux_parallel, ChannelPair, InterleaveConfig, ParallelConfig,
};
use tokweave::simulator::{corrupt_token, CorruptionMode, Schedule};
use tokweave::vocab::VocabSpec;
use tokweave::{corpus_report, expected_reduction, length_report};

const TEXT_EOS: u32 = 4094;
const SPEECH_EOS: u32 = 10645;

/// Evaluate `check`; print exactly one gate line; panic on failure.
fn criterion(number: usize, name: &str, check: impl FnOnce() -> Result<String, String>) {
    match check() {
        Ok(detail) => println!("[PASS] {number}. {name}: {detail}"),
        Err(reason) => {
            println!("[FAIL] {number}. {name}: {reason}");
            panic!("acceptance criterion {number} ({name}) failed: {reason}");
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        match $cond {
            true => {}
            false => return Err(format!($($arg)+)),
        }
    };
}

/// A random pair with `t` text tokens and `s` speech tokens, EOS included
/// on both channels.
fn random_pair(rng: &mut ChaCha8Rng, t: usize, s: usize) -> ChannelPair {
    let mut text: Vec<u32> = (1..t).map(|_| rng.random_range(0..4094)).collect();
    text.push(TEXT_EOS);
    let mut speech: Vec<u32> = (1..s).map(|_| rng.random_range(4096..10645)).collect();
    speech.push(SPEECH_EOS);
    ChannelPair::new(text, speech)
}

/// Smallest muxable speech length for `t` text tokens, per schedule.
fn min_speech(schedule: &Schedule, t: usize) -> usize {
    match schedule {
        Schedule::Interleaved(c) => (t.div_ceil(c.r_text) - 1) * c.r_speech + 1,
        Schedule::EarlyStop(c) => (t - 1) / c.r_text * c.r_speech + 1,
        Schedule::Parallel(c) => (t - 1) * c.k + 1,
    }
}

fn random_pair_for(rng: &mut ChaCha8Rng, schedule: &Schedule, max_extra: usize) -> ChannelPair {
    let t = rng.random_range(1..=40);
    let s = min_speech(schedule, t) + rng.random_range(0..=max_extra);
    random_pair(rng, t, s)
}

fn decode_tokens(
    schedule: Schedule,
    vocab: &VocabSpec,
    tokens: &[u32],
) -> Result<ChannelPair, DemuxError> {
    let mut demuxer = schedule.demuxer(*vocab).expect("valid schedule");
    for &token in tokens {
        demuxer.feed(token)?;
    }
    Ok(demuxer.finish()?.pair)
}

#[test]
fn criterion_1_round_trip_identity() {
    criterion(1, "round-trip identity, 10k pairs per pattern", || {
        let vocab = VocabSpec::default();
        let started = Instant::now();
        let interleaved: Vec<Schedule> = [(1, 2), (5, 10), (13, 26)]
            .iter()
            .map(|&(a, b)| Schedule::Interleaved(InterleaveConfig::new(a, b)))
            .collect();
        let parallel: Vec<Schedule> = [1usize, 2, 15]
            .iter()
            .map(|&k| Schedule::Parallel(ParallelConfig::new(k)))
            .collect();
        let esi = Schedule::EarlyStop(InterleaveConfig::new(5, 10));

        let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
        let mut total = 0usize;
        for i in 0..10_000 {
            for schedule in [
                interleaved[i % interleaved.len()],
                esi,
                parallel[i % parallel.len()],
            ] {
                let pair = random_pair_for(&mut rng, &schedule, 60);
                let tokens = schedule
                    .mux_tokens(&pair, &vocab)
                    .map_err(|e| format!("mux failed under {schedule}: {e}"))?;
                let decoded = decode_tokens(schedule, &vocab, &tokens)
                    .map_err(|e| format!("decode failed under {schedule}: {e}"))?;
                ensure!(decoded == pair, "round trip changed the pair under {schedule}");
                total += 1;
            }
        }
        let elapsed = started.elapsed();
        ensure!(
            elapsed.as_secs_f64() < 30.0,
            "took {elapsed:?}, budget is 30s"
        );
        Ok(format!("{total} round trips, 0 failures, {elapsed:.2?}"))
    });
}

#[test]
fn criterion_2_reduction_reproduction() {
    criterion(2, "mean length reduction on a 2.95 pads-to-text corpus", || {
        // Text lengths 20/40/60 with speech = 7.9× text give exactly 2.95
        // pads per text token at ratio 1:2.
        let mut rng = ChaCha8Rng::seed_from_u64(0xB2);
        let corpus: Vec<ChannelPair> = (0..300)
            .map(|i| {
                let t = [20, 40, 60][i % 3];
                random_pair(&mut rng, t, t * 79 / 10)
            })
            .collect();
        let cfg = InterleaveConfig::new(1, 2);
        let report = corpus_report(corpus, &cfg, &VocabSpec::default())
            .map_err(|e| format!("corpus_report failed: {e}"))?;
        ensure!(
            (report.pad_to_text_ratio - 2.95).abs() < 1e-12,
            "corpus pads-to-text is {}, wanted 2.95",
            report.pad_to_text_ratio
        );
        ensure!(
            (0.745..=0.757).contains(&report.mean_reduction),
            "mean reduction {} outside [0.745, 0.757]",
            report.mean_reduction
        );
        let closed_form = expected_reduction(2.95, &cfg).asymptotic;
        ensure!(
            (closed_form - 0.7511).abs() < 1e-3,
            "closed-form reduction {closed_form} is not ≈0.7511"
        );
        ensure!(
            (report.mean_reduction - closed_form).abs() < 0.01,
            "measured {} vs closed-form {closed_form} differ by >0.01",
            report.mean_reduction
        );
        Ok(format!(
            "mean reduction {:.4} (closed form {closed_form:.4})",
            report.mean_reduction
        ))
    });
}

#[test]
fn criterion_3_esi_length_law() {
    criterion(3, "early-stop length law and strict win under padding", || {
        let vocab = VocabSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
        let mut padded_wins = 0usize;
        for _ in 0..2_000 {
            let cfg = InterleaveConfig::new(rng.random_range(1..=8), rng.random_range(1..=16));
            let schedule = Schedule::Interleaved(cfg);
            let pair = random_pair_for(&mut rng, &schedule, 60);
            let il = mux_interleaved(&pair, &cfg, &vocab).map_err(|e| e.to_string())?;
            let esi = mux_esi(&pair, &cfg, &vocab).map_err(|e| e.to_string())?;
            let (t, s) = (pair.text_tokens.len(), pair.speech_tokens.len());
            ensure!(
                esi.len() == t + s + 1,
                "|esi| = {} for t={t}, s={s}; wanted {}",
                esi.len(),
                t + s + 1
            );
            let pads = il.len() - t - s;
            if pads >= 2 {
                ensure!(
                    esi.len() < il.len(),
                    "{pads} pads but esi ({}) is not shorter than interleaved ({})",
                    esi.len(),
                    il.len()
                );
                padded_wins += 1;
            }
        }
        ensure!(padded_wins > 200, "only {padded_wins} padded cases generated");
        Ok(format!(
            "2000 pairs hold the law; {padded_wins} with ≥2 pads were all shorter"
        ))
    });
}

/// Independent edit-distance oracle: plain memoized recursion, no shared
/// code with the library implementation.
fn oracle_distance(a: &[String], b: &[String]) -> usize {
    fn go(
        a: &[String],
        b: &[String],
        i: usize,
        j: usize,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if i == a.len() {
            return b.len() - j;
        }
        if j == b.len() {
            return a.len() - i;
        }
        if let Some(&d) = memo.get(&(i, j)) {
            return d;
        }
        let d = if a[i] == b[j] {
            go(a, b, i + 1, j + 1, memo)
        } else {
            let sub = go(a, b, i + 1, j + 1, memo);
            let del = go(a, b, i + 1, j, memo);
            let ins = go(a, b, i, j + 1, memo);
            1 + sub.min(del).min(ins)
        };
        memo.insert((i, j), d);
        d
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

#[test]
fn criterion_4_wer_oracle_equivalence() {
    criterion(4, "word error rate equals an independent oracle", || {
        const ALPHABET: [&str; 3] = ["cat", "dog", "bird"];
        fn words(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
            (0..len)
                .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())].to_string())
                .collect()
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0xD4);
        for case in 0..5_000 {
            let ref_len = rng.random_range(1..=8);
            let hyp_len = rng.random_range(0..=8);
            let reference = words(&mut rng, ref_len);
            let hypothesis = words(&mut rng, hyp_len);
            let breakdown = wer(&reference.join(" "), &hypothesis.join(" "))
                .map_err(|e| format!("case {case}: {e}"))?;
            let distance = oracle_distance(&reference, &hypothesis);
            let edits = breakdown.substitutions + breakdown.deletions + breakdown.insertions;
            ensure!(
                edits == distance,
                "case {case}: breakdown total {edits} vs oracle {distance} \
                 (ref {reference:?}, hyp {hypothesis:?})"
            );
            let expected = distance as f64 / reference.len() as f64;
            ensure!(
                breakdown.wer == expected,
                "case {case}: wer {} vs oracle {expected}",
                breakdown.wer
            );
        }
        for case in 0..1_000 {
            let len = rng.random_range(1..=12);
            let x = words(&mut rng, len).join(" ");
            let breakdown = wer(&x, &x).map_err(|e| format!("identity case {case}: {e}"))?;
            ensure!(breakdown.wer == 0.0, "wer(x, x) = {} for {x:?}", breakdown.wer);
        }
        Ok("5000 random pairs match the oracle exactly; 1000 identities are 0".into())
    });
}

/// Passes the answer phrase through unchanged, so transcript word counts
/// are exactly the answer's.
struct IdentityRewriter;

impl AnswerRewriter for IdentityRewriter {
    fn rewrite(&self, _question: &str, answer: &str) -> Result<String, ClientError> {
        Ok(answer.to_string())
    }
}

type SharedTexts = std::sync::Arc<std::sync::Mutex<HashMap<AudioRef, String>>>;

/// Remembers text keyed by a counter ref.
struct CountingTts {
    texts: SharedTexts,
}

impl TtsClient for CountingTts {
    fn synthesize(&self, text: &str, _speaker: u64) -> Result<AudioRef, ClientError> {
        let mut texts = self.texts.lock().unwrap();
        let audio_ref = format!("audio:{}", texts.len());
        texts.insert(audio_ref.clone(), text.to_string());
        Ok(audio_ref)
    }
}

/// Substitutes exactly `n` trailing words where the text's first word is
/// `sub{n}` — engineered per-record corruption with a known WER.
struct EngineeredAsr {
    texts: SharedTexts,
}

impl AsrClient for EngineeredAsr {
    fn transcribe(&self, audio: &AudioRef) -> Result<String, ClientError> {
        let text = self.texts.lock().unwrap()[audio].clone();
        let mut words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let n: usize = words[0]
            .strip_prefix("sub")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| ClientError::new("malformed engineered answer"))?;
        let len = words.len();
        for word in &mut words[len - n..] {
            word.push('q');
        }
        Ok(words.join(" "))
    }
}

#[test]
fn criterion_5_curation_filter_exactness() {
    criterion(5, "curation keeps exactly the WER ≤ 0.20 set", || {
        // 10-word answers with 0..=10 engineered substitutions: WER is
        // exactly n/10, so n = 2 sits on the 0.20 boundary and must stay.
        let records: Vec<QaSourceRecord> = (0..220)
            .map(|i| {
                let n = i % 11;
                let mut words = vec![format!("sub{n}")];
                words.extend((1..10).map(|w| format!("word{w}")));
                QaSourceRecord {
                    id: format!("r{i}"),
                    question_text: "q?".into(),
                    answer_phrase: words.join(" "),
                }
            })
            .collect();
        let texts: SharedTexts = Default::default();
        let suite = ClientSuite {
            rewriter: Box::new(IdentityRewriter),
            tts: Box::new(CountingTts {
                texts: texts.clone(),
            }),
            asr: Box::new(EngineeredAsr { texts }),
        };
        let config = CurationConfig {
            wer_threshold: 0.2,
            speaker_pool_size: 4,
            seed: 0,
        };
        let (out, summary) =
            curate(records, &suite, config).map_err(|e| format!("curate failed: {e}"))?;
        let mut boundary_kept = 0usize;
        for (i, record) in out.iter().enumerate() {
            let n = i % 11;
            let expected_wer = n as f64 / 10.0;
            ensure!(
                record.answer_wer == Some(expected_wer),
                "record {i}: wer {:?}, engineered {expected_wer}",
                record.answer_wer
            );
            let should_keep = record.answer_wer.unwrap() <= 0.2;
            ensure!(
                (record.status == CurationStatus::Kept) == should_keep,
                "record {i}: wer {expected_wer} but status {:?}",
                record.status
            );
            if n == 2 {
                ensure!(
                    record.status == CurationStatus::Kept,
                    "boundary wer 0.20 was dropped"
                );
                boundary_kept += 1;
            }
        }
        ensure!(boundary_kept == 20, "expected 20 boundary records, saw {boundary_kept}");
        Ok(format!(
            "kept {} of {} — exactly the wer ≤ 0.20 set, boundary included",
            summary.kept, summary.total
        ))
    });
}

#[test]
fn criterion_6_streaming_batch_equivalence() {
    criterion(6, "streaming demux is prefix-monotonic and matches batch", || {
        let vocab = VocabSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0xE6);
        let schedules = [
            Schedule::Interleaved(InterleaveConfig::new(1, 2)),
            Schedule::Interleaved(InterleaveConfig::new(5, 10)),
            Schedule::EarlyStop(InterleaveConfig::new(5, 10)),
            Schedule::Parallel(ParallelConfig::new(2)),
        ];
        for case in 0..1_000 {
            let schedule = schedules[case % schedules.len()];
            let pair = random_pair_for(&mut rng, &schedule, 40);
            let tokens = schedule.mux_tokens(&pair, &vocab).map_err(|e| e.to_string())?;

            // Full pass: events indexed by how many tokens were consumed
            // when each was emitted.
            let mut demuxer = schedule.demuxer(vocab).unwrap();
            let mut full: Vec<(usize, DemuxEvent)> = Vec::new();
            for (i, &token) in tokens.iter().enumerate() {
                let events = demuxer.feed(token).map_err(|e| format!("case {case}: {e}"))?;
                full.extend(events.map(|e| (i + 1, e)));
            }
            let streamed_pair = demuxer.finish().map_err(|e| format!("case {case}: {e}"))?.pair;

            // Prefix passes: decoding the first n tokens yields exactly the
            // events of the full pass emitted by then.
            for _ in 0..6 {
                let n = rng.random_range(0..=tokens.len());
                let mut prefix_demuxer = schedule.demuxer(vocab).unwrap();
                let mut prefix: Vec<DemuxEvent> = Vec::new();
                for &token in &tokens[..n] {
                    prefix.extend(
                        prefix_demuxer
                            .feed(token)
                            .map_err(|e| format!("case {case}: prefix replay: {e}"))?,
                    );
                }
                let expected: Vec<DemuxEvent> = full
                    .iter()
                    .take_while(|(at, _)| *at <= n)
                    .map(|&(_, e)| e)
                    .collect();
                ensure!(
                    prefix == expected,
                    "case {case}: events after {n} tokens diverge from the full pass"
                );
            }

            // Batch decode agrees with the streamed result and the input.
            let batch_pair = match schedule {
                Schedule::Interleaved(cfg) => {
                    let seq = mux_interleaved(&pair, &cfg, &vocab).map_err(|e| e.to_string())?;
                    demux_all(&seq, &vocab)
                }
                Schedule::EarlyStop(cfg) => {
                    let seq = mux_esi(&pair, &cfg, &vocab).map_err(|e| e.to_string())?;
                    demux_all(&seq, &vocab)
                }
                Schedule::Parallel(cfg) => {
                    let frames = mux_parallel(&pair, &cfg, &vocab).map_err(|e| e.to_string())?;
                    demux_all_frames(&frames, &vocab, cfg.append_speech_eos)
                }
            }
            .map_err(|e| format!("case {case}: batch decode: {e}"))?;
            ensure!(
                streamed_pair == batch_pair && streamed_pair == pair,
                "case {case}: streaming, batch, and input pairs disagree"
            );
        }
        Ok("1000 streams: all prefixes consistent, all pairs equal batch".into())
    });
}

#[test]
fn criterion_7_fuzzed_error_paths() {
    criterion(7, "single-token corruption is always caught or benign", || {
        let vocab = VocabSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0xF7);
        let schedules = [
            Schedule::Interleaved(InterleaveConfig::new(1, 2)),
            Schedule::Interleaved(InterleaveConfig::new(5, 10)),
            Schedule::EarlyStop(InterleaveConfig::new(5, 10)),
            Schedule::Parallel(ParallelConfig::new(1)),
            Schedule::Parallel(ParallelConfig::new(2)),
        ];

        // Cross-class corruption: the replacement belongs to the other
        // channel, so the decode must fail at exactly the edited index.
        for case in 0..10_000 {
            let schedule = schedules[case % schedules.len()];
            let pair = random_pair_for(&mut rng, &schedule, 40);
            let mut tokens = schedule.mux_tokens(&pair, &vocab).map_err(|e| e.to_string())?;
            let at = rng.random_range(0..tokens.len());
            let original = tokens[at];
            tokens[at] = corrupt_token(original, CorruptionMode::OppositeClass, &vocab, &mut rng);
            ensure!(tokens[at] != original, "case {case}: corruption was a no-op");
            match decode_tokens(schedule, &vocab, &tokens) {
                Err(error) => ensure!(
                    error.index == at,
                    "case {case} ({schedule}): corrupted index {at}, error `{error}`"
                ),
                Ok(_) => {
                    return Err(format!(
                        "case {case} ({schedule}): cross-class corruption at {at} decoded cleanly"
                    ))
                }
            }
        }

        // Unrestricted corruption: a replacement may still parse (e.g. one
        // content id for another) — then the decoded pair must re-encode to
        // the corrupted stream, never to something silently different.
        let mut benign = 0usize;
        for case in 0..2_000 {
            let schedule = schedules[case % schedules.len()];
            let pair = random_pair_for(&mut rng, &schedule, 40);
            let mut tokens = schedule.mux_tokens(&pair, &vocab).map_err(|e| e.to_string())?;
            let at = rng.random_range(0..tokens.len());
            tokens[at] = rng.random_range(0..12_000);
            if let Ok(decoded) = decode_tokens(schedule, &vocab, &tokens) {
                let reencoded = schedule
                    .mux_tokens(&decoded, &vocab)
                    .map_err(|e| format!("case {case}: accepted pair failed to re-encode: {e}"))?;
                ensure!(
                    reencoded == tokens,
                    "case {case} ({schedule}): decode accepted a stream it cannot reproduce"
                );
                benign += 1;
            }
        }
        Ok(format!(
            "10000 cross-class edits all failed at their index; 2000 free edits: {benign} benign, rest typed errors"
        ))
    });
}

#[test]
fn criterion_8_first_speech_position() {
    criterion(8, "first speech token lands where the layout dictates", || {
        let vocab = VocabSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0x18);
        let first_speech = |schedule: Schedule, pair: &ChannelPair| -> Result<usize, String> {
            let tokens = schedule.mux_tokens(pair, &vocab).map_err(|e| e.to_string())?;
            tokens
                .iter()
                .position(|&t| vocab.classify(t).is_speech_side())
                .ok_or_else(|| "stream had no speech tokens".to_string())
        };

        let il_cfg = InterleaveConfig::new(1, 2);
        let il = Schedule::Interleaved(il_cfg);
        for _ in 0..500 {
            let pair = random_pair_for(&mut rng, &il, 40);
            let at = first_speech(il, &pair)?;
            ensure!(at == 1, "interleaved 1:2 put first speech at {at}");
            let report =
                length_report(&pair, &il_cfg, &vocab, 25.0).map_err(|e| e.to_string())?;
            ensure!(
                report.first_speech_interleaved == at,
                "analytics reports index {}, stream shows {at}",
                report.first_speech_interleaved
            );
        }

        // Early stop emits speech at r_text once the text channel is longer
        // than one chunk; shorter channels finish first (text, EOS, marker)
        // and speech follows at |text|+1.
        let esi_cfg = InterleaveConfig::new(5, 10);
        let esi = Schedule::EarlyStop(esi_cfg);
        let mut short = 0usize;
        for case in 0..500 {
            let t = 1 + case % 20;
            let s = min_speech(&esi, t) + rng.random_range(0..=40);
            let pair = random_pair(&mut rng, t, s);
            let at = first_speech(esi, &pair)?;
            let expected = if t > 5 { 5 } else { t + 1 };
            ensure!(
                at == expected,
                "esi 5:10 with |text|={t} put first speech at {at}, construction gives {expected}"
            );
            let report =
                length_report(&pair, &esi_cfg, &vocab, 25.0).map_err(|e| e.to_string())?;
            ensure!(
                report.first_speech_esi == at,
                "analytics reports index {}, stream shows {at}",
                report.first_speech_esi
            );
            if t < 5 {
                ensure!(at <= 5, "|text|={t} < 5 but index {at} > 5");
                short += 1;
            }
        }
        ensure!(short > 50, "too few short-text cases ({short})");
        Ok("interleaved 1:2 always index 1; esi 5:10 at r_text for long text, |text|+1 otherwise".into())
    });
}

#[test]
fn criterion_9_evaluation_protocol_sanity() {
    criterion(9, "transcripts equal to text outputs score identically", || {
        // 7 of 10 answers hit; every transcript is the text output itself.
        let records: Vec<QaEvalRecord> = (0..10)
            .map(|i| {
                let hit = i < 7;
                let text_output = if hit {
                    format!("The answer is item{i}.")
                } else {
                    "I do not know.".to_string()
                };
                QaEvalRecord {
                    id: format!("q{i}"),
                    references: vec![format!("item{i}")],
                    text_output: text_output.clone(),
                    speech_transcript: Some(text_output),
                }
            })
            .collect();
        let report = evaluate(records, Containment::WordBoundary)
            .map_err(|e| format!("evaluate failed: {e}"))?;
        ensure!(report.s2t == 0.7, "s2t = {}, wanted 0.7", report.s2t);
        ensure!(
            report.s2s == Some(report.s2t),
            "s2s {:?} != s2t {}",
            report.s2s,
            report.s2t
        );
        ensure!(report.rel == Some(1.0), "rel = {:?}, wanted 1.0", report.rel);
        ensure!(
            report.mean_wer == Some(0.0),
            "mean_wer = {:?}, wanted 0.0",
            report.mean_wer
        );
        Ok("s2s = s2t = 0.7, rel = 1.0, mean_wer = 0 exactly".into())
    });
}
