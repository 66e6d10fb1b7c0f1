//! `tokweave` — encode, decode, analyze, evaluate, curate, simulate, and
//! benchmark joint text+speech token streams over JSONL.
//!
//! Conventions shared by every subcommand:
//! - records stream one JSON object per line; corpora never need to fit in
//!   memory;
//! - `-` as a path means the standard stream (stdin or stdout; `--trace -`
//!   means stderr, keeping record output clean);
//! - data goes to stdout / `--out`, diagnostics to stderr;
//! - exit 0 on success, 1 on data errors (with a one-line diagnostic naming
//!   the record and position), 2 on usage errors;
//! - identical inputs, flags, and seeds produce identical output bytes.
//!   `bench` is the exception: it reports wall-clock timings.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use tokweave::analytics::corpus_report;
use tokweave::curation::{mock_clients, CurationConfig, Curator, NoiseSpec, QaSourceRecord};
use tokweave::demux::Demuxer;
use tokweave::jsonl::{
    read_jsonl, write_jsonl, FrameRecord, JsonlError, MixedRecord, PairRecord, TraceRecord,
};
use tokweave::metrics::{evaluate, Containment, QaEvalRecord};
use tokweave::patterns::{
    mux_esi, mux_interleaved, mux_parallel, ChannelPair, InterleaveConfig, MuxError,
    ParallelConfig, Pattern,
};
use tokweave::simulator::{self, CorruptionMode, Generator, Schedule};
use tokweave::vocab::VocabSpec;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

#[derive(Parser)]
#[command(
    name = "tokweave",
    version,
    about = "Reversible single-stream layouts for joint text+speech decoding"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multiplex channel-pair records into single-stream records.
    Encode(EncodeArgs),
    /// Demultiplex single-stream records back into channel pairs.
    Decode(DecodeArgs),
    /// Sequence-length statistics for a channel-pair corpus.
    Analyze(AnalyzeArgs),
    /// Score spoken-QA predictions (containment accuracy, WER).
    Eval(EvalArgs),
    /// Filter QA records through the rewrite → TTS → ASR → WER pipeline.
    Curate(CurateArgs),
    /// Replay a corpus (optionally corrupted) through the stream decoder.
    Simulate(SimulateArgs),
    /// Measure decode throughput over a corpus.
    Bench(BenchArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode(args) => cmd_encode(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Curate(args) => cmd_curate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

/// Failures mapped to exit codes: data problems exit 1, usage problems
/// exit 2 (matching clap's own parse failures).
enum CliError {
    Data(String),
    Usage(String),
}

impl CliError {
    /// Data error scoped to one record, e.g. `record q17: WrongChannel at
    /// index 3`.
    fn record(id: &str, error: impl std::fmt::Display) -> Self {
        CliError::Data(format!("record {id}: {error}"))
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<JsonlError> for CliError {
    fn from(e: JsonlError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MuxError> for CliError {
    fn from(e: MuxError) -> Self {
        CliError::Data(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Shared flags

#[derive(Args)]
struct IoArgs {
    /// Input path; "-" reads standard input.
    #[arg(long = "in", value_name = "PATH", default_value = "-")]
    input: String,
    /// Output path; "-" writes standard output.
    #[arg(long = "out", value_name = "PATH", default_value = "-")]
    output: String,
}

#[derive(Args)]
struct VocabArgs {
    /// Vocabulary layout as JSON; omit for the built-in default.
    #[arg(long, value_name = "PATH")]
    vocab: Option<PathBuf>,
}

impl VocabArgs {
    fn load(&self) -> Result<VocabSpec, CliError> {
        let Some(path) = &self.vocab else {
            return Ok(VocabSpec::default());
        };
        let file = File::open(path)
            .map_err(|e| CliError::Data(format!("vocab {}: {e}", path.display())))?;
        let spec: VocabSpec = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CliError::Data(format!("vocab {}: {e}", path.display())))?;
        spec.validate()
            .map_err(|e| CliError::Data(format!("vocab {}: {e}", path.display())))?;
        Ok(spec)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PatternKind {
    /// Fixed text/speech chunks with pad fill.
    Interleaved,
    /// Early-stop interleaved: marker after text EOS, then speech only.
    Esi,
    /// Frames of one text slot plus k speech slots.
    Parallel,
}

#[derive(Clone, Copy)]
struct Ratio {
    r_text: usize,
    r_speech: usize,
}

fn parse_ratio(s: &str) -> Result<Ratio, String> {
    let (text, speech) = s
        .split_once(':')
        .ok_or_else(|| format!("`{s}` is not of the form R_T:R_S (e.g. 5:10)"))?;
    let r_text: usize = text
        .parse()
        .map_err(|_| format!("`{text}` is not a positive integer"))?;
    let r_speech: usize = speech
        .parse()
        .map_err(|_| format!("`{speech}` is not a positive integer"))?;
    if r_text == 0 || r_speech == 0 {
        return Err("ratio terms must be positive".into());
    }
    Ok(Ratio { r_text, r_speech })
}

#[derive(Args)]
struct LayoutArgs {
    /// Stream layout.
    #[arg(long, value_enum)]
    pattern: PatternKind,
    /// Chunk ratio "R_T:R_S" (required for interleaved and esi).
    #[arg(long, value_parser = parse_ratio, value_name = "R_T:R_S")]
    ratio: Option<Ratio>,
    /// Speech slots per frame (required for parallel).
    #[arg(short, long, value_name = "N")]
    k: Option<usize>,
    /// Streams carry no trailing speech EOS (end on their last real token).
    #[arg(long)]
    no_speech_eos: bool,
}

/// A fully resolved layout choice.
enum Layout {
    Mixed(Pattern, InterleaveConfig),
    Frames(ParallelConfig),
}

impl LayoutArgs {
    fn resolve(&self) -> Result<Layout, CliError> {
        match self.pattern {
            PatternKind::Interleaved | PatternKind::Esi => {
                if self.k.is_some() {
                    return Err(CliError::Usage(
                        "--k applies only to --pattern parallel".into(),
                    ));
                }
                let ratio = self.ratio.ok_or_else(|| {
                    CliError::Usage("--ratio is required for interleaved and esi".into())
                })?;
                let cfg = InterleaveConfig {
                    r_text: ratio.r_text,
                    r_speech: ratio.r_speech,
                    append_speech_eos: !self.no_speech_eos,
                };
                let pattern = match self.pattern {
                    PatternKind::Interleaved => Pattern::Interleaved,
                    _ => Pattern::EarlyStopInterleaved,
                };
                Ok(Layout::Mixed(pattern, cfg))
            }
            PatternKind::Parallel => {
                if self.ratio.is_some() {
                    return Err(CliError::Usage(
                        "--ratio applies only to interleaved and esi".into(),
                    ));
                }
                let k = self
                    .k
                    .ok_or_else(|| CliError::Usage("--k is required for parallel".into()))?;
                Ok(Layout::Frames(ParallelConfig {
                    k,
                    append_speech_eos: !self.no_speech_eos,
                }))
            }
        }
    }

    fn schedule(&self) -> Result<Schedule, CliError> {
        Ok(match self.resolve()? {
            Layout::Mixed(Pattern::Interleaved, cfg) => Schedule::Interleaved(cfg),
            Layout::Mixed(Pattern::EarlyStopInterleaved, cfg) => Schedule::EarlyStop(cfg),
            Layout::Frames(cfg) => Schedule::Parallel(cfg),
        })
    }
}

// ---------------------------------------------------------------------------
// IO plumbing

fn open_input(path: &str) -> Result<Box<dyn BufRead>, CliError> {
    if path == "-" {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let file = File::open(path).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

fn open_output(path: &str) -> Result<Box<dyn Write>, CliError> {
    if path == "-" {
        Ok(Box::new(BufWriter::new(io::stdout())))
    } else {
        let file = File::create(path).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
        Ok(Box::new(BufWriter::new(file)))
    }
}

fn write_json_document<T: Serialize>(path: &str, value: &T) -> Result<(), CliError> {
    let mut writer = open_output(path)?;
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| CliError::Data(e.to_string()))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// encode / decode

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    vocab: VocabArgs,
    #[command(flatten)]
    io: IoArgs,
}

fn cmd_encode(args: EncodeArgs) -> Result<(), CliError> {
    let vocab = args.vocab.load()?;
    let layout = args.layout.resolve()?;
    let reader = open_input(&args.io.input)?;
    let mut writer = open_output(&args.io.output)?;
    for record in read_jsonl::<PairRecord, _>(reader) {
        let (id, pair) = record?.into_pair();
        match &layout {
            Layout::Mixed(Pattern::Interleaved, cfg) => {
                let seq =
                    mux_interleaved(&pair, cfg, &vocab).map_err(|e| CliError::record(&id, e))?;
                write_jsonl(&mut writer, &MixedRecord::new(id, seq))?;
            }
            Layout::Mixed(Pattern::EarlyStopInterleaved, cfg) => {
                let seq = mux_esi(&pair, cfg, &vocab).map_err(|e| CliError::record(&id, e))?;
                write_jsonl(&mut writer, &MixedRecord::new(id, seq))?;
            }
            Layout::Frames(cfg) => {
                let seq =
                    mux_parallel(&pair, cfg, &vocab).map_err(|e| CliError::record(&id, e))?;
                write_jsonl(&mut writer, &FrameRecord::new(id, seq))?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    vocab: VocabArgs,
    #[command(flatten)]
    io: IoArgs,
    /// Write the per-token event trace as JSONL to PATH ("-" = stderr).
    /// Indexes restart at 0 for each record.
    #[arg(long, value_name = "PATH")]
    trace: Option<String>,
}

fn cmd_decode(args: DecodeArgs) -> Result<(), CliError> {
    let vocab = args.vocab.load()?;
    let layout = args.layout.resolve()?;
    let reader = open_input(&args.io.input)?;
    let mut writer = open_output(&args.io.output)?;
    let mut trace: Option<Box<dyn Write>> = match args.trace.as_deref() {
        None => None,
        Some("-") => Some(Box::new(BufWriter::new(io::stderr()))),
        Some(path) => Some(open_output(path)?),
    };

    match layout {
        Layout::Mixed(pattern, cfg) => {
            for record in read_jsonl::<MixedRecord, _>(reader) {
                let record = record?;
                if record.pattern != pattern {
                    return Err(CliError::record(
                        &record.id,
                        format!(
                            "pattern mismatch: record is {}, flags say {pattern}",
                            record.pattern
                        ),
                    ));
                }
                if (record.r_text, record.r_speech) != (cfg.r_text, cfg.r_speech) {
                    return Err(CliError::record(
                        &record.id,
                        format!(
                            "ratio mismatch: record is {}:{}, flags say {}:{}",
                            record.r_text, record.r_speech, cfg.r_text, cfg.r_speech
                        ),
                    ));
                }
                let (id, seq) = record.into_sequence(cfg.append_speech_eos);
                let demuxer = match pattern {
                    Pattern::Interleaved => Demuxer::interleaved(cfg, vocab),
                    Pattern::EarlyStopInterleaved => Demuxer::early_stop(cfg, vocab),
                }?;
                let pair = drain_stream(demuxer, &seq.tokens, &id, &mut trace)?;
                write_jsonl(&mut writer, &PairRecord::new(id, pair))?;
            }
        }
        Layout::Frames(cfg) => {
            for record in read_jsonl::<FrameRecord, _>(reader) {
                let record = record?;
                if record.k != cfg.k {
                    return Err(CliError::record(
                        &record.id,
                        format!("frame size mismatch: record is k={}, flags say k={}", record.k, cfg.k),
                    ));
                }
                let (id, seq) = record.into_sequence();
                let demuxer = Demuxer::parallel(cfg, vocab)?;
                let pair = drain_stream(demuxer, &seq.flatten(), &id, &mut trace)?;
                write_jsonl(&mut writer, &PairRecord::new(id, pair))?;
            }
        }
    }
    writer.flush()?;
    if let Some(trace) = &mut trace {
        trace.flush()?;
    }
    Ok(())
}

/// Feed a whole stream through a demuxer, tracing events when asked.
fn drain_stream(
    mut demuxer: Demuxer,
    tokens: &[u32],
    id: &str,
    trace: &mut Option<Box<dyn Write>>,
) -> Result<ChannelPair, CliError> {
    for (i, &token) in tokens.iter().enumerate() {
        let events = demuxer.feed(token).map_err(|e| CliError::record(id, e))?;
        if let Some(trace) = trace {
            for event in events {
                write_jsonl(trace, &TraceRecord::new(i, event))?;
            }
        }
    }
    let outcome = demuxer.finish().map_err(|e| CliError::record(id, e))?;
    if let Some(trace) = trace {
        for &event in &outcome.closing_events {
            write_jsonl(trace, &TraceRecord::new(tokens.len(), event))?;
        }
    }
    Ok(outcome.pair)
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Args)]
struct AnalyzeArgs {
    /// Chunk ratio "R_T:R_S" for the padded baseline.
    #[arg(long, value_parser = parse_ratio, value_name = "R_T:R_S")]
    ratio: Ratio,
    #[command(flatten)]
    vocab: VocabArgs,
    #[command(flatten)]
    io: IoArgs,
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let vocab = args.vocab.load()?;
    let cfg = InterleaveConfig::new(args.ratio.r_text, args.ratio.r_speech);
    let reader = open_input(&args.io.input)?;
    let mut pairs = Vec::new();
    for record in read_jsonl::<PairRecord, _>(reader) {
        pairs.push(record?.into_pair().1);
    }
    let report =
        corpus_report(pairs, &cfg, &vocab).map_err(|e| CliError::Data(e.to_string()))?;
    write_json_document(&args.io.output, &report)
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args)]
struct EvalArgs {
    /// Predictions JSONL; "-" reads standard input.
    #[arg(long, value_name = "PATH", default_value = "-")]
    pred: String,
    /// Report path; "-" writes standard output.
    #[arg(long = "out", value_name = "PATH", default_value = "-")]
    output: String,
    /// Also write per-record outcomes as CSV (id, s2t_hit, s2s_hit, wer).
    #[arg(long, value_name = "PATH")]
    per_record: Option<String>,
    /// Match references as raw substrings instead of whole-word sequences.
    #[arg(long)]
    raw_substring: bool,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let reader = open_input(&args.pred)?;
    let mut records = Vec::new();
    for record in read_jsonl::<QaEvalRecord, _>(reader) {
        records.push(record?);
    }
    let containment = if args.raw_substring {
        Containment::Raw
    } else {
        Containment::WordBoundary
    };
    let report = evaluate(records, containment).map_err(|e| CliError::Data(e.to_string()))?;
    if let Some(path) = &args.per_record {
        let mut csv = open_output(path)?;
        writeln!(csv, "id,s2t_hit,s2s_hit,wer")?;
        for verdict in &report.verdicts {
            let s2s = verdict.s2s_hit.map(|b| b.to_string()).unwrap_or_default();
            let wer = verdict.wer.map(|w| w.to_string()).unwrap_or_default();
            writeln!(csv, "{},{},{s2s},{wer}", csv_field(&verdict.id), verdict.s2t_hit)?;
        }
        csv.flush()?;
    }
    write_json_document(&args.output, &report)
}

/// Quote a CSV field only when it needs it.
fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

// ---------------------------------------------------------------------------
// curate

#[derive(Args)]
struct CurateArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Drop records whose answer WER exceeds this.
    #[arg(long, default_value_t = 0.2, value_name = "RATE")]
    wer_threshold: f64,
    /// Speaker-prompt pool size.
    #[arg(long = "speakers", default_value_t = 1, value_name = "N")]
    speaker_pool: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the built-in deterministic mock clients.
    #[arg(long)]
    mock: bool,
    /// Mock ASR per-word deletion probability.
    #[arg(long, default_value_t = 0.0, value_name = "RATE")]
    asr_del_rate: f64,
    /// Mock ASR per-word substitution probability.
    #[arg(long, default_value_t = 0.0, value_name = "RATE")]
    asr_sub_rate: f64,
}

fn cmd_curate(args: CurateArgs) -> Result<(), CliError> {
    if !args.mock {
        return Err(CliError::Usage(
            "no real rewrite/TTS/ASR clients are bundled; pass --mock to use the \
             deterministic built-in suite. A deployment wires real services through \
             the TOKWEAVE_REWRITE_URL, TOKWEAVE_TTS_URL, TOKWEAVE_ASR_URL and \
             TOKWEAVE_API_KEY environment variables."
                .into(),
        ));
    }
    let noise = NoiseSpec {
        deletion_rate: args.asr_del_rate,
        substitution_rate: args.asr_sub_rate,
    };
    let clients = mock_clients(args.seed, noise).map_err(|e| CliError::Usage(e.to_string()))?;
    let config = CurationConfig {
        wer_threshold: args.wer_threshold,
        speaker_pool_size: args.speaker_pool,
        seed: args.seed,
    };
    let mut curator =
        Curator::new(&clients, config).map_err(|e| CliError::Usage(e.to_string()))?;
    let reader = open_input(&args.io.input)?;
    let mut writer = open_output(&args.io.output)?;
    for record in read_jsonl::<QaSourceRecord, _>(reader) {
        let curated = curator.process(record?);
        write_jsonl(&mut writer, &curated)?;
    }
    writer.flush()?;
    let summary = curator.summary();
    eprintln!(
        "{}",
        serde_json::to_string(&summary).map_err(|e| CliError::Data(e.to_string()))?
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Clone, Copy, ValueEnum)]
enum CorruptKind {
    /// Replace with an id from the other channel (always malformed).
    OppositeClass,
    /// Replace with any id in the vocabulary.
    Uniform,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    vocab: VocabArgs,
    /// Channel-pair corpus JSONL; "-" reads standard input.
    #[arg(long, value_name = "PATH", default_value = "-")]
    corpus: String,
    /// Probability each token is replaced before decoding.
    #[arg(long, default_value_t = 0.0, value_name = "RATE")]
    corrupt_rate: f64,
    /// Replacement style for corrupted tokens.
    #[arg(long, value_enum, default_value_t = CorruptKind::OppositeClass)]
    corrupt_mode: CorruptKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; "-" writes standard output.
    #[arg(long, value_name = "PATH", default_value = "-")]
    report: String,
}

/// Per-record outcome; decode failures are data here, not process errors.
/// Contains no timing so reports are byte-reproducible.
#[derive(Serialize)]
struct SimulatedRecord {
    id: String,
    tokens_consumed: usize,
    events: usize,
    error: Option<String>,
}

#[derive(Serialize)]
struct SimulationReport {
    n: usize,
    completed: usize,
    failed: usize,
    records: Vec<SimulatedRecord>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let vocab = args.vocab.load()?;
    let schedule = args.layout.schedule()?;
    let mode = match args.corrupt_mode {
        CorruptKind::OppositeClass => CorruptionMode::OppositeClass,
        CorruptKind::Uniform => CorruptionMode::UniformRandom,
    };
    let reader = open_input(&args.corpus)?;
    let mut records = Vec::new();
    for (index, record) in read_jsonl::<PairRecord, _>(reader).enumerate() {
        let (id, pair) = record?.into_pair();
        let mut generator = Generator::Replay(pair);
        if args.corrupt_rate > 0.0 {
            generator = Generator::Corrupting {
                inner: Box::new(generator),
                rate: args.corrupt_rate,
                seed: args.seed.wrapping_add(index as u64),
                mode,
            };
        }
        let transcript = simulator::run(&generator, schedule, &vocab)
            .map_err(|e| CliError::record(&id, e))?;
        records.push(SimulatedRecord {
            id,
            tokens_consumed: transcript.tokens_consumed,
            events: transcript.events.len(),
            error: transcript.error.map(|e| e.to_string()),
        });
    }
    let completed = records.iter().filter(|r| r.error.is_none()).count();
    let report = SimulationReport {
        n: records.len(),
        completed,
        failed: records.len() - completed,
        records,
    };
    write_json_document(&args.report, &report)
}

// ---------------------------------------------------------------------------
// bench

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    layout: LayoutArgs,
    #[command(flatten)]
    vocab: VocabArgs,
    /// Channel-pair corpus JSONL; "-" reads standard input.
    #[arg(long, value_name = "PATH", default_value = "-")]
    corpus: String,
    /// Decodes per stream.
    #[arg(long, default_value_t = 1, value_name = "N")]
    reps: usize,
    /// Worker threads; per-stream order is preserved regardless.
    #[arg(long, default_value_t = 1, value_name = "N")]
    workers: usize,
    /// Summary path; "-" writes standard output. Token counts are
    /// deterministic; timings are wall-clock and vary run to run.
    #[arg(long = "out", value_name = "PATH", default_value = "-")]
    output: String,
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let vocab = args.vocab.load()?;
    let schedule = args.layout.schedule()?;
    let reader = open_input(&args.corpus)?;
    let mut corpus: Vec<ChannelPair> = Vec::new();
    for record in read_jsonl::<PairRecord, _>(reader) {
        corpus.push(record?.into_pair().1);
    }
    let summary = simulator::bench(&corpus, schedule, &vocab, args.reps, args.workers)
        .map_err(|e| CliError::Data(e.to_string()))?;
    write_json_document(&args.output, &summary)
}
