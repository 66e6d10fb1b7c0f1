//! Spoken question-answering evaluation metrics.
//!
//! Three layers, each pure:
//!
//! * [`normalize`] — the shared text normalization (case-fold, punctuation
//!   to spaces, whitespace collapse) applied before any comparison.
//! * [`answer_hit`] / [`wer`] — per-record checks: word-boundary-aligned
//!   answer containment, and word-level minimum-edit-distance error rate
//!   with a substitution/deletion/insertion breakdown.
//! * [`evaluate`] — the corpus protocol: text-side accuracy (s2t),
//!   speech-side accuracy over ASR transcripts (s2s), their ratio (rel),
//!   and mean WER between each text output and its transcript.
//!
//! Containment is word-boundary aligned by default so that "par" does not
//! match inside "comparison"; [`Containment::Raw`] restores naive substring
//! matching for comparability with pipelines that use it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One question's model outputs plus accepted reference answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaEvalRecord {
    pub id: String,
    /// Accepted answer aliases; at least one required.
    pub references: Vec<String>,
    /// The model's text response.
    pub text_output: String,
    /// ASR transcription of the model's spoken response, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech_transcript: Option<String>,
}

/// How [`answer_hit_with`] matches a reference inside an output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Containment {
    /// The reference's word sequence must appear as whole words.
    #[default]
    WordBoundary,
    /// Naive substring containment over the normalized strings.
    Raw,
}

/// Word-level edit-distance accounting; `wer = (s + d + i) / ref_len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WerBreakdown {
    pub wer: f64,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
}

/// Aggregate evaluation results.
///
/// `s2s`, `rel` and `mean_wer` are `None` (serialized as `null`) when
/// undefined: no record carries a transcript, or `s2t` is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    /// Records carrying a speech transcript (the s2s denominator).
    pub n_with_transcript: usize,
    /// Transcribed records whose WER is undefined (empty text output
    /// against a non-empty transcript); excluded from `mean_wer`.
    pub n_wer_undefined: usize,
    pub s2t: f64,
    pub s2s: Option<f64>,
    /// `s2s / s2t`; undefined when `s2t` is zero or `s2s` is undefined.
    pub rel: Option<f64>,
    pub mean_wer: Option<f64>,
    /// Per-record outcomes, for the CSV side channel; not part of the JSON
    /// report.
    #[serde(skip)]
    pub verdicts: Vec<RecordVerdict>,
}

/// Per-record evaluation outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordVerdict {
    pub id: String,
    pub s2t_hit: bool,
    pub s2s_hit: Option<bool>,
    pub wer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("reference is empty while hypothesis is not; word error rate undefined")]
    EmptyReference,
    #[error("no records to evaluate")]
    NoRecords,
    #[error("record {id}: references must be non-empty")]
    NoReferences { id: String },
}

/// Case-fold, replace every non-alphanumeric non-whitespace character with
/// a space, collapse whitespace runs, and trim.
pub fn normalize(s: &str) -> String {
    let lowered = s.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for c in lowered.chars() {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Whether any reference answer appears in the output, word-boundary
/// aligned after normalization.
pub fn answer_hit(output: &str, references: &[String]) -> bool {
    answer_hit_with(output, references, Containment::WordBoundary)
}

/// [`answer_hit`] with an explicit containment mode.
///
/// References that normalize to the empty string never match.
pub fn answer_hit_with(output: &str, references: &[String], mode: Containment) -> bool {
    let out_norm = normalize(output);
    references.iter().any(|r| {
        let ref_norm = normalize(r);
        if ref_norm.is_empty() {
            return false;
        }
        match mode {
            Containment::Raw => out_norm.contains(&ref_norm),
            Containment::WordBoundary => {
                let out_words: Vec<&str> = out_norm.split_whitespace().collect();
                let ref_words: Vec<&str> = ref_norm.split_whitespace().collect();
                out_words
                    .windows(ref_words.len())
                    .any(|w| w == ref_words.as_slice())
            }
        }
    })
}

/// Word error rate of `hypothesis` against `reference` under minimum-edit
/// alignment with unit costs, over normalized whitespace-split words.
///
/// Both sides empty is a perfect score. An empty reference against a
/// non-empty hypothesis is an error (any rate would be a division by
/// zero). WER may exceed 1.0 when insertions dominate; it is reported
/// uncapped. When several minimal alignments exist the breakdown prefers
/// substitutions, then deletions, then insertions; the total edit count is
/// the same for all of them.
pub fn wer(reference: &str, hypothesis: &str) -> Result<WerBreakdown, MetricsError> {
    let ref_norm = normalize(reference);
    let hyp_norm = normalize(hypothesis);
    let r: Vec<&str> = ref_norm.split_whitespace().collect();
    let h: Vec<&str> = hyp_norm.split_whitespace().collect();
    if r.is_empty() {
        if h.is_empty() {
            return Ok(WerBreakdown {
                wer: 0.0,
                substitutions: 0,
                deletions: 0,
                insertions: 0,
                ref_len: 0,
            });
        }
        return Err(MetricsError::EmptyReference);
    }

    let (m, n) = (r.len(), h.len());
    let mut d = vec![vec![0usize; n + 1]; m + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub = d[i - 1][j - 1] + usize::from(r[i - 1] != h[j - 1]);
            let del = d[i - 1][j] + 1;
            let ins = d[i][j - 1] + 1;
            d[i][j] = sub.min(del).min(ins);
        }
    }

    let (mut s, mut del, mut ins) = (0usize, 0usize, 0usize);
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 && r[i - 1] == h[j - 1] && d[i][j] == d[i - 1][j - 1] {
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[i][j] == d[i - 1][j - 1] + 1 {
            s += 1;
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            del += 1;
            i -= 1;
        } else {
            ins += 1;
            j -= 1;
        }
    }
    debug_assert_eq!(s + del + ins, d[m][n]);
    Ok(WerBreakdown {
        wer: d[m][n] as f64 / m as f64,
        substitutions: s,
        deletions: del,
        insertions: ins,
        ref_len: m,
    })
}

/// Run the evaluation protocol over a record stream.
///
/// s2t covers every record; s2s and mean WER cover only records with a
/// transcript, with the exclusions counted in the report.
pub fn evaluate<I>(records: I, mode: Containment) -> Result<EvalReport, MetricsError>
where
    I: IntoIterator<Item = QaEvalRecord>,
{
    let mut n = 0usize;
    let mut n_with_transcript = 0usize;
    let mut n_wer_undefined = 0usize;
    let mut s2t_hits = 0usize;
    let mut s2s_hits = 0usize;
    let mut wer_sum = 0.0;
    let mut wer_count = 0usize;
    let mut verdicts = Vec::new();

    for record in records {
        if record.references.is_empty() {
            return Err(MetricsError::NoReferences { id: record.id });
        }
        n += 1;
        let s2t_hit = answer_hit_with(&record.text_output, &record.references, mode);
        s2t_hits += usize::from(s2t_hit);
        let (s2s_hit, record_wer) = match &record.speech_transcript {
            Some(transcript) => {
                n_with_transcript += 1;
                let hit = answer_hit_with(transcript, &record.references, mode);
                s2s_hits += usize::from(hit);
                let record_wer = match wer(&record.text_output, transcript) {
                    Ok(b) => {
                        wer_sum += b.wer;
                        wer_count += 1;
                        Some(b.wer)
                    }
                    Err(MetricsError::EmptyReference) => {
                        n_wer_undefined += 1;
                        None
                    }
                    Err(e) => return Err(e),
                };
                (Some(hit), record_wer)
            }
            None => (None, None),
        };
        verdicts.push(RecordVerdict {
            id: record.id,
            s2t_hit,
            s2s_hit,
            wer: record_wer,
        });
    }

    if n == 0 {
        return Err(MetricsError::NoRecords);
    }
    let s2t = s2t_hits as f64 / n as f64;
    let s2s = (n_with_transcript > 0).then(|| s2s_hits as f64 / n_with_transcript as f64);
    let rel = match s2s {
        Some(s2s) if s2t > 0.0 => Some(s2s / s2t),
        _ => None,
    };
    let mean_wer = (wer_count > 0).then(|| wer_sum / wer_count as f64);
    Ok(EvalReport {
        n,
        n_with_transcript,
        n_wer_undefined,
        s2t,
        s2s,
        rel,
        mean_wer,
        verdicts,
    })
}
