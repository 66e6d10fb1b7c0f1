//! Deterministic corpus synthesis shared by the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokweave::{ChannelPair, VocabSpec};

/// One EOS-terminated channel pair with `t` text and `s` speech tokens.
pub fn synth_pair(rng: &mut ChaCha8Rng, vocab: &VocabSpec, t: usize, s: usize) -> ChannelPair {
    assert!(t >= 1 && s >= 1, "channels include their EOS tokens");
    let mut text: Vec<u32> = (1..t)
        .map(|_| rng.random_range(vocab.text_range.start..vocab.eos_text_id))
        .collect();
    text.push(vocab.eos_text_id);
    let mut speech: Vec<u32> = (1..s)
        .map(|_| rng.random_range(vocab.speech_range.start..vocab.eos_speech_id))
        .collect();
    speech.push(vocab.eos_speech_id);
    ChannelPair::new(text, speech)
}

/// A corpus of `n` pairs around `t_mean` text tokens with speech roughly
/// `ratio` times longer — the shape the codecs see in practice.
pub fn synth_corpus(seed: u64, n: usize, t_mean: usize, ratio: f64) -> Vec<ChannelPair> {
    let vocab = VocabSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let t = rng.random_range(t_mean / 2..=t_mean * 2).max(1);
            let s = ((t as f64) * ratio).round().max(1.0) as usize;
            synth_pair(&mut rng, &vocab, t, s)
        })
        .collect()
}
