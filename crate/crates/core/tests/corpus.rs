use std::collections::HashMap;

use builder_core::corpus::{flatten_dialogue, parse_jsonl, synth_generate, write_jsonl, GrammarConfig, Utterance, Vocabulary, ARCHITECT, BUILDER};
use proptest::prelude::*;

#[test]
fn long_history_keeps_the_most_recent_tokens() {
    // 10 utterances: tag + 14 words each = 150 tokens, all distinct.
    let mut expected = Vec::new();
    let mut dialogue = Vec::new();
    for u in 0..10 {
        let words: Vec<String> = (0..14).map(|w| format!("w{}", u * 14 + w)).collect();
        let builder = u % 3 == 2;
        expected.push(if builder { BUILDER } else { ARCHITECT }.to_string());
        expected.extend(words.iter().cloned());
        let text = words.join(" ");
        dialogue.push(if builder { Utterance::builder(text, None) } else { Utterance::architect(text) });
    }
    assert_eq!(expected.len(), 150);
    let samples = vec![builder_core::corpus::Sample {
        id: "long".into(),
        split: builder_core::corpus::Split::Train,
        dialogue: dialogue.clone(),
        world: Default::default(),
        label: builder_core::world::ActionTypeLabel::Others,
        gold_actions: vec![],
        dialogue_id: None,
        response: None,
    }];
    let mut vocab = Vocabulary::build(&samples, 1);
    // Tags are reserved, every word is known.
    assert_eq!(vocab.len(), 4 + 140);
    let ctx = flatten_dialogue(&dialogue, &vocab, 100);
    assert_eq!(ctx.ids.len(), 100);
    assert!(ctx.mask.iter().all(|&m| m));
    let got: Vec<&str> = ctx.ids.iter().map(|&i| vocab.token(i).unwrap()).collect();
    assert_eq!(got, expected[50..].iter().map(String::as_str).collect::<Vec<_>>());

    let short = flatten_dialogue(&dialogue[..1], &vocab, 100);
    assert_eq!(short.mask.iter().filter(|&&m| m).count(), 15);
    assert!(short.ids[15..].iter().all(|&i| i == Vocabulary::PAD_ID));
    vocab = Vocabulary::build(&samples[..0], 1);
    assert_eq!(flatten_dialogue(&dialogue, &vocab, 100).ids[1], Vocabulary::UNK_ID);
}

/// Independent count: lowercase, letters/digits grouped, anything else alone.
fn count_words(texts: &[String]) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for t in texts {
        let lower = t.to_lowercase();
        let mut word = String::new();
        for c in lower.chars().chain(std::iter::once(' ')) {
            if c.is_alphanumeric() {
                word.push(c);
                continue;
            }
            if !word.is_empty() {
                *counts.entry(std::mem::take(&mut word)).or_insert(0) += 1;
            }
            if !c.is_whitespace() {
                *counts.entry(c.to_string()).or_insert(0) += 1;
            }
        }
    }
    counts
}

#[test]
fn vocabulary_size_matches_word_count() {
    let mut samples = synth_generate(300, 19, &GrammarConfig::default());
    samples[0].dialogue.push(Utterance::architect("Hmm, WAIT... put it there!"));
    let texts: Vec<String> = samples.iter().flat_map(|s| s.dialogue.iter().map(|u| u.text.clone())).collect();
    let counts = count_words(&texts);
    for min_count in [1, 2, 5, 50] {
        let vocab = Vocabulary::build(&samples, min_count);
        let expected = counts.values().filter(|&&c| c >= min_count).count();
        assert_eq!(vocab.len(), 4 + expected, "min_count {min_count}");
        for (w, &c) in &counts {
            assert_eq!(vocab.contains(w), c >= min_count, "{w}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn jsonl_round_trip(n in 1usize..40, seed in any::<u64>()) {
        let samples = synth_generate(n, seed, &GrammarConfig::default());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &samples).unwrap();
        let back = parse_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(back, samples);
    }
}
