use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Sample, Speaker, Utterance};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const ARCHITECT: &str = "<architect>";
pub const BUILDER: &str = "<builder>";

/// Lowercases and splits on whitespace; every punctuation character becomes
/// its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if ch.is_alphanumeric() {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn speaker_tag(s: Speaker) -> &'static str {
    match s {
        Speaker::Architect => ARCHITECT,
        Speaker::Builder => BUILDER,
    }
}

/// Speaker-tagged token stream of a whole dialogue, oldest first.
pub fn dialogue_tokens(dialogue: &[Utterance]) -> Vec<String> {
    let mut out = Vec::new();
    for u in dialogue {
        out.push(speaker_tag(u.speaker).to_string());
        out.extend(tokenize(&u.text));
    }
    out
}

/// Token ids of exactly `len` positions plus the non-padding mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenContext {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl TokenContext {
    pub fn real_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Dense token ids; 0–3 are reserved for padding, unknown and the two speaker tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from(vec![PAD.to_string(), UNK.to_string(), ARCHITECT.to_string(), BUILDER.to_string()])
    }
}

impl Vocabulary {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;

    /// Counts tokens over the given (training) samples' dialogues and keeps
    /// those seen at least `min_count` times, most frequent first.
    pub fn build<'a>(samples: impl IntoIterator<Item = &'a Sample>, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for s in samples {
            for u in &s.dialogue {
                for t in tokenize(&u.text) {
                    *counts.entry(t).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut v = Self::default();
        for (t, _) in kept {
            v.push(t);
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Flattens a dialogue to exactly `len` ids: the most recent tokens survive
/// truncation; shorter contexts are padded at the end.
pub fn flatten_dialogue(dialogue: &[Utterance], vocab: &Vocabulary, len: usize) -> TokenContext {
    let tokens = dialogue_tokens(dialogue);
    let start = tokens.len().saturating_sub(len);
    let mut ids: Vec<usize> = tokens[start..].iter().map(|t| vocab.id(t)).collect();
    let real = ids.len();
    ids.resize(len, Vocabulary::PAD_ID);
    let mask = (0..len).map(|i| i < real).collect();
    TokenContext { ids, mask }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ActionTypeLabel, WorldState};
    use crate::corpus::Split;

    fn sample(texts: &[&str]) -> Sample {
        Sample {
            id: "x".into(),
            split: Split::Train,
            dialogue: texts.iter().map(|t| Utterance::architect(*t)).collect(),
            world: WorldState::empty(),
            label: ActionTypeLabel::Others,
            gold_actions: vec![],
            dialogue_id: None,
            response: None,
        }
    }

    #[test]
    fn tokenizer_keeps_punctuation() {
        assert_eq!(tokenize("Place RED, now!"), vec!["place", "red", ",", "now", "!"]);
        assert_eq!(tokenize("  "), Vec::<String>::new());
        assert_eq!(tokenize("<builder>"), vec!["<", "builder", ">"]);
    }

    #[test]
    fn min_count_filters() {
        let v = Vocabulary::build([&sample(&["a a b"])], 2);
        assert_eq!(v.len(), 5);
        assert!(v.contains("a") && !v.contains("b"));
        assert_eq!(v.id("b"), Vocabulary::UNK_ID);
        let v = Vocabulary::build([&sample(&["a a b"])], 1);
        assert!(v.contains("b"));
    }

    #[test]
    fn id_round_trip() {
        let v = Vocabulary::build([&sample(&["place red block at 5 0 5"])], 1);
        for i in 0..v.len() {
            assert_eq!(v.id(v.token(i).unwrap()), i);
        }
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
    }

    #[test]
    fn flatten_pads_and_tags() {
        let v = Vocabulary::build([&sample(&["place red"])], 1);
        let c = flatten_dialogue(&[], &v, 100);
        assert_eq!(c.ids, vec![0; 100]);
        assert_eq!(c.real_len(), 0);
        let c = flatten_dialogue(&[Utterance::architect("place red")], &v, 100);
        assert_eq!(&c.ids[..3], &[v.id(ARCHITECT), v.id("place"), v.id("red")]);
        assert!(c.ids[3..].iter().all(|&i| i == 0));
        assert_eq!(c.ids.len(), 100);
    }
}
