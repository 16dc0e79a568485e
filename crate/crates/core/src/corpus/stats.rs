use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;

use super::{BuilderCategory, Sample, Speaker, Split};
use crate::world::ActionTypeLabel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryCount {
    pub category: BuilderCategory,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonomyStats {
    pub categories: Vec<CategoryCount>,
    pub total: usize,
}

/// Counts annotated builder utterances per category.
///
/// Samples cut from one game share dialogue prefixes, so each utterance is
/// counted once per `(dialogue_id, position)`; samples without a dialogue id
/// are their own dialogue. A sample's `response` sits at position
/// `dialogue.len()`.
pub fn taxonomy_stats(samples: &[Sample]) -> TaxonomyStats {
    let mut seen: HashSet<(String, usize)> = HashSet::new();
    let mut counts = [0usize; 8];
    for s in samples {
        let key = s.dialogue_id.as_deref().unwrap_or(&s.id);
        let positioned = s.dialogue.iter().enumerate().chain(s.response.iter().map(|r| (s.dialogue.len(), r)));
        for (pos, u) in positioned {
            let Some(cat) = u.builder_category.filter(|_| u.speaker == Speaker::Builder) else {
                continue;
            };
            if seen.insert((key.to_string(), pos)) {
                counts[cat.index()] += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    let categories = BuilderCategory::ALL
        .iter()
        .map(|&category| {
            let count = counts[category.index()];
            let percent = if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 };
            CategoryCount { category, count, percent }
        })
        .collect();
    TaxonomyStats { categories, total }
}

impl TaxonomyStats {
    pub fn count(&self, c: BuilderCategory) -> usize {
        self.categories[c.index()].count
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<30} {:>7} {:>8}", "Builder utterance type", "Count", "Percent");
        for c in &self.categories {
            let _ = writeln!(out, "{:<30} {:>7} {:>7.2}%", c.category.display_name(), c.count, c.percent);
        }
        let _ = writeln!(out, "{:<30} {:>7}", "Total", self.total);
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub execution: usize,
    pub ask: usize,
    pub others: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.execution + self.ask + self.others
    }

    fn bump(&mut self, label: ActionTypeLabel) {
        match label {
            ActionTypeLabel::Execution => self.execution += 1,
            ActionTypeLabel::Ask => self.ask += 1,
            ActionTypeLabel::Others => self.others += 1,
        }
    }
}

/// Sample counts per split and next-move label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub train: SplitCounts,
    pub valid: SplitCounts,
    pub test: SplitCounts,
}

pub fn dataset_stats(samples: &[Sample]) -> DatasetStats {
    let mut d = DatasetStats::default();
    for s in samples {
        d.split_mut(s.split).bump(s.label);
    }
    d
}

impl DatasetStats {
    pub fn split(&self, s: Split) -> &SplitCounts {
        match s {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, s: Split) -> &mut SplitCounts {
        match s {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>7} {:>7} {:>7}", "", "Train", "Valid", "Test");
        let rows: [(&str, fn(&SplitCounts) -> usize); 4] = [
            ("Execution (Original)", |c| c.execution),
            ("Ask for clarifications", |c| c.ask),
            ("Others", |c| c.others),
            ("Total", SplitCounts::total),
        ];
        for (name, f) in rows {
            let _ = writeln!(out, "{:<24} {:>7} {:>7} {:>7}", name, f(&self.train), f(&self.valid), f(&self.test));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use crate::world::WorldState;

    fn sample(id: &str, dialogue_id: Option<&str>, dialogue: Vec<Utterance>, label: ActionTypeLabel) -> Sample {
        Sample {
            id: id.into(),
            split: Split::Train,
            dialogue,
            world: WorldState::empty(),
            label,
            gold_actions: vec![],
            dialogue_id: dialogue_id.map(Into::into),
            response: None,
        }
    }

    #[test]
    fn empty_input_is_all_zero() {
        let t = taxonomy_stats(&[]);
        assert_eq!(t.total, 0);
        assert!(t.categories.iter().all(|c| c.count == 0 && c.percent == 0.0));
    }

    #[test]
    fn manual_tally_with_shared_prefixes() {
        use BuilderCategory::*;
        let hello = Utterance::builder("hello", Some(Greeting));
        let what = Utterance::builder("what color?", Some(InstructionLevelQuestion));
        let arch = Utterance::architect("place a block");
        // Second sample extends the first's dialogue; the shared greeting counts once.
        let s1 = sample("a1", Some("g"), vec![hello.clone(), arch.clone()], ActionTypeLabel::Ask);
        let s2 = sample("a2", Some("g"), vec![hello.clone(), arch.clone(), what.clone()], ActionTypeLabel::Others);
        let mut s3 = sample("b1", None, vec![hello.clone()], ActionTypeLabel::Ask);
        s3.response = Some(Utterance::builder("is this right?", Some(VerificationQuestion)));
        let t = taxonomy_stats(&[s1, s2, s3]);
        assert_eq!(t.count(Greeting), 2);
        assert_eq!(t.count(InstructionLevelQuestion), 1);
        assert_eq!(t.count(VerificationQuestion), 1);
        assert_eq!(t.total, 4);
        assert!((t.categories[Greeting.index()].percent - 50.0).abs() < 1e-12);
    }

    #[test]
    fn dataset_counts() {
        let mut v = vec![
            sample("1", None, vec![], ActionTypeLabel::Ask),
            sample("2", None, vec![], ActionTypeLabel::Others),
        ];
        v[1].split = Split::Test;
        let d = dataset_stats(&v);
        assert_eq!(d.train.ask, 1);
        assert_eq!(d.test.others, 1);
        assert!(d.render().contains("Ask for clarifications"));
    }
}
