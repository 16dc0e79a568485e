use rand::seq::SliceRandom;
use rand::Rng;

use super::CorpusError;

/// One shuffled epoch over `n` items, cut into batches.
pub fn shuffled_batches<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>, CorpusError> {
    if batch_size == 0 {
        return Err(CorpusError::BatchSize);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// One class-balanced epoch: every class contributes exactly as many draws as
/// the largest class. Smaller classes are cycled through full permutations
/// and topped up by sampling without replacement, so every item appears at
/// least once and the resampling is with replacement across cycles.
pub fn balanced_batches<R: Rng>(
    classes: &[usize],
    num_classes: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, CorpusError> {
    if batch_size == 0 {
        return Err(CorpusError::BatchSize);
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &c) in classes.iter().enumerate() {
        members
            .get_mut(c)
            .ok_or_else(|| CorpusError::EmptyClass(format!("{c} (out of range)")))?
            .push(i);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(CorpusError::EmptyClass(empty.to_string()));
    }
    let target = members.iter().map(Vec::len).max().unwrap_or(0);
    let mut epoch = Vec::with_capacity(target * num_classes);
    for m in &members {
        let mut drawn = 0;
        while drawn < target {
            let mut perm = m.clone();
            perm.shuffle(rng);
            let take = (target - drawn).min(perm.len());
            epoch.extend_from_slice(&perm[..take]);
            drawn += take;
        }
    }
    epoch.shuffle(rng);
    Ok(epoch.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Per-class draw counts over an epoch of batches.
pub fn class_draw_counts(batches: &[Vec<usize>], classes: &[usize], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for &i in batches.iter().flatten() {
        counts[classes[i]] += 1;
    }
    counts
}
