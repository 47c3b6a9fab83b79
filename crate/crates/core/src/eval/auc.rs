use crate::error::{Error, Result};

/// Rank-based (Mann-Whitney) ROC AUC: the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn auc(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::InvalidArgument("auc needs positive and negative scores".into()));
    }
    if pos_scores.iter().chain(neg_scores).any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("auc scores contain NaN".into()));
    }
    let mut all: Vec<(f64, bool)> = pos_scores
        .iter()
        .map(|&s| (s, true))
        .chain(neg_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Sum of 1-based ranks of positives, tied groups sharing their mean rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        let positives = all[i..=j].iter().filter(|e| e.1).count();
        rank_sum += mean_rank * positives as f64;
        i = j + 1;
    }
    let np = pos_scores.len() as f64;
    let nn = neg_scores.len() as f64;
    let u = rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}
