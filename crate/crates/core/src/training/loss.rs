use crate::error::{Error, Result};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// The two halves of the edge loss and their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BceTerms {
    pub loss: f64,
    /// Mean of `-ln y` over positives.
    pub pos_term: f64,
    /// Mean of `-ln(1 - y)` over negatives.
    pub neg_term: f64,
}

/// Binary cross entropy from probabilities: mean `-ln y` over positives plus
/// mean `-ln(1 - y)` over negatives.
pub fn bce_loss(pos_scores: &[f64], neg_scores: &[f64]) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::InvalidArgument("bce needs positive and negative scores".into()));
    }
    let pos = pos_scores.iter().map(|y| -y.ln()).sum::<f64>() / pos_scores.len() as f64;
    let neg = neg_scores.iter().map(|y| -(-y).ln_1p()).sum::<f64>() / neg_scores.len() as f64;
    Ok(pos + neg)
}

/// Same loss evaluated on raw logits, with the gradient w.r.t. each logit.
///
/// `-ln sigmoid(x) = softplus(-x)` and `-ln(1 - sigmoid(x)) = softplus(x)`.
/// An empty negative list contributes nothing (used by mini-batches that run
/// out of negatives); the public [`bce_loss`] rejects it.
pub fn bce_with_logits(pos_logits: &[f64], neg_logits: &[f64]) -> Result<(BceTerms, Vec<f64>, Vec<f64>)> {
    if pos_logits.is_empty() {
        return Err(Error::InvalidArgument("bce needs at least one positive".into()));
    }
    let np = pos_logits.len() as f64;
    let pos_term = pos_logits.iter().map(|&x| softplus(-x)).sum::<f64>() / np;
    let d_pos = pos_logits
        .iter()
        .map(|&x| (crate::model::sigmoid(x) - 1.0) / np)
        .collect();
    let (neg_term, d_neg) = if neg_logits.is_empty() {
        (0.0, Vec::new())
    } else {
        let nn = neg_logits.len() as f64;
        (
            neg_logits.iter().map(|&x| softplus(x)).sum::<f64>() / nn,
            neg_logits.iter().map(|&x| crate::model::sigmoid(x) / nn).collect(),
        )
    };
    Ok((
        BceTerms {
            loss: pos_term + neg_term,
            pos_term,
            neg_term,
        },
        d_pos,
        d_neg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn half_half() {
        assert!((bce_loss(&[0.5], &[0.5]).unwrap() - 2.0 * LN_2).abs() < 1e-15);
    }

    #[test]
    fn perfect_separation_limit() {
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-8, 1e-12] {
            let l = bce_loss(&[1.0 - eps], &[eps]).unwrap();
            assert!(l < last && l >= 0.0);
            last = l;
        }
        assert!(last < 1e-10);
    }

    #[test]
    fn zero_logits() {
        // mean(ln2, ln2) + ln2
        let (t, dp, dn) = bce_with_logits(&[0.0, 0.0], &[0.0]).unwrap();
        assert!((t.loss - 2.0 * LN_2).abs() < 1e-15);
        assert!((t.pos_term - LN_2).abs() < 1e-15);
        assert_eq!(dp, vec![-0.25, -0.25]);
        assert_eq!(dn, vec![0.5]);
    }

    #[test]
    fn logit_form_matches_probability_form() {
        let pos = [1.3, -0.4, 2.2];
        let neg = [-1.1, 0.7];
        let sig = |x: &f64| crate::model::sigmoid(*x);
        let a = bce_loss(&pos.iter().map(sig).collect::<Vec<_>>(), &neg.iter().map(sig).collect::<Vec<_>>()).unwrap();
        let (b, _, _) = bce_with_logits(&pos, &neg).unwrap();
        assert!((a - b.loss).abs() < 1e-12);
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let (t, _, _) = bce_with_logits(&[-800.0], &[800.0]).unwrap();
        assert!((t.loss - 1600.0).abs() < 1e-9);
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(bce_loss(&[], &[0.5]).is_err());
        assert!(bce_loss(&[0.5], &[]).is_err());
        assert!(bce_with_logits(&[], &[0.0]).is_err());
    }
}
