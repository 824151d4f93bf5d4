//! Logloss and ROC AUC.

use crate::error::{Error, Result};

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before taking logs.
pub const PROB_CLIP: f64 = 1e-7;

/// A model score paired with its binary label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredLabel {
    pub score: f64,
    pub label: u8,
}

impl ScoredLabel {
    pub fn new(score: f64, label: u8) -> Self {
        Self { score, label }
    }
}

#[inline]
pub fn clip_probability(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Negative log-likelihood of one label under a clipped probability.
#[inline]
pub fn example_logloss(p: f64, label: u8) -> f64 {
    let p = clip_probability(p);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean logloss; scores must be probabilities.
pub fn logloss(pairs: &[ScoredLabel]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: f64 = pairs.iter().map(|p| example_logloss(p.score, p.label)).sum();
    Ok(total / pairs.len() as f64)
}

fn class_counts(pairs: &[ScoredLabel]) -> Result<(usize, usize)> {
    if let Some(p) = pairs.iter().find(|p| !p.score.is_finite()) {
        return Err(Error::NonFiniteScore(p.score));
    }
    let pos = pairs.iter().filter(|p| p.label == 1).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Mann-Whitney AUC from average ranks, `O(n log n)`. Ties across classes count one half.
pub fn auc(pairs: &[ScoredLabel]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(pairs)?;
    let mut sorted: Vec<ScoredLabel> = pairs.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let tied_pos = sorted[i..j].iter().filter(|p| p.label == 1).count();
        pos_rank_sum += avg_rank * tied_pos as f64;
        i = j;
    }
    let n_pos_f = n_pos as f64;
    Ok((pos_rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Quadratic pair-counting AUC; reference for `auc`.
pub fn auc_bruteforce(pairs: &[ScoredLabel]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(pairs)?;
    let mut wins = 0.0;
    for p in pairs.iter().filter(|p| p.label == 1) {
        for n in pairs.iter().filter(|p| p.label == 0) {
            if p.score > n.score {
                wins += 1.0;
            } else if p.score == n.score {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Streaming accumulator for evaluation passes.
#[derive(Debug, Clone, Default)]
pub struct MetricAccumulator {
    loss_sum: f64,
    pairs: Vec<ScoredLabel>,
}

/// Logloss and AUC over one evaluated set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub logloss: f64,
    /// `None` when the set holds a single class.
    pub auc: Option<f64>,
    pub n: usize,
    pub n_pos: usize,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            loss_sum: 0.0,
            pairs: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, probability: f64, label: u8) {
        self.loss_sum += example_logloss(probability, label);
        self.pairs.push(ScoredLabel::new(probability, label));
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn finish(&self) -> Result<EvalMetrics> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let auc = match auc(&self.pairs) {
            Ok(a) => Some(a),
            Err(Error::SingleClass | Error::NonFiniteScore(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(EvalMetrics {
            logloss: self.loss_sum / self.pairs.len() as f64,
            auc,
            n: self.pairs.len(),
            n_pos: self.pairs.iter().filter(|p| p.label == 1).count(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{sigmoid, SeededRng};
    use proptest::prelude::*;

    fn s(score: f64, label: u8) -> ScoredLabel {
        ScoredLabel::new(score, label)
    }

    #[test]
    fn logloss_closed_forms() {
        assert!((logloss(&[s(0.5, 1)]).unwrap() - 2f64.ln()).abs() < 1e-12);
        let clipped = logloss(&[s(1.0, 1)]).unwrap();
        assert!((clipped - 1e-7).abs() < 1e-7 * 1e-3, "{clipped}");
        let mixed = logloss(&[s(0.9, 1), s(0.1, 0)]).unwrap();
        assert!((mixed - 0.1053605156578263).abs() < 1e-12);
        assert_eq!(logloss(&[]), Err(Error::EmptyDataset));
    }

    #[test]
    fn auc_simple_cases() {
        let sep = [s(0.9, 1), s(0.8, 1), s(0.2, 0), s(0.1, 0)];
        assert_eq!(auc(&sep).unwrap(), 1.0);
        let flat = [s(0.3, 1), s(0.3, 0), s(0.3, 1), s(0.3, 0)];
        assert_eq!(auc(&flat).unwrap(), 0.5);
        assert_eq!(auc(&[s(0.3, 1)]), Err(Error::SingleClass));
        assert!(matches!(auc(&[s(f64::NAN, 1), s(0.1, 0)]), Err(Error::NonFiniteScore(_))));
        assert_eq!(auc_bruteforce(&[s(0.9, 1), s(0.1, 0)]).unwrap(), 1.0);
        assert_eq!(auc_bruteforce(&[s(0.5, 1), s(0.5, 0)]).unwrap(), 0.5);
    }

    #[test]
    fn hand_grid_with_one_tie() {
        // positives 0.9 0.6 0.4, negatives 0.6 0.3 0.1 : 9 pairs
        // 0.9 beats all 3; 0.6 ties 0.6, beats 0.3 and 0.1; 0.4 beats 0.3 and 0.1.
        // wins = 3 + 2.5 + 2 = 7.5 -> 7.5 / 9
        let grid = [s(0.9, 1), s(0.6, 1), s(0.4, 1), s(0.6, 0), s(0.3, 0), s(0.1, 0)];
        assert_eq!(auc_bruteforce(&grid).unwrap(), 7.5 / 9.0);
        assert!((auc(&grid).unwrap() - 7.5 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn auc_matches_bruteforce_with_duplicates() {
        let mut rng = SeededRng::new(99);
        let pairs: Vec<ScoredLabel> = (0..1000)
            .map(|_| s(rng.next_range(0, 50) as f64 / 50.0, (rng.next_uniform() < 0.4) as u8))
            .collect();
        let a = auc(&pairs).unwrap();
        let b = auc_bruteforce(&pairs).unwrap();
        assert!((a - b).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn logloss_minimised_at_base_rate() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 10 < 3)).collect();
        let eval = |p: f64| logloss(&labels.iter().map(|&y| s(p, y)).collect::<Vec<_>>()).unwrap();
        let at_base = eval(0.3);
        for i in 1..100 {
            let p = i as f64 / 100.0;
            assert!(eval(p) >= at_base - 1e-15, "p={p}");
        }
    }

    #[test]
    fn accumulator_reports_single_class_as_undefined() {
        let mut acc = MetricAccumulator::new();
        acc.push(0.2, 1);
        acc.push(0.7, 1);
        let m = acc.finish().unwrap();
        assert_eq!(m.auc, None);
        assert_eq!((m.n, m.n_pos), (2, 2));
        assert!((m.logloss - (-(0.2f64.ln()) - 0.7f64.ln()) / 2.0).abs() < 1e-12);
    }

    fn scored() -> impl Strategy<Value = Vec<ScoredLabel>> {
        proptest::collection::vec((0i32..20, 0u8..2), 2..400)
            .prop_map(|v| v.into_iter().map(|(k, y)| s(k as f64 / 4.0 - 2.0, y)).collect())
            .prop_filter("both classes", |v: &Vec<ScoredLabel>| {
                v.iter().any(|p| p.label == 1) && v.iter().any(|p| p.label == 0)
            })
    }

    proptest! {
        #[test]
        fn auc_agrees_with_oracle(pairs in scored()) {
            let a = auc(&pairs).unwrap();
            let b = auc_bruteforce(&pairs).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_sigmoid(pairs in scored()) {
            let squashed: Vec<ScoredLabel> = pairs.iter().map(|p| s(sigmoid(p.score), p.label)).collect();
            prop_assert!((auc(&pairs).unwrap() - auc(&squashed).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn auc_flips_with_labels(pairs in scored()) {
            let flipped: Vec<ScoredLabel> = pairs.iter().map(|p| s(p.score, 1 - p.label)).collect();
            let a = auc_bruteforce(&pairs).unwrap();
            let b = auc_bruteforce(&flipped).unwrap();
            prop_assert!((a + b - 1.0).abs() <= 2.0 * f64::EPSILON);
            prop_assert!((auc(&flipped).unwrap() - (1.0 - auc(&pairs).unwrap())).abs() < 1e-12);
        }
    }
}
