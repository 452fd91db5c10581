use serde::Serialize;

use crate::{Error, Result};

/// ROC for the rule "watermarked iff η ≤ threshold", one point per distinct
/// score plus the origin.
#[derive(Debug, Clone, Serialize)]
pub struct RocCurve {
    /// `thresholds[0]` is −∞ for the origin.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
    pub tpr_at_1pct_fpr: f64,
}

impl RocCurve {
    /// TPR at the last point with FPR ≤ `target`, linearly interpolated
    /// toward the next point.
    pub fn tpr_at_fpr(&self, target: f64) -> f64 {
        let k = self.fpr.iter().rposition(|&f| f <= target).unwrap_or(0);
        match (self.fpr.get(k + 1), self.tpr.get(k + 1)) {
            (Some(&f1), Some(&t1)) if f1 > self.fpr[k] => {
                self.tpr[k] + (target - self.fpr[k]) / (f1 - self.fpr[k]) * (t1 - self.tpr[k])
            }
            _ => self.tpr[k],
        }
    }
}

/// Positives are watermarked images, detected when their η is small.
pub fn roc(watermarked: &[f64], clean: &[f64]) -> Result<RocCurve> {
    if watermarked.is_empty() || clean.is_empty() {
        return Err(Error::Empty("score list"));
    }
    if watermarked.iter().chain(clean).any(|v| v.is_nan()) {
        return Err(Error::param("scores", "NaN score"));
    }
    let mut pos = watermarked.to_vec();
    let mut neg = clean.to_vec();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let (mut ip, mut ineg) = (0, 0);
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    for &v in &thresholds {
        while ip < pos.len() && pos[ip] <= v {
            ip += 1;
        }
        while ineg < neg.len() && neg[ineg] <= v {
            ineg += 1;
        }
        tpr.push(ip as f64 / np);
        fpr.push(ineg as f64 / nn);
    }
    thresholds.insert(0, f64::NEG_INFINITY);
    let auc = fpr
        .windows(2)
        .zip(tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0)
        .sum();
    let mut curve = RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
        tpr_at_1pct_fpr: 0.0,
    };
    curve.tpr_at_1pct_fpr = curve.tpr_at_fpr(0.01);
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair_auc(wm: &[f64], clean: &[f64]) -> f64 {
        let mut s = 0.0;
        for a in wm {
            for b in clean {
                s += if a < b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        s / (wm.len() * clean.len()) as f64
    }

    #[test]
    fn perfect_separation() {
        let c = roc(&[0.1, 0.2], &[0.9, 1.0]).unwrap();
        assert_eq!(c.auc, 1.0);
        assert_eq!(c.tpr_at_1pct_fpr, 1.0);
    }

    #[test]
    fn identical_populations() {
        let s = [0.3, 0.1, 0.7, 0.7];
        let c = roc(&s, &s).unwrap();
        assert!((c.auc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            // Coarse grid so ties occur.
            let wm: Vec<f64> = (0..50).map(|_| (rng.random_range(0.0..1.0f64) * 20.0).floor()).collect();
            let clean: Vec<f64> = (0..50).map(|_| (rng.random_range(0.3..1.3f64) * 20.0).floor()).collect();
            let c = roc(&wm, &clean).unwrap();
            assert!((c.auc - pair_auc(&wm, &clean)).abs() <= 1e-12);
        }
    }

    #[test]
    fn interpolated_tpr() {
        // 200 negatives: FPR steps of 0.005.
        let clean: Vec<f64> = (0..200).map(|k| k as f64).collect();
        let wm = vec![-1.0, 0.5, 1.5, 2.5, 1000.0];
        let c = roc(&wm, &clean).unwrap();
        // The largest threshold with FPR ≤ 0.01 is 1.5, below which lie
        // three positives of five; the next point jumps to FPR 0.015.
        assert!((c.tpr_at_1pct_fpr - 0.6).abs() < 1e-12);
        assert!((c.tpr_at_fpr(0.0125) - 0.6).abs() < 1e-12);
        assert!(roc(&[], &clean).is_err());
    }

    #[test]
    fn infinite_scores_are_ordered() {
        let c = roc(&[0.0, 1.0], &[f64::INFINITY, f64::INFINITY]).unwrap();
        assert_eq!(c.auc, 1.0);
    }

    proptest! {
        #[test]
        fn monotone_transform_and_label_flip(
            wm in prop::collection::vec(-5.0f64..5.0, 1..30),
            clean in prop::collection::vec(-5.0f64..5.0, 1..30),
        ) {
            let c = roc(&wm, &clean).unwrap();
            prop_assert!((0.0..=1.0).contains(&c.auc));
            prop_assert!(c.fpr.windows(2).all(|w| w[1] >= w[0]));
            prop_assert!(c.tpr.windows(2).all(|w| w[1] >= w[0]));
            let f = |v: &f64| v.exp() * 3.0 + 1.0;
            let t = roc(&wm.iter().map(f).collect::<Vec<_>>(), &clean.iter().map(f).collect::<Vec<_>>()).unwrap();
            prop_assert!((t.auc - c.auc).abs() <= 1e-12);
            let flipped = roc(&clean, &wm).unwrap();
            prop_assert!((flipped.auc - (1.0 - c.auc)).abs() <= 1e-12);
        }
    }
}
