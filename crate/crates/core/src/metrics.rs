//! Evaluation metrics: relative mean square error, per-sample support
//! recovery probability, and the failure rate.

use crate::mat::Mat;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("truth and estimate counts differ: {truth} vs {est}")]
    CountMismatch { truth: usize, est: usize },
    #[error("pair {index}: truth is {t_rows}x{t_cols}, estimate is {e_rows}x{e_cols}")]
    ShapeMismatch {
        index: usize,
        t_rows: usize,
        t_cols: usize,
        e_rows: usize,
        e_cols: usize,
    },
    #[error("no usable samples (all truths had zero norm)")]
    NothingUsable,
    #[error("support probability needs a truth with at least one nonzero")]
    ZeroSparsityTruth,
    #[error("failure rate needs a non-empty list")]
    EmptyList,
}

/// Mean relative squared error plus how many zero-norm truths were skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rmse {
    pub value: f64,
    pub used: usize,
    pub excluded: usize,
}

/// `(1/P) sum_p ||x_p - xhat_p||_F^2 / ||x_p||_F^2`. Zero-norm truths are
/// excluded and counted. Multi-column pairs are stacked, i.e. Frobenius.
pub fn rmse(truth: &[Mat], est: &[Mat]) -> Result<Rmse, MetricError> {
    if truth.len() != est.len() {
        return Err(MetricError::CountMismatch {
            truth: truth.len(),
            est: est.len(),
        });
    }
    let mut total = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for (index, (t, e)) in truth.iter().zip(est).enumerate() {
        if t.shape() != e.shape() {
            return Err(MetricError::ShapeMismatch {
                index,
                t_rows: t.rows(),
                t_cols: t.cols(),
                e_rows: e.rows(),
                e_cols: e.cols(),
            });
        }
        let denom = t.sum_sq();
        if denom == 0.0 {
            excluded += 1;
            continue;
        }
        let num: f64 = t
            .as_slice()
            .iter()
            .zip(e.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += num / denom;
        used += 1;
    }
    if used == 0 {
        return Err(MetricError::NothingUsable);
    }
    Ok(Rmse {
        value: total / used as f64,
        used,
        excluded,
    })
}

/// How the estimated support is extracted from a dense estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SupportRule {
    /// The `||x||_0` largest-magnitude indices (oracle cardinality); ties
    /// break toward the lower index. Default, applied to every solver alike.
    TopK,
    /// Indices with `|xhat_i| > fraction * max |xhat|`.
    RelativeThreshold(f64),
}

fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| {
        v[j].abs()
            .partial_cmp(&v[i].abs())
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut top: Vec<usize> = order.into_iter().take(k).collect();
    top.sort_unstable();
    top
}

/// `|S_hat ∩ S| / ||x||_0`: fraction of the true support recovered.
pub fn support_prob(truth: &[f64], est: &[f64], rule: SupportRule) -> Result<f64, MetricError> {
    let true_support: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] != 0.0).collect();
    let k = true_support.len();
    if k == 0 {
        return Err(MetricError::ZeroSparsityTruth);
    }
    let est_support: Vec<usize> = match rule {
        SupportRule::TopK => top_k_indices(est, k),
        SupportRule::RelativeThreshold(frac) => {
            let peak = est.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            (0..est.len())
                .filter(|&i| est[i].abs() > frac * peak)
                .collect()
        }
    };
    let hit = true_support
        .iter()
        .filter(|i| est_support.contains(i))
        .count();
    Ok(hit as f64 / k as f64)
}

/// Row magnitudes of a multi-column estimate, for support extraction in the
/// multiple-measurement setting.
pub fn row_magnitudes(x: &Mat) -> Vec<f64> {
    (0..x.rows())
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Fraction of samples whose support was not recovered exactly.
pub fn failure_rate(probs: &[f64]) -> Result<f64, MetricError> {
    if probs.is_empty() {
        return Err(MetricError::EmptyList);
    }
    let failures = probs.iter().filter(|&&p| p != 1.0).count();
    Ok(failures as f64 / probs.len() as f64)
}

/// One point of an evaluation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Sparsity level or SNR in dB, whichever the sweep varies.
    pub abscissa: f64,
    pub rmse: f64,
    pub failure_rate: f64,
    pub samples: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn rmse_trivial_cases() {
        let mut rng = Rng::new(1);
        let xs: Vec<Mat> = (0..4).map(|_| rng.gaussian(6, 1)).collect();
        let perfect = rmse(&xs, &xs.clone()).unwrap();
        assert_eq!(perfect.value, 0.0);
        let zeros: Vec<Mat> = xs.iter().map(|x| Mat::zeros(x.rows(), x.cols())).collect();
        let all_zero = rmse(&xs, &zeros).unwrap();
        assert!((all_zero.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rmse_matches_scalar_oracle() {
        let mut rng = Rng::new(2);
        let xs: Vec<Mat> = (0..10).map(|_| rng.gaussian(5, 2)).collect();
        let es: Vec<Mat> = (0..10).map(|_| rng.gaussian(5, 2)).collect();
        let got = rmse(&xs, &es).unwrap().value;
        let mut want = 0.0;
        for (x, e) in xs.iter().zip(&es) {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    let d = x.get(i, j) - e.get(i, j);
                    num += d * d;
                    den += x.get(i, j) * x.get(i, j);
                }
            }
            want += num / den;
        }
        want /= 10.0;
        assert!((got - want).abs() <= 1e-12);
    }

    #[test]
    fn rmse_excludes_zero_truths() {
        let xs = vec![Mat::zeros(3, 1), Mat::col_vec(&[1.0, 0.0, 0.0])];
        let es = vec![Mat::col_vec(&[1.0, 1.0, 1.0]), Mat::zeros(3, 1)];
        let r = rmse(&xs, &es).unwrap();
        assert_eq!(r.excluded, 1);
        assert_eq!(r.used, 1);
        assert!((r.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rmse_scale_invariant_per_pair() {
        let mut rng = Rng::new(3);
        let xs: Vec<Mat> = (0..5).map(|_| rng.gaussian(4, 1)).collect();
        let es: Vec<Mat> = (0..5).map(|_| rng.gaussian(4, 1)).collect();
        let base = rmse(&xs, &es).unwrap().value;
        let xs2: Vec<Mat> = xs.iter().map(|x| x.scale(7.5)).collect();
        let es2: Vec<Mat> = es.iter().map(|e| e.scale(7.5)).collect();
        let scaled = rmse(&xs2, &es2).unwrap().value;
        assert!((base - scaled).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn support_prob_cases() {
        let truth = [0.0, 1.0, 0.0, -0.9, 0.8, 0.0];
        assert_eq!(support_prob(&truth, &truth, SupportRule::TopK).unwrap(), 1.0);
        let disjoint = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        assert_eq!(
            support_prob(&truth, &disjoint, SupportRule::TopK).unwrap(),
            0.0
        );
        // estimate hits 2 of the 3 true indices among its top 3
        let partial = [0.0, 5.0, 4.0, 3.0, 0.1, 0.0];
        let p = support_prob(&truth, &partial, SupportRule::TopK).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn support_prob_is_rational_with_denominator_k() {
        let mut rng = Rng::new(4);
        for _ in 0..200 {
            let k = 1 + rng.next_index(5);
            let mut truth = vec![0.0; 12];
            for i in rng.subset(12, k) {
                truth[i] = 1.0;
            }
            let est: Vec<f64> = (0..12).map(|_| rng.standard_normal()).collect();
            let p = support_prob(&truth, &est, SupportRule::TopK).unwrap();
            let scaled = p * k as f64;
            assert!((scaled - scaled.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn support_prob_rejects_zero_truth() {
        assert!(support_prob(&[0.0; 4], &[1.0; 4], SupportRule::TopK).is_err());
    }

    #[test]
    fn threshold_rule_works() {
        let truth = [1.0, 0.0, 1.0, 0.0];
        let est = [0.9, 0.05, 0.8, 0.02];
        let p = support_prob(&truth, &est, SupportRule::RelativeThreshold(0.1)).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn failure_rate_cases() {
        assert_eq!(failure_rate(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(failure_rate(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(failure_rate(&[1.0, 1.0, 0.5, 1.0]).unwrap(), 0.25);
        assert!(failure_rate(&[]).is_err());
    }

    #[test]
    fn failure_rate_monotone_under_fixes() {
        let mut probs = vec![1.0, 0.4, 0.7, 1.0, 0.0];
        let before = failure_rate(&probs).unwrap();
        probs[1] = 1.0;
        let after = failure_rate(&probs).unwrap();
        assert!(after <= before);
    }
}
