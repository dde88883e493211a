//! Inference-time anomaly scoring and ranking metrics (AUROC, average
//! precision, best F1).
//!
//! Tie conventions: AUROC uses the half-tie Mann-Whitney statistic; average
//! precision orders by (score descending, original index ascending) so tied
//! blocks are processed in a fixed, stable order; the best-F1 scan places
//! thresholds between consecutive distinct scores plus the two infinities
//! and, on ties, reports the lowest maximizing threshold.

use serde::{Deserialize, Serialize};

use crate::encoder::{forward, EncoderModel};
use crate::error::{Error, Result};
use crate::numerics::{l2_distance, stable_sigmoid, Matrix};
use crate::objective::ObjectiveConfig;

/// One scored sample: the raw centre distance and its probabilistic form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    /// Euclidean distance ||r - c||.
    pub distance: f64,
    /// sigmoid((alpha / sqrt(D)) * distance); 0.5 at the centre, monotone
    /// increasing in the distance.
    pub probability: f64,
}

/// Score a batch: per sample, the distance of its representation to the
/// centre and the matching anomaly probability.
pub fn score(model: &EncoderModel, cfg: &ObjectiveConfig, batch: &Matrix) -> Result<Vec<Score>> {
    if cfg.latent_dim() != model.latent_dim() {
        return Err(Error::Dimension(format!(
            "centre length {} vs latent dim {}",
            cfg.latent_dim(),
            model.latent_dim()
        )));
    }
    let (reps, _) = forward(model, batch)?;
    let scale = cfg.alpha / (model.latent_dim() as f64).sqrt();
    let mut out = Vec::with_capacity(batch.rows());
    for i in 0..reps.rows() {
        let distance = l2_distance(reps.row(i), &cfg.centre)?;
        out.push(Score {
            distance,
            probability: stable_sigmoid(scale * distance),
        });
    }
    Ok(out)
}

/// Scores paired with ground-truth labels; higher scores mean more anomalous.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<ScoredSet> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores vs {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| **l > 1) {
            return Err(Error::Label(*l));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Input("scores contain NaN or Inf".into()));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }
}

/// Probability that a random positive outscores a random negative, with ties
/// counting one half (Mann-Whitney rank formulation).
pub fn auroc(s: &ScoredSet) -> Result<f64> {
    let p = s.positives();
    let n = s.negatives();
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auroc needs both classes, got {p} positives / {n} negatives"
        )));
    }
    let total = s.len();
    let mut order: Vec<usize> = (0..total).collect();
    order.sort_by(|&a, &b| s.scores[a].partial_cmp(&s.scores[b]).unwrap());

    // average ranks over tie groups (ranks are 1-based)
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && s.scores[order[j + 1]] == s.scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            if s.labels[k] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (p * (p + 1)) as f64 / 2.0;
    Ok(u / (p as f64 * n as f64))
}

/// Average precision: the mean, over positives in descending-score order, of
/// precision at that rank.
pub fn aupr(s: &ScoredSet) -> Result<f64> {
    let p = s.positives();
    if p == 0 {
        return Err(Error::UndefinedMetric("aupr needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    // score descending, original index ascending within ties
    order.sort_by(|&a, &b| {
        s.scores[b]
            .partial_cmp(&s.scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, &k) in order.iter().enumerate() {
        if s.labels[k] == 1 {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / p as f64)
}

/// F1 = 2TP / (2TP + FP + FN), defined as 0 when no predictions are positive.
fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Maximum F1 over all thresholds, scanning only between distinct scores
/// (F1 is piecewise constant in the threshold, so the scan is exact).
/// Predicts anomalous when score > threshold; returns the lowest maximizing
/// threshold.
pub fn best_f1(s: &ScoredSet) -> Result<(f64, f64)> {
    let p = s.positives();
    if p == 0 {
        return Err(Error::UndefinedMetric(
            "best_f1 needs at least one positive".into(),
        ));
    }
    let n = s.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.scores[b].partial_cmp(&s.scores[a]).unwrap());

    // the prefix of the k highest scores is the predicted-positive set; valid
    // cut points are k = 0, k = n, and every boundary between distinct scores
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new(); // (k, tp, threshold)
    candidates.push((0, 0, f64::INFINITY));
    let mut tp = 0usize;
    for k in 1..=n {
        if s.labels[order[k - 1]] == 1 {
            tp += 1;
        }
        if k < n {
            let hi = s.scores[order[k - 1]];
            let lo = s.scores[order[k]];
            if hi != lo {
                candidates.push((k, tp, (hi + lo) / 2.0));
            }
        } else {
            candidates.push((n, tp, f64::NEG_INFINITY));
        }
    }

    // larger k means lower threshold; walk thresholds ascending and replace
    // only on strict improvement so ties keep the lowest threshold
    let mut best = (-1.0, f64::NEG_INFINITY);
    for &(k, tp, threshold) in candidates.iter().rev() {
        let f1 = f1_from_counts(tp, k - tp, p - tp);
        if f1 > best.0 {
            best = (f1, threshold);
        }
    }
    Ok(best)
}

/// Threshold-free and thresholded metrics for one experiment cell, plus
/// per-class score summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: f64,
    pub aupr: f64,
    pub best_f1: f64,
    pub best_threshold: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Mean score over normal samples.
    pub score_mean_normal: f64,
    /// Mean score over anomalous samples.
    pub score_mean_anomaly: f64,
}

impl MetricReport {
    pub fn from_scored(s: &ScoredSet) -> Result<MetricReport> {
        let (f1, threshold) = best_f1(s)?;
        let positives = s.positives();
        let negatives = s.negatives();
        let mean = |label: u8| {
            let (sum, count) = s
                .scores
                .iter()
                .zip(&s.labels)
                .filter(|(_, l)| **l == label)
                .fold((0.0, 0usize), |(a, c), (v, _)| (a + v, c + 1));
            if count == 0 {
                f64::NAN
            } else {
                sum / count as f64
            }
        };
        Ok(MetricReport {
            auroc: auroc(s)?,
            aupr: aupr(s)?,
            best_f1: f1,
            best_threshold: threshold,
            positives,
            negatives,
            score_mean_normal: mean(0),
            score_mean_anomaly: mean(1),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_encoder, Activation, LayerSpec};
    use crate::numerics::SeededRng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn score_is_half_probability_at_centre() {
        let specs = vec![LayerSpec::new(2, 2, Activation::Identity)];
        let mut rng = SeededRng::new(0);
        let mut model = init_encoder(&specs, &mut rng).unwrap();
        model.set_params_from_vec(&vec![0.0; model.param_count()]).unwrap();
        let cfg = ObjectiveConfig::at_origin(2);
        let scores = score(
            &model,
            &cfg,
            &Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(scores[0].distance, 0.0);
        assert_eq!(scores[0].probability, 0.5);
    }

    #[test]
    fn probability_ranking_equals_distance_ranking() {
        let specs = vec![LayerSpec::new(3, 4, Activation::Tanh)];
        let mut rng = SeededRng::new(10);
        let model = init_encoder(&specs, &mut rng).unwrap();
        let cfg = ObjectiveConfig::at_origin(4);
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..3).map(|_| rng.normal() * 2.0).collect())
            .collect();
        let scores = score(&model, &cfg, &Matrix::from_rows(&rows).unwrap()).unwrap();

        let rank = |key: fn(&Score) -> f64| {
            let mut idx: Vec<usize> = (0..scores.len()).collect();
            idx.sort_by(|&a, &b| key(&scores[a]).partial_cmp(&key(&scores[b])).unwrap());
            idx
        };
        assert_eq!(rank(|s| s.distance), rank(|s| s.probability));

        // doubling the underlying distance doubles the raw score and raises p
        let identity_specs = vec![LayerSpec::new(2, 2, Activation::Identity)];
        let mut rng2 = SeededRng::new(0);
        let mut ident = init_encoder(&identity_specs, &mut rng2).unwrap();
        let mut flat = vec![0.0; ident.param_count()];
        flat[0] = 1.0;
        flat[3] = 1.0;
        ident.set_params_from_vec(&flat).unwrap();
        let cfg2 = ObjectiveConfig::at_origin(2);
        let s = score(
            &ident,
            &cfg2,
            &Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(s[1].distance, 2.0 * s[0].distance, epsilon = 1e-15);
        assert!(s[1].probability > s[0].probability);
    }

    #[test]
    fn auroc_known_cases() {
        let perfect =
            ScoredSet::new(vec![0.1, 0.2, 0.8, 0.9], vec![0, 0, 1, 1]).unwrap();
        assert_eq!(auroc(&perfect).unwrap(), 1.0);

        let mixed =
            ScoredSet::new(vec![0.1, 0.4, 0.35, 0.8], vec![0, 0, 1, 1]).unwrap();
        assert_abs_diff_eq!(auroc(&mixed).unwrap(), 0.75, epsilon = 1e-15);

        let ties = ScoredSet::new(vec![0.5; 6], vec![0, 1, 0, 1, 0, 1]).unwrap();
        assert_abs_diff_eq!(auroc(&ties).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn auroc_undefined_for_single_class() {
        let s = ScoredSet::new(vec![0.1, 0.2], vec![1, 1]).unwrap();
        assert!(matches!(auroc(&s), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn aupr_known_cases() {
        let perfect =
            ScoredSet::new(vec![0.9, 0.8, 0.2, 0.1], vec![1, 1, 0, 0]).unwrap();
        assert_eq!(aupr(&perfect).unwrap(), 1.0);

        // one positive ranked last of 4 -> AP = 1/4
        let worst = ScoredSet::new(vec![0.9, 0.8, 0.7, 0.1], vec![0, 0, 0, 1]).unwrap();
        assert_abs_diff_eq!(aupr(&worst).unwrap(), 0.25, epsilon = 1e-15);

        // positive at rank 2 of 2 -> AP = 1/2
        let pair = ScoredSet::new(vec![0.2, 0.9], vec![1, 0]).unwrap();
        assert_abs_diff_eq!(aupr(&pair).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn best_f1_known_cases() {
        let perfect =
            ScoredSet::new(vec![0.9, 0.8, 0.2, 0.1], vec![1, 1, 0, 0]).unwrap();
        let (f1, t) = best_f1(&perfect).unwrap();
        assert_eq!(f1, 1.0);
        assert!(t > 0.2 && t < 0.8);

        // all-positive prediction is a floor: F1 = 2P/(2P+N)
        let s = ScoredSet::new(vec![0.5, 0.5, 0.5, 0.5], vec![1, 0, 0, 0]).unwrap();
        let (f1, t) = best_f1(&s).unwrap();
        assert_abs_diff_eq!(f1, 2.0 / 5.0, epsilon = 1e-15);
        assert_eq!(t, f64::NEG_INFINITY);
    }

    #[test]
    fn metric_report_bundles_all_values() {
        let s = ScoredSet::new(vec![0.1, 0.4, 0.35, 0.8], vec![0, 0, 1, 1]).unwrap();
        let r = MetricReport::from_scored(&s).unwrap();
        assert_abs_diff_eq!(r.auroc, 0.75, epsilon = 1e-15);
        assert_eq!(r.positives, 2);
        assert_eq!(r.negatives, 2);
        assert_abs_diff_eq!(r.score_mean_normal, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(r.score_mean_anomaly, 0.575, epsilon = 1e-15);
    }

    fn random_set(rng: &mut SeededRng, n: usize) -> ScoredSet {
        // duplicated scores on purpose: draw from a small grid half the time
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if rng.next_f64() < 0.5 {
                    (rng.next_below(8) as f64) / 8.0
                } else {
                    rng.next_f64()
                }
            })
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.next_f64() < 0.4)).collect();
        if !labels.contains(&1) {
            labels[0] = 1;
        }
        if !labels.contains(&0) {
            labels[n - 1] = 0;
        }
        ScoredSet::new(scores, labels).unwrap()
    }

    /// Brute-force pairwise Mann-Whitney statistic.
    fn auroc_bruteforce(s: &ScoredSet) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in s.labels().iter().enumerate() {
            if li != 1 {
                continue;
            }
            for (j, &lj) in s.labels().iter().enumerate() {
                if lj != 0 {
                    continue;
                }
                pairs += 1.0;
                if s.scores()[i] > s.scores()[j] {
                    wins += 1.0;
                } else if s.scores()[i] == s.scores()[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    /// Brute-force average precision via explicit rank walk.
    fn aupr_bruteforce(s: &ScoredSet) -> f64 {
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| {
            s.scores()[b]
                .partial_cmp(&s.scores()[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut seen = 0.0;
        let mut total = 0.0;
        let mut positives = 0.0;
        for (rank0, &k) in order.iter().enumerate() {
            if s.labels()[k] == 1 {
                seen += 1.0;
                positives += 1.0;
                total += seen / (rank0 + 1) as f64;
            }
        }
        total / positives
    }

    #[test]
    fn auroc_and_aupr_match_bruteforce_on_random_sets() {
        let mut rng = SeededRng::new(2024);
        for _ in 0..200 {
            let n = 2 + rng.next_below(49);
            let s = random_set(&mut rng, n);
            assert!((auroc(&s).unwrap() - auroc_bruteforce(&s)).abs() < 1e-12);
            assert!((aupr(&s).unwrap() - aupr_bruteforce(&s)).abs() < 1e-12);
        }
    }

    /// Exhaustive threshold oracle: every midpoint between distinct scores
    /// plus the infinities, computing F1 by direct counting.
    fn best_f1_bruteforce(s: &ScoredSet) -> (f64, f64) {
        let mut uniq: Vec<f64> = s.scores().to_vec();
        uniq.sort_by(|a, b| a.partial_cmp(b).unwrap());
        uniq.dedup();
        let mut candidates = vec![f64::NEG_INFINITY, f64::INFINITY];
        for w in uniq.windows(2) {
            candidates.push((w[0] + w[1]) / 2.0);
        }
        candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut best = (-1.0, 0.0);
        for &t in &candidates {
            let tp = s
                .scores()
                .iter()
                .zip(s.labels())
                .filter(|(v, l)| **v > t && **l == 1)
                .count();
            let fp = s
                .scores()
                .iter()
                .zip(s.labels())
                .filter(|(v, l)| **v > t && **l == 0)
                .count();
            let fn_ = s.positives() - tp;
            let f1 = f1_from_counts(tp, fp, fn_);
            if f1 > best.0 {
                best = (f1, t);
            }
        }
        best
    }

    #[test]
    fn best_f1_matches_exhaustive_scan() {
        let mut rng = SeededRng::new(4096);
        for _ in 0..200 {
            let n = 2 + rng.next_below(29);
            let s = random_set(&mut rng, n);
            let (f1, t) = best_f1(&s).unwrap();
            let (bf, bt) = best_f1_bruteforce(&s);
            assert!((f1 - bf).abs() < 1e-12, "{f1} vs {bf}");
            assert_eq!(t, bt);
        }
    }

    #[test]
    fn best_f1_dominates_fixed_thresholds() {
        let mut rng = SeededRng::new(512);
        for _ in 0..20 {
            let s = random_set(&mut rng, 30);
            let (f1, _) = best_f1(&s).unwrap();
            for _ in 0..100 {
                let t = rng.uniform(-0.5, 1.5);
                let tp = s
                    .scores()
                    .iter()
                    .zip(s.labels())
                    .filter(|(v, l)| **v > t && **l == 1)
                    .count();
                let fp = s
                    .scores()
                    .iter()
                    .zip(s.labels())
                    .filter(|(v, l)| **v > t && **l == 0)
                    .count();
                let fixed = f1_from_counts(tp, fp, s.positives() - tp);
                assert!(f1 >= fixed - 1e-15);
            }
        }
    }

    #[test]
    fn auroc_invariances() {
        let mut rng = SeededRng::new(77);
        for _ in 0..30 {
            let s = random_set(&mut rng, 25);
            let base = auroc(&s).unwrap();
            // strictly increasing transforms preserve the ranking
            let exp = ScoredSet::new(
                s.scores().iter().map(|v| v.exp()).collect(),
                s.labels().to_vec(),
            )
            .unwrap();
            let affine = ScoredSet::new(
                s.scores().iter().map(|v| 3.0 * v + 11.0).collect(),
                s.labels().to_vec(),
            )
            .unwrap();
            assert!((auroc(&exp).unwrap() - base).abs() < 1e-12);
            assert!((auroc(&affine).unwrap() - base).abs() < 1e-12);
        }

        // complement identity when no ties exist
        let mut rng = SeededRng::new(78);
        for _ in 0..30 {
            let n = 10;
            let scores: Vec<f64> = (0..n).map(|i| i as f64 + rng.next_f64() * 0.5).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.next_f64() < 0.5)).collect();
            labels[0] = 1;
            labels[1] = 0;
            let s = ScoredSet::new(scores.clone(), labels.clone()).unwrap();
            let neg =
                ScoredSet::new(scores.iter().map(|v| -v).collect(), labels).unwrap();
            assert!((auroc(&s).unwrap() + auroc(&neg).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
