//! Post-processing of interaction records: per-interaction utility-gain
//! series, Welch two-sample t-tests at 95% confidence, group rankings and
//! windowed summaries.

use std::collections::BTreeMap;

use crate::engine::InteractionRecord;
use crate::population::ConsumerGroup;

/// Significance level used throughout: 95% confidence.
pub const DEFAULT_ALPHA: f64 = 0.05;

/// Mean utility gain of one consumer group at one interaction index.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub group: ConsumerGroup,
    pub interaction_index: u32,
    /// One mean per contributing run, in run order.
    pub per_run_means: Vec<f64>,
    /// Mean of the per-run means.
    pub pooled_mean: f64,
}

/// Aggregates records into per-(group, interaction) series.
///
/// The per-run mean at index `k` averages the UG of every consumer of the
/// group whose `k`-th interaction exists in that run. Points backed by fewer
/// than two runs are dropped (kept for single-run aggregations, where the
/// rule would erase everything).
pub fn aggregate(records: &[InteractionRecord], nisr: u32) -> Vec<SeriesPoint> {
    let nisr = nisr as usize;
    let mut acc: BTreeMap<(u32, usize), Vec<Vec<f64>>> = BTreeMap::new();
    for r in records {
        let run = r.run_id as usize;
        assert!(run < nisr, "record run_id {run} outside 0..{nisr}");
        acc.entry((r.interaction_index, r.group.index()))
            .or_insert_with(|| vec![Vec::new(); nisr])
            [run]
            .push(r.ug);
    }
    let min_runs = if nisr <= 1 { 1 } else { 2 };
    let mut series = Vec::new();
    for ((k, group_idx), mut runs) in acc {
        // Sorting before summation makes the result exactly independent of
        // record order.
        let per_run_means: Vec<f64> = runs
            .iter_mut()
            .filter(|v| !v.is_empty())
            .map(|v| {
                v.sort_by(f64::total_cmp);
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        if per_run_means.len() < min_runs {
            continue;
        }
        let pooled_mean = per_run_means.iter().sum::<f64>() / per_run_means.len() as f64;
        series.push(SeriesPoint {
            group: ConsumerGroup::ALL[group_idx],
            interaction_index: k,
            per_run_means,
            pooled_mean,
        });
    }
    series
}

/// Result of a Welch two-sample t-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestOutcome {
    pub significant: bool,
    pub t_stat: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Welch unequal-variance two-sided t-test; `significant` iff `p < alpha`.
/// Samples with fewer than two points leave the test undefined, reported as
/// not significant.
pub fn welch_t_test(a: &[f64], b: &[f64], alpha: f64) -> TTestOutcome {
    if a.len() < 2 || b.len() < 2 {
        return TTestOutcome {
            significant: false,
            t_stat: f64::NAN,
            df: f64::NAN,
            p_value: f64::NAN,
        };
    }
    let (mean_a, var_a) = sample_moments(a);
    let (mean_b, var_b) = sample_moments(b);
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let se_sq = var_a / na + var_b / nb;
    if se_sq == 0.0 {
        // Two exactly constant samples: distinguishable iff the means differ.
        let distinct = mean_a != mean_b;
        return TTestOutcome {
            significant: distinct,
            t_stat: if distinct {
                f64::INFINITY * (mean_a - mean_b).signum()
            } else {
                0.0
            },
            df: na + nb - 2.0,
            p_value: if distinct { 0.0 } else { 1.0 },
        };
    }
    let t_stat = (mean_a - mean_b) / se_sq.sqrt();
    let df = se_sq * se_sq
        / ((var_a / na).powi(2) / (na - 1.0) + (var_b / nb).powi(2) / (nb - 1.0));
    let p_value = two_sided_p(t_stat, df);
    TTestOutcome {
        significant: p_value < alpha,
        t_stat,
        df,
        p_value,
    }
}

fn sample_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Two-sided p-value of a t-statistic with `df` degrees of freedom:
/// `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
}

/// Student-t CDF via the regularized incomplete beta function.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = two_sided_p(t, df) / 2.0;
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Regularized incomplete beta `I_x(a, b)` by the Lentz continued fraction,
/// accurate to well below 1e-10 over the arguments used here.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "x must lie in [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation (g = 7, 9 terms).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507343278686905,
        -0.13857109526572012,
        9.984_369_578_019_572e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Ranks groups 3 (best) down to 1 by mean; adjacent groups whose difference
/// is not significant share a block, and merging chains transitively. Each
/// block carries the rank of its best position.
///
/// `significant[i][j]` states whether groups `i` and `j` differ significantly.
pub fn rank_groups(means: &[f64], significant: &[Vec<bool>]) -> Vec<u32> {
    let g = means.len();
    assert!(g > 0, "nothing to rank");
    assert!(significant.len() == g && significant.iter().all(|row| row.len() == g));
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&i, &j| {
        means[j]
            .partial_cmp(&means[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut ranks = vec![0u32; g];
    let mut block_start = 0usize;
    for pos in 0..g {
        if pos > 0 && significant[order[pos - 1]][order[pos]] {
            block_start = pos;
        }
        ranks[order[pos]] = (g - block_start) as u32;
    }
    ranks
}

/// Mean pooled UG of one group over one interaction-index window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSummary {
    pub group: ConsumerGroup,
    pub start: u32,
    pub end: u32,
    /// None when the window holds no points for the group.
    pub mean: Option<f64>,
    pub n_points: usize,
}

/// Per-group means over inclusive interaction windows, e.g. steady-state
/// comparisons over interactions 100..=400.
pub fn summarize(series: &[SeriesPoint], windows: &[(u32, u32)]) -> Vec<WindowSummary> {
    let mut out = Vec::with_capacity(windows.len() * ConsumerGroup::ALL.len());
    for group in ConsumerGroup::ALL {
        for &(start, end) in windows {
            let values: Vec<f64> = series
                .iter()
                .filter(|p| p.group == group && p.interaction_index >= start && p.interaction_index <= end)
                .map(|p| p.pooled_mean)
                .collect();
            let mean = if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            };
            out.push(WindowSummary {
                group,
                start,
                end,
                mean,
                n_points: values.len(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ConsumerId;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn record(run_id: u32, group: ConsumerGroup, consumer: u64, k: u32, ug: f64) -> InteractionRecord {
        InteractionRecord {
            run_id,
            group,
            consumer: ConsumerId(consumer),
            interaction_index: k,
            round: k as u64,
            ug,
        }
    }

    // Direct-formula oracle, written independently of `welch_t_test`.
    fn oracle_t_stat(a: &[f64], b: &[f64]) -> f64 {
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let var = |xs: &[f64]| {
            let m = mean(xs);
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
        };
        (mean(a) - mean(b)) / (var(a) / a.len() as f64 + var(b) / b.len() as f64).sqrt()
    }

    #[test]
    fn aggregate_single_run_keeps_points() {
        let records = vec![
            record(0, ConsumerGroup::Ca, 1, 1, 2.0),
            record(0, ConsumerGroup::Ca, 1, 2, 4.0),
        ];
        let series = aggregate(&records, 1);
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].interaction_index, 1);
        assert_eq!(series[0].pooled_mean, 2.0);
        assert_eq!(series[1].pooled_mean, 4.0);
    }

    #[test]
    fn aggregate_pools_run_means() {
        let records = vec![
            record(0, ConsumerGroup::Fire, 1, 1, 3.0),
            record(1, ConsumerGroup::Fire, 2, 1, 5.0),
        ];
        let series = aggregate(&records, 2);
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].per_run_means, vec![3.0, 5.0]);
        assert_eq!(series[0].pooled_mean, 4.0);
    }

    #[test]
    fn aggregate_drops_single_run_points_when_multi_run() {
        let records = vec![
            record(0, ConsumerGroup::Fire, 1, 1, 3.0),
            record(1, ConsumerGroup::Fire, 2, 1, 5.0),
            record(0, ConsumerGroup::Fire, 1, 2, 9.0), // only run 0 reaches k=2
        ];
        let series = aggregate(&records, 2);
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].interaction_index, 1);
    }

    #[test]
    fn aggregate_empty_group_has_no_points() {
        let records = vec![record(0, ConsumerGroup::Ca, 1, 1, 2.0)];
        let series = aggregate(&records, 1);
        assert!(series.iter().all(|p| p.group == ConsumerGroup::Ca));
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let mut records = vec![
            record(0, ConsumerGroup::Ca, 1, 1, 2.0),
            record(0, ConsumerGroup::Ca, 2, 1, -1.5),
            record(0, ConsumerGroup::Ca, 3, 1, 7.25),
            record(1, ConsumerGroup::Ca, 4, 1, 0.125),
            record(1, ConsumerGroup::Fire, 5, 1, 3.5),
            record(0, ConsumerGroup::Fire, 6, 1, -2.0),
        ];
        let forward = aggregate(&records, 2);
        records.reverse();
        let backward = aggregate(&records, 2);
        assert_eq!(forward, backward);
    }

    #[test]
    fn welch_identical_samples_not_significant() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let out = welch_t_test(&a, &a, DEFAULT_ALPHA);
        assert!(!out.significant);
        assert_abs_diff_eq!(out.t_stat, 0.0);
    }

    #[test]
    fn welch_separated_samples_significant() {
        let a: Vec<f64> = (0..30).map(|i| 6.0 + 0.1 * ((i % 5) as f64 - 2.0)).collect();
        let b: Vec<f64> = (0..30).map(|i| 3.0 + 0.1 * ((i % 5) as f64 - 2.0)).collect();
        let out = welch_t_test(&a, &b, DEFAULT_ALPHA);
        assert!(out.significant);
        assert!(out.t_stat > 10.0);
    }

    #[test]
    fn welch_matches_direct_formula_and_reference_values() {
        // Reference statistics computed independently with scipy.stats
        // (ttest_ind, equal_var=False).
        let a = [5.1, 4.9, 6.2, 5.7, 5.5, 5.1, 5.2, 5.0, 5.3, 5.8];
        let b = [4.2, 4.8, 5.0, 4.6, 4.4, 4.9, 4.1, 4.7, 4.5, 4.3];
        let out = welch_t_test(&a, &b, DEFAULT_ALPHA);
        assert_abs_diff_eq!(out.t_stat, oracle_t_stat(&a, &b), epsilon = 1e-9);
        assert_abs_diff_eq!(out.t_stat, 5.124498301907371, epsilon = 1e-9);
        assert_abs_diff_eq!(out.df, 16.503352883183478, epsilon = 1e-9);
        assert_abs_diff_eq!(out.p_value, 0.0000925954513164, epsilon = 1e-10);
        assert!(out.significant);

        let c = [1.1, 2.3, 3.2, 4.7, 5.1, 6.4, 7.9];
        let d = [2.5, 3.5, 4.5, 5.5];
        let out = welch_t_test(&c, &d, DEFAULT_ALPHA);
        assert_abs_diff_eq!(out.t_stat, oracle_t_stat(&c, &d), epsilon = 1e-9);
        assert_abs_diff_eq!(out.t_stat, 0.3497949334514118, epsilon = 1e-9);
        assert_abs_diff_eq!(out.df, 8.9964659402405278, epsilon = 1e-9);
        assert_abs_diff_eq!(out.p_value, 0.7345416533511930, epsilon = 1e-10);
        assert!(!out.significant);
    }

    #[test]
    fn welch_undefined_below_two_points() {
        let out = welch_t_test(&[1.0], &[1.0, 2.0], DEFAULT_ALPHA);
        assert!(!out.significant);
        assert!(out.t_stat.is_nan());
    }

    #[test]
    fn student_t_cdf_matches_reference_values() {
        // scipy.stats.t.cdf reference points.
        let cases = [
            (0.0, 5.0, 0.5),
            (1.0, 5.0, 0.8183912661754387),
            (2.5, 9.0, 0.9830690861585071),
            (0.5, 29.0, 0.6895759579031093),
            (3.2, 2.5, 0.9682944858818093),
            (-1.8, 12.0, 0.0485163389725644),
            (6.0, 3.0, 0.9953636425538577),
            (0.05, 1.0, 0.5159022512561764),
        ];
        for (t, df, expected) in cases {
            assert_abs_diff_eq!(student_t_cdf(t, df), expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn rank_groups_fully_separated() {
        let sig = vec![
            vec![false, true, true],
            vec![true, false, true],
            vec![true, true, false],
        ];
        assert_eq!(rank_groups(&[6.0, 3.0, 0.0], &sig), vec![3, 2, 1]);
    }

    #[test]
    fn rank_groups_merges_insignificant_top_pair() {
        let sig = vec![
            vec![false, false, true],
            vec![false, false, true],
            vec![true, true, false],
        ];
        assert_eq!(rank_groups(&[6.0, 5.9, 0.0], &sig), vec![3, 3, 1]);
    }

    #[test]
    fn rank_groups_full_merge_when_nothing_is_significant() {
        let sig = vec![vec![false; 3]; 3];
        assert_eq!(rank_groups(&[6.0, 3.0, 0.0], &sig), vec![3, 3, 3]);
    }

    #[test]
    fn rank_groups_merges_transitively() {
        // A~B and B~C insignificant, A vs C significant: one block anyway.
        let sig = vec![
            vec![false, false, true],
            vec![false, false, false],
            vec![true, false, false],
        ];
        assert_eq!(rank_groups(&[6.0, 5.5, 5.0], &sig), vec![3, 3, 3]);
    }

    #[test]
    fn summarize_windows() {
        let series: Vec<SeriesPoint> = (1..=10)
            .map(|k| SeriesPoint {
                group: ConsumerGroup::Ca,
                interaction_index: k,
                per_run_means: vec![5.0],
                pooled_mean: 5.0,
            })
            .collect();
        let out = summarize(&series, &[(1, 10), (1, 1), (11, 20)]);
        let ca: Vec<&WindowSummary> = out.iter().filter(|w| w.group == ConsumerGroup::Ca).collect();
        assert_eq!(ca[0].mean, Some(5.0));
        assert_eq!(ca[0].n_points, 10);
        assert_eq!(ca[1].mean, Some(5.0));
        assert_eq!(ca[1].n_points, 1);
        assert_eq!(ca[2].mean, None);
    }

    #[test]
    fn summarize_matches_recomputation_over_disjoint_windows() {
        let series: Vec<SeriesPoint> = (1u32..=30)
            .map(|k| SeriesPoint {
                group: ConsumerGroup::Fire,
                interaction_index: k,
                per_run_means: vec![k as f64],
                pooled_mean: (k as f64).sin() * 4.0,
            })
            .collect();
        let windows = [(1u32, 10u32), (21u32, 30u32)];
        let out = summarize(&series, &windows);
        for (start, end) in windows {
            let expected: Vec<f64> = series
                .iter()
                .filter(|p| (start..=end).contains(&p.interaction_index))
                .map(|p| p.pooled_mean)
                .collect();
            let expected = expected.iter().sum::<f64>() / expected.len() as f64;
            let got = out
                .iter()
                .find(|w| w.group == ConsumerGroup::Fire && w.start == start && w.end == end)
                .unwrap();
            assert_abs_diff_eq!(got.mean.unwrap(), expected, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn welch_is_antisymmetric(
            a in proptest::collection::vec(-10.0f64..10.0, 2..20),
            b in proptest::collection::vec(-10.0f64..10.0, 2..20),
        ) {
            let ab = welch_t_test(&a, &b, DEFAULT_ALPHA);
            let ba = welch_t_test(&b, &a, DEFAULT_ALPHA);
            prop_assert_eq!(ab.significant, ba.significant);
            if ab.t_stat.is_finite() {
                prop_assert!((ab.t_stat + ba.t_stat).abs() < 1e-9);
            }
        }

        #[test]
        fn ranks_are_invariant_under_positive_affine_transforms(
            base in proptest::collection::vec(-5.0f64..5.0, 8),
            scale in 0.1f64..20.0,
            shift in -50.0f64..50.0,
        ) {
            let a: Vec<f64> = base.iter().map(|x| x + 1.0).collect();
            let b: Vec<f64> = base.iter().map(|x| x * 0.5).collect();
            let c: Vec<f64> = base.iter().map(|x| x - 2.0).collect();
            let samples = [&a, &b, &c];
            let transformed: Vec<Vec<f64>> = samples.iter().map(|s| s.iter().map(|x| x * scale + shift).collect()).collect();

            let matrix = |sets: &[&[f64]]| -> (Vec<f64>, Vec<Vec<bool>>) {
                let means: Vec<f64> = sets.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
                let mut sig = vec![vec![false; sets.len()]; sets.len()];
                for i in 0..sets.len() {
                    for j in 0..sets.len() {
                        if i != j {
                            sig[i][j] = welch_t_test(sets[i], sets[j], DEFAULT_ALPHA).significant;
                        }
                    }
                }
                (means, sig)
            };
            let (m1, s1) = matrix(&[&a, &b, &c]);
            let t: Vec<&[f64]> = transformed.iter().map(|v| v.as_slice()).collect();
            let (m2, s2) = matrix(&t);
            prop_assert_eq!(rank_groups(&m1, &s1), rank_groups(&m2, &s2));
        }

        #[test]
        fn every_group_gets_a_rank(means in proptest::collection::vec(-10.0f64..10.0, 3),
                                   bits in 0u8..8) {
            let mut sig = vec![vec![false; 3]; 3];
            let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
            for (n, (i, j)) in pairs.iter().enumerate() {
                let s = (bits >> n) & 1 == 1;
                sig[*i][*j] = s;
                sig[*j][*i] = s;
            }
            let ranks = rank_groups(&means, &sig);
            prop_assert_eq!(ranks.len(), 3);
            prop_assert!(ranks.iter().all(|r| (1..=3).contains(r)));
        }
    }
}
