//! Accuracy metrics, the Coverage information metric, and DTW distance.

use crate::error::{dim_check, Error, Result};

fn check_pair(pred: &[f64], gt: &[f64]) -> Result<()> {
    dim_check("prediction vs ground truth length", gt.len(), pred.len())?;
    if gt.is_empty() {
        return Err(Error::Dimension("metric over empty sequences".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    let sse: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok((sse / gt.len() as f64).sqrt())
}

pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    let sae: f64 = pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum();
    Ok(sae / gt.len() as f64)
}

/// Mean absolute percentage error over the entries where `gt != 0`, in percent.
pub fn mape_excluding_zeros(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    let (sum, n) = pred
        .iter()
        .zip(gt)
        .filter(|(_, g)| **g != 0.0)
        .fold((0.0, 0usize), |(s, n), (p, g)| (s + ((p - g) / g).abs(), n + 1));
    if n == 0 {
        return Err(Error::UndefinedMetric(
            "MAPE needs at least one nonzero ground-truth value".into(),
        ));
    }
    Ok(100.0 * sum / n as f64)
}

/// Sum of the ground-truth values taken at observation times.
pub fn coverage(observed_values: &[f64]) -> f64 {
    observed_values.iter().sum()
}

/// Unconstrained DTW with squared-difference ground cost and steps
/// (1,0), (0,1), (1,1); returns the square root of the optimal path cost.
pub fn dtw_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Dimension("DTW of an empty sequence".into()));
    }
    let m = b.len();
    // Two rolling rows over b, with an infinite sentinel column at index 0.
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let d = x - b[j - 1];
            cur[j] = d * d + prev[j - 1].min(prev[j]).min(cur[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
        prev[0] = f64::INFINITY;
    }
    Ok(prev[m].sqrt())
}

/// Aggregate metrics for one configuration, in original data units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub mape_pct: f64,
    pub coverage: f64,
}

pub const CSV_HEADER: &str = "config,rmse,mae,mape_pct,coverage";

impl MetricReport {
    /// Pooled metrics over all episodes plus episode-averaged coverage.
    pub fn from_episodes(estimates: &[Vec<f64>], truths: &[Vec<f64>], observed_values: &[Vec<f64>]) -> Result<Self> {
        dim_check("episode count", truths.len(), estimates.len())?;
        let pred: Vec<f64> = estimates.iter().flatten().copied().collect();
        let gt: Vec<f64> = truths.iter().flatten().copied().collect();
        let cov = if observed_values.is_empty() {
            0.0
        } else {
            observed_values.iter().map(|o| coverage(o)).sum::<f64>() / observed_values.len() as f64
        };
        Ok(MetricReport {
            rmse: rmse(&pred, &gt)?,
            mae: mae(&pred, &gt)?,
            // All-zero test data leaves MAPE undefined; report NaN rather than fail the run.
            mape_pct: mape_excluding_zeros(&pred, &gt).unwrap_or(f64::NAN),
            coverage: cov,
        })
    }

    pub fn to_key_values(&self) -> String {
        format!(
            "rmse={:.6}\nmae={:.6}\nmape_pct={:.6}\ncoverage={:.6}\n",
            self.rmse, self.mae, self.mape_pct, self.coverage
        )
    }

    pub fn to_csv_row(&self, config: &str) -> String {
        format!(
            "{config},{:.6},{:.6},{:.6},{:.6}",
            self.rmse, self.mae, self.mape_pct, self.coverage
        )
    }

    /// Parse one data row written by [`to_csv_row`](Self::to_csv_row).
    pub fn parse_csv_row(row: &str) -> Result<(String, MetricReport)> {
        let fields: Vec<&str> = row.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: 2,
                msg: format!("metrics row has {} fields, expected 5", fields.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|_| Error::Parse {
                line: 2,
                msg: format!("metrics field {:?} is not a number", fields[i]),
            })
        };
        Ok((
            fields[0].to_string(),
            MetricReport {
                rmse: num(1)?,
                mae: num(2)?,
                mape_pct: num(3)?,
                coverage: num(4)?,
            },
        ))
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    /// Exhaustive DTW: enumerate every monotone warping path from (0,0) to
    /// (n-1,m-1) and keep the cheapest squared-difference cost.
    pub fn dtw_brute_force(a: &[f64], b: &[f64]) -> f64 {
        fn walk(a: &[f64], b: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
            let d = a[i] - b[j];
            let acc = acc + d * d;
            if i == a.len() - 1 && j == b.len() - 1 {
                *best = best.min(acc);
                return;
            }
            if i + 1 < a.len() {
                walk(a, b, i + 1, j, acc, best);
            }
            if j + 1 < b.len() {
                walk(a, b, i, j + 1, acc, best);
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                walk(a, b, i + 1, j + 1, acc, best);
            }
        }
        let mut best = f64::INFINITY;
        walk(a, b, 0, 0, 0.0, &mut best);
        best.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::dtw_brute_force;
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_relative_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[4.0, 5.0], &[4.0, 5.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 2.0);
    }

    #[test]
    fn mape_examples() {
        assert_relative_eq!(mape_excluding_zeros(&[5.0, 1.0], &[0.0, 2.0]).unwrap(), 50.0);
        assert_eq!(mape_excluding_zeros(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(
            mape_excluding_zeros(&[2.0, 1.0, 2.0], &[1.0, 2.0, 4.0]).unwrap(),
            200.0 / 3.0,
            epsilon = 1e-12
        );
        assert!(matches!(
            mape_excluding_zeros(&[1.0, 2.0], &[0.0, 0.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn coverage_examples() {
        assert_relative_eq!(coverage(&[0.1, 0.2, 0.3]), 0.6, epsilon = 1e-15);
        assert_eq!(coverage(&[]), 0.0);
    }

    #[test]
    fn dtw_examples() {
        assert_eq!(dtw_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(dtw_brute_force(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]), 0.0);
        assert_relative_eq!(dtw_distance(&[0.0; 3], &[1.0; 3]).unwrap(), 3f64.sqrt());
        assert_relative_eq!(dtw_brute_force(&[0.0; 3], &[1.0; 3]), 3f64.sqrt());
        assert!(dtw_distance(&[], &[1.0]).is_err());
    }

    #[test]
    fn dtw_matches_enumeration_on_small_integer_sequences() {
        // Every pair of sequences with lengths 1..=3 over {0,1,2}; the
        // acceptance suite extends this to length 5.
        let seqs: Vec<Vec<f64>> = (1..=3)
            .flat_map(|len| {
                (0..3usize.pow(len as u32)).map(move |mut code| {
                    (0..len)
                        .map(|_| {
                            let v = (code % 3) as f64;
                            code /= 3;
                            v
                        })
                        .collect()
                })
            })
            .collect();
        for a in &seqs {
            for b in &seqs {
                assert_eq!(dtw_distance(a, b).unwrap(), dtw_brute_force(a, b));
            }
        }
    }

    #[test]
    fn report_round_trips_through_csv() {
        let r = MetricReport {
            rmse: 0.0212,
            mae: 0.0115,
            mape_pct: 53.3,
            coverage: 1.721,
        };
        let (name, back) = MetricReport::parse_csv_row(&r.to_csv_row("lstm+drqn+lstm")).unwrap();
        assert_eq!(name, "lstm+drqn+lstm");
        assert_eq!(back, r);
        assert!(r.to_key_values().contains("coverage=1.721000"));
    }

    #[test]
    fn report_pools_points_and_averages_coverage() {
        let est = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let gt = vec![vec![0.0, 1.0], vec![1.0, 1.0]];
        let obs = vec![vec![1.0], vec![0.5, 0.5, 1.0]];
        let r = MetricReport::from_episodes(&est, &gt, &obs).unwrap();
        assert_relative_eq!(r.rmse, 0.5);
        assert_relative_eq!(r.mae, 0.25);
        assert_relative_eq!(r.mape_pct, 100.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(r.coverage, 1.5);
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(-5.0f64..5.0, n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_ordered((p, g) in vec_pair()) {
            let r = rmse(&p, &g).unwrap();
            let m = mae(&p, &g).unwrap();
            prop_assert_eq!(r, rmse(&g, &p).unwrap());
            prop_assert_eq!(m, mae(&g, &p).unwrap());
            prop_assert!(m >= 0.0 && r >= 0.0);
            prop_assert!(m <= r + 1e-12);
        }

        #[test]
        fn mape_ignores_zero_truth_entries((p, mut g) in vec_pair(), bump in -3.0f64..3.0) {
            g[0] = 0.0;
            if g.iter().all(|v| *v == 0.0) { g.push(1.0); }
            let mut p = p;
            if p.len() < g.len() { p.push(0.5); }
            let base = mape_excluding_zeros(&p, &g).unwrap();
            p[0] += bump;
            prop_assert_eq!(base, mape_excluding_zeros(&p, &g).unwrap());
        }

        #[test]
        fn coverage_is_additive(u in prop::collection::vec(0.0f64..1.0, 0..20), v in prop::collection::vec(0.0f64..1.0, 0..20)) {
            let joined: Vec<f64> = u.iter().chain(&v).copied().collect();
            prop_assert!((coverage(&joined) - coverage(&u) - coverage(&v)).abs() < 1e-12);
        }

        #[test]
        fn dtw_symmetric_with_zero_self_distance(
            a in prop::collection::vec(-2.0f64..2.0, 1..12),
            b in prop::collection::vec(-2.0f64..2.0, 1..12),
        ) {
            prop_assert_eq!(dtw_distance(&a, &a).unwrap(), 0.0);
            let ab = dtw_distance(&a, &b).unwrap();
            let ba = dtw_distance(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
            if a.len() <= 6 && b.len() <= 6 {
                prop_assert!((ab - dtw_brute_force(&a, &b)).abs() <= 1e-9 * ab.max(1.0));
            }
        }
    }
}
