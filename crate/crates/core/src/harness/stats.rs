//! Summary statistics used by the experiment commands.

use crate::error::{validation, Result};

/// Aggregate of one quantity across repetitions at one x-value.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub x: f64,
    pub median: f64,
    pub p10: f64,
    pub p90: f64,
    /// Sample variance (n − 1 denominator).
    pub variance: f64,
    pub mean_epoch_time_s: Option<f64>,
}

impl SummaryRow {
    pub fn from_values(x: f64, values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(validation(format!(
                "summaries need at least 2 repetitions, got {}",
                values.len()
            )));
        }
        Ok(SummaryRow {
            x,
            median: percentile(values, 50.0),
            p10: percentile(values, 10.0),
            p90: percentile(values, 90.0),
            variance: variance(values),
            mean_epoch_time_s: None,
        })
    }
}

/// Nearest-rank percentile: the value at rank `ceil(p/100 · n)` (at least 1)
/// of the ascending sample.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mu = mean(values);
    values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma).powi(2);
        db += (y - mb).powi(2);
    }
    if da == 0.0 || db == 0.0 {
        return 0.0;
    }
    num / (da * db).sqrt()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(validation("spearman needs two equal-length samples of size >= 2"));
    }
    Ok(pearson(&ranks(x), &ranks(y)))
}

/// Least-squares polynomial coefficients `c[0] + c[1]·x + …`.
pub fn polyfit(x: &[f64], y: &[f64], degree: usize) -> Result<Vec<f64>> {
    let k = degree + 1;
    if x.len() != y.len() || x.len() < k {
        return Err(validation(format!(
            "degree {degree} fit needs at least {k} points, got {}",
            x.len()
        )));
    }
    // normal equations on x scaled to [−1, 1]-ish magnitudes
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut a = vec![vec![0.0; k + 1]; k];
    for (&xi, &yi) in x.iter().zip(y) {
        let t = xi / scale;
        let pows: Vec<f64> = (0..k).map(|p| t.powi(p as i32)).collect();
        for r in 0..k {
            for c in 0..k {
                a[r][c] += pows[r] * pows[c];
            }
            a[r][k] += pows[r] * yi;
        }
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(validation("polynomial fit is singular"));
        }
        a.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Ok((0..k)
        .map(|p| a[p][k] / a[p][p] / scale.powi(p as i32))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_percentiles() {
        let v = [15.0, 20.0, 35.0, 40.0, 50.0];
        assert_eq!(percentile(&v, 5.0), 15.0);
        assert_eq!(percentile(&v, 30.0), 20.0);
        assert_eq!(percentile(&v, 40.0), 20.0);
        assert_eq!(percentile(&v, 50.0), 35.0);
        assert_eq!(percentile(&v, 100.0), 50.0);
        let ten: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&ten, 10.0), 1.0);
        assert_eq!(percentile(&ten, 50.0), 5.0);
        assert_eq!(percentile(&ten, 90.0), 9.0);
    }

    #[test]
    fn summary_row_and_variance() {
        let r = SummaryRow::from_values(3.0, &[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((r.median, r.p10, r.p90), (2.0, 1.0, 4.0));
        assert!((r.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!(SummaryRow::from_values(0.0, &[1.0]).is_err());
    }

    #[test]
    fn spearman_cases() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((spearman(&x, &[2.0, 4.0, 9.0, 10.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[5.0, 3.0, 2.0, 1.0, 0.0]).unwrap() + 1.0).abs() < 1e-15);
        // one swap among five: 1 − 6·2/(5·24) = 0.9
        assert!((spearman(&x, &[1.0, 3.0, 2.0, 4.0, 5.0]).unwrap() - 0.9).abs() < 1e-12);
        let tied = spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]).unwrap();
        assert!((tied - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn polyfit_recovers_exact_polynomials() {
        let x = [16.0, 64.0, 128.0, 512.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v - 1e-3 * v * v).collect();
        let c = polyfit(&x, &y, 2).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-8 && (c[1] - 0.5).abs() < 1e-10 && (c[2] + 1e-3).abs() < 1e-12);
        assert!(polyfit(&x[..2], &y[..2], 2).is_err());
    }
}
