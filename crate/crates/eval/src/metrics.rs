//! Rank and linear correlation.
//!
//! PLCC is the centered covariance ratio. SRCC is Pearson over average
//! ranks, which reduces to 1 - 6 sum(d^2) / (n (n^2 - 1)) when the ranks are
//! tie-free. A constant input vector has no defined correlation and is an
//! explicit error rather than a silent zero.

use crate::{EvalError, Result};

/// Pearson linear correlation coefficient.
pub fn plcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dp = 0.0;
    let mut dt = 0.0;
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        num += (p - mp) * (t - mt);
        dp += (p - mp) * (p - mp);
        dt += (t - mt) * (t - mt);
    }
    if dp == 0.0 || dt == 0.0 {
        return Err(EvalError::UndefinedCorrelation(
            "constant input vector".into(),
        ));
    }
    Ok(num / (dp.sqrt() * dt.sqrt()))
}

/// Average ranks (1-based); ties share the mean of their rank range.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("non-finite value"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation coefficient.
pub fn srcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let rp = average_ranks(pred);
    let rt = average_ranks(truth);
    plcc(&rp, &rt)
}

/// Tie-free closed form 1 - 6 sum(d^2) / (n (n^2 - 1)); used as an oracle
/// against [`srcc`] in tests.
pub fn srcc_closed_form(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let rp = average_ranks(pred);
    let rt = average_ranks(truth);
    let n = pred.len() as f64;
    let d2: f64 = rp
        .iter()
        .zip(rt.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

fn check_lengths(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(EvalError::BadInput(format!(
            "length mismatch: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < 2 {
        return Err(EvalError::BadInput(format!(
            "need at least 2 samples, got {}",
            pred.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_inverse_correlation() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        assert!((plcc(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((srcc(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v + 7.0).collect();
        assert!((plcc(&neg, &x).unwrap() + 1.0).abs() < 1e-15);
        assert!((srcc(&neg, &x).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn hand_evaluated_rank_example() {
        // pred [3,1,2] vs truth [1,2,3]: d = [2,-1,-1], sum d^2 = 6
        // => 1 - 36/24 = -0.5
        let pred = vec![3.0, 1.0, 2.0];
        let truth = vec![1.0, 2.0, 3.0];
        assert!((srcc(&pred, &truth).unwrap() + 0.5).abs() < 1e-12);
        assert!((srcc_closed_form(&pred, &truth).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_vector_is_an_error() {
        let c = vec![2.0, 2.0, 2.0];
        let x = vec![1.0, 2.0, 3.0];
        assert!(plcc(&c, &x).is_err());
        assert!(plcc(&x, &c).is_err());
        assert!(srcc(&c, &x).is_err());
        assert!(plcc(&x[..1], &c[..1]).is_err());
    }

    #[test]
    fn ties_use_average_ranks() {
        let r = average_ranks(&[1.0, 5.0, 5.0, 2.0]);
        assert_eq!(r, vec![1.0, 3.5, 3.5, 2.0]);
    }
}
