use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sparsification {
    pub ausc: f64,
    /// AUSC of the ordering by true error.
    pub optimal: f64,
    /// Overall error rate, the AUSC of an uninformed ordering.
    pub random: f64,
    /// `ausc / optimal`; undefined when every pixel is correct or every pixel is wrong.
    pub relative: Option<f64>,
}

/// Area under the sparsification curve.
///
/// Pixels are removed in ascending confidence one at a time; the curve holds the error
/// rate of the retained pixels before each removal, and the area is its mean. Pixels with
/// equal confidence are removed in random order, so their error contribution is the
/// group's expected value.
pub fn sparsification_ausc(confidence: &[f64], errors: &[bool]) -> Result<Sparsification> {
    if confidence.is_empty() || confidence.len() != errors.len() {
        return Err(Error::Config(format!(
            "sparsification needs equal non-empty inputs, got {} and {}",
            confidence.len(),
            errors.len()
        )));
    }
    let n = confidence.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| confidence[a].total_cmp(&confidence[b]));
    let total_errors = errors.iter().filter(|&&e| e).count();

    let mut sum = 0.0;
    // Errors among the pixels above the current tie group.
    let mut errors_left = total_errors as f64;
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end < n && confidence[order[end]] == confidence[order[start]] {
            end += 1;
        }
        let size = (end - start) as f64;
        let group_errors = order[start..end].iter().filter(|&&i| errors[i]).count() as f64;
        let above = errors_left - group_errors;
        for removed in 0..end - start {
            let retained = (n - start - removed) as f64;
            let left_in_group = size - removed as f64;
            sum += (above + group_errors * left_in_group / size) / retained;
        }
        errors_left = above;
        start = end;
    }
    let ausc = sum / n as f64;

    let optimal = (0..n)
        .map(|k| total_errors.saturating_sub(k) as f64 / (n - k) as f64)
        .sum::<f64>()
        / n as f64;
    let random = total_errors as f64 / n as f64;
    let relative = (total_errors > 0 && total_errors < n).then(|| ausc / optimal);
    Ok(Sparsification {
        ausc,
        optimal,
        random,
        relative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor_is_optimal() {
        let errors = [true, false, false, true, false, false, false, true];
        let conf: Vec<f64> = errors.iter().map(|&e| if e { 0.0 } else { 1.0 }).collect();
        let s = sparsification_ausc(&conf, &errors).unwrap();
        assert!((s.relative.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_confidence_equals_error_rate() {
        let errors = [
            true, false, false, true, false, false, false, true, false, false,
        ];
        let s = sparsification_ausc(&[0.3; 10], &errors).unwrap();
        assert!((s.ausc - 0.3).abs() < 1e-12);
        assert!((s.random - 0.3).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(sparsification_ausc(&[0.5; 4], &[false; 4])
            .unwrap()
            .relative
            .is_none());
        assert!(sparsification_ausc(&[0.5; 4], &[true; 4])
            .unwrap()
            .relative
            .is_none());
        assert!(sparsification_ausc(&[], &[]).is_err());
    }
}
