/// `2ab / (a + b)`, and 0 when `a + b == 0`.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Fraction of positions where `predictions` equals `labels`.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(
        predictions.len(),
        labels.len(),
        "prediction/label length mismatch"
    );
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_examples() {
        assert!((harmonic_mean(82.69, 63.22) - 71.66).abs() < 0.005);
        assert!((harmonic_mean(0.4, 0.4) - 0.4).abs() < 1e-15);
        assert_eq!(harmonic_mean(100.0, 0.0), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 1]), 1.0);
        assert_eq!(accuracy(&[1, 0, 1, 0], &[0, 1, 0, 1]), 0.0);
    }
}
