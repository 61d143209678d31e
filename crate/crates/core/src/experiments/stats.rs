use statrs::distribution::{Binomial, DiscreteCDF};

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignTest {
    /// Pairs where the second sample is larger.
    pub wins: u64,
    pub losses: u64,
    pub ties: u64,
    /// Two-sided p-value under the null of equal medians.
    pub p_value: f64,
}

/// Paired two-sided sign test of `treated` against `baseline`; ties are
/// dropped.
pub fn sign_test(baseline: &[f64], treated: &[f64]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0u64, 0u64, 0u64);
    for (b, t) in baseline.iter().zip(treated) {
        if t > b {
            wins += 1;
        } else if t < b {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    let n = wins + losses;
    let p_value = if n == 0 {
        1.0
    } else {
        let d = Binomial::new(0.5, n).expect("valid binomial");
        let k = wins.min(losses);
        (2.0 * d.cdf(k)).min(1.0)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sign_test_values() {
        let base = [0.0; 8];
        let all = sign_test(&base, &[1.0; 8]);
        assert_eq!(all.wins, 8);
        assert!((all.p_value - 2.0 / 256.0).abs() < 1e-12);
        let five = sign_test(&[0.0; 5], &[1.0; 5]);
        assert!((five.p_value - 0.0625).abs() < 1e-12);
        let mixed = sign_test(&[0.0, 0.0, 1.0, 2.0], &[1.0, 0.0, 0.0, 3.0]);
        assert_eq!((mixed.wins, mixed.losses, mixed.ties), (2, 1, 1));
        assert!((mixed.p_value - 1.0).abs() < 1e-12);
    }
}
