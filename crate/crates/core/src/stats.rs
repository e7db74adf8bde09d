//! Special functions backing the statistical metrics.
//!
//! Hand-rolled ln-gamma, regularized incomplete beta, and the Student-t tail
//! used for correlation p-values; nothing here depends on the rest of the
//! crate.

use crate::error::{Error, Result};

/// Natural log of the gamma function for positive arguments (Lanczos
/// approximation, g = 5, 6 coefficients).
pub fn ln_gamma(z: f64) -> f64 {
    assert!(z > 0.0, "ln_gamma requires a positive argument");
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut sum = 1.000000000190015;
    for (i, c) in COEF.iter().enumerate() {
        sum += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    (z + 0.5) * tmp.ln() - tmp + (2.5066282746310005 * sum / z).ln()
}

/// Regularized incomplete beta function I_x(a, b), evaluated by the
/// continued-fraction expansion (modified Lentz) to 1e-12.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!(
            "incomplete beta: x={x} outside [0,1]"
        )));
    }
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::invalid(
            "incomplete beta: shape parameters must be positive",
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    // Use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) where the continued
    // fraction converges fastest.
    if x > (a + 1.0) / (a + b + 2.0) {
        return Ok(1.0 - regularized_incomplete_beta(1.0 - x, b, a)?);
    }
    let front =
        (a * x.ln() + b * (1.0 - x).ln() - ln_gamma(a) - ln_gamma(b) + ln_gamma(a + b)).exp();
    Ok(front * beta_continued_fraction(x, a, b) / a)
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TOL: f64 = 1e-12;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 500;

    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut f = d;
    for m in 1..=MAX_ITER {
        let m_f = m as f64;
        // Even term.
        let numerator = m_f * (b - m_f) * x / ((a + 2.0 * m_f - 1.0) * (a + 2.0 * m_f));
        d = 1.0 + numerator * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = 1.0 + numerator / c;
        if c.abs() < TINY {
            c = TINY;
        }
        f *= d * c;
        // Odd term.
        let numerator = -(a + m_f) * (a + b + m_f) * x / ((a + 2.0 * m_f) * (a + 2.0 * m_f + 1.0));
        d = 1.0 + numerator * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = 1.0 + numerator / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = d * c;
        f *= delta;
        if (delta - 1.0).abs() < TOL {
            break;
        }
    }
    f
}

/// Two-tailed p-value of a Student-t statistic with `df` degrees of freedom:
/// `P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2)`.
pub fn student_t_two_tailed_p(t: f64, df: f64) -> Result<f64> {
    if df <= 0.0 {
        return Err(Error::invalid("degrees of freedom must be positive"));
    }
    if !t.is_finite() {
        return Ok(0.0);
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_factorials() {
        // Gamma(n) = (n-1)!
        let cases = [
            (1.0, 0.0),
            (2.0, 0.0),
            (5.0, 24.0_f64.ln()),
            (7.0, 720.0_f64.ln()),
        ];
        for (z, expect) in cases {
            assert!((ln_gamma(z) - expect).abs() < 1e-12, "z={z}");
        }
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_endpoints_and_symmetry() {
        assert_eq!(regularized_incomplete_beta(0.0, 2.0, 3.0).unwrap(), 0.0);
        assert_eq!(regularized_incomplete_beta(1.0, 2.0, 3.0).unwrap(), 1.0);
        // I_x(1, 1) is the identity.
        for x in [0.1, 0.35, 0.8] {
            let v = regularized_incomplete_beta(x, 1.0, 1.0).unwrap();
            assert!((v - x).abs() < 1e-12);
        }
        // Symmetry relation.
        let a = regularized_incomplete_beta(0.3, 2.5, 4.0).unwrap();
        let b = regularized_incomplete_beta(0.7, 4.0, 2.5).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_closed_forms() {
        // I_x(1, b) = 1 - (1-x)^b, I_x(a, 1) = x^a.
        for (x, b) in [(0.2, 3.0), (0.6, 1.5)] {
            let v = regularized_incomplete_beta(x, 1.0, b).unwrap();
            assert!((v - (1.0 - (1.0 - x).powf(b))).abs() < 1e-12);
        }
        for (x, a) in [(0.2, 3.0), (0.6, 2.5)] {
            let v = regularized_incomplete_beta(x, a, 1.0).unwrap();
            assert!((v - x.powf(a)).abs() < 1e-12);
        }
    }

    #[test]
    fn t_tail_matches_closed_form_for_df_one() {
        // For df = 1 (Cauchy): P(|T| >= t) = 1 - (2/pi) atan(t).
        for t in [0.5, 1.0, 2.0, 10.0] {
            let p = student_t_two_tailed_p(t, 1.0).unwrap();
            let expect = 1.0 - 2.0 / std::f64::consts::PI * t.atan();
            assert!((p - expect).abs() < 1e-12, "t={t}: {p} vs {expect}");
        }
    }

    #[test]
    fn t_tail_is_one_at_zero_and_vanishes_for_large_t() {
        assert!((student_t_two_tailed_p(0.0, 5.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(student_t_two_tailed_p(50.0, 5.0).unwrap() < 1e-6);
    }
}
