//! Special functions needed by the statistical tests and isolation forest.

use crate::math::{abs, exp, ln, sqrt};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Harmonic number `H(n) = 1 + 1/2 + ... + 1/n`, with `H(0) = 0`.
///
/// Summed exactly up to 1024 terms, asymptotic expansion beyond.
pub fn harmonic(n: usize) -> f64 {
    if n <= 1024 {
        (1..=n).rev().map(|k| 1.0 / k as f64).sum()
    } else {
        let x = n as f64;
        ln(x) + EULER_GAMMA + 1.0 / (2.0 * x) - 1.0 / (12.0 * x * x) + 1.0 / (120.0 * x * x * x * x)
    }
}

/// Regularized upper incomplete gamma function `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if abs(del) < abs(sum) * 1e-16 {
            break;
        }
    }
    sum * exp(-x + a * ln(x) - libm::lgamma(a))
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if abs(d) < TINY {
            d = TINY;
        }
        c = b + an / c;
        if abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if abs(del - 1.0) < 1e-16 {
            break;
        }
    }
    exp(-x + a * ln(x) - libm::lgamma(a)) * h
}

/// Upper tail of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    gamma_q(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Survival function of the Kolmogorov distribution,
/// `P(K > lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi theta form converges fast for small lambda.
        let pi2 = core::f64::consts::PI * core::f64::consts::PI;
        let mut cdf = 0.0;
        for j in 1..=50 {
            let k = (2 * j - 1) as f64;
            let term = exp(-k * k * pi2 / (8.0 * lambda * lambda));
            cdf += term;
            if term < 1e-18 {
                break;
            }
        }
        let cdf = sqrt(2.0 * core::f64::consts::PI) / lambda * cdf;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let jf = j as f64;
            let term = exp(-2.0 * jf * jf * lambda * lambda);
            sum += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-12);
    }

    #[test]
    fn chi_square_reference_points() {
        // df = 2: sf(x) = exp(-x/2)
        for x in [0.1, 1.0, 3.0, 10.0, 40.0] {
            assert!((chi_square_sf(x, 2.0) - exp(-x / 2.0)).abs() < 1e-12);
        }
        // df = 1: sf(x) = erfc(sqrt(x/2))
        for x in [0.01, 0.5, 3.841_458_820_694_124, 12.0] {
            let expected = libm::erfc(sqrt(x / 2.0));
            assert!((chi_square_sf(x, 1.0) - expected).abs() < 1e-12, "x={x}");
        }
        assert!((chi_square_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // Both series are valid everywhere; compare at the switch point.
        let lam = 1.18;
        let mut alt = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let jf = j as f64;
            alt += sign * exp(-2.0 * jf * jf * lam * lam);
            sign = -sign;
        }
        assert!((kolmogorov_sf(lam - 1e-12) - 2.0 * alt).abs() < 1e-10);
        // Classical 5% critical value.
        assert!((kolmogorov_sf(1.358_098_9) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn harmonic_branches_agree() {
        let exact: f64 = (1..=2000).rev().map(|k| 1.0 / k as f64).sum();
        assert!((harmonic(2000) - exact).abs() < 1e-12);
        assert_eq!(harmonic(0), 0.0);
        assert_eq!(harmonic(1), 1.0);
    }
}
