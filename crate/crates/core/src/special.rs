//! Log-domain combinatorics shared by the closed forms.

/// `ln n!`
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

/// `ln C(n, k)`, `-inf` when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
    }
}

/// `k ln x` with the convention `0 ln 0 = 0`.
pub fn ln_pow(x: f64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * x.ln()
    }
}

/// `ln P(X = n)` for `X ~ Poisson(nu)`.
pub fn ln_poisson(nu: f64, n: u64) -> f64 {
    if nu == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -nu + n as f64 * nu.ln() - ln_factorial(n)
}

/// `ln P(X = n)` for a Bose-Einstein count with mean `nbar`.
pub fn ln_bose_einstein(nbar: f64, n: u64) -> f64 {
    ln_pow(nbar, n) - (n as f64 + 1.0) * nbar.ln_1p()
}

/// Streaming log-sum-exp accumulator.
#[derive(Clone, Copy, Debug)]
pub struct LogSum {
    max: f64,
    acc: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self { max: f64::NEG_INFINITY, acc: 0.0 }
    }
}

impl LogSum {
    pub fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.acc += (v - self.max).exp();
        } else {
            self.acc = self.acc * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn ln(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.acc.ln()
        }
    }

    pub fn value(&self) -> f64 {
        self.ln().exp()
    }
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (intercept, slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials_match_products() {
        let mut f = 1.0f64;
        for n in 1..=25u64 {
            f *= n as f64;
            assert!((ln_factorial(n) - f.ln()).abs() < 1e-12 * f.ln().max(1.0));
        }
    }

    #[test]
    fn log_sum_handles_empty_and_mixed_scales() {
        let mut s = LogSum::default();
        assert_eq!(s.value(), 0.0);
        for v in [-1000.0, 0.0, 2.0f64.ln(), f64::NEG_INFINITY] {
            s.add(v);
        }
        assert!((s.value() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (a, b, r2) = linear_fit(&x, &y);
        assert!((a - 1.0).abs() < 1e-14 && (b - 2.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }
}
