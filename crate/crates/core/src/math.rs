//! Numerical helpers shared by the message-passing kernels.
//!
//! Messages are carried internally as cavity fields `h = atanh(x)` rather than
//! magnetisations `x`; the user-side combination becomes a plain sum and
//! nearly saturated messages keep their resolution.

use std::f64::consts::LN_2;

/// Clamp applied to externally supplied magnetisations before `atanh`.
pub const SATURATION_EPS: f64 = 1e-12;

/// Field used for a fully polarised (`x = 1`) message; `tanh` of it is exactly 1.
pub const SATURATED_FIELD: f64 = 20.0;

/// `atanh(x)` with `|x|` clamped to `1 - SATURATION_EPS`.
pub fn field_of(x: f64) -> f64 {
    let c = x.clamp(-1.0 + SATURATION_EPS, 1.0 - SATURATION_EPS);
    c.atanh()
}

/// Magnetisation of a cavity field.
#[inline]
pub fn magnetization(h: f64) -> f64 {
    h.tanh()
}

/// `ln cosh(x)` without overflow.
#[inline]
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// `ln(1 + tanh(a) tanh(b))`, exact for arbitrarily large fields.
#[inline]
pub fn ln_one_plus_tanh_product(a: f64, b: f64) -> f64 {
    ln_cosh(a + b) - ln_cosh(a) - ln_cosh(b)
}

/// Binary entropy in bits of `(1 + tanh h) / 2`.
pub fn binary_entropy_bits_of_field(h: f64) -> f64 {
    let a = 2.0 * h.abs();
    let e = (-a).exp();
    let q = e / (1.0 + e);
    (e.ln_1p() + q * a) / LN_2
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.sum += (v - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Log-sum-exp of a slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean and standard error of a sample.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Running mean/variance (Welford).
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_cosh_matches_direct_form() {
        for &x in &[-3.0, -0.5, 0.0, 0.1, 2.0, 10.0] {
            let direct = f64::cosh(x).ln();
            assert!((ln_cosh(x) - direct).abs() < 1e-14, "x = {x}");
        }
        assert!((ln_cosh(1000.0) - (1000.0 - LN_2)).abs() < 1e-9);
    }

    #[test]
    fn tanh_product_log() {
        let (a, b) = (0.3_f64, -1.2_f64);
        let direct = (1.0 + a.tanh() * b.tanh()).ln();
        assert!((ln_one_plus_tanh_product(a, b) - direct).abs() < 1e-14);
    }

    #[test]
    fn entropy_of_field() {
        assert!((binary_entropy_bits_of_field(0.0) - 1.0).abs() < 1e-15);
        let m: f64 = 0.5;
        let p = (1.0 + m) / 2.0;
        let h2 = -(p * p.log2() + (1.0 - p) * (1.0 - p).log2());
        assert!((binary_entropy_bits_of_field(m.atanh()) - h2).abs() < 1e-14);
        assert!(binary_entropy_bits_of_field(400.0) < 1e-300);
    }

    #[test]
    fn streaming_lse_matches_slice() {
        let v = [-1000.0, 3.0, 2.5, -2.0, 700.0, 699.0];
        let mut acc = LogSumExp::new();
        for &x in &v {
            acc.add(x);
        }
        assert!((acc.value() - log_sum_exp(&v)).abs() < 1e-12);
        assert_eq!(LogSumExp::new().value(), f64::NEG_INFINITY);
    }

    #[test]
    fn saturated_field_is_exactly_one() {
        assert_eq!(magnetization(SATURATED_FIELD), 1.0);
        assert!(field_of(1.0).is_finite());
    }
}
