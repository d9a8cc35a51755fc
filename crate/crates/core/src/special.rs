//! Scalar special functions and error-free arithmetic helpers.

use libm::{erfc, exp, fma, lgamma, log};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * exp(-0.5 * x * x)
}

/// Standard normal distribution function.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)`, accurate far into the right tail.
#[inline]
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * core::f64::consts::FRAC_1_SQRT_2)
}

/// `Φ(b) - Φ(a)` evaluated on whichever side avoids cancellation.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_sf(b)
    }
}

/// `ln k!`.
pub fn ln_factorial(k: u32) -> f64 {
    lgamma(k as f64 + 1.0)
}

/// `k!` as a float; exact for k ≤ 22.
pub fn factorial(k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 2..=k {
        acc *= i as f64;
    }
    acc
}

/// Double factorial with the conventions `0!! = (-1)!! = 1`.
pub fn double_factorial(k: i64) -> f64 {
    let mut acc = 1.0;
    let mut m = k;
    while m > 1 {
        acc *= m as f64;
        m -= 2;
    }
    acc
}

pub fn ln_double_factorial(k: i64) -> f64 {
    let mut acc = 0.0;
    let mut m = k;
    while m > 1 {
        acc += log(m as f64);
        m -= 2;
    }
    acc
}

/// Binomial coefficient in `u128`, saturating on overflow.
pub fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Error-free sum: `a + b = s + e` exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Error-free product: `a * b = p + e` exactly.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, fma(a, b, -p))
}

/// Neumaier's compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = Compensated::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// `ln Σ exp(v_i)` without overflow; `-inf` for an empty input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    let s = compensated_sum(values.iter().map(|v| exp(v - top)));
    top + log(s)
}

/// Golden-section search for the minimum of a unimodal function on `[lo, hi]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        // ties keep the left point so the smallest argument wins
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Bisection for a sign change of `f` on `[a, b]` where `fa`, `fb` differ in sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_tails_are_complementary() {
        for &x in &[-6.0, -1.0, 0.0, 0.3, 2.0, 9.0] {
            assert!((normal_cdf(x) + normal_sf(x) - 1.0).abs() < 1e-15);
        }
        assert!((normal_mass(-1.0, 1.0) - 0.682_689_492_137_085_9).abs() < 1e-15);
        assert!((normal_mass(8.0, 9.0) - 6.219_831_985_865_830e-16).abs() < 1e-28);
    }

    #[test]
    fn factorials() {
        assert_eq!(double_factorial(7), 105.0);
        assert_eq!(double_factorial(0), 1.0);
        assert_eq!(double_factorial(-1), 1.0);
        assert_eq!(binomial(12, 2), 66);
        assert!((ln_double_factorial(9) - libm::log(945.0)).abs() < 1e-13);
    }

    #[test]
    fn compensation_recovers_lost_bits() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(xs), 2.0);
        let (p, e) = two_prod(1.0 + f64::EPSILON, 1.0 - f64::EPSILON);
        assert_eq!(p, 1.0);
        assert_eq!(e, -f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn golden_finds_parabola_vertex() {
        let (x, _) = golden_min(|x| (x - 0.3) * (x - 0.3), -1.0, 2.0, 100);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn illinois_roots_and_exact_endpoints() {
        let r = illinois(|x| x * x - 2.0, 0.0, 2.0, -2.0, 2.0, 1e-14);
        assert!((r - core::f64::consts::SQRT_2).abs() < 1e-13);
        // a bracket ending exactly on the root must not drift to the other end
        assert_eq!(illinois(|x| x - 0.5, 0.25, 0.5, -0.25, 0.0, 1e-12), 0.5);
        assert_eq!(illinois(|x| x - 0.25, 0.25, 0.5, 0.0, 0.25, 1e-12), 0.25);
    }
}

/// Illinois (modified regula falsi) root of `f` on `[a, b]` with `fa`, `fb` of
/// opposite sign, stopping once the bracket is narrower than `xtol`.
pub fn illinois<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, mut fa: f64, mut fb: f64, xtol: f64) -> f64 {
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut side = 0i8;
    for _ in 0..100 {
        if (b - a).abs() <= xtol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 {
            return c;
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}
