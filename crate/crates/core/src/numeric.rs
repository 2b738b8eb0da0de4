//! Small numerical helpers shared by the analysis modules.

use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of a slice.
pub fn csum(xs: &[f64]) -> f64 {
    xs.iter().copied().collect::<CompensatedSum>().value()
}

/// Table of `ln k!` for `k = 0..=n`.
pub fn ln_factorial_table(n: usize) -> Vec<f64> {
    (0..=n).map(|k| ln_factorial(k as u64)).collect()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Number of weak compositions of `n` into `k` parts, `C(n+k-1, k-1)`, as a float.
pub fn composition_count(n: usize, k: usize) -> f64 {
    if k == 0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let r = (k - 1).min(n);
    let top = (n + k - 1) as f64;
    let mut acc = 1.0f64;
    for i in 0..r {
        acc *= (top - i as f64) / (i as f64 + 1.0);
    }
    acc.round()
}

/// Visits every weak composition of `n` into `parts.len()` parts, in
/// reverse-lexicographic order of the leading coordinates.
pub fn for_each_composition<F: FnMut(&[usize])>(n: usize, parts: &mut [usize], f: &mut F) {
    fn rec<F: FnMut(&[usize])>(idx: usize, left: usize, parts: &mut [usize], f: &mut F) {
        let k = parts.len();
        if idx + 1 == k {
            parts[idx] = left;
            f(parts);
            return;
        }
        for m in (0..=left).rev() {
            parts[idx] = m;
            rec(idx + 1, left - m, parts, f);
        }
    }
    if parts.is_empty() {
        if n == 0 {
            f(parts);
        }
        return;
    }
    rec(0, n, parts, f);
}

/// Solves `f(x) = target` for a strictly increasing `f` on `(lo, inf)` with
/// `f(lo) < target`, by doubling an upper bracket starting at `hi0` and then
/// bisecting. Stops once `|f(x) - target| <= tol * max(|target|, 1)` and the
/// bracket can no longer shrink, or after `max_iter` bisection steps.
pub fn solve_increasing<F: Fn(f64) -> f64>(
    f: F,
    target: f64,
    lo: f64,
    hi0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut lo = lo;
    let mut hi = hi0.max(lo * 2.0);
    let mut doublings = 0;
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 || !hi.is_finite() {
            return Err(Error::NoConvergence(format!(
                "could not bracket target {target}"
            )));
        }
    }
    let scale = target.abs().max(1.0);
    let mut best = hi;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v - target).abs() < (f(best) - target).abs() {
            best = mid;
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for x in [lo, hi] {
        if (f(x) - target).abs() < (f(best) - target).abs() {
            best = x;
        }
    }
    let resid = (f(best) - target).abs();
    if resid <= tol * scale {
        Ok(best)
    } else {
        Err(Error::NoConvergence(format!(
            "residual {resid:e} exceeds {:e}",
            tol * scale
        )))
    }
}

/// Relative closeness used for merging likelihood-ratio values.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}
