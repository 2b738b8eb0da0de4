//! Privacy curves of the canonical neighboring experiment: all `n` users hold
//! input `a` (law `P`) versus one of them switched to `b` (law `Q`).

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{Channel, LrLaw};
use crate::error::{Error, Result};
use crate::numeric::{composition_count, for_each_composition, ln_factorial_table, normal_cdf, CompensatedSum};

/// Largest number of quotient compositions enumerated exactly.
pub const ENUMERATION_GUARD: f64 = 5e7;
/// Largest full-histogram space enumerated by the brute-force route.
pub const FULL_HISTOGRAM_GUARD: f64 = 1e6;
/// Berry–Esseen constant used by [`be_certificate`].
pub const BERRY_ESSEEN_CONSTANT: f64 = 0.56;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExactEnumeration,
    ClosedFormBinomial,
    MonteCarlo,
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub eps: f64,
    pub delta_fwd: f64,
    pub delta_rev: f64,
}

impl CurvePoint {
    pub fn two_sided(&self) -> f64 {
        self.delta_fwd.max(self.delta_rev)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyCurve {
    pub points: Vec<CurvePoint>,
    pub n: u64,
    pub provenance: Provenance,
}

impl PrivacyCurve {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "eps,delta_fwd,delta_rev,delta_two_sided")?;
        for p in &self.points {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                p.eps,
                p.delta_fwd,
                p.delta_rev,
                p.two_sided()
            )?;
        }
        Ok(())
    }

    /// Largest pointwise gap in either one-sided curve.
    pub fn max_abs_diff(&self, other: &PrivacyCurve) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(u, v)| {
                (u.delta_fwd - v.delta_fwd)
                    .abs()
                    .max((u.delta_rev - v.delta_rev).abs())
            })
            .fold(0.0, f64::max)
    }
}

fn check_grid(eps_grid: &[f64]) -> Result<()> {
    match eps_grid.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        Some(&e) => Err(Error::BadEps(e)),
        None => Ok(()),
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Default grid: 64 points with `e^eps - 1` geometric over `[1e-3, lambda]`.
pub fn default_eps_grid(lambda: f64) -> Vec<f64> {
    let (lo, hi) = (1e-3f64, lambda.max(2e-3));
    let k = 64;
    (0..k)
        .map(|i| {
            let g = lo * (hi / lo).powf(i as f64 / (k - 1) as f64);
            g.ln_1p()
        })
        .collect()
}

/// Streaming accumulator of `(mass, mass * L)` bucketed against sorted thresholds.
#[derive(Clone)]
struct Buckets {
    fwd_t: Vec<f64>,
    rev_u: Vec<f64>,
    fwd_m: Vec<CompensatedSum>,
    fwd_ml: Vec<CompensatedSum>,
    rev_m: Vec<CompensatedSum>,
    rev_ml: Vec<CompensatedSum>,
}

impl Buckets {
    /// `thresholds` are `e^eps` in ascending order.
    fn new(thresholds: &[f64]) -> Self {
        let g = thresholds.len();
        let mut rev_u: Vec<f64> = thresholds.iter().map(|t| 1.0 / t).collect();
        rev_u.reverse();
        Self {
            fwd_t: thresholds.to_vec(),
            rev_u,
            fwd_m: vec![CompensatedSum::new(); g + 1],
            fwd_ml: vec![CompensatedSum::new(); g + 1],
            rev_m: vec![CompensatedSum::new(); g + 1],
            rev_ml: vec![CompensatedSum::new(); g + 1],
        }
    }

    fn add(&mut self, mass: f64, l: f64) {
        // bucket i holds t_{i-1} < L <= t_i
        let i = self.fwd_t.partition_point(|&t| t < l);
        self.fwd_m[i].add(mass);
        self.fwd_ml[i].add(mass * l);
        // bucket i holds u_{i-1} <= L < u_i
        let i = self.rev_u.partition_point(|&u| u <= l);
        self.rev_m[i].add(mass);
        self.rev_ml[i].add(mass * l);
    }

    fn merge(&mut self, o: &Buckets) {
        for (a, b) in [
            (&mut self.fwd_m, &o.fwd_m),
            (&mut self.fwd_ml, &o.fwd_ml),
            (&mut self.rev_m, &o.rev_m),
            (&mut self.rev_ml, &o.rev_ml),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
    }

    /// `(delta_fwd, delta_rev)` for the ascending thresholds.
    fn finish(&self) -> Vec<(f64, f64)> {
        let g = self.fwd_t.len();
        let mut fwd = vec![0.0; g];
        let (mut m, mut ml) = (CompensatedSum::new(), CompensatedSum::new());
        for j in (0..g).rev() {
            m.merge(&self.fwd_m[j + 1]);
            ml.merge(&self.fwd_ml[j + 1]);
            fwd[j] = ml.value() - self.fwd_t[j] * m.value();
        }
        // rev_u[j'] = 1 / t[g-1-j']; L < u_{j'} covers buckets 0..=j'
        let mut rev = vec![0.0; g];
        let (mut m, mut ml) = (CompensatedSum::new(), CompensatedSum::new());
        for jp in 0..g {
            m.merge(&self.rev_m[jp]);
            ml.merge(&self.rev_ml[jp]);
            let t = self.fwd_t[g - 1 - jp];
            rev[g - 1 - jp] = m.value() - t * ml.value();
        }
        fwd.into_iter().zip(rev).map(|(f, r)| (clamp01(f), clamp01(r))).collect()
    }
}

/// Sorts the grid, runs `fill` on a bucket accumulator, and restores grid order.
fn curve_from_buckets<F>(eps_grid: &[f64], n: u64, provenance: Provenance, fill: F) -> Result<PrivacyCurve>
where
    F: FnOnce(&Buckets) -> Result<Buckets>,
{
    check_grid(eps_grid)?;
    let mut order: Vec<usize> = (0..eps_grid.len()).collect();
    order.sort_by(|&i, &j| eps_grid[i].total_cmp(&eps_grid[j]));
    let thresholds: Vec<f64> = order.iter().map(|&i| eps_grid[i].exp()).collect();
    let filled = fill(&Buckets::new(&thresholds))?;
    let sorted = filled.finish();
    let mut points = vec![CurvePoint { eps: 0.0, delta_fwd: 0.0, delta_rev: 0.0 }; eps_grid.len()];
    for (rank, &i) in order.iter().enumerate() {
        points[i] = CurvePoint {
            eps: eps_grid[i],
            delta_fwd: sorted[rank].0,
            delta_rev: sorted[rank].1,
        };
    }
    Ok(PrivacyCurve { points, n, provenance })
}

/// Exact curve by enumerating the multinomial law of the level-set counts.
pub fn privacy_curve_exact(law: &LrLaw, n: u64, eps_grid: &[f64]) -> Result<PrivacyCurve> {
    if n == 0 {
        return Err(Error::BadParams("n must be at least 1".into()));
    }
    let k = law.len();
    let nu = n as usize;
    let count = composition_count(nu, k);
    if count > ENUMERATION_GUARD {
        return Err(Error::EnumerationTooLarge { count, cap: ENUMERATION_GUARD });
    }
    let lnf = ln_factorial_table(nu);
    let ln_p: Vec<f64> = law.masses().iter().map(|p| p.ln()).collect();
    let r = law.ratios();
    let nf = n as f64;

    curve_from_buckets(eps_grid, n, Provenance::ExactEnumeration, |empty| {
        if k == 1 {
            let mut b = empty.clone();
            b.add(1.0, r[0]);
            return Ok(b);
        }
        // One work unit per value of the first count; merged in index order.
        let parts: Vec<Buckets> = (0..=nu)
            .into_par_iter()
            .map(|m0| {
                let mut b = empty.clone();
                let base = lnf[nu] - lnf[m0] + m0 as f64 * ln_p[0];
                let lsum = m0 as f64 * r[0];
                let mut rest = vec![0usize; k - 1];
                for_each_composition(nu - m0, &mut rest, &mut |m| {
                    let mut lm = base;
                    let mut ls = lsum;
                    for (j, &mj) in m.iter().enumerate() {
                        lm += mj as f64 * ln_p[j + 1] - lnf[mj];
                        ls += mj as f64 * r[j + 1];
                    }
                    b.add(lm.exp(), ls / nf);
                });
                b
            })
            .collect();
        let mut total = empty.clone();
        for p in &parts {
            total.merge(p);
        }
        Ok(total)
    })
}

/// Closed-form curve of the two-point extremal law `{1/lambda, lambda}`.
pub fn privacy_curve_two_atom(lambda: f64, n: u64, eps_grid: &[f64]) -> Result<PrivacyCurve> {
    if !(lambda > 1.0) {
        return Err(Error::BadLambda(lambda));
    }
    if n == 0 {
        return Err(Error::BadParams("n must be at least 1".into()));
    }
    check_grid(eps_grid)?;
    let nu = n as usize;
    let lnf = ln_factorial_table(nu);
    let q = 1.0 / (1.0 + lambda);
    let (lq, lq1) = (q.ln(), (lambda * q).ln());
    let terms: Vec<(f64, f64)> = (0..=nu)
        .map(|k| {
            let pmf = (lnf[nu] - lnf[k] - lnf[nu - k] + k as f64 * lq + (nu - k) as f64 * lq1).exp();
            let l = 1.0 / lambda + (k as f64 / n as f64) * (lambda - 1.0 / lambda);
            (pmf, l)
        })
        .collect();
    let points = eps_grid
        .iter()
        .map(|&eps| {
            let t = eps.exp();
            let fwd: CompensatedSum = terms.iter().map(|&(m, l)| m * (l - t).max(0.0)).collect();
            let rev: CompensatedSum = terms.iter().map(|&(m, l)| m * (1.0 - t * l).max(0.0)).collect();
            CurvePoint { eps, delta_fwd: clamp01(fwd.value()), delta_rev: clamp01(rev.value()) }
        })
        .collect();
    Ok(PrivacyCurve { points, n, provenance: Provenance::ClosedFormBinomial })
}

/// Brute-force curve over the full output histogram, with `Q` computed by
/// conditioning on the output of the switched user.
pub fn privacy_curve_full_histogram(
    ch: &Channel,
    a: usize,
    b: usize,
    n: u64,
    eps_grid: &[f64],
) -> Result<PrivacyCurve> {
    ch.pairwise_chi2(a, b)?;
    check_grid(eps_grid)?;
    if n == 0 {
        return Err(Error::BadParams("n must be at least 1".into()));
    }
    let ny = ch.num_outputs();
    let nu = n as usize;
    let count = composition_count(nu, ny);
    if count > FULL_HISTOGRAM_GUARD {
        return Err(Error::TooLarge(format!("{count} histograms")));
    }
    let lnf = ln_factorial_table(nu);
    let ln_pa: Vec<f64> = ch.row(a).iter().map(|p| p.ln()).collect();
    let pb = ch.row(b);
    let mut pq: Vec<(f64, f64)> = Vec::with_capacity(count as usize);
    let mut h = vec![0usize; ny];
    for_each_composition(nu, &mut h, &mut |h| {
        let mut lp = lnf[nu];
        for (y, &c) in h.iter().enumerate() {
            lp += c as f64 * ln_pa[y] - lnf[c];
        }
        // Q(h) = sum_y W(y|b) P_{n-1}(h - e_y)
        let mut q = CompensatedSum::new();
        for (y, &c) in h.iter().enumerate() {
            if c > 0 {
                let l = lp - lnf[nu] + lnf[nu - 1] + lnf[c] - lnf[c - 1] - ln_pa[y];
                q.add(pb[y] * l.exp());
            }
        }
        pq.push((lp.exp(), q.value()));
    });
    let points = eps_grid
        .iter()
        .map(|&eps| {
            let t = eps.exp();
            let fwd: CompensatedSum = pq.iter().map(|&(p, q)| (q - t * p).max(0.0)).collect();
            let rev: CompensatedSum = pq.iter().map(|&(p, q)| (p - t * q).max(0.0)).collect();
            CurvePoint { eps, delta_fwd: clamp01(fwd.value()), delta_rev: clamp01(rev.value()) }
        })
        .collect();
    Ok(PrivacyCurve { points, n, provenance: Provenance::ExactEnumeration })
}

/// Gaussian-DP reference curve.
pub fn gdp_curve(mu: f64, eps: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::BadMu(mu));
    }
    if !(eps >= 0.0) {
        return Err(Error::BadEps(eps));
    }
    let v = normal_cdf(-eps / mu + mu / 2.0) - eps.exp() * normal_cdf(-eps / mu - mu / 2.0);
    Ok(v.max(0.0))
}

/// GDP scale `sqrt(I / n)`.
pub fn gdp_scale(info: f64, n: u64) -> f64 {
    (info.max(0.0) / n as f64).sqrt()
}

/// Fixed-epsilon upper bounds on the forward and reverse curves.
pub fn dilution_bounds(i_star: f64, n: u64, eps: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0) {
        return Err(Error::BadEps(eps));
    }
    let nf = n as f64;
    let fwd = i_star / (nf * eps.exp_m1());
    let rev = eps.exp() * i_star / (nf * (-(-eps).exp_m1()));
    Ok((clamp01(fwd), clamp01(rev)))
}

/// Kolmogorov-distance bound for the normalized likelihood-ratio score.
pub fn be_certificate(lambda: f64, n: u64, info: f64) -> Result<f64> {
    if !(info > 0.0) {
        return Err(Error::ZeroInformation);
    }
    Ok(BERRY_ESSEEN_CONSTANT * (lambda - 1.0) / (n as f64 * info).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyRow {
    pub d: usize,
    pub chi_star: f64,
    pub worst_pair: (usize, usize),
}

/// Finite-d table of worst-pair chi-square values with a log-log trend.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyDiagnostic {
    pub rows: Vec<FamilyRow>,
    /// Least-squares slope of `log chi_star` against `log d`; `None` when
    /// fewer than two rows are positive.
    pub log_log_slope: Option<f64>,
    pub note: &'static str,
}

pub fn family_diagnostic<F>(family: F, d_list: &[usize]) -> Result<FamilyDiagnostic>
where
    F: Fn(usize) -> Result<Channel>,
{
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let ch = family(d)?;
        let (a, b, v) = ch.worst_pair();
        rows.push(FamilyRow { d, chi_star: v, worst_pair: (a, b) });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.chi_star > 0.0)
        .map(|r| ((r.d as f64).ln(), r.chi_star.ln()))
        .collect();
    let log_log_slope = if pts.len() >= 2 && pts.len() == rows.len() {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    Ok(FamilyDiagnostic {
        rows,
        log_log_slope,
        note: "finite-d diagnostic; no statement about the limit d -> infinity",
    })
}
