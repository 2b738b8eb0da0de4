//! Budget-constrained design of frequency-estimation mechanisms: the optimal
//! signal frontier, augmented versus calibrated GRR, orbit slopes and the
//! subset-selection family.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mechanisms::{MixtureSpec, OrbitTemplate};
use crate::numeric::{csum, solve_increasing};

const ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

/// Printed ahead of every exploratory high-budget table.
pub const NO_OPTIMALITY_BANNER: &str =
    "NO-OPTIMALITY: exploratory candidates above the knee; no optimality is claimed";

fn check_d(d: usize) -> Result<()> {
    if d >= 2 {
        Ok(())
    } else {
        Err(Error::BadParams(format!("need d >= 2, got {d}")))
    }
}

fn check_budget(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::BadBudget(c))
    }
}

fn check_s(d: usize, s: usize) -> Result<()> {
    if s >= 1 && s < d {
        Ok(())
    } else {
        Err(Error::BadParams(format!("need 1 <= s <= d-1, got s = {s}, d = {d}")))
    }
}

/// Pairwise chi-square of `d`-ary GRR at `lambda`; zero at `lambda = 1`.
pub fn grr_budget(d: usize, lambda: f64) -> Result<f64> {
    check_d(d)?;
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(Error::BadParams(format!("lambda must be >= 1, got {lambda}")));
    }
    Ok((lambda - 1.0).powi(2) * (lambda + 1.0) / (lambda * (lambda + d as f64 - 1.0)))
}

/// Tilt `(lambda - 1) / (lambda + d - 1)` of GRR on the tangent space.
pub fn eta(d: usize, lambda: f64) -> f64 {
    (lambda - 1.0) / (lambda + d as f64 - 1.0)
}

/// The GRR parameter whose budget is `c`.
pub fn lambda_of_budget(d: usize, c: f64) -> Result<f64> {
    check_d(d)?;
    check_budget(c)?;
    let df = d as f64;
    let f = |l: f64| (l - 1.0).powi(2) * (l + 1.0) / (l * (l + df - 1.0));
    solve_increasing(f, c, 1.0, 2.0, ROOT_TOL, ROOT_MAX_ITER)
}

/// Budget of GRR at `lambda = sqrt(d - 1)`, where the frontier bends.
pub fn c_star(d: usize) -> Result<f64> {
    if d < 3 {
        return Err(Error::DTooSmall(d));
    }
    grr_budget(d, ((d - 1) as f64).sqrt())
}

/// Slope of the low-budget frontier, `1 / (d + 2 sqrt(d-1))`.
pub fn optimal_slope(d: usize) -> f64 {
    1.0 / (d as f64 + 2.0 * ((d - 1) as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mech_kind", rename_all = "snake_case")]
pub enum OptMechanism {
    AugGrr { p: f64, lambda: f64 },
    Grr { lambda: f64 },
}

impl OptMechanism {
    pub fn kind(&self) -> &'static str {
        match self {
            OptMechanism::AugGrr { .. } => "aug_grr",
            OptMechanism::Grr { .. } => "grr",
        }
    }

    pub fn p(&self) -> f64 {
        match self {
            OptMechanism::AugGrr { p, .. } => *p,
            OptMechanism::Grr { .. } => 1.0,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            OptMechanism::AugGrr { lambda, .. } | OptMechanism::Grr { lambda } => *lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SOpt {
    pub signal: f64,
    pub mechanism: OptMechanism,
}

/// Largest signal coefficient of a GRR mixture with budget `c`.
pub fn s_opt(d: usize, c: f64) -> Result<SOpt> {
    check_budget(c)?;
    let knee = c_star(d)?;
    if c <= knee {
        Ok(SOpt {
            signal: c * optimal_slope(d),
            mechanism: OptMechanism::AugGrr { p: c / knee, lambda: ((d - 1) as f64).sqrt() },
        })
    } else {
        let lambda = lambda_of_budget(d, c)?;
        Ok(SOpt { signal: eta(d, lambda).powi(2), mechanism: OptMechanism::Grr { lambda } })
    }
}

/// `(d-1)/d (1/S - 1)`: `n` times the fixed-composition projected risk.
pub fn risk_times_n_from_signal(d: usize, signal: f64) -> Result<f64> {
    if !(signal > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let df = d as f64;
    Ok((df - 1.0) / df * (1.0 / signal - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptRisk {
    pub risk_opt_times_n: f64,
    pub risk_grr_times_n: f64,
    /// `risk_opt / risk_grr`.
    pub ratio: f64,
    pub risk_opt: f64,
    pub risk_grr: f64,
    pub lambda_grr: f64,
}

/// Optimal mixture risk against calibrated GRR at the same budget.
pub fn opt_risk(d: usize, n: u64, c: f64) -> Result<OptRisk> {
    check_budget(c)?;
    let knee = c_star(d)?;
    let df = d as f64;
    let lam = lambda_of_budget(d, c)?;
    let grr_den = df + lam + (df - 1.0) / lam;
    let risk_grr_times_n = (df - 1.0) / df * (grr_den / c - 1.0);
    let (risk_opt_times_n, ratio) = if c <= knee {
        let opt_den = df + 2.0 * (df - 1.0).sqrt();
        ((df - 1.0) / df * (opt_den / c - 1.0), (opt_den - c) / (grr_den - c))
    } else {
        (risk_grr_times_n, 1.0)
    };
    let nf = n as f64;
    Ok(OptRisk {
        risk_opt_times_n,
        risk_grr_times_n,
        ratio,
        risk_opt: risk_opt_times_n / nf,
        risk_grr: risk_grr_times_n / nf,
        lambda_grr: lam,
    })
}

/// `sum_i p_i eta_i^2`.
pub fn mixture_signal(spec: &MixtureSpec) -> Result<f64> {
    spec.validate()?;
    let s = csum(&spec.blocks.iter().map(|b| b.p * eta(spec.d, b.lambda).powi(2)).collect::<Vec<_>>());
    if s > 0.0 {
        Ok(s)
    } else {
        Err(Error::ZeroSignal)
    }
}

/// `sum_i p_i C_{lambda_i}`.
pub fn mixture_budget(spec: &MixtureSpec) -> Result<f64> {
    spec.validate()?;
    let parts: Result<Vec<f64>> = spec.blocks.iter().map(|b| Ok(b.p * grr_budget(spec.d, b.lambda)?)).collect();
    Ok(csum(&parts?))
}

/// The degree-four polynomial controlling the sign of the frontier's curvature.
pub fn concavity_polynomial(d: usize, lambda: f64) -> f64 {
    let (d, l) = (d as f64, lambda);
    d * d * l + 2.0 * d * d - 3.0 * d * l.powi(3) + d * l - 4.0 * d - 2.0 * l.powi(4) + 2.0 * l.powi(3) - 2.0 * l + 2.0
}

fn curvature_denominator(d: usize, lambda: f64) -> f64 {
    let (d, l) = (d as f64, lambda);
    2.0 * d * l * l + d * l + d + l.powi(3) - l * l + l - 1.0
}

/// `dS/dC` along calibrated GRR.
pub fn grr_frontier_slope(d: usize, lambda: f64) -> f64 {
    let df = d as f64;
    2.0 * df * lambda * lambda / ((lambda + df - 1.0) * curvature_denominator(d, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcavityReport {
    pub polynomial: f64,
    pub second_derivative: f64,
    /// Whether `lambda >= sqrt(d - 1)`, the range where the sign is claimed.
    pub in_range: bool,
    /// `Some(polynomial <= 0)` inside the range, `None` outside.
    pub holds: Option<bool>,
}

pub fn concavity_certificate(d: usize, lambda: f64) -> Result<ConcavityReport> {
    check_d(d)?;
    if !(lambda > 1.0) {
        return Err(Error::BadLambda(lambda));
    }
    let polynomial = concavity_polynomial(d, lambda);
    let den = curvature_denominator(d, lambda);
    let df = d as f64;
    let second_derivative = 2.0 * df * lambda.powi(3) * polynomial / ((lambda - 1.0) * den.powi(3));
    let in_range = lambda >= ((d - 1) as f64).sqrt();
    Ok(ConcavityReport {
        polynomial,
        second_derivative,
        in_range,
        holds: in_range.then_some(polynomial <= 0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoLevel {
    pub signal: f64,
    pub budget: f64,
    pub slope: f64,
}

/// Signal, budget and their ratio for the two-level template.
pub fn two_level_slope(d: usize, s: usize, lambda: f64) -> Result<TwoLevel> {
    check_s(d, s)?;
    if !(lambda > 1.0) {
        return Err(Error::BadLambda(lambda));
    }
    let (df, sf, l) = (d as f64, s as f64, lambda);
    let den = df + sf * (l - 1.0);
    let core = sf * (df - sf) * (l - 1.0).powi(2);
    Ok(TwoLevel {
        signal: core / ((df - 1.0) * den * den),
        budget: core * (l + 1.0) / (l * (df - 1.0) * den),
        slope: l / ((l + 1.0) * den),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeMax {
    pub slope: f64,
    /// Maximizer, when it is attained at some `lambda > 1`.
    pub lambda: Option<f64>,
    pub attained: bool,
}

/// Supremum over `lambda > 1` of the two-level slope at fixed `s`.
pub fn two_level_max_slope(d: usize, s: usize) -> Result<SlopeMax> {
    check_s(d, s)?;
    let (df, sf) = (d as f64, s as f64);
    if 2 * s < d {
        Ok(SlopeMax {
            slope: 1.0 / (df + 2.0 * (sf * (df - sf)).sqrt()),
            lambda: Some(((df - sf) / sf).sqrt()),
            attained: true,
        })
    } else {
        Ok(SlopeMax { slope: 1.0 / (2.0 * df), lambda: None, attained: false })
    }
}

/// Signal-per-budget `(B - d) / (AB - d^2)` of an orbit template.
pub fn orbit_slope(t: &OrbitTemplate) -> Result<f64> {
    let d = t.d() as f64;
    let b = t.b_sum();
    if b - d <= 1e-14 * d {
        return Err(Error::NeutralOrbit);
    }
    Ok((b - d) / (t.a_sum() * b - d * d))
}

/// Pairwise budget of subset selection.
pub fn ss_budget(d: usize, s: usize, lambda: f64) -> Result<f64> {
    check_s(d, s)?;
    if !(lambda > 1.0) {
        return Err(Error::BadLambda(lambda));
    }
    let (df, sf, l) = (d as f64, s as f64, lambda);
    Ok(sf * (df - sf) * (l - 1.0).powi(2) * (l + 1.0) / (l * (df - 1.0) * (l * sf + df - sf)))
}

/// Inclusion probabilities `(p_s, r_s)` of the true and of another fixed input.
pub fn ss_inclusion(d: usize, s: usize, lambda: f64) -> (f64, f64) {
    let (df, sf, l) = (d as f64, s as f64, lambda);
    let den = df + sf * (l - 1.0);
    (l * sf / den, sf * (l * (sf - 1.0) + df - sf) / ((df - 1.0) * den))
}

/// `n` times the exact fixed-composition risk of the subset-selection estimator.
pub fn ss_risk_times_n(d: usize, s: usize, lambda: f64) -> Result<f64> {
    check_s(d, s)?;
    if !(lambda > 1.0) {
        return Err(Error::BadLambda(lambda));
    }
    let (df, sf, l) = (d as f64, s as f64, lambda);
    let num = l * l * sf * (sf - 1.0) + 2.0 * l * sf * (df - sf) + (df - sf) * (df - sf - 1.0);
    Ok((df - 1.0) * num / (sf * (df - sf) * (l - 1.0).powi(2)))
}

pub fn ss_risk(d: usize, s: usize, lambda: f64, n: u64) -> Result<f64> {
    Ok(ss_risk_times_n(d, s, lambda)? / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsetRow {
    pub s: usize,
    pub lambda_s: f64,
    pub matched_risk_times_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetTable {
    pub d: usize,
    pub c: f64,
    pub rows: Vec<SubsetRow>,
    pub strictly_increasing: bool,
}

impl SubsetTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,lambda_s,matched_risk_times_n")?;
        for r in &self.rows {
            writeln!(w, "{},{:.16e},{:.16e}", r.s, r.lambda_s, r.matched_risk_times_n)?;
        }
        Ok(())
    }
}

/// Subset-selection risk for every `s` with `lambda_s` calibrated to budget `c`.
pub fn ss_matched_risk(d: usize, c: f64) -> Result<SubsetTable> {
    check_d(d)?;
    check_budget(c)?;
    let df = d as f64;
    let mut rows = Vec::with_capacity(d - 1);
    for s in 1..d {
        let sf = s as f64;
        let f = |l: f64| {
            if l <= 1.0 {
                0.0
            } else {
                sf * (df - sf) * (l - 1.0).powi(2) * (l + 1.0) / (l * (df - 1.0) * (l * sf + df - sf))
            }
        };
        let l = solve_increasing(f, c, 1.0, 2.0, ROOT_TOL, ROOT_MAX_ITER)?;
        let r = (df - 1.0) / (df * c) * ((l + 1.0) * (df + sf * (l - 1.0)) / l - c);
        rows.push(SubsetRow { s, lambda_s: l, matched_risk_times_n: r });
    }
    let strictly_increasing = rows.windows(2).all(|w| w[1].matched_risk_times_n > w[0].matched_risk_times_n);
    Ok(SubsetTable { d, c, rows, strictly_increasing })
}

/// Signal-per-budget of thinned subset selection.
pub fn thinned_ss_ratio(d: usize, s: usize, lambda: f64) -> Result<f64> {
    check_s(d, s)?;
    if !(lambda > 1.0) {
        return Err(Error::BadLambda(lambda));
    }
    let (df, sf, l) = (d as f64, s as f64, lambda);
    Ok(l / ((l + 1.0) * (df + sf * (l - 1.0))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontierPoint {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "S_opt")]
    pub s_opt: f64,
    pub risk_opt_times_n: f64,
    pub risk_grr_times_n: f64,
    pub ratio: f64,
    pub mech_kind: &'static str,
    pub p: f64,
    pub lambda: f64,
}

pub fn frontier_point(d: usize, c: f64) -> Result<FrontierPoint> {
    let opt = s_opt(d, c)?;
    let risk = opt_risk(d, 1, c)?;
    Ok(FrontierPoint {
        c,
        s_opt: opt.signal,
        risk_opt_times_n: risk.risk_opt_times_n,
        risk_grr_times_n: risk.risk_grr_times_n,
        ratio: risk.ratio,
        mech_kind: opt.mechanism.kind(),
        p: opt.mechanism.p(),
        lambda: opt.mechanism.lambda(),
    })
}

pub fn frontier_table(d: usize, budgets: &[f64]) -> Result<Vec<FrontierPoint>> {
    budgets.iter().map(|&c| frontier_point(d, c)).collect()
}

pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "C,S_opt,risk_opt_times_n,risk_grr_times_n,ratio,mech_kind,p,lambda")?;
    for p in points {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e}",
            p.c, p.s_opt, p.risk_opt_times_n, p.risk_grr_times_n, p.ratio, p.mech_kind, p.p, p.lambda
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub kind: &'static str,
    pub template: Vec<f64>,
    /// Orbit mass needed to spend the budget.
    pub mass: f64,
    pub signal: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exploration {
    pub banner: &'static str,
    pub d: usize,
    pub c: f64,
    pub grr_signal: f64,
    pub candidates: Vec<Candidate>,
}

/// Scans ordered-pair and three-level single-orbit templates that can spend
/// budget `c` above the knee, sorted by signal.
pub fn explore_high_budget(d: usize, c: f64, grid: usize) -> Result<Exploration> {
    let knee = c_star(d)?;
    check_budget(c)?;
    if c <= knee {
        return Err(Error::BadBudget(c));
    }
    let grid = grid.max(2);
    let df = d as f64;
    let mut candidates = Vec::new();
    let mut consider = |kind: &'static str, t: Vec<f64>| {
        if let Ok(ot) = OrbitTemplate::new(1.0, t) {
            let unit = ot.unit_budget();
            if unit >= c {
                if let Ok(slope) = orbit_slope(&ot) {
                    let mass = c / unit;
                    candidates.push(Candidate { kind, template: ot.template.clone(), mass, signal: mass * ot.unit_signal(), slope });
                }
            }
        }
    };
    // ordered pairs (u, v, w, ..., w)
    for i in 1..grid {
        for j in 0..grid {
            let u = df * i as f64 / grid as f64;
            let v = (df - u) * j as f64 / grid as f64;
            let w = (df - u - v) / (df - 2.0);
            if d >= 3 && v > 0.0 && w > 0.0 {
                let mut t = vec![u, v];
                t.extend(std::iter::repeat_n(w, d - 2));
                consider("ordered_pair", t);
            }
        }
    }
    // three levels on blocks of sizes (k1, k2, d - k1 - k2)
    for k1 in 1..d {
        for k2 in 1..d - k1 {
            let k3 = d - k1 - k2;
            for i in 1..grid {
                for j in 1..grid {
                    let hi = 1.0 + 8.0 * i as f64 / grid as f64;
                    let mid = 1.0 + (hi - 1.0) * j as f64 / grid as f64;
                    let total = hi * k1 as f64 + mid * k2 as f64 + k3 as f64;
                    let scale = df / total;
                    let mut t = vec![hi * scale; k1];
                    t.extend(std::iter::repeat_n(mid * scale, k2));
                    t.extend(std::iter::repeat_n(scale, k3));
                    consider("three_level", t);
                }
            }
        }
    }
    candidates.sort_by(|a, b| b.signal.total_cmp(&a.signal));
    candidates.truncate(20);
    let grr_signal = eta(d, lambda_of_budget(d, c)?).powi(2);
    Ok(Exploration { banner: NO_OPTIMALITY_BANNER, d, c, grr_signal, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{augmented_grr, grr, subset_selection, MixtureBlock};
    use proptest::prelude::*;

    #[test]
    fn budget_examples() {
        assert!((grr_budget(10, 3.0).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        let c3 = (3.0 - 2.0 * 2f64.sqrt()) / 2.0;
        assert!((grr_budget(3, 2f64.sqrt()).unwrap() - c3).abs() < 1e-15);
        assert_eq!(grr_budget(3, 1.0).unwrap(), 0.0);
        assert!(grr_budget(3, 0.5).is_err());
        assert!((c_star(3).unwrap() - 0.08578643762690495).abs() < 1e-15);
        assert!((c_star(10).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        assert!(matches!(c_star(2), Err(Error::DTooSmall(2))));
    }

    #[test]
    fn lambda_inversion() {
        for d in [3usize, 5, 10, 40] {
            let l = lambda_of_budget(d, c_star(d).unwrap()).unwrap();
            assert!((l - ((d - 1) as f64).sqrt()).abs() < 1e-10);
        }
        let l = lambda_of_budget(10, 0.1).unwrap();
        assert!((l - 1.8377746918828267).abs() < 1e-12);
        assert!((lambda_of_budget(3, 0.05).unwrap() - 1.3059663980464724).abs() < 1e-12);
        for c in [1e-6, 0.3, 5.0, 100.0] {
            let l = lambda_of_budget(6, c).unwrap();
            assert!((grr_budget(6, l).unwrap() - c).abs() <= 1e-12 * c.max(1.0));
        }
        assert!(matches!(lambda_of_budget(3, 0.0), Err(Error::BadBudget(_))));
    }

    #[test]
    fn instance_d3() {
        let o = s_opt(3, 0.05).unwrap();
        assert!((o.mechanism.p() - 0.582_842_712_474_619).abs() < 1e-12);
        assert_eq!(o.mechanism.lambda(), 2f64.sqrt());
        let r = opt_risk(3, 100, 0.05).unwrap();
        assert!((r.risk_opt_times_n - 77.04569499661586).abs() < 1e-10);
        assert!((r.risk_grr_times_n - 77.16532491054813).abs() < 1e-9);
        assert!((r.ratio - 0.9984496933814386).abs() < 1e-12);
        assert!((r.risk_opt * 100.0 - r.risk_opt_times_n).abs() < 1e-12);
    }

    #[test]
    fn instance_d10() {
        let o = s_opt(10, 0.1).unwrap();
        assert!((o.signal - 0.00625).abs() < 1e-15);
        assert!((o.mechanism.p() - 0.225).abs() < 1e-14);
        assert_eq!(o.mechanism.lambda(), 3.0);
        let r = opt_risk(10, 1, 0.1).unwrap();
        assert!((r.risk_opt_times_n - 143.1).abs() < 1e-10);
        assert!((r.risk_grr_times_n - 149.71501600557878).abs() < 1e-9);
        assert!((r.ratio - 0.955_815_948_312_544).abs() < 1e-12);
        let aug = MixtureSpec::augmented(10, 0.225, 3.0);
        assert!((mixture_budget(&aug).unwrap() - 0.1).abs() < 1e-15);
        assert!((mixture_signal(&aug).unwrap() - 0.00625).abs() < 1e-15);
    }

    #[test]
    fn knee_continuity() {
        for d in [3usize, 4, 10, 25] {
            let k = c_star(d).unwrap();
            let lo = s_opt(d, k).unwrap();
            let hi_signal = eta(d, lambda_of_budget(d, k).unwrap()).powi(2);
            assert!((lo.signal - hi_signal).abs() < 1e-10);
            let r = opt_risk(d, 1, k).unwrap();
            assert!((r.ratio - 1.0).abs() < 1e-10);
            assert!((r.risk_opt_times_n - r.risk_grr_times_n).abs() < 1e-10 * r.risk_grr_times_n);
        }
    }

    #[test]
    fn ratio_below_one_before_knee() {
        for d in [3usize, 7, 20] {
            let k = c_star(d).unwrap();
            for f in [1e-4, 0.1, 0.5, 0.9, 0.999] {
                assert!(opt_risk(d, 1, f * k).unwrap().ratio < 1.0);
            }
        }
    }

    #[test]
    fn mixture_signal_examples() {
        let single = MixtureSpec { d: 5, blocks: vec![MixtureBlock { p: 1.0, lambda: 2.0 }], null_masses: vec![] };
        assert!((mixture_signal(&single).unwrap() - eta(5, 2.0).powi(2)).abs() < 1e-16);
        let p = 0.4;
        let aug = MixtureSpec::augmented(5, p, 2.0);
        assert!((mixture_signal(&aug).unwrap() - p * 1.0 / 36.0).abs() < 1e-16);
        let null = MixtureSpec { d: 5, blocks: vec![], null_masses: vec![1.0] };
        assert!(matches!(mixture_signal(&null), Err(Error::ZeroSignal)));
    }

    #[test]
    fn concavity_examples() {
        for d in [3usize, 5, 10, 50] {
            let l = ((d - 1) as f64).sqrt();
            let r = concavity_certificate(d, l).unwrap();
            let want = 2.0 * ((d - 1) as f64).powf(1.5) * (2.0 - d as f64);
            assert!((r.polynomial - want).abs() < 1e-9 * want.abs().max(1.0));
            assert_eq!(r.holds, Some(true));
        }
        let r = concavity_certificate(10, 5.0).unwrap();
        assert!(r.polynomial < 0.0 && r.second_derivative < 0.0);
        let r = concavity_certificate(10, 1.1).unwrap();
        assert!(!r.in_range && r.holds.is_none());
    }

    #[test]
    fn frontier_slope_is_signal_derivative() {
        let (d, l, h) = (7usize, 3.0, 1e-6);
        let s = |l: f64| eta(d, l).powi(2);
        let c = |l: f64| grr_budget(d, l).unwrap();
        let fd = (s(l + h) - s(l - h)) / (c(l + h) - c(l - h));
        assert!((grr_frontier_slope(d, l) - fd).abs() < 1e-8);
        // the calibrated-GRR slope equals the low-budget slope at the knee
        let k = ((d - 1) as f64).sqrt();
        assert!((grr_frontier_slope(d, k) - optimal_slope(d)).abs() < 1e-14);
    }

    #[test]
    fn two_level_examples() {
        let m = two_level_max_slope(10, 1).unwrap();
        assert!((m.slope - 1.0 / 16.0).abs() < 1e-15 && m.lambda == Some(3.0));
        let t = two_level_slope(10, 1, 3.0).unwrap();
        assert!((t.slope - 1.0 / 16.0).abs() < 1e-15);
        assert!((t.budget - 4.0 / 9.0).abs() < 1e-15);
        let m = two_level_max_slope(10, 2).unwrap();
        assert!((m.slope - 1.0 / 18.0).abs() < 1e-15);
        let m = two_level_max_slope(10, 5).unwrap();
        assert!(!m.attained && (m.slope - 0.05).abs() < 1e-16);
        for l in [1.001, 1.5, 3.0, 10.0] {
            assert!(two_level_slope(10, 6, l).unwrap().slope < 0.05);
        }
        assert!(two_level_slope(10, 0, 2.0).is_err());
    }

    #[test]
    fn orbit_slope_examples() {
        for d in [3usize, 6, 10] {
            let star = OrbitTemplate::grr_star(d, 1.0).unwrap();
            assert!((orbit_slope(&star).unwrap() - optimal_slope(d)).abs() < 1e-14);
        }
        let op = OrbitTemplate::ordered_pair(5, 1.0, 2.0, 1.4).unwrap();
        assert!(orbit_slope(&op).unwrap() < optimal_slope(5) - 1e-6);
        assert!(matches!(orbit_slope(&OrbitTemplate::neutral(4, 1.0).unwrap()), Err(Error::NeutralOrbit)));
        let mut t = vec![1.0; 6];
        t[0] += 1e-4;
        t[1] -= 1e-4;
        let s = orbit_slope(&OrbitTemplate::new(1.0, t).unwrap()).unwrap();
        assert!(s.is_finite() && s <= optimal_slope(6));
    }

    #[test]
    fn subset_closed_forms() {
        assert!((ss_budget(5, 2, 2.0).unwrap() - 9.0 / 28.0).abs() < 1e-15);
        let ch = subset_selection(5, 2, 2.0).unwrap();
        assert!((ch.chi_star() - ss_budget(5, 2, 2.0).unwrap()).abs() < 1e-14);
        for d in [2usize, 3, 8] {
            for l in [1.3, 2.0, 7.0] {
                assert!((ss_budget(d, 1, l).unwrap() - grr_budget(d, l).unwrap()).abs() < 1e-15);
            }
        }
        for d in 3..9usize {
            for s in 1..d {
                for l in [1.2, 2.0, 4.5] {
                    let tl = OrbitTemplate::two_level(d, s, 1.0, l).unwrap();
                    let orbit = risk_times_n_from_signal(d, tl.unit_signal()).unwrap();
                    let closed = ss_risk_times_n(d, s, l).unwrap();
                    assert!((orbit - closed).abs() < 1e-12 * closed);
                    let two = two_level_slope(d, s, l).unwrap();
                    assert!((two.signal - tl.unit_signal()).abs() < 1e-15);
                    assert!((two.budget - ss_budget(d, s, l).unwrap()).abs() < 1e-14);
                    assert!((thinned_ss_ratio(d, s, l).unwrap() - two.slope).abs() < 1e-16);
                }
            }
        }
        assert!((ss_risk(5, 2, 2.0, 10).unwrap() * 10.0 - ss_risk_times_n(5, 2, 2.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn matched_risk_examples() {
        let t = ss_matched_risk(5, 0.3).unwrap();
        let want = [
            (2.116_278_411_670_565, 23.217037038789184),
            (1.9565403941712097, 27.057065338108273),
            (2.0454341563551487, 31.504239982488864),
            (2.555_575_017_708_978, 40.836_270_503_086_45),
        ];
        for (row, (l, r)) in t.rows.iter().zip(want) {
            assert!((row.lambda_s - l).abs() < 1e-10);
            assert!((row.matched_risk_times_n - r).abs() < 1e-9);
        }
        assert!(t.strictly_increasing);
        let t2 = ss_matched_risk(2, 0.5).unwrap();
        assert_eq!(t2.rows.len(), 1);
        for d in [3usize, 10] {
            let c = 0.05;
            let r = opt_risk(d, 1, c).unwrap();
            let t = ss_matched_risk(d, c).unwrap();
            assert!((t.rows[0].matched_risk_times_n - r.risk_grr_times_n).abs() < 1e-10 * r.risk_grr_times_n);
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("s,lambda_s,matched_risk_times_n\n1,"));
    }

    #[test]
    fn thinned_ratio_grid_max() {
        let mut best = (0.0, 0, 0.0);
        for s in 1..10 {
            for i in 1..=400 {
                let l = 1.0 + i as f64 * 0.02;
                let v = thinned_ss_ratio(10, s, l).unwrap();
                if v > best.0 {
                    best = (v, s, l);
                }
            }
        }
        assert_eq!(best.1, 1);
        assert!((best.2 - 3.0).abs() < 1e-9);
        assert!((best.0 - 1.0 / 16.0).abs() < 1e-15);
        assert!(thinned_ss_ratio(10, 9, 1e6).unwrap() < 1e-6);
    }

    #[test]
    fn frontier_csv_and_table() {
        let grid: Vec<f64> = (0..50).map(|i| 0.01 + (0.444 - 0.01) * i as f64 / 49.0).collect();
        let pts = frontier_table(10, &grid).unwrap();
        assert!(pts.iter().all(|p| p.mech_kind == "aug_grr"));
        let above = frontier_point(10, 0.6).unwrap();
        assert_eq!(above.mech_kind, "grr");
        assert_eq!(above.ratio, 1.0);
        let mut buf = Vec::new();
        write_frontier_csv(&pts[..1], &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("C,S_opt,risk_opt_times_n,risk_grr_times_n,ratio,mech_kind,p,lambda\n"));
        assert_eq!(s.lines().nth(1).unwrap().split(',').count(), 8);
        assert!(frontier_point(2, 0.1).is_err());
    }

    #[test]
    fn exploration_is_labelled() {
        let e = explore_high_budget(5, 1.5, 12).unwrap();
        assert_eq!(e.banner, NO_OPTIMALITY_BANNER);
        assert!(!e.candidates.is_empty());
        assert!(e.candidates.iter().all(|c| c.mass <= 1.0 + 1e-12));
        assert!(explore_high_budget(5, 0.1, 8).is_err());
    }

    #[test]
    fn aug_grr_channel_matches_frontier() {
        let o = s_opt(6, 0.2).unwrap();
        let ch = augmented_grr(6, o.mechanism.p(), o.mechanism.lambda()).unwrap();
        assert!((ch.chi_star() - 0.2).abs() < 1e-14);
        let g = grr(6, lambda_of_budget(6, 0.2).unwrap()).unwrap();
        assert!((g.chi_star() - 0.2).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn budgets_increase_in_lambda(d in 2usize..30, s_raw in 1usize..29, a in 1.0001f64..20.0, gap in 1e-6f64..5.0) {
            let s = 1 + (s_raw - 1) % (d - 1);
            prop_assert!(grr_budget(d, a + gap).unwrap() > grr_budget(d, a).unwrap());
            prop_assert!(ss_budget(d, s, a + gap).unwrap() > ss_budget(d, s, a).unwrap());
        }

        #[test]
        fn matched_risk_monotone(d in 2usize..=20, ci in 0usize..3) {
            let c = [0.01, 0.1, 1.0][ci];
            prop_assert!(ss_matched_risk(d, c).unwrap().strictly_increasing);
        }
    }
}
