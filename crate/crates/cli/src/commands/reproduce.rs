use anyhow::Result;
use clap::Args;
use shuffle_priv::frontier::{c_star, grr_budget, opt_risk, optimal_slope, orbit_slope, s_opt, ss_matched_risk, two_level_max_slope};
use shuffle_priv::mechanisms::{augmented_grr, grr, subset_selection, OrbitTemplate};
use shuffle_priv::sim::{empirical_risk, Composition, Estimator, EstimatorSpec, SamplingMode};
use shuffle_priv::{Channel, MixtureBlock};

use crate::output::{Report, Table};
use crate::AssertionFailure;

/// Tolerance against figures quoted to four to six digits.
pub const PUBLISHED_TOL: f64 = 1e-3;
/// Tolerance against formulas evaluated independently here.
pub const CLOSED_FORM_TOL: f64 = 1e-10;

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Also check Monte Carlo risks against their closed forms.
    #[arg(long)]
    pub with_sim: bool,
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 100)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

struct Checks {
    table: Table,
    failures: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Checks {
            table: Table::new("checks", &["check", "value", "reference", "basis", "tolerance", "error", "pass"]),
            failures: Vec::new(),
        }
    }

    /// Relative comparison (absolute when the reference is zero).
    fn compare(&mut self, name: &str, value: f64, reference: f64, basis: &str, tol: f64) {
        let scale = if reference == 0.0 { 1.0 } else { reference.abs() };
        let err = (value - reference).abs() / scale;
        self.record(name, value, reference, basis, tol, err, err <= tol);
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, name: &str, value: f64, reference: f64, basis: &str, tol: f64, err: f64, pass: bool) {
        if !pass {
            self.failures.push(format!("{name}: got {value:.10e}, expected {reference:.10e} ({basis}, tolerance {tol:e})"));
        }
        self.table.push(vec![
            name.into(),
            value.into(),
            reference.into(),
            basis.into(),
            tol.into(),
            err.into(),
            pass.into(),
        ]);
    }
}

/// Low-budget optimal risk `(d-1)/d ((d + 2 sqrt(d-1)) / C - 1)`, times n.
fn thinned_risk_times_n(d: f64, c: f64) -> f64 {
    (d - 1.0) / d * ((d + 2.0 * (d - 1.0).sqrt()) / c - 1.0)
}

fn instances(checks: &mut Checks) -> Result<()> {
    // d = 3, C = 0.05
    let knee3 = c_star(3)?;
    checks.compare("knee d=3", knee3, (3.0 - 2.0 * 2f64.sqrt()) / 2.0, "closed_form", CLOSED_FORM_TOL);
    let opt3 = s_opt(3, 0.05)?;
    checks.compare("thinning mass d=3", opt3.mechanism.p(), 0.582843, "published", PUBLISHED_TOL);
    checks.compare("thinning mass d=3", opt3.mechanism.p(), 0.05 / knee3, "closed_form", CLOSED_FORM_TOL);
    let r3 = opt_risk(3, 1, 0.05)?;
    checks.compare("n*R_opt d=3", r3.risk_opt_times_n, 77.0457, "published", PUBLISHED_TOL);
    checks.compare("n*R_opt d=3", r3.risk_opt_times_n, thinned_risk_times_n(3.0, 0.05), "closed_form", CLOSED_FORM_TOL);
    checks.compare("n*R_grr d=3", r3.risk_grr_times_n, 77.1653, "published", PUBLISHED_TOL);
    checks.compare("GRR budget at calibrated lambda d=3", grr_budget(3, r3.lambda_grr)?, 0.05, "closed_form", CLOSED_FORM_TOL);

    // d = 10, C = 0.1
    let knee10 = c_star(10)?;
    checks.compare("knee d=10", knee10, 4.0 / 9.0, "published", CLOSED_FORM_TOL);
    let opt10 = s_opt(10, 0.1)?;
    checks.compare("thinning mass d=10", opt10.mechanism.p(), 0.225, "published", CLOSED_FORM_TOL);
    checks.compare("thinned lambda d=10", opt10.mechanism.lambda(), 3.0, "closed_form", CLOSED_FORM_TOL);
    let r10 = opt_risk(10, 1, 0.1)?;
    checks.compare("n*R_opt d=10", r10.risk_opt_times_n, 143.1, "published", CLOSED_FORM_TOL);
    checks.compare("n*R_opt d=10", r10.risk_opt_times_n, thinned_risk_times_n(10.0, 0.1), "closed_form", CLOSED_FORM_TOL);
    checks.compare("n*R_grr d=10", r10.risk_grr_times_n, 149.7150, "published", PUBLISHED_TOL);
    checks.compare("GRR budget at calibrated lambda d=10", grr_budget(10, r10.lambda_grr)?, 0.1, "closed_form", CLOSED_FORM_TOL);
    Ok(())
}

fn subset_tables(checks: &mut Checks) -> Result<Table> {
    let mut t = Table::new("subset_monotonicity", &["d", "C", "s", "lambda_s", "matched_risk_times_n"]);
    for d in [5usize, 10] {
        for c in [0.01, 0.1, 0.5] {
            let table = ss_matched_risk(d, c)?;
            for r in &table.rows {
                t.push(vec![d.into(), c.into(), r.s.into(), r.lambda_s.into(), r.matched_risk_times_n.into()]);
            }
            let min_step = table
                .rows
                .windows(2)
                .map(|w| w[1].matched_risk_times_n - w[0].matched_risk_times_n)
                .fold(f64::INFINITY, f64::min);
            checks.record(
                &format!("subset risk increases in s (d={d}, C={c})"),
                min_step,
                0.0,
                "inequality",
                0.0,
                0.0,
                table.strictly_increasing && min_step > 0.0,
            );
        }
    }
    Ok(t)
}

fn orbit_table(checks: &mut Checks) -> Result<Table> {
    let mut t = Table::new("orbit_slope", &["d", "s", "max_two_level_slope", "bound"]);
    for d in [3usize, 4, 6, 10] {
        let bound = optimal_slope(d);
        let mut worst = f64::NEG_INFINITY;
        for s in 1..d {
            let m = two_level_max_slope(d, s)?;
            worst = worst.max(m.slope);
            t.push(vec![d.into(), s.into(), m.slope.into(), bound.into()]);
        }
        checks.record(
            &format!("two-level slopes within the orbit bound (d={d})"),
            worst,
            bound,
            "inequality",
            1e-12,
            (worst - bound).max(0.0),
            worst <= bound + 1e-12,
        );
        let r = ((d - 1) as f64).sqrt();
        let den = r + (d - 1) as f64;
        let mut star = vec![d as f64 / den; d];
        star[0] = d as f64 * r / den;
        let slope = orbit_slope(&OrbitTemplate::new(1.0, star)?)?;
        checks.compare(&format!("optimal template attains the bound (d={d})"), slope, bound, "closed_form", CLOSED_FORM_TOL);
    }
    Ok(t)
}

fn simulations(checks: &mut Checks, args: &ReproduceArgs) -> Result<Table> {
    let mut t = Table::new(
        "simulation",
        &["mechanism", "n", "reps", "seed", "mean_risk_times_n", "std_error_times_n", "closed_form_times_n", "z_score"],
    );
    let cases: Vec<(&str, Channel, EstimatorSpec)> = vec![
        ("grr(10,3)", grr(10, 3.0)?, EstimatorSpec::MixtureProjected { blocks: vec![MixtureBlock { p: 1.0, lambda: 3.0 }] }),
        (
            "aug_grr(10,0.225,3)",
            augmented_grr(10, 0.225, 3.0)?,
            EstimatorSpec::MixtureProjected { blocks: vec![MixtureBlock { p: 0.225, lambda: 3.0 }] },
        ),
        ("subset(6,2,2)", subset_selection(6, 2, 2.0)?, EstimatorSpec::SsInverse { s: 2, lambda: 2.0 }),
    ];
    let n = args.n as f64;
    for (name, ch, spec) in cases {
        let est = Estimator::new(&spec, &ch)?;
        let mode = SamplingMode::FixedComposition(Composition::uniform(ch.d(), args.n)?);
        let r = empirical_risk(&ch, &est, &mode, args.reps, args.seed)?;
        let closed = r.closed_form.unwrap_or(est.risk_times_n / n);
        let z = (r.mean_risk - closed) / r.std_error;
        t.push(vec![
            name.into(),
            args.n.into(),
            args.reps.into(),
            args.seed.into(),
            (r.mean_risk * n).into(),
            (r.std_error * n).into(),
            (closed * n).into(),
            z.into(),
        ]);
        checks.record(&format!("Monte Carlo risk of {name} within 3 standard errors"), r.mean_risk * n, closed * n, "monte_carlo", 3.0, z.abs(), z.abs() <= 3.0);
    }
    Ok(t)
}

pub fn run(args: &ReproduceArgs) -> Result<Report> {
    let mut checks = Checks::new();
    instances(&mut checks)?;
    let subset = subset_tables(&mut checks)?;
    let orbit = orbit_table(&mut checks)?;
    let sim = if args.with_sim { Some(simulations(&mut checks, args)?) } else { None };

    let mut report = Report::default();
    report.note("tolerances", format!("{PUBLISHED_TOL:e} relative vs published figures, {CLOSED_FORM_TOL:e} vs closed forms"));
    let failures = std::mem::take(&mut checks.failures);
    report.tables.push(checks.table);
    report.tables.push(subset);
    report.tables.push(orbit);
    report.tables.extend(sim);
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(AssertionFailure { report, failures }.into())
    }
}
