use anyhow::{bail, Result};
use clap::{Args, Subcommand};
use shuffle_priv::privacy::{be_certificate, default_eps_grid, privacy_curve_exact};
use shuffle_priv::sim::{empirical_privacy_curve, empirical_risk, empirical_score, Composition, Estimator, SamplingMode};

use crate::input::{estimator_for, parse_counts, parse_linear_grid, resolve_pair, MechArgs};
use crate::output::{Report, Table};
use crate::AssertionFailure;

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub mech: MechArgs,
    /// Number of users.
    #[arg(long)]
    pub n: u64,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 100_000)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Empirical squared-error risk of the projected unbiased estimator.
    Risk {
        #[command(flatten)]
        sim: SimArgs,
        /// Per-input user counts `c1,c2,...`; defaults to the most even split.
        #[arg(long, conflicts_with = "iid")]
        composition: Option<String>,
        /// Draw inputs i.i.d. from the uniform distribution instead of a fixed composition.
        #[arg(long)]
        iid: bool,
    },
    /// Normal approximation of the standardized log-likelihood-ratio score.
    Clt {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        a: Option<usize>,
        #[arg(long)]
        b: Option<usize>,
    },
    /// Monte Carlo privacy curve next to the exact one.
    Curve {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        a: Option<usize>,
        #[arg(long)]
        b: Option<usize>,
        /// Epsilon grid `lo:hi:k`.
        #[arg(long)]
        eps_grid: Option<String>,
    },
}

pub fn run(cmd: &SimulateCommand) -> Result<Report> {
    match cmd {
        SimulateCommand::Risk { sim, composition, iid } => risk(sim, composition.as_deref(), *iid),
        SimulateCommand::Clt { sim, a, b } => clt(sim, *a, *b),
        SimulateCommand::Curve { sim, a, b, eps_grid } => curve(sim, *a, *b, eps_grid.as_deref()),
    }
}

fn risk(args: &SimArgs, composition: Option<&str>, iid: bool) -> Result<Report> {
    let loaded = args.mech.load()?;
    let ch = &loaded.channel;
    let d = ch.d();
    let est = Estimator::new(&estimator_for(&loaded)?, ch)?;
    let mode = if iid {
        SamplingMode::Iid { theta: vec![1.0 / d as f64; d], n: args.n }
    } else {
        let comp = match composition {
            Some(s) => Composition::new(parse_counts(s)?)?,
            None => Composition::uniform(d, args.n)?,
        };
        if comp.d() != d || comp.n() != args.n {
            bail!("composition must list {d} counts summing to n = {}", args.n);
        }
        SamplingMode::FixedComposition(comp)
    };
    let r = empirical_risk(ch, &est, &mode, args.reps, args.seed)?;
    let n = args.n as f64;

    let mut report = Report::default();
    report.note("mechanism", loaded.label.clone());
    report.note("sampling", if iid { "iid uniform" } else { "fixed composition" });
    let mut t = Table::new(
        "risk",
        &["n", "reps", "seed", "mean_risk", "std_error", "mean_risk_times_n", "closed_form_times_n", "z_score", "max_affine_error"],
    );
    t.push(vec![
        args.n.into(),
        args.reps.into(),
        args.seed.into(),
        r.mean_risk.into(),
        r.std_error.into(),
        (r.mean_risk * n).into(),
        r.closed_form.map_or(f64::NAN, |c| c * n).into(),
        r.z_score().unwrap_or(f64::NAN).into(),
        r.max_affine_error.into(),
    ]);
    let mut coords = Table::new("coordinates", &["x", "theta", "estimate_mean", "estimate_se"]);
    for x in 0..d {
        coords.push(vec![x.into(), r.theta[x].into(), r.estimate_mean[x].into(), r.estimate_se[x].into()]);
    }
    report.tables = vec![t, coords];
    Ok(report)
}

fn clt(args: &SimArgs, a: Option<usize>, b: Option<usize>) -> Result<Report> {
    let loaded = args.mech.load()?;
    let (a, b) = resolve_pair(&loaded, a, b)?;
    let ch = &loaded.channel;
    let r = empirical_score(ch, a, b, args.n, args.reps, args.seed)?;
    let lambda = ch.ldp_parameter().exp();
    let cert = be_certificate(lambda, args.n, r.information)?;
    let allowance = cert + 3.0 / (args.reps as f64).sqrt();
    let shift_z = (r.alt_mean - r.expected_shift) / r.alt_mean_se;

    let mut report = Report::default();
    report.note("mechanism", loaded.label.clone());
    report.note("pair", format!("({a},{b})"));
    let mut t = Table::new(
        "clt",
        &[
            "n",
            "reps",
            "seed",
            "information",
            "ks_null",
            "ks_alt",
            "certificate",
            "ks_allowance",
            "alt_mean",
            "expected_shift",
            "alt_mean_se",
        ],
    );
    t.push(vec![
        args.n.into(),
        args.reps.into(),
        args.seed.into(),
        r.information.into(),
        r.ks_null.into(),
        r.ks_alt.into(),
        cert.into(),
        allowance.into(),
        r.alt_mean.into(),
        r.expected_shift.into(),
        r.alt_mean_se.into(),
    ]);
    report.tables.push(t);

    let mut failures = Vec::new();
    if r.ks_null > allowance {
        failures.push(format!("Berry-Esseen certificate: Kolmogorov distance {:.6} exceeds {allowance:.6}", r.ks_null));
    }
    if shift_z.abs() > 4.0 {
        failures.push(format!("alternative mean shift off by {shift_z:.2} standard errors"));
    }
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(AssertionFailure { report, failures }.into())
    }
}

fn curve(args: &SimArgs, a: Option<usize>, b: Option<usize>, grid: Option<&str>) -> Result<Report> {
    let loaded = args.mech.load()?;
    let (a, b) = resolve_pair(&loaded, a, b)?;
    let ch = &loaded.channel;
    let grid = match grid {
        Some(g) => parse_linear_grid(g)?,
        None => default_eps_grid(ch.ldp_parameter().exp()),
    };
    let mc = empirical_privacy_curve(ch, a, b, args.n, args.reps, &grid, args.seed)?;
    let exact = privacy_curve_exact(&ch.lr_law(a, b)?, args.n, &grid).ok();

    let mut report = Report::default();
    report.note("mechanism", loaded.label.clone());
    report.note("pair", format!("({a},{b})"));
    let mut t = Table::new("curve", &["eps", "mc_delta_fwd", "se_fwd", "mc_delta_rev", "se_rev", "exact_delta_fwd", "exact_delta_rev"]);
    for (i, p) in mc.curve.points.iter().enumerate() {
        let (ef, er) = exact.as_ref().map_or((f64::NAN, f64::NAN), |c| (c.points[i].delta_fwd, c.points[i].delta_rev));
        t.push(vec![
            p.eps.into(),
            p.delta_fwd.into(),
            mc.se_fwd[i].into(),
            p.delta_rev.into(),
            mc.se_rev[i].into(),
            ef.into(),
            er.into(),
        ]);
    }
    report.tables.push(t);
    Ok(report)
}
