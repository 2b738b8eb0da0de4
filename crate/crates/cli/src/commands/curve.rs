use anyhow::{bail, Result};
use clap::Args;
use shuffle_priv::privacy::{default_eps_grid, gdp_curve, gdp_scale, privacy_curve_exact};
use shuffle_priv::sim::sufficiency_oracle;

use crate::input::{load_law, parse_linear_grid, resolve_pair, MechArgs};
use crate::output::{Report, Table};
use crate::AssertionFailure;

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub mech: MechArgs,
    /// Likelihood-ratio law as inline JSON or `@path`, instead of a mechanism.
    #[arg(long, conflicts_with_all = ["mech", "spec", "channel"])]
    pub law: Option<String>,
    /// Number of users.
    #[arg(long)]
    pub n: u64,
    /// Input held by every user under the null.
    #[arg(long)]
    pub a: Option<usize>,
    /// Input of the switched user under the alternative.
    #[arg(long)]
    pub b: Option<usize>,
    /// Epsilon grid `lo:hi:k`; defaults to 64 points spanning `[0, eps0]`.
    #[arg(long)]
    pub eps_grid: Option<String>,
    /// Add the Gaussian-DP reference curve with the matching scale.
    #[arg(long)]
    pub gdp: bool,
    /// Cross-check against full-histogram enumeration (n <= 6).
    #[arg(long)]
    pub oracle: bool,
}

pub fn run(args: &CurveArgs) -> Result<Report> {
    let mut report = Report::default();
    let (law, oracle_input) = match &args.law {
        Some(text) => {
            if args.oracle {
                bail!("--oracle needs a channel, not a bare law");
            }
            report.note("source", "likelihood-ratio law");
            (load_law(text)?, None)
        }
        None => {
            let loaded = args.mech.load()?;
            let (a, b) = resolve_pair(&loaded, args.a, args.b)?;
            report.note("mechanism", loaded.label.clone());
            report.note("pair", format!("({a},{b})"));
            (loaded.channel.lr_law(a, b)?, Some((loaded.channel, a, b)))
        }
    };
    let grid = match &args.eps_grid {
        Some(g) => parse_linear_grid(g)?,
        None => default_eps_grid(law.eps0().exp()),
    };
    let curve = privacy_curve_exact(&law, args.n, &grid)?;
    let mu = gdp_scale(law.chi2(), args.n);

    let mut columns = vec!["eps", "delta_fwd", "delta_rev", "delta_two_sided"];
    if args.gdp {
        columns.push("gdp");
        report.note("gdp_mu", format!("{mu:.16e}"));
    }
    let mut table = Table::new("curve", &columns);
    for p in &curve.points {
        let mut row = vec![p.eps.into(), p.delta_fwd.into(), p.delta_rev.into(), p.two_sided().into()];
        if args.gdp {
            let g = if mu > 0.0 { gdp_curve(mu, p.eps)? } else { 0.0 };
            row.push(g.into());
        }
        table.push(row);
    }
    report.tables.push(table);

    if args.oracle {
        let (ch, a, b) = oracle_input.expect("oracle requires a channel");
        let check = sufficiency_oracle(&ch, a, b, args.n, &grid)?;
        let mut t = Table::new("oracle", &["max_abs_diff", "tolerance", "equal"]);
        t.push(vec![check.max_abs_diff.into(), 1e-12.into(), check.equal.into()]);
        report.tables.push(t);
        if !check.equal {
            return Err(AssertionFailure {
                report,
                failures: vec![format!(
                    "likelihood-ratio quotient is not sufficient: full-histogram curve differs by {:e}",
                    check.max_abs_diff
                )],
            }
            .into());
        }
    }
    Ok(report)
}
