use anyhow::{bail, Result};
use clap::Args;
use shuffle_priv::frontier::{c_star, explore_high_budget, frontier_table, FrontierPoint};

use crate::input::parse_linear_grid;
use crate::output::{Cell, Report, Table};

#[derive(Debug, Args)]
pub struct FrontierArgs {
    /// Input alphabet size (at least 3).
    #[arg(long)]
    pub d: usize,
    /// A single chi-square budget.
    #[arg(long, conflicts_with = "c_grid")]
    pub c: Option<f64>,
    /// Budget grid `lo:hi:k`.
    #[arg(long)]
    pub c_grid: Option<String>,
    /// Above the knee, also scan single-orbit templates (no optimality claim).
    #[arg(long)]
    pub explore: bool,
    /// Grid resolution of the exploratory scan.
    #[arg(long, default_value_t = 200)]
    pub explore_grid: usize,
}

fn point_row(p: &FrontierPoint) -> Vec<Cell> {
    vec![
        p.c.into(),
        p.s_opt.into(),
        p.risk_opt_times_n.into(),
        p.risk_grr_times_n.into(),
        p.ratio.into(),
        p.mech_kind.into(),
        p.p.into(),
        p.lambda.into(),
    ]
}

pub fn run(args: &FrontierArgs) -> Result<Report> {
    let knee = c_star(args.d)?;
    let budgets = match (&args.c, &args.c_grid) {
        (Some(c), None) => vec![*c],
        (None, Some(g)) => parse_linear_grid(g)?,
        _ => bail!("give either --c or --c-grid"),
    };
    let points = frontier_table(args.d, &budgets)?;

    let mut report = Report::default();
    report.note("d", args.d.to_string());
    report.note("knee", format!("{knee:.16e}"));
    let mut table = Table::new(
        "frontier",
        &["C", "S_opt", "risk_opt_times_n", "risk_grr_times_n", "ratio", "mech_kind", "p", "lambda"],
    );
    for p in &points {
        table.push(point_row(p));
    }
    report.tables.push(table);

    if args.explore {
        let mut t = Table::new("exploration", &["C", "kind", "template", "mass", "signal", "slope", "grr_signal"]);
        for &c in budgets.iter().filter(|&&c| c > knee) {
            let ex = explore_high_budget(args.d, c, args.explore_grid)?;
            report.note("exploration", ex.banner);
            for cand in &ex.candidates {
                let template: Vec<String> = cand.template.iter().map(|v| format!("{v:.16e}")).collect();
                t.push(vec![
                    c.into(),
                    cand.kind.into(),
                    template.join(" ").into(),
                    cand.mass.into(),
                    cand.signal.into(),
                    cand.slope.into(),
                    ex.grr_signal.into(),
                ]);
            }
        }
        report.tables.push(t);
    }
    Ok(report)
}
