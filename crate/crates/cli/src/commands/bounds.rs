use anyhow::Result;
use clap::Args;
use shuffle_priv::estimation::{assouad_bound, cr_bound, symmetrized_fisher_uniform};

use crate::input::MechArgs;
use crate::output::{Report, Table};

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub mech: MechArgs,
    /// Number of users.
    #[arg(long)]
    pub n: u64,
    /// Off-vertex mass of the near-vertex point (default `1 / (2(d-1))`).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Side length of the Assouad cube (default: the canonical choice).
    #[arg(long)]
    pub delta: Option<f64>,
}

pub fn run(args: &BoundsArgs) -> Result<Report> {
    let loaded = args.mech.load()?;
    let ch = &loaded.channel;
    let d = ch.d();
    let rho = args.rho.unwrap_or(0.5 / (d.max(2) - 1) as f64);
    let cr = cr_bound(ch, args.n, rho)?;
    let asd = assouad_bound(ch, args.n, args.delta)?;

    let mut report = Report::default();
    report.note("mechanism", loaded.label.clone());
    if !asd.regime_ok {
        report.note("assouad", "canonical side length infeasible; the largest admissible cube was used");
    }
    let mut t = Table::new("bounds", &["quantity", "value"]);
    t.push(vec!["n".into(), args.n.into()]);
    t.push(vec!["chi_star".into(), ch.chi_star().into()]);
    t.push(vec!["rho".into(), rho.into()]);
    t.push(vec!["cr_formula".into(), cr.formula.into()]);
    t.push(vec!["cr_trace".into(), cr.trace.into()]);
    t.push(vec!["assouad".into(), asd.value.into()]);
    t.push(vec!["assouad_delta".into(), asd.delta.into()]);
    t.push(vec!["assouad_regime_ok".into(), asd.regime_ok.into()]);
    t.push(vec!["assouad_vacuous".into(), asd.vacuous.into()]);
    if let Ok(sym) = symmetrized_fisher_uniform(ch, args.n) {
        t.push(vec!["symmetrized_eigenvalue".into(), sym.alpha.into()]);
        t.push(vec!["inv_trace_symmetrized".into(), sym.inv_trace_symmetrized.into()]);
        t.push(vec!["inv_trace_original".into(), sym.inv_trace_original.into()]);
    }
    report.tables.push(t);
    Ok(report)
}
