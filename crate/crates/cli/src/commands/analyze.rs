use anyhow::Result;
use clap::Args;
use shuffle_priv::channel::{is_extremal, universal_bound};
use shuffle_priv::estimation::{bounds_report, fisher_info, symmetrized_chi2};

use crate::input::MechArgs;
use crate::output::{Report, Table};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub mech: MechArgs,
    /// Number of users for the risk lower bounds.
    #[arg(long, default_value_t = 1000)]
    pub n: u64,
    /// Off-vertex mass of the near-vertex point (default `1 / (2(d-1))`).
    #[arg(long)]
    pub rho: Option<f64>,
}

pub fn run(args: &AnalyzeArgs) -> Result<Report> {
    let loaded = args.mech.load()?;
    let ch = &loaded.channel;
    let d = ch.d();
    let eps0 = ch.ldp_parameter();
    let lambda = eps0.exp();
    let (wa, wb, chi_star) = ch.worst_pair();

    let mut report = Report::default();
    report.note("mechanism", loaded.label.clone());

    let mut summary = Table::new("summary", &["quantity", "value"]);
    summary.push(vec!["d".into(), d.into()]);
    summary.push(vec!["outputs".into(), ch.num_outputs().into()]);
    summary.push(vec!["eps0".into(), eps0.into()]);
    summary.push(vec!["lambda".into(), lambda.into()]);
    summary.push(vec!["chi_star".into(), chi_star.into()]);
    summary.push(vec!["worst_a".into(), wa.into()]);
    summary.push(vec!["worst_b".into(), wb.into()]);
    summary.push(vec!["symmetrized_chi2".into(), symmetrized_chi2(ch).into()]);
    let bound = if lambda > 1.0 { universal_bound(lambda)? } else { 0.0 };
    summary.push(vec!["universal_bound".into(), bound.into()]);

    let mut pairs = Table::new("pairs", &["a", "b", "chi2", "atoms", "extremal"]);
    let mut atoms = Table::new("lr_atoms", &["a", "b", "index", "ratio", "null_mass"]);
    let mut extremal_pairs = Vec::new();
    for (a, row) in ch.chi2_matrix().iter().enumerate() {
        for (b, &chi) in row.iter().enumerate() {
            if a == b {
                continue;
            }
            let law = ch.lr_law(a, b)?;
            let extremal = lambda > 1.0 && is_extremal(&law, lambda)?.extremal;
            if extremal {
                extremal_pairs.push(format!("({a},{b})"));
            }
            pairs.push(vec![a.into(), b.into(), chi.into(), law.len().into(), extremal.into()]);
            for (i, at) in law.atoms().iter().enumerate() {
                atoms.push(vec![a.into(), b.into(), i.into(), at.r.into(), at.p.into()]);
            }
        }
    }
    report.note("extremal_pairs", if extremal_pairs.is_empty() { "none".to_string() } else { extremal_pairs.join(" ") });

    let uniform = vec![1.0 / d as f64; d];
    let mut fisher = Table::new("fisher_uniform", &["index", "eigenvalue"]);
    match fisher_info(ch, &uniform, 1) {
        Ok(fi) => {
            for (i, ev) in fi.tangent_eigenvalues().into_iter().enumerate() {
                fisher.push(vec![i.into(), ev.into()]);
            }
        }
        Err(e) => report.note("fisher_uniform", format!("unavailable: {e}")),
    }

    let mut bounds = Table::new("bounds", &["quantity", "value"]);
    if d >= 2 && chi_star > 0.0 {
        let rho = args.rho.unwrap_or(0.5 / (d - 1) as f64);
        match bounds_report(ch, args.n, rho) {
            Ok(b) => {
                bounds.push(vec!["n".into(), args.n.into()]);
                bounds.push(vec!["rho".into(), rho.into()]);
                bounds.push(vec!["cr_formula".into(), b.cr.into()]);
                bounds.push(vec!["cr_trace".into(), b.cr_trace.into()]);
                bounds.push(vec!["assouad".into(), b.assouad.into()]);
                bounds.push(vec!["assouad_regime_ok".into(), b.regime_ok.into()]);
            }
            Err(e) => report.note("bounds", format!("unavailable: {e}")),
        }
    }

    report.tables = vec![summary, pairs, atoms, fisher, bounds];
    Ok(report)
}
