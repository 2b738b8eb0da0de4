//! Finite channels, pairwise chi-square divergences and likelihood-ratio laws.
//!
//! A [`Channel`] is a row-stochastic kernel from `d` inputs to a finite output
//! alphabet. Columns that are zero for every input are dropped on
//! construction; a column that is zero for some inputs but not others would
//! make the local privacy parameter infinite and is rejected.
//!
//! For a pair of inputs `(a, b)` the likelihood ratio `w(y) = W(y|b) / W(y|a)`
//! pushed forward under row `a` gives an [`LrLaw`]. The shuffled histogram of
//! `n` users (all on `a`, versus one switched to `b`) depends on the channel
//! only through this law, and its exact likelihood ratio is the linear
//! functional `(1/n) sum_j r_j m_j` of the level-set counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{csum, rel_close};

/// Relative tolerance under which two likelihood-ratio values share a level set.
pub const RATIO_MERGE_TOL: f64 = 1e-9;
/// Maximum deviation of a user-supplied row sum from 1.
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Channel {
    d: usize,
    outputs: Vec<String>,
    rows: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct ChannelJson {
    d: usize,
    outputs: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Channel {
    /// Validates a `d x |Y|` matrix and normalizes its support.
    pub fn new(d: usize, outputs: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if d < 2 {
            return Err(Error::BadParams(format!("need d >= 2, got {d}")));
        }
        if rows.len() != d {
            return Err(Error::Shape(format!("expected {d} rows, got {}", rows.len())));
        }
        let ny = outputs.len();
        if ny == 0 {
            return Err(Error::Shape("empty output alphabet".into()));
        }
        for (x, row) in rows.iter().enumerate() {
            if row.len() != ny {
                return Err(Error::Shape(format!(
                    "row {x} has {} entries, expected {ny}",
                    row.len()
                )));
            }
            for (y, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::NegativeEntry { row: x, col: y, value: v });
                }
            }
            let sum = csum(row);
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NonStochasticRow { row: x, sum });
            }
        }

        let mut keep = Vec::with_capacity(ny);
        for y in 0..ny {
            let zeros = rows.iter().filter(|r| r[y] == 0.0).count();
            if zeros == d {
                continue;
            }
            if zeros > 0 {
                return Err(Error::InfiniteLdp { col: y });
            }
            keep.push(y);
        }

        let outputs = keep.iter().map(|&y| outputs[y].clone()).collect();
        let rows = rows
            .iter()
            .map(|r| {
                let kept: Vec<f64> = keep.iter().map(|&y| r[y]).collect();
                let s = csum(&kept);
                kept.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Ok(Self { d, outputs, rows })
    }

    /// Builds a channel with outputs labeled `0..|Y|`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        Self::new(d, (0..ny).map(|y| y.to_string()).collect(), rows)
    }

    /// Parses the `{"d", "outputs", "rows"}` JSON form.
    pub fn from_json(s: &str) -> std::result::Result<Self, ChannelParseError> {
        let raw: ChannelJson = serde_json::from_str(s)?;
        Ok(Self::new(raw.d, raw.outputs, raw.rows)?)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x][y]
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        for idx in [a, b] {
            if idx >= self.d {
                return Err(Error::InputOutOfRange { index: idx, d: self.d });
            }
        }
        if a == b {
            return Err(Error::SameInput(a));
        }
        Ok(())
    }

    /// `log max_{x,x',y} W(y|x) / W(y|x')`.
    pub fn ldp_parameter(&self) -> f64 {
        let mut eps = 0.0f64;
        for y in 0..self.num_outputs() {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for r in &self.rows {
                lo = lo.min(r[y]);
                hi = hi.max(r[y]);
            }
            eps = eps.max((hi / lo).ln());
        }
        eps
    }

    /// `chi^2(W(.|b) || W(.|a)) = sum_y (W(y|b) - W(y|a))^2 / W(y|a)`.
    pub fn pairwise_chi2(&self, a: usize, b: usize) -> Result<f64> {
        self.check_pair(a, b)?;
        Ok(chi2_divergence(&self.rows[b], &self.rows[a]))
    }

    /// Matrix of pairwise divergences; entry `[a][b]` is `chi^2(W(.|b) || W(.|a))`, diagonal zero.
    pub fn chi2_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.d)
            .map(|a| {
                (0..self.d)
                    .map(|b| {
                        if a == b {
                            0.0
                        } else {
                            chi2_divergence(&self.rows[b], &self.rows[a])
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Worst ordered pair `(a, b, chi^2)`; ties resolve to the first pair in row-major order.
    pub fn worst_pair(&self) -> (usize, usize, f64) {
        let mut best = (0, 1, f64::NEG_INFINITY);
        for a in 0..self.d {
            for b in 0..self.d {
                if a == b {
                    continue;
                }
                let v = chi2_divergence(&self.rows[b], &self.rows[a]);
                if v > best.2 {
                    best = (a, b, v);
                }
            }
        }
        best
    }

    /// `max_{a != b} chi^2(W(.|b) || W(.|a))`.
    pub fn chi_star(&self) -> f64 {
        self.worst_pair().2
    }

    /// Likelihood-ratio law of the pair `(a, b)` under the null row `a`.
    pub fn lr_law(&self, a: usize, b: usize) -> Result<LrLaw> {
        self.check_pair(a, b)?;
        let pa = &self.rows[a];
        let pb = &self.rows[b];
        let mut order: Vec<usize> = (0..self.num_outputs()).collect();
        let ratio = |y: usize| pb[y] / pa[y];
        order.sort_by(|&u, &v| ratio(u).total_cmp(&ratio(v)).then(u.cmp(&v)));

        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut anchor = f64::NAN;
        for y in order {
            let r = ratio(y);
            match groups.last_mut() {
                Some(g) if rel_close(r, anchor, RATIO_MERGE_TOL) => g.push(y),
                _ => {
                    anchor = r;
                    groups.push(vec![y]);
                }
            }
        }
        let atoms = groups
            .into_iter()
            .map(|mut levels| {
                levels.sort_unstable();
                let ma = csum(&levels.iter().map(|&y| pa[y]).collect::<Vec<_>>());
                let mb = csum(&levels.iter().map(|&y| pb[y]).collect::<Vec<_>>());
                // P^b(B) / P^a(B) keeps sum_j r_j p_j = sum_j P^b(B_j) = 1 after merging.
                LrAtom { r: mb / ma, p: ma, levels }
            })
            .collect();
        Ok(LrLaw { atoms, eps0: self.ldp_parameter() })
    }
}

/// `chi^2(q || p) = sum_y (q_y - p_y)^2 / p_y` over outputs with `p_y > 0`.
pub fn chi2_divergence(q: &[f64], p: &[f64]) -> f64 {
    let terms: Vec<f64> = q
        .iter()
        .zip(p)
        .filter(|(_, &py)| py > 0.0)
        .map(|(&qy, &py)| (qy - py) * (qy - py) / py)
        .collect();
    csum(&terms)
}

#[derive(Debug, thiserror::Error)]
pub enum ChannelParseError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

/// One atom of a likelihood-ratio law: ratio value, null mass, and the output
/// indices forming its level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrAtom {
    pub r: f64,
    pub p: f64,
    #[serde(default)]
    pub levels: Vec<usize>,
}

/// Pushforward law of the pairwise likelihood ratio under the null row.
/// Atoms are kept in ascending order of ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LrLaw {
    atoms: Vec<LrAtom>,
    eps0: f64,
}

#[derive(Deserialize)]
struct LrLawJson {
    atoms: Vec<LrAtom>,
    eps0: Option<f64>,
}

impl LrLaw {
    /// Builds a law from user-supplied atoms. Masses are renormalized if they
    /// sum to 1 within `1e-9`; the mean must be 1 within `1e-9`. Atoms with
    /// equal ratios (relative `1e-9`) are merged.
    pub fn from_atoms(atoms: Vec<LrAtom>, eps0: Option<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::BadLaw("no atoms".into()));
        }
        for a in &atoms {
            if !(a.r.is_finite() && a.r > 0.0) {
                return Err(Error::BadLaw(format!("ratio {} is not positive", a.r)));
            }
            if !(a.p.is_finite() && a.p >= 0.0) {
                return Err(Error::BadLaw(format!("mass {} is negative", a.p)));
            }
        }
        let total = csum(&atoms.iter().map(|a| a.p).collect::<Vec<_>>());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::MassMismatch { sum: total });
        }
        let mut sorted = atoms;
        sorted.sort_by(|u, v| u.r.total_cmp(&v.r));
        let mut merged: Vec<LrAtom> = Vec::new();
        for a in sorted {
            let p = a.p / total;
            match merged.last_mut() {
                Some(last) if rel_close(last.r, a.r, RATIO_MERGE_TOL) => {
                    last.r = (last.r * last.p + a.r * p) / (last.p + p);
                    last.p += p;
                    last.levels.extend(a.levels);
                }
                _ => merged.push(LrAtom { r: a.r, p, levels: a.levels }),
            }
        }
        let law = LrLaw {
            eps0: 0.0,
            atoms: merged,
        };
        let mean = law.mean();
        if (mean - 1.0).abs() > 1e-9 {
            return Err(Error::BadLaw(format!("mean ratio is {mean}, expected 1")));
        }
        let span = law.log_span();
        let eps0 = match eps0 {
            Some(e) if e + 1e-12 < span => {
                return Err(Error::BadLaw(format!(
                    "atoms reach |log r| = {span}, beyond eps0 = {e}"
                )))
            }
            Some(e) => e,
            None => span,
        };
        Ok(LrLaw { eps0, ..law })
    }

    /// Parses `{"atoms": [{"r", "p", "levels"}], "eps0"}`.
    pub fn from_json(s: &str) -> std::result::Result<Self, ChannelParseError> {
        let raw: LrLawJson = serde_json::from_str(s)?;
        Ok(Self::from_atoms(raw.atoms, raw.eps0)?)
    }

    /// The two-point law `{1/lambda: lambda/(1+lambda), lambda: 1/(1+lambda)}`.
    pub fn two_point(lambda: f64) -> Result<Self> {
        if !(lambda > 1.0) {
            return Err(Error::BadLambda(lambda));
        }
        Ok(LrLaw {
            atoms: vec![
                LrAtom { r: 1.0 / lambda, p: lambda / (1.0 + lambda), levels: vec![] },
                LrAtom { r: lambda, p: 1.0 / (1.0 + lambda), levels: vec![] },
            ],
            eps0: lambda.ln(),
        })
    }

    pub fn atoms(&self) -> &[LrAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.r).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.p).collect()
    }

    /// `sum_j r_j p_j`; equals 1 for every law built from a channel.
    pub fn mean(&self) -> f64 {
        csum(&self.atoms.iter().map(|a| a.r * a.p).collect::<Vec<_>>())
    }

    /// `sum_j p_j (r_j - 1)^2`, the pairwise chi-square divergence.
    pub fn chi2(&self) -> f64 {
        csum(
            &self
                .atoms
                .iter()
                .map(|a| a.p * (a.r - 1.0) * (a.r - 1.0))
                .collect::<Vec<_>>(),
        )
    }

    /// `max_j |log r_j|`.
    pub fn log_span(&self) -> f64 {
        self.atoms.iter().map(|a| a.r.ln().abs()).fold(0.0, f64::max)
    }

    /// Exact likelihood ratio `(1/n) sum_j r_j m_j` of a quotient histogram.
    pub fn exact_lr(&self, counts: &[u64]) -> Result<f64> {
        if counts.len() != self.atoms.len() {
            return Err(Error::LengthMismatch {
                expected: self.atoms.len(),
                got: counts.len(),
            });
        }
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::BadParams("empty histogram".into()));
        }
        let terms: Vec<f64> = self
            .atoms
            .iter()
            .zip(counts)
            .map(|(a, &m)| a.r * m as f64)
            .collect();
        Ok(csum(&terms) / n as f64)
    }

    /// Aggregates a full output histogram into level-set counts.
    pub fn quotient_counts(&self, hist: &Histogram) -> Result<Vec<u64>> {
        let mut out = vec![0u64; self.atoms.len()];
        let mut covered = 0usize;
        for (j, atom) in self.atoms.iter().enumerate() {
            for &y in &atom.levels {
                let c = hist.counts.get(y).ok_or(Error::LengthMismatch {
                    expected: y + 1,
                    got: hist.counts.len(),
                })?;
                out[j] += c;
                covered += 1;
            }
        }
        if covered != hist.counts.len() {
            return Err(Error::LengthMismatch {
                expected: covered,
                got: hist.counts.len(),
            });
        }
        Ok(out)
    }
}

/// `(lambda - 1)^2 / lambda`, the largest pairwise chi-square divergence of
/// any channel whose likelihood ratios lie in `[1/lambda, lambda]`.
pub fn universal_bound(lambda: f64) -> Result<f64> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::BadLambda(lambda));
    }
    Ok((lambda - 1.0) * (lambda - 1.0) / lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremalReport {
    pub extremal: bool,
    pub chi2: f64,
    /// `(lambda - 1)^2 / lambda - chi2`.
    pub gap: f64,
}

/// Whether the law is the endpoint two-point law that attains the universal bound.
pub fn is_extremal(law: &LrLaw, lambda: f64) -> Result<ExtremalReport> {
    let bound = universal_bound(lambda)?;
    let chi2 = law.chi2();
    let tol = 1e-9;
    let extremal = law.len() == 2 && {
        let (lo, hi) = (&law.atoms[0], &law.atoms[1]);
        rel_close(lo.r, 1.0 / lambda, tol)
            && rel_close(hi.r, lambda, tol)
            && (lo.p - lambda / (1.0 + lambda)).abs() <= tol
            && (hi.p - 1.0 / (1.0 + lambda)).abs() <= tol
    };
    Ok(ExtremalReport { extremal, chi2, gap: bound - chi2 })
}

/// Released shuffle transcript: per-output counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: Vec<u64>,
    pub n: u64,
}

impl Histogram {
    pub fn new(counts: Vec<u64>) -> Self {
        let n = counts.iter().sum();
        Self { counts, n }
    }
}

/// Exact likelihood ratio `(1/n) sum_y N_y w(y)` computed from the full histogram.
pub fn exact_lr_full(ch: &Channel, a: usize, b: usize, hist: &Histogram) -> Result<f64> {
    ch.check_pair(a, b)?;
    if hist.counts.len() != ch.num_outputs() {
        return Err(Error::LengthMismatch {
            expected: ch.num_outputs(),
            got: hist.counts.len(),
        });
    }
    if hist.n == 0 {
        return Err(Error::BadParams("empty histogram".into()));
    }
    let terms: Vec<f64> = hist
        .counts
        .iter()
        .enumerate()
        .map(|(y, &c)| c as f64 * ch.prob(b, y) / ch.prob(a, y))
        .collect();
    Ok(csum(&terms) / hist.n as f64)
}
