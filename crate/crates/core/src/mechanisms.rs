//! Constructors for the named channel families and the implicit orbit-template
//! representation of permutation-equivariant channels.
//!
//! Output labels follow a fixed scheme so that estimators can recover the
//! layout of a constructed channel:
//!
//! * GRR and half-block: `"0"`, ..., `"d-1"`;
//! * GRR mixtures (and augmented GRR): `"b{i}:{y}"` for symbol `y` of block
//!   `i`, `"z{k}"` for the null symbols;
//! * subset selection: `"{0,2,5}"`;
//! * interpolated family: `"i{k}"` informative, `"c{k}"` common;
//! * materialized orbits: `"o{k}:{j}"` for the `j`-th point of orbit `k`,
//!   `"z"` for the neutral remainder.

use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::numeric::csum;

/// Largest subset-selection alphabet that is built explicitly.
pub const SUBSET_ALPHABET_CAP: f64 = 2e6;
/// Largest `d` for which orbit channels are materialized.
pub const ORBIT_MATERIALIZE_MAX_D: usize = 6;
/// Largest materialized orbit alphabet.
pub const ORBIT_ALPHABET_CAP: usize = 100_000;

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 1.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::BadLambda(lambda))
    }
}

fn check_d(d: usize) -> Result<()> {
    if d >= 2 {
        Ok(())
    } else {
        Err(Error::BadParams(format!("need d >= 2, got {d}")))
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::BadParams(format!("{name} = {p} is not in [0, 1]")))
    }
}

fn index_labels(n: usize) -> Vec<String> {
    (0..n).map(|y| y.to_string()).collect()
}

/// d-ary generalized randomized response: the true symbol with weight
/// `lambda`, every other symbol with weight 1.
pub fn grr(d: usize, lambda: f64) -> Result<Channel> {
    check_d(d)?;
    check_lambda(lambda)?;
    let z = lambda + d as f64 - 1.0;
    let rows = (0..d)
        .map(|x| {
            (0..d)
                .map(|y| if x == y { lambda / z } else { 1.0 / z })
                .collect()
        })
        .collect();
    Channel::new(d, index_labels(d), rows)
}

/// Cyclic half-block channel on an even alphabet: row `x` puts weight
/// `lambda` on the half-block `{x, ..., x + d/2 - 1} mod d` and 1 elsewhere.
pub fn half_block(d: usize, lambda: f64) -> Result<Channel> {
    check_d(d)?;
    if !d.is_multiple_of(2) {
        return Err(Error::OddD(d));
    }
    check_lambda(lambda)?;
    let df = d as f64;
    let hi = 2.0 * lambda / (df * (1.0 + lambda));
    let lo = 2.0 / (df * (1.0 + lambda));
    let half = d / 2;
    let rows = (0..d)
        .map(|x| {
            (0..d)
                .map(|y| if (y + d - x) % d < half { hi } else { lo })
                .collect()
        })
        .collect();
    Channel::new(d, index_labels(d), rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureBlock {
    pub p: f64,
    pub lambda: f64,
}

/// GRR blocks with weights `p_i` and null symbols with masses `r_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub d: usize,
    pub blocks: Vec<MixtureBlock>,
    #[serde(default)]
    pub null_masses: Vec<f64>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        check_d(self.d)?;
        for b in &self.blocks {
            check_lambda(b.lambda)?;
            check_prob("block weight", b.p)?;
        }
        for &r in &self.null_masses {
            check_prob("null mass", r)?;
        }
        let mut all: Vec<f64> = self.blocks.iter().map(|b| b.p).collect();
        all.extend(&self.null_masses);
        let sum = csum(&all);
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::MassMismatch { sum });
        }
        Ok(())
    }

    /// Augmented GRR: one block of weight `p` plus a single null symbol.
    pub fn augmented(d: usize, p: f64, lambda: f64) -> Self {
        Self {
            d,
            blocks: vec![MixtureBlock { p, lambda }],
            null_masses: vec![1.0 - p],
        }
    }

    pub fn null_total(&self) -> f64 {
        csum(&self.null_masses)
    }
}

/// Block-concatenated GRR mixture with null refinements.
pub fn grr_mixture(spec: &MixtureSpec) -> Result<Channel> {
    spec.validate()?;
    let d = spec.d;
    let mut labels = Vec::new();
    for i in 0..spec.blocks.len() {
        labels.extend((0..d).map(|y| format!("b{i}:{y}")));
    }
    labels.extend((0..spec.null_masses.len()).map(|k| format!("z{k}")));
    let rows = (0..d)
        .map(|x| {
            let mut row = Vec::with_capacity(labels.len());
            for b in &spec.blocks {
                let z = b.lambda + d as f64 - 1.0;
                row.extend((0..d).map(|y| {
                    if y == x {
                        b.p * b.lambda / z
                    } else {
                        b.p / z
                    }
                }));
            }
            row.extend(&spec.null_masses);
            row
        })
        .collect();
    Channel::new(d, labels, rows)
}

/// Augmented GRR: GRR at `lambda` with probability `p`, else the null symbol.
pub fn augmented_grr(d: usize, p: f64, lambda: f64) -> Result<Channel> {
    check_d(d)?;
    check_lambda(lambda)?;
    check_prob("p", p)?;
    grr_mixture(&MixtureSpec::augmented(d, p, lambda))
}

/// `C(n, k)` as a float.
pub fn binomial_f64(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc *= (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// All `s`-subsets of `0..d` in lexicographic order.
pub fn subsets(d: usize, s: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if s > d {
        return out;
    }
    let mut cur: Vec<usize> = (0..s).collect();
    loop {
        out.push(cur.clone());
        let mut i = s;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < d - s + i {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..s {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Parses a subset label of the form `"{0,2,5}"`.
pub fn parse_subset_label(label: &str) -> Option<Vec<usize>> {
    let inner = label.strip_prefix('{')?.strip_suffix('}')?;
    if inner.is_empty() {
        return Some(Vec::new());
    }
    inner.split(',').map(|t| t.trim().parse().ok()).collect()
}

/// Subset selection `SS(d, s, lambda)`: report an `s`-subset, weight `lambda`
/// when it contains the input and 1 otherwise.
pub fn subset_selection(d: usize, s: usize, lambda: f64) -> Result<Channel> {
    check_d(d)?;
    check_lambda(lambda)?;
    if s < 1 || s >= d {
        return Err(Error::BadParams(format!("need 1 <= s <= d-1, got s = {s}, d = {d}")));
    }
    let size = binomial_f64(d, s);
    if size > SUBSET_ALPHABET_CAP {
        return Err(Error::AlphabetTooLarge { size, cap: SUBSET_ALPHABET_CAP });
    }
    let all = subsets(d, s);
    let (df, sf) = (d as f64, s as f64);
    let c = df / (size * (lambda * sf + df - sf));
    let labels = all
        .iter()
        .map(|set| {
            let items: Vec<String> = set.iter().map(|v| v.to_string()).collect();
            format!("{{{}}}", items.join(","))
        })
        .collect();
    let rows = (0..d)
        .map(|x| {
            all.iter()
                .map(|set| if set.contains(&x) { c * lambda } else { c })
                .collect()
        })
        .collect();
    Channel::new(d, labels, rows)
}

/// Interpolation between the two poles: a half-block of size `m` carrying
/// mass `theta`, plus `d - m` common outputs carrying `1 - theta` uniformly.
/// Input `x` uses the half-block row of `x mod m`.
pub fn interpolated(d: usize, m: usize, theta: f64, lambda: f64) -> Result<Channel> {
    check_d(d)?;
    check_lambda(lambda)?;
    check_prob("theta", theta)?;
    if m < 2 || !m.is_multiple_of(2) || m > d {
        return Err(Error::BadParams(format!("need even 2 <= m <= d, got m = {m}")));
    }
    if m == d && theta < 1.0 {
        return Err(Error::BadParams(
            "m = d leaves no common block for the remaining mass".into(),
        ));
    }
    let mf = m as f64;
    let hi = 2.0 * lambda / (mf * (1.0 + lambda));
    let lo = 2.0 / (mf * (1.0 + lambda));
    let half = m / 2;
    let common = if m < d { (1.0 - theta) / (d - m) as f64 } else { 0.0 };
    let mut labels: Vec<String> = (0..m).map(|k| format!("i{k}")).collect();
    labels.extend((0..d - m).map(|k| format!("c{k}")));
    let rows = (0..d)
        .map(|x| {
            let xm = x % m;
            let mut row: Vec<f64> = (0..m)
                .map(|y| theta * if (y + m - xm) % m < half { hi } else { lo })
                .collect();
            row.extend(std::iter::repeat_n(common, d - m));
            row
        })
        .collect();
    Channel::new(d, labels, rows)
}

/// Row profile of one output orbit of a permutation-equivariant channel,
/// normalized so that the entries sum to `d`, together with the orbit's mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTemplate {
    pub mass: f64,
    pub template: Vec<f64>,
}

impl OrbitTemplate {
    /// Validates and canonicalizes (descending order).
    pub fn new(mass: f64, template: Vec<f64>) -> Result<Self> {
        check_prob("orbit mass", mass)?;
        let d = template.len();
        check_d(d)?;
        if template.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::BadParams("template entries must be positive".into()));
        }
        let sum = csum(&template);
        if (sum - d as f64).abs() > 1e-10 {
            return Err(Error::TemplateSumError { sum, d });
        }
        let mut template = template;
        template.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { mass, template })
    }

    /// Template of `d`-ary GRR at `lambda`.
    pub fn grr(d: usize, mass: f64, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Self::two_level(d, 1, mass, lambda)
    }

    /// The optimal singleton template, GRR at `lambda = sqrt(d - 1)`.
    pub fn grr_star(d: usize, mass: f64) -> Result<Self> {
        if d < 3 {
            return Err(Error::DTooSmall(d));
        }
        Self::grr(d, mass, ((d - 1) as f64).sqrt())
    }

    /// Two-level template: `alpha` on `s` coordinates, `beta` on `d - s`, `alpha / beta = lambda`.
    pub fn two_level(d: usize, s: usize, mass: f64, lambda: f64) -> Result<Self> {
        check_d(d)?;
        if s < 1 || s >= d {
            return Err(Error::BadParams(format!("need 1 <= s <= d-1, got {s}")));
        }
        if !(lambda > 0.0) {
            return Err(Error::BadLambda(lambda));
        }
        let (df, sf) = (d as f64, s as f64);
        let den = df + sf * (lambda - 1.0);
        let alpha = df * lambda / den;
        let beta = df / den;
        let mut t = vec![alpha; s];
        t.extend(std::iter::repeat_n(beta, d - s));
        Self::new(mass, t)
    }

    /// Ordered-pair template `(u, v, w, ..., w)` with `w = (d - u - v) / (d - 2)`.
    pub fn ordered_pair(d: usize, mass: f64, u: f64, v: f64) -> Result<Self> {
        if d < 3 {
            return Err(Error::BadParams("ordered pairs need d >= 3".into()));
        }
        let w = (d as f64 - u - v) / (d - 2) as f64;
        let mut t = vec![u, v];
        t.extend(std::iter::repeat_n(w, d - 2));
        Self::new(mass, t)
    }

    /// The all-ones neutral template.
    pub fn neutral(d: usize, mass: f64) -> Result<Self> {
        Self::new(mass, vec![1.0; d])
    }

    pub fn d(&self) -> usize {
        self.template.len()
    }

    /// `A = sum_x 1 / a_x`.
    pub fn a_sum(&self) -> f64 {
        csum(&self.template.iter().map(|a| 1.0 / a).collect::<Vec<_>>())
    }

    /// `B = sum_x a_x^2`.
    pub fn b_sum(&self) -> f64 {
        csum(&self.template.iter().map(|a| a * a).collect::<Vec<_>>())
    }

    /// Per-unit-mass pairwise chi-square budget `(AB - d^2) / (d(d-1))`.
    pub fn unit_budget(&self) -> f64 {
        let d = self.d() as f64;
        (self.a_sum() * self.b_sum() - d * d) / (d * (d - 1.0))
    }

    /// Per-unit-mass signal coefficient `(B - d) / (d(d-1))`.
    pub fn unit_signal(&self) -> f64 {
        let d = self.d() as f64;
        (self.b_sum() - d) / (d * (d - 1.0))
    }

    /// Distinct values with multiplicities, in descending order.
    pub fn value_classes(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &a in &self.template {
            match out.last_mut() {
                Some((v, c)) if (a - *v).abs() <= 1e-12 * v.abs().max(1.0) => *c += 1,
                _ => out.push((a, 1)),
            }
        }
        out
    }

    /// Number of distinct coordinate permutations of the template.
    pub fn orbit_size(&self) -> f64 {
        let mut size = 1.0f64;
        let mut placed = 0usize;
        for (_, c) in self.value_classes() {
            placed += c;
            size *= binomial_f64(placed, c);
        }
        size
    }
}

/// Permutation-equivariant channel in orbit-template form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivariantChannel {
    pub d: usize,
    pub orbits: Vec<OrbitTemplate>,
    pub null_mass: f64,
}

impl EquivariantChannel {
    /// Pairwise chi-square budget, identical for every pair.
    pub fn budget(&self) -> f64 {
        csum(&self.orbits.iter().map(|o| o.mass * o.unit_budget()).collect::<Vec<_>>())
    }

    /// Signal coefficient `S(W)`.
    pub fn signal(&self) -> f64 {
        csum(&self.orbits.iter().map(|o| o.mass * o.unit_signal()).collect::<Vec<_>>())
    }

    /// `n` times the exact fixed-composition risk of the projected estimator.
    pub fn risk_times_n(&self) -> Result<f64> {
        let s = self.signal();
        if !(s > 0.0) {
            return Err(Error::ZeroSignal);
        }
        let d = self.d as f64;
        Ok((d - 1.0) / d * (1.0 / s - 1.0))
    }
}

/// Assembles an implicit equivariant channel from orbit templates.
pub fn orbit_channel(
    d: usize,
    orbits: Vec<OrbitTemplate>,
    null_mass: f64,
) -> Result<EquivariantChannel> {
    check_d(d)?;
    check_prob("null mass", null_mass)?;
    let mut orbits_checked = Vec::with_capacity(orbits.len());
    for o in orbits {
        if o.d() != d {
            return Err(Error::DimensionMismatch(format!(
                "template of length {} for d = {d}",
                o.d()
            )));
        }
        // Re-validate in case the template was built by hand.
        orbits_checked.push(OrbitTemplate::new(o.mass, o.template)?);
    }
    let mut masses: Vec<f64> = orbits_checked.iter().map(|o| o.mass).collect();
    masses.push(null_mass);
    let sum = csum(&masses);
    if (sum - 1.0).abs() > 1e-10 {
        return Err(Error::MassMismatch { sum });
    }
    Ok(EquivariantChannel { d, orbits: orbits_checked, null_mass })
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Builds the explicit channel whose orbits are all distinct permutations of
/// each template. Only for small `d`.
pub fn materialize_orbit_channel(ec: &EquivariantChannel) -> Result<Channel> {
    let d = ec.d;
    if d > ORBIT_MATERIALIZE_MAX_D {
        return Err(Error::TooLarge(format!(
            "d = {d} exceeds {ORBIT_MATERIALIZE_MAX_D}"
        )));
    }
    let total: f64 = ec.orbits.iter().map(|o| o.orbit_size()).sum();
    if total > ORBIT_ALPHABET_CAP as f64 {
        return Err(Error::TooLarge(format!("{total} orbit points")));
    }
    let mut labels = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for (k, o) in ec.orbits.iter().enumerate() {
        let classes = o.value_classes();
        let mut arrangement: Vec<usize> = classes
            .iter()
            .enumerate()
            .flat_map(|(ci, &(_, c))| std::iter::repeat_n(ci, c))
            .collect();
        let m = o.orbit_size();
        let mut j = 0usize;
        loop {
            cols.push(
                arrangement
                    .iter()
                    .map(|&ci| o.mass / m * classes[ci].0)
                    .collect(),
            );
            labels.push(format!("o{k}:{j}"));
            j += 1;
            if !next_permutation(&mut arrangement) {
                break;
            }
        }
    }
    if ec.null_mass > 0.0 {
        cols.push(vec![ec.null_mass; d]);
        labels.push("z".to_string());
    }
    let rows = (0..d)
        .map(|x| cols.iter().map(|c| c[x]).collect())
        .collect();
    Channel::new(d, labels, rows)
}

/// Mechanism description consumed by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismSpec {
    Grr { d: usize, lambda: f64 },
    HalfBlock { d: usize, lambda: f64 },
    AugGrr { d: usize, p: f64, lambda: f64 },
    Mixture(MixtureSpec),
    Subset { d: usize, s: usize, lambda: f64 },
    Interp { d: usize, m: usize, theta: f64, lambda: f64 },
    Orbit {
        d: usize,
        orbits: Vec<OrbitTemplate>,
        #[serde(default)]
        null_mass: f64,
    },
}

impl MechanismSpec {
    pub fn build(&self) -> Result<Channel> {
        match self {
            MechanismSpec::Grr { d, lambda } => grr(*d, *lambda),
            MechanismSpec::HalfBlock { d, lambda } => half_block(*d, *lambda),
            MechanismSpec::AugGrr { d, p, lambda } => augmented_grr(*d, *p, *lambda),
            MechanismSpec::Mixture(spec) => grr_mixture(spec),
            MechanismSpec::Subset { d, s, lambda } => subset_selection(*d, *s, *lambda),
            MechanismSpec::Interp { d, m, theta, lambda } => interpolated(*d, *m, *theta, *lambda),
            MechanismSpec::Orbit { d, orbits, null_mass } => {
                materialize_orbit_channel(&orbit_channel(*d, orbits.clone(), *null_mass)?)
            }
        }
    }

    pub fn d(&self) -> usize {
        match self {
            MechanismSpec::Grr { d, .. }
            | MechanismSpec::HalfBlock { d, .. }
            | MechanismSpec::AugGrr { d, .. }
            | MechanismSpec::Subset { d, .. }
            | MechanismSpec::Interp { d, .. }
            | MechanismSpec::Orbit { d, .. } => *d,
            MechanismSpec::Mixture(spec) => spec.d,
        }
    }

    /// Local privacy parameter `lambda = e^eps0` the family is built at, when it has one.
    pub fn lambda(&self) -> Option<f64> {
        match self {
            MechanismSpec::Grr { lambda, .. }
            | MechanismSpec::HalfBlock { lambda, .. }
            | MechanismSpec::AugGrr { lambda, .. }
            | MechanismSpec::Subset { lambda, .. }
            | MechanismSpec::Interp { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::universal_bound;
    use proptest::prelude::*;

    fn grr_budget(d: usize, l: f64) -> f64 {
        (l - 1.0).powi(2) * (l + 1.0) / (l * (l + d as f64 - 1.0))
    }

    #[test]
    fn grr_binary_saturates_universal_bound() {
        for lam in [1.5, 2.0, 4.0] {
            let ch = grr(2, lam).unwrap();
            let chi = ch.pairwise_chi2(0, 1).unwrap();
            assert!((chi - universal_bound(lam).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn grr10_lambda3_budget_is_four_ninths() {
        let ch = grr(10, 3.0).unwrap();
        assert!((ch.chi_star() - 4.0 / 9.0).abs() < 1e-14);
        assert!((ch.ldp_parameter() - 3f64.ln()).abs() < 1e-12);
        let tiny = grr(10, 1.0 + 1e-6).unwrap();
        assert!(tiny.chi_star() < 1e-11);
        assert!(matches!(grr(1, 2.0), Err(Error::BadParams(_))));
        assert!(matches!(grr(3, 1.0), Err(Error::BadLambda(_))));
    }

    #[test]
    fn half_block_laws() {
        let ch = half_block(4, 2.0).unwrap();
        let law = ch.lr_law(0, 2).unwrap();
        assert_eq!(law.len(), 2);
        assert!((law.atoms()[0].r - 0.5).abs() < 1e-14);
        assert!((law.atoms()[0].p - 2.0 / 3.0).abs() < 1e-14);
        assert!((law.atoms()[1].r - 2.0).abs() < 1e-14);
        assert!((law.atoms()[1].p - 1.0 / 3.0).abs() < 1e-14);
        for d in [2usize, 4, 6, 10, 20] {
            let lam = 3.0;
            let ch = half_block(d, lam).unwrap();
            assert!((ch.ldp_parameter() - lam.ln()).abs() < 1e-12);
            let chi = ch.pairwise_chi2(0, d / 2).unwrap();
            assert!((chi - (lam - 1.0).powi(2) / lam).abs() < 1e-13);
        }
        let ch6 = half_block(6, 2.0).unwrap();
        assert!(ch6.pairwise_chi2(0, 1).unwrap() < 0.5 - 1e-3);
        assert!((ch6.chi_star() - 0.5).abs() < 1e-14);
        assert!(matches!(half_block(5, 2.0), Err(Error::OddD(5))));
    }

    #[test]
    fn augmented_grr_instances() {
        let full = augmented_grr(5, 1.0, 2.0).unwrap();
        let plain = grr(5, 2.0).unwrap();
        assert_eq!(full.num_outputs(), 5);
        for x in 0..5 {
            for y in 0..5 {
                assert!((full.prob(x, y) - plain.prob(x, y)).abs() < 1e-15);
            }
        }
        let c3 = (3.0 - 2.0 * 2f64.sqrt()) / 2.0;
        let ch = augmented_grr(3, 0.05 / c3, 2f64.sqrt()).unwrap();
        assert!((ch.chi_star() - 0.05).abs() < 1e-14);
        let ch = augmented_grr(10, 0.225, 3.0).unwrap();
        assert!((ch.chi_star() - 0.1).abs() < 1e-14);
        assert!((ch.pairwise_chi2(3, 8).unwrap() - 0.1).abs() < 1e-14);
    }

    #[test]
    fn mixture_chi2_is_additive() {
        let spec = MixtureSpec {
            d: 4,
            blocks: vec![MixtureBlock { p: 0.5, lambda: 2.0 }, MixtureBlock { p: 0.5, lambda: 3.0 }],
            null_masses: vec![],
        };
        let ch = grr_mixture(&spec).unwrap();
        let want = 0.5 * grr_budget(4, 2.0) + 0.5 * grr_budget(4, 3.0);
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    assert!((ch.pairwise_chi2(a, b).unwrap() - want).abs() < 1e-14);
                }
            }
        }
        let bad = MixtureSpec { null_masses: vec![0.1], ..spec };
        assert!(matches!(grr_mixture(&bad), Err(Error::MassMismatch { .. })));
    }

    #[test]
    fn null_refinement_leaves_chi2_unchanged() {
        let (d, p, lam) = (6, 0.4, 2.5);
        let single = augmented_grr(d, p, lam).unwrap();
        let split = grr_mixture(&MixtureSpec {
            d,
            blocks: vec![MixtureBlock { p, lambda: lam }],
            null_masses: vec![(1.0 - p) / 3.0; 3],
        })
        .unwrap();
        assert!((single.chi_star() - split.chi_star()).abs() < 1e-15);
        assert_eq!(split.num_outputs(), d + 3);
    }

    #[test]
    fn subset_selection_budget() {
        let ch = subset_selection(5, 2, 2.0).unwrap();
        assert_eq!(ch.num_outputs(), 10);
        for a in 0..5 {
            for b in 0..5 {
                if a != b {
                    assert!((ch.pairwise_chi2(a, b).unwrap() - 9.0 / 28.0).abs() < 1e-14);
                }
            }
        }
        assert_eq!(ch.outputs()[0], "{0,1}");
        assert_eq!(parse_subset_label("{0,1}"), Some(vec![0, 1]));
        assert!(matches!(subset_selection(5, 5, 2.0), Err(Error::BadParams(_))));
        assert!(matches!(
            subset_selection(40, 20, 2.0),
            Err(Error::AlphabetTooLarge { .. })
        ));
    }

    #[test]
    fn subset_inclusion_probabilities() {
        let (d, s, lam) = (7usize, 3usize, 2.5);
        let ch = subset_selection(d, s, lam).unwrap();
        let sets: Vec<Vec<usize>> = ch.outputs().iter().map(|l| parse_subset_label(l).unwrap()).collect();
        let (df, sf) = (d as f64, s as f64);
        let ps = lam * sf / (df + sf * (lam - 1.0));
        let rs = sf * (lam * (sf - 1.0) + df - sf) / ((df - 1.0) * (df + sf * (lam - 1.0)));
        let x = 2;
        let incl = |j: usize| -> f64 {
            sets.iter()
                .enumerate()
                .filter(|(_, s)| s.contains(&j))
                .map(|(c, _)| ch.prob(x, c))
                .sum()
        };
        assert!((incl(x) - ps).abs() < 1e-14);
        assert!((incl(5) - rs).abs() < 1e-14);
    }

    #[test]
    fn subset_of_size_one_is_grr() {
        for (d, lam) in [(3usize, 2.0), (6, 1.7)] {
            let ss = subset_selection(d, 1, lam).unwrap();
            let g = grr(d, lam).unwrap();
            for a in 0..d {
                for b in 0..d {
                    if a != b {
                        assert_eq!(ss.lr_law(a, b).unwrap().len(), g.lr_law(a, b).unwrap().len());
                        for (u, v) in ss.lr_law(a, b).unwrap().atoms().iter().zip(g.lr_law(a, b).unwrap().atoms()) {
                            assert!((u.r - v.r).abs() < 1e-14 && (u.p - v.p).abs() < 1e-14);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn interpolated_family() {
        let ch = interpolated(8, 4, 0.3, 2.0).unwrap();
        assert!((ch.pairwise_chi2(0, 2).unwrap() - 0.15).abs() < 1e-14);
        assert!((ch.chi_star() - 0.15).abs() < 1e-14);
        let ch = interpolated(6, 6, 1.0, 2.0).unwrap();
        let hb = half_block(6, 2.0).unwrap();
        for x in 0..6 {
            for y in 0..6 {
                assert!((ch.prob(x, y) - hb.prob(x, y)).abs() < 1e-15);
            }
        }
        let flat = interpolated(8, 4, 0.0, 2.0).unwrap();
        assert_eq!(flat.chi_star(), 0.0);
        assert_eq!(flat.num_outputs(), 4);
        let half = interpolated(10, 4, 0.5, 2.0).unwrap();
        assert!((half.chi_star() - 0.25).abs() < 1e-14);
        assert!(interpolated(8, 3, 0.5, 2.0).is_err());
        assert!(interpolated(8, 8, 0.5, 2.0).is_err());
    }

    #[test]
    fn orbit_templates() {
        let d = 7;
        let star = OrbitTemplate::grr_star(d, 1.0).unwrap();
        let ec = orbit_channel(d, vec![star.clone()], 0.0).unwrap();
        let lam = 6f64.sqrt();
        assert!((ec.budget() - grr_budget(d, lam)).abs() < 1e-14);
        assert_eq!(star.orbit_size(), 7.0);

        let ones = OrbitTemplate::neutral(d, 1.0).unwrap();
        let ec = orbit_channel(d, vec![ones], 0.0).unwrap();
        assert!(ec.budget().abs() < 1e-14 && ec.signal().abs() < 1e-14);
        assert!(matches!(ec.risk_times_n(), Err(Error::ZeroSignal)));

        // two-level template against the closed form
        let (s, l) = (3usize, 2.2);
        let tl = OrbitTemplate::two_level(d, s, 1.0, l).unwrap();
        let (df, sf) = (d as f64, s as f64);
        let cs = sf * (df - sf) * (l - 1.0).powi(2) * (l + 1.0) / (l * (df - 1.0) * (df + sf * (l - 1.0)));
        assert!((tl.unit_budget() - cs).abs() < 1e-14);
        assert_eq!(tl.orbit_size(), 35.0);

        assert!(matches!(
            OrbitTemplate::new(1.0, vec![1.0, 1.0, 1.5]),
            Err(Error::TemplateSumError { .. })
        ));
        assert!(orbit_channel(3, vec![OrbitTemplate::neutral(3, 0.5).unwrap()], 0.2).is_err());
    }

    #[test]
    fn materialized_orbits() {
        let lam = 2.0;
        let ec = orbit_channel(4, vec![OrbitTemplate::grr(4, 1.0, lam).unwrap()], 0.0).unwrap();
        let ch = materialize_orbit_channel(&ec).unwrap();
        let g = grr(4, lam).unwrap();
        assert_eq!(ch.num_outputs(), 4);
        // columns agree up to relabeling: each column's argmax row identifies it
        for c in 0..4 {
            let top = (0..4).max_by(|&u, &v| ch.prob(u, c).total_cmp(&ch.prob(v, c))).unwrap();
            for x in 0..4 {
                assert!((ch.prob(x, c) - g.prob(x, top)).abs() < 1e-15);
            }
        }

        let op = OrbitTemplate::ordered_pair(4, 1.0, 1.6, 0.9).unwrap();
        let ec = orbit_channel(4, vec![op], 0.0).unwrap();
        assert_eq!(materialize_orbit_channel(&ec).unwrap().num_outputs(), 12);

        let tl = OrbitTemplate::two_level(4, 2, 0.7, lam).unwrap();
        let ec = orbit_channel(4, vec![tl], 0.3).unwrap();
        let ch = materialize_orbit_channel(&ec).unwrap();
        assert_eq!(ch.num_outputs(), 7);
        assert!((ch.chi_star() - ec.budget()).abs() < 1e-14);

        let tl = OrbitTemplate::two_level(4, 2, 1.0, lam).unwrap();
        let ec = orbit_channel(4, vec![tl], 0.0).unwrap();
        let ch = materialize_orbit_channel(&ec).unwrap();
        let ss = subset_selection(4, 2, lam).unwrap();
        let mut a: Vec<Vec<u64>> = (0..6).map(|c| (0..4).map(|x| (ch.prob(x, c) * 1e12).round() as u64).collect()).collect();
        let mut b: Vec<Vec<u64>> = (0..6).map(|c| (0..4).map(|x| (ss.prob(x, c) * 1e12).round() as u64).collect()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);

        let big = orbit_channel(7, vec![OrbitTemplate::neutral(7, 1.0).unwrap()], 0.0).unwrap();
        assert!(matches!(materialize_orbit_channel(&big), Err(Error::TooLarge(_))));
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec: MechanismSpec = serde_json::from_str(r#"{"kind":"aug_grr","d":10,"p":0.225,"lambda":3}"#).unwrap();
        assert_eq!(spec, MechanismSpec::AugGrr { d: 10, p: 0.225, lambda: 3.0 });
        let ch = spec.build().unwrap();
        assert!((ch.chi_star() - 0.1).abs() < 1e-14);
        let mix: MechanismSpec = serde_json::from_str(
            r#"{"kind":"mixture","d":3,"blocks":[{"p":0.5,"lambda":2}],"null_masses":[0.5]}"#,
        )
        .unwrap();
        assert_eq!(mix.build().unwrap().num_outputs(), 4);
        let orb: MechanismSpec = serde_json::from_str(
            r#"{"kind":"orbit","d":3,"orbits":[{"mass":1.0,"template":[1.5,0.75,0.75]}]}"#,
        )
        .unwrap();
        assert_eq!(orb.build().unwrap().num_outputs(), 3);
    }

    fn sorted_chi2(ch: &Channel) -> Vec<f64> {
        let mut v: Vec<f64> = ch.chi2_matrix().into_iter().flatten().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    proptest! {
        #[test]
        fn constructors_have_ldp_log_lambda(d in 2usize..8, lam in 1.05f64..6.0, s in 1usize..7) {
            prop_assert!((grr(d, lam).unwrap().ldp_parameter() - lam.ln()).abs() < 1e-12);
            if d % 2 == 0 {
                prop_assert!((half_block(d, lam).unwrap().ldp_parameter() - lam.ln()).abs() < 1e-12);
            }
            if s < d {
                prop_assert!((subset_selection(d, s, lam).unwrap().ldp_parameter() - lam.ln()).abs() < 1e-12);
            }
        }

        #[test]
        fn relabeling_preserves_chi2_multiset(d in 3usize..7, lam in 1.1f64..5.0, seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut pi: Vec<usize> = (0..d).collect();
            pi.shuffle(&mut rng);
            for ch in [grr(d, lam).unwrap(), subset_selection(d, 2, lam).unwrap()] {
                let permuted = Channel::new(
                    d,
                    ch.outputs().to_vec(),
                    pi.iter().map(|&x| ch.row(x).to_vec()).collect(),
                ).unwrap();
                let (u, v) = (sorted_chi2(&ch), sorted_chi2(&permuted));
                for (a, b) in u.iter().zip(&v) {
                    prop_assert!((a - b).abs() < 1e-14);
                }
                // equivariant families have one common off-diagonal value
                let off: Vec<f64> = u.into_iter().filter(|&x| x > 0.0).collect();
                prop_assert!(off.iter().all(|&x| (x - off[0]).abs() < 1e-13));
            }
        }

        #[test]
        fn materialized_budget_matches_closed_form(d in 3usize..=5, raw in proptest::collection::vec(0.2f64..3.0, 5), mass in 0.1f64..1.0) {
            let raw = &raw[..d];
            let s: f64 = raw.iter().sum();
            let t: Vec<f64> = raw.iter().map(|v| v * d as f64 / s).collect();
            let ec = orbit_channel(d, vec![OrbitTemplate::new(mass, t).unwrap()], 1.0 - mass).unwrap();
            let ch = materialize_orbit_channel(&ec).unwrap();
            for a in 0..d {
                for b in 0..d {
                    if a != b {
                        prop_assert!((ch.pairwise_chi2(a, b).unwrap() - ec.budget()).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
