//! Mechanism selection, file loading and small argument parsers.

use std::fmt;
use std::io::Read;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use shuffle_priv::channel::ChannelParseError;
use shuffle_priv::{Channel, EstimatorSpec, LrLaw, MechanismSpec, MixtureBlock};

/// Malformed input with the position reported by the JSON reader.
#[derive(Debug)]
pub struct ParseError {
    pub origin: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error in {} at line {}, column {}: {}", self.origin, self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

impl ParseError {
    fn from_json(origin: &str, e: &serde_json::Error) -> Self {
        ParseError { origin: origin.to_string(), line: e.line(), column: e.column(), message: e.to_string() }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(origin: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| ParseError::from_json(origin, &e).into())
}

fn lift_channel_error(origin: &str, e: ChannelParseError) -> anyhow::Error {
    match e {
        ChannelParseError::Json(j) => ParseError::from_json(origin, &j).into(),
        ChannelParseError::Invalid(inner) => anyhow!(inner).context(format!("invalid input in {origin}")),
    }
}

/// Reads a file, or standard input for `-`.
pub fn read_source(path: &str) -> Result<String> {
    if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).context("reading standard input")?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {path}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum MechKind {
    Grr,
    HalfBlock,
    AugGrr,
    Subset,
    Interp,
}

#[derive(Debug, Clone, Args)]
pub struct MechArgs {
    /// Built-in mechanism family.
    #[arg(long, value_enum)]
    pub mech: Option<MechKind>,
    /// Input alphabet size.
    #[arg(long)]
    pub d: Option<usize>,
    /// Likelihood-ratio parameter of the mechanism.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Mass of the randomizing block (aug_grr).
    #[arg(long)]
    pub p: Option<f64>,
    /// Subset size (subset).
    #[arg(long)]
    pub s: Option<usize>,
    /// Period of the interpolated family (interp).
    #[arg(long)]
    pub m: Option<usize>,
    /// Interpolation weight (interp).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Mechanism spec JSON file (`-` for stdin), e.g. `{"kind":"grr","d":5,"lambda":2}`.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["mech", "channel"])]
    pub spec: Option<String>,
    /// Channel JSON file (`-` for stdin) with `d`, `outputs` and `rows`.
    #[arg(long, value_name = "PATH", conflicts_with = "mech")]
    pub channel: Option<String>,
}

/// A loaded channel and, when known, the mechanism that produced it.
pub struct Loaded {
    pub channel: Channel,
    pub spec: Option<MechanismSpec>,
    pub label: String,
}

fn need<T: Copy>(v: Option<T>, flag: &str, mech: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("--mech {mech} requires --{flag}"))
}

impl MechArgs {
    pub fn spec_from_flags(&self) -> Result<Option<MechanismSpec>> {
        let Some(kind) = self.mech else { return Ok(None) };
        let name = kind.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
        let d = need(self.d, "d", &name)?;
        let lambda = need(self.lambda, "lambda", &name)?;
        Ok(Some(match kind {
            MechKind::Grr => MechanismSpec::Grr { d, lambda },
            MechKind::HalfBlock => MechanismSpec::HalfBlock { d, lambda },
            MechKind::AugGrr => MechanismSpec::AugGrr { d, p: need(self.p, "p", &name)?, lambda },
            MechKind::Subset => MechanismSpec::Subset { d, s: need(self.s, "s", &name)?, lambda },
            MechKind::Interp => {
                MechanismSpec::Interp { d, m: need(self.m, "m", &name)?, theta: need(self.theta, "theta", &name)?, lambda }
            }
        }))
    }

    pub fn load(&self) -> Result<Loaded> {
        if let Some(path) = &self.spec {
            let spec: MechanismSpec = parse_json(path, &read_source(path)?)?;
            let channel = spec.build().context("building the mechanism")?;
            return Ok(Loaded { label: describe(&spec), channel, spec: Some(spec) });
        }
        if let Some(path) = &self.channel {
            let text = read_source(path)?;
            let channel = Channel::from_json(&text).map_err(|e| lift_channel_error(path, e))?;
            return Ok(Loaded { label: format!("channel from {path}"), channel, spec: None });
        }
        match self.spec_from_flags()? {
            Some(spec) => {
                let channel = spec.build().context("building the mechanism")?;
                Ok(Loaded { label: describe(&spec), channel, spec: Some(spec) })
            }
            None => bail!("choose a mechanism with --mech, --spec or --channel"),
        }
    }
}

pub fn describe(spec: &MechanismSpec) -> String {
    match spec {
        MechanismSpec::Grr { d, lambda } => format!("grr(d={d}, lambda={lambda})"),
        MechanismSpec::HalfBlock { d, lambda } => format!("half_block(d={d}, lambda={lambda})"),
        MechanismSpec::AugGrr { d, p, lambda } => format!("aug_grr(d={d}, p={p}, lambda={lambda})"),
        MechanismSpec::Mixture(m) => format!("mixture(d={}, blocks={})", m.d, m.blocks.len()),
        MechanismSpec::Subset { d, s, lambda } => format!("subset(d={d}, s={s}, lambda={lambda})"),
        MechanismSpec::Interp { d, m, theta, lambda } => format!("interp(d={d}, m={m}, theta={theta}, lambda={lambda})"),
        MechanismSpec::Orbit { d, orbits, .. } => format!("orbit(d={d}, orbits={})", orbits.len()),
    }
}

/// Reads an LR law given inline or as `@path`.
pub fn load_law(arg: &str) -> Result<LrLaw> {
    let (origin, text) = match arg.strip_prefix('@') {
        Some(path) => (path.to_string(), read_source(path)?),
        None => ("--law".to_string(), arg.to_string()),
    };
    LrLaw::from_json(&text).map_err(|e| lift_channel_error(&origin, e))
}

/// The neighbouring pair to analyse: explicit flags, else the opposite pair of
/// a half-block channel, else the pair attaining the worst chi-square.
pub fn resolve_pair(loaded: &Loaded, a: Option<usize>, b: Option<usize>) -> Result<(usize, usize)> {
    let d = loaded.channel.d();
    let pair = match (a, b) {
        (Some(a), Some(b)) => (a, b),
        (None, None) => match loaded.spec {
            Some(MechanismSpec::HalfBlock { d, .. }) => (0, d / 2),
            _ => {
                let (a, b, _) = loaded.channel.worst_pair();
                (a, b)
            }
        },
        _ => bail!("--a and --b must be given together"),
    };
    if pair.0 >= d || pair.1 >= d || pair.0 == pair.1 {
        bail!("invalid input pair ({}, {}) for d = {d}", pair.0, pair.1);
    }
    Ok(pair)
}

/// Parses `lo:hi:k` into `k` evenly spaced values.
pub fn parse_linear_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        bail!("expected lo:hi:k, got {s:?}");
    }
    let lo: f64 = parts[0].trim().parse().with_context(|| format!("bad lower end in {s:?}"))?;
    let hi: f64 = parts[1].trim().parse().with_context(|| format!("bad upper end in {s:?}"))?;
    let k: usize = parts[2].trim().parse().with_context(|| format!("bad count in {s:?}"))?;
    if k == 0 || !(lo.is_finite() && hi.is_finite()) || hi < lo || (k == 1 && hi != lo) {
        bail!("grid {s:?} must have k >= 1 points and lo <= hi (k = 1 needs lo = hi)");
    }
    if k == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..k).map(|i| if i + 1 == k { hi } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 }).collect())
}

/// Parses a comma-separated list of per-input user counts.
pub fn parse_counts(s: &str) -> Result<Vec<u64>> {
    s.split(',').map(|t| t.trim().parse::<u64>().with_context(|| format!("bad count {t:?}"))).collect()
}

/// Default unbiased estimator for each mechanism family.
pub fn estimator_for(loaded: &Loaded) -> Result<EstimatorSpec> {
    Ok(match &loaded.spec {
        Some(MechanismSpec::Grr { lambda, .. }) => {
            EstimatorSpec::MixtureProjected { blocks: vec![MixtureBlock { p: 1.0, lambda: *lambda }] }
        }
        Some(MechanismSpec::AugGrr { p, lambda, .. }) => {
            EstimatorSpec::MixtureProjected { blocks: vec![MixtureBlock { p: *p, lambda: *lambda }] }
        }
        Some(MechanismSpec::Mixture(m)) => EstimatorSpec::MixtureProjected { blocks: m.blocks.clone() },
        Some(MechanismSpec::Subset { s, lambda, .. }) => EstimatorSpec::SsInverse { s: *s, lambda: *lambda },
        Some(MechanismSpec::Orbit { .. }) | None => EstimatorSpec::OrbitProjected,
        Some(other) => bail!("no unbiased estimator is provided for {}", describe(other)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_grid_hits_both_ends() {
        let g = parse_linear_grid("0.01:0.444:50").unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[49], 0.444);
        assert!(parse_linear_grid("1:0:3").is_err());
        assert!(parse_linear_grid("0:1").is_err());
    }

    #[test]
    fn malformed_spec_reports_line() {
        let err = parse_json::<MechanismSpec>("spec.json", "{\n  \"kind\": \"grr\",\n  \"d\": ,\n}").unwrap_err();
        let pe = err.downcast_ref::<ParseError>().expect("parse error");
        assert_eq!(pe.line, 3);
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn inline_law() {
        let law = load_law(r#"{"atoms":[{"r":1,"p":1}]}"#).unwrap();
        assert_eq!(law.len(), 1);
        assert!(load_law("{").unwrap_err().downcast_ref::<ParseError>().is_some());
    }
}
