//! Seeded Monte Carlo for the shuffle model: histogram sampling, the
//! projected inverse estimators, and empirical checks of risks, score
//! normality and privacy curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, Histogram};
use crate::error::{Error, Result};
use crate::estimation::{assouad_bound, cube_vertex, AssouadBound};
use crate::frontier::{eta, risk_times_n_from_signal, ss_inclusion, ss_risk_times_n};
use crate::mechanisms::{parse_subset_label, MixtureBlock};
use crate::numeric::{csum, normal_cdf, CompensatedSum};
use crate::privacy::{CurvePoint, PrivacyCurve, Provenance};

/// Replications per work unit. Batches are merged in index order, so results
/// do not depend on the number of worker threads.
pub const BATCH: u64 = 512;
/// Largest `d` for the Assouad decoder simulation.
pub const DECODER_MAX_D: usize = 10;

/// Generator for replication `rep` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Exact input counts of a fixed-composition population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub counts: Vec<u64>,
}

impl Composition {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::BadParams("composition needs d >= 2".into()));
        }
        if counts.iter().sum::<u64>() == 0 {
            return Err(Error::BadParams("composition has no users".into()));
        }
        Ok(Self { counts })
    }

    /// `floor(n/d)` per input, remainder to the lowest indices.
    pub fn uniform(d: usize, n: u64) -> Result<Self> {
        let base = n / d as u64;
        let rem = (n % d as u64) as usize;
        Self::new((0..d).map(|x| base + u64::from(x < rem)).collect())
    }

    /// All users on input `a`, except `switched` of them on `b`.
    pub fn neighbor(d: usize, n: u64, a: usize, b: usize, switched: u64) -> Result<Self> {
        let mut c = vec![0; d];
        c[a] = n - switched;
        c[b] += switched;
        Self::new(c)
    }

    pub fn d(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn theta(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Splits `count` draws over `probs` by sequential binomials and adds them to `out`.
fn multinomial_into<R: Rng>(rng: &mut R, count: u64, probs: &[f64], out: &mut [u64]) {
    let mut left = count;
    let mut mass = 1.0f64;
    let last = probs.len() - 1;
    for (y, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if y == last || p >= mass {
            out[y] += left;
            break;
        }
        let k = if p <= 0.0 {
            0
        } else {
            Binomial::new(left, (p / mass).clamp(0.0, 1.0)).expect("valid binomial").sample(rng)
        };
        out[y] += k;
        left -= k;
        mass -= p;
    }
}

pub fn sample_histogram_with<R: Rng>(ch: &Channel, comp: &Composition, rng: &mut R) -> Result<Histogram> {
    if comp.d() != ch.d() {
        return Err(Error::DimensionMismatch(format!(
            "composition over {} inputs, channel over {}",
            comp.d(),
            ch.d()
        )));
    }
    let mut counts = vec![0u64; ch.num_outputs()];
    for (x, &c) in comp.counts.iter().enumerate() {
        if c > 0 {
            multinomial_into(rng, c, ch.row(x), &mut counts);
        }
    }
    Ok(Histogram::new(counts))
}

/// One histogram drawn from the stream `(seed, 0)`.
pub fn sample_histogram(ch: &Channel, comp: &Composition, seed: u64) -> Result<Histogram> {
    sample_histogram_with(ch, comp, &mut stream_rng(seed, 0))
}

/// Multinomial input counts for i.i.d. sampling from `theta`.
pub fn sample_composition<R: Rng>(theta: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut c = vec![0u64; theta.len()];
    multinomial_into(rng, n, theta, &mut c);
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    /// GRR mixture with the listed blocks; plain GRR is a single block with `p = 1`.
    MixtureProjected { blocks: Vec<MixtureBlock> },
    /// Permutation-equivariant channel; the orbit templates are read off the columns.
    OrbitProjected,
    SsInverse { s: usize, lambda: f64 },
}

/// Affine estimator `theta = offset + (1/n) sum_y N_y coef[y]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub d: usize,
    pub offset: Vec<f64>,
    pub coef: Vec<Vec<f64>>,
    /// `n` times the exact fixed-composition risk.
    pub risk_times_n: f64,
}

fn mismatch(msg: impl Into<String>) -> Error {
    Error::EstimatorMismatch(msg.into())
}

fn parse_mixture_label(label: &str) -> Option<(usize, Option<usize>)> {
    if let Some(rest) = label.strip_prefix('b') {
        let (i, y) = rest.split_once(':')?;
        return Some((i.parse().ok()?, Some(y.parse().ok()?)));
    }
    if label.starts_with('z') {
        return Some((0, None));
    }
    Some((0, Some(label.parse().ok()?)))
}

impl Estimator {
    pub fn new(spec: &EstimatorSpec, ch: &Channel) -> Result<Self> {
        match spec {
            EstimatorSpec::MixtureProjected { blocks } => Self::mixture(blocks, ch),
            EstimatorSpec::OrbitProjected => Self::orbit(ch),
            EstimatorSpec::SsInverse { s, lambda } => Self::subset(*s, *lambda, ch),
        }
    }

    fn mixture(blocks: &[MixtureBlock], ch: &Channel) -> Result<Self> {
        let d = ch.d();
        let df = d as f64;
        let signal = csum(&blocks.iter().map(|b| b.p * eta(d, b.lambda).powi(2)).collect::<Vec<_>>());
        if !(signal > 0.0) {
            return Err(Error::ZeroSignal);
        }
        let mut coef = Vec::with_capacity(ch.num_outputs());
        for (col, label) in ch.outputs().iter().enumerate() {
            let (i, sym) = parse_mixture_label(label).ok_or_else(|| mismatch(format!("output label {label:?}")))?;
            let Some(k) = sym else {
                coef.push(vec![0.0; d]);
                continue;
            };
            let b = blocks.get(i).ok_or_else(|| mismatch(format!("no block {i}")))?;
            if k >= d {
                return Err(mismatch(format!("symbol {k} out of range")));
            }
            let z = b.lambda + df - 1.0;
            for x in 0..d {
                let want = b.p * if x == k { b.lambda } else { 1.0 } / z;
                if (ch.prob(x, col) - want).abs() > 1e-9 {
                    return Err(mismatch(format!("entry ({x}, {label}) does not match block {i}")));
                }
            }
            let e = eta(d, b.lambda) / signal;
            coef.push((0..d).map(|x| e * (f64::from(u8::from(x == k)) - 1.0 / df)).collect());
        }
        Ok(Self { d, offset: vec![1.0 / df; d], coef, risk_times_n: risk_times_n_from_signal(d, signal)? })
    }

    fn orbit(ch: &Channel) -> Result<Self> {
        let d = ch.d();
        let df = d as f64;
        let m = ch.chi2_matrix();
        let reference = m[0][1];
        for (a, row) in m.iter().enumerate() {
            for (b, &chi) in row.iter().enumerate() {
                if a != b && (chi - reference).abs() > 1e-9 * reference.max(1e-300) {
                    return Err(mismatch("channel is not permutation-equivariant"));
                }
            }
        }
        let mut templates = Vec::with_capacity(ch.num_outputs());
        let mut parts = Vec::with_capacity(ch.num_outputs());
        for y in 0..ch.num_outputs() {
            let col: Vec<f64> = (0..d).map(|x| ch.prob(x, y)).collect();
            let colsum = csum(&col);
            let t: Vec<f64> = col.iter().map(|w| df * w / colsum - 1.0).collect();
            let b: f64 = csum(&t.iter().map(|v| (v + 1.0).powi(2)).collect::<Vec<_>>());
            parts.push(colsum / df * (b - df) / (df * (df - 1.0)));
            templates.push(t);
        }
        let signal = csum(&parts);
        if !(signal > 0.0) {
            return Err(Error::ZeroSignal);
        }
        let coef = templates.into_iter().map(|t| t.into_iter().map(|v| v / (df * signal)).collect()).collect();
        Ok(Self { d, offset: vec![1.0 / df; d], coef, risk_times_n: risk_times_n_from_signal(d, signal)? })
    }

    fn subset(s: usize, lambda: f64, ch: &Channel) -> Result<Self> {
        let d = ch.d();
        let (ps, rs) = ss_inclusion(d, s, lambda);
        if !(ps - rs > 0.0) {
            return Err(Error::ZeroSignal);
        }
        let risk_times_n = ss_risk_times_n(d, s, lambda)?;
        let scale = 1.0 / (ps - rs);
        let mut coef = Vec::with_capacity(ch.num_outputs());
        for label in ch.outputs() {
            let set = parse_subset_label(label).ok_or_else(|| mismatch(format!("output label {label:?}")))?;
            if set.len() != s || set.iter().any(|&j| j >= d) {
                return Err(mismatch(format!("subset {label} does not have size {s}")));
            }
            let mut g = vec![0.0; d];
            for j in set {
                g[j] = scale;
            }
            coef.push(g);
        }
        Ok(Self { d, offset: vec![-rs * scale; d], coef, risk_times_n })
    }

    pub fn estimate(&self, hist: &Histogram) -> Result<Vec<f64>> {
        if hist.counts.len() != self.coef.len() {
            return Err(Error::LengthMismatch { expected: self.coef.len(), got: hist.counts.len() });
        }
        let n = hist.n as f64;
        let mut out = self.offset.clone();
        for (g, &c) in self.coef.iter().zip(&hist.counts) {
            if c > 0 {
                let w = c as f64 / n;
                for (o, v) in out.iter_mut().zip(g) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }
}

/// Builds the estimator for `spec` on `ch` and applies it.
pub fn estimate(spec: &EstimatorSpec, ch: &Channel, hist: &Histogram) -> Result<Vec<f64>> {
    Estimator::new(spec, ch)?.estimate(hist)
}

/// Count, sum and sum of squares with compensated accumulation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    sum: CompensatedSum,
    sumsq: CompensatedSum,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        self.sumsq.add(x * x);
    }

    pub fn merge(&mut self, o: &Moments) {
        self.count += o.count;
        self.sum.merge(&o.sum);
        self.sumsq.merge(&o.sumsq);
    }

    pub fn mean(&self) -> f64 {
        self.sum.value() / self.count as f64
    }

    pub fn variance(&self) -> f64 {
        let n = self.count as f64;
        let m = self.mean();
        ((self.sumsq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Runs `work` on fixed replication batches in parallel; results come back in batch order.
fn batched<T, F>(reps: u64, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(std::ops::Range<u64>) -> T + Sync,
{
    let batches = reps.div_ceil(BATCH);
    (0..batches)
        .into_par_iter()
        .map(|b| work(b * BATCH..((b + 1) * BATCH).min(reps)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingMode {
    /// Exactly `counts[x]` users hold input `x` in every replication.
    FixedComposition(Composition),
    /// Each of `n` users draws an input from `theta` independently.
    Iid { theta: Vec<f64>, n: u64 },
}

impl SamplingMode {
    fn theta(&self) -> Vec<f64> {
        match self {
            SamplingMode::FixedComposition(c) => c.theta(),
            SamplingMode::Iid { theta, .. } => theta.clone(),
        }
    }

    fn n(&self) -> u64 {
        match self {
            SamplingMode::FixedComposition(c) => c.n(),
            SamplingMode::Iid { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub mean_risk: f64,
    pub std_error: f64,
    pub replications: u64,
    pub seed: u64,
    /// Exact fixed-composition risk, when the model has one.
    pub closed_form: Option<f64>,
    pub theta: Vec<f64>,
    pub estimate_mean: Vec<f64>,
    pub estimate_se: Vec<f64>,
    /// Largest `|1^T theta_hat - 1|` seen across replications.
    pub max_affine_error: f64,
    pub wall_notes: String,
}

/// The simulation report written by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub mean_risk: f64,
    pub std_error: f64,
    pub reps: u64,
    pub seed: u64,
    pub closed_form: f64,
    pub z_score: f64,
}

impl SimResult {
    pub fn z_score(&self) -> Option<f64> {
        self.closed_form.map(|c| (self.mean_risk - c) / self.std_error)
    }

    pub fn report(&self) -> SimReport {
        let closed_form = self.closed_form.unwrap_or(f64::NAN);
        SimReport {
            mean_risk: self.mean_risk,
            std_error: self.std_error,
            reps: self.replications,
            seed: self.seed,
            closed_form,
            z_score: self.z_score().unwrap_or(f64::NAN),
        }
    }
}

struct RiskBatch {
    loss: Moments,
    coords: Vec<Moments>,
    affine: f64,
}

/// Monte Carlo squared-error risk of `est` on `ch`.
pub fn empirical_risk(ch: &Channel, est: &Estimator, mode: &SamplingMode, reps: u64, seed: u64) -> Result<SimResult> {
    if reps < 100 {
        return Err(Error::BadParams(format!("need at least 100 replications, got {reps}")));
    }
    if est.d != ch.d() || est.coef.len() != ch.num_outputs() {
        return Err(mismatch("estimator was built for a different channel"));
    }
    let d = ch.d();
    let n = mode.n();
    let theta = mode.theta();
    match mode {
        SamplingMode::FixedComposition(c) if c.d() != d => {
            return Err(Error::DimensionMismatch(format!("composition over {} inputs, channel over {d}", c.d())))
        }
        SamplingMode::Iid { theta, n } => {
            if theta.len() != d {
                return Err(Error::DimensionMismatch(format!("theta of length {}", theta.len())));
            }
            if *n == 0 {
                return Err(Error::BadParams("n must be at least 1".into()));
            }
        }
        _ => {}
    }
    let parts: Vec<Result<RiskBatch>> = batched(reps, |range| {
        let mut out = RiskBatch { loss: Moments::default(), coords: vec![Moments::default(); d], affine: 0.0 };
        for rep in range {
            let mut rng = stream_rng(seed, rep);
            let hist = match mode {
                SamplingMode::FixedComposition(c) => sample_histogram_with(ch, c, &mut rng)?,
                SamplingMode::Iid { theta, n } => {
                    let c = Composition { counts: sample_composition(theta, *n, &mut rng) };
                    sample_histogram_with(ch, &c, &mut rng)?
                }
            };
            let t = est.estimate(&hist)?;
            let loss: f64 = t.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum();
            out.loss.push(loss);
            for (m, v) in out.coords.iter_mut().zip(&t) {
                m.push(*v);
            }
            out.affine = out.affine.max((csum(&t) - 1.0).abs());
        }
        Ok(out)
    });
    let mut loss = Moments::default();
    let mut coords = vec![Moments::default(); d];
    let mut affine = 0.0f64;
    for p in parts {
        let p = p?;
        loss.merge(&p.loss);
        for (a, b) in coords.iter_mut().zip(&p.coords) {
            a.merge(b);
        }
        affine = affine.max(p.affine);
    }
    let closed_form = match mode {
        SamplingMode::FixedComposition(_) => Some(est.risk_times_n / n as f64),
        SamplingMode::Iid { .. } => None,
    };
    Ok(SimResult {
        mean_risk: loss.mean(),
        std_error: loss.std_error(),
        replications: reps,
        seed,
        closed_form,
        theta,
        estimate_mean: coords.iter().map(Moments::mean).collect(),
        estimate_se: coords.iter().map(Moments::std_error).collect(),
        max_affine_error: affine,
        wall_notes: format!("{} batches of up to {BATCH} replications", reps.div_ceil(BATCH)),
    })
}

/// Kolmogorov distance between the empirical law of `samples` and `N(0, 1)`.
pub fn ks_distance_normal(samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut dist = 0.0f64;
    let mut i = 0;
    while i < samples.len() {
        let v = samples[i];
        let mut j = i;
        while j < samples.len() && samples[j] == v {
            j += 1;
        }
        let phi = normal_cdf(v);
        dist = dist.max((i as f64 / n - phi).abs()).max((j as f64 / n - phi).abs());
        i = j;
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreResult {
    pub information: f64,
    pub ks_null: f64,
    /// Distance of the recentred alternative score `S - sqrt(I/n)`.
    pub ks_alt: f64,
    pub alt_mean: f64,
    pub alt_mean_se: f64,
    /// `sqrt(I / n)`.
    pub expected_shift: f64,
    pub reps: u64,
}

fn lr_weights(ch: &Channel, a: usize, b: usize) -> Result<Vec<f64>> {
    ch.pairwise_chi2(a, b)?;
    Ok(ch.row(b).iter().zip(ch.row(a)).map(|(q, p)| q / p).collect())
}

fn lr_of(weights: &[f64], hist: &Histogram) -> f64 {
    let mut s = CompensatedSum::new();
    for (&c, w) in hist.counts.iter().zip(weights) {
        if c > 0 {
            s.add(c as f64 * w);
        }
    }
    s.value() / hist.n as f64
}

/// Simulated likelihood ratios under the all-`a` population (`alt = false`)
/// or with one user switched to `b` (`alt = true`).
fn sample_lrs(ch: &Channel, a: usize, b: usize, n: u64, reps: u64, seed: u64, alt: bool) -> Result<Vec<f64>> {
    let w = lr_weights(ch, a, b)?;
    let comp = Composition::neighbor(ch.d(), n, a, b, u64::from(alt))?;
    let parts: Vec<Result<Vec<f64>>> = batched(reps, |range| {
        range
            .map(|rep| Ok(lr_of(&w, &sample_histogram_with(ch, &comp, &mut stream_rng(seed, rep))?)))
            .collect()
    });
    let mut out = Vec::with_capacity(reps as usize);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Empirical normality of the standardized likelihood-ratio score.
pub fn empirical_score(ch: &Channel, a: usize, b: usize, n: u64, reps: u64, seed: u64) -> Result<ScoreResult> {
    let info = ch.pairwise_chi2(a, b)?;
    if !(info > 0.0) {
        return Err(Error::ZeroInformation);
    }
    if reps < 2 || n == 0 {
        return Err(Error::BadParams("need n >= 1 and at least 2 replications".into()));
    }
    let scale = (info / n as f64).sqrt();
    let mut null: Vec<f64> = sample_lrs(ch, a, b, n, reps, seed, false)?
        .into_iter()
        .map(|l| (l - 1.0) / scale)
        .collect();
    // the alternative uses streams disjoint from the null run
    let alt_seed = seed ^ 0x9E37_79B9_7F4A_7C15;
    let alt: Vec<f64> = sample_lrs(ch, a, b, n, reps, alt_seed, true)?
        .into_iter()
        .map(|l| (l - 1.0) / scale)
        .collect();
    let mut m = Moments::default();
    for &s in &alt {
        m.push(s);
    }
    let mut shifted: Vec<f64> = alt.iter().map(|s| s - scale).collect();
    Ok(ScoreResult {
        information: info,
        ks_null: ks_distance_normal(&mut null),
        ks_alt: ks_distance_normal(&mut shifted),
        alt_mean: m.mean(),
        alt_mean_se: m.std_error(),
        expected_shift: scale,
        reps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCurve {
    pub curve: PrivacyCurve,
    pub se_fwd: Vec<f64>,
    pub se_rev: Vec<f64>,
}

/// Monte Carlo privacy curve: the forward curve from null-sampled likelihood
/// ratios, the reverse curve from alternative-sampled ones.
pub fn empirical_privacy_curve(
    ch: &Channel,
    a: usize,
    b: usize,
    n: u64,
    reps: u64,
    eps_grid: &[f64],
    seed: u64,
) -> Result<McCurve> {
    if reps < 2 || n == 0 {
        return Err(Error::BadParams("need n >= 1 and at least 2 replications".into()));
    }
    if let Some(&e) = eps_grid.iter().find(|e| !(**e >= 0.0)) {
        return Err(Error::BadEps(e));
    }
    let null = sample_lrs(ch, a, b, n, reps, seed, false)?;
    let alt = sample_lrs(ch, a, b, n, reps, seed ^ 0x9E37_79B9_7F4A_7C15, true)?;
    let mut points = Vec::with_capacity(eps_grid.len());
    let (mut se_fwd, mut se_rev) = (Vec::new(), Vec::new());
    for &eps in eps_grid {
        let t = eps.exp();
        let (mut f, mut r) = (Moments::default(), Moments::default());
        for &l in &null {
            f.push((l - t).max(0.0));
        }
        for &l in &alt {
            r.push((1.0 / l - t).max(0.0));
        }
        points.push(CurvePoint { eps, delta_fwd: f.mean(), delta_rev: r.mean() });
        se_fwd.push(f.std_error());
        se_rev.push(r.std_error());
    }
    Ok(McCurve { curve: PrivacyCurve { points, n, provenance: Provenance::MonteCarlo }, se_fwd, se_rev })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficiencyReport {
    pub max_abs_diff: f64,
    pub equal: bool,
    pub quotient: PrivacyCurve,
    pub full: PrivacyCurve,
}

/// Compares the quotient-enumeration curve with full-histogram enumeration.
pub fn sufficiency_oracle(ch: &Channel, a: usize, b: usize, n: u64, eps_grid: &[f64]) -> Result<SufficiencyReport> {
    if n == 0 || n > 6 {
        return Err(Error::BadParams(format!("the oracle runs for 1 <= n <= 6, got {n}")));
    }
    let full = crate::privacy::privacy_curve_full_histogram(ch, a, b, n, eps_grid)?;
    let quotient = crate::privacy::privacy_curve_exact(&ch.lr_law(a, b)?, n, eps_grid)?;
    let max_abs_diff = quotient.max_abs_diff(&full);
    Ok(SufficiencyReport { max_abs_diff, equal: max_abs_diff <= 1e-12, quotient, full })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecoderResult {
    pub worst_vertex: usize,
    pub worst_risk: f64,
    pub worst_se: f64,
    /// Mean fraction of cube coordinates the threshold decoder gets wrong.
    pub decoder_error: f64,
    pub bound: AssouadBound,
    pub delta: f64,
    pub reps_per_vertex: u64,
}

/// Worst-vertex risk of `est` over the Assouad cube, under i.i.d. sampling.
pub fn assouad_decoder_sim(
    ch: &Channel,
    est: &Estimator,
    n: u64,
    delta: f64,
    reps: u64,
    seed: u64,
) -> Result<DecoderResult> {
    let d = ch.d();
    if d > DECODER_MAX_D {
        return Err(Error::TooLarge(format!("d = {d} exceeds {DECODER_MAX_D}")));
    }
    let bound = assouad_bound(ch, n, Some(delta))?;
    let vertices = 1usize << (d - 1);
    let mut worst = (0usize, f64::NEG_INFINITY, 0.0);
    let mut errors = Moments::default();
    for v in 0..vertices {
        let theta = cube_vertex(d, delta, v);
        let mode = SamplingMode::Iid { theta: theta.clone(), n };
        let vseed = seed.wrapping_add((v as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
        let r = empirical_risk(ch, est, &mode, reps, vseed)?;
        if r.mean_risk > worst.1 {
            worst = (v, r.mean_risk, r.std_error);
        }
        // decode from a fresh set of estimates
        let parts: Vec<Result<Moments>> = batched(reps, |range| {
            let mut m = Moments::default();
            for rep in range {
                let mut rng = stream_rng(vseed ^ 0x5555_5555, rep);
                let comp = Composition { counts: sample_composition(&theta, n, &mut rng) };
                let t = est.estimate(&sample_histogram_with(ch, &comp, &mut rng)?)?;
                let wrong = (1..d).filter(|&j| (t[j] > 1.5 * delta) != (((v >> (j - 1)) & 1) == 1)).count();
                m.push(wrong as f64 / (d - 1) as f64);
            }
            Ok(m)
        });
        for p in parts {
            errors.merge(&p?);
        }
    }
    Ok(DecoderResult {
        worst_vertex: worst.0,
        worst_risk: worst.1,
        worst_se: worst.2,
        decoder_error: errors.mean(),
        bound,
        delta,
        reps_per_vertex: reps,
    })
}
