//! Empirical checks of a built approximant against its body.
//!
//! Every sample draws its randomness from `(seed, sample index)` alone, so
//! reports are identical whether samples are evaluated in parallel or not.

use std::collections::HashSet;
use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximant::NormApproximant;
use crate::bodies::BodySpec;
use crate::error::{Error, Result};
use crate::symtensor::sym_dim;

/// Relative tolerance on sandwich violations.
pub const SANDWICH_TOL: f64 = 1e-7;
pub const HOMOGENEITY_TOL: f64 = 1e-9;
pub const INVARIANCE_TOL: f64 = 1e-9;
pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOptions {
    pub tol: f64,
    /// Evaluate samples on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            tol: SANDWICH_TOL,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Histogram {
            lo,
            hi,
            counts: vec![0; bins],
        }
    }

    fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let width = self.hi - self.lo;
        let k = if width <= 0.0 {
            0
        } else {
            (((v - self.lo) / width) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize
        };
        self.counts[k] += 1;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub samples: usize,
    pub sym_dim: usize,
    pub dim_d: usize,
    pub eval_p_mean_ns: Option<f64>,
    pub eval_p_median_ns: Option<f64>,
    pub exact_norm_mean_ns: Option<f64>,
    pub exact_norm_median_ns: Option<f64>,
}

/// Outcome of [`check_sandwich`].
///
/// `max_ratio` locates each sample inside its sandwich on the scale where the
/// effective constant `(dim D)^{1/2n}` bounds it: `||x|| / p(x)^{1/2n}` for
/// symmetric bodies and `((||x||^n - r(x)) / sqrt(p(x)))^{1/2n}` otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub label: String,
    pub d: usize,
    pub n: usize,
    pub symmetric: bool,
    pub sym_dim: usize,
    pub dim_d: usize,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub violations_lower: u64,
    pub violations_upper: u64,
    pub max_ratio: f64,
    /// Smallest `upper / ||x||` seen; 1 means the upper bound was attained.
    pub min_upper_slack: f64,
    pub constant_effective: f64,
    pub constant_theorem: f64,
    pub ratio_histogram: Histogram,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl VerificationReport {
    pub fn violations(&self) -> u64 {
        self.violations_lower + self.violations_upper
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

struct SampleOutcome {
    lower_violated: bool,
    upper_violated: bool,
    ratio: Option<f64>,
    upper_slack: Option<f64>,
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn signed_generator(rng: &mut ChaCha8Rng, spec: &BodySpec) -> Vec<f64> {
    let g = &spec.generators[rng.random_range(0..spec.generators.len())];
    let sign = if spec.is_symmetric() && rng.random::<bool>() {
        -1.0
    } else {
        1.0
    };
    g.iter().map(|v| v * sign).collect()
}

/// Sample `index` of the verification mixture: Gaussian directions, generator
/// directions, midpoints of generator pairs, coordinate axes, and small
/// perturbations of generators and midpoints, at a random scale.
pub fn sample_point(spec: &BodySpec, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = sample_rng(seed, index);
    let d = spec.d;
    let mut x = match index % 5 {
        0 => gaussian(&mut rng, d),
        1 => signed_generator(&mut rng, spec),
        2 => {
            let a = signed_generator(&mut rng, spec);
            let b = signed_generator(&mut rng, spec);
            a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect()
        }
        3 => {
            let mut e = vec![0.0; d];
            e[rng.random_range(0..d)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            e
        }
        _ => {
            let mut base = signed_generator(&mut rng, spec);
            if rng.random::<bool>() {
                let other = signed_generator(&mut rng, spec);
                for (u, v) in base.iter_mut().zip(&other) {
                    *u = 0.5 * (*u + v);
                }
            }
            let size = base.iter().map(|v| v * v).sum::<f64>().sqrt();
            let noise = 10f64.powf(rng.random_range(-4.0..-1.0)) * size.max(1.0);
            for u in base.iter_mut() {
                *u += noise * rng.sample::<f64, _>(StandardNormal);
            }
            base
        }
    };
    if x.iter().all(|&v| v == 0.0) {
        x = gaussian(&mut rng, d);
    }
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    x.iter().map(|v| v * scale).collect()
}

fn ensure_matches(appr: &NormApproximant, spec: &BodySpec) -> Result<()> {
    if appr.d() != spec.d {
        return Err(Error::ShapeMismatch {
            expected: appr.d(),
            got: spec.d,
        });
    }
    if appr.body() != spec {
        return Err(Error::InvalidArgument(
            "approximant was built from a different body".into(),
        ));
    }
    Ok(())
}

/// `(dim D)^{1/2n}` and `binom(n+d-1, n)^{1/2n}`.
pub fn ratio_constants(appr: &NormApproximant) -> (f64, f64) {
    let e = 1.0 / (2.0 * appr.n() as f64);
    (
        (appr.dim_d() as f64).powf(e),
        (appr.sym_dim() as f64).powf(e),
    )
}

fn evaluate_sample(appr: &NormApproximant, spec: &BodySpec, x: &[f64], tol: f64) -> Result<SampleOutcome> {
    let exact = spec.exact_norm(x)?;
    let bounds = appr.norm_bounds(x)?;
    let (q, r) = appr.eval_qr(x)?;
    let ratio = if q > 0.0 {
        if appr.is_symmetric() {
            Some(exact / bounds.lower)
        } else {
            let t = (exact.powi(appr.n() as i32) - r) / q;
            Some(t.max(0.0).powf(1.0 / (2.0 * appr.n() as f64)))
        }
    } else {
        None
    };
    Ok(SampleOutcome {
        lower_violated: bounds.lower > exact * (1.0 + tol),
        upper_violated: exact > bounds.upper * (1.0 + tol),
        ratio,
        upper_slack: (exact > 0.0).then(|| bounds.upper / exact),
    })
}

pub fn check_sandwich(appr: &NormApproximant, spec: &BodySpec, m: usize, seed: u64) -> Result<VerificationReport> {
    check_sandwich_with(appr, spec, m, seed, CheckOptions::default())
}

pub fn check_sandwich_with(
    appr: &NormApproximant,
    spec: &BodySpec,
    m: usize,
    seed: u64,
    opts: CheckOptions,
) -> Result<VerificationReport> {
    ensure_matches(appr, spec)?;
    let run = |i: usize| {
        let x = sample_point(spec, seed, i as u64);
        evaluate_sample(appr, spec, &x, opts.tol)
    };
    let outcomes: Vec<SampleOutcome> = if opts.parallel {
        (0..m).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..m).map(run).collect::<Result<_>>()?
    };

    let (effective, theorem) = ratio_constants(appr);
    let mut report = VerificationReport {
        label: spec.label.clone(),
        d: appr.d(),
        n: appr.n(),
        symmetric: appr.is_symmetric(),
        sym_dim: appr.sym_dim(),
        dim_d: appr.dim_d(),
        samples: m,
        seed,
        tolerance: opts.tol,
        violations_lower: 0,
        violations_upper: 0,
        max_ratio: 0.0,
        min_upper_slack: f64::INFINITY,
        constant_effective: effective,
        constant_theorem: theorem,
        ratio_histogram: Histogram::new(1.0, effective, HISTOGRAM_BINS),
        timing: None,
    };
    for o in &outcomes {
        report.violations_lower += o.lower_violated as u64;
        report.violations_upper += o.upper_violated as u64;
        if let Some(ratio) = o.ratio {
            report.max_ratio = report.max_ratio.max(ratio);
            report.ratio_histogram.add(ratio);
        }
        if let Some(s) = o.upper_slack {
            report.min_upper_slack = report.min_upper_slack.min(s);
        }
    }
    if !report.min_upper_slack.is_finite() {
        report.min_upper_slack = 0.0;
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityCheck {
    pub samples: usize,
    pub worst_rel_error: f64,
    pub passed: bool,
}

/// `p(t x) = t^{2n} p(x)` for random `x` and `|t|` log-uniform in `[1e-3, 1e3]`.
pub fn check_homogeneity(appr: &NormApproximant, m: usize, seed: u64) -> Result<HomogeneityCheck> {
    let mut worst = 0.0f64;
    for i in 0..m {
        let mut rng = sample_rng(seed, i as u64);
        let x = gaussian(&mut rng, appr.d());
        let mag = 10f64.powf(rng.random_range(-3.0..=3.0));
        let t = if rng.random::<bool>() { -mag } else { mag };
        worst = worst.max(homogeneity_error(appr, &x, t)?);
    }
    Ok(HomogeneityCheck {
        samples: m,
        worst_rel_error: worst,
        passed: worst <= HOMOGENEITY_TOL,
    })
}

/// Relative error of `p(t x)` against `t^{2n} p(x)`.
pub fn homogeneity_error(appr: &NormApproximant, x: &[f64], t: f64) -> Result<f64> {
    let base = appr.eval_p(x)?;
    let tx: Vec<f64> = x.iter().map(|v| v * t).collect();
    let scaled = appr.eval_p(&tx)?;
    let expected = t.abs().powi(2 * appr.n() as i32) * base;
    if expected == 0.0 {
        return Ok(scaled.abs());
    }
    Ok((scaled - expected).abs() / expected)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryGroup {
    SignedPermutations,
    Permutations,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceCheck {
    pub group: SymmetryGroup,
    pub samples: usize,
    pub status: CheckStatus,
    pub worst_rel_error: f64,
}

/// Adjacent transpositions, plus a sign flip of the first coordinate for the
/// signed group. Each is a coordinate map `x -> g x`.
fn group_generators(group: SymmetryGroup, d: usize) -> Vec<Box<dyn Fn(&[f64]) -> Vec<f64> + Sync>> {
    let mut gens: Vec<Box<dyn Fn(&[f64]) -> Vec<f64> + Sync>> = Vec::new();
    for i in 0..d.saturating_sub(1) {
        gens.push(Box::new(move |x: &[f64]| {
            let mut y = x.to_vec();
            y.swap(i, i + 1);
            y
        }));
    }
    if group == SymmetryGroup::SignedPermutations {
        gens.push(Box::new(|x: &[f64]| {
            let mut y = x.to_vec();
            y[0] = -y[0];
            y
        }));
    }
    gens
}

fn quantize(v: &[f64]) -> Vec<i64> {
    v.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Whether the generator set (with antipodes when symmetric) is mapped onto
/// itself by every generator of `group`.
pub fn body_is_invariant(spec: &BodySpec, group: SymmetryGroup) -> bool {
    let mut set: HashSet<Vec<i64>> = HashSet::new();
    for g in &spec.generators {
        set.insert(quantize(g));
        if spec.is_symmetric() {
            set.insert(quantize(&g.iter().map(|v| -v).collect::<Vec<_>>()));
        }
    }
    group_generators(group, spec.d)
        .iter()
        .all(|act| spec.generators.iter().all(|g| set.contains(&quantize(&act(g)))))
}

pub fn check_invariance(
    appr: &NormApproximant,
    group: SymmetryGroup,
    m: usize,
    seed: u64,
) -> Result<InvarianceCheck> {
    if !body_is_invariant(appr.body(), group) {
        return Ok(InvarianceCheck {
            group,
            samples: 0,
            status: CheckStatus::NotApplicable,
            worst_rel_error: 0.0,
        });
    }
    let gens = group_generators(group, appr.d());
    let mut worst = 0.0f64;
    for i in 0..m {
        let mut rng = sample_rng(seed, i as u64);
        let x = gaussian(&mut rng, appr.d());
        let base = appr.eval_p(&x)?;
        for act in &gens {
            let moved = appr.eval_p(&act(&x))?;
            let err = if base > 0.0 {
                (moved - base).abs() / base
            } else {
                moved.abs()
            };
            worst = worst.max(err);
        }
    }
    Ok(InvarianceCheck {
        group,
        samples: m,
        status: if worst <= INVARIANCE_TOL {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        worst_rel_error: worst,
    })
}

fn mean_and_median(mut ns: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if ns.is_empty() {
        return (None, None);
    }
    let mean = ns.iter().sum::<f64>() / ns.len() as f64;
    ns.sort_by(f64::total_cmp);
    let mid = ns.len() / 2;
    let median = if ns.len() % 2 == 0 {
        0.5 * (ns[mid - 1] + ns[mid])
    } else {
        ns[mid]
    };
    (Some(mean), Some(median))
}

/// Wall-clock cost of `eval_p` and of the exact generator norm, per call.
pub fn bench_eval(appr: &NormApproximant, spec: &BodySpec, m: usize, seed: u64) -> Result<Timing> {
    ensure_matches(appr, spec)?;
    let points: Vec<Vec<f64>> = (0..m)
        .map(|i| gaussian(&mut sample_rng(seed, i as u64), spec.d))
        .collect();
    let mut p_ns = Vec::with_capacity(m);
    let mut norm_ns = Vec::with_capacity(m);
    for x in &points {
        let start = Instant::now();
        black_box(appr.eval_p(black_box(x))?);
        p_ns.push(start.elapsed().as_nanos() as f64);
        let start = Instant::now();
        black_box(spec.exact_norm(black_box(x))?);
        norm_ns.push(start.elapsed().as_nanos() as f64);
    }
    let (eval_p_mean_ns, eval_p_median_ns) = mean_and_median(p_ns);
    let (exact_norm_mean_ns, exact_norm_median_ns) = mean_and_median(norm_ns);
    Ok(Timing {
        samples: m,
        sym_dim: appr.sym_dim(),
        dim_d: appr.dim_d(),
        eval_p_mean_ns,
        eval_p_median_ns,
        exact_norm_mean_ns,
        exact_norm_median_ns,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantReport {
    pub n: usize,
    pub d: usize,
    /// `binom(n+d-1, n)^{1/2n}`.
    pub theorem_constant: f64,
    /// `(n!)^{-1/2n} sqrt(d)`, the fixed-n large-d estimate.
    pub fixed_n_estimate: f64,
    /// `gamma = n / d`.
    pub gamma: f64,
    /// `exp{ln((gamma+1)/gamma)/2 + ln(gamma+1)/(2 gamma)}`, the large-d limit
    /// at `n = gamma d`.
    pub gamma_limit: f64,
}

/// `ln binom(n+d-1, n)` as a sum of logs; exact enough for any sizes.
pub fn ln_sym_dim(d: usize, n: usize) -> f64 {
    (1..=n).map(|i| ((d - 1 + i) as f64 / i as f64).ln()).sum()
}

pub fn constant_asymptotics(n: usize, d: usize) -> Result<ConstantReport> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!(
            "n and d must be positive (got n={n}, d={d})"
        )));
    }
    let two_n = 2.0 * n as f64;
    let theorem_constant = match sym_dim(d, n) {
        Ok(dim) => (dim as f64).powf(1.0 / two_n),
        Err(_) => (ln_sym_dim(d, n) / two_n).exp(),
    };
    let ln_fact: f64 = (1..=n).map(|i| (i as f64).ln()).sum();
    let gamma = n as f64 / d as f64;
    Ok(ConstantReport {
        n,
        d,
        theorem_constant,
        fixed_n_estimate: (-ln_fact / two_n).exp() * (d as f64).sqrt(),
        gamma,
        gamma_limit: (0.5 * ((gamma + 1.0) / gamma).ln() + (gamma + 1.0).ln() / (2.0 * gamma)).exp(),
    })
}

/// All checks run by the `verify` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySuite {
    pub sandwich: VerificationReport,
    pub homogeneity: HomogeneityCheck,
    pub invariance: Vec<InvarianceCheck>,
}

impl VerifySuite {
    pub fn run(appr: &NormApproximant, m: usize, seed: u64, parallel: bool) -> Result<Self> {
        let spec = appr.body();
        let opts = CheckOptions {
            parallel,
            ..Default::default()
        };
        let checks = m.min(1000);
        Ok(VerifySuite {
            sandwich: check_sandwich_with(appr, spec, m, seed, opts)?,
            homogeneity: check_homogeneity(appr, checks, seed)?,
            invariance: vec![
                check_invariance(appr, SymmetryGroup::SignedPermutations, checks, seed)?,
                check_invariance(appr, SymmetryGroup::Permutations, checks, seed)?,
            ],
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per check.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "check",
            "status",
            "samples",
            "violations_lower",
            "violations_upper",
            "max_ratio",
            "min_upper_slack",
            "worst_rel_error",
            "constant_effective",
            "constant_theorem",
        ])
        .map_err(csv_err)?;
        let s = &self.sandwich;
        w.write_record([
            "sandwich".to_string(),
            if s.passed() { "pass" } else { "fail" }.into(),
            s.samples.to_string(),
            s.violations_lower.to_string(),
            s.violations_upper.to_string(),
            fmt_num(s.max_ratio),
            fmt_num(s.min_upper_slack),
            String::new(),
            fmt_num(s.constant_effective),
            fmt_num(s.constant_theorem),
        ])
        .map_err(csv_err)?;
        let h = &self.homogeneity;
        w.write_record([
            "homogeneity".to_string(),
            if h.passed { "pass" } else { "fail" }.into(),
            h.samples.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            fmt_num(h.worst_rel_error),
            String::new(),
            String::new(),
        ])
        .map_err(csv_err)?;
        for c in &self.invariance {
            let name = match c.group {
                SymmetryGroup::SignedPermutations => "invariance-signed-permutations",
                SymmetryGroup::Permutations => "invariance-permutations",
            };
            let status = match c.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "fail",
                CheckStatus::NotApplicable => "not-applicable",
            };
            w.write_record([
                name.to_string(),
                status.into(),
                c.samples.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                fmt_num(c.worst_rel_error),
                String::new(),
                String::new(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Shortest round-trip decimal, in exponent form outside `[1e-5, 1e16)`.
pub(crate) fn fmt_num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&v.abs()) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
