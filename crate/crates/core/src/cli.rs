//! The `sosnorm` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::approximant::{build, BuildOptions, NormApproximant, DEFAULT_DIM_CAP, DEFAULT_EXPAND_CAP};
use crate::bodies::{make_l1, make_linf, make_lp_sampled, BodySpec};
use crate::error::{Error, Result};
use crate::mvee::{DEFAULT_EPS, DEFAULT_MAX_UPDATES};
use crate::verify::{bench_eval, constant_asymptotics, csv_err, fmt_num, Timing, VerifySuite};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_VERIFICATION: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_DIMENSION_CAP: i32 = 4;

const DEFAULT_APPROXIMANT: &str = "approximant.json";

#[derive(Debug, Parser)]
#[command(name = "sosnorm", version, about = "Sum-of-squares polynomial approximations of norms")]
pub struct CommandConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build an approximant and write it as JSON.
    Build {
        #[command(flatten)]
        body: BodyArgs,
        /// Odd degree n; the polynomial p has degree 2n.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        /// Refuse to build when binom(n+d-1, n) exceeds this.
        #[arg(long, default_value_t = DEFAULT_DIM_CAP)]
        cap: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_UPDATES)]
        max_updates: usize,
        #[arg(long, default_value = DEFAULT_APPROXIMANT)]
        out: PathBuf,
    },
    /// Evaluate p, r and the norm bounds at points read from a CSV file.
    Eval {
        #[arg(long, default_value = DEFAULT_APPROXIMANT)]
        approximant: PathBuf,
        #[arg(long)]
        points: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sandwich, homogeneity and invariance checks.
    Verify {
        #[arg(long, default_value = DEFAULT_APPROXIMANT)]
        approximant: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report JSON; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        single_thread: bool,
    },
    /// Write the monomial coefficients of p as CSV.
    Expand {
        #[arg(long, default_value = DEFAULT_APPROXIMANT)]
        approximant: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Refuse when binom(2n+d-1, 2n) exceeds this.
        #[arg(long, default_value_t = DEFAULT_EXPAND_CAP)]
        cap: usize,
    },
    /// Time eval_p against the exact generator norm.
    Bench {
        /// Benchmark an existing approximant file ...
        #[arg(long, conflicts_with_all = ["body", "body_file"])]
        approximant: Option<PathBuf>,
        /// ... or build one per degree in --ns from a body.
        #[command(flatten)]
        body: OptionalBodyArgs,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the worst-case constant and its large-d estimates.
    Constants {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BuiltinBody {
    L1,
    Linf,
    Lp,
}

#[derive(Debug, Args)]
pub struct BodyArgs {
    #[arg(long, required_unless_present = "body_file", conflicts_with = "body_file")]
    pub body: Option<BuiltinBody>,
    /// Body JSON `{d, kind, generators, label}`.
    #[arg(long)]
    pub body_file: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Exponent of the sampled l_p norm.
    #[arg(long)]
    pub p: Option<f64>,
    /// Number of polar samples for --body lp.
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OptionalBodyArgs {
    #[arg(long)]
    pub body: Option<BuiltinBody>,
    #[arg(long)]
    pub body_file: Option<PathBuf>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 256)]
    pub samples: usize,
}

fn resolve_body(
    body: Option<BuiltinBody>,
    body_file: Option<&Path>,
    d: Option<usize>,
    p: Option<f64>,
    samples: usize,
    seed: u64,
) -> Result<BodySpec> {
    if let Some(path) = body_file {
        let spec: BodySpec = serde_json::from_str(&fs::read_to_string(path)?)?;
        spec.validate()?;
        return Ok(spec);
    }
    let d = d.ok_or_else(|| Error::InvalidArgument("--d is required for built-in bodies".into()))?;
    match body {
        Some(BuiltinBody::L1) => make_l1(d),
        Some(BuiltinBody::Linf) => make_linf(d),
        Some(BuiltinBody::Lp) => {
            let p = p.ok_or_else(|| Error::InvalidArgument("--p is required for --body lp".into()))?;
            make_lp_sampled(d, p, samples, seed)
        }
        None => Err(Error::InvalidArgument("no body given".into())),
    }
}

/// Maps an error to the documented process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        Error::DimensionCap { .. } | Error::DimensionOverflow { .. } => EXIT_DIMENSION_CAP,
        _ => EXIT_VALIDATION,
    }
}

/// Parses and runs, returning the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match CommandConfig::try_parse_from(args) {
        Ok(config) => run(config),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_VALIDATION
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(config: CommandConfig) -> i32 {
    match execute(config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn execute(config: CommandConfig) -> Result<i32> {
    match config.command {
        Command::Build {
            body,
            n,
            eps,
            cap,
            max_updates,
            out,
        } => {
            let spec = resolve_body(
                body.body,
                body.body_file.as_deref(),
                body.d,
                body.p,
                body.samples,
                body.seed,
            )?;
            let opts = BuildOptions {
                eps,
                dim_cap: cap,
                max_updates,
                seed: None,
            };
            let appr = build(&spec, n, opts)?;
            appr.save(&out)?;
            eprintln!(
                "wrote {} (d={}, n={}, dim D={}, N={})",
                out.display(),
                appr.d(),
                appr.n(),
                appr.dim_d(),
                appr.sym_dim()
            );
            Ok(EXIT_OK)
        }
        Command::Eval {
            approximant,
            points,
            out,
        } => {
            let appr = NormApproximant::load(&approximant)?;
            let pts = parse_points_csv(&points)?;
            let text = eval_table(&appr, &pts)?;
            write_or_print(out.as_deref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            approximant,
            m,
            seed,
            report,
            csv,
            single_thread,
        } => {
            let appr = NormApproximant::load(&approximant)?;
            let suite = VerifySuite::run(&appr, m, seed, !single_thread)?;
            write_or_print(report.as_deref(), &suite.to_json()?)?;
            if let Some(path) = csv {
                fs::write(path, suite.to_csv()?)?;
            }
            let s = &suite.sandwich;
            eprintln!(
                "{} samples: {} lower / {} upper violations, max ratio {:.9} (effective constant {:.9})",
                s.samples, s.violations_lower, s.violations_upper, s.max_ratio, s.constant_effective
            );
            Ok(if s.passed() {
                EXIT_OK
            } else {
                EXIT_VERIFICATION
            })
        }
        Command::Expand {
            approximant,
            out,
            cap,
        } => {
            let appr = NormApproximant::load(&approximant)?;
            let terms = appr.expand_monomials_capped(cap)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<String> = (1..=appr.d()).map(|i| format!("a{i}")).collect();
            header.push("coefficient".into());
            w.write_record(&header).map_err(csv_err)?;
            for (alpha, c) in terms {
                let mut row: Vec<String> = alpha.exponents().iter().map(|a| a.to_string()).collect();
                row.push(fmt_num(c));
                w.write_record(&row).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            write_or_print(out.as_deref(), &String::from_utf8_lossy(&bytes))?;
            Ok(EXIT_OK)
        }
        Command::Bench {
            approximant,
            body,
            ns,
            m,
            seed,
            out,
        } => {
            let mut rows: Vec<(usize, usize, Timing)> = Vec::new();
            if let Some(path) = approximant {
                let appr = NormApproximant::load(path)?;
                rows.push((appr.d(), appr.n(), bench_eval(&appr, appr.body(), m, seed)?));
            } else {
                let spec = resolve_body(body.body, body.body_file.as_deref(), body.d, body.p, body.samples, seed)?;
                for n in ns {
                    let appr = build(&spec, n, BuildOptions::default())?;
                    rows.push((spec.d, n, bench_eval(&appr, &spec, m, seed)?));
                }
            }
            write_or_print(out.as_deref(), &timing_csv(&rows)?)?;
            Ok(EXIT_OK)
        }
        Command::Constants { n, d } => {
            let report = constant_asymptotics(n, d)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(EXIT_OK)
        }
    }
}

/// `p,r,lower,upper` per point.
pub fn eval_table(appr: &NormApproximant, points: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["p", "r", "lower", "upper"]).map_err(csv_err)?;
    for (i, x) in points.iter().enumerate() {
        if x.len() != appr.d() {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected {} columns, got {}", appr.d(), x.len()),
            });
        }
        let (q, r) = appr.eval_qr(x)?;
        let b = appr.norm_bounds(x)?;
        w.write_record([fmt_num(q * q), fmt_num(r), fmt_num(b.lower), fmt_num(b.upper)])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn timing_csv(rows: &[(usize, usize, Timing)]) -> Result<String> {
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "d",
        "n",
        "sym_dim",
        "dim_D",
        "samples",
        "eval_p_mean_ns",
        "eval_p_median_ns",
        "exact_norm_mean_ns",
        "exact_norm_median_ns",
    ])
    .map_err(csv_err)?;
    for (d, n, t) in rows {
        w.write_record([
            d.to_string(),
            n.to_string(),
            t.sym_dim.to_string(),
            t.dim_d.to_string(),
            t.samples.to_string(),
            opt(t.eval_p_mean_ns),
            opt(t.eval_p_median_ns),
            opt(t.exact_norm_mean_ns),
            opt(t.exact_norm_median_ns),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_points_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    parse_points(&fs::read_to_string(path)?)
}

/// One point per row. A first row with no numeric field is a header.
pub fn parse_points(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && record.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, f)| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("column {}: {f:?} is not a number", col + 1),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {w} columns, got {}", row.len()),
                })
            }
            _ => {}
        }
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_examples() {
        assert_eq!(parse_points("1,2\n3,4").unwrap(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(parse_points("").unwrap().is_empty());
        match parse_points("1,x") {
            Err(Error::Parse { line: 1, msg }) => assert!(msg.contains("column 2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn points_header_and_ragged_rows() {
        assert_eq!(parse_points("x,y\n1, 2\n").unwrap(), vec![vec![1.0, 2.0]]);
        match parse_points("1,2\n3\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::EvenDegree(2)), EXIT_VALIDATION);
        assert_eq!(
            exit_code(&Error::NotConverged {
                iterations: 1,
                violation: 1.0
            }),
            EXIT_NOT_CONVERGED
        );
        assert_eq!(exit_code(&Error::DimensionCap { dim: 5, cap: 4 }), EXIT_DIMENSION_CAP);
    }

    #[test]
    fn bad_flags_are_validation_failures() {
        assert_eq!(main_with_args(["sosnorm", "build", "--n", "1"]), EXIT_VALIDATION);
        assert_eq!(main_with_args(["sosnorm", "frobnicate"]), EXIT_VALIDATION);
    }
}
