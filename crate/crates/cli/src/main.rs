use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gaussderiv::bench::{self, BenchConfig, BenchReport, Table};
use gaussderiv::data::standard_normal_sample;
use gaussderiv::hermite::{gaussian_derivative, DerivMethod};
use gaussderiv::io::{parse_vector, read_matrix, symmetrize_input};
use gaussderiv::kde::{
    select_bandwidth, vstat_q, BandwidthMatrix, Criterion, KdeOptions, SampleMatrix, SelectOptions, VstatMethod,
};
use gaussderiv::linalg::GaussianParams;
use gaussderiv::moments::{moment_vector, MomentMethod};
use gaussderiv::quadform::{kappa_joint, mathai_provost_formula, nu_joint, NuMethod, QuadFormParams};
use gaussderiv::symmetrizer::{symmetrizer_direct, symmetrizer_recursive};
use gaussderiv::symvec::{symv_direct, symv_recursive, KronVector};
use gaussderiv::{Error, Limits};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "gaussderiv", version, about = "Gaussian derivatives, moments, symmetrizers and kernel V-statistics")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Memory cap in bytes for any single allocation estimate.
    #[arg(long, global = true)]
    cap_bytes: Option<u64>,
    /// Worker threads; more than one enables the parallel pairwise sums.
    #[arg(long, default_value_t = 1, global = true)]
    threads: usize,
    /// Seed for generated data.
    #[arg(long, default_value_t = 1, global = true)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build S(d, r); JSON gives counts, CSV gives 1-based triplets.
    Symmetrizer {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum, default_value_t = SymMethod::Recursive)]
        method: SymMethod,
    },
    /// S(d, r) v, with v read from --input or defaulting to (1, 2, ..., d^r).
    Symv {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum, default_value_t = SymMethod::Recursive)]
        method: SymMethod,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// r-th derivative vector of the N(mu, sigma) density at x.
    Deriv {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum, default_value_t = DerivArg::Unique)]
        method: DerivArg,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[command(flatten)]
        dist: Dist,
    },
    /// Raw vector moment E(X^{⊗r}).
    Moments {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum, default_value_t = MomentArg::Unique)]
        method: MomentArg,
        #[command(flatten)]
        dist: Dist,
    },
    /// E[(XᵀAX)^r (XᵀBX)^s] and the joint cumulant.
    Quadform {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 0)]
        s: usize,
        #[arg(long, value_enum, default_value_t = NuArg::Cumulant)]
        method: NuArg,
        #[command(flatten)]
        dist: Dist,
        /// Matrix file for A, or "identity".
        #[arg(long = "A", default_value = "identity")]
        a: String,
        /// Matrix file for B, or "identity".
        #[arg(long = "B", default_value = "identity")]
        b: String,
        /// Also evaluate the commuting-case closed form and flag a mismatch.
        #[arg(long)]
        check_mp: bool,
    },
    /// Q_r(sigma) over the rows of --input, or over --n generated standard-normal rows.
    Vstat {
        #[arg(long)]
        r: usize,
        #[arg(long, value_enum, default_value_t = VstatArg::Cumulant)]
        method: VstatArg,
        #[command(flatten)]
        sample: SampleArgs,
        #[arg(long, default_value = "identity")]
        sigma: String,
    },
    /// Minimize CV, PI or SCV over bandwidth matrices.
    SelectBw {
        #[arg(long, default_value_t = 0)]
        r: usize,
        #[arg(long, value_enum, default_value_t = CritArg::Cv)]
        criterion: CritArg,
        #[command(flatten)]
        sample: SampleArgs,
        /// Pilot matrix file for PI/SCV.
        #[arg(long)]
        pilot: Option<PathBuf>,
        /// Starting bandwidth matrix file.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
    },
    /// Timed direct-versus-recursive comparisons.
    Bench {
        /// Comma-separated tables: symmetrizer,symv,deriv,moments,quadform,vstat.
        #[arg(long, default_value = "symmetrizer,symv,deriv,moments,quadform,vstat")]
        tables: String,
        /// Dimensions, e.g. "2,3,4" or "2-4".
        #[arg(long, default_value = "2-4")]
        d: String,
        /// Sample sizes for the V-statistic table.
        #[arg(long, default_value = "100,1000,10000")]
        n: String,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Seconds allowed per method and cell before repetitions are cut.
        #[arg(long, default_value_t = 5.0)]
        budget: f64,
        /// With --format csv, print ratio tables instead of raw rows.
        #[arg(long)]
        layout: bool,
    },
    /// Share of non-zeros in the lower triangle of S(d, r).
    Sparsity {
        /// e.g. "7" or "2-7".
        #[arg(long)]
        d: String,
        /// e.g. "2" or "1-8".
        #[arg(long)]
        r: String,
    },
}

#[derive(Args)]
struct Dist {
    /// Mean vector, e.g. "0,0"; zero when omitted.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    /// Covariance matrix file, or "identity".
    #[arg(long, default_value = "identity")]
    sigma: String,
}

#[derive(Args)]
struct SampleArgs {
    /// Data file, one observation per row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Skip the first line of --input.
    #[arg(long)]
    skip_header: bool,
    /// Rows to generate when --input is absent.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Dimension of generated rows when --input is absent.
    #[arg(long, default_value_t = 2)]
    d: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SymMethod {
    Direct,
    Recursive,
}

#[derive(Clone, Copy, ValueEnum)]
enum DerivArg {
    Direct,
    Recursive,
    Unique,
}

#[derive(Clone, Copy, ValueEnum)]
enum MomentArg {
    Explicit,
    Hermite,
    Recursive,
    Unique,
}

#[derive(Clone, Copy, ValueEnum)]
enum NuArg {
    Vector,
    Cumulant,
}

#[derive(Clone, Copy, ValueEnum)]
enum VstatArg {
    Direct,
    Cumulant,
}

#[derive(Clone, Copy, ValueEnum)]
enum CritArg {
    Cv,
    Pi,
    Scv,
}

/// A failure with its exit code: 2 usage, 3 caps, 1 numeric.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::CapExceeded { .. } | Error::Budget(_) => (3, "cap"),
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::IndexOutOfRange { .. } | Error::NotSymmetric(_) => {
                (2, "usage")
            }
            _ => (1, "numeric"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        kind: "usage",
        message: msg.into(),
    }
}

type Out = std::result::Result<Output, Failure>;

enum Output {
    Json(Value),
    Text(String),
}

/// 17 significant digits; non-finite values become null.
fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::Number(format!("{x:.16e}").parse().expect("formatted float is valid JSON"))
    } else {
        Value::Null
    }
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

fn matrix_rows(m: &DMatrix<f64>) -> Value {
    Value::Array((0..m.nrows()).map(|i| nums(&m.row(i).iter().copied().collect::<Vec<_>>())).collect())
}

fn csv_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn warn(msg: &str) {
    eprintln!("{}", json!({ "warning": msg }));
}

fn load_square(src: &str, d: usize, what: &str) -> std::result::Result<DMatrix<f64>, Failure> {
    if src == "identity" {
        return Ok(DMatrix::identity(d, d));
    }
    let m = read_matrix(&PathBuf::from(src), false)?;
    let (m, asym) = symmetrize_input(&m)?;
    if let Some(a) = asym {
        warn(&format!("{what} was symmetrized (asymmetry {a:e})"));
    }
    if m.nrows() != d {
        return Err(usage(format!("{what} is {0}x{0} but d = {d}", m.nrows())));
    }
    Ok(m)
}

fn load_vec(src: &Option<String>, d: usize, what: &str) -> std::result::Result<DVector<f64>, Failure> {
    match src {
        None => Ok(DVector::zeros(d)),
        Some(s) => {
            let v = parse_vector(s)?;
            if v.len() != d {
                return Err(usage(format!("{what} has {} entries but d = {d}", v.len())));
            }
            Ok(v)
        }
    }
}

fn gaussian(dist: &Dist, d: usize) -> std::result::Result<GaussianParams, Failure> {
    let mu = load_vec(&dist.mu, d, "--mu")?;
    let sigma = load_square(&dist.sigma, d, "--sigma")?;
    Ok(GaussianParams::new(mu, sigma)?)
}

fn load_sample(a: &SampleArgs, seed: u64) -> std::result::Result<SampleMatrix, Failure> {
    let m = match &a.input {
        Some(p) => read_matrix(p, a.skip_header)?,
        None => standard_normal_sample(a.n, a.d, seed),
    };
    Ok(SampleMatrix::new(m)?)
}

fn parse_list(s: &str) -> std::result::Result<Vec<usize>, Failure> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || usage(format!("cannot parse {part:?} as a number or range"));
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(usage("empty list"));
    }
    Ok(out)
}

fn vector_output(fmt: Format, mut head: Map<String, Value>, values: &[f64]) -> Output {
    match fmt {
        Format::Json => {
            head.insert("values".into(), nums(values));
            Output::Json(Value::Object(head))
        }
        Format::Csv => {
            let mut s = String::from("index,value\n");
            for (i, v) in values.iter().enumerate() {
                s.push_str(&format!("{},{}\n", i + 1, csv_num(*v)));
            }
            Output::Text(s)
        }
    }
}

fn scalar_output(fmt: Format, fields: Vec<(&str, Value)>) -> Output {
    match fmt {
        Format::Json => Output::Json(Value::Object(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect())),
        Format::Csv => {
            let head: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
            let row: Vec<String> = fields
                .iter()
                .map(|(_, v)| match v {
                    Value::String(s) => s.clone(),
                    Value::Null => String::new(),
                    other => other.to_string(),
                })
                .collect();
            Output::Text(format!("{}\n{}\n", head.join(","), row.join(",")))
        }
    }
}

fn run(cli: Cli) -> Out {
    let g = &cli.global;
    let mut limits = Limits::default();
    if let Some(b) = g.cap_bytes {
        limits = limits.with_max_bytes(b);
    }
    if g.threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    if g.threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(g.threads)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    let kde = KdeOptions {
        limits,
        parallel: g.threads > 1,
    };
    let fmt = g.format;
    match &cli.cmd {
        Cmd::Symmetrizer { d, r, method } => {
            let (d, r) = (*d, *r);
            let (s, name) = match method {
                SymMethod::Direct => (symmetrizer_direct(d, r, &limits)?, "direct"),
                SymMethod::Recursive => (symmetrizer_recursive(d, r, &limits)?, "recursive"),
            };
            match fmt {
                Format::Json => Ok(Output::Json(json!({
                    "d": d, "r": r, "method": name, "size": s.size(),
                    "denominator": s.scale_denominator(), "nnz": s.nnz(), "nnz_lower": s.nnz_lower(),
                }))),
                Format::Csv => {
                    let mut out = String::from("row,col,count,denominator\n");
                    for (i, j, c) in s.counts().triplets() {
                        out.push_str(&format!("{},{},{},{}\n", i + 1, j + 1, c, s.scale_denominator()));
                    }
                    Ok(Output::Text(out))
                }
            }
        }
        Cmd::Symv { d, r, method, input } => {
            let (d, r) = (*d, *r);
            let n = limits.check_len(d, r)?;
            let values = match input {
                Some(p) => read_matrix(p, false)?.transpose().as_slice().to_vec(),
                None => (1..=n).map(|k| k as f64).collect(),
            };
            let v = KronVector::new(values, d, r)?;
            let (w, name) = match method {
                SymMethod::Direct => (symv_direct(&v, &limits)?, "direct"),
                SymMethod::Recursive => (symv_recursive(&v, &limits)?, "recursive"),
            };
            let mut head = Map::new();
            head.insert("d".into(), json!(d));
            head.insert("r".into(), json!(r));
            head.insert("method".into(), json!(name));
            Ok(vector_output(fmt, head, w.values()))
        }
        Cmd::Deriv { d, r, method, x, dist } => {
            let gp = gaussian(dist, *d)?;
            let x = parse_vector(x)?;
            if x.len() != *d {
                return Err(usage(format!("--x has {} entries but d = {d}", x.len())));
            }
            let (m, name) = match method {
                DerivArg::Direct => (DerivMethod::Direct, "direct"),
                DerivArg::Recursive => (DerivMethod::FullRecursive, "recursive"),
                DerivArg::Unique => (DerivMethod::Unique, "unique"),
            };
            let v = gaussian_derivative(x.as_slice(), &gp, *r, m, &limits)?;
            let mut head = Map::new();
            head.insert("d".into(), json!(d));
            head.insert("r".into(), json!(r));
            head.insert("method".into(), json!(name));
            Ok(vector_output(fmt, head, v.values()))
        }
        Cmd::Moments { d, r, method, dist } => {
            let gp = gaussian(dist, *d)?;
            let (m, name) = match method {
                MomentArg::Explicit => (MomentMethod::Explicit, "explicit"),
                MomentArg::Hermite => (MomentMethod::Hermite, "hermite"),
                MomentArg::Recursive => (MomentMethod::Recursive, "recursive"),
                MomentArg::Unique => (MomentMethod::Unique, "unique"),
            };
            let v = moment_vector(&gp, *r, m, &limits)?;
            let mut head = Map::new();
            head.insert("d".into(), json!(d));
            head.insert("r".into(), json!(r));
            head.insert("method".into(), json!(name));
            Ok(vector_output(fmt, head, v.values()))
        }
        Cmd::Quadform {
            d,
            r,
            s,
            method,
            dist,
            a,
            b,
            check_mp,
        } => {
            let d = *d;
            let (r, s) = (*r, *s);
            let mu = load_vec(&dist.mu, d, "--mu")?;
            let sigma = load_square(&dist.sigma, d, "--sigma")?;
            let q = QuadFormParams::new(mu, sigma)?;
            let am = load_square(a, d, "--A")?;
            let bm = load_square(b, d, "--B")?;
            let nm = match method {
                NuArg::Vector => NuMethod::VectorMoment,
                NuArg::Cumulant => NuMethod::CumulantRecursive,
            };
            let nu = nu_joint(&am, &bm, &q, r, s, nm, &limits)?;
            let mut fields = vec![("d", json!(d)), ("r", json!(r)), ("s", json!(s)), ("nu", num(nu))];
            if r + s >= 1 {
                let kappa = kappa_joint(&am, &bm, &q, r, s, &limits)?;
                fields.push(("kappa", num(kappa)));
                if *check_mp {
                    if r == 0 || s == 0 {
                        return Err(usage("--check-mp needs r >= 1 and s >= 1"));
                    }
                    let mp = mathai_provost_formula(&am, &bm, &q, r, s)?;
                    let rel = (mp - kappa).abs() / kappa.abs().max(f64::MIN_POSITIVE);
                    fields.push(("kappa_mp", num(mp)));
                    fields.push(("rel_diff", num(rel)));
                    fields.push(("mismatch", json!(rel > 1e-9)));
                }
            } else if *check_mp {
                return Err(usage("--check-mp needs r >= 1 and s >= 1"));
            }
            Ok(scalar_output(fmt, fields))
        }
        Cmd::Vstat {
            r,
            method,
            sample,
            sigma,
        } => {
            let data = load_sample(sample, g.seed)?;
            let sig = load_square(sigma, data.dim(), "--sigma")?;
            let gp = GaussianParams::centered(sig)?;
            let (m, name) = match method {
                VstatArg::Direct => (VstatMethod::Direct, "direct"),
                VstatArg::Cumulant => (VstatMethod::Cumulant, "cumulant"),
            };
            let q = vstat_q(&data, &gp, *r, m, &kde)?;
            Ok(scalar_output(
                fmt,
                vec![
                    ("n", json!(data.n())),
                    ("d", json!(data.dim())),
                    ("r", json!(r)),
                    ("method", json!(name)),
                    ("q", num(q)),
                ],
            ))
        }
        Cmd::SelectBw {
            r,
            criterion,
            sample,
            pilot,
            init,
            max_iter,
        } => {
            let data = load_sample(sample, g.seed)?;
            let d = data.dim();
            let load_bw = |p: &Option<PathBuf>, what: &str| -> std::result::Result<Option<BandwidthMatrix>, Failure> {
                match p {
                    Some(p) => Ok(Some(BandwidthMatrix::new(load_square(&p.to_string_lossy(), d, what)?)?)),
                    None => Ok(None),
                }
            };
            let pilot = load_bw(pilot, "--pilot")?;
            let init = load_bw(init, "--init")?;
            let (c, name) = match criterion {
                CritArg::Cv => (Criterion::Cv, "cv"),
                CritArg::Pi => (Criterion::Pi, "pi"),
                CritArg::Scv => (Criterion::Scv, "scv"),
            };
            let sel = SelectOptions {
                max_iter: *max_iter,
                ..SelectOptions::default()
            };
            let out = select_bandwidth(&data, *r, c, pilot.as_ref(), init.as_ref(), &sel, &kde)?;
            match fmt {
                Format::Json => Ok(Output::Json(json!({
                    "criterion": name, "r": r, "n": data.n(), "d": d,
                    "h": matrix_rows(out.h.matrix()),
                    "value": num(out.value), "init_value": num(out.init_value),
                    "iterations": out.iterations, "evaluations": out.evaluations,
                    "converged": out.converged, "simplex_size": num(out.simplex_size),
                }))),
                Format::Csv => {
                    let mut s = String::from("row,col,h\n");
                    let h = out.h.matrix();
                    for i in 0..d {
                        for j in 0..d {
                            s.push_str(&format!("{},{},{}\n", i + 1, j + 1, csv_num(h[(i, j)])));
                        }
                    }
                    Ok(Output::Text(s))
                }
            }
        }
        Cmd::Bench {
            tables,
            d,
            n,
            reps,
            budget,
            layout,
        } => {
            if *reps < 3 {
                return Err(usage("--reps must be at least 3"));
            }
            let tables = tables
                .split(',')
                .map(|t| Table::parse(t.trim()).ok_or_else(|| usage(format!("unknown table {t:?}"))))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let cfg = BenchConfig {
                reps: *reps,
                cell_budget_s: *budget,
                limits,
                parallel: g.threads > 1,
                seed: g.seed,
                tables,
                dims: parse_list(d)?,
                vstat_n: parse_list(n)?,
            };
            let reports = bench::bench_suite(&cfg);
            bench_output(fmt, &reports, *layout)
        }
        Cmd::Sparsity { d, r } => {
            let pts = bench::sparsity_curve(&parse_list(d)?, &parse_list(r)?, &limits)?;
            match fmt {
                Format::Json => Ok(Output::Json(Value::Array(
                    pts.iter()
                        .map(|p| {
                            json!({
                                "d": p.d, "r": p.r, "nnz_lower": p.nnz_lower as u64,
                                "lower_size": p.lower_size.to_string(), "proportion": num(p.proportion),
                            })
                        })
                        .collect(),
                ))),
                Format::Csv => {
                    let mut s = String::from("d,r,nnz_lower,lower_size,proportion\n");
                    for p in &pts {
                        s.push_str(&format!("{},{},{},{},{}\n", p.d, p.r, p.nnz_lower, p.lower_size, csv_num(p.proportion)));
                    }
                    Ok(Output::Text(s))
                }
            }
        }
    }
}

fn bench_output(fmt: Format, reports: &[BenchReport], layout: bool) -> Out {
    match fmt {
        Format::Json => Ok(Output::Json(Value::Array(
            reports
                .iter()
                .map(|b| {
                    let o = |x: Option<f64>| x.map(num).unwrap_or(Value::Null);
                    json!({
                        "scenario": b.scenario, "d": b.d, "r": b.r, "s": b.s, "n": b.n,
                        "method_a": b.method_a, "method_b": b.method_b,
                        "mean_a_s": o(b.mean_a_s), "mean_b_s": o(b.mean_b_s),
                        "min_a_s": o(b.min_a_s), "min_b_s": o(b.min_b_s),
                        "reps_a": b.reps_a, "reps_b": b.reps_b,
                        "ratio": o(b.ratio), "agree": b.agree, "tol": num(b.tol),
                        "extrapolated": b.extrapolated, "skipped": b.skipped,
                    })
                })
                .collect(),
        ))),
        Format::Csv => {
            let mut buf = Vec::new();
            if layout {
                bench::write_ratio_tables(reports, &mut buf)
            } else {
                bench::write_reports_csv(reports, &mut buf)
            }
            .map_err(|e| usage(e.to_string()))?;
            Ok(Output::Text(String::from_utf8_lossy(&buf).into_owned()))
        }
    }
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("{}", json!({ "error": f.kind, "message": f.message, "exit_code": f.code }));
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail(&usage(e.to_string().trim().to_string()));
        }
    };
    match run(cli) {
        Ok(out) => {
            let mut so = io::stdout().lock();
            let res = match out {
                Output::Json(v) => writeln!(so, "{}", serde_json::to_string_pretty(&v).expect("serializable")),
                Output::Text(t) => write!(so, "{t}"),
            };
            if res.is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(f) => fail(&f),
    }
}
