//! Correctness-gated timing of direct versus recursive paths, and the sparsity curve.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::standard_normal_sample;
use crate::error::{Error, Result};
use crate::hermite::{gaussian_derivative, gaussian_derivative_unique, DerivMethod, UniqueRecursion};
use crate::indexing::unique_count;
use crate::kde::{vstat_partial, KdeOptions, SampleMatrix, VstatMethod};
use crate::limits::{checked_pow, Limits};
use crate::linalg::GaussianParams;
use crate::moments::{moment_vector, MomentMethod};
use crate::quadform::{nu_joint, NuMethod, QuadFormParams};
use crate::symmetrizer::{symmetrizer_direct, symmetrizer_nnz, symmetrizer_recursive};
use crate::symvec::{symv_direct, symv_recursive, KronVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Table {
    Symmetrizer,
    Symv,
    Deriv,
    Moments,
    Quadform,
    Vstat,
}

impl Table {
    pub const ALL: [Table; 6] = [
        Table::Symmetrizer,
        Table::Symv,
        Table::Deriv,
        Table::Moments,
        Table::Quadform,
        Table::Vstat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Table::Symmetrizer => "symmetrizer",
            Table::Symv => "symv",
            Table::Deriv => "deriv",
            Table::Moments => "moments",
            Table::Quadform => "quadform",
            Table::Vstat => "vstat",
        }
    }

    pub fn parse(s: &str) -> Option<Table> {
        Table::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Timed repetitions per method after one discarded warmup.
    pub reps: usize,
    /// Rough wall-clock allowance per method and cell. Slow cells get fewer
    /// repetitions, and slow V-statistic cells are timed on a row subset.
    pub cell_budget_s: f64,
    pub limits: Limits,
    pub parallel: bool,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub dims: Vec<usize>,
    pub vstat_n: Vec<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            reps: 10,
            cell_budget_s: 5.0,
            limits: Limits::default(),
            parallel: false,
            seed: 1,
            tables: Table::ALL.to_vec(),
            dims: vec![2, 3, 4],
            vstat_n: vec![100, 1000, 10000],
        }
    }
}

/// One timed comparison. `ratio` is `mean_a_s / mean_b_s` and is present only
/// when both methods ran and agreed within `tol`.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub scenario: String,
    pub d: usize,
    pub r: usize,
    pub s: usize,
    pub n: usize,
    pub method_a: String,
    pub method_b: String,
    pub mean_a_s: Option<f64>,
    pub mean_b_s: Option<f64>,
    pub min_a_s: Option<f64>,
    pub min_b_s: Option<f64>,
    pub reps_a: usize,
    pub reps_b: usize,
    pub ratio: Option<f64>,
    pub agree: bool,
    pub tol: f64,
    /// Method A was timed on a subset of rows and scaled up to all `n` rows.
    pub extrapolated: bool,
    pub skipped: Option<String>,
}

impl BenchReport {
    #[allow(clippy::too_many_arguments)]
    fn new(table: Table, d: usize, r: usize, s: usize, n: usize, a: &str, b: &str, tol: f64) -> Self {
        BenchReport {
            scenario: table.name().to_string(),
            d,
            r,
            s,
            n,
            method_a: a.to_string(),
            method_b: b.to_string(),
            mean_a_s: None,
            mean_b_s: None,
            min_a_s: None,
            min_b_s: None,
            reps_a: 0,
            reps_b: 0,
            ratio: None,
            agree: false,
            tol,
            extrapolated: false,
            skipped: None,
        }
    }

    fn skip(mut self, e: &Error) -> Self {
        self.skipped = Some(if e.is_cap() { "cap".to_string() } else { e.to_string() });
        self
    }

    fn record(mut self, a: Timing, b: Timing) -> Self {
        self.mean_a_s = Some(a.mean);
        self.min_a_s = Some(a.min);
        self.reps_a = a.runs;
        self.mean_b_s = Some(b.mean);
        self.min_b_s = Some(b.min);
        self.reps_b = b.runs;
        self.ratio = Some(a.mean / b.mean.max(1e-12));
        self
    }

    /// Column label inside its table: `r`, `(r,s)` or `n,r`.
    pub fn column(&self) -> String {
        match self.scenario.as_str() {
            "quadform" => format!("(r,s)=({},{})", self.r, self.s),
            "vstat" => format!("n={};r={}", self.n, self.r),
            _ => format!("r={}", self.r),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Timing {
    mean: f64,
    min: f64,
    runs: usize,
}

/// Times `f` after a discarded warmup; the warmup duration decides how many of
/// the requested repetitions fit in the budget (at least one).
fn time_runs<T>(reps: usize, budget: f64, mut f: impl FnMut() -> Result<T>) -> Result<Timing> {
    let t0 = Instant::now();
    f()?;
    let warm = t0.elapsed().as_secs_f64();
    let runs = if warm * reps as f64 <= budget {
        reps
    } else {
        ((budget / warm.max(1e-12)) as usize).clamp(1, reps.max(1))
    };
    let mut total = 0.0;
    let mut min = f64::INFINITY;
    for _ in 0..runs {
        let t = Instant::now();
        std::hint::black_box(f()?);
        let e = t.elapsed().as_secs_f64();
        total += e;
        min = min.min(e);
    }
    Ok(Timing {
        mean: total / runs as f64,
        min,
        runs,
    })
}

fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub fn bench_symmetrizer(d: usize, r: usize, cfg: &BenchConfig) -> BenchReport {
    let rep = BenchReport::new(Table::Symmetrizer, d, r, 0, 0, "direct", "recursive", 0.0);
    let lim = &cfg.limits;
    let (a, b) = match (symmetrizer_direct(d, r, lim), symmetrizer_recursive(d, r, lim)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return rep.skip(&e),
    };
    let mut rep = rep;
    rep.agree = a == b;
    if !rep.agree {
        return rep;
    }
    drop((a, b));
    let ta = time_runs(cfg.reps, cfg.cell_budget_s, || symmetrizer_direct(d, r, lim));
    let tb = time_runs(cfg.reps, cfg.cell_budget_s, || symmetrizer_recursive(d, r, lim));
    match (ta, tb) {
        (Ok(ta), Ok(tb)) => rep.record(ta, tb),
        (Err(e), _) | (_, Err(e)) => rep.skip(&e),
    }
}

/// `S(d, r) v` with `v = (1, 2, ..., d^r)`.
pub fn bench_symv(d: usize, r: usize, cfg: &BenchConfig) -> BenchReport {
    let tol = 1e-12;
    let rep = BenchReport::new(Table::Symv, d, r, 0, 0, "direct", "recursive", tol);
    let lim = &cfg.limits;
    let v = match lim
        .check_len(d, r)
        .and_then(|n| KronVector::new((1..=n).map(|k| k as f64).collect(), d, r))
    {
        Ok(v) => v,
        Err(e) => return rep.skip(&e),
    };
    let (a, b) = match (symv_direct(&v, lim), symv_recursive(&v, lim)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return rep.skip(&e),
    };
    let mut rep = rep;
    rep.agree = max_rel_diff(b.values(), a.values()) <= tol;
    if !rep.agree {
        return rep;
    }
    let ta = time_runs(cfg.reps, cfg.cell_budget_s, || symv_direct(&v, lim));
    let tb = time_runs(cfg.reps, cfg.cell_budget_s, || symv_recursive(&v, lim));
    match (ta, tb) {
        (Ok(ta), Ok(tb)) => rep.record(ta, tb),
        (Err(e), _) | (_, Err(e)) => rep.skip(&e),
    }
}

/// `D^{⊗r} φ(1, ..., 1)` for the standard normal: direct against the
/// full-vector recursion, and direct against the unique-coordinate recursion.
pub fn bench_deriv(d: usize, r: usize, cfg: &BenchConfig) -> Vec<BenchReport> {
    let tol = 1e-10;
    let lim = &cfg.limits;
    let g = GaussianParams::standard(d);
    let x = vec![1.0; d];
    let direct = gaussian_derivative(&x, &g, r, DerivMethod::Direct, lim);
    let mut out = Vec::new();
    for (name, method) in [("full_recursive", DerivMethod::FullRecursive), ("unique", DerivMethod::Unique)] {
        let rep = BenchReport::new(Table::Deriv, d, r, 0, 0, "direct", name, tol);
        let other = gaussian_derivative(&x, &g, r, method, lim);
        let (a, b) = match (direct.as_ref(), other.as_ref()) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                out.push(rep.skip(e));
                continue;
            }
        };
        let mut rep = rep;
        rep.agree = max_rel_diff(b.values(), a.values()) <= tol;
        if !rep.agree {
            out.push(rep);
            continue;
        }
        let ta = time_runs(cfg.reps, cfg.cell_budget_s, || gaussian_derivative(&x, &g, r, DerivMethod::Direct, lim));
        // the unique path is timed without its final expansion
        let tb = match method {
            DerivMethod::Unique => time_runs(cfg.reps, cfg.cell_budget_s, || gaussian_derivative_unique(&x, &g, r, lim)),
            _ => time_runs(cfg.reps, cfg.cell_budget_s, || gaussian_derivative(&x, &g, r, method, lim).map(|_| ())),
        };
        out.push(match (ta, tb) {
            (Ok(ta), Ok(tb)) => rep.record(ta, tb),
            (Err(e), _) | (_, Err(e)) => rep.skip(&e),
        });
    }
    out
}

/// `μ_r` of `N(0, I_d)`: explicit formula against both recursions.
pub fn bench_moments(d: usize, r: usize, cfg: &BenchConfig) -> Vec<BenchReport> {
    let tol = 1e-10;
    let lim = &cfg.limits;
    let g = GaussianParams::standard(d);
    let direct = moment_vector(&g, r, MomentMethod::Explicit, lim);
    let mut out = Vec::new();
    for (name, method) in [("recursive", MomentMethod::Recursive), ("unique", MomentMethod::Unique)] {
        let rep = BenchReport::new(Table::Moments, d, r, 0, 0, "direct", name, tol);
        let other = moment_vector(&g, r, method, lim);
        let (a, b) = match (direct.as_ref(), other.as_ref()) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                out.push(rep.skip(e));
                continue;
            }
        };
        let mut rep = rep;
        rep.agree = max_rel_diff(b.values(), a.values()) <= tol;
        if !rep.agree {
            out.push(rep);
            continue;
        }
        let ta = time_runs(cfg.reps, cfg.cell_budget_s, || moment_vector(&g, r, MomentMethod::Explicit, lim));
        let tb = match method {
            MomentMethod::Unique => time_runs(cfg.reps, cfg.cell_budget_s, || {
                UniqueRecursion::new(d, r, lim)?.run(g.mean().as_slice(), &(-g.cov()), r)
            }),
            _ => time_runs(cfg.reps, cfg.cell_budget_s, || moment_vector(&g, r, method, lim)),
        };
        out.push(match (ta, tb) {
            (Ok(ta), Ok(tb)) => rep.record(ta, tb),
            (Err(e), _) | (_, Err(e)) => rep.skip(&e),
        });
    }
    out
}

/// `ν_{r,s}(A, B)` for `N(0, I_d)` with `A = diag(1..d)`, `B = diag(d..1)`.
pub fn bench_quadform(d: usize, r: usize, s: usize, cfg: &BenchConfig) -> BenchReport {
    let tol = 1e-9;
    let lim = &cfg.limits;
    let rep = BenchReport::new(Table::Quadform, d, r, s, 0, "direct", "cumulant", tol);
    let a = DMatrix::from_fn(d, d, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
    let b = DMatrix::from_fn(d, d, |i, j| if i == j { (d - i) as f64 } else { 0.0 });
    let q = QuadFormParams::from_gaussian(&GaussianParams::standard(d));
    let run = |m: NuMethod| nu_joint(&a, &b, &q, r, s, m, lim);
    let (x, y) = match (run(NuMethod::VectorMoment), run(NuMethod::CumulantRecursive)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return rep.skip(&e),
    };
    let mut rep = rep;
    rep.agree = (x - y).abs() <= tol * x.abs().max(1e-300);
    if !rep.agree {
        return rep;
    }
    let ta = time_runs(cfg.reps, cfg.cell_budget_s, || run(NuMethod::VectorMoment));
    let tb = time_runs(cfg.reps, cfg.cell_budget_s, || run(NuMethod::CumulantRecursive));
    match (ta, tb) {
        (Ok(ta), Ok(tb)) => rep.record(ta, tb),
        (Err(e), _) | (_, Err(e)) => rep.skip(&e),
    }
}

/// `Q_r(I_d)` on `n` standard-normal rows. When the direct path would overrun
/// the budget it is timed on the first `m` rows (all `n` partners each) and
/// scaled by `n / m`; the correctness gate compares both paths on those rows.
pub fn bench_vstat(d: usize, r: usize, n: usize, cfg: &BenchConfig) -> BenchReport {
    let tol = 1e-9;
    let mut rep = BenchReport::new(Table::Vstat, d, r, 0, n, "direct", "cumulant", tol);
    let data = match SampleMatrix::new(standard_normal_sample(n, d, cfg.seed)) {
        Ok(x) => x,
        Err(e) => return rep.skip(&e),
    };
    let g = GaussianParams::standard(d);
    let opts = KdeOptions {
        limits: cfg.limits,
        parallel: cfg.parallel,
    };
    let partial = |m: VstatMethod, rows: usize| vstat_partial(&data, &g, r, m, 0..rows, &opts);
    // probe one row to size the subset
    let t0 = Instant::now();
    if let Err(e) = partial(VstatMethod::Direct, 1) {
        return rep.skip(&e);
    }
    let per_row = t0.elapsed().as_secs_f64().max(1e-9);
    let fit = (cfg.cell_budget_s / (per_row * (cfg.reps as f64 + 1.0))) as usize;
    let rows = fit.clamp(1, n);
    rep.extrapolated = rows < n;
    let (a, b) = match (partial(VstatMethod::Direct, rows), partial(VstatMethod::Cumulant, rows)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return rep.skip(&e),
    };
    rep.agree = (a - b).abs() <= tol * a.abs().max(1e-300);
    if !rep.agree {
        return rep;
    }
    let scale = n as f64 / rows as f64;
    let ta = time_runs(cfg.reps, cfg.cell_budget_s, || partial(VstatMethod::Direct, rows)).map(|t| Timing {
        mean: t.mean * scale,
        min: t.min * scale,
        runs: t.runs,
    });
    let tb = time_runs(cfg.reps, cfg.cell_budget_s, || partial(VstatMethod::Cumulant, n));
    match (ta, tb) {
        (Ok(ta), Ok(tb)) => rep.record(ta, tb),
        (Err(e), _) | (_, Err(e)) => rep.skip(&e),
    }
}

/// Runs the selected table grids in order.
pub fn bench_suite(cfg: &BenchConfig) -> Vec<BenchReport> {
    let mut out = Vec::new();
    for &t in &cfg.tables {
        for &d in &cfg.dims {
            match t {
                Table::Symmetrizer => out.extend([2, 4, 6, 8].map(|r| bench_symmetrizer(d, r, cfg))),
                Table::Symv => out.extend([2, 4, 6, 8].map(|r| bench_symv(d, r, cfg))),
                Table::Deriv => {
                    for r in [2, 4, 6, 8, 10] {
                        out.extend(bench_deriv(d, r, cfg));
                    }
                }
                Table::Moments => {
                    for r in [2, 4, 6, 8, 10] {
                        out.extend(bench_moments(d, r, cfg));
                    }
                }
                Table::Quadform => {
                    for (r, s) in [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (4, 1)] {
                        out.push(bench_quadform(d, r, s, cfg));
                    }
                }
                Table::Vstat => {
                    for &n in &cfg.vstat_n {
                        for r in [0, 2, 4] {
                            out.push(bench_vstat(d, r, n, cfg));
                        }
                    }
                }
            }
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// Raw timings, one report per line.
pub fn write_reports_csv<W: Write>(reports: &[BenchReport], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "scenario,d,r,s,n,method_a,method_b,mean_a_s,mean_b_s,min_a_s,min_b_s,reps_a,reps_b,ratio,agree,tol,extrapolated,skipped"
    )?;
    for b in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:e},{},{}",
            b.scenario,
            b.d,
            b.r,
            b.s,
            b.n,
            b.method_a,
            b.method_b,
            opt(b.mean_a_s),
            opt(b.mean_b_s),
            opt(b.min_a_s),
            opt(b.min_b_s),
            b.reps_a,
            b.reps_b,
            opt(b.ratio),
            b.agree,
            b.tol,
            b.extrapolated,
            b.skipped.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

/// Ratios in a grid: one line per
/// `(scenario, d, method pair)`, one column per `r`, `(r,s)` or `(n,r)` cell.
/// Skipped cells print `--`.
pub fn write_ratio_tables<W: Write>(reports: &[BenchReport], mut w: W) -> io::Result<()> {
    let mut groups: BTreeMap<(String, String), Vec<&BenchReport>> = BTreeMap::new();
    let mut order = Vec::new();
    for b in reports {
        let key = (b.scenario.clone(), format!("{}/{}", b.method_a, b.method_b));
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(b);
    }
    for key in order {
        let rows = &groups[&key];
        let mut cols: Vec<String> = Vec::new();
        for b in rows {
            let c = b.column();
            if !cols.contains(&c) {
                cols.push(c);
            }
        }
        writeln!(w, "{},d,{}", key.0, cols.join(","))?;
        let mut dims: Vec<usize> = rows.iter().map(|b| b.d).collect();
        dims.dedup();
        for d in dims {
            let cells: Vec<String> = cols
                .iter()
                .map(|c| {
                    rows.iter()
                        .find(|b| b.d == d && &b.column() == c)
                        .and_then(|b| b.ratio)
                        .map(|x| format!("{x:.2}"))
                        .unwrap_or_else(|| "--".into())
                })
                .collect();
            writeln!(w, "{},{},{}", key.1, d, cells.join(","))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparsityPoint {
    pub d: usize,
    pub r: usize,
    pub nnz_lower: u128,
    /// `d^r (d^r + 1) / 2`.
    pub lower_size: u128,
    pub proportion: f64,
}

/// Share of non-zero entries in the lower triangle of `S(d, r)`, diagonal
/// included. The count is closed-form: every diagonal entry is non-zero, so
/// `nnz_lower = (nnz + d^r) / 2`.
pub fn sparsity_point(d: usize, r: usize, limits: &Limits) -> Result<SparsityPoint> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be positive".into()));
    }
    let side = checked_pow(d, r).ok_or(Error::Overflow("d^r"))? as u128;
    let classes = unique_count(d, r)?;
    if classes > limits.max_vector_len {
        return Err(Error::CapExceeded {
            what: "multi-index enumeration",
            requested: classes as u128,
            limit: limits.max_vector_len as u128,
        });
    }
    let nnz = symmetrizer_nnz(d, r)?;
    let nnz_lower = (nnz + side) / 2;
    let lower_size = side * (side + 1) / 2;
    Ok(SparsityPoint {
        d,
        r,
        nnz_lower,
        lower_size,
        proportion: nnz_lower as f64 / lower_size as f64,
    })
}

pub fn sparsity_curve(ds: &[usize], rs: &[usize], limits: &Limits) -> Result<Vec<SparsityPoint>> {
    let mut out = Vec::with_capacity(ds.len() * rs.len());
    for &d in ds {
        for &r in rs {
            out.push(sparsity_point(d, r, limits)?);
        }
    }
    Ok(out)
}
