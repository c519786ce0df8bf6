//! Command-line front end: argument parsing, `key=value` config files, CSV
//! emission and the artifact manifest.
//!
//! Every subcommand resolves its parameters, validates them before any
//! computation, prints a fixed-order report on stdout and, with `--outdir`,
//! writes its artifacts plus a `manifest` listing the resolved configuration
//! and the sha256 of every artifact.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::asymptotics::{self, ContinuationRecord, QuotientMethod, StudyConfig};
use crate::bubble;
use crate::fracop::{assemble, fmt_f64, DiscreteDomain, DomainKind, Field};
use crate::greens::{self, GreenKernelBall};
use crate::solver::{self, ManifoldProblem, SolverConfig};
use crate::special::{self, Exponents};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const COMMANDS: [&str; 7] = ["constants", "bubble-check", "greens", "solve", "continuation", "kernel", "pohozaev"];

/// Accepts plain reals and ratios such as `1/128`.
fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
    let v = match s.split_once('/') {
        Some((a, b)) => parse(a)? / parse(b)?,
        None => parse(s)?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not a finite number"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "fraclab", version, about = "Restricted fractional Laplacian laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Interval,
    Ball,
    Box,
}

impl From<DomainArg> for DomainKind {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Interval => DomainKind::Interval,
            DomainArg::Ball => DomainKind::Ball,
            DomainArg::Box => DomainKind::Box,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuotientArg {
    Green,
    Ls,
}

impl From<QuotientArg> for QuotientMethod {
    fn from(q: QuotientArg) -> Self {
        match q {
            QuotientArg::Green => QuotientMethod::GreenRepresentation,
            QuotientArg::Ls => QuotientMethod::LeastSquares,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// `key=value` file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts and the manifest.
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, value_parser = parse_real)]
    pub s: f64,
    /// Defaults to the critical exponent `2* - 1`.
    #[arg(long, value_parser = parse_real)]
    pub p: Option<f64>,
    #[arg(long, value_parser = parse_real)]
    pub q: f64,
}

impl ProblemArgs {
    fn exponents(&self) -> Result<Exponents> {
        let p = self.p.unwrap_or_else(|| special::critical_p(self.n, self.s));
        Exponents::new(self.n, self.s, p, self.q)
    }

    fn resolved(&self, out: &mut Vec<(String, String)>) -> Result<()> {
        let e = self.exponents()?;
        push(out, "n", e.n.to_string());
        push(out, "s", fmt_f64(e.s));
        push(out, "p", fmt_f64(e.p));
        push(out, "q", fmt_f64(e.q));
        Ok(())
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, value_enum, default_value = "interval")]
    pub domain: DomainArg,
    /// Half-width or radius of the domain.
    #[arg(long, value_parser = parse_real, default_value = "1")]
    pub size: f64,
    #[arg(long, value_parser = parse_real)]
    pub h: f64,
}

impl GridArgs {
    fn domain(&self, n: usize) -> Result<Arc<DiscreteDomain>> {
        Ok(Arc::new(DiscreteDomain::new(self.domain.into(), n, self.size, self.h)?))
    }

    fn resolved(&self, out: &mut Vec<(String, String)>) {
        push(out, "domain", DomainKind::from(self.domain).name().to_string());
        push(out, "size", fmt_f64(self.size));
        push(out, "h", fmt_f64(self.h));
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_parser = parse_real)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl SolverArgs {
    fn config(&self, n: usize) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::for_dim(n);
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::Usage(format!("tol must be positive, got {t}")));
            }
            cfg.tol = t;
        }
        if let Some(m) = self.max_iter {
            if m == 0 {
                return Err(Error::Usage("max-iter must be positive".into()));
            }
            cfg.max_iter = m;
        }
        Ok(cfg)
    }

    fn resolved(&self, n: usize, out: &mut Vec<(String, String)>) -> Result<()> {
        let cfg = self.config(n)?;
        push(out, "tol", fmt_f64(cfg.tol));
        push(out, "max_iter", cfg.max_iter.to_string());
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
#[command(args_override_self = true)]
pub enum Command {
    /// Closed-form constants for (N, s, p, q).
    Constants {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Residuals of the bubble identities.
    BubbleCheck {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, value_parser = parse_real)]
        s: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Sampled Green and Robin functions of a ball, and R_{N,s,x0}.
    Greens {
        #[arg(long, value_enum, default_value = "interval")]
        domain: DomainArg,
        #[arg(long, value_parser = parse_real, default_value = "1")]
        radius: f64,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, value_parser = parse_real)]
        s: f64,
        /// Pole, comma separated.
        #[arg(long, value_parser = parse_real, value_delimiter = ',', default_value = "0")]
        x0: Vec<f64>,
        /// Sampling spacing.
        #[arg(long, value_parser = parse_real, default_value = "1/16")]
        h: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Minimize F̂ on the constraint set and transform to u.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_parser = parse_real)]
        eps: f64,
        /// Additional randomly perturbed restarts.
        #[arg(long, default_value_t = 0)]
        restarts: usize,
        #[arg(long, value_parser = parse_real, default_value = "0.3")]
        perturbation: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Blow-up study along a geometric ε schedule.
    Continuation {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_parser = parse_real, default_value = "0.5")]
        eps0: f64,
        #[arg(long, value_parser = parse_real, default_value = "0.7")]
        ratio: f64,
        #[arg(long, default_value_t = 12)]
        steps: usize,
        #[arg(long, value_enum, default_value = "green")]
        quotient: QuotientArg,
        #[command(flatten)]
        common: Common,
    },
    /// Near-zero spectrum of the operator linearized at Z.
    Kernel {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, value_parser = parse_real)]
        s: f64,
        #[arg(long, value_parser = parse_real, default_value = "24")]
        half_width: f64,
        #[arg(long, value_parser = parse_real, default_value = "1/32")]
        h: f64,
        /// Threshold below which |λ| counts as zero; automatic when absent.
        #[arg(long, value_parser = parse_real)]
        zero_gap: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Both sides of the Pohozaev identity at a converged solution.
    Pohozaev {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_parser = parse_real)]
        eps: f64,
        #[arg(long, value_enum, default_value = "green")]
        quotient: QuotientArg,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Constants { .. } => "constants",
            Command::BubbleCheck { .. } => "bubble-check",
            Command::Greens { .. } => "greens",
            Command::Solve { .. } => "solve",
            Command::Continuation { .. } => "continuation",
            Command::Kernel { .. } => "kernel",
            Command::Pohozaev { .. } => "pohozaev",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Constants { common, .. }
            | Command::BubbleCheck { common, .. }
            | Command::Greens { common, .. }
            | Command::Solve { common, .. }
            | Command::Continuation { common, .. }
            | Command::Kernel { common, .. }
            | Command::Pohozaev { common, .. } => common,
        }
    }
}

/// Output of one command before it is rendered.
#[derive(Debug, Default)]
pub struct Report {
    /// Resolved parameters, echoed into the manifest.
    pub config: Vec<(String, String)>,
    /// Fixed-order summary printed on stdout.
    pub table: Vec<(String, String)>,
    /// Free-form CSV printed instead of the table (continuation).
    pub csv: Option<String>,
    pub artifacts: Vec<(String, String)>,
    /// Set when the run produced partial results.
    pub failure: Option<Error>,
}

fn push(out: &mut Vec<(String, String)>, key: &str, value: String) {
    out.push((key.to_string(), value));
}

fn render_table(rows: &[(String, String)], format: Format) -> String {
    match format {
        Format::Table => rows.iter().map(|(k, v)| format!("{k}={v}\n")).collect(),
        Format::Csv => {
            let keys: Vec<&str> = rows.iter().map(|(k, _)| k.as_str()).collect();
            let vals: Vec<&str> = rows.iter().map(|(_, v)| v.as_str()).collect();
            format!("{}\n{}\n", keys.join(","), vals.join(","))
        }
    }
}

fn field_csv(f: &Field) -> Result<String> {
    let mut buf = Vec::new();
    f.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is ascii"))
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Usage(format!("{name} must be positive, got {v}")))
    }
}

fn constants(problem: &ProblemArgs) -> Result<Report> {
    let e = problem.exponents()?;
    let mut r = Report::default();
    problem.resolved(&mut r.config)?;
    let k = special::paper_constants(&e)?;
    let t = &mut r.table;
    problem.resolved(t)?;
    push(t, "twoStar", fmt_f64(e.two_star()));
    if e.l_exponent().is_finite() {
        push(t, "lExponent", fmt_f64(e.l_exponent()));
    }
    push(t, "omegaN", fmt_f64(k.omega_n));
    push(t, "cNs", fmt_f64(k.c_ns));
    push(t, "aNs", fmt_f64(k.a_ns));
    push(t, "muNs", fmt_f64(k.mu_ns));
    push(t, "gamma0", fmt_f64(k.gamma0));
    if let Some(coef) = k.blowup_coefficient {
        let kernel = GreenKernelBall::new(e.n, e.s, 1.0)?;
        let rc = greens::boundary_r_constant(&vec![0.0; e.n], &kernel)?;
        push(t, "blowupCoefficient", fmt_f64(coef));
        push(t, "rConstant", fmt_f64(rc));
        push(t, "blowupLimit", fmt_f64(k.blowup_limit(rc)?));
    }
    Ok(r)
}

fn bubble_check(n: usize, s: f64) -> Result<Report> {
    let mut r = Report::default();
    push(&mut r.config, "n", n.to_string());
    push(&mut r.config, "s", fmt_f64(s));
    let lines = bubble::bubble_checks(n, s)?;
    let mut failed = Vec::new();
    for line in &lines {
        push(&mut r.table, line.name, fmt_f64(line.residual));
        if !line.passed() {
            failed.push(line.name);
        }
    }
    if !failed.is_empty() {
        r.failure = Some(Error::Diagnostic(format!("checks above tolerance: {}", failed.join(" "))));
    }
    Ok(r)
}

fn greens_cmd(domain: DomainArg, radius: f64, n: usize, s: f64, x0: &[f64], h: f64) -> Result<Report> {
    if domain == DomainArg::Box {
        return Err(Error::Usage("closed-form Green functions exist for interval and ball only".into()));
    }
    if domain == DomainArg::Interval && n != 1 {
        return Err(Error::Usage("an interval needs --n 1".into()));
    }
    check_positive("h", h)?;
    if x0.len() != n {
        return Err(Error::Usage(format!("x0 has {} coordinates, expected {n}", x0.len())));
    }
    let k = GreenKernelBall::new(n, s, radius)?;
    let rc = greens::boundary_r_constant(x0, &k)?;
    let mut r = Report::default();
    let c = &mut r.config;
    push(c, "domain", DomainKind::from(domain).name().to_string());
    push(c, "radius", fmt_f64(radius));
    push(c, "n", n.to_string());
    push(c, "s", fmt_f64(s));
    push(c, "x0", x0.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";"));
    push(c, "h", fmt_f64(h));
    let t = &mut r.table;
    push(t, "kappa", fmt_f64(k.kappa));
    push(t, "aNs", fmt_f64(k.a_ns));
    push(t, "robinAtX0", fmt_f64(greens::robin_function(x0, &k)?));
    push(t, "rConstant", fmt_f64(rc));
    if n <= 2 {
        let grid = DiscreteDomain::new(DomainKind::from(domain), n, radius, h)?;
        let coords = ["x", "y"];
        let mut csv = format!(
            "# domain={} radius={} s={} rConstant={}\n{},green,robin\n",
            DomainKind::from(domain).name(),
            fmt_f64(radius),
            fmt_f64(s),
            fmt_f64(rc),
            coords[..n].join(",")
        );
        for x in grid.points() {
            let dist: f64 = x.iter().zip(x0).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if dist < 1e-12 {
                continue;
            }
            let cols: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
            csv.push_str(&format!(
                "{},{},{}\n",
                cols.join(","),
                fmt_f64(greens::green_ball(&x, x0, &k)?),
                fmt_f64(greens::robin_function(&x, &k)?)
            ));
        }
        r.artifacts.push(("greens.csv".into(), csv));
    }
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
fn solve_cmd(
    problem: &ProblemArgs,
    grid: &GridArgs,
    solver_args: &SolverArgs,
    eps: f64,
    restarts: usize,
    perturbation: f64,
    seed: u64,
) -> Result<Report> {
    let e = problem.exponents()?;
    check_positive("eps", eps)?;
    let cfg = solver_args.config(e.n)?;
    let mut r = Report::default();
    problem.resolved(&mut r.config)?;
    grid.resolved(&mut r.config);
    solver_args.resolved(e.n, &mut r.config)?;
    push(&mut r.config, "eps", fmt_f64(eps));
    push(&mut r.config, "restarts", restarts.to_string());
    push(&mut r.config, "perturbation", fmt_f64(perturbation));
    push(&mut r.config, "seed", seed.to_string());
    let op = assemble(grid.domain(e.n)?, e.s)?;
    let prob = ManifoldProblem::new(&op, e, eps)?;
    let res = match solver::minimize_manifold(&prob, &prob.bubble_init()?, &cfg) {
        Ok(res) => res,
        Err(Error::NotConverged { reason, last }) => {
            r.artifacts.push(("solve_w.csv".into(), field_csv(&last.w)?));
            r.failure = Some(Error::NoConvergence { iterations: last.iterations, residual: last.residual, reason });
            return Ok(r);
        }
        Err(err) => return Err(err),
    };
    let t = &mut r.table;
    push(t, "lambda", fmt_f64(res.lambda));
    push(t, "sEps", fmt_f64(res.s_eps));
    push(t, "epsEffective", fmt_f64(res.eps_effective));
    push(t, "iterations", res.iterations.to_string());
    push(t, "residual", fmt_f64(res.residual));
    push(t, "uResidual", fmt_f64(res.u_residual));
    push(t, "constraint", fmt_f64(res.w.integral_abs_pow(e.p + 1.0)));
    push(t, "minW", fmt_f64(res.w.min()));
    push(t, "supU", fmt_f64(res.u.sup_norm()));
    push(t, "lambdaBounds", res.lambda_bounds_hold(&e).to_string());
    if restarts > 0 {
        let runs = solver::multi_start(&prob, &cfg, restarts, perturbation, seed)?;
        let spread = runs.iter().map(|x| (x.s_eps - res.s_eps).abs()).fold(0.0, f64::max);
        push(t, "restartSpread", fmt_f64(spread));
    }
    let mut meta = String::new();
    for (k, v) in r.config.iter().chain(r.table.iter()) {
        meta.push_str(&format!("{k}={v}\n"));
    }
    r.artifacts.push(("solve_w.csv".into(), field_csv(&res.w)?));
    r.artifacts.push(("solve_u.csv".into(), field_csv(&res.u)?));
    r.artifacts.push(("solve.meta".into(), meta));
    Ok(r)
}

fn continuation_cmd(
    problem: &ProblemArgs,
    grid: &GridArgs,
    solver_args: &SolverArgs,
    eps0: f64,
    ratio: f64,
    steps: usize,
    quotient: QuotientArg,
) -> Result<Report> {
    let e = problem.exponents()?;
    if !e.is_critical() {
        return Err(Error::Usage("continuation needs the critical exponent p = 2*-1".into()));
    }
    let schedule = asymptotics::geometric_schedule(eps0, ratio, steps)?;
    let mut cfg = StudyConfig::for_dim(e.n);
    cfg.solver = solver_args.config(e.n)?;
    cfg.quotient = quotient.into();
    if cfg.quotient == QuotientMethod::GreenRepresentation && grid.domain == DomainArg::Box && e.n > 1 {
        return Err(Error::Usage("the green quotient needs a ball or interval; use --quotient ls".into()));
    }
    let mut r = Report::default();
    problem.resolved(&mut r.config)?;
    grid.resolved(&mut r.config);
    solver_args.resolved(e.n, &mut r.config)?;
    push(&mut r.config, "eps0", fmt_f64(eps0));
    push(&mut r.config, "ratio", fmt_f64(ratio));
    push(&mut r.config, "steps", steps.to_string());
    push(&mut r.config, "quotient", format!("{quotient:?}").to_lowercase());
    let op = assemble(grid.domain(e.n)?, e.s)?;
    let out = asymptotics::blowup_study(&op, &e, &schedule, &cfg)?;
    let mut csv = String::new();
    if grid.domain != DomainArg::Box || e.n == 1 {
        let k = GreenKernelBall::new(e.n, e.s, grid.size)?;
        let rc = greens::boundary_r_constant(&vec![0.0; e.n], &k)?;
        let limit = special::paper_constants(&e)?.blowup_limit(rc)?;
        csv.push_str(&format!("# blowupLimit={}\n", fmt_f64(limit)));
    }
    let untrusted: Vec<String> =
        out.records.iter().enumerate().filter(|(_, r)| !r.trusted).map(|(i, _)| i.to_string()).collect();
    if !untrusted.is_empty() {
        csv.push_str(&format!("# untrusted={}\n", untrusted.join(";")));
    }
    csv.push_str(ContinuationRecord::CSV_HEADER);
    csv.push('\n');
    for rec in &out.records {
        csv.push_str(&rec.csv_row());
        csv.push('\n');
    }
    if let Some(reason) = &out.stopped {
        if reason.starts_with("solver failed") {
            r.failure = Some(Error::Diagnostic(reason.clone()));
        }
    }
    r.artifacts.push(("continuation.csv".into(), csv.clone()));
    r.csv = Some(csv);
    Ok(r)
}

fn kernel_cmd(n: usize, s: f64, half_width: f64, h: f64, zero_gap: Option<f64>) -> Result<Report> {
    let e = Exponents::critical(n, s, special::critical_p(n, s) + 1.0)?;
    check_positive("half-width", half_width)?;
    check_positive("h", h)?;
    if let Some(g) = zero_gap {
        check_positive("zero-gap", g)?;
    }
    let mut r = Report::default();
    push(&mut r.config, "n", n.to_string());
    push(&mut r.config, "s", fmt_f64(s));
    push(&mut r.config, "half_width", fmt_f64(half_width));
    push(&mut r.config, "h", fmt_f64(h));
    push(&mut r.config, "zero_gap", zero_gap.map(fmt_f64).unwrap_or_else(|| "auto".into()));
    let rep = solver::linearized_kernel(&e, half_width, h, zero_gap)?;
    let t = &mut r.table;
    push(t, "nearZeroCount", rep.near_zero_count.to_string());
    push(t, "gap", fmt_f64(rep.gap));
    push(t, "lowest", fmt_f64(rep.spectrum[0]));
    for (i, v) in rep.by_magnitude.iter().take(4).enumerate() {
        push(t, &format!("lambdaByMagnitude{}", i + 1), fmt_f64(*v));
    }
    let domain = rep.vectors[0].domain().clone();
    for (i, m) in solver::sampled_kernel_modes(&e, &domain)?.iter().enumerate() {
        push(t, &format!("cosinePsi{}", i + 1), fmt_f64(rep.cosine_with_kernel(m)?));
        push(t, &format!("cosineSpanPsi{}", i + 1), fmt_f64(rep.cosine_with_span(m, n + 1)?));
    }
    let mut csv = String::from("index,lambda\n");
    for (i, v) in rep.spectrum.iter().enumerate() {
        csv.push_str(&format!("{i},{}\n", fmt_f64(*v)));
    }
    r.artifacts.push(("kernel.csv".into(), csv));
    Ok(r)
}

fn pohozaev_cmd(
    problem: &ProblemArgs,
    grid: &GridArgs,
    solver_args: &SolverArgs,
    eps: f64,
    quotient: QuotientArg,
) -> Result<Report> {
    let e = problem.exponents()?;
    check_positive("eps", eps)?;
    let cfg = solver_args.config(e.n)?;
    let mut r = Report::default();
    problem.resolved(&mut r.config)?;
    grid.resolved(&mut r.config);
    solver_args.resolved(e.n, &mut r.config)?;
    push(&mut r.config, "eps", fmt_f64(eps));
    push(&mut r.config, "quotient", format!("{quotient:?}").to_lowercase());
    let op = assemble(grid.domain(e.n)?, e.s)?;
    let prob = ManifoldProblem::new(&op, e, eps)?;
    let res = solver::minimize_manifold(&prob, &prob.bubble_init()?, &cfg)?;
    let (lhs, rhs) = asymptotics::pohozaev_check(&res.u, &e, res.eps_effective, quotient.into())?;
    let t = &mut r.table;
    push(t, "epsEffective", fmt_f64(res.eps_effective));
    push(t, "pohozaevLhs", fmt_f64(lhs));
    push(t, "pohozaevRhs", fmt_f64(rhs));
    push(t, "relativeMismatch", fmt_f64(((lhs - rhs) / rhs).abs()));
    Ok(r)
}

fn dispatch(cmd: &Command) -> Result<Report> {
    match cmd {
        Command::Constants { problem, .. } => constants(problem),
        Command::BubbleCheck { n, s, .. } => bubble_check(*n, *s),
        Command::Greens { domain, radius, n, s, x0, h, .. } => greens_cmd(*domain, *radius, *n, *s, x0, *h),
        Command::Solve { problem, grid, solver, eps, restarts, perturbation, common } => {
            solve_cmd(problem, grid, solver, *eps, *restarts, *perturbation, common.seed)
        }
        Command::Continuation { problem, grid, solver, eps0, ratio, steps, quotient, .. } => {
            continuation_cmd(problem, grid, solver, *eps0, *ratio, *steps, *quotient)
        }
        Command::Kernel { n, s, half_width, h, zero_gap, .. } => kernel_cmd(*n, *s, *half_width, *h, *zero_gap),
        Command::Pohozaev { problem, grid, solver, eps, quotient, .. } => {
            pohozaev_cmd(problem, grid, solver, *eps, *quotient)
        }
    }
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
pub fn read_config(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("{}:{}: expected key=value", path.display(), lineno + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splices `--config` entries into the argument list right after the
/// subcommand, so that later command-line flags override them.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let text = a.to_string_lossy().into_owned();
        if text == "--config" {
            let path = it.next().ok_or_else(|| Error::Usage("--config needs a path".into()))?;
            config = Some(PathBuf::from(path));
        } else if let Some(path) = text.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let entries = read_config(&path)?;
    let mut position = rest.iter().position(|a| COMMANDS.contains(&a.to_string_lossy().as_ref()));
    let mut spliced = Vec::new();
    for (k, v) in entries {
        if k == "command" {
            if position.is_none() {
                rest.insert(1.min(rest.len()), OsString::from(&v));
                position = Some(1.min(rest.len() - 1));
            }
            continue;
        }
        spliced.push(OsString::from(format!("--{}", k.replace('_', "-"))));
        spliced.push(OsString::from(v));
    }
    let at = position.ok_or_else(|| Error::Usage("no subcommand given".into()))? + 1;
    rest.splice(at..at, spliced);
    Ok(rest)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_outputs(dir: &Path, command: &str, report: &Report) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = format!("command={command}\n");
    for (k, v) in &report.config {
        manifest.push_str(&format!("{k}={v}\n"));
    }
    for (name, content) in &report.artifacts {
        fs::write(dir.join(name), content)?;
        manifest.push_str(&format!("artifact={name} sha256={}\n", sha256_hex(content.as_bytes())));
    }
    if let Some(err) = &report.failure {
        manifest.push_str(&format!("failure={}\n", one_line(&err.to_string())));
    }
    fs::write(dir.join("manifest"), manifest)?;
    Ok(())
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Usage(_) => "usage",
        Error::Domain(_) => "domain",
        Error::Mismatch(_) => "mismatch",
        Error::Singular(_) => "singular",
        Error::NoConvergence { .. } | Error::NotConverged { .. } => "convergence",
        Error::Diagnostic(_) => "diagnostic",
        Error::Io(_) => "io",
    }
}

/// Exit status for an error: 2 for anything rejected before computing,
/// 1 for numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Usage(_) | Error::Domain(_) | Error::Mismatch(_) | Error::Io(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

fn report_error(err: &Error) {
    eprintln!("error kind={} message={}", error_kind(err), one_line(&err.to_string()));
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("FRACLAB_THREADS") else { return Ok(()) };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| Error::Usage(format!("FRACLAB_THREADS must be a positive integer, got '{v}'")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

/// Full command-line entry point; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match configure_threads().and_then(|_| expand_config(args)) {
        Ok(a) => a,
        Err(err) => {
            report_error(&err);
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    let common = cli.command.common().clone();
    let report = match dispatch(&cli.command) {
        Ok(r) => r,
        Err(err) => {
            report_error(&err);
            return exit_code(&err);
        }
    };
    match &report.csv {
        Some(csv) => print!("{csv}"),
        None => print!("{}", render_table(&report.table, common.format)),
    }
    if let Some(dir) = &common.outdir {
        if let Err(err) = write_outputs(dir, cli.command.name(), &report) {
            report_error(&err);
            return exit_code(&err);
        }
    }
    match &report.failure {
        Some(err) => {
            report_error(err);
            EXIT_NUMERICAL
        }
        None => EXIT_OK,
    }
}
