//! Command-line front end: `smooth`, `eval`, `verify`, `table`, `optimize`.
//!
//! [`run`] does all the work and returns the captured streams and exit code,
//! so tests can drive it without spawning a process.
//!
//! Exit codes: 0 success, 1 usage, 2 parse or semantic error, 3 oracle
//! failure or verification mismatch, 4 non-convergence.

use std::ffi::OsString;
use std::io::Read;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use weierstrass::homotopy::{minimize_homotopy, Schedule, SolveReport};
use weierstrass::oracle::OracleConfig;
use weierstrass::parser::{self, format_number, ParseError, PrintOptions};
use weierstrass::smoothing::{monomial_table, smooth, SigmaPolynomial, SmoothSigma};
use weierstrass::verify::{default_tolerance, random_points, verify_against, VerifyReport};
use weierstrass::Expression;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

const DEFAULT_DIGITS: usize = 12;

const AFTER_HELP: &str = "\
Expressions use variables x1..xn, + - * ^, sin, cos, exp(NUMBER),
sign(w . x), relu(w . x) and rbf(amp=A, center=[c1,..], width=D).
Arguments of sign and relu must be linear forms without a constant; to model
a bias b, add a variable fixed at 1 and write relu(w . x + b*x_{n+1}).
Pass '-' to read the expression from standard input.";

#[derive(Debug, Parser)]
#[command(
    name = "weierstrass",
    version,
    about = "Closed-form Gaussian smoothing of expressions"
)]
#[command(after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Print numbers with the shortest round-trip representation
    #[arg(long, global = true)]
    pub full_precision: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the smoothed expression
    Smooth(SmoothArgs),
    /// Evaluate an expression, optionally smoothed, at one point
    Eval(EvalArgs),
    /// Compare the closed form against the numerical oracle
    Verify(VerifyArgs),
    /// Print the table of smoothed monomials u(x, p, sigma)
    Table(TableArgs),
    /// Minimize with a Gaussian homotopy schedule
    Optimize(OptimizeArgs),
}

#[derive(Debug, Args)]
pub struct SmoothArgs {
    #[arg(allow_hyphen_values = true)]
    pub expr: String,
    #[arg(long)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(allow_hyphen_values = true)]
    pub expr: String,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub at: Vec<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(allow_hyphen_values = true)]
    pub expr: String,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to 1e-8, or 1e-6 when sign or relu terms are present
    #[arg(long)]
    pub tol: Option<f64>,
    /// Add this constant to the closed form before comparing
    #[arg(long, hide = true, allow_hyphen_values = true)]
    pub inject_error: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long)]
    pub pmax: u32,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(allow_hyphen_values = true)]
    pub expr: String,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub x0: Vec<f64>,
    #[arg(long, default_value_t = Schedule::DEFAULT_SIGMA_MAX)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = Schedule::DEFAULT_SIGMA_MIN)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = Schedule::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self::with(EXIT_OK, stdout, String::new())
    }

    fn fail(code: i32, stderr: impl Into<String>) -> Self {
        Self::with(code, String::new(), stderr.into())
    }

    fn with(code: i32, stdout: String, stderr: String) -> Self {
        Self {
            code,
            stdout,
            stderr,
        }
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// `stdin` is read only when the expression argument is `-`.
pub fn run<I, T>(args: I, stdin: &mut dyn Read) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome::fail(EXIT_USAGE, text)
            } else {
                Outcome::ok(text)
            };
        }
    };
    let ctx = Context {
        format: cli.format,
        digits: (!cli.full_precision).then_some(DEFAULT_DIGITS),
    };
    match &cli.command {
        Command::Smooth(a) => cmd_smooth(&ctx, a, stdin),
        Command::Eval(a) => cmd_eval(&ctx, a, stdin),
        Command::Verify(a) => cmd_verify(&ctx, a, stdin),
        Command::Table(a) => cmd_table(&ctx, a),
        Command::Optimize(a) => cmd_optimize(&ctx, a, stdin),
    }
    .unwrap_or_else(|o| o)
}

struct Context {
    format: Format,
    digits: Option<usize>,
}

impl Context {
    fn num(&self, x: f64) -> String {
        format_number(x, self.digits)
    }

    fn expr(&self, e: &Expression) -> String {
        parser::print_with(
            e,
            &PrintOptions {
                significant_digits: self.digits,
            },
        )
    }

    fn point(&self, p: &[f64]) -> String {
        let parts: Vec<String> = p.iter().map(|&v| self.num(v)).collect();
        format!("({})", parts.join(", "))
    }
}

fn sci(x: f64) -> String {
    format!("{x:.2e}")
}

type CmdResult = Result<Outcome, Outcome>;

fn read_source(arg: &str, stdin: &mut dyn Read) -> Result<String, Outcome> {
    if arg != "-" {
        return Ok(arg.to_string());
    }
    let mut s = String::new();
    stdin.read_to_string(&mut s).map_err(|e| {
        Outcome::fail(
            EXIT_USAGE,
            format!("error: cannot read standard input: {e}\n"),
        )
    })?;
    Ok(s.trim_end().to_string())
}

fn parse_source(src: &str, dimension: Option<usize>) -> Result<Expression, Outcome> {
    let parsed = match dimension {
        Some(n) => parser::parse_in(src, n),
        None => parser::parse(src),
    };
    parsed.map_err(|e: ParseError| {
        let mut msg = e.render(src);
        if !msg.ends_with('\n') {
            msg.push('\n');
        }
        Outcome::fail(EXIT_PARSE, msg)
    })
}

fn sigma_flag(name: &str, sigma: f64, allow_zero: bool) -> Result<SmoothSigma, Outcome> {
    let usage = || {
        let bound = if allow_zero { ">= 0" } else { "> 0" };
        Outcome::fail(
            EXIT_USAGE,
            format!("error: --{name} must be finite and {bound}, got {sigma}\n"),
        )
    };
    if !allow_zero && sigma == 0.0 {
        return Err(usage());
    }
    SmoothSigma::new(sigma).map_err(|_| usage())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn cmd_smooth(ctx: &Context, a: &SmoothArgs, stdin: &mut dyn Read) -> CmdResult {
    let sigma = sigma_flag("sigma", a.sigma, true)?;
    let src = read_source(&a.expr, stdin)?;
    let g = smooth(&parse_source(&src, None)?, sigma);
    Ok(Outcome::ok(match ctx.format {
        Format::Text => format!("{}\n", ctx.expr(&g)),
        Format::Json => to_json(&g),
    }))
}

#[derive(Serialize)]
struct EvalReport<'a> {
    point: &'a [f64],
    sigma: Option<f64>,
    value: f64,
}

fn cmd_eval(ctx: &Context, a: &EvalArgs, stdin: &mut dyn Read) -> CmdResult {
    let sigma = a.sigma.map(|s| sigma_flag("sigma", s, true)).transpose()?;
    if a.at.iter().any(|v| !v.is_finite()) {
        return Err(Outcome::fail(
            EXIT_USAGE,
            "error: --at coordinates must be finite\n",
        ));
    }
    let src = read_source(&a.expr, stdin)?;
    let mut e = parse_source(&src, Some(a.at.len()))?;
    if let Some(s) = sigma {
        e = smooth(&e, s);
    }
    let value = e
        .eval(&a.at)
        .map_err(|err| Outcome::fail(EXIT_PARSE, format!("error: {err}\n")))?;
    Ok(Outcome::ok(match ctx.format {
        Format::Text => format!("{}\n", ctx.num(value)),
        Format::Json => to_json(&EvalReport {
            point: &a.at,
            sigma: a.sigma,
            value,
        }),
    }))
}

fn cmd_verify(ctx: &Context, a: &VerifyArgs, stdin: &mut dyn Read) -> CmdResult {
    let sigma = sigma_flag("sigma", a.sigma, false)?;
    if let Some(t) = a.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Outcome::fail(
                EXIT_USAGE,
                format!("error: --tol must be positive, got {t}\n"),
            ));
        }
    }
    if a.points == 0 {
        return Err(Outcome::fail(
            EXIT_USAGE,
            "error: --points must be positive\n",
        ));
    }
    let src = read_source(&a.expr, stdin)?;
    let e = parse_source(&src, None)?;
    let mut closed = smooth(&e, sigma);
    if let Some(c) = a.inject_error {
        let shift = Expression::constant(e.dimension(), c);
        closed = closed
            .add(&shift)
            .map_err(|err| Outcome::fail(EXIT_PARSE, format!("error: {err}\n")))?;
    }
    let tol = a.tol.unwrap_or_else(|| default_tolerance(&e));
    let points = random_points(e.dimension(), a.points, a.seed);
    let report = verify_against(
        &closed,
        &e,
        sigma.value(),
        &points,
        tol,
        &OracleConfig::default(),
    )
    .map_err(|err| Outcome::fail(EXIT_ORACLE, format!("error: {err}\n")))?;
    let out = match ctx.format {
        Format::Text => render_verify(ctx, &report),
        Format::Json => to_json(&report),
    };
    Ok(if report.pass {
        Outcome::ok(out)
    } else {
        Outcome::with(
            EXIT_ORACLE,
            out,
            format!(
                "error: max abs error {} exceeds tolerance {}\n",
                sci(report.max_abs_error),
                sci(report.tolerance)
            ),
        )
    })
}

fn render_verify(ctx: &Context, r: &VerifyReport) -> String {
    let mut out = String::new();
    for p in &r.points {
        out.push_str(&format!(
            "{}  closed={}  oracle={}  est={}  err={}\n",
            ctx.point(&p.point),
            ctx.num(p.closed_form),
            ctx.num(p.oracle),
            sci(p.error_estimate),
            sci(p.abs_error),
        ));
    }
    out.push_str(&format!(
        "max abs error {} (tolerance {}): {}\n",
        sci(r.max_abs_error),
        sci(r.tolerance),
        if r.pass { "PASS" } else { "FAIL" }
    ));
    out
}

#[derive(Serialize)]
struct TableRow<'a> {
    #[serde(flatten)]
    row: &'a SigmaPolynomial,
    rendered: String,
}

fn cmd_table(ctx: &Context, a: &TableArgs) -> CmdResult {
    let rows =
        monomial_table(a.pmax).map_err(|e| Outcome::fail(EXIT_USAGE, format!("error: {e}\n")))?;
    Ok(Outcome::ok(match ctx.format {
        Format::Text => {
            let mut out = String::from("p\tu(x,p,sigma)\n");
            for r in &rows {
                out.push_str(&format!("{}\t{}\n", r.p, r));
            }
            out
        }
        Format::Json => {
            let rows: Vec<TableRow> = rows
                .iter()
                .map(|row| TableRow {
                    row,
                    rendered: row.to_string(),
                })
                .collect();
            to_json(&rows)
        }
    }))
}

fn cmd_optimize(ctx: &Context, a: &OptimizeArgs, stdin: &mut dyn Read) -> CmdResult {
    let usage = |e: &dyn std::fmt::Display| Outcome::fail(EXIT_USAGE, format!("error: {e}\n"));
    let sched = Schedule::geometric(a.sigma_max, a.sigma_min, a.steps).map_err(|e| usage(&e))?;
    if !(a.tol > 0.0 && a.tol.is_finite()) {
        return Err(usage(&format!("--tol must be positive, got {}", a.tol)));
    }
    if a.max_iter == 0 {
        return Err(usage(&"--max-iter must be positive"));
    }
    if a.x0.iter().any(|v| !v.is_finite()) {
        return Err(usage(&"--x0 coordinates must be finite"));
    }
    let src = read_source(&a.expr, stdin)?;
    let e = parse_source(&src, Some(a.x0.len()))?;
    let report = minimize_homotopy(&e, &sched, &a.x0, a.tol, a.max_iter)
        .map_err(|err| Outcome::fail(EXIT_PARSE, format!("error: {err}\n")))?;
    let out = match ctx.format {
        Format::Text => render_solve(ctx, &report),
        Format::Json => to_json(&report),
    };
    Ok(if report.converged {
        Outcome::ok(out)
    } else {
        let reason = report
            .failure
            .as_deref()
            .unwrap_or("final stage did not converge");
        Outcome::with(
            EXIT_NOT_CONVERGED,
            out,
            format!("error: not converged: {reason}\n"),
        )
    })
}

fn render_solve(ctx: &Context, r: &SolveReport) -> String {
    let mut out = String::new();
    for s in &r.stages {
        out.push_str(&format!(
            "sigma={}  iterations={}  value={}  |grad|={}  point={}{}\n",
            ctx.num(s.sigma),
            s.iterations,
            ctx.num(s.value),
            sci(s.gradient_norm),
            ctx.point(&s.point),
            if s.converged { "" } else { "  (not converged)" },
        ));
    }
    if let Some(f) = &r.failure {
        out.push_str(&format!("failure: {f}\n"));
    }
    if let Some(p) = r.final_point() {
        out.push_str(&format!("final point {}\n", ctx.point(p)));
    }
    out.push_str(&format!(
        "converged: {}  function evaluations: {}\n",
        r.converged, r.function_evaluations
    ));
    out
}
