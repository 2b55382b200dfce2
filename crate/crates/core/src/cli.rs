//! The `netmod` command-line front-end.
//!
//! Exit codes: 0 on success, 2 when the answer is a valid infeasibility
//! verdict, 1 on errors.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::decomp::{
    build_ratio_matrices, diagonal_spread, gmd, jet2, kgmd_to_kjet, lift_constant_diagonal,
    reconstruction_error, KJetResult, DET_MATCH_TOL,
};
use crate::error::{Error, Result};
use crate::exact2::{exact_2gmd, feasibility_2gmd, jet_residual, FEAS_SLACK, TAU_DEG};
use crate::matcore::{matrix_from_json, CMatrix, Tolerances};
use crate::multicast::{build_scheme_kuser, exact_pair, sic_simulate, MulticastScheme, TOL_RATE};
use crate::rateless::{
    column_phase_distance, rateless_channel_set, three_rate_feasible, three_rate_offdiag,
    three_rate_x, two_rate_precoder, RatelessSpec,
};
use crate::spacetime::{ext_mul, st_kgmd};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

const DEFAULT_LIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "netmod", version, about = "Joint triangularizations and multicast scheme design")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Drawn from entropy when absent; always recorded in the report.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Threshold for the structural checks printed in reports.
    #[arg(long, global = true)]
    pub tol_structural: Option<f64>,
    /// Triangularity / diagonal tolerance of the K-GMD lift.
    #[arg(long, global = true)]
    pub tol_lift: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "name")]
pub enum Command {
    /// Geometric mean decomposition of one matrix.
    Gmd {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Joint equi-diagonal triangularization of two matrices.
    Jet {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Joint triangularization of K+1 matrices with equal |det|.
    Kjet {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        /// Block count used when no exact K-GMD is available.
        #[arg(long, default_value_t = 16)]
        blocks: usize,
    },
    /// Feasibility verdict and exact joint GMD of two real 2x2 matrices.
    Exact2 {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Space-time joint GMD of unit-|det| matrices.
    Stgmd {
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value_t = 16)]
        blocks: usize,
    },
    /// Common-message multicast scheme design.
    Multicast {
        #[command(flatten)]
        channels: ChannelArgs,
    },
    /// Rateless closed forms and verdicts.
    #[command(group(ArgGroup::new("levels").required(true).args(["two_rate", "three_rate"])))]
    Rateless {
        #[arg(long)]
        two_rate: bool,
        #[arg(long)]
        three_rate: bool,
        #[arg(long)]
        rate: f64,
    },
    /// Monte-Carlo SIC simulation of a multicast scheme.
    Simulate {
        #[command(flatten)]
        channels: ChannelArgs,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Also write the per-stream CSV table here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChannelArgs {
    /// Channel matrix files, one per user.
    #[arg(long = "in", conflicts_with_all = ["two_rate", "three_rate"])]
    pub inputs: Vec<PathBuf>,
    /// Input covariance; defaults to I/n.
    #[arg(long)]
    pub cx: Option<PathBuf>,
    /// Use the two-level rateless channels.
    #[arg(long, requires = "rate", conflicts_with = "three_rate")]
    pub two_rate: bool,
    /// Use the three-level rateless channels.
    #[arg(long, requires = "rate")]
    pub three_rate: bool,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = 16)]
    pub blocks: usize,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gmd { .. } => "gmd",
            Command::Jet { .. } => "jet",
            Command::Kjet { .. } => "kjet",
            Command::Exact2 { .. } => "exact2",
            Command::Stgmd { .. } => "stgmd",
            Command::Multicast { .. } => "multicast",
            Command::Rateless { .. } => "rateless",
            Command::Simulate { .. } => "simulate",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ToleranceEcho {
    matcore: Tolerances,
    lift: f64,
    det_match: f64,
    feasibility_slack: f64,
    degenerate_gap: f64,
    rate_match: f64,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a Cli,
    tolerances: ToleranceEcho,
    seed: u64,
    #[serde(flatten)]
    result: Value,
}

enum Outcome {
    Done(Value),
    Infeasible(Value),
}

struct Ctx {
    tol: Tolerances,
    lift_tol: f64,
    seed: u64,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("netmod {}: {e}", cli.command.name());
            EXIT_ERROR
        }
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let mut tol = Tolerances::default();
    if let Some(t) = cli.common.tol_structural {
        tol.structural = t;
    }
    let ctx = Ctx {
        tol,
        lift_tol: cli.common.tol_lift.unwrap_or(DEFAULT_LIFT_TOL),
        seed: cli.common.seed.unwrap_or_else(rand::random),
    };
    let outcome = match &cli.command {
        Command::Gmd { input } => cmd_gmd(&ctx, input)?,
        Command::Jet { inputs } => cmd_jet(&ctx, inputs)?,
        Command::Kjet { inputs, blocks } => cmd_kjet(&ctx, inputs, *blocks)?,
        Command::Exact2 { inputs } => cmd_exact2(&ctx, inputs)?,
        Command::Stgmd { inputs, blocks } => cmd_stgmd(inputs, *blocks)?,
        Command::Multicast { channels } => Outcome::Done(json!({ "scheme": scheme_summary(&scheme_from(channels)?) })),
        Command::Rateless {
            two_rate,
            three_rate: _,
            rate,
        } => cmd_rateless(*two_rate, *rate)?,
        Command::Simulate {
            channels,
            trials,
            table,
        } => cmd_simulate(&ctx, channels, *trials, table.as_deref())?,
    };
    let (code, result) = match outcome {
        Outcome::Done(v) => (EXIT_OK, v),
        Outcome::Infeasible(v) => (EXIT_INFEASIBLE, v),
    };
    let report = Report {
        tool: "netmod",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        config: cli,
        tolerances: ToleranceEcho {
            matcore: ctx.tol,
            lift: ctx.lift_tol,
            det_match: DET_MATCH_TOL,
            feasibility_slack: FEAS_SLACK,
            degenerate_gap: TAU_DEG,
            rate_match: TOL_RATE,
        },
        seed: ctx.seed,
        result,
    };
    let value = serde_json::to_value(&report).map_err(|e| Error::Io(e.to_string()))?;
    let text = match cli.common.format {
        Format::Json => to_json(&value),
        Format::Csv => to_csv(&value),
    };
    write_output(cli.common.out.as_deref(), &text)?;
    Ok(code)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io(e.to_string())),
    }
}

fn load(path: &Path) -> Result<CMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    matrix_from_json(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn load_all(paths: &[PathBuf], expect: Option<usize>) -> Result<Vec<CMatrix>> {
    if let Some(k) = expect {
        if paths.len() != k {
            return Err(Error::InvalidParams(format!("expected {k} input matrices, got {}", paths.len())));
        }
    }
    paths.iter().map(|p| load(p)).collect()
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable")
}

fn real_diag(m: &CMatrix) -> Vec<f64> {
    m.diag().iter().map(|z| z.re).collect()
}

fn cmd_gmd(ctx: &Ctx, input: &Path) -> Result<Outcome> {
    let a = load(input)?;
    let g = gmd(&a)?;
    Ok(Outcome::Done(json!({
        "lambda": g.lambda,
        "diagonal": real_diag(&g.t),
        "reconstruction_error": reconstruction_error(&g.u, &g.t, &g.v, &a),
        "orthonormality_error": g.u.orthonormality_error().max(g.v.orthonormality_error()),
        "t_shape": g.t.shape_report(ctx.tol.structural),
        "u": g.u,
        "t": g.t,
        "v": g.v,
    })))
}

fn cmd_jet(ctx: &Ctx, inputs: &[PathBuf]) -> Result<Outcome> {
    let a = load_all(inputs, Some(2))?;
    let j = jet2(&a[0], &a[1])?;
    Ok(Outcome::Done(json!({
        "diagonal": real_diag(&j.r1),
        "diagonal_spread": diagonal_spread(&[j.r1.clone(), j.r2.clone()]),
        "reconstruction_errors": [
            reconstruction_error(&j.u1, &j.r1, &j.v, &a[0]),
            reconstruction_error(&j.u2, &j.r2, &j.v, &a[1]),
        ],
        "r_shapes": [j.r1.shape_report(ctx.tol.structural), j.r2.shape_report(ctx.tol.structural)],
        "u1": j.u1,
        "u2": j.u2,
        "v": j.v,
        "r1": j.r1,
        "r2": j.r2,
    })))
}

/// JET of all of `g_list`, through the exact K-GMD of the ratios when one
/// exists and the space-time decomposition otherwise.
fn joint_triangularization(g_list: &[CMatrix], blocks: usize, lift_tol: f64) -> Result<(&'static str, usize, KJetResult)> {
    if g_list.len() < 2 {
        return Err(Error::InvalidParams("kjet needs at least two matrices".into()));
    }
    if g_list.len() == 2 {
        let j = jet2(&g_list[0], &g_list[1])?;
        let res = KJetResult {
            u_list: vec![j.u1, j.u2],
            v: j.v,
            r_list: vec![j.r1, j.r2],
        };
        return Ok(("jet", 1, res));
    }
    let ratios = build_ratio_matrices(g_list)?;
    if ratios.len() == 2 {
        if let Some((u1, u2, v)) = exact_pair(&ratios[0], &ratios[1]) {
            return Ok(("exact", 1, kgmd_to_kjet(g_list, &[u1, u2], &v, lift_tol)?));
        }
    }
    let st = st_kgmd(&ratios, blocks)?;
    let g_ext: Vec<CMatrix> = g_list.iter().map(|g| g.block_extend(st.copies)).collect();
    let (res, _) = lift_constant_diagonal(&g_ext, &st.u_list, &st.v, lift_tol)?;
    Ok(("space-time", st.copies, res))
}

fn cmd_kjet(ctx: &Ctx, inputs: &[PathBuf], blocks: usize) -> Result<Outcome> {
    let g_list = load_all(inputs, None)?;
    let (mode, copies, res) = joint_triangularization(&g_list, blocks, ctx.lift_tol)?;
    let errors = g_list
        .iter()
        .zip(res.u_list.iter().zip(&res.r_list))
        .map(|(g, (u, r))| {
            let t = u.adjoint_mul(&ext_mul(g, &res.v)?)?;
            Ok(t.sub(r)?.frobenius_norm() / (g.frobenius_norm() * (copies as f64).sqrt()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = json!({
        "mode": mode,
        "copies": copies,
        "streams": res.v.cols(),
        "diagonal": res.diagonal(0),
        "diagonal_spread": diagonal_spread(&res.r_list),
        "projection_errors": errors,
        "lower_residuals": res.r_list.iter().map(|r| r.lower_residual()).collect::<Vec<_>>(),
    });
    if copies == 1 {
        out["u_list"] = to_value(&res.u_list);
        out["v"] = to_value(&res.v);
        out["r_list"] = to_value(&res.r_list);
    }
    Ok(Outcome::Done(out))
}

fn cmd_exact2(ctx: &Ctx, inputs: &[PathBuf]) -> Result<Outcome> {
    let a = load_all(inputs, Some(2))?;
    let jet = jet_residual(&a[0], &a[1])?;
    let feasible = feasibility_2gmd(&jet.residual)?;
    if !feasible {
        return Ok(Outcome::Infeasible(json!({
            "feasible": false,
            "residual": jet.residual,
        })));
    }
    let e = exact_2gmd(&a[0], &a[1])?;
    let unit = [&e.t1, &e.t2]
        .iter()
        .flat_map(|t| t.diag())
        .map(|z| (z - 1.0).norm())
        .fold(0.0, f64::max);
    Ok(Outcome::Done(json!({
        "feasible": true,
        "residual": jet.residual,
        "unit_diagonal_deviation": unit,
        "reconstruction_errors": [
            reconstruction_error(&e.u1, &e.t1, &e.v, &a[0]),
            reconstruction_error(&e.u2, &e.t2, &e.v, &a[1]),
        ],
        "t_shapes": [e.t1.shape_report(ctx.tol.structural), e.t2.shape_report(ctx.tol.structural)],
        "s1": [e.s1.re, e.s1.im],
        "s2": [e.s2.re, e.s2.im],
        "u1": e.u1,
        "u2": e.u2,
        "v": e.v,
        "t1": e.t1,
        "t2": e.t2,
    })))
}

fn cmd_stgmd(inputs: &[PathBuf], blocks: usize) -> Result<Outcome> {
    let a_list = load_all(inputs, None)?;
    let st = st_kgmd(&a_list, blocks)?;
    let errors = a_list
        .iter()
        .enumerate()
        .map(|(i, a)| st.projection_error(i, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome::Done(json!({
        "n": st.n,
        "copies": st.copies,
        "retained": st.retained,
        "dropped": st.dropped,
        "total": st.total,
        "retained_fraction": st.retained_fraction(),
        "diag_constants": st.diag_constants,
        "flatness": st.flatness(),
        "unit_deviation": st.unit_deviation(),
        "orthonormality_error": st.orthonormality_error(),
        "projection_errors": errors,
    })))
}

fn scheme_from(ch: &ChannelArgs) -> Result<MulticastScheme> {
    let levels = if ch.two_rate {
        Some(2)
    } else if ch.three_rate {
        Some(3)
    } else {
        None
    };
    let (hs, cx) = match levels {
        Some(m) => {
            let rate = ch
                .rate
                .ok_or_else(|| Error::InvalidParams("--rate is required with rateless channels".into()))?;
            rateless_channel_set(m, rate)?
        }
        None => {
            if ch.inputs.is_empty() {
                return Err(Error::InvalidParams(
                    "give channel matrices with --in or use --two-rate / --three-rate".into(),
                ));
            }
            let hs = load_all(&ch.inputs, None)?;
            let cx = match &ch.cx {
                Some(p) => load(p)?,
                None => {
                    let n = hs[0].cols();
                    CMatrix::identity(n).scale_real(1.0 / n as f64)
                }
            };
            (hs, cx)
        }
    };
    build_scheme_kuser(&hs, &cx, ch.blocks)
}

fn scheme_summary(s: &MulticastScheme) -> Value {
    let mut out = json!({
        "mode": s.mode,
        "n": s.n,
        "copies": s.copies,
        "streams": s.streams(),
        "capacities": s.users.iter().map(|u| u.capacity).collect::<Vec<_>>(),
        "gains": s.gains,
        "stream_rates": s.stream_rates,
        "rate_per_use": s.rate_per_use(),
        "gain_spread": s.gain_spread(),
    });
    if s.copies == 1 {
        out["v"] = to_value(&s.v);
        out["precoder"] = to_value(&s.precoder());
    }
    out
}

fn cmd_rateless(two_rate: bool, rate: f64) -> Result<Outcome> {
    if two_rate {
        let spec = RatelessSpec::new(2, rate)?;
        let closed = two_rate_precoder(rate);
        let (hs, cx) = rateless_channel_set(2, rate)?;
        let s = build_scheme_kuser(&hs, &cx, 1)?;
        return Ok(Outcome::Done(json!({
            "levels": 2,
            "rate": rate,
            "alpha": spec.alpha,
            "precoder_closed_form": closed,
            "precoder_pipeline": s.v,
            "column_phase_error": column_phase_distance(&s.v, &closed)?,
            "stream_rates": s.stream_rates,
            "rate_per_use": s.rate_per_use(),
        })));
    }
    let spec = RatelessSpec::new(3, rate)?;
    let (feasible, threshold) = three_rate_feasible(rate);
    let mut out = json!({
        "levels": 3,
        "rate": rate,
        "alpha": spec.alpha,
        "feasible": feasible,
        "threshold": threshold,
        "x": three_rate_x(rate),
    });
    let j = three_rate_offdiag(rate)?;
    out["x_computed"] = json!(j.x_computed);
    out["residual"] = to_value(&j.residual);
    out["r1"] = to_value(&j.r1);
    out["r2"] = to_value(&j.r2);
    Ok(if feasible {
        Outcome::Done(out)
    } else {
        Outcome::Infeasible(out)
    })
}

fn cmd_simulate(ctx: &Ctx, ch: &ChannelArgs, trials: usize, table: Option<&Path>) -> Result<Outcome> {
    let scheme = scheme_from(ch)?;
    let report = sic_simulate(&scheme, trials, ctx.seed)?;
    if let Some(p) = table {
        write_output(Some(p), &report.to_csv())?;
    }
    Ok(Outcome::Done(json!({
        "scheme": scheme_summary(&scheme),
        "simulation": report,
    })))
}

/// 17 significant digits.
fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct SigDigits;

impl serde_json::ser::Formatter for SigDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_f64(v).as_bytes())
    }
}

pub fn to_json(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits);
    v.serialize(&mut ser).expect("in-memory serialization");
    let mut s = String::from_utf8(buf).expect("utf-8");
    s.push('\n');
    s
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => map.iter().for_each(|(k, x)| flatten(&key(k), x, out)),
        Value::Array(xs) => xs
            .iter()
            .enumerate()
            .for_each(|(i, x)| flatten(&key(&i.to_string()), x, out)),
        Value::Number(n) => {
            let s = match (n.as_u64(), n.as_i64()) {
                (Some(u), _) => u.to_string(),
                (None, Some(i)) => i.to_string(),
                _ => format_f64(n.as_f64().unwrap_or(f64::NAN)),
            };
            out.push((prefix.to_string(), s));
        }
        Value::String(s) => out.push((prefix.to_string(), csv_field(s))),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::Null => out.push((prefix.to_string(), String::new())),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `key,value` rows with dotted paths, the same numbers as [`to_json`].
pub fn to_csv(v: &Value) -> String {
    let mut rows = Vec::new();
    flatten("", v, &mut rows);
    let mut s = String::from("key,value\n");
    for (k, x) in rows {
        s.push_str(&csv_field(&k));
        s.push(',');
        s.push_str(&x);
        s.push('\n');
    }
    s
}
