use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use naheat::heat_kernel::{default_source, Kernel, Strategy};
use naheat::na_group::{g_distance, GOp, PointG};
use naheat::riesz::{dyadic_kernel, dyadic_kernel_with_nodes, tail_kernel, Order};
use naheat::stratified_group::GroupDescriptor;
use naheat::subordination::{psi, psi_time_integrated, psi_with_tol};
use naheat::{Error, Result};
use naheat_cli::{exit_code, parse_config, run, summary_table, write_reports, RunConfig};

#[derive(Parser)]
#[command(name = "naheat", version, about = "Heat and Riesz kernels on N x R")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a single quantity.
    Eval {
        #[arg(value_enum)]
        what: What,
        #[command(flatten)]
        p: EvalArgs,
    },
    /// Run a verification suite (geometry, subordination, heat, estimates, riesz or all).
    Verify {
        suite: String,
        #[command(flatten)]
        v: VerifyArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Distance,
    Heat,
    HeatDerivative,
    Psi,
    PsiIntegrated,
    Dyadic,
    Tail,
}

#[derive(Args)]
struct EvalArgs {
    /// abelian:<q> or heisenberg
    #[arg(long, default_value = "abelian:1")]
    group: String,
    /// Shorthand for --group abelian:<q>.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    /// Coordinates of z, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    z: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    u: f64,
    #[arg(long, default_value_t = 1)]
    j: usize,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    n: i32,
    /// Derivative program read left to right, e.g. "1*1" is X_1 (X_1 h)^*.
    #[arg(long, default_value = "")]
    ops: String,
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Time nodes of the dyadic kernels.
    #[arg(long)]
    nodes: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    group: Option<String>,
    /// Shorthand for --group abelian:<q>.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// File of `key = value` lines; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    node_factor: Option<f64>,
}

fn parse_ops(s: &str) -> Result<Vec<GOp>> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '*' => Ok(GOp::Star),
            d if d.is_ascii_digit() => Ok(GOp::Deriv(d as usize - '0' as usize)),
            _ => Err(Error::InvalidParameter(format!("bad character '{c}' in --ops"))),
        })
        .collect()
}

fn need<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidParameter(format!("--{name} is required")))
}

fn point(p: &EvalArgs, g: &GroupDescriptor) -> Result<PointG> {
    let z = p.z.clone().unwrap_or_else(|| vec![0.0; g.dim()]);
    if z.len() != g.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), got: z.len() });
    }
    PointG::new(&z, p.u)
}

fn group_of(group: &str, q: Option<usize>) -> Result<GroupDescriptor> {
    match q {
        Some(q) => GroupDescriptor::abelian(q),
        None => GroupDescriptor::parse(group),
    }
}

fn eval(what: What, p: &EvalArgs) -> Result<()> {
    let g = group_of(&p.group, p.q)?;
    let (value, err, extra) = match what {
        What::Distance => (g_distance(&point(p, &g)?, &g)?, 0.0, json!({})),
        What::Psi => {
            let (t, xi) = (need(p.t, "t")?, need(p.xi, "xi")?);
            let e = match p.rel_tol {
                Some(tol) => psi_with_tol(t, xi, tol)?,
                None => psi(t, xi)?,
            };
            (e.value, e.est_abs_error, json!({"t": t, "xi": xi}))
        }
        What::PsiIntegrated => {
            let xi = need(p.xi, "xi")?;
            let e = psi_time_integrated(xi)?;
            (e.value, e.est_abs_error, json!({"xi": xi}))
        }
        What::Heat | What::HeatDerivative => {
            let t = need(p.t, "t")?;
            let ops = if matches!(what, What::Heat) { Vec::new() } else { parse_ops(&p.ops)? };
            let src = default_source(&g, t)?;
            let strat = if g.is_abelian() { Strategy::Moments } else { Strategy::Direct };
            let e = Kernel::new(&g, t, &src, &ops, strat)?.eval(&point(p, &g)?);
            (e.value, e.est_abs_error, json!({"t": t, "ops": p.ops, "parts": e.decomposition}))
        }
        What::Dyadic => {
            let order = match p.l {
                Some(l) => Order::Second { j: p.j, l },
                None => Order::First { j: p.j },
            };
            let k = match p.nodes {
                Some(m) => dyadic_kernel_with_nodes(&g, p.n, order, m)?,
                None => dyadic_kernel(&g, p.n, order)?,
            };
            (k.field.eval(&point(p, &g)?), 0.0, json!({"n": p.n}))
        }
        What::Tail => {
            let l = need(p.l, "l")?;
            let k = tail_kernel(&g, p.j, l)?;
            let x = point(p, &g)?;
            (k.field.eval(&x), 0.0, json!({"case": k.case_tag, "parts": k.eval_parts(&x)}))
        }
    };
    let record = json!({"value": value, "est_abs_error": err, "group": g.name(), "detail": extra});
    // a closed pipe is not an error here
    let _ = write!(std::io::stdout(), "value = {value:.15e}\nest_abs_error = {err:.3e}\n{record}\n");
    Ok(())
}

fn verify(suite: String, v: VerifyArgs) -> Result<bool> {
    let mut cfg = RunConfig { suite, ..RunConfig::default() };
    let mut group = None;
    if let Some(path) = &v.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("reading {}: {e}", path.display())))?;
        for (k, val) in parse_config(&text)? {
            let num = || val.parse::<f64>().map_err(|_| Error::InvalidParameter(format!("config {k}: bad number")));
            match k.as_str() {
                "group" => group = Some(val.clone()),
                "seed" => {
                    cfg.seed = val.parse().map_err(|_| Error::InvalidParameter("config seed: bad integer".into()))?
                }
                "epsilon" => cfg.epsilon = num()?,
                "t-min" => cfg.t_min = num()?,
                "t-max" => cfg.t_max = num()?,
                "node-factor" => cfg.node_factor = num()?,
                "out" => cfg.out = Some(PathBuf::from(val)),
                _ => return Err(Error::InvalidParameter(format!("unknown config key '{k}'"))),
            }
        }
    }
    if let Some(q) = v.q {
        cfg.group = GroupDescriptor::abelian(q)?;
    } else if let Some(gs) = v.group.or(group) {
        cfg.group = GroupDescriptor::parse(&gs)?;
    }
    cfg.seed = v.seed.unwrap_or(cfg.seed);
    cfg.epsilon = v.epsilon.unwrap_or(cfg.epsilon);
    cfg.t_min = v.t_min.unwrap_or(cfg.t_min);
    cfg.t_max = v.t_max.unwrap_or(cfg.t_max);
    cfg.node_factor = v.node_factor.unwrap_or(cfg.node_factor);
    cfg.out = v.out.or(cfg.out);

    let records = run(&cfg)?;
    let _ = write!(std::io::stdout(), "{}", summary_table(&records));
    if let Some(dir) = &cfg.out {
        write_reports(dir, &records).map_err(|e| Error::InvalidParameter(format!("writing reports: {e}")))?;
    }
    Ok(records.iter().all(|r| r.passed()))
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var("NA_HEAT_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Eval { what, p } => eval(what, &p).map(|_| true),
        Cmd::Verify { suite, v } => verify(suite, v),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
