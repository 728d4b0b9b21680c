//! Command-line front end: parse problem configurations, run the solver,
//! the verification suite, or the Monte Carlo engine, and emit
//! figure-reproduction data as CSV.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::claims::ClaimDistribution;
use crate::coeffs::AggregateModel;
use crate::error::{Error, Result};
use crate::freeboundary::GCurve;
use crate::simulate::{simulate_value, OptimalStrategy, SimConfig};
use crate::solver::{solve, ProblemSpec, Regime, Segment, SolvedPolicy};
use crate::verify::{dominance_check, make_grid, verify_policy, VerificationReport};

#[derive(Parser)]
#[command(name = "twolines", version, about = "two-line dividend / reinsurance policy solver")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the free-boundary problem and write the policy document
    Solve(RunArgs),
    /// Run generator-residual, smooth-fit, derivative, and dominance checks
    Verify(RunArgs),
    /// Monte Carlo estimate of the value under the solved policy
    Simulate(RunArgs),
    /// Emit value and strategy curves on a grid
    Curve(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// problem file ([line1]/[line2]/[model] sections)
    #[arg(long, env = "TWOLINES_CONFIG")]
    config: PathBuf,
    /// output directory (default: current directory)
    #[arg(long, env = "TWOLINES_OUT")]
    out: Option<PathBuf>,
    /// grid as lo:hi:points, or just a point count
    #[arg(long, env = "TWOLINES_GRID")]
    grid: Option<String>,
    /// simulated path count
    #[arg(long, env = "TWOLINES_PATHS")]
    paths: Option<u64>,
    /// simulation step size
    #[arg(long, env = "TWOLINES_DT")]
    dt: Option<f64>,
    /// random seed
    #[arg(long, env = "TWOLINES_SEED")]
    seed: Option<u64>,
    /// multiplier applied to every verification tolerance
    #[arg(long, env = "TWOLINES_CHECK_TOL")]
    check_tol: Option<f64>,
    /// simulation start reserves as x1,x2 (default 0.5,0.5)
    #[arg(long, env = "TWOLINES_START")]
    start: Option<String>,
}

/// Parse the command line and run; returns the process exit code
/// (0 success, 1 failed checks, 2 errors).
pub fn run() -> i32 {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Cmd::Solve(a) => (cmd_solve as fn(&RunArgs) -> Result<bool>, a),
        Cmd::Verify(a) => (cmd_verify as fn(&RunArgs) -> Result<bool>, a),
        Cmd::Simulate(a) => (cmd_simulate as fn(&RunArgs) -> Result<bool>, a),
        Cmd::Curve(a) => (cmd_curve as fn(&RunArgs) -> Result<bool>, a),
    };
    match cmd(args) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn out_dir(args: &RunArgs) -> Result<PathBuf> {
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_problem(args: &RunArgs) -> Result<ProblemSpec> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.config.display())))
    })?;
    parse_problem(&text, args.config.parent().unwrap_or(Path::new(".")))
}

fn parse_grid(spec: &Option<String>) -> Result<Option<(f64, f64, usize)>> {
    let Some(s) = spec else { return Ok(None) };
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Parse { line: 0, msg: format!("--grid expects lo:hi:points or points, got '{s}'") };
    let (lo, hi, n) = match parts.as_slice() {
        [n] => (0.0, f64::NAN, n.parse::<usize>().map_err(|_| bad())?),
        [lo, hi, n] => (
            lo.parse::<f64>().map_err(|_| bad())?,
            hi.parse::<f64>().map_err(|_| bad())?,
            n.parse::<usize>().map_err(|_| bad())?,
        ),
        _ => return Err(bad()),
    };
    if n < 2 {
        return Err(Error::Parse { line: 0, msg: "--grid needs at least 2 points".into() });
    }
    Ok(Some((lo, hi, n)))
}

fn fmt12(v: f64) -> String {
    if v.is_finite() {
        format!("{:.11e}", v)
    } else {
        format!("{v}")
    }
}

fn policy_header(p: &SolvedPolicy) -> String {
    let mut s = format!("case {}\n", p.regime.token());
    if let Some(w0) = p.w0 {
        s.push_str(&format!("w0 = {:.6}\n", w0));
    }
    s.push_str(&format!("u1 = {:.6}\n", p.u1));
    if let Some(u2) = p.u2 {
        s.push_str(&format!("u2 = {:.6}\n", u2));
    }
    if let Some(m0) = p.m0 {
        s.push_str(&format!("m0 = {:.6}\n", m0));
    }
    if let Some((d0, d1, d2)) = p.deltas {
        s.push_str(&format!("injection cutoffs = {:.6}, {:.6}, {:.6}\n", d0, d1, d2));
    }
    if let Some(v) = p.asymptote() {
        s.push_str(&format!("asymptote = {:.6}\n", v));
    }
    s.push_str(&format!("lines swapped = {}\n", p.lines_swapped));
    s
}

fn cmd_solve(args: &RunArgs) -> Result<bool> {
    let spec = load_problem(args)?;
    let policy = solve(&spec)?;
    print!("{}", policy_header(&policy));
    let dir = out_dir(args)?;
    fs::write(dir.join("policy.txt"), write_policy(&policy))?;
    Ok(true)
}

fn cmd_curve(args: &RunArgs) -> Result<bool> {
    let spec = load_problem(args)?;
    let policy = solve(&spec)?;
    let (lo, hi, n) = parse_grid(&args.grid)?.unwrap_or((0.0, f64::NAN, 501));
    let hi = if hi.is_finite() {
        hi
    } else {
        make_grid(&policy, 2).last().copied().unwrap_or(policy.u1 * 2.0)
    };
    let mut notes = format!("# case {}\n", policy.regime.token());
    for (name, v) in [
        ("w0", policy.w0),
        ("u1", Some(policy.u1)),
        ("u2", policy.u2),
        ("m0", policy.m0),
    ] {
        if let Some(v) = v {
            notes.push_str(&format!("# threshold {name} = {}\n", fmt12(v)));
        }
    }
    let mut value = format!("{notes}x,g,g1,g2\n");
    let mut strat = format!("{notes}x,pi1,pi2,c1,c2\n");
    for i in 0..n {
        let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let (g, g1, g2) = policy.value(x);
        value.push_str(&format!("{},{},{},{}\n", fmt12(x), fmt12(g), fmt12(g1), fmt12(g2)));
        let (mut p1, mut p2) = (policy.retention1(x), policy.retention2(x));
        let (mut c1, mut c2) = policy.dividend_rates(x);
        if policy.lines_swapped {
            // report in the caller's original line order
            (p1, p2) = (p2, p1);
            (c1, c2) = (c2, c1);
        }
        strat.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt12(x),
            fmt12(p1),
            fmt12(p2),
            fmt12(c1),
            fmt12(c2)
        ));
    }
    let dir = out_dir(args)?;
    fs::write(dir.join("value.csv"), value)?;
    fs::write(dir.join("strategy.csv"), strat)?;
    print!("{}", policy_header(&policy));
    println!("wrote value.csv and strategy.csv ({n} points on [{lo}, {hi}])");
    Ok(true)
}

fn cmd_verify(args: &RunArgs) -> Result<bool> {
    let spec = load_problem(args)?;
    let policy = solve(&spec)?;
    let points = parse_grid(&args.grid)?.map(|(_, _, n)| n).unwrap_or(2001);
    let mut rep = verify_policy(&policy, points)?
        .merge(dominance_check(&policy, 200, args.seed.unwrap_or(1))?);
    if let Some(k) = args.check_tol {
        for c in rep.checks.iter_mut() {
            c.tolerance *= k;
            c.passed = c.max_residual <= c.tolerance;
        }
    }
    let dir = out_dir(args)?;
    fs::write(dir.join("report.csv"), rep.to_csv())?;
    fs::write(dir.join("report.txt"), rep.summary())?;
    print!("{}", rep.summary());
    Ok(rep.passed())
}

fn cmd_simulate(args: &RunArgs) -> Result<bool> {
    let spec = load_problem(args)?;
    let policy = solve(&spec)?;
    let (x1, x2) = match &args.start {
        None => (0.5, 0.5),
        Some(s) => {
            let bad = || Error::Parse { line: 0, msg: format!("--start expects x1,x2, got '{s}'") };
            let (a, b) = s.split_once(',').ok_or_else(bad)?;
            (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
        }
    };
    if args.paths == Some(0) {
        return Err(Error::Domain("--paths must be at least 1".into()));
    }
    if args.dt.is_some_and(|dt| !(dt > 0.0)) {
        return Err(Error::Domain("--dt must be positive".into()));
    }
    let cfg = SimConfig {
        dt: args.dt.unwrap_or(1e-3),
        horizon: 20.0 / policy.model.delta,
        paths: args.paths.unwrap_or(10_000) as usize,
        seed: args.seed.unwrap_or(1),
        antithetic: false,
    };
    let strat = OptimalStrategy::new(&policy);
    let est = simulate_value(&strat, x1, x2, &cfg)?;
    let reference = policy.value(x1 + x2).0;
    let text = format!(
        "start = ({x1}, {x2})\npaths = {}\ndt = {}\nhorizon = {}\nseed = {}\n\
         mean = {}\nstderr = {}\npaths_ruined = {}\ntruncation_bound = {}\nclosed_form = {}\n",
        cfg.paths,
        cfg.dt,
        cfg.horizon,
        cfg.seed,
        fmt12(est.mean),
        fmt12(est.stderr),
        est.paths_ruined,
        fmt12(est.truncation_bound),
        fmt12(reference)
    );
    let csv = format!(
        "x1,x2,paths,dt,seed,mean,stderr,paths_ruined,truncation_bound,closed_form\n\
         {},{},{},{},{},{},{},{},{},{}\n",
        fmt12(x1),
        fmt12(x2),
        cfg.paths,
        cfg.dt,
        cfg.seed,
        fmt12(est.mean),
        fmt12(est.stderr),
        est.paths_ruined,
        fmt12(est.truncation_bound),
        fmt12(reference)
    );
    let dir = out_dir(args)?;
    fs::write(dir.join("estimate.csv"), csv)?;
    fs::write(dir.join("estimate.txt"), &text)?;
    print!("{text}");
    Ok(true)
}

// ---------------------------------------------------------------------
// problem files

/// Parse a problem file: sections [line1], [line2], [model]; keys kappa,
/// cbar (omit when dividends are unbounded), dist = uniform:M |
/// exponential:rate | table:path; model keys delta, a, mode.
pub fn parse_problem(text: &str, base: &Path) -> Result<ProblemSpec> {
    #[derive(Default)]
    struct Line {
        kappa: Option<f64>,
        cbar: Option<f64>,
        dist: Option<ClaimDistribution>,
    }
    let mut lines = [Line::default(), Line::default()];
    let (mut delta, mut a, mut mode) = (None, None, None);
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            if !["line1", "line2", "model"].contains(&section.as_str()) {
                return Err(Error::Parse { line: ln, msg: format!("unknown section [{section}]") });
            }
            continue;
        }
        let (key, val) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: ln, msg: format!("expected key = value, got '{line}'") })?;
        let (key, val) = (key.trim(), val.trim());
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Parse { line: ln, msg: format!("bad number '{v}' for {key}") })
        };
        match (section.as_str(), key) {
            ("line1" | "line2", _) => {
                let l = &mut lines[(section == "line2") as usize];
                match key {
                    "kappa" => l.kappa = Some(num(val)?),
                    "cbar" => l.cbar = Some(num(val)?),
                    "dist" => l.dist = Some(parse_dist(val, base, ln)?),
                    _ => {
                        return Err(Error::Parse { line: ln, msg: format!("unknown key '{key}' in [{section}]") })
                    }
                }
            }
            ("model", "delta") => delta = Some(num(val)?),
            ("model", "a") => a = Some(num(val)?),
            ("model", "mode") => mode = Some((val.to_string(), ln)),
            _ => {
                return Err(Error::Parse { line: ln, msg: format!("unknown key '{key}' in [{section}]") })
            }
        }
    }
    let missing = |what: &str| Error::Parse { line: 0, msg: format!("missing {what}") };
    let unbounded = match mode {
        Some((m, ln)) => match m.as_str() {
            "capped" => false,
            "unbounded" => true,
            _ => {
                return Err(Error::Parse { line: ln, msg: format!("mode must be capped or unbounded, got '{m}'") })
            }
        },
        None => return Err(missing("[model] mode")),
    };
    let [l1, l2] = lines;
    let cbar = |c: Option<f64>, name: &str| -> Result<f64> {
        match (unbounded, c) {
            (true, None) => Ok(f64::INFINITY),
            (true, Some(_)) => {
                Err(Error::Parse { line: 0, msg: format!("{name}: cbar must be omitted in unbounded mode") })
            }
            (false, Some(c)) => Ok(c),
            (false, None) => Err(missing(&format!("{name} cbar"))),
        }
    };
    let model = AggregateModel::new(
        l1.kappa.ok_or_else(|| missing("line1 kappa"))?,
        l2.kappa.ok_or_else(|| missing("line2 kappa"))?,
        l1.dist.ok_or_else(|| missing("line1 dist"))?,
        l2.dist.ok_or_else(|| missing("line2 dist"))?,
        delta.ok_or_else(|| missing("[model] delta"))?,
        a.ok_or_else(|| missing("[model] a"))?,
        cbar(l1.cbar, "line1")?,
        cbar(l2.cbar, "line2")?,
    )?;
    Ok(ProblemSpec { model, unbounded_dividends: unbounded })
}

fn parse_dist(val: &str, base: &Path, ln: usize) -> Result<ClaimDistribution> {
    let bad = |msg: String| Error::Parse { line: ln, msg };
    let (kind, arg) = val
        .split_once(':')
        .ok_or_else(|| bad(format!("dist must be uniform:M, exponential:rate, or table:path, got '{val}'")))?;
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number '{v}' in dist")));
    match kind {
        "uniform" => ClaimDistribution::uniform(num(arg)?),
        "exponential" => ClaimDistribution::exponential(num(arg)?),
        "table" => {
            let path = base.join(arg);
            let text = fs::read_to_string(&path)
                .map_err(|e| bad(format!("cannot read table {}: {e}", path.display())))?;
            parse_table(&text)
        }
        "table-inline" => parse_inline_table(arg, ln),
        _ => Err(bad(format!("unknown dist kind '{kind}'"))),
    }
}

/// Survival table file: one "y survival" (or comma-separated) pair per
/// line, # comments allowed.
fn parse_table(text: &str) -> Result<ClaimDistribution> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
        let bad = || Error::Parse { line: i + 1, msg: format!("expected 'y survival' pair, got '{line}'") };
        let y: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let s: f64 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if it.next().is_some() {
            return Err(bad());
        }
        points.push((y, s));
    }
    ClaimDistribution::tabulated(points)
}

fn parse_inline_table(arg: &str, ln: usize) -> Result<ClaimDistribution> {
    let mut points = Vec::new();
    for pair in arg.split(';').filter(|s| !s.is_empty()) {
        let bad = || Error::Parse { line: ln, msg: format!("bad inline table pair '{pair}'") };
        let (y, s) = pair.split_once(',').ok_or_else(bad)?;
        points.push((y.parse().map_err(|_| bad())?, s.parse().map_err(|_| bad())?));
    }
    ClaimDistribution::tabulated(points)
}

fn dist_string(d: &ClaimDistribution) -> String {
    match d {
        ClaimDistribution::Uniform { upper } => format!("uniform:{upper}"),
        ClaimDistribution::Exponential { rate } => format!("exponential:{rate}"),
        ClaimDistribution::Tabulated { points } => {
            let body: Vec<String> = points.iter().map(|(y, s)| format!("{y},{s}")).collect();
            format!("table-inline:{}", body.join(";"))
        }
    }
}

// ---------------------------------------------------------------------
// policy documents

/// Serialize a solved policy. Floats use Rust's shortest round-trip
/// representation, and the scale curve is rebuilt from the model on
/// load, so a reloaded policy reproduces value() exactly.
pub fn write_policy(p: &SolvedPolicy) -> String {
    let m = &p.model;
    let mut s = String::from("twolines-policy 1\n");
    s.push_str(&format!("regime {}\n", p.regime.token()));
    s.push_str(&format!("lines_swapped {}\n", p.lines_swapped));
    s.push_str(&format!("kappa {} {}\n", m.kappa1, m.kappa2));
    s.push_str(&format!("dist1 {}\n", dist_string(&m.dist1)));
    s.push_str(&format!("dist2 {}\n", dist_string(&m.dist2)));
    s.push_str(&format!("delta {}\n", m.delta));
    s.push_str(&format!("a {}\n", m.a));
    s.push_str(&format!("cbar {} {}\n", m.cbar1, m.cbar2));
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
    s.push_str(&format!("w0 {}\n", opt(p.w0)));
    s.push_str(&format!("u1 {}\n", p.u1));
    s.push_str(&format!("u2 {}\n", opt(p.u2)));
    s.push_str(&format!("m0 {}\n", opt(p.m0)));
    if let Some((d0, d1, d2)) = p.deltas {
        s.push_str(&format!("deltas {d0} {d1} {d2}\n"));
    }
    for seg in &p.segments {
        match seg {
            Segment::Pair { lo, hi, x0, kp, gp, km, gm, c, m } => {
                s.push_str(&format!("segment pair {lo} {hi} {x0} {kp} {gp} {km} {gm} {c} {m}\n"));
            }
            Segment::Line { lo, x0, g0, slope, m } => {
                s.push_str(&format!("segment line {lo} {x0} {g0} {slope} {m}\n"));
            }
            Segment::Blend(b) => {
                let basis = match b.basis {
                    crate::solver::BlendBasis::InverseScale => "inverse-scale",
                    crate::solver::BlendBasis::Map => "map",
                };
                s.push_str(&format!(
                    "segment blend {basis} {} {} {} {} {} {}\n",
                    b.lo, b.hi, b.k, b.g0, b.kappa1, b.head_p
                ));
                for (name, v) in
                    [("xs", &b.xs), ("ms", &b.ms), ("dms", &b.dms), ("is", &b.is_), ("js", &b.js)]
                {
                    let body: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                    s.push_str(&format!("vec {name} {}\n", body.join(",")));
                }
            }
        }
    }
    s
}

/// Load a policy document written by [`write_policy`].
pub fn read_policy(text: &str) -> Result<SolvedPolicy> {
    let perr = |ln: usize, msg: String| Error::Parse { line: ln, msg };
    let mut it = text.lines().enumerate().peekable();
    let (_, head) = it.next().ok_or_else(|| perr(1, "empty policy document".into()))?;
    if head.trim() != "twolines-policy 1" {
        return Err(perr(1, format!("unrecognized policy header '{head}'")));
    }
    let mut fields: Vec<(usize, String, String)> = Vec::new();
    let mut segments_raw: Vec<(usize, String)> = Vec::new();
    for (i, raw) in it {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line
            .split_once(' ')
            .ok_or_else(|| perr(i + 1, format!("expected 'key value', got '{line}'")))?;
        if key == "segment" || key == "vec" {
            segments_raw.push((i + 1, line.to_string()));
        } else {
            fields.push((i + 1, key.to_string(), rest.trim().to_string()));
        }
    }
    let get = |k: &str| -> Result<(usize, String)> {
        fields
            .iter()
            .find(|(_, key, _)| key == k)
            .map(|(ln, _, v)| (*ln, v.clone()))
            .ok_or_else(|| perr(0, format!("missing field '{k}'")))
    };
    let num = |ln: usize, v: &str| {
        v.parse::<f64>().map_err(|_| perr(ln, format!("bad number '{v}'")))
    };
    let opt_num = |ln: usize, v: &str| -> Result<Option<f64>> {
        if v == "-" {
            Ok(None)
        } else {
            Ok(Some(num(ln, v)?))
        }
    };
    let pair = |k: &str| -> Result<(f64, f64)> {
        let (ln, v) = get(k)?;
        let mut p = v.split_whitespace();
        let bad = || perr(ln, format!("expected two numbers for {k}"));
        let a = num(ln, p.next().ok_or_else(bad)?)?;
        let b = num(ln, p.next().ok_or_else(bad)?)?;
        Ok((a, b))
    };

    let (ln_r, regime) = get("regime")?;
    let regime = Regime::from_token(&regime).map_err(|_| perr(ln_r, format!("bad regime '{regime}'")))?;
    let (_, swapped) = get("lines_swapped")?;
    let (kappa1, kappa2) = pair("kappa")?;
    let (ln_d1, d1) = get("dist1")?;
    let (ln_d2, d2) = get("dist2")?;
    let dist1 = parse_dist(&d1, Path::new("."), ln_d1)?;
    let dist2 = parse_dist(&d2, Path::new("."), ln_d2)?;
    let (ln_delta, delta) = get("delta")?;
    let (ln_a, a) = get("a")?;
    let (cbar1, cbar2) = pair("cbar")?;
    let model = AggregateModel::new(
        kappa1,
        kappa2,
        dist1,
        dist2,
        num(ln_delta, &delta)?,
        num(ln_a, &a)?,
        cbar1,
        cbar2,
    )?;
    let gcurve = GCurve::build(&model)?;

    let (ln_w0, w0) = get("w0")?;
    let (ln_u1, u1) = get("u1")?;
    let (ln_u2, u2) = get("u2")?;
    let (ln_m0, m0) = get("m0")?;
    let deltas = match fields.iter().find(|(_, k, _)| k == "deltas") {
        None => None,
        Some((ln, _, v)) => {
            let mut p = v.split_whitespace();
            let bad = || perr(*ln, "deltas needs three numbers".into());
            Some((
                num(*ln, p.next().ok_or_else(bad)?)?,
                num(*ln, p.next().ok_or_else(bad)?)?,
                num(*ln, p.next().ok_or_else(bad)?)?,
            ))
        }
    };

    let mut segments = Vec::new();
    let mut i = 0;
    while i < segments_raw.len() {
        let (ln, line) = &segments_raw[i];
        let toks: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| perr(*ln, msg.to_string());
        match toks.get(1).copied() {
            Some("pair") => {
                if toks.len() != 11 {
                    return Err(bad("pair segment needs 9 numbers"));
                }
                let v: Result<Vec<f64>> = toks[2..].iter().map(|t| num(*ln, t)).collect();
                let v = v?;
                segments.push(Segment::Pair {
                    lo: v[0],
                    hi: v[1],
                    x0: v[2],
                    kp: v[3],
                    gp: v[4],
                    km: v[5],
                    gm: v[6],
                    c: v[7],
                    m: v[8],
                });
                i += 1;
            }
            Some("line") => {
                if toks.len() != 7 {
                    return Err(bad("line segment needs 5 numbers"));
                }
                let v: Result<Vec<f64>> = toks[2..].iter().map(|t| num(*ln, t)).collect();
                let v = v?;
                segments.push(Segment::Line { lo: v[0], x0: v[1], g0: v[2], slope: v[3], m: v[4] });
                i += 1;
            }
            Some("blend") => {
                if toks.len() != 9 {
                    return Err(bad("blend segment needs basis and 6 numbers"));
                }
                let basis = match toks[2] {
                    "inverse-scale" => crate::solver::BlendBasis::InverseScale,
                    "map" => crate::solver::BlendBasis::Map,
                    b => return Err(perr(*ln, format!("unknown blend basis '{b}'"))),
                };
                let v: Result<Vec<f64>> = toks[3..].iter().map(|t| num(*ln, t)).collect();
                let v = v?;
                let mut vecs: Vec<Vec<f64>> = Vec::new();
                for want in ["xs", "ms", "dms", "is", "js"] {
                    i += 1;
                    let (vln, vline) = segments_raw
                        .get(i)
                        .ok_or_else(|| perr(*ln, format!("blend segment missing vec {want}")))?;
                    let vtoks: Vec<&str> = vline.splitn(3, ' ').collect();
                    if vtoks.len() < 2 || vtoks[0] != "vec" || vtoks[1] != want {
                        return Err(perr(*vln, format!("expected 'vec {want} ...'")));
                    }
                    let body = vtoks.get(2).copied().unwrap_or("");
                    let parsed: Result<Vec<f64>> = body
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(|t| num(*vln, t))
                        .collect();
                    vecs.push(parsed?);
                }
                let js = vecs.pop().unwrap();
                let is_ = vecs.pop().unwrap();
                let dms = vecs.pop().unwrap();
                let ms = vecs.pop().unwrap();
                let xs = vecs.pop().unwrap();
                segments.push(Segment::Blend(crate::solver::ExpIntegralPiece {
                    basis,
                    lo: v[0],
                    hi: v[1],
                    xs,
                    ms,
                    dms,
                    is_,
                    js,
                    k: v[2],
                    g0: v[3],
                    kappa1: v[4],
                    head_p: v[5],
                }));
                i += 1;
            }
            _ => return Err(bad("expected segment pair|line|blend")),
        }
    }
    if segments.is_empty() {
        return Err(perr(0, "policy document has no segments".into()));
    }

    Ok(SolvedPolicy {
        model,
        regime,
        w0: opt_num(ln_w0, &w0)?,
        u1: num(ln_u1, &u1)?,
        u2: opt_num(ln_u2, &u2)?,
        m0: opt_num(ln_m0, &m0)?,
        deltas,
        segments,
        gcurve,
        lines_swapped: swapped == "true",
    })
}

impl VerificationReport {
    /// convenience used by integration tests
    pub fn failed_names(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}
