//! Experiment runner. Every subcommand resolves its settings (config file,
//! then flags), writes CSV tables headed by the resolved configuration and
//! a `summary.json`, and prints the summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::blowup::{chart1_check, chart2_trajectory, eta_for, Chart2Config, U_BIG};
use crate::cycles::{boundary_cycle_period, find_cycle, CycleReport, ReturnMapConfig};
use crate::error::{Error, Result};
use crate::field::{phi_family, CanonicalForm, FilippovSystem, Rect, TransitionFunction};
use crate::integrate::IntegratorConfig;
use crate::regularize::{hybrid_flow, HybridOptions, RegularizedField};
use crate::report::{fmt17, Table};
use crate::scenarios::{cycle_points, Scenario};
use crate::transition::{
    contraction, eps_grid, fit_scaling, lambda_star, line_fit, map_sweep, map_table, scaling_sweep,
    scaling_table, MapSide, TransitionConfig,
};

#[derive(Parser, Debug)]
#[command(
    name = "fstreg",
    version,
    about = "Regularized Filippov systems near visible even-multiplicity tangencies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by all subcommands.
#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Contact order 2k.
    #[arg(long)]
    pub k: Option<u32>,
    /// Regularity index n (Φ = φ_{n−1}).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Transition function φ_m.
    #[arg(long = "phi-m")]
    pub phi_m: Option<usize>,
    /// Constant ϑ of the canonical form.
    #[arg(long, allow_hyphen_values = true)]
    pub vartheta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long = "eps-decades", value_name = "LO:HI")]
    pub eps_decades: Option<String>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub scenario: Option<String>,
    /// `key = value` file; `[subcommand]` sections override the top level.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Regularized flow from one point, with band crossings.
    Simulate {
        #[command(flatten)]
        flags: Flags,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        y0: Option<f64>,
        #[arg(long)]
        time: Option<f64>,
    },
    /// x_ε and ψ(ε) sweeps with log-log fits.
    Scaling {
        #[command(flatten)]
        flags: Flags,
    },
    /// Upper transition map sweep and contraction fit.
    UpperMap {
        #[command(flatten)]
        flags: Flags,
    },
    /// Lower transition map sweep and contraction fit.
    LowerMap {
        #[command(flatten)]
        flags: Flags,
    },
    /// m0, m1 and the sandwich table.
    SlowManifold {
        #[command(flatten)]
        flags: Flags,
    },
    /// Chart reports and η.
    Chart {
        #[command(flatten)]
        flags: Flags,
    },
    /// Boundary-cycle fixed point, multiplier and Hausdorff sweep.
    Cycle {
        #[command(flatten)]
        flags: Flags,
    },
    /// Coefficients and class report of φ_m.
    Phi {
        #[command(flatten)]
        flags: Flags,
        #[arg(long)]
        m: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Scaling { .. } => "scaling",
            Command::UpperMap { .. } => "upper-map",
            Command::LowerMap { .. } => "lower-map",
            Command::SlowManifold { .. } => "slow-manifold",
            Command::Chart { .. } => "chart",
            Command::Cycle { .. } => "cycle",
            Command::Phi { .. } => "phi",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Simulate { flags, .. }
            | Command::Scaling { flags }
            | Command::UpperMap { flags }
            | Command::LowerMap { flags }
            | Command::SlowManifold { flags }
            | Command::Chart { flags }
            | Command::Cycle { flags }
            | Command::Phi { flags, .. } => flags,
        }
    }

    fn extra(&self) -> Vec<(&'static str, Option<String>)> {
        match self {
            Command::Simulate { x0, y0, time, .. } => vec![
                ("x0", x0.map(|v| v.to_string())),
                ("y0", y0.map(|v| v.to_string())),
                ("time", time.map(|v| v.to_string())),
            ],
            Command::Phi { m, .. } => vec![("m", m.map(|v| v.to_string()))],
            _ => Vec::new(),
        }
    }
}

const KEYS: &[&str] = &[
    "k",
    "n",
    "alpha",
    "phi-m",
    "vartheta",
    "eps",
    "eps-decades",
    "points",
    "rho",
    "theta",
    "lambda",
    "scenario",
    "out",
    "x0",
    "y0",
    "time",
    "m",
];

/// Fully resolved settings of one invocation.
#[derive(Clone, Debug, Serialize)]
pub struct Settings {
    pub command: String,
    pub scenario: String,
    pub k: u32,
    pub n: usize,
    pub phi_m: usize,
    pub alpha: f64,
    pub vartheta: f64,
    pub eps: f64,
    pub eps_lo: Option<f64>,
    pub eps_hi: Option<f64>,
    pub points: usize,
    pub rho: Option<f64>,
    pub theta: Option<f64>,
    pub lambda: Option<f64>,
    pub x0: f64,
    pub y0: f64,
    pub time: f64,
    pub out: PathBuf,
}

fn read_config(path: &Path, command: &str) -> Result<BTreeMap<String, String>> {
    let ini = ini::Ini::load_from_file(path).map_err(|e| match e {
        ini::Error::Io(e) => Error::Io(format!("{}: {e}", path.display())),
        ini::Error::Parse(p) => Error::Parse {
            line: p.line,
            message: p.msg.to_string(),
        },
    })?;
    let mut raw = BTreeMap::new();
    // Top level first, then the section named after the subcommand.
    for wanted in [None, Some(command)] {
        for (section, props) in ini.iter() {
            if section != wanted {
                continue;
            }
            for (key, value) in props.iter() {
                let key = key.trim().replace('_', "-");
                if !KEYS.contains(&key.as_str()) {
                    return Err(Error::Parse {
                        line: 0,
                        message: format!("unknown key '{key}'"),
                    });
                }
                raw.insert(key, value.trim().to_string());
            }
        }
    }
    Ok(raw)
}

fn parse<T: std::str::FromStr>(raw: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    raw.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|_| Error::InvalidParameter(format!("{key} = '{v}' is not a valid value")))
        })
        .transpose()
}

fn parse_decades(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidParameter(format!("eps-decades '{s}' must read lo:hi"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "eps-decades needs 0 < lo < hi, got {lo}:{hi}"
        )));
    }
    Ok((lo, hi))
}

impl Settings {
    pub fn resolve(cmd: &Command) -> Result<Settings> {
        let flags = cmd.flags();
        let name = cmd.name();
        let mut raw = match &flags.config {
            Some(p) => read_config(p, name)?,
            None => BTreeMap::new(),
        };
        let from_flags: Vec<(&str, Option<String>)> = vec![
            ("k", flags.k.map(|v| v.to_string())),
            ("n", flags.n.map(|v| v.to_string())),
            ("alpha", flags.alpha.map(|v| v.to_string())),
            ("phi-m", flags.phi_m.map(|v| v.to_string())),
            ("vartheta", flags.vartheta.map(|v| v.to_string())),
            ("eps", flags.eps.map(|v| v.to_string())),
            ("eps-decades", flags.eps_decades.clone()),
            ("points", flags.points.map(|v| v.to_string())),
            ("rho", flags.rho.map(|v| v.to_string())),
            ("theta", flags.theta.map(|v| v.to_string())),
            ("lambda", flags.lambda.map(|v| v.to_string())),
            ("scenario", flags.scenario.clone()),
            ("out", flags.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in from_flags.into_iter().chain(cmd.extra()) {
            if let Some(v) = value {
                raw.insert(key.to_string(), v);
            }
        }

        let is_cycle = name == "cycle";
        let scenario = raw.get("scenario").cloned().unwrap_or_else(|| {
            if is_cycle {
                "boundary-cycle"
            } else {
                "canonical"
            }
            .to_string()
        });
        scenario.parse::<Scenario>()?;
        let k = parse::<u32>(&raw, "k")?.unwrap_or(2);
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        let phi_m = match (parse::<usize>(&raw, "phi-m")?, parse::<usize>(&raw, "n")?) {
            (Some(m), Some(n)) if n != m + 1 => {
                return Err(Error::InvalidParameter(format!(
                    "phi-m = {m} gives n = {}, but n = {n} was requested",
                    m + 1
                )))
            }
            (Some(m), _) => m,
            (None, Some(n)) if n >= 2 => n - 1,
            (None, Some(n)) => {
                return Err(Error::InvalidParameter(format!(
                    "n = {n} must be at least 2"
                )))
            }
            (None, None) if is_cycle => 5,
            (None, None) => (2 * k as usize).saturating_sub(2).max(1),
        };
        let phi_m = match name {
            "phi" => parse::<usize>(&raw, "m")?.unwrap_or(phi_m),
            _ => phi_m,
        };
        let (eps_lo, eps_hi) = match raw.get("eps-decades") {
            Some(s) => {
                let (lo, hi) = parse_decades(s)?;
                (Some(lo), Some(hi))
            }
            None => match name {
                "scaling" => (Some(1e-6), Some(1e-2)),
                "upper-map" | "lower-map" => (Some(1e-3), Some(1e-2)),
                _ => (None, None),
            },
        };
        let points = parse::<usize>(&raw, "points")?.unwrap_or(match name {
            "scaling" => 9,
            "upper-map" | "lower-map" => 17,
            "slow-manifold" => 50,
            "cycle" => 3,
            _ => 1,
        });
        let eps = parse::<f64>(&raw, "eps")?.unwrap_or(if is_cycle { 0.01 } else { 1e-3 });
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps = {eps} must be positive"
            )));
        }
        Ok(Settings {
            command: name.to_string(),
            scenario,
            k,
            n: phi_m + 1,
            phi_m,
            alpha: parse(&raw, "alpha")?.unwrap_or(1.0),
            vartheta: parse(&raw, "vartheta")?.unwrap_or(0.0),
            eps,
            eps_lo,
            eps_hi,
            points,
            rho: parse(&raw, "rho")?,
            theta: parse(&raw, "theta")?,
            lambda: parse(&raw, "lambda")?,
            x0: parse(&raw, "x0")?.unwrap_or(-0.3),
            y0: parse(&raw, "y0")?.unwrap_or(0.05),
            time: parse(&raw, "time")?.unwrap_or(10.0),
            out: raw
                .get("out")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("fstreg-out")),
        })
    }

    /// `key = value` pairs for the CSV header block, in key order; the
    /// output directory is left out so reruns elsewhere compare equal.
    pub fn header(&self) -> Vec<(String, String)> {
        let v = serde_json::to_value(self).expect("settings serialize");
        let mut out: Vec<(String, String)> = v
            .as_object()
            .expect("settings object")
            .iter()
            .filter(|(k, _)| k.as_str() != "out")
            .map(|(k, v)| {
                let s = match v {
                    Value::String(s) => s.clone(),
                    Value::Number(n) if n.is_f64() => fmt17(n.as_f64().unwrap_or(f64::NAN)),
                    other => other.to_string(),
                };
                (k.clone(), s)
            })
            .collect();
        out.sort();
        out
    }

    fn scenario(&self) -> Scenario {
        self.scenario.parse().expect("validated in resolve")
    }

    fn phi(&self) -> Result<TransitionFunction> {
        phi_family(self.phi_m)
    }

    fn system(&self) -> Result<FilippovSystem> {
        self.scenario().system(self.k, self.alpha, self.vartheta)
    }

    fn canonical(&self) -> Result<CanonicalForm> {
        if self.scenario() != Scenario::Canonical {
            return Err(Error::InvalidParameter(format!(
                "{} needs the canonical scenario",
                self.command
            )));
        }
        CanonicalForm::with_constant_theta(self.k, self.alpha, self.vartheta)
    }

    fn transition(&self, eps: f64) -> Result<TransitionConfig> {
        let mut c = TransitionConfig::new(self.system()?, self.phi()?, eps)?;
        let (rho, theta) = (self.rho.unwrap_or(c.rho), self.theta.unwrap_or(c.theta));
        c = c.with_rho_theta(rho, theta);
        if let Some(l) = self.lambda {
            c = c.with_lambda(l);
        }
        Ok(c)
    }

    fn eps_list(&self) -> Vec<f64> {
        match (self.eps_lo, self.eps_hi) {
            (Some(lo), Some(hi)) => eps_grid(lo, hi, self.points.max(2)),
            _ => vec![self.eps],
        }
    }
}

struct Output<'a> {
    settings: &'a Settings,
    files: Vec<String>,
}

impl Output<'_> {
    fn table(&mut self, name: &str, table: Table) -> Result<()> {
        let t = table.with_meta(&self.settings.header());
        t.write(&self.settings.out.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn simulate(s: &Settings, out: &mut Output) -> Result<Value> {
    let rf = RegularizedField::new(s.system()?, s.phi()?, s.eps)?;
    let opts = HybridOptions {
        cfg: IntegratorConfig::default(),
        max_time: s.time,
        window: Rect::new((-10.0, 10.0), (-10.0, 10.0)),
        ..HybridOptions::default()
    };
    let o = hybrid_flow(&rf, [s.x0, s.y0], None, &opts)?;
    out.table("trajectory.csv", o.trajectory.to_table())?;
    let mut t = Table::new(&["t", "x", "y", "from", "to"]);
    for c in &o.crossings {
        t.push(vec![
            fmt17(c.t),
            fmt17(c.point[0]),
            fmt17(c.point[1]),
            format!("{:?}", c.from).to_lowercase(),
            format!("{:?}", c.to).to_lowercase(),
        ]);
    }
    out.table("crossings.csv", t)?;
    Ok(json!({
        "end": o.end,
        "time": o.t,
        "log_jacobian": o.log_jacobian,
        "band_crossings": o.crossings.len(),
    }))
}

fn scaling(s: &Settings, out: &mut Output) -> Result<Value> {
    let cfg = s.transition(s.eps)?;
    let rows = scaling_sweep(&cfg, &s.eps_list())?;
    out.table("scaling.csv", scaling_table(&rows))?;
    let xs: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.x_eps)).collect();
    let fit = fit_scaling(&xs, lambda_star(s.k, s.n))?;
    let psis: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.psi_eps)).collect();
    let psi = match fit_scaling(&psis, 1.0 / (2.0 * s.k as f64 - 1.0)) {
        Ok(f) => f.to_json(),
        Err(e) => json!({ "skipped": e.to_string() }),
    };
    let eta = match s.canonical() {
        Ok(form) => {
            let r = eta_for(&form, &cfg.phi)?;
            json!({
                "c_x_u_star": r.eta,
                "fitted_prefactor": fit.prefactor(),
                "rel_dev": (fit.prefactor() / r.eta - 1.0).abs(),
            })
        }
        Err(_) => Value::Null,
    };
    let mut x = fit.to_json();
    x["lambda_star"] = json!(lambda_star(s.k, s.n));
    Ok(json!({ "x_eps": x, "psi": psi, "eta": eta }))
}

fn transition_map(s: &Settings, side: MapSide, out: &mut Output) -> Result<Value> {
    let cfg = s.transition(s.eps)?;
    let samples = map_sweep(&cfg, side, s.points)?;
    let stem = match side {
        MapSide::Upper => "upper-map",
        MapSide::Lower => "lower-map",
    };
    out.table(&format!("{stem}.csv"), map_table(&samples))?;
    let grid = match (s.eps_lo, s.eps_hi) {
        (Some(lo), Some(hi)) => eps_grid(lo, hi, 3),
        _ => vec![s.eps],
    };
    let mut cs = grid
        .iter()
        .map(|&e| contraction(&cfg.with_eps(e), side, s.points))
        .collect::<Result<Vec<_>>>()?;
    cs.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let mut t = Table::new(&[
        "eps",
        "input_length",
        "direct",
        "liouville",
        "max_log_derivative",
    ]);
    for c in &cs {
        t.push_f64(&[
            c.eps,
            c.input_length,
            c.direct,
            c.liouville,
            c.max_log_derivative,
        ]);
    }
    out.table(&format!("{stem}-contraction.csv"), t)?;
    let q = cfg.q();
    let fit = if cs.len() >= 2 {
        let xs: Vec<f64> = cs.iter().map(|c| c.eps.powf(-q)).collect();
        let ys: Vec<f64> = cs.iter().map(|c| c.liouville.ln()).collect();
        let f = line_fit(&xs, &ys)?;
        json!({ "q": q, "slope": f.slope, "intercept": f.intercept, "r2": f.r2 })
    } else {
        Value::Null
    };
    let last = cs.first().expect("non-empty grid");
    Ok(json!({
        "lambda": cfg.lambda,
        "samples": samples.len(),
        "contraction_fit": fit,
        "diameter_over_length_at_smallest_eps": last.liouville / last.input_length,
    }))
}

fn slow_manifold(s: &Settings, out: &mut Output) -> Result<Value> {
    let rf = RegularizedField::new(s.system()?, s.phi()?, s.eps)?;
    let cm = rf.critical_manifold(rf.default_l()?)?;
    let lambda = s.lambda.unwrap_or(0.5 * lambda_star(s.k, s.n));
    let probe = cm.sandwich_check(lambda, 1.0, s.points)?;
    let rep = cm.sandwich_check(lambda, probe.k_min * (1.0 + 1e-9), s.points)?;
    out.table("sandwich.csv", rep.to_table())?;
    let predicted = cm.predicted_gap_coefficient()?;
    let fitted = cm.fitted_gap_coefficient()?;
    Ok(json!({
        "l": cm.l(),
        "lambda": lambda,
        "gap_coefficient": { "predicted": predicted, "fitted": fitted, "rel_dev": (fitted / predicted - 1.0).abs() },
        "k_min": rep.k_min,
        "exponent": rep.exponent,
        "sandwich_holds": rep.all_hold(),
        "below_m0": rep.upper_holds,
    }))
}

fn chart(s: &Settings, out: &mut Output) -> Result<Value> {
    let form = s.canonical()?;
    let phi = s.phi()?;
    let eta = eta_for(&form, &phi)?;
    let c1 = chart1_check(&form, &phi)?;
    let path = chart2_trajectory(&Chart2Config::on_isocline(s.k, s.n, eta.sigma, -U_BIG)?)?;
    let mut t = Table::new(&["u", "v"]);
    for p in &path.path {
        t.push_f64(p);
    }
    out.table("chart2.csv", t)?;
    Ok(json!({ "eta": eta, "chart1": c1 }))
}

fn cycle(s: &Settings, out: &mut Output) -> Result<Value> {
    let mut base = ReturnMapConfig::new(s.system()?, s.phi()?, s.eps)?;
    if let Some(r) = s.rho {
        base = base.with_rho(r)?;
    }
    if let Some(t) = s.theta {
        base.theta = t;
    }
    let mut reference = cycle_points(s.k, 20_000);
    reference.push(reference[0]);
    let mut eps = s.eps_list();
    eps.sort_by(|a, b| b.total_cmp(a));
    let mut reports = Vec::new();
    let mut orbit = None;
    for &e in &eps {
        let c = find_cycle(&base.with_eps(e)?)?;
        reports.push(CycleReport::new(e, &c, &reference));
        orbit = Some(c.cycle_samples);
    }
    let mut t = Table::new(&[
        "eps",
        "fixed_point",
        "period",
        "multiplier",
        "multiplier_difference",
        "hausdorff",
        "hausdorff_over_eps",
    ]);
    for r in &reports {
        t.push_f64(&[
            r.eps,
            r.fixed_point,
            r.period,
            r.multiplier,
            r.multiplier_difference,
            r.hausdorff,
            r.hausdorff_over_eps,
        ]);
    }
    out.table("cycle.csv", t)?;
    let mut o = Table::new(&["x", "y"]);
    for p in orbit.unwrap_or_default() {
        o.push_f64(&p);
    }
    out.table("cycle-orbit.csv", o)?;
    let z = s.system()?;
    let period = boundary_cycle_period(&z.x_plus).ok();
    let first = &reports[0];
    Ok(json!({
        "section_rho": base.rho,
        "fixed_point": first.fixed_point,
        "multiplier": first.multiplier,
        "gamma_period": period,
        "gamma_multiplier": period.map(|t| (-2.0 * s.k as f64 * t).exp()),
        "sweep": reports,
    }))
}

fn phi(s: &Settings, out: &mut Output) -> Result<Value> {
    let tf = phi_family(s.phi_m)?;
    let coeffs = tf.coefficients().expect("polynomial family");
    let mut t = Table::new(&["power", "coefficient", "value"]);
    let mut listed = Vec::new();
    for (i, c) in coeffs.iter().enumerate().skip(1) {
        let v = num_traits::ToPrimitive::to_f64(c).unwrap_or(f64::NAN);
        t.push(vec![i.to_string(), c.to_string(), fmt17(v)]);
        listed.push(c.to_string());
    }
    out.table("phi.csv", t)?;
    Ok(json!({
        "m": s.phi_m,
        "theorem_n": tf.theorem_n(),
        "coefficients": listed,
        "bracket_constant": tf.bracket_constant(tf.theorem_n())?,
        "report": tf.verify(),
    }))
}

/// Runs a parsed command; returns the summary written to `summary.json`.
pub fn execute(cli: &Cli) -> Result<Value> {
    let s = Settings::resolve(&cli.command)?;
    std::fs::create_dir_all(&s.out)?;
    let mut out = Output {
        settings: &s,
        files: Vec::new(),
    };
    let results = match &cli.command {
        Command::Simulate { .. } => simulate(&s, &mut out)?,
        Command::Scaling { .. } => scaling(&s, &mut out)?,
        Command::UpperMap { .. } => transition_map(&s, MapSide::Upper, &mut out)?,
        Command::LowerMap { .. } => transition_map(&s, MapSide::Lower, &mut out)?,
        Command::SlowManifold { .. } => slow_manifold(&s, &mut out)?,
        Command::Chart { .. } => chart(&s, &mut out)?,
        Command::Cycle { .. } => cycle(&s, &mut out)?,
        Command::Phi { .. } => phi(&s, &mut out)?,
    };
    let summary = json!({
        "command": s.command,
        "config": s,
        "files": out.files,
        "results": results,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(s.out.join("summary.json"), format!("{text}\n"))?;
    Ok(summary)
}

/// The machine-readable error object.
pub fn error_json(e: &Error) -> Value {
    json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let obj = json!({ "error": { "kind": "UsageError", "message": e.to_string().trim() } });
            eprintln!("{obj}");
            return 2;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            use std::io::Write;
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("fstreg").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn resolution_defaults_and_overrides() {
        let c = parse_cli(&["scaling", "--k", "1", "--n", "2"]);
        let s = Settings::resolve(&c.command).unwrap();
        assert_eq!((s.k, s.n, s.phi_m, s.points), (1, 2, 1, 9));
        assert_eq!((s.eps_lo, s.eps_hi), (Some(1e-6), Some(1e-2)));
        let c = parse_cli(&["cycle"]);
        let s = Settings::resolve(&c.command).unwrap();
        assert_eq!(
            (s.scenario.as_str(), s.phi_m, s.eps),
            ("boundary-cycle", 5, 0.01)
        );
        let c = parse_cli(&["scaling", "--n", "3", "--phi-m", "1"]);
        assert!(Settings::resolve(&c.command).is_err());
        let c = parse_cli(&["scaling", "--eps-decades", "1e-2:1e-3"]);
        assert!(matches!(
            Settings::resolve(&c.command),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn config_file_sections_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.ini");
        std::fs::write(
            &p,
            "k = 1\neps = 0.02\n[scaling]\npoints = 7\n[cycle]\npoints = 4\n",
        )
        .unwrap();
        let ps = p.to_str().unwrap();
        let c = parse_cli(&["scaling", "--config", ps, "--eps", "0.05"]);
        let s = Settings::resolve(&c.command).unwrap();
        assert_eq!((s.k, s.points, s.eps), (1, 7, 0.05));
        std::fs::write(&p, "kk = 1\n").unwrap();
        let c = parse_cli(&["scaling", "--config", ps]);
        assert!(matches!(
            Settings::resolve(&c.command),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn header_is_sorted_and_complete() {
        let c = parse_cli(&["phi", "--m", "2"]);
        let s = Settings::resolve(&c.command).unwrap();
        let h = s.header();
        let keys: Vec<&str> = h.iter().map(|p| p.0.as_str()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(keys.contains(&"phi_m") && keys.contains(&"eps") && !keys.contains(&"out"));
        assert!(h.contains(&("k".to_string(), "2".to_string())));
        assert_eq!(s.phi_m, 2);
    }
}
