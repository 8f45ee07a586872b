//! Command-line front end: subcommand dispatch, artifacts and manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{self, LabResult, TestProfile};
use crate::cauchygrid::{self, CauchyState};
use crate::chart::{self, AuditGrid};
use crate::config::RunConfig;
use crate::energy;
use crate::error::{Error, Result};
use crate::interp;
use crate::io::{ErrorRecord, Manifest, OutputDir};
use crate::nullgrid::{self, Direction, ModeField};
use crate::scatter::{self, SigmaData};

#[derive(Debug, Parser)]
#[command(name = "scri-scatter", version, about = "Conformal scattering laboratory for the cubic wave equation on Schwarzschild")]
pub struct Cli {
    /// INI configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; SCRI_SCATTER_OUT takes precedence.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Decay-lemma ratios and Morawetz positivity on the chart.
    ChartAudit,
    /// Leapfrog evolution of a Gaussian pulse on the Cauchy lattice.
    EvolveCauchy,
    /// Characteristic solve from scri data.
    EvolveGoursat,
    /// Trace operators and the scattering operator on the configured data.
    Scatter,
    /// Energy identity, equivalence envelope and Gronwall fit.
    EnergyAudit,
    /// Desk labs.
    #[command(subcommand)]
    Lab(LabCommand),
    /// Runs a subcommand at three resolutions and fits the order.
    Converge {
        /// Subcommand name, e.g. evolve-goursat or lab slowdown.
        #[arg(num_args = 1..=2, required = true)]
        target: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, Subcommand, PartialEq, Eq)]
pub enum LabCommand {
    Sobolev,
    Density,
    Lipschitz,
    Slowdown,
    Picard,
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::ChartAudit => "chart-audit".into(),
            Command::EvolveCauchy => "evolve-cauchy".into(),
            Command::EvolveGoursat => "evolve-goursat".into(),
            Command::Scatter => "scatter".into(),
            Command::EnergyAudit => "energy-audit".into(),
            Command::Lab(l) => format!("lab {}", lab_name(*l)),
            Command::Converge { target } => format!("converge {}", target.join(" ")),
        }
    }
}

fn lab_name(l: LabCommand) -> &'static str {
    match l {
        LabCommand::Sobolev => "sobolev",
        LabCommand::Density => "density",
        LabCommand::Lipschitz => "lipschitz",
        LabCommand::Slowdown => "slowdown",
        LabCommand::Picard => "picard",
    }
}

fn parse_target(target: &[String]) -> Result<Command> {
    let t: Vec<&str> = target.iter().map(|s| s.as_str()).collect();
    Ok(match t.as_slice() {
        ["chart-audit"] => Command::ChartAudit,
        ["evolve-cauchy"] => Command::EvolveCauchy,
        ["evolve-goursat"] => Command::EvolveGoursat,
        ["scatter"] => Command::Scatter,
        ["energy-audit"] => Command::EnergyAudit,
        ["lab", "slowdown"] => Command::Lab(LabCommand::Slowdown),
        ["lab", "lipschitz"] => Command::Lab(LabCommand::Lipschitz),
        ["lab", name] => return Err(Error::Config(format!("lab {name} has no lattice to refine"))),
        _ => return Err(Error::Config(format!("cannot converge {:?}", target.join(" ")))),
    })
}

/// Resolves the effective configuration from the file, flags and environment.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Ok(o) = std::env::var("SCRI_SCATTER_OUT") {
        if !o.is_empty() {
            cfg.out = PathBuf::from(o);
        }
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn field_columns(f: &ModeField) -> [Vec<f64>; 4] {
    let mut cols = [vec![], vec![], vec![], vec![]];
    for i in 0..f.nx {
        for j in 0..f.ny {
            cols[0].push(f.x(i));
            cols[1].push(f.y(j));
            cols[2].push(f.at(i, j));
            cols[3].push(f.d_at(i, j));
        }
    }
    cols
}

fn sigma_csv(out: &mut OutputDir, stem: &str, d: &SigmaData, meta: Value) -> Result<()> {
    let rs: Vec<f64> = (0..d.len()).map(|k| d.rstar(k)).collect();
    out.csv_with_sidecar(stem, &["rstar", "theta", "xi", "psi_rstar"], &[&rs, &d.theta, &d.xi, &d.psi_rs], &meta)
}

fn profile_csv(out: &mut OutputDir, stem: &str, p: &nullgrid::ScriProfile, meta: Value) -> Result<()> {
    let u: Vec<f64> = (0..p.len()).map(|i| p.u(i)).collect();
    out.csv_with_sidecar(stem, &["u", "theta"], &[&u, &p.values], &meta)
}

fn lab_csv(out: &mut OutputDir, lab: &LabResult) -> Result<()> {
    let n = lab.sweep.len();
    let cols: Vec<&analysis::Column> = lab.columns.iter().filter(|c| c.values.len() == n).collect();
    let mut headers = vec![lab.parameter.as_str()];
    headers.extend(cols.iter().map(|c| c.name.as_str()));
    let mut data: Vec<&[f64]> = vec![&lab.sweep];
    data.extend(cols.iter().map(|c| c.values.as_slice()));
    out.csv(&format!("lab_{}.csv", lab.name), &headers, &data)?;
    out.json(&format!("lab_{}.json", lab.name), lab)?;
    Ok(())
}

fn gaussian_state(cfg: &RunConfig) -> CauchyState {
    let cs = &cfg.cauchy;
    let d = &cfg.data;
    let h = (cs.rstar_max - cs.rstar_min) / cs.cells as f64;
    let g = |x: f64| d.amp * (-((x - d.centre) / d.width).powi(2)).exp();
    let dg = |x: f64| -2.0 * (x - d.centre) / (d.width * d.width) * g(x);
    CauchyState::from_fn(cfg.l, cs.rstar_min, h, cs.cells + 1, g, |x| -(2.0 * d.outgoing - 1.0) * dg(x))
}

/// One subcommand; writes its artifacts and returns a summary plus a resolution
/// dependent sample used by `converge`.
fn execute(cmd: &Command, cfg: &RunConfig, out: &mut OutputDir) -> Result<(Value, Vec<f64>)> {
    let b = cfg.coeff_b();
    match cmd {
        Command::ChartAudit => {
            let grid = AuditGrid { nu: cfg.audit_nu, nr: cfg.audit_nr, u_lo: cfg.chart.u_min.min(cfg.chart.u0 - 1.0) };
            let rep = chart::chart_audit(&cfg.chart, &grid)?;
            let mins: Vec<f64> = rep.ratios.iter().map(|r| r.min).collect();
            let maxs: Vec<f64> = rep.ratios.iter().map(|r| r.max).collect();
            let lower: Vec<f64> = rep.ratios.iter().map(|r| r.lower).collect();
            let upper: Vec<f64> = rep.ratios.iter().map(|r| r.upper).collect();
            let names: Vec<&str> = rep.ratios.iter().map(|r| r.name.as_str()).collect();
            out.csv_with_sidecar("chart_ratios", &["min", "max", "lower", "upper"], &[&mins, &maxs, &lower, &upper], &json!({ "rows": names }))?;
            out.json("chart_audit.json", &rep)?;
            let sample = mins.iter().chain(&maxs).copied().collect();
            Ok((json!({ "pass": rep.pass, "violations": rep.violations }), sample))
        }
        Command::EvolveCauchy => {
            let st = gaussian_state(cfg);
            let run = cauchygrid::evolve_cauchy(&st, &b, &cfg.chart, cfg.cauchy.t_end, &cfg.cauchy_options())?;
            let rs: Vec<f64> = (0..run.state.len()).map(|k| run.state.rstar(k)).collect();
            out.csv_with_sidecar("cauchy_final", &["rstar", "psi", "pi"], &[&rs, &run.state.psi, &run.state.pi], &json!({ "t": run.state.t, "dt": run.dt, "l": cfg.l }))?;
            let t: Vec<f64> = run.energy.iter().map(|e| e.0).collect();
            let e: Vec<f64> = run.energy.iter().map(|e| e.1).collect();
            out.csv("cauchy_energy.csv", &["t", "energy"], &[&t, &e])?;
            let drift = match (e.first(), e.last()) {
                (Some(a), Some(z)) if *a != 0.0 => (z - a).abs() / a.abs(),
                _ => 0.0,
            };
            Ok((json!({ "flagged": run.flagged, "max_edge_value": run.max_edge_value, "energy_drift": drift, "dt": run.dt }), run.state.psi.clone()))
        }
        Command::EvolveGoursat => {
            let theta = cfg.scri_data()?;
            let setup = cfg.goursat();
            let f = nullgrid::solve_goursat(&theta, cfg.direction, &b, &setup)?;
            let cols = field_columns(&f);
            out.csv_with_sidecar("goursat_field", &["u", "R", "psi", "psi_R"], &[&cols[0], &cols[1], &cols[2], &cols[3]], &json!({ "direction": cfg.direction, "l": cfg.l, "nu": f.nx - 1, "nr": f.ny - 1 }))?;
            profile_csv(out, "goursat_scri", &f.scri_trace(theta.support)?, json!({ "l": cfg.l }))?;
            Ok((json!({ "max_abs": f.max_abs(), "h1_scri": theta.h1 }), f.values.clone()))
        }
        Command::Scatter => {
            let theta = cfg.scri_data()?;
            let setup = cfg.scatter();
            let sigma = scatter::trace_t_plus_0(&theta, &b, &setup)?;
            let (back, rep) = scatter::trace_t0_plus_report(&sigma, &b, &setup)?;
            let s_theta = scatter::scattering_operator(&theta, &b, &setup)?;
            profile_csv(out, "scri_in", &theta, json!({ "h1": theta.h1 }))?;
            sigma_csv(out, "sigma0", &sigma, json!({ "energy": scatter::sigma_energy(&sigma, &b, cfg.chart.m)? }))?;
            profile_csv(out, "scri_forward", &back, json!({ "h1": back.h1, "report": rep }))?;
            profile_csv(out, "scattered", &s_theta, json!({ "h1": s_theta.h1 }))?;
            let mut summary = json!({
                "h1_in": theta.h1,
                "sigma_energy": scatter::sigma_energy(&sigma, &b, cfg.chart.m)?,
                "forward_backward_relative_h1": if theta.h1 > 0.0 { scatter::relative_h1(&back, &theta) } else { 0.0 },
                "h1_scattered": s_theta.h1,
            });
            if cfg.inverse {
                let inv = scatter::scattering_inverse(&s_theta, &b, &setup)?;
                profile_csv(out, "round_trip", &inv, json!({ "h1": inv.h1 }))?;
                summary["round_trip_relative_h1"] = json!(if theta.h1 > 0.0 { scatter::relative_h1(&inv, &theta) } else { 0.0 });
            }
            Ok((summary, sigma.theta.clone()))
        }
        Command::EnergyAudit => {
            let theta = cfg.scri_data()?;
            let f = nullgrid::solve_goursat(&theta, Direction::Past, &b, &cfg.goursat())?;
            let rep = energy::stokes_audit(&f, &b, &cfg.chart, &cfg.audit_options())?;
            let col = |g: fn(&energy::LeafEnergy) -> f64| rep.leaves.iter().map(g).collect::<Vec<f64>>();
            let (tau, s, e, r, ratio, so_far) = (col(|l| l.tau), col(|l| l.s), col(|l| l.e_hs), col(|l| l.reference), col(|l| l.ratio), col(|l| l.error_so_far));
            out.csv("energy_leaves.csv", &["tau", "s", "e_hs", "reference", "ratio", "error_so_far"], &[&tau, &s, &e, &r, &ratio, &so_far])?;
            out.json("energy_audit.json", &rep)?;
            Ok((
                json!({ "stokes_relative": rep.stokes_relative, "envelope_ok": rep.envelope_ok, "gronwall_constant": rep.gronwall_constant }),
                vec![rep.stokes_relative],
            ))
        }
        Command::Lab(which) => {
            let lab = match which {
                LabCommand::Sobolev => analysis::sobolev_cone_lab(&cfg.lab.sobolev_t, &TestProfile::ALL, TestProfile::Bump)?,
                LabCommand::Density => analysis::density_cutoff_lab(&cfg.lab.density_n)?,
                LabCommand::Lipschitz => analysis::lipschitz_lab(cfg.lab.lipschitz_map, &b, &cfg.scatter(), &cfg.lipschitz_options())?,
                LabCommand::Slowdown => analysis::slowdown_lab(&cfg.scri_data()?, &cfg.lab.slowdown_lambda, &b, &cfg.goursat(), &cfg.slowdown_options())?,
                LabCommand::Picard => analysis::picard_lab(&cfg.scri_data()?, &b, &cfg.goursat(), &cfg.picard_options())?,
            };
            lab_csv(out, &lab)?;
            let sample = match which {
                LabCommand::Slowdown => lab.get("relative_l2_difference").map(|v| v.to_vec()).unwrap_or_default(),
                LabCommand::Lipschitz => lab.get("ratio").map(|v| v.to_vec()).unwrap_or_default(),
                _ => vec![],
            };
            Ok((json!({ "pass": lab.pass, "checks": lab.checks, "fit": lab.fit }), sample))
        }
        Command::Converge { target } => {
            let inner = parse_target(target)?;
            let mut samples = vec![];
            let mut summaries = vec![];
            for (level, k) in [1usize, 2, 4].into_iter().enumerate() {
                let c = cfg.refined(k);
                let mut sub = OutputDir::create(&out.root.join(format!("level{level}")))?;
                let (s, v) = execute(&inner, &c, &mut sub)?;
                for f in sub.written {
                    out.written.push(crate::io::OutputFile { path: format!("level{level}/{}", f.path), sha256: f.sha256 });
                }
                summaries.push(s);
                samples.push((k, v));
            }
            let conv = convergence(&inner, cfg, &samples)?;
            out.json("converge.json", &conv)?;
            Ok((json!({ "levels": summaries, "convergence": conv }), vec![]))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Convergence {
    pub target: String,
    /// Level differences, or the level values for quantities that vanish in the limit.
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
    pub order: f64,
}

/// Restriction of a level-k sample to the coarse lattice.
fn coarse(inner: &Command, cfg: &RunConfig, k: usize, v: &[f64]) -> Vec<f64> {
    match inner {
        Command::EvolveGoursat => {
            let ny = cfg.grid.nr * k + 1;
            let mut o = vec![];
            for i in 0..=cfg.grid.nu {
                for j in 0..=cfg.grid.nr {
                    o.push(v[i * k * ny + j * k]);
                }
            }
            o
        }
        Command::EvolveCauchy => (0..=cfg.cauchy.cells).map(|i| v[i * k]).collect(),
        Command::Scatter => {
            // sigma lattices share their outer end; sample by position
            let (r0c, hc, nc) = cfg.scatter().sigma_lattice();
            let (r0, h, _) = cfg.refined(k).scatter().sigma_lattice();
            (0..nc).map(|i| interp::interp1(v, r0, h, r0c + i as f64 * hc)).collect()
        }
        _ => v.to_vec(),
    }
}

fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len().max(1) as f64).sqrt()
}

fn convergence(inner: &Command, cfg: &RunConfig, samples: &[(usize, Vec<f64>)]) -> Result<Convergence> {
    let c: Vec<Vec<f64>> = samples.iter().map(|(k, v)| coarse(inner, cfg, *k, v)).collect();
    if c.iter().any(|v| v.is_empty() || v.len() != c[0].len()) {
        return Err(Error::Config("converge: resolution samples do not line up".into()));
    }
    let errors = match inner {
        // the Stokes residual itself tends to zero
        Command::EnergyAudit => c.iter().map(|v| v[0].abs()).collect(),
        _ => vec![rms(&c[0], &c[1]), rms(&c[1], &c[2])],
    };
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = *orders.last().unwrap_or(&f64::NAN);
    Ok(Convergence { target: inner.name(), errors, orders, order })
}

fn thread_count(cfg: &RunConfig) -> usize {
    cfg.threads.unwrap_or_else(rayon::current_num_threads)
}

/// Runs one command with a resolved configuration; returns the manifest.
pub fn run(cmd: &Command, cfg: &RunConfig, out_dir: &Path) -> Result<Manifest> {
    let start = Instant::now();
    let mut out = OutputDir::create(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cfg))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let (summary, _) = pool.install(|| execute(cmd, cfg, &mut out))?;
    out.json("summary.json", &summary)?;
    let manifest = Manifest {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: crate::io::sha256_hex(cfg.canonical().as_bytes()),
        seed: cfg.seed,
        threads: thread_count(cfg),
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs: out.written.clone(),
    };
    out.json("manifest.json", &manifest)?;
    Ok(manifest)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = resolve_config(&cli).and_then(|cfg| {
        run(&cli.command, &cfg, &cfg.out).inspect_err(|e| {
            if let Ok(mut d) = OutputDir::create(&cfg.out) {
                let _ = d.json("error.json", &ErrorRecord::from(e));
            }
        })
    });
    match result {
        Ok(m) => {
            println!("{}", serde_json::to_string(&json!({ "command": m.command, "outputs": m.outputs.len(), "wall_time_s": m.wall_time_s })).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&ErrorRecord::from(&e)).unwrap_or_default());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("scri-scatter").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn converge_targets() {
        let t = |s: &str| parse_target(&s.split(' ').map(String::from).collect::<Vec<_>>());
        assert!(matches!(t("evolve-goursat"), Ok(Command::EvolveGoursat)));
        assert!(matches!(t("lab slowdown"), Ok(Command::Lab(LabCommand::Slowdown))));
        assert!(matches!(t("lab sobolev"), Err(Error::Config(_))));
        assert!(matches!(t("converge scatter"), Err(Error::Config(_))));
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = parse(&["lab", "picard", "--seed", "3", "--threads", "2", "--out", "x"]);
        assert!(matches!(cli.command, Command::Lab(LabCommand::Picard)));
        let cfg = resolve_config(&cli).unwrap();
        assert_eq!((cfg.seed, cfg.threads), (3, Some(2)));
        assert_eq!(cli.command.name(), "lab picard");
    }

    #[test]
    fn unknown_subcommand_is_a_usage_error() {
        assert_eq!(main_with_args(["scri-scatter", "nonsense"]), 2);
    }
}
