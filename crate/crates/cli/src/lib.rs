//! Command-line workflows: certify, simulate, verify, attractivity, validate.
//!
//! Exit codes are the machine contract. `certify`: 0 certified, 2 no
//! certificate at the tried degree, 3 numerically suspect. `verify`: 0 no
//! violation found, 4 violated. `validate`: 4 on a failed check. Input errors
//! exit with 1 everywhere.

mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use switchsos::certify::{certify, check_attractivity, CertificationConfig, Verdict};
use switchsos::io::{
    certificate_to_toml, oracle_report_to_toml, parse_lyapunov, read_system, sha256_hex,
};
use switchsos::oracle::{verify_certificate, OracleConfig, VerifyScope};
use switchsos::sim::{simulate_many, write_csv, EventKind, SimConfig, Trajectory};
use switchsos::sos::backend_by_name;
use switchsos::system::{validate_with, SwitchedSystem};
use switchsos::{Error, Result};

pub use manifest::RunManifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NO_CERTIFICATE: i32 = 2;
pub const EXIT_SUSPECT: i32 = 3;
pub const EXIT_VIOLATED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "switchsos", version, about = "SOS stability certificates for polynomial switched systems")]
pub struct Cli {
    /// Seed of every sampling step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving output files and manifest.toml.
    #[arg(long, global = true, default_value = "switchsos-out")]
    pub out_dir: PathBuf,
    /// Oracle tolerance on scaled violations.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a piecewise Lyapunov family and gate it with the oracle.
    Certify(CertifyArgs),
    /// Integrate Filippov solutions and write one CSV per run.
    Simulate(SimulateArgs),
    /// Check a Lyapunov family by dense sampling.
    Verify(VerifyArgs),
    /// Test whether sliding is possible on a boundary.
    Attractivity(AttractivityArgs),
    /// Sanity checks on a system description.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    pub system: PathBuf,
    #[arg(long, default_value_t = 6)]
    pub degree: u32,
    #[arg(long, default_value_t = 1e-4)]
    pub mu: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub nu: f64,
    /// Weight of the positive-definite floor.
    #[arg(long, default_value_t = 1e-4)]
    pub epsilon: f64,
    /// Keep every cross-boundary condition regardless of attractivity.
    #[arg(long)]
    pub no_filter: bool,
    #[arg(long, default_value_t = 1e-4)]
    pub kappa: f64,
    /// Try degrees 2, 4, .. up to this cap, stopping at the first certificate.
    #[arg(long)]
    pub escalate_to: Option<u32>,
    /// Multiplier degree override, `generator=degree` (e.g. `box1=4`).
    #[arg(long = "multiplier-degree", value_parser = parse_override)]
    pub multiplier_degree: Vec<(String, u32)>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub system: PathBuf,
    /// Initial state, comma separated; repeat for several starts.
    #[arg(long = "x0", required = true, allow_hyphen_values = true, value_parser = parse_floats)]
    pub x0: Vec<Floats>,
    /// Weights of one region, `region:w1,w2,..`; repeat per region.
    #[arg(long, value_parser = parse_theta)]
    pub theta: Vec<(usize, Vec<f64>)>,
    /// Values of the first weight of the uncertain two-vertex region; one run per value.
    #[arg(long, value_parser = parse_floats)]
    pub theta_sweep: Option<Floats>,
    #[arg(long, default_value_t = 50.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub ball: f64,
    /// Lyapunov document whose values are recorded along each trajectory.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub system: PathBuf,
    pub lyapunov: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub exclusion: f64,
    /// Check cross-boundary conditions for every pair even when the document
    /// lists the enforced ones.
    #[arg(long)]
    pub all_cross: bool,
}

#[derive(Debug, Args)]
pub struct AttractivityArgs {
    pub system: PathBuf,
    /// Boundary pair `i,j`.
    #[arg(long, value_parser = parse_pair)]
    pub pair: (usize, usize),
    #[arg(long, default_value_t = 2)]
    pub degree_cap: u32,
    #[arg(long, default_value_t = 1e-4)]
    pub kappa: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub system: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
}

/// A comma-separated list of numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct Floats(pub Vec<f64>);

fn parse_floats(s: &str) -> std::result::Result<Floats, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<Vec<f64>, String>>()
        .map(Floats)
}

fn parse_theta(s: &str) -> std::result::Result<(usize, Vec<f64>), String> {
    let (id, w) = s
        .split_once(':')
        .ok_or_else(|| format!("expected region:w1,w2,.. in {s:?}"))?;
    let id = id.trim().parse().map_err(|e| format!("region {id:?}: {e}"))?;
    Ok((id, parse_floats(w)?.0))
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected i,j in {s:?}"))?;
    let p = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

fn parse_override(s: &str) -> std::result::Result<(String, u32), String> {
    let (a, b) = s.split_once('=').ok_or_else(|| format!("expected name=degree in {s:?}"))?;
    Ok((a.trim().to_string(), b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?))
}

/// Output sink for one invocation.
struct Session<'a> {
    cli: &'a Cli,
    manifest: RunManifest,
    started: Instant,
    out: &'a mut dyn Write,
}

impl Session<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cli.out_dir.join(name)
    }

    fn write_file(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.cli.out_dir)?;
        let path = self.path(name);
        fs::write(&path, contents)?;
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.timing_seconds = self.started.elapsed().as_secs_f64();
        let text = self.manifest.to_toml();
        fs::create_dir_all(&self.cli.out_dir)?;
        fs::write(self.path("manifest.toml"), text)?;
        Ok(())
    }
}

fn oracle_config(cli: &Cli) -> OracleConfig {
    OracleConfig {
        seed: cli.seed,
        tolerance: cli.tolerance,
        ..OracleConfig::default()
    }
}

fn cmd_certify(s: &mut Session, a: &CertifyArgs) -> Result<i32> {
    let (sys, hash) = read_system(&a.system)?;
    let cfg = CertificationConfig {
        lyapunov_degree: a.degree,
        margin_mu: a.mu,
        margin_nu: a.nu,
        pd_epsilon: a.epsilon,
        use_attractivity_filter: !a.no_filter,
        attractivity_kappa: a.kappa,
        multiplier_degrees: a.multiplier_degree.iter().cloned().collect(),
        escalate_to: a.escalate_to,
        oracle: OracleConfig {
            random_samples: a.samples,
            ..oracle_config(s.cli)
        },
        ..CertificationConfig::default()
    };
    let result = certify(&sys, &cfg)?;
    let mh = s.manifest.hash();
    let doc = certificate_to_toml(&result, &cfg, &sys.name, &hash, Some(&mh));
    let cert_path = s.write_file("certificate.toml", &doc)?;
    let mut report = format!("manifest {mh}\n{result}");
    if let Some(rep) = result.certificate.as_ref().and_then(|c| c.oracle_report.as_ref()) {
        report.push_str(&rep.to_string());
    }
    s.write_file("report.txt", &report)?;
    writeln!(s.out, "{result}")?;
    writeln!(s.out, "certificate written to {}", cert_path.display())?;
    Ok(match result.verdict {
        Verdict::Certified => EXIT_OK,
        Verdict::NoCertificateAtDegree => EXIT_NO_CERTIFICATE,
        Verdict::NumericallySuspect => EXIT_SUSPECT,
    })
}

fn read_family(sys: &SwitchedSystem, path: &Path) -> Result<(BTreeMap<usize, switchsos::poly::Polynomial>, String, Option<BTreeSet<(usize, usize)>>)> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Document(format!("cannot read {}: {e}", path.display())))?;
    let family = parse_lyapunov(&text, sys.dim(), &path.display().to_string())?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| Error::Document(format!("{}: {}", path.display(), e.message())))?;
    let enforced = match table.get("enforced_cross") {
        Some(toml::Value::Array(items)) => {
            let mut set = BTreeSet::new();
            for it in items {
                let pair = it.as_array().and_then(|p| {
                    let i = p.first()?.as_integer()?;
                    let j = p.get(1)?.as_integer()?;
                    Some((i as usize, j as usize))
                });
                set.insert(pair.ok_or_else(|| {
                    Error::Document(format!("{}: enforced_cross entries must be [i, j]", path.display()))
                })?);
            }
            Some(set)
        }
        Some(_) => {
            return Err(Error::Document(format!(
                "{}: enforced_cross must be an array",
                path.display()
            )))
        }
        None => None,
    };
    Ok((family, sha256_hex(text.as_bytes()), enforced))
}

fn cmd_verify(s: &mut Session, a: &VerifyArgs) -> Result<i32> {
    let (sys, hash) = read_system(&a.system)?;
    let (family, lhash, enforced) = read_family(&sys, &a.lyapunov)?;
    let cfg = OracleConfig {
        random_samples: a.samples,
        grid_per_dim: a.grid,
        exclusion_radius: a.exclusion,
        ..oracle_config(s.cli)
    };
    let scope = VerifyScope {
        thetas: BTreeMap::new(),
        cross_pairs: if a.all_cross { None } else { enforced },
    };
    let report = verify_certificate(&sys, &family, &scope, &cfg)?;
    let mh = s.manifest.hash();
    let doc = oracle_report_to_toml(&report, &sys.name, &hash, &lhash, Some(&mh));
    s.write_file("verification.toml", &doc)?;
    write!(s.out, "{report}")?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_VIOLATED })
}

fn cmd_attractivity(s: &mut Session, a: &AttractivityArgs) -> Result<i32> {
    let (sys, _) = read_system(&a.system)?;
    let backend = backend_by_name("clarabel")?;
    let report = check_attractivity(&sys, a.pair, a.degree_cap, a.kappa, backend.as_ref(), &Default::default())?;
    let text = report.to_string();
    s.write_file("attractivity.txt", &format!("manifest {}\n{text}", s.manifest.hash()))?;
    writeln!(s.out, "{}", report.status)?;
    write!(s.out, "{text}")?;
    Ok(EXIT_OK)
}

fn cmd_validate(s: &mut Session, a: &ValidateArgs) -> Result<i32> {
    let (sys, _) = read_system(&a.system)?;
    let report = validate_with(&sys, a.samples, s.cli.seed);
    let text = report.to_string();
    s.write_file("validation.txt", &format!("manifest {}\n{text}", s.manifest.hash()))?;
    write!(s.out, "{text}")?;
    Ok(if report.has_failures() { EXIT_VIOLATED } else { EXIT_OK })
}

/// The region whose first weight a sweep varies: the first one with exactly
/// two vertex fields.
fn sweep_region(sys: &SwitchedSystem) -> Result<usize> {
    sys.region_ids()
        .find(|&id| sys.dynamics(id).map(|d| d.len() == 2).unwrap_or(false))
        .ok_or_else(|| Error::Configuration("theta sweep needs a region with two vertex fields".into()))
}

fn fmt_vec(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}

fn summary(tr: &Trajectory) -> String {
    let last = tr.last();
    let r = last.x.iter().map(|v| v * v).sum::<f64>().sqrt();
    match tr.events.iter().rev().find(|e| {
        matches!(e.kind, EventKind::Converged | EventKind::Escaped | EventKind::StratumStop | EventKind::Underflow)
    }) {
        Some(e) => format!("{} at t={:.6}", e.kind.as_str(), e.t),
        None => format!("horizon t={:.6}, |x|={r:.3e}", last.t),
    }
}

fn cmd_simulate(s: &mut Session, a: &SimulateArgs) -> Result<i32> {
    let (sys, _) = read_system(&a.system)?;
    let family = match &a.certificate {
        Some(p) => Some(read_family(&sys, p)?.0),
        None => None,
    };
    let base: BTreeMap<usize, Vec<f64>> = a.theta.iter().cloned().collect();
    let thetas: Vec<BTreeMap<usize, Vec<f64>>> = match &a.theta_sweep {
        Some(Floats(vals)) => {
            let region = sweep_region(&sys)?;
            vals.iter()
                .map(|&v| {
                    let mut t = base.clone();
                    t.insert(region, vec![v, 1.0 - v]);
                    t
                })
                .collect()
        }
        None => vec![base],
    };
    for th in &thetas {
        for (id, w) in th {
            sys.field_at(*id, w)?;
        }
    }
    let cfg = SimConfig {
        step: a.step,
        t_end: a.t_end,
        ball_stop: a.ball,
        ..SimConfig::default()
    };
    let starts: Vec<Vec<f64>> = a.x0.iter().map(|f| f.0.clone()).collect();
    let mut runs = simulate_many(&sys, &starts, &thetas, &cfg, family.as_ref()).into_iter();
    let mh = s.manifest.hash();
    for (ti, th) in thetas.iter().enumerate() {
        for (xi, x0) in starts.iter().enumerate() {
            let tr = &runs.next().expect("one run per start and weight")?;
            let mut buf = format!("# manifest_hash={mh}\n").into_bytes();
            write_csv(tr, sys.dim(), &mut buf)?;
            let name = format!("trajectory_x{}_theta{}.csv", xi + 1, ti + 1);
            s.write_file(&name, &String::from_utf8(buf).expect("csv is utf-8"))?;
            let theta_text: Vec<String> = th.iter().map(|(id, w)| format!("{id}:{}", fmt_vec(w))).collect();
            writeln!(
                s.out,
                "{name}: x0=({}) theta=[{}] {}",
                fmt_vec(x0),
                theta_text.join(" "),
                summary(tr)
            )?;
        }
    }
    Ok(EXIT_OK)
}

/// Runs one command, printing to `out` and errors to `err`; returns the exit code.
pub fn run(cli: &Cli, argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (command, input) = match &cli.command {
        Command::Certify(a) => ("certify", a.system.clone()),
        Command::Simulate(a) => ("simulate", a.system.clone()),
        Command::Verify(a) => ("verify", a.system.clone()),
        Command::Attractivity(a) => ("attractivity", a.system.clone()),
        Command::Validate(a) => ("validate", a.system.clone()),
    };
    let manifest = RunManifest::new(command, &input, argv, cli.seed, &cli.out_dir);
    let mut s = Session {
        cli,
        manifest,
        started: Instant::now(),
        out,
    };
    let r = match &cli.command {
        Command::Certify(a) => cmd_certify(&mut s, a),
        Command::Simulate(a) => cmd_simulate(&mut s, a),
        Command::Verify(a) => cmd_verify(&mut s, a),
        Command::Attractivity(a) => cmd_attractivity(&mut s, a),
        Command::Validate(a) => cmd_validate(&mut s, a),
    };
    match r.and_then(|code| s.finish().map(|_| code)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

/// Parses `args` (program name first) and runs; clap usage errors exit with 1.
pub fn main_with(args: Vec<String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match Cli::try_parse_from(&args) {
        Ok(cli) => run(&cli, &args[1..], out, err),
        Err(e) => {
            let _ = write!(err, "{e}");
            if e.use_stderr() {
                EXIT_INPUT
            } else {
                EXIT_OK
            }
        }
    }
}
