use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use imub::exit_measures::{
    quadrant_density, quadrant_exit_coords, square_exit_point, EPoint, QuadrantPoint,
};
use imub::experiments::ExperimentConfig;
use imub::io::{config_digest, read_json, write_csv, write_json, JsonlWriter};
use imub::kernels::green::{
    self, g_hat_log_eval, g_hat_plain_eval, green_value, GreenKind, DEFAULT_TOLERANCE,
};
use imub::kernels::{Kernel, KernelFile, StepLaw};
use imub::rng::replica_stream;
use imub::stats::mean_se;
use imub::trotter_sim::{run_trajectory, Record, SimConfig, Snapshot};
use imub::{Error, Result};

/// Replicas simulated between two flushes of the trajectory file.
const BATCH: u64 = 256;

#[derive(Parser)]
#[command(
    name = "imub",
    version,
    about = "Infinite-rate mutually catalytic branching: simulator and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replicas of a simulation config and write trajectories.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config and write its report.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw exit points from the quadrant, or from the square with --box.
    SampleExit {
        /// Start point `u,v`.
        #[arg(long, value_parser = parse_pair)]
        x: (f64, f64),
        /// Side of the square `[0, K]²`.
        #[arg(long = "box")]
        box_size: Option<f64>,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        seed: u64,
        /// CSV output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the quadrant exit density on both axes.
    Density {
        #[arg(long, value_parser = parse_pair)]
        x: (f64, f64),
        #[arg(long, default_value_t = 10.0)]
        max: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a Green-type potential.
    Green {
        /// Kernel file (JSON with n_sites, triples, geometry).
        #[arg(long, conflicts_with = "lattice", required_unless_present = "lattice")]
        kernel: Option<PathBuf>,
        /// Torus `d,L` with nearest-neighbour steps.
        #[arg(long, value_parser = parse_lattice)]
        lattice: Option<(usize, usize)>,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        t: f64,
        #[arg(long, value_enum, default_value_t = Which::G)]
        which: Which,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
    },
    /// Run the built-in invariant checks.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    G,
    BarG,
    BarGStar,
    HatLog,
    HatPlain,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or("expected two comma-separated numbers")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn parse_lattice(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected d,L")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'static str,
    command: &'a str,
    config_digest: &'a str,
    seed: Option<u64>,
    started_unix: f64,
    finished_unix: f64,
    runtime_seconds: f64,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    replica: u64,
    #[serde(flatten)]
    record: &'a Record,
}

#[derive(Serialize)]
struct SnapshotLine<'a> {
    replica: u64,
    state: &'a Snapshot,
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let started = unix_now();
    let clock = Instant::now();
    let mut cfg: SimConfig = read_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let kernel = cfg.kernel.build(&base_dir(config))?;
    cfg.validate_for(&kernel)?;
    let digest = config_digest(&cfg)?;
    create_dir(out)?;

    let traj_name = format!("trajectory-{}.jsonl", &digest[..12]);
    let snap_name = format!("final-state-{}.jsonl", &digest[..12]);
    let mut traj_out = JsonlWriter::create(&out.join(&traj_name))?;
    let mut snap_out = if cfg.snapshot {
        Some(JsonlWriter::create(&out.join(&snap_name))?)
    } else {
        None
    };
    let mut start = 0;
    while start < cfg.replicas {
        let end = (start + BATCH).min(cfg.replicas);
        let batch: Vec<_> = (start..end)
            .into_par_iter()
            .map(|r| run_trajectory(&kernel, &cfg, r))
            .collect::<Result<_>>()?;
        for (traj, replica) in batch.iter().zip(start..end) {
            for record in &traj.records {
                traj_out.write(&TrajectoryLine { replica, record })?;
            }
            if let (Some(w), Some(state)) = (snap_out.as_mut(), traj.final_state.as_ref()) {
                w.write(&SnapshotLine { replica, state })?;
            }
        }
        start = end;
    }
    traj_out.finish()?;
    let mut outputs = vec![traj_name.clone()];
    if let Some(w) = snap_out {
        w.finish()?;
        outputs.push(snap_name);
    }
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "simulate",
            config_digest: &digest,
            seed: Some(cfg.seed),
            started_unix: started,
            finished_unix: unix_now(),
            runtime_seconds: clock.elapsed().as_secs_f64(),
            outputs,
        },
    )?;
    println!(
        "wrote {} replicas to {}",
        cfg.replicas,
        out.join(traj_name).display()
    );
    Ok(())
}

fn experiment(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let started = unix_now();
    let mut cfg: ExperimentConfig = read_json(config)?;
    if let (Some(s), Some(slot)) = (seed, cfg.seed_mut()) {
        *slot = s;
    }
    let report = cfg.run(&base_dir(config))?;
    create_dir(out)?;
    write_json(&out.join("report.json"), &report)?;
    let mut raw = JsonlWriter::create(&out.join("raw.jsonl"))?;
    for row in &report.raw {
        raw.write(row)?;
    }
    raw.finish()?;
    let rows: Vec<_> = report
        .cells
        .iter()
        .map(|c| (&c.label, c.estimate, c.std_error, c.replicas))
        .collect();
    write_csv(
        &out.join("summary.csv"),
        &["label", "estimate", "std_error", "replicas"],
        &rows,
    )?;
    let seed = cfg.seed_mut().map(|s| *s);
    write_json(
        &out.join("manifest.json"),
        &Manifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "experiment",
            config_digest: &report.config_digest,
            seed,
            started_unix: started,
            finished_unix: unix_now(),
            runtime_seconds: report.runtime.as_secs_f64(),
            outputs: vec![
                "report.json".into(),
                "raw.jsonl".into(),
                "summary.csv".into(),
            ],
        },
    )?;
    for c in &report.cells {
        println!("{:<28} {:>14.6} ± {:.6}", c.label, c.estimate, c.std_error);
    }
    println!(
        "verdict: {}",
        serde_json::to_string(&report.verdict)?.trim_matches('"')
    );
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(std::fs::File::create(p).map_err(|e| {
            Error::Io {
                path: p.to_path_buf(),
                source: e,
            }
        })?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn io_err(path: Option<&Path>) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("<stdout>")),
        source: e,
    }
}

fn sample_exit(
    x: (f64, f64),
    box_size: Option<f64>,
    n: u64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let start =
        QuadrantPoint::new(x.0, x.1).map_err(|e| Error::InvalidArgument(format!("--x: {e}")))?;
    if let Some(k) = box_size {
        if !(k.is_finite() && k > 0.0) || start.u > k || start.v > k {
            return Err(Error::InvalidArgument(format!(
                "--x must lie in [0, {k}]² and --box must be positive"
            )));
        }
    }
    let mut rng = replica_stream(seed, 0);
    let mut w = output(out)?;
    let err = io_err(out);
    writeln!(w, "y1,y2").map_err(&err)?;
    let (mut s1, mut s2) = (
        Vec::with_capacity(n as usize),
        Vec::with_capacity(n as usize),
    );
    for _ in 0..n {
        let (a, b) = match box_size {
            None => quadrant_exit_coords(&mut rng, start.u, start.v),
            Some(k) => square_exit_point(&mut rng, start.u, start.v, k).coords(),
        };
        writeln!(w, "{a},{b}").map_err(&err)?;
        s1.push(a);
        s2.push(b);
    }
    w.flush().map_err(&err)?;
    let (m1, m2) = (mean_se(&s1), mean_se(&s2));
    eprintln!(
        "mean y1 = {} ± {}, mean y2 = {} ± {} over {n} draws",
        m1.estimate, m1.std_error, m2.estimate, m2.std_error
    );
    Ok(())
}

fn density(x: (f64, f64), max: f64, points: usize, out: Option<&Path>) -> Result<()> {
    let start = QuadrantPoint::new(x.0, x.1)?;
    let mut w = output(out)?;
    let err = io_err(out);
    writeln!(w, "axis,magnitude,density").map_err(&err)?;
    for (name, make) in [
        ("horizontal", EPoint::horizontal as fn(f64) -> EPoint),
        ("vertical", EPoint::vertical),
    ] {
        for i in 1..=points {
            let m = max * i as f64 / points as f64;
            writeln!(w, "{name},{m},{}", quadrant_density(start, make(m))?).map_err(&err)?;
        }
    }
    w.flush().map_err(&err)
}

#[allow(clippy::too_many_arguments)]
fn green_cmd(
    kernel: Option<&Path>,
    lattice: Option<(usize, usize)>,
    k: usize,
    l: usize,
    t: f64,
    which: Which,
    tol: f64,
) -> Result<()> {
    let kernel = match (kernel, lattice) {
        (Some(p), _) => read_json::<KernelFile>(p)?.build()?,
        (None, Some((d, side))) => Kernel::lattice(d, side, StepLaw::NearestNeighborUniform)?,
        (None, None) => return Err(Error::InvalidArgument("give --kernel or --lattice".into())),
    };
    if k >= kernel.n_sites() || l >= kernel.n_sites() {
        return Err(Error::InvalidArgument(format!(
            "sites must be below {}",
            kernel.n_sites()
        )));
    }
    if let Some(w) = green::torus_horizon_warning(&kernel, t) {
        eprintln!("warning: {w}");
    }
    let est = match which {
        Which::G => green_value(&kernel, k, l, t, GreenKind::G, tol)?,
        Which::BarG => green_value(&kernel, k, l, t, GreenKind::BarG, tol)?,
        Which::BarGStar => green_value(&kernel, k, l, t, GreenKind::BarGStar, tol)?,
        Which::HatLog => g_hat_log_eval(&kernel, k, l, t, tol)?,
        Which::HatPlain => g_hat_plain_eval(&kernel, k, l, t, tol)?,
    };
    println!("{}", serde_json::to_string(&est)?);
    Ok(())
}

fn verify() -> Result<bool> {
    let checks = imub::verify::run_all();
    let mut ok = true;
    for c in &checks {
        println!(
            "{} {}{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            if c.detail.is_empty() {
                String::new()
            } else {
                format!(" ({})", c.detail)
            }
        );
        ok &= c.passed;
    }
    Ok(ok)
}

fn configure_threads() {
    if let Some(n) = std::env::var("IMUB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if n > 0 {
            // fails only if a pool already exists, which cannot happen this early
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match &cli.command {
        Command::Simulate { config, seed, out } => simulate(config, *seed, out).map(|_| true),
        Command::Experiment { config, seed, out } => experiment(config, *seed, out).map(|_| true),
        Command::SampleExit {
            x,
            box_size,
            n,
            seed,
            out,
        } => sample_exit(*x, *box_size, *n, *seed, out.as_deref()).map(|_| true),
        Command::Density {
            x,
            max,
            points,
            out,
        } => density(*x, *max, *points, out.as_deref()).map(|_| true),
        Command::Green {
            kernel,
            lattice,
            k,
            l,
            t,
            which,
            tol,
        } => green_cmd(kernel.as_deref(), *lattice, *k, *l, *t, *which, *tol).map(|_| true),
        Command::Verify => verify(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let body = serde_json::json!({"error": {"kind": e.kind(), "message": e.to_string()}});
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}
