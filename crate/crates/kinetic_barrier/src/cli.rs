//! Command-line front end: argument parsing, dispatch, and the CSV and
//! manifest files each run leaves behind.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fixtures::own_bounds;
use crate::geom::{self, Vel};
use crate::operator;
use crate::solver::simulate;
use crate::suite;
use crate::verifier::{contact_scan, linfty_schedule, PropositionId, PropositionReport};

/// Environment variable that overrides the configured worker count.
pub const THREADS_ENV: &str = "KINETIC_BARRIER_THREADS";

#[derive(Debug, Parser)]
#[command(name = "kinetic-barrier", version, about = "Collision operator evaluation, bound verification and barrier scans")]
struct Cli {
    /// `key = value` configuration file (defaults apply without one).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for the CSV reports and the run manifest.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Seed for every randomized sample set.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cancellation constant of the configured kernel.
    ComputeCs,
    /// Split of the operator at one velocity, for the configured fixture.
    EvalOperator {
        /// Velocity as comma-separated components.
        #[arg(long = "v", allow_hyphen_values = true)]
        v: String,
    },
    /// Run the standard verification of one estimate, or of all of them.
    Verify {
        /// Estimate label such as 3.1, or `all`.
        #[arg(long)]
        prop: String,
    },
    /// Evolve the configured fixture and record moments.
    Simulate,
    /// Evolve the configured fixture and look for contact with a barrier.
    Scan {
        /// plain, const, power, q0, or linfty (calibrated L-infinity barrier).
        #[arg(long)]
        barrier: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ComputeCs => "compute-cs",
            Command::EvalOperator { .. } => "eval-operator",
            Command::Verify { .. } => "verify",
            Command::Simulate => "simulate",
            Command::Scan { .. } => "scan",
        }
    }
}

/// Files written by one command, and whether any verdict failed.
struct Outcome {
    files: Vec<(String, String)>,
    failed: bool,
    summary: Vec<String>,
}

/// Run the program on `argv` (including the program name) and return the
/// process exit code: 0 success, 1 a failed verdict, 2 usage or
/// configuration error, 3 numerical failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, argv: &[std::ffi::OsString]) -> Result<i32> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.seed.is_some() || cli.output_dir.is_some() || cli.verbose > 0 {
        let mut raw = cfg.raw.clone();
        if let Some(seed) = cli.seed {
            raw.set("seed", &seed.to_string())?;
        }
        if let Some(dir) = &cli.output_dir {
            raw.set("output_dir", &dir.to_string_lossy())?;
        }
        if cli.verbose > 0 {
            raw.set("verbosity", &cli.verbose.to_string())?;
        }
        cfg = RunConfig::from_raw(raw, cfg.config_path.clone())?;
    }
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
        ),
        Err(_) => cfg.threads,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    fs::create_dir_all(&cfg.output_dir)?;
    let stem = unique_stem(&cfg.output_dir, cli.command.name());
    let outcome = pool.install(|| dispatch(&cli.command, &cfg, &stem))?;
    for line in &outcome.summary {
        println!("{line}");
    }
    let code = if outcome.failed { 1 } else { 0 };
    write_manifest(&cfg, &stem, argv, pool.current_num_threads(), &outcome, code)?;
    Ok(code)
}

/// `<command>-<timestamp>` in the output directory, suffixed if taken.
fn unique_stem(dir: &Path, command: &str) -> PathBuf {
    let ts = chrono::Utc::now().format("%Y%m%dT%H%M%S%3fZ");
    let base = format!("{command}-{ts}");
    let mut stem = dir.join(&base);
    let mut k = 1;
    while with_suffix(&stem, ".csv").exists() || with_suffix(&stem, ".manifest").exists() {
        stem = dir.join(format!("{base}-{k}"));
        k += 1;
    }
    stem
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn log(cfg: &RunConfig, msg: impl AsRef<str>) {
    if cfg.verbosity > 0 {
        eprintln!("{}", msg.as_ref());
    }
}

fn dispatch(cmd: &Command, cfg: &RunConfig, stem: &Path) -> Result<Outcome> {
    match cmd {
        Command::ComputeCs => compute_cs(cfg, stem),
        Command::EvalOperator { v } => eval_operator(cfg, stem, v),
        Command::Verify { prop } => verify(cfg, stem, prop),
        Command::Simulate => run_simulation(cfg, stem),
        Command::Scan { barrier } => scan(cfg, stem, barrier),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new().from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn file_entry(label: &str, path: &Path) -> (String, String) {
    (label.to_string(), path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

fn compute_cs(cfg: &RunConfig, stem: &Path) -> Result<Outcome> {
    let cs = cfg.cancellation()?;
    let path = with_suffix(stem, ".csv");
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path).map_err(csv_err)?;
    w.write_record([num(cs.value), num(cs.quadrature_error)]).map_err(csv_err)?;
    w.flush()?;
    Ok(Outcome {
        files: vec![file_entry("csv", &path)],
        failed: false,
        summary: vec![format!("C_S = {} (error {})", num(cs.value), num(cs.quadrature_error))],
    })
}

/// Parse `x,y[,z]` into a velocity of dimension `d`; a trailing zero third
/// component is accepted in two dimensions.
pub fn parse_velocity(text: &str, d: usize) -> Result<Vel> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Config(format!("--v: cannot parse `{x}`"))))
        .collect::<Result<_>>()?;
    let ok = parts.len() == d || (parts.len() == 3 && d == 2 && parts[2] == 0.0);
    if !ok || parts.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!("--v needs {d} finite components, got `{text}`")));
    }
    Ok(geom::from_slice(&parts[..d]))
}

fn eval_operator(cfg: &RunConfig, stem: &Path, vtext: &str) -> Result<Outcome> {
    let v = parse_velocity(vtext, cfg.params.d)?;
    let f = cfg.initial_datum()?;
    let cs = cfg.cancellation()?;
    log(cfg, format!("evaluating the split at {:?}", &v[..cfg.params.d]));
    let split = operator::split_operator(&f, &f, &v, cfg.q, &cfg.params, &cs, &cfg.opts)?;
    let mut rows = vec![
        ("good", split.good, split.errors[0]),
        ("bad1", split.bad1, split.errors[1]),
        ("bad2", split.bad2, split.errors[2]),
        ("bad3", split.bad3, split.errors[3]),
        ("q_s", split.singular(), split.singular_error()),
        ("q_ns", split.q_ns, split.errors[4]),
        ("total", split.total, split.total_error()),
    ];
    // the σ-form reference needs an angular truncation
    if cfg.oracle && cfg.opts.theta_min > 0.0 {
        let o = operator::q_sigma_oracle(&f, &v, &cfg.params, &cfg.opts)?;
        rows.push(("sigma_oracle", o.value, o.error));
    }
    let path = with_suffix(stem, ".csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["quantity", "value", "error"]).map_err(csv_err)?;
    let mut summary = Vec::new();
    for (name, value, err) in rows {
        w.write_record([name.to_string(), num(value), num(err)]).map_err(csv_err)?;
        summary.push(format!("{name:>12} = {} ± {}", num(value), num(err)));
    }
    w.flush()?;
    Ok(Outcome { files: vec![file_entry("csv", &path)], failed: false, summary })
}

fn verify(cfg: &RunConfig, stem: &Path, prop: &str) -> Result<Outcome> {
    let ctx = cfg.verify_context()?;
    let reports = if prop.trim() == "all" {
        suite::run_all(&ctx, &cfg.suite)?
    } else {
        let id = PropositionId::parse(prop)?;
        log(cfg, format!("verifying {}", id.label()));
        suite::run_proposition(id, &ctx, &cfg.suite)?
    };
    let rows_path = with_suffix(stem, ".csv");
    write_report_rows(&rows_path, &reports)?;
    let summary_path = with_suffix(stem, "-summary.csv");
    write_report_summary(&summary_path, &reports)?;
    let failed = reports.iter().any(|r| !r.verdict);
    let summary = reports
        .iter()
        .map(|r| {
            format!(
                "{:<14} {}  rows {:>3}  spread {:.3e} (cap {:.0e})",
                r.tag(),
                if r.verdict { "PASS" } else { "FAIL" },
                r.rows.len(),
                r.spread,
                r.spread_cap
            )
        })
        .collect();
    Ok(Outcome {
        files: vec![file_entry("csv", &rows_path), file_entry("summary", &summary_path)],
        failed,
        summary,
    })
}

/// One line per sample: `prop_id, q, v_norm, lhs, rhs_core, implied_constant, verdict`.
pub fn write_report_rows(path: &Path, reports: &[PropositionReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["prop_id", "q", "v_norm", "lhs", "rhs_core", "implied_constant", "verdict"]).map_err(csv_err)?;
    for r in reports {
        for row in &r.rows {
            let verdict = match (row.admissible, row.pass) {
                (false, true) => "SKIP",
                (_, true) => "PASS",
                (_, false) => "FAIL",
            };
            w.write_record([
                r.tag(),
                num(row.q),
                num(row.v_norm),
                num(row.lhs),
                num(row.rhs_core),
                num(row.implied_constant),
                verdict.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One line per report with its verdict, spreads, fitted slopes and notes.
pub fn write_report_summary(path: &Path, reports: &[PropositionReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["prop_id", "verdict", "rows", "spread", "spread_cap", "q_spread", "slopes", "notes"])
        .map_err(csv_err)?;
    for r in reports {
        let slopes: Vec<String> =
            r.fits.iter().map(|f| format!("q={}:lhs={:.4},rhs={:.4}", f.q, f.lhs_slope, f.rhs_slope)).collect();
        let q_spread = r.q_spread.map(|(v, cap)| format!("{}<={}", num(v), num(cap))).unwrap_or_default();
        w.write_record([
            r.tag(),
            (if r.verdict { "PASS" } else { "FAIL" }).to_string(),
            r.rows.len().to_string(),
            num(r.spread),
            num(r.spread_cap),
            q_spread,
            slopes.join(";"),
            r.notes.join(";"),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn run_simulation(cfg: &RunConfig, stem: &Path) -> Result<Outcome> {
    let scfg = cfg.solver_config()?;
    let f0 = cfg.initial_datum()?;
    log(cfg, format!("simulating to t = {}", scfg.t_end));
    let sim = simulate(&scfg, &f0)?;
    let path = with_suffix(stem, ".csv");
    let mut w = csv_writer(&path)?;
    let tr = &sim.trace;
    let mut header = vec!["t".to_string(), "mass".into(), "energy".into(), "entropy".into()];
    for q in &tr.orders {
        header.push(format!("sup_weighted_{q}"));
    }
    for q in &tr.orders {
        header.push(format!("moment_{q}"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..tr.times.len() {
        let mut rec = vec![num(tr.times[i]), num(tr.mass[i]), num(tr.energy[i]), num(tr.entropy[i])];
        rec.extend(tr.sup_weighted[i].iter().map(|x| num(*x)));
        rec.extend(tr.l1_moments[i].iter().map(|x| num(*x)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    let mut summary = vec![format!(
        "{} steps to t = {}; clipped mass {}; entropy increases: {}",
        sim.steps,
        num(scfg.t_end),
        num(sim.clipped_mass),
        tr.entropy_violations(1e-10).len()
    )];
    if !sim.usable_for_verification() {
        summary.push("warning: clipping removed more than 1e-3 of the mass".into());
    }
    Ok(Outcome { files: vec![file_entry("csv", &path)], failed: false, summary })
}

fn scan(cfg: &RunConfig, stem: &Path, form: &str) -> Result<Outcome> {
    // reject an unknown form before spending time on the trajectory
    let fixed = if form == "linfty" { None } else { Some(cfg.barrier(form)?) };
    let scfg = cfg.solver_config()?;
    if scfg.snapshot_times.is_empty() {
        return Err(Error::Config("scan needs snapshot_times".into()));
    }
    let f0 = cfg.initial_datum()?;
    log(cfg, format!("simulating to t = {}", scfg.t_end));
    let sim = simulate(&scfg, &f0)?;
    let snaps: Vec<_> = sim.snapshots.into_iter().filter(|s| s.t > 0.0).collect();
    let barrier = match fixed {
        Some(b) => b,
        None => linfty_schedule(&cfg.params, &own_bounds(&f0), &snaps)?,
    };
    let ctx = cfg.verify_context()?;
    let result = contact_scan(&snaps, &barrier, &ctx)?;
    let n0 = match barrier.amplitude {
        crate::barrier::Amplitude::Constant(n) => n,
        crate::barrier::Amplitude::Power { n0, .. } | crate::barrier::Amplitude::ShiftedPower { n0, .. } => n0,
    };
    let path = with_suffix(stem, ".csv");
    let mut w = csv_writer(&path)?;
    w.write_record([
        "form", "n0", "q", "contact", "t0", "v0_x", "v0_y", "v0_z", "margin", "min_margin", "good", "bad1", "bad2",
        "bad3", "q_ns", "total", "dtg", "contradiction",
    ])
    .map_err(csv_err)?;
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    let b = result.rhs_breakdown;
    w.write_record([
        form.to_string(),
        num(n0),
        num(barrier.q),
        result.contact.to_string(),
        num(result.t0),
        num(result.v0[0]),
        num(result.v0[1]),
        num(result.v0[2]),
        num(result.margin),
        num(result.min_margin),
        opt(b.map(|s| s.good)),
        opt(b.map(|s| s.bad1)),
        opt(b.map(|s| s.bad2)),
        opt(b.map(|s| s.bad3)),
        opt(b.map(|s| s.q_ns)),
        opt(b.map(|s| s.total)),
        opt(result.dtg),
        result.contradiction.map(|c| c.to_string()).unwrap_or_default(),
    ])
    .map_err(csv_err)?;
    w.flush()?;
    let failed = result.contact && result.contradiction == Some(false);
    let summary = vec![if result.contact {
        format!(
            "contact at t = {} node {}; Q = {}, dg/dt = {}; {}",
            num(result.t0),
            result.v0_index,
            opt(b.map(|s| s.total)),
            opt(result.dtg),
            if failed { "FAIL: contact inequality holds" } else { "PASS: contact inequality violated" }
        )
    } else {
        format!("no contact over {} snapshots; smallest margin {}; N = {}", result.snapshots_scanned, num(result.min_margin), num(n0))
    }];
    Ok(Outcome { files: vec![file_entry("csv", &path)], failed, summary })
}

fn write_manifest(
    cfg: &RunConfig,
    stem: &Path,
    argv: &[std::ffi::OsString],
    threads: usize,
    outcome: &Outcome,
    exit_code: i32,
) -> Result<()> {
    let mut m = fs::File::create(with_suffix(stem, ".manifest"))?;
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    writeln!(m, "code_version = {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))?;
    writeln!(m, "timestamp = {}", chrono::Utc::now().to_rfc3339())?;
    writeln!(m, "argv = {}", args.join(" "))?;
    writeln!(
        m,
        "config_path = {}",
        cfg.config_path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "(defaults)".into())
    )?;
    writeln!(m, "threads_used = {threads}")?;
    for (k, v) in cfg.raw.entries() {
        writeln!(m, "{k} = {v}")?;
    }
    for (k, v) in &outcome.files {
        writeln!(m, "output_{k} = {v}")?;
    }
    writeln!(m, "exit_code = {exit_code}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_parsing() {
        assert_eq!(parse_velocity("1,-2", 2).unwrap(), [1.0, -2.0, 0.0]);
        assert_eq!(parse_velocity("1, -2, 0", 2).unwrap(), [1.0, -2.0, 0.0]);
        assert!(parse_velocity("1,2,3", 2).is_err());
        assert!(parse_velocity("1,x", 2).is_err());
        assert_eq!(parse_velocity("1,2,3", 3).unwrap(), [1.0, 2.0, 3.0]);
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["kinetic-barrier", "frobnicate"]), 2);
        assert_eq!(run(["kinetic-barrier", "verify"]), 2);
        assert_eq!(run(["kinetic-barrier", "--config", "/nonexistent.cfg", "compute-cs"]), 2);
    }
}
