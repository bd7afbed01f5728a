//! Whole-run driver and the run-directory artifacts.
//!
//! A run directory holds:
//! - `config.toml`: the effective configuration with every default written out
//! - `diag.csv`: one diagnostics row per step, flushed as it is produced
//! - `circulation.csv`: tracked-realization circulation per step
//! - `timing.csv`: wall-clock seconds, Picard passes and Newton iterations per step
//! - `u_XXXXX.slnsf` (and `omega_XXXXX.slnsf` when vorticity is tracked):
//!   snapshots at step 0, every `snapshot_interval` steps and the final step
//! - `manifest.txt`: sha256 of every other file
//!
//! Wall-clock data lives only in `timing.csv`, so `diag.csv` is byte-identical
//! across repeated runs with the same seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::snapshot;
use crate::solver::{CirculationRecord, Solver, StepDiagnostics, StepReport};

pub const CONFIG_FILE: &str = "config.toml";
pub const DIAG_FILE: &str = "diag.csv";
pub const CIRCULATION_FILE: &str = "circulation.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn snapshot_name(prefix: &str, step: u64) -> String {
    format!("{prefix}_{step:05}.slnsf")
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: u64,
    pub time: f64,
    pub energy: f64,
    pub max_divergence: f64,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn line(&self) -> String {
        format!(
            "steps={} t={:.6} energy={:.10e} max_div={:.3e} wall={:.2}s",
            self.steps, self.time, self.energy, self.max_divergence, self.wall_seconds
        )
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub velocity: Field,
    pub vorticity: Option<Field>,
    /// Monte Carlo standard error of the final velocity, component-major.
    pub standard_error: Vec<f64>,
    pub reports: Vec<StepReport>,
    pub snapshots: Vec<PathBuf>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn diagnostics(&self) -> impl Iterator<Item = &StepDiagnostics> {
        self.reports.iter().map(|r| &r.diagnostics)
    }
}

struct Writers {
    dir: PathBuf,
    diag: BufWriter<File>,
    circ: BufWriter<File>,
    timing: BufWriter<File>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn line(w: &mut BufWriter<File>, path: &Path, text: &str) -> Result<()> {
    writeln!(w, "{text}").map_err(|e| Error::io(path, e))
}

impl Writers {
    fn open(dir: &Path, cfg: &SolverConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, cfg.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;
        let mut me = Self {
            dir: dir.to_path_buf(),
            diag: create(&dir.join(DIAG_FILE))?,
            circ: create(&dir.join(CIRCULATION_FILE))?,
            timing: create(&dir.join(TIMING_FILE))?,
        };
        me.write_rows(
            StepDiagnostics::HEADER,
            CirculationRecord::HEADER,
            "step,wall_seconds,picard_passes,newton_iterations",
        )?;
        Ok(me)
    }

    fn write_rows(&mut self, diag: &str, circ: &str, timing: &str) -> Result<()> {
        line(&mut self.diag, &self.dir.join(DIAG_FILE), diag)?;
        if !circ.is_empty() {
            line(&mut self.circ, &self.dir.join(CIRCULATION_FILE), circ)?;
        }
        line(&mut self.timing, &self.dir.join(TIMING_FILE), timing)?;
        self.flush()
    }

    fn record(&mut self, r: &StepReport) -> Result<()> {
        let circ: Vec<String> = r.circulation.iter().map(|c| c.csv_row()).collect();
        let timing = format!(
            "{},{:.6},{},{}",
            r.diagnostics.step, r.wall_seconds, r.picard_passes, r.inversion.max_iterations
        );
        self.write_rows(&r.diagnostics.csv_row(), &circ.join("\n"), &timing)
    }

    fn flush(&mut self) -> Result<()> {
        let dir = &self.dir;
        self.diag.flush().map_err(|e| Error::io(dir.join(DIAG_FILE), e))?;
        self.circ
            .flush()
            .map_err(|e| Error::io(dir.join(CIRCULATION_FILE), e))?;
        self.timing.flush().map_err(|e| Error::io(dir.join(TIMING_FILE), e))
    }

    fn snapshot(&self, solver: &Solver, out: &mut Vec<PathBuf>) -> Result<()> {
        let step = solver.step_index();
        let path = self.dir.join(snapshot_name("u", step));
        snapshot::write(&path, solver.velocity(), solver.time())?;
        if solver.config().output.snapshot_csv {
            snapshot::write_csv(&path.with_extension("csv"), solver.velocity())?;
        }
        out.push(path);
        if let Some(w) = solver.vorticity() {
            let path = self.dir.join(snapshot_name("omega", step));
            snapshot::write(&path, w, solver.time())?;
            out.push(path);
        }
        Ok(())
    }
}

/// Hash every regular file in `dir` (except the manifest itself) into
/// `manifest.txt`, one `sha256  name` line per file in name order.
pub fn write_manifest(dir: &Path) -> Result<()> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    names.sort();
    let mut text = String::new();
    for name in names {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        text.push_str(&format!("{}  {name}\n", hex::encode(Sha256::digest(&bytes))));
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Run `cfg` to its end time. With `out_dir`, artifacts are written as the run
/// proceeds; if a step fails, everything produced so far (including the
/// manifest) is flushed before the error is returned.
pub fn run(cfg: &SolverConfig, workers: usize, out_dir: Option<&Path>) -> Result<RunOutput> {
    let started = Instant::now();
    let mut solver = Solver::new(cfg, workers)?;
    let mut writers = out_dir.map(|d| Writers::open(d, cfg)).transpose()?;
    let mut snapshots = Vec::new();
    let mut reports = Vec::new();
    if let Some(w) = &writers {
        w.snapshot(&solver, &mut snapshots)?;
    }
    let interval = cfg.output.snapshot_interval as u64;
    let result = (|| -> Result<()> {
        while !solver.is_done() {
            let report = solver.step()?;
            if let Some(w) = writers.as_mut() {
                w.record(&report)?;
                let last = solver.is_done();
                if last || (interval > 0 && solver.step_index() % interval == 0) {
                    w.snapshot(&solver, &mut snapshots)?;
                }
            }
            log::debug!("{}", report.diagnostics.csv_row());
            reports.push(report);
        }
        Ok(())
    })();
    if let Some(mut w) = writers.take() {
        w.flush()?;
        drop(w);
        write_manifest(out_dir.unwrap())?;
    }
    result?;

    let u = solver.velocity().clone();
    let max_divergence = reports.iter().map(|r| r.diagnostics.div_max).fold(0.0, f64::max);
    let summary = RunSummary {
        steps: solver.step_index(),
        time: solver.time(),
        energy: u.energy(),
        max_divergence,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        vorticity: solver.vorticity().cloned(),
        standard_error: solver.standard_error(),
        velocity: u,
        reports,
        snapshots,
        summary,
    })
}

/// Snapshots `prefix_XXXXX.slnsf` in a run directory, in step order.
pub fn list_snapshots(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "slnsf")
                && p.file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(|s| s.strip_prefix(prefix))
                    .is_some_and(|rest| rest.starts_with('_') && rest[1..].chars().all(|c| c.is_ascii_digit()))
        })
        .collect();
    out.sort();
    Ok(out)
}
