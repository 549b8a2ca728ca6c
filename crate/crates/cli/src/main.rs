//! `risradar` command-line harness. Every command writes its outputs plus a
//! `manifest.json` listing each file's SHA-256; `replay` re-runs a manifest
//! and checks the checksums.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use risradar::config::ExperimentConfig;
use risradar::doa::estimate_angles;
use risradar::experiments::{beta_sweep, inr_sweep, per_beta_median, spacing_sweep, train_and_convolve};
use risradar::io;
use risradar::risopt::beam_pattern;
use risradar::rvmap::{error_sweep, Stage, SweepOptions, SweepStage};
use risradar::scene::derive_constants;
use risradar::waveform::{synthesize, ArrayManifold, RisConfig, SymbolBook};
use risradar::Error;

#[derive(Parser, Debug)]
#[command(name = "risradar", version, about = "RIS-assisted OFDM radar experiments")]
struct Cli {
    /// Worker threads for sweeps (default: all hardware threads).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Synthesize a probing frame with a random-phase RIS and write it out.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate both angles from a grid file and the RIS that produced it.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        ris: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the RIS for one blend weight and apply the notch.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a multi-run study.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        sweep: SweepKind,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict the INR sweep to these stages (repeatable).
        #[arg(long, value_enum)]
        stage: Vec<StageArg>,
    },
    /// Re-run a manifest into a fresh directory and compare checksums.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum SweepKind {
    Beta,
    Inr,
    Spacing,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum StageArg {
    Random,
    Trained,
    Convolved,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::Random => Stage::Random,
            StageArg::Trained => Stage::Trained,
            StageArg::Convolved => Stage::Convolved,
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                Error::Config(_) | Error::InvalidAngle(_) => 2,
                Error::DimensionMismatch { .. }
                | Error::SubcarrierOutOfRange { .. }
                | Error::Format(_)
                | Error::Io(_) => 3,
                Error::TrainingAborted(_) | Error::PeaksMerged { .. } | Error::NoDetection { .. } => 4,
                _ => 1,
            },
            CliError::Io { .. } => 2,
            CliError::Mismatch(_) => 3,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct FileEntry {
    file: String,
    sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    toolkit_version: String,
    command: Command,
    config_sha256: String,
    /// Full config text, so a replay does not depend on the original file.
    config_toml: String,
    inputs: Vec<FileEntry>,
    seeds: Vec<u64>,
    started_unix_s: f64,
    finished_unix_s: f64,
    outputs: Vec<FileEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_sha256(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&fs::read(path).map_err(io_at(path))?))
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Collects the files a command writes, in write order.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(io_at(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> risradar::Result<()>) -> CliResult<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(io_at(&path))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(io_at(&path))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn csv_rows(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
        self.write(name, |w| {
            writeln!(w, "{}", header.join(","))?;
            for r in rows {
                writeln!(w, "{}", r.join(","))?;
            }
            Ok(())
        })
    }
}

struct Loaded {
    cfg: ExperimentConfig,
    text: String,
}

fn load_config(path: &Path) -> CliResult<Loaded> {
    let text = fs::read_to_string(path).map_err(io_at(path))?;
    let cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok(Loaded { cfg, text })
}

fn beta_tag(beta: f64) -> String {
    format!("{beta:.2}")
}

const FRAME_STREAM: u64 = 20;

fn cmd_simulate(l: &Loaded, seed: Option<u64>, out: &mut Outputs) -> CliResult<Vec<u64>> {
    let mut scene = l.cfg.scene.clone();
    if let Some(s) = seed {
        scene.rng_seed = s;
    }
    scene.validate()?;
    let consts = derive_constants(&scene)?;
    for w in scene.alias_warnings(&consts) {
        eprintln!("warning: {w}");
    }
    println!(
        "delta_f = {:.6e} Hz, T = {:.6e} s, unambiguous range = {:.4} m, range resolution = {:.4} m, velocity resolution = {:.4} m/s",
        consts.delta_f_hz,
        consts.symbol_period_s,
        consts.unambiguous_range_m,
        consts.range_resolution_m,
        consts.velocity_resolution_mps
    );
    let mut rng = ChaCha8Rng::seed_from_u64(scene.rng_seed);
    rng.set_stream(FRAME_STREAM);
    let ris = RisConfig::random(scene.n_ris_elements, scene.n_symbols, &mut rng);
    let book_seed = rand::Rng::random(&mut rng);
    let book = SymbolBook::probing(scene.n_subcarriers, scene.n_symbols, scene.psk_order, book_seed);
    let grid = synthesize(&scene, &ris, &book, true, &mut rng)?;
    out.json("constants.json", &consts)?;
    out.write("grid.bin", |w| io::write_grid_binary(&grid, w))?;
    out.write("grid.csv", |w| io::write_grid_csv(&grid, w))?;
    out.write("ris.csv", |w| io::write_ris_csv(&ris, w))?;
    Ok(vec![scene.rng_seed])
}

fn read_grid(path: &Path) -> CliResult<risradar::waveform::SymbolGrid> {
    let file = File::open(path).map_err(io_at(path))?;
    let r = std::io::BufReader::new(file);
    Ok(if path.extension().is_some_and(|e| e == "csv") {
        io::read_grid_csv(r)?
    } else {
        io::read_grid_binary(r)?
    })
}

fn cmd_estimate(l: &Loaded, grid: &Path, ris: &Path, out: &mut Outputs) -> CliResult<Vec<u64>> {
    let scene = &l.cfg.scene;
    let g = read_grid(grid)?;
    let ris_file = File::open(ris).map_err(io_at(ris))?;
    let c = io::read_ris_csv(std::io::BufReader::new(ris_file))?;
    if g.data.dim() != (scene.n_subcarriers, scene.n_symbols) {
        return Err(CliError::Mismatch(format!(
            "grid is {:?}, config expects ({}, {})",
            g.data.dim(),
            scene.n_subcarriers,
            scene.n_symbols
        )));
    }
    let manifold = ArrayManifold::from_scene(scene)?;
    let mut opts = l.cfg.train.estimate.clone();
    opts.angle_grid = scene.angle_grid;
    let est = estimate_angles(&manifold, &g, &c, &opts)?;
    println!(
        "theta_t = {:.4} deg, theta_i = {:.4} deg, resolved on {}/{} subcarriers",
        est.theta_target,
        est.theta_interf,
        est.n_resolved(),
        est.per_subcarrier.len()
    );
    out.json("music.json", &est)?;
    let angles = opts.angle_grid.points();
    out.write("spectrum.csv", |w| io::write_spectrum_csv(&angles, &est.per_subcarrier, w))?;
    Ok(vec![g.seed])
}

fn write_train_artifacts(
    out: &mut Outputs,
    scene: &risradar::scene::SceneConfig,
    t: &risradar::experiments::TrainedRis,
    suffix: &str,
) -> CliResult<()> {
    let manifold = ArrayManifold::from_scene(scene)?;
    let grid = scene.angle_grid;
    let r = &t.report;
    let angles = grid.points();
    let spectrum_rows = if r.final_spectrum.len() == angles.len() {
        angles
            .iter()
            .zip(&r.final_spectrum)
            .map(|(a, p)| vec![a.to_string(), (10.0 * p.log10()).to_string(), "0".into()])
            .collect()
    } else {
        Vec::new()
    };
    out.csv_rows(
        &format!("spectrum_{suffix}.csv"),
        &["angle_deg", "power_db", "subcarrier_index"],
        spectrum_rows,
    )?;
    let pre = beam_pattern(&manifold, &r.final_ris, &grid, 0)?;
    let post = beam_pattern(&manifold, &t.convolved, &grid, 0)?;
    out.write(&format!("pattern_{suffix}.csv"), |w| io::write_pattern_csv(&pre, w))?;
    out.write(&format!("pattern_convolved_{suffix}.csv"), |w| io::write_pattern_csv(&post, w))?;
    Ok(())
}

fn cmd_train(l: &Loaded, beta: Option<f64>, seed: Option<u64>, out: &mut Outputs) -> CliResult<Vec<u64>> {
    let mut scene = l.cfg.scene.clone();
    if let Some(s) = seed {
        scene.rng_seed = s;
    }
    let beta = beta.unwrap_or(l.cfg.sweep.beta);
    let t = train_and_convolve(&scene, beta, &l.cfg.train)?;
    let r = &t.report;
    let suffix = format!("beta{}", beta_tag(beta));
    out.json(&format!("report_{suffix}.json"), r)?;
    out.write(&format!("iterations_{suffix}.csv"), |w| io::write_train_csv(&r.records, w))?;
    out.write(&format!("ris_trained_{suffix}.csv"), |w| io::write_ris_csv(&r.final_ris, w))?;
    out.write(&format!("ris_convolved_{suffix}.csv"), |w| io::write_ris_csv(&t.convolved, w))?;
    write_train_artifacts(out, &scene, &t, &suffix)?;
    println!(
        "beta = {beta}: SINR {:.2} dB -> {:.2} dB (best iteration {}), angles ({:.4}, {:.4}) deg",
        r.initial_sinr_db, r.final_sinr_db, r.best_iteration, r.final_theta_t_hat, r.final_theta_i_hat
    );
    if let Some(reason) = &r.aborted {
        // Outputs above are kept; the exit code still reports the abort.
        return Err(Error::TrainingAborted(reason.clone()).into());
    }
    Ok(vec![scene.rng_seed])
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn cmd_sweep(
    l: &Loaded,
    kind: SweepKind,
    beta: Option<f64>,
    seed: Option<u64>,
    stages: &[StageArg],
    out: &mut Outputs,
) -> CliResult<Vec<u64>> {
    let mut scene = l.cfg.scene.clone();
    if let Some(s) = seed {
        scene.rng_seed = s;
    }
    let sw = &l.cfg.sweep;
    let beta = beta.unwrap_or(sw.beta);
    let seeds: Vec<u64> = (0..sw.n_seeds as u64).map(|k| scene.rng_seed.wrapping_add(k)).collect();
    match kind {
        SweepKind::Beta => {
            let runs = beta_sweep(&scene, &l.cfg.train, &sw.betas, sw.n_seeds)?;
            let header = [
                "beta",
                "seed",
                "initial_sinr_db",
                "sinr_db",
                "convolved_sinr_db",
                "gain_advantage_db",
                "convolved_gain_advantage_db",
                "peak_ratio_linear",
                "theta_t_hat_deg",
                "theta_i_hat_deg",
                "converged",
                "aborted",
            ];
            let rows = runs
                .iter()
                .map(|r| {
                    vec![
                        fmt(r.beta),
                        r.seed.to_string(),
                        fmt(r.initial_sinr_db),
                        fmt(r.sinr_db),
                        fmt(r.convolved_sinr_db),
                        fmt(r.gain_advantage_db),
                        fmt(r.convolved_gain_advantage_db),
                        fmt(r.peak_ratio),
                        fmt(r.theta_t_hat),
                        fmt(r.theta_i_hat),
                        r.converged.to_string(),
                        r.aborted.is_some().to_string(),
                    ]
                })
                .collect();
            out.csv_rows("beta_runs.csv", &header, rows)?;
            let sinr = per_beta_median(&runs, &sw.betas, |r| r.sinr_db);
            let adv = per_beta_median(&runs, &sw.betas, |r| r.gain_advantage_db);
            let ratio = per_beta_median(&runs, &sw.betas, |r| r.peak_ratio);
            let conv = per_beta_median(&runs, &sw.betas, |r| r.convolved_sinr_db);
            let rows = (0..sw.betas.len())
                .map(|k| vec![fmt(sw.betas[k]), fmt(sinr[k]), fmt(conv[k]), fmt(adv[k]), fmt(ratio[k])])
                .collect();
            out.csv_rows(
                "beta_summary.csv",
                &[
                    "beta",
                    "median_sinr_db",
                    "median_convolved_sinr_db",
                    "median_gain_advantage_db",
                    "median_peak_ratio_linear",
                ],
                rows,
            )?;
            // Per-beta grid: spectrum, pattern and convolved pattern
            // for the first seed.
            for &b in &sw.betas {
                let t = train_and_convolve(&scene, b, &l.cfg.train)?;
                write_train_artifacts(out, &scene, &t, &format!("beta{}", beta_tag(b)))?;
            }
        }
        SweepKind::Inr => {
            let opts = SweepOptions {
                n_trials: sw.inr_trials,
                window: sw.window,
                detection: sw.detection,
            };
            let (trained, mut rows) = if stages.is_empty() {
                inr_sweep(&scene, &l.cfg.train, beta, &sw.inr_db, &opts)?
            } else {
                let need_training = stages.iter().any(|s| *s != StageArg::Random);
                let trained = if need_training {
                    Some(train_and_convolve(&scene, beta, &l.cfg.train)?)
                } else {
                    None
                };
                let list: Vec<SweepStage> = stages
                    .iter()
                    .map(|&s| SweepStage {
                        stage: s.into(),
                        ris: match s {
                            StageArg::Random => None,
                            StageArg::Trained => Some(trained.as_ref().unwrap().report.final_ris.clone()),
                            StageArg::Convolved => Some(trained.as_ref().unwrap().convolved.clone()),
                        },
                    })
                    .collect();
                let ratios: Vec<f64> = sw.inr_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
                let rows = error_sweep(&scene, &ratios, &list, &opts)?;
                match trained {
                    Some(t) => (t, rows),
                    None => {
                        out.write("inr_sweep.csv", |w| io::write_sweep_csv(&rows, w))?;
                        return Ok(seeds);
                    }
                }
            };
            rows.sort_by(|a, b| a.inr_db.total_cmp(&b.inr_db));
            out.write("inr_sweep.csv", |w| io::write_sweep_csv(&rows, w))?;
            out.write("ris_trained.csv", |w| io::write_ris_csv(&trained.report.final_ris, w))?;
            out.write("ris_convolved.csv", |w| io::write_ris_csv(&trained.convolved, w))?;
        }
        SweepKind::Spacing => {
            let (runs, summary) = spacing_sweep(
                &scene,
                &l.cfg.train,
                beta,
                &sw.spacing_deg,
                sw.n_seeds,
                sw.resolve_tolerance_deg,
            )?;
            let rows = runs
                .iter()
                .map(|r| {
                    vec![
                        fmt(r.separation_deg),
                        r.seed.to_string(),
                        fmt(r.theta_t_deg),
                        fmt(r.theta_i_deg),
                        r.resolved.to_string(),
                        fmt(r.theta_t_hat),
                        fmt(r.theta_i_hat),
                        fmt(r.gain_advantage_db),
                        fmt(r.convolved_gain_advantage_db),
                    ]
                })
                .collect();
            out.csv_rows(
                "spacing_runs.csv",
                &[
                    "separation_deg",
                    "seed",
                    "theta_t_deg",
                    "theta_i_deg",
                    "resolved",
                    "theta_t_hat_deg",
                    "theta_i_hat_deg",
                    "gain_advantage_db",
                    "convolved_gain_advantage_db",
                ],
                rows,
            )?;
            let rows = summary
                .iter()
                .map(|s| {
                    vec![
                        fmt(s.separation_deg),
                        fmt(s.resolved_fraction),
                        fmt(s.median_gain_advantage_db),
                        fmt(s.median_convolved_gain_advantage_db),
                    ]
                })
                .collect();
            out.csv_rows(
                "spacing_summary.csv",
                &[
                    "separation_deg",
                    "resolved_fraction",
                    "median_gain_advantage_db",
                    "median_convolved_gain_advantage_db",
                ],
                rows,
            )?;
        }
    }
    Ok(seeds)
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> CliResult<()> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_at(&path))
}

/// Runs one non-replay command and writes its manifest. `config_text`
/// replaces reading `--config` from disk (used by replay).
fn execute(cmd: &Command, config_text: Option<&str>) -> CliResult<Manifest> {
    let started = now_unix();
    let (config_path, out_dir) = match cmd {
        Command::Simulate { config, out, .. }
        | Command::Estimate { config, out, .. }
        | Command::Train { config, out, .. }
        | Command::Sweep { config, out, .. } => (config.clone(), out.clone()),
        Command::Replay { .. } => unreachable!("replay is not executed recursively"),
    };
    let loaded = match config_text {
        Some(text) => Loaded {
            cfg: ExperimentConfig::from_toml_str(text)?,
            text: text.to_string(),
        },
        None => load_config(&config_path)?,
    };
    let mut out = Outputs::new(&out_dir)?;
    let mut inputs = Vec::new();
    let result = match cmd {
        Command::Simulate { seed, .. } => cmd_simulate(&loaded, *seed, &mut out),
        Command::Estimate { grid, ris, .. } => {
            for p in [grid, ris] {
                inputs.push(FileEntry {
                    file: p.display().to_string(),
                    sha256: file_sha256(p)?,
                });
            }
            cmd_estimate(&loaded, grid, ris, &mut out)
        }
        Command::Train { beta, seed, .. } => cmd_train(&loaded, *beta, *seed, &mut out),
        Command::Sweep {
            sweep,
            beta,
            seed,
            stage,
            ..
        } => cmd_sweep(&loaded, *sweep, *beta, *seed, stage, &mut out),
        Command::Replay { .. } => unreachable!(),
    };
    let seeds = match &result {
        Ok(s) => s.clone(),
        Err(_) => Vec::new(),
    };
    let outputs = out
        .files
        .iter()
        .map(|f| {
            Ok(FileEntry {
                file: f.clone(),
                sha256: file_sha256(&out.dir.join(f))?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd.clone(),
        config_sha256: sha256_hex(loaded.text.as_bytes()),
        config_toml: loaded.text.clone(),
        inputs,
        seeds,
        started_unix_s: started,
        finished_unix_s: now_unix(),
        outputs,
    };
    // The manifest is written even when the command fails part-way.
    write_manifest(&out_dir, &manifest)?;
    result.map(|_| manifest)
}

fn replay(manifest_path: &Path, out_dir: &Path) -> CliResult<()> {
    let text = fs::read_to_string(manifest_path).map_err(io_at(manifest_path))?;
    let old: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    if sha256_hex(old.config_toml.as_bytes()) != old.config_sha256 {
        return Err(CliError::Mismatch("manifest config text does not match its hash".into()));
    }
    for input in &old.inputs {
        let now = file_sha256(Path::new(&input.file))?;
        if now != input.sha256 {
            return Err(CliError::Mismatch(format!("input {} changed since the run", input.file)));
        }
    }
    let mut cmd = old.command.clone();
    match &mut cmd {
        Command::Simulate { out, .. }
        | Command::Estimate { out, .. }
        | Command::Train { out, .. }
        | Command::Sweep { out, .. } => *out = out_dir.to_path_buf(),
        Command::Replay { .. } => return Err(CliError::Mismatch("cannot replay a replay".into())),
    }
    let new = execute(&cmd, Some(&old.config_toml))?;
    let mut bad = Vec::new();
    for (a, b) in old.outputs.iter().zip(&new.outputs) {
        if a != b {
            bad.push(a.file.clone());
        }
    }
    if old.outputs.len() != new.outputs.len() {
        bad.push(format!("{} files vs {}", old.outputs.len(), new.outputs.len()));
    }
    if bad.is_empty() {
        println!("replay matches: {} files identical", new.outputs.len());
        Ok(())
    } else {
        Err(CliError::Mismatch(format!("replay differs: {}", bad.join(", "))))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    match &cli.command {
        Command::Replay { manifest, out } => replay(manifest, out),
        cmd => execute(cmd, None).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
