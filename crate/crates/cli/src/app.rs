//! Argument parsing and subcommand dispatch.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use uavbeam::kalman::{KalmanConfig, KalmanMode};
use uavbeam::lrnet::{load_model, save_model, train, LossHistory, LrnetModel, TrainConfig};
use uavbeam::numerics::derive_seed;
use uavbeam::scenario::ScenarioConfig;
use uavbeam::{Error, Result};

use crate::checks::{gradcheck_suite, TOLERANCE};
use crate::dataset::DatasetFile;
use crate::experiment::{run_failover_episode, Episode, EpisodeMeta, EpisodeRecord};
use crate::plot::render_plot;
use crate::report::{format_table, rate_csv, summarize, summary_csv, trajectory_csv, write_file};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

// Independent seed streams below the root `--seed`.
const STREAM_TRAIN_DATA: u64 = 1;
const STREAM_MODEL_INIT: u64 = 2;
const STREAM_TRAIN_ORDER: u64 = 3;
const STREAM_EVAL: u64 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "uavbeam",
    version,
    about = "Location-aware predictive beamforming experiments"
)]
pub struct Cli {
    /// Root seed; every random draw of the run derives from it
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// JSON scenario configuration, optionally with "train" and "kalman" blocks
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,

    /// Long-range preset: the UAV starts at (70, 70) m
    #[arg(long, global = true)]
    pub far: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate seeded trajectories and write them to a JSON file
    Generate {
        /// Output file
        #[arg(long)]
        out: PathBuf,
        /// Number of trajectories [default: enough for the configured training-set size]
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Train a model and write it with its loss history
    Train {
        /// Trajectory file from `generate` [default: generate one from --seed]
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Model output file
        #[arg(long)]
        out: PathBuf,
        /// Loss-history CSV (epoch,train_loss,val_loss)
        #[arg(long)]
        history: Option<PathBuf>,
        /// Override the configured number of epochs
        #[arg(long)]
        epochs: Option<usize>,
        /// Override the configured training-set size (windows)
        #[arg(long)]
        examples: Option<usize>,
    },
    /// Compare BPTT gradients with central finite differences
    Gradcheck {
        /// Random small models (L=3, hidden 4/5)
        #[arg(long, default_value_t = 10)]
        small: usize,
        /// Random windows on the full-size model (L=20, hidden 50/100)
        #[arg(long, default_value_t = 3)]
        full: usize,
    },
    /// Run one episode and write its trajectory and rate CSVs
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Episode index under the evaluation seed stream
        #[arg(long, default_value_t = 0)]
        episode: u64,
    },
    /// Run one episode with a telemetry blackout
    Failover {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0)]
        episode: u64,
        /// First slot without telemetry
        #[arg(long, default_value_t = 100)]
        blackout_start: usize,
        /// Number of consecutive slots without telemetry
        #[arg(long, default_value_t = 5)]
        blackout_len: usize,
    },
    /// Run every scheme over several episodes and print summary metrics
    Compare {
        /// Trained model file [default: train one from the configuration]
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Directory for per-episode and summary CSVs
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Run one continuous Kalman filter instead of re-initializing each slot
        #[arg(long)]
        kalman_continuous: bool,
    },
    /// Render a trajectory or rate CSV as an SVG line chart
    Plot { csv: PathBuf, svg: PathBuf },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Trained model file
    #[arg(long)]
    pub model: PathBuf,
    /// Output directory for CSVs
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Run one continuous Kalman filter instead of re-initializing each slot
    #[arg(long)]
    pub kalman_continuous: bool,
}

/// Everything read from `--config` and the preset flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
    pub kalman: KalmanConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, far: bool) -> Result<Self> {
        let mut cfg = match path {
            None => RunConfig {
                scenario: ScenarioConfig::default(),
                train: TrainConfig::default(),
                kalman: KalmanConfig::default(),
            },
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_json(&text)?
            }
        };
        if far {
            cfg.scenario.uav_start = ScenarioConfig::far().uav_start;
        }
        cfg.scenario.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::Schema("configuration must be a JSON object".into()))?;
        let train = obj.remove("train");
        let kalman = obj.remove("kalman");
        let scenario = ScenarioConfig::from_value(value)?;
        let train: TrainConfig = match train {
            None => TrainConfig::default(),
            Some(v) => {
                if v.get("seed").is_some() {
                    return Err(Error::Schema("train.seed: training seeds derive from --seed".into()));
                }
                serde_json::from_value(v).map_err(|e| Error::Schema(format!("train: {e}")))?
            }
        };
        let kalman: KalmanConfig = match kalman {
            None => KalmanConfig::default(),
            Some(v) => serde_json::from_value(v).map_err(|e| Error::Schema(format!("kalman: {e}")))?,
        };
        Ok(RunConfig {
            scenario,
            train,
            kalman,
        })
    }
}

/// Seeds of the evaluation episodes under `root`.
pub fn evaluation_seeds(root: u64, episodes: usize) -> Vec<u64> {
    let eval = derive_seed(root, STREAM_EVAL);
    (0..episodes as u64).map(|e| derive_seed(eval, e)).collect()
}

/// Seed of the training trajectories under `root`.
pub fn training_data_seed(root: u64) -> u64 {
    derive_seed(root, STREAM_TRAIN_DATA)
}

/// Trains the reference model on `data` with seeds derived from `root`.
pub fn train_model(data: &DatasetFile, cfg: &TrainConfig, root: u64) -> Result<(LrnetModel, LossHistory)> {
    let examples = data.examples()?;
    let init = LrnetModel::reference(data.scenario.window_l, derive_seed(root, STREAM_MODEL_INIT));
    let cfg = TrainConfig {
        seed: derive_seed(root, STREAM_TRAIN_ORDER),
        ..cfg.clone()
    };
    train(&init, &examples, &cfg)
}

pub fn history_csv(history: &LossHistory) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in &history.epochs {
        out.push_str(&format!("{},{:e},{:e}\n", e.epoch, e.train_loss, e.val_loss));
    }
    out
}

/// Evaluates `model` over `episodes` fresh episodes; refuses seeds that
/// collide with the training trajectories in `training_seeds`.
pub fn compare_episodes(
    model: &LrnetModel,
    scenario: &ScenarioConfig,
    kalman: KalmanConfig,
    root: u64,
    episodes: usize,
    training_seeds: &BTreeSet<u64>,
) -> Result<Vec<Episode>> {
    if episodes == 0 {
        return Err(Error::Config("at least one episode is required".into()));
    }
    evaluation_seeds(root, episodes)
        .into_iter()
        .enumerate()
        .map(|(index, seed)| {
            if training_seeds.contains(&seed) {
                return Err(Error::Config(format!("evaluation seed {seed} was used for training")));
            }
            let records = run_failover_episode(model, scenario, seed, &BTreeSet::new(), kalman)?;
            Ok(Episode {
                meta: EpisodeMeta {
                    index,
                    seed,
                    config_hash: scenario.with_seed(seed).fingerprint(),
                },
                records,
            })
        })
        .collect()
}

fn write_episode_csvs(dir: &Path, stem: &str, records: &[EpisodeRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(dir.join(format!("{stem}trajectory.csv")), &trajectory_csv(records)?)?;
    write_file(dir.join(format!("{stem}rate.csv")), &rate_csv(records)?)
}

fn kalman_config(base: KalmanConfig, continuous: bool) -> KalmanConfig {
    KalmanConfig {
        mode: if continuous { KalmanMode::Continuous } else { base.mode },
        ..base
    }
}

fn load_matching_model(path: &Path, scenario: &ScenarioConfig) -> Result<LrnetModel> {
    let model = load_model(path)?;
    if model.window_l != scenario.window_l {
        return Err(Error::Config(format!(
            "model window {} does not match window_l {}",
            model.window_l, scenario.window_l
        )));
    }
    Ok(model)
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } | Error::Numerical(_) | Error::DegenerateGeometry(_) => EXIT_NUMERICAL,
        Error::Io { .. } => EXIT_USAGE,
        _ => EXIT_CONFIG,
    }
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cfg = RunConfig::load(cli.config.as_deref(), cli.far)?;
    let root = cli.seed;
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match cli.command {
        Command::Generate {
            out: path,
            trajectories,
        } => {
            let n = trajectories.unwrap_or_else(|| cfg.train.n_trajectories(&cfg.scenario));
            let data = DatasetFile::generate(&cfg.scenario, n, training_data_seed(root))?;
            data.save(&path)?;
            writeln!(out, "wrote {n} trajectories to {}", path.display()).map_err(io)?;
        }
        Command::Train {
            dataset,
            out: path,
            history,
            epochs,
            examples,
        } => {
            let mut train_cfg = cfg.train.clone();
            if let Some(e) = epochs {
                train_cfg.epochs = e;
            }
            if let Some(n) = examples {
                train_cfg.n_examples = n;
            }
            train_cfg.validate()?;
            let data = match dataset {
                Some(p) => DatasetFile::load(p)?,
                None => DatasetFile::generate(
                    &cfg.scenario,
                    train_cfg.n_trajectories(&cfg.scenario),
                    training_data_seed(root),
                )?,
            };
            let (model, hist) = train_model(&data, &train_cfg, root)?;
            save_model(&model, &path)?;
            if let Some(h) = history {
                write_file(h, &history_csv(&hist))?;
            }
            let best = hist.best().expect("history has the initial entry");
            writeln!(
                out,
                "best epoch {} of {}: train loss {:.6e}, validation loss {:.6e}",
                best.epoch, train_cfg.epochs, best.train_loss, best.val_loss
            )
            .map_err(io)?;
        }
        Command::Gradcheck { small, full } => {
            let suite = gradcheck_suite(root, small, full, |c| {
                let _ = writeln!(
                    err,
                    "{}: {:.3e} ({} parameters)",
                    c.label, c.report.max_relative_error, c.report.parameters
                );
            })?;
            let worst = suite.max_relative_error();
            writeln!(out, "max relative error {worst:.3e} over {} cases", suite.cases.len()).map_err(io)?;
            if !suite.passed() {
                writeln!(err, "gradient check failed: {worst:.3e} >= {TOLERANCE:e}").map_err(io)?;
                return Ok(EXIT_NUMERICAL);
            }
        }
        Command::Simulate { run, episode } => {
            let model = load_matching_model(&run.model, &cfg.scenario)?;
            let seed = evaluation_seeds(root, episode as usize + 1)[episode as usize];
            let records = run_failover_episode(
                &model,
                &cfg.scenario,
                seed,
                &BTreeSet::new(),
                kalman_config(cfg.kalman, run.kalman_continuous),
            )?;
            write_episode_csvs(&run.out_dir, "", &records)?;
            write!(out, "{}", format_table(&summarize(&records)?)).map_err(io)?;
        }
        Command::Failover {
            run,
            episode,
            blackout_start,
            blackout_len,
        } => {
            let model = load_matching_model(&run.model, &cfg.scenario)?;
            let seed = evaluation_seeds(root, episode as usize + 1)[episode as usize];
            let blackout: BTreeSet<usize> = (blackout_start..blackout_start + blackout_len).collect();
            let records = run_failover_episode(
                &model,
                &cfg.scenario,
                seed,
                &blackout,
                kalman_config(cfg.kalman, run.kalman_continuous),
            )?;
            write_episode_csvs(&run.out_dir, "", &records)?;
            let during: Vec<EpisodeRecord> = records.iter().filter(|r| blackout.contains(&r.k)).copied().collect();
            write!(out, "{}", format_table(&summarize(&records)?)).map_err(io)?;
            writeln!(
                out,
                "# blackout slots {blackout_start}..{}",
                blackout_start + blackout_len
            )
            .map_err(io)?;
            write!(out, "{}", format_table(&summarize(&during)?)).map_err(io)?;
        }
        Command::Compare {
            model,
            episodes,
            out_dir,
            kalman_continuous,
        } => {
            let train_data = DatasetFile::generate(
                &cfg.scenario,
                cfg.train.n_trajectories(&cfg.scenario),
                training_data_seed(root),
            )?;
            let model = match model {
                Some(p) => load_matching_model(&p, &cfg.scenario)?,
                None => {
                    writeln!(err, "no --model given; training one from the configuration").map_err(io)?;
                    train_model(&train_data, &cfg.train, root)?.0
                }
            };
            let training_seeds: BTreeSet<u64> = train_data.trajectory_seeds().into_iter().collect();
            let runs = compare_episodes(
                &model,
                &cfg.scenario,
                kalman_config(cfg.kalman, kalman_continuous),
                root,
                episodes,
                &training_seeds,
            )?;
            for ep in &runs {
                write_episode_csvs(&out_dir, &format!("episode_{:02}_", ep.meta.index), &ep.records)?;
            }
            let all: Vec<EpisodeRecord> = runs.iter().flat_map(|e| e.records.iter().copied()).collect();
            let mut metrics = summarize(&all)?;
            metrics.episodes = runs.iter().map(|e| e.meta.clone()).collect();
            write_file(out_dir.join("summary.csv"), &summary_csv(&metrics)?)?;
            write!(out, "{}", format_table(&metrics)).map_err(io)?;
        }
        Command::Plot { csv, svg } => {
            render_plot(&csv, &svg)?;
            writeln!(out, "wrote {}", svg.display()).map_err(io)?;
        }
    }
    Ok(EXIT_OK)
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match execute(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
