use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use eif_core::completer::{
    build_prompt, complete, parse_response, Backend, GroundTruth, HttpBackend, HttpConfig, ScriptedBackend,
    TaskProgress, Templates,
};
use eif_core::harness::{
    collect_dataset, look_around, read_dataset, read_results, render_report, run_eval, split_scenes, train_localizer,
    write_dataset, write_results, EvalConfig, Split, SplitSpec, TrainSettings, DEFAULT_HARD_FRACTION,
};
use eif_core::localizer::write_loss_csv;
use eif_core::mapper::SemanticMap;
use eif_core::tensor::save_checkpoint;
use eif_core::world::{possible_landmarks, read_scenes, write_scenes, Subgoal, WorldState};

#[derive(Debug, Parser)]
#[command(
    name = "eif",
    version,
    about = "Grid-world instruction following: scenes, training, evaluation"
)]
struct Cli {
    /// Seed override; meaning depends on the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file (read relative to the working directory).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; every other relative path resolves against it.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    ValidSeen,
    ValidUnseen,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::ValidSeen => Split::ValidSeen,
            SplitArg::ValidUnseen => Split::ValidUnseen,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Oracle,
    Scripted,
    Http,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate scenes for a split as JSONL. --seed moves the split start.
    GenerateScenes {
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Number of scenes; defaults to the split size.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_HARD_FRACTION)]
        hard_fraction: f64,
        #[arg(long)]
        hard_only: bool,
        #[arg(long, default_value = "scenes.jsonl")]
        file: PathBuf,
    },
    /// Replay the expert on every scene and record localizer samples.
    CollectDataset {
        #[arg(long, default_value = "scenes.jsonl")]
        scenes: PathBuf,
        #[arg(long, default_value = "dataset.jsonl")]
        file: PathBuf,
    },
    /// Train the object localizer. --seed sets the shuffle and init seeds.
    TrainLocalizer {
        #[arg(long, default_value = "dataset.jsonl")]
        dataset: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Drop the object correlation graph.
        #[arg(long)]
        no_graph: bool,
        #[arg(long, default_value = "localizer.json")]
        file: PathBuf,
    },
    /// Run an evaluation described by --config and write the results JSON.
    /// --seed moves the start of the evaluated split.
    RunEval {
        /// Overrides the config's output path.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Render markdown tables from one or more results files.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        results: Vec<PathBuf>,
        /// Row labels, one per results file; defaults to file stems.
        #[arg(long, num_args = 1..)]
        labels: Vec<String>,
        #[arg(long, default_value = "report.md")]
        file: PathBuf,
    },
    /// Render one prompt, query a backend and print the parsed subgoals.
    Complete {
        #[arg(long)]
        scene: PathBuf,
        /// Which scene of the file to use.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Current subgoal, e.g. "Pickup Mug".
        #[arg(long)]
        subgoal: String,
        #[arg(long, value_enum, default_value = "oracle")]
        backend: BackendArg,
        /// Scripted reply fixture (JSONL).
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Failure message of the previous attempt.
        #[arg(long)]
        last_message: Option<String>,
        /// Also print the rendered prompt.
        #[arg(long)]
        show_prompt: bool,
    },
}

fn resolve(out: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        out.join(p)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn load_scenes(path: &Path) -> Result<Vec<(eif_core::world::GridScene, eif_core::world::TaskSpec)>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_scenes(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.out.as_path();
    match cli.command {
        Command::GenerateScenes {
            split,
            count,
            hard_fraction,
            hard_only,
            file,
        } => {
            let mut splits: SplitSpec = match cli.config.as_deref() {
                Some(p) => read_config::<EvalConfig>(Some(p))?.splits,
                None => SplitSpec::default(),
            };
            let split = Split::from(split);
            let mut range = splits.range(split);
            if let Some(s) = cli.seed {
                range.start = s;
            }
            if let Some(c) = count {
                range.count = c as u64;
            }
            match split {
                Split::Train => splits.train = range,
                Split::ValidSeen => splits.valid_seen = range,
                Split::ValidUnseen => splits.valid_unseen = range,
            }
            let scenes = split_scenes(&splits, split, hard_fraction, hard_only, None);
            let path = resolve(out, &file);
            let mut w = create(&path)?;
            write_scenes(&mut w, &scenes)?;
            w.flush()?;
            println!("wrote {} scenes to {}", scenes.len(), path.display());
        }
        Command::CollectDataset { scenes, file } => {
            let scenes = load_scenes(&resolve(out, &scenes))?;
            let samples = collect_dataset(&scenes)?;
            let path = resolve(out, &file);
            let mut w = create(&path)?;
            write_dataset(&mut w, &samples)?;
            w.flush()?;
            println!("wrote {} samples to {}", samples.len(), path.display());
        }
        Command::TrainLocalizer {
            dataset,
            epochs,
            no_graph,
            file,
        } => {
            let mut settings: TrainSettings = read_config(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                settings.train.seed = s;
                settings.model.init_seed = s;
            }
            if let Some(e) = epochs {
                settings.train.epochs = e;
            }
            if no_graph {
                settings.model.use_graph = false;
            }
            let path = resolve(out, &dataset);
            let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let samples = read_dataset(BufReader::new(f))?;
            let outcome = train_localizer(&samples, &settings, |epoch, loss| {
                eprintln!("epoch {:>3} loss {loss:.6}", epoch + 1);
            })?;
            let ckpt = resolve(out, &file);
            if let Some(dir) = ckpt.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            save_checkpoint(&ckpt, &outcome.model.to_checkpoint())?;
            let mut w = create(&ckpt.with_extension("loss.csv"))?;
            write_loss_csv(&mut w, &outcome.report)?;
            w.flush()?;
            let summary = serde_json::json!({
                "checkpoint": ckpt,
                "train_samples": outcome.train_samples,
                "heldout_samples": outcome.heldout.samples,
                "heldout_accuracy": outcome.heldout.accuracy(),
                "nearest_instance_accuracy": outcome.baseline.accuracy(),
                "final_loss": outcome.report.epoch_losses.last(),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::RunEval { file } => {
            let Some(cfg_path) = cli.config.as_deref() else {
                bail!("run-eval needs --config");
            };
            let mut cfg: EvalConfig = read_config(Some(cfg_path))?;
            if let Some(s) = cli.seed {
                match cfg.split {
                    Split::Train => cfg.splits.train.start = s,
                    Split::ValidSeen => cfg.splits.valid_seen.start = s,
                    Split::ValidUnseen => cfg.splits.valid_unseen.start = s,
                }
            }
            if let Some(f) = file {
                cfg.output = f;
            }
            let results = run_eval(&cfg, out)?;
            let path = resolve(out, &cfg.output);
            write_results(&path, &results)?;
            println!("{}", serde_json::to_string_pretty(&results.metrics)?);
        }
        Command::Report { results, labels, file } => {
            if !labels.is_empty() && labels.len() != results.len() {
                bail!("{} labels for {} results files", labels.len(), results.len());
            }
            let mut runs = Vec::new();
            for (i, p) in results.iter().enumerate() {
                let path = resolve(out, p);
                let r = read_results(&path).with_context(|| format!("reading {}", path.display()))?;
                let label = labels.get(i).cloned().unwrap_or_else(|| {
                    p.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default()
                });
                runs.push((label, r));
            }
            let md = render_report(&runs);
            let path = resolve(out, &file);
            let mut w = create(&path)?;
            w.write_all(md.as_bytes())?;
            w.flush()?;
            print!("{md}");
        }
        Command::Complete {
            scene,
            index,
            subgoal,
            backend,
            fixture,
            last_message,
            show_prompt,
        } => {
            let current = Subgoal::parse(&subgoal).with_context(|| format!("cannot parse subgoal {subgoal:?}"))?;
            let scenes = load_scenes(&resolve(out, &scene))?;
            let Some((scene, task)) = scenes.get(index) else {
                bail!("scene index {index} out of range ({} scenes)", scenes.len());
            };
            let backend = match backend {
                BackendArg::Oracle => Backend::Oracle,
                BackendArg::Scripted => {
                    let Some(f) = fixture else {
                        bail!("--backend scripted needs --fixture")
                    };
                    Backend::Scripted(ScriptedBackend::from_file(&resolve(out, &f))?)
                }
                BackendArg::Http => Backend::Http(HttpBackend::new(HttpConfig::from_env())),
            };
            let state = WorldState::new(scene.clone());
            let mut map = SemanticMap::new(scene.height, scene.width);
            look_around(&state, &mut map);
            let possible = possible_landmarks(scene.room_type);
            let progress = TaskProgress {
                completed: Vec::new(),
                current,
                remaining: Vec::new(),
            };
            let bundle = build_prompt(
                &Templates::default(),
                scene.room_type,
                task,
                &progress,
                &map.observed_landmarks(state.agent.cell),
                &possible,
                last_message.as_deref(),
            )?;
            if show_prompt {
                println!("{}\n\n{}\n", bundle.system_message, bundle.agent_message);
            }
            let truth = GroundTruth {
                scene,
                subgoal: current,
                exclude: &[],
            };
            let text = complete(&bundle, &backend, Some(truth))?;
            let parsed = parse_response(&text, &possible, &current)?;
            for (i, g) in parsed.subgoals.iter().enumerate() {
                println!("{}. {}", i + 1, g);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
