use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{compute_metrics, Metrics};
use super::{HarnessError, Result};
use crate::agent::{run_episode, AgentConfig, AgentContext, EpisodeResult};
use crate::completer::{Backend, HttpBackend, HttpConfig, ScriptedBackend, Templates};
use crate::localizer::LocalizerModel;
use crate::tensor::load_checkpoint;
use crate::world::{generate_scene_with, GridScene, LayoutFamily, RoomType, SceneParams, TaskSpec};

/// Half-open seed range `[start, start + count)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub start: u64,
    pub count: u64,
}

impl SeedRange {
    fn end(&self) -> u64 {
        self.start.saturating_add(self.count)
    }

    fn overlaps(&self, other: &SeedRange) -> bool {
        self.count > 0 && other.count > 0 && self.start < other.end() && other.start < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    ValidSeen,
    ValidUnseen,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s.replace('-', "_").as_str() {
            "train" => Some(Split::Train),
            "valid_seen" => Some(Split::ValidSeen),
            "valid_unseen" => Some(Split::ValidUnseen),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: SeedRange,
    pub valid_seen: SeedRange,
    pub valid_unseen: SeedRange,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: SeedRange { start: 0, count: 400 },
            valid_seen: SeedRange {
                start: 10_000,
                count: 200,
            },
            valid_unseen: SeedRange {
                start: 20_000,
                count: 200,
            },
        }
    }
}

impl SplitSpec {
    pub fn range(&self, split: Split) -> SeedRange {
        match split {
            Split::Train => self.train,
            Split::ValidSeen => self.valid_seen,
            Split::ValidUnseen => self.valid_unseen,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("train", self.train),
            ("valid_seen", self.valid_seen),
            ("valid_unseen", self.valid_unseen),
        ];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i].1.overlaps(&all[j].1) {
                    return Err(HarnessError::InvalidConfig(format!(
                        "{} and {} seed ranges overlap",
                        all[i].0, all[j].0
                    )));
                }
            }
        }
        Ok(())
    }
}

pub const DEFAULT_HARD_FRACTION: f64 = 0.086;

/// Parameters of scene `seed` in `split`. Room types cycle with the seed;
/// the hard draw is a per-seed coin with probability `hard_fraction`.
pub fn scene_params(split: Split, seed: u64, hard_fraction: f64) -> SceneParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4841_5244);
    SceneParams {
        seed,
        room_type: RoomType::ALL[(seed % RoomType::ALL.len() as u64) as usize],
        hard: rng.gen_bool(hard_fraction.clamp(0.0, 1.0)),
        layout: match split {
            Split::ValidUnseen => LayoutFamily::Unseen,
            _ => LayoutFamily::Seen,
        },
    }
}

/// The first `limit` scenes of a split (all of them when `limit` is None).
pub fn split_scenes(
    splits: &SplitSpec,
    split: Split,
    hard_fraction: f64,
    hard_only: bool,
    limit: Option<usize>,
) -> Vec<(GridScene, TaskSpec)> {
    let r = splits.range(split);
    let n = limit.map_or(r.count, |l| (l as u64).min(r.count));
    (r.start..r.start + n)
        .into_par_iter()
        .map(|seed| {
            let mut p = scene_params(split, seed, hard_fraction);
            p.hard |= hard_only;
            generate_scene_with(&p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSpec {
    Oracle,
    Scripted { path: PathBuf },
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub splits: SplitSpec,
    pub split: Split,
    pub hard_fraction: f64,
    /// Force every scene onto the hard split.
    pub hard_only: bool,
    pub episodes: usize,
    pub agent: AgentConfig,
    pub backend: BackendSpec,
    /// Required when the agent uses the localizer.
    pub localizer_checkpoint: Option<PathBuf>,
    /// Worker threads; 0 picks the rayon default, 1 runs serially.
    pub threads: usize,
    pub output: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            splits: SplitSpec::default(),
            split: Split::ValidSeen,
            hard_fraction: DEFAULT_HARD_FRACTION,
            hard_only: false,
            episodes: 50,
            agent: AgentConfig::default(),
            backend: BackendSpec::Oracle,
            localizer_checkpoint: None,
            threads: 0,
            output: PathBuf::from("results.json"),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        self.splits.validate()?;
        if self.splits.range(self.split).count == 0 || self.episodes == 0 {
            return Err(HarnessError::InvalidConfig("empty split".into()));
        }
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return Err(HarnessError::InvalidConfig(format!(
                "hard_fraction {} outside [0, 1]",
                self.hard_fraction
            )));
        }
        let needs_model = self.agent.use_localizer && !self.agent.ground_truth_positions;
        if needs_model && self.localizer_checkpoint.is_none() {
            return Err(HarnessError::InvalidConfig(
                "use_localizer needs localizer_checkpoint".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResults {
    pub config_hash: String,
    pub config: EvalConfig,
    pub metrics: Metrics,
    pub episodes: Vec<EpisodeResult>,
}

impl EvalResults {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Format(e.to_string()))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_backend(kind: &BackendSpec, base: &Path) -> Result<Backend> {
    Ok(match kind {
        BackendSpec::Oracle => Backend::Oracle,
        BackendSpec::Scripted { path } => Backend::Scripted(
            ScriptedBackend::from_file(&resolve(base, path)).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?,
        ),
        BackendSpec::Http(c) => Backend::Http(HttpBackend::new(c.clone())),
    })
}

fn load_localizer(cfg: &EvalConfig, base: &Path) -> Result<Option<LocalizerModel<f64>>> {
    let Some(path) = cfg.localizer_checkpoint.as_ref() else {
        return Ok(None);
    };
    let ck = load_checkpoint(&resolve(base, path)).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    let model = LocalizerModel::from_checkpoint(&ck).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    if model.config.use_graph != cfg.agent.use_graph {
        return Err(HarnessError::InvalidConfig(format!(
            "checkpoint use_graph={} but agent use_graph={}",
            model.config.use_graph, cfg.agent.use_graph
        )));
    }
    Ok(Some(model.freeze()))
}

/// Runs `scenes` with shared resources. Results come back in scene order
/// whatever the thread count.
pub fn run_episodes(
    scenes: &[(GridScene, TaskSpec)],
    agent: &AgentConfig,
    ctx: AgentContext<'_>,
    threads: usize,
) -> Result<Vec<EpisodeResult>> {
    let run = |(s, t): &(GridScene, TaskSpec)| run_episode(s, t, agent, ctx);
    if threads == 1 {
        return Ok(scenes.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
    Ok(pool.install(|| scenes.par_iter().map(run).collect()))
}

/// Runs the configured split. Relative paths in the config resolve against
/// `base`. Writes nothing; see [`write_results`].
pub fn run_eval(cfg: &EvalConfig, base: &Path) -> Result<EvalResults> {
    cfg.validate()?;
    let backend = load_backend(&cfg.backend, base)?;
    let localizer = load_localizer(cfg, base)?;
    let templates = Templates::default();
    let scenes = split_scenes(
        &cfg.splits,
        cfg.split,
        cfg.hard_fraction,
        cfg.hard_only,
        Some(cfg.episodes),
    );
    let ctx = AgentContext {
        backend: cfg.agent.use_completer.then_some(&backend),
        localizer: localizer.as_ref(),
        templates: &templates,
    };
    // Scripted replies are consumed in call order.
    let threads = if matches!(backend, Backend::Scripted(_)) {
        1
    } else {
        cfg.threads
    };
    let episodes = run_episodes(&scenes, &cfg.agent, ctx, threads)?;
    Ok(EvalResults {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        metrics: compute_metrics(&episodes)?,
        episodes,
    })
}

pub fn write_results(path: &Path, results: &EvalResults) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, results.to_json())?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<EvalResults> {
    EvalResults::from_json(&std::fs::read_to_string(path)?)
}
