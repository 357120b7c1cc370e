use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::localizer::{
    evaluate, nearest_instance_accuracy, train, LocalizationStats, LocalizerConfig, LocalizerModel, TrainConfig,
    TrainReport, TrainSample, Vocab,
};

/// Model and optimisation settings read by `train-localizer --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub model: LocalizerConfig,
    pub train: TrainConfig,
    /// Fraction of scenes held out for evaluation.
    pub holdout: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            model: LocalizerConfig::default(),
            train: TrainConfig::default(),
            holdout: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LocalizerModel<f64>,
    pub report: TrainReport,
    pub train_samples: usize,
    pub heldout: LocalizationStats,
    /// Nearest-instance baseline on the held-out samples.
    pub baseline: LocalizationStats,
}

/// Splits by scene so no scene contributes to both sides. The last
/// `fraction` of scene seeds, in sorted order, is held out.
pub fn split_by_scene(samples: &[TrainSample], fraction: f64) -> (Vec<TrainSample>, Vec<TrainSample>) {
    let seeds: Vec<u64> = samples
        .iter()
        .map(|s| s.scene_seed)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let held = ((seeds.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let cut: BTreeSet<u64> = seeds[seeds.len() - held..].iter().copied().collect();
    samples.iter().cloned().partition(|s| !cut.contains(&s.scene_seed))
}

/// Builds the vocabulary from the training side, trains, and scores the
/// held-out side.
pub fn train_localizer(
    samples: &[TrainSample],
    settings: &TrainSettings,
    on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    let (fit, held) = split_by_scene(samples, settings.holdout);
    if fit.is_empty() {
        return Err(HarnessError::InvalidConfig("no training samples".into()));
    }
    let vocab = Vocab::build(fit.iter().map(|s| s.instruction.as_str()));
    let mut model = LocalizerModel::new(settings.model.clone(), vocab);
    let err = |e: crate::localizer::LocalizerError| HarnessError::Format(e.to_string());
    let report = train(&mut model, &fit, &settings.train, on_epoch).map_err(err)?;
    let heldout = evaluate(&model, &held).map_err(err)?;
    Ok(TrainOutcome {
        model,
        report,
        train_samples: fit.len(),
        heldout,
        baseline: nearest_instance_accuracy(&held),
    })
}
