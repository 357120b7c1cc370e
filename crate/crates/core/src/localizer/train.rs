use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LocalizerError, LocalizerModel, ModelInput, Result};
use crate::mapper::SemanticMap;
use crate::scalar::Scalar;
use crate::tensor::{AdamW, AdamWConfig, Tensor};
use crate::world::{Category, Cell, SubgoalAction};

/// One expert interaction: the map at subgoal start and the cells of the
/// instance that was interacted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub map: SemanticMap,
    /// Encoder text: action and object words plus the instruction sentence.
    pub instruction: String,
    pub action: SubgoalAction,
    pub target: Category,
    /// Cells labelled one.
    pub gt_mask: Vec<Cell>,
    /// Agent cell at subgoal start.
    pub agent: Cell,
    #[serde(default)]
    pub scene_seed: u64,
    #[serde(default)]
    pub hard: bool,
}

impl TrainSample {
    pub fn validate(&self) -> Result<()> {
        if self.gt_mask.is_empty() {
            return Err(LocalizerError::InvalidSample("empty gt_mask".into()));
        }
        if let Some(c) = self.gt_mask.iter().find(|c| !self.map.in_bounds(**c)) {
            return Err(LocalizerError::InvalidSample(format!("gt cell {c} outside the map")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            seed: 0,
            optimizer: AdamWConfig {
                lr: 1e-2,
                decay_interval: 0,
                ..AdamWConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Minimizes mean pixel-wise BCE with AdamW. Batches are drawn from a
/// seeded shuffle, so identical inputs give identical weights. `on_epoch`
/// sees each finished epoch and its mean loss.
pub fn train<T: Scalar>(
    model: &mut LocalizerModel<T>,
    samples: &[TrainSample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(LocalizerError::EmptyDataset);
    }
    let inputs: Vec<(ModelInput<T>, Tensor<T>)> = samples
        .iter()
        .map(|s| {
            s.validate()?;
            let input = model.prepare(&s.map, &s.instruction)?;
            let target = super::mask_tensor(input.height, input.width, &s.gt_mask)?;
            Ok((input, target))
        })
        .collect::<Result<_>>()?;

    let params: Vec<Tensor<T>> = model.named_params().into_iter().map(|(_, t)| t).collect();
    let mut opt = AdamW::new(params, config.optimizer);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let batch = config.batch_size.max(1);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            opt.zero_grad();
            let inv = T::one() / T::from_usize(chunk.len()).expect("batch fits scalar");
            for &i in chunk {
                let (input, target) = &inputs[i];
                let loss = model.forward(input)?.probs.bce_loss(target)?;
                total += loss.item().as_f64();
                loss.scale(inv).backward()?;
            }
            opt.step();
            report.steps += 1;
        }
        let mean = total / inputs.len() as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(report)
}

/// `epoch,loss` CSV with a header row.
pub fn write_loss_csv(mut w: impl Write, report: &TrainReport) -> std::io::Result<()> {
    writeln!(w, "epoch,loss")?;
    for (i, l) in report.epoch_losses.iter().enumerate() {
        writeln!(w, "{},{l:.8}", i + 1)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationStats {
    pub samples: usize,
    /// Samples whose prediction lies within Chebyshev distance 1 of a gt cell.
    pub hits: usize,
}

impl LocalizationStats {
    pub fn accuracy(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.hits as f64 / self.samples as f64
        }
    }
}

fn near_gt(c: Cell, gt: &[Cell]) -> bool {
    gt.iter().any(|g| g.chebyshev(c) <= 1)
}

/// Top-1 heatmap argmax accuracy.
pub fn evaluate<T: Scalar>(model: &LocalizerModel<T>, samples: &[TrainSample]) -> Result<LocalizationStats> {
    let frozen = model.freeze();
    let mut hits = 0;
    for s in samples {
        let h = frozen.heatmap(&s.map, &s.instruction)?;
        if near_gt(h.argmax(), &s.gt_mask) {
            hits += 1;
        }
    }
    Ok(LocalizationStats {
        samples: samples.len(),
        hits,
    })
}

/// Reference accuracy of picking the mapped instance of the target category
/// nearest the agent; a miss when the category is not on the map.
pub fn nearest_instance_accuracy(samples: &[TrainSample]) -> LocalizationStats {
    let hits = samples
        .iter()
        .filter(|s| {
            s.map
                .cells_of(s.target)
                .into_iter()
                .min_by_key(|&c| (c.manhattan(s.agent), c))
                .is_some_and(|c| near_gt(c, &s.gt_mask))
        })
        .count();
    LocalizationStats {
        samples: samples.len(),
        hits,
    }
}
