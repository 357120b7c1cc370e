#![allow(dead_code)]

use eif_core::localizer::{AttentionRoles, LocalizerConfig, LocalizerModel, Vocab};
use eif_core::mapper::SemanticMap;
use eif_core::tensor::Tensor;
use eif_core::world::{Category, Cell};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative error with an absolute floor so near-zero gradients compare on
/// an absolute scale.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

#[derive(Debug)]
pub struct GradReport {
    pub max_rel: f64,
    pub worst: String,
    pub checked: usize,
}

/// Central finite differences of `loss` against its analytic gradient, for
/// every element of every tensor in `params`.
pub fn grad_check(params: &[(String, Tensor<f64>)], loss: impl Fn() -> Tensor<f64>, eps: f64) -> GradReport {
    for (_, p) in params {
        p.zero_grad();
    }
    loss().backward().unwrap();
    let mut report = GradReport {
        max_rel: 0.0,
        worst: String::new(),
        checked: 0,
    };
    for (name, p) in params {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
        for i in 0..p.numel() {
            let orig = p.values()[i];
            p.update_values(|v| v[i] = orig + eps);
            let up = loss().item();
            p.update_values(|v| v[i] = orig - eps);
            let down = loss().item();
            p.update_values(|v| v[i] = orig);
            let numeric = (up - down) / (2.0 * eps);
            let r = rel_err(analytic[i], numeric);
            report.checked += 1;
            if r > report.max_rel {
                report.max_rel = r;
                report.worst = format!("{name}[{i}] analytic {} numeric {numeric}", analytic[i]);
            }
        }
    }
    report
}

pub const WORDS: &str = "open the fridge cabinet take mug put apple in on counter top";

pub fn small_config(seed: u64, use_graph: bool, attention: AttentionRoles) -> LocalizerConfig {
    LocalizerConfig {
        d: 4,
        conv_filters: 3,
        graph_layers: 1,
        use_graph,
        attention,
        token_level: attention == AttentionRoles::Eq2,
        height: 5,
        width: 6,
        init_seed: seed,
    }
}

pub fn small_model(seed: u64, use_graph: bool, attention: AttentionRoles) -> LocalizerModel<f64> {
    LocalizerModel::new(small_config(seed, use_graph, attention), Vocab::build([WORDS]))
}

/// Random map: most cells explored, a few objects of a handful of categories.
pub fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> SemanticMap {
    let mut m = SemanticMap::new(h, w);
    let cats = [
        Category::Fridge,
        Category::Cabinet,
        Category::Mug,
        Category::CounterTop,
        Category::Apple,
    ];
    for i in 0..h * w {
        if rng.gen_bool(0.8) {
            m.channels[SemanticMap::explored_channel()][i] = 1;
        }
        if rng.gen_bool(0.15) {
            m.channels[SemanticMap::obstacle_channel()][i] = 1;
        }
        if rng.gen_bool(0.3) {
            let c = cats[rng.gen_range(0..cats.len())];
            m.channels[c.index()][i] = 1;
        }
    }
    m
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cell(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Cell {
    Cell::new(rng.gen_range(0..h), rng.gen_range(0..w))
}
