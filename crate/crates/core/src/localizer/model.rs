use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{AttentionRoles, Heatmap, LocalizerConfig, LocalizerError, Result, Vocab};
use crate::mapper::SemanticMap;
use crate::scalar::Scalar;
use crate::tensor::{Checkpoint, Tensor};
use crate::world::{Category, Cell};

/// Normalized coordinates plus four sine/cosine frequencies per axis.
pub const POS_FEATURES: usize = 18;
/// Explored and obstacle flags.
pub const FLAG_FEATURES: usize = 2;

#[derive(Debug, Clone)]
pub struct Params<T: Scalar> {
    /// Token embeddings, `V×d`.
    pub tok_emb: Tensor<T>,
    /// Per-category bias embeddings, `C×d`.
    pub cat_emb: Tensor<T>,
    /// 3×3 convolution kernels, `9×k`.
    pub conv: Tensor<T>,
    /// Pooled conv features to model space, `k×d`.
    pub w_map: Tensor<T>,
    /// Graph generation, `d×C`.
    pub w_e: Tensor<T>,
    /// Message passing, one `d×d` per graph layer.
    pub w_a: Vec<Tensor<T>>,
    pub w_pos: Tensor<T>,
    pub w_flag: Tensor<T>,
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    /// Per-cell linear head, `d×1`, and its bias.
    pub w_dec: Tensor<T>,
    pub b_dec: Tensor<T>,
}

impl<T: Scalar> Params<T> {
    fn named(&self) -> Vec<(String, Tensor<T>)> {
        let mut v = vec![
            ("tok_emb".to_string(), self.tok_emb.clone()),
            ("cat_emb".to_string(), self.cat_emb.clone()),
            ("conv".to_string(), self.conv.clone()),
            ("w_map".to_string(), self.w_map.clone()),
            ("w_e".to_string(), self.w_e.clone()),
        ];
        for (i, w) in self.w_a.iter().enumerate() {
            v.push((format!("w_a.{i}"), w.clone()));
        }
        for (n, t) in [
            ("w_pos", &self.w_pos),
            ("w_flag", &self.w_flag),
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_dec", &self.w_dec),
            ("b_dec", &self.b_dec),
        ] {
            v.push((n.to_string(), t.clone()));
        }
        v
    }

    fn map(&self, f: impl Fn(&Tensor<T>) -> Tensor<T>) -> Self {
        Self {
            tok_emb: f(&self.tok_emb),
            cat_emb: f(&self.cat_emb),
            conv: f(&self.conv),
            w_map: f(&self.w_map),
            w_e: f(&self.w_e),
            w_a: self.w_a.iter().map(&f).collect(),
            w_pos: f(&self.w_pos),
            w_flag: f(&self.w_flag),
            w_q: f(&self.w_q),
            w_k: f(&self.w_k),
            w_v: f(&self.w_v),
            w_dec: f(&self.w_dec),
            b_dec: f(&self.b_dec),
        }
    }
}

/// Map and instruction in the form the network consumes. Built once per
/// sample; everything here is constant.
#[derive(Debug, Clone)]
pub struct ModelInput<T: Scalar> {
    pub height: usize,
    pub width: usize,
    pub tokens: Vec<usize>,
    /// Non-empty 3×3 patches of the gated category channels, `R×9`.
    patches: Option<Tensor<T>>,
    patch_channel: Vec<usize>,
    /// (category, cell) pairs of gated map content.
    content_cat: Vec<usize>,
    content_cell: Vec<usize>,
    flags: Tensor<T>,
    pos: Tensor<T>,
}

impl<T: Scalar> ModelInput<T> {
    pub fn cells(&self) -> usize {
        self.height * self.width
    }
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T: Scalar> {
    /// Instruction features, `1×d` pooled or `T×d` per token.
    pub x_s: Tensor<T>,
    /// Initial per-category map features, `C×d`.
    pub x_prime: Tensor<T>,
    /// Correlation graph, `C×C`; absent when the graph is disabled.
    pub e: Option<Tensor<T>>,
    /// Graph-enhanced category features, `C×d`.
    pub x_t: Tensor<T>,
    pub cell_tokens: Tensor<T>,
    pub q: Tensor<T>,
    pub k: Tensor<T>,
    pub v: Tensor<T>,
    /// Attention weights; each row sums to one.
    pub weights: Tensor<T>,
    /// Attention output before fusion.
    pub attended: Tensor<T>,
    /// Fused per-cell features, `HW×d`.
    pub h: Tensor<T>,
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
}

/// `sigmoid(X' W_e)`.
pub fn correlation_graph<T: Scalar>(x_prime: &Tensor<T>, w_e: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(x_prime.matmul(w_e)?.sigmoid())
}

/// Residual message passing `X ← X + E X W_a`, once per layer.
pub fn graph_enhance<T: Scalar>(x_prime: &Tensor<T>, e: &Tensor<T>, w_a: &[Tensor<T>]) -> Result<Tensor<T>> {
    let mut x = x_prime.clone();
    for w in w_a {
        x = x.add(&e.matmul(&x)?.matmul(w)?)?;
    }
    Ok(x)
}

/// `softmax(Q Kᵀ / √d) V`; returns the weights and the output.
pub fn scaled_dot_attention<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, v: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (_, d) = q.rows_cols("attention")?;
    let scale = T::one() / T::from_usize(d.max(1)).expect("dim fits scalar").sqrt();
    let weights = q.matmul(&k.transpose()?)?.scale(scale).softmax_rows()?;
    let out = weights.matmul(v)?;
    Ok((weights, out))
}

/// Constant positional features for an `h×w` grid, `HW×POS_FEATURES`.
pub fn positional_features(h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(h * w * POS_FEATURES);
    let axis = |x: usize, n: usize, out: &mut Vec<f64>| {
        let t = x as f64 / n.max(1) as f64;
        for f in 1..=4 {
            let a = std::f64::consts::PI * t * f as f64;
            out.push(a.sin());
            out.push(a.cos());
        }
    };
    for r in 0..h {
        for c in 0..w {
            out.push(r as f64 / h.max(1) as f64);
            out.push(c as f64 / w.max(1) as f64);
            axis(r, h, &mut out);
            axis(c, w, &mut out);
        }
    }
    out
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize, a: f64) -> Tensor<T> {
    let v = (0..rows * cols).map(|_| T::lit(rng.gen_range(-a..=a))).collect();
    Tensor::param(&[rows, cols], v).expect("shape matches")
}

fn xavier<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<T> {
    uniform(rng, rows, cols, (6.0 / (rows + cols) as f64).sqrt())
}

/// The map-and-instruction object localizer.
#[derive(Debug, Clone)]
pub struct LocalizerModel<T: Scalar> {
    pub config: LocalizerConfig,
    pub vocab: Vocab,
    pub params: Params<T>,
    pos: Tensor<T>,
}

impl<T: Scalar> LocalizerModel<T> {
    /// Fresh weights drawn from `config.init_seed`.
    pub fn new(config: LocalizerConfig, vocab: Vocab) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let (d, k, c) = (config.d, config.conv_filters, Category::count());
        let params = Params {
            tok_emb: uniform(&mut rng, vocab.len(), d, 0.5),
            cat_emb: uniform(&mut rng, c, d, 0.5),
            conv: xavier(&mut rng, 9, k),
            w_map: xavier(&mut rng, k, d),
            w_e: xavier(&mut rng, d, c),
            w_a: (0..config.graph_layers).map(|_| xavier(&mut rng, d, d)).collect(),
            w_pos: xavier(&mut rng, POS_FEATURES, d),
            w_flag: xavier(&mut rng, FLAG_FEATURES, d),
            w_q: xavier(&mut rng, d, d),
            w_k: xavier(&mut rng, d, d),
            w_v: xavier(&mut rng, d, d),
            w_dec: xavier(&mut rng, d, 1),
            // Starts near the positive rate of one cell in a few hundred.
            b_dec: Tensor::param(&[1, 1], vec![T::lit(-4.0)]).expect("shape matches"),
        };
        Self::assemble(config, vocab, params)
    }

    fn assemble(config: LocalizerConfig, vocab: Vocab, params: Params<T>) -> Self {
        let pos = positional_features(config.height, config.width)
            .into_iter()
            .map(T::lit)
            .collect();
        let pos = Tensor::new(&[config.height * config.width, POS_FEATURES], pos).expect("shape matches");
        Self {
            config,
            vocab,
            params,
            pos,
        }
    }

    /// Parameters that receive gradients in the current configuration.
    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        self.params
            .named()
            .into_iter()
            .filter(|(n, _)| self.config.use_graph || !(n == "w_e" || n.starts_with("w_a.")))
            .collect()
    }

    /// A copy whose weights record no autodiff graph; cheap, shareable inference.
    pub fn freeze(&self) -> Self {
        let params = self.params.map(|t| t.detach());
        Self { params, ..self.clone() }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(json!({
            "kind": "localizer",
            "config": self.config,
            "vocab": self.vocab,
        }));
        for (n, t) in self.params.named() {
            ck.insert(&n, &t);
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.meta;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("localizer") {
            return Err(LocalizerError::Checkpoint("not a localizer checkpoint".into()));
        }
        let config: LocalizerConfig =
            serde_json::from_value(meta["config"].clone()).map_err(|e| LocalizerError::Checkpoint(e.to_string()))?;
        let vocab: Vocab =
            serde_json::from_value(meta["vocab"].clone()).map_err(|e| LocalizerError::Checkpoint(e.to_string()))?;
        let p = |n: &str| ck.param::<T>(n);
        let params = Params {
            tok_emb: p("tok_emb")?,
            cat_emb: p("cat_emb")?,
            conv: p("conv")?,
            w_map: p("w_map")?,
            w_e: p("w_e")?,
            w_a: (0..config.graph_layers)
                .map(|i| p(&format!("w_a.{i}")))
                .collect::<std::result::Result<_, _>>()?,
            w_pos: p("w_pos")?,
            w_flag: p("w_flag")?,
            w_q: p("w_q")?,
            w_k: p("w_k")?,
            w_v: p("w_v")?,
            w_dec: p("w_dec")?,
            b_dec: p("b_dec")?,
        };
        let (d, c) = (config.d, Category::count());
        let expect = [
            (&params.tok_emb, vec![vocab.len(), d]),
            (&params.cat_emb, vec![c, d]),
            (&params.w_e, vec![d, c]),
            (&params.w_q, vec![d, d]),
            (&params.w_dec, vec![d, 1]),
        ];
        for (t, shape) in expect {
            if t.shape() != shape.as_slice() {
                return Err(LocalizerError::DimensionMismatch {
                    expected: shape,
                    found: t.shape().to_vec(),
                });
            }
        }
        Ok(Self::assemble(config, vocab, params))
    }

    /// Converts a map and instruction text into network inputs. Only
    /// explored cells contribute content.
    pub fn prepare(&self, map: &SemanticMap, text: &str) -> Result<ModelInput<T>> {
        let (h, w) = (self.config.height, self.config.width);
        if map.height != h || map.width != w || map.channels.len() != SemanticMap::channel_count() {
            return Err(LocalizerError::DimensionMismatch {
                expected: vec![SemanticMap::channel_count(), h, w],
                found: vec![map.channels.len(), map.height, map.width],
            });
        }
        let n = h * w;
        let explored = &map.channels[SemanticMap::explored_channel()];
        let obstacle = &map.channels[SemanticMap::obstacle_channel()];
        let c_count = Category::count();

        let mut content_cat = Vec::new();
        let mut content_cell = Vec::new();
        let mut patches = Vec::new();
        let mut patch_channel = Vec::new();
        let mut near = vec![false; n];
        for c in 0..c_count {
            let ch = &map.channels[c];
            let on = |r: isize, col: isize| -> T {
                if r < 0 || col < 0 || r >= h as isize || col >= w as isize {
                    return T::zero();
                }
                let i = r as usize * w + col as usize;
                if ch[i] != 0 && explored[i] != 0 {
                    T::one()
                } else {
                    T::zero()
                }
            };
            near.iter_mut().for_each(|x| *x = false);
            let mut any = false;
            for i in 0..n {
                if ch[i] != 0 && explored[i] != 0 {
                    any = true;
                    content_cat.push(c);
                    content_cell.push(i);
                    let (r, col) = ((i / w) as isize, (i % w) as isize);
                    for dr in -1..=1 {
                        for dc in -1..=1 {
                            let (rr, cc) = (r + dr, col + dc);
                            if rr >= 0 && cc >= 0 && rr < h as isize && cc < w as isize {
                                near[rr as usize * w + cc as usize] = true;
                            }
                        }
                    }
                }
            }
            if !any {
                continue;
            }
            for i in (0..n).filter(|&i| near[i]) {
                let (r, col) = ((i / w) as isize, (i % w) as isize);
                for dr in -1..=1 {
                    for dc in -1..=1 {
                        patches.push(on(r + dr, col + dc));
                    }
                }
                patch_channel.push(c);
            }
        }
        let patches = if patch_channel.is_empty() {
            None
        } else {
            Some(Tensor::new(&[patch_channel.len(), 9], patches)?)
        };
        let mut flags = Vec::with_capacity(n * FLAG_FEATURES);
        for i in 0..n {
            let e = explored[i] != 0;
            flags.push(if e { T::one() } else { T::zero() });
            flags.push(if e && obstacle[i] != 0 { T::one() } else { T::zero() });
        }
        Ok(ModelInput {
            height: h,
            width: w,
            tokens: self.vocab.encode(text),
            patches,
            patch_channel,
            content_cat,
            content_cell,
            flags: Tensor::new(&[n, FLAG_FEATURES], flags)?,
            pos: self.pos.clone(),
        })
    }

    /// Mean-pooled token embeddings (`1×d`), or one row per token when
    /// token-level features are configured.
    pub fn encode_instruction(&self, tokens: &[usize]) -> Result<Tensor<T>> {
        let ids: Vec<usize> = if tokens.is_empty() { vec![0] } else { tokens.to_vec() };
        let emb = self.params.tok_emb.gather_rows(&ids)?;
        if self.config.token_level {
            Ok(emb)
        } else {
            Ok(emb.mean_rows()?)
        }
    }

    /// Category features `X'` (`C×d`) and the cell tokens built from them.
    pub fn encode_map(&self, input: &ModelInput<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let x_prime = self.map_features(input)?;
        let tokens = self.cell_tokens(input, &x_prime)?;
        Ok((x_prime, tokens))
    }

    /// Conv, ReLU and sum-pool per category channel, projected and added to
    /// the category bias embeddings.
    fn map_features(&self, input: &ModelInput<T>) -> Result<Tensor<T>> {
        let p = &self.params;
        let c_count = Category::count();
        let x_prime = match &input.patches {
            Some(patches) => {
                let pooled = patches
                    .matmul(&p.conv)?
                    .relu()
                    .segment_sum(&input.patch_channel, c_count)?;
                p.cat_emb.add(&pooled.matmul(&p.w_map)?)?
            }
            None => p.cat_emb.clone(),
        };
        Ok(x_prime)
    }

    /// Per-cell tokens: the sum of the category features present in the cell
    /// plus positional and flag embeddings.
    pub fn cell_tokens(&self, input: &ModelInput<T>, features: &Tensor<T>) -> Result<Tensor<T>> {
        let p = &self.params;
        let n = input.cells();
        let mut t = input.pos.matmul(&p.w_pos)?.add(&input.flags.matmul(&p.w_flag)?)?;
        if !input.content_cat.is_empty() {
            let content = features
                .gather_rows(&input.content_cat)?
                .segment_sum(&input.content_cell, n)?;
            t = t.add(&content)?;
        }
        Ok(t)
    }

    pub fn forward(&self, input: &ModelInput<T>) -> Result<ForwardTrace<T>> {
        let p = &self.params;
        let n = input.cells();
        let x_s = self.encode_instruction(&input.tokens)?;
        let x_prime = self.map_features(input)?;
        let (e, x_t) = if self.config.use_graph {
            let e = correlation_graph(&x_prime, &p.w_e)?;
            let x_t = graph_enhance(&x_prime, &e, &p.w_a)?;
            (Some(e), x_t)
        } else {
            (None, x_prime.clone())
        };
        let cell_tokens = self.cell_tokens(input, &x_t)?;

        let (q, k, v, weights, attended, h) = match self.config.attention {
            AttentionRoles::Prose => {
                let q = cell_tokens.matmul(&p.w_q)?;
                let k = x_s.matmul(&p.w_k)?;
                let v = x_s.matmul(&p.w_v)?;
                let (weights, attended) = scaled_dot_attention(&q, &k, &v)?;
                let h = q.mul(&attended)?;
                (q, k, v, weights, attended, h)
            }
            AttentionRoles::Eq2 => {
                let q = x_s.matmul(&p.w_q)?;
                let k = cell_tokens.matmul(&p.w_k)?;
                let v = cell_tokens.matmul(&p.w_v)?;
                let (weights, attended) = scaled_dot_attention(&q, &k, &v)?;
                let summary = q.mean_rows()?.add(&attended.mean_rows()?)?;
                let h = v.mul(&summary.broadcast_rows(n)?)?;
                (q, k, v, weights, attended, h)
            }
        };
        let logits = self.decode_logits(&h)?;
        let probs = logits.sigmoid();
        Ok(ForwardTrace {
            x_s,
            x_prime,
            e,
            x_t,
            cell_tokens,
            q,
            k,
            v,
            weights,
            attended,
            h,
            logits,
            probs,
        })
    }

    /// Per-cell linear head, `HW×1` logits.
    pub fn decode_logits(&self, h: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, _) = h.rows_cols("decode")?;
        let p = &self.params;
        Ok(h.matmul(&p.w_dec)?.add(&p.b_dec.broadcast_rows(n)?)?)
    }

    /// Mean pixel-wise BCE against the cells in `gt`.
    pub fn loss(&self, input: &ModelInput<T>, gt: &[Cell]) -> Result<Tensor<T>> {
        let probs = self.forward(input)?.probs;
        let target = mask_tensor(input.height, input.width, gt)?;
        Ok(probs.bce_loss(&target)?)
    }

    pub fn predict(&self, input: &ModelInput<T>) -> Result<Heatmap> {
        let probs = self.forward(input)?.probs;
        Ok(Heatmap {
            height: input.height,
            width: input.width,
            probs: probs.with_values(|v| v.iter().map(|x| x.as_f64()).collect()),
        })
    }

    pub fn heatmap(&self, map: &SemanticMap, text: &str) -> Result<Heatmap> {
        self.predict(&self.prepare(map, text)?)
    }
}

/// `HW×1` column with ones at `cells`.
pub fn mask_tensor<T: Scalar>(h: usize, w: usize, cells: &[Cell]) -> Result<Tensor<T>> {
    let mut v = vec![T::zero(); h * w];
    for c in cells {
        if c.row >= h || c.col >= w {
            return Err(LocalizerError::InvalidSample(format!("mask cell {c} outside {h}x{w}")));
        }
        v[c.row * w + c.col] = T::one();
    }
    Ok(Tensor::new(&[h * w, 1], v)?)
}
