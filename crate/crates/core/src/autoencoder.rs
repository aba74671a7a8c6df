//! Shape autoencoder: a small MLP pair between shape parameters and latent codes,
//! with a differentiable path from latent code to total volume.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use shapeedit_autodiff::{Graph, Tensor, Var};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{Adam, Bound, Linear, ParamSet};
use crate::rng::stream_rng;
use crate::shapeworld::{param_range, Category, Param, ShapeParams, PARAM_COUNT};

/// Input/output width: normalized parameters then has_arms, has_back, is_table.
pub const FEATURES: usize = PARAM_COUNT + 3;

pub const CHECKPOINT_KIND: &str = "autoencoder";

/// Discrete part of a shape; held fixed while a latent code is edited.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Structure {
    pub category: Category,
    pub has_arms: bool,
    pub has_back: bool,
}

impl Structure {
    pub fn of(p: &ShapeParams) -> Self {
        Self {
            category: p.category,
            has_arms: p.has_arms,
            has_back: p.has_back,
        }
    }
}

pub fn features(p: &ShapeParams) -> [f64; FEATURES] {
    let mut f = [0.0; FEATURES];
    f[..PARAM_COUNT].copy_from_slice(&p.normalized());
    f[PARAM_COUNT] = f64::from(u8::from(p.has_arms));
    f[PARAM_COUNT + 1] = f64::from(u8::from(p.has_back));
    f[PARAM_COUNT + 2] = f64::from(u8::from(p.category == Category::Table));
    f
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate reached at the last epoch (cosine schedule).
    pub final_learning_rate: f64,
    pub min_shapes: usize,
    /// Fraction of shapes held out to measure reconstruction error.
    pub holdout_fraction: f64,
    /// Held-out mean squared error (normalized units) above which training fails.
    pub max_error: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            hidden: 64,
            epochs: 150,
            batch_size: 64,
            learning_rate: 3e-3,
            final_learning_rate: 1e-4,
            min_shapes: 1000,
            holdout_fraction: 0.1,
            max_error: 1e-3,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "autoencoder sizes and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.final_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0 < self.holdout_fraction && self.holdout_fraction < 0.5) {
            return Err(Error::Config(
                "holdout_fraction must lie in (0, 0.5)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderMeta {
    pub seed: u64,
    pub epochs: usize,
    /// Absent before training.
    pub train_error: Option<f64>,
    pub holdout_error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Autoencoder {
    params: ParamSet,
    layers: [Linear; 6],
    latent_dim: usize,
    hidden: usize,
    pub meta: AutoencoderMeta,
}

fn cosine_lr(cfg: &AutoencoderConfig, epoch: usize) -> f64 {
    let frac = if cfg.epochs > 1 {
        epoch as f64 / (cfg.epochs - 1) as f64
    } else {
        1.0
    };
    cfg.final_learning_rate
        + 0.5
            * (cfg.learning_rate - cfg.final_learning_rate)
            * (1.0 + (std::f64::consts::PI * frac).cos())
}

impl Autoencoder {
    pub fn new(latent_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, "autoencoder-init", 0);
        let mut ps = ParamSet::new();
        let layers = [
            Linear::new(&mut ps, "enc0", FEATURES, hidden, &mut rng),
            Linear::new(&mut ps, "enc1", hidden, hidden, &mut rng),
            Linear::new(&mut ps, "enc2", hidden, latent_dim, &mut rng),
            Linear::new(&mut ps, "dec0", latent_dim, hidden, &mut rng),
            Linear::new(&mut ps, "dec1", hidden, hidden, &mut rng),
            Linear::new(&mut ps, "dec2", hidden, FEATURES, &mut rng),
        ];
        Self {
            params: ps,
            layers,
            latent_dim,
            hidden,
            meta: AutoencoderMeta {
                seed,
                epochs: 0,
                train_error: None,
                holdout_error: None,
            },
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Bound {
        self.params.bind(g, trainable)
    }

    /// `[n, FEATURES]` → `[n, latent]`.
    pub fn encode_graph(&self, g: &mut Graph, b: &Bound, x: Var) -> Result<Var> {
        let h = self.layers[0].forward(g, b, x)?;
        let h = g.tanh(h);
        let h = self.layers[1].forward(g, b, h)?;
        let h = g.tanh(h);
        self.layers[2].forward(g, b, h)
    }

    /// `[n, latent]` → `[n, FEATURES]`, every entry squashed into (0, 1).
    pub fn decode_unit_graph(&self, g: &mut Graph, b: &Bound, s: Var) -> Result<Var> {
        let h = self.layers[3].forward(g, b, s)?;
        let h = g.tanh(h);
        let h = self.layers[4].forward(g, b, h)?;
        let h = g.tanh(h);
        let y = self.layers[5].forward(g, b, h)?;
        Ok(g.sigmoid(y))
    }

    /// Decoded continuous parameters in world units, shape `[PARAM_COUNT]`,
    /// for a single latent `s` of shape `[latent]`.
    pub fn decode_params_graph(
        &self,
        g: &mut Graph,
        b: &Bound,
        s: Var,
        category: Category,
    ) -> Result<Var> {
        let s = g.reshape(s, vec![1, self.latent_dim])?;
        let unit = self.decode_unit_graph(g, b, s)?;
        let unit = g.reshape(unit, vec![FEATURES])?;
        let unit = g.slice(unit, 0, PARAM_COUNT)?;
        let (lo, span): (Vec<f64>, Vec<f64>) = Param::ALL
            .iter()
            .map(|&p| {
                let (lo, hi) = param_range(category, p);
                (lo, hi - lo)
            })
            .unzip();
        let span = g.vector_const(&span);
        let lo = g.vector_const(&lo);
        let scaled = g.mul(unit, span)?;
        Ok(g.add(scaled, lo)?)
    }

    /// Analytic total volume of the decoded shape with `structure` held fixed.
    pub fn decoded_volume_graph(
        &self,
        g: &mut Graph,
        b: &Bound,
        s: Var,
        structure: Structure,
    ) -> Result<Var> {
        let p = self.decode_params_graph(g, b, s, structure.category)?;
        volume_graph(g, p, structure)
    }

    pub fn encode(&self, p: &ShapeParams) -> Vec<f64> {
        let f = features(p);
        let h = tanh_vec(self.layers[0].apply(&self.params, &f));
        let h = tanh_vec(self.layers[1].apply(&self.params, &h));
        self.layers[2].apply(&self.params, &h)
    }

    fn decode_unit(&self, s: &[f64]) -> Vec<f64> {
        let h = tanh_vec(self.layers[3].apply(&self.params, s));
        let h = tanh_vec(self.layers[4].apply(&self.params, &h));
        self.layers[5]
            .apply(&self.params, &h)
            .into_iter()
            .map(sigmoid)
            .collect()
    }

    /// Decodes continuous parameters and thresholds the structure flags.
    pub fn decode(&self, s: &[f64]) -> ShapeParams {
        let u = self.decode_unit(s);
        let table = u[PARAM_COUNT + 2] > 0.5;
        let structure = if table {
            Structure {
                category: Category::Table,
                has_arms: false,
                has_back: false,
            }
        } else {
            Structure {
                category: Category::Chair,
                has_arms: u[PARAM_COUNT] > 0.5,
                has_back: u[PARAM_COUNT + 1] > 0.5,
            }
        };
        params_from_unit(&u, structure)
    }

    /// Decodes continuous parameters with the given structure.
    pub fn decode_with(&self, s: &[f64], structure: Structure) -> ShapeParams {
        params_from_unit(&self.decode_unit(s), structure)
    }

    /// Decoded volume and its gradient with respect to `s`.
    pub fn decoded_volume_grad(&self, s: &[f64], structure: Structure) -> Result<(f64, Vec<f64>)> {
        let mut g = Graph::new();
        let b = self.bind(&mut g, false);
        let sv = g.param(&Tensor::vector(s.to_vec()));
        let v = self.decoded_volume_graph(&mut g, &b, sv, structure)?;
        g.backward(v)?;
        Ok((g.scalar(v), g.grad_or_zeros(sv)))
    }

    /// Mean squared error of the nine normalized parameters after a round trip.
    pub fn reconstruction_error(&self, shapes: &[ShapeParams]) -> f64 {
        if shapes.is_empty() {
            return 0.0;
        }
        let total: f64 = shapes
            .iter()
            .map(|p| {
                let back = self.decode_with(&self.encode(p), Structure::of(p));
                p.normalized()
                    .iter()
                    .zip(back.normalized())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        total / (shapes.len() * PARAM_COUNT) as f64
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            CHECKPOINT_KIND,
            &self.params,
            serde_json::json!({
                "latent_dim": self.latent_dim,
                "hidden": self.hidden,
                "training": self.meta,
            }),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let meta = &ck.header.meta;
        let dim = |k: &str| {
            meta[k]
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| Error::Format(format!("checkpoint meta lacks {k}")))
        };
        let training: AutoencoderMeta = serde_json::from_value(meta["training"].clone())?;
        let mut model = Self::new(dim("latent_dim")?, dim("hidden")?, training.seed);
        ck.restore(&mut model.params)?;
        model.meta = training;
        Ok(model)
    }

    pub fn hash(&self) -> Result<String> {
        self.to_checkpoint().hash()
    }
}

fn tanh_vec(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(f64::tanh).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn params_from_unit(u: &[f64], structure: Structure) -> ShapeParams {
    let unit: [f64; PARAM_COUNT] = std::array::from_fn(|i| u[i]);
    ShapeParams::from_normalized(
        structure.category,
        unit,
        structure.has_arms,
        structure.has_back,
    )
}

/// Total volume of the realized boxes as a graph of the nine world-unit
/// parameters `p` (same layout as the box realization).
pub fn volume_graph(g: &mut Graph, p: Var, structure: Structure) -> Result<Var> {
    let at = |g: &mut Graph, param: Param| g.slice(p, param.index(), 1);
    let leg_h = at(g, Param::LegHeight)?;
    let leg_t = at(g, Param::LegThickness)?;
    let w = at(g, Param::SeatWidth)?;
    let d = at(g, Param::SeatDepth)?;
    let ts = at(g, Param::SeatThickness)?;
    let legs = g.mul(leg_t, leg_t)?;
    let legs = g.mul(legs, leg_h)?;
    let legs = g.scale(legs, 4.0);
    let seat = g.mul(w, d)?;
    let seat = g.mul(seat, ts)?;
    let mut total = g.add(legs, seat)?;
    let mut arm_depth = d;
    if structure.has_back {
        let bh = at(g, Param::BackHeight)?;
        let bt = at(g, Param::BackThickness)?;
        let back = g.mul(w, bt)?;
        let back = g.mul(back, bh)?;
        total = g.add(total, back)?;
        arm_depth = g.sub(d, bt)?;
    }
    if structure.has_arms {
        let ah = at(g, Param::ArmHeight)?;
        let ta = at(g, Param::ArmThickness)?;
        let arms = g.mul(ah, ta)?;
        let arms = g.mul(arms, arm_depth)?;
        let arms = g.scale(arms, 2.0);
        total = g.add(total, arms)?;
    }
    Ok(g.sum(total))
}

/// Trains an autoencoder on distinct shapes; the last `holdout_fraction` of a
/// seeded shuffle is held out for the reconstruction-error check.
pub fn train_autoencoder(
    shapes: &[ShapeParams],
    cfg: &AutoencoderConfig,
    seed: u64,
) -> Result<Autoencoder> {
    cfg.validate()?;
    if shapes.len() < cfg.min_shapes {
        return Err(Error::Argument(format!(
            "need at least {} shapes, got {}",
            cfg.min_shapes,
            shapes.len()
        )));
    }
    let mut order: Vec<usize> = (0..shapes.len()).collect();
    order.shuffle(&mut stream_rng(seed, "autoencoder-split", 0));
    let n_hold = ((shapes.len() as f64) * cfg.holdout_fraction).round() as usize;
    let (train_idx, hold_idx) = order.split_at(shapes.len() - n_hold);
    let feats: Vec<[f64; FEATURES]> = shapes.iter().map(features).collect();

    let mut model = Autoencoder::new(cfg.latent_dim, cfg.hidden, seed);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut train_idx = train_idx.to_vec();
    let mut last_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        opt.learning_rate = cosine_lr(cfg, epoch);
        train_idx.shuffle(&mut stream_rng(seed, "autoencoder-shuffle", epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            let x: Vec<f64> = batch.iter().flat_map(|&i| feats[i]).collect();
            let x = Tensor::matrix(batch.len(), FEATURES, x)?;
            let mut g = Graph::new();
            let b = model.bind(&mut g, true);
            let xv = g.constant(&x);
            let z = model.encode_graph(&mut g, &b, xv)?;
            let y = model.decode_unit_graph(&mut g, &b, z)?;
            let diff = g.sub(y, xv)?;
            let sq = g.mul(diff, diff)?;
            let loss = g.mean(sq)?;
            let lv = g.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::Training {
                    epoch,
                    reason: format!("loss is {lv}"),
                });
            }
            epoch_loss += lv * batch.len() as f64;
            g.backward(loss)?;
            let grads = model.params.grads(&g, &b);
            opt.step(&mut model.params, &grads)
                .map_err(|e| Error::Training {
                    epoch,
                    reason: e.to_string(),
                })?;
        }
        last_loss = epoch_loss / train_idx.len() as f64;
    }
    let hold: Vec<ShapeParams> = hold_idx.iter().map(|&i| shapes[i].clone()).collect();
    let holdout_error = model.reconstruction_error(&hold);
    model.meta = AutoencoderMeta {
        seed,
        epochs: cfg.epochs,
        train_error: Some(last_loss),
        holdout_error: Some(holdout_error),
    };
    if !(holdout_error <= cfg.max_error) {
        return Err(Error::Training {
            epoch: cfg.epochs,
            reason: format!("held-out reconstruction error {holdout_error:.3e} above {:.1e} (final loss {last_loss:.3e})", cfg.max_error),
        });
    }
    Ok(model)
}
