//! Latent-space editing: gradient ascent on the utterance/shape-difference
//! alignment, restricted to the span of nearby training latents, with steps
//! rescaled to a target change in decoded volume.

use std::io::Write;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use shapeedit_autodiff::{Graph, Tensor};

use crate::autoencoder::{Autoencoder, Structure};
use crate::error::{Error, Result};
use crate::jointspace::{JointModel, TextCode};
use crate::rng::{derive_seed, stream_rng};
use crate::shapeworld::{realize_shape, volume, ShapeParams};

/// Brute-force Euclidean index over training latents.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    latents: Vec<Vec<f64>>,
}

impl NeighborIndex {
    pub fn new(latents: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = latents.first() else {
            return Err(Error::Argument(
                "neighbor index needs at least one latent".into(),
            ));
        };
        let d = first.len();
        if latents
            .iter()
            .any(|l| l.len() != d || l.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Argument(
                "latents must be finite and of equal dimension".into(),
            ));
        }
        Ok(Self { latents })
    }

    pub fn from_shapes(ae: &Autoencoder, shapes: &[ShapeParams]) -> Result<Self> {
        Self::new(shapes.iter().map(|p| ae.encode(p)).collect())
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn latents(&self) -> &[Vec<f64>] {
        &self.latents
    }

    /// The `p` stored latents closest to `s`, nearest first, ties in insertion
    /// order. Latents exactly equal to `s` are skipped.
    pub fn get_nearest(&self, s: &[f64], p: usize) -> Result<Vec<Vec<f64>>> {
        if p == 0 {
            return Err(Error::Argument("neighbor count must be positive".into()));
        }
        if s.len() != self.latents[0].len() {
            return Err(Error::Argument(format!(
                "query has dimension {}, index {}",
                s.len(),
                self.latents[0].len()
            )));
        }
        let mut scored: Vec<(f64, usize)> = self
            .latents
            .iter()
            .enumerate()
            .filter(|(_, l)| l.as_slice() != s)
            .map(|(i, l)| {
                (
                    l.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
                    i,
                )
            })
            .collect();
        if p > scored.len() {
            return Err(Error::Argument(format!(
                "{p} neighbors requested, {} available",
                scored.len()
            )));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(scored[..p]
            .iter()
            .map(|&(_, i)| self.latents[i].clone())
            .collect())
    }

    /// Edit directions around `s`: offsets from `s` to its `p` nearest neighbors.
    pub fn simplex(&self, s: &[f64], p: usize) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .get_nearest(s, p)?
            .into_iter()
            .map(|q| q.iter().zip(s).map(|(a, b)| a - b).collect())
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditConfig {
    pub neighbors: usize,
    pub steps: usize,
    /// Standard deviation of the initial simplex coordinates.
    pub init_noise: f64,
    /// Target per-step volume change as a fraction of the mean training-shape volume.
    pub step_volume_fraction: f64,
    /// Restrict edits to the neighbor simplex; otherwise move the latent directly.
    pub use_simplex: bool,
    /// Rescale each step to the target volume change; otherwise use `fixed_step`.
    pub use_rescaling: bool,
    pub fixed_step: f64,
    /// Step scales are capped at this multiple of the median scale so far.
    pub cap_factor: f64,
}

impl Default for EditConfig {
    fn default() -> Self {
        Self {
            neighbors: 64,
            steps: 50,
            init_noise: 0.01,
            step_volume_fraction: 0.005,
            use_simplex: true,
            use_rescaling: true,
            fixed_step: 0.01,
            cap_factor: 10.0,
        }
    }
}

impl EditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbors == 0 {
            return Err(Error::Config("neighbors must be positive".into()));
        }
        for (name, v) in [
            ("init_noise", self.init_noise),
            ("step_volume_fraction", self.step_volume_fraction),
            ("fixed_step", self.fixed_step),
            ("cap_factor", self.cap_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditStep {
    pub step: usize,
    /// Simplex coordinates, or the latent offset from the source without the simplex.
    pub coords: Vec<f64>,
    pub latent: Vec<f64>,
    /// Alignment of the utterance with (source, current latent).
    pub h: f64,
    /// Step scale used to reach this step; 0 for the initialization.
    pub step_scale: f64,
    /// Linearized volume change predicted for this step.
    pub predicted_delta_volume: f64,
    /// Realized |change| in decoded volume from the previous step.
    pub delta_volume: f64,
    pub clipped: bool,
    pub degenerate: bool,
    pub params: ShapeParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditTrace {
    pub utterance: String,
    pub source_latent: Vec<f64>,
    pub structure: Structure,
    pub steps: Vec<EditStep>,
    /// Every step had a zero ascent direction.
    pub failed: bool,
}

impl EditTrace {
    pub fn last(&self) -> &EditStep {
        self.steps.last().expect("a trace holds its initialization")
    }

    pub fn final_params(&self) -> &ShapeParams {
        &self.last().params
    }

    pub fn write_jsonl(&self, out: &mut impl Write) -> Result<()> {
        for s in &self.steps {
            serde_json::to_writer(&mut *out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Step scale that makes the linearized volume change equal `target`.
/// Returns `(scale, clipped, degenerate)`; `cap` bounds the scale when given.
pub fn rescale_step(
    directional_derivative: f64,
    target: f64,
    cap: Option<f64>,
    fallback: f64,
) -> (f64, bool, bool) {
    let dd = directional_derivative.abs();
    if dd == 0.0 || !dd.is_finite() {
        return (cap.unwrap_or(fallback), false, true);
    }
    let eta = target / dd;
    match cap {
        Some(c) if eta > c => (c, true, false),
        _ => (eta, false, false),
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Mean realized volume of a set of shapes.
pub fn mean_volume(shapes: &[ShapeParams]) -> Result<f64> {
    if shapes.is_empty() {
        return Err(Error::Argument("no shapes to average".into()));
    }
    let mut total = 0.0;
    for p in shapes {
        total += volume(&realize_shape(p)?);
    }
    Ok(total / shapes.len() as f64)
}

/// Frozen models and index used to edit shapes.
pub struct Editor<'a> {
    pub autoencoder: &'a Autoencoder,
    pub model: &'a JointModel,
    pub index: &'a NeighborIndex,
    pub config: EditConfig,
    /// Target per-step volume change in world units.
    pub step_volume: f64,
}

impl<'a> Editor<'a> {
    pub fn new(
        autoencoder: &'a Autoencoder,
        model: &'a JointModel,
        index: &'a NeighborIndex,
        config: EditConfig,
        mean_volume: f64,
    ) -> Result<Self> {
        config.validate()?;
        if autoencoder.latent_dim() != model.latent_dim() {
            return Err(Error::Argument(
                "autoencoder and joint-space latent sizes differ".into(),
            ));
        }
        let step_volume = config.step_volume_fraction * mean_volume;
        if !(step_volume > 0.0) {
            return Err(Error::Argument(format!(
                "mean volume {mean_volume} must be positive"
            )));
        }
        Ok(Self {
            autoencoder,
            model,
            index,
            config,
            step_volume,
        })
    }

    fn decoded_volume(&self, s: &[f64], structure: Structure) -> Result<f64> {
        Ok(volume(&realize_shape(
            &self.autoencoder.decode_with(s, structure),
        )?))
    }

    /// Alignment and its gradient with respect to `coords`, where the edited
    /// latent is `source + coords^T basis` (or `source + coords` without a basis).
    fn ascent_direction(
        &self,
        source: &[f64],
        coords: &[f64],
        basis: Option<&Tensor>,
        code: &TextCode,
    ) -> Result<(f64, Vec<f64>)> {
        let d = source.len();
        let mut g = Graph::new();
        let b = self.model.bind(&mut g, false);
        let c = g.param(&Tensor::matrix(1, coords.len(), coords.to_vec())?);
        let offset = match basis {
            Some(q) => {
                let q = g.constant(q);
                g.matmul(c, q)?
            }
            None => c,
        };
        let s = g.constant(&Tensor::matrix(1, d, source.to_vec())?);
        let t = g.add(s, offset)?;
        let emb = g.constant(&Tensor::matrix(
            1,
            code.embedding.len(),
            code.embedding.clone(),
        )?);
        let w = g.constant(&Tensor::matrix(
            1,
            code.weights.len(),
            code.weights.clone(),
        )?);
        let h = self.model.similarity_graph(&mut g, &b, s, t, emb, w)?;
        let h = g.sum(h);
        g.backward(h)?;
        Ok((g.scalar(h), g.grad_or_zeros(c)))
    }

    /// One edit of the latent `source` toward `utterance`; flags in `structure`
    /// stay fixed. Deterministic for a given `seed`.
    pub fn edit(
        &self,
        source: &[f64],
        structure: Structure,
        utterance: &str,
        seed: u64,
    ) -> Result<EditTrace> {
        self.edit_with_steps(source, structure, utterance, seed, self.config.steps)
    }

    pub fn edit_with_steps(
        &self,
        source: &[f64],
        structure: Structure,
        utterance: &str,
        seed: u64,
        steps: usize,
    ) -> Result<EditTrace> {
        let d = source.len();
        if d != self.autoencoder.latent_dim() {
            return Err(Error::Argument(format!(
                "latent has dimension {d}, expected {}",
                self.autoencoder.latent_dim()
            )));
        }
        let code = self.model.encode_text(utterance)?;
        let basis_rows = if self.config.use_simplex {
            Some(self.index.simplex(source, self.config.neighbors)?)
        } else {
            None
        };
        let basis = match &basis_rows {
            Some(rows) => Some(Tensor::matrix(rows.len(), d, rows.concat())?),
            None => None,
        };
        let to_latent = |coords: &[f64]| -> Vec<f64> {
            let mut s = source.to_vec();
            match &basis_rows {
                Some(rows) => {
                    for (e, q) in coords.iter().zip(rows) {
                        for (x, qv) in s.iter_mut().zip(q) {
                            *x += e * qv;
                        }
                    }
                }
                None => {
                    for (x, c) in s.iter_mut().zip(coords) {
                        *x += c;
                    }
                }
            }
            s
        };
        let n_coords = basis_rows.as_ref().map_or(d, Vec::len);
        let normal =
            Normal::new(0.0, self.config.init_noise).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = stream_rng(seed, "edit-init", 0);
        let mut coords: Vec<f64> = (0..n_coords).map(|_| normal.sample(&mut rng)).collect();
        let fs = self.model.expert_outputs(source);
        let h_at = |latent: &[f64]| {
            self.model
                .similarity_from_outputs(&code, &fs, &self.model.expert_outputs(latent))
        };

        let mut latent = to_latent(&coords);
        let mut vol = self.decoded_volume(&latent, structure)?;
        let mut trace = EditTrace {
            utterance: utterance.to_string(),
            source_latent: source.to_vec(),
            structure,
            steps: vec![EditStep {
                step: 0,
                coords: coords.clone(),
                latent: latent.clone(),
                h: h_at(&latent),
                step_scale: 0.0,
                predicted_delta_volume: 0.0,
                delta_volume: (vol - self.decoded_volume(source, structure)?).abs(),
                clipped: false,
                degenerate: false,
                params: self.autoencoder.decode_with(&latent, structure),
            }],
            failed: false,
        };
        let mut scales: Vec<f64> = Vec::with_capacity(steps);
        let mut degenerate_steps = 0;
        for step in 1..=steps {
            let (_, grad) = self.ascent_direction(source, &coords, basis.as_ref(), &code)?;
            if grad.iter().any(|x| !x.is_finite()) {
                return Err(Error::Edit {
                    step,
                    reason: "non-finite alignment gradient".into(),
                });
            }
            // latent-space direction of one unit of step scale
            let direction: Vec<f64> = match &basis_rows {
                Some(rows) => {
                    let mut v = vec![0.0; d];
                    for (gi, q) in grad.iter().zip(rows) {
                        for (x, qv) in v.iter_mut().zip(q) {
                            *x += gi * qv;
                        }
                    }
                    v
                }
                None => grad.clone(),
            };
            let zero = grad.iter().all(|&x| x == 0.0);
            let (_, vgrad) = self.autoencoder.decoded_volume_grad(&latent, structure)?;
            let dd: f64 = vgrad.iter().zip(&direction).map(|(a, b)| a * b).sum();
            let (scale, clipped, degenerate) = if zero {
                (0.0, false, true)
            } else if self.config.use_rescaling {
                let cap = (!scales.is_empty()).then(|| self.config.cap_factor * median(&scales));
                rescale_step(dd, self.step_volume, cap, self.config.fixed_step)
            } else {
                (self.config.fixed_step, false, false)
            };
            if degenerate {
                degenerate_steps += 1;
            }
            if scale > 0.0 {
                scales.push(scale);
            }
            for (c, gi) in coords.iter_mut().zip(&grad) {
                *c += scale * gi;
            }
            latent = to_latent(&coords);
            if latent.iter().any(|x| !x.is_finite()) {
                return Err(Error::Edit {
                    step,
                    reason: "latent became non-finite".into(),
                });
            }
            let new_vol = self.decoded_volume(&latent, structure)?;
            trace.steps.push(EditStep {
                step,
                coords: coords.clone(),
                latent: latent.clone(),
                h: h_at(&latent),
                step_scale: scale,
                predicted_delta_volume: (scale * dd).abs(),
                delta_volume: (new_vol - vol).abs(),
                clipped,
                degenerate,
                params: self.autoencoder.decode_with(&latent, structure),
            });
            vol = new_vol;
        }
        trace.failed = steps > 0 && degenerate_steps == steps;
        Ok(trace)
    }

    /// Repeats the edit `rounds` times, each round starting from the previous
    /// result with a fresh simplex and fresh initial coordinates.
    pub fn iterative_edit(
        &self,
        source: &[f64],
        structure: Structure,
        utterance: &str,
        seed: u64,
        rounds: usize,
    ) -> Result<Vec<EditTrace>> {
        let mut out: Vec<EditTrace> = Vec::with_capacity(rounds);
        let mut current = source.to_vec();
        for round in 0..rounds {
            let round_seed = if round == 0 {
                seed
            } else {
                derive_seed(seed, "edit-round", round as u64)
            };
            let trace = self.edit(&current, structure, utterance, round_seed)?;
            current = trace.last().latent.clone();
            out.push(trace);
        }
        Ok(out)
    }
}

/// Distance from `v` to the row span of `rows` (modified Gram-Schmidt).
pub fn span_residual(rows: &[Vec<f64>], v: &[f64]) -> f64 {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for r in rows {
        let mut w = r.clone();
        for b in &basis {
            let p: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in w.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-10 * scale.max(1e-300) {
            basis.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    let mut res = v.to_vec();
    for b in &basis {
        let p: f64 = res.iter().zip(b).map(|(x, y)| x * y).sum();
        for (x, y) in res.iter_mut().zip(b) {
            *x -= p * y;
        }
    }
    res.iter().map(|x| x * x).sum::<f64>().sqrt()
}
