//! Edit benchmarks over a fixed set of test-split (shape, utterance) cases.

use serde::{Deserialize, Serialize};
use shapeedit_core::autoencoder::{Autoencoder, Structure};
use shapeedit_core::editor::{mean_volume, EditConfig, EditTrace, Editor, NeighborIndex};
use shapeedit_core::jointspace::JointModel;
use shapeedit_core::metrics::{aggregate, pep, Envelope, PepEntry, PepSummary};
use shapeedit_core::rng::{derive_seed, stream_rng};
use shapeedit_core::shapeworld::{realize_shape, shapes_of, volume, ShapeParams, Split, Triplet};
use shapeedit_core::{Error, Result};

use rand::seq::SliceRandom;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCase {
    pub triplet: usize,
    pub utterance: usize,
}

/// `count` distinct test-split cases in a seeded order. Fails when the test
/// split has fewer.
pub fn benchmark_cases(triplets: &[Triplet], count: usize, seed: u64) -> Result<Vec<BenchCase>> {
    let mut all: Vec<BenchCase> = triplets
        .iter()
        .enumerate()
        .filter(|(_, t)| t.split == Split::Test)
        .flat_map(|(i, t)| {
            (0..t.utterances.len()).map(move |u| BenchCase {
                triplet: i,
                utterance: u,
            })
        })
        .collect();
    if all.len() < count {
        return Err(Error::Argument(format!(
            "test split has {} utterances, {count} requested",
            all.len()
        )));
    }
    all.shuffle(&mut stream_rng(seed, "benchmark-cases", 0));
    all.truncate(count);
    Ok(all)
}

/// Per-step statistics pooled over the edits of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: usize,
    pub clipped: usize,
    pub degenerate: usize,
    /// Unclipped steps whose realized |dV| is within a factor 2 of the target.
    pub unclipped_within_factor_two: usize,
    pub all_within_factor_two: usize,
    pub pairs: usize,
    /// Consecutive pairs with non-decreasing alignment.
    pub non_decreasing: usize,
    /// Largest |predicted - target| / target over unclipped steps.
    pub max_linearized_error: f64,
    /// Edits whose final alignment exceeds the initial one.
    pub improved_edits: usize,
    pub edits: usize,
}

impl StepStats {
    fn add(&mut self, trace: &EditTrace, target: f64, rescaled: bool) {
        self.edits += 1;
        if trace.last().h > trace.steps[0].h {
            self.improved_edits += 1;
        }
        for w in trace.steps.windows(2) {
            self.pairs += 1;
            if w[1].h >= w[0].h {
                self.non_decreasing += 1;
            }
        }
        for s in &trace.steps[1..] {
            self.steps += 1;
            let within = s.delta_volume >= 0.5 * target && s.delta_volume <= 2.0 * target;
            self.all_within_factor_two += within as usize;
            if s.degenerate {
                self.degenerate += 1;
            } else if s.clipped {
                self.clipped += 1;
            } else if rescaled {
                self.unclipped_within_factor_two += within as usize;
                self.max_linearized_error = self
                    .max_linearized_error
                    .max((s.predicted_delta_volume - target).abs() / target);
            }
        }
    }

    pub fn unclipped(&self) -> usize {
        self.steps - self.clipped - self.degenerate
    }

    pub fn unclipped_within_rate(&self) -> f64 {
        self.unclipped_within_factor_two as f64 / self.unclipped().max(1) as f64
    }

    pub fn all_within_rate(&self) -> f64 {
        self.all_within_factor_two as f64 / self.steps.max(1) as f64
    }

    pub fn non_decreasing_rate(&self) -> f64 {
        self.non_decreasing as f64 / self.pairs.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditRun {
    pub entries: Vec<PepEntry>,
    pub summary: PepSummary,
    pub validity: f64,
    pub steps: StepStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub summary: PepSummary,
    pub validity: f64,
    /// Mean |dV| between a round's input and output.
    pub mean_round_delta_volume: f64,
}

/// Autoencoder, neighbor index and plausibility envelope shared by every
/// benchmark run over one dataset.
pub struct Workbench<'a> {
    pub triplets: &'a [Triplet],
    pub autoencoder: &'a Autoencoder,
    pub index: NeighborIndex,
    pub envelope: Envelope,
    pub mean_volume: f64,
    pub cases: Vec<BenchCase>,
    pub swell: f64,
}

impl<'a> Workbench<'a> {
    pub fn new(
        triplets: &'a [Triplet],
        autoencoder: &'a Autoencoder,
        cases: Vec<BenchCase>,
        swell: f64,
    ) -> Result<Self> {
        let train = shapes_of(triplets, Some(Split::Train));
        Ok(Self {
            triplets,
            autoencoder,
            index: NeighborIndex::from_shapes(autoencoder, &train)?,
            envelope: Envelope::from_shapes(&train),
            mean_volume: mean_volume(&train)?,
            cases,
            swell,
        })
    }

    pub fn editor<'b>(&'b self, model: &'b JointModel, cfg: &EditConfig) -> Result<Editor<'b>> {
        Editor::new(
            self.autoencoder,
            model,
            &self.index,
            cfg.clone(),
            self.mean_volume,
        )
    }

    /// Source latent, structure and utterance text of a case.
    pub fn case(&self, case: BenchCase) -> (Vec<f64>, Structure, &'a str) {
        let t = &self.triplets[case.triplet];
        (
            self.autoencoder.encode(&t.source),
            Structure::of(&t.source),
            t.utterances[case.utterance].text.as_str(),
        )
    }

    fn score(
        &self,
        source: &[f64],
        structure: Structure,
        edited: &ShapeParams,
        utterance: &str,
    ) -> Result<PepEntry> {
        let src = realize_shape(&self.autoencoder.decode_with(source, structure))?;
        Ok(pep(&src, &realize_shape(edited)?, utterance, self.swell))
    }

    /// One edit per case; edit seeds derive from `seed` and the case position.
    pub fn edit_run(&self, model: &JointModel, cfg: &EditConfig, seed: u64) -> Result<EditRun> {
        let editor = self.editor(model, cfg)?;
        let mut entries = Vec::with_capacity(self.cases.len());
        let mut outputs = Vec::with_capacity(self.cases.len());
        let mut steps = StepStats::default();
        for (i, &c) in self.cases.iter().enumerate() {
            let (s, structure, text) = self.case(c);
            let trace = editor.edit(
                &s,
                structure,
                text,
                derive_seed(seed, "benchmark-edit", i as u64),
            )?;
            steps.add(&trace, editor.step_volume, cfg.use_rescaling);
            entries.push(self.score(&s, structure, trace.final_params(), text)?);
            outputs.push(trace.final_params().clone());
        }
        let summary = aggregate(&entries, self.swell)?;
        Ok(EditRun {
            entries,
            summary,
            validity: self.envelope.validity_rate(&outputs),
            steps,
        })
    }

    /// `rounds` chained edits per case, each round scored against the
    /// original source.
    pub fn iterative_run(
        &self,
        model: &JointModel,
        cfg: &EditConfig,
        seed: u64,
        rounds: usize,
    ) -> Result<Vec<RoundSummary>> {
        let editor = self.editor(model, cfg)?;
        let mut entries: Vec<Vec<PepEntry>> = vec![Vec::new(); rounds];
        let mut outputs: Vec<Vec<ShapeParams>> = vec![Vec::new(); rounds];
        let mut round_dv = vec![0.0; rounds];
        for (i, &c) in self.cases.iter().enumerate() {
            let (s, structure, text) = self.case(c);
            let traces = editor.iterative_edit(
                &s,
                structure,
                text,
                derive_seed(seed, "benchmark-edit", i as u64),
                rounds,
            )?;
            let mut prev = volume(&realize_shape(
                &self.autoencoder.decode_with(&s, structure),
            )?);
            for (r, tr) in traces.iter().enumerate() {
                let v = volume(&realize_shape(tr.final_params())?);
                round_dv[r] += (v - prev).abs();
                prev = v;
                entries[r].push(self.score(&s, structure, tr.final_params(), text)?);
                outputs[r].push(tr.final_params().clone());
            }
        }
        let n = self.cases.len() as f64;
        (0..rounds)
            .map(|r| {
                Ok(RoundSummary {
                    round: r + 1,
                    summary: aggregate(&entries[r], self.swell)?,
                    validity: self.envelope.validity_rate(&outputs[r]),
                    mean_round_delta_volume: round_dv[r] / n,
                })
            })
            .collect()
    }
}
