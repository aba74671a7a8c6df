//! Pipeline stages and their on-disk layout. Every file written here carries
//! the config hash and seed of the run that produced it.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use shapeedit_core::autoencoder::{train_autoencoder, Autoencoder};
use shapeedit_core::checkpoint::{write_atomic, Checkpoint};
use shapeedit_core::editor::EditConfig;
use shapeedit_core::jointspace::{
    evaluate_accuracy, expert_activation_report, orthogonality_report, train_jointspace,
    EmbeddingRecord, ExpertActivation, JointModel, MiningStrategy, PairStats,
};
use shapeedit_core::metrics::write_pep_report;
use shapeedit_core::rng::sha256_hex;
use shapeedit_core::shapeworld::{
    generate_dataset, read_dataset, shapes_of, write_dataset_to, Split, Triplet,
};
use shapeedit_core::{Error, Result};

use crate::bench::{benchmark_cases, EditRun, RoundSummary, StepStats, Workbench};
use crate::config::{RunConfig, Variant};

/// Provenance embedded in every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    pub fn of(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            config_hash: cfg.hash()?,
            seed: cfg.seed,
        })
    }
}

/// File names under an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }

    pub fn autoencoder(&self) -> PathBuf {
        self.root.join("autoencoder.ckpt")
    }

    pub fn joint(&self, variant: Variant, seed: u64) -> PathBuf {
        self.root
            .join("joint")
            .join(format!("{}-seed{seed}.ckpt", variant.name()))
    }

    pub fn accuracy(&self) -> PathBuf {
        self.root.join("accuracy.json")
    }

    pub fn benchmark(&self) -> PathBuf {
        self.root.join("benchmark.json")
    }

    pub fn pep_report(&self, variant: Variant, seed: u64) -> PathBuf {
        self.root
            .join("pep")
            .join(format!("{}-seed{seed}.jsonl", variant.name()))
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.root.join("embeddings.jsonl")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Writes `bytes` atomically, creating parent directories.
pub fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    ensure_parent(path)?;
    write_atomic(path, bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_output(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// First line of every line-delimited output.
pub fn stamp_header(stamp: &Stamp) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec(&serde_json::json!({ "record": "header", "stamp": stamp }))?;
    buf.push(b'\n');
    Ok(buf)
}

pub fn write_dataset_file(path: &Path, triplets: &[Triplet], stamp: &Stamp) -> Result<()> {
    let mut buf = stamp_header(stamp)?;
    write_dataset_to(&mut buf, triplets)?;
    write_output(path, &buf)
}

pub fn save_checkpoint(mut ck: Checkpoint, stamp: &Stamp, path: &Path) -> Result<()> {
    ck.header.meta["stamp"] = serde_json::to_value(stamp)?;
    write_output(path, &ck.to_bytes()?)
}

pub fn load_autoencoder(path: &Path) -> Result<Autoencoder> {
    Autoencoder::from_checkpoint(&Checkpoint::load(path)?)
}

pub fn load_joint(path: &Path) -> Result<JointModel> {
    JointModel::from_checkpoint(&Checkpoint::load(path)?)
}

pub fn variant_of(model: &JointModel) -> Variant {
    if model.config.lambda == 0.0 {
        return Variant::Baseline;
    }
    match model.config.mining {
        MiningStrategy::Multiutterance => Variant::Multiutterance,
        MiningStrategy::SharedContext => Variant::SharedContext,
        MiningStrategy::Random => Variant::Random,
    }
}

pub fn generate(cfg: &RunConfig) -> Result<Vec<Triplet>> {
    generate_dataset(&cfg.dataset, cfg.seed)
}

/// Autoencoder trained on the training-split shapes.
pub fn pretrain(cfg: &RunConfig, triplets: &[Triplet]) -> Result<Autoencoder> {
    train_autoencoder(
        &shapes_of(triplets, Some(Split::Train)),
        &cfg.autoencoder,
        cfg.seed,
    )
}

pub fn train_variant(
    cfg: &RunConfig,
    triplets: &[Triplet],
    ae: &Autoencoder,
    variant: Variant,
    seed: u64,
) -> Result<JointModel> {
    train_jointspace(triplets, ae, &variant.joint_config(&cfg.joint), seed)
}

/// A trained joint-space model and where it came from.
pub struct Trained {
    pub variant: Variant,
    pub seed: u64,
    pub checkpoint: String,
    pub model: JointModel,
}

impl Trained {
    pub fn new(model: JointModel) -> Result<Self> {
        Ok(Self {
            variant: variant_of(&model),
            seed: model.meta.seed,
            checkpoint: model.hash()?,
            model,
        })
    }
}

/// Identifies the model behind a table row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowKey {
    pub variant: Variant,
    pub seed: u64,
    pub checkpoint: String,
    pub mining: MiningStrategy,
    pub lambda: f64,
}

impl RowKey {
    pub fn of(t: &Trained) -> Self {
        Self {
            variant: t.variant,
            seed: t.seed,
            checkpoint: t.checkpoint.clone(),
            mining: t.model.config.mining,
            lambda: t.model.config.lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    #[serde(flatten)]
    pub key: RowKey,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub stamp: Stamp,
    pub rows: Vec<AccuracyRow>,
}

pub fn accuracy_table(
    stamp: &Stamp,
    triplets: &[Triplet],
    ae: &Autoencoder,
    models: &[Trained],
) -> Result<AccuracyTable> {
    let rows = models
        .iter()
        .map(|t| {
            Ok(AccuracyRow {
                key: RowKey::of(t),
                val_accuracy: evaluate_accuracy(&t.model, ae, triplets, Split::Val)?,
                test_accuracy: evaluate_accuracy(&t.model, ae, triplets, Split::Test)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AccuracyTable {
        stamp: stamp.clone(),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Full,
    /// Fixed step scale instead of volume rescaling.
    FixedStep,
    /// Ascent directly in latent space instead of neighbor coordinates.
    NoSimplex,
}

impl Procedure {
    pub const ALL: [Procedure; 3] = [Procedure::Full, Procedure::FixedStep, Procedure::NoSimplex];

    pub fn apply(self, base: &EditConfig) -> EditConfig {
        let mut cfg = base.clone();
        match self {
            Procedure::Full => {}
            Procedure::FixedStep => cfg.use_rescaling = false,
            Procedure::NoSimplex => cfg.use_simplex = false,
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditRow {
    #[serde(flatten)]
    pub key: RowKey,
    pub mean_pep: f64,
    pub mean_delta_v: f64,
    pub validity: f64,
    pub defined: usize,
    pub flagged: BTreeMap<String, usize>,
    pub steps: StepStats,
}

impl EditRow {
    fn new(key: RowKey, run: &EditRun) -> Self {
        Self {
            key,
            mean_pep: run.summary.mean_pep,
            mean_delta_v: run.summary.mean_delta_v,
            validity: run.validity,
            defined: run.summary.defined,
            flagged: run.summary.flagged.clone(),
            steps: run.steps.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    #[serde(flatten)]
    pub key: RowKey,
    pub round: usize,
    pub mean_pep: f64,
    pub mean_delta_v: f64,
    pub validity: f64,
    pub mean_round_delta_volume: f64,
}

impl RoundRow {
    fn new(key: RowKey, r: &RoundSummary) -> Self {
        Self {
            key,
            round: r.round,
            mean_pep: r.summary.mean_pep,
            mean_delta_v: r.summary.mean_delta_v,
            validity: r.validity,
            mean_round_delta_volume: r.mean_round_delta_volume,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub procedure: Procedure,
    #[serde(flatten)]
    pub row: EditRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTables {
    pub stamp: Stamp,
    pub edits: Vec<EditRow>,
    pub iterative: Vec<RoundRow>,
    pub ablations: Vec<AblationRow>,
}

/// Single-edit, iterative and edit-procedure tables. Ablations run on the
/// multiutterance models when present, otherwise on the first variant.
pub fn benchmark_tables(
    cfg: &RunConfig,
    stamp: &Stamp,
    triplets: &[Triplet],
    ae: &Autoencoder,
    models: &[Trained],
    layout: Option<&Layout>,
) -> Result<BenchmarkTables> {
    let cases = benchmark_cases(triplets, cfg.benchmark.edits, cfg.seed)?;
    let bench = Workbench::new(triplets, ae, cases, cfg.metrics.swell)?;
    let ablation_variant = if models.iter().any(|t| t.variant == Variant::Multiutterance) {
        Some(Variant::Multiutterance)
    } else {
        models.first().map(|t| t.variant)
    };
    let mut tables = BenchmarkTables {
        stamp: stamp.clone(),
        edits: vec![],
        iterative: vec![],
        ablations: vec![],
    };
    for t in models {
        let key = RowKey::of(t);
        info!("benchmark {} seed {}", t.variant.name(), t.seed);
        let run = bench.edit_run(&t.model, &cfg.edit, t.seed)?;
        if let Some(layout) = layout {
            let mut buf = stamp_header(stamp)?;
            write_pep_report(&mut buf, &run.entries, &run.summary)?;
            write_output(&layout.pep_report(t.variant, t.seed), &buf)?;
        }
        tables.edits.push(EditRow::new(key.clone(), &run));
        for r in bench.iterative_run(&t.model, &cfg.edit, t.seed, cfg.benchmark.rounds)? {
            tables.iterative.push(RoundRow::new(key.clone(), &r));
        }
        if Some(t.variant) == ablation_variant {
            for p in Procedure::ALL {
                let row = if p == Procedure::Full {
                    EditRow::new(key.clone(), &run)
                } else {
                    EditRow::new(
                        key.clone(),
                        &bench.edit_run(&t.model, &p.apply(&cfg.edit), t.seed)?,
                    )
                };
                tables.ablations.push(AblationRow { procedure: p, row });
            }
        }
    }
    Ok(tables)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(flatten)]
    pub key: RowKey,
    pub temperature: f64,
    pub activation: ExpertActivation,
    pub independent: PairStats,
    pub same_axis: PairStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTables {
    pub stamp: Stamp,
    pub rows: Vec<ReportRow>,
}

/// Expert-activation and orthogonality statistics per model, plus the raw
/// utterance embeddings as (row key, records) pairs.
pub fn report_tables(
    stamp: &Stamp,
    triplets: &[Triplet],
    models: &[Trained],
) -> Result<(ReportTables, Vec<(RowKey, Vec<EmbeddingRecord>)>)> {
    let mut rows = Vec::new();
    let mut embeddings = Vec::new();
    for t in models {
        let ortho = orthogonality_report(&t.model, triplets)?;
        rows.push(ReportRow {
            key: RowKey::of(t),
            temperature: t.model.temperature(),
            activation: expert_activation_report(&t.model, triplets)?,
            independent: ortho.independent,
            same_axis: ortho.same_axis,
        });
        embeddings.push((RowKey::of(t), ortho.embeddings));
    }
    Ok((
        ReportTables {
            stamp: stamp.clone(),
            rows,
        },
        embeddings,
    ))
}

pub fn write_embeddings(
    path: &Path,
    stamp: &Stamp,
    embeddings: &[(RowKey, Vec<EmbeddingRecord>)],
) -> Result<()> {
    let mut buf = stamp_header(stamp)?;
    for (key, records) in embeddings {
        for r in records {
            serde_json::to_writer(
                &mut buf,
                &serde_json::json!({ "model": key, "embedding": r }),
            )?;
            buf.write_all(b"\n")?;
        }
    }
    write_output(path, &buf)
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    assert!(n > 0, "median of an empty slice");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stamp: Stamp,
    /// Relative path to SHA-256 of the file contents.
    pub files: BTreeMap<String, String>,
}

/// Hashes every file under `root` except the manifest itself.
pub fn manifest(layout: &Layout, stamp: &Stamp) -> Result<Manifest> {
    fn walk(
        dir: &Path,
        root: &Path,
        skip: &Path,
        out: &mut BTreeMap<String, String>,
    ) -> Result<()> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let path = e.path();
            if path.is_dir() {
                walk(&path, root, skip, out)?;
            } else if path != skip {
                let rel = path
                    .strip_prefix(root)
                    .map_err(|e| Error::Argument(e.to_string()))?;
                out.insert(
                    rel.to_string_lossy().replace('\\', "/"),
                    sha256_hex(&std::fs::read(&path)?),
                );
            }
        }
        Ok(())
    }
    let mut files = BTreeMap::new();
    walk(&layout.root, &layout.root, &layout.manifest(), &mut files)?;
    Ok(Manifest {
        stamp: stamp.clone(),
        files,
    })
}

/// Everything a full run produces, kept in memory for callers that inspect it.
pub struct RunOutputs {
    pub triplets: Vec<Triplet>,
    pub autoencoder: Autoencoder,
    pub models: Vec<Trained>,
    pub accuracy: AccuracyTable,
    pub benchmark: BenchmarkTables,
    pub report: ReportTables,
    pub manifest: Manifest,
}

/// generate, pretrain, train every variant for every seed, evaluate,
/// benchmark and report, writing all outputs under `layout`.
pub fn run_all(cfg: &RunConfig, layout: &Layout) -> Result<RunOutputs> {
    cfg.validate()?;
    let stamp = Stamp::of(cfg)?;
    std::fs::create_dir_all(&layout.root)?;
    write_output(&layout.config(), cfg.to_toml()?.as_bytes())?;

    info!("generating {} contexts", cfg.dataset.contexts);
    let triplets = generate(cfg)?;
    write_dataset_file(&layout.dataset(), &triplets, &stamp)?;
    let triplets = read_dataset(&layout.dataset())?;

    info!("pretraining autoencoder");
    let ae = pretrain(cfg, &triplets)?;
    save_checkpoint(ae.to_checkpoint(), &stamp, &layout.autoencoder())?;

    let mut models = Vec::new();
    for &seed in &cfg.seeds {
        for &variant in &cfg.variants {
            info!("training {} seed {seed}", variant.name());
            let model = train_variant(cfg, &triplets, &ae, variant, seed)?;
            save_checkpoint(model.to_checkpoint(), &stamp, &layout.joint(variant, seed))?;
            models.push(Trained::new(model)?);
        }
    }

    let accuracy = accuracy_table(&stamp, &triplets, &ae, &models)?;
    write_json(&layout.accuracy(), &accuracy)?;
    let benchmark = benchmark_tables(cfg, &stamp, &triplets, &ae, &models, Some(layout))?;
    write_json(&layout.benchmark(), &benchmark)?;
    let (report, embeddings) = report_tables(&stamp, &triplets, &models)?;
    write_json(&layout.report(), &report)?;
    write_embeddings(&layout.embeddings(), &stamp, &embeddings)?;

    let manifest = manifest(layout, &stamp)?;
    write_json(&layout.manifest(), &manifest)?;
    Ok(RunOutputs {
        triplets,
        autoencoder: ae,
        models,
        accuracy,
        benchmark,
        report,
        manifest,
    })
}
