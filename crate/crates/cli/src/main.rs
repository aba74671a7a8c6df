use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shapeedit_cli::bench::{benchmark_cases, Workbench};
use shapeedit_cli::pipeline::{
    self, accuracy_table, benchmark_tables, load_autoencoder, load_joint, read_json, report_tables,
    save_checkpoint, stamp_header, write_dataset_file, write_embeddings, write_json, write_output,
    Layout, Stamp, Trained,
};
use shapeedit_cli::{RunConfig, Variant};
use shapeedit_core::autoencoder::Structure;
use shapeedit_core::metrics::{aggregate, pep, write_pep_report};
use shapeedit_core::shapeworld::{read_dataset, realize_shape, ShapeParams, Triplet};
use shapeedit_core::Error;

#[derive(Parser)]
#[command(
    name = "shapeedit",
    version,
    about = "Language-driven shape editing on a synthetic chair/table world"
)]
struct Cli {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    Generate,
    /// Train the shape autoencoder.
    Pretrain {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train joint-space models for the configured variants and seeds.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        /// Restricts training to these variants.
        #[arg(long = "variant")]
        variants: Vec<String>,
    },
    /// Source/target classification accuracy table.
    Eval {
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Edit one shape and score it.
    Edit {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        utterance: Option<String>,
        /// JSON file with the source shape parameters.
        #[arg(long, conflicts_with = "case")]
        source: Option<PathBuf>,
        /// Index into the benchmark cases; supplies the source and, by
        /// default, the utterance.
        #[arg(long)]
        case: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        edit_seed: u64,
    },
    /// Single-edit, iterative and edit-procedure tables.
    Benchmark {
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Expert activations, orthogonality statistics and embedding export.
    Report {
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
    },
    /// Every stage in order.
    Run,
    /// HTTP editing server.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        autoencoder: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Allowed browser origin; any origin when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Validity(_) | Error::Argument(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(cli: &Cli) -> shapeedit_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.output_dir = Some(cli.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn dataset_at(layout: &Layout, path: &Option<PathBuf>) -> shapeedit_core::Result<Vec<Triplet>> {
    read_dataset(path.as_deref().unwrap_or(&layout.dataset()))
}

/// Explicit checkpoints, or every configured variant and seed in the layout.
fn models(
    cfg: &RunConfig,
    layout: &Layout,
    explicit: &[PathBuf],
) -> shapeedit_core::Result<Vec<Trained>> {
    let paths: Vec<PathBuf> = if explicit.is_empty() {
        cfg.seeds
            .iter()
            .flat_map(|&s| cfg.variants.iter().map(move |&v| layout.joint(v, s)))
            .collect()
    } else {
        explicit.to_vec()
    };
    paths.iter().map(|p| Trained::new(load_joint(p)?)).collect()
}

fn run(cli: Cli) -> shapeedit_core::Result<()> {
    let cfg = load_config(&cli)?;
    let stamp = Stamp::of(&cfg)?;
    let layout = Layout::new(&cli.out);
    write_output(&layout.config(), cfg.to_toml()?.as_bytes())?;
    match cli.command {
        Command::Generate => {
            let triplets = pipeline::generate(&cfg)?;
            write_dataset_file(&layout.dataset(), &triplets, &stamp)?;
            println!(
                "{} triplets -> {}",
                triplets.len(),
                layout.dataset().display()
            );
        }
        Command::Pretrain { dataset } => {
            let triplets = dataset_at(&layout, &dataset)?;
            let ae = pipeline::pretrain(&cfg, &triplets)?;
            save_checkpoint(ae.to_checkpoint(), &stamp, &layout.autoencoder())?;
            println!(
                "autoencoder holdout error {:.3e} -> {}",
                ae.meta.holdout_error.unwrap_or(f64::NAN),
                layout.autoencoder().display()
            );
        }
        Command::Train {
            dataset,
            autoencoder,
            variants,
        } => {
            let triplets = dataset_at(&layout, &dataset)?;
            let ae = load_autoencoder(autoencoder.as_deref().unwrap_or(&layout.autoencoder()))?;
            let variants = if variants.is_empty() {
                cfg.variants.clone()
            } else {
                variants
                    .iter()
                    .map(|v| {
                        Variant::parse(v)
                            .ok_or_else(|| Error::Argument(format!("unknown variant {v:?}")))
                    })
                    .collect::<shapeedit_core::Result<_>>()?
            };
            for &seed in &cfg.seeds {
                for &v in &variants {
                    let model = pipeline::train_variant(&cfg, &triplets, &ae, v, seed)?;
                    let path = layout.joint(v, seed);
                    save_checkpoint(model.to_checkpoint(), &stamp, &path)?;
                    println!(
                        "{} seed {seed}: val accuracy {:.4} (epoch {}) -> {}",
                        v.name(),
                        model.meta.best_val_accuracy,
                        model.meta.best_epoch,
                        path.display()
                    );
                }
            }
        }
        Command::Eval { checkpoints } => {
            let triplets = read_dataset(&layout.dataset())?;
            let ae = load_autoencoder(&layout.autoencoder())?;
            let table = accuracy_table(
                &stamp,
                &triplets,
                &ae,
                &models(&cfg, &layout, &checkpoints)?,
            )?;
            write_json(&layout.accuracy(), &table)?;
            println!(
                "{:<16} {:>6} {:>9} {:>9}  checkpoint",
                "variant", "seed", "val", "test"
            );
            for r in &table.rows {
                println!(
                    "{:<16} {:>6} {:>9.4} {:>9.4}  {}",
                    r.key.variant.name(),
                    r.key.seed,
                    r.val_accuracy,
                    r.test_accuracy,
                    &r.key.checkpoint[..12]
                );
            }
        }
        Command::Edit {
            checkpoint,
            utterance,
            source,
            case,
            steps,
            edit_seed,
        } => {
            edit_command(
                &cfg,
                &stamp,
                &layout,
                &checkpoint,
                utterance,
                source.as_deref(),
                case,
                steps,
                edit_seed,
            )?;
        }
        Command::Benchmark { checkpoints } => {
            let triplets = read_dataset(&layout.dataset())?;
            let ae = load_autoencoder(&layout.autoencoder())?;
            let models = models(&cfg, &layout, &checkpoints)?;
            let tables = benchmark_tables(&cfg, &stamp, &triplets, &ae, &models, Some(&layout))?;
            write_json(&layout.benchmark(), &tables)?;
            println!(
                "{:<16} {:>6} {:>8} {:>9} {:>9}",
                "variant", "seed", "mPEP", "mdv", "validity"
            );
            for r in &tables.edits {
                println!(
                    "{:<16} {:>6} {:>8.4} {:>9.5} {:>9.3}",
                    r.key.variant.name(),
                    r.key.seed,
                    r.mean_pep,
                    r.mean_delta_v,
                    r.validity
                );
            }
            println!(
                "iterative rounds and edit-procedure ablations -> {}",
                layout.benchmark().display()
            );
        }
        Command::Report { checkpoints } => {
            let triplets = read_dataset(&layout.dataset())?;
            let models = models(&cfg, &layout, &checkpoints)?;
            let (report, embeddings) = report_tables(&stamp, &triplets, &models)?;
            write_json(&layout.report(), &report)?;
            write_embeddings(&layout.embeddings(), &stamp, &embeddings)?;
            println!(
                "{:<16} {:>6} {:>14} {:>14}",
                "variant", "seed", "independent", "specialization"
            );
            for r in &report.rows {
                println!(
                    "{:<16} {:>6} {:>14.4} {:>14.4}",
                    r.key.variant.name(),
                    r.key.seed,
                    r.independent.mean_abs_cosine,
                    r.activation.specialization
                );
            }
        }
        Command::Run => {
            let out = pipeline::run_all(&cfg, &layout)?;
            println!(
                "{} files, manifest -> {}",
                out.manifest.files.len(),
                layout.manifest().display()
            );
        }
        Command::Serve {
            port,
            checkpoint,
            autoencoder,
            dataset,
            cors_origin,
        } => {
            let state = shapeedit_server::AppState::load(&shapeedit_server::ServerConfig {
                checkpoint,
                autoencoder,
                dataset,
                edit: cfg.edit.clone(),
                swell: cfg.metrics.swell,
            })?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(shapeedit_server::serve(state, port, cors_origin))?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn edit_command(
    cfg: &RunConfig,
    stamp: &Stamp,
    layout: &Layout,
    checkpoint: &Path,
    utterance: Option<String>,
    source: Option<&Path>,
    case: Option<usize>,
    steps: Option<usize>,
    edit_seed: u64,
) -> shapeedit_core::Result<()> {
    let triplets = read_dataset(&layout.dataset())?;
    let ae = load_autoencoder(&layout.autoencoder())?;
    let model = load_joint(checkpoint)?;
    let (params, case_text): (ShapeParams, Option<String>) = match (source, case) {
        (Some(p), _) => {
            let params: ShapeParams = read_json(p)?;
            params.validate()?;
            (params, None)
        }
        (None, Some(i)) => {
            let cases = benchmark_cases(&triplets, i + 1, cfg.seed)?;
            let t = &triplets[cases[i].triplet];
            (
                t.source.clone(),
                Some(t.utterances[cases[i].utterance].text.clone()),
            )
        }
        (None, None) => return Err(Error::Argument("pass --source or --case".into())),
    };
    let utterance = utterance
        .or(case_text)
        .ok_or_else(|| Error::Argument("pass --utterance with --source".into()))?;
    let bench = Workbench::new(&triplets, &ae, Vec::new(), cfg.metrics.swell)?;
    let editor = bench.editor(&model, &cfg.edit)?;
    let structure = Structure::of(&params);
    let s = ae.encode(&params);
    let trace = editor.edit_with_steps(
        &s,
        structure,
        &utterance,
        edit_seed,
        steps.unwrap_or(cfg.edit.steps),
    )?;

    let mut buf = Vec::new();
    serde_json::to_writer(
        &mut buf,
        &serde_json::json!({ "record": "header", "stamp": stamp, "utterance": utterance, "edit_seed": edit_seed }),
    )?;
    buf.push(b'\n');
    trace.write_jsonl(&mut buf)?;
    let trace_path = layout.root.join("edit").join("trace.jsonl");
    write_output(&trace_path, &buf)?;

    let src = realize_shape(&ae.decode_with(&s, structure))?;
    let entry = pep(
        &src,
        &realize_shape(trace.final_params())?,
        &utterance,
        cfg.metrics.swell,
    );
    let pep_path = layout.root.join("edit").join("pep.jsonl");
    let mut buf = stamp_header(stamp)?;
    match aggregate(std::slice::from_ref(&entry), cfg.metrics.swell) {
        Ok(summary) => write_pep_report(&mut buf, std::slice::from_ref(&entry), &summary)?,
        Err(_) => {
            serde_json::to_writer(
                &mut buf,
                &serde_json::json!({ "record": "edit", "entry": entry }),
            )?;
            buf.push(b'\n');
        }
    }
    write_output(&pep_path, &buf)?;
    println!(
        "{utterance:?}: h {:.4} -> {:.4}, pep {}, trace -> {}",
        trace.steps[0].h,
        trace.last().h,
        entry.score().map_or_else(
            || format!("undefined ({:?})", entry.flag),
            |p| format!("{p:.4}")
        ),
        trace_path.display()
    );
    Ok(())
}
