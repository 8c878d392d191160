//! `mercat` command-line entry point.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use mercat::fileio;
use mercat::index::{build_index, load_index, TransformSpec};
use mercat::pipeline::{
    evaluate_index, run_datagen, run_pipeline, DatagenSpec, ExperimentConfig,
};
use mercat_core::embedding::{EmbeddingStore, NestedDims};
use mercat_core::encoder::{EncoderConfig, EncoderModel, Role};
use mercat_core::eval::{compare_models, sts_evaluate, MetricReport};
use mercat_core::pca::{pca_fit, PcaModel};
use mercat_core::retrieval::{CandidateSource, HybridConfig, RankedCandidate};
use mercat_core::rng::Rng;
use mercat_core::training::{gradient_check, train, TrainingConfig, TrainingPair};

#[derive(Parser)]
#[command(
    name = "mercat",
    version,
    about = "Truncation-robust embedding workbench: train, compress, index, search, evaluate, serve"
)]
struct Cli {
    /// Worker threads for parallel stages (encoding, evaluation).
    #[arg(long, global = true, env = "MERCAT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: items, training pairs, eval logs, STS pairs.
    Datagen {
        /// JSON spec file ({world, n_sessions, n_sts_pairs}); defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an encoder with the in-batch-negatives loss over nested dims.
    Train {
        /// Training pairs (JSONL with query_text/title_text).
        #[arg(long)]
        pairs: PathBuf,
        /// Where to write the trained model.
        #[arg(long)]
        model_out: PathBuf,
        /// Nested dims, leading dim first (e.g. 64,32,16,8).
        #[arg(long, default_value = "64,32,16,8", value_delimiter = ',')]
        dims: Vec<usize>,
        /// Per-level weights; uniform when omitted.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Similarity scale s.
        #[arg(long, default_value_t = 20.0)]
        scale: f64,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 8)]
        epochs: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Feature bucket count for a fresh model.
        #[arg(long, default_value_t = 1 << 18)]
        hash_space: usize,
        /// Continue from an existing model instead of random init.
        #[arg(long)]
        init_model: Option<PathBuf>,
        /// Per-step loss log (JSONL).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Batch-encode item titles into a binary embedding store.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Role prefix to apply: query or passage.
        #[arg(long, default_value = "passage")]
        role: String,
    },
    /// Fit a PCA compression model on stored embeddings.
    PcaFit {
        /// Input embedding store (.memb).
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project a stored embedding set through a PCA model.
    PcaApply {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep raw projections instead of renormalizing.
        #[arg(long)]
        no_renormalize: bool,
    },
    /// Build a lexical+dense index directory from items and a model.
    Index {
        #[arg(long)]
        items: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Truncate-renormalize stored vectors to this dim.
        #[arg(long, conflicts_with = "pca")]
        truncate_dim: Option<usize>,
        /// Project stored vectors through this PCA model.
        #[arg(long)]
        pca: Option<PathBuf>,
    },
    /// Query an index; prints one JSON candidate per line.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Blend lexical and gate-passing dense candidates.
        #[arg(long)]
        hybrid: bool,
        /// Dense similarity gate (strict >).
        #[arg(long, default_value_t = 0.90)]
        tau: f64,
        /// Lexical hit count below which a SERP counts as low-hit.
        #[arg(long, default_value_t = 10)]
        low_hit_threshold: usize,
        /// Lexical-only search (no dense scan).
        #[arg(long, conflicts_with = "hybrid")]
        lexical: bool,
    },
    /// Replay graded eval logs through an index and report nDCG/P/R@k.
    EvalLogs {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Cutoffs, comma separated.
        #[arg(long, default_value = "5,10,20,50,100", value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        report: PathBuf,
        /// Encode queries with this model instead of the bundled one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Sentence-pair correlation under truncation.
    EvalSts {
        #[arg(long)]
        model: PathBuf,
        /// TSV: sentence_a <tab> sentence_b <tab> gold.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value = "64,32,16,8", value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Delta report between two eval-logs outputs.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify analytic gradients against central finite differences.
    GradientCheck {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "64,32,16,8", value_delimiter = ',')]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 1 << 14)]
        hash_space: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 20.0)]
        scale: f64,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Check against real pairs instead of synthetic ones.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Start the HTTP inference/search service.
    Serve {
        #[arg(long)]
        routing: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Run the full experiment: datagen, training, PCA, indexing, evaluation, comparison.
    Pipeline {
        /// Experiment config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory (default: <out_dir>/run-<unix time>).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_role(s: &str) -> Result<Role> {
    match s.to_ascii_lowercase().as_str() {
        "query" => Ok(Role::Query),
        "passage" => Ok(Role::Passage),
        other => anyhow::bail!("role must be query or passage, got {other}"),
    }
}

/// Clustered topic/qualifier pairs for self-contained gradient checks.
fn synthetic_check_pairs(n: usize, seed: u64) -> Vec<TrainingPair> {
    let mut rng = Rng::seed_from(seed);
    let topics = [
        "violin", "camera", "jacket", "figure", "keyboard", "wallet", "lamp", "sneaker",
    ];
    let qualifiers = ["mini", "pro", "used", "new", "rare"];
    (0..n)
        .map(|_| {
            let topic = rng.pick(&topics);
            let q = rng.pick(&qualifiers);
            TrainingPair::new(format!("{topic} {q}"), format!("{q} {topic} item"))
                .expect("non-empty")
        })
        .collect()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }

    match cli.command {
        Command::Datagen { spec, out } => {
            let spec: DatagenSpec = match spec {
                Some(path) => fileio::read_json(&path)?,
                None => DatagenSpec::default(),
            };
            spec.world.validate()?;
            run_datagen(&spec, &out)?;
            eprintln!("wrote items/pairs/eval/sts/truth under {}", out.display());
        }

        Command::Train {
            pairs,
            model_out,
            dims,
            weights,
            scale,
            batch,
            epochs,
            lr,
            seed,
            hash_space,
            init_model,
            log,
        } => {
            let pairs = fileio::read_pairs(&pairs)?;
            let nested = match weights {
                Some(w) => NestedDims::new(dims.clone(), w)?,
                None => NestedDims::uniform(dims.clone())?,
            };
            let model = match init_model {
                Some(path) => EncoderModel::read(&path)?,
                None => EncoderModel::random_init(EncoderConfig {
                    hash_space,
                    full_dim: nested.full_dim(),
                    seed,
                    ..EncoderConfig::default()
                })?,
            };
            let config = TrainingConfig {
                batch_size: batch,
                epochs,
                scale,
                learning_rate: lr,
                seed,
                ..TrainingConfig::with_nested(nested)
            };
            let result = train(&pairs, &model, &config)?;
            result.model.write(&model_out)?;
            if let Some(log_path) = log {
                fileio::write_jsonl(&log_path, &result.log)?;
            }
            let last = result.log.last().expect("at least one step");
            eprintln!(
                "trained {} steps; final loss {:.5}; model at {}",
                result.log.len(),
                last.total,
                model_out.display()
            );
        }

        Command::Encode {
            model,
            items,
            out,
            role,
        } => {
            let role = parse_role(&role)?;
            let model = EncoderModel::read(&model)?;
            let items = fileio::read_items(&items)?;
            let texts: Vec<(String, Role)> =
                items.iter().map(|i| (i.title.clone(), role)).collect();
            let embeddings = model.encode_batch(&texts);
            let mut store = EmbeddingStore::new(model.full_dim())?;
            for (item, emb) in items.iter().zip(&embeddings) {
                store.push(&item.item_id, emb)?;
            }
            store.write(&out)?;
            eprintln!("encoded {} items into {}", store.len(), out.display());
        }

        Command::PcaFit {
            embeddings,
            dim,
            out,
        } => {
            let store = EmbeddingStore::read(&embeddings)?;
            let data: Vec<_> = (0..store.len()).map(|i| store.embedding(i)).collect();
            let model = pca_fit(&data, dim)?;
            model.write(&out)?;
            eprintln!(
                "fit {} -> {} dims; explained variance {:?}",
                model.input_dim(),
                model.target_dim(),
                model.explained_variance()
            );
        }

        Command::PcaApply {
            model,
            embeddings,
            out,
            no_renormalize,
        } => {
            let model = PcaModel::read(&model)?;
            let store = EmbeddingStore::read(&embeddings)?;
            let mut projected = EmbeddingStore::new(model.target_dim())?;
            for i in 0..store.len() {
                let e = model.transform(&store.embedding(i), !no_renormalize)?;
                projected.push(store.id(i), &e)?;
            }
            projected.write(&out)?;
            eprintln!("projected {} vectors into {}", projected.len(), out.display());
        }

        Command::Index {
            items,
            model,
            out,
            truncate_dim,
            pca,
        } => {
            let items = fileio::read_items(&items)?;
            let model = EncoderModel::read(&model)?;
            let (transform, pca_model) = match (truncate_dim, pca) {
                (Some(dim), None) => (TransformSpec::Truncate { dim }, None),
                (None, Some(path)) => (
                    TransformSpec::Pca {
                        file: "pca.mpca".to_string(),
                    },
                    Some(PcaModel::read(&path)?),
                ),
                (None, None) => (TransformSpec::None, None),
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            build_index(&items, &model, &transform, pca_model.as_ref(), &out)?;
            eprintln!("indexed {} items under {}", items.len(), out.display());
        }

        Command::Search {
            index,
            query,
            k,
            hybrid,
            tau,
            low_hit_threshold,
            lexical,
        } => {
            let bundle = load_index(&index)?;
            let (candidates, diagnostics) = if hybrid {
                let config = HybridConfig {
                    tau,
                    lexical_k: k,
                    dense_k: k,
                    low_hit_threshold,
                };
                let q = bundle.query_embedding(&query)?;
                let (c, d) = mercat_core::retrieval::hybrid_search(
                    &bundle.lexical,
                    &bundle.dense,
                    &query,
                    &q,
                    &config,
                )?;
                (c, Some(d))
            } else if lexical {
                let hits = bundle.lexical.search(&query, k);
                let c = hits
                    .into_iter()
                    .map(|(item_id, score)| RankedCandidate {
                        item_id,
                        lexical_score: Some(score),
                        dense_score: None,
                        source: CandidateSource::Lexical,
                    })
                    .collect();
                (c, None)
            } else {
                let q = bundle.query_embedding(&query)?;
                let hits = bundle.dense.search(&q, k)?;
                let c = hits
                    .into_iter()
                    .map(|(item_id, score)| RankedCandidate {
                        item_id,
                        lexical_score: None,
                        dense_score: Some(score),
                        source: CandidateSource::Dense,
                    })
                    .collect();
                (c, None)
            };
            for (rank, c) in candidates.iter().enumerate() {
                let line = serde_json::json!({
                    "rank": rank + 1,
                    "item_id": c.item_id,
                    "lexical_score": c.lexical_score,
                    "dense_score": c.dense_score,
                    "source": c.source,
                });
                println!("{line}");
            }
            if let Some(d) = diagnostics {
                eprintln!("{}", serde_json::to_string(&d)?);
            }
        }

        Command::EvalLogs {
            index,
            queries,
            k,
            report,
            model,
        } => {
            let mut bundle = load_index(&index)?;
            if let Some(path) = model {
                bundle.model = EncoderModel::read(&path)?;
            }
            let queries = fileio::read_eval_queries(&queries)?;
            let metrics = evaluate_index(&bundle, &queries, &k)?;
            fileio::write_json_pretty(&report, &metrics)?;
            print_metric_summary(&metrics);
        }

        Command::EvalSts {
            model,
            pairs,
            dims,
            report,
        } => {
            let model = EncoderModel::read(&model)?;
            let pairs = fileio::read_sts_tsv(&pairs)?;
            let results = sts_evaluate(&pairs, &model, &dims)?;
            for r in &results {
                println!(
                    "dim {:>4}  pearson {:+.4}  spearman {:+.4}",
                    r.dim, r.pearson, r.spearman
                );
            }
            if let Some(path) = report {
                fileio::write_json_pretty(&path, &results)?;
            }
        }

        Command::Compare {
            baseline,
            candidate,
            out,
        } => {
            let a: MetricReport = fileio::read_json(&baseline)?;
            let b: MetricReport = fileio::read_json(&candidate)?;
            let delta = compare_models(&a, &b)?;
            print!("{}", delta.render_text());
            if let Some(path) = out {
                fileio::write_json_pretty(&path, &delta)?;
            }
        }

        Command::GradientCheck {
            seed,
            dims,
            hash_space,
            batch,
            scale,
            h,
            tolerance,
            pairs,
        } => {
            let nested = NestedDims::uniform(dims.clone())?;
            let model = EncoderModel::random_init(EncoderConfig {
                hash_space,
                full_dim: nested.full_dim(),
                seed,
                ..EncoderConfig::default()
            })?;
            let check_pairs = match pairs {
                Some(path) => {
                    let all = fileio::read_pairs(&path)?;
                    anyhow::ensure!(all.len() >= batch, "need at least {batch} pairs");
                    all[..batch].to_vec()
                }
                None => synthetic_check_pairs(batch, seed ^ 0x9e37),
            };
            let config = TrainingConfig {
                batch_size: batch.max(2),
                scale,
                seed,
                ..TrainingConfig::with_nested(nested)
            };
            let report = gradient_check(&model, &check_pairs, &config, h, tolerance)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            anyhow::ensure!(
                report.passed,
                "gradient check failed: max relative error {}",
                report.max_rel_error
            );
        }

        Command::Serve { routing, port } => {
            let config = mercat_server::RoutingConfig::load(&routing)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let addr = std::net::SocketAddr::from(([0, 0, 0, 0], port));
                let handle = mercat_server::start(config, addr).await?;
                eprintln!("serving on {}", handle.addr);
                tokio::signal::ctrl_c().await.ok();
                handle.shutdown().await;
                Ok::<_, anyhow::Error>(())
            })?;
        }

        Command::Pipeline {
            config,
            out_dir,
            seed,
        } => {
            let mut config: ExperimentConfig = match config {
                Some(path) => fileio::read_json(&path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let run_dir = out_dir.unwrap_or_else(|| {
                let ts = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0);
                config.out_dir.join(format!("run-{ts}"))
            });
            let artifacts = run_pipeline(&config, &run_dir)?;
            eprintln!("reports under {}", artifacts.run_dir.join("reports").display());
        }
    }
    Ok(())
}

fn print_metric_summary(report: &MetricReport) {
    println!(
        "{:>6} {:>10} {:>12} {:>11} {:>10}",
        "k", "ndcg", "ndcg_long", "precision", "recall"
    );
    for (k, agg) in &report.per_k {
        println!(
            "{k:>6} {:>10.5} {:>12.5} {:>11.5} {:>10.5}",
            agg.ndcg, agg.ndcg_long, agg.precision, agg.recall
        );
    }
    println!(
        "queries {} (long {}), skipped {}",
        report.query_count,
        report.long_count,
        report.skipped.len()
    );
}
