//! End-to-end experiment pipeline.
//!
//! One seeded run: synthesize a marketplace world, train the nested-objective
//! encoder and an un-nested baseline, fit the PCA compression arm, build one
//! index per arm, replay the eval log through each, check STS retention
//! under truncation, and emit comparison reports. Stages run sequentially;
//! a failure halts with the stage name. Reruns with the same config write
//! byte-identical metric JSON.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

use mercat_core::embedding::{Embedding, NestedDims};
use mercat_core::encoder::{EncoderConfig, EncoderModel, Role};
use mercat_core::datagen::{generate_sessions, generate_sts, generate_world, sts_tsv, WorldSpec};
use mercat_core::eval::{replay_evaluate, sts_evaluate, EvalQuery, MetricReport, StsDimResult};
use mercat_core::error::Error as CoreError;
use mercat_core::pca::{pca_fit, PcaModel};
use mercat_core::retrieval::HybridConfig;
use mercat_core::rng::derive_seed;
use mercat_core::training::{train, TrainingConfig};

use crate::fileio;
use crate::index::{build_index, load_index, IndexBundle, TransformSpec};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainingSettings {
    pub batch_size: usize,
    pub epochs: usize,
    pub scale: f64,
    pub learning_rate: f64,
    pub dims: Vec<usize>,
    /// Per-level weights; uniform 1.0 when omitted.
    pub weights: Option<Vec<f64>>,
    pub shuffle: bool,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings {
            batch_size: 64,
            epochs: 20,
            scale: 20.0,
            learning_rate: 3e-3,
            dims: vec![64, 32, 16, 8],
            weights: None,
            shuffle: true,
        }
    }
}

impl TrainingSettings {
    pub fn nested(&self) -> Result<NestedDims> {
        let nested = match &self.weights {
            Some(w) => NestedDims::new(self.dims.clone(), w.clone())?,
            None => NestedDims::uniform(self.dims.clone())?,
        };
        Ok(nested)
    }

    pub fn to_config(&self, nested: NestedDims, seed: u64) -> TrainingConfig {
        TrainingConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            scale: self.scale,
            learning_rate: self.learning_rate,
            seed,
            shuffle: self.shuffle,
            ..TrainingConfig::with_nested(nested)
        }
    }
}

/// Input for the standalone datagen subcommand.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DatagenSpec {
    pub world: WorldSpec,
    pub n_sessions: usize,
    pub n_sts_pairs: usize,
}

impl Default for DatagenSpec {
    fn default() -> Self {
        DatagenSpec {
            world: WorldSpec::default(),
            n_sessions: 12_000,
            n_sts_pairs: 1_000,
        }
    }
}

/// Generate the full artifact set under `out_dir`.
pub fn run_datagen(spec: &DatagenSpec, out_dir: &Path) -> Result<()> {
    let world = generate_world(&spec.world)?;
    let sessions = generate_sessions(&world, spec.n_sessions)?;
    let sts = generate_sts(&world, spec.n_sts_pairs)?;
    fileio::write_string(&out_dir.join("items.jsonl"), &world.items_jsonl())?;
    fileio::write_string(&out_dir.join("truth.json"), &world.truth_json()?)?;
    fileio::write_string(&out_dir.join("pairs.jsonl"), &sessions.pairs_jsonl())?;
    fileio::write_string(&out_dir.join("eval.jsonl"), &sessions.eval_jsonl())?;
    fileio::write_string(&out_dir.join("sts.tsv"), &sts_tsv(&sts))?;
    Ok(())
}

/// Everything one experiment run needs. All stage seeds derive from `seed`;
/// the seeds inside `world` and `encoder` are overridden.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub world: WorldSpec,
    pub n_sessions: usize,
    pub n_sts_pairs: usize,
    pub encoder: EncoderConfig,
    pub training: TrainingSettings,
    pub hybrid: HybridConfig,
    pub ks: Vec<usize>,
    pub sts_dims: Vec<usize>,
    /// Truncation arm dimension for the nested-trained model.
    pub target_dim: usize,
    /// PCA arm dimension for the baseline model.
    pub pca_dim: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            out_dir: PathBuf::from("runs"),
            world: WorldSpec::default(),
            n_sessions: 12_000,
            n_sts_pairs: 1_000,
            encoder: EncoderConfig {
                // Desk-scale bucket count; the library default (2^18) is
                // sized for larger corpora.
                hash_space: 1 << 16,
                ..EncoderConfig::default()
            },
            training: TrainingSettings::default(),
            hybrid: HybridConfig::default(),
            ks: vec![5, 10, 20, 50, 100],
            sts_dims: vec![64, 32, 16, 8],
            target_dim: 8,
            pca_dim: 8,
        }
    }
}

#[derive(Debug)]
pub struct PipelineArtifacts {
    pub run_dir: PathBuf,
    pub model_paths: BTreeMap<String, PathBuf>,
    pub index_dirs: BTreeMap<String, PathBuf>,
    pub arm_reports: BTreeMap<String, MetricReport>,
    pub sts_reports: BTreeMap<String, Vec<StsDimResult>>,
    pub eval_queries_path: PathBuf,
    pub items_path: PathBuf,
}

fn stage<T>(name: &str, body: impl FnOnce() -> Result<T>) -> Result<T> {
    let started = Instant::now();
    eprintln!("[pipeline] {name} ...");
    let out = body().with_context(|| format!("stage {name} failed"))?;
    eprintln!("[pipeline] {name} done in {:.2}s", started.elapsed().as_secs_f64());
    Ok(out)
}

/// Score one eval query set against an index bundle: queries are encoded
/// into index space once, candidates score by stored-row cosine.
pub fn evaluate_index(
    bundle: &IndexBundle,
    queries: &[EvalQuery],
    ks: &[usize],
) -> Result<MetricReport> {
    let mut unique: Vec<&str> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for q in queries {
        if seen.insert(q.text.as_str()) {
            unique.push(q.text.as_str());
        }
    }
    let embedded = bundle.query_embeddings(&unique)?;
    let by_text: HashMap<&str, &Embedding> =
        unique.iter().copied().zip(embedded.iter()).collect();

    let scorer = |text: &str, item_id: &str| -> mercat_core::Result<f64> {
        let q = by_text
            .get(text)
            .expect("every query text was embedded up front");
        let ordinal = bundle.item_ordinal(item_id).ok_or_else(|| CoreError::Unscorable {
            query_id: text.to_string(),
            item_id: item_id.to_string(),
            reason: "item not in index".to_string(),
        })?;
        Ok(bundle.stored_cosine(q, ordinal))
    };
    Ok(replay_evaluate(queries, scorer, ks)?)
}

pub fn run_pipeline(config: &ExperimentConfig, run_dir: &Path) -> Result<PipelineArtifacts> {
    std::fs::create_dir_all(run_dir)
        .with_context(|| format!("creating {}", run_dir.display()))?;
    let data_dir = run_dir.join("data");
    let models_dir = run_dir.join("models");
    let idx_dir = run_dir.join("idx");
    let reports_dir = run_dir.join("reports");
    let logs_dir = run_dir.join("logs");

    // 1. Synthesize the corpus and logs.
    let (items_path, pairs_path, eval_path, sts_path) = stage("datagen", || {
        let mut world_spec = config.world.clone();
        world_spec.seed = derive_seed(config.seed, "world");
        let world = generate_world(&world_spec)?;
        let sessions = generate_sessions(&world, config.n_sessions)?;
        let sts = generate_sts(&world, config.n_sts_pairs)?;

        let items_path = data_dir.join("items.jsonl");
        fileio::write_string(&items_path, &world.items_jsonl())?;
        fileio::write_string(&data_dir.join("truth.json"), &world.truth_json()?)?;
        let pairs_path = data_dir.join("pairs.jsonl");
        fileio::write_string(&pairs_path, &sessions.pairs_jsonl())?;
        let eval_path = data_dir.join("eval.jsonl");
        fileio::write_string(&eval_path, &sessions.eval_jsonl())?;
        let sts_path = data_dir.join("sts.tsv");
        fileio::write_string(&sts_path, &sts_tsv(&sts))?;
        Ok((items_path, pairs_path, eval_path, sts_path))
    })?;

    // Later stages consume the emitted files, same as the standalone
    // subcommands would.
    let items = fileio::read_items(&items_path)?;
    let pairs = fileio::read_pairs(&pairs_path)?;
    let eval_queries = fileio::read_eval_queries(&eval_path)?;
    let sts_pairs = fileio::read_sts_tsv(&sts_path)?;

    // 2. Random-init encoder (also an evaluation arm of its own).
    let untrained = stage("init-encoder", || {
        let enc_cfg = EncoderConfig {
            seed: derive_seed(config.seed, "encoder-init"),
            ..config.encoder.clone()
        };
        let model = EncoderModel::random_init(enc_cfg)?;
        std::fs::create_dir_all(&models_dir)?;
        model.write(&models_dir.join("untrained.menc"))?;
        Ok(model)
    })?;

    // 3. Nested-objective training.
    let mrl_model = stage("train-mrl", || {
        let nested = config.training.nested()?;
        let train_cfg = config
            .training
            .to_config(nested, derive_seed(config.seed, "train-mrl"));
        let result = train(&pairs, &untrained, &train_cfg)?;
        result.model.write(&models_dir.join("mrl.menc"))?;
        fileio::write_jsonl(&logs_dir.join("train_mrl.jsonl"), &result.log)?;
        Ok(result.model)
    })?;

    // 4. Baseline: same contrastive loss at full dimension only.
    let mnr_model = stage("train-mnr", || {
        let nested = NestedDims::uniform(vec![config.encoder.full_dim])?;
        let train_cfg = config
            .training
            .to_config(nested, derive_seed(config.seed, "train-mnr"));
        let result = train(&pairs, &untrained, &train_cfg)?;
        result.model.write(&models_dir.join("mnr.menc"))?;
        fileio::write_jsonl(&logs_dir.join("train_mnr.jsonl"), &result.log)?;
        Ok(result.model)
    })?;

    // 5. PCA on the baseline model's item embeddings (items only; queries
    // arrive online).
    let pca = stage("pca-fit", || {
        let texts: Vec<(String, Role)> = items
            .iter()
            .map(|i| (i.title.clone(), Role::Passage))
            .collect();
        let corpus = mnr_model.encode_batch(&texts);
        let pca = pca_fit(&corpus, config.pca_dim)?;
        pca.write(&models_dir.join("pca.mpca"))?;
        Ok(pca)
    })?;

    // 6. One index per arm.
    let arms: Vec<(String, &EncoderModel, TransformSpec, Option<&PcaModel>)> = vec![
        ("untrained_full".into(), &untrained, TransformSpec::None, None),
        ("mnr_full".into(), &mnr_model, TransformSpec::None, None),
        ("mrl_full".into(), &mrl_model, TransformSpec::None, None),
        (
            format!("mrl_trunc{}", config.target_dim),
            &mrl_model,
            TransformSpec::Truncate {
                dim: config.target_dim,
            },
            None,
        ),
        (
            format!("pca{}", config.pca_dim),
            &mnr_model,
            TransformSpec::Pca {
                file: "pca.mpca".into(),
            },
            Some(&pca),
        ),
    ];
    let mut index_dirs = BTreeMap::new();
    stage("index", || {
        for (name, model, transform, pca) in &arms {
            let dir = idx_dir.join(name);
            build_index(&items, model, transform, *pca, &dir)
                .with_context(|| format!("arm {name}"))?;
            index_dirs.insert(name.clone(), dir);
        }
        Ok(())
    })?;

    // 7. Log replay per arm.
    let mut arm_reports = BTreeMap::new();
    stage("eval-logs", || {
        for (name, dir) in &index_dirs {
            let bundle = load_index(dir)?;
            let report = evaluate_index(&bundle, &eval_queries, &config.ks)
                .with_context(|| format!("arm {name}"))?;
            fileio::write_json_pretty(&reports_dir.join(format!("eval_{name}.json")), &report)?;
            arm_reports.insert(name.clone(), report);
        }
        Ok(())
    })?;

    // 8. STS retention under truncation.
    let mut sts_reports = BTreeMap::new();
    stage("eval-sts", || {
        for (name, model) in [("mrl", &mrl_model), ("mnr", &mnr_model)] {
            let results = sts_evaluate(&sts_pairs, model, &config.sts_dims)?;
            fileio::write_json_pretty(&reports_dir.join(format!("sts_{name}.json")), &results)?;
            sts_reports.insert(name.to_string(), results);
        }
        Ok(())
    })?;

    // 9. Headline comparisons.
    stage("compare", || {
        use mercat_core::eval::compare_models;
        let trunc_arm = format!("mrl_trunc{}", config.target_dim);
        let pca_arm = format!("pca{}", config.pca_dim);
        let delta = compare_models(&arm_reports[&pca_arm], &arm_reports[&trunc_arm])?;
        fileio::write_json_pretty(
            &reports_dir.join(format!("compare_{trunc_arm}_vs_{pca_arm}.json")),
            &delta,
        )?;
        fileio::write_string(
            &reports_dir.join(format!("compare_{trunc_arm}_vs_{pca_arm}.txt")),
            &delta.render_text(),
        )?;

        let delta = compare_models(&arm_reports["untrained_full"], &arm_reports["mrl_full"])?;
        fileio::write_json_pretty(
            &reports_dir.join("compare_trained_vs_untrained.json"),
            &delta,
        )?;
        fileio::write_string(
            &reports_dir.join("compare_trained_vs_untrained.txt"),
            &delta.render_text(),
        )?;
        Ok(())
    })?;

    // 10. One-table summary: a row per (arm, dim).
    stage("summary", || {
        #[derive(serde::Serialize)]
        struct SummaryRow {
            arm: String,
            dim: usize,
            ndcg: f64,
            ndcg_long: f64,
            precision: f64,
            recall: f64,
        }
        let report_k = *config.ks.iter().max().expect("ks validated non-empty");
        let mut rows = Vec::new();
        for (name, report) in &arm_reports {
            let dim = if let Some(d) = name.strip_prefix("mrl_trunc") {
                d.parse().unwrap_or(config.encoder.full_dim)
            } else if let Some(d) = name.strip_prefix("pca") {
                d.parse().unwrap_or(config.encoder.full_dim)
            } else {
                config.encoder.full_dim
            };
            let agg = &report.per_k[&report_k];
            rows.push(SummaryRow {
                arm: name.clone(),
                dim,
                ndcg: agg.ndcg,
                ndcg_long: agg.ndcg_long,
                precision: agg.precision,
                recall: agg.recall,
            });
        }
        fileio::write_json_pretty(
            &reports_dir.join("summary.json"),
            &serde_json::json!({ "report_k": report_k, "rows": rows }),
        )?;
        Ok(())
    })?;

    let model_paths: BTreeMap<String, PathBuf> = [
        ("untrained".to_string(), models_dir.join("untrained.menc")),
        ("mrl".to_string(), models_dir.join("mrl.menc")),
        ("mnr".to_string(), models_dir.join("mnr.menc")),
    ]
    .into();

    Ok(PipelineArtifacts {
        run_dir: run_dir.to_path_buf(),
        model_paths,
        index_dirs,
        arm_reports,
        sts_reports,
        eval_queries_path: eval_path,
        items_path,
    })
}
