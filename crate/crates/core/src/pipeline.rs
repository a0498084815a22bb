//! End-to-end stages driven by one TOML config. Stages talk only through
//! files under the configured paths and work directory.
//!
//! Work directory layout:
//!
//! ```text
//! dataset.tsv  stats.json  features.tsv  features.layout.json
//! model-{nfcm,lf,hf}.json  train-{nfcm,lf,hf}.json
//! runs/{nfcm,lf,hf,fi,aps,aes,distsup}.tsv
//! report.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::enumerate::EnumConfig;
use crate::error::{Error, Result};
use crate::eval::{build_report, distsup_run, Baseline, BaselineScorer, Judgments, Report, Run};
use crate::fact::{relationships, Fact, Relationship};
use crate::features::{feature_row, layout_to_json, read_feature_table, read_layout, FeatureExtractor, RelVocab};
use crate::kg::{load_graph, KnowledgeGraph};
use crate::ranker::{self, FeatureLookup, FeatureMode, RankerConfig, RankerModel};
use crate::supervision::{
    build_dataset, dataset_to_tsv, group_by_query, read_dataset, Corpus, DatasetConfig, DatasetStats, QueryGroup,
    ResolvedCorpus, Split,
};
use crate::synth::{generate_synthetic_world, SynthConfig, WorldFiles, WorldSummary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub triples: PathBuf,
    pub entities: PathBuf,
    pub corpus: PathBuf,
    /// Graded ground truth; evaluation falls back to test-split labels without it.
    pub judgments: Option<PathBuf>,
    pub work_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            triples: "data/triples.tsv".into(),
            entities: "data/entities.tsv".into(),
            corpus: "data/corpus.jsonl".into(),
            judgments: None,
            work_dir: "work".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub max_queries_per_relationship: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection { max_queries_per_relationship: DatasetConfig::default().max_queries_per_relationship }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// `small` or `tiny`.
    pub size: String,
    pub drop_rate: Option<f64>,
    pub noise_rate: Option<f64>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { size: "small".into(), drop_rate: None, noise_rate: None }
    }
}

#[derive(Default, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Query relationships for the dataset; empty means every relationship.
    pub relationships: Vec<String>,
    pub paths: PathsConfig,
    pub enumeration: EnumConfig,
    pub dataset: DatasetSection,
    /// The seed here is ignored in favour of the root seed.
    pub ranker: RankerConfig,
    pub synth: SynthSection,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parse a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.triples);
        fix(&mut self.paths.entities);
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.work_dir);
        if let Some(j) = self.paths.judgments.as_mut() {
            fix(j);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn work(&self, name: &str) -> PathBuf {
        self.paths.work_dir.join(name)
    }

    pub fn ranker_config(&self) -> RankerConfig {
        RankerConfig { seed: self.seed, max_paths_per_pair: self.enumeration.max_paths_per_pair, ..self.ranker.clone() }
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            max_queries_per_relationship: self.dataset.max_queries_per_relationship,
            seed: self.seed,
            enumeration: self.enumeration.clone(),
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let mut cfg = SynthConfig::preset(&self.synth.size, self.seed)?;
        if let Some(d) = self.synth.drop_rate {
            cfg.drop_rate = d;
        }
        if let Some(n) = self.synth.noise_rate {
            cfg.noise_rate = n;
        }
        Ok(cfg)
    }

    pub fn world_files(&self) -> WorldFiles {
        WorldFiles {
            triples: self.paths.triples.clone(),
            entities: self.paths.entities.clone(),
            corpus: self.paths.corpus.clone(),
            judgments: self.paths.judgments.clone().unwrap_or_else(|| self.work("judgments.tsv")),
            summary: self.work("world.json"),
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} not found at {} (run the earlier stage first)", path.display())))
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<(KnowledgeGraph, Corpus)> {
    let g = load_graph(&cfg.paths.triples, &cfg.paths.entities)?;
    let corpus = Corpus::load(&cfg.paths.corpus)?;
    Ok((g, corpus))
}

pub fn load_graph_only(cfg: &PipelineConfig) -> Result<KnowledgeGraph> {
    load_graph(&cfg.paths.triples, &cfg.paths.entities)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub entities: usize,
    pub predicates: usize,
    pub triples: usize,
    pub types: usize,
    pub relationships: usize,
    pub documents: usize,
    pub unknown_sources: usize,
    pub unknown_mentions: usize,
}

pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<IngestSummary> {
    let (g, corpus) = load_inputs(cfg)?;
    let resolved = ResolvedCorpus::resolve(&g, &corpus);
    if resolved.unknown_sources + resolved.unknown_mentions > 0 {
        log::warn!(
            "corpus refers to unknown entities: {} document sources, {} mentions",
            resolved.unknown_sources,
            resolved.unknown_mentions
        );
    }
    Ok(IngestSummary {
        entities: g.num_entities(),
        predicates: g.num_predicates(),
        triples: g.num_triples(),
        types: g.num_types(),
        relationships: relationships(&g).len(),
        documents: corpus.documents.len(),
        unknown_sources: resolved.unknown_sources,
        unknown_mentions: resolved.unknown_mentions,
    })
}

fn selected_relationships(g: &KnowledgeGraph, cfg: &PipelineConfig) -> Result<Vec<Relationship>> {
    if cfg.relationships.is_empty() {
        return Ok(relationships(g));
    }
    cfg.relationships.iter().map(|l| Relationship::parse(g, l)).collect()
}

/// Label the dataset, then extract features with the vocabulary of the
/// training queries.
pub fn cmd_build_dataset(cfg: &PipelineConfig) -> Result<DatasetStats> {
    let (g, corpus) = load_inputs(cfg)?;
    let resolved = ResolvedCorpus::resolve(&g, &corpus);
    let rels = selected_relationships(&g, cfg)?;
    let dataset = build_dataset(&g, &resolved, &rels, &cfg.dataset_config())?;
    if dataset.instances.is_empty() {
        return Err(Error::NoEligibleQueries);
    }
    let groups = group_by_query(&dataset.instances);
    let vocab = RelVocab::fit(&g, groups.iter().filter(|q| q.split == Split::Train).map(|q| &q.query));
    let fx = FeatureExtractor::new(&g, vocab)?;
    let rows: Vec<String> = groups
        .par_iter()
        .map(|grp| {
            let ctx = fx.query_context(&grp.query);
            let q = grp.query.serialize(&g);
            grp.items
                .iter()
                .map(|(c, _)| feature_row(&q, &c.serialize(&g), &fx.extract(&ctx, c)))
                .collect::<String>()
        })
        .collect();

    write(&cfg.work("dataset.tsv"), &dataset_to_tsv(&g, &dataset.instances))?;
    write(&cfg.work("stats.json"), &to_json(&dataset.stats)?)?;
    write(&cfg.work("features.tsv"), &rows.concat())?;
    write(&cfg.work("features.layout.json"), &layout_to_json(fx.layout()))?;
    Ok(dataset.stats)
}

fn mode_tag(mode: FeatureMode) -> String {
    mode.as_str().to_ascii_lowercase()
}

pub fn model_path(cfg: &PipelineConfig, mode: FeatureMode) -> PathBuf {
    cfg.work(&format!("model-{}.json", mode_tag(mode)))
}

fn load_groups(cfg: &PipelineConfig, g: &KnowledgeGraph) -> Result<Vec<QueryGroup>> {
    let path = cfg.work("dataset.tsv");
    require(&path, "dataset")?;
    Ok(group_by_query(&read_dataset(g, &path)?))
}

fn load_features(cfg: &PipelineConfig, g: &KnowledgeGraph) -> Result<FeatureLookup> {
    let (table_path, layout_path) = (cfg.work("features.tsv"), cfg.work("features.layout.json"));
    require(&table_path, "feature file")?;
    require(&layout_path, "feature layout")?;
    let layout = read_layout(&layout_path)?;
    let table = read_feature_table(&table_path, &layout)?;
    FeatureLookup::from_table(g, layout, table)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: FeatureMode,
    pub checkpoint: PathBuf,
    pub best_epoch: usize,
    pub best_validation_ndcg5: Option<f64>,
    pub parameters: usize,
}

pub fn cmd_train(cfg: &PipelineConfig, mode: FeatureMode) -> Result<TrainSummary> {
    let g = load_graph_only(cfg)?;
    let groups = load_groups(cfg, &g)?;
    let features = load_features(cfg, &g)?;
    let rcfg = RankerConfig { feature_mode: mode, ..cfg.ranker_config() };
    let (model, log) = ranker::train(&g, &groups, &features, &rcfg)?;
    let checkpoint = model_path(cfg, mode);
    write(&checkpoint, &model.to_json())?;
    write(&cfg.work(&format!("train-{}.json", mode_tag(mode))), &to_json(&log)?)?;
    let best = log.epochs.iter().find(|e| e.epoch == log.best_epoch).and_then(|e| e.validation_ndcg5);
    Ok(TrainSummary {
        mode,
        checkpoint,
        best_epoch: log.best_epoch,
        best_validation_ndcg5: best,
        parameters: model.num_parameters(),
    })
}

fn run_path(cfg: &PipelineConfig, method: &str) -> PathBuf {
    cfg.work("runs").join(format!("{method}.tsv"))
}

fn test_groups(groups: &[QueryGroup]) -> Vec<&QueryGroup> {
    groups.iter().filter(|q| q.split == Split::Test).collect()
}

fn candidates(grp: &QueryGroup) -> Vec<Fact> {
    grp.items.iter().map(|(f, _)| *f).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub path: PathBuf,
    pub queries: usize,
    pub rows: usize,
}

fn save_run(cfg: &PipelineConfig, run: &Run) -> Result<RunSummary> {
    let path = run_path(cfg, &run.method);
    write(&path, &run.to_tsv())?;
    Ok(RunSummary {
        method: run.method.clone(),
        path,
        queries: run.queries.len(),
        rows: run.queries.values().map(Vec::len).sum(),
    })
}

/// Rank the test queries' candidates with a trained checkpoint.
pub fn cmd_rank(cfg: &PipelineConfig, mode: FeatureMode) -> Result<RunSummary> {
    let g = load_graph_only(cfg)?;
    let checkpoint = model_path(cfg, mode);
    require(&checkpoint, "checkpoint")?;
    let model = RankerModel::load(&checkpoint)?;
    let groups = load_groups(cfg, &g)?;
    let features = load_features(cfg, &g)?;
    if features.layout().length != model.feature_len && model.mode().uses_handcrafted() {
        return Err(Error::DimensionMismatch("feature layout differs from the checkpoint's".into()));
    }
    let tests = test_groups(&groups);
    let ranked: Vec<Vec<(Fact, f64)>> = tests
        .par_iter()
        .map(|grp| ranker::rank(&model, &g, &grp.query, &candidates(grp), &features))
        .collect::<Result<_>>()?;
    let mut run = Run::new(mode_tag(mode));
    for (grp, list) in tests.iter().zip(&ranked) {
        run.push(&g, &grp.query, list);
    }
    save_run(cfg, &run)
}

use crate::ranker::FeatureSource as _;

/// Write the FI, APS, AES and distant-supervision runs for the test queries.
pub fn cmd_baseline(cfg: &PipelineConfig) -> Result<Vec<RunSummary>> {
    let g = load_graph_only(cfg)?;
    let groups = load_groups(cfg, &g)?;
    let tests = test_groups(&groups);
    let scorer = BaselineScorer::new(&g);
    let mut out = Vec::new();
    for method in Baseline::ALL {
        let ranked: Vec<Vec<(Fact, f64)>> = tests
            .par_iter()
            .map(|grp| Ok(ranker::order_by_score(&g, scorer.score_all(method, &grp.query, &candidates(grp))?)))
            .collect::<Result<_>>()?;
        let mut run = Run::new(method.as_str());
        for (grp, list) in tests.iter().zip(&ranked) {
            run.push(&g, &grp.query, list);
        }
        out.push(save_run(cfg, &run)?);
    }
    let instances = read_dataset(&g, &cfg.work("dataset.tsv"))?;
    out.push(save_run(cfg, &distsup_run(&g, &instances, Split::Test))?);
    Ok(out)
}

/// Evaluate every run file against the configured judgments, restricted to
/// the test queries; without judgments, the test split's own labels are used.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<Report> {
    let g = load_graph_only(cfg)?;
    let instances = read_dataset(&g, &cfg.work("dataset.tsv"))?;
    let (judgments, label) = match &cfg.paths.judgments {
        Some(path) => {
            let all = Judgments::read(path)?;
            let tests: std::collections::BTreeSet<String> = instances
                .iter()
                .filter(|i| i.split == Split::Test)
                .map(|i| i.query.serialize(&g))
                .collect();
            let grades = all.grades.into_iter().filter(|(q, _)| tests.contains(q)).collect();
            let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
            (Judgments { grades }, name)
        }
        None => (Judgments::from_instances(&g, &instances, Split::Test), "distant-supervision test labels".into()),
    };
    let runs_dir = cfg.work("runs");
    require(&runs_dir, "runs directory")?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&runs_dir)
        .map_err(|e| Error::io(&runs_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyRun);
    }
    let runs: Vec<Run> = paths.iter().map(|p| Run::read(p)).collect::<Result<_>>()?;
    let report = build_report(&runs, &judgments, &label)?;
    write(&cfg.work("report.json"), &report.to_json())?;
    Ok(report)
}

pub fn cmd_synth(cfg: &PipelineConfig) -> Result<WorldSummary> {
    let world = generate_synthetic_world(&cfg.synth_config()?)?;
    world.write(&cfg.world_files())?;
    Ok(world.summary())
}
