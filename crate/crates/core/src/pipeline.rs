//! End-to-end pipeline stages and configuration.
//!
//! Each stage reads files, writes outputs named by a digest of the stage
//! parameters and input digests, drops a `.prov.json` sidecar next to every
//! output, and registers what it produced in `manifest.json` under the
//! output directory. Later stages (and the command-line tool) locate their
//! inputs through the manifest instead of guessing paths, and reruns with
//! identical inputs land on identical file names.
//!
//! Stage functions take explicit input paths so callers can rewire them;
//! [`run_pipeline`] chains them in the standard order: sanitize, embed,
//! align, fuse, evaluate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::align::{predict_anchors, train_mapping, AnchorSet, GanConfig};
use crate::dp::{
    allocate_budgets, compute_tmr, sanitize_graph, PrivacyBudget, TmrReport,
};
use crate::error::{Error, Result};
use crate::eval::{
    attack_gender, attack_occupation, predict_interests, EvalProtocol, EvalReport, LogRegConfig,
    TreeConfig,
};
use crate::fuse::{train_fusion, FusionConfig, FusionMode};
use crate::graph::{extract_user_graph, load_graph, save_graph, HeteroGraph};
use crate::hetero::{train_hetero, NodeFeatures, TrainConfig};
use crate::provenance::{file_digest, short_digest, Provenance};
use crate::rng::SeedTree;
use crate::seqembed::{random_walks, train_skipgram, SkipGramConfig, WalkConfig};
use crate::EmbeddingTable;
use crate::Real;

/// Everything a full run needs: input graphs, output directory, the privacy
/// budget, and the per-module training configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub graph_a: PathBuf,
    pub graph_b: PathBuf,
    pub out_dir: PathBuf,
    pub budget: PrivacyBudget,
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    /// When false, [`PipelineConfig::resolved`] replaces the seed with a
    /// fresh one from the OS. Stage functions always honor `seed` as given.
    pub deterministic: bool,
    /// Swaps the fusion stage to plain stacked propagation.
    pub ablation: bool,
    pub word: SkipGramConfig,
    pub walks: WalkConfig,
    pub encoder: TrainConfig,
    pub gan: GanConfig,
    /// Neighborhood size for the anchor-match scores.
    pub anchor_k: usize,
    /// Minimum score for a predicted anchor pair to be kept.
    pub anchor_margin: Real,
    pub fusion: FusionConfig,
    pub protocol: EvalProtocol,
    pub tree: TreeConfig,
    pub logreg: LogRegConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            graph_a: PathBuf::new(),
            graph_b: PathBuf::new(),
            out_dir: PathBuf::new(),
            budget: PrivacyBudget::new(5.0, 10.0, 7.5).expect("default budget is valid"),
            seed: 0,
            deterministic: true,
            ablation: false,
            word: SkipGramConfig::default(),
            walks: WalkConfig::default(),
            encoder: TrainConfig::default(),
            gan: GanConfig::default(),
            anchor_k: 10,
            anchor_margin: 0.0,
            fusion: FusionConfig::default(),
            protocol: EvalProtocol::default(),
            tree: TreeConfig::default(),
            logreg: LogRegConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        if self.anchor_k == 0 {
            return Err(Error::Config("anchor_k must be at least 1".into()));
        }
        if !self.anchor_margin.is_finite() {
            return Err(Error::Config(format!(
                "anchor margin {} is not finite",
                self.anchor_margin
            )));
        }
        if self.graph_a.as_os_str().is_empty() || self.graph_b.as_os_str().is_empty() {
            return Err(Error::Config("both input graph paths must be set".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("output directory must be set".into()));
        }
        Ok(())
    }

    /// Copy with the seed pinned. With `deterministic` unset, draws a fresh
    /// master seed once so one invocation stays internally consistent while
    /// distinct invocations differ; the drawn seed still lands in every
    /// provenance record.
    pub fn resolved(&self) -> PipelineConfig {
        let mut cfg = self.clone();
        if !cfg.deterministic {
            cfg.seed = rand::thread_rng().gen();
            cfg.deterministic = true;
        }
        cfg
    }

    /// The semantic knobs (no paths), used in digests so that output names
    /// are stable across machines and directories.
    fn params_value(&self) -> serde_json::Value {
        json!({
            "budget": self.budget,
            "seed": self.seed,
            "ablation": self.ablation,
            "word": self.word,
            "walks": self.walks,
            "encoder": self.encoder,
            "gan": self.gan,
            "anchor_k": self.anchor_k,
            "anchor_margin": self.anchor_margin,
            "fusion": self.fusion,
            "protocol": self.protocol,
            "tree": self.tree,
            "logreg": self.logreg,
        })
    }
}

/// Records which files each stage produced, keyed by stage then by a
/// logical name. Paths are stored relative to the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, BTreeMap<String, PathBuf>>,
}

impl Manifest {
    fn file(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    /// Loads the manifest under `dir`, or an empty one if none exists yet.
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = Manifest::file(dir);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let body = fs::read_to_string(&path)?;
        serde_json::from_str(&body).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(Manifest::file(dir), body + "\n")?;
        Ok(())
    }

    /// Registers `path` (made relative to `dir`) under `stage`/`name`.
    pub fn insert(&mut self, dir: &Path, stage: &str, name: &str, path: &Path) {
        let rel = path.strip_prefix(dir).unwrap_or(path).to_path_buf();
        self.stages
            .entry(stage.to_string())
            .or_default()
            .insert(name.to_string(), rel);
    }

    /// Absolute path of a recorded output, or an error telling the caller
    /// which stage has not run yet.
    pub fn get(&self, dir: &Path, stage: &str, name: &str) -> Result<PathBuf> {
        self.stages
            .get(stage)
            .and_then(|m| m.get(name))
            .map(|rel| dir.join(rel))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "manifest has no {name:?} output for the {stage} stage; run that stage first"
                ))
            })
    }
}

/// Derives a stage-local seed from the master seed.
fn stage_seed(master: u64, stage: &str, item: u64) -> u64 {
    SeedTree::new(master).stream(stage, &[item]).gen()
}

/// Digest-named output path: `{prefix}-{12 hex chars}{ext}`.
fn keyed_path(dir: &Path, prefix: &str, ext: &str, key: &serde_json::Value) -> PathBuf {
    let digest = short_digest(key.to_string().as_bytes());
    dir.join(format!("{prefix}-{digest}{ext}"))
}

fn record(
    manifest: &mut Manifest,
    dir: &Path,
    stage: &str,
    name: &str,
    path: &Path,
    prov: &Provenance,
) -> Result<()> {
    prov.write_sidecar(path)?;
    manifest.insert(dir, stage, name, path);
    Ok(())
}

/// Word vectors for a graph's post corpus; a graph without tokens gets an
/// empty table, which downstream consumers treat as all-unknown vocabulary.
fn word_table(g: &HeteroGraph, cfg: &SkipGramConfig) -> Result<EmbeddingTable> {
    if g.post_tokens().iter().all(Vec::is_empty) {
        return EmbeddingTable::new(Vec::new(), Array2::zeros((0, cfg.dim.max(1))));
    }
    train_skipgram(g.post_tokens(), cfg)
}

/// Applies all three perturbation mechanisms to both input graphs and
/// writes the sanitized copies. The word vectors backing the text
/// mechanism's metric are trained on each graph's own raw corpus.
pub fn sanitize_stage(cfg: &PipelineConfig) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut manifest = Manifest::load(&cfg.out_dir)?;
    let mut outs = Vec::with_capacity(2);
    for (idx, (tag, input)) in [("a", &cfg.graph_a), ("b", &cfg.graph_b)].iter().enumerate() {
        let in_digest = file_digest(input)?;
        let g = load_graph(input)?;
        let mut word_cfg = cfg.word.clone();
        word_cfg.seed = stage_seed(cfg.seed, "sanitize-words", idx as u64);
        let words = word_table(&g, &word_cfg)?;
        let seed = stage_seed(cfg.seed, "sanitize", idx as u64);
        let (sanitized, diag) = sanitize_graph(&g, &cfg.budget, &words, seed)?;
        let key = json!({
            "stage": "sanitize",
            "params": cfg.params_value(),
            "input": in_digest,
            "network": tag,
        });
        let out = keyed_path(&cfg.out_dir, &format!("sanitized-{tag}"), ".graph", &key);
        let prov = Provenance::new("sanitize", seed)
            .input(&format!("graph_{tag}"), in_digest)
            .param("master_seed", cfg.seed)
            .param("budget", json!(cfg.budget))
            .param("word", json!(word_cfg))
            .param("diagnostics", json!(diag));
        save_graph(&sanitized, &out, Some(&prov))?;
        record(&mut manifest, &cfg.out_dir, "sanitize", &format!("graph_{tag}"), &out, &prov)?;
        outs.push(out);
    }
    manifest.save(&cfg.out_dir)?;
    let b = outs.pop().expect("two outputs");
    let a = outs.pop().expect("two outputs");
    Ok((a, b))
}

/// Trains word vectors on each graph's (sanitized) corpus, builds node
/// features, runs the relational encoder, and writes one user embedding
/// table per network.
pub fn embed_stage(cfg: &PipelineConfig, graph_a: &Path, graph_b: &Path) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut manifest = Manifest::load(&cfg.out_dir)?;
    let mut outs = Vec::with_capacity(2);
    for (idx, (tag, input)) in [("a", graph_a), ("b", graph_b)].iter().enumerate() {
        let in_digest = file_digest(input)?;
        let g = load_graph(input)?;
        let mut word_cfg = cfg.word.clone();
        word_cfg.seed = stage_seed(cfg.seed, "embed-words", idx as u64);
        let words = word_table(&g, &word_cfg)?;
        let feats = NodeFeatures::build(&g, &words)?;
        let mut enc_cfg = cfg.encoder.clone();
        enc_cfg.seed = stage_seed(cfg.seed, "embed-encoder", idx as u64);
        let (_, table) = train_hetero(&g, &feats, &enc_cfg)?;
        let key = json!({
            "stage": "embed",
            "params": cfg.params_value(),
            "input": in_digest,
            "network": tag,
        });
        let out = keyed_path(&cfg.out_dir, &format!("embed-{tag}"), ".emb", &key);
        table.save(&out)?;
        let prov = Provenance::new("embed", enc_cfg.seed)
            .input(&format!("graph_{tag}"), in_digest)
            .param("master_seed", cfg.seed)
            .param("word", json!(word_cfg))
            .param("encoder", json!(enc_cfg));
        record(&mut manifest, &cfg.out_dir, "embed", &format!("z_{tag}"), &out, &prov)?;
        outs.push(out);
    }
    manifest.save(&cfg.out_dir)?;
    let b = outs.pop().expect("two outputs");
    let a = outs.pop().expect("two outputs");
    Ok((a, b))
}

/// Paths produced by the alignment stage.
#[derive(Debug, Clone)]
pub struct AlignOutputs {
    pub mapping: PathBuf,
    pub anchors: PathBuf,
}

/// Learns the cross-network linear map adversarially and predicts anchor
/// users from mutual nearest neighbors under the mapped similarity.
pub fn align_stage(cfg: &PipelineConfig, z_a: &Path, z_b: &Path) -> Result<AlignOutputs> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut manifest = Manifest::load(&cfg.out_dir)?;
    let digest_a = file_digest(z_a)?;
    let digest_b = file_digest(z_b)?;
    let za = EmbeddingTable::load(z_a)?;
    let zb = EmbeddingTable::load(z_b)?;
    let mut gan_cfg = cfg.gan.clone();
    gan_cfg.seed = stage_seed(cfg.seed, "align", 0);
    let model = train_mapping(&za, &zb, &gan_cfg)?;
    let anchors = predict_anchors(&za, &zb, &model, cfg.anchor_k, cfg.anchor_margin)?;
    if anchors.is_empty() {
        eprintln!("warning: no anchor pairs cleared the margin; fusion will train without the cross-network tie");
    }
    let key = json!({
        "stage": "align",
        "params": cfg.params_value(),
        "inputs": [&digest_a, &digest_b],
    });
    let mapping = keyed_path(&cfg.out_dir, "align-map", ".ckpt", &key);
    let anchor_path = keyed_path(&cfg.out_dir, "align-anchors", ".anchors", &key);
    model.save(&mapping)?;
    anchors.save(&anchor_path)?;
    let prov = Provenance::new("align", gan_cfg.seed)
        .input("z_a", digest_a)
        .input("z_b", digest_b)
        .param("master_seed", cfg.seed)
        .param("gan", json!(gan_cfg))
        .param("anchor_k", cfg.anchor_k)
        .param("anchor_margin", cfg.anchor_margin)
        .param("anchor_pairs", anchors.len());
    record(&mut manifest, &cfg.out_dir, "align", "mapping", &mapping, &prov)?;
    record(&mut manifest, &cfg.out_dir, "align", "anchors", &anchor_path, &prov)?;
    manifest.save(&cfg.out_dir)?;
    Ok(AlignOutputs { mapping, anchors: anchor_path })
}

/// Fuses the two embedding tables over the (sanitized) friendship structure
/// and writes one fused table per network.
pub fn fuse_stage(
    cfg: &PipelineConfig,
    graph_a: &Path,
    graph_b: &Path,
    z_a: &Path,
    z_b: &Path,
    anchors: &Path,
) -> Result<(PathBuf, PathBuf)> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut manifest = Manifest::load(&cfg.out_dir)?;
    let inputs = [
        ("graph_a", graph_a),
        ("graph_b", graph_b),
        ("z_a", z_a),
        ("z_b", z_b),
        ("anchors", anchors),
    ];
    let mut digests = Vec::with_capacity(inputs.len());
    for (name, path) in &inputs {
        digests.push((*name, file_digest(path)?));
    }
    let ga = load_graph(graph_a)?;
    let gb = load_graph(graph_b)?;
    let za = EmbeddingTable::load(z_a)?;
    let zb = EmbeddingTable::load(z_b)?;
    let anchor_set = AnchorSet::load(anchors)?;
    let mut fus_cfg = cfg.fusion.clone();
    fus_cfg.seed = stage_seed(cfg.seed, "fuse", 0);
    let mode = if cfg.ablation { FusionMode::Iterative } else { FusionMode::Hierarchy };
    let (o1, o2) = train_fusion(&ga, &gb, &za, &zb, &anchor_set, &fus_cfg, mode)?;
    let key = json!({
        "stage": "fuse",
        "params": cfg.params_value(),
        "inputs": digests.iter().map(|(_, d)| d.clone()).collect::<Vec<_>>(),
    });
    let out_a = keyed_path(&cfg.out_dir, "fused-a", ".emb", &key);
    let out_b = keyed_path(&cfg.out_dir, "fused-b", ".emb", &key);
    o1.save(&out_a)?;
    o2.save(&out_b)?;
    let mut prov = Provenance::new("fuse", fus_cfg.seed)
        .param("master_seed", cfg.seed)
        .param("fusion", json!(fus_cfg))
        .param(
            "mode",
            match mode {
                FusionMode::Hierarchy => "hierarchy",
                FusionMode::Iterative => "iterative",
            },
        );
    for (name, digest) in digests {
        prov = prov.input(name, digest);
    }
    record(&mut manifest, &cfg.out_dir, "fuse", "fused_a", &out_a, &prov)?;
    record(&mut manifest, &cfg.out_dir, "fuse", "fused_b", &out_b, &prov)?;
    manifest.save(&cfg.out_dir)?;
    Ok((out_a, out_b))
}

/// Task reports for one network. A task a graph carries no labels for is
/// skipped and left as `null` in the report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReports {
    pub network: String,
    pub interest: Option<EvalReport>,
    pub gender: Option<EvalReport>,
    pub occupation: Option<EvalReport>,
}

fn task_or_skip(r: Result<EvalReport>, network: &str, task: &str) -> Result<Option<EvalReport>> {
    match r {
        Ok(report) => Ok(Some(report)),
        Err(Error::NoLabeledUsers) => {
            eprintln!("warning: network {network} has no labels for {task}; skipping");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Runs interest prediction plus the gender and occupation attacks on both
/// fused tables, against the labels carried by each network's graph file.
pub fn eval_stage(
    cfg: &PipelineConfig,
    graph_a: &Path,
    graph_b: &Path,
    fused_a: &Path,
    fused_b: &Path,
) -> Result<PathBuf> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut manifest = Manifest::load(&cfg.out_dir)?;
    let inputs = [
        ("graph_a", graph_a),
        ("graph_b", graph_b),
        ("fused_a", fused_a),
        ("fused_b", fused_b),
    ];
    let mut digests = Vec::with_capacity(inputs.len());
    for (name, path) in &inputs {
        digests.push((*name, file_digest(path)?));
    }
    let mut reports = Vec::with_capacity(2);
    for (tag, graph, fused) in [("a", graph_a, fused_a), ("b", graph_b, fused_b)] {
        let g = load_graph(graph)?;
        let table = EmbeddingTable::load(fused)?;
        reports.push(NetworkReports {
            network: tag.to_string(),
            interest: task_or_skip(
                predict_interests(&table, &g, &cfg.protocol, &cfg.tree),
                tag,
                "interest prediction",
            )?,
            gender: task_or_skip(
                attack_gender(&table, &g, &cfg.protocol, &cfg.logreg),
                tag,
                "the gender attack",
            )?,
            occupation: task_or_skip(
                attack_occupation(&table, &g, &cfg.protocol, &cfg.tree),
                tag,
                "the occupation attack",
            )?,
        });
    }
    let key = json!({
        "stage": "eval",
        "params": cfg.params_value(),
        "inputs": digests.iter().map(|(_, d)| d.clone()).collect::<Vec<_>>(),
    });
    let out = keyed_path(&cfg.out_dir, "eval", ".json", &key);
    let body = serde_json::to_string_pretty(&reports).expect("reports serialize");
    fs::write(&out, body + "\n")?;
    let mut prov = Provenance::new("eval", cfg.seed)
        .param("master_seed", cfg.seed)
        .param("protocol", json!(cfg.protocol))
        .param("tree", json!(cfg.tree))
        .param("logreg", json!(cfg.logreg));
    for (name, digest) in digests {
        prov = prov.input(name, digest);
    }
    record(&mut manifest, &cfg.out_dir, "eval", "report", &out, &prov)?;
    manifest.save(&cfg.out_dir)?;
    Ok(out)
}

/// Reads an evaluation report file back.
pub fn load_eval_report(path: &Path) -> Result<Vec<NetworkReports>> {
    let body = fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}

/// Runs the five stages in order and returns the resulting manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    let cfg = cfg.resolved();
    let (sa, sb) = sanitize_stage(&cfg)?;
    let (za, zb) = embed_stage(&cfg, &sa, &sb)?;
    let aligned = align_stage(&cfg, &za, &zb)?;
    let (fa, fb) = fuse_stage(&cfg, &sa, &sb, &za, &zb, &aligned.anchors)?;
    eval_stage(&cfg, &sa, &sb, &fa, &fb)?;
    Manifest::load(&cfg.out_dir)
}

/// Reruns the whole pipeline once per attribute-budget grid point and
/// collects the evaluation metrics into one CSV
/// (`eps_a,network,task,precision_mean,precision_std,f1_mean,f1_std`).
/// Each grid point runs in its own subdirectory of the output directory.
pub fn sweep_stage(cfg: &PipelineConfig, grid: &[f64]) -> Result<PathBuf> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let cfg = cfg.resolved();
    fs::create_dir_all(&cfg.out_dir)?;
    let mut csv = String::from("eps_a,network,task,precision_mean,precision_std,f1_mean,f1_std\n");
    for &eps_a in grid {
        let mut sub = cfg.clone();
        sub.budget.eps_a = eps_a;
        sub.out_dir = cfg.out_dir.join(format!("eps-a-{eps_a}"));
        let manifest = run_pipeline(&sub)?;
        let report_path = manifest.get(&sub.out_dir, "eval", "report")?;
        for net in load_eval_report(&report_path)? {
            let tasks = [
                ("interest", &net.interest),
                ("gender", &net.gender),
                ("occupation", &net.occupation),
            ];
            for (task, report) in tasks {
                if let Some(r) = report {
                    csv.push_str(&format!(
                        "{eps_a},{},{task},{:.6},{:.6},{:.6},{:.6}\n",
                        net.network,
                        r.precision.mean,
                        r.precision.std,
                        r.micro_f1.mean,
                        r.micro_f1.std,
                    ));
                }
            }
        }
    }
    let in_a = file_digest(&cfg.graph_a)?;
    let in_b = file_digest(&cfg.graph_b)?;
    let key = json!({
        "stage": "sweep",
        "grid": grid,
        "params": cfg.params_value(),
        "inputs": [in_a.clone(), in_b.clone()],
    });
    let out = keyed_path(&cfg.out_dir, "sweep", ".csv", &key);
    fs::write(&out, &csv)?;
    let prov = Provenance::new("sweep", cfg.seed)
        .input("graph_a", in_a)
        .input("graph_b", in_b)
        .param("master_seed", cfg.seed)
        .param("grid", json!(grid));
    let mut manifest = Manifest::load(&cfg.out_dir)?;
    record(&mut manifest, &cfg.out_dir, "sweep", "csv", &out, &prov)?;
    manifest.save(&cfg.out_dir)?;
    Ok(out)
}

/// Mean attack precision per inference task for one single-type feature set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypePrecisions {
    pub interest: f64,
    pub gender: f64,
    pub occupation: f64,
}

/// What the budget-rating stage writes: per-type attack precisions, the
/// resulting magnitude ratings, and the budget split they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmrStageReport {
    pub attribute: TypePrecisions,
    pub friendship: TypePrecisions,
    pub posts: TypePrecisions,
    pub tmr: TmrReport,
    pub total: f64,
    pub allocation: PrivacyBudget,
}

fn run_type_tasks(
    table: &EmbeddingTable,
    g: &HeteroGraph,
    cfg: &PipelineConfig,
) -> Result<TypePrecisions> {
    Ok(TypePrecisions {
        interest: predict_interests(table, g, &cfg.protocol, &cfg.tree)?.precision.mean,
        gender: attack_gender(table, g, &cfg.protocol, &cfg.logreg)?.precision.mean,
        occupation: attack_occupation(table, g, &cfg.protocol, &cfg.tree)?.precision.mean,
    })
}

/// Rates how much each raw data type leaks by attacking single-type feature
/// sets (attribute vectors, walk-based friendship embeddings, mean word
/// vectors of a user's posts), then splits `total` across the three
/// mechanisms in proportion to the ratings. Needs all three label kinds on
/// the graph.
pub fn tmr_stage(cfg: &PipelineConfig, graph: &Path, total: f64) -> Result<PathBuf> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let in_digest = file_digest(graph)?;
    let g = load_graph(graph)?;
    let user_ids = g.user_ids().to_vec();

    let empty = EmbeddingTable::new(Vec::new(), Array2::zeros((0, cfg.word.dim.max(1))))?;
    let feats = NodeFeatures::build(&g, &empty)?;
    let attr_table = EmbeddingTable::new(user_ids.clone(), feats.user)?;

    let mut walk_cfg = cfg.walks;
    walk_cfg.seed = stage_seed(cfg.seed, "tmr-walks", 0);
    let walks = random_walks(&extract_user_graph(&g), &walk_cfg);
    let sequences: Vec<Vec<String>> = walks
        .iter()
        .map(|w| w.iter().map(|&u| user_ids[u].clone()).collect())
        .collect();
    let mut friend_cfg = cfg.word.clone();
    friend_cfg.min_count = 1;
    friend_cfg.seed = stage_seed(cfg.seed, "tmr-friend-words", 0);
    let friend_table = train_skipgram(&sequences, &friend_cfg)?;

    let mut word_cfg = cfg.word.clone();
    word_cfg.seed = stage_seed(cfg.seed, "tmr-post-words", 0);
    let words = word_table(&g, &word_cfg)?;
    let mut post_feats = Array2::zeros((g.n_users(), words.dim()));
    let mut counts = vec![0usize; g.n_users()];
    for (p, tokens) in g.post_tokens().iter().enumerate() {
        let author = g.post_author()[p];
        for tok in tokens {
            if let Some(v) = words.get(tok) {
                post_feats.row_mut(author).scaled_add(1.0, &v);
                counts[author] += 1;
            }
        }
    }
    for (u, &n) in counts.iter().enumerate() {
        if n > 0 {
            post_feats.row_mut(u).mapv_inplace(|x| x / n as Real);
        }
    }
    let post_table = EmbeddingTable::new(user_ids, post_feats)?;

    let attribute = run_type_tasks(&attr_table, &g, cfg)?;
    let friendship = run_type_tasks(&friend_table, &g, cfg)?;
    let posts = run_type_tasks(&post_table, &g, cfg)?;
    let tmr = compute_tmr(
        [attribute.interest, friendship.interest, posts.interest],
        [attribute.gender, friendship.gender, posts.gender],
        [attribute.occupation, friendship.occupation, posts.occupation],
    )?;
    let allocation = allocate_budgets(&tmr, total)?;
    let report = TmrStageReport { attribute, friendship, posts, tmr, total, allocation };

    let key = json!({
        "stage": "tmr",
        "params": cfg.params_value(),
        "total": total,
        "input": in_digest,
    });
    let out = keyed_path(&cfg.out_dir, "tmr", ".json", &key);
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&out, body + "\n")?;
    let prov = Provenance::new("tmr", cfg.seed)
        .input("graph", in_digest)
        .param("master_seed", cfg.seed)
        .param("total", total)
        .param("walks", json!(walk_cfg));
    let mut manifest = Manifest::load(&cfg.out_dir)?;
    record(&mut manifest, &cfg.out_dir, "tmr", "report", &out, &prov)?;
    manifest.save(&cfg.out_dir)?;
    Ok(out)
}

/// Reads a budget-rating report back.
pub fn load_tmr_report(path: &Path) -> Result<TmrStageReport> {
    let body = fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })
}
