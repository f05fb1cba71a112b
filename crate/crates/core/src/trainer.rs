//! Dataset labeling with Baseline column generation and the training loop of
//! the edge classifier.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{extract_valid_edges, solve, SolveConfig, SolveMode};
use crate::gnn::adam::Adam;
use crate::gnn::features::{featurize, Features, NormStats};
use crate::gnn::loss::{weighted_bce, weighted_bce_logit_grad};
use crate::gnn::net::{backward, forward, update_running_stats, GraphIndex, Mode};
use crate::gnn::params::{Hyper, ModelParams};
use crate::gnn::{GnnError, Model};
use crate::graph::{parse_instance, TimeSpaceGraph};

pub const LABEL_FORMAT: &str = "labels-v1";
pub const LOG_HEADER: &str = "epoch,train_loss,val_loss,val_auc,val_recall";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("label file {path}: {message}")]
    LabelFile { path: PathBuf, message: String },
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_graphs: usize,
    pub lr: f64,
    pub w_neg: f64,
    pub h_conv: usize,
    pub h_mlp: usize,
    pub l_conv: usize,
    pub l_mlp: usize,
    pub seed: u64,
    pub val_fraction: f64,
    /// Stop after this many epochs without a validation-loss improvement.
    pub patience: Option<usize>,
    /// Probability threshold used for the recall metric.
    pub recall_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_graphs: 10,
            lr: 3e-4,
            w_neg: 0.15,
            h_conv: 64,
            h_mlp: 64,
            l_conv: 4,
            l_mlp: 4,
            seed: 0,
            val_fraction: 0.1,
            patience: None,
            recall_threshold: 0.15,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.batch_graphs == 0 {
            return bad("batch_graphs must be at least 1");
        }
        if self.lr.is_nan() || self.lr <= 0.0 {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        if self.h_conv == 0 || self.h_mlp == 0 || self.l_mlp == 0 {
            return bad("layer widths and l_mlp must be positive");
        }
        Ok(())
    }

    pub fn hyper(&self, node_dim: usize, edge_dim: usize) -> Hyper {
        Hyper {
            node_dim,
            edge_dim,
            h_conv: self.h_conv,
            h_mlp: self.h_mlp,
            l_conv: self.l_conv,
            l_mlp: self.l_mlp,
        }
    }
}

/// Connection-edge labels of one instance, in connection-edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub instance: PathBuf,
    pub edge_ids: Vec<usize>,
    pub labels: Vec<u8>,
    pub lp_obj: f64,
    pub ip_obj: f64,
}

impl LabeledInstance {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{LABEL_FORMAT}\ninstance={}\nlp_obj={}\nip_obj={}\nedge_id,label\n",
            self.instance.display(),
            self.lp_obj,
            self.ip_obj
        );
        for (e, l) in self.edge_ids.iter().zip(&self.labels) {
            writeln!(out, "{e},{l}").unwrap();
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, TrainError> {
        let err = |message: String| TrainError::LabelFile { path: path.to_path_buf(), message };
        let mut lines = text.lines();
        if lines.next() != Some(LABEL_FORMAT) {
            return Err(err(format!("first line must be {LABEL_FORMAT}")));
        }
        let mut field = |name: &str| {
            lines
                .next()
                .and_then(|l| l.strip_prefix(name))
                .and_then(|l| l.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| err(format!("missing {name}")))
        };
        let instance = PathBuf::from(field("instance")?);
        let lp_obj = field("lp_obj")?.parse().map_err(|e| err(format!("lp_obj: {e}")))?;
        let ip_obj = field("ip_obj")?.parse().map_err(|e| err(format!("ip_obj: {e}")))?;
        if lines.next() != Some("edge_id,label") {
            return Err(err("missing edge_id,label header".into()));
        }
        let mut edge_ids = Vec::new();
        let mut labels = Vec::new();
        for (k, line) in lines.enumerate() {
            let parsed = line
                .split_once(',')
                .and_then(|(e, l)| Some((e.parse::<usize>().ok()?, l.parse::<u8>().ok().filter(|&l| l <= 1)?)));
            let (e, l) = parsed.ok_or_else(|| err(format!("bad row {}: {line:?}", k + 1)))?;
            edge_ids.push(e);
            labels.push(l);
        }
        Ok(LabeledInstance { instance, edge_ids, labels, lp_obj, ip_obj })
    }

    /// Checks that the labels line up with the connection edges of `g`.
    pub fn matches(&self, g: &TimeSpaceGraph) -> bool {
        self.edge_ids == g.connection_edges()
    }
}

/// Solves `g` with Baseline column generation and labels its connection edges.
pub fn label_instance(g: &TimeSpaceGraph, instance: &Path, cfg: &SolveConfig) -> Result<LabeledInstance, crate::driver::DriverError> {
    let out = solve(g, SolveMode::Baseline, None, cfg)?;
    Ok(LabeledInstance {
        instance: instance.to_path_buf(),
        edge_ids: g.connection_edges(),
        labels: extract_valid_edges(g, out.selected_columns()),
        lp_obj: out.report.lp_objective,
        ip_obj: out.report.ip_objective,
    })
}

pub fn label_path(out_dir: &Path, instance: &Path) -> PathBuf {
    let stem = instance.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "instance".into());
    out_dir.join(format!("{stem}.labels"))
}

/// Labels every instance and writes `<stem>.labels` into `out_dir`. Failing
/// instances are logged and skipped. Instances are split across `workers`
/// threads; the result keeps input order.
pub fn build_dataset(instances: &[PathBuf], out_dir: &Path, workers: usize) -> Result<Vec<LabeledInstance>, TrainError> {
    std::fs::create_dir_all(out_dir)?;
    let cfg = SolveConfig::default();
    let work = |path: &PathBuf| -> Result<LabeledInstance, String> {
        let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
        let g = parse_instance(&bytes).map_err(|e| e.to_string())?;
        let labeled = label_instance(&g, path, &cfg).map_err(|e| e.to_string())?;
        std::fs::write(label_path(out_dir, path), labeled.to_text()).map_err(|e| e.to_string())?;
        Ok(labeled)
    };
    let results = parallel_map(instances, workers, work);
    let mut out = Vec::new();
    for (path, r) in instances.iter().zip(results) {
        match r {
            Ok(l) => out.push(l),
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    Ok(out)
}

/// Maps `f` over `items` on up to `workers` scoped threads, preserving order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let done = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = f(&items[k]);
                done.lock().unwrap()[k] = Some(r);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every item processed")).collect()
}

/// Reads every `*.labels` file in `dir` (sorted by name) and its instance.
pub fn load_dataset(dir: &Path) -> anyhow::Result<Vec<(TimeSpaceGraph, LabeledInstance)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "labels"))
        .collect();
    files.sort();
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let labeled = LabeledInstance::parse(&std::fs::read_to_string(&f)?, &f)?;
        let g = parse_instance(&std::fs::read(&labeled.instance)?)?;
        if !labeled.matches(&g) {
            anyhow::bail!("{}: labels do not match the connection edges of {}", f.display(), labeled.instance.display());
        }
        out.push((g, labeled));
    }
    Ok(out)
}

/// One graph ready for training.
#[derive(Debug, Clone)]
pub struct TrainGraph {
    pub raw: Features,
    pub index: GraphIndex,
    pub labels: Vec<u8>,
}

impl TrainGraph {
    pub fn new(g: &TimeSpaceGraph, labels: Vec<u8>) -> Self {
        let index = GraphIndex::from_graph(g);
        assert_eq!(index.scored.len(), labels.len(), "one label per connection edge");
        TrainGraph { raw: featurize(g), index, labels }
    }
}

/// Min-max statistics over the given graphs.
pub fn fit_norm_stats<'a>(graphs: impl IntoIterator<Item = &'a TrainGraph>) -> Result<NormStats, TrainError> {
    NormStats::fit(graphs.into_iter().map(|g| &g.raw)).ok_or(TrainError::EmptyDataset)
}

/// Training and validation indices: a seeded shuffle, the first
/// `ceil(val_fraction * n)` going to validation (at least one when `n >= 2`
/// and the fraction is positive).
pub fn split(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut n_val = (val_fraction * n as f64).ceil() as usize;
    if n < 2 || val_fraction <= 0.0 {
        n_val = 0;
    }
    n_val = n_val.min(n.saturating_sub(1));
    let val = order[..n_val].to_vec();
    let train = order[n_val..].to_vec();
    (train, val)
}

/// Rank-based area under the ROC curve; ties count one half. `None` when a
/// class is missing.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut j = k;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[k]] {
            j += 1;
        }
        let avg_rank = (k + j) as f64 / 2.0 + 1.0;
        rank_sum += order[k..=j].iter().filter(|&&i| labels[i] == 1).count() as f64 * avg_rank;
        k = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Fraction of positives scored strictly above `threshold`.
pub fn recall_at(scores: &[f64], labels: &[u8], threshold: f64) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
    if pos.is_empty() {
        return None;
    }
    Some(pos.iter().filter(|&&s| s > threshold).count() as f64 / pos.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: f64,
    pub val_recall: f64,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = format!("{LOG_HEADER}\n");
    for r in log {
        writeln!(out, "{},{:.6},{:.6},{:.6},{:.6}", r.epoch, r.train_loss, r.val_loss, r.val_auc, r.val_recall).unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss (the last
    /// epoch when there is no validation split).
    pub model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    /// Set when training stopped on a non-finite activation; `model` is then
    /// the last good checkpoint.
    pub diverged: bool,
}

/// Validation metrics of `model` over `graphs`, pooled across edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub auc: f64,
    pub recall: f64,
}

pub fn evaluate(model: &Model, graphs: &[&TrainGraph], w_neg: f64, threshold: f64) -> Result<Evaluation, GnnError> {
    let mut loss = 0.0;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for g in graphs {
        let f = model.norm.apply(&g.raw);
        let out = forward(&model.params, &f.x_init, &f.e_init, &g.index, Mode::Eval)?;
        loss += weighted_bce(&out.probs, &g.labels, w_neg);
        scores.extend(out.probs);
        labels.extend_from_slice(&g.labels);
    }
    let n = graphs.len().max(1) as f64;
    Ok(Evaluation {
        loss: loss / n,
        auc: auc(&scores, &labels).unwrap_or(f64::NAN),
        recall: recall_at(&scores, &labels, threshold).unwrap_or(f64::NAN),
    })
}

/// Normalized node features, edge features, graph and labels of one graph.
pub type BatchItem<'a> = (&'a Array2<f64>, &'a Array2<f64>, &'a GraphIndex, &'a [u8]);

/// Loss and accumulated gradient of one mini-batch: the mean of per-graph
/// losses and gradients. Running statistics are updated after each graph.
pub fn batch_gradient(params: &mut ModelParams, batch: &[BatchItem<'_>], w_neg: f64) -> Result<(f64, ModelParams), GnnError> {
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for &(x, e, index, labels) in batch {
        let out = forward(params, x, e, index, Mode::Train)?;
        loss += weighted_bce(&out.probs, labels, w_neg) * scale;
        let dl = weighted_bce_logit_grad(&out.probs, labels, w_neg);
        grads.add_scaled(&backward(params, &out.cache, index, &dl), scale);
        update_running_stats(params, &out.cache);
    }
    Ok((loss, grads))
}

/// Trains from scratch on `graphs`, holding out a seeded validation split.
pub fn train(graphs: &[TrainGraph], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.check()?;
    if graphs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let (train_idx, val_idx) = split(graphs.len(), cfg.val_fraction, cfg.seed);
    let norm = fit_norm_stats(train_idx.iter().map(|&k| &graphs[k]))?;
    let normalized: Vec<Features> = graphs.iter().map(|g| norm.apply(&g.raw)).collect();
    let first = &graphs[0].raw;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(cfg.hyper(first.x_init.ncols(), first.e_init.ncols()), &mut rng);
    let mut opt = Adam::new(&params, cfg.lr);
    let val_graphs: Vec<&TrainGraph> = val_idx.iter().map(|&k| &graphs[k]).collect();

    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut log = Vec::new();
    let mut order = train_idx.clone();
    let mut diverged = false;
    let mut since_best = 0;
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(cfg.batch_graphs) {
            let batch: Vec<_> = chunk
                .iter()
                .map(|&k| (&normalized[k].x_init, &normalized[k].e_init, &graphs[k].index, graphs[k].labels.as_slice()))
                .collect();
            let mut trial = params.clone();
            match batch_gradient(&mut trial, &batch, cfg.w_neg) {
                Ok((loss, grads)) if loss.is_finite() && grads.is_finite() => {
                    train_loss += loss * chunk.len() as f64;
                    params = trial;
                    opt.step(&mut params, &grads);
                }
                Ok(_) | Err(GnnError::NonFiniteActivation) => {
                    warn!("non-finite values in epoch {epoch}; stopping");
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            }
        }
        if !params.is_finite() {
            diverged = true;
            break;
        }
        train_loss /= order.len() as f64;
        let model = Model { params: params.clone(), norm: norm.clone() };
        let val = if val_graphs.is_empty() {
            Evaluation { loss: train_loss, auc: f64::NAN, recall: f64::NAN }
        } else {
            match evaluate(&model, &val_graphs, cfg.w_neg, cfg.recall_threshold) {
                Ok(v) => v,
                Err(GnnError::NonFiniteActivation) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e.into()),
            }
        };
        info!("epoch {epoch}: train {train_loss:.5} val {:.5} auc {:.4} recall {:.4}", val.loss, val.auc, val.recall);
        log.push(EpochLog { epoch, train_loss, val_loss: val.loss, val_auc: val.auc, val_recall: val.recall });
        let improved = best.as_ref().is_none_or(|(b, _, _)| val.loss < *b) || val_graphs.is_empty();
        if improved {
            best = Some((val.loss, epoch, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    let (best_epoch, best_params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    Ok(TrainOutcome {
        model: Model { params: best_params, norm },
        best_epoch,
        log,
        diverged,
    })
}

/// Copy of `graphs` with each graph's labels permuted at random.
pub fn shuffle_labels(graphs: &[TrainGraph], seed: u64) -> Vec<TrainGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    graphs
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.labels.shuffle(&mut rng);
            g
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instgen::{generate, GenConfig};
    use proptest::prelude::*;

    fn auc_pairs(scores: &[f64], labels: &[u8]) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(data in prop::collection::vec((0u8..6, 0u8..2), 2..60)) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64 / 5.0).collect();
            let labels: Vec<u8> = data.iter().map(|&(_, l)| l).collect();
            match (auc(&scores, &labels), auc_pairs(&scores, &labels)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a.is_none(), b.is_none()),
            }
        }

        #[test]
        fn split_partitions(n in 0usize..50, seed in any::<u64>()) {
            let (train, val) = split(n, 0.1, seed);
            let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            if n >= 2 {
                prop_assert!(!val.is_empty() && !train.is_empty());
            }
        }
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at(&[0.1, 0.2, 0.9], &[1, 1, 0], 0.15), Some(0.5));
        assert_eq!(recall_at(&[0.1], &[0], 0.15), None);
    }

    #[test]
    fn label_file_round_trip() {
        let l = LabeledInstance {
            instance: PathBuf::from("data/inst_0007.json"),
            edge_ids: vec![3, 8, 9],
            labels: vec![0, 1, 0],
            lp_obj: 37.25,
            ip_obj: 38.5,
        };
        let text = l.to_text();
        assert!(text.starts_with("labels-v1\ninstance=data/inst_0007.json\n"));
        assert_eq!(LabeledInstance::parse(&text, Path::new("x")).unwrap(), l);
        assert!(LabeledInstance::parse("labels-v2\n", Path::new("x")).is_err());
        assert!(LabeledInstance::parse(&text.replace("8,1", "8,2"), Path::new("x")).is_err());
    }

    fn tiny_dataset(n: u64) -> Vec<TrainGraph> {
        (0..n)
            .map(|s| {
                let g = generate(&GenConfig::with_seed(300 + s)).unwrap();
                let l = label_instance(&g, Path::new("unused"), &SolveConfig::default()).unwrap();
                TrainGraph::new(&g, l.labels)
            })
            .collect()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig { epochs: 2, batch_graphs: 3, lr: 1e-3, h_conv: 8, h_mlp: 8, l_conv: 2, l_mlp: 2, ..Default::default() }
    }

    #[test]
    fn batch_loss_is_mean_of_graph_losses() {
        let data = tiny_dataset(3);
        let norm = fit_norm_stats(&data).unwrap();
        let feats: Vec<Features> = data.iter().map(|g| norm.apply(&g.raw)).collect();
        let mut params = ModelParams::init(tiny_config().hyper(feats[0].x_init.ncols(), 6), &mut ChaCha8Rng::seed_from_u64(1));
        let items: Vec<_> = (0..3).map(|k| (&feats[k].x_init, &feats[k].e_init, &data[k].index, data[k].labels.as_slice())).collect();
        let (batch_loss, batch_grad) = batch_gradient(&mut params.clone(), &items, 0.15).unwrap();
        let mut sum_loss = 0.0;
        let mut sum_grad = params.zeros_like();
        for item in &items {
            let (l, g) = batch_gradient(&mut params.clone(), std::slice::from_ref(item), 0.15).unwrap();
            sum_loss += l / 3.0;
            sum_grad.add_scaled(&g, 1.0 / 3.0);
        }
        assert!((batch_loss - sum_loss).abs() < 1e-12);
        let mut diff = batch_grad.clone();
        diff.add_scaled(&sum_grad, -1.0);
        assert!(diff.squared_norm().sqrt() < 1e-10 * (1.0 + batch_grad.squared_norm().sqrt()));
        // duplicated batch leaves the mean gradient unchanged
        let doubled: Vec<_> = items.iter().chain(items.iter()).copied().collect();
        let (dl, dg) = batch_gradient(&mut params, &doubled, 0.15).unwrap();
        assert!((dl - batch_loss).abs() < 1e-12);
        let mut diff = dg;
        diff.add_scaled(&batch_grad, -1.0);
        assert!(diff.squared_norm().sqrt() < 1e-10 * (1.0 + batch_grad.squared_norm().sqrt()));
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let data = tiny_dataset(8);
        let cfg = tiny_config();
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(log_csv(&a.log), log_csv(&b.log));
        assert_eq!(a.model, b.model);
        assert_eq!(a.log.len(), 2);
        assert!(a.log[1].train_loss < a.log[0].train_loss);
        assert!(!a.diverged);
    }

    #[test]
    fn validation_graphs_do_not_affect_training() {
        // changing validation labels must not change the learned weights
        let data = tiny_dataset(8);
        let cfg = tiny_config();
        let (_, val) = split(data.len(), cfg.val_fraction, cfg.seed);
        let mut altered = data.clone();
        for &k in &val {
            altered[k].labels.iter_mut().for_each(|l| *l = 1 - *l);
        }
        let a = train(&data, &cfg).unwrap();
        let b = train(&altered, &cfg).unwrap();
        let last = |o: &TrainOutcome| o.log.iter().map(|r| r.train_loss).collect::<Vec<_>>();
        assert_eq!(last(&a), last(&b));
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(train(&[], &TrainConfig::default()), Err(TrainError::EmptyDataset)));
        assert!(matches!(fit_norm_stats(std::iter::empty()), Err(TrainError::EmptyDataset)));
        let bad = TrainConfig { batch_graphs: 0, ..Default::default() };
        assert!(matches!(train(&tiny_dataset(1), &bad), Err(TrainError::InvalidConfig(_))));
    }
}
