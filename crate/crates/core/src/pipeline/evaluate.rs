//! Evaluation tasks over prepared data and a built graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{build_graph, derive_seed, EvalTask, LabelView, LoadedGraph, PipelineConfig, Prepared};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, ami, ari, cluster, cross_view_alignment, label_propagation_classify, make_split, CrossViewReport, Role,
    SplitMode,
};
use crate::ingest::CellMetadata;
use crate::ontology::co_distance;
use crate::topology::{knn_edges, CosineIndex};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Named stand-ins carried in every report.
pub const NOTICES: [&str; 2] = [
    "community detection uses asynchronous label propagation in place of Leiden",
    "classification uses label propagation on the graph in place of a trained graph neural network",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedResult {
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub edges: usize,
    pub test_accuracy: f64,
    pub val_accuracy: Option<f64>,
    /// Same probe on a plain cosine kNN graph over the observation view.
    pub knn_baseline_test_accuracy: f64,
    pub knn_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotResult {
    pub seed: u64,
    pub seen_types: Vec<String>,
    pub unseen_types: Vec<String>,
    pub seen_cells: usize,
    pub unseen_cells: usize,
    /// Unseen cells whose predicted (seen) type lies within the ontology
    /// distance used for Onto edges of their true type.
    pub unseen_relaxed_accuracy: Option<f64>,
    /// Agreement of graph communities with the true types, on unseen cells.
    pub unseen_cluster_ari: Option<f64>,
    pub unseen_cluster_ami: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub seed: u64,
    pub cells_scored: usize,
    pub clusters: usize,
    pub ari: f64,
    pub ami: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub notices: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub supervised: Option<Vec<SupervisedResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_shot: Option<Vec<ZeroShotResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clustering: Option<Vec<ClusteringResult>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cross_view: Option<CrossViewReport>,
}

/// Dense ids for every cell type named in the metadata, in name order.
/// `None` for unlabeled cells.
pub fn truth_ids(meta: &CellMetadata) -> (Vec<String>, Vec<Option<u32>>) {
    let names: Vec<String> = meta
        .iter()
        .filter_map(|r| r.cell_type.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, u32> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i as u32)).collect();
    let ids = meta.iter().map(|r| r.cell_type.as_deref().map(|t| index[t])).collect();
    (names, ids)
}

fn adjacency_from_pairs(n: usize, pairs: &[(u32, u32)]) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in pairs {
        adj[u as usize].push(v);
        adj[v as usize].push(u);
    }
    adj
}

/// Stratified 50/20/30 split; the graph is rebuilt so only Train labels are
/// visible, then both graphs are probed with the same Train seeds.
pub fn supervised_task(prepared: &Prepared, cfg: &PipelineConfig, seed: u64) -> Result<SupervisedResult> {
    let meta = &prepared.metadata;
    let plan = make_split(meta, SplitMode::Supervised, seed)?;
    let (_, truth) = truth_ids(meta);
    let mut labels = LabelView::from_metadata(meta);
    for (i, v) in labels.visible.iter_mut().enumerate() {
        if plan.roles[i] != Role::Train {
            *v = None;
        }
    }
    let (graph, _) = build_graph(prepared, cfg, &labels)?;
    let seeds: Vec<Option<u32>> = (0..meta.len())
        .map(|i| if plan.roles[i] == Role::Train { truth[i] } else { None })
        .collect();
    let truth_dense: Vec<u32> = truth.iter().map(|t| t.unwrap_or(u32::MAX)).collect();
    let pred = label_propagation_classify(&graph.adjacency(), &seeds)?;
    let test = plan.cells_with(Role::Test);
    let val = plan.cells_with(Role::Val);
    let all: Vec<u32> = (0..meta.len() as u32).collect();
    let knn = knn_edges(&CosineIndex::new(&prepared.observation), &all, cfg.topology.k_align);
    let knn_pred = label_propagation_classify(&adjacency_from_pairs(meta.len(), &knn), &seeds)?;
    Ok(SupervisedResult {
        seed,
        train: plan.count(Role::Train),
        val: val.len(),
        test: test.len(),
        edges: graph.edges().len(),
        test_accuracy: accuracy(&pred, &truth_dense, &test).ok_or_else(|| Error::Data("the test split is empty".into()))?,
        val_accuracy: accuracy(&pred, &truth_dense, &val),
        knn_baseline_test_accuracy: accuracy(&knn_pred, &truth_dense, &test).expect("test split checked above"),
        knn_k: cfg.topology.k_align,
    })
}

/// Types split 60/40 into Seen/Unseen. Unseen cells join the graph as
/// label-free Query cells.
pub fn zero_shot_task(prepared: &Prepared, cfg: &PipelineConfig, seed: u64) -> Result<ZeroShotResult> {
    let meta = &prepared.metadata;
    let plan = make_split(meta, SplitMode::ZeroShot, seed)?;
    let (names, truth) = truth_ids(meta);
    let mut labels = LabelView::from_metadata(meta);
    for i in 0..meta.len() {
        if plan.roles[i] != Role::Seen {
            labels.visible[i] = None;
        }
        if plan.roles[i] == Role::Unseen {
            labels.is_reference[i] = false;
        }
    }
    let (graph, _) = build_graph(prepared, cfg, &labels)?;
    let adj = graph.adjacency();
    let seeds: Vec<Option<u32>> = (0..meta.len())
        .map(|i| if plan.roles[i] == Role::Seen { truth[i] } else { None })
        .collect();
    let pred = label_propagation_classify(&adj, &seeds)?;
    let unseen = plan.cells_with(Role::Unseen);
    let mut relaxed_hits = 0usize;
    for &c in &unseen {
        let (p, t) = (&names[pred[c] as usize], &names[truth[c].expect("split cells are labeled") as usize]);
        if co_distance(&prepared.cell_ontology, p, t)?.is_some_and(|d| d <= cfg.topology.onto_max_distance) {
            relaxed_hits += 1;
        }
    }
    let communities = cluster(&adj, derive_seed(seed, "zero_shot/cluster"));
    let part: Vec<u32> = unseen.iter().map(|&c| communities[c]).collect();
    let unseen_truth: Vec<u32> = unseen.iter().map(|&c| truth[c].expect("labeled")).collect();
    let scored = !unseen.is_empty();
    Ok(ZeroShotResult {
        seed,
        seen_types: plan.seen_types.clone(),
        unseen_types: plan.unseen_types.clone(),
        seen_cells: plan.count(Role::Seen),
        unseen_cells: unseen.len(),
        unseen_relaxed_accuracy: scored.then(|| relaxed_hits as f64 / unseen.len() as f64),
        unseen_cluster_ari: scored.then(|| ari(&part, &unseen_truth)),
        unseen_cluster_ami: scored.then(|| ami(&part, &unseen_truth)),
    })
}

/// Communities on the stored graph, scored against every labeled cell.
pub fn clustering_task(graph: &LoadedGraph, meta: &CellMetadata, seed: u64) -> Result<ClusteringResult> {
    if graph.cell_ids.len() != meta.len() || graph.cell_ids.iter().zip(meta.iter()).any(|(a, r)| *a != r.cell_id) {
        return Err(Error::Data("graph nodes do not match the prepared cells; rebuild the graph".into()));
    }
    let partition = cluster(&graph.adjacency(), seed);
    let (_, truth) = truth_ids(meta);
    let scored: Vec<usize> = (0..meta.len()).filter(|&i| truth[i].is_some()).collect();
    let a: Vec<u32> = scored.iter().map(|&i| partition[i]).collect();
    let b: Vec<u32> = scored.iter().map(|&i| truth[i].expect("filtered")).collect();
    let clusters = partition.iter().copied().max().map_or(0, |m| m as usize + 1);
    Ok(ClusteringResult {
        seed,
        cells_scored: scored.len(),
        clusters,
        ari: ari(&a, &b),
        ami: ami(&a, &b),
    })
}

pub fn run_tasks(cfg: &PipelineConfig, prepared: &Prepared, graph: &LoadedGraph) -> Result<EvalReport> {
    let mut report = EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        notices: NOTICES.iter().map(|s| s.to_string()).collect(),
        supervised: None,
        zero_shot: None,
        clustering: None,
        cross_view: None,
    };
    let seeds = |task: &str| -> Vec<u64> {
        (0..cfg.eval.repeats).map(|r| derive_seed(cfg.seed, &format!("eval/{task}/{r}"))).collect()
    };
    for task in &cfg.eval.tasks {
        match task {
            EvalTask::Supervised => {
                report.supervised = Some(
                    seeds("supervised")
                        .into_iter()
                        .map(|s| supervised_task(prepared, cfg, s))
                        .collect::<Result<_>>()?,
                )
            }
            EvalTask::ZeroShot => {
                report.zero_shot = Some(
                    seeds("zero_shot")
                        .into_iter()
                        .map(|s| zero_shot_task(prepared, cfg, s))
                        .collect::<Result<_>>()?,
                )
            }
            EvalTask::Clustering => {
                report.clustering = Some(
                    seeds("clustering")
                        .into_iter()
                        .map(|s| clustering_task(graph, &prepared.metadata, s))
                        .collect::<Result<_>>()?,
                )
            }
            EvalTask::CrossView => {
                report.cross_view = Some(cross_view_alignment(
                    &prepared.expression,
                    &prepared.knowledge,
                    &prepared.metadata,
                    None,
                )?)
            }
        }
    }
    Ok(report)
}

