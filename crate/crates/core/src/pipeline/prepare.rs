//! Stage execution: ingest → qc → downsample → features, then topology.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::downsample::{stratified_downsample, DownsampleReport};
use crate::error::{Error, Result};
use crate::features::{fuse, go_enrichment, log_normalize, pca, FeatureMatrix, View};
use crate::ingest::{
    parse_annotations, parse_matrix_market, parse_metadata, parse_newick_file, parse_obo, CellMetadata,
    ExpressionMatrix, GeneAnnotationMap, OntologyDag, PhyloTree, Split,
};
use crate::ontology::{resolve_radius, CompatibilityMatrix, SemanticMask};
use crate::qc::{self, QcReport};
use crate::topology::{attach_query, build_topology, CellGraph, NodeTable, TopologyStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Parsed inputs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub matrix: ExpressionMatrix,
    pub metadata: CellMetadata,
    pub cell_ontology: OntologyDag,
    pub gene_ontology: OntologyDag,
    pub annotations: GeneAnnotationMap,
    pub phylogeny: PhyloTree,
}

/// Everything graph construction needs, after curation and featurization.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cells_in: usize,
    pub genes_in: usize,
    /// Log-normalized expression of the surviving cells and genes.
    pub expression: ExpressionMatrix,
    pub metadata: CellMetadata,
    pub cell_ontology: OntologyDag,
    pub phylogeny: PhyloTree,
    pub observation: FeatureMatrix,
    /// Zero-width when the gene-set view is disabled.
    pub knowledge: FeatureMatrix,
    /// Similarity space for every edge builder.
    pub node_features: FeatureMatrix,
    pub compat: CompatibilityMatrix,
    pub qc_report: QcReport,
    pub downsample_report: DownsampleReport,
    pub notes: Vec<String>,
    pub timings: Vec<StageTiming>,
}

fn stage<T>(name: &'static str, timings: &mut Vec<StageTiming>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    log::info!("stage {name}");
    let out = f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })?;
    timings.push(StageTiming {
        stage: name.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

pub fn read_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let p = &cfg.inputs;
    let matrix = parse_matrix_market(&p.resolve(&p.matrix), &p.resolve(&p.cell_ids), &p.resolve(&p.gene_ids))?;
    let metadata = parse_metadata(&p.resolve(&p.metadata))?.aligned_to(&matrix)?;
    let cell_ontology = parse_obo(&p.resolve(&p.cell_ontology))?;
    let gene_ontology = parse_obo(&p.resolve(&p.gene_ontology))?;
    let annotations = parse_annotations(&p.resolve(&p.annotations), &gene_ontology)?;
    let phylogeny = parse_newick_file(&p.resolve(&p.phylogeny))?;
    metadata.validate(&phylogeny)?;
    Ok(Inputs {
        matrix,
        metadata,
        cell_ontology,
        gene_ontology,
        annotations,
        phylogeny,
    })
}

/// Runs the curation and feature stages.
pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let mut timings = Vec::new();
    let inputs = stage("ingest", &mut timings, || {
        cfg.check_inputs()?;
        read_inputs(cfg)
    })?;
    prepare_from(cfg, inputs, timings)
}

pub fn prepare_from(cfg: &PipelineConfig, inputs: Inputs, mut timings: Vec<StageTiming>) -> Result<Prepared> {
    let Inputs {
        matrix,
        metadata,
        cell_ontology,
        gene_ontology,
        annotations,
        phylogeny,
    } = inputs;
    let (cells_in, genes_in) = (matrix.n_cells(), matrix.n_genes());
    let mut notes = Vec::new();
    let (matrix, metadata, qc_report) = stage("qc", &mut timings, || qc::run(&matrix, &metadata, &cfg.qc))?;
    notes.extend(qc_report.notes.iter().cloned());
    let (matrix, metadata, downsample_report) = stage("downsample", &mut timings, || {
        stratified_downsample(&matrix, &metadata, &cfg.downsample)
    })?;
    notes.extend(downsample_report.notes.iter().cloned());
    let (expression, observation, knowledge, node_features) = stage("features", &mut timings, || {
        let (expression, zero_cells) = log_normalize(matrix, cfg.features.normalize_target_sum)?;
        if !zero_cells.is_empty() {
            notes.push(format!("{} cells have zero total counts", zero_cells.len()));
        }
        let fit_rows: Vec<usize> = (0..metadata.len())
            .filter(|&i| metadata.get(i).split == Split::Reference)
            .collect();
        let (observation, _, pca_notes) = pca(&expression, &fit_rows, &cfg.features)?;
        notes.extend(pca_notes);
        if cfg.topology.enable_go {
            let (knowledge, _, go_notes) =
                go_enrichment(&expression, &fit_rows, &annotations, &gene_ontology, &cfg.features)?;
            notes.extend(go_notes);
            let fused = fuse(&observation, &knowledge)?;
            Ok((expression, observation, knowledge, fused))
        } else {
            let knowledge = FeatureMatrix::empty(metadata.len(), View::Knowledge);
            let obs = observation.clone();
            Ok((expression, observation, knowledge, obs))
        }
    })?;
    let compat = stage("compatibility", &mut timings, || {
        let species: Vec<String> = metadata
            .iter()
            .map(|r| r.species.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let radius = resolve_radius(&phylogeny, cfg.topology.delta)?;
        CompatibilityMatrix::new(&phylogeny, &species, radius)
    })?;
    Ok(Prepared {
        cells_in,
        genes_in,
        expression,
        metadata,
        cell_ontology,
        phylogeny,
        observation,
        knowledge,
        node_features,
        compat,
        qc_report,
        downsample_report,
        notes,
        timings,
    })
}

/// Which cells are Reference for graph construction and which labels the
/// construction may read.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelView {
    pub is_reference: Vec<bool>,
    pub visible: Vec<Option<String>>,
}

impl LabelView {
    /// Reference cells with their labels; Query labels are hidden.
    pub fn from_metadata(meta: &CellMetadata) -> Self {
        let is_reference: Vec<bool> = meta.iter().map(|r| r.split == Split::Reference).collect();
        let visible = meta
            .iter()
            .map(|r| match r.split {
                Split::Reference => r.cell_type.clone(),
                Split::Query => None,
            })
            .collect();
        LabelView { is_reference, visible }
    }
}

/// Topology on prepared data, with Query cells attached.
pub fn build_graph(prepared: &Prepared, cfg: &PipelineConfig, labels: &LabelView) -> Result<(CellGraph, TopologyStats)> {
    let mut nodes = NodeTable::from_metadata(&prepared.metadata, &prepared.compat)?;
    nodes.is_reference.clone_from(&labels.is_reference);
    let visible: Vec<Option<&str>> = labels.visible.iter().map(|l| l.as_deref()).collect();
    let mask = SemanticMask::new(&prepared.cell_ontology, &visible, cfg.topology.onto_max_distance)?;
    let (graph, mut stats) = build_topology(
        prepared.node_features.clone(),
        &nodes,
        &mask,
        &prepared.compat,
        &cfg.topology,
    )?;
    let graph = attach_query(graph, &nodes, &prepared.compat, cfg.topology.k_align, &mut stats)?;
    Ok((graph, stats))
}
