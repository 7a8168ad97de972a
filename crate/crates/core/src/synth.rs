//! Seeded synthetic corpora with known cell types, batches, species and
//! planted gene programs.
//!
//! Expected log-expression of gene g in a cell of type t, domain d and
//! species s is
//!
//! ```text
//! base[g] + type_effect·type_dev[t][g] + program_effect·[g ∈ program of t]
//!         + batch_effect_scale·batch_dev[d][g]
//!         + species_noise_scale·divergence[t]·species_dev[s][g]
//! ```
//!
//! `divergence[t]` is 1 unless `type_divergence_spread` is positive, in
//! which case it is uniform on `[1 − spread, 1 + spread]`: types then
//! differ in gene-level drift between species while programs stay shared.
//!
//! scaled by a per-cell library factor. Counts are Poisson with a gamma
//! mixed rate, then zeroed independently with `dropout_rate`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    annotations_string, id_list_string, matrix_market_string, metadata_string, newick_string, obo_string,
    CellMetadata, CellRecord, ExpressionMatrix, GeneAnnotationMap, NormalizationState, OntologyDag, PhyloNode,
    PhyloTree, Split, Term,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OntologyShape {
    /// Every type is a direct child of the root; distinct types are two
    /// hops apart.
    Star,
    /// Type k is a child of type k − 1; neighbouring types are one hop apart.
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_species: usize,
    pub n_types: usize,
    pub n_domains_per_species: usize,
    pub cells_per_type_per_domain: usize,
    pub n_genes: usize,
    pub n_go_programs: usize,
    pub program_size: usize,
    pub program_effect: f64,
    pub batch_effect_scale: f64,
    pub species_noise_scale: f64,
    pub dropout_rate: f64,
    /// Set from the global seed when read from a pipeline config.
    #[serde(skip_deserializing)]
    pub seed: u64,
    /// Spread of the per-type deviation applied to every gene.
    pub type_effect: f64,
    /// Random gene sets that carry no type signal.
    pub n_background_terms: usize,
    pub n_mito_genes: usize,
    /// Mean of the per-gene base log-expression.
    pub base_log_mean: f64,
    /// Gamma-mixing dispersion; 0 gives plain Poisson counts.
    pub dispersion: f64,
    pub library_size_sd: f64,
    /// Share of each (species, domain, type) group marked Query.
    pub query_fraction: f64,
    pub ontology_shape: OntologyShape,
    /// Half-width of the per-type multiplier on species noise, in [0, 1).
    pub type_divergence_spread: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_species: 3,
            n_types: 5,
            n_domains_per_species: 3,
            cells_per_type_per_domain: 40,
            n_genes: 500,
            n_go_programs: 10,
            program_size: 20,
            program_effect: 1.5,
            batch_effect_scale: 0.5,
            species_noise_scale: 0.3,
            dropout_rate: 0.1,
            seed: 0,
            type_effect: 0.25,
            n_background_terms: 40,
            n_mito_genes: 5,
            base_log_mean: 0.5,
            dispersion: 0.2,
            library_size_sd: 0.2,
            query_fraction: 0.0,
            ontology_shape: OntologyShape::Star,
            type_divergence_spread: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_species", self.n_species),
            ("n_types", self.n_types),
            ("n_domains_per_species", self.n_domains_per_species),
            ("cells_per_type_per_domain", self.cells_per_type_per_domain),
            ("n_genes", self.n_genes),
            ("n_go_programs", self.n_go_programs),
            ("program_size", self.program_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("synth.{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("synth.dropout_rate must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.type_divergence_spread) {
            return Err(Error::Config("synth.type_divergence_spread must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.query_fraction) {
            return Err(Error::Config("synth.query_fraction must lie in [0, 1)".into()));
        }
        let scales = [
            ("program_effect", self.program_effect),
            ("batch_effect_scale", self.batch_effect_scale),
            ("species_noise_scale", self.species_noise_scale),
            ("type_effect", self.type_effect),
            ("dispersion", self.dispersion),
            ("library_size_sd", self.library_size_sd),
        ];
        for (name, v) in scales {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("synth.{name} must be finite and non-negative")));
            }
        }
        if !self.base_log_mean.is_finite() {
            return Err(Error::Config("synth.base_log_mean must be finite".into()));
        }
        if self.n_mito_genes >= self.n_genes {
            return Err(Error::Config("synth.n_mito_genes must be below n_genes".into()));
        }
        let free = self.n_genes - self.n_mito_genes;
        if self.n_go_programs * self.program_size > free {
            return Err(Error::Config(format!(
                "{} programs of {} genes do not fit in {free} non-mitochondrial genes",
                self.n_go_programs, self.program_size
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_species * self.n_domains_per_species * self.n_types * self.cells_per_type_per_domain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub term: String,
    pub target_type: String,
    pub genes: Vec<String>,
}

/// Every latent draw behind a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub species: Vec<String>,
    pub domains: Vec<String>,
    pub cell_types: Vec<String>,
    pub genes: Vec<String>,
    pub ontology_root: String,
    pub programs: Vec<Program>,
    pub background_terms: BTreeMap<String, Vec<String>>,
    pub mito_genes: Vec<String>,
    pub base_log_mean: Vec<f64>,
    pub type_deviation: Vec<Vec<f64>>,
    pub batch_deviation: Vec<Vec<f64>>,
    pub species_deviation: Vec<Vec<f64>>,
    /// Per-type multiplier on the species deviation.
    pub type_divergence: Vec<f64>,
    pub library_factor: Vec<f64>,
}

impl GroundTruth {
    /// Expected log-expression (before library scaling) for one group.
    pub fn expected_log_profile(&self, species: usize, domain: usize, cell_type: usize) -> Vec<f64> {
        let c = &self.config;
        let gene_index: BTreeMap<&str, usize> = self.genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
        let mut target = vec![false; self.genes.len()];
        for p in self.programs.iter().filter(|p| p.target_type == self.cell_types[cell_type]) {
            for g in &p.genes {
                target[gene_index[g.as_str()]] = true;
            }
        }
        (0..self.base_log_mean.len())
            .map(|g| {
                self.base_log_mean[g]
                    + c.type_effect * self.type_deviation[cell_type][g]
                    + if target[g] { c.program_effect } else { 0.0 }
                    + c.batch_effect_scale * self.batch_deviation[domain][g]
                    + c.species_noise_scale * self.type_divergence[cell_type] * self.species_deviation[species][g]
            })
            .collect()
    }
}

/// A generated corpus in memory.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub matrix: ExpressionMatrix,
    pub metadata: CellMetadata,
    pub cell_ontology: OntologyDag,
    pub gene_ontology: OntologyDag,
    pub phylogeny: PhyloTree,
    pub annotations: GeneAnnotationMap,
    pub truth: GroundTruth,
}

/// File names written by [`write_corpus`].
pub mod files {
    pub const MATRIX: &str = "matrix.mtx";
    pub const CELL_IDS: &str = "cell_ids.txt";
    pub const GENE_IDS: &str = "gene_ids.txt";
    pub const METADATA: &str = "metadata.tsv";
    pub const CELL_ONTOLOGY: &str = "cell_ontology.obo";
    pub const GENE_ONTOLOGY: &str = "gene_ontology.obo";
    pub const ANNOTATIONS: &str = "annotations.tsv";
    pub const PHYLOGENY: &str = "phylogeny.nwk";
    pub const GROUND_TRUTH: &str = "ground_truth.json";
}

pub fn gene_name(g: usize, n_mito: usize) -> String {
    if g < n_mito {
        format!("MT-G{g:03}")
    } else {
        format!("G{:05}", g - n_mito)
    }
}

pub fn type_term(t: usize) -> String {
    format!("CL:9{:06}", t + 1)
}

const CELL_ROOT: &str = "CL:9000000";
const GO_ROOT: &str = "GO:9000000";

/// Balanced binary tree over `names` with unit branch lengths, in preorder.
fn balanced_tree(names: &[String]) -> Result<PhyloTree> {
    fn build(names: &[String], parent: Option<usize>, out: &mut Vec<PhyloNode>) {
        let me = out.len();
        out.push(PhyloNode {
            name: (names.len() == 1).then(|| names[0].clone()),
            parent,
            children: Vec::new(),
            length: parent.map(|_| 1.0),
        });
        if let Some(p) = parent {
            out[p].children.push(me);
        }
        if names.len() > 1 {
            let mid = names.len().div_ceil(2);
            build(&names[..mid], Some(me), out);
            build(&names[mid..], Some(me), out);
        }
    }
    let mut nodes = Vec::new();
    build(names, None, &mut nodes);
    PhyloTree::from_parent_links(nodes)
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn generate(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_genes = cfg.n_genes;
    let genes: Vec<String> = (0..n_genes).map(|g| gene_name(g, cfg.n_mito_genes)).collect();
    let species: Vec<String> = (0..cfg.n_species).map(|s| format!("sp{s}")).collect();
    let domains: Vec<String> = species
        .iter()
        .flat_map(|s| (0..cfg.n_domains_per_species).map(move |d| format!("{s}_batch{d}")))
        .collect();
    let types: Vec<String> = (0..cfg.n_types).map(type_term).collect();

    // Latent draws, in a fixed order independent of the effect scales.
    let base: Vec<f64> = normals(&mut rng, n_genes).iter().map(|z| cfg.base_log_mean + z).collect();
    let mut free: Vec<usize> = (cfg.n_mito_genes..n_genes).collect();
    free.shuffle(&mut rng);
    let programs: Vec<Program> = (0..cfg.n_go_programs)
        .map(|p| {
            let mut members: Vec<usize> = free[p * cfg.program_size..(p + 1) * cfg.program_size].to_vec();
            members.sort_unstable();
            Program {
                term: format!("GO:91{p:05}"),
                target_type: types[p % cfg.n_types].clone(),
                genes: members.iter().map(|&g| genes[g].clone()).collect(),
            }
        })
        .collect();
    let type_deviation: Vec<Vec<f64>> = (0..cfg.n_types).map(|_| normals(&mut rng, n_genes)).collect();
    let batch_deviation: Vec<Vec<f64>> = (0..domains.len()).map(|_| normals(&mut rng, n_genes)).collect();
    let species_deviation: Vec<Vec<f64>> = (0..cfg.n_species).map(|_| normals(&mut rng, n_genes)).collect();
    let n_free = n_genes - cfg.n_mito_genes;
    let background_size = cfg.program_size.min(n_free);
    let mut background_terms = BTreeMap::new();
    for b in 0..cfg.n_background_terms {
        let mut members: Vec<usize> = index::sample(&mut rng, n_free, background_size)
            .into_iter()
            .map(|i| i + cfg.n_mito_genes)
            .collect();
        members.sort_unstable();
        background_terms.insert(format!("GO:92{b:05}"), members.iter().map(|&g| genes[g].clone()).collect::<Vec<_>>());
    }
    // Drawn last and only when enabled, so corpora without it are unchanged.
    let spread = cfg.type_divergence_spread;
    let type_divergence: Vec<f64> = (0..cfg.n_types)
        .map(|_| if spread > 0.0 { rng.random_range(1.0 - spread..=1.0 + spread) } else { 1.0 })
        .collect();

    let mut truth = GroundTruth {
        config: cfg.clone(),
        species: species.clone(),
        domains: domains.clone(),
        cell_types: types.clone(),
        genes: genes.clone(),
        ontology_root: CELL_ROOT.to_string(),
        programs,
        background_terms,
        mito_genes: genes[..cfg.n_mito_genes].to_vec(),
        base_log_mean: base,
        type_deviation,
        batch_deviation,
        species_deviation,
        type_divergence,
        library_factor: Vec::with_capacity(cfg.n_cells()),
    };

    let gamma_shape = if cfg.dispersion > 0.0 { 1.0 / cfg.dispersion } else { 0.0 };
    let library = LogNormal::new(0.0, cfg.library_size_sd).map_err(|e| Error::Config(e.to_string()))?;
    let n_query_per_group = (cfg.query_fraction * cfg.cells_per_type_per_domain as f64).round() as usize;
    let mut records = Vec::with_capacity(cfg.n_cells());
    let mut triplets = Vec::new();
    for s in 0..cfg.n_species {
        for local_d in 0..cfg.n_domains_per_species {
            let d = s * cfg.n_domains_per_species + local_d;
            for t in 0..cfg.n_types {
                let profile: Vec<f64> = truth.expected_log_profile(s, d, t).iter().map(|l| l.exp()).collect();
                for c in 0..cfg.cells_per_type_per_domain {
                    let cell = records.len();
                    let lib: f64 = library.sample(&mut rng);
                    truth.library_factor.push(lib);
                    for (g, &mu) in profile.iter().enumerate() {
                        let mean = lib * mu;
                        let rate = if gamma_shape > 0.0 {
                            Gamma::new(gamma_shape, mean / gamma_shape)
                                .map_err(|e| Error::Internal(e.to_string()))?
                                .sample(&mut rng)
                        } else {
                            mean
                        };
                        let count: f64 = if rate > 0.0 {
                            Poisson::new(rate).map_err(|e| Error::Internal(e.to_string()))?.sample(&mut rng)
                        } else {
                            0.0
                        };
                        if count > 0.0 && !(cfg.dropout_rate > 0.0 && rng.random_bool(cfg.dropout_rate)) {
                            triplets.push((cell, g, count));
                        }
                    }
                    records.push(CellRecord {
                        cell_id: format!("c{cell:06}"),
                        species: species[s].clone(),
                        cell_type: Some(types[t].clone()),
                        domain: domains[d].clone(),
                        split: if c >= cfg.cells_per_type_per_domain - n_query_per_group {
                            Split::Query
                        } else {
                            Split::Reference
                        },
                    });
                }
            }
        }
    }
    let cell_ids: Vec<String> = records.iter().map(|r| r.cell_id.clone()).collect();
    let matrix = ExpressionMatrix::from_triplets(cell_ids, genes.clone(), triplets, NormalizationState::Raw)?;

    let mut cell_terms = vec![Term {
        id: CELL_ROOT.to_string(),
        name: "cell".into(),
    }];
    let mut cell_edges = Vec::new();
    for (t, id) in types.iter().enumerate() {
        cell_terms.push(Term {
            id: id.clone(),
            name: format!("type {t}"),
        });
        let parent = match (cfg.ontology_shape, t) {
            (OntologyShape::Chain, t) if t > 0 => types[t - 1].clone(),
            _ => CELL_ROOT.to_string(),
        };
        cell_edges.push((id.clone(), parent));
    }
    let cell_ontology = OntologyDag::new(cell_terms, &cell_edges)?;

    let mut go_terms = vec![Term {
        id: GO_ROOT.to_string(),
        name: "biological process".into(),
    }];
    let mut go_edges = Vec::new();
    for p in &truth.programs {
        go_terms.push(Term {
            id: p.term.clone(),
            name: format!("program for {}", p.target_type),
        });
        go_edges.push((p.term.clone(), GO_ROOT.to_string()));
    }
    for id in truth.background_terms.keys() {
        go_terms.push(Term {
            id: id.clone(),
            name: "background process".into(),
        });
        go_edges.push((id.clone(), GO_ROOT.to_string()));
    }
    let gene_ontology = OntologyDag::new(go_terms, &go_edges)?;
    let mut annotations = GeneAnnotationMap::new();
    for p in &truth.programs {
        for g in &p.genes {
            annotations.insert(g, &p.term, &gene_ontology)?;
        }
    }
    for (term, members) in &truth.background_terms {
        for g in members {
            annotations.insert(g, term, &gene_ontology)?;
        }
    }

    Ok(Corpus {
        matrix,
        metadata: CellMetadata::new(records),
        cell_ontology,
        gene_ontology,
        phylogeny: balanced_tree(&species)?,
        annotations,
        truth,
    })
}

/// Writes every corpus file into `dir`, which must exist.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    let write = |name: &str, text: &str| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    };
    write(files::MATRIX, &matrix_market_string(&corpus.matrix))?;
    write(files::CELL_IDS, &id_list_string(corpus.matrix.cell_ids()))?;
    write(files::GENE_IDS, &id_list_string(corpus.matrix.gene_ids()))?;
    write(files::METADATA, &metadata_string(&corpus.metadata))?;
    write(files::CELL_ONTOLOGY, &obo_string(&corpus.cell_ontology))?;
    write(files::GENE_ONTOLOGY, &obo_string(&corpus.gene_ontology))?;
    write(files::ANNOTATIONS, &annotations_string(&corpus.annotations))?;
    write(files::PHYLOGENY, &newick_string(&corpus.phylogeny))?;
    let json = serde_json::to_string_pretty(&corpus.truth).map_err(|e| Error::Internal(e.to_string()))?;
    write(files::GROUND_TRUTH, &(json + "\n"))
}
