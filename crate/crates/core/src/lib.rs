//! Knowledge-guided cell graph construction for single-cell expression data.
//!
//! The pipeline turns a sparse counts matrix plus symbolic priors (a cell
//! type ontology, a gene function ontology with gene annotations, and a
//! species tree) into a homogeneous cell graph whose edges carry
//! provenance tags, with fused PCA + gene-set node features.
//!
//! Stage order: [`ingest`] → [`qc`] → [`downsample`] → [`features`] →
//! [`topology`], with [`eval`] for graph-quality probes and [`synth`] for
//! seeded corpora with known ground truth.

pub mod downsample;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod numeric;
pub mod ontology;
pub mod pipeline;
pub mod qc;
pub mod synth;
pub mod topology;

pub use error::{Error, ErrorKind, Result};
