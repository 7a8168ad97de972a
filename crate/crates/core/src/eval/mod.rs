//! Graph-quality probes: split plans, label-propagation classification,
//! community detection, partition agreement metrics and cross-view
//! alignment.

mod crossview;
mod metrics;
mod propagate;
mod split;

pub use crossview::{cross_view_alignment, CrossViewReport, TypeAlignment, ViewSummary};
pub use metrics::{ami, ari, expected_mutual_information};
pub use propagate::{
    cluster, label_propagation_classify, relabel_by_first_appearance, CLASSIFY_MAX_ITERATIONS, CLUSTER_MAX_ROUNDS,
};
pub use split::{
    make_split, Role, SplitMode, SplitPlan, MIN_STRATIFIED_TYPE_SIZE, SEEN_TYPE_FRACTION, TEST_FRACTION,
    TRAIN_FRACTION, VAL_FRACTION,
};

/// Fraction of `cells` whose prediction equals the truth. `None` for an
/// empty set.
pub fn accuracy(predicted: &[u32], truth: &[u32], cells: &[usize]) -> Option<f64> {
    if cells.is_empty() {
        return None;
    }
    let hits = cells.iter().filter(|&&c| predicted[c] == truth[c]).count();
    Some(hits as f64 / cells.len() as f64)
}
