use log::warn;

use crate::error::Result;
use crate::ingest::ExpressionMatrix;

/// Scales each cell to `target_sum` total counts, then applies `ln(1 + x)`.
/// All-zero cells stay all-zero; their ids are returned for the run log.
pub fn log_normalize(matrix: ExpressionMatrix, target_sum: f64) -> Result<(ExpressionMatrix, Vec<String>)> {
    let totals: Vec<f64> = (0..matrix.n_cells()).map(|c| matrix.row_sum(c)).collect();
    let zero_cells: Vec<String> = totals
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == 0.0)
        .map(|(c, _)| matrix.cell_ids()[c].clone())
        .collect();
    if !zero_cells.is_empty() {
        warn!("{} all-zero cells left unnormalized", zero_cells.len());
    }
    let out = matrix.map_to_log_normalized(|c, v| {
        let t = totals[c];
        if t > 0.0 {
            (v * target_sum / t).ln_1p()
        } else {
            0.0
        }
    })?;
    Ok((out, zero_cells))
}
