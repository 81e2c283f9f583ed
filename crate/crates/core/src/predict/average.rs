use super::{FeatureVector, LoadDataset};
use crate::error::{EmsError, Result};

/// Mean load factor per (day of week, hour); empty cells fall back to the
/// global mean.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageModel {
    pub(crate) table: [[Option<f64>; 24]; 7],
    pub(crate) global_mean: f64,
}

impl AverageModel {
    pub fn cell(&self, day_of_week: usize, hour: usize) -> Option<f64> {
        self.table[day_of_week][hour]
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub(crate) fn predict(&self, x: &FeatureVector) -> f64 {
        self.table[usize::from(x.day_of_week)][usize::from(x.hour)].unwrap_or(self.global_mean)
    }
}

/// Tabulates the mean load factor of every (day of week, hour) cell.
pub fn train_average(data: &LoadDataset) -> Result<AverageModel> {
    if data.is_empty() {
        return Err(EmsError::domain("cannot train on an empty dataset"));
    }
    let mut sum = [[0.0f64; 24]; 7];
    let mut count = [[0usize; 24]; 7];
    for r in &data.rows {
        let (d, h) = (usize::from(r.features.day_of_week), usize::from(r.features.hour));
        if d > 6 || h > 23 {
            return Err(EmsError::domain(format!("row with day {d} hour {h} out of range")));
        }
        sum[d][h] += r.load_factor;
        count[d][h] += 1;
    }
    let mut table = [[None; 24]; 7];
    for d in 0..7 {
        for h in 0..24 {
            if count[d][h] > 0 {
                table[d][h] = Some(sum[d][h] / count[d][h] as f64);
            }
        }
    }
    let global_mean = data.rows.iter().map(|r| r.load_factor).sum::<f64>() / data.len() as f64;
    Ok(AverageModel { table, global_mean })
}
