//! Closest-in-time matching between two sorted timestamp sequences.

use crate::error::{Error, Result};

/// Index of the entry of `sorted` closest to `t`; ties go to the earlier entry.
pub fn nearest_index(sorted: &[u64], t: u64) -> Option<usize> {
    if sorted.is_empty() {
        return None;
    }
    let i = sorted.partition_point(|&s| s < t);
    if i == 0 {
        return Some(0);
    }
    if i == sorted.len() {
        return Some(sorted.len() - 1);
    }
    let before = t - sorted[i - 1];
    let after = sorted[i] - t;
    Some(if after < before { i } else { i - 1 })
}

pub(crate) fn check_sorted_times(times: &[u64], what: &str) -> Result<()> {
    if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Validation(format!(
            "{what} not sorted by time at index {}",
            i + 1
        )));
    }
    Ok(())
}
