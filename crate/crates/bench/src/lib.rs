//! Shared fixtures for the benchmarks.

use mothscan_core::dataset::PatchRecord;
use mothscan_core::synth::patch_set;

/// `n` moth and `n` other patches at the default window size.
pub fn records(n: usize, seed: u64) -> Vec<PatchRecord> {
    patch_set(n, n, (64, 48), seed)
        .into_iter()
        .enumerate()
        .map(|(i, (img, label))| PatchRecord::original(format!("b{i}"), img, label))
        .collect()
}
