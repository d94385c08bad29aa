//! Serialization, dataset ingestion and evaluation metrics.

pub mod dataset;
pub mod manifest;
pub mod metrics;
pub mod synth;

pub use dataset::{ingest, DataFormat, Dataset, DatasetSpec, TaskKind};
pub use manifest::{load_manifest, manifest_to_string, save_manifest, ModelManifest};
pub use metrics::{metric_accuracy, metric_mse, metric_separation};

use std::io::Write;
use std::path::Path;

/// Atomically write bytes (write-temp-rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    let tmp = path.with_extension("tmp.part");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
