//! Dataset ingestion: CSV with a header row, seeded disjoint splits,
//! train-split standardization, and a checksummed cache.
//!
//! ```bash
//! cargo run --example ingest_dataset
//! ```

use lutforge::io::dataset::{ingest, load_cache, save_cache, DataFormat, DatasetSpec, TaskKind};
use lutforge::io::synth;

fn main() -> lutforge::Result<()> {
    let dir = std::env::temp_dir().join("lutforge_ingest_demo");
    std::fs::create_dir_all(&dir)?;
    let csv_path = dir.join("jets.csv");
    let (x, y) = synth::synthetic_jets(800, 11);
    synth::write_csv(&csv_path, &x, &y, "label")?;

    let spec = DatasetSpec {
        source: csv_path.clone(),
        format: DataFormat::Csv,
        feature_columns: None,
        label_column: "label".into(),
        task: TaskKind::Classification,
        split_seed: 13,
        val_fraction: 0.10,
        test_fraction: 0.10,
        standardize: true,
    };
    let ds = ingest(&spec)?;
    ds.splits.check_disjoint()?;
    println!(
        "{} rows x {} features -> {} train / {} val / {} test (disjoint)",
        ds.n_rows(),
        ds.n_features(),
        ds.splits.train.len(),
        ds.splits.val.len(),
        ds.splits.test.len()
    );
    println!(
        "feature 0 standardized with mean {:.4}, std {:.4}",
        ds.norm_mean[0], ds.norm_std[0]
    );

    let cache_path = dir.join("cache.json");
    save_cache(&ds, &spec, &cache_path)?;
    let back = load_cache(&cache_path)?;
    assert_eq!(back.features, ds.features);
    println!("cache round-trip verified at {}", cache_path.display());
    Ok(())
}
