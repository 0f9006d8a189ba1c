//! Writes the synthetic stand-in datasets as CSV files with matching schemas.
//!
//! ```sh
//! cargo run -p gad-core --example make_synthetic -- out_dir [seed]
//! ```

use std::path::PathBuf;

use gad_core::experiments::{synthetic, DatasetSchema, SyntheticKind, TargetColumn};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "data".into()));
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    std::fs::create_dir_all(&dir)?;
    for kind in [
        SyntheticKind::PimaLike,
        SyntheticKind::AbaloneLikeClassification,
        SyntheticKind::AbaloneLikeRegression,
    ] {
        let ds = synthetic(kind, seed);
        let csv = dir.join(format!("{}.csv", kind.name()));
        ds.write_csv(&csv)?;
        let schema = DatasetSchema::new(kind.name(), ds.task, TargetColumn::Name("target".into()));
        std::fs::write(dir.join(format!("{}.toml", kind.name())), schema.to_toml_string())?;
        println!("{} ({} rows, {} features)", csv.display(), ds.len(), ds.dim());
    }
    Ok(())
}
