//! Round-trip a dataset through the CSV layout, then re-read it with long
//! rows cut into overlapping windows.

use mesen::data::{generate_synthetic, ingest_csv, write_csv_layout, IngestOptions, SynthSpec};

fn main() -> mesen::Result<()> {
    let dir = std::env::temp_dir().join(format!("mesen-ingest-{}", std::process::id()));
    let ds = generate_synthetic(&SynthSpec::two_modality(3, 2, 4, 2, 32), 5)?;
    write_csv_layout(&ds, &dir)?;

    let back = ingest_csv(&dir, None, &IngestOptions::default())?;
    println!("read {} windows, identical: {}", back.len(), back == ds);

    // Treat each 32-step row as a recording and cut 16-step windows that
    // overlap by 8 steps: (32 - 16) / 8 + 1 = 3 windows per row.
    let schema = vec![("acc".to_owned(), (2, 16)), ("gyro".to_owned(), (2, 16))];
    let options = IngestOptions {
        overlap: 8,
        class_count: Some(3),
    };
    let windows = ingest_csv(&dir, Some(&schema), &options)?;
    println!("sliced into {} windows of 16 steps", windows.len());

    std::fs::remove_dir_all(&dir).map_err(|e| mesen::Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(())
}
