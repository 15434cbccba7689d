//! Paired dataset producers: synthetic generation, CSV ingestion, user-level
//! splitting and few-label sampling.

mod csv_io;
mod split;
mod synth;

pub use csv_io::{
    discover_modalities, ingest_csv, samples_per_user, write_csv_layout, IngestOptions, Schema,
};
pub use split::{
    labeling_rate, partition_users, sample_few_labels, split_by_user, FewShotSelection, Split,
};
pub use synth::{
    generate_synthetic, generate_synthetic_traced, mixing_matrix, render, Latent, ModalitySpec,
    SampleTrace, SignalFamily, SynthSpec, BASE_CYCLES,
};
