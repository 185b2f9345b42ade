//! File formats and the synthetic corpus.

pub mod corpus;
pub mod dataset;
pub mod s5;
pub mod synth;
pub mod ucr;

pub use corpus::{anomaly_corpus, CorpusConfig, CorpusSeries};
pub use dataset::{read_dataset, write_dataset, DATASET_FORMAT_VERSION};
pub use s5::{read_s5, write_s5};
pub use synth::{generate_synthetic, generate_synthetic_with, AnomalySpec, AnomalyType, BaseSignal, SynthConfig};
pub use ucr::{class_count, read_ucr, write_ucr, UcrExample};
