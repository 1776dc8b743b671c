//! Interaction data, filtering, the unseen-domain split and the synthetic generator.

mod dataset;
mod filter;
mod io;
mod split;
mod synthetic;

pub use dataset::{DatasetBuilder, Interaction, InteractionDataset};
pub use filter::filter_dataset;
pub use io::{load_interactions, read_interactions, save_interactions, write_interactions};
pub use split::{
    apply_manifest, make_mdrau_split, EvaluationSplit, HiddenEntry, Partition, Role,
    SplitManifest, DEFAULT_HIDE_PROB, DEFAULT_VAL_FRACTION,
};
pub use synthetic::{
    cluster_of_item_id, generate_synthetic, item_cluster, SyntheticConfig, SyntheticData,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("item `{item}` appears in domains `{first}` and `{second}`")]
    ItemInTwoDomains {
        item: String,
        first: String,
        second: String,
    },
    #[error("duplicate interaction ({user}, {item})")]
    DuplicateInteraction { user: String, item: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error("split: {0}")]
    Split(String),
    #[error("split manifest: {0}")]
    Manifest(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
