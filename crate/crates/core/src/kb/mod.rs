//! Embedding space and mention-prior dictionary.

mod dict;
mod store;
pub mod synthetic;

pub use dict::{merge_priors, normalize_surface, MentionDictionary, Prior};
pub use store::{cosine, relatedness, EmbeddingStore, Sense};
pub use synthetic::{generate_synthetic_kb, SyntheticKb, SyntheticKbConfig};

/// Human-readable title for an entity id (`England_cricket_team` -> `England cricket team`).
pub fn entity_title(id: &str) -> String {
    id.replace('_', " ")
}
