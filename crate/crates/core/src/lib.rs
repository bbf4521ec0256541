//! Cross-lingual caption augmentation and retrieval evaluation.
//!
//! The crate covers the data side (corpus ingestion and splits, the object
//! vocabulary, a hypernym taxonomy, and the HYPER / PARA-RND / PARA-TGT /
//! PARA-CMB caption augmentation strategies) and the evaluation side
//! (recall@K and mean recall, a recognition threshold sweep, and corpus
//! statistics). All model inference goes through [`gateway::Gateway`], which
//! caches every reply on disk so runs can be replayed without a backend.

pub mod analytics;
pub mod augment;
pub mod corpus;
mod error;
pub mod gateway;
pub mod recognition;
pub mod retrieval;
pub mod taxonomy;
pub mod text;
pub mod vocab;

pub use corpus::{
    load_flickr_tokens, make_splits, CaptionFilter, CaptionRecord, CaptionSetFile, CaptionSource, Corpus, ImageRef,
    Split, SplitAssignment,
};
pub use error::{Error, Result};
pub use gateway::{CacheStore, Gateway, ProviderRequest, ProviderResponse};
pub use retrieval::{EmbeddingTable, RetrievalReport};
pub use taxonomy::{HypernymConfig, Taxonomy};
pub use vocab::{mention_profile, MentionSpan, ObjectClass, ObjectVocabulary};
