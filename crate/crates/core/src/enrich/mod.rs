//! Knowledge enrichment: entity extraction, description retrieval, and
//! attention-based fusion of description features into the text feature.

mod cache;
mod enhance;
mod entities;
mod fetch;
mod sentence;

pub use cache::{CachedDescription, DescriptionCache};
pub use enhance::{EnhanceGrads, EnhanceParams, EnhanceTrace};
pub use entities::{extract_entities, Entity, Gazetteer};
#[cfg(feature = "live-fetch")]
pub use fetch::UreqTransport;
pub use fetch::{
    load_fixtures, write_fixtures, CountingTransport, DescriptionFetcher, DescriptionSource, EntityDescription,
    FetchMode, HttpResponse, Lookup, Transport, DEFAULT_USER_AGENT, DEFAULT_WIKI_BASE,
};
pub use sentence::first_sentence;
