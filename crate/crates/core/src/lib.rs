//! Citation matching against a bibliographic corpus: reference extraction,
//! BM25 candidate retrieval, pairwise features, a random-forest match
//! classifier, penalized evaluation, link statistics and field search.

pub mod classifier;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod index;
pub mod kvconfig;
pub mod links;
pub mod matcher;
pub mod queryparse;
pub mod refextract;
pub mod synth;
