//! Personal health insights toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`datamodel`]: wearable schemas, dataset I/O and Markdown rendering.
//! - [`dsl`]: the sandboxed analysis language (lexer, parser, evaluator,
//!   temporal period resolution and observation formatting).
//! - [`synthgen`]: synthetic wearable users (copula context, latent-factor
//!   AR(1) daily sequences, activities, missingness).
//! - [`benchgen`]: objective query templates, instantiation and the
//!   independent brute-force oracle.
//! - [`retrieval`]: BM25 search over a shipped health-knowledge corpus.
//! - [`agent`]: the Thought/Act/Observe loop, step grammar, few-shot
//!   selection and model backends.
//! - [`eval`]: exact-match scoring, bootstrap intervals, error/recovery
//!   rates and the three method runners.

pub mod agent;
pub mod benchgen;
pub mod datamodel;
pub mod dsl;
pub mod eval;
pub mod retrieval;
pub mod synthgen;
