//! Toolkit for building and auditing Unified Audio Schema (UAS) corpora.

pub mod audit;
pub mod cli;
pub mod qa;
pub mod schema;
pub mod synthesis;
pub mod validation;
