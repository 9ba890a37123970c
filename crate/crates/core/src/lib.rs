//! Mining PTM reuse evolution from Python repositories.

#![allow(clippy::type_complexity)]

pub mod catalog;
pub mod change;
pub mod config;
pub mod docs;
pub mod extract;
pub mod filters;
pub mod git;
pub mod history;
pub mod manifest;
pub mod metrics;
pub mod multiset;
pub mod pipeline;
pub mod python;
pub mod report;
pub mod stats;
pub mod store;
pub mod testkit;

pub use catalog::{ArgSpec, CallKind, Catalog, PtmIndex, ReuseSignature};
pub use extract::{FileSnapshot, PtmOccurrence, Resolution};
pub use filters::{apply_fp_filters, FilterConfig, FilterId};
pub use multiset::Multiset;
