//! Core library for LLM-guided annotation of Dafny programs.
//!
//! The crate is organised around a small pipeline:
//!
//! - [`text`] — a tolerant structural model of Dafny source text: find
//!   methods, loops, statements and annotations, and insert/remove
//!   annotations without disturbing the surrounding bytes.
//! - [`verifier`] — a harness around an external Dafny-style verifier
//!   executable, with output classification, caching and bounded
//!   parallelism.
//! - [`proposer`] — prompt rendering and completion backends (HTTP or
//!   scripted) that turn a program into candidate annotations.
//! - [`search`] — greedy search that inserts proposed annotations one at a
//!   time, keeping only those the verifier accepts.
//! - [`extract`] — training-pair extraction from annotated programs by
//!   iterated removal of the last annotation.
//! - [`synth`] — an edit-graph pipeline that grows a corpus of synthetic
//!   programs via LLM editors with verifier-checked keep rules.
//! - [`eval`] — corpus evaluation: strip annotations, re-annotate via
//!   search, report the success rate.
//! - [`config`] — layered configuration (defaults, TOML file, environment,
//!   caller overrides).

pub mod config;
pub mod eval;
pub mod extract;
pub mod proposer;
pub mod search;
pub mod synth;
pub mod text;
pub mod verifier;
