//! Curation toolkit for multimodal training corpora.
//!
//! The pipeline stages, in the order they are usually run:
//!
//! 1. [`corpus`] — the sample/dataset data model, manifest ingestion, and
//!    JSONL shard streaming.
//! 2. [`quality`] — five-dimensional LLM-judge quality assessment with
//!    keep/drop decisions per dataset.
//! 3. [`lengths`] — multimodal token-length accounting under a configurable
//!    visual-token budget and a pluggable text tokenizer.
//! 4. [`packer`] — First-Fit-Decreasing packing of samples into
//!    capacity-bounded bins and the packed JSON file format.
//! 5. [`mixer`] — stage-wise training-mixture construction: refusal
//!    filtering, seeded down-sampling, and modality reporting.
//! 6. [`pooling`] — a numeric reference for the adaptive-average-pooling
//!    visual projector (patch-grid downsampling arithmetic).

pub mod corpus;
pub mod lengths;
pub mod mixer;
pub mod packer;
pub mod pooling;
pub mod quality;
pub mod sampling;
