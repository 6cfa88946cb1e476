//! Sparse answer matrices, CSV ingestion and preprocessing, student splits,
//! and per-student target hold-out.

mod ingest;
mod matrix;
mod split;

pub use ingest::{
    ingest_csv, ingest_reader, matrix_records, preprocess, write_csv, AnswerRecord, CsvSchema, Ingested,
    QuestionMeta,
};
pub use matrix::{Response, SparseAnswerMatrix};
pub use split::{hold_out_targets, split_students, StudentSplit};
