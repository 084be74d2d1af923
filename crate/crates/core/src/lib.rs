//! Screening toolkit for gender-discriminatory language in Dutch job
//! vacancies: corpus handling, term search, annotation, features,
//! classification and evaluation.

pub mod annotate;
pub mod classify;
pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod matrix;
pub mod pipeline;
pub mod seed;
pub mod store;
pub mod terms;
pub mod text;
