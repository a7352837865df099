//! Conversational semantic parsing over web tables.
//!
//! Questions are mapped to SQL-like logical forms built from a small action
//! alphabet, executed against a typed table, and scored by log-linear
//! decision modules trained from question/answer pairs.

pub mod data;
pub mod exec;
pub mod lf;
pub mod pipeline;
pub mod scorer;
pub mod search;
pub mod session;
pub mod synthetic;
pub mod table;
pub mod text;
