pub mod corpus;
pub mod embedding;
pub mod gt;
pub mod harness;
pub mod labeling;
pub mod lexical;
pub mod numfmt;
pub mod report;
