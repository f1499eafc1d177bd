pub mod cli;
pub mod codec;
pub mod error;
pub mod geom;
pub mod ingest;
pub mod morton;
pub mod oracle;
pub mod qtree;
pub mod refine;
pub mod store;
