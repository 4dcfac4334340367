pub mod corpus;
pub mod provider;
pub mod retrieval;
pub mod text;
pub mod polisher;
pub mod prompts;
pub mod record;
pub mod validate;
pub mod bridge;
pub mod comparison;
pub mod eval;
pub mod forge;
pub mod synth;
pub mod sim;
pub mod config;
pub mod app;
