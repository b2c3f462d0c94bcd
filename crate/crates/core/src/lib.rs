pub mod analysis;
pub mod assembler;
pub mod development;
pub mod form;
pub mod harmony;
pub mod io;
pub mod motif;
pub mod refine;
pub mod rhythm;
pub mod types;
