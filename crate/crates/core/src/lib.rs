//! Conditional discrete graph diffusion for generating molecules against a
//! pair of protein targets.

pub mod autodiff;
pub mod condition;
pub mod denoiser;
pub mod diffusion;
pub mod ingest;
pub mod metrics;
pub mod molgraph;
pub mod sampler;
pub mod seed;
pub mod smiles;
pub mod tensor;
pub mod trainer;
