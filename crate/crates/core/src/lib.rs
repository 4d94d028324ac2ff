pub mod backend;
pub mod datagen;
pub mod domain;
pub mod evaluation;
pub mod interface;
pub mod kernel;
pub mod prompting;
pub mod sampling;
pub mod session;
