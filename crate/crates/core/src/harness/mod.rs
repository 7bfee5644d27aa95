//! Configuration, packaged recipes, experiment dispatch and result tables.

pub mod config;
pub mod recipes;
pub mod run;
pub mod table;

pub use config::{ChannelKind, CodedDecode, ExperimentConfig, ExperimentKind};
pub use recipes::{recipe, recipe_names, recipes, Recipe};
pub use run::run;
pub use table::{Cell, Column, ResultTable};
