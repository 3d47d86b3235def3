pub mod analyze;
pub mod augment;
pub mod evaluate;
pub mod infer;
pub mod models;
pub mod overlay;
pub mod split;
