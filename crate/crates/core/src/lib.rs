pub mod dsl;
pub mod metrics;
pub mod synth;
pub mod nlp;
pub mod pipeline;
pub mod select;
pub mod suggest;
pub mod webtree;
