pub mod coherence;
pub mod comparative;
pub mod corpus_store;
pub mod error;
pub mod exports;
pub mod interpretation;
pub mod matrix;
pub mod preprocess;
pub mod project;
pub mod provenance;
pub mod scalar;
pub mod topic_engine;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Real;

pub type TopicModelF64 = topic_engine::TopicModel<f64>;
pub type TopicModelF32 = topic_engine::TopicModel<f32>;
pub type TestResultF64 = comparative::TestResult<f64>;
pub type TopicMatchF64 = comparative::TopicMatch<f64>;
pub type CoherenceReportF64 = coherence::CoherenceReport<f64>;
