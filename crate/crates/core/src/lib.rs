//! Zero-interaction pairing schemes based on shared context, and the
//! tooling to evaluate how well they tell colocated devices apart.

pub mod datagen;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod io;
pub mod ml;
pub mod model;
pub mod num;
pub mod pipeline;
pub mod randomness;
pub mod schemes;

pub use error::{Error, Result};
pub use fingerprint::{fingerprint_similarity, Fingerprint};
pub use num::Real;

/// Double-precision instantiations of the generic types.
pub type KarapanosConfigF64 = schemes::karapanos::KarapanosConfig<f64>;
pub type SimilarityScoreF64 = schemes::karapanos::SimilarityScore<f64>;
pub type SchurmannFingerprinterF64 = schemes::schurmann::SchurmannFingerprinter<f64>;
pub type AudioFeaturesF64 = schemes::truong::AudioFeatures<f64>;
pub type BandPassF64 = dsp::BandPass<f64>;
pub type FilterBankF64 = dsp::FilterBank<f64>;
pub type PeakF64 = dsp::Peak<f64>;
pub type EvaluationRecordF64 = model::EvaluationRecord<f64>;
