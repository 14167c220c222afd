//! Physical-layer device authentication from backscatter-tag multipath
//! signatures.
//!
//! Backscatter tags next to an access point reflect an incoming message in
//! turn, imprinting a transmitter-location-dependent amplitude signature on
//! the received signal. Two messages from the same transmitter within the
//! channel coherence time carry matching signatures; an impersonator at a
//! different location does not. The pipeline is:
//!
//! 1. [`segmenter`]: locate the backscatter-bearing region of a trace.
//! 2. [`features`]: six amplitude series over that region.
//! 3. [`dtw`]: chunked DTW distances between two messages' series, a
//!    488-entry [`dtw::ProfileVector`].
//! 4. [`ocsvm`]: a one-class SVM trained on legitimate profiles decides.
//!
//! [`channel`] synthesizes the traces, [`defense`] adds the tag-random
//! schedule, voting and protocol scenarios.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, the `F32` ones to `f32`.

pub mod channel;
pub mod defense;
pub mod dtw;
pub mod error;
pub mod features;
pub mod ocsvm;
pub mod pipeline;
pub mod scalar;
pub mod segmenter;
pub mod sim;
pub mod trace_io;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Trace = channel::SignalTrace<f64>;
pub type Tags = channel::TagConfig<f64>;
pub type Channel = channel::ChannelSpec<f64>;
pub type Features = features::FeatureSet<f64>;
pub type Profile = dtw::ProfileVector<f64>;
pub type Model = ocsvm::OcSvmModel<f64>;
pub type Environment = sim::Environment<f64>;
pub type Session = sim::Session<f64>;

pub type TraceF32 = channel::SignalTrace<f32>;
pub type FeaturesF32 = features::FeatureSet<f32>;
pub type ProfileF32 = dtw::ProfileVector<f32>;
pub type ModelF32 = ocsvm::OcSvmModel<f32>;
