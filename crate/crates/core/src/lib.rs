//! Challenge-response screening for suspected real-time deepfake calls.
//!
//! A suspicious call triggers a session ([`protocol`]) that issues a
//! challenge chosen from a [`catalog`] by the [`selector`]. The captured
//! response is located in the call's feature stream ([`extraction`]) and
//! scored by a one-class [`detector`]. The [`sim`] module drives whole
//! sessions against genuine and deepfake callers and aggregates detection
//! metrics ([`metrics`]).

// Range checks are written `!(x >= 0.0)` so that NaN fails them too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod detector;
pub mod error;
pub mod extraction;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod selector;
pub mod sim;
pub mod suspicion;
pub mod types;

pub use catalog::Catalog;
pub use error::{CatalogError, DetectorError, ExtractionError, InvalidValue, ProtocolError, SimError};
pub use types::*;

/// Default feature dimension of every frame.
pub const DEFAULT_DIM: usize = 16;
/// Default number of frames in an activity template.
pub const DEFAULT_TEMPLATE_LEN: usize = 32;
/// Default capture frame rate.
pub const DEFAULT_FRAME_RATE_HZ: f64 = 25.0;
