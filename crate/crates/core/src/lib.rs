//! Span-based prosodic structure prediction.
//!
//! A character sequence is encoded into fencepost vectors, every span gets a
//! score per generalized label, and an exact CKY search picks the best
//! labeled tree. Training minimizes a structured hinge loss with
//! Hamming-augmented decoding. Trees convert to and from `#1/#2/#3`
//! boundary-mark lines.

pub mod bench;
pub mod chart;
pub mod config;
pub mod corpus;
pub mod decode;
pub mod encoder;
pub mod metrics;
pub mod model;
pub mod prosody;
pub mod scorer;
pub mod trainer;
pub mod vocab;
