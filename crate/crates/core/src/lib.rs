//! Core library for a desk-scale study of evasion attacks against
//! dynamic ransomware detectors.
//!
//! The pipeline models file-system activity as fixed-length code
//! sequences, trains a convolutional detector plus classical models on
//! its latent features, synthesizes adversarial malicious logs with a
//! class-conditional GAN, screens them with n-gram quality metrics, and
//! finally replays surviving logs as real file I/O inside a sandbox to
//! confirm the encoded behavior survives a round trip through the OS.

pub mod acgan;
pub mod classifiers;
pub mod latent;
pub mod logmodel;
pub mod ngram;
pub mod nncore;
pub mod par;
pub mod pipeline;
pub mod replayer;
pub mod rng;
pub mod synthgen;
