//! Noise-resilient keyword spotting.
//!
//! The pipeline turns one-second 16 kHz clips into log-Mel images
//! ([`frontend`]), classifies them with a small CNN ([`nn`]) pretrained on
//! clean or noise-augmented data ([`train`]), and adapts the final
//! fully-connected layer to a new noise condition from one labelled clip
//! per class ([`adapt`]). [`dataset`] builds the 12-class benchmark and
//! mixes noise at exact SNRs; [`bench`] drives the experiment grids.

pub mod frontend;
pub mod nn;
pub mod dataset;
pub mod train;
pub mod adapt;
pub mod bench;
