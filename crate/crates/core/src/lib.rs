//! Categorical InfoWaveGAN toolkit for studying how vowel nasality is
//! encoded in the latent space of a raw-audio GAN.
//!
//! The pipeline: synthesize or extract VT/VN/ṼT/ṼN syllable tokens
//! ([`audio`], [`corpus`]), train the three-network GAN ([`ciwgan`]), label
//! its outputs with a frame-level nasality classifier ([`detector`]) and
//! probe the latent space ([`probe`]).

pub mod audio;
pub mod ciwgan;
pub mod corpus;
pub mod detector;
pub mod kv;
pub mod nn;
pub mod probe;
pub mod seed;
