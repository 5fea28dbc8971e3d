//! Hybrid analog/digital beamformer design for massive MIMO systems whose
//! analog stage is restricted by hardware (phase shifters, switches,
//! sub-arrays).
//!
//! The crate provides the fully-digital MMSE optima, hybrid precoder
//! algorithms ([`precoder`]), hybrid combiner algorithms ([`combiner`]), five
//! analog hardware models ([`hardware`]), channel generators ([`channel`]) and
//! a seeded Monte Carlo harness ([`harness`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamform;
pub mod channel;
pub mod combiner;
pub mod error;
pub mod hardware;
pub mod harness;
pub mod matcore;
pub mod precoder;
pub mod random;

pub use error::{Error, Result};
pub use hardware::{Dictionary, HardwareScheme};
pub use matcore::CMatrix;
