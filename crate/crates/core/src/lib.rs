//! Link-level simulation of decode-and-forward cooperative MIMO with
//! distributed Alamouti coding, joint power allocation and linear MMSE
//! reception.

pub mod adapt;
pub mod chanest;
pub mod cli;
pub mod dstc;
pub mod engine;
pub mod error;
pub mod fading;
pub mod linalg;
pub mod mmse;
pub mod model;
pub mod modem;
pub mod power;

pub use error::{Error, Result};
pub use linalg::{CMat, C64};
