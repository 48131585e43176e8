//! Streaming predict-then-code compression over a constant-rate channel.
//!
//! A tokenized text arrives at a fixed character rate; a predictor supplies
//! a quantized PMF for every position; a coder turns tokens into bits; and a
//! FIFO channel serves those bits, which yields per-token decode delays.

pub mod channel;
pub mod cli;
pub mod coder;
pub mod config;
pub mod container;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod pmf;
pub mod predictor;

pub use error::{Error, Result};
