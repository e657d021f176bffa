//! Dual-layer dynamic neural field model of short-term phonetic
//! accommodation.
//!
//! A fast planning field selects a production target along a 1-D phonetic
//! axis; a slow Hebbian memory field accumulates traces of supra-threshold
//! planning activity and feeds them back. The [`protocol`] module runs the
//! baseline, shadowing and post-shadowing blocks of a shadowing experiment
//! and reads out where activation peaks in each.
//!
//! ```no_run
//! use phonfield::{presets, protocol::{run_experiment, BlockKind}};
//!
//! let result = run_experiment(&presets::strut()).unwrap();
//! println!("shadowing peak at x = {}", result.peak_x(BlockKind::Shadowing));
//! ```

pub mod dynamics;
pub mod error;
pub mod field;
pub mod io;
pub mod presets;
pub mod protocol;
pub mod sweep;

pub use error::{Error, Result};
