//! Diffusion in a Brownian environment.
//!
//! The environment `W` is a two-sided Brownian path stored on a uniform grid
//! ([`env::GridPath`]). From it we build the valley structure and the bottom
//! process ([`extrema`]), the diffusion through its scale function and time
//! change ([`diffusion`]), exact local-time profiles at hitting times through
//! the Ray–Knight representation ([`loctime`]), fast samplers of the jump
//! structure of the bottom process ([`renewal`]), a Sinai walk oracle on the
//! integers ([`discrete`]), and the experiments that tie it all together
//! ([`harness`]).

pub mod diffusion;
pub mod discrete;
pub mod env;
pub mod error;
pub mod extrema;
pub mod harness;
pub mod loctime;
pub mod renewal;
pub mod rng;

pub use error::{Error, Result};
pub use rng::RngStream;
