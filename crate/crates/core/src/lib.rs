//! Karhunen-Loeve expansion, simulation and functional quantization of the
//! Ornstein-Uhlenbeck bridge.
//!
//! The process `dX_t = theta (mu - X_t) dt + sigma dW_t` with Gaussian start
//! `X_0 ~ N(x0, sigma0^2)` is conditioned on `X_T = z`. The crate provides
//!
//! - closed-form bridge mean and covariance ([`ou_model`]),
//! - its eigen-decomposition on `[0, T]` from a transcendental frequency
//!   equation ([`kl_solver`]),
//! - Euler and exact path samplers ([`bridge_sim`]),
//! - optimal functional quantizers built on the truncated expansion
//!   ([`quantizer`]),
//! - brute-force reference computations for cross-checking ([`oracle`]).
//!
//! ```
//! use ou_bridge::{kl_basis, OuParams};
//!
//! let p = OuParams::centered(0.0, 1.0, 1.0)?;
//! let basis = kl_basis(&p, 3)?;
//! let pi = std::f64::consts::PI;
//! assert!((basis.modes[0].lambda - 1.0 / (pi * pi)).abs() < 1e-14);
//! # Ok::<(), ou_bridge::Error>(())
//! ```

pub mod bridge_sim;
pub mod error;
pub mod kl_solver;
pub mod noise;
pub mod normal;
pub mod oracle;
pub mod ou_model;
pub mod quad;
pub mod quantizer;

pub use bridge_sim::{simulate_bridge, simulate_euler, simulate_exact, BridgePath, Scheme, Simulator, TimeGrid};
pub use error::{Error, Result};
pub use kl_solver::{kl_basis, solve_frequencies, FrequencyCase, KlBasis, KlMode};
pub use noise::StandardNormals;
pub use oracle::{conditioned_kernel, empirical_cov, nystrom_eigen, DenseKernel};
pub use ou_model::{bridge_cov, bridge_mean, process_cov, process_mean, total_bridge_variance, BridgeSpec, OuParams};
pub use quantizer::{functional_quantizer, rate_check, Codebook, DistortionReport, FunctionalQuantizer, QuantizerConfig};
