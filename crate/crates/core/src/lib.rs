//! Data-driven synthesis of robust Krasovskii control barrier certificates
//! (RK-CBC) and robust safety controllers (R-SC) for discrete-time
//! input-affine polynomial systems with a time-invariant state delay and
//! unknown-but-bounded disturbances.
//!
//! The pipeline works purely from finite-horizon input–state data:
//!
//! 1. [`system`] simulates the ground-truth plant (used for data generation
//!    and independent verification only — the synthesizer never reads the
//!    plant matrices).
//! 2. [`data`] lifts a collected trajectory into the dictionary space and
//!    builds the quadratic data-consistency matrix.
//! 3. [`synthesis`] assembles the delay-aware block matrix inequality,
//!    compiles it to a semidefinite feasibility problem through a
//!    sum-of-squares relaxation, and recovers the certificate
//!    `B(x) = xᵀPx + κ Σ λⁱ xᵢᵀPxᵢ` together with the polynomial feedback
//!    `u = F₁(x,x_h)x + F₂(x,x_h)x_h`.
//! 4. [`verify`] replays every certificate condition against the
//!    ground-truth simulator, including closed-loop Monte Carlo safety runs.
//!
//! [`sdp`] is the only module that talks to a numerical conic solver; the
//! bundled backend is a projection method with an exact affine polish step.

pub mod chain;
pub mod config;
pub mod data;
pub mod linalg;
pub mod pipeline;
pub mod poly;
pub mod region;
pub mod sdp;
pub mod synthesis;
pub mod system;
pub mod verify;

pub use poly::{Dictionary, Monomial, Poly, PolyMatrix};
pub use region::Region;
pub use system::{DelayedSystem, History};
