//! Slow-bond symmetric exclusion: exact moment equations, random-walk
//! representations, the Robin heat semigroup and Monte-Carlo checks of the
//! equilibrium-type fluctuation limit.

pub mod config;
pub mod criteria;
pub mod error;
pub mod exclusion;
pub mod fluctuation;
pub mod harness;
pub mod io;
pub mod lattice;
pub mod moments;
pub mod ode;
pub mod profile;
pub mod quad;
pub mod rng;
pub mod robin;
pub mod special;
pub mod stats;
pub mod walks;

pub use error::{Error, Result};
pub use lattice::{ModelParams, Point, Site};
pub use profile::InitialProfile;
