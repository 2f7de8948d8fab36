//! Expressive whole-body humanoid control at desk scale.
//!
//! The crate covers the whole pipeline: parsing and curating motion-capture
//! clips ([`mocap`]), retargeting them onto a 19-DoF humanoid ([`retarget`]),
//! extracting expression and root-movement goals ([`goals`]), the tracking and
//! regularization reward stack ([`reward`]), a goal-conditioned environment
//! with two lightweight dynamics backends ([`env`]), PPO/AMP training ([`rl`])
//! and evaluation metrics and distribution reports ([`stats`]).

pub mod error;
pub mod kinematics;
pub mod mocap;
pub mod retarget;
pub mod goals;
pub mod reward;
pub mod env;
pub mod rl;
pub mod stats;

pub use error::{Error, Result};
