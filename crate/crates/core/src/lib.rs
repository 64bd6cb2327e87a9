//! Attack-resilient edge service placement simulator for vehicular networks.
//!
//! The crate models a fleet of vehicles requesting services from roadside edge
//! nodes. Each simulation window it:
//!
//! 1. bins vehicle fixes from a mobility trace into per-service request
//!    batches ([`traces`]),
//! 2. derives per-(node, service) access delays and queueing penalties
//!    ([`delaymodel`]),
//! 3. places service instances by solving exact 0-1 programs — primary
//!    placement, proactive secondary mapping, and post-attack recovery
//!    ([`placement`] on top of the generic solver in [`bip`]),
//! 4. maps each request to a hosting node and observes realized delays
//!    ([`simulator`]),
//! 5. feeds the observations to a small critic network whose quality score
//!    gates when the placement is re-optimized ([`drl`]).
//!
//! Edge-node attacks are injected on a schedule; the control loop first
//! redirects stranded vehicles to precomputed secondary hosts and then
//! re-instantiates the lost instances on surviving nodes. A
//! backup-reservation baseline (one reserved spare instance per service) runs
//! under identical inputs for comparison.
//!
//! Everything is deterministic for a fixed seed: trace binning uses a seeded
//! hash, the solvers break ties by a fixed rule, and metric files are
//! byte-stable across runs.

pub mod bip;
pub mod delaymodel;
pub mod drl;
pub mod output;
pub mod placement;
pub mod scenario;
pub mod simulator;
pub mod traces;
