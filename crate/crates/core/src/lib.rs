//! Reciprocal collision avoidance for two identical multirotor UAVs.
//!
//! The pipeline: straight-line collision prediction ([`kinematics`]), a
//! shared maneuver decision turned into waypoint schedules ([`maneuver`]),
//! minimum-snap splines and their exact minimum separation ([`trajectory`]),
//! a thrust-limited tracking simulator and controllability classifier
//! ([`dynamics`]), the detection-range search that scores a maneuver model
//! ([`search`]) and the neuroevolution that trains one ([`evolve`]).

pub mod dynamics;
pub mod evolve;
pub mod kinematics;
pub mod maneuver;
pub mod search;
pub mod trajectory;
