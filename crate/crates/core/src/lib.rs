//! Multimodal cross-entropy planning for kinematic bicycle robots.
//!
//! A policy is a mixture of diagonal Gaussians over stacked control
//! sequences. Each planning round samples the mixture, rolls every sample
//! through a noisy bicycle model, discards infeasible rollouts, clusters the
//! rest by state trajectory and refits one mode per cluster. Teams of robots
//! plan independently against each other's sampled predictions and a central
//! step picks one mode per robot.

pub mod clustering;
pub mod costs;
pub mod dynamics;
pub mod environments;
pub mod error;
pub mod multirobot;
pub mod planner;
pub mod policy;
pub mod rng;
pub mod tvlqr;

pub use costs::{ConstraintParams, CostParams, NeighborPrediction, Obstacle};
pub use dynamics::{Control, DynamicsParams, State, Trajectory};
pub use environments::{RobotTask, ScenarioSpec, TrapSpec};
pub use error::{PlanError, Result};
pub use multirobot::{coordinate, CoordinationParams, Team, TeamMember};
pub use planner::{optimize, plan_cycle, CyclePlan, PlannerConfig, Problem};
pub use policy::{MultimodalPolicy, PolicyMode};
