//! Neural agents for the cooling environment: multi-head PPO for cabinets,
//! discrete PPO for towers, centralized-action training, and decision-tree
//! distillation.

pub mod dist;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod special;
pub mod train;
pub mod distill;
