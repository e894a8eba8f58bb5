//! Model-based recursive partitioning for treatment-subgroup identification.
//!
//! A base treatment-effect model is fitted in each node, the independence of
//! its partial score functions and candidate partitioning variables is tested
//! by Bonferroni-adjusted permutation tests of a quadratic-form statistic, and
//! the node is split at the cutpoint maximizing the two-sample statistic.
//! Recursion stops when no instability is detected (or depth/size limits are
//! reached); the leaves are the subgroups and carry refitted models with
//! Wald confidence intervals for the treatment effect.

pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod fluctest;
pub mod models;
pub mod numerics;
pub mod report;
pub mod simgen;
pub mod testkit;

pub use error::{Error, Result};
