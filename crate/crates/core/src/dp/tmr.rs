//! Task-relevance to message-inference ratio and the budget split it drives.
//!
//! For each data type (attributes, friendships, posts) the ratio divides the
//! downstream task precision by the summed attack precisions; the total
//! privacy budget is then split proportionally to the three ratios.

use serde::{Deserialize, Serialize};

use crate::dp::PrivacyBudget;
use crate::error::{Error, Result};

/// One data type's precisions and its ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmrEntry {
    pub task: f64,
    pub gender: f64,
    pub occupation: f64,
    pub tmr: f64,
}

/// Ratios for the three perturbed data types.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmrReport {
    pub attribute: TmrEntry,
    pub friendship: TmrEntry,
    pub posts: TmrEntry,
}

fn entry(task: f64, gender: f64, occupation: f64) -> Result<TmrEntry> {
    for (name, v) in [("task", task), ("gender", gender), ("occupation", occupation)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} precision {v} outside [0, 1]")));
        }
    }
    let denom = gender + occupation;
    if denom <= 0.0 {
        return Err(Error::InvalidArgument("attack precisions sum to zero".into()));
    }
    Ok(TmrEntry { task, gender, occupation, tmr: task / denom })
}

/// Builds the report from per-type precisions ordered
/// (attribute, friendship, posts).
pub fn compute_tmr(task: [f64; 3], gender: [f64; 3], occupation: [f64; 3]) -> Result<TmrReport> {
    Ok(TmrReport {
        attribute: entry(task[0], gender[0], occupation[0])?,
        friendship: entry(task[1], gender[1], occupation[1])?,
        posts: entry(task[2], gender[2], occupation[2])?,
    })
}

/// Splits `total` proportionally to the three ratios.
pub fn allocate_budgets(tmr: &TmrReport, total: f64) -> Result<PrivacyBudget> {
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidArgument(format!("total budget {total} must be positive")));
    }
    let (a, g, t) = (tmr.attribute.tmr, tmr.friendship.tmr, tmr.posts.tmr);
    for v in [a, g, t] {
        if !(v > 0.0) {
            return Err(Error::InvalidArgument(format!("tmr value {v} must be positive")));
        }
    }
    let sum = a + g + t;
    PrivacyBudget::new(total * a / sum, total * g / sum, total * t / sum)
}
