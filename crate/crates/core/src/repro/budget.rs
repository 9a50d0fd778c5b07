//! Trial budgets for statistical replay verification.
//!
//! If an executor diverges on a fraction `p` of inputs, `n` independent
//! passing trials happen with probability `(1 - p)^n`. Bounding that by
//! `alpha` gives `p <= 1 - alpha^(1/n)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BudgetError {
    #[error("n must be at least 1")]
    ZeroTrials,
    #[error("{name} must lie strictly between 0 and 1, got {value}")]
    OutOfRange { name: &'static str, value: f64 },
}

fn open_unit(name: &'static str, value: f64) -> Result<(), BudgetError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(BudgetError::OutOfRange { name, value })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationBudget {
    pub n: u64,
    pub alpha: f64,
    pub epsilon: f64,
}

/// Largest divergence rate not excluded at significance `alpha` after
/// `n` passing trials: `1 - alpha^(1/n)`.
pub fn epsilon_bound(n: u64, alpha: f64) -> Result<f64, BudgetError> {
    if n == 0 {
        return Err(BudgetError::ZeroTrials);
    }
    open_unit("alpha", alpha)?;
    Ok(-(alpha.ln() / n as f64).exp_m1())
}

/// Smallest `n` with `epsilon_bound(n, alpha) <= epsilon`.
///
/// Starts from `ln(alpha) / ln(1 - epsilon)` and corrects for rounding
/// against the bound itself. `ceil(ln(1/alpha) / epsilon)` is the familiar
/// upper approximation.
pub fn required_budget(epsilon: f64, alpha: f64) -> Result<u64, BudgetError> {
    open_unit("epsilon", epsilon)?;
    open_unit("alpha", alpha)?;
    let guess = (alpha.ln() / (-epsilon).ln_1p()).ceil().max(1.0) as u64;
    let bound = |n| epsilon_bound(n, alpha).expect("validated");
    let mut n = guess;
    while n > 1 && bound(n - 1) <= epsilon {
        n -= 1;
    }
    while bound(n) > epsilon {
        n += 1;
    }
    Ok(n)
}

pub fn approximate_budget(epsilon: f64, alpha: f64) -> Result<u64, BudgetError> {
    open_unit("epsilon", epsilon)?;
    open_unit("alpha", alpha)?;
    Ok(((1.0 / alpha).ln() / epsilon).ceil() as u64)
}

impl VerificationBudget {
    pub fn for_trials(n: u64, alpha: f64) -> Result<Self, BudgetError> {
        Ok(Self {
            n,
            alpha,
            epsilon: epsilon_bound(n, alpha)?,
        })
    }

    pub fn for_epsilon(epsilon: f64, alpha: f64) -> Result<Self, BudgetError> {
        let n = required_budget(epsilon, alpha)?;
        Self::for_trials(n, alpha)
    }
}
