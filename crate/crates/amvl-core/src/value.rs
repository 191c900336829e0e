//! Lazy exponential decay plus capped reinforcement.

use core::fmt;

use serde::{Deserialize, Serialize};

use crate::config::ValueParams;

/// Values below this are flushed to zero.
pub const SUBNORMAL_FLOOR: f64 = 1e-300;

/// Usage signal for one item at one instant. `i_contrib` implies `i_access`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UsageEvent {
    pub item_id: u64,
    pub i_access: bool,
    pub i_contrib: bool,
    pub t_now: f64,
}

impl UsageEvent {
    /// Pure decay, no reinforcement.
    pub fn idle(item_id: u64, t_now: f64) -> Self {
        UsageEvent { item_id, i_access: false, i_contrib: false, t_now }
    }

    /// Retrieved as a candidate but not injected.
    pub fn access(item_id: u64, t_now: f64) -> Self {
        UsageEvent { item_id, i_access: true, i_contrib: false, t_now }
    }

    /// Injected into the prompt.
    pub fn contribution(item_id: u64, t_now: f64) -> Self {
        UsageEvent { item_id, i_access: true, i_contrib: true, t_now }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueError {
    ClockRegression { t_last: f64, t_now: f64 },
}

impl fmt::Display for ValueError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueError::ClockRegression { t_last, t_now } => {
                write!(f, "clock regression: t_now={t_now} < t_last={t_last}")
            }
        }
    }
}

fn flush(v: f64) -> f64 {
    if v < SUBNORMAL_FLOOR {
        0.0
    } else {
        v
    }
}

/// `v * exp(-lambda * (t_now - t_last))`.
pub fn decay_only(v: f64, t_last: f64, t_now: f64, lambda: f64) -> Result<f64, ValueError> {
    if t_now < t_last {
        return Err(ValueError::ClockRegression { t_last, t_now });
    }
    let dt = t_now - t_last;
    if dt == 0.0 {
        return Ok(flush(v));
    }
    Ok(flush(v * libm::exp(-lambda * dt)))
}

/// Applies decay since `t_last`, then the event's rewards, then the cap.
/// Returns the new value and the new `t_last` (= `event.t_now`).
pub fn updated_value(
    v: f64,
    t_last: f64,
    event: &UsageEvent,
    params: &ValueParams,
) -> Result<(f64, f64), ValueError> {
    let mut nv = decay_only(v, t_last, event.t_now, params.lambda)?;
    if event.i_access {
        nv += params.alpha;
    }
    if event.i_contrib {
        nv += params.beta;
    }
    if nv > params.v_max {
        nv = params.v_max;
    }
    Ok((nv, event.t_now))
}
