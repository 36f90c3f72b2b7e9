//! Task division between local and MEC processing, and per-MEC allocation of
//! compute rate.
//!
//! A task of `C` bits split with ratio `α` finishes after
//! `max((1-α)C/L, αC(1/R + 1/U))`. The optimal split equalises the two paths,
//! which collapses the delay to `C / (L + RU/(R+U))`: the local rate plus the
//! series combination of uplink and MEC rates.

use crate::error::{Result, SimError};
use crate::scalar::Real;

fn check_rates<T: Real>(op: &'static str, local: T, uplink: T, mec: T) -> Result<()> {
    if !(local > T::zero()) {
        return Err(SimError::domain(op, format!("local rate {local} must be > 0")));
    }
    if !(uplink > T::zero()) {
        return Err(SimError::domain(op, format!("uplink rate {uplink} must be > 0")));
    }
    if !(mec >= T::zero()) {
        return Err(SimError::domain(op, format!("mec rate {mec} must be >= 0")));
    }
    Ok(())
}

/// Fraction of the task to offload.
pub fn split_ratio<T: Real>(local: T, uplink: T, mec: T) -> Result<T> {
    check_rates("split_ratio", local, uplink, mec)?;
    if mec == T::zero() {
        return Ok(T::zero());
    }
    let inv_l = local.recip();
    Ok(inv_l / (uplink.recip() + mec.recip() + inv_l))
}

/// Completion time of a task of `workload` bits under the optimal split.
pub fn task_delay<T: Real>(workload: T, local: T, uplink: T, mec: T) -> Result<T> {
    if !(workload >= T::zero()) {
        return Err(SimError::domain("task_delay", "workload must be >= 0"));
    }
    let alpha = split_ratio(local, uplink, mec)?;
    if alpha == T::zero() {
        return Ok(workload / local);
    }
    let local_path = (T::one() - alpha) * workload / local;
    let offload_path = alpha * workload * (uplink.recip() + mec.recip());
    Ok(local_path.max(offload_path))
}

/// `L + RU/(R+U)`.
pub fn effective_rate<T: Real>(local: T, uplink: T, mec: T) -> T {
    if mec == T::zero() {
        return local;
    }
    local + uplink * mec / (uplink + mec)
}

/// Smallest MEC rate that meets `deadline`; `Ok(None)` when no finite rate does.
pub fn min_required_rate<T: Real>(workload: T, deadline: T, local: T, uplink: T) -> Result<Option<T>> {
    for (name, v) in [
        ("workload", workload),
        ("deadline", deadline),
        ("local rate", local),
        ("uplink rate", uplink),
    ] {
        if !(v > T::zero()) {
            return Err(SimError::domain(
                "min_required_rate",
                format!("{name} must be > 0, got {v}"),
            ));
        }
    }
    let shortfall = workload / deadline - local;
    if shortfall <= T::zero() {
        return Ok(Some(T::zero()));
    }
    if uplink <= shortfall {
        return Ok(None);
    }
    Ok(Some(shortfall * uplink / (uplink - shortfall)))
}

/// One offloading task competing for a single MEC server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OffloadDemand<T> {
    pub workload_bits: T,
    pub deadline_s: T,
    pub local_rate_bps: T,
    pub uplink_rate_bps: T,
    pub min_rate_bps: T,
}

impl<T: Real> OffloadDemand<T> {
    pub fn delay_at(&self, mec: T) -> T {
        self.workload_bits / effective_rate(self.local_rate_bps, self.uplink_rate_bps, mec)
    }

    /// `-∂delay/∂U = C R² / (LR + (L+R)U)²`.
    pub fn marginal_gain(&self, mec: T) -> T {
        let (c, l, r) = (self.workload_bits, self.local_rate_bps, self.uplink_rate_bps);
        let denom = l * r + (l + r) * mec;
        c * r * r / (denom * denom)
    }

    /// Rate at which the marginal gain drops to `level`, floored at the minimum.
    fn rate_at_level(&self, level: T) -> T {
        let (c, l, r) = (self.workload_bits, self.local_rate_bps, self.uplink_rate_bps);
        if c == T::zero() {
            return self.min_rate_bps;
        }
        let unconstrained = (r * (c / level).sqrt() - l * r) / (l + r);
        unconstrained.max(self.min_rate_bps)
    }
}

/// Splits `capacity` among `demands`: every task first gets its minimum rate,
/// then the remainder goes where it cuts total delay the most.
///
/// Delays are convex and decreasing in the granted rate, so the optimum puts
/// every task above its floor at a common marginal gain. That level is found
/// by bisection.
pub fn waterfill<T: Real>(demands: &[OffloadDemand<T>], capacity: T) -> Result<Vec<T>> {
    let floors: Vec<T> = demands.iter().map(|d| d.min_rate_bps).collect();
    let committed: T = floors.iter().copied().sum();
    let slack = T::reachable_tol(1e-12) * capacity;
    if committed > capacity + slack {
        return Err(SimError::OverCommitted {
            required: committed.to_f64_lossy(),
            capacity: capacity.to_f64_lossy(),
        });
    }
    let residual = capacity - committed;
    if demands.is_empty() || residual <= T::zero() {
        return Ok(floors);
    }

    let level_hi = demands
        .iter()
        .map(|d| d.marginal_gain(d.min_rate_bps))
        .fold(T::zero(), T::max);
    if level_hi <= T::zero() {
        return Ok(floors);
    }
    let level_lo = demands
        .iter()
        .filter(|d| d.workload_bits > T::zero())
        .map(|d| d.marginal_gain(capacity))
        .fold(T::infinity(), T::min);

    let total_at = |level: T| -> T { demands.iter().map(|d| d.rate_at_level(level)).sum() };
    let tol = T::reachable_tol(1e-10);
    let (mut lo, mut hi) = (level_lo, level_hi);
    for _ in 0..200 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = (lo * hi).sqrt();
        let mid = if mid > lo && mid < hi { mid } else { (lo + hi) / T::lit(2.0) };
        if total_at(mid) > capacity {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // Hand the bisection remainder to the tasks above their floors.
    let mut alloc: Vec<T> = demands.iter().map(|d| d.rate_at_level(hi)).collect();
    let above: T = alloc.iter().zip(&floors).map(|(&a, &f)| a - f).sum();
    if above > T::zero() {
        let scale = residual / above;
        for (a, f) in alloc.iter_mut().zip(&floors) {
            *a = *f + (*a - *f) * scale;
        }
    }
    Ok(alloc)
}

/// Outcome for one device after association and allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationResult<T> {
    pub alpha: T,
    pub mec_rate_bps: T,
    pub planned_delay_s: T,
    pub realized_delay_s: T,
    pub met_deadline: bool,
}
