//! Uplink NOMA inside one MEC-BS cell.
//!
//! Everything here works in decoding order: index 0 is decoded first and sees
//! every later signal as interference, the last index is decoded
//! interference-free. Cells are treated as mutually orthogonal.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SicMode {
    /// Earliest deadline decoded first.
    #[serde(rename = "deadline")]
    DeadlineAscending,
    /// Strongest instantaneous channel decoded first.
    #[serde(rename = "channel")]
    ChannelDescending,
}

impl SicMode {
    pub fn key(&self) -> &'static str {
        match self {
            SicMode::DeadlineAscending => "deadline",
            SicMode::ChannelDescending => "channel",
        }
    }
}

impl fmt::Display for SicMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for SicMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deadline" => Ok(SicMode::DeadlineAscending),
            "channel" => Ok(SicMode::ChannelDescending),
            other => Err(SimError::Config(format!(
                "sic_order must be \"deadline\" or \"channel\", got {other:?}"
            ))),
        }
    }
}

/// What the SIC receiver needs to know about one transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SicUser<T> {
    pub id: usize,
    pub deadline_s: T,
    pub gain: T,
    pub power_cap_w: T,
}

fn cmp_real<T: Real>(a: T, b: T) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Decoding order as indices into `users`. Ties go to the lower device id.
pub fn sic_order<T: Real>(users: &[SicUser<T>], mode: SicMode) -> Result<Vec<usize>> {
    if users.is_empty() {
        return Err(SimError::Empty("sic_order"));
    }
    let mut idx: Vec<usize> = (0..users.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ua, ub) = (&users[a], &users[b]);
        let key = match mode {
            SicMode::DeadlineAscending => cmp_real(ua.deadline_s, ub.deadline_s),
            SicMode::ChannelDescending => cmp_real(ub.gain, ua.gain),
        };
        key.then(ua.id.cmp(&ub.id))
    });
    Ok(idx)
}

/// Transmit powers in decoding order.
///
/// The first device transmits at its cap; each later device is held to
/// `min(beta * g_prev * p_prev / g_self, cap_self)` so that received powers
/// keep the decoding order.
pub fn allocate_power<T: Real>(gains: &[T], caps: &[T], beta: T) -> Result<Vec<T>> {
    if gains.len() != caps.len() {
        return Err(SimError::domain("allocate_power", "gains and caps differ in length"));
    }
    if !(beta > T::zero() && beta <= T::one()) {
        return Err(SimError::domain("allocate_power", format!("beta {beta} outside (0, 1]")));
    }
    if let Some(pos) = gains.iter().position(|g| !(*g > T::zero() && g.is_finite())) {
        return Err(SimError::domain(
            "allocate_power",
            format!("non-positive gain at decode position {pos}"),
        ));
    }
    let mut powers: Vec<T> = Vec::with_capacity(gains.len());
    for (k, (&g, &cap)) in gains.iter().zip(caps).enumerate() {
        let p = match k {
            0 => cap,
            _ => {
                let received_prev = gains[k - 1] * powers[k - 1];
                (beta * received_prev / g).min(cap)
            }
        };
        powers.push(p);
    }
    Ok(powers)
}

/// SIC rates in decoding order; interference comes from later positions only.
pub fn sic_rates<T: Real>(gains: &[T], powers: &[T], sigma2: T, bandwidth: T) -> Result<Vec<T>> {
    if !(sigma2 > T::zero()) {
        return Err(SimError::domain("sic_rates", format!("noise power {sigma2} must be > 0")));
    }
    if gains.len() != powers.len() {
        return Err(SimError::domain("sic_rates", "gains and powers differ in length"));
    }
    let mut rates = vec![T::zero(); gains.len()];
    let mut interference = T::zero();
    for k in (0..gains.len()).rev() {
        let received = gains[k] * powers[k];
        let sinr = received / (interference + sigma2);
        rates[k] = bandwidth * sinr.ln_1p() / T::LN_2();
        interference = interference + received;
    }
    Ok(rates)
}

/// Sum capacity of the cell, `B log2(1 + Σ g p / σ²)`.
pub fn sum_capacity<T: Real>(gains: &[T], powers: &[T], sigma2: T, bandwidth: T) -> T {
    let total: T = gains.iter().zip(powers).map(|(&g, &p)| g * p).sum();
    bandwidth * (total / sigma2).ln_1p() / T::LN_2()
}

/// One interval in which a fixed set of devices transmits simultaneously.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage<T> {
    pub duration_s: T,
    /// Decode positions of the devices active in this stage, in decoding order.
    pub active: Vec<usize>,
    /// Rate of each active device during the stage, aligned with `active`.
    pub rates_bps: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline<T> {
    pub stages: Vec<Stage<T>>,
    /// Upload completion time per decode position; zero for devices with nothing to send.
    pub completion_s: Vec<T>,
}

/// Event-driven staged transmission.
///
/// Every device with bits left transmits; a stage ends when the first of them
/// finishes, after which the survivors' rates are recomputed without it.
pub fn staged_timeline<T: Real>(
    gains: &[T],
    powers: &[T],
    offload_bits: &[T],
    sigma2: T,
    bandwidth: T,
) -> Result<Timeline<T>> {
    let n = gains.len();
    if powers.len() != n || offload_bits.len() != n {
        return Err(SimError::domain("staged_timeline", "input lengths differ"));
    }
    let finish_tol = T::reachable_tol(1e-12);
    let mut remaining: Vec<T> = offload_bits.to_vec();
    let mut completion = vec![T::zero(); n];
    let mut active: Vec<usize> = (0..n).filter(|&k| remaining[k] > T::zero()).collect();
    let mut stages = Vec::new();
    let mut now = T::zero();

    while !active.is_empty() {
        let g: Vec<T> = active.iter().map(|&k| gains[k]).collect();
        let p: Vec<T> = active.iter().map(|&k| powers[k]).collect();
        let rates = sic_rates(&g, &p, sigma2, bandwidth)?;
        if let Some(i) = rates.iter().position(|r| !(*r > T::zero())) {
            return Err(SimError::domain(
                "staged_timeline",
                format!("decode position {} has zero rate", active[i]),
            ));
        }
        let to_finish: Vec<T> = active
            .iter()
            .zip(&rates)
            .map(|(&k, &r)| remaining[k] / r)
            .collect();
        let dt = to_finish.iter().copied().fold(T::infinity(), T::min);
        let cutoff = dt * (T::one() + finish_tol);
        let mut survivors = Vec::with_capacity(active.len());
        for ((&k, &r), &t) in active.iter().zip(&rates).zip(&to_finish) {
            if t <= cutoff {
                remaining[k] = T::zero();
                completion[k] = now + t;
            } else {
                remaining[k] = remaining[k] - r * dt;
                survivors.push(k);
            }
        }
        stages.push(Stage {
            duration_s: dt,
            active: std::mem::replace(&mut active, survivors),
            rates_bps: rates,
        });
        now = now + dt;
    }
    Ok(Timeline {
        stages,
        completion_s: completion,
    })
}

/// Per-cell NOMA plan: decoding order, powers and full-interference rates.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkPlan<T> {
    /// Device ids in decoding order.
    pub order: Vec<usize>,
    pub gains: Vec<T>,
    pub powers_w: Vec<T>,
    pub rates_bps: Vec<T>,
    /// Filled in by [`UplinkPlan::run_timeline`].
    pub stages: Vec<Stage<T>>,
}

impl<T: Real> UplinkPlan<T> {
    pub fn build(
        users: &[SicUser<T>],
        mode: SicMode,
        beta: T,
        sigma2: T,
        bandwidth: T,
    ) -> Result<Self> {
        let idx = sic_order(users, mode)?;
        let order: Vec<usize> = idx.iter().map(|&i| users[i].id).collect();
        let gains: Vec<T> = idx.iter().map(|&i| users[i].gain).collect();
        let caps: Vec<T> = idx.iter().map(|&i| users[i].power_cap_w).collect();
        let powers_w = allocate_power(&gains, &caps, beta)?;
        let rates_bps = sic_rates(&gains, &powers_w, sigma2, bandwidth)?;
        Ok(UplinkPlan {
            order,
            gains,
            powers_w,
            rates_bps,
            stages: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn position_of(&self, device_id: usize) -> Option<usize> {
        self.order.iter().position(|&d| d == device_id)
    }

    /// Runs the staged transmission for `offload_bits` (decode order) and
    /// returns each device's upload completion time.
    pub fn run_timeline(&mut self, offload_bits: &[T], sigma2: T, bandwidth: T) -> Result<Vec<T>> {
        let tl = staged_timeline(&self.gains, &self.powers_w, offload_bits, sigma2, bandwidth)?;
        self.stages = tl.stages;
        Ok(tl.completion_s)
    }
}
