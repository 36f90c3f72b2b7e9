//! Device to MEC-BS association.
//!
//! Two strategies share one admission test: a BS can serve a set of devices if,
//! with the NOMA plan computed for exactly that set, every device can meet its
//! deadline and the summed minimum compute rates fit the BS capacity. Adding a
//! device changes everyone's interference, so the test always replans the
//! whole set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::compute::min_required_rate;
use crate::error::{Result, SimError};
use crate::noma::{SicMode, SicUser, UplinkPlan};
use crate::scalar::Real;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssociationMode {
    /// Many-to-one matching game solved by deferred acceptance.
    Game,
    /// Nearest BS only.
    Distance,
}

impl AssociationMode {
    pub fn key(&self) -> &'static str {
        match self {
            AssociationMode::Game => "game",
            AssociationMode::Distance => "distance",
        }
    }
}

impl fmt::Display for AssociationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for AssociationMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "game" => Ok(AssociationMode::Game),
            "distance" | "dist" => Ok(AssociationMode::Distance),
            other => Err(SimError::Config(format!(
                "association must be \"game\" or \"distance\", got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferenceLists {
    /// Per device, BS ids from most to least preferred.
    pub device_prefs: Vec<Vec<usize>>,
    /// Per BS, device ids from most to least preferred.
    pub bs_prefs: Vec<Vec<usize>>,
}

impl PreferenceLists {
    /// `rank[b][v]`: position of device `v` in BS `b`'s list.
    fn bs_ranks(&self, num_devices: usize) -> Vec<Vec<usize>> {
        self.bs_prefs
            .iter()
            .map(|list| {
                let mut rank = vec![usize::MAX; num_devices];
                for (r, &v) in list.iter().enumerate() {
                    rank[v] = r;
                }
                rank
            })
            .collect()
    }
}

fn sorted_by_gain_desc<T: Real>(ids: impl Iterator<Item = usize>, gain: impl Fn(usize) -> T) -> Vec<usize> {
    let mut keyed: Vec<(usize, T)> = ids.map(|i| (i, gain(i))).collect();
    keyed.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    keyed.into_iter().map(|(i, _)| i).collect()
}

/// Both sides rank by pathloss-only gain, best first; ties by lower id.
pub fn build_preferences<T: Real>(scenario: &Scenario<T>, channel: &ChannelState<T>) -> PreferenceLists {
    let n = scenario.num_devices();
    let m = scenario.num_bss();
    let device_prefs = (0..n)
        .map(|v| sorted_by_gain_desc(0..m, |b| channel.mean_gain(v, b)))
        .collect();
    let bs_prefs = (0..m)
        .map(|b| sorted_by_gain_desc(0..n, |v| channel.mean_gain(v, b)))
        .collect();
    PreferenceLists {
        device_prefs,
        bs_prefs,
    }
}

/// Association map. `None` means the device is not served by any MEC-BS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub assignment: Vec<Option<usize>>,
    /// Association requests sent while building the matching.
    pub proposals: usize,
}

impl Matching {
    /// Number of associated devices.
    pub fn associated(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }

    pub fn unassociated(&self) -> usize {
        self.assignment.len() - self.associated()
    }

    /// Devices served by `bs`, ascending id.
    pub fn members(&self, bs: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == Some(bs))
            .map(|(v, _)| v)
            .collect()
    }

    pub fn load(&self, num_bss: usize) -> Vec<usize> {
        let mut load = vec![0; num_bss];
        for b in self.assignment.iter().flatten() {
            load[*b] += 1;
        }
        load
    }
}

/// A set of devices a BS can serve, with its NOMA plan and minimum compute rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Admission<T> {
    pub plan: UplinkPlan<T>,
    /// Minimum MEC rate per device, in decoding order.
    pub min_rates: Vec<T>,
}

/// Admission test for `candidates` at `bs`. `Ok(None)` means infeasible.
pub fn feasible<T: Real>(
    scenario: &Scenario<T>,
    channel: &ChannelState<T>,
    sic: SicMode,
    bs: usize,
    candidates: &[usize],
) -> Result<Option<Admission<T>>> {
    if candidates.is_empty() {
        return Err(SimError::Empty("feasible"));
    }
    let params = scenario.params();
    let devices = scenario.devices();
    let mut users = Vec::with_capacity(candidates.len());
    for &v in candidates {
        let gain = channel.gain(v, bs);
        if !(gain > T::zero()) {
            return Ok(None);
        }
        users.push(SicUser {
            id: v,
            deadline_s: devices[v].deadline_s,
            gain,
            power_cap_w: devices[v].power_cap_w,
        });
    }
    let plan = UplinkPlan::build(
        &users,
        sic,
        params.beta_sic,
        channel.noise_w(),
        params.bandwidth_hz,
    )?;
    let mut min_rates = Vec::with_capacity(plan.len());
    for (&v, &rate) in plan.order.iter().zip(&plan.rates_bps) {
        let d = &devices[v];
        match min_required_rate(d.workload_bits, d.deadline_s, d.local_rate_bps, rate)? {
            Some(u) => min_rates.push(u),
            None => return Ok(None),
        }
    }
    let committed: T = min_rates.iter().copied().sum();
    if committed > scenario.bss()[bs].capacity_bps {
        return Ok(None);
    }
    Ok(Some(Admission { plan, min_rates }))
}

/// Walks `pool` (already in the BS's preference order) and keeps each device
/// whose addition leaves the held set feasible, re-offering rejects until a
/// full sweep admits nobody.
fn admit_in_order<T: Real>(
    scenario: &Scenario<T>,
    channel: &ChannelState<T>,
    sic: SicMode,
    bs: usize,
    pool: &[usize],
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut held: Vec<usize> = Vec::with_capacity(pool.len());
    let mut rejected = pool.to_vec();
    // Admission is not monotone under interference coupling: a later device
    // can make room for an earlier reject, so sweep until nothing changes.
    loop {
        let mut changed = false;
        let mut still = Vec::new();
        for v in rejected {
            held.push(v);
            if feasible(scenario, channel, sic, bs, &held)?.is_none() {
                held.pop();
                still.push(v);
            } else {
                changed = true;
            }
        }
        rejected = still;
        if !changed || rejected.is_empty() {
            break;
        }
    }
    Ok((held, rejected))
}

/// Deferred acceptance with devices proposing.
///
/// In each round every free device with BSs left on its list proposes to the
/// head of the list and deletes it; BSs that could not serve the device even
/// alone are dropped from the list without a proposal. Each BS pools its new proposers with the
/// devices it holds and, in preference order, keeps every device that does not
/// break feasibility; the rest are rejected and propose again next round.
/// A repair pass then moves any device that a preferred BS can admit without
/// ejection; each move counts as a proposal and the total never exceeds N*M.
pub fn gale_shapley<T: Real>(
    scenario: &Scenario<T>,
    prefs: &PreferenceLists,
    channel: &ChannelState<T>,
    sic: SicMode,
) -> Result<Matching> {
    let n = scenario.num_devices();
    let m = scenario.num_bss();
    let ranks = prefs.bs_ranks(n);
    let mut next = vec![0usize; n];
    let mut held: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut free: Vec<usize> = (0..n).collect();
    let mut proposals = 0usize;
    // Extra devices only add interference and share compute, so a BS that
    // cannot serve a device alone never will; such BSs are skipped unasked.
    let acceptable = |v: usize, b: usize| -> Result<bool> { Ok(feasible(scenario, channel, sic, b, &[v])?.is_some()) };

    loop {
        let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut any = false;
        for v in free.drain(..) {
            let list = &prefs.device_prefs[v];
            while next[v] < list.len() && !acceptable(v, list[next[v]])? {
                next[v] += 1;
            }
            if let Some(&b) = list.get(next[v]) {
                next[v] += 1;
                incoming[b].push(v);
                proposals += 1;
                any = true;
            }
        }
        if !any {
            break;
        }
        for b in 0..m {
            if incoming[b].is_empty() {
                continue;
            }
            let mut pool: Vec<usize> = held[b].iter().chain(&incoming[b]).copied().collect();
            pool.sort_by_key(|&v| (ranks[b][v], v));
            let (kept, rejected) = admit_in_order(scenario, channel, sic, b, &pool)?;
            for &v in &kept {
                assignment[v] = Some(b);
            }
            for &v in &rejected {
                assignment[v] = None;
                free.push(v);
            }
            held[b] = kept;
        }
        free.sort_unstable();
    }

    // Interference coupling makes admission non-monotone, so a BS that once
    // rejected a device may later be able to take it. Let such devices move
    // until no device can reach a BS it prefers without ejecting anyone, or
    // the N*M proposal budget is spent.
    let limit = (n * m).saturating_sub(proposals);
    for _ in 0..limit {
        let Some((v, b)) = first_blocking_pair(scenario, prefs, channel, sic, &held, &assignment)? else {
            break;
        };
        proposals += 1;
        if let Some(old) = assignment[v] {
            held[old].retain(|&d| d != v);
            if !held[old].is_empty() && feasible(scenario, channel, sic, old, &held[old])?.is_none() {
                let (kept, rejected) = admit_in_order(scenario, channel, sic, old, &held[old])?;
                for r in rejected {
                    assignment[r] = None;
                }
                held[old] = kept;
            }
        }
        held[b].push(v);
        held[b].sort_by_key(|&d| (ranks[b][d], d));
        assignment[v] = Some(b);
    }
    Ok(Matching {
        assignment,
        proposals,
    })
}

fn first_blocking_pair<T: Real>(
    scenario: &Scenario<T>,
    prefs: &PreferenceLists,
    channel: &ChannelState<T>,
    sic: SicMode,
    held: &[Vec<usize>],
    assignment: &[Option<usize>],
) -> Result<Option<(usize, usize)>> {
    for (v, list) in prefs.device_prefs.iter().enumerate() {
        for &b in list {
            if assignment[v] == Some(b) {
                break;
            }
            let mut trial = held[b].clone();
            trial.push(v);
            if feasible(scenario, channel, sic, b, &trial)?.is_some() {
                return Ok(Some((v, b)));
            }
        }
    }
    Ok(None)
}

/// Baseline: every device asks only its nearest BS, which admits proposers
/// greedily in its preference order.
pub fn distance_association<T: Real>(
    scenario: &Scenario<T>,
    prefs: &PreferenceLists,
    channel: &ChannelState<T>,
    sic: SicMode,
) -> Result<Matching> {
    let n = scenario.num_devices();
    let m = scenario.num_bss();
    let ranks = prefs.bs_ranks(n);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut proposals = 0;
    for v in 0..n {
        if let Some(&b) = prefs.device_prefs[v].first() {
            pools[b].push(v);
            proposals += 1;
        }
    }
    let mut assignment = vec![None; n];
    for (b, pool) in pools.iter_mut().enumerate() {
        if pool.is_empty() {
            continue;
        }
        pool.sort_by_key(|&v| (ranks[b][v], v));
        let (kept, _) = admit_in_order(scenario, channel, sic, b, pool)?;
        for v in kept {
            assignment[v] = Some(b);
        }
    }
    Ok(Matching {
        assignment,
        proposals,
    })
}

pub fn associate<T: Real>(
    mode: AssociationMode,
    scenario: &Scenario<T>,
    prefs: &PreferenceLists,
    channel: &ChannelState<T>,
    sic: SicMode,
) -> Result<Matching> {
    match mode {
        AssociationMode::Game => gale_shapley(scenario, prefs, channel, sic),
        AssociationMode::Distance => distance_association(scenario, prefs, channel, sic),
    }
}

/// Pairs `(device, bs)` where the device ranks `bs` above its current
/// assignment and `bs` could admit it without ejecting anyone.
pub fn blocking_pairs<T: Real>(
    scenario: &Scenario<T>,
    prefs: &PreferenceLists,
    channel: &ChannelState<T>,
    sic: SicMode,
    matching: &Matching,
) -> Result<Vec<(usize, usize)>> {
    let m = scenario.num_bss();
    let members: Vec<Vec<usize>> = (0..m).map(|b| matching.members(b)).collect();
    let mut out = Vec::new();
    for (v, list) in prefs.device_prefs.iter().enumerate() {
        for &b in list {
            if matching.assignment[v] == Some(b) {
                break;
            }
            let mut trial = members[b].clone();
            trial.push(v);
            if feasible(scenario, channel, sic, b, &trial)?.is_some() {
                out.push((v, b));
            }
        }
    }
    Ok(out)
}
