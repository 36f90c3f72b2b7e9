//! Simulation world: MEC-BS topology, IoVT device population and the physical
//! and compute parameters they are drawn from.
//!
//! Generation is a pure function of `(params, n, seed)`. One 64-bit seed feeds
//! independent streams for topology, devices and fading through fixed offsets,
//! so regenerating one layer leaves the others untouched. Devices are drawn one
//! at a time from a single stream, which makes the first `k` devices of an
//! `n`-device population identical to a `k`-device population with the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::scalar::Real;

/// Stream offsets applied to a scenario seed.
pub const TOPOLOGY_STREAM: u64 = 0;
pub const DEVICE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;
pub const FADING_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

pub(crate) fn stream_rng(seed: u64, offset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(offset))
}

/// Closed interval `[min, max]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Interval<T>(pub T, pub T);

impl<T: Real> Interval<T> {
    pub fn min(&self) -> T {
        self.0
    }

    pub fn max(&self) -> T {
        self.1
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.0 && x <= self.1
    }

    /// Uniform draw; a degenerate interval returns its endpoint exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.random();
        if self.0 == self.1 {
            return self.0;
        }
        let x = self.0 + (self.1 - self.0) * T::lit(u);
        x.max(self.0).min(self.1)
    }

    fn check(&self, name: &'static str) -> Result<()> {
        if !(self.0.is_finite() && self.1.is_finite()) {
            return Err(SimError::param(name, "bounds must be finite"));
        }
        if self.0 > self.1 {
            return Err(SimError::param(
                name,
                format!("min {} exceeds max {}", self.0, self.1),
            ));
        }
        Ok(())
    }

    fn check_positive(&self, name: &'static str) -> Result<()> {
        self.check(name)?;
        if self.0 <= T::zero() {
            return Err(SimError::param(name, "values must be strictly positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default, deny_unknown_fields)]
pub struct SimParams<T> {
    pub bandwidth_hz: T,
    pub noise_psd_dbm_hz: T,
    pub workload_range_bits: Interval<T>,
    pub deadline_range_s: Interval<T>,
    pub local_rate_range_bps: Interval<T>,
    pub mec_capacity_range_bps: Interval<T>,
    /// Side of the square deployment area, centred on the origin.
    pub area_m: T,
    pub penalty_delay_s: T,
    pub power_cap_w: T,
    /// SIC decoding margin, in (0, 1].
    pub beta_sic: T,
    pub seed: u64,
}

impl<T: Real> Default for SimParams<T> {
    fn default() -> Self {
        SimParams {
            bandwidth_hz: T::lit(2e6),
            noise_psd_dbm_hz: T::lit(-174.0),
            workload_range_bits: Interval(T::lit(5e6), T::lit(10e6)),
            deadline_range_s: Interval(T::lit(0.1), T::lit(2.0)),
            local_rate_range_bps: Interval(T::lit(1e6), T::lit(10e6)),
            mec_capacity_range_bps: Interval(T::lit(0.4e9), T::lit(2e9)),
            area_m: T::lit(600.0),
            penalty_delay_s: T::lit(10.0),
            power_cap_w: T::lit(0.2),
            beta_sic: T::one(),
            seed: 0,
        }
    }
}

impl<T: Real> SimParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::param(name, format!("must be > 0, got {v}")))
            }
        };
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("area_m", self.area_m)?;
        positive("power_cap_w", self.power_cap_w)?;
        if !self.noise_psd_dbm_hz.is_finite() {
            return Err(SimError::param("noise_psd_dbm_hz", "must be finite"));
        }
        if !(self.penalty_delay_s >= T::zero() && self.penalty_delay_s.is_finite()) {
            return Err(SimError::param("penalty_delay_s", "must be >= 0"));
        }
        if !(self.beta_sic > T::zero() && self.beta_sic <= T::one()) {
            return Err(SimError::param(
                "beta_sic",
                format!("must lie in (0, 1], got {}", self.beta_sic),
            ));
        }
        self.workload_range_bits.check_positive("workload_range_bits")?;
        self.deadline_range_s.check_positive("deadline_range_s")?;
        self.local_rate_range_bps.check_positive("local_rate_range_bps")?;
        self.mec_capacity_range_bps
            .check_positive("mec_capacity_range_bps")?;
        Ok(())
    }

    /// Parses a JSON object. Missing keys take defaults, unknown keys are rejected.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let params: Self =
            serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let params: Self =
            serde_json::from_value(value).map_err(|e| SimError::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Position<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Position<T> {
    pub fn new(x: T, y: T) -> Self {
        Position { x, y }
    }

    pub fn distance_m(&self, other: &Position<T>) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MecBs<T> {
    pub id: usize,
    pub position: Position<T>,
    pub capacity_bps: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IovtDevice<T> {
    pub id: usize,
    pub position: Position<T>,
    pub workload_bits: T,
    pub deadline_s: T,
    pub local_rate_bps: T,
    pub power_cap_w: T,
}

/// Immutable world state. Ids equal positions in the respective lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    params: SimParams<T>,
    bss: Vec<MecBs<T>>,
    devices: Vec<IovtDevice<T>>,
}

impl<T: Real> Scenario<T> {
    /// Assembles a scenario from explicit parts, checking every invariant.
    pub fn from_parts(
        params: SimParams<T>,
        bss: Vec<MecBs<T>>,
        devices: Vec<IovtDevice<T>>,
    ) -> Result<Self> {
        params.validate()?;
        if bss.is_empty() {
            return Err(SimError::param("bss", "at least one MEC-BS is required"));
        }
        for (i, bs) in bss.iter().enumerate() {
            if bs.id != i {
                return Err(SimError::param("bss", format!("id {} at index {i}", bs.id)));
            }
            if !(bs.capacity_bps > T::zero() && bs.capacity_bps.is_finite()) {
                return Err(SimError::param("bss", format!("bs {i} capacity must be > 0")));
            }
        }
        for (i, d) in devices.iter().enumerate() {
            if d.id != i {
                return Err(SimError::param("devices", format!("id {} at index {i}", d.id)));
            }
            let ok = [d.workload_bits, d.deadline_s, d.local_rate_bps, d.power_cap_w]
                .iter()
                .all(|v| *v > T::zero() && v.is_finite());
            if !ok {
                return Err(SimError::param(
                    "devices",
                    format!("device {i} attributes must all be > 0"),
                ));
            }
        }
        Ok(Scenario {
            params,
            bss,
            devices,
        })
    }

    pub fn params(&self) -> &SimParams<T> {
        &self.params
    }

    pub fn bss(&self) -> &[MecBs<T>] {
        &self.bss
    }

    pub fn devices(&self) -> &[IovtDevice<T>] {
        &self.devices
    }

    pub fn num_bss(&self) -> usize {
        self.bss.len()
    }

    pub fn num_devices(&self) -> usize {
        self.devices.len()
    }
}

/// The 3x3 grid of MEC-BS sites at {-200, 0, 200}² metres, row-major from the top left.
pub fn default_grid<T: Real>() -> Vec<Position<T>> {
    let coords = [-200.0, 0.0, 200.0];
    let mut out = Vec::with_capacity(9);
    for y in coords.iter().rev() {
        for x in coords.iter() {
            out.push(Position::new(T::lit(*x), T::lit(*y)));
        }
    }
    out
}

/// Nine MEC-BSs on the evaluation grid with capacities drawn from `params.seed`.
pub fn make_grid_topology<T: Real>(params: SimParams<T>) -> Result<Scenario<T>> {
    params.validate()?;
    let mut rng = stream_rng(params.seed, TOPOLOGY_STREAM);
    let bss = default_grid()
        .into_iter()
        .enumerate()
        .map(|(id, position)| MecBs {
            id,
            position,
            capacity_bps: params.mec_capacity_range_bps.sample(&mut rng),
        })
        .collect();
    Scenario::from_parts(params, bss, Vec::new())
}

/// Replaces the device list with `n` devices drawn uniformly over the area and
/// the configured attribute ranges.
pub fn populate_devices<T: Real>(scenario: &Scenario<T>, n: usize, seed: u64) -> Scenario<T> {
    let p = &scenario.params;
    let mut rng = stream_rng(seed, DEVICE_STREAM);
    let half = p.area_m / T::lit(2.0);
    let side = Interval(-half, half);
    let devices = (0..n)
        .map(|id| IovtDevice {
            id,
            position: Position::new(side.sample(&mut rng), side.sample(&mut rng)),
            workload_bits: p.workload_range_bits.sample(&mut rng),
            deadline_s: p.deadline_range_s.sample(&mut rng),
            local_rate_bps: p.local_rate_range_bps.sample(&mut rng),
            power_cap_w: p.power_cap_w,
        })
        .collect();
    Scenario {
        params: p.clone(),
        bss: scenario.bss.clone(),
        devices,
    }
}
