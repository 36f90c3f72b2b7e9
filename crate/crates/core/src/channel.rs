//! Large-scale pathloss, Rayleigh block fading and noise power.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SimError};
use crate::scalar::Real;
use crate::scenario::{stream_rng, IovtDevice, MecBs, Scenario, SimParams, FADING_STREAM};

/// `128.1 + 37.6 log10(d)` with `d` in kilometres.
pub fn pathloss_db<T: Real>(distance_km: T) -> Result<T> {
    if !(distance_km > T::zero()) {
        return Err(SimError::domain(
            "pathloss_db",
            format!("distance must be > 0 km, got {distance_km}"),
        ));
    }
    Ok(T::lit(128.1) + T::lit(37.6) * distance_km.log10())
}

/// Linear gain for a given pathloss: `|h|² · 10^(-PL/10)`.
pub fn gain_from_pathloss<T: Real>(pathloss_db: T, fading: Complex<T>) -> T {
    fading.norm_sqr() * T::lit(10.0).powf(-pathloss_db / T::lit(10.0))
}

pub fn channel_gain<T: Real>(device: &IovtDevice<T>, bs: &MecBs<T>, fading: Complex<T>) -> Result<T> {
    let d_m = device.position.distance_m(&bs.position);
    if !(d_m > T::zero()) {
        return Err(SimError::domain(
            "channel_gain",
            format!("device {} is co-located with bs {}", device.id, bs.id),
        ));
    }
    let pl = pathloss_db(d_m / T::lit(1000.0))?;
    Ok(gain_from_pathloss(pl, fading))
}

/// `σ² = B · N0` in watts.
pub fn noise_power_w<T: Real>(params: &SimParams<T>) -> T {
    params.bandwidth_hz * T::lit(10.0).powf((params.noise_psd_dbm_hz - T::lit(30.0)) / T::lit(10.0))
}

/// One draw from CN(0, 1).
pub fn rayleigh_coeff<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex::new(T::lit(re * scale), T::lit(im * scale))
}

/// Per (device, BS) gains, stored row-major by device.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState<T> {
    num_bss: usize,
    gains: Vec<T>,
    mean_gains: Vec<T>,
    noise_w: T,
}

impl<T: Real> ChannelState<T> {
    /// Draws block fading for every link. Fading is generated device-major from
    /// the fading stream of `seed`, so a device prefix sees the same draws.
    pub fn draw(scenario: &Scenario<T>, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, FADING_STREAM);
        Self::with_fading(scenario, |_, _| rayleigh_coeff(&mut rng))
    }

    /// Builds the state from an explicit fading coefficient per link.
    pub fn with_fading<F>(scenario: &Scenario<T>, mut fading: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> Complex<T>,
    {
        let m = scenario.num_bss();
        let mut gains = Vec::with_capacity(scenario.num_devices() * m);
        let mut mean_gains = Vec::with_capacity(gains.capacity());
        let unit = Complex::new(T::one(), T::zero());
        for dev in scenario.devices() {
            for bs in scenario.bss() {
                let h = fading(dev.id, bs.id);
                gains.push(channel_gain(dev, bs, h)?);
                mean_gains.push(channel_gain(dev, bs, unit)?);
            }
        }
        Ok(ChannelState {
            num_bss: m,
            gains,
            mean_gains,
            noise_w: noise_power_w(scenario.params()),
        })
    }

    /// Hand-built state, rows indexed by device. Used for small constructed cases.
    pub fn from_matrices(gains: Vec<Vec<T>>, mean_gains: Vec<Vec<T>>, noise_w: T) -> Result<Self> {
        let num_bss = gains.first().map_or(0, Vec::len);
        if gains.len() != mean_gains.len()
            || gains.iter().chain(mean_gains.iter()).any(|r| r.len() != num_bss)
        {
            return Err(SimError::param("gains", "ragged gain matrices"));
        }
        let flat: Vec<T> = gains.into_iter().flatten().collect();
        let mean: Vec<T> = mean_gains.into_iter().flatten().collect();
        if flat.iter().chain(mean.iter()).any(|g| !(*g >= T::zero() && g.is_finite())) {
            return Err(SimError::param("gains", "entries must be finite and >= 0"));
        }
        Ok(ChannelState {
            num_bss,
            gains: flat,
            mean_gains: mean,
            noise_w,
        })
    }

    /// Instantaneous gain including fading.
    pub fn gain(&self, device: usize, bs: usize) -> T {
        self.gains[device * self.num_bss + bs]
    }

    /// Pathloss-only gain.
    pub fn mean_gain(&self, device: usize, bs: usize) -> T {
        self.mean_gains[device * self.num_bss + bs]
    }

    pub fn noise_w(&self) -> T {
        self.noise_w
    }

    pub fn num_devices(&self) -> usize {
        if self.num_bss == 0 {
            0
        } else {
            self.gains.len() / self.num_bss
        }
    }

    pub fn num_bss(&self) -> usize {
        self.num_bss
    }
}
