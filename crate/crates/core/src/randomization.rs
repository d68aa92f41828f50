//! Per-episode dynamics randomization and velocity-push scheduling.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::DomainParams;

/// Closed sampling interval `[lo, hi]`.
pub type Range = [f64; 2];

/// Sampling ranges for every randomized physical quantity. Multipliers
/// (link mass, gains, motor power) are fractions, so 0.8 means 80 %.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainRanges {
    pub ground_friction: Range,
    pub restitution: Range,
    pub load_mass: Range,
    pub link_mass_scale: Range,
    pub com_offset: Range,
    pub p_gain_scale: Range,
    pub d_gain_scale: Range,
    pub motor_power_scale: Range,
    pub action_delay: Range,
}

impl Default for DomainRanges {
    fn default() -> Self {
        Self {
            ground_friction: [0.05, 2.75],
            restitution: [0.0, 1.0],
            load_mass: [0.0, 3.0],
            link_mass_scale: [0.8, 1.2],
            com_offset: [-0.05, 0.05],
            p_gain_scale: [0.8, 1.2],
            d_gain_scale: [0.8, 1.2],
            motor_power_scale: [0.8, 1.2],
            action_delay: [0.0, 0.02],
        }
    }
}

impl DomainRanges {
    pub fn contains(&self, p: &DomainParams) -> bool {
        let inside = |r: &Range, v: f64| v >= r[0] && v <= r[1];
        inside(&self.ground_friction, p.ground_friction)
            && inside(&self.restitution, p.restitution)
            && inside(&self.load_mass, p.load_mass)
            && inside(&self.link_mass_scale, p.link_mass_scale)
            && p.com_offset.iter().all(|&c| inside(&self.com_offset, c))
            && inside(&self.p_gain_scale, p.p_gain_scale)
            && inside(&self.d_gain_scale, p.d_gain_scale)
            && inside(&self.motor_power_scale, p.motor_power_scale)
            && inside(&self.action_delay, p.action_delay)
    }

    pub fn validate(&self) -> Result<(), String> {
        let rows = [
            ("ground_friction", self.ground_friction),
            ("restitution", self.restitution),
            ("load_mass", self.load_mass),
            ("link_mass_scale", self.link_mass_scale),
            ("com_offset", self.com_offset),
            ("p_gain_scale", self.p_gain_scale),
            ("d_gain_scale", self.d_gain_scale),
            ("motor_power_scale", self.motor_power_scale),
            ("action_delay", self.action_delay),
        ];
        for (name, [lo, hi]) in rows {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(format!("randomization range {name} = [{lo}, {hi}] is invalid"));
            }
        }
        if self.restitution[0] < 0.0 || self.restitution[1] > 1.0 {
            return Err("restitution must lie in [0, 1]".into());
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: Range) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

/// Draws every field independently and uniformly from its range; the CoM
/// offset is sampled per axis.
pub fn sample_domain_params<R: Rng + ?Sized>(rng: &mut R, ranges: &DomainRanges) -> DomainParams {
    DomainParams {
        ground_friction: uniform(rng, ranges.ground_friction),
        restitution: uniform(rng, ranges.restitution),
        load_mass: uniform(rng, ranges.load_mass),
        link_mass_scale: uniform(rng, ranges.link_mass_scale),
        com_offset: [
            uniform(rng, ranges.com_offset),
            uniform(rng, ranges.com_offset),
            uniform(rng, ranges.com_offset),
        ],
        p_gain_scale: uniform(rng, ranges.p_gain_scale),
        d_gain_scale: uniform(rng, ranges.d_gain_scale),
        motor_power_scale: uniform(rng, ranges.motor_power_scale),
        action_delay: uniform(rng, ranges.action_delay),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PushEvent {
    /// Episode time at which the push fires, s.
    pub time: f64,
    pub delta_v: [f64; 3],
}

impl PushEvent {
    pub fn delta(&self) -> Vector3<f64> {
        Vector3::from(self.delta_v)
    }
}

/// Push times with inter-event gaps uniform in `interval` and horizontal
/// velocity kicks uniform in the disc of radius `max_push`.
pub fn schedule_pushes<R: Rng + ?Sized>(
    rng: &mut R,
    episode_length: f64,
    interval: Range,
    max_push: f64,
) -> Vec<PushEvent> {
    let mut events = Vec::new();
    if !(episode_length > 0.0) || interval[0] <= 0.0 {
        return events;
    }
    let mut t = 0.0;
    loop {
        t += uniform(rng, interval);
        if t >= episode_length {
            break;
        }
        let radius = max_push * rng.random::<f64>().sqrt();
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        events.push(PushEvent { time: t, delta_v: [radius * angle.cos(), radius * angle.sin(), 0.0] });
    }
    events
}
