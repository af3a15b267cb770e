//! Seeded, per-sample-stream domain sampling.
//!
//! Every sample index gets its own counter-mode RNG stream, so sweeps are
//! reproducible for a fixed seed no matter how the sample loop is ordered
//! or parallelized.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::contact::{end_gap, step_explicit, DomainBounds, ModelParams, State};
use crate::losses::Datapoint;

/// Uniform sampler over the boxed data domain.
///
/// Positions are uniform on `[z_lo, z_hi]`, speeds and observed outputs
/// uniform on `[-v_max, v_max]`. Sampled input/output pairs are rejected
/// until the end-of-step gap `z + y*dt - theta` is at most `phi_max`, so
/// that the domain matches the range the suprema are taken over.
#[derive(Debug, Clone)]
pub struct DomainSampler {
    params: ModelParams,
    bounds: DomainBounds,
    seed: u64,
}

impl DomainSampler {
    pub fn new(params: &ModelParams, bounds: &DomainBounds, seed: u64) -> Self {
        DomainSampler { params: *params, bounds: *bounds, seed }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn bounds(&self) -> &DomainBounds {
        &self.bounds
    }

    /// Independent RNG stream for sample `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// A state uniform over the position/velocity box.
    pub fn state(&self, index: u64) -> State {
        let mut rng = self.stream(index);
        self.state_from(&mut rng)
    }

    fn state_from(&self, rng: &mut ChaCha8Rng) -> State {
        let z = rng.random_range(self.bounds.z_lo..=self.bounds.z_hi);
        let v = rng.random_range(-self.bounds.v_max..=self.bounds.v_max);
        State::new(z, v)
    }

    /// An input/output pair uniform over the domain box with the
    /// end-of-step gap capped at `phi_max`.
    pub fn datapoint(&self, index: u64) -> Datapoint {
        let mut rng = self.stream(index);
        loop {
            let x = self.state_from(&mut rng);
            let y = rng.random_range(-self.bounds.v_max..=self.bounds.v_max);
            let d = Datapoint::new(x.z, x.v, y);
            if end_gap(&self.params, d.x, d.y) <= self.bounds.phi_max {
                return d;
            }
        }
    }

    /// A domain datapoint together with an impulse uniform on
    /// `[-b_lambda, b_lambda]`.
    pub fn datapoint_lambda(&self, index: u64) -> (Datapoint, f64) {
        let mut rng = self.stream(index);
        let d = loop {
            let x = self.state_from(&mut rng);
            let y = rng.random_range(-self.bounds.v_max..=self.bounds.v_max);
            let d = Datapoint::new(x.z, x.v, y);
            if end_gap(&self.params, d.x, d.y) <= self.bounds.phi_max {
                break d;
            }
        };
        let lambda = rng.random_range(-self.bounds.b_lambda..=self.bounds.b_lambda);
        (d, lambda)
    }

    /// A realizable datapoint: uniform state, output from the explicit step.
    pub fn on_graph(&self, index: u64) -> Datapoint {
        let mut rng = self.stream(index);
        let x = self.state_from(&mut rng);
        Datapoint { x, y: step_explicit(&self.params, x) }
    }

    /// A realizable datapoint whose state is forced near contact with
    /// probability `contact_bias`; biased draws always take an active
    /// contact step.
    pub fn on_graph_biased(&self, index: u64, contact_bias: f64) -> Datapoint {
        let mut rng = self.stream(index);
        let x = if rng.random_range(0.0..1.0) < contact_bias {
            self.near_contact_state(&mut rng)
        } else {
            self.state_from(&mut rng)
        };
        Datapoint { x, y: step_explicit(&self.params, x) }
    }

    /// A state within `v_max * dt` of the ground from which the contact
    /// impulse activates: `z - theta < -v*dt + a_grav*dt^2`.
    pub fn near_contact_state(&self, rng: &mut ChaCha8Rng) -> State {
        let p = &self.params;
        let pad = self.bounds.v_max * p.dt;
        let v = rng.random_range(-self.bounds.v_max..=self.bounds.v_max);
        let hi = -v * p.dt + p.free_fall_delta() * p.dt;
        let lo = (-pad).min(hi - f64::EPSILON);
        let gap = rng.random_range(lo..hi);
        State::new(p.theta + gap, v)
    }

    /// A realizable datapoint with the output shifted by a uniform offset
    /// in `[-magnitude, magnitude]`.
    pub fn offset_from_graph(&self, index: u64, magnitude: f64) -> Datapoint {
        let mut rng = self.stream(index);
        let x = self.state_from(&mut rng);
        let y = step_explicit(&self.params, x).0 + rng.random_range(-magnitude..=magnitude);
        Datapoint::new(x.z, x.v, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::pos;

    #[test]
    fn deterministic_per_index() {
        let p = ModelParams::default();
        let b = DomainBounds::defaults(&p);
        let s1 = DomainSampler::new(&p, &b, 9);
        let s2 = DomainSampler::new(&p, &b, 9);
        for i in 0..100 {
            assert_eq!(s1.datapoint(i), s2.datapoint(i));
        }
        assert_ne!(s1.datapoint(0), DomainSampler::new(&p, &b, 10).datapoint(0));
    }

    #[test]
    fn samples_stay_in_box() {
        let p = ModelParams::default();
        let b = DomainBounds::defaults(&p);
        let s = DomainSampler::new(&p, &b, 17);
        for i in 0..5000 {
            let (d, lam) = s.datapoint_lambda(i);
            assert!(d.x.z >= b.z_lo && d.x.z <= b.z_hi);
            assert!(d.x.v.abs() <= b.v_max);
            assert!(d.y.0.abs() <= b.v_max);
            assert!(lam.abs() <= b.b_lambda);
            assert!(end_gap(&p, d.x, d.y) <= b.phi_max);
        }
    }

    #[test]
    fn near_contact_states_activate_contact() {
        let p = ModelParams::default();
        let b = DomainBounds::defaults(&p);
        let s = DomainSampler::new(&p, &b, 23);
        for i in 0..2000 {
            let mut rng = s.stream(i);
            let x = s.near_contact_state(&mut rng);
            assert!(pos(p.contact_activation(x)) > 0.0, "state ({}, {})", x.z, x.v);
            assert!((x.z - p.theta).abs() <= b.v_max * p.dt + p.free_fall_delta() * p.dt);
        }
    }
}
