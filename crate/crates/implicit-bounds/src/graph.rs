//! Graph distance to the model's input/output set, the prediction-loss
//! sandwich check, the violation-loss zero-set check, and quadratic-growth
//! certification.
//!
//! The model graph is `{(z, v, v') : v' = step_explicit(z, v)}`, a union of
//! two planar pieces (free fall and contact). Distance from a datapoint to
//! the graph is found by a coarse grid scan over an enlarged domain box
//! followed by shrinking-window refinement, seeded both at the best grid
//! cell and at constructively known graph points near the query.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{neg, step_explicit, DomainBounds, ModelParams, State};
use crate::error::{Error, Result};
use crate::losses::{loss_explicit, loss_violation, Datapoint, Epsilon};
use crate::sampling::DomainSampler;

/// Grid-search schedule of the distance oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Points per axis of the initial scan over the enlarged box.
    pub coarse_points: usize,
    /// Points per axis of each refinement window.
    pub refine_points: usize,
    /// Window shrink factor per refinement round.
    pub shrink: f64,
    /// Refinement rounds are never fewer than this.
    pub min_rounds: usize,
    /// Hard cap on refinement rounds.
    pub max_rounds: usize,
    /// Refinement continues until every coordinate of the embedded space
    /// (position, velocity, and next velocity) resolves below this.
    pub target_resolution: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            coarse_points: 201,
            refine_points: 61,
            shrink: 10.0,
            min_rounds: 5,
            max_rounds: 24,
            target_resolution: 1e-6,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.coarse_points < 3 || self.refine_points < 3 {
            return Err(Error::InvalidParameter("grid needs at least 3 points per axis".into()));
        }
        if !self.shrink.is_finite() || self.shrink <= 1.0 {
            return Err(Error::InvalidParameter(format!("shrink must be > 1, got {}", self.shrink)));
        }
        if self.min_rounds == 0 || self.max_rounds < self.min_rounds {
            return Err(Error::InvalidParameter("rounds must satisfy 1 <= min <= max".into()));
        }
        if !self.target_resolution.is_finite() || self.target_resolution <= 0.0 {
            return Err(Error::InvalidParameter("target_resolution must be > 0".into()));
        }
        Ok(())
    }

    /// Rounds needed so the final cell resolves `target_resolution` in all
    /// three embedded coordinates; the next-velocity extent of a cell is
    /// bounded through the slope cap `|df/dz| <= 1/dt`, `|df/dv| <= 1`.
    fn rounds(&self, w_z: f64, w_v: f64, dt: f64) -> usize {
        let den = (self.refine_points - 1) as f64;
        let mut k = self.min_rounds;
        while k < self.max_rounds {
            let s = self.shrink.powi(k as i32) * den;
            let (r_z, r_v) = (w_z / s, w_v / s);
            let t = self.target_resolution;
            if r_z <= t && r_v <= t && r_z / dt + r_v <= t {
                break;
            }
            k += 1;
        }
        k
    }

    fn final_resolution(&self, w_z: f64, w_v: f64, dt: f64) -> f64 {
        let s = self.shrink.powi(self.rounds(w_z, w_v, dt) as i32) * (self.refine_points - 1) as f64;
        let (r_z, r_v) = (w_z / s, w_v / s);
        r_z.max(r_v).max(r_z / dt + r_v)
    }
}

/// Result of one graph-distance query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphDistanceResult {
    /// Euclidean distance in (z, v, v') space; nonnegative.
    pub distance: f64,
    /// The minimizing graph point; its output is `step_explicit` of its state.
    pub nearest: (State, f64),
    /// Worst per-coordinate cell extent at the final refinement.
    pub resolution: f64,
    /// The grid minimizer landed within one cell of the enlarged search
    /// box edge, so the query is inconclusive about the true minimizer.
    pub on_boundary: bool,
}

#[derive(Clone, Copy)]
struct Objective {
    z_i: f64,
    v_i: f64,
    y_i: f64,
    theta: f64,
    neg_a_dt: f64,
    inv_dt: f64,
}

impl Objective {
    fn new(params: &ModelParams, d: &Datapoint) -> Self {
        Objective {
            z_i: d.x.z,
            v_i: d.x.v,
            y_i: d.y.0,
            theta: params.theta,
            neg_a_dt: -params.free_fall_delta(),
            inv_dt: 1.0 / params.dt,
        }
    }

    /// Squared distance of the query to the graph point over `(z, v)`.
    /// `max(free fall, contact)` is the exact one-step map.
    #[inline(always)]
    fn eval_with_row(&self, w: f64, z: f64, v: f64) -> f64 {
        let ff = v + self.neg_a_dt;
        let f = if w > ff { w } else { ff };
        let dz = z - self.z_i;
        let dv = v - self.v_i;
        let dy = f - self.y_i;
        dz * dz + dv * dv + dy * dy
    }

    #[inline]
    fn eval(&self, z: f64, v: f64) -> f64 {
        self.eval_with_row((self.theta - z) * self.inv_dt, z, v)
    }

    /// Scan a centered window, returning the best point seen.
    fn scan(&self, cz: f64, cv: f64, hw_z: f64, hw_v: f64, points: usize) -> (f64, f64, f64) {
        let cell_z = 2.0 * hw_z / (points - 1) as f64;
        let cell_v = 2.0 * hw_v / (points - 1) as f64;
        let mut best = (f64::INFINITY, cz, cv);
        for iz in 0..points {
            let z = cz - hw_z + cell_z * iz as f64;
            let w = (self.theta - z) * self.inv_dt;
            for iv in 0..points {
                let v = cv - hw_v + cell_v * iv as f64;
                let val = self.eval_with_row(w, z, v);
                if val < best.0 {
                    best = (val, z, v);
                }
            }
        }
        best
    }
}

/// Distance from a datapoint to the model graph.
///
/// Refinement is seeded at the best coarse cell and at graph points built
/// directly from the query: the free-fall point shifted by
/// `(neg(phi' - d_v*dt), 0)`, the contact point shifted by `(-phi', 0)`,
/// and the query state itself. Those seeds make the reported distance an
/// upper bound that never exceeds the prediction error, and the grid keeps
/// it within `resolution * sqrt(3)` of the true minimum.
pub fn graph_distance(
    params: &ModelParams,
    bounds: &DomainBounds,
    d: &Datapoint,
    grid: &GridConfig,
) -> Result<GraphDistanceResult> {
    grid.validate()?;
    if !d.is_finite() {
        return Err(Error::NonFinite(format!("datapoint ({}, {}, {})", d.x.z, d.x.v, d.y.0)));
    }
    let obj = Objective::new(params, d);

    // domain box enlarged by 20% on each side
    let (grow_z, grow_v) = (0.2 * (bounds.z_hi - bounds.z_lo), 0.2 * (2.0 * bounds.v_max));
    let (z_lo, z_hi) = (bounds.z_lo - grow_z, bounds.z_hi + grow_z);
    let (v_lo, v_hi) = (-bounds.v_max - grow_v, bounds.v_max + grow_v);
    let (w_z, w_v) = (z_hi - z_lo, v_hi - v_lo);

    let coarse = obj.scan(
        0.5 * (z_lo + z_hi),
        0.5 * (v_lo + v_hi),
        0.5 * w_z,
        0.5 * w_v,
        grid.coarse_points,
    );

    // constructive graph points near the query
    let d_v = d.y.0 - d.x.v + params.free_fall_delta();
    let phi_prime = d.x.z + d.y.0 * params.dt - params.theta;
    let d_z = neg(phi_prime - d_v * params.dt);
    let witnesses = [
        (d.x.z + d_z, d.x.v),      // free-fall piece
        (d.x.z - phi_prime, d.x.v), // contact piece
        (d.x.z, d.x.v),             // prediction of the query state
    ];

    let mut seeds: Vec<(f64, f64, f64)> = vec![coarse];
    for (z, v) in witnesses {
        if seeds.iter().any(|s| (s.1 - z).abs() <= 1e-9 && (s.2 - v).abs() <= 1e-9) {
            continue;
        }
        seeds.push((obj.eval(z, v), z, v));
    }
    let mut best = *seeds
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("seeds nonempty");

    // refine around the coarse minimizer and the two best witnesses
    seeds[1..].sort_by(|a, b| a.0.total_cmp(&b.0));
    let rounds = grid.rounds(w_z, w_v, params.dt);
    for seed in seeds.iter().take(3) {
        let mut inc = *seed;
        for round in 1..=rounds {
            let s = grid.shrink.powi(round as i32);
            let cand = obj.scan(inc.1, inc.2, 0.5 * w_z / s, 0.5 * w_v / s, grid.refine_points);
            if cand.0 < inc.0 {
                inc = cand;
            }
        }
        if inc.0 < best.0 {
            best = inc;
        }
    }

    let nearest_state = State::new(best.1, best.2);
    let nearest_y = step_explicit(params, nearest_state).0;
    let dz = nearest_state.z - d.x.z;
    let dv = nearest_state.v - d.x.v;
    let dy = nearest_y - d.y.0;
    let distance = (dz * dz + dv * dv + dy * dy).sqrt();

    let resolution = grid.final_resolution(w_z, w_v, params.dt);
    // a minimizer within one coarse cell of (or beyond) the search-box
    // edge leaves the true minimizer unaccounted for
    let cell_z = w_z / (grid.coarse_points - 1) as f64;
    let cell_v = w_v / (grid.coarse_points - 1) as f64;
    let on_boundary = best.1 <= z_lo + cell_z
        || best.1 >= z_hi - cell_z
        || best.2 <= v_lo + cell_v
        || best.2 >= v_hi - cell_v;

    Ok(GraphDistanceResult { distance, nearest: (nearest_state, nearest_y), resolution, on_boundary })
}

/// Slope bound of the explicit step w.r.t. the state over the domain,
/// `sqrt(1/dt^2 + 1)`; the position slope `1/dt` is attained on the
/// contact piece and the velocity slope `1` on the free-fall piece.
pub fn lipschitz_f_state(params: &ModelParams) -> f64 {
    (1.0 / (params.dt * params.dt) + 1.0).sqrt()
}

/// Result of the two-sided comparison of prediction loss and squared graph
/// distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichCheck {
    pub l_exp: f64,
    pub distance: f64,
    /// `l_exp / (1 + L_f^2)`.
    pub lower: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
    /// `l_exp - d^2` (nonnegative when the upper side holds).
    pub upper_margin: f64,
    /// `d^2 - lower` (nonnegative when the lower side holds).
    pub lower_margin: f64,
}

impl SandwichCheck {
    pub fn passed(&self) -> bool {
        self.upper_ok && self.lower_ok
    }
}

/// Checks `l_exp >= d^2 >= l_exp / (1 + L_f^2)` for one datapoint.
///
/// `l_f_x` must upper-bound the state slope of the explicit step; the
/// oracle never under-reports the distance and never exceeds the
/// prediction error beyond rounding, so both sides carry only
/// floating-point slack.
pub fn sandwich_check(
    params: &ModelParams,
    bounds: &DomainBounds,
    d: &Datapoint,
    l_f_x: f64,
    grid: &GridConfig,
) -> Result<SandwichCheck> {
    let l_exp = loss_explicit(params, d).value;
    let res = graph_distance(params, bounds, d, grid)?;
    let d2 = res.distance * res.distance;
    let lower = l_exp / (1.0 + l_f_x * l_f_x);
    let upper_ok = d2 <= l_exp * (1.0 + 1e-12) + 1e-11;
    let lower_ok = d2 >= lower * (1.0 - 1e-12) - 1e-18;
    Ok(SandwichCheck {
        l_exp,
        distance: res.distance,
        lower,
        upper_ok,
        lower_ok,
        upper_margin: l_exp - d2,
        lower_margin: d2 - lower,
    })
}

/// Violation loss at a realizable datapoint can keep ~1e-15 of rounding
/// noise from the end-of-step gap, so "zero" means below this.
pub const ON_GRAPH_LOSS_TOL: f64 = 1e-13;

/// Result of checking that the violation loss vanishes exactly on the
/// graph and is strictly positive away from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSetReport {
    pub on_graph_checked: u64,
    pub on_graph_max_loss: f64,
    pub off_graph_checked: u64,
    /// Smallest violation loss among datapoints at graph distance >= 0.01.
    pub off_graph_min_loss: f64,
    pub violations: Vec<Datapoint>,
}

impl ZeroSetReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Samples half realizable and half free datapoints: realizable ones must
/// have violation loss below `ON_GRAPH_LOSS_TOL`; free ones at graph
/// distance at least `0.01` must have strictly positive loss.
pub fn zero_set_check(
    params: &ModelParams,
    bounds: &DomainBounds,
    eps: Epsilon,
    samples: u64,
    seed: u64,
    grid: &GridConfig,
) -> Result<ZeroSetReport> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let sampler = DomainSampler::new(params, bounds, seed);
    let on_count = samples - samples / 2;
    let mut report = ZeroSetReport {
        on_graph_checked: on_count,
        on_graph_max_loss: 0.0,
        off_graph_checked: 0,
        off_graph_min_loss: f64::INFINITY,
        violations: Vec::new(),
    };
    for i in 0..on_count {
        let d = sampler.on_graph(i);
        let l = loss_violation(params, &d, eps).value;
        report.on_graph_max_loss = report.on_graph_max_loss.max(l);
        if l > ON_GRAPH_LOSS_TOL {
            report.violations.push(d);
        }
    }
    for i in on_count..samples {
        let d = sampler.datapoint(i);
        let gd = graph_distance(params, bounds, &d, grid)?;
        if gd.distance < 0.01 {
            continue;
        }
        report.off_graph_checked += 1;
        let l = loss_violation(params, &d, eps).value;
        report.off_graph_min_loss = report.off_graph_min_loss.min(l);
        if l.is_nan() || l <= 0.0 {
            report.violations.push(d);
        }
    }
    Ok(report)
}

/// Quadratic-growth modulus of the violation loss:
/// `min(m^2/(m^2/2 + eps), 2/(1 + (2 dt)^2), 1/(4 eps), (m^2/2)/eps)`.
///
/// Tends to 0 as `eps` grows and to `min(2, 2/(1 + (2 dt)^2))` as `eps`
/// vanishes.
pub fn qg_modulus(params: &ModelParams, eps: Epsilon) -> f64 {
    let m2 = params.m * params.m;
    let e = eps.value();
    let two_dt = 2.0 * params.dt;
    (m2 / (0.5 * m2 + e))
        .min(2.0 / (1.0 + two_dt * two_dt))
        .min(1.0 / (4.0 * e))
        .min(0.5 * m2 / e)
}

/// The weight at which the violation loss is 1-QG: `min(1/4, m^2/2)`.
pub fn epsilon_select(params: &ModelParams) -> Epsilon {
    Epsilon::new((0.25f64).min(0.5 * params.m * params.m)).expect("positive by construction")
}

/// A sampled datapoint whose squared graph distance exceeded the certified
/// multiple of its violation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QgViolation {
    pub index: u64,
    pub datapoint: Datapoint,
    pub distance: f64,
    pub loss: f64,
    pub ratio: f64,
}

/// Certificate that `d^2 <= (2/mu) * l_vimp` held on every sampled
/// datapoint, up to the discretization slack `2*d*r + r^2` of the
/// distance oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct QGCertificate {
    pub mu: f64,
    pub eps: f64,
    pub samples: u64,
    /// Max over samples of `d^2 / ((2/mu) l_vimp + slack)`; passes iff <= 1.
    pub worst_ratio: f64,
    /// Oracle resolution used for the slack.
    pub resolution: f64,
    pub violations: Vec<QgViolation>,
}

impl QGCertificate {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies quadratic growth of the violation loss against the distance
/// oracle on seeded domain datapoints. Requires `dt <= 1/2`, where the
/// modulus formula is valid.
pub fn qg_verify(
    params: &ModelParams,
    bounds: &DomainBounds,
    eps: Epsilon,
    samples: u64,
    seed: u64,
    grid: &GridConfig,
) -> Result<QGCertificate> {
    if params.dt > 0.5 {
        return Err(Error::InvalidParameter(format!(
            "quadratic growth is certified for dt <= 1/2, got {}",
            params.dt
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    grid.validate()?;
    let mu = qg_modulus(params, eps);
    let r = grid.target_resolution;
    let sampler = DomainSampler::new(params, bounds, seed);

    let per_sample: Vec<(f64, Option<QgViolation>)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let d = sampler.datapoint(i);
            let loss = loss_violation(params, &d, eps).value;
            let gd = graph_distance(params, bounds, &d, grid)
                .expect("finite sampled datapoint");
            let dist = gd.distance;
            let allowed = (2.0 / mu) * loss + 2.0 * dist * r + r * r;
            let ratio = if allowed > 0.0 { dist * dist / allowed } else { f64::INFINITY };
            let violation = (ratio > 1.0).then_some(QgViolation {
                index: i,
                datapoint: d,
                distance: dist,
                loss,
                ratio,
            });
            (ratio, violation)
        })
        .collect();

    let mut worst_ratio = 0.0f64;
    let mut violations = Vec::new();
    for (ratio, v) in per_sample {
        worst_ratio = worst_ratio.max(ratio);
        if let Some(v) = v {
            violations.push(v);
        }
    }
    Ok(QGCertificate {
        mu,
        eps: eps.value(),
        samples,
        worst_ratio,
        resolution: r,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{pos, ModelParams};

    fn defaults() -> (ModelParams, DomainBounds) {
        let p = ModelParams::default();
        let b = DomainBounds::defaults(&p);
        (p, b)
    }

    fn eps(v: f64) -> Epsilon {
        Epsilon::new(v).unwrap()
    }

    /// Exact distance to the two-piece graph by convex projection, used to
    /// certify the grid oracle. Each piece is the image of a half-plane
    /// under an affine map, hence convex; the minimum over the pair is the
    /// true distance.
    fn exact_distance(p: &ModelParams, d: &Datapoint) -> f64 {
        let (zi, vi, yi) = (d.x.z, d.x.v, d.y.0);
        let a_dt = p.free_fall_delta();
        let mut best = f64::INFINITY;

        // free-fall plane y = v - a*dt, valid where activation <= 0
        let v = 0.5 * (vi + yi + a_dt);
        let z = zi;
        if pos(p.contact_activation(State::new(z, v))) == 0.0 {
            let dd = (v - vi).powi(2) + (v - a_dt - yi).powi(2);
            best = best.min(dd);
        }

        // contact plane z + dt*y = theta, v free, valid where activation >= 0
        let t = (zi + p.dt * yi - p.theta) / (1.0 + p.dt * p.dt);
        let (z2, y2) = (zi - t, yi - p.dt * t);
        if (p.theta - z2) / p.dt >= vi - a_dt {
            let dd = (z2 - zi).powi(2) + (y2 - yi).powi(2);
            best = best.min(dd);
        }

        // seam of the two pieces: (z, a*dt + (theta - z)/dt, (theta - z)/dt)
        let p0 = [p.theta, a_dt, 0.0];
        let dir = {
            let raw = [1.0, -1.0 / p.dt, -1.0 / p.dt];
            let n = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
            [raw[0] / n, raw[1] / n, raw[2] / n]
        };
        let q = [zi - p0[0], vi - p0[1], yi - p0[2]];
        let along = q[0] * dir[0] + q[1] * dir[1] + q[2] * dir[2];
        let dd = (q[0] - along * dir[0]).powi(2)
            + (q[1] - along * dir[1]).powi(2)
            + (q[2] - along * dir[2]).powi(2);
        best = best.min(dd);
        best.sqrt()
    }

    #[test]
    fn on_graph_distance_vanishes() {
        let (p, b) = defaults();
        let grid = GridConfig::default();
        let sampler = DomainSampler::new(&p, &b, 2);
        for i in 0..20 {
            let d = sampler.on_graph(i);
            let r = graph_distance(&p, &b, &d, &grid).unwrap();
            assert!(r.distance <= r.resolution, "sample {i}: {} > {}", r.distance, r.resolution);
        }
    }

    #[test]
    fn free_fall_plane_distance() {
        let (p, b) = defaults();
        let d = Datapoint::new(1.0, 0.0, -0.04905 + 0.1);
        let r = graph_distance(&p, &b, &d, &GridConfig::default()).unwrap();
        let expect = 0.1 / 2.0f64.sqrt();
        assert!((r.distance - expect).abs() <= 1e-6, "got {}", r.distance);
        assert!(!r.on_boundary);
        // nearest output is the explicit step of the nearest state
        assert_eq!(r.nearest.1, step_explicit(&p, r.nearest.0).0);
    }

    #[test]
    fn stiff_region_distance_beats_prediction_error() {
        let (p, b) = defaults();
        let d = Datapoint::new(0.0, -15.0, 0.1);
        let r = graph_distance(&p, &b, &d, &GridConfig::default()).unwrap();
        let l_exp = loss_explicit(&p, &d).value;
        assert!(r.distance <= l_exp.sqrt());
        // projection onto the contact plane: 0.1 / sqrt(1/dt^2 + 1)
        let expect = 0.1 / (1.0 / (p.dt * p.dt) + 1.0).sqrt();
        assert!((r.distance - expect).abs() <= 1e-6, "got {}", r.distance);
    }

    #[test]
    fn oracle_matches_exact_projection() {
        let (p, b) = defaults();
        let grid = GridConfig::default();
        let sampler = DomainSampler::new(&p, &b, 37);
        for i in 0..250 {
            let d = sampler.datapoint(i);
            let r = graph_distance(&p, &b, &d, &grid).unwrap();
            let exact = exact_distance(&p, &d);
            assert!(
                r.distance >= exact - 1e-12,
                "sample {i}: oracle {} under exact {exact}",
                r.distance
            );
            assert!(
                r.distance - exact <= 3.0f64.sqrt() * r.resolution + 1e-12,
                "sample {i}: oracle {} vs exact {exact}, resolution {}",
                r.distance,
                r.resolution
            );
        }
    }

    #[test]
    fn refinement_is_monotone() {
        let (p, b) = defaults();
        let sampler = DomainSampler::new(&p, &b, 43);
        for i in 0..30 {
            let d = sampler.datapoint(i);
            let mut prev = f64::INFINITY;
            for target in [1e-2, 1e-4, 1e-6] {
                let grid = GridConfig { target_resolution: target, ..GridConfig::default() };
                let r = graph_distance(&p, &b, &d, &grid).unwrap();
                assert!(
                    r.distance <= prev + 1e-15,
                    "sample {i}: distance rose from {prev} to {} at target {target}",
                    r.distance
                );
                prev = r.distance;
            }
        }
    }

    #[test]
    fn resolution_meets_target() {
        let (p, b) = defaults();
        let grid = GridConfig::default();
        let d = Datapoint::new(0.5, 1.0, 2.0);
        let r = graph_distance(&p, &b, &d, &grid).unwrap();
        assert!(r.resolution <= grid.target_resolution);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (p, b) = defaults();
        let grid = GridConfig::default();
        assert!(graph_distance(&p, &b, &Datapoint::new(f64::NAN, 0.0, 0.0), &grid).is_err());
        let bad = GridConfig { shrink: 0.5, ..grid };
        assert!(graph_distance(&p, &b, &Datapoint::new(0.0, 0.0, 0.0), &bad).is_err());
    }

    #[test]
    fn sandwich_on_graph_trivial() {
        let (p, b) = defaults();
        let x = State::new(2.0, -1.0);
        let d = Datapoint { x, y: step_explicit(&p, x) };
        let c = sandwich_check(&p, &b, &d, lipschitz_f_state(&p), &GridConfig::default()).unwrap();
        assert!(c.passed());
        assert_eq!(c.l_exp, 0.0);
    }

    #[test]
    fn sandwich_free_fall_margins() {
        let (p, b) = defaults();
        let d = Datapoint::new(1.0, 0.0, -0.04905 + 0.1);
        let l = lipschitz_f_state(&p);
        let c = sandwich_check(&p, &b, &d, l, &GridConfig::default()).unwrap();
        assert!(c.passed());
        assert!((c.l_exp - 0.01).abs() < 1e-15);
        assert!((c.distance * c.distance - 0.005).abs() < 1e-8);
        assert!((c.lower - 0.01 / 40002.0).abs() < 1e-18);
    }

    #[test]
    fn sandwich_random_sweep() {
        let (p, b) = defaults();
        let grid = GridConfig::default();
        let l = lipschitz_f_state(&p);
        let sampler = DomainSampler::new(&p, &b, 47);
        for i in 0..200 {
            let d = sampler.datapoint(i);
            let c = sandwich_check(&p, &b, &d, l, &grid).unwrap();
            assert!(c.passed(), "sample {i}: {c:?}");
        }
    }

    #[test]
    fn zero_set_small_sweep() {
        let (p, b) = defaults();
        let report = zero_set_check(&p, &b, eps(0.25), 400, 51, &GridConfig::default()).unwrap();
        assert!(report.passed(), "violations: {:?}", report.violations.first());
        assert!(report.on_graph_max_loss <= ON_GRAPH_LOSS_TOL);
        assert!(report.off_graph_checked > 0);
        assert!(report.off_graph_min_loss > 0.0);
    }

    #[test]
    fn zero_set_flags_specific_points() {
        let (p, _b) = defaults();
        // penetrating observation well off the graph
        let v = loss_violation(&p, &Datapoint::new(0.0, 0.0, -1.0), eps(0.25)).value;
        assert!(v > 0.0);
        // realizable observation
        let x = State::new(0.7, -3.0);
        let d = Datapoint { x, y: step_explicit(&p, x) };
        assert!(loss_violation(&p, &d, eps(0.25)).value <= ON_GRAPH_LOSS_TOL);
    }

    #[test]
    fn qg_modulus_values() {
        let (p, _) = defaults();
        assert_eq!(qg_modulus(&p, eps(0.25)), 1.0);
        assert!((qg_modulus(&p, eps(0.5)) - 0.5).abs() < 1e-15);
        assert!((qg_modulus(&p, eps(10.0)) - 0.025).abs() < 1e-15);
        // eps -> infinity collapses the modulus; eps -> 0 approaches 2
        assert!(qg_modulus(&p, eps(1e9)) < 1e-8);
        let near_two = qg_modulus(&p, eps(1e-12));
        assert!((near_two - 2.0 / (1.0 + 0.01f64 * 0.01)).abs() < 1e-12);
    }

    #[test]
    fn epsilon_select_values() {
        assert_eq!(epsilon_select(&ModelParams::default()).value(), 0.25);
        let half = ModelParams::new(0.5, 0.005, 9.81, 0.0).unwrap();
        assert_eq!(epsilon_select(&half).value(), 0.125);
        let heavy = ModelParams::new(1e6, 0.005, 9.81, 0.0).unwrap();
        assert_eq!(epsilon_select(&heavy).value(), 0.25);
    }

    #[test]
    fn qg_verify_small_sweep() {
        let (p, b) = defaults();
        let cert = qg_verify(&p, &b, eps(0.25), 400, 7, &GridConfig::default()).unwrap();
        assert_eq!(cert.mu, 1.0);
        assert!(cert.passed(), "worst ratio {}", cert.worst_ratio);
        assert!(cert.worst_ratio <= 1.0);
    }

    #[test]
    fn qg_verify_other_epsilons() {
        let (p, b) = defaults();
        for (e, want_mu) in [(0.1, 1.0 / 0.6), (0.5, 0.5)] {
            let cert = qg_verify(&p, &b, eps(e), 10_000, 61, &GridConfig::default()).unwrap();
            assert!((cert.mu - want_mu).abs() < 1e-12);
            assert!(cert.passed(), "eps {e}: worst ratio {}", cert.worst_ratio);
        }
    }

    #[test]
    fn qg_holds_trivially_on_graph() {
        let (p, b) = defaults();
        let grid = GridConfig::default();
        let e = eps(0.25);
        let mu = qg_modulus(&p, e);
        let sampler = DomainSampler::new(&p, &b, 67);
        let r = grid.target_resolution;
        for i in 0..50 {
            let d = sampler.on_graph(i);
            let loss = loss_violation(&p, &d, e).value;
            let dist = graph_distance(&p, &b, &d, &grid).unwrap().distance;
            assert!(dist * dist <= (2.0 / mu) * loss + 2.0 * dist * r + r * r, "sample {i}");
        }
    }

    #[test]
    fn qg_verify_loose_epsilon_still_holds() {
        let (p, b) = defaults();
        let cert = qg_verify(&p, &b, eps(10.0), 200, 7, &GridConfig::default()).unwrap();
        assert!((cert.mu - 0.025).abs() < 1e-15);
        assert!(cert.passed(), "worst ratio {}", cert.worst_ratio);
    }

    #[test]
    fn qg_verify_expectation_version() {
        let (p, b) = defaults();
        let grid = GridConfig::default();
        let sampler = DomainSampler::new(&p, &b, 53);
        let e = eps(0.25);
        let mu = qg_modulus(&p, e);
        let n = 800;
        let mut mean_d2 = 0.0;
        let mut mean_loss = 0.0;
        for i in 0..n {
            let d = sampler.datapoint(i);
            let gd = graph_distance(&p, &b, &d, &grid).unwrap();
            mean_d2 += gd.distance * gd.distance;
            mean_loss += loss_violation(&p, &d, e).value;
        }
        mean_d2 /= n as f64;
        mean_loss /= n as f64;
        assert!(mean_d2 <= (2.0 / mu) * mean_loss + 1e-9);
    }

    #[test]
    fn qg_verify_requires_small_dt() {
        let p = ModelParams::new(1.0, 0.6, 9.81, 0.0).unwrap();
        let b = DomainBounds::from_params(&p, 8.0, 15.0, 8.0).unwrap();
        assert!(qg_verify(&p, &b, eps(0.25), 10, 1, &GridConfig::default()).is_err());
    }
}
