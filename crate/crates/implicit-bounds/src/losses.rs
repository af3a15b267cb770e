//! The three training losses evaluated at a datapoint, with their embedded
//! arg-min problems solved in closed form and cross-checkable against a
//! generic bracketed scalar minimizer.
//!
//! * explicit: squared prediction error of the explicit step,
//! * naive implicit: squared prediction error at the impulse minimizing the
//!   violation of the prediction itself,
//! * violation: joint minimum over the impulse of prediction error plus
//!   violation weighted by `1/epsilon`.

use serde::{Deserialize, Serialize};

use crate::contact::{
    end_gap, g_eval, h_eval, neg, pos, step_explicit, ModelParams, NextVelocity, State,
};
use crate::error::{Error, Result};

/// One input/output sample: a state and an observed next velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Datapoint {
    pub x: State,
    pub y: NextVelocity,
}

impl Datapoint {
    pub fn new(z: f64, v: f64, y: f64) -> Self {
        Datapoint { x: State::new(z, v), y: NextVelocity(y) }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.0.is_finite()
    }
}

/// Positive weight trading prediction error against constraint violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon must be > 0, got {value}")));
        }
        Ok(Epsilon(value))
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Which piecewise case produced a loss value.
///
/// Prediction losses report `Freefall`/`Contact` from the sign of the
/// contact activation; the violation loss reports the sign of the
/// minimizing impulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Freefall,
    Contact,
    LambdaNegative,
    LambdaZero,
    LambdaPositive,
}

/// Value of a loss at one datapoint plus the minimizing impulse, the active
/// branch, and the intermediates of the piecewise analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEval {
    /// Loss value; nonnegative.
    pub value: f64,
    /// Minimizing (or implied) impulse (N·s).
    pub lambda_star: f64,
    /// Active piecewise case.
    pub branch: Branch,
    /// `y - v + a_grav*dt`: observed velocity change in excess of free fall.
    pub d_v: f64,
    /// End-of-step gap `z + y*dt - theta` at the observed output.
    pub phi_prime: f64,
    /// `neg(phi' - d_v*dt)`: position shift to the free-fall graph point.
    pub d_z: f64,
    /// `-phi'`: position shift to the contact graph point.
    pub d_z_prime: f64,
}

/// Loss selector shared by landscapes, training, and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Explicit,
    NaiveImplicit,
    Violation,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Explicit, LossKind::NaiveImplicit, LossKind::Violation];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Explicit => "explicit",
            LossKind::NaiveImplicit => "naive-implicit",
            LossKind::Violation => "violation",
        }
    }

    pub fn eval(&self, params: &ModelParams, d: &Datapoint, eps: Epsilon) -> LossEval {
        match self {
            LossKind::Explicit => loss_explicit(params, d),
            LossKind::NaiveImplicit => loss_naive_implicit(params, d),
            LossKind::Violation => loss_violation(params, d, eps),
        }
    }
}

fn case_terms(params: &ModelParams, d: &Datapoint) -> (f64, f64, f64, f64) {
    let d_v = d.y.0 - d.x.v + params.free_fall_delta();
    let phi_prime = end_gap(params, d.x, d.y);
    let d_z = neg(phi_prime - d_v * params.dt);
    let d_z_prime = -phi_prime;
    (d_v, phi_prime, d_z, d_z_prime)
}

/// Squared prediction error of the explicit step. The reported impulse is
/// the one implied by the positive-part term of the step.
pub fn loss_explicit(params: &ModelParams, d: &Datapoint) -> LossEval {
    let activation = params.contact_activation(d.x);
    let residual = d.y.0 - step_explicit(params, d.x).0;
    let (d_v, phi_prime, d_z, d_z_prime) = case_terms(params, d);
    LossEval {
        value: residual * residual,
        lambda_star: params.m * pos(activation),
        branch: if activation > 0.0 { Branch::Contact } else { Branch::Freefall },
        d_v,
        phi_prime,
        d_z,
        d_z_prime,
    }
}

/// Squared prediction error at the impulse minimizing
/// `h(x, g(x, lambda), lambda)`.
///
/// The inner problem has the unique complementarity solution
/// `lambda* = m * pos(-v + a_grav*dt + (theta - z)/dt)` (zero violation is
/// attainable for every state), so no iterative solve is needed. On this
/// model the value coincides with the explicit loss.
pub fn loss_naive_implicit(params: &ModelParams, d: &Datapoint) -> LossEval {
    let activation = params.contact_activation(d.x);
    let lambda_star = params.m * pos(activation);
    let residual = d.y.0 - g_eval(params, d.x, lambda_star).0;
    let (d_v, phi_prime, d_z, d_z_prime) = case_terms(params, d);
    LossEval {
        value: residual * residual,
        lambda_star,
        branch: if activation > 0.0 { Branch::Contact } else { Branch::Freefall },
        d_v,
        phi_prime,
        d_z,
        d_z_prime,
    }
}

/// The violation-loss objective `(y - g(x, lambda))^2 + h(x, y, lambda)/eps`
/// as a closure over the impulse.
pub fn violation_objective<'a>(
    params: &'a ModelParams,
    d: &'a Datapoint,
    eps: Epsilon,
) -> impl Fn(f64) -> f64 + 'a {
    let inv_eps = 1.0 / eps.value();
    move |lambda: f64| {
        let r = d.y.0 - g_eval(params, d.x, lambda).0;
        r * r + h_eval(params, d.x, d.y, lambda) * inv_eps
    }
}

/// Joint minimum over the impulse of prediction error plus weighted
/// violation, by enumerating the stationary point of each sign region.
///
/// The objective is strictly convex in the impulse, so the minimizer is one
/// of: the negative-region stationary point `2*d_v / (m*(1/eps + 2/m^2))`
/// clamped to `(-inf, 0]`, zero, or the positive-region stationary point
/// `m*(d_v - m*pos(phi')/(2*eps))` clamped to `[0, inf)`. All three are
/// evaluated through the true objective and the smallest wins, which stays
/// robust on the open region boundaries.
pub fn loss_violation(params: &ModelParams, d: &Datapoint, eps: Epsilon) -> LossEval {
    let (d_v, phi_prime, d_z, d_z_prime) = case_terms(params, d);
    let m = params.m;
    let e = eps.value();

    let lambda_neg = (2.0 * d_v / (m * (1.0 / e + 2.0 / (m * m)))).min(0.0);
    let lambda_pos = (m * (d_v - m * pos(phi_prime) / (2.0 * e))).max(0.0);

    let obj = violation_objective(params, d, eps);
    let mut best = (obj(0.0), 0.0);
    for lam in [lambda_neg, lambda_pos] {
        let v = obj(lam);
        if v < best.0 {
            best = (v, lam);
        }
    }
    let (value, lambda_star) = best;
    let branch = if lambda_star > 0.0 {
        Branch::LambdaPositive
    } else if lambda_star < 0.0 {
        Branch::LambdaNegative
    } else {
        Branch::LambdaZero
    };
    LossEval { value, lambda_star, branch, d_v, phi_prime, d_z, d_z_prime }
}

/// Result of a bracketed scalar minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub arg: f64,
    pub value: f64,
}

/// Grid points used to bracket the minimum before golden-section refinement.
pub const MINIMIZE_GRID: usize = 10_000;

const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimizes a continuous scalar function on `[lo, hi]`: a scan over
/// `MINIMIZE_GRID` intervals brackets the minimum, then golden-section
/// refines the surrounding two cells until the interval is narrower than
/// `tol`. The returned value never exceeds the best grid value.
pub fn scalar_minimize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<Minimum> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidParameter(format!("bad bracket [{lo}, {hi}]")));
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tol must be > 0, got {tol}")));
    }
    let step = (hi - lo) / MINIMIZE_GRID as f64;
    let mut best = Minimum { arg: lo, value: f(lo) };
    let mut best_idx = 0usize;
    for i in 1..=MINIMIZE_GRID {
        let x = if i == MINIMIZE_GRID { hi } else { lo + step * i as f64 };
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::Minimization(format!("objective({x}) = {v}")));
        }
        if v < best.value {
            best = Minimum { arg: x, value: v };
            best_idx = i;
        }
    }

    // Golden-section on the two cells around the best grid point.
    let mut a = lo + step * best_idx.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_idx + 1) as f64).min(hi);
    let mut x1 = b - INV_GOLDEN * (b - a);
    let mut x2 = a + INV_GOLDEN * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if !f1.is_finite() || !f2.is_finite() {
            return Err(Error::Minimization(format!("objective non-finite in [{a}, {b}]")));
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_GOLDEN * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_GOLDEN * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    if fm < best.value {
        best = Minimum { arg: mid, value: fm };
    }
    if f1 < best.value {
        best = Minimum { arg: x1, value: f1 };
    }
    if f2 < best.value {
        best = Minimum { arg: x2, value: f2 };
    }
    Ok(best)
}

/// Mean loss over `data` at every ground-height value in `thetas`.
pub fn loss_landscape(
    params: &ModelParams,
    thetas: &[f64],
    data: &[Datapoint],
    kind: LossKind,
    eps: Epsilon,
) -> Result<Vec<(f64, f64)>> {
    if thetas.is_empty() || data.is_empty() {
        return Err(Error::InvalidParameter("landscape needs a nonempty grid and dataset".into()));
    }
    let mut out = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let p = params.with_theta(theta);
        let mut sum = 0.0;
        for d in data {
            sum += kind.eval(&p, d, eps).value;
        }
        let mean = sum / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Landscape {
                theta,
                source: Box::new(Error::NonFinite(format!("mean {} loss", kind.name()))),
            });
        }
        out.push((theta, mean));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::DomainBounds;
    use crate::sampling::DomainSampler;
    use proptest::prelude::*;

    fn defaults() -> ModelParams {
        ModelParams::default()
    }

    fn eps(v: f64) -> Epsilon {
        Epsilon::new(v).unwrap()
    }

    #[test]
    fn explicit_zero_on_realizable_data() {
        let p = defaults();
        let x = State::new(0.3, -2.0);
        let d = Datapoint { x, y: step_explicit(&p, x) };
        assert_eq!(loss_explicit(&p, &d).value, 0.0);
    }

    #[test]
    fn explicit_free_fall_value() {
        let p = defaults();
        let e = loss_explicit(&p, &Datapoint::new(1.0, 0.0, -0.1));
        assert!((e.value - 0.0025959025).abs() < 1e-15, "got {}", e.value);
        assert_eq!(e.branch, Branch::Freefall);
        assert_eq!(e.lambda_star, 0.0);
    }

    #[test]
    fn explicit_contact_value() {
        let p = defaults();
        let e = loss_explicit(&p, &Datapoint::new(0.0, 0.0, -0.1));
        assert!((e.value - 0.01).abs() < 1e-15, "got {}", e.value);
        assert_eq!(e.branch, Branch::Contact);
    }

    #[test]
    fn naive_implicit_matches_explicit_examples() {
        let p = defaults();
        let x = State::new(2.0, 1.0);
        let on_graph = Datapoint { x, y: step_explicit(&p, x) };
        assert_eq!(loss_naive_implicit(&p, &on_graph).value, 0.0);

        let e = loss_naive_implicit(&p, &Datapoint::new(1.0, 0.0, -0.1));
        assert!((e.value - 0.0025959025).abs() < 1e-15);
        assert_eq!(e.lambda_star, 0.0);

        let e = loss_naive_implicit(&p, &Datapoint::new(0.05, -15.0, -9.9));
        assert!((e.value - 0.01).abs() < 1e-12, "got {}", e.value);
        assert!((e.lambda_star - 5.04905).abs() < 1e-12, "got {}", e.lambda_star);
    }

    #[test]
    fn violation_zero_on_graph_point() {
        let p = defaults();
        let e = loss_violation(&p, &Datapoint::new(1.0, 0.0, -0.04905), eps(0.25));
        assert_eq!(e.value, 0.0);
        assert_eq!(e.branch, Branch::LambdaZero);
    }

    #[test]
    fn violation_negative_impulse_case() {
        let p = defaults();
        let d = Datapoint::new(1.0, 0.0, -0.1);
        let e = loss_violation(&p, &d, eps(0.25));
        // d_v = -0.05095, phi' = 0.9995 > 0: value = d_v^2 * m^2 / (m^2 + 2 eps)
        assert!((e.d_v - (-0.05095)).abs() < 1e-15);
        assert!((e.phi_prime - 0.9995).abs() < 1e-15);
        assert_eq!(e.branch, Branch::LambdaNegative);
        assert!((e.value - 0.0025959025 / 1.5).abs() < 1e-15, "got {}", e.value);
        assert!((e.lambda_star - (-0.1019 / 6.0)).abs() < 1e-12, "got {}", e.lambda_star);

        let looser = loss_violation(&p, &d, eps(0.5));
        assert!((looser.value - 0.0025959025 / 2.0).abs() < 1e-15);
        assert!(looser.value <= e.value);
    }

    #[test]
    fn violation_value_reproduced_by_objective() {
        let p = defaults();
        let b = DomainBounds::defaults(&p);
        let sampler = DomainSampler::new(&p, &b, 21);
        for i in 0..1000 {
            let d = sampler.datapoint(i);
            for e in [0.1, 0.25, 1.0] {
                let ev = loss_violation(&p, &d, eps(e));
                let again = violation_objective(&p, &d, eps(e))(ev.lambda_star);
                assert!((again - ev.value).abs() <= 1e-10, "sample {i} eps {e}");
            }
        }
    }

    #[test]
    fn scalar_minimize_examples() {
        let m = scalar_minimize(|x| x * x, -1.0, 1.0, 1e-10).unwrap();
        assert!(m.arg.abs() <= 1e-8, "got {}", m.arg);

        // kinked objective: subdifferential at 0 contains 0
        let m = scalar_minimize(|x| (x - 0.3) * (x - 0.3) + x.abs(), -1.0, 1.0, 1e-10).unwrap();
        assert!(m.arg.abs() <= 1e-8, "got {}", m.arg);

        let p = defaults();
        let d = Datapoint::new(1.0, 0.0, -0.1);
        let obj = violation_objective(&p, &d, eps(0.25));
        let m = scalar_minimize(obj, -16.0, 16.0, 1e-10).unwrap();
        assert!((m.arg - (-0.1019 / 6.0)).abs() <= 1e-8, "got {}", m.arg);
    }

    #[test]
    fn scalar_minimize_rejects_bad_input() {
        assert!(scalar_minimize(|x| x, 1.0, -1.0, 1e-10).is_err());
        assert!(scalar_minimize(|x| x, -1.0, 1.0, 0.0).is_err());
        assert!(matches!(
            scalar_minimize(|x| if x > 0.0 { f64::NAN } else { x }, -1.0, 1.0, 1e-10),
            Err(Error::Minimization(_))
        ));
    }

    // All three losses vanish on realizable datapoints. Exact zero for the
    // prediction losses; the violation loss inherits ~1e-15 of noise from
    // rounding of the end-of-step gap at contact points, so it gets a
    // small absolute allowance.
    #[test]
    fn zero_at_graph() {
        let p = defaults();
        let b = DomainBounds::defaults(&p);
        let sampler = DomainSampler::new(&p, &b, 7);
        let e = eps(0.25);
        for i in 0..100_000 {
            let d = sampler.on_graph(i);
            assert!(loss_explicit(&p, &d).value <= 1e-20, "sample {i}");
            assert!(loss_naive_implicit(&p, &d).value <= 1e-20, "sample {i}");
            let v = loss_violation(&p, &d, e).value;
            assert!(v <= 1e-13, "sample {i}: violation loss {v:e}");
        }
    }

    #[test]
    fn epsilon_limit_approximates_naive_implicit() {
        let p = defaults();
        let b = DomainBounds::defaults(&p);
        let sampler = DomainSampler::new(&p, &b, 29);
        let tiny = eps(1e-6);
        // datapoints within 1e-8 of the graph: the contact-side mismatch
        // scales like d_v * dt * |y - f| / eps, so this stays below 1e-2
        for i in 0..10_000 {
            let on = sampler.on_graph(i);
            let off = sampler.offset_from_graph(i, 1e-8);
            for d in [on, off] {
                let v = loss_violation(&p, &d, tiny).value;
                let n = loss_naive_implicit(&p, &d).value;
                assert!((v - n).abs() <= 1e-2, "sample {i}: vimp {v:e} nimp {n:e}");
            }
        }
    }

    #[test]
    fn closed_form_matches_grid_minimizer() {
        let p = defaults();
        let b = DomainBounds::defaults(&p);
        let sampler = DomainSampler::new(&p, &b, 31);
        for i in 0..500 {
            let d = sampler.datapoint(i);
            for e in [0.1, 0.5] {
                let ep = eps(e);
                let ev = loss_violation(&p, &d, ep);
                let m = p.m;
                let reach = m * ev.d_v.abs() + m * m * ev.phi_prime.abs() / (2.0 * e) + 1.0;
                let grid = scalar_minimize(violation_objective(&p, &d, ep), -reach, reach, 1e-10)
                    .unwrap();
                assert!(
                    (ev.value - grid.value).abs() <= 1e-8,
                    "sample {i} eps {e}: closed {} grid {}",
                    ev.value,
                    grid.value
                );
            }
        }
    }

    #[test]
    fn landscape_minimum_at_true_theta() {
        let p = defaults();
        let b = DomainBounds::defaults(&p);
        let sampler = DomainSampler::new(&p, &b, 3);
        let data: Vec<Datapoint> = (0..100).map(|i| sampler.on_graph_biased(i, 0.5)).collect();
        let thetas: Vec<f64> = (0..201).map(|i| -1.0 + 0.01 * i as f64).collect();
        for kind in LossKind::ALL {
            let rows = loss_landscape(&p, &thetas, &data, kind, eps(0.25)).unwrap();
            let (argmin, min) = rows
                .iter()
                .copied()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(argmin.abs() < 1e-12, "{}: argmin {argmin}", kind.name());
            assert!(min <= 1e-12, "{}: min {min}", kind.name());
        }
    }

    #[test]
    fn landscape_prediction_losses_identical() {
        let p = defaults();
        let b = DomainBounds::defaults(&p);
        let sampler = DomainSampler::new(&p, &b, 5);
        let data: Vec<Datapoint> = (0..100).map(|i| sampler.datapoint(i)).collect();
        let thetas: Vec<f64> = (0..101).map(|i| -1.0 + 0.02 * i as f64).collect();
        let e = loss_landscape(&p, &thetas, &data, LossKind::Explicit, eps(0.25)).unwrap();
        let n = loss_landscape(&p, &thetas, &data, LossKind::NaiveImplicit, eps(0.25)).unwrap();
        for (a, b) in e.iter().zip(n.iter()) {
            assert!((a.1 - b.1).abs() <= 1e-10, "theta {}: {} vs {}", a.0, a.1, b.1);
        }
    }

    #[test]
    fn landscape_violation_finite_and_continuous() {
        let p = defaults();
        let b = DomainBounds::defaults(&p);
        let sampler = DomainSampler::new(&p, &b, 5);
        let data: Vec<Datapoint> = (0..100).map(|i| sampler.datapoint(i)).collect();
        let thetas: Vec<f64> = (0..201).map(|i| -1.0 + 0.01 * i as f64).collect();
        let rows = loss_landscape(&p, &thetas, &data, LossKind::Violation, eps(0.25)).unwrap();
        let e = eps(0.25);
        let table = crate::bounds::lipschitz_table(&p, &b, e);
        let sup = crate::bounds::loss_suprema(&p, &b, e);
        let lip = crate::bounds::loss_lipschitz(&p, &b, &table, &sup, e);
        for w in rows.windows(2) {
            assert!(w[0].1.is_finite() && w[1].1.is_finite());
            let jump = (w[1].1 - w[0].1).abs();
            let allowed = lip.vimp_theta * (w[1].0 - w[0].0).abs() + 1e-8;
            assert!(jump <= allowed, "jump {jump} > {allowed} at theta {}", w[0].0);
        }
    }

    #[test]
    fn landscape_rejects_empty_inputs() {
        let p = defaults();
        assert!(loss_landscape(&p, &[], &[Datapoint::new(0.0, 0.0, 0.0)], LossKind::Explicit, eps(0.25)).is_err());
        assert!(loss_landscape(&p, &[0.0], &[], LossKind::Explicit, eps(0.25)).is_err());
    }

    proptest! {
        // explicit and naive implicit losses agree pointwise
        #[test]
        fn prediction_equivalence(
            z in -0.1..8.0f64,
            v in -15.0..15.0f64,
            y in -15.0..15.0f64,
            theta in -0.5..0.5f64,
        ) {
            let p = defaults().with_theta(theta);
            let d = Datapoint::new(z, v, y);
            let a = loss_explicit(&p, &d).value;
            let b = loss_naive_implicit(&p, &d).value;
            prop_assert!((a - b).abs() <= 1e-10);
        }

        // the per-impulse objective is pointwise nonincreasing in epsilon,
        // so the minimum is too
        #[test]
        fn violation_monotone_in_epsilon(
            z in -0.1..8.0f64,
            v in -15.0..15.0f64,
            y in -15.0..15.0f64,
            e1 in 0.01..2.0f64,
            scale in 1.001..10.0f64,
        ) {
            let p = defaults();
            let d = Datapoint::new(z, v, y);
            let tight = loss_violation(&p, &d, eps(e1)).value;
            let loose = loss_violation(&p, &d, eps(e1 * scale)).value;
            prop_assert!(loose <= tight * (1.0 + 1e-12) + 1e-18);
        }

        #[test]
        fn violation_nonnegative_and_bounded_by_lambda_zero(
            z in -0.1..8.0f64,
            v in -15.0..15.0f64,
            y in -15.0..15.0f64,
            e in 0.01..4.0f64,
        ) {
            let p = defaults();
            let d = Datapoint::new(z, v, y);
            let ev = loss_violation(&p, &d, eps(e));
            prop_assert!(ev.value >= 0.0);
            // candidate zero is always admissible
            let at_zero = violation_objective(&p, &d, eps(e))(0.0);
            prop_assert!(ev.value <= at_zero + 1e-18);
        }
    }
}
