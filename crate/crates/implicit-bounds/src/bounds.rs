//! Closed-form Lipschitz constants of the toy model, loss suprema over the
//! data domain, and the generalization-bound calculator with sweep helpers.

use serde::{Deserialize, Serialize};

use crate::contact::{DomainBounds, ModelParams};
use crate::error::{Error, Result};
use crate::losses::{Datapoint, Epsilon, LossKind};
use crate::sampling::DomainSampler;

/// The seven elementary Lipschitz constants of the model.
///
/// At the default constants (`m = 1`, `dt = 0.005`, `v_max = 15`,
/// `phi_max = 8`) with `eps = 0.5` the numerical column reads
/// `(200, 1, 0, 15.05, 15.05, 200, 1)` to four significant figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzTable {
    /// Slope bound of the explicit step w.r.t. theta: `1/dt`.
    pub l_f_theta: f64,
    /// Slope bound of the prediction w.r.t. the impulse: `1/m`.
    pub l_g_lambda: f64,
    /// The prediction does not read theta: `0`.
    pub l_g_theta: f64,
    /// Slope bound of the violation w.r.t. the impulse: `max(phi_max, lambda_max)`.
    pub l_h_lambda: f64,
    /// Slope bound of the violation w.r.t. theta: `max(phi_max, lambda_max)`.
    pub l_h_theta: f64,
    /// Sensitivity bound of the inner minimizer of the naive implicit loss:
    /// `max(m*dt/(m^2 + dt^2), m/dt)`.
    pub l_lambda_theta_nimp: f64,
    /// Sensitivity bound of the inner minimizer of the violation loss:
    /// `m^2 / (2*eps)`.
    pub l_lambda_theta_vimp: f64,
}

impl LipschitzTable {
    pub fn as_rows(&self) -> [(&'static str, &'static str, f64); 7] {
        [
            ("L_f,theta", "1/dt", self.l_f_theta),
            ("L_g,lambda", "1/m", self.l_g_lambda),
            ("L_g,theta", "0", self.l_g_theta),
            ("L_h,lambda", "max(phi_max, lambda_max)", self.l_h_lambda),
            ("L_h,theta", "max(phi_max, lambda_max)", self.l_h_theta),
            ("L_lambda,theta_nimp", "max(m*dt/(m^2+dt^2), m/dt)", self.l_lambda_theta_nimp),
            ("L_lambda,theta_vimp", "m^2/(2*eps)", self.l_lambda_theta_vimp),
        ]
    }
}

/// Suprema of the losses and of the model functions over the data domain.
///
/// The loss suprema are conservative closed forms (the domain box makes
/// them computable); `certify_empirical` checks each one dominates a
/// Monte-Carlo supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBounds {
    pub b_exp: f64,
    pub b_nimp: f64,
    pub b_vimp: f64,
    pub b_f: f64,
    pub b_g: f64,
    pub b_h: f64,
}

/// Inputs of the generalization-bound formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Failure probability in (0, 1).
    pub delta: f64,
    /// Dataset size.
    pub n: u64,
    /// Parameter dimension (1 for the toy model).
    pub k: u32,
    /// Parameter-norm bound.
    pub b_theta: f64,
    /// Lipschitz constant of the loss w.r.t. theta.
    pub l_loss_theta: f64,
    /// Supremum of the loss over the domain.
    pub b_loss: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidParameter(format!("delta must be in (0, 1], got {}", self.delta)));
        }
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        for (name, v) in [
            ("b_theta", self.b_theta),
            ("l_loss_theta", self.l_loss_theta),
            ("b_loss", self.b_loss),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn with_n(&self, n: u64) -> Self {
        BoundInputs { n, ..*self }
    }
}

/// Loss Lipschitz constants w.r.t. theta, in both the model-specific closed
/// form and the general composite form. The two coincide on this model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossLipschitz {
    pub exp_theta: f64,
    pub nimp_theta: f64,
    pub vimp_theta: f64,
    pub exp_theta_general: f64,
    pub nimp_theta_general: f64,
    pub vimp_theta_general: f64,
}

impl LossLipschitz {
    pub fn for_kind(&self, kind: LossKind) -> f64 {
        match kind {
            LossKind::Explicit => self.exp_theta,
            LossKind::NaiveImplicit => self.nimp_theta,
            LossKind::Violation => self.vimp_theta,
        }
    }
}

/// Closed-form elementary Lipschitz constants.
pub fn lipschitz_table(params: &ModelParams, bounds: &DomainBounds, eps: Epsilon) -> LipschitzTable {
    let m = params.m;
    let dt = params.dt;
    let cap = bounds.phi_max.max(bounds.lambda_max);
    LipschitzTable {
        l_f_theta: 1.0 / dt,
        l_g_lambda: 1.0 / m,
        l_g_theta: 0.0,
        l_h_lambda: cap,
        l_h_theta: cap,
        l_lambda_theta_nimp: (m * dt / (m * m + dt * dt)).max(m / dt),
        l_lambda_theta_vimp: m * m / (2.0 * eps.value()),
    }
}

/// Sensitivity of an unconstrained inner minimizer to theta:
/// `-(d2h/dlambda2)^-1 * (d2h/dtheta dlambda)`.
pub fn lambda_sensitivity(d2h_dlambda2: f64, d2h_dtheta_dlambda: f64) -> Result<f64> {
    if d2h_dlambda2.abs() < 1e-12 {
        return Err(Error::SingularCurvature(d2h_dlambda2.abs()));
    }
    Ok(-d2h_dtheta_dlambda / d2h_dlambda2)
}

/// Conservative suprema of the model functions and losses over the domain.
pub fn loss_suprema(params: &ModelParams, bounds: &DomainBounds, eps: Epsilon) -> LossBounds {
    let b_f = bounds.v_max + params.free_fall_delta() + bounds.lambda_max / params.m;
    let b_g = bounds.v_max + params.free_fall_delta() + bounds.b_lambda / params.m;
    let pred = (bounds.v_max + b_f) * (bounds.v_max + b_f);
    let b_h = (0.5 * bounds.phi_max * bounds.phi_max)
        .max(0.5 * bounds.lambda_max * bounds.lambda_max)
        .max(bounds.phi_max * bounds.lambda_max);
    LossBounds {
        b_exp: pred,
        b_nimp: pred,
        b_vimp: pred + b_h / eps.value(),
        b_f,
        b_g,
        b_h,
    }
}

/// Monte-Carlo suprema over `samples` seeded domain draws, for certifying
/// the closed-form bounds.
pub fn empirical_loss_suprema(
    params: &ModelParams,
    bounds: &DomainBounds,
    eps: Epsilon,
    samples: u64,
    seed: u64,
) -> LossBounds {
    use crate::contact::{g_eval, h_eval, step_explicit};
    let sampler = DomainSampler::new(params, bounds, seed);
    let mut out = LossBounds { b_exp: 0.0, b_nimp: 0.0, b_vimp: 0.0, b_f: 0.0, b_g: 0.0, b_h: 0.0 };
    for i in 0..samples {
        let (d, lam) = sampler.datapoint_lambda(i);
        let f = step_explicit(params, d.x).0;
        let g = g_eval(params, d.x, lam).0;
        let h = h_eval(params, d.x, d.y, lam);
        out.b_f = out.b_f.max(f.abs());
        out.b_g = out.b_g.max(g.abs());
        out.b_h = out.b_h.max(h);
        out.b_exp = out.b_exp.max(crate::losses::loss_explicit(params, &d).value);
        out.b_nimp = out.b_nimp.max(crate::losses::loss_naive_implicit(params, &d).value);
        out.b_vimp = out.b_vimp.max(crate::losses::loss_violation(params, &d, eps).value);
    }
    out
}

/// Loss Lipschitz constants w.r.t. theta.
///
/// Model-specific forms: `L_exp = 2*B_exp/dt`, `L_nimp = 2*B_nimp/dt`,
/// `L_vimp = (m*B_nimp + lambda_max*(1 + m^2/(2*eps)))/eps`. The general
/// composite forms are assembled from the elementary constants and must
/// coincide whenever `lambda_max >= phi_max`.
pub fn loss_lipschitz(
    params: &ModelParams,
    bounds: &DomainBounds,
    table: &LipschitzTable,
    sup: &LossBounds,
    eps: Epsilon,
) -> LossLipschitz {
    let m = params.m;
    let dt = params.dt;
    let e = eps.value();

    let exp_theta = 2.0 * sup.b_exp / dt;
    let nimp_theta = 2.0 * sup.b_nimp / dt;
    let vimp_theta = (m * sup.b_nimp + bounds.lambda_max * (1.0 + m * m / (2.0 * e))) / e;

    let exp_theta_general = 2.0 * sup.b_exp * table.l_f_theta;
    let nimp_theta_general =
        2.0 * sup.b_nimp * (table.l_g_lambda * table.l_lambda_theta_nimp + table.l_g_theta);
    let vimp_theta_general = 2.0
        * sup.b_nimp
        * (table.l_g_lambda * table.l_lambda_theta_vimp + table.l_g_theta)
        + (table.l_h_lambda * table.l_lambda_theta_vimp + table.l_h_theta) / e;

    LossLipschitz {
        exp_theta,
        nimp_theta,
        vimp_theta,
        exp_theta_general,
        nimp_theta_general,
        vimp_theta_general,
    }
}

/// High-probability generalization-error bound:
/// `44 * L * B_theta * sqrt(k/n) + B * sqrt(log(1/delta) / (2n))`.
pub fn generalization_bound(inputs: &BoundInputs) -> f64 {
    let n = inputs.n as f64;
    44.0 * inputs.l_loss_theta * inputs.b_theta * (inputs.k as f64 / n).sqrt()
        + inputs.b_loss * ((1.0 / inputs.delta).ln() / (2.0 * n)).sqrt()
}

/// One row of a bound sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCurveRow {
    pub sweep_value: f64,
    pub bound_exp: f64,
    pub bound_nimp: f64,
    pub bound_vimp: f64,
}

/// Bounds of the three approaches as a function of dataset size.
pub fn bound_vs_n(
    ns: &[u64],
    exp: &BoundInputs,
    nimp: &BoundInputs,
    vimp: &BoundInputs,
) -> Result<Vec<BoundCurveRow>> {
    if ns.is_empty() {
        return Err(Error::InvalidParameter("empty sweep".into()));
    }
    Ok(ns
        .iter()
        .map(|&n| BoundCurveRow {
            sweep_value: n as f64,
            bound_exp: generalization_bound(&exp.with_n(n)),
            bound_nimp: generalization_bound(&nimp.with_n(n)),
            bound_vimp: generalization_bound(&vimp.with_n(n)),
        })
        .collect())
}

/// Bounds of the three approaches as a function of failure probability.
pub fn bound_vs_delta(
    deltas: &[f64],
    exp: &BoundInputs,
    nimp: &BoundInputs,
    vimp: &BoundInputs,
) -> Result<Vec<BoundCurveRow>> {
    if deltas.is_empty() {
        return Err(Error::InvalidParameter("empty sweep".into()));
    }
    Ok(deltas
        .iter()
        .map(|&delta| BoundCurveRow {
            sweep_value: delta,
            bound_exp: generalization_bound(&BoundInputs { delta, ..*exp }),
            bound_nimp: generalization_bound(&BoundInputs { delta, ..*nimp }),
            bound_vimp: generalization_bound(&BoundInputs { delta, ..*vimp }),
        })
        .collect())
}

/// A finite-difference slope that exceeded its closed-form constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeViolation {
    pub kind: LossKind,
    pub datapoint: Datapoint,
    pub theta: f64,
    pub slope: f64,
    pub bound: f64,
}

/// Empirical maxima of `|loss(theta + d_theta) - loss(theta)| / d_theta`
/// per approach, against the closed-form constants.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzValidation {
    pub max_slope: [f64; 3],
    pub bound: [f64; 3],
    pub samples: u64,
    pub d_theta: f64,
    pub violations: Vec<SlopeViolation>,
}

impl LipschitzValidation {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Finite-difference step for the slope sweep (m).
pub const SLOPE_FD_STEP: f64 = 1e-6;

/// Certifies the loss Lipschitz constants numerically: over seeded domain
/// datapoints and thetas uniform in `[-b_theta, b_theta]`, one-sided
/// difference quotients must stay within `(1 + 1e-3)` of the closed forms.
pub fn lipschitz_validate(
    params: &ModelParams,
    bounds: &DomainBounds,
    eps: Epsilon,
    samples: u64,
    seed: u64,
) -> Result<LipschitzValidation> {
    use rand::Rng;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let table = lipschitz_table(params, bounds, eps);
    let sup = loss_suprema(params, bounds, eps);
    let lip = loss_lipschitz(params, bounds, &table, &sup, eps);
    let bound = [lip.exp_theta, lip.nimp_theta, lip.vimp_theta];

    let sampler = DomainSampler::new(params, bounds, seed);
    let mut max_slope = [0.0f64; 3];
    let mut violations = Vec::new();
    for i in 0..samples {
        let d = sampler.datapoint(i);
        let mut rng = sampler.stream(i.wrapping_add(0x5eed_0bad));
        let theta = rng.random_range(-bounds.b_theta..=bounds.b_theta);
        let lo = params.with_theta(theta);
        let hi = params.with_theta(theta + SLOPE_FD_STEP);
        for (k, kind) in LossKind::ALL.iter().enumerate() {
            let slope =
                (kind.eval(&hi, &d, eps).value - kind.eval(&lo, &d, eps).value).abs() / SLOPE_FD_STEP;
            if slope > max_slope[k] {
                max_slope[k] = slope;
            }
            if slope > bound[k] * (1.0 + 1e-3) {
                violations.push(SlopeViolation { kind: *kind, datapoint: d, theta, slope, bound: bound[k] });
            }
        }
    }
    Ok(LipschitzValidation { max_slope, bound, samples, d_theta: SLOPE_FD_STEP, violations })
}
