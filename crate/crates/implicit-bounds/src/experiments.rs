//! Dataset generation with input/output noise, full-batch subgradient
//! training of the ground height, and sample-complexity comparison of the
//! generalization bounds.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bounds::{generalization_bound, BoundInputs};
use crate::contact::{step_explicit, DomainBounds, ModelParams};
use crate::error::{Error, Result};
use crate::losses::{Branch, Datapoint, Epsilon, LossEval, LossKind};
use crate::sampling::DomainSampler;

/// Additive Gaussian noise applied to stored datapoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Std of the noise on position and velocity (errors in variables).
    pub sigma_x: f64,
    /// Std of the noise on the observed next velocity.
    pub sigma_y: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn noiseless(seed: u64) -> Self {
        NoiseConfig { sigma_x: 0.0, sigma_y: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_x < 0.0 || self.sigma_y < 0.0 {
            return Err(Error::InvalidParameter("noise stds must be >= 0".into()));
        }
        Ok(())
    }
}

/// A generated dataset along with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<Datapoint>,
    /// Ground height the data was generated at.
    pub theta_true: f64,
    pub noise: NoiseConfig,
    /// Fraction of points whose generating step had active contact.
    pub contact_fraction: f64,
}

/// Draws initial states uniformly from the domain box, forcing a
/// `contact_bias` fraction into near-contact states whose step takes an
/// active contact impulse. Outputs are the explicit step plus output
/// noise; input noise is added to the stored state after simulation.
pub fn generate_dataset(
    params: &ModelParams,
    bounds: &DomainBounds,
    n: usize,
    noise: &NoiseConfig,
    contact_bias: f64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&contact_bias) {
        return Err(Error::InvalidParameter(format!(
            "contact_bias must be in [0, 1], got {contact_bias}"
        )));
    }
    noise.validate()?;
    let sampler = DomainSampler::new(params, bounds, noise.seed);
    let mut points = Vec::with_capacity(n);
    let mut contacts = 0usize;
    for i in 0..n {
        let mut rng = sampler.stream(i as u64);
        let x = if rng.random_range(0.0..1.0) < contact_bias {
            sampler.near_contact_state(&mut rng)
        } else {
            let z = rng.random_range(bounds.z_lo..=bounds.z_hi);
            let v = rng.random_range(-bounds.v_max..=bounds.v_max);
            crate::contact::State::new(z, v)
        };
        if params.contact_activation(x) > 0.0 {
            contacts += 1;
        }
        let mut y = step_explicit(params, x).0;
        let mut point = Datapoint { x, y: crate::contact::NextVelocity(y) };
        if noise.sigma_y > 0.0 {
            let ny = Normal::new(0.0, noise.sigma_y)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            y += ny.sample(&mut rng);
            point.y = crate::contact::NextVelocity(y);
        }
        if noise.sigma_x > 0.0 {
            let nx = Normal::new(0.0, noise.sigma_x)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            point.x.z += nx.sample(&mut rng);
            point.x.v += nx.sample(&mut rng);
        }
        points.push(point);
    }
    Ok(Dataset {
        points,
        theta_true: params.theta,
        noise: *noise,
        contact_fraction: contacts as f64 / n as f64,
    })
}

/// Initial ground-height choice for training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitSpec {
    /// A fixed starting value.
    Value(f64),
    /// `"uniform"`: uniform in `[theta_true - 1, theta_true + 1]`, seeded.
    Named(String),
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec::Named("uniform".to_string())
    }
}

/// Full-batch subgradient-descent settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Step size in meters of theta per unit gradient.
    pub step_size: f64,
    /// Iteration budget.
    pub iterations: usize,
    pub init: InitSpec,
    /// Finite-difference step for the theta subgradient.
    pub fd_step: f64,
    /// Seed for the uniform init draw.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step_size: 1e-3,
            iterations: 50_000,
            init: InitSpec::default(),
            fd_step: 1e-6,
            seed: 0,
        }
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub theta_hat: f64,
    /// Mean training loss at each iteration.
    pub loss_curve: Vec<f64>,
    pub iterations: usize,
    /// Theta stopped moving before the iteration budget ran out.
    pub converged: bool,
}

/// Signature of the piecewise case a loss evaluation landed in; a change
/// across the finite-difference stencil marks a kink.
fn fd_signature(e: &LossEval) -> (Branch, i8, i8) {
    (e.branch, sign(e.phi_prime), sign(e.lambda_star))
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Per-datapoint theta subgradient: central differences away from kinks,
/// one-sided at them. At a kink whose one-sided slopes bracket zero the
/// subdifferential contains zero, so the point contributes no motion.
fn datapoint_subgradient(lo: &LossEval, mid: &LossEval, hi: &LossEval, fd: f64) -> f64 {
    if fd_signature(lo) == fd_signature(hi) {
        return (hi.value - lo.value) / (2.0 * fd);
    }
    let s_l = (mid.value - lo.value) / fd;
    let s_r = (hi.value - mid.value) / fd;
    if s_l <= 0.0 && s_r >= 0.0 {
        0.0 // kink minimum
    } else if s_l > 0.0 && s_r > 0.0 {
        s_l
    } else if s_l < 0.0 && s_r < 0.0 {
        s_r
    } else if s_l.abs() >= s_r.abs() {
        s_l // kink maximum: follow the steeper descent
    } else {
        s_r
    }
}

const DIVERGENCE_PATIENCE: usize = 500;
const CONVERGENCE_PATIENCE: usize = 100;

/// Projected full-batch subgradient descent on the mean loss over theta.
///
/// Theta stays clamped to `[-b_theta, b_theta]`. Stops early once theta is
/// stationary for `CONVERGENCE_PATIENCE` iterations; reports divergence if
/// the loss sits above ten times its best value for `DIVERGENCE_PATIENCE`
/// consecutive iterations.
pub fn train(
    params: &ModelParams,
    bounds: &DomainBounds,
    dataset: &Dataset,
    kind: LossKind,
    eps: Epsilon,
    config: &TrainConfig,
) -> Result<TrainResult> {
    if dataset.points.is_empty() {
        return Err(Error::InvalidParameter("dataset must be nonempty".into()));
    }
    if !config.step_size.is_finite()
        || config.step_size <= 0.0
        || !config.fd_step.is_finite()
        || config.fd_step <= 0.0
        || config.iterations == 0
    {
        return Err(Error::InvalidParameter("trainer needs positive step sizes and iterations".into()));
    }
    for d in &dataset.points {
        if !d.is_finite() {
            return Err(Error::NonFinite("dataset contains a non-finite datapoint".into()));
        }
    }
    let mut theta = match &config.init {
        InitSpec::Value(v) => *v,
        InitSpec::Named(name) if name == "uniform" => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
            rng.random_range(dataset.theta_true - 1.0..=dataset.theta_true + 1.0)
        }
        InitSpec::Named(other) => {
            return Err(Error::InvalidParameter(format!("unknown init \"{other}\"")));
        }
    };
    theta = theta.clamp(-bounds.b_theta, bounds.b_theta);

    let fd = config.fd_step;
    let n = dataset.points.len() as f64;
    let mut loss_curve = Vec::with_capacity(config.iterations);
    let mut best_loss = f64::INFINITY;
    let mut rising = 0usize;
    let mut still = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    for iter in 0..config.iterations {
        iterations = iter + 1;
        let p_lo = params.with_theta(theta - fd);
        let p_mid = params.with_theta(theta);
        let p_hi = params.with_theta(theta + fd);
        let mut grad = 0.0;
        let mut mean_loss = 0.0;
        for d in &dataset.points {
            let lo = kind.eval(&p_lo, d, eps);
            let mid = kind.eval(&p_mid, d, eps);
            let hi = kind.eval(&p_hi, d, eps);
            grad += datapoint_subgradient(&lo, &mid, &hi, fd);
            mean_loss += mid.value;
        }
        grad /= n;
        mean_loss /= n;
        loss_curve.push(mean_loss);

        if !mean_loss.is_finite() {
            return Err(Error::NonFinite(format!("mean loss at iteration {iter}")));
        }
        if mean_loss < best_loss {
            best_loss = mean_loss;
            rising = 0;
        } else if mean_loss > 10.0 * best_loss + 1.0 {
            rising += 1;
            if rising >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged { iteration: iter, loss: mean_loss });
            }
        } else {
            rising = 0;
        }

        let next = (theta - config.step_size * grad).clamp(-bounds.b_theta, bounds.b_theta);
        if (next - theta).abs() <= 1e-12 * (1.0 + theta.abs()) {
            still += 1;
            if still >= CONVERGENCE_PATIENCE {
                theta = next;
                converged = true;
                break;
            }
        } else {
            still = 0;
        }
        theta = next;
    }

    Ok(TrainResult { theta_hat: theta, loss_curve, iterations, converged })
}

/// Mean loss of a parameter setting over a set of datapoints.
pub fn mean_loss(params: &ModelParams, points: &[Datapoint], kind: LossKind, eps: Epsilon) -> f64 {
    let sum: f64 = points.iter().map(|d| kind.eval(params, d, eps).value).sum();
    sum / points.len() as f64
}

/// Dataset sizes at which two bound templates reach a target, and their
/// ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    pub n_pred: u64,
    pub n_vimp: u64,
    pub ratio: f64,
    pub target: f64,
}

/// Smallest dataset size at which a bound template meets `target`.
fn smallest_n(template: &BoundInputs, target: f64) -> Result<u64> {
    if target.is_nan() || target <= 0.0 {
        return Err(Error::UnachievableTarget(target));
    }
    let mut hi = 1u64;
    while generalization_bound(&template.with_n(hi)) > target {
        if hi >= 1u64 << 62 {
            return Err(Error::UnachievableTarget(target));
        }
        hi *= 2;
    }
    let mut lo = hi / 2 + 1;
    if hi == 1 {
        return Ok(1);
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if generalization_bound(&template.with_n(mid)) <= target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(hi)
}

/// Dataset sizes at which the prediction-loss bound and the violation-loss
/// bound first reach `target`. Bisection over n; the bound is strictly
/// decreasing in n.
pub fn sample_complexity_ratio(
    target: f64,
    pred: &BoundInputs,
    vimp: &BoundInputs,
) -> Result<SampleComplexity> {
    pred.validate()?;
    vimp.validate()?;
    let n_pred = smallest_n(pred, target)?;
    let n_vimp = smallest_n(vimp, target)?;
    Ok(SampleComplexity { n_pred, n_vimp, ratio: n_pred as f64 / n_vimp as f64, target })
}
