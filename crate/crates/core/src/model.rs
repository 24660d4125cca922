//! Autoregressive transport model estimation: transport-series construction,
//! order-1 closed-form fitting with sign selection, order-p back-propagation,
//! pointwise concurrent-coefficient fitting, order selection and forecasting.

use crate::distribution::{frechet_mean, wasserstein_distance, Distribution};
use crate::error::{AtmError, Result};
use crate::grid::Grid;
use crate::transport::{ominus, pushforward, OdotGrad, TransportMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Numerical floor below which a sum of squared deviations counts as zero.
const DEGENERACY_FLOOR: f64 = 1e-12;

/// How the transport series is anchored: against the Fréchet mean of the
/// series, or between consecutive distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtmVariant {
    MeanBased,
    DifferenceBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

/// Tuning for the iterative order-p fitter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Gradient step size.
    pub eta: f64,
    /// Componentwise absolute gradient clip.
    pub clip: f64,
    pub max_iter: usize,
    /// Relative loss-change stopping tolerance.
    pub tol: f64,
    /// Box constraint: every coefficient stays in [-c_box, c_box].
    pub c_box: f64,
    /// Seed for the subgradient draws at integer coefficients.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { eta: 1.0, clip: 10.0, max_iter: 500, tol: 1e-6, c_box: 5.0, seed: 0 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !(self.clip > 0.0) || !(self.tol > 0.0) || !(self.c_box > 0.0) {
            return Err(AtmError::Parameter(
                "eta, clip, tol and c_box must all be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(AtmError::Parameter("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// The closed-form sample moments behind the order-1 estimator: lag-1
/// cross moments and lag-0 second moments for the forward and inverse
/// deviation bases, plus the raw second moment of the response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoStats {
    pub rho1_plus: f64,
    pub rho1_minus: f64,
    pub rho0_plus: f64,
    pub rho0_minus: f64,
    pub second_moment: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Atm1Fit {
    pub alpha: f64,
    pub loss_plus: f64,
    pub loss_minus: f64,
    pub chosen_sign: Sign,
    pub rho: RhoStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtmPFit {
    pub alphas: Vec<f64>,
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatFit {
    /// Coefficient value at every grid node.
    pub beta: Vec<f64>,
    pub chosen_sign: Vec<Sign>,
    /// True where the node regression was degenerate and beta was set to 0;
    /// always true at the pinned endpoints.
    pub degenerate: Vec<bool>,
}

/// Build the transport series the model is fitted on.
///
/// MeanBased yields n transports μᵢ ⊖ μ_F against the Fréchet mean;
/// DifferenceBased yields n-1 consecutive transports μᵢ₊₁ ⊖ μᵢ.
pub fn build_transport_series(
    variant: AtmVariant,
    dists: &[Distribution],
) -> Result<Vec<TransportMap>> {
    if dists.len() < 2 {
        return Err(AtmError::InsufficientData(format!(
            "need at least 2 distributions, got {}",
            dists.len()
        )));
    }
    match variant {
        AtmVariant::MeanBased => {
            let mean = frechet_mean(dists)?;
            dists.iter().map(|d| ominus(d, &mean)).collect()
        }
        AtmVariant::DifferenceBased => {
            dists.windows(2).map(|w| ominus(&w[1], &w[0])).collect()
        }
    }
}

fn deviations(t: &TransportMap) -> Vec<f64> {
    t.deviation()
}

fn inverse_deviations(t: &TransportMap) -> Vec<f64> {
    let grid = t.grid();
    let inv = t.inverse();
    (0..grid.len()).map(|j| grid.node(j) - inv.values()[j]).collect()
}

fn integrate_product(grid: Grid, a: &[f64], b: &[f64]) -> f64 {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    grid.integrate(&prod)
}

/// Closed-form order-1 fit with data-driven sign selection.
pub fn fit_atm1(transports: &[TransportMap]) -> Result<Atm1Fit> {
    let n = transports.len();
    if n < 2 {
        return Err(AtmError::InsufficientData(format!(
            "need at least 2 transports, got {n}"
        )));
    }
    let grid = transports[0].grid();
    let dev: Vec<Vec<f64>> = transports.iter().map(deviations).collect();
    let inv_dev: Vec<Vec<f64>> = transports.iter().map(inverse_deviations).collect();

    let total_sq: f64 = dev.iter().map(|d| integrate_product(grid, d, d)).sum();
    if total_sq / n as f64 <= DEGENERACY_FLOOR {
        return Err(AtmError::NonIdentifiable(
            "all transports are the identity; the autoregressive coefficient is not identifiable"
                .into(),
        ));
    }

    let scale = 1.0 / (n - 1) as f64;
    let mut rho1_plus = 0.0;
    let mut rho1_minus = 0.0;
    let mut rho0_plus = 0.0;
    let mut rho0_minus = 0.0;
    let mut second_moment = 0.0;
    for i in 1..n {
        rho1_plus += integrate_product(grid, &dev[i], &dev[i - 1]);
        rho1_minus += integrate_product(grid, &dev[i], &inv_dev[i - 1]);
        rho0_plus += integrate_product(grid, &dev[i - 1], &dev[i - 1]);
        rho0_minus += integrate_product(grid, &inv_dev[i - 1], &inv_dev[i - 1]);
        second_moment += integrate_product(grid, &dev[i], &dev[i]);
    }
    rho1_plus *= scale;
    rho1_minus *= scale;
    rho0_plus *= scale;
    rho0_minus *= scale;
    second_moment *= scale;

    if rho0_plus <= DEGENERACY_FLOOR || rho0_minus <= DEGENERACY_FLOOR {
        return Err(AtmError::NonIdentifiable(
            "lagged transports carry no deviation from the identity".into(),
        ));
    }
    let alpha_plus = rho1_plus / rho0_plus;
    let alpha_minus = rho1_minus / rho0_minus;

    let mut loss_plus = 0.0;
    let mut loss_minus = 0.0;
    for i in 1..n {
        let rp: Vec<f64> =
            dev[i].iter().zip(&dev[i - 1]).map(|(d, l)| d - alpha_plus * l).collect();
        let rm: Vec<f64> =
            dev[i].iter().zip(&inv_dev[i - 1]).map(|(d, l)| d - alpha_minus * l).collect();
        loss_plus += integrate_product(grid, &rp, &rp);
        loss_minus += integrate_product(grid, &rm, &rm);
    }
    loss_plus *= scale;
    loss_minus *= scale;

    let chosen_sign = if loss_plus <= loss_minus { Sign::Plus } else { Sign::Minus };
    let alpha = match chosen_sign {
        Sign::Plus => alpha_plus,
        Sign::Minus => alpha_minus,
    };
    Ok(Atm1Fit {
        alpha,
        loss_plus,
        loss_minus,
        chosen_sign,
        rho: RhoStats { rho1_plus, rho1_minus, rho0_plus, rho0_minus, second_moment },
    })
}

/// One lag's scaled transport with its derivative state, rebuilt each
/// iteration for every series position the forward pass touches.
struct LagMaps {
    map: TransportMap,
    grad: OdotGrad,
}

fn chain_residual_loss(
    transports: &[TransportMap],
    alphas: &[f64],
    grid: Grid,
) -> Result<f64> {
    let p = alphas.len();
    let n = transports.len();
    let mut total = 0.0;
    for i in p..n {
        let window = &transports[i - p..i];
        let pred = predict_transport(alphas, window)?;
        let diff: Vec<f64> = transports[i]
            .values()
            .iter()
            .zip(pred.values())
            .map(|(a, b)| (a - b) * (a - b))
            .collect();
        total += grid.integrate(&diff);
    }
    Ok(total / (n - p) as f64)
}

/// Order-p fit by forward/backward passes over the composition chain with
/// simultaneous clipped gradient updates.
pub fn fit_atmp(transports: &[TransportMap], p: usize, config: &FitConfig) -> Result<AtmPFit> {
    config.validate()?;
    if p == 0 {
        return Err(AtmError::Parameter("order p must be at least 1".into()));
    }
    let n = transports.len();
    if n <= p {
        return Err(AtmError::InsufficientData(format!(
            "order {p} needs more than {p} transports, got {n}"
        )));
    }
    let grid = transports[0].grid();
    let m = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut alphas = vec![0.0; p];
    alphas[0] = fit_atm1(transports)?.alpha.clamp(-config.c_box, config.c_box);

    let mut loss_trace = vec![chain_residual_loss(transports, &alphas, grid)?];
    let mut converged = false;
    let mut iterations = 0;

    // interior nodes x_1 < ... < x_{m-2}; residuals vanish at the pinned ends
    let xs: Vec<f64> = (1..m - 1).map(|j| grid.node(j)).collect();

    for _ in 0..config.max_iter {
        iterations += 1;

        // scaled maps per lag, indexed by series position of the lagged transport
        let mut lag_maps: Vec<Vec<Option<LagMaps>>> = (0..p).map(|_| Vec::new()).collect();
        for (k, maps) in lag_maps.iter_mut().enumerate() {
            let lag = k + 1;
            *maps = (0..n)
                .map(|s| {
                    if s + lag >= p && s + lag < n {
                        Some(LagMaps {
                            map: transports[s].odot(alphas[k]),
                            grad: OdotGrad::new(alphas[k], &transports[s]),
                        })
                    } else {
                        None
                    }
                })
                .collect();
        }

        let mut grads = vec![0.0; p];
        for i in p..n {
            // forward pass: stage[k] holds R_k over the interior nodes (stage[0] = x)
            let mut stages: Vec<Vec<f64>> = Vec::with_capacity(p + 1);
            stages.push(xs.clone());
            for k in 1..=p {
                let lag = p + 1 - k;
                let maps = lag_maps[lag - 1][i - lag].as_ref().expect("lag map precomputed");
                let next =
                    stages[k - 1].iter().map(|&x| maps.map.eval_clamped(x)).collect();
                stages.push(next);
            }
            let residual: Vec<f64> = xs
                .iter()
                .enumerate()
                .map(|(j, &x)| 2.0 * (transports[i].eval_clamped(x) - stages[p][j]))
                .collect();

            // backward pass: d[j] carries D_{k-1} while processing lag k
            let mut d = vec![1.0; xs.len()];
            for k in 1..=p {
                let maps = lag_maps[k - 1][i - k].as_ref().expect("lag map precomputed");
                let at = &stages[p - k];
                for (j, &x) in at.iter().enumerate() {
                    grads[k - 1] += residual[j] * d[j] * maps.grad.d_dalpha(x, &mut rng)?;
                }
                if k < p {
                    for (j, &x) in at.iter().enumerate() {
                        d[j] *= maps.grad.d_dx(x)?;
                    }
                }
            }
        }

        for (a, g) in alphas.iter_mut().zip(&grads) {
            let clipped = (g / (n - p) as f64).clamp(-config.clip, config.clip);
            *a = (*a + config.eta * clipped).clamp(-config.c_box, config.c_box);
        }

        let loss = chain_residual_loss(transports, &alphas, grid)?;
        if !loss.is_finite() {
            return Err(AtmError::Diverged(
                "loss became non-finite; reduce the step size".into(),
            ));
        }
        let prev = *loss_trace.last().unwrap();
        loss_trace.push(loss);
        if (prev - loss).abs() <= config.tol * prev.abs().max(1e-300) {
            converged = true;
            break;
        }
    }

    Ok(AtmPFit { alphas, loss_trace, iterations, converged })
}

/// Pointwise concurrent-coefficient fit: an order-1 regression at every
/// grid node, each with its own sign selection.
pub fn fit_cat(transports: &[TransportMap]) -> Result<CatFit> {
    let n = transports.len();
    if n < 2 {
        return Err(AtmError::InsufficientData(format!(
            "need at least 2 transports, got {n}"
        )));
    }
    let grid = transports[0].grid();
    let dev: Vec<Vec<f64>> = transports.iter().map(deviations).collect();
    let inv_dev: Vec<Vec<f64>> = transports.iter().map(inverse_deviations).collect();

    let m = grid.len();
    let mut beta = vec![0.0; m];
    let mut chosen_sign = vec![Sign::Plus; m];
    let mut degenerate = vec![false; m];
    degenerate[0] = true;
    degenerate[m - 1] = true;

    for j in 1..m - 1 {
        let mut r1p = 0.0;
        let mut r1m = 0.0;
        let mut r0p = 0.0;
        let mut r0m = 0.0;
        for i in 1..n {
            r1p += dev[i][j] * dev[i - 1][j];
            r1m += dev[i][j] * inv_dev[i - 1][j];
            r0p += dev[i - 1][j] * dev[i - 1][j];
            r0m += inv_dev[i - 1][j] * inv_dev[i - 1][j];
        }
        if r0p <= DEGENERACY_FLOOR || r0m <= DEGENERACY_FLOOR {
            degenerate[j] = true;
            continue;
        }
        let bp = (r1p / r0p).clamp(-1.0, 1.0);
        let bm = (r1m / r0m).clamp(-1.0, 1.0);
        let mut loss_p = 0.0;
        let mut loss_m = 0.0;
        for i in 1..n {
            let rp = dev[i][j] - bp * dev[i - 1][j];
            let rm = dev[i][j] - bm * inv_dev[i - 1][j];
            loss_p += rp * rp;
            loss_m += rm * rm;
        }
        if loss_p <= loss_m {
            beta[j] = bp;
            chosen_sign[j] = Sign::Plus;
        } else {
            beta[j] = bm;
            chosen_sign[j] = Sign::Minus;
        }
    }
    Ok(CatFit { beta, chosen_sign, degenerate })
}

/// One-step transport prediction: the scaled-composition chain evaluated
/// left to right, oldest transport first.
pub fn predict_transport(alphas: &[f64], recent: &[TransportMap]) -> Result<TransportMap> {
    let p = alphas.len();
    if recent.len() != p {
        return Err(AtmError::Parameter(format!(
            "expected exactly {p} recent transports, got {}",
            recent.len()
        )));
    }
    if p == 0 {
        return Err(AtmError::Parameter("order p must be at least 1".into()));
    }
    // recent[0] is the oldest and pairs with the largest-lag coefficient
    let mut acc = recent[0].odot(alphas[p - 1]);
    for k in (1..p).rev() {
        acc = acc.oplus(&recent[p - k].odot(alphas[k - 1]))?;
    }
    Ok(acc)
}

/// One-step-ahead distribution forecast.
///
/// MeanBased pushes the Fréchet mean through the predicted transport;
/// DifferenceBased pushes the last observed distribution.
pub fn forecast_distribution(
    variant: AtmVariant,
    alphas: &[f64],
    dists: &[Distribution],
    transports: &[TransportMap],
) -> Result<Distribution> {
    let p = alphas.len();
    if transports.len() < p {
        return Err(AtmError::InsufficientData(format!(
            "order {p} forecast needs at least {p} transports, got {}",
            transports.len()
        )));
    }
    let recent = &transports[transports.len() - p..];
    let predicted = predict_transport(alphas, recent)?;
    match variant {
        AtmVariant::MeanBased => {
            let mean = frechet_mean(dists)?;
            pushforward(&predicted, &mean)
        }
        AtmVariant::DifferenceBased => {
            let last = dists.last().ok_or_else(|| {
                AtmError::InsufficientData("empty distribution series".into())
            })?;
            pushforward(&predicted, last)
        }
    }
}

/// Coefficients for a given order: closed form at order 1, iterative above.
pub fn fit_coefficients(
    transports: &[TransportMap],
    p: usize,
    config: &FitConfig,
) -> Result<Vec<f64>> {
    if p == 1 {
        Ok(vec![fit_atm1(transports)?.alpha])
    } else {
        Ok(fit_atmp(transports, p, config)?.alphas)
    }
}

/// Rolling-window order selection over the presample: each candidate order
/// is scored by accumulated one-step Wasserstein forecast error, rolling
/// the training window one step at a time; ties go to the smallest order.
pub fn select_order(
    variant: AtmVariant,
    dists: &[Distribution],
    presample_k: usize,
    window_m: usize,
    candidates: &[usize],
    config: &FitConfig,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(AtmError::Parameter("empty candidate set".into()));
    }
    if presample_k == 0 || window_m < 3 {
        return Err(AtmError::Parameter(
            "need at least one rolling window of length at least 3".into(),
        ));
    }
    if dists.len() < presample_k + window_m {
        return Err(AtmError::InsufficientData(format!(
            "order selection needs at least {} distributions, got {}",
            presample_k + window_m,
            dists.len()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &p in &sorted {
        let mut total = 0.0;
        for r in 0..presample_k {
            let window = &dists[r..r + window_m];
            let transports = build_transport_series(variant, window)?;
            let alphas = fit_coefficients(&transports, p, config)?;
            let forecast = forecast_distribution(variant, &alphas, window, &transports)?;
            total += wasserstein_distance(&dists[r + window_m], &forecast)?;
        }
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((p, total));
        }
    }
    Ok(best.expect("candidate set non-empty").0)
}

/// Average one-step Wasserstein forecast error over all rolling windows of
/// length `k`, divided by the number of windows n - 2k.
pub fn evaluate_rolling(
    variant: AtmVariant,
    dists: &[Distribution],
    k: usize,
    p: usize,
    config: &FitConfig,
) -> Result<f64> {
    let n = dists.len();
    if n <= 2 * k {
        return Err(AtmError::InsufficientData(format!(
            "rolling evaluation needs more than {} distributions, got {n}",
            2 * k
        )));
    }
    let mut total = 0.0;
    for r in k..n - k {
        let window = &dists[r..r + k];
        let transports = build_transport_series(variant, window)?;
        let alphas = fit_coefficients(&transports, p, config)?;
        let forecast = forecast_distribution(variant, &alphas, window, &transports)?;
        total += wasserstein_distance(&dists[r + k], &forecast)?;
    }
    Ok(total / (n - 2 * k) as f64)
}
