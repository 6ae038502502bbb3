//! Adaptive observer for the measured neural field.
//!
//! ```text
//! tau1 d(zh1)/dt = -zh1 + W11 S1(zh1) + W12 S2(z2) + u1
//! tau2 d(zh2)/dt = -z2 + Wh21 S1(zh1) + Wh22 S2(z2) + u2 - tau2 beta (zh2 - z2)
//!      d(Wh21)/dt = -gamma1 (zh2 - z2) S1(zh1)*
//!      d(Wh22)/dt = -gamma2 (zh2 - z2) S2(z2)*
//! ```
//!
//! The leak term of the `zh2` equation uses the measurement `z2`, not the
//! estimate. The observer only sees [`KnownPlant`], so it cannot read the
//! kernels it reconstructs.

use crate::error::{check_len, Error, Result};
use crate::grid::{
    dot, hs_norm_unchecked, matvec_into, operator_norm, outer_into, CircleGrid, FieldVector,
    KernelMatrix, PowerIteration,
};
use crate::plant::{
    dissipativity_margin, InputSignal, KnownPlant, PlantParams, PlantState, Scratch,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGains {
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl ObserverGains {
    pub fn new(beta: f64, gamma1: f64, gamma2: f64) -> Result<Self> {
        for (name, v) in [("beta", beta), ("gamma1", gamma1), ("gamma2", gamma2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(Self {
            beta,
            gamma1,
            gamma2,
        })
    }
}

/// `(zh1, zh2, Wh21, Wh22)`; also used for time derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub zhat1: FieldVector,
    pub zhat2: FieldVector,
    pub what21: KernelMatrix,
    pub what22: KernelMatrix,
}

impl ObserverState {
    /// Zero state estimates and zero kernel estimates.
    pub fn zeros(grid: &CircleGrid) -> Self {
        let n = grid.n_points();
        Self {
            zhat1: FieldVector::zeros(n),
            zhat2: FieldVector::zeros(n),
            what21: KernelMatrix::zeros(n),
            what22: KernelMatrix::zeros(n),
        }
    }

    pub(crate) fn check(&self, grid: &CircleGrid) -> Result<()> {
        let n = grid.n_points();
        check_len("zhat1 length", n, self.zhat1.len())?;
        check_len("zhat2 length", n, self.zhat2.len())?;
        self.what21.check_grid(grid)?;
        self.what22.check_grid(grid)
    }
}

/// Borrowed slices of an observer state.
pub(crate) struct ObserverSlices<'a> {
    pub zhat1: &'a [f64],
    pub zhat2: &'a [f64],
    pub what21: &'a [f64],
    pub what22: &'a [f64],
}

pub(crate) struct ObserverSlicesMut<'a> {
    pub zhat1: &'a mut [f64],
    pub zhat2: &'a mut [f64],
    pub what21: &'a mut [f64],
    pub what22: &'a mut [f64],
}

/// Slice form of [`observer_rhs`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn observer_rhs_into(
    obs: ObserverSlices<'_>,
    z2: &[f64],
    t: f64,
    known: &KnownPlant,
    gains: &ObserverGains,
    u1: &InputSignal,
    u2: &InputSignal,
    grid: &CircleGrid,
    scratch: &mut Scratch,
    out: ObserverSlicesMut<'_>,
) {
    let n = z2.len();
    let dr = grid.spacing();
    let Scratch {
        a: s1,
        b: s2,
        c: tmp,
        u,
    } = scratch;
    known.s1.apply_into(obs.zhat1, s1);
    known.s2.apply_into(z2, s2);

    u1.eval_into(t, grid.coords(), u);
    matvec_into(known.w11.entries(), s1, dr, out.zhat1);
    matvec_into(known.w12.entries(), s2, dr, tmp);
    let inv1 = 1.0 / known.tau1;
    for i in 0..n {
        out.zhat1[i] = inv1 * (-obs.zhat1[i] + out.zhat1[i] + tmp[i] + u[i]);
    }

    u2.eval_into(t, grid.coords(), u);
    matvec_into(obs.what21, s1, dr, out.zhat2);
    matvec_into(obs.what22, s2, dr, tmp);
    let inv2 = 1.0 / known.tau2;
    for i in 0..n {
        let err = obs.zhat2[i] - z2[i];
        out.zhat2[i] = inv2 * (-z2[i] + out.zhat2[i] + tmp[i] + u[i]) - gains.beta * err;
    }

    // reuse `u` for the output error zh2 - z2
    for i in 0..n {
        u[i] = obs.zhat2[i] - z2[i];
    }
    outer_into(u, s1, -gains.gamma1, out.what21);
    outer_into(u, s2, -gains.gamma2, out.what22);
}

/// Time derivative of the observer given the current measurement `z2`.
#[allow(clippy::too_many_arguments)]
pub fn observer_rhs(
    obs: &ObserverState,
    measured_z2: &FieldVector,
    t: f64,
    known: &KnownPlant,
    gains: &ObserverGains,
    u1: &InputSignal,
    u2: &InputSignal,
    grid: &CircleGrid,
) -> Result<ObserverState> {
    obs.check(grid)?;
    check_len("measured z2 length", grid.n_points(), measured_z2.len())?;
    known.w11.check_grid(grid)?;
    known.w12.check_grid(grid)?;
    let n = grid.n_points();
    let mut d = ObserverState::zeros(grid);
    let mut w21 = d.what21.into_entries();
    let mut w22 = d.what22.into_entries();
    let mut z1 = vec![0.0; n];
    let mut z2 = vec![0.0; n];
    observer_rhs_into(
        ObserverSlices {
            zhat1: obs.zhat1.values(),
            zhat2: obs.zhat2.values(),
            what21: obs.what21.entries(),
            what22: obs.what22.entries(),
        },
        measured_z2.values(),
        t,
        known,
        gains,
        u1,
        u2,
        grid,
        &mut Scratch::new(n),
        ObserverSlicesMut {
            zhat1: &mut z1,
            zhat2: &mut z2,
            what21: &mut w21,
            what22: &mut w22,
        },
    );
    d.zhat1 = FieldVector::from_vec_unchecked(z1);
    d.zhat2 = FieldVector::from_vec_unchecked(z2);
    d.what21 = KernelMatrix::from_vec_unchecked(n, w21);
    d.what22 = KernelMatrix::from_vec_unchecked(n, w22);
    Ok(d)
}

/// Sufficient condition for state convergence, evaluated on the true
/// parameters. A diagnostic only; the observer never consumes `W21`.
///
/// With `c = l1 ||B1||` and `B1 = W21 / tau2`, the condition is
/// `4 alpha beta > c^2`. The Lyapunov decay rates are
/// `mu1 = alpha - c eps / 2` and `mu2 = beta - c / (2 eps)` for
/// `eps = alpha / c + c / (4 beta)`; when `c = 0` the limits
/// `mu1 = alpha / 2`, `mu2 = beta` are reported and `eps` is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainCondition {
    pub w11_opnorm: f64,
    pub dissipativity_product: f64,
    pub alpha: Option<f64>,
    pub b1_opnorm: f64,
    pub lhs: Option<f64>,
    pub rhs: f64,
    pub holds: bool,
    pub epsilon: Option<f64>,
    pub mu1: Option<f64>,
    pub mu2: Option<f64>,
}

pub fn gain_condition(
    p: &PlantParams,
    gains: &ObserverGains,
    grid: &CircleGrid,
    opts: PowerIteration,
) -> Result<GainCondition> {
    let margin = dissipativity_margin(p, grid, opts)?;
    let b1_opnorm = operator_norm(&p.w21, grid, opts)? / p.tau2;
    let l1 = p.s1.lipschitz();
    Ok(gain_condition_from_norms(
        margin.w11_opnorm,
        margin.product,
        margin.alpha,
        l1,
        b1_opnorm,
        gains.beta,
    ))
}

/// The arithmetic of [`gain_condition`] on precomputed norms.
pub fn gain_condition_from_norms(
    w11_opnorm: f64,
    dissipativity_product: f64,
    alpha: Option<f64>,
    l1: f64,
    b1_opnorm: f64,
    beta: f64,
) -> GainCondition {
    let c = l1 * b1_opnorm;
    let rhs = c * c;
    let lhs = alpha.map(|a| 4.0 * a * beta);
    let holds = lhs.is_some_and(|l| l > rhs);
    let (epsilon, mu1, mu2) = match alpha {
        Some(a) if c > 0.0 => {
            let eps = a / c + c / (4.0 * beta);
            (
                Some(eps),
                Some(a - c * eps / 2.0),
                Some(beta - c / (2.0 * eps)),
            )
        }
        Some(a) => (None, Some(a / 2.0), Some(beta)),
        None => (None, None, None),
    };
    if holds {
        debug_assert!(mu1.unwrap() > 0.0 && mu2.unwrap() > 0.0);
    }
    GainCondition {
        w11_opnorm,
        dissipativity_product,
        alpha,
        b1_opnorm,
        lhs,
        rhs,
        holds,
        epsilon,
        mu1,
        mu2,
    }
}

/// Estimation errors at one sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    pub t: f64,
    pub e_z1: f64,
    pub e_z2: f64,
    pub e_w21: f64,
    pub e_w22: f64,
    /// Squared Lyapunov norm of the estimation error.
    pub lyapunov: f64,
}

/// Slice form of [`estimation_errors`].
pub(crate) fn errors_from_slices(
    t: f64,
    z1: &[f64],
    z2: &[f64],
    obs: &ObserverSlices<'_>,
    truth: &PlantParams,
    gains: &ObserverGains,
    grid: &CircleGrid,
) -> ErrorRecord {
    let dr = grid.spacing();
    let field_err = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * dr
    };
    let ez1_sq = field_err(obs.zhat1, z1);
    let ez2_sq = field_err(obs.zhat2, z2);
    let diff21: Vec<f64> = obs
        .what21
        .iter()
        .zip(truth.w21.entries())
        .map(|(a, b)| a - b)
        .collect();
    let diff22: Vec<f64> = obs
        .what22
        .iter()
        .zip(truth.w22.entries())
        .map(|(a, b)| a - b)
        .collect();
    let e_w21 = hs_norm_unchecked(&diff21, dr);
    let e_w22 = hs_norm_unchecked(&diff22, dr);
    let lyapunov = ez1_sq
        + ez2_sq
        + (e_w21 * e_w21) / (gains.gamma1 * truth.tau2)
        + (e_w22 * e_w22) / (gains.gamma2 * truth.tau2);
    ErrorRecord {
        t,
        e_z1: ez1_sq.sqrt(),
        e_z2: ez2_sq.sqrt(),
        e_w21,
        e_w22,
        lyapunov,
    }
}

/// State errors in L2, kernel errors in Hilbert-Schmidt norm, and the
/// Lyapunov value
///
/// ```text
/// V = ||zh1 - z1||^2 + ||zh2 - z2||^2
///     + ||Wh21 - W21||_HS^2 / (gamma1 tau2) + ||Wh22 - W22||_HS^2 / (gamma2 tau2)
/// ```
///
/// which is non-increasing along trajectories whenever the gain condition holds.
pub fn estimation_errors(
    plant: &PlantState,
    obs: &ObserverState,
    truth: &PlantParams,
    gains: &ObserverGains,
    t: f64,
    grid: &CircleGrid,
) -> Result<ErrorRecord> {
    obs.check(grid)?;
    check_len("z1 length", grid.n_points(), plant.z1.len())?;
    check_len("z2 length", grid.n_points(), plant.z2.len())?;
    truth.w21.check_grid(grid)?;
    truth.w22.check_grid(grid)?;
    Ok(errors_from_slices(
        t,
        plant.z1.values(),
        plant.z2.values(),
        &ObserverSlices {
            zhat1: obs.zhat1.values(),
            zhat2: obs.zhat2.values(),
            what21: obs.what21.entries(),
            what22: obs.what22.entries(),
        },
        truth,
        gains,
        grid,
    ))
}

/// `||(Wh - W) P||_HS` for a diagonal weight `P`.
pub fn weighted_kernel_error(
    estimate: &KernelMatrix,
    truth: &KernelMatrix,
    weights: &[f64],
    grid: &CircleGrid,
) -> Result<f64> {
    let diff = estimate.sub(truth)?.right_scaled(weights)?;
    crate::grid::hs_norm(&diff, grid)
}

/// Time derivative of the Lyapunov value along the coupled dynamics, from the
/// plant and observer derivatives.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_derivative(
    plant: &PlantState,
    dplant: &PlantState,
    obs: &ObserverState,
    dobs: &ObserverState,
    truth: &PlantParams,
    gains: &ObserverGains,
    grid: &CircleGrid,
) -> Result<f64> {
    let dr = grid.spacing();
    let ex1 = obs.zhat1.sub(&plant.z1)?;
    let ex2 = obs.zhat2.sub(&plant.z2)?;
    let dex1 = dobs.zhat1.sub(&dplant.z1)?;
    let dex2 = dobs.zhat2.sub(&dplant.z2)?;
    let ew21 = obs.what21.sub(&truth.w21)?;
    let ew22 = obs.what22.sub(&truth.w22)?;
    let hs = |a: &KernelMatrix, b: &KernelMatrix| dot(a.entries(), b.entries()) * dr * dr;
    Ok(
        2.0 * dr * (dot(ex1.values(), dex1.values()) + dot(ex2.values(), dex2.values()))
            + 2.0 * hs(&ew21, &dobs.what21) / (gains.gamma1 * truth.tau2)
            + 2.0 * hs(&ew22, &dobs.what22) / (gains.gamma2 * truth.tau2),
    )
}
