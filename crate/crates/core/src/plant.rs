//! Two-population neural field on the circle.
//!
//! ```text
//! tau1 dz1/dt = -z1 + u1 + W11 S1(z1) + W12 S2(z2)
//! tau2 dz2/dt = -z2 + u2 + W21 S1(z1) + W22 S2(z2)
//! ```
//!
//! `z1` is the unmeasured population, `z2` the measured one.

use std::fmt;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::grid::{
    gaussian_kernel, matvec_into, operator_norm, CircleGrid, FieldVector, KernelMatrix,
    PowerIteration,
};

/// Number of points used when checking user-supplied activation constants.
const ACTIVATION_SAMPLES: usize = 100_000;

/// Piecewise-linear activation through `(z, S(z))` knots, constant outside.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTable {
    knots: Vec<(f64, f64)>,
}

impl ActivationTable {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Domain(
                "activation table needs at least 2 knots".into(),
            ));
        }
        if knots.iter().any(|(z, s)| !z.is_finite() || !s.is_finite()) {
            return Err(Error::Domain(
                "activation table knots must be finite".into(),
            ));
        }
        if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Domain(
                "activation table abscissae must be strictly increasing".into(),
            ));
        }
        Ok(Self { knots })
    }

    fn segment(&self, z: f64) -> Option<usize> {
        let first = self.knots[0].0;
        let last = self.knots[self.knots.len() - 1].0;
        if z <= first || z >= last || z.is_nan() {
            return None;
        }
        Some(self.knots.partition_point(|&(x, _)| x <= z) - 1)
    }

    fn eval(&self, z: f64) -> f64 {
        match self.segment(z) {
            Some(k) => {
                let (x0, y0) = self.knots[k];
                let (x1, y1) = self.knots[k + 1];
                y0 + (y1 - y0) * (z - x0) / (x1 - x0)
            }
            None if z <= self.knots[0].0 => self.knots[0].1,
            None => self.knots[self.knots.len() - 1].1,
        }
    }

    fn slope(&self, z: f64) -> f64 {
        match self.segment(z) {
            Some(k) => {
                let (x0, y0) = self.knots[k];
                let (x1, y1) = self.knots[k + 1];
                (y1 - y0) / (x1 - x0)
            }
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActivationKind {
    Tanh,
    /// `1 / (1 + exp(-z))`
    Logistic,
    Table(ActivationTable),
}

/// A bounded activation with bounded derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    kind: ActivationKind,
    lipschitz: f64,
    bound: f64,
}

impl Activation {
    pub fn tanh() -> Self {
        Self {
            kind: ActivationKind::Tanh,
            lipschitz: 1.0,
            bound: 1.0,
        }
    }

    pub fn logistic() -> Self {
        Self {
            kind: ActivationKind::Logistic,
            lipschitz: 0.25,
            bound: 1.0,
        }
    }

    /// A tabulated activation. The claimed Lipschitz constant and bound are
    /// checked by sampling the table.
    pub fn table(table: ActivationTable, lipschitz: f64, bound: f64) -> Result<Self> {
        let act = Self {
            kind: ActivationKind::Table(table),
            lipschitz,
            bound,
        };
        act.validate()?;
        Ok(act)
    }

    pub fn kind(&self) -> &ActivationKind {
        &self.kind
    }

    /// Supremum of `|S'|`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Supremum of `|S|`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn eval(&self, z: f64) -> f64 {
        match &self.kind {
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Logistic => 1.0 / (1.0 + (-z).exp()),
            ActivationKind::Table(t) => t.eval(z),
        }
    }

    pub fn derivative(&self, z: f64) -> f64 {
        match &self.kind {
            ActivationKind::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            ActivationKind::Logistic => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            ActivationKind::Table(t) => t.slope(z),
        }
    }

    /// Pointwise application.
    pub fn apply(&self, z: &FieldVector) -> FieldVector {
        let mut out = vec![0.0; z.len()];
        self.apply_into(z.values(), &mut out);
        FieldVector::from_vec_unchecked(out)
    }

    pub(crate) fn apply_into(&self, z: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(z) {
            *o = self.eval(x);
        }
    }

    /// Samples `S` and `S'` over a range that covers the interesting part of
    /// the activation and checks them against the claimed constants.
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::Domain(format!(
                "activation Lipschitz constant must be > 0, got {}",
                self.lipschitz
            )));
        }
        if !(self.bound > 0.0 && self.bound.is_finite()) {
            return Err(Error::Domain(format!(
                "activation bound must be > 0, got {}",
                self.bound
            )));
        }
        let (lo, hi) = match &self.kind {
            ActivationKind::Table(t) => {
                let first = t.knots[0].0;
                let last = t.knots[t.knots.len() - 1].0;
                let pad = (last - first).max(1.0);
                (first - pad, last + pad)
            }
            _ => (-50.0, 50.0),
        };
        let slack = 1.0 + 1e-12;
        for k in 0..=ACTIVATION_SAMPLES {
            let z = lo + (hi - lo) * k as f64 / ACTIVATION_SAMPLES as f64;
            let s = self.eval(z);
            let ds = self.derivative(z);
            if s.abs() > self.bound * slack {
                return Err(Error::Domain(format!(
                    "activation value {s} at z = {z} exceeds bound {}",
                    self.bound
                )));
            }
            if ds.abs() > self.lipschitz * slack {
                return Err(Error::Domain(format!(
                    "activation slope {ds} at z = {z} exceeds Lipschitz constant {}",
                    self.lipschitz
                )));
            }
        }
        if let ActivationKind::Table(t) = &self.kind {
            for w in t.knots.windows(2) {
                let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                if slope.abs() > self.lipschitz * slack {
                    return Err(Error::Domain(format!(
                        "activation table segment slope {slope} exceeds Lipschitz constant {}",
                        self.lipschitz
                    )));
                }
            }
        }
        Ok(())
    }
}

pub type InputFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// External drive `u(t, r)`.
#[derive(Clone)]
pub enum InputSignal {
    /// `amplitude * sin(lambda * t * r)`
    SinusoidalProduct {
        amplitude: f64,
        lambda: f64,
    },
    Zero,
    Custom(InputFn),
}

impl fmt::Debug for InputSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SinusoidalProduct { amplitude, lambda } => f
                .debug_struct("SinusoidalProduct")
                .field("amplitude", amplitude)
                .field("lambda", lambda)
                .finish(),
            Self::Zero => f.write_str("Zero"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl InputSignal {
    pub fn sinusoidal(amplitude: f64, lambda: f64) -> Self {
        Self::SinusoidalProduct { amplitude, lambda }
    }

    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: f64, r: f64) -> f64 {
        match self {
            Self::SinusoidalProduct { amplitude, lambda } => amplitude * (lambda * t * r).sin(),
            Self::Zero => 0.0,
            Self::Custom(f) => f(t, r),
        }
    }

    pub(crate) fn eval_into(&self, t: f64, coords: &[f64], out: &mut [f64]) {
        match self {
            Self::Zero => out.fill(0.0),
            _ => {
                for (o, &r) in out.iter_mut().zip(coords) {
                    *o = self.eval(t, r);
                }
            }
        }
    }
}

/// Samples the input on the grid at time `t`.
pub fn input_eval(u: &InputSignal, t: f64, grid: &CircleGrid) -> FieldVector {
    let mut out = vec![0.0; grid.n_points()];
    u.eval_into(t, grid.coords(), &mut out);
    FieldVector::from_vec_unchecked(out)
}

/// Pointwise activation, `S(z)`.
pub fn activation_eval(s: &Activation, z: &FieldVector) -> FieldVector {
    s.apply(z)
}

/// Time constants, kernels and activations of the two populations.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams {
    pub tau1: f64,
    pub tau2: f64,
    pub w11: KernelMatrix,
    pub w12: KernelMatrix,
    pub w21: KernelMatrix,
    pub w22: KernelMatrix,
    pub s1: Activation,
    pub s2: Activation,
}

/// The parts of [`PlantParams`] an observer is allowed to know: everything
/// except the kernels `W21` and `W22` it reconstructs.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownPlant {
    pub tau1: f64,
    pub tau2: f64,
    pub w11: KernelMatrix,
    pub w12: KernelMatrix,
    pub s1: Activation,
    pub s2: Activation,
}

impl PlantParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: &CircleGrid,
        tau1: f64,
        tau2: f64,
        w11: KernelMatrix,
        w12: KernelMatrix,
        w21: KernelMatrix,
        w22: KernelMatrix,
        s1: Activation,
        s2: Activation,
    ) -> Result<Self> {
        for (name, tau) in [("tau1", tau1), ("tau2", tau2)] {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::Domain(format!("{name} must be > 0, got {tau}")));
            }
        }
        for w in [&w11, &w12, &w21, &w22] {
            w.check_grid(grid)?;
        }
        Ok(Self {
            tau1,
            tau2,
            w11,
            w12,
            w21,
            w22,
            s1,
            s2,
        })
    }

    /// Gaussian kernels `omega_ij g / ||g||` sharing one width `sigma`.
    /// `omegas` is `[omega11, omega12, omega21, omega22]`.
    pub fn gaussian(
        grid: &CircleGrid,
        tau1: f64,
        tau2: f64,
        omegas: [f64; 4],
        sigma: f64,
        s1: Activation,
        s2: Activation,
    ) -> Result<Self> {
        let [o11, o12, o21, o22] = omegas;
        Self::new(
            grid,
            tau1,
            tau2,
            gaussian_kernel(grid, sigma, o11)?,
            gaussian_kernel(grid, sigma, o12)?,
            gaussian_kernel(grid, sigma, o21)?,
            gaussian_kernel(grid, sigma, o22)?,
            s1,
            s2,
        )
    }

    pub fn known(&self) -> KnownPlant {
        KnownPlant {
            tau1: self.tau1,
            tau2: self.tau2,
            w11: self.w11.clone(),
            w12: self.w12.clone(),
            s1: self.s1.clone(),
            s2: self.s2.clone(),
        }
    }
}

/// `(z1, z2)`; also used for time derivatives and tangent directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub z1: FieldVector,
    pub z2: FieldVector,
}

impl PlantState {
    pub fn constant(grid: &CircleGrid, z1: f64, z2: f64) -> Self {
        Self {
            z1: FieldVector::constant(grid, z1),
            z2: FieldVector::constant(grid, z2),
        }
    }

    fn check(&self, grid: &CircleGrid) -> Result<()> {
        check_len("z1 length", grid.n_points(), self.z1.len())?;
        check_len("z2 length", grid.n_points(), self.z2.len())
    }
}

/// Scratch buffers for one right-hand-side evaluation.
pub(crate) struct Scratch {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub u: Vec<f64>,
}

impl Scratch {
    pub fn new(n: usize) -> Self {
        Self {
            a: vec![0.0; n],
            b: vec![0.0; n],
            c: vec![0.0; n],
            u: vec![0.0; n],
        }
    }
}

/// Slice form of [`plant_rhs`]. `dz1` and `dz2` are overwritten.
#[allow(clippy::too_many_arguments)]
pub(crate) fn plant_rhs_into(
    z1: &[f64],
    z2: &[f64],
    t: f64,
    p: &PlantParams,
    u1: &InputSignal,
    u2: &InputSignal,
    grid: &CircleGrid,
    scratch: &mut Scratch,
    dz1: &mut [f64],
    dz2: &mut [f64],
) {
    let dr = grid.spacing();
    let Scratch {
        a: s1z1,
        b: s2z2,
        c: tmp,
        u,
    } = scratch;
    p.s1.apply_into(z1, s1z1);
    p.s2.apply_into(z2, s2z2);

    u1.eval_into(t, grid.coords(), u);
    matvec_into(p.w11.entries(), s1z1, dr, dz1);
    matvec_into(p.w12.entries(), s2z2, dr, tmp);
    let inv1 = 1.0 / p.tau1;
    for i in 0..z1.len() {
        dz1[i] = inv1 * (-z1[i] + u[i] + dz1[i] + tmp[i]);
    }

    u2.eval_into(t, grid.coords(), u);
    matvec_into(p.w21.entries(), s1z1, dr, dz2);
    matvec_into(p.w22.entries(), s2z2, dr, tmp);
    let inv2 = 1.0 / p.tau2;
    for i in 0..z2.len() {
        dz2[i] = inv2 * (-z2[i] + u[i] + dz2[i] + tmp[i]);
    }
}

/// Time derivative of the neural field at `state`.
pub fn plant_rhs(
    state: &PlantState,
    t: f64,
    p: &PlantParams,
    u1: &InputSignal,
    u2: &InputSignal,
    grid: &CircleGrid,
) -> Result<PlantState> {
    state.check(grid)?;
    p.w11.check_grid(grid)?;
    let n = grid.n_points();
    let mut dz1 = vec![0.0; n];
    let mut dz2 = vec![0.0; n];
    plant_rhs_into(
        state.z1.values(),
        state.z2.values(),
        t,
        p,
        u1,
        u2,
        grid,
        &mut Scratch::new(n),
        &mut dz1,
        &mut dz2,
    );
    Ok(PlantState {
        z1: FieldVector::from_vec_unchecked(dz1),
        z2: FieldVector::from_vec_unchecked(dz2),
    })
}

/// Jacobian of [`plant_rhs`] with respect to the state, applied to `direction`.
/// The inputs do not depend on the state and drop out.
pub fn plant_jvp(
    state: &PlantState,
    direction: &PlantState,
    p: &PlantParams,
    grid: &CircleGrid,
) -> Result<PlantState> {
    state.check(grid)?;
    direction.check(grid)?;
    let n = grid.n_points();
    let dr = grid.spacing();
    let (z1, z2) = (state.z1.values(), state.z2.values());
    let (d1, d2) = (direction.z1.values(), direction.z2.values());
    let g1: Vec<f64> = (0..n).map(|i| p.s1.derivative(z1[i]) * d1[i]).collect();
    let g2: Vec<f64> = (0..n).map(|i| p.s2.derivative(z2[i]) * d2[i]).collect();

    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    matvec_into(p.w11.entries(), &g1, dr, &mut a);
    matvec_into(p.w12.entries(), &g2, dr, &mut b);
    let j1 = (0..n).map(|i| (-d1[i] + a[i] + b[i]) / p.tau1).collect();
    matvec_into(p.w21.entries(), &g1, dr, &mut a);
    matvec_into(p.w22.entries(), &g2, dr, &mut b);
    let j2 = (0..n).map(|i| (-d2[i] + a[i] + b[i]) / p.tau2).collect();
    Ok(PlantState {
        z1: FieldVector::from_vec_unchecked(j1),
        z2: FieldVector::from_vec_unchecked(j2),
    })
}

/// Strong-dissipativity check of the unmeasured population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipativityMargin {
    pub w11_opnorm: f64,
    /// `l1 * ||W11||`; the subsystem is strongly dissipative when this is < 1.
    pub product: f64,
    /// Contraction rate `(1 - product) / tau1`, present only when product < 1.
    pub alpha: Option<f64>,
}

impl DissipativityMargin {
    pub fn holds(&self) -> bool {
        self.alpha.is_some()
    }
}

pub fn dissipativity_margin(
    p: &PlantParams,
    grid: &CircleGrid,
    opts: PowerIteration,
) -> Result<DissipativityMargin> {
    let w11_opnorm = operator_norm(&p.w11, grid, opts)?;
    let product = p.s1.lipschitz() * w11_opnorm;
    let alpha = (product < 1.0).then(|| (1.0 - product) / p.tau1);
    Ok(DissipativityMargin {
        w11_opnorm,
        product,
        alpha,
    })
}
