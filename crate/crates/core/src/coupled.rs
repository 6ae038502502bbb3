//! Plant and observer stacked into one ODE.
//!
//! Flat layout for `n` grid points:
//! `[z1 (n) | z2 (n) | zh1 (n) | zh2 (n) | Wh21 (n*n) | Wh22 (n*n)]`.

use crate::error::{check_len, Error, Result};
use crate::grid::{CircleGrid, FieldVector, KernelMatrix};
use crate::observer::{
    errors_from_slices, observer_rhs_into, ErrorRecord, ObserverGains, ObserverSlices,
    ObserverSlicesMut, ObserverState,
};
use crate::plant::{plant_rhs_into, InputSignal, KnownPlant, PlantParams, PlantState, Scratch};

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledState {
    pub plant: PlantState,
    pub observer: ObserverState,
}

/// Length of the flattened state for `n` grid points.
pub fn flat_len(n: usize) -> usize {
    4 * n + 2 * n * n
}

struct Parts<'a> {
    z1: &'a [f64],
    z2: &'a [f64],
    zh1: &'a [f64],
    zh2: &'a [f64],
    w21: &'a [f64],
    w22: &'a [f64],
}

fn split(y: &[f64], n: usize) -> Parts<'_> {
    let (z1, rest) = y.split_at(n);
    let (z2, rest) = rest.split_at(n);
    let (zh1, rest) = rest.split_at(n);
    let (zh2, rest) = rest.split_at(n);
    let (w21, w22) = rest.split_at(n * n);
    Parts {
        z1,
        z2,
        zh1,
        zh2,
        w21,
        w22,
    }
}

impl CoupledState {
    pub fn flatten(&self) -> Vec<f64> {
        let n = self.plant.z1.len();
        let mut out = Vec::with_capacity(flat_len(n));
        out.extend_from_slice(self.plant.z1.values());
        out.extend_from_slice(self.plant.z2.values());
        out.extend_from_slice(self.observer.zhat1.values());
        out.extend_from_slice(self.observer.zhat2.values());
        out.extend_from_slice(self.observer.what21.entries());
        out.extend_from_slice(self.observer.what22.entries());
        out
    }

    pub fn unflatten(y: &[f64], n: usize) -> Result<Self> {
        check_len("flattened coupled state", flat_len(n), y.len())?;
        let p = split(y, n);
        Ok(Self {
            plant: PlantState {
                z1: FieldVector::new(p.z1.to_vec())?,
                z2: FieldVector::new(p.z2.to_vec())?,
            },
            observer: ObserverState {
                zhat1: FieldVector::new(p.zh1.to_vec())?,
                zhat2: FieldVector::new(p.zh2.to_vec())?,
                what21: KernelMatrix::new(n, p.w21.to_vec())?,
                what22: KernelMatrix::new(n, p.w22.to_vec())?,
            },
        })
    }
}

/// The cascade of the true neural field and its adaptive observer.
///
/// The true parameters drive the plant and the error diagnostics; the
/// observer half of the right-hand side only receives the [`KnownPlant`]
/// view and the measured `z2`.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    grid: CircleGrid,
    truth: PlantParams,
    known: KnownPlant,
    gains: ObserverGains,
    u1: InputSignal,
    u2: InputSignal,
}

impl CoupledSystem {
    pub fn new(
        grid: CircleGrid,
        truth: PlantParams,
        gains: ObserverGains,
        u1: InputSignal,
        u2: InputSignal,
    ) -> Result<Self> {
        for w in [&truth.w11, &truth.w12, &truth.w21, &truth.w22] {
            w.check_grid(&grid)?;
        }
        Ok(Self {
            known: truth.known(),
            grid,
            truth,
            gains,
            u1,
            u2,
        })
    }

    pub fn grid(&self) -> &CircleGrid {
        &self.grid
    }

    pub fn truth(&self) -> &PlantParams {
        &self.truth
    }

    pub fn gains(&self) -> &ObserverGains {
        &self.gains
    }

    pub fn dim(&self) -> usize {
        flat_len(self.grid.n_points())
    }

    /// Writes the time derivative of the flattened state `y` into `dy`.
    pub fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.grid.n_points();
        debug_assert_eq!(y.len(), flat_len(n));
        let p = split(y, n);
        let (dz1, rest) = dy.split_at_mut(n);
        let (dz2, rest) = rest.split_at_mut(n);
        let (dzh1, rest) = rest.split_at_mut(n);
        let (dzh2, rest) = rest.split_at_mut(n);
        let (dw21, dw22) = rest.split_at_mut(n * n);
        let mut scratch = Scratch::new(n);
        plant_rhs_into(
            p.z1,
            p.z2,
            t,
            &self.truth,
            &self.u1,
            &self.u2,
            &self.grid,
            &mut scratch,
            dz1,
            dz2,
        );
        observer_rhs_into(
            ObserverSlices {
                zhat1: p.zh1,
                zhat2: p.zh2,
                what21: p.w21,
                what22: p.w22,
            },
            p.z2,
            t,
            &self.known,
            &self.gains,
            &self.u1,
            &self.u2,
            &self.grid,
            &mut scratch,
            ObserverSlicesMut {
                zhat1: dzh1,
                zhat2: dzh2,
                what21: dw21,
                what22: dw22,
            },
        );
    }

    pub fn errors(&self, t: f64, y: &[f64]) -> Result<ErrorRecord> {
        let n = self.grid.n_points();
        check_len("flattened coupled state", flat_len(n), y.len())?;
        let p = split(y, n);
        Ok(errors_from_slices(
            t,
            p.z1,
            p.z2,
            &ObserverSlices {
                zhat1: p.zh1,
                zhat2: p.zh2,
                what21: p.w21,
                what22: p.w22,
            },
            &self.truth,
            &self.gains,
            &self.grid,
        ))
    }

    /// The regressor seen by the observer, `(S1(zh1), S2(z2))`.
    pub fn regressor(&self, y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.grid.n_points();
        check_len("flattened coupled state", flat_len(n), y.len())?;
        let p = split(y, n);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        self.truth.s1.apply_into(p.zh1, &mut a);
        self.truth.s2.apply_into(p.z2, &mut b);
        Ok((a, b))
    }

    /// Copies of the current kernel estimates.
    pub fn kernel_estimates(&self, y: &[f64]) -> Result<(KernelMatrix, KernelMatrix)> {
        let n = self.grid.n_points();
        check_len("flattened coupled state", flat_len(n), y.len())?;
        let p = split(y, n);
        Ok((
            KernelMatrix::new(n, p.w21.to_vec())?,
            KernelMatrix::new(n, p.w22.to_vec())?,
        ))
    }

    pub fn check_finite(y: &[f64]) -> Result<()> {
        match y.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Numeric(format!("state entry {i} is not finite"))),
            None => Ok(()),
        }
    }
}
