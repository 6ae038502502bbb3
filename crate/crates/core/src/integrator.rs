//! Adaptive Dormand-Prince 5(4) integration with exact landing on sample times.
//!
//! The system is given as `f(t, y, dy)` writing the derivative into `dy`.
//! Stepping is sequential; the right-hand side may parallelize internally.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
/// Fifth-order weights; also the last stage row (first same as last).
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Fifth- minus fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MAX_GROWTH: f64 = 5.0;
const MAX_SHRINK: f64 = 0.2;

/// Error tolerances and step-size bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub safety: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-9,
            h_init: 1e-4,
            h_min: 1e-12,
            h_max: 1.0,
            safety: 0.9,
        }
    }
}

impl StepControl {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("rtol", self.rtol)?;
        positive("atol", self.atol)?;
        positive("h_init", self.h_init)?;
        positive("h_min", self.h_min)?;
        positive("h_max", self.h_max)?;
        if !(self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(Error::Domain(format!(
                "need h_min <= h_init <= h_max, got {} / {} / {}",
                self.h_min, self.h_init, self.h_max
            )));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(Error::Domain(format!(
                "safety must lie in (0, 1), got {}",
                self.safety
            )));
        }
        Ok(())
    }

    fn next_step(&self, h: f64, estimate: f64, accepted: bool) -> f64 {
        let factor = if estimate == 0.0 {
            MAX_GROWTH
        } else {
            self.safety * estimate.powf(-0.2)
        };
        let upper = if accepted { MAX_GROWTH } else { 1.0 };
        (h * factor.clamp(MAX_SHRINK, upper)).clamp(self.h_min, self.h_max)
    }
}

/// Outcome of a single attempted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// Fifth-order solution at `t + h` (meaningful only when accepted).
    pub state: Vec<f64>,
    /// Weighted RMS of the embedded error; the step is accepted when <= 1.
    pub error_estimate: f64,
    pub accepted: bool,
    pub h_next: f64,
}

/// Work arrays for one system size.
struct Stepper {
    k: [Vec<f64>; 7],
    stage: Vec<f64>,
    y_new: Vec<f64>,
    rhs_evals: usize,
}

impl Stepper {
    fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            stage: vec![0.0; dim],
            y_new: vec![0.0; dim],
            rhs_evals: 0,
        }
    }

    fn eval<F>(&mut self, f: &F, t: f64, k_index: usize, from_stage: bool)
    where
        F: Fn(f64, &[f64], &mut [f64]),
    {
        let src = if from_stage { &self.stage } else { &self.y_new };
        f(t, src, &mut self.k[k_index]);
        self.rhs_evals += 1;
    }

    fn combine(&mut self, y: &[f64], h: f64, coeffs: &[f64]) {
        let k = &self.k;
        for (i, s) in self.stage.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, kj) in coeffs.iter().zip(k) {
                acc += c * kj[i];
            }
            *s = y[i] + h * acc;
        }
    }

    /// Computes stages 2..7 given `k[0] = f(t, y)`. Leaves the fifth-order
    /// solution in `y_new`, `f(t_end, y_new)` in `k[6]` and returns the
    /// weighted error estimate. `t_end` is `t + h` up to rounding.
    fn attempt<F>(
        &mut self,
        f: &F,
        t: f64,
        y: &[f64],
        h: f64,
        t_end: f64,
        ctl: &StepControl,
    ) -> Result<f64>
    where
        F: Fn(f64, &[f64], &mut [f64]),
    {
        for (row, coeffs) in [&A2[..], &A3[..], &A4[..], &A5[..], &A6[..]]
            .into_iter()
            .enumerate()
        {
            self.combine(y, h, coeffs);
            self.eval(f, t + C[row + 1] * h, row + 1, true);
        }
        self.combine(y, h, &B);
        std::mem::swap(&mut self.stage, &mut self.y_new);
        self.eval(f, t_end, 6, false);

        let mut sum = 0.0;
        for i in 0..y.len() {
            let mut err = 0.0;
            for (e, kj) in E.iter().zip(&self.k) {
                err += e * kj[i];
            }
            let scale = ctl.atol + ctl.rtol * y[i].abs().max(self.y_new[i].abs());
            let w = h * err / scale;
            sum += w * w;
        }
        let estimate = if y.is_empty() {
            0.0
        } else {
            (sum / y.len() as f64).sqrt()
        };
        if !estimate.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite stage values in step from t = {t} with h = {h:e}"
            )));
        }
        Ok(estimate)
    }
}

/// One Dormand-Prince step from `(t, state)` with step `h`.
///
/// A rejected step at `h <= h_min` is an error: the problem is too stiff for
/// the requested tolerances.
pub fn rk45_step<F>(f: &F, state: &[f64], t: f64, h: f64, ctl: &StepControl) -> Result<StepResult>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    ctl.validate()?;
    if !(h >= ctl.h_min && h <= ctl.h_max) {
        return Err(Error::Domain(format!(
            "step {h:e} outside [{:e}, {:e}]",
            ctl.h_min, ctl.h_max
        )));
    }
    let mut stepper = Stepper::new(state.len());
    f(t, state, &mut stepper.k[0]);
    let estimate = stepper.attempt(f, t, state, h, t + h, ctl)?;
    let accepted = estimate <= 1.0;
    if !accepted && h <= ctl.h_min {
        return Err(Error::StepSizeUnderflow { t, h, estimate });
    }
    Ok(StepResult {
        state: stepper.y_new,
        error_estimate: estimate,
        accepted,
        h_next: ctl.next_step(h, estimate, accepted),
    })
}

/// Step counters of an integration run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// States at the requested sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: StepStats,
}

/// Integrates from `t0` to `tf` and records the state at each sample time.
pub fn integrate<F>(
    f: &F,
    s0: &[f64],
    t0: f64,
    tf: f64,
    samples: &[f64],
    ctl: &StepControl,
) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let mut times = Vec::with_capacity(samples.len());
    let mut states = Vec::with_capacity(samples.len());
    let stats = integrate_with(f, s0, t0, tf, samples, ctl, |t, y| {
        times.push(t);
        states.push(y.to_vec());
        Ok(())
    })?;
    Ok(Trajectory {
        times,
        states,
        stats,
    })
}

/// Like [`integrate`], but hands each sample to `on_sample` instead of
/// storing it. Sample times are reached exactly (the step is truncated to
/// land on them) and are reported with the requested value bit for bit.
#[allow(clippy::too_many_arguments)]
pub fn integrate_with<F, S>(
    f: &F,
    s0: &[f64],
    t0: f64,
    tf: f64,
    samples: &[f64],
    ctl: &StepControl,
    mut on_sample: S,
) -> Result<StepStats>
where
    F: Fn(f64, &[f64], &mut [f64]),
    S: FnMut(f64, &[f64]) -> Result<()>,
{
    ctl.validate()?;
    if !(t0.is_finite() && tf.is_finite() && tf >= t0) {
        return Err(Error::Range(format!("invalid time span [{t0}, {tf}]")));
    }
    if samples.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Range("sample times must be ascending".into()));
    }
    if let (Some(&first), Some(&last)) = (samples.first(), samples.last()) {
        if first < t0 || last > tf {
            return Err(Error::Range(format!(
                "sample times [{first}, {last}] outside [{t0}, {tf}]"
            )));
        }
    }
    if let Some(i) = s0.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "initial state entry {i} is not finite"
        )));
    }

    let mut stepper = Stepper::new(s0.len());
    let mut stats = StepStats::default();
    let mut y = s0.to_vec();
    let mut t = t0;
    let mut h = ctl.h_init;
    let mut next = 0;

    while next < samples.len() && samples[next] == t {
        on_sample(t, &y)?;
        next += 1;
    }
    if t < tf {
        f(t, &y, &mut stepper.k[0]);
        stepper.rhs_evals += 1;
    }

    while t < tf {
        let target = samples.get(next).copied().unwrap_or(tf);
        let mut h_try = h.min(target - t);
        let truncated = h_try < h;
        loop {
            let lands = h_try >= target - t;
            let t_end = if lands { target } else { t + h_try };
            let estimate = stepper.attempt(f, t, &y, h_try, t_end, ctl)?;
            if estimate <= 1.0 {
                stats.accepted += 1;
                let h_next = ctl.next_step(h_try, estimate, true);
                h = if truncated {
                    h.max(h_next).min(ctl.h_max)
                } else {
                    h_next
                };
                t = t_end;
                std::mem::swap(&mut y, &mut stepper.y_new);
                stepper.k.swap(0, 6);
                break;
            }
            stats.rejected += 1;
            if h_try <= ctl.h_min {
                return Err(Error::StepSizeUnderflow {
                    t,
                    h: h_try,
                    estimate,
                });
            }
            h_try = ctl.next_step(h_try, estimate, false);
            h = h_try;
        }
        while next < samples.len() && samples[next] == t {
            on_sample(t, &y)?;
            next += 1;
        }
    }
    stats.rhs_evals = stepper.rhs_evals;
    Ok(stats)
}
