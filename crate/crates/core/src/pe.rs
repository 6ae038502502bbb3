//! Persistence-of-excitation diagnostics.
//!
//! A signal `g` is persistently exciting with respect to a positive operator
//! `P` when every window Gram operator `G = int_t^{t+T} g g* dtau` dominates
//! `kappa P^2`. For a recorded trajectory we compute `G` per window by the
//! trapezoid rule and report the margin `lambda_min(G - kappa P^2)`; a
//! non-negative margin certifies the inequality on that window.
//!
//! Signals are handled in orthonormal coordinates, so `g g*` is the plain
//! outer product. Field-valued signals are converted with
//! [`SignalTrajectory::from_fields`], which scales by `sqrt(dr)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::CircleGrid;
use crate::par;

/// Relative slack when matching window ends to sample times.
const TIME_TOL: f64 = 1e-9;
const ASYMMETRY_TOL: f64 = 1e-10;

/// Samples `g(t_k)` of a vector signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrajectory {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl SignalTrajectory {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Dimension {
                context: "signal samples",
                expected: times.len(),
                found: values.len(),
            });
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Range(
                "signal times must be strictly increasing".into(),
            ));
        }
        if let Some(first) = values.first() {
            let dim = first.len();
            if let Some(bad) = values.iter().find(|v| v.len() != dim) {
                return Err(Error::Dimension {
                    context: "signal sample length",
                    expected: dim,
                    found: bad.len(),
                });
            }
        }
        Ok(Self { times, values })
    }

    /// Stacks field pairs `(g1, g2)` into one signal, scaled by `sqrt(dr)` so
    /// that the Euclidean structure matches the L2 structure on the grid.
    pub fn from_fields(
        times: Vec<f64>,
        pairs: &[(Vec<f64>, Vec<f64>)],
        grid: &CircleGrid,
    ) -> Result<Self> {
        let w = grid.spacing().sqrt();
        let values = pairs
            .iter()
            .map(|(a, b)| a.iter().chain(b).map(|v| v * w).collect())
            .collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn span_tol(&self) -> f64 {
        let scale = self.times.iter().fold(1.0f64, |m, t| m.max(t.abs()));
        TIME_TOL * scale
    }

    /// `g(t)` by linear interpolation between samples.
    fn interpolate(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0].clone();
        }
        if k == self.times.len() {
            return self.values[k - 1].clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let theta = (t - t0) / (t1 - t0);
        self.values[k - 1]
            .iter()
            .zip(&self.values[k])
            .map(|(a, b)| a + theta * (b - a))
            .collect()
    }

    /// `(t, g(t))` nodes covering `[start, end]`: interior samples plus the
    /// end points (interpolated when they fall between samples).
    fn window_nodes(&self, start: f64, end: f64) -> Vec<(f64, Vec<f64>)> {
        let tol = self.span_tol();
        let mut nodes = Vec::new();
        let first_inside = self.times.partition_point(|&s| s < start - tol);
        if (self
            .times
            .get(first_inside)
            .copied()
            .unwrap_or(f64::INFINITY)
            - start)
            .abs()
            > tol
        {
            nodes.push((start, self.interpolate(start)));
        }
        for k in first_inside..self.times.len() {
            let t = self.times[k];
            if t > end + tol {
                break;
            }
            nodes.push((t, self.values[k].clone()));
        }
        if nodes.last().is_none_or(|(t, _)| (end - t).abs() > tol) {
            nodes.push((end, self.interpolate(end)));
        }
        nodes
    }
}

/// Diagonal positive weight `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightOperator {
    diagonal: Vec<f64>,
}

impl WeightOperator {
    pub fn new(diagonal: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = diagonal
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::Domain(format!(
                "weight entry {i} must be positive, got {v}"
            )));
        }
        Ok(Self { diagonal })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            diagonal: vec![1.0; dim],
        }
    }

    /// `diag(1, 1/4, 1/9, ...)`.
    pub fn inverse_square(dim: usize) -> Self {
        Self {
            diagonal: (1..=dim).map(|k| 1.0 / (k * k) as f64).collect(),
        }
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }
}

/// Trapezoid-rule Gram operator of `traj` over `[t_start, t_start + window]`.
pub fn gram_operator(traj: &SignalTrajectory, t_start: f64, window: f64) -> Result<DMatrix<f64>> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::Domain(format!("window must be > 0, got {window}")));
    }
    if traj.is_empty() {
        return Err(Error::Range("empty signal trajectory".into()));
    }
    let end = t_start + window;
    let tol = traj.span_tol();
    let (first, last) = (traj.times[0], traj.times[traj.times.len() - 1]);
    if t_start < first - tol || end > last + tol {
        return Err(Error::Range(format!(
            "window [{t_start}, {end}] not covered by samples on [{first}, {last}]"
        )));
    }
    let nodes = traj.window_nodes(t_start, end);
    let dim = traj.dim();
    let mut weights = vec![0.0; nodes.len()];
    for k in 1..nodes.len() {
        let half = 0.5 * (nodes[k].0 - nodes[k - 1].0);
        weights[k - 1] += half;
        weights[k] += half;
    }

    let mut gram = vec![0.0; dim * dim];
    par::for_each_row(&mut gram, dim.max(1), dim * nodes.len(), |i, row| {
        for ((_, g), w) in nodes.iter().zip(&weights) {
            let wi = w * g[i];
            if wi != 0.0 {
                for (r, gj) in row.iter_mut().zip(g) {
                    *r += wi * gj;
                }
            }
        }
    });
    let g = DMatrix::from_row_slice(dim, dim, &gram);
    Ok((&g + g.transpose()) * 0.5)
}

/// `lambda_min(G - kappa P^2)`.
pub fn pe_margin(gram: &DMatrix<f64>, weight: &WeightOperator, kappa: f64) -> Result<f64> {
    let dim = gram.nrows();
    if gram.ncols() != dim {
        return Err(Error::Dimension {
            context: "Gram operator columns",
            expected: dim,
            found: gram.ncols(),
        });
    }
    if weight.dim() != dim {
        return Err(Error::Dimension {
            context: "weight operator",
            expected: dim,
            found: weight.dim(),
        });
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    let scale = gram.amax().max(1.0);
    let asym = (gram - gram.transpose()).amax();
    if asym > ASYMMETRY_TOL * scale {
        return Err(Error::Numeric(format!(
            "Gram operator is not symmetric (max asymmetry {asym:e})"
        )));
    }
    if dim == 0 {
        return Err(Error::Dimension {
            context: "Gram operator",
            expected: 1,
            found: 0,
        });
    }
    let mut shifted = gram.clone();
    for (i, p) in weight.diagonal().iter().enumerate() {
        shifted[(i, i)] -= kappa * p * p;
    }
    let eigen = shifted.symmetric_eigenvalues();
    Ok(eigen.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Margins of all windows starting on the lattice `t0 + k * stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeScan {
    pub entries: Vec<(f64, f64)>,
}

impl PeScan {
    /// Smallest margin over the scan.
    pub fn min_margin(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, m)| m)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn pe_scan(
    traj: &SignalTrajectory,
    window: f64,
    weight: &WeightOperator,
    kappa: f64,
    stride: f64,
) -> Result<PeScan> {
    if !(stride > 0.0 && stride.is_finite()) {
        return Err(Error::Domain(format!("stride must be > 0, got {stride}")));
    }
    if traj.is_empty() {
        return Err(Error::Range("empty signal trajectory".into()));
    }
    let t0 = traj.times[0];
    let last = traj.times[traj.times.len() - 1];
    let tol = traj.span_tol();
    if t0 + window > last + tol {
        return Err(Error::Range(format!(
            "trajectory on [{t0}, {last}] is shorter than one window of {window}"
        )));
    }
    let count = ((last + tol - window - t0) / stride).floor() as usize + 1;
    let starts: Vec<f64> = (0..count).map(|k| t0 + k as f64 * stride).collect();
    let margins = par::map(&starts, |&s| {
        let end = (s + window).min(last);
        gram_operator(traj, s, end - s).and_then(|g| pe_margin(&g, weight, kappa))
    });
    let entries = starts
        .into_iter()
        .zip(margins)
        .map(|(s, m)| m.map(|m| (s, m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PeScan { entries })
}

/// Writes `t_start,margin` rows with 17 significant digits.
pub fn write_pe_scan(path: &Path, scan: &PeScan) -> Result<()> {
    let mut out = String::from("t_start,margin\n");
    for (t, m) in &scan.entries {
        writeln!(out, "{t:.16e},{m:.16e}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_pe_scan(path: &Path) -> Result<PeScan> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let parse = |k: usize| -> Result<f64> {
            record
                .get(k)
                .ok_or_else(|| Error::parse(path, "missing column"))?
                .trim()
                .parse()
                .map_err(|e| Error::parse(path, e))
        };
        entries.push((parse(0)?, parse(1)?));
    }
    Ok(PeScan { entries })
}

/// Writes a signal as `t,g0,g1,...` rows with 17 significant digits.
pub fn write_signal_csv(path: &Path, traj: &SignalTrajectory) -> Result<()> {
    let mut out = String::from("t");
    for k in 0..traj.dim() {
        write!(out, ",g{k}").unwrap();
    }
    out.push('\n');
    for (t, g) in traj.times.iter().zip(&traj.values) {
        write!(out, "{t:.16e}").unwrap();
        for v in g {
            write!(out, ",{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_signal_csv(path: &Path) -> Result<SignalTrajectory> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let mut cells = record.iter().map(|c| {
            c.trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))
        });
        let t = cells
            .next()
            .ok_or_else(|| Error::parse(path, format!("row {} is empty", line + 2)))??;
        times.push(t);
        values.push(cells.collect::<Result<Vec<_>>>()?);
    }
    SignalTrajectory::new(times, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{PI, TAU};

    fn sampled(dt: f64, horizon: f64, g: impl Fn(f64) -> Vec<f64>) -> SignalTrajectory {
        let steps = (horizon / dt).round() as usize;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        let values = times.iter().map(|&t| g(t)).collect();
        SignalTrajectory::new(times, values).unwrap()
    }

    #[test]
    fn zero_signal_has_zero_gram() {
        let traj = sampled(0.1, 5.0, |_| vec![0.0; 3]);
        let g = gram_operator(&traj, 0.0, 5.0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_gram_over_a_period() {
        let traj = sampled(TAU / 2000.0, TAU, |t| vec![t.sin()]);
        let g = gram_operator(&traj, 0.0, TAU).unwrap();
        assert!((g[(0, 0)] - PI).abs() < 1e-4);
    }

    #[test]
    fn two_harmonics_are_orthogonal() {
        let traj = sampled(TAU / 2000.0, TAU, |t| vec![t.sin(), (2.0 * t).sin()]);
        let g = gram_operator(&traj, 0.0, TAU).unwrap();
        assert!((g[(0, 0)] - PI).abs() < 1e-4);
        assert!((g[(1, 1)] - PI).abs() < 1e-4);
        assert!(g[(0, 1)].abs() < 1e-4);
    }

    #[test]
    fn window_between_samples_is_interpolated() {
        // g = 1 constant: Gram equals window length for any placement
        let traj = sampled(0.1, 3.0, |_| vec![1.0]);
        let g = gram_operator(&traj, 0.05, 1.23).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.23, epsilon = 1e-12);
    }

    #[test]
    fn uncovered_window_is_a_range_error() {
        let traj = sampled(0.1, 3.0, |_| vec![1.0]);
        assert!(matches!(
            gram_operator(&traj, 2.5, 1.0),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            gram_operator(&traj, -0.5, 1.0),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn margin_examples() {
        let p = WeightOperator::new(vec![1.0, 2.0, 0.5]).unwrap();
        let zero = DMatrix::<f64>::zeros(3, 3);
        // smallest eigenvalue of -kappa P^2 sits at the largest weight
        assert_relative_eq!(pe_margin(&zero, &p, 2.0).unwrap(), -2.0 * 4.0);
        let id = DMatrix::<f64>::identity(4, 4);
        assert_relative_eq!(
            pe_margin(&id, &WeightOperator::identity(4), 0.5).unwrap(),
            0.5,
            epsilon = 1e-14
        );
    }

    #[test]
    fn asymmetric_gram_is_rejected() {
        let mut g = DMatrix::<f64>::identity(2, 2);
        g[(0, 1)] = 1e-3;
        assert!(matches!(
            pe_margin(&g, &WeightOperator::identity(2), 1.0),
            Err(Error::Numeric(_))
        ));
        assert!(pe_margin(&DMatrix::identity(2, 2), &WeightOperator::identity(3), 1.0).is_err());
        assert!(WeightOperator::new(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn scan_of_zero_signal_is_negative_everywhere() {
        let traj = sampled(0.1, 10.0, |_| vec![0.0, 0.0]);
        let scan = pe_scan(&traj, 2.0, &WeightOperator::identity(2), 0.1, 1.0).unwrap();
        assert_eq!(scan.entries.len(), 9);
        assert!(scan.entries.iter().all(|&(_, m)| m < 0.0));
    }

    #[test]
    fn single_window_scan_matches_margin() {
        let traj = sampled(TAU / 600.0, TAU, |t| vec![t.sin(), t.cos()]);
        let p = WeightOperator::identity(2);
        let scan = pe_scan(&traj, TAU, &p, 1.0, 0.5).unwrap();
        assert_eq!(scan.entries.len(), 1);
        let direct = pe_margin(&gram_operator(&traj, 0.0, TAU).unwrap(), &p, 1.0).unwrap();
        assert_eq!(scan.entries[0], (0.0, direct));
        assert!(pe_scan(&traj, 10.0, &p, 1.0, 0.5).is_err());
    }

    #[test]
    fn field_signal_is_scaled_to_orthonormal_coordinates() {
        let grid = CircleGrid::unit_circle(8).unwrap();
        let pairs = vec![(vec![1.0; 8], vec![0.0; 8]); 2];
        let traj = SignalTrajectory::from_fields(vec![0.0, 1.0], &pairs, &grid).unwrap();
        assert_eq!(traj.dim(), 16);
        // ||g||^2 = ||1||_L2^2 = 2 pi, and G over one unit of time has trace 2 pi
        let g = gram_operator(&traj, 0.0, 1.0).unwrap();
        assert_relative_eq!(g.trace(), TAU, epsilon = 1e-12);
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let traj = sampled(0.25, 1.0, |t| vec![t, -t * t / 3.0]);
        let path = dir.path().join("sig.csv");
        write_signal_csv(&path, &traj).unwrap();
        assert_eq!(read_signal_csv(&path).unwrap(), traj);

        let scan = PeScan {
            entries: vec![(0.0, -1.0 / 3.0), (0.5, 2.0f64.sqrt())],
        };
        let path = dir.path().join("scan.csv");
        write_pe_scan(&path, &scan).unwrap();
        assert_eq!(read_pe_scan(&path).unwrap(), scan);
    }
}
