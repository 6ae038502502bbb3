//! Uniform discretization of the circle and the Hilbert-space calculus on it.
//!
//! Functions on the circle are sampled at the nodes `r_i = i * dr`. Every
//! integral is the rectangle rule with weight `dr`, which is spectrally
//! accurate for smooth periodic integrands. Under that rule:
//!
//! * `<f, g> = sum_i f_i g_i dr`
//! * `(W z)_i = sum_j W[i, j] z_j dr` for a kernel `W[i, j] = w(r_i, r_j)`
//! * `||W||_HS^2 = sum_ij W[i, j]^2 dr^2`
//!
//! so the discrete Hilbert-Schmidt norm of an integral operator is exactly the
//! discrete L2 norm of its kernel on the torus.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::par;

/// Relative tolerance on `length / spacing` being an integer.
const SPACING_RATIO_TOL: f64 = 1e-9;

/// A uniform grid on a circle of circumference `length`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleGrid {
    n_points: usize,
    spacing: f64,
    length: f64,
    coords: Vec<f64>,
}

impl CircleGrid {
    /// Builds a grid with `n_points` nodes; the spacing is derived so the
    /// circle closes exactly.
    pub fn new(n_points: usize, length: f64) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Config(format!(
                "grid length must be positive and finite, got {length}"
            )));
        }
        let spacing = length / n_points as f64;
        let coords = (0..n_points).map(|i| i as f64 * spacing).collect();
        Ok(Self {
            n_points,
            spacing,
            length,
            coords,
        })
    }

    /// Builds a grid from a target spacing. `length / spacing` has to be an
    /// integer (to a relative 1e-9) of at least 2.
    pub fn from_spacing(spacing: f64, length: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Config(format!(
                "grid spacing must be positive and finite, got {spacing}"
            )));
        }
        let ratio = length / spacing;
        let n = ratio.round();
        if (ratio - n).abs() > SPACING_RATIO_TOL * ratio.max(1.0) || n < 2.0 {
            return Err(Error::Config(format!(
                "spacing {spacing} does not divide length {length} into an integer number (>= 2) of cells (ratio {ratio})"
            )));
        }
        Self::new(n as usize, length)
    }

    /// The grid used for the reference experiment: 126 nodes on `[0, 2*pi)`.
    pub fn unit_circle(n_points: usize) -> Result<Self> {
        Self::new(n_points, TAU)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Node spacing `dr`, also the quadrature weight.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Index of the node closest to `r` (taken modulo the circumference).
    pub fn nearest_index(&self, r: f64) -> usize {
        let idx = (r.rem_euclid(self.length) / self.spacing).round() as usize;
        idx % self.n_points
    }
}

/// A real function sampled on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector(Vec<f64>);

impl FieldVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "field entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(grid: &CircleGrid, value: f64) -> Self {
        Self(vec![value; grid.n_points()])
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: &CircleGrid, f: impl Fn(f64) -> f64) -> Self {
        Self(grid.coords().iter().map(|&r| f(r)).collect())
    }

    /// Indicator of a single node.
    pub fn indicator(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Self(v)
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Entrywise difference `self - other`.
    pub fn sub(&self, other: &FieldVector) -> Result<FieldVector> {
        check_len("field difference", self.len(), other.len())?;
        Ok(Self(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }
}

/// A kernel `w(r_i, r_j)` sampled on the grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl KernelMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        check_len("kernel entries", n * n, entries.len())?;
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "kernel entry ({}, {}) is not finite",
                k / n,
                k % n
            )));
        }
        Ok(Self { n, entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        Self { n, entries }
    }

    /// The kernel `delta_ij / dr`, whose integral operator is the identity.
    pub fn identity(grid: &CircleGrid) -> Self {
        let inv = 1.0 / grid.spacing();
        Self::from_fn(grid.n_points(), |i, j| if i == j { inv } else { 0.0 })
    }

    pub(crate) fn from_vec_unchecked(n: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), n * n);
        Self { n, entries }
    }

    /// Side length.
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            n: self.n,
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn sub(&self, other: &KernelMatrix) -> Result<KernelMatrix> {
        check_len("kernel difference", self.n, other.n)?;
        Ok(Self {
            n: self.n,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Kernel of `W P` for a diagonal operator `P = diag(weights)`:
    /// column `j` is scaled by `weights[j]`.
    pub fn right_scaled(&self, weights: &[f64]) -> Result<KernelMatrix> {
        check_len("kernel column weights", self.n, weights.len())?;
        Ok(Self::from_fn(self.n, |i, j| self.get(i, j) * weights[j]))
    }

    pub(crate) fn check_grid(&self, grid: &CircleGrid) -> Result<()> {
        check_len("kernel size", grid.n_points(), self.n)
    }
}

fn check_field(grid: &CircleGrid, f: &FieldVector) -> Result<()> {
    check_len("field length", grid.n_points(), f.len())
}

/// `sum_i a_i b_i` in index order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out_i = scale * sum_j w[i, j] z_j`, rows computed independently.
pub(crate) fn matvec_into(w: &[f64], z: &[f64], scale: f64, out: &mut [f64]) {
    let n = z.len();
    debug_assert_eq!(w.len(), n * n);
    par::for_each_row(out, 1, n, |i, o| {
        o[0] = scale * dot(&w[i * n..(i + 1) * n], z);
    });
}

/// `out[i, j] = scale * v_i w_j`.
pub(crate) fn outer_into(v: &[f64], w: &[f64], scale: f64, out: &mut [f64]) {
    let n = w.len();
    debug_assert_eq!(out.len(), v.len() * n);
    par::for_each_row(out, n, n, |i, row| {
        let vi = scale * v[i];
        for (o, wj) in row.iter_mut().zip(w) {
            *o = vi * wj;
        }
    });
}

/// L2 inner product on the circle.
pub fn l2_inner_product(f: &FieldVector, g: &FieldVector, grid: &CircleGrid) -> Result<f64> {
    check_field(grid, f)?;
    check_field(grid, g)?;
    Ok(dot(f.values(), g.values()) * grid.spacing())
}

pub fn l2_norm(f: &FieldVector, grid: &CircleGrid) -> Result<f64> {
    Ok(l2_inner_product(f, f, grid)?.sqrt())
}

/// Applies the integral operator with kernel `w` to `z`.
pub fn apply_kernel(w: &KernelMatrix, z: &FieldVector, grid: &CircleGrid) -> Result<FieldVector> {
    w.check_grid(grid)?;
    check_field(grid, z)?;
    let mut out = vec![0.0; grid.n_points()];
    matvec_into(w.entries(), z.values(), grid.spacing(), &mut out);
    Ok(FieldVector::from_vec_unchecked(out))
}

/// Hilbert-Schmidt norm of the integral operator, i.e. the L2 norm of its
/// kernel over the torus.
pub fn hs_norm(w: &KernelMatrix, grid: &CircleGrid) -> Result<f64> {
    w.check_grid(grid)?;
    Ok(hs_norm_unchecked(w.entries(), grid.spacing()))
}

pub(crate) fn hs_norm_unchecked(entries: &[f64], spacing: f64) -> f64 {
    entries.iter().map(|v| v * v).sum::<f64>().sqrt() * spacing
}

/// Settings for the power iteration behind [`operator_norm`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    /// Relative eigen-residual of the leading Ritz pair at which iteration
    /// stops.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 10_000,
        }
    }
}

/// Initial number of vectors iterated together.
const BLOCK: usize = 4;

/// Iterations without convergence after which the block doubles.
const GROW_AFTER: usize = 64;

/// Seed of the start block.
const START_SEED: u64 = 0x5eed;

/// Operator norm of the integral operator with kernel `w`.
///
/// With uniform weights the discrete L2 operator norm is the largest singular
/// value of `M = w * dr`, the square root of the top eigenvalue of `M^T M`.
/// It is computed by block power iteration on `M^T M` with a Rayleigh-Ritz
/// step, starting from a block of four vectors. Iteration stops when the
/// leading Ritz pair `(theta, u)` satisfies `||M^T M u - theta u|| <= tol * theta`.
///
/// A single vector is not enough here. Circulant kernels have their singular
/// values in equal pairs, and Gaussian kernels often have the top few close
/// together; plain power iteration then converges at the ratio of nearly
/// equal values. The Ritz step separates close values inside the block, so
/// convergence depends on the first value outside it. When that value is
/// also close, as for narrow kernels on coarse grids where the spectrum is
/// almost flat, the block doubles every 64 iterations. At full width the Ritz
/// step is an exact eigensolve.
///
/// The start block is pseudo-random with a fixed seed. Structured starts
/// fail: all-ones is an eigenvector of `M^T M` for every circulant kernel.
pub fn operator_norm(w: &KernelMatrix, grid: &CircleGrid, opts: PowerIteration) -> Result<f64> {
    w.check_grid(grid)?;
    if !(opts.tol > 0.0) || opts.max_iterations == 0 {
        return Err(Error::Domain(format!(
            "power iteration needs tol > 0 and at least one iteration, got {opts:?}"
        )));
    }
    let n = grid.n_points();
    if w.entries().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let m = DMatrix::from_row_slice(n, n, w.entries()) * grid.spacing();
    block_power_iterate(&m, opts).map(f64::sqrt)
}

/// Top eigenvalue of `M^T M` by subspace iteration. Returns the Rayleigh-Ritz
/// estimate once its residual is below `tol` relative to it.
fn block_power_iterate(m: &DMatrix<f64>, opts: PowerIteration) -> Result<f64> {
    let n = m.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut random_block =
        |cols: usize| DMatrix::from_fn(n, cols, |_, _| rng.random_range(-1.0..1.0));
    let mut q = random_block(BLOCK.min(n)).qr().q();
    let mut previous = f64::NAN;
    let mut theta = f64::NAN;
    for iteration in 1..=opts.max_iterations {
        let z = m.tr_mul(&(m * &q));
        let h = q.tr_mul(&z);
        let h = (&h + h.transpose()) * 0.5;
        let eig = h.symmetric_eigen();
        let top = eig.eigenvalues.imax();
        previous = theta;
        theta = eig.eigenvalues[top];
        if !theta.is_finite() {
            return Err(Error::Numeric("power iteration overflowed".into()));
        }
        if theta <= 0.0 {
            // The block lies in the null space of M. Its largest row r is a
            // way out: (M r)_j = ||r||^2 > 0 for the row index j.
            let j = (0..m.nrows())
                .max_by(|&a, &b| m.row(a).norm().total_cmp(&m.row(b).norm()))
                .unwrap();
            q.set_column(0, &m.row(j).transpose());
            q = q.qr().q();
            continue;
        }
        let y = eig.eigenvectors.column(top);
        let residual = (&z * y - (&q * y) * theta).norm();
        if residual <= opts.tol * theta {
            return Ok(theta);
        }
        let next = z * eig.eigenvectors;
        let width = next.ncols();
        q = if iteration % GROW_AFTER == 0 && width < n {
            let extra = random_block((2 * width).min(n) - width);
            let mut wider = DMatrix::zeros(n, width + extra.ncols());
            wider.columns_mut(0, width).copy_from(&next);
            wider.columns_mut(width, extra.ncols()).copy_from(&extra);
            wider.qr().q()
        } else {
            next.qr().q()
        };
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        previous: previous.sqrt(),
        last: theta.sqrt(),
    })
}

/// The kernel of `v w*`: entries `v_i w_j`.
pub fn outer_product(v: &FieldVector, w: &FieldVector) -> Result<KernelMatrix> {
    check_len("outer product", v.len(), w.len())?;
    let n = v.len();
    let mut out = vec![0.0; n * n];
    outer_into(v.values(), w.values(), 1.0, &mut out);
    Ok(KernelMatrix::from_vec_unchecked(n, out))
}

/// Arc-length distance between two points of a circle of circumference `length`.
pub fn geodesic_distance(r: f64, r_prime: f64, length: f64) -> Result<f64> {
    for x in [r, r_prime] {
        if !(0.0..length).contains(&x) {
            return Err(Error::Domain(format!(
                "coordinate {x} outside [0, {length})"
            )));
        }
    }
    Ok(wrapped_distance(r, r_prime, length))
}

fn wrapped_distance(r: f64, r_prime: f64, length: f64) -> f64 {
    let d = (r - r_prime).abs();
    d.min(length - d)
}

/// Gaussian connectivity kernel `omega * g / ||g||` with
/// `g(r, r') = exp(-sigma * d(r, r')^2)`, `d` the geodesic distance and
/// `||g||` the discrete L2 norm on the torus, so `hs_norm` of the result is
/// `|omega|` at every resolution.
pub fn gaussian_kernel(grid: &CircleGrid, sigma: f64, omega: f64) -> Result<KernelMatrix> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
    }
    if !omega.is_finite() {
        return Err(Error::Domain(format!("omega must be finite, got {omega}")));
    }
    // The geodesic distance between nodes i and j is the coordinate of node
    // min(k, n - k) with k = |i - j|. Taking it from the index offset keeps the
    // result exactly symmetric and circulant instead of only up to rounding.
    let coords = grid.coords();
    let n = grid.n_points();
    let raw = KernelMatrix::from_fn(n, |i, j| {
        let k = i.abs_diff(j);
        let d = coords[k.min(n - k)];
        (-sigma * d * d).exp()
    });
    let norm = hs_norm_unchecked(raw.entries(), grid.spacing());
    Ok(raw.scaled(omega / norm))
}

/// Writes a kernel as dense CSV: the first row holds the `r'` coordinates,
/// the first column the `r` coordinates, 17 significant digits throughout.
pub fn write_kernel_csv(path: &Path, w: &KernelMatrix, grid: &CircleGrid) -> Result<()> {
    w.check_grid(grid)?;
    let n = grid.n_points();
    let mut out = String::with_capacity((n + 1) * (n + 1) * 24);
    out.push('r');
    for r in grid.coords() {
        write!(out, ",{r:.16e}").unwrap();
    }
    out.push('\n');
    for (i, r) in grid.coords().iter().enumerate() {
        write!(out, "{r:.16e}").unwrap();
        for v in w.row(i) {
            write!(out, ",{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a kernel written by [`write_kernel_csv`]; returns the node
/// coordinates and the kernel.
pub fn read_kernel_csv(path: &Path) -> Result<(Vec<f64>, KernelMatrix)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut rows = reader.records();
    let header = rows
        .next()
        .ok_or_else(|| Error::parse(path, "empty kernel file"))?
        .map_err(|e| Error::parse(path, e))?;
    let coords = header
        .iter()
        .skip(1)
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::parse(path, format!("bad coordinate in header: {e}")))?;
    let n = coords.len();
    let mut entries = Vec::with_capacity(n * n);
    for (line, record) in rows.enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        if record.len() != n + 1 {
            return Err(Error::parse(
                path,
                format!(
                    "row {} has {} cells, expected {}",
                    line + 2,
                    record.len(),
                    n + 1
                ),
            ));
        }
        for cell in record.iter().skip(1) {
            entries.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))?,
            );
        }
    }
    if entries.len() != n * n {
        return Err(Error::parse(
            path,
            format!(
                "expected {n} kernel rows, found {}",
                entries.len() / n.max(1)
            ),
        ));
    }
    Ok((coords, KernelMatrix::new(n, entries)?))
}
