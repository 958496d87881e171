//! Uniform grids, dense complex matrices, quadrature and the Δ-Fourier
//! transform shared by every solver.

use std::ops::{Add, Index, IndexMut, Mul};

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Smallest grid accepted by [`GridSpec::new`].
pub const MIN_GRID_POINTS: usize = 8;

/// Uniform 1-D grid `x_i = x_min + i dx`, `dx = (x_max - x_min) / (n_points - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n_points: usize,
    x_min: f64,
    x_max: f64,
}

impl GridSpec {
    pub fn new(n_points: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n_points < MIN_GRID_POINTS {
            return Err(Error::Dimension(format!(
                "grid needs at least {MIN_GRID_POINTS} points, got {n_points}"
            )));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::Domain(format!(
                "grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        Ok(Self {
            n_points,
            x_min,
            x_max,
        })
    }

    /// Symmetric grid on `[-half_width, half_width]`.
    pub fn symmetric(n_points: usize, half_width: f64) -> Result<Self> {
        Self::new(n_points, -half_width, half_width)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weight of point `i` (`dx` in the bulk, `dx/2` at the ends).
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n_points {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Number of points in each 5% edge band used by the edge-mass monitor.
    pub fn edge_band(&self) -> usize {
        ((0.05 * self.n_points as f64).ceil() as usize).max(1)
    }

    /// Fractional index of `x`, clamped to the grid.
    pub(crate) fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.x_min) / self.dx()).clamp(0.0, (self.n_points - 1) as f64);
        let i = (s.floor() as usize).min(self.n_points - 2);
        (i, s - i as f64)
    }
}

/// Trapezoid-rule integral of samples taken on `grid`.
pub fn trapezoid_integrate<T>(values: &[T], grid: &GridSpec) -> Result<T>
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T> + Zero,
{
    if values.len() != grid.n_points() {
        return Err(Error::Dimension(format!(
            "{} samples on a {}-point grid",
            values.len(),
            grid.n_points()
        )));
    }
    Ok(values
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &v)| acc + v * grid.weight(i)))
}

/// Dense row-major complex matrix with fixed dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(Array2<C64>);

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(Array2::zeros((rows, cols)))
    }

    pub fn identity(n: usize) -> Self {
        Self(Array2::eye(n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut((usize, usize)) -> C64) -> Self {
        Self(Array2::from_shape_fn((rows, cols), f))
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |(i, j)| if i == j { diag[i] } else { C64::new(0.0, 0.0) })
    }

    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<C64>) -> Result<Self> {
        Array2::from_shape_vec((rows, cols), entries)
            .map(Self)
            .map_err(|e| Error::Dimension(e.to_string()))
    }

    pub fn from_array(a: Array2<C64>) -> Self {
        Self(a)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<C64> {
        self.0.get((i, j)).copied()
    }

    pub fn view(&self) -> ArrayView2<'_, C64> {
        self.0.view()
    }

    /// Mutable view; entries may change, the shape may not.
    pub fn view_mut(&mut self) -> ArrayViewMut2<'_, C64> {
        self.0.view_mut()
    }

    pub fn into_array(self) -> Array2<C64> {
        self.0
    }

    /// Row-major entries.
    pub fn iter(&self) -> impl Iterator<Item = &C64> {
        self.0.iter()
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols() != other.rows() {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        Ok(Self(self.0.dot(&other.0)))
    }

    pub fn mul_vec(&self, v: &[C64]) -> Result<Vec<C64>> {
        if self.cols() != v.len() {
            return Err(Error::Dimension(format!(
                "cannot apply {}x{} matrix to vector of length {}",
                self.rows(),
                self.cols(),
                v.len()
            )));
        }
        Ok(self
            .0
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn conj_transpose(&self) -> ComplexMatrix {
        Self(self.0.t().mapv(|z| z.conj()))
    }

    pub fn conj(&self) -> ComplexMatrix {
        Self(self.0.mapv(|z| z.conj()))
    }

    pub fn scale(&self, s: C64) -> ComplexMatrix {
        Self(&self.0 * s)
    }

    pub fn add(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_same_shape(other)?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_same_shape(other)?;
        Ok(Self(&self.0 - &other.0))
    }

    /// Entrywise (Hadamard) product.
    pub fn hadamard(&self, other: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_same_shape(other)?;
        Ok(Self(&self.0 * &other.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }

    /// Max-abs entry of `m - m^dagger`.
    pub fn hermiticity_residue(&self) -> f64 {
        let n = self.rows().min(self.cols());
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Sum of the diagonal.
    pub fn trace(&self) -> C64 {
        self.0.diag().sum()
    }

    fn check_same_shape(&self, other: &ComplexMatrix) -> Result<()> {
        if self.0.dim() != other.0.dim() {
            return Err(Error::Dimension(format!(
                "shapes {:?} and {:?} differ",
                self.0.dim(),
                other.0.dim()
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

/// `(m + m^dagger) / 2`.
pub fn hermitize(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "hermitize needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    Ok(out)
}

/// Row-wise Fourier transform over the separation variable:
/// `out(q, p) = sum_k w_k exp(-i p Δ_k / hbar) field(q, Δ_k)` with trapezoid
/// weights `w_k` on `delta_grid`.
///
/// The normalization constant is 1, so a unit-integral spike at Δ = 0 maps to
/// the constant 1 for every p. Callers that need a probability density in
/// `(q, p)` divide by `2 pi hbar`.
pub fn fourier_row_transform(
    field: &ComplexMatrix,
    delta_grid: &GridSpec,
    p_grid: &GridSpec,
    hbar: f64,
) -> Result<ComplexMatrix> {
    if field.cols() != delta_grid.n_points() {
        return Err(Error::Dimension(format!(
            "field has {} columns but the Δ grid has {} points",
            field.cols(),
            delta_grid.n_points()
        )));
    }
    let phases = ComplexMatrix::from_fn(delta_grid.n_points(), p_grid.n_points(), |(k, j)| {
        let arg = -p_grid.x(j) * delta_grid.x(k) / hbar;
        C64::from_polar(delta_grid.weight(k), arg)
    });
    field.matmul(&phases)
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension("eigenvalues need a square matrix".into()));
    }
    let n = m.rows();
    let h = hermitize(m)?;
    let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| h[(i, j)]);
    let mut ev: Vec<f64> = dm.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Row-block parallel iteration helper: applies `f(row_index, row)` to every row.
pub(crate) fn for_each_row_mut(
    a: &mut Array2<C64>,
    f: impl Fn(usize, ndarray::ArrayViewMut1<'_, C64>) + Sync + Send,
) {
    #[cfg(feature = "parallel")]
    {
        use ndarray::parallel::prelude::*;
        a.axis_iter_mut(ndarray::Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, row) in a.axis_iter_mut(ndarray::Axis(0)).enumerate() {
            f(i, row);
        }
    }
}
