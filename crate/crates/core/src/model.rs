//! Physical parameters, potentials, the 1-D collapse kernel and the
//! localisation damping rate, plus the finite-difference Hamiltonian that
//! every solver shares.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, GridSpec, C64};

/// External potential V(x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Potential {
    Free,
    /// `V = m omega^2 x^2 / 2`.
    Harmonic { omega: f64 },
    /// Samples on a uniform table `[x_min, x_max]`, linearly interpolated.
    Tabulated {
        x_min: f64,
        x_max: f64,
        values: Vec<f64>,
    },
}

impl Potential {
    pub fn validate(&self) -> Result<()> {
        match self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } => {
                if *omega > 0.0 && omega.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config("potential.omega", format!("must be > 0, got {omega}")))
                }
            }
            Potential::Tabulated {
                x_min,
                x_max,
                values,
            } => {
                if values.len() < 2 {
                    return Err(Error::config("potential.values", "need at least two samples"));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("potential.values", "samples must be finite"));
                }
                if !(x_max > x_min) {
                    return Err(Error::config(
                        "potential.x_max",
                        format!("table bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// V(x); `mass` is needed by the harmonic case.
    pub fn value(&self, x: f64, mass: f64) -> Result<f64> {
        match self {
            Potential::Free => Ok(0.0),
            Potential::Harmonic { omega } => Ok(0.5 * mass * omega * omega * x * x),
            Potential::Tabulated {
                x_min,
                x_max,
                values,
            } => {
                // tolerate round-off at the table ends
                let slack = 1e-12 * (x_max - x_min);
                if x < x_min - slack || x > x_max + slack {
                    return Err(Error::Domain(format!(
                        "x = {x} outside tabulated potential range [{x_min}, {x_max}]"
                    )));
                }
                let h = (x_max - x_min) / (values.len() - 1) as f64;
                let s = ((x - x_min) / h).clamp(0.0, (values.len() - 1) as f64);
                let i = (s.floor() as usize).min(values.len() - 2);
                let t = s - i as f64;
                Ok((1.0 - t) * values[i] + t * values[i + 1])
            }
        }
    }

    /// dV/dx, used by the classical characteristics.
    pub fn gradient(&self, x: f64, mass: f64) -> Result<f64> {
        match self {
            Potential::Free => Ok(0.0),
            Potential::Harmonic { omega } => Ok(mass * omega * omega * x),
            Potential::Tabulated {
                x_min,
                x_max,
                values,
            } => {
                self.value(x, mass)?;
                let h = (x_max - x_min) / (values.len() - 1) as f64;
                let s = ((x - x_min) / h).clamp(0.0, (values.len() - 1) as f64);
                let i = (s.floor() as usize).min(values.len() - 2);
                Ok((values[i + 1] - values[i]) / h)
            }
        }
    }
}

/// Convenience wrapper matching the operation name used in the docs.
pub fn potential_value(v: &Potential, x: f64, mass: f64) -> Result<f64> {
    v.value(x, mass)
}

/// Physical constants of a run.
///
/// `lambda` is the collapse rate of the simulated particle (already
/// multiplied by any nucleon count). `kinetic = false` drops the kinetic
/// term from H, the infinite-mass limit in which the localisation dynamics
/// can be solved in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrwParams {
    pub lambda: f64,
    pub r_c: f64,
    pub mass: f64,
    pub hbar: f64,
    pub potential: Potential,
    pub kinetic: bool,
}

impl Default for GrwParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            r_c: 1.0,
            mass: 1.0,
            hbar: 1.0,
            potential: Potential::Free,
            kinetic: true,
        }
    }
}

impl GrwParams {
    pub fn new(lambda: f64, r_c: f64, mass: f64, hbar: f64, potential: Potential) -> Result<Self> {
        let p = Self {
            lambda,
            r_c,
            mass,
            hbar,
            potential,
            kinetic: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_potential(mut self, potential: Potential) -> Self {
        self.potential = potential;
        self
    }

    pub fn without_kinetic(mut self) -> Self {
        self.kinetic = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let check = |key: &str, ok: bool, v: f64, rule: &str| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be {rule}, got {v}")))
            }
        };
        check("lambda", self.lambda >= 0.0, self.lambda, ">= 0")?;
        check("r_c", self.r_c > 0.0, self.r_c, "> 0")?;
        check("mass", self.mass > 0.0, self.mass, "> 0")?;
        check("hbar", self.hbar > 0.0, self.hbar, "> 0")?;
        self.potential.validate()
    }

    pub fn collapse_kernel(&self) -> CollapseKernel {
        CollapseKernel::new(self.r_c)
    }
}

/// Position representative l(x, r) of the 1-D localisation operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseKernel {
    r_c: f64,
    normalization: f64,
}

impl CollapseKernel {
    /// The 1-D normalization `(pi r_c^2)^(-1/4)` makes `∫ l(x, r)^2 dr = 1`.
    pub fn new(r_c: f64) -> Self {
        Self {
            r_c,
            normalization: (PI * r_c * r_c).powf(-0.25),
        }
    }

    pub fn r_c(&self) -> f64 {
        self.r_c
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn value(&self, x: f64, r: f64) -> f64 {
        self.normalization * (-(x - r).powi(2) / (2.0 * self.r_c * self.r_c)).exp()
    }
}

pub fn collapse_kernel_value(k: &CollapseKernel, x: f64, r: f64) -> f64 {
    k.value(x, r)
}

/// `∫ l(x, r) l(y, r) dr = exp(-(x - y)^2 / (4 r_c^2))`.
pub fn gaussian_overlap(r_c: f64, x: f64, y: f64) -> f64 {
    (-(x - y).powi(2) / (4.0 * r_c * r_c)).exp()
}

/// Decay rate of the coherence ρ(x, y): `lambda (1 - exp(-(x - y)^2 / 4 r_c^2))`.
pub fn damping_rate(params: &GrwParams, x: f64, y: f64) -> f64 {
    // -expm1 keeps full relative precision for |x - y| << r_c
    -params.lambda * (-(x - y).powi(2) / (4.0 * params.r_c * params.r_c)).exp_m1()
}

/// Matrix of damping rates on `grid`, entry (i, j) = damping_rate(x_i, x_j).
pub fn damping_matrix(grid: &GridSpec, params: &GrwParams) -> Vec<f64> {
    let n = grid.n_points();
    let xs = grid.points();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = damping_rate(params, xs[i], xs[j]);
        }
    }
    out
}

/// Real symmetric tridiagonal H = -(hbar^2 / 2m) D2 + V on a grid, with D2 the
/// three-point Laplacian and zero values assumed outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    diag: Vec<f64>,
    off: f64,
    hbar: f64,
}

impl Hamiltonian {
    pub fn new(grid: &GridSpec, params: &GrwParams) -> Result<Self> {
        params.validate()?;
        let dx = grid.dx();
        let kin = if params.kinetic {
            params.hbar * params.hbar / (2.0 * params.mass * dx * dx)
        } else {
            0.0
        };
        let diag = grid
            .points()
            .iter()
            .map(|&x| Ok(2.0 * kin + params.potential.value(x, params.mass)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            diag,
            off: -kin,
            hbar: params.hbar,
        })
    }

    /// Builds H directly from its tridiagonal parts.
    pub fn from_parts(diag: Vec<f64>, off: f64, hbar: f64) -> Self {
        Self { diag, off, hbar }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diag(&self) -> f64 {
        self.off
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// `H v`.
    pub fn apply(&self, v: &[C64], out: &mut [C64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = v[i] * self.diag[i];
            if i > 0 {
                acc += v[i - 1] * self.off;
            }
            if i + 1 < n {
                acc += v[i + 1] * self.off;
            }
            out[i] = acc;
        }
    }

    pub fn to_dense(&self) -> ComplexMatrix {
        let n = self.dim();
        ComplexMatrix::from_fn(n, n, |(i, j)| {
            if i == j {
                C64::new(self.diag[i], 0.0)
            } else if i.abs_diff(j) == 1 {
                C64::new(self.off, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        let n = self.dim();
        let m = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i.abs_diff(j) == 1 {
                self.off
            } else {
                0.0
            }
        });
        m.symmetric_eigen()
    }

    /// Exact `exp(-i t H / hbar)` through the eigendecomposition of H.
    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        let eig = self.eigen();
        let n = self.dim();
        let q = &eig.eigenvectors;
        let phases: Vec<C64> = eig
            .eigenvalues
            .iter()
            .map(|&e| C64::from_polar(1.0, -e * t / self.hbar))
            .collect();
        let left = ComplexMatrix::from_fn(n, n, |(i, k)| phases[k] * q[(i, k)]);
        let qt = ComplexMatrix::from_fn(n, n, |(k, j)| C64::new(q[(j, k)], 0.0));
        left.matmul(&qt).expect("square factors")
    }
}
