//! Path-integral stepping: each step sandwiches ρ between short-time
//! propagators, `ρ' = (K ρ K†) ∘ F`, with the collapse factor
//! `F(x, y) = (1 - lambda eps) + lambda eps exp(-(x - y)^2 / 4 r_c^2)`.
//!
//! Two kernels are available. [`KernelForm::Lattice`] (default) is the exact
//! short-time propagator of the finite-difference kinetic operator with the
//! midpoint potential phase. On smooth states it acts like the free-particle
//! chirp, and it stays well defined for any `eps`. [`KernelForm::SampledChirp`]
//! samples the continuum Feynman kernel directly and is only usable while
//! `m dx^2 / (2 hbar eps) <= pi`; outside that window its phase aliases.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master::DensityField;
use crate::model::{gaussian_overlap, GrwParams, Hamiltonian};
use crate::numerics::{hermitize, ComplexMatrix, GridSpec, C64, I};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelForm {
    #[default]
    Lattice,
    SampledChirp,
}

#[derive(Debug, Clone)]
pub struct ShortTimeKernel {
    grid: GridSpec,
    epsilon: f64,
    form: KernelForm,
    k: ComplexMatrix,
    k_dag: ComplexMatrix,
    /// Set when K is diagonal (no kinetic term), so steps avoid matrix products.
    diag: Option<Vec<C64>>,
}

impl ShortTimeKernel {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn form(&self) -> KernelForm {
        self.form
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.k
    }

    pub fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.k.mul_vec(v)
    }
}

/// Smallest step for which the sampled chirp resolves its phase on `grid`.
pub fn min_chirp_epsilon(grid: &GridSpec, params: &GrwParams) -> f64 {
    params.mass * grid.dx() * grid.dx() / (2.0 * PI * params.hbar)
}

pub fn build_kernel(grid: &GridSpec, params: &GrwParams, epsilon: f64) -> Result<ShortTimeKernel> {
    build_kernel_with(grid, params, epsilon, KernelForm::Lattice)
}

pub fn build_kernel_with(
    grid: &GridSpec,
    params: &GrwParams,
    epsilon: f64,
    form: KernelForm,
) -> Result<ShortTimeKernel> {
    params.validate()?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::config("epsilon", format!("must be > 0, got {epsilon}")));
    }
    let n = grid.n_points();
    let xs = grid.points();
    let hbar = params.hbar;
    let mid_phase = |i: usize, j: usize| -> Result<C64> {
        let v = params.potential.value(0.5 * (xs[i] + xs[j]), params.mass)?;
        Ok(C64::from_polar(1.0, -epsilon * v / hbar))
    };

    if !params.kinetic {
        let diag = (0..n).map(|i| mid_phase(i, i)).collect::<Result<Vec<_>>>()?;
        let k = ComplexMatrix::from_diag(&diag);
        return Ok(ShortTimeKernel {
            grid: grid.clone(),
            epsilon,
            form,
            k_dag: k.conj_transpose(),
            k,
            diag: Some(diag),
        });
    }

    let mut phases = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            phases[(i, j)] = mid_phase(i, j)?;
        }
    }

    let k = match form {
        KernelForm::Lattice => {
            let kinetic = GrwParams {
                potential: crate::model::Potential::Free,
                ..params.clone()
            };
            let t = Hamiltonian::new(grid, &kinetic)?.propagator(epsilon);
            ComplexMatrix::from_array(t.into_array() * &phases)
        }
        KernelForm::SampledChirp => {
            let ratio = params.mass * grid.dx() * grid.dx() / (2.0 * hbar * epsilon);
            if ratio > PI {
                return Err(Error::SamplingBound {
                    ratio,
                    min_epsilon: min_chirp_epsilon(grid, params),
                });
            }
            let m = params.mass;
            let pref = (C64::new(m, 0.0) / (2.0 * PI * hbar * epsilon * I)).sqrt() * grid.dx();
            ComplexMatrix::from_fn(n, n, |(i, j)| {
                let kin = m * (xs[i] - xs[j]).powi(2) / (2.0 * epsilon);
                pref * C64::from_polar(1.0, kin / hbar) * phases[(i, j)]
            })
        }
    };
    Ok(ShortTimeKernel {
        grid: grid.clone(),
        epsilon,
        form,
        k_dag: k.conj_transpose(),
        k,
        diag: None,
    })
}

/// Per-step collapse factor on the grid.
#[derive(Debug, Clone)]
pub struct CollapseFactor {
    grid: GridSpec,
    epsilon: f64,
    lambda: f64,
    r_c: f64,
    values: Array2<f64>,
}

impl CollapseFactor {
    pub fn new(grid: &GridSpec, params: &GrwParams, epsilon: f64) -> Result<Self> {
        let le = params.lambda * epsilon;
        if !(le < 1.0) {
            return Err(Error::config(
                "n_steps",
                format!("lambda * eps must be < 1 for the collapse factor, got {le}"),
            ));
        }
        let xs = grid.points();
        let n = xs.len();
        let values = Array2::from_shape_fn((n, n), |(i, j)| {
            (1.0 - le) + le * gaussian_overlap(params.r_c, xs[i], xs[j])
        });
        Ok(Self {
            grid: grid.clone(),
            epsilon,
            lambda: params.lambda,
            r_c: params.r_c,
            values,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r_c(&self) -> f64 {
        self.r_c
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }
}

fn check_step_inputs(field: &DensityField, kernel: &ShortTimeKernel, factor: &CollapseFactor) -> Result<()> {
    if field.grid() != &kernel.grid || field.grid() != &factor.grid {
        return Err(Error::Dimension("field, kernel and collapse factor must share a grid".into()));
    }
    if (kernel.epsilon - factor.epsilon).abs() > 1e-15 * kernel.epsilon {
        return Err(Error::Dimension(format!(
            "kernel step {} differs from collapse-factor step {}",
            kernel.epsilon, factor.epsilon
        )));
    }
    Ok(())
}

fn sandwich(kernel: &ShortTimeKernel, rho: &ComplexMatrix) -> ComplexMatrix {
    match &kernel.diag {
        Some(d) => {
            let n = d.len();
            ComplexMatrix::from_fn(n, n, |(i, j)| d[i] * rho[(i, j)] * d[j].conj())
        }
        None => {
            let left = kernel.k.view().dot(&rho.view());
            ComplexMatrix::from_array(left.dot(&kernel.k_dag.view()))
        }
    }
}

fn apply_factor(rho: ComplexMatrix, factor: &CollapseFactor) -> ComplexMatrix {
    let mut a = rho.into_array();
    ndarray::Zip::from(&mut a).and(&factor.values).for_each(|z, &f| *z *= f);
    ComplexMatrix::from_array(a)
}

/// `(K ρ K†) ∘ F`, advancing time by eps.
pub fn step_density(field: &DensityField, kernel: &ShortTimeKernel, factor: &CollapseFactor) -> Result<DensityField> {
    check_step_inputs(field, kernel, factor)?;
    let rho = apply_factor(sandwich(kernel, field.rho()), factor);
    DensityField::new(field.grid().clone(), rho, field.time() + kernel.epsilon)
}

/// `K (ρ ∘ F) K†`, the opposite splitting order.
pub fn step_density_factor_first(
    field: &DensityField,
    kernel: &ShortTimeKernel,
    factor: &CollapseFactor,
) -> Result<DensityField> {
    check_step_inputs(field, kernel, factor)?;
    let rho = sandwich(kernel, &apply_factor(field.rho().clone(), factor));
    DensityField::new(field.grid().clone(), rho, field.time() + kernel.epsilon)
}

/// Output of [`propagate_with`].
#[derive(Debug, Clone)]
pub struct Propagation {
    pub field: DensityField,
    /// Accumulated product of the collapse factor at each requested probe `(i, j)`.
    pub probe_factors: Vec<f64>,
}

/// `n_steps` path-integral steps from `field.time()` to `t_final` with the lattice kernel.
pub fn propagate(field: &DensityField, params: &GrwParams, t_final: f64, n_steps: usize) -> Result<DensityField> {
    Ok(propagate_with(field, params, t_final, n_steps, KernelForm::Lattice, &[], |_| Ok(()))?.field)
}

/// Full-control variant of [`propagate`]: kernel form, probe points and a per-step observer.
#[allow(clippy::too_many_arguments)]
pub fn propagate_with(
    field: &DensityField,
    params: &GrwParams,
    t_final: f64,
    n_steps: usize,
    form: KernelForm,
    probes: &[(usize, usize)],
    mut observe: impl FnMut(&DensityField) -> Result<()>,
) -> Result<Propagation> {
    if n_steps == 0 {
        return Err(Error::config("n_steps", "must be at least 1"));
    }
    let span = t_final - field.time();
    if !(span > 0.0) {
        return Err(Error::config("t_final", format!("must exceed the field time {}", field.time())));
    }
    let eps = span / n_steps as f64;
    if params.lambda * eps >= 0.1 {
        return Err(Error::config(
            "n_steps",
            format!(
                "lambda * t / n_steps = {} must stay below 0.1; use at least {} steps",
                params.lambda * eps,
                (params.lambda * span / 0.1).floor() as usize + 1
            ),
        ));
    }
    let n = field.grid().n_points();
    if let Some(&(i, j)) = probes.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::Dimension(format!("probe ({i}, {j}) outside a {n}-point grid")));
    }
    let kernel = build_kernel_with(field.grid(), params, eps, form)?;
    let factor = CollapseFactor::new(field.grid(), params, eps)?;
    let mut acc = vec![1.0; probes.len()];
    let mut cur = field.clone();
    for k in 0..n_steps {
        cur = step_density(&cur, &kernel, &factor)?;
        for (a, &(i, j)) in acc.iter_mut().zip(probes) {
            *a *= factor.value(i, j);
        }
        if k + 1 == n_steps {
            cur = cur.with_time(t_final);
        }
        observe(&cur)?;
    }
    let rho = hermitize(cur.rho())?;
    Ok(Propagation {
        field: DensityField::new(field.grid().clone(), rho, t_final)?,
        probe_factors: acc,
    })
}
