//! Position-basis master equation
//! `dρ/dt = -(i/hbar)[H, ρ] - lambda (1 - exp(-(x - y)^2 / 4 r_c^2)) ρ`,
//! integrated with fixed-step RK4.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{damping_matrix, GrwParams, Hamiltonian};
use crate::numerics::{hermitian_eigenvalues, hermitize, ComplexMatrix, GridSpec, C64, I};

/// Largest fraction of the trace the edge bands may hold during a run.
pub const EDGE_MASS_LIMIT: f64 = 1e-6;

/// Fraction of `m dx^2 / hbar` accepted as an RK4 step.
pub const STABILITY_FACTOR: f64 = 0.4;

/// ρ(x_i, y_j) on a grid at a given time.
///
/// Grid sums use the hard-wall convention: values vanish one cell beyond
/// each end, so the trapezoid rule over the extended grid is `dx * sum`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: GridSpec,
    rho: ComplexMatrix,
    time: f64,
}

impl DensityField {
    pub fn new(grid: GridSpec, rho: ComplexMatrix, time: f64) -> Result<Self> {
        let n = grid.n_points();
        if rho.rows() != n || rho.cols() != n {
            return Err(Error::Dimension(format!(
                "density matrix is {}x{} but the grid has {n} points",
                rho.rows(),
                rho.cols()
            )));
        }
        Ok(Self { grid, rho, time })
    }

    /// `|psi><psi|` at time 0.
    pub fn from_pure(grid: GridSpec, psi: &[C64]) -> Result<Self> {
        if psi.len() != grid.n_points() {
            return Err(Error::Dimension(format!(
                "wave function has {} samples but the grid has {} points",
                psi.len(),
                grid.n_points()
            )));
        }
        let n = psi.len();
        let rho = ComplexMatrix::from_fn(n, n, |(i, j)| psi[i] * psi[j].conj());
        Self::new(grid, rho, 0.0)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn rho(&self) -> &ComplexMatrix {
        &self.rho
    }

    pub fn into_rho(self) -> ComplexMatrix {
        self.rho
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.rho[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re * self.grid.dx()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.grid.n_points()).map(|i| self.rho[(i, i)].re).collect()
    }

    /// `tr(ρ^2)` on the grid, `sum |ρ_ij|^2 dx^2`.
    pub fn purity(&self) -> f64 {
        let dx = self.grid.dx();
        self.rho.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx * dx
    }

    pub fn hermiticity_residue(&self) -> f64 {
        self.rho.hermiticity_residue()
    }

    /// `sum_{|x - y| > 3 r_c} |ρ|^2 dx^2`.
    pub fn offdiag_coherence(&self, r_c: f64) -> f64 {
        self.offdiag_mass_beyond(3.0 * r_c)
    }

    pub fn offdiag_mass_beyond(&self, separation: f64) -> f64 {
        let dx = self.grid.dx();
        let xs = self.grid.points();
        let mut sum = 0.0;
        for ((i, j), z) in self.rho.view().indexed_iter() {
            if (xs[i] - xs[j]).abs() > separation {
                sum += z.norm_sqr();
            }
        }
        sum * dx * dx
    }

    /// Population held by the outer 5% of points at each end, relative to the trace.
    pub fn edge_mass(&self) -> f64 {
        let n = self.grid.n_points();
        let band = self.grid.edge_band();
        let edge: f64 = (0..band)
            .chain(n - band..n)
            .map(|i| self.rho[(i, i)].re.abs())
            .sum::<f64>()
            * self.grid.dx();
        edge / self.trace().abs().max(f64::MIN_POSITIVE)
    }

    /// Smallest eigenvalue of the discrete operator `ρ dx`.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let ev = hermitian_eigenvalues(&self.rho.scale(C64::new(self.grid.dx(), 0.0)))?;
        Ok(ev[0])
    }

    /// Checks Hermiticity, unit trace and (when `check_positivity`) positivity.
    pub fn validate(&self, check_positivity: bool) -> Result<()> {
        let herm = self.hermiticity_residue();
        if herm > 1e-10 {
            return Err(Error::Validation(format!("Hermiticity residue {herm:e} exceeds 1e-10")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-8 {
            return Err(Error::Validation(format!("trace {tr} differs from 1 by more than 1e-8")));
        }
        if check_positivity {
            let ev = self.min_eigenvalue()?;
            if ev < -1e-8 {
                return Err(Error::Validation(format!("smallest eigenvalue {ev:e} below -1e-8")));
            }
        }
        Ok(())
    }

    pub fn scaled_to_unit_trace(mut self) -> Result<Self> {
        let tr = self.trace();
        if !(tr > 0.0) {
            return Err(Error::Validation(format!("cannot normalize a field with trace {tr}")));
        }
        self.rho = self.rho.scale(C64::new(1.0 / tr, 0.0));
        Ok(self)
    }

    pub fn max_abs_diff(&self, other: &DensityField) -> Result<f64> {
        self.rho.max_abs_diff(&other.rho)
    }
}

/// `1/2 sum |eig((a - b) dx)|`.
pub fn trace_distance(a: &DensityField, b: &DensityField) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Dimension("trace distance needs fields on one grid".into()));
    }
    let diff = a.rho.sub(&b.rho)?.scale(C64::new(a.grid.dx(), 0.0));
    Ok(0.5 * hermitian_eigenvalues(&diff)?.iter().map(|e| e.abs()).sum::<f64>())
}

fn check_grid(field: &DensityField, h: &Hamiltonian) -> Result<()> {
    if field.grid.n_points() != h.dim() {
        return Err(Error::Dimension(format!(
            "field has {} points but the Hamiltonian has dimension {}",
            field.grid.n_points(),
            h.dim()
        )));
    }
    Ok(())
}

/// `-(i/hbar)(Hρ - ρH)` with the tridiagonal finite-difference H.
pub fn unitary_generator(field: &DensityField, params: &GrwParams) -> Result<ComplexMatrix> {
    let h = Hamiltonian::new(&field.grid, params)?;
    check_grid(field, &h)?;
    let mut out = Array2::zeros((h.dim(), h.dim()));
    commutator_into(&h, field.rho.view(), &mut out);
    Ok(ComplexMatrix::from_array(out))
}

fn commutator_into(h: &Hamiltonian, rho: ndarray::ArrayView2<'_, C64>, out: &mut Array2<C64>) {
    let n = h.dim();
    let d = h.diag();
    let o = h.off_diag();
    let pref = -I / h.hbar();
    crate::numerics::for_each_row_mut(out, |i, mut row| {
        for j in 0..n {
            let mut hr = rho[(i, j)] * (d[i] - d[j]);
            let mut nb = C64::new(0.0, 0.0);
            if i > 0 {
                nb += rho[(i - 1, j)];
            }
            if i + 1 < n {
                nb += rho[(i + 1, j)];
            }
            if j > 0 {
                nb -= rho[(i, j - 1)];
            }
            if j + 1 < n {
                nb -= rho[(i, j + 1)];
            }
            hr += nb * o;
            row[j] = pref * hr;
        }
    });
}

/// `-damping_rate(x_i, y_j) ρ_ij`.
pub fn dissipator(field: &DensityField, params: &GrwParams) -> ComplexMatrix {
    let n = field.grid.n_points();
    let rates = damping_matrix(&field.grid, params);
    ComplexMatrix::from_fn(n, n, |(i, j)| field.rho[(i, j)] * -rates[i * n + j])
}

/// Largest RK4 step accepted on `grid`: `0.4 m dx^2 / hbar`, unbounded when
/// the kinetic term is switched off.
pub fn stability_bound(grid: &GridSpec, params: &GrwParams) -> f64 {
    if params.kinetic {
        STABILITY_FACTOR * params.mass * grid.dx() * grid.dx() / params.hbar
    } else {
        f64::INFINITY
    }
}

/// Cached operator pieces for repeated RK4 steps on one grid.
pub struct MasterStepper {
    h: Hamiltonian,
    rates: Array2<f64>,
    bound: f64,
    grid: GridSpec,
    k: [Array2<C64>; 4],
    tmp: Array2<C64>,
}

impl MasterStepper {
    pub fn new(grid: &GridSpec, params: &GrwParams) -> Result<Self> {
        let h = Hamiltonian::new(grid, params)?;
        let n = grid.n_points();
        let rates = Array2::from_shape_vec((n, n), damping_matrix(grid, params))
            .expect("n*n damping entries");
        let z = || Array2::zeros((n, n));
        Ok(Self {
            h,
            rates,
            bound: stability_bound(grid, params),
            grid: grid.clone(),
            k: [z(), z(), z(), z()],
            tmp: z(),
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn rhs(h: &Hamiltonian, rates: &Array2<f64>, rho: ndarray::ArrayView2<'_, C64>, out: &mut Array2<C64>) {
        commutator_into(h, rho, out);
        Zip::from(out).and(rho).and(rates).for_each(|o, &r, &g| *o -= r * g);
    }

    /// One RK4 step; the result is re-hermitized.
    pub fn step(&mut self, field: &DensityField, dt: f64) -> Result<DensityField> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config("dt", format!("must be > 0, got {dt}")));
        }
        if dt > self.bound {
            return Err(Error::StabilityBound { dt, bound: self.bound });
        }
        if field.grid != self.grid {
            return Err(Error::Dimension("field grid differs from the stepper grid".into()));
        }
        let rho = field.rho.view();
        let Self { h, rates, k, tmp, .. } = self;
        let [k1, k2, k3, k4] = k;
        Self::rhs(h, rates, rho, k1);
        Zip::from(&mut *tmp).and(rho).and(&*k1).for_each(|t, &r, &k| *t = r + k * (0.5 * dt));
        Self::rhs(h, rates, tmp.view(), k2);
        Zip::from(&mut *tmp).and(rho).and(&*k2).for_each(|t, &r, &k| *t = r + k * (0.5 * dt));
        Self::rhs(h, rates, tmp.view(), k3);
        Zip::from(&mut *tmp).and(rho).and(&*k3).for_each(|t, &r, &k| *t = r + k * dt);
        Self::rhs(h, rates, tmp.view(), k4);
        let mut next = rho.to_owned();
        Zip::from(&mut next)
            .and(&*k1)
            .and(&*k2)
            .and(&*k3)
            .and(&*k4)
            .for_each(|r, &a, &b, &c, &d| *r += (a + (b + c) * 2.0 + d) * (dt / 6.0));
        let rho = hermitize(&ComplexMatrix::from_array(next))?;
        DensityField::new(field.grid.clone(), rho, field.time + dt)
    }
}

/// One RK4 step of the master equation.
pub fn step_rk4(field: &DensityField, params: &GrwParams, dt: f64) -> Result<DensityField> {
    MasterStepper::new(&field.grid, params)?.step(field, dt)
}

/// Monitored quantities at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSample {
    pub time: f64,
    pub trace: f64,
    pub purity: f64,
    pub hermiticity: f64,
    pub offdiag_coherence: f64,
}

impl DiagnosticSample {
    pub fn of(field: &DensityField, r_c: f64) -> Self {
        Self {
            time: field.time,
            trace: field.trace(),
            purity: field.purity(),
            hermiticity: field.hermiticity_residue(),
            offdiag_coherence: field.offdiag_coherence(r_c),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSeries {
    pub samples: Vec<DiagnosticSample>,
}

impl DiagnosticsSeries {
    pub fn max_trace_drift(&self) -> f64 {
        let Some(first) = self.samples.first() else {
            return 0.0;
        };
        self.samples
            .iter()
            .map(|s| (s.trace - first.trace).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_hermiticity(&self) -> f64 {
        self.samples.iter().map(|s| s.hermiticity).fold(0.0, f64::max)
    }

    /// True when purity never rises by more than `tol` between samples.
    pub fn purity_non_increasing(&self, tol: f64) -> bool {
        self.samples.windows(2).all(|w| w[1].purity <= w[0].purity + tol)
    }
}

/// Step schedule from `t0` to `t_final`: full steps of `dt` plus a shorter final step if needed.
pub(crate) fn step_schedule(t0: f64, t_final: f64, dt: f64) -> Vec<f64> {
    let span = t_final - t0;
    let full = (span / dt * (1.0 + 1e-12)).floor() as usize;
    let mut steps = vec![dt; full];
    let rest = span - full as f64 * dt;
    if rest > 1e-12 * span.abs().max(dt) {
        steps.push(rest);
    }
    steps
}

/// Repeated RK4 steps to `t_final`; diagnostics are taken every step.
pub fn evolve(
    field: &DensityField,
    params: &GrwParams,
    t_final: f64,
    dt: f64,
) -> Result<(DensityField, DiagnosticsSeries)> {
    evolve_observed(field, params, t_final, dt, 1, |_| Ok(()))
}

/// Like [`evolve`], sampling diagnostics every `sample_every` steps (and at
/// the end) and handing each sampled field to `observe`.
pub fn evolve_observed(
    field: &DensityField,
    params: &GrwParams,
    t_final: f64,
    dt: f64,
    sample_every: usize,
    mut observe: impl FnMut(&DensityField) -> Result<()>,
) -> Result<(DensityField, DiagnosticsSeries)> {
    if t_final < field.time {
        return Err(Error::config(
            "t_final",
            format!("must not precede the field time {}, got {t_final}", field.time),
        ));
    }
    let every = sample_every.max(1);
    let mut series = DiagnosticsSeries::default();
    let sample = |f: &DensityField, series: &mut DiagnosticsSeries| -> Result<()> {
        let edge = f.edge_mass();
        if edge > EDGE_MASS_LIMIT {
            return Err(Error::EdgeMass {
                mass: edge,
                limit: EDGE_MASS_LIMIT,
                time: f.time,
            });
        }
        series.samples.push(DiagnosticSample::of(f, params.r_c));
        Ok(())
    };
    sample(field, &mut series)?;
    observe(field)?;
    let steps = step_schedule(field.time, t_final, dt);
    if steps.is_empty() {
        return Ok((field.clone(), series));
    }
    let mut stepper = MasterStepper::new(&field.grid, params)?;
    if dt > stepper.bound() {
        return Err(Error::StabilityBound { dt, bound: stepper.bound() });
    }
    let mut cur = field.clone();
    let last = steps.len() - 1;
    for (k, h) in steps.into_iter().enumerate() {
        cur = stepper.step(&cur, h)?;
        if k == last {
            cur.time = t_final;
        }
        if (k + 1) % every == 0 || k == last {
            sample(&cur, &mut series)?;
            observe(&cur)?;
        }
    }
    Ok((cur, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{damping_rate, Potential};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gaussian(grid: &GridSpec, x0: f64, sigma: f64) -> DensityField {
        let psi: Vec<C64> = grid
            .points()
            .iter()
            .map(|&x| C64::new((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), 0.0))
            .collect();
        DensityField::from_pure(grid.clone(), &psi)
            .unwrap()
            .scaled_to_unit_trace()
            .unwrap()
    }

    /// Lowest eigenvector of a symmetric tridiagonal matrix by shifted inverse iteration.
    fn inverse_iteration(h: &Hamiltonian, shift: f64) -> Vec<f64> {
        let n = h.dim();
        let mut v = vec![1.0; n];
        for _ in 0..50 {
            // Thomas algorithm on (H - shift) w = v
            let a = h.off_diag();
            let mut c = vec![0.0; n];
            let mut d = vec![0.0; n];
            let b0 = h.diag()[0] - shift;
            c[0] = a / b0;
            d[0] = v[0] / b0;
            for i in 1..n {
                let m = h.diag()[i] - shift - a * c[i - 1];
                c[i] = a / m;
                d[i] = (v[i] - a * d[i - 1]) / m;
            }
            let mut w = vec![0.0; n];
            w[n - 1] = d[n - 1];
            for i in (0..n - 1).rev() {
                w[i] = d[i] - c[i] * w[i + 1];
            }
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w.into_iter().map(|x| x / norm).collect();
        }
        v
    }

    #[test]
    fn ground_state_commutes_with_h() {
        let g = GridSpec::symmetric(512, 10.0).unwrap();
        let p = GrwParams::default().with_potential(Potential::Harmonic { omega: 1.0 });
        let h = Hamiltonian::new(&g, &p).unwrap();
        let v = inverse_iteration(&h, 0.4);
        let psi: Vec<C64> = v.iter().map(|&x| C64::new(x / g.dx().sqrt(), 0.0)).collect();
        let f = DensityField::from_pure(g, &psi).unwrap();
        assert_abs_diff_eq!(f.trace(), 1.0, epsilon = 1e-12);
        let gen = unitary_generator(&f, &p).unwrap();
        assert!(gen.max_abs() <= 1e-6, "{}", gen.max_abs());
    }

    #[test]
    fn generator_of_constant_vanishes_in_bulk_and_is_traceless() {
        let g = GridSpec::symmetric(24, 3.0).unwrap();
        let p = GrwParams::default();
        let f = DensityField::new(g.clone(), ComplexMatrix::from_fn(24, 24, |_| C64::new(0.3, 0.1)), 0.0).unwrap();
        let gen = unitary_generator(&f, &p).unwrap();
        for i in 1..23 {
            for j in 1..23 {
                assert!(gen[(i, j)].norm() < 1e-12);
            }
        }
        let rho = gaussian(&g, 0.4, 0.7);
        assert!(unitary_generator(&rho, &p).unwrap().trace().norm() < 1e-10);
    }

    #[test]
    fn dissipator_examples() {
        let g = GridSpec::new(9, -2.0, 2.0).unwrap();
        let f = gaussian(&g, 0.0, 1.0);
        let p = GrwParams::default();
        let d = dissipator(&f, &p);
        for i in 0..9 {
            assert_eq!(d[(i, i)], C64::new(0.0, 0.0));
        }
        // x_0 = -2, x_4 = 0: separation 2
        let expect = -(1.0 - (-1.0f64).exp()) * f.get(0, 4);
        assert!((d[(0, 4)] - expect).norm() < 1e-15);
        assert_eq!(dissipator(&f, &p.clone().with_lambda(0.0)).max_abs(), 0.0);
    }

    #[test]
    fn stability_bound_enforced() {
        let g = GridSpec::symmetric(32, 4.0).unwrap();
        let f = gaussian(&g, 0.0, 1.0);
        let p = GrwParams::default();
        let bound = stability_bound(&g, &p);
        match step_rk4(&f, &p, 2.0 * bound) {
            Err(Error::StabilityBound { bound: b, .. }) => assert_abs_diff_eq!(b, bound),
            other => panic!("expected stability error, got {other:?}"),
        }
        assert!(step_rk4(&f, &p.without_kinetic(), 10.0).is_ok());
    }

    #[test]
    fn pure_decay_matches_closed_form() {
        let g = GridSpec::symmetric(48, 8.0).unwrap();
        let f = gaussian(&g, 0.0, 1.0);
        let p = GrwParams::default().without_kinetic();
        let (out, series) = evolve(&f, &p, 3.0, 0.01).unwrap();
        let xs = g.points();
        for i in 0..48 {
            for j in 0..48 {
                let want = f.get(i, j) * (-damping_rate(&p, xs[i], xs[j]) * 3.0).exp();
                assert!((out.get(i, j) - want).norm() <= 1e-8 * want.norm().max(1e-300));
            }
            assert_abs_diff_eq!(out.get(i, i).re, f.get(i, i).re, epsilon = 1e-12);
        }
        assert!(series.purity_non_increasing(0.0));
        assert!(series.max_trace_drift() < 1e-12);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let g = GridSpec::symmetric(32, 6.0).unwrap();
        let p = GrwParams::default()
            .with_potential(Potential::Harmonic { omega: 1.0 })
            .with_lambda(0.5);
        let f = gaussian(&g, 1.0, 0.707);
        let dt0 = 0.9 * stability_bound(&g, &p);
        let run = |dt: f64| evolve(&f, &p, 0.5, dt).unwrap().0;
        let reference = run(dt0 / 8.0);
        let e1 = run(dt0).max_abs_diff(&reference).unwrap();
        let e2 = run(dt0 / 2.0).max_abs_diff(&reference).unwrap();
        let ratio = e1 / e2;
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn zero_duration_is_identity() {
        let g = GridSpec::symmetric(16, 8.0).unwrap();
        let f = gaussian(&g, 0.0, 1.0);
        let (out, series) = evolve(&f, &GrwParams::default(), 0.0, 0.01).unwrap();
        assert_eq!(out, f);
        assert_eq!(series.samples.len(), 1);
    }

    #[test]
    fn edge_mass_is_reported() {
        let g = GridSpec::symmetric(32, 2.0).unwrap();
        let f = gaussian(&g, 0.0, 1.0);
        assert!(matches!(
            evolve(&f, &GrwParams::default(), 0.1, 0.001),
            Err(Error::EdgeMass { .. })
        ));
    }

    #[test]
    fn schedule_includes_partial_step() {
        assert_eq!(step_schedule(0.0, 1.0, 0.25).len(), 4);
        let s = step_schedule(0.0, 1.0, 0.3);
        assert_eq!(s.len(), 4);
        assert_abs_diff_eq!(s[3], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn trace_distance_of_orthogonal_states_is_one() {
        let g = GridSpec::symmetric(64, 10.0).unwrap();
        let a = gaussian(&g, -4.0, 0.5);
        let b = gaussian(&g, 4.0, 0.5);
        assert_abs_diff_eq!(trace_distance(&a, &b).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(trace_distance(&a, &a).unwrap(), 0.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dissipator_never_grows_entries(x0 in -1.0..1.0f64, s in 0.4..1.5f64, lam in 0.0..3.0f64) {
            let g = GridSpec::symmetric(16, 4.0).unwrap();
            let f = gaussian(&g, x0, s);
            let p = GrwParams::default().with_lambda(lam).without_kinetic();
            let out = step_rk4(&f, &p, 0.05).unwrap();
            for i in 0..16 {
                for j in 0..16 {
                    prop_assert!(out.get(i, j).norm() <= f.get(i, j).norm() * (1.0 + 1e-14));
                }
            }
        }
    }
}
