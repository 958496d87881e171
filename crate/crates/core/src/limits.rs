//! Quantum and classical limits: the phase-space transform over the
//! separation variable, a Liouville reference solver, decoherence reports
//! and the small-lambda comparison against von Neumann dynamics.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master::{self, DensityField};
use crate::model::GrwParams;
use crate::numerics::{fourier_row_transform, ComplexMatrix, GridSpec, C64};

/// Largest imaginary part tolerated by [`to_phase_space`], relative to the largest real part.
pub const MAX_IMAG_RESIDUE: f64 = 1e-4;

/// Mass allowed to leave the phase-space window in [`liouville_reference`].
pub const MAX_ESCAPED_MASS: f64 = 1e-6;

/// Real phase-space density `ρ̄(q̄_i, p_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    q_grid: GridSpec,
    p_grid: GridSpec,
    values: Array2<f64>,
    time: f64,
    imag_residue: f64,
}

impl PhaseField {
    pub fn new(q_grid: GridSpec, p_grid: GridSpec, values: Array2<f64>, time: f64) -> Result<Self> {
        if values.dim() != (q_grid.n_points(), p_grid.n_points()) {
            return Err(Error::Dimension(format!(
                "phase-space values are {:?} but the grids are {}x{}",
                values.dim(),
                q_grid.n_points(),
                p_grid.n_points()
            )));
        }
        Ok(Self {
            q_grid,
            p_grid,
            values,
            time,
            imag_residue: 0.0,
        })
    }

    pub fn q_grid(&self) -> &GridSpec {
        &self.q_grid
    }

    pub fn p_grid(&self) -> &GridSpec {
        &self.p_grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Largest discarded imaginary part relative to the largest real part.
    pub fn imag_residue(&self) -> f64 {
        self.imag_residue
    }

    fn cell_weight(&self, k: usize) -> f64 {
        self.q_grid.dx() * self.p_grid.weight(k)
    }

    /// Double quadrature: `dq` sum over q̄, trapezoid over p.
    pub fn total_mass(&self) -> f64 {
        self.values
            .indexed_iter()
            .map(|((_, k), v)| v * self.cell_weight(k))
            .sum()
    }

    /// `∫ ρ̄ dp` at every q̄.
    pub fn position_marginal(&self) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|row| row.iter().enumerate().map(|(k, v)| v * self.p_grid.weight(k)).sum())
            .collect()
    }

    /// `∫ ρ̄ dq̄` at every p.
    pub fn momentum_marginal(&self) -> Vec<f64> {
        let dq = self.q_grid.dx();
        self.values.columns().into_iter().map(|c| c.sum() * dq).collect()
    }

    /// Mean `(q̄, p)`.
    pub fn centroid(&self) -> (f64, f64) {
        let mass = self.total_mass();
        let (mut q, mut p) = (0.0, 0.0);
        for ((i, k), v) in self.values.indexed_iter() {
            let w = v * self.cell_weight(k);
            q += self.q_grid.x(i) * w;
            p += self.p_grid.x(k) * w;
        }
        (q / mass, p / mass)
    }

    /// Standard deviations `(sigma_q, sigma_p)`.
    pub fn spreads(&self) -> (f64, f64) {
        let mass = self.total_mass();
        let (qc, pc) = self.centroid();
        let (mut vq, mut vp) = (0.0, 0.0);
        for ((i, k), v) in self.values.indexed_iter() {
            let w = v * self.cell_weight(k);
            vq += (self.q_grid.x(i) - qc).powi(2) * w;
            vp += (self.p_grid.x(k) - pc).powi(2) * w;
        }
        ((vq / mass).sqrt(), (vp / mass).sqrt())
    }

    /// Bilinear interpolation; zero outside the window.
    pub fn value_at(&self, q: f64, p: f64) -> f64 {
        if !self.q_grid.contains(q) || !self.p_grid.contains(p) {
            return 0.0;
        }
        let (i, a) = self.q_grid.locate(q);
        let (k, b) = self.p_grid.locate(p);
        let v = &self.values;
        (1.0 - a) * ((1.0 - b) * v[(i, k)] + b * v[(i, k + 1)]) + a * ((1.0 - b) * v[(i + 1, k)] + b * v[(i + 1, k + 1)])
    }

    /// `∫|self - other| / ∫|other|` on shared grids.
    pub fn relative_l1(&self, other: &PhaseField) -> Result<f64> {
        if self.q_grid != other.q_grid || self.p_grid != other.p_grid {
            return Err(Error::Dimension("phase fields live on different grids".into()));
        }
        let (mut num, mut den) = (0.0, 0.0);
        for ((i, k), v) in self.values.indexed_iter() {
            let w = self.cell_weight(k);
            let o = other.values[(i, k)];
            num += (v - o).abs() * w;
            den += o.abs() * w;
        }
        Ok(num / den)
    }
}

/// Momentum grid whose trapezoid rule is exact for the marginal over p:
/// `2n + 1` points on `[-pi hbar / (2 dx), pi hbar / (2 dx)]`.
pub fn default_p_grid(grid: &GridSpec, hbar: f64) -> Result<GridSpec> {
    let p_max = PI * hbar / (2.0 * grid.dx());
    GridSpec::symmetric(2 * grid.n_points() + 1, p_max)
}

/// `ρ̄(q̄, p) = (1 / 2 pi hbar) ∫ exp(-i p Δ / hbar) ρ(q̄ + Δ/2, q̄ - Δ/2) dΔ`.
///
/// The q̄ axis is the position grid and Δ runs in steps of `2 dx`, so every
/// sample `ρ(x_{i+k}, x_{i-k})` falls on a grid node and no interpolation is
/// needed; samples beyond the grid are zero (hard walls).
pub fn to_phase_space(field: &DensityField, p_grid: &GridSpec, hbar: f64) -> Result<PhaseField> {
    let grid = field.grid();
    let n = grid.n_points();
    let half = n - 1;
    let span = 2.0 * half as f64 * grid.dx();
    let delta_grid = GridSpec::symmetric(2 * n - 1, span)?;
    let rotated = ComplexMatrix::from_fn(n, 2 * n - 1, |(i, kk)| {
        let k = kk as isize - half as isize;
        let (a, b) = (i as isize + k, i as isize - k);
        if a < 0 || b < 0 || a >= n as isize || b >= n as isize {
            C64::new(0.0, 0.0)
        } else {
            field.get(a as usize, b as usize)
        }
    });
    let out = fourier_row_transform(&rotated, &delta_grid, p_grid, hbar)?;
    let scale = 1.0 / (2.0 * PI * hbar);
    let values = Array2::from_shape_fn((n, p_grid.n_points()), |(i, k)| out[(i, k)].re * scale);
    let max_re = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let max_im = out.iter().fold(0.0f64, |m, z| m.max(z.im.abs())) * scale;
    let residue = if max_re > 0.0 { max_im / max_re } else { 0.0 };
    if residue > MAX_IMAG_RESIDUE {
        return Err(Error::TransformFidelity {
            residue: max_im,
            max: max_re,
        });
    }
    let mut pf = PhaseField::new(grid.clone(), p_grid.clone(), values, field.time())?;
    pf.imag_residue = residue;
    Ok(pf)
}

fn hamilton_rk4(q: f64, p: f64, h: f64, steps: usize, params: &GrwParams) -> Result<(f64, f64)> {
    let m = params.mass;
    let force = |x: f64| -> Result<f64> {
        match &params.potential {
            // outside a tabulated range the particle is treated as free
            crate::model::Potential::Tabulated { .. } => Ok(-params.potential.gradient(x, m).unwrap_or(0.0)),
            v => Ok(-v.gradient(x, m)?),
        }
    };
    let (mut q, mut p) = (q, p);
    for _ in 0..steps {
        let (k1q, k1p) = (p / m, force(q)?);
        let (k2q, k2p) = ((p + 0.5 * h * k1p) / m, force(q + 0.5 * h * k1q)?);
        let (k3q, k3p) = ((p + 0.5 * h * k2p) / m, force(q + 0.5 * h * k2q)?);
        let (k4q, k4p) = ((p + h * k3p) / m, force(q + h * k3q)?);
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    }
    Ok((q, p))
}

/// Substeps used by [`liouville_reference`] for a span `t`.
fn default_char_steps(params: &GrwParams, t: f64) -> usize {
    match params.potential {
        crate::model::Potential::Free => 1,
        crate::model::Potential::Harmonic { omega } => ((omega * t.abs() / 0.02).ceil() as usize).max(1),
        crate::model::Potential::Tabulated { .. } => 400,
    }
}

/// Classical evolution `∂ρ̄/∂t = -{ρ̄, H}` with `H = p^2 / 2m + V(q)` by the
/// method of characteristics: each node is traced back with RK4 and the
/// initial field is sampled there by bilinear interpolation.
pub fn liouville_reference(initial: &PhaseField, params: &GrwParams, t_final: f64) -> Result<PhaseField> {
    let t = t_final - initial.time;
    liouville_reference_with(initial, params, t_final, default_char_steps(params, t))
}

pub fn liouville_reference_with(
    initial: &PhaseField,
    params: &GrwParams,
    t_final: f64,
    steps: usize,
) -> Result<PhaseField> {
    params.validate()?;
    let t = t_final - initial.time;
    let steps = steps.max(1);
    let h = t / steps as f64;
    let (nq, np) = initial.values.dim();

    // forward pass: mass carried out of the window
    let mut escaped = 0.0;
    for ((i, k), &v) in initial.values.indexed_iter() {
        if v == 0.0 {
            continue;
        }
        let (q, p) = hamilton_rk4(initial.q_grid.x(i), initial.p_grid.x(k), h, steps, params)?;
        if !initial.q_grid.contains(q) || !initial.p_grid.contains(p) {
            escaped += v.abs() * initial.cell_weight(k);
        }
    }
    if escaped > MAX_ESCAPED_MASS {
        return Err(Error::DomainEscape { mass: escaped });
    }

    let mut values = Array2::zeros((nq, np));
    for ((i, k), out) in values.indexed_iter_mut() {
        let (q0, p0) = hamilton_rk4(initial.q_grid.x(i), initial.p_grid.x(k), -h, steps, params)?;
        *out = initial.value_at(q0, p0);
    }
    PhaseField::new(initial.q_grid.clone(), initial.p_grid.clone(), values, t_final)
}

/// Window for fringe visibility: one fringe period of the momentum marginal around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityProbe {
    pub center: f64,
    pub period: f64,
    pub samples: usize,
}

impl VisibilityProbe {
    /// Probe for two blobs separated by `separation`: fringe period `2 pi hbar / separation`.
    pub fn for_separation(separation: f64, hbar: f64) -> Self {
        Self {
            center: 0.0,
            period: 2.0 * PI * hbar / separation.abs(),
            samples: 65,
        }
    }
}

/// `(max - min) / (max + min)` of the momentum marginal over the probe window, clamped to [0, 1].
pub fn fringe_visibility(field: &DensityField, probe: &VisibilityProbe, hbar: f64) -> Result<f64> {
    let half = 0.5 * probe.period;
    let p_grid = GridSpec::new(probe.samples.max(crate::numerics::MIN_GRID_POINTS), probe.center - half, probe.center + half)?;
    let marginal = to_phase_space(field, &p_grid, hbar)?.momentum_marginal();
    let max = marginal.iter().copied().fold(f64::MIN, f64::max);
    let min = marginal.iter().copied().fold(f64::MAX, f64::min);
    if !(max + min > 0.0) {
        return Ok(0.0);
    }
    Ok(((max - min) / (max + min)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSample {
    pub time: f64,
    pub offdiag_mass: f64,
    pub visibility: f64,
    /// `exp(-lambda (t - t_0))`.
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub lambda: f64,
    pub r_c: f64,
    pub samples: Vec<CoherenceSample>,
}

impl CoherenceReport {
    /// Ratio of final to initial off-diagonal mass.
    pub fn offdiag_ratio(&self) -> f64 {
        let first = self.samples.first().map_or(f64::NAN, |s| s.offdiag_mass);
        let last = self.samples.last().map_or(f64::NAN, |s| s.offdiag_mass);
        last / first
    }

    /// Ratio of final to initial fringe visibility.
    pub fn visibility_ratio(&self) -> f64 {
        let first = self.samples.first().map_or(f64::NAN, |s| s.visibility);
        let last = self.samples.last().map_or(f64::NAN, |s| s.visibility);
        last / first
    }
}

/// Off-diagonal mass beyond `3 r_c`, fringe visibility and `exp(-lambda t)` for each snapshot.
pub fn coherence_report(series: &[DensityField], params: &GrwParams, probe: &VisibilityProbe) -> Result<CoherenceReport> {
    if series.len() < 2 {
        return Err(Error::Domain(format!(
            "a coherence report needs at least 2 snapshots, got {}",
            series.len()
        )));
    }
    let t0 = series[0].time();
    if series.windows(2).any(|w| w[0].grid() != w[1].grid() || w[1].time() <= w[0].time()) {
        return Err(Error::Domain("snapshots must share a grid and have increasing times".into()));
    }
    let samples = series
        .iter()
        .map(|f| {
            Ok(CoherenceSample {
                time: f.time(),
                offdiag_mass: f.offdiag_coherence(params.r_c),
                visibility: fringe_visibility(f, probe, params.hbar)?,
                predicted: (-params.lambda * (f.time() - t0)).exp(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoherenceReport {
        lambda: params.lambda,
        r_c: params.r_c,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumLimitReport {
    pub lambda_t: f64,
    pub max_abs_deviation: f64,
    /// `max_abs_deviation / max |ρ_vN|`.
    pub relative_deviation: f64,
    /// `2 lambda t max |ρ_vN|`.
    pub bound: f64,
    pub within_bound: bool,
    /// Trace and purity drift of the lambda = 0 run.
    pub von_neumann_trace_drift: f64,
    pub von_neumann_purity_drift: f64,
}

/// Runs the master equation with the given lambda and with lambda = 0 and compares.
pub fn quantum_limit_check(field: &DensityField, params: &GrwParams, t_final: f64, dt: f64) -> Result<QuantumLimitReport> {
    let lambda_t = params.lambda * (t_final - field.time());
    if lambda_t > 0.01 + 1e-15 {
        return Err(Error::config(
            "lambda",
            format!("lambda * t = {lambda_t} exceeds the quantum-limit window 0.01"),
        ));
    }
    let (grw, _) = master::evolve(field, params, t_final, dt)?;
    let (vn, series) = master::evolve(field, &params.clone().with_lambda(0.0), t_final, dt)?;
    let max_abs_deviation = grw.max_abs_diff(&vn)?;
    let scale = vn.rho().max_abs();
    let bound = 2.0 * lambda_t * scale;
    let first = series.samples.first().expect("initial sample");
    Ok(QuantumLimitReport {
        lambda_t,
        max_abs_deviation,
        relative_deviation: max_abs_deviation / scale,
        bound,
        within_bound: max_abs_deviation <= bound,
        von_neumann_trace_drift: series.max_trace_drift(),
        von_neumann_purity_drift: series
            .samples
            .iter()
            .map(|s| (s.purity - first.purity).abs())
            .fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;
    use approx::assert_abs_diff_eq;

    fn pure(grid: &GridSpec, psi: impl Fn(f64) -> C64) -> DensityField {
        let v: Vec<C64> = grid.points().iter().map(|&x| psi(x)).collect();
        DensityField::from_pure(grid.clone(), &v)
            .unwrap()
            .scaled_to_unit_trace()
            .unwrap()
    }

    fn gauss(x0: f64, sigma: f64, p0: f64) -> impl Fn(f64) -> C64 {
        move |x| C64::from_polar((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), p0 * x)
    }

    fn cat(grid: &GridSpec, a: f64, sigma: f64) -> DensityField {
        let (l, r) = (gauss(-a, sigma, 0.0), gauss(a, sigma, 0.0));
        pure(grid, move |x| l(x) + r(x))
    }

    #[test]
    fn gaussian_is_minimum_uncertainty_blob() {
        let g = GridSpec::symmetric(128, 8.0).unwrap();
        let f = pure(&g, gauss(0.5, 0.7, 1.5));
        let pf = to_phase_space(&f, &default_p_grid(&g, 1.0).unwrap(), 1.0).unwrap();
        let (sq, sp) = pf.spreads();
        assert!((sq * sp - 0.5).abs() < 0.025, "{}", sq * sp);
        let (qc, pc) = pf.centroid();
        assert!((qc - 0.5).abs() < 1e-6 && (pc - 1.5).abs() < 1e-6);
        assert!(pf.imag_residue() < 1e-8);
    }

    #[test]
    fn normalization_and_position_marginal() {
        let g = GridSpec::symmetric(96, 8.0).unwrap();
        let f = cat(&g, 2.5, 0.6);
        let pf = to_phase_space(&f, &default_p_grid(&g, 1.0).unwrap(), 1.0).unwrap();
        assert_abs_diff_eq!(pf.total_mass(), f.trace(), epsilon = 1e-6);
        let marg = pf.position_marginal();
        let l1: f64 = marg.iter().zip(f.diagonal()).map(|(a, b)| (a - b).abs()).sum::<f64>() * g.dx();
        assert!(l1 < 1e-6, "{l1}");
    }

    #[test]
    fn cat_fringes_have_expected_period() {
        let g = GridSpec::symmetric(160, 10.0).unwrap();
        let d = 6.0;
        let f = cat(&g, d / 2.0, 0.5);
        // momentum marginal of the cat is 2|phi(p)|^2 (1 + cos(p d / hbar))
        let p_grid = GridSpec::symmetric(201, 2.0).unwrap();
        let marg = to_phase_space(&f, &p_grid, 1.0).unwrap().momentum_marginal();
        let sigma_p = 0.5 / 0.5;
        for (k, m) in marg.iter().enumerate() {
            let p: f64 = p_grid.x(k);
            let want = 2.0 * (-(p * p) / (2.0 * sigma_p * sigma_p)).exp() / (2.0 * PI * sigma_p * sigma_p).sqrt() * (1.0 + (p * d).cos())
                / (1.0 + (-(d * d) / (8.0 * 0.25)).exp())
                / 2.0;
            assert!((m - want).abs() < 1e-6, "p = {p}: {m} vs {want}");
        }
    }

    #[test]
    fn damped_cross_terms_scale_fringes() {
        let g = GridSpec::symmetric(240, 10.0).unwrap();
        let (d, sigma) = (6.0, 0.4);
        let f = cat(&g, d / 2.0, sigma);
        let xs = g.points();
        let c = (-1.3f64).exp();
        let n = g.n_points();
        let damped = ComplexMatrix::from_fn(n, n, |(i, j)| {
            let v = f.get(i, j);
            if xs[i] * xs[j] < 0.0 {
                v * c
            } else {
                v
            }
        });
        let damped = DensityField::new(g.clone(), damped, 0.0).unwrap();
        let probe = VisibilityProbe::for_separation(d, 1.0);
        // marginal env(p) (1 + V cos(p d)): max at p = 0, min at the window edge p = pi / d
        let sigma_p = 0.5 / sigma;
        let e1 = (-(PI / d).powi(2) / (2.0 * sigma_p * sigma_p)).exp();
        let oracle = |v: f64| ((1.0 + v) - e1 * (1.0 - v)) / ((1.0 + v) + e1 * (1.0 - v));
        let v0 = fringe_visibility(&f, &probe, 1.0).unwrap();
        let v1 = fringe_visibility(&damped, &probe, 1.0).unwrap();
        assert!((v0 - oracle(1.0)).abs() < 1e-3, "{v0}");
        assert!((v1 - oracle(c)).abs() < 1e-3, "{v1} vs {}", oracle(c));
        // blobs unchanged: position marginal identical
        let pg = default_p_grid(&g, 1.0).unwrap();
        let a = to_phase_space(&f, &pg, 1.0).unwrap().position_marginal();
        let b = to_phase_space(&damped, &pg, 1.0).unwrap().position_marginal();
        let l1: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() * g.dx();
        assert!(l1 < 1e-12);
    }

    fn blob(q_grid: &GridSpec, p_grid: &GridSpec, q0: f64, p0: f64, sq: f64, sp: f64) -> PhaseField {
        let vals = Array2::from_shape_fn((q_grid.n_points(), p_grid.n_points()), |(i, k)| {
            (-(q_grid.x(i) - q0).powi(2) / (2.0 * sq * sq) - (p_grid.x(k) - p0).powi(2) / (2.0 * sp * sp)).exp()
                / (2.0 * PI * sq * sp)
        });
        PhaseField::new(q_grid.clone(), p_grid.clone(), vals, 0.0).unwrap()
    }

    #[test]
    fn free_liouville_is_a_shear() {
        let qg = GridSpec::symmetric(121, 6.0).unwrap();
        let pg = GridSpec::symmetric(81, 4.0).unwrap();
        let init = blob(&qg, &pg, -1.0, 0.5, 0.6, 0.5);
        let params = GrwParams::default().with_lambda(0.0).with_potential(Potential::Free);
        let out = liouville_reference(&init, &params, 2.0).unwrap();
        for i in (0..121).step_by(7) {
            for k in (0..81).step_by(5) {
                let (q, p) = (qg.x(i), pg.x(k));
                assert!((out.values()[(i, k)] - init.value_at(q - 2.0 * p, p)).abs() < 1e-12);
            }
        }
        assert_abs_diff_eq!(out.total_mass(), init.total_mass(), epsilon = 1e-6);
    }

    #[test]
    fn harmonic_period_returns_field() {
        let qg = GridSpec::symmetric(101, 5.0).unwrap();
        let pg = GridSpec::symmetric(101, 5.0).unwrap();
        let init = blob(&qg, &pg, 1.5, 0.0, 0.5, 0.5);
        let params = GrwParams::default().with_potential(Potential::Harmonic { omega: 1.0 });
        let out = liouville_reference(&init, &params, 2.0 * PI).unwrap();
        assert!(out.relative_l1(&init).unwrap() < 1e-3);
        let quarter = liouville_reference(&init, &params, 0.5 * PI).unwrap();
        let (q, p) = quarter.centroid();
        assert!(q.abs() < qg.dx() && (p + 1.5).abs() < pg.dx(), "({q}, {p})");
    }

    #[test]
    fn escape_is_detected() {
        let qg = GridSpec::symmetric(61, 3.0).unwrap();
        let pg = GridSpec::symmetric(61, 3.0).unwrap();
        let init = blob(&qg, &pg, 0.0, 1.0, 0.3, 0.3);
        let params = GrwParams::default();
        assert!(matches!(liouville_reference(&init, &params, 5.0), Err(Error::DomainEscape { .. })));
    }

    #[test]
    fn report_needs_two_snapshots() {
        let g = GridSpec::symmetric(32, 8.0).unwrap();
        let f = cat(&g, 2.0, 0.5);
        let probe = VisibilityProbe::for_separation(4.0, 1.0);
        assert!(coherence_report(std::slice::from_ref(&f), &GrwParams::default(), &probe).is_err());
    }

    #[test]
    fn frozen_cat_offdiag_mass_decays_twice_as_fast() {
        let g = GridSpec::symmetric(128, 8.0).unwrap();
        let f = cat(&g, 5.0, 0.1 * 2f64.sqrt());
        let p = GrwParams::default().without_kinetic();
        let (end, _) = master::evolve(&f, &p, 1.0, 0.01).unwrap();
        let probe = VisibilityProbe::for_separation(10.0, 1.0);
        let rep = coherence_report(&[f, end], &p, &probe).unwrap();
        let want = (-2.0 * (1.0 - (-25.0f64).exp())).exp();
        assert!((rep.offdiag_ratio() - want).abs() < 1e-4 * want, "{}", rep.offdiag_ratio());
        assert_abs_diff_eq!(rep.samples[1].predicted, (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_offdiag_tail_matches_erfc() {
        let g = GridSpec::symmetric(200, 12.0).unwrap();
        let sigma = 1.5;
        let f = pure(&g, gauss(0.0, sigma, 0.0));
        let got = f.offdiag_coherence(1.0);
        let want = statrs::function::erf::erfc(3.0 / (2.0 * sigma));
        assert!((got - want).abs() < 0.05 * want, "{got} vs {want}");
    }

    #[test]
    fn free_unitary_visibility_is_constant() {
        let g = GridSpec::symmetric(128, 12.0).unwrap();
        let f = cat(&g, 2.0, 0.5);
        let p = GrwParams::default().with_lambda(0.0);
        let (end, _) = master::evolve(&f, &p, 0.5, 0.005).unwrap();
        let probe = VisibilityProbe::for_separation(4.0, 1.0);
        let rep = coherence_report(&[f, end], &p, &probe).unwrap();
        assert!((rep.visibility_ratio() - 1.0).abs() < 0.02, "{}", rep.visibility_ratio());
    }

    #[test]
    fn quantum_limit_examples() {
        let g = GridSpec::symmetric(64, 10.0).unwrap();
        let f = cat(&g, 2.5, 0.7);
        let base = GrwParams::default();
        let zero = quantum_limit_check(&f, &base.clone().with_lambda(0.0), 0.5, 0.005).unwrap();
        assert_eq!(zero.max_abs_deviation, 0.0);
        let rep = quantum_limit_check(&f, &base.clone().with_lambda(0.02), 0.5, 0.005).unwrap();
        assert!(rep.within_bound && rep.relative_deviation <= 0.02);
        assert!(quantum_limit_check(&f, &base.with_lambda(1.0), 0.5, 0.005).is_err());
    }
}
