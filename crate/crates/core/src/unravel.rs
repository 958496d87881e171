//! Jump unravelling: Schrödinger evolution interrupted by localisation jumps
//! at exponentially distributed waiting times with rate lambda. Jump centers
//! are drawn from `p(r) = ∫ l(r, x)^2 |psi(x)|^2 dx`.
//!
//! Each trajectory owns a `ChaCha8Rng` seeded from the run seed, with the
//! trajectory index selecting the stream, so results do not depend on how
//! trajectories are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::master::{step_schedule, DensityField};
use crate::model::{CollapseKernel, GrwParams, Hamiltonian};
use crate::numerics::{ComplexMatrix, GridSpec, C64};

/// Random source of one trajectory.
pub type RandomStream = ChaCha8Rng;

/// Stream `index` of the generator seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Smallest `||L psi||` accepted by [`apply_jump`].
pub const JUMP_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    grid: GridSpec,
    psi: Vec<C64>,
    time: f64,
}

impl WaveField {
    pub fn new(grid: GridSpec, psi: Vec<C64>, time: f64) -> Result<Self> {
        if psi.len() != grid.n_points() {
            return Err(Error::Dimension(format!(
                "wave function has {} samples but the grid has {} points",
                psi.len(),
                grid.n_points()
            )));
        }
        Ok(Self { grid, psi, time })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn psi(&self) -> &[C64] {
        &self.psi
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `dx sum |psi|^2`.
    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if !(n > 0.0) {
            return Err(Error::Domain("cannot normalize a zero wave function".into()));
        }
        self.psi.iter_mut().for_each(|z| *z /= n);
        Ok(self)
    }

    pub fn mean_position(&self) -> f64 {
        let dx = self.grid.dx();
        self.psi
            .iter()
            .enumerate()
            .map(|(i, z)| self.grid.x(i) * z.norm_sqr())
            .sum::<f64>()
            * dx
            / self.norm_sqr()
    }

    pub fn position_variance(&self) -> f64 {
        let mean = self.mean_position();
        let dx = self.grid.dx();
        self.psi
            .iter()
            .enumerate()
            .map(|(i, z)| (self.grid.x(i) - mean).powi(2) * z.norm_sqr())
            .sum::<f64>()
            * dx
            / self.norm_sqr()
    }

    pub fn to_density(&self) -> Result<DensityField> {
        Ok(DensityField::from_pure(self.grid.clone(), &self.psi)?.with_time(self.time))
    }
}

/// Crank–Nicolson step `(1 + i dt H / 2 hbar) psi' = (1 - i dt H / 2 hbar) psi`
/// with the tridiagonal H factored once per step size.
#[derive(Debug, Clone)]
pub struct CnStepper {
    h: Hamiltonian,
    dt: f64,
    alpha: f64,
    denom: Vec<C64>,
    upper: Vec<C64>,
    rhs: Vec<C64>,
}

impl CnStepper {
    pub fn new(h: Hamiltonian, dt: f64) -> Self {
        let n = h.dim();
        let alpha = dt / (2.0 * h.hbar());
        let b = C64::new(0.0, alpha * h.off_diag());
        let mut denom = vec![C64::new(0.0, 0.0); n];
        let mut upper = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let a = C64::new(1.0, alpha * h.diag()[i]);
            denom[i] = if i == 0 { a } else { a - b * upper[i - 1] };
            upper[i] = b / denom[i];
        }
        Self {
            h,
            dt,
            alpha,
            denom,
            upper,
            rhs: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&mut self, psi: &mut [C64]) {
        let n = psi.len();
        let (d, o) = (self.h.diag(), self.h.off_diag());
        let b = C64::new(0.0, self.alpha * o);
        // explicit half: (1 - i alpha H) psi
        for i in 0..n {
            let mut acc = psi[i] * C64::new(1.0, -self.alpha * d[i]);
            if i > 0 {
                acc -= b * psi[i - 1];
            }
            if i + 1 < n {
                acc -= b * psi[i + 1];
            }
            self.rhs[i] = acc;
        }
        // implicit half by the Thomas algorithm
        for i in 0..n {
            let prev = if i == 0 { C64::new(0.0, 0.0) } else { b * self.rhs[i - 1] };
            self.rhs[i] = (self.rhs[i] - prev) / self.denom[i];
        }
        psi[n - 1] = self.rhs[n - 1];
        for i in (0..n - 1).rev() {
            psi[i] = self.rhs[i] - self.upper[i] * psi[i + 1];
        }
    }
}

/// Crank–Nicolson is unitary for any step, so only the sign and finiteness of dt are checked.
fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::config("dt", format!("must be > 0, got {dt}")));
    }
    Ok(())
}

/// One unitary step of length `dt`; `dt = 0` returns the input unchanged.
pub fn schrodinger_step(psi: &WaveField, params: &GrwParams, dt: f64) -> Result<WaveField> {
    if dt == 0.0 {
        return Ok(psi.clone());
    }
    check_dt(dt)?;
    let mut out = psi.clone();
    CnStepper::new(Hamiltonian::new(&psi.grid, params)?, dt).step(&mut out.psi);
    out.time += dt;
    Ok(out)
}

/// Jump-center density `p(r_j)` on the grid points.
pub fn jump_density(psi: &WaveField, kernel: &CollapseKernel) -> Vec<f64> {
    let n = psi.grid.n_points();
    let dx = psi.grid.dx();
    // l(x_i, x_j)^2 depends only on |i - j| on a uniform grid
    let table: Vec<f64> = (0..n).map(|k| kernel.value(k as f64 * dx, 0.0).powi(2)).collect();
    let w: Vec<f64> = psi.psi.iter().map(|z| z.norm_sqr()).collect();
    (0..n)
        .map(|j| w.iter().enumerate().map(|(i, &wi)| table[i.abs_diff(j)] * wi).sum::<f64>() * dx)
        .collect()
}

/// Inverse-CDF sampler for jump centers of one state.
///
/// The density is integrated cell by cell with the trapezoid rule and the
/// cumulative distribution is inverted by linear interpolation.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    x_min: f64,
    dx: f64,
    cdf: Vec<f64>,
}

impl JumpSampler {
    pub fn new(psi: &WaveField, kernel: &CollapseKernel) -> Result<Self> {
        let p = jump_density(psi, kernel);
        let dx = psi.grid.dx();
        let mut cdf = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in p.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * dx;
            cdf.push(acc);
        }
        if !(acc > 1e-12) {
            return Err(Error::Domain(format!(
                "jump density carries mass {acc:e} on the grid; the state lies outside it"
            )));
        }
        Ok(Self {
            x_min: psi.grid.x_min(),
            dx,
            cdf,
        })
    }

    /// Mass of the jump density inside the grid.
    pub fn total(&self) -> f64 {
        *self.cdf.last().expect("grid has points")
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u = rng.random::<f64>() * self.total();
        let k = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.x_min + ((k - 1) as f64 + frac) * self.dx
    }
}

/// Draws one jump center for `psi`.
pub fn sample_jump_center(psi: &WaveField, kernel: &CollapseKernel, rng: &mut impl Rng) -> Result<f64> {
    Ok(JumpSampler::new(psi, kernel)?.sample(rng))
}

/// `psi'(x) = l(center, x) psi(x)`, renormalized.
pub fn apply_jump(psi: &WaveField, kernel: &CollapseKernel, center: f64) -> Result<WaveField> {
    let mut out = psi.clone();
    for (i, z) in out.psi.iter_mut().enumerate() {
        *z *= kernel.value(psi.grid.x(i), center);
    }
    let norm = out.norm_sqr().sqrt();
    if !(norm > JUMP_NORM_FLOOR) {
        return Err(Error::JumpDegenerate { center, norm });
    }
    out.psi.iter_mut().for_each(|z| *z /= norm);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub stream: u64,
    pub jump_times: Vec<f64>,
    pub jump_centers: Vec<f64>,
    pub final_state: WaveField,
}

impl TrajectoryRecord {
    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }
}

/// Advances by `span`, reusing the cached factorization for full steps.
fn evolve_span(psi: &mut WaveField, h: &Hamiltonian, main: &mut CnStepper, span: f64) {
    if span <= 0.0 {
        return;
    }
    for h_step in step_schedule(0.0, span, main.dt()) {
        if h_step == main.dt() {
            main.step(&mut psi.psi);
        } else {
            CnStepper::new(h.clone(), h_step).step(&mut psi.psi);
        }
    }
    psi.time += span;
}

/// Single trajectory from stream 0 of `seed`.
pub fn run_trajectory(psi0: &WaveField, params: &GrwParams, t_final: f64, dt: f64, seed: u64) -> Result<TrajectoryRecord> {
    run_trajectory_stream(psi0, params, t_final, dt, seed, 0)
}

pub fn run_trajectory_stream(
    psi0: &WaveField,
    params: &GrwParams,
    t_final: f64,
    dt: f64,
    seed: u64,
    stream: u64,
) -> Result<TrajectoryRecord> {
    check_dt(dt)?;
    if t_final < psi0.time {
        return Err(Error::config("t_final", "must not precede the initial time"));
    }
    let h = Hamiltonian::new(&psi0.grid, params)?;
    let mut main = CnStepper::new(h.clone(), dt);
    let kernel = params.collapse_kernel();
    let mut rng = trajectory_rng(seed, stream);
    let waiting = if params.lambda > 0.0 {
        Some(Exp::new(params.lambda).map_err(|e| Error::config("lambda", e.to_string()))?)
    } else {
        None
    };
    let mut psi = psi0.clone();
    let mut jump_times = Vec::new();
    let mut jump_centers = Vec::new();
    loop {
        let next = match &waiting {
            Some(exp) => psi.time + exp.sample(&mut rng),
            None => f64::INFINITY,
        };
        if next >= t_final {
            let span = t_final - psi.time;
            evolve_span(&mut psi, &h, &mut main, span);
            psi.time = t_final;
            break;
        }
        let span = next - psi.time;
        evolve_span(&mut psi, &h, &mut main, span);
        psi.time = next;
        let center = sample_jump_center(&psi, &kernel, &mut rng)?;
        psi = apply_jump(&psi, &kernel, center)?;
        jump_times.push(next);
        jump_centers.push(center);
    }
    Ok(TrajectoryRecord {
        seed,
        stream,
        jump_times,
        jump_centers,
        final_state: psi,
    })
}

/// Trajectories `0..count` of `seed`, returned in index order.
pub fn run_ensemble(
    psi0: &WaveField,
    params: &GrwParams,
    t_final: f64,
    dt: f64,
    seed: u64,
    count: usize,
) -> Result<Vec<TrajectoryRecord>> {
    let one = |k: usize| run_trajectory_stream(psi0, params, t_final, dt, seed, k as u64);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(one).collect()
    }
}

/// `(1/M) sum_k psi_k psi_k^dagger`, accumulated in index order.
pub fn ensemble_density(states: &[WaveField], grid: &GridSpec) -> Result<DensityField> {
    let Some(first) = states.first() else {
        return Err(Error::Domain("ensemble of zero trajectories".into()));
    };
    if states.iter().any(|s| &s.grid != grid) {
        return Err(Error::Dimension("all trajectories must share the ensemble grid".into()));
    }
    let n = grid.n_points();
    let mut acc = ndarray::Array2::<C64>::zeros((n, n));
    for s in states {
        let v = ndarray::ArrayView1::from(&s.psi[..]);
        let col = v.view().insert_axis(ndarray::Axis(1));
        let row = v.mapv(|z| z.conj()).insert_axis(ndarray::Axis(0));
        ndarray::Zip::from(&mut acc)
            .and_broadcast(&col)
            .and_broadcast(&row)
            .for_each(|a, &x, &y| *a += x * y);
    }
    let m = states.len() as f64;
    let rho = ComplexMatrix::from_array(acc.mapv(|z| z / m));
    DensityField::new(grid.clone(), rho, first.time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Potential;
    use approx::assert_abs_diff_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

    fn packet(grid: &GridSpec, x0: f64, sigma: f64) -> WaveField {
        let psi = grid
            .points()
            .iter()
            .map(|&x| C64::new((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), 0.0))
            .collect();
        WaveField::new(grid.clone(), psi, 0.0).unwrap().normalized().unwrap()
    }

    fn cat(grid: &GridSpec, a: f64, sigma: f64) -> WaveField {
        let l = packet(grid, -a, sigma);
        let r = packet(grid, a, sigma);
        let psi = l.psi.iter().zip(&r.psi).map(|(x, y)| x + y).collect();
        WaveField::new(grid.clone(), psi, 0.0).unwrap().normalized().unwrap()
    }

    #[test]
    fn free_packet_spreads_analytically() {
        let g = GridSpec::symmetric(1001, 10.0).unwrap();
        let p = GrwParams::default();
        let mut psi = packet(&g, 0.0, 1.0);
        for _ in 0..100 {
            psi = schrodinger_step(&psi, &p, 0.01).unwrap();
        }
        let want = (1.0f64 + 0.25).sqrt();
        let got = psi.position_variance().sqrt();
        assert!((got - want).abs() / want < 1e-4, "{got} vs {want}");
        assert_abs_diff_eq!(psi.norm_sqr(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn coherent_state_follows_classical_orbit() {
        let g = GridSpec::symmetric(401, 8.0).unwrap();
        let p = GrwParams::default().with_potential(Potential::Harmonic { omega: 1.0 });
        let mut psi = packet(&g, 2.0, 0.5f64.sqrt());
        let dt = 0.001;
        for k in 1..=2000 {
            psi = schrodinger_step(&psi, &p, dt).unwrap();
            if k % 250 == 0 {
                let t = k as f64 * dt;
                assert!((psi.mean_position() - 2.0 * t.cos()).abs() < g.dx(), "t = {t}");
            }
        }
    }

    #[test]
    fn zero_step_is_identity_and_bad_step_rejected() {
        let g = GridSpec::symmetric(64, 8.0).unwrap();
        let p = GrwParams::default();
        let psi = packet(&g, 0.0, 1.0);
        assert_eq!(schrodinger_step(&psi, &p, 0.0).unwrap(), psi);
        assert!(matches!(schrodinger_step(&psi, &p, -0.1), Err(Error::Config { .. })));
        // unitary even for steps far beyond the explicit bound
        let big = schrodinger_step(&psi, &p, 1.0).unwrap();
        assert_abs_diff_eq!(big.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spike_gives_squared_kernel_statistics() {
        let g = GridSpec::symmetric(801, 8.0).unwrap();
        let x0 = 0.7;
        let i0 = ((x0 - g.x_min()) / g.dx()).round() as usize;
        let mut psi = vec![C64::new(0.0, 0.0); 801];
        psi[i0] = C64::new(1.0 / g.dx().sqrt(), 0.0);
        let w = WaveField::new(g.clone(), psi, 0.0).unwrap();
        let k = CollapseKernel::new(0.5);
        let mut rng = trajectory_rng(11, 0);
        let sampler = JumpSampler::new(&w, &k).unwrap();
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let var_want: f64 = 0.125;
        let (mu, sd) = (g.x(i0), var_want.sqrt());
        assert!((mean - mu).abs() < 3.0 * sd / (n as f64).sqrt(), "mean {mean}");
        assert!((var - var_want).abs() < 3.0 * var_want * (2.0 / n as f64).sqrt() + g.dx() * g.dx() / 12.0, "var {var}");
    }

    #[test]
    fn symmetric_state_gives_centered_samples() {
        let g = GridSpec::symmetric(201, 10.0).unwrap();
        let w = cat(&g, 3.0, 0.5);
        let k = CollapseKernel::new(1.0);
        let mut rng = trajectory_rng(5, 3);
        let sampler = JumpSampler::new(&w, &k).unwrap();
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn jump_density_integrates_to_one() {
        let g = GridSpec::symmetric(801, 12.0).unwrap();
        let w = packet(&g, 0.5, 0.8);
        let p = jump_density(&w, &CollapseKernel::new(1.0));
        let total = crate::numerics::trapezoid_integrate(&p, &g).unwrap();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn jump_suppresses_far_branch() {
        let g = GridSpec::symmetric(401, 10.0).unwrap();
        let k = CollapseKernel::new(1.0);
        let w = cat(&g, 5.0, 0.3);
        let out = apply_jump(&w, &k, 5.0).unwrap();
        assert_abs_diff_eq!(out.norm_sqr(), 1.0, epsilon = 1e-12);
        let left: f64 = (0..401).filter(|&i| g.x(i) < 0.0).map(|i| out.psi[i].norm_sqr()).sum::<f64>() * g.dx();
        assert!(left < 1e-8, "{left}");
        // narrow packet at the center barely changes shape
        let narrow = packet(&g, 1.0, 0.1);
        let after = apply_jump(&narrow, &k, 1.0).unwrap();
        assert!((after.position_variance() - narrow.position_variance()).abs() < 0.02 * narrow.position_variance());
    }

    #[test]
    fn double_jump_equals_narrower_kernel() {
        let g = GridSpec::symmetric(201, 8.0).unwrap();
        let w = cat(&g, 2.0, 0.7);
        let twice = apply_jump(&apply_jump(&w, &CollapseKernel::new(1.0), 0.4).unwrap(), &CollapseKernel::new(1.0), 0.4).unwrap();
        let once = apply_jump(&w, &CollapseKernel::new(1.0 / 2f64.sqrt()), 0.4).unwrap();
        for (a, b) in twice.psi.iter().zip(&once.psi) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_jump_reported() {
        let g = GridSpec::symmetric(101, 5.0).unwrap();
        let w = packet(&g, -4.0, 0.1);
        assert!(matches!(
            apply_jump(&w, &CollapseKernel::new(0.05), 4.5),
            Err(Error::JumpDegenerate { .. })
        ));
    }

    #[test]
    fn no_collapse_means_no_jumps() {
        let g = GridSpec::symmetric(64, 8.0).unwrap();
        let p = GrwParams::default().with_lambda(0.0);
        let w = packet(&g, 0.0, 1.0);
        let rec = run_trajectory(&w, &p, 1.0, 0.005, 9).unwrap();
        assert_eq!(rec.jump_count(), 0);
        let mut direct = w.clone();
        for _ in 0..200 {
            direct = schrodinger_step(&direct, &p, 0.005).unwrap();
        }
        for (a, b) in rec.final_state.psi.iter().zip(&direct.psi) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let g = GridSpec::symmetric(64, 8.0).unwrap();
        let p = GrwParams::default().with_lambda(3.0);
        let w = cat(&g, 2.0, 0.5);
        let a = run_trajectory(&w, &p, 1.0, 0.005, 42).unwrap();
        let b = run_trajectory(&w, &p, 1.0, 0.005, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.jump_times.windows(2).all(|t| t[0] < t[1]));
        assert!(a.jump_times.iter().all(|&t| (0.0..=1.0).contains(&t)));
        let c = run_trajectory_stream(&w, &p, 1.0, 0.005, 42, 1).unwrap();
        assert_ne!(a.jump_times, c.jump_times);
    }

    #[test]
    fn jump_counts_are_poisson() {
        let g = GridSpec::symmetric(16, 8.0).unwrap();
        let p = GrwParams::default().with_lambda(2.0).without_kinetic();
        let w = packet(&g, 0.0, 1.5);
        let m = 10_000;
        let counts: Vec<usize> = run_ensemble(&w, &p, 10.0, 0.05, 2024, m)
            .unwrap()
            .iter()
            .map(|r| r.jump_count())
            .collect();
        let mean = counts.iter().sum::<usize>() as f64 / m as f64;
        assert!((mean - 20.0).abs() < 3.0 * (20.0f64 / m as f64).sqrt(), "mean {mean}");

        // chi-square over bins [0,13], 14..=26 singly, [27, inf)
        let pois = Poisson::new(20.0).unwrap();
        let mut edges: Vec<(usize, usize)> = vec![(0, 13)];
        edges.extend((14..=26).map(|k| (k, k)));
        edges.push((27, usize::MAX));
        let mut chi2 = 0.0;
        for &(lo, hi) in &edges {
            let obs = counts.iter().filter(|&&c| c >= lo && c <= hi).count() as f64;
            let prob: f64 = if hi == usize::MAX {
                1.0 - (0..lo).map(|k| pois.pmf(k as u64)).sum::<f64>()
            } else {
                (lo..=hi).map(|k| pois.pmf(k as u64)).sum()
            };
            let exp = prob * m as f64;
            chi2 += (obs - exp).powi(2) / exp;
        }
        let dof = (edges.len() - 1) as f64;
        let pval = 1.0 - ChiSquared::new(dof).unwrap().cdf(chi2);
        assert!(pval > 0.01, "chi2 {chi2}, p {pval}");
    }

    #[test]
    fn ensemble_density_examples() {
        let g = GridSpec::symmetric(32, 8.0).unwrap();
        let w = cat(&g, 2.0, 0.6);
        let single = ensemble_density(std::slice::from_ref(&w), &g).unwrap();
        assert_abs_diff_eq!(single.purity(), 1.0, epsilon = 1e-10);
        let copies = vec![w.clone(); 7];
        let avg = ensemble_density(&copies, &g).unwrap();
        assert!(avg.max_abs_diff(&w.to_density().unwrap()).unwrap() < 1e-14);
        assert!(matches!(ensemble_density(&[], &g), Err(Error::Domain(_))));
    }
}
