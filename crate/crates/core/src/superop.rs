//! Doubled-space purification: ρ becomes a vector `psi[m n + k] = ρ_mk dx`
//! evolved by `exp(-i H̃ t / hbar)` with
//! `H̃ = H ⊗ I - I ⊗ Hᵀ - i hbar lambda I ⊗ I + i hbar lambda diag(G(x_m, x_k))`.
//!
//! Storage is dense in `n^4`, so grids are capped (default 48 points).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::master::DensityField;
use crate::model::{gaussian_overlap, GrwParams, Hamiltonian};
use crate::numerics::{ComplexMatrix, GridSpec, C64, I};

pub const DEFAULT_ORACLE_CAP: usize = 48;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorizedState {
    grid: GridSpec,
    psi: Vec<C64>,
}

impl VectorizedState {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn psi(&self) -> &[C64] {
        &self.psi
    }

    /// `sum_m psi[m n + m]`, the transported trace.
    pub fn trace(&self) -> C64 {
        let n = self.grid.n_points();
        (0..n).map(|m| self.psi[m * n + m]).sum()
    }
}

pub fn vectorize(field: &DensityField) -> VectorizedState {
    let dx = field.grid().dx();
    VectorizedState {
        grid: field.grid().clone(),
        psi: field.rho().iter().map(|z| z * dx).collect(),
    }
}

pub fn devectorize(state: &VectorizedState, time: f64) -> Result<DensityField> {
    let n = state.grid.n_points();
    let dx = state.grid.dx();
    let rho = ComplexMatrix::from_row_major(n, n, state.psi.iter().map(|z| z / dx).collect())?;
    DensityField::new(state.grid.clone(), rho, time)
}

#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    grid: GridSpec,
    matrix: ComplexMatrix,
    hbar: f64,
}

impl EffectiveHamiltonian {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// `exp(-i H̃ t / hbar)`.
    pub fn propagator(&self, t: f64) -> ComplexMatrix {
        expm(&self.matrix.scale(-I * t / self.hbar))
    }
}

pub fn build_effective_hamiltonian(grid: &GridSpec, params: &GrwParams) -> Result<EffectiveHamiltonian> {
    build_effective_hamiltonian_capped(grid, params, DEFAULT_ORACLE_CAP)
}

pub fn build_effective_hamiltonian_capped(
    grid: &GridSpec,
    params: &GrwParams,
    cap: usize,
) -> Result<EffectiveHamiltonian> {
    if grid.n_points() > cap {
        return Err(Error::OracleCap {
            n_points: grid.n_points(),
            cap,
        });
    }
    let h = Hamiltonian::new(grid, params)?;
    Ok(EffectiveHamiltonian {
        grid: grid.clone(),
        matrix: assemble(&h, &grid.points(), params),
        hbar: params.hbar,
    })
}

/// H̃ from a tridiagonal H and explicit grid positions.
pub(crate) fn assemble(h: &Hamiltonian, xs: &[f64], params: &GrwParams) -> ComplexMatrix {
    let n = h.dim();
    let hd = h.to_dense();
    let hbl = params.hbar * params.lambda;
    let mut out = ComplexMatrix::zeros(n * n, n * n);
    for m in 0..n {
        for k in 0..n {
            let row = m * n + k;
            // H ⊗ I
            for mp in m.saturating_sub(1)..(m + 2).min(n) {
                out[(row, mp * n + k)] += hd[(m, mp)];
            }
            // -I ⊗ Hᵀ
            for kp in k.saturating_sub(1)..(k + 2).min(n) {
                out[(row, m * n + kp)] -= hd[(kp, k)];
            }
            out[(row, row)] += I * hbl * (gaussian_overlap(params.r_c, xs[m], xs[k]) - 1.0);
        }
    }
    out
}

pub fn evolve_exponential(state: &VectorizedState, h: &EffectiveHamiltonian, t: f64) -> Result<VectorizedState> {
    if state.grid != h.grid {
        return Err(Error::Dimension("state and effective Hamiltonian grids differ".into()));
    }
    if t == 0.0 {
        return Ok(state.clone());
    }
    let psi = h.propagator(t).mul_vec(&state.psi)?;
    Ok(VectorizedState {
        grid: state.grid.clone(),
        psi,
    })
}

/// Vectorize, propagate to `t_final` and devectorize.
pub fn evolve(field: &DensityField, params: &GrwParams, t_final: f64) -> Result<DensityField> {
    let h = build_effective_hamiltonian(field.grid(), params)?;
    let out = evolve_exponential(&vectorize(field), &h, t_final - field.time())?;
    devectorize(&out, t_final)
}

/// Padé coefficients b_0..b_13 for the degree-13 approximant.
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// 1-norm thresholds below which degrees 3, 5, 7, 9 already reach unit roundoff.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

fn pade_coeffs(m: usize) -> &'static [f64] {
    const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
    const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
    const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
    const B9: [f64; 10] = [
        17643225600.0,
        8821612800.0,
        2075673600.0,
        302702400.0,
        30270240.0,
        2162160.0,
        110880.0,
        3960.0,
        90.0,
        1.0,
    ];
    match m {
        3 => &B3,
        5 => &B5,
        7 => &B7,
        9 => &B9,
        _ => &B13,
    }
}

fn one_norm(a: &Array2<C64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with Padé approximants
/// (Higham 2005). The thresholds bound the relative backward error by the
/// double-precision unit roundoff.
pub fn expm(a: &ComplexMatrix) -> ComplexMatrix {
    let a = a.view().to_owned();
    let n = a.nrows();
    let eye = Array2::<C64>::eye(n);
    let norm = one_norm(&a);
    let a2 = a.dot(&a);

    for &(m, theta) in &THETA {
        if norm <= theta {
            let b = pade_coeffs(m);
            let mut powers = vec![eye.clone(), a2.clone()];
            while powers.len() <= m / 2 {
                let next = powers.last().unwrap().dot(&a2);
                powers.push(next);
            }
            let mut u = Array2::<C64>::zeros((n, n));
            let mut v = Array2::<C64>::zeros((n, n));
            for (j, p) in powers.iter().enumerate() {
                u.scaled_add(C64::new(b[2 * j + 1], 0.0), p);
                v.scaled_add(C64::new(b[2 * j], 0.0), p);
            }
            return ComplexMatrix::from_array(solve_pade(&a.dot(&u), &v));
        }
    }

    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scale = C64::new(2f64.powi(-s), 0.0);
    let a1 = a.mapv(|z| z * scale);
    let a2 = a2.mapv(|z| z * scale * scale);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = &B13;
    let c = |x: f64| C64::new(x, 0.0);

    let mut inner = a6.mapv(|z| z * c(b[13]));
    inner.scaled_add(c(b[11]), &a4);
    inner.scaled_add(c(b[9]), &a2);
    let mut u = a6.dot(&inner);
    u.scaled_add(c(b[7]), &a6);
    u.scaled_add(c(b[5]), &a4);
    u.scaled_add(c(b[3]), &a2);
    u.scaled_add(c(b[1]), &eye);
    let u = a1.dot(&u);

    let mut inner = a6.mapv(|z| z * c(b[12]));
    inner.scaled_add(c(b[10]), &a4);
    inner.scaled_add(c(b[8]), &a2);
    let mut v = a6.dot(&inner);
    v.scaled_add(c(b[6]), &a6);
    v.scaled_add(c(b[4]), &a4);
    v.scaled_add(c(b[2]), &a2);
    v.scaled_add(c(b[0]), &eye);

    let mut r = solve_pade(&u, &v);
    for _ in 0..s {
        r = r.dot(&r);
    }
    ComplexMatrix::from_array(r)
}

/// Solves `(V - U) X = V + U` by LU with partial pivoting.
fn solve_pade(u: &Array2<C64>, v: &Array2<C64>) -> Array2<C64> {
    let n = u.nrows();
    let lhs = nalgebra::DMatrix::from_fn(n, n, |i, j| v[(i, j)] - u[(i, j)]);
    let rhs = nalgebra::DMatrix::from_fn(n, n, |i, j| v[(i, j)] + u[(i, j)]);
    let x = lhs
        .lu()
        .solve(&rhs)
        .expect("Padé denominator is nonsingular within the degree thresholds");
    Array2::from_shape_fn((n, n), |(i, j)| x[(i, j)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{damping_rate, Potential};
    use approx::assert_abs_diff_eq;

    fn gaussian(grid: &GridSpec, x0: f64, sigma: f64, p0: f64) -> DensityField {
        let psi: Vec<C64> = grid
            .points()
            .iter()
            .map(|&x| C64::from_polar((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), p0 * x))
            .collect();
        DensityField::from_pure(grid.clone(), &psi)
            .unwrap()
            .scaled_to_unit_trace()
            .unwrap()
    }

    #[test]
    fn vectorize_round_trip_and_trace() {
        let g = GridSpec::symmetric(12, 4.0).unwrap();
        let f = gaussian(&g, 0.3, 0.9, 1.2);
        let v = vectorize(&f);
        let back = devectorize(&v, 0.0).unwrap();
        assert!(back.max_abs_diff(&f).unwrap() <= 1e-14 * f.rho().max_abs());
        assert_abs_diff_eq!(v.trace().re, f.trace(), epsilon = 1e-14);
    }

    #[test]
    fn basis_state_has_single_entry() {
        let g = GridSpec::new(8, 0.0, 7.0).unwrap();
        let mut rho = ComplexMatrix::zeros(8, 8);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let v = vectorize(&DensityField::new(g, rho, 0.0).unwrap());
        let nonzero: Vec<usize> = (0..64).filter(|&k| v.psi()[k] != C64::new(0.0, 0.0)).collect();
        assert_eq!(nonzero, vec![0]);
    }

    #[test]
    fn two_point_matrix_by_hand() {
        // H = [[d, o], [o, d]] with V = 0: d = hbar^2/(m dx^2), o = -d/2
        let (dx, hbar, lambda, r_c) = (0.5, 1.0, 0.7, 1.0);
        let d = hbar * hbar / dx / dx;
        let o = -0.5 * d;
        let h = Hamiltonian::from_parts(vec![d, d], o, hbar);
        let params = GrwParams {
            lambda,
            r_c,
            ..GrwParams::default()
        };
        let xs = [0.0, dx];
        let got = assemble(&h, &xs, &params);
        let g = (-dx * dx / (4.0 * r_c * r_c)).exp();
        let z = C64::new(0.0, 0.0);
        let r = |x: f64| C64::new(x, 0.0);
        // basis order: (0,0), (0,1), (1,0), (1,1)
        let damp = |gg: f64| I * hbar * lambda * (gg - 1.0);
        let want = [
            [damp(1.0), -r(o), r(o), z],
            [-r(o), damp(g), z, r(o)],
            [r(o), z, damp(g), -r(o)],
            [z, r(o), -r(o), damp(1.0)],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((got[(i, j)] - want[i][j]).norm() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn commutator_action_without_collapse() {
        let g = GridSpec::symmetric(10, 3.0).unwrap();
        let p = GrwParams::default()
            .with_lambda(0.0)
            .with_potential(Potential::Harmonic { omega: 1.3 });
        let ht = build_effective_hamiltonian(&g, &p).unwrap();
        assert!(ht.matrix().hermiticity_residue() < 1e-10);
        let f = gaussian(&g, 0.5, 0.8, 0.4);
        let act = ht.matrix().mul_vec(vectorize(&f).psi()).unwrap();
        let h = Hamiltonian::new(&g, &p).unwrap().to_dense();
        let comm = h.matmul(f.rho()).unwrap().sub(&f.rho().matmul(&h).unwrap()).unwrap();
        let want = vectorize(&DensityField::new(g, comm, 0.0).unwrap());
        for (a, b) in act.iter().zip(want.psi()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn anti_hermitian_part_is_the_damping() {
        let g = GridSpec::symmetric(9, 3.0).unwrap();
        let p = GrwParams::default().with_lambda(0.8);
        let ht = build_effective_hamiltonian(&g, &p).unwrap();
        let diff = ht.matrix().sub(&ht.matrix().conj_transpose()).unwrap();
        let xs = g.points();
        let n = 9;
        for a in 0..n * n {
            for b in 0..n * n {
                let want = if a == b {
                    -2.0 * I * damping_rate(&p, xs[a / n], xs[a % n])
                } else {
                    C64::new(0.0, 0.0)
                };
                assert!((diff[(a, b)] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn no_kinetic_is_diagonal_damping() {
        let g = GridSpec::symmetric(8, 3.0).unwrap();
        let p = GrwParams::default().without_kinetic();
        let ht = build_effective_hamiltonian(&g, &p).unwrap();
        let xs = g.points();
        for a in 0..64 {
            for b in 0..64 {
                let want = if a == b {
                    -I * damping_rate(&p, xs[a / 8], xs[a % 8])
                } else {
                    C64::new(0.0, 0.0)
                };
                assert!((ht.matrix()[(a, b)] - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn cap_rejects_large_grids_before_allocation() {
        let g = GridSpec::symmetric(128, 3.0).unwrap();
        assert!(matches!(
            build_effective_hamiltonian(&g, &GrwParams::default()),
            Err(Error::OracleCap { n_points: 128, cap: 48 })
        ));
    }

    #[test]
    fn expm_matches_closed_forms() {
        // rotation generator: exp(t [[0, -1], [1, 0]]) at several norms
        for &t in &[1e-3, 0.2, 0.9, 2.0, 5.0, 40.0] {
            let a = ComplexMatrix::from_fn(2, 2, |(i, j)| match (i, j) {
                (0, 1) => C64::new(-t, 0.0),
                (1, 0) => C64::new(t, 0.0),
                _ => C64::new(0.0, 0.0),
            });
            let e = expm(&a);
            assert!((e[(0, 0)] - C64::new(t.cos(), 0.0)).norm() < 1e-13);
            assert!((e[(1, 0)] - C64::new(t.sin(), 0.0)).norm() < 1e-13);
        }
        let diag: Vec<C64> = vec![C64::new(-3.0, 2.0), C64::new(0.5, -7.0), C64::new(0.0, 0.0)];
        let e = expm(&ComplexMatrix::from_diag(&diag));
        for (k, z) in diag.iter().enumerate() {
            assert!((e[(k, k)] - z.exp()).norm() < 1e-13 * z.exp().norm().max(1.0));
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let g = GridSpec::symmetric(8, 3.0).unwrap();
        let ht = build_effective_hamiltonian(&g, &GrwParams::default()).unwrap();
        let s = vectorize(&gaussian(&g, 0.0, 1.0, 0.0));
        assert_eq!(evolve_exponential(&s, &ht, 0.0).unwrap(), s);
    }

    #[test]
    fn von_neumann_limit_matches_eigen_propagator() {
        let g = GridSpec::symmetric(12, 4.0).unwrap();
        let p = GrwParams::default()
            .with_lambda(0.0)
            .with_potential(Potential::Harmonic { omega: 1.0 });
        let f = gaussian(&g, 0.7, 0.9, 0.0);
        let out = evolve(&f, &p, 0.8).unwrap();
        let u = Hamiltonian::new(&g, &p).unwrap().propagator(0.8);
        let want = u.matmul(f.rho()).unwrap().matmul(&u.conj_transpose()).unwrap();
        assert!(out.rho().max_abs_diff(&want).unwrap() < 1e-9);
        assert_abs_diff_eq!(out.purity(), f.purity(), epsilon = 1e-10);
        assert_abs_diff_eq!(out.trace(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn pure_decay_matches_closed_form() {
        let g = GridSpec::symmetric(12, 5.0).unwrap();
        let p = GrwParams::default().without_kinetic();
        let f = gaussian(&g, 0.0, 1.5, 0.0);
        let out = evolve(&f, &p, 3.0).unwrap();
        let xs = g.points();
        for i in 0..12 {
            for j in 0..12 {
                let want = f.get(i, j) * (-3.0 * damping_rate(&p, xs[i], xs[j])).exp();
                assert!((out.get(i, j) - want).norm() <= 1e-10 * f.rho().max_abs());
            }
        }
    }
}
