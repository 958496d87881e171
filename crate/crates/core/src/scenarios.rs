//! Standard initial states and named parameter presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::master::DensityField;
use crate::model::{GrwParams, Potential};
use crate::numerics::{ComplexMatrix, GridSpec, C64};

/// Largest eigenvalue deficit tolerated in the 2x2 coefficient table.
const WEIGHT_EIG_TOL: f64 = 1e-8;

/// Initial condition description, shared by presets and configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialState {
    /// `ρ(x, y) = Σ A_ij exp(-(x - a_i)^2 / r^2) exp(-(y - a_j)^2 / r^2)`.
    TwoGaussian {
        a1: f64,
        a2: f64,
        r: f64,
        weights: [[f64; 2]; 2],
    },
    /// Pure Gaussian with standard deviation `width` and mean momentum `momentum`.
    Packet { center: f64, width: f64, momentum: f64 },
}

impl InitialState {
    pub fn build(&self, grid: &GridSpec, hbar: f64) -> Result<DensityField> {
        match *self {
            InitialState::TwoGaussian { a1, a2, r, weights } => two_gaussian_superposition(grid, a1, a2, r, weights),
            InitialState::Packet { center, width, momentum } => gaussian_packet(grid, center, width, momentum, hbar),
        }
    }

    /// Wave function for pure initial states (unit norm under `dx Σ |ψ|^2`).
    pub fn wave_function(&self, grid: &GridSpec, hbar: f64) -> Result<Vec<C64>> {
        let psi: Vec<C64> = match *self {
            InitialState::Packet { center, width, momentum } => {
                check_width("width", width)?;
                grid.points().iter().map(|&x| packet_amplitude(x, center, width, momentum, hbar)).collect()
            }
            InitialState::TwoGaussian { a1, a2, r, weights } => {
                check_width("r", r)?;
                let [[a11, a12], [a21, a22]] = weights;
                let det = a11 * a22 - a12 * a21;
                if (a12 - a21).abs() > WEIGHT_EIG_TOL || det.abs() > WEIGHT_EIG_TOL * (a11 + a22).abs().max(1.0) {
                    return Err(Error::Validation(
                        "two-Gaussian weights describe a mixed state; no wave function exists".into(),
                    ));
                }
                let c1 = a11.max(0.0).sqrt();
                let c2 = a22.max(0.0).sqrt() * if a12 < 0.0 { -1.0 } else { 1.0 };
                grid.points()
                    .iter()
                    .map(|&x| C64::new(c1 * blob(x, a1, r) + c2 * blob(x, a2, r), 0.0))
                    .collect()
            }
        };
        let norm = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.dx()).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Validation("initial wave function vanishes on the grid".into()));
        }
        Ok(psi.into_iter().map(|z| z / norm).collect())
    }
}

fn check_width(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("initial.{key}"), format!("must be > 0, got {v}")))
    }
}

fn blob(x: f64, a: f64, r: f64) -> f64 {
    (-(x - a).powi(2) / (r * r)).exp()
}

fn packet_amplitude(x: f64, center: f64, width: f64, momentum: f64, hbar: f64) -> C64 {
    let norm = (2.0 * std::f64::consts::PI * width * width).powf(-0.25);
    C64::from_polar(norm * (-(x - center).powi(2) / (4.0 * width * width)).exp(), momentum * x / hbar)
}

/// Superposition (or mixture) of two Gaussians, normalized to unit trace on the grid.
pub fn two_gaussian_superposition(grid: &GridSpec, a1: f64, a2: f64, r: f64, weights: [[f64; 2]; 2]) -> Result<DensityField> {
    check_width("r", r)?;
    let [[a11, a12], [a21, a22]] = weights;
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::Validation("two-Gaussian weights must be finite".into()));
    }
    if (a12 - a21).abs() > WEIGHT_EIG_TOL {
        return Err(Error::Validation(format!("weights are not symmetric: A12 = {a12}, A21 = {a21}")));
    }
    let mean = 0.5 * (a11 + a22);
    let min_eig = mean - (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
    if min_eig < -WEIGHT_EIG_TOL {
        return Err(Error::Validation(format!("weight table has negative eigenvalue {min_eig:e}")));
    }
    let xs = grid.points();
    let g1: Vec<f64> = xs.iter().map(|&x| blob(x, a1, r)).collect();
    let g2: Vec<f64> = xs.iter().map(|&x| blob(x, a2, r)).collect();
    let n = grid.n_points();
    let rho = ComplexMatrix::from_fn(n, n, |(i, j)| {
        C64::new(a11 * g1[i] * g1[j] + a12 * g1[i] * g2[j] + a21 * g2[i] * g1[j] + a22 * g2[i] * g2[j], 0.0)
    });
    DensityField::new(grid.clone(), rho, 0.0)?.scaled_to_unit_trace()
}

/// Pure Gaussian packet `|ψ><ψ|`.
pub fn gaussian_packet(grid: &GridSpec, center: f64, width: f64, momentum: f64, hbar: f64) -> Result<DensityField> {
    let psi = InitialState::Packet { center, width, momentum }.wave_function(grid, hbar)?;
    DensityField::from_pure(grid.clone(), &psi)
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 5] = [
    "free-quantum-limit",
    "harmonic-oracle",
    "pure-decoherence",
    "two-gaussian-classical",
    "harmonic-classical",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    pub params: GrwParams,
    pub initial: InitialState,
    pub t_final: f64,
    /// Master-equation step.
    pub dt: f64,
    pub tags: Vec<String>,
}

impl Scenario {
    pub fn initial_field(&self) -> Result<DensityField> {
        self.initial.build(&self.grid, self.params.hbar)
    }

    pub fn initial_wave(&self) -> Result<Vec<C64>> {
        self.initial.wave_function(&self.grid, self.params.hbar)
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }
}

fn cat(a: f64, r: f64) -> InitialState {
    InitialState::TwoGaussian {
        a1: -a,
        a2: a,
        r,
        weights: [[0.25; 2]; 2],
    }
}

/// Named scenario.
///
/// | name | grid | physics | initial | T |
/// |---|---|---|---|---|
/// | `free-quantum-limit` | 64 on ±10 | free, λ = 0.01 | cat ±2, r = 1 | 1 |
/// | `harmonic-oracle` | 32 on ±6 | ω = 1, λ = 0.5 | packet at 1, σ = 0.707 | 1 |
/// | `pure-decoherence` | 256 on ±12 | no kinetic term, V = 0, λ = 1 | cat ±4, r = 2 | 3 |
/// | `two-gaussian-classical` | 320 on ±8 | free, m = 100, λ = 1 | cat ±5, r = 0.2 | 3 |
/// | `harmonic-classical` | 801 on ±2.3 | ω = 31.25, r_C = 1.25, λ = 1250 | cat ±1.5, r = 0.08 | 0.008 |
///
/// Unlisted constants are 1.
pub fn preset(name: &str) -> Result<Scenario> {
    let base = GrwParams::default();
    let tags = |t: &[&str]| t.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let s = match name {
        "free-quantum-limit" => Scenario {
            name: name.into(),
            grid: GridSpec::symmetric(64, 10.0)?,
            params: base.with_lambda(0.01),
            initial: cat(2.0, 1.0),
            t_final: 1.0,
            dt: 0.005,
            tags: tags(&["quantum-limit"]),
        },
        "harmonic-oracle" => Scenario {
            name: name.into(),
            grid: GridSpec::symmetric(32, 6.0)?,
            params: base.with_lambda(0.5).with_potential(Potential::Harmonic { omega: 1.0 }),
            initial: InitialState::Packet {
                center: 1.0,
                width: std::f64::consts::FRAC_1_SQRT_2,
                momentum: 0.0,
            },
            t_final: 1.0,
            dt: 0.001,
            tags: tags(&["oracle"]),
        },
        "pure-decoherence" => Scenario {
            name: name.into(),
            grid: GridSpec::symmetric(256, 12.0)?,
            params: base.without_kinetic(),
            initial: cat(4.0, 2.0),
            t_final: 3.0,
            dt: 0.01,
            tags: tags(&["oracle", "decoherence"]),
        },
        "two-gaussian-classical" => Scenario {
            name: name.into(),
            grid: GridSpec::symmetric(320, 8.0)?,
            params: GrwParams { mass: 100.0, ..base },
            initial: cat(5.0, 0.2),
            t_final: 3.0,
            dt: 0.005,
            tags: tags(&["decoherence", "classical-limit"]),
        },
        "harmonic-classical" => Scenario {
            name: name.into(),
            grid: GridSpec::symmetric(801, 2.3)?,
            params: GrwParams {
                lambda: 1250.0,
                r_c: 1.25,
                potential: Potential::Harmonic { omega: 31.25 },
                ..base
            },
            initial: cat(1.5, 0.08),
            t_final: 0.008,
            dt: 1.25e-5,
            tags: tags(&["classical-limit"]),
        },
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(s)
}
