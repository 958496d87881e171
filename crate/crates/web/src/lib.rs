//! WebAssembly bindings for the single-page demo in `www/`.
//!
//! Three operations, each a thin wrapper over `grw-core`:
//! [`cat_decoherence`] (|ρ(x, y)| of a two-Gaussian superposition after a
//! GRW evolution), [`cat_phase_space`] (the phase-space density at a given
//! λT) and [`jump_trajectory`] (one seeded jump trajectory).

use grw_core::limits::{fringe_visibility, to_phase_space, VisibilityProbe};
use grw_core::master::{self, stability_bound, DensityField};
use grw_core::model::GrwParams;
use grw_core::scenarios::{two_gaussian_superposition, InitialState};
use grw_core::unravel::{run_trajectory, WaveField};
use grw_core::{Error, GridSpec, Result};
use wasm_bindgen::prelude::*;

const CAT_POINTS: usize = 72;
const P_POINTS: usize = 96;

/// Row-major image plus axis ranges and two summary numbers.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    x_range: [f64; 2],
    y_range: [f64; 2],
    coherence: f64,
    purity: f64,
}

#[wasm_bindgen]
impl Image {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[wasm_bindgen(getter)]
    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn x_range(&self) -> Vec<f64> {
        self.x_range.to_vec()
    }

    #[wasm_bindgen(getter)]
    pub fn y_range(&self) -> Vec<f64> {
        self.y_range.to_vec()
    }

    /// Off-diagonal coherence for [`cat_decoherence`], fringe visibility for [`cat_phase_space`].
    #[wasm_bindgen(getter)]
    pub fn coherence(&self) -> f64 {
        self.coherence
    }

    #[wasm_bindgen(getter)]
    pub fn purity(&self) -> f64 {
        self.purity
    }
}

#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Trajectory {
    x: Vec<f64>,
    initial: Vec<f64>,
    last: Vec<f64>,
    jump_times: Vec<f64>,
    jump_centers: Vec<f64>,
}

#[wasm_bindgen]
impl Trajectory {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    /// |ψ(x)|² at t = 0.
    #[wasm_bindgen(getter)]
    pub fn initial(&self) -> Vec<f64> {
        self.initial.clone()
    }

    /// |ψ(x)|² at the final time.
    #[wasm_bindgen(getter, js_name = "final")]
    pub fn last(&self) -> Vec<f64> {
        self.last.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn jump_times(&self) -> Vec<f64> {
        self.jump_times.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn jump_centers(&self) -> Vec<f64> {
        self.jump_centers.clone()
    }
}

fn to_js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn cat_field(separation: f64, width: f64) -> Result<DensityField> {
    if !(separation >= 0.0 && width > 0.0) {
        return Err(Error::Domain(format!(
            "separation must be >= 0 and width > 0, got {separation} and {width}"
        )));
    }
    let half = 0.5 * separation + 4.0 * width + 3.0;
    let grid = GridSpec::symmetric(CAT_POINTS, half)?;
    two_gaussian_superposition(&grid, -0.5 * separation, 0.5 * separation, width, [[0.25; 2]; 2])
}

fn evolve_cat(separation: f64, width: f64, lambda: f64, t: f64, kinetic: bool) -> Result<DensityField> {
    let field = cat_field(separation, width)?;
    let mut params = GrwParams::default().with_lambda(lambda);
    params.kinetic = kinetic;
    params.validate()?;
    if t <= 0.0 {
        return Ok(field);
    }
    let bound = stability_bound(field.grid(), &params);
    let dt = (t / 40.0).min(0.5 * bound);
    Ok(master::evolve(&field, &params, t, dt)?.0)
}

pub fn cat_decoherence_image(separation: f64, width: f64, lambda: f64, t: f64, kinetic: bool) -> Result<Image> {
    let f = evolve_cat(separation, width, lambda, t, kinetic)?;
    let g = f.grid();
    let n = g.n_points();
    Ok(Image {
        rows: n,
        cols: n,
        data: f.rho().iter().map(|z| z.norm()).collect(),
        x_range: [g.x_min(), g.x_max()],
        y_range: [g.x_min(), g.x_max()],
        coherence: f.offdiag_coherence(1.0),
        purity: f.purity(),
    })
}

pub fn cat_phase_image(separation: f64, width: f64, lambda_t: f64) -> Result<Image> {
    let f = evolve_cat(separation, width, lambda_t, 1.0, false)?;
    let p_max = 2.5 / width;
    let p_grid = GridSpec::symmetric(P_POINTS, p_max)?;
    let pf = to_phase_space(&f, &p_grid, 1.0)?;
    let probe = VisibilityProbe::for_separation(separation.max(1e-9), 1.0);
    let g = f.grid();
    Ok(Image {
        rows: pf.values().nrows(),
        cols: pf.values().ncols(),
        data: pf.values().iter().copied().collect(),
        x_range: [g.x_min(), g.x_max()],
        y_range: [-p_max, p_max],
        coherence: fringe_visibility(&f, &probe, 1.0)?,
        purity: f.purity(),
    })
}

pub fn trajectory_record(seed: u32, lambda: f64, t_final: f64) -> Result<Trajectory> {
    let grid = GridSpec::symmetric(128, 8.0)?;
    let params = GrwParams {
        mass: 5.0,
        ..GrwParams::default().with_lambda(lambda)
    };
    params.validate()?;
    let init = InitialState::TwoGaussian {
        a1: -3.0,
        a2: 3.0,
        r: 0.8,
        weights: [[0.25; 2]; 2],
    };
    let psi0 = WaveField::new(grid, init.wave_function(&grid, 1.0)?, 0.0)?;
    let rec = run_trajectory(&psi0, &params, t_final, 0.005, u64::from(seed))?;
    Ok(Trajectory {
        x: grid.points(),
        initial: psi0.psi().iter().map(|z| z.norm_sqr()).collect(),
        last: rec.final_state.psi().iter().map(|z| z.norm_sqr()).collect(),
        jump_times: rec.jump_times,
        jump_centers: rec.jump_centers,
    })
}

/// |ρ(x, y)| of a two-Gaussian cat (centres ±separation/2, width parameter `width`) after time `t`.
#[wasm_bindgen]
pub fn cat_decoherence(separation: f64, width: f64, lambda: f64, t: f64, kinetic: bool) -> Result<Image, JsError> {
    cat_decoherence_image(separation, width, lambda, t, kinetic).map_err(to_js)
}

/// Phase-space density of the cat after localisation for `lambda_t` (kinetic term off).
#[wasm_bindgen]
pub fn cat_phase_space(separation: f64, width: f64, lambda_t: f64) -> Result<Image, JsError> {
    cat_phase_image(separation, width, lambda_t).map_err(to_js)
}

/// One jump trajectory of a cat with centres at ±3.
#[wasm_bindgen]
pub fn jump_trajectory(seed: u32, lambda: f64, t_final: f64) -> Result<Trajectory, JsError> {
    trajectory_record(seed, lambda, t_final).map_err(to_js)
}
