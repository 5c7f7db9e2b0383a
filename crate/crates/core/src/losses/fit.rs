//! Finite-difference gradients and a backtracking gradient-descent fitter
//! that recovers warp parameters by minimizing the transformation loss
//! between re-rendered maps and a bundle's ground truth.

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, MapField, MapRole, RangeTag};
use crate::losses::{sdd_core_for_fit, UvLossMode};
use crate::synth::{build_surface, render_bundle, SampleBundle, WarpParams};

/// Central-difference gradient of `objective` at `params`.
pub fn finite_diff_grad<F>(mut objective: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(eps > 0.0) {
        return Err(Error::Argument(format!("finite-difference step {eps} must be positive")));
    }
    let mut grad = Vec::with_capacity(params.len());
    let mut probe = params.to_vec();
    for k in 0..params.len() {
        probe[k] = params[k] + eps;
        let hi = objective(&probe)?;
        probe[k] = params[k] - eps;
        let lo = objective(&probe)?;
        probe[k] = params[k];
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {k}")));
        }
        grad.push((hi - lo) / (2.0 * eps));
    }
    Ok(grad)
}

/// Fitter settings: which parameters move, the optimizer constants, and the
/// render resolution the candidate maps are produced at.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Free parameter names, see `WarpParams::named_fields`.
    pub free: Vec<String>,
    pub init: Vec<f64>,
    pub max_iters: usize,
    /// Central-difference step.
    pub eps: f64,
    /// Initial line-search step.
    pub step0: f64,
    pub fit_h: usize,
    pub fit_w: usize,
    pub grid_n: usize,
    pub uv_mode: UvLossMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            free: vec!["curl".into()],
            init: vec![0.0],
            max_iters: 60,
            eps: 1e-3,
            step0: 0.5,
            fit_h: 128,
            fit_w: 128,
            grid_n: 33,
            uv_mode: UvLossMode::default(),
        }
    }
}

/// Outcome of one fit: the final parameter set, the accepted loss trace
/// (strictly decreasing after the baseline entry) and the evaluation budget
/// spent.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FitResult {
    pub params: WarpParams,
    pub free: Vec<String>,
    pub values: Vec<f64>,
    pub loss_trace: Vec<(usize, f64)>,
    pub converged: bool,
    pub evaluations: usize,
}

const GRAD_TOL: f64 = 1e-6;
const STEP_FLOOR: f64 = 1e-8;
const MAX_FREE: usize = 12;

/// Characteristic magnitude of each fittable parameter. The optimizer works
/// in units of these scales so one step size suits amplitudes (~0.05) and
/// curvatures (~1) alike.
fn param_scale(name: &str) -> f64 {
    if name.starts_with("sine") {
        if name.ends_with("_amp") {
            return 0.05;
        }
        if name.ends_with("_freq") {
            return 0.5;
        }
        return 1.0; // phase
    }
    match name {
        "curl" => 1.0,
        "rot_x" | "rot_y" | "rot_z" => 0.3,
        "trans_x" | "trans_y" | "trans_z" => 0.1,
        "distance" => 0.5,
        "focal" => 50.0,
        _ => 1.0,
    }
}

struct Reference {
    uv: MapField,
    deform: MapField,
    mask: MapField,
    film_pixels: usize,
}

/// Fit the named free parameters of `bundle.meta.params` so that re-rendered
/// UV/deformation maps match the bundle's ground truth under the
/// transformation loss. Gradient descent with central differences and a
/// halving line search; stops on `max_iters`, the step floor, or a vanishing
/// gradient.
pub fn fit_warp_params(bundle: &SampleBundle, config: &FitConfig) -> Result<FitResult> {
    if config.free.is_empty() || config.free.len() > MAX_FREE {
        return Err(Error::Argument(format!(
            "free parameter count {} outside 1..={MAX_FREE}",
            config.free.len()
        )));
    }
    if config.free.len() != config.init.len() {
        return Err(Error::Argument("init length must match the free parameter list".into()));
    }
    let base = &bundle.meta.params;
    for name in &config.free {
        base.get_named(name)?;
    }

    let reference = make_reference(bundle, config.fit_h, config.fit_w)?;
    // A constant texture: the objective only consumes geometry maps.
    let texture = ImageGrid::constant(2, 2, 1, RangeTag::Unit, 0.5)?;
    let scales: Vec<f64> = config.free.iter().map(|n| param_scale(n)).collect();

    let mut evaluations = 0usize;
    // The optimizer sees scale-normalized coordinates.
    let mut objective = |scaled: &[f64]| -> Result<f64> {
        evaluations += 1;
        let mut params = base.clone();
        for ((name, &v), &s) in config.free.iter().zip(scaled).zip(&scales) {
            params.set_named(name, v * s)?;
        }
        let mesh = build_surface(&params, config.grid_n)?;
        let candidate = render_bundle(&mesh, &texture, &params, config.fit_h, config.fit_w)?;
        trans_objective(&candidate, &reference, config.uv_mode)
    };

    let mut point: Vec<f64> = config.init.iter().zip(&scales).map(|(v, s)| v / s).collect();
    let mut value = objective(&point)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("objective at the initial point".into()));
    }
    let mut trace = vec![(0usize, value)];
    let mut converged = false;

    for iter in 1..=config.max_iters {
        let grad = finite_diff_grad(&mut objective, &point, config.eps)?;
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gnorm < GRAD_TOL {
            converged = true;
            break;
        }
        let mut step = config.step0;
        let mut accepted = false;
        while step >= STEP_FLOOR {
            let candidate: Vec<f64> =
                point.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let cv = objective(&candidate).unwrap_or(f64::INFINITY);
            if cv < value {
                point = candidate;
                value = cv;
                trace.push((iter, value));
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Line search exhausted: no descent direction at this scale.
            converged = true;
            break;
        }
    }

    let values: Vec<f64> = point.iter().zip(&scales).map(|(v, s)| v * s).collect();
    let mut params = base.clone();
    for (name, &v) in config.free.iter().zip(&values) {
        params.set_named(name, v)?;
    }
    Ok(FitResult {
        params,
        free: config.free.clone(),
        values,
        loss_trace: trace,
        converged,
        evaluations,
    })
}

/// Transformation loss of a rendered candidate against the reference maps,
/// plus a quadratic penalty when the candidate stops covering the reference
/// film area (otherwise shrinking coverage would shrink the loss).
fn trans_objective(candidate: &SampleBundle, reference: &Reference, mode: UvLossMode) -> Result<f64> {
    let (h, w) = (reference.mask.height(), reference.mask.width());
    let mut used = 0usize;
    for i in 0..h {
        for j in 0..w {
            if reference.mask.is_film(i, j)
                && reference.uv.is_valid(i, j)
                && candidate.uv.is_valid(i, j)
            {
                used += 1;
            }
        }
    }
    if used == 0 {
        return Ok(12.0);
    }
    let df_factors = [2.0 / w as f64, 2.0 / h as f64];
    let (s, d, f, _) =
        sdd_core_for_fit(&candidate.deform, &reference.deform, &reference.mask, &df_factors)?;
    let ldf = s + d + f;
    let luv = match mode {
        UvLossMode::ShiftDisturbDiff => {
            let (s, d, f, _) =
                sdd_core_for_fit(&candidate.uv, &reference.uv, &reference.mask, &[2.0, 2.0])?;
            s + d + f
        }
        UvLossMode::PlainL1 => {
            crate::losses::l1_core_for_fit(&candidate.uv, &reference.uv, &reference.mask, &[2.0, 2.0])?.0
        }
    };
    let frac = used as f64 / reference.film_pixels as f64;
    let penalty = 10.0 * (0.95 - frac).max(0.0).powi(2);
    Ok(ldf + luv + penalty)
}

/// Ground-truth maps at the fit resolution. Same-size bundles pass through;
/// anything else downsamples with validity-weighted bilinear gathering, and
/// the deformation map is rebuilt from the downsampled UV so its pixel units
/// match the fit frame.
fn make_reference(bundle: &SampleBundle, fit_h: usize, fit_w: usize) -> Result<Reference> {
    let (uv, mask) = if bundle.uv.height() == fit_h && bundle.uv.width() == fit_w {
        (bundle.uv.clone(), bundle.bgmask.clone())
    } else {
        downsample_uv(&bundle.uv, &bundle.bgmask, fit_h, fit_w)?
    };
    let (h, w) = (fit_h, fit_w);
    let mut deform_data = vec![0.0f32; h * w * 2];
    let mut film_pixels = 0usize;
    for i in 0..h {
        for j in 0..w {
            if mask.is_film(i, j) && uv.is_valid(i, j) {
                let px = i * w + j;
                deform_data[px * 2] = uv.get(i, j, 0) * w as f32 - (j as f32 + 0.5);
                deform_data[px * 2 + 1] = uv.get(i, j, 1) * h as f32 - (i as f32 + 0.5);
                film_pixels += 1;
            }
        }
    }
    if film_pixels == 0 {
        return Err(Error::Argument("reference maps have no film pixels".into()));
    }
    let deform = MapField::new(MapRole::Deform, h, w, 2, deform_data, uv.validity().to_vec())?;
    Ok(Reference { uv, deform, mask, film_pixels })
}

fn downsample_uv(
    uv: &MapField,
    mask: &MapField,
    fit_h: usize,
    fit_w: usize,
) -> Result<(MapField, MapField)> {
    let (sh, sw) = (uv.height(), uv.width());
    let mut data = vec![0.0f32; fit_h * fit_w * 2];
    let mut valid = vec![false; fit_h * fit_w];
    let mut mask_data = vec![0.0f32; fit_h * fit_w];
    let sy = sh as f64 / fit_h as f64;
    let sx = sw as f64 / fit_w as f64;
    for i in 0..fit_h {
        let y = (i as f64 + 0.5) * sy - 0.5;
        for j in 0..fit_w {
            let x = (j as f64 + 0.5) * sx - 0.5;
            let i0 = y.floor().clamp(0.0, (sh - 1) as f64) as usize;
            let j0 = x.floor().clamp(0.0, (sw - 1) as f64) as usize;
            let i1 = (i0 + 1).min(sh - 1);
            let j1 = (j0 + 1).min(sw - 1);
            let fy = (y - i0 as f64).clamp(0.0, 1.0);
            let fx = (x - j0 as f64).clamp(0.0, 1.0);
            let neighbors = [
                (i0, j0, (1.0 - fy) * (1.0 - fx)),
                (i0, j1, (1.0 - fy) * fx),
                (i1, j0, fy * (1.0 - fx)),
                (i1, j1, fy * fx),
            ];
            let mut acc = [0.0f64; 2];
            let mut weight = 0.0f64;
            for (si, sj, wgt) in neighbors {
                if wgt > 0.0 && mask.is_film(si, sj) && uv.is_valid(si, sj) {
                    acc[0] += wgt * uv.get(si, sj, 0) as f64;
                    acc[1] += wgt * uv.get(si, sj, 1) as f64;
                    weight += wgt;
                }
            }
            // Only pixels fully supported by film survive; borders erode.
            if weight >= 0.999 {
                let px = i * fit_w + j;
                data[px * 2] = (acc[0] / weight) as f32;
                data[px * 2 + 1] = (acc[1] / weight) as f32;
                valid[px] = true;
                mask_data[px] = 1.0;
            }
        }
    }
    let uv_ds = MapField::new(MapRole::Uv, fit_h, fit_w, 2, data, valid)?;
    let mask_ds = MapField::new(
        MapRole::Mask,
        fit_h,
        fit_w,
        1,
        mask_data,
        vec![true; fit_h * fit_w],
    )?;
    Ok((uv_ds, mask_ds))
}
