//! The training objective suite for dewarping and restoration, plus a
//! finite-difference parametric fitter that demonstrates the objectives drive
//! warp recovery.
//!
//! Every map norm reduces as a mean over valid film pixels (and channels), so
//! losses are resolution-independent. The bundle-level [`dewarp_loss`] first
//! rescales each map role onto a signed-unit view so magnitudes are
//! comparable across roles; the primitive operations below compute on their
//! inputs as given.

mod fit;

pub use fit::{finite_diff_grad, fit_warp_params, FitConfig, FitResult};

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, MapField, MapRole};

/// Named scalar losses of one dewarping evaluation. The sums hold exactly:
/// `lshape = l3d + lnor + ldp + lbg`, `ltrans = ldf + luv`,
/// `ldewarp = lshape + ltrans`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LossReport {
    pub l3d: f64,
    pub lnor: f64,
    pub ldp: f64,
    pub lbg: f64,
    pub lshape: f64,
    pub lshift: f64,
    pub ldisturb: f64,
    pub ldiff: f64,
    pub ldf: f64,
    pub luv: f64,
    pub ltrans: f64,
    pub ldewarp: f64,
    pub valid_pixel_count: usize,
}

/// How the UV map's loss is computed: mirroring the deformation map's
/// shift/disturb/diff structure, or a plain L1 for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UvLossMode {
    #[default]
    ShiftDisturbDiff,
    PlainL1,
}

fn check_pair(pred: &MapField, gt: &MapField, mask: &MapField) -> Result<()> {
    if !pred.same_shape(gt) {
        return Err(Error::Contract("pred and gt shapes must agree".into()));
    }
    if pred.height() != mask.height() || pred.width() != mask.width() {
        return Err(Error::Contract("mask frame mismatch".into()));
    }
    if mask.channels() != 1 {
        return Err(Error::Contract("mask must be single-channel".into()));
    }
    Ok(())
}

/// Mean absolute difference over film pixels valid in both maps, channels
/// weighted by `factors` (all ones for the public L1).
fn l1_core(
    pred: &MapField,
    gt: &MapField,
    mask: Option<&MapField>,
    factors: &[f64],
) -> Result<(f64, usize)> {
    let (h, w, c) = (pred.height(), pred.width(), pred.channels());
    let mut sum = 0.0f64;
    let mut pixels = 0usize;
    for i in 0..h {
        for j in 0..w {
            if let Some(m) = mask {
                if !m.is_film(i, j) {
                    continue;
                }
            }
            if !pred.is_valid(i, j) || !gt.is_valid(i, j) {
                continue;
            }
            for (ch, f) in factors.iter().enumerate() {
                sum += f * (pred.get(i, j, ch) as f64 - gt.get(i, j, ch) as f64).abs();
            }
            pixels += 1;
        }
    }
    if pixels == 0 {
        return Err(Error::Argument("loss over an empty pixel set".into()));
    }
    Ok((sum / (pixels * c) as f64, pixels))
}

/// L1 map loss: mean over valid film pixels and channels of `|pred - gt|`.
pub fn l1_map_loss(pred: &MapField, gt: &MapField, mask: &MapField) -> Result<f64> {
    check_pair(pred, gt, mask)?;
    l1_core(pred, gt, Some(mask), &vec![1.0; pred.channels()]).map(|(l, _)| l)
}

/// Shift, disturbance and de-shifted difference losses of a prediction error
/// field, channels weighted by `factors`.
///
/// With `delta = pred - gt` over valid film pixels: `lshift` is the L1 norm of
/// the per-channel mean of delta, `ldisturb` the L1 norm of the per-channel
/// population standard deviation. Per element, with `d = delta` and
/// `e = delta - mean`, the de-shifted difference contributes `min(|d|, |e|)`
/// when `d*e > 0` and zero otherwise; `ldiff` is the mean contribution over
/// valid elements.
fn sdd_core(
    pred: &MapField,
    gt: &MapField,
    mask: &MapField,
    factors: &[f64],
) -> Result<(f64, f64, f64, usize)> {
    let (h, w, c) = (pred.height(), pred.width(), pred.channels());
    let mut sums = vec![0.0f64; c];
    let mut pixels = 0usize;
    for i in 0..h {
        for j in 0..w {
            if !mask.is_film(i, j) || !pred.is_valid(i, j) || !gt.is_valid(i, j) {
                continue;
            }
            for (ch, s) in sums.iter_mut().enumerate() {
                *s += pred.get(i, j, ch) as f64 - gt.get(i, j, ch) as f64;
            }
            pixels += 1;
        }
    }
    if pixels == 0 {
        return Err(Error::Argument("loss over an empty pixel set".into()));
    }
    let means: Vec<f64> = sums.iter().map(|s| s / pixels as f64).collect();

    let mut vars = vec![0.0f64; c];
    let mut contrib = 0.0f64;
    for i in 0..h {
        for j in 0..w {
            if !mask.is_film(i, j) || !pred.is_valid(i, j) || !gt.is_valid(i, j) {
                continue;
            }
            for ch in 0..c {
                let d = pred.get(i, j, ch) as f64 - gt.get(i, j, ch) as f64;
                let e = d - means[ch];
                vars[ch] += e * e;
                if d * e > 0.0 {
                    contrib += factors[ch] * d.abs().min(e.abs());
                }
            }
        }
    }
    let lshift: f64 = means.iter().zip(factors).map(|(m, f)| (f * m).abs()).sum();
    let ldisturb: f64 = vars
        .iter()
        .zip(factors)
        .map(|(v, f)| f * (v / pixels as f64).sqrt())
        .sum();
    let ldiff = contrib / (pixels * c) as f64;
    Ok((lshift, ldisturb, ldiff, pixels))
}

/// Public shift/disturb/diff on a prediction-vs-truth map pair.
pub fn shift_disturb_diff(
    pred: &MapField,
    gt: &MapField,
    mask: &MapField,
) -> Result<(f64, f64, f64)> {
    check_pair(pred, gt, mask)?;
    sdd_core(pred, gt, mask, &vec![1.0; pred.channels()]).map(|(s, d, f, _)| (s, d, f))
}

/// Deformation-map loss: the sum of the three shift/disturb/diff components.
pub fn df_loss(pred: &MapField, gt: &MapField, mask: &MapField) -> Result<f64> {
    if pred.role() != MapRole::Deform || gt.role() != MapRole::Deform {
        return Err(Error::Contract("df_loss expects DEFORM maps".into()));
    }
    let (s, d, f) = shift_disturb_diff(pred, gt, mask)?;
    Ok(s + d + f)
}

/// UV-map loss, structured like the deformation loss by default.
pub fn uv_loss(pred: &MapField, gt: &MapField, mask: &MapField, mode: UvLossMode) -> Result<f64> {
    if pred.role() != MapRole::Uv || gt.role() != MapRole::Uv {
        return Err(Error::Contract("uv_loss expects UV maps".into()));
    }
    match mode {
        UvLossMode::ShiftDisturbDiff => {
            let (s, d, f) = shift_disturb_diff(pred, gt, mask)?;
            Ok(s + d + f)
        }
        UvLossMode::PlainL1 => l1_map_loss(pred, gt, mask),
    }
}

/// Transformation-module loss: `ldf + luv`.
pub fn trans_loss(
    pred_uv: &MapField,
    pred_df: &MapField,
    gt_uv: &MapField,
    gt_df: &MapField,
    mask: &MapField,
    mode: UvLossMode,
) -> Result<f64> {
    Ok(df_loss(pred_df, gt_df, mask)? + uv_loss(pred_uv, gt_uv, mask, mode)?)
}

/// The four shape maps of one prediction or ground truth.
#[derive(Debug, Clone, Copy)]
pub struct ShapeMaps<'a> {
    pub coord3d: &'a MapField,
    pub normal: &'a MapField,
    pub depth: &'a MapField,
    pub bg: &'a MapField,
}

impl ShapeMaps<'_> {
    fn check_roles(&self) -> Result<()> {
        for (field, role) in [
            (self.coord3d, MapRole::Coord3d),
            (self.normal, MapRole::Normal),
            (self.depth, MapRole::Depth),
            (self.bg, MapRole::Mask),
        ] {
            if field.role() != role {
                return Err(Error::Contract(format!(
                    "expected {role:?} map, got {:?}",
                    field.role()
                )));
            }
        }
        Ok(())
    }
}

/// Per-map L1 losses of the multi-map module and their sum.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ShapeLosses {
    pub l3d: f64,
    pub lnor: f64,
    pub ldp: f64,
    pub lbg: f64,
    pub lshape: f64,
}

/// `lshape = l3d + lnor + ldp + lbg`. The background loss runs over the full
/// frame; the other three are filtered by the mask.
pub fn shape_loss(pred: &ShapeMaps, gt: &ShapeMaps, mask: &MapField) -> Result<ShapeLosses> {
    pred.check_roles()?;
    gt.check_roles()?;
    let l3d = l1_map_loss(pred.coord3d, gt.coord3d, mask)?;
    let lnor = l1_map_loss(pred.normal, gt.normal, mask)?;
    let ldp = l1_map_loss(pred.depth, gt.depth, mask)?;
    let (lbg, _) = l1_core(pred.bg, gt.bg, None, &[1.0])?;
    Ok(ShapeLosses { l3d, lnor, ldp, lbg, lshape: l3d + lnor + ldp + lbg })
}

/// All six maps of one side of a dewarping comparison.
#[derive(Debug, Clone, Copy)]
pub struct MapSet<'a> {
    pub shape: ShapeMaps<'a>,
    pub uv: &'a MapField,
    pub deform: &'a MapField,
}

/// Assemble the full loss report on signed-unit views of every map:
/// UV maps scale as `2u - 1`, deformations by `2 / frame size`, 3D
/// coordinates and depth by the affine sending the ground truth's valid film
/// range to `[-1, 1]`, masks as `2m - 1`, normals are already signed. Since
/// the same affine applies to prediction and truth, only its scale factor
/// reaches the losses.
pub fn dewarp_loss(
    pred: &MapSet,
    gt: &MapSet,
    mask: &MapField,
    mode: UvLossMode,
) -> Result<LossReport> {
    pred.shape.check_roles()?;
    gt.shape.check_roles()?;
    if pred.uv.role() != MapRole::Uv
        || gt.uv.role() != MapRole::Uv
        || pred.deform.role() != MapRole::Deform
        || gt.deform.role() != MapRole::Deform
    {
        return Err(Error::Contract("dewarp_loss maps carry unexpected roles".into()));
    }

    let coord_factors = signed_factors(gt.shape.coord3d, mask)?;
    let depth_factors = signed_factors(gt.shape.depth, mask)?;
    check_pair(pred.shape.coord3d, gt.shape.coord3d, mask)?;
    check_pair(pred.shape.normal, gt.shape.normal, mask)?;
    check_pair(pred.shape.depth, gt.shape.depth, mask)?;
    check_pair(pred.uv, gt.uv, mask)?;
    check_pair(pred.deform, gt.deform, mask)?;

    let (l3d, _) = l1_core(pred.shape.coord3d, gt.shape.coord3d, Some(mask), &coord_factors)?;
    let (lnor, _) = l1_core(pred.shape.normal, gt.shape.normal, Some(mask), &[1.0, 1.0, 1.0])?;
    let (ldp, _) = l1_core(pred.shape.depth, gt.shape.depth, Some(mask), &depth_factors)?;
    let (lbg, _) = l1_core(pred.shape.bg, gt.shape.bg, None, &[2.0])?;
    let lshape = l3d + lnor + ldp + lbg;

    let w = pred.deform.width() as f64;
    let h = pred.deform.height() as f64;
    let (dfs, dfd, dff, _) = sdd_core(pred.deform, gt.deform, mask, &[2.0 / w, 2.0 / h])?;
    let ldf = dfs + dfd + dff;

    let uv_factors = [2.0, 2.0];
    let (luv, uv_pixels) = match mode {
        UvLossMode::ShiftDisturbDiff => {
            let (s, d, f, n) = sdd_core(pred.uv, gt.uv, mask, &uv_factors)?;
            (s + d + f, n)
        }
        UvLossMode::PlainL1 => l1_core(pred.uv, gt.uv, Some(mask), &uv_factors)?,
    };
    let ltrans = ldf + luv;

    Ok(LossReport {
        l3d,
        lnor,
        ldp,
        lbg,
        lshape,
        lshift: dfs,
        ldisturb: dfd,
        ldiff: dff,
        ldf,
        luv,
        ltrans,
        ldewarp: lshape + ltrans,
        valid_pixel_count: uv_pixels,
    })
}

pub(crate) fn sdd_core_for_fit(
    pred: &MapField,
    gt: &MapField,
    mask: &MapField,
    factors: &[f64],
) -> Result<(f64, f64, f64, usize)> {
    check_pair(pred, gt, mask)?;
    sdd_core(pred, gt, mask, factors)
}

pub(crate) fn l1_core_for_fit(
    pred: &MapField,
    gt: &MapField,
    mask: &MapField,
    factors: &[f64],
) -> Result<(f64, usize)> {
    check_pair(pred, gt, mask)?;
    l1_core(pred, gt, Some(mask), factors)
}

/// Scale factors of the per-channel affine mapping the ground truth's valid
/// film range onto `[-1, 1]`; 1.0 where the range is degenerate.
fn signed_factors(gt: &MapField, mask: &MapField) -> Result<Vec<f64>> {
    let c = gt.channels();
    let mut lo = vec![f64::INFINITY; c];
    let mut hi = vec![f64::NEG_INFINITY; c];
    let mut seen = false;
    for i in 0..gt.height() {
        for j in 0..gt.width() {
            if i < mask.height() && j < mask.width() && mask.is_film(i, j) && gt.is_valid(i, j) {
                seen = true;
                for ch in 0..c {
                    let v = gt.get(i, j, ch) as f64;
                    lo[ch] = lo[ch].min(v);
                    hi[ch] = hi[ch].max(v);
                }
            }
        }
    }
    if !seen {
        return Err(Error::Argument("loss over an empty pixel set".into()));
    }
    Ok(lo
        .iter()
        .zip(&hi)
        .map(|(&l, &h)| if h - l > 1e-9 { 2.0 / (h - l) } else { 1.0 })
        .collect())
}

/// Cascade recovery objective: half the sum of per-stage mean squared errors.
pub fn recover_loss(stage_outputs: &[ImageGrid], gt: &ImageGrid) -> Result<f64> {
    if stage_outputs.is_empty() {
        return Err(Error::Argument("recover_loss needs at least one stage output".into()));
    }
    let mut total = 0.0f64;
    for (idx, stage) in stage_outputs.iter().enumerate() {
        if !stage.same_shape(gt) {
            return Err(Error::Contract(format!("stage {idx} shape mismatch")));
        }
        let mse = stage
            .data()
            .iter()
            .zip(gt.data())
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum::<f64>()
            / stage.data().len() as f64;
        total += mse;
    }
    Ok(0.5 * total)
}
