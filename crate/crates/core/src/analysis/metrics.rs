//! PSNR, SSIM and MS-SSIM, and the end-to-end dewarping evaluation that ties
//! map prediction, inversion and resampling together.

use crate::error::{Error, Result};
use crate::grid::{ImageGrid, MapField, RangeTag};
use crate::mapops::{
    backward_sample, best_translation, deformation_to_uv, deshift_map, merge_uv, uv_to_backward,
    Coverage,
};
use crate::quality::de_illuminate_oracle;
use crate::synth::SampleBundle;

/// PSNR is capped here so identical images report a finite number.
pub const PSNR_CAP: f64 = 99.0;

/// `10 log10(peak^2 / MSE)`, capped at 99 dB; zero MSE reports the cap.
pub fn psnr(a: &ImageGrid, b: &ImageGrid, peak: f64) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Contract("psnr needs same-shaped images".into()));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.data().len() as f64;
    Ok(psnr_from_mse(mse, peak))
}

/// The PSNR formula on a precomputed mean squared error.
pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
/// Scale weights of the standard five-level multi-scale SSIM.
const MS_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Smallest side accepted by [`ms_ssim`]: five dyadic scales with an 11-pixel
/// window need `11 * 2^4`.
const MS_MIN_SIDE: usize = 176;

fn peak_of(a: &ImageGrid) -> f64 {
    match a.range_tag() {
        RangeTag::Unit => 1.0,
        RangeTag::SignedUnit => 2.0,
    }
}

/// Single-scale SSIM with the standard 11x11 Gaussian window (sigma 1.5),
/// averaged over fully covered window positions and channels.
pub fn ssim(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Contract("ssim needs same-shaped images".into()));
    }
    if a.height() < SSIM_WINDOW || a.width() < SSIM_WINDOW {
        return Err(Error::Argument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images"
        )));
    }
    let peak = peak_of(a);
    let mut total = 0.0;
    for ch in 0..a.channels() {
        let (ssim_mean, _) = ssim_channel(&plane(a, ch), &plane(b, ch), a.height(), a.width(), peak);
        total += ssim_mean;
    }
    Ok(total / a.channels() as f64)
}

/// Five-scale MS-SSIM: contrast/structure at every scale, luminance only at
/// the coarsest, combined with the standard weights. Negative factors clamp
/// to zero before the weighted geometric mean.
pub fn ms_ssim(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Contract("ms_ssim needs same-shaped images".into()));
    }
    if a.height() < MS_MIN_SIDE || a.width() < MS_MIN_SIDE {
        return Err(Error::Argument(format!(
            "ms_ssim needs at least {MS_MIN_SIDE}x{MS_MIN_SIDE} images (5 dyadic scales x 11 window)"
        )));
    }
    let peak = peak_of(a);
    let mut total = 0.0;
    for ch in 0..a.channels() {
        let mut pa = plane(a, ch);
        let mut pb = plane(b, ch);
        let mut h = a.height();
        let mut w = a.width();
        let mut score = 1.0f64;
        for (scale, &weight) in MS_WEIGHTS.iter().enumerate() {
            let (ssim_mean, cs_mean) = ssim_channel(&pa, &pb, h, w, peak);
            let factor = if scale + 1 == MS_WEIGHTS.len() { ssim_mean } else { cs_mean };
            score *= factor.max(0.0).powf(weight);
            if scale + 1 < MS_WEIGHTS.len() {
                (pa, pb) = (halve(&pa, h, w), halve(&pb, h, w));
                h /= 2;
                w /= 2;
            }
        }
        total += score;
    }
    Ok((total / a.channels() as f64).clamp(0.0, 1.0))
}

fn plane(img: &ImageGrid, ch: usize) -> Vec<f64> {
    let c = img.channels();
    img.data().iter().skip(ch).step_by(c).map(|&v| v as f64).collect()
}

/// 2x2 mean downsampling, dropping a trailing odd row/column.
fn halve(data: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            let base = 2 * i * w + 2 * j;
            out.push((data[base] + data[base + 1] + data[base + w] + data[base + w + 1]) * 0.25);
        }
    }
    out
}

/// Mean SSIM and mean contrast-structure term over valid window positions of
/// one channel plane.
fn ssim_channel(a: &[f64], b: &[f64], h: usize, w: usize, peak: f64) -> (f64, f64) {
    let kernel = gaussian_kernel();
    let mu_a = filter_valid(a, h, w, &kernel);
    let mu_b = filter_valid(b, h, w, &kernel);
    let sq_a: Vec<f64> = a.iter().map(|v| v * v).collect();
    let sq_b: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let m_aa = filter_valid(&sq_a, h, w, &kernel);
    let m_bb = filter_valid(&sq_b, h, w, &kernel);
    let m_ab = filter_valid(&ab, h, w, &kernel);

    let c1 = (K1 * peak) * (K1 * peak);
    let c2 = (K2 * peak) * (K2 * peak);
    let mut ssim_sum = 0.0;
    let mut cs_sum = 0.0;
    for px in 0..mu_a.len() {
        let (ma, mb) = (mu_a[px], mu_b[px]);
        let va = m_aa[px] - ma * ma;
        let vb = m_bb[px] - mb * mb;
        let cov = m_ab[px] - ma * mb;
        let lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        let cs = (2.0 * cov + c2) / (va + vb + c2);
        ssim_sum += lum * cs;
        cs_sum += cs;
    }
    let n = mu_a.len() as f64;
    (ssim_sum / n, cs_sum / n)
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut kernel = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (k, slot) in kernel.iter_mut().enumerate() {
        let d = k as f64 - mid;
        *slot = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *slot;
    }
    for slot in &mut kernel {
        *slot /= sum;
    }
    kernel
}

/// Separable filtering, valid positions only: output is
/// `(h - 10) x (w - 10)`.
fn filter_valid(data: &[f64], h: usize, w: usize, kernel: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let mut rows = vec![0.0f64; h * ow];
    for i in 0..h {
        for j in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * data[i * w + j + k];
            }
            rows[i * ow + j] = acc;
        }
    }
    let oh = h - SSIM_WINDOW + 1;
    let mut out = vec![0.0f64; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * rows[(i + k) * ow + j];
            }
            out[i * ow + j] = acc;
        }
    }
    out
}

/// Whether and how a global shift is removed before metric computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeshiftMode {
    Plain,
    MapDeshift,
    ImageDeshift,
}

/// Metrics of one dewarped result against the flat film texture. When a
/// de-shift mode is requested, the plain numbers stay at the top level and
/// the de-shifted ones nest under `deshifted`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub mode: DeshiftMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deshifted: Option<Box<MetricReport>>,
}

/// Dewarp the bundle's de-illuminated photo with predicted maps and score the
/// result against the ground-truth texture over the recovered film support.
///
/// The pipeline per mode: merge the predicted UV with the one recovered from
/// the predicted deformation map, invert to a backward map, resample, and
/// compare. MAP_DESHIFT removes the mean UV error against the ground truth
/// before inversion; IMAGE_DESHIFT searches integer translations of the
/// dewarped result.
pub fn evaluate_recovery(
    bundle: &SampleBundle,
    pred_uv: &MapField,
    pred_df: &MapField,
    mode: DeshiftMode,
) -> Result<MetricReport> {
    let (h, w) = (bundle.warped.height(), bundle.warped.width());
    if pred_uv.height() != h || pred_uv.width() != w || pred_df.height() != h || pred_df.width() != w
    {
        return Err(Error::Contract("prediction maps must be image-frame aligned".into()));
    }
    // Geometry is scored on illumination-free content; shading is the
    // quality module's problem, not the dewarp's.
    let content = de_illuminate_oracle(&bundle.warped, &bundle.albedo, &bundle.bgmask)?.luminance();

    let plain = dewarp_and_score(bundle, &content, pred_uv, pred_df, false)?;
    let deshifted = match mode {
        DeshiftMode::Plain => None,
        DeshiftMode::MapDeshift => {
            Some(Box::new(dewarp_and_score(bundle, &content, pred_uv, pred_df, true)?))
        }
        DeshiftMode::ImageDeshift => {
            let (dewarped, include) = dewarp(bundle, &content, pred_uv, pred_df, false)?;
            let composite = composite_with_gt(&dewarped, &bundle.texture, &include)?;
            let (dy, dx, _) = best_translation(&bundle.texture, &composite, 8)?;
            let (ta, tb) = aligned_crops(&bundle.texture, &composite, dy, dx)?;
            Some(Box::new(MetricReport {
                psnr: psnr(&ta, &tb, 1.0)?,
                ssim: ssim(&ta, &tb)?,
                ms_ssim: ms_ssim(&ta, &tb)?,
                mode,
                deshifted: None,
            }))
        }
    };
    Ok(MetricReport { mode, deshifted, ..plain })
}

fn dewarp(
    bundle: &SampleBundle,
    content: &ImageGrid,
    pred_uv: &MapField,
    pred_df: &MapField,
    map_deshift: bool,
) -> Result<(ImageGrid, Vec<bool>)> {
    let (h, w) = (bundle.warped.height(), bundle.warped.width());
    let aux = deformation_to_uv(pred_df, &bundle.bgmask, w, h)?;
    let merged = merge_uv(pred_uv, &aux, &bundle.bgmask)?;
    let merged = if map_deshift {
        deshift_map(&merged, &bundle.uv, &bundle.bgmask)?
    } else {
        merged
    };
    let (th, tw) = (bundle.texture.height(), bundle.texture.width());
    let bmap = uv_to_backward(&merged, &bundle.bgmask, th, tw)?;
    let dewarped = backward_sample(content, &bmap, 0.0)?;
    let include = bmap.coverage().iter().map(|&c| c != Coverage::Empty).collect();
    Ok((dewarped, include))
}

fn dewarp_and_score(
    bundle: &SampleBundle,
    content: &ImageGrid,
    pred_uv: &MapField,
    pred_df: &MapField,
    map_deshift: bool,
) -> Result<MetricReport> {
    let (dewarped, include) = dewarp(bundle, content, pred_uv, pred_df, map_deshift)?;
    let foreground_psnr = masked_psnr(&dewarped, &bundle.texture, &include, 1.0)?;
    // Windowed metrics cannot skip pixels; score a composite where
    // unrecovered texture pixels take the ground-truth value and therefore
    // contribute no error.
    let composite = composite_with_gt(&dewarped, &bundle.texture, &include)?;
    Ok(MetricReport {
        psnr: foreground_psnr,
        ssim: ssim(&composite, &bundle.texture)?,
        ms_ssim: ms_ssim(&composite, &bundle.texture)?,
        mode: DeshiftMode::Plain,
        deshifted: None,
    })
}

fn masked_psnr(a: &ImageGrid, b: &ImageGrid, include: &[bool], peak: f64) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Contract("psnr needs same-shaped images".into()));
    }
    let c = a.channels();
    let mut sq = 0.0f64;
    let mut n = 0usize;
    for (px, &keep) in include.iter().enumerate() {
        if !keep {
            continue;
        }
        for ch in 0..c {
            let d = a.data()[px * c + ch] as f64 - b.data()[px * c + ch] as f64;
            sq += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Argument("psnr over an empty support".into()));
    }
    Ok(psnr_from_mse(sq / n as f64, peak))
}

fn composite_with_gt(dewarped: &ImageGrid, gt: &ImageGrid, include: &[bool]) -> Result<ImageGrid> {
    let c = gt.channels();
    let data = (0..gt.height() * gt.width())
        .flat_map(|px| {
            (0..c).map(move |ch| {
                if include[px] {
                    (px, ch, true)
                } else {
                    (px, ch, false)
                }
            })
        })
        .map(|(px, ch, keep)| {
            if keep {
                dewarped.data()[px * dewarped.channels() + ch.min(dewarped.channels() - 1)]
            } else {
                gt.data()[px * c + ch]
            }
        })
        .collect();
    ImageGrid::new(gt.height(), gt.width(), c, gt.range_tag(), data)
}

fn aligned_crops(a: &ImageGrid, b: &ImageGrid, dy: i32, dx: i32) -> Result<(ImageGrid, ImageGrid)> {
    let (h, w, c) = (a.height() as i32, a.width() as i32, a.channels());
    let i_from = 0.max(-dy);
    let i_to = h.min(h - dy);
    let j_from = 0.max(-dx);
    let j_to = w.min(w - dx);
    let (ch, cw) = ((i_to - i_from) as usize, (j_to - j_from) as usize);
    let mut da = Vec::with_capacity(ch * cw * c);
    let mut db = Vec::with_capacity(ch * cw * c);
    for i in i_from..i_to {
        for j in j_from..j_to {
            for k in 0..c {
                da.push(a.get(i as usize, j as usize, k));
                db.push(b.get((i + dy) as usize, (j + dx) as usize, k));
            }
        }
    }
    Ok((
        ImageGrid::new(ch, cw, c, a.range_tag(), da)?,
        ImageGrid::new(ch, cw, c, b.range_tag(), db)?,
    ))
}
