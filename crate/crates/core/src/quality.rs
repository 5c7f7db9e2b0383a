//! Quality restoration: illumination removal and display-to-CT value
//! inversion.
//!
//! The de-illumination here is analytic. The ground-truth factorization
//! ([`de_illuminate_oracle`]) hands back the albedo the generator recorded,
//! and [`estimate_flatfield`] approximates smooth shading by heavy low-pass
//! filtering and divides it out. A pluggable [`Restorer`] contract lets a
//! learned stage slot in later; the shipped reference implementation is the
//! identity cascade.

use crate::error::{Error, Result};
use crate::grid::{HuGrid, ImageGrid, MapField, MapRole, RangeTag, HU_MAX, HU_MIN};

/// Display window: the HU interval `[wl - ww/2, wl + ww/2]` maps to gray
/// `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    /// Window width in HU, strictly positive.
    pub ww: f64,
    /// Window center in HU.
    pub wl: f64,
}

impl WindowSpec {
    pub fn new(ww: f64, wl: f64) -> Result<Self> {
        if !(ww > 0.0) {
            return Err(Error::Argument(format!("window width {ww} must be positive")));
        }
        Ok(Self { ww, wl })
    }

    /// Standard brain window.
    pub fn brain() -> Self {
        Self { ww: 80.0, wl: 40.0 }
    }
}

/// Ideal de-illumination: the albedo content on film pixels, the photo
/// untouched elsewhere. This is the target a trained module approximates and
/// the ground truth estimators are scored against.
pub fn de_illuminate_oracle(
    warped: &ImageGrid,
    albedo: &MapField,
    mask: &MapField,
) -> Result<ImageGrid> {
    if albedo.role() != MapRole::Albedo {
        return Err(Error::Contract(format!("expected ALBEDO map, got {:?}", albedo.role())));
    }
    if albedo.height() != warped.height()
        || albedo.width() != warped.width()
        || albedo.channels() != warped.channels()
        || mask.height() != warped.height()
        || mask.width() != warped.width()
    {
        return Err(Error::Contract("warped, albedo and mask shapes must agree".into()));
    }
    let (h, w, c) = (warped.height(), warped.width(), warped.channels());
    let mut data = Vec::with_capacity(h * w * c);
    for i in 0..h {
        for j in 0..w {
            let film = mask.is_film(i, j) && albedo.is_valid(i, j);
            for ch in 0..c {
                data.push(if film { albedo.get(i, j, ch) } else { warped.get(i, j, ch) });
            }
        }
    }
    ImageGrid::new(h, w, c, warped.range_tag(), data)
}

/// Flat-field shading estimate and the de-illuminated image.
///
/// Shading is the mask-normalized Gaussian blur of the luminance, so
/// background never bleeds into the film estimate. The output rescales the
/// photo by `mean(shading on film) / shading`, floored at 0.02 to keep the
/// division bounded off-film.
pub fn estimate_flatfield(
    warped: &ImageGrid,
    mask: &MapField,
    sigma: f64,
) -> Result<(ImageGrid, ImageGrid)> {
    if sigma < 4.0 {
        return Err(Error::Argument(format!("flat-field sigma {sigma} must be >= 4")));
    }
    if mask.height() != warped.height() || mask.width() != warped.width() {
        return Err(Error::Contract("warped and mask shapes must agree".into()));
    }
    let (h, w) = (warped.height(), warped.width());
    let lum = warped.luminance();

    let mut masked = vec![0.0f64; h * w];
    let mut weights = vec![0.0f64; h * w];
    let mut film_count = 0usize;
    for i in 0..h {
        for j in 0..w {
            if mask.is_film(i, j) {
                masked[i * w + j] = lum.get(i, j, 0) as f64;
                weights[i * w + j] = 1.0;
                film_count += 1;
            }
        }
    }
    if film_count == 0 {
        return Err(Error::Argument("flat-field estimation needs a nonempty film mask".into()));
    }

    let num = gaussian_blur(&masked, h, w, sigma);
    let den = gaussian_blur(&weights, h, w, sigma);
    let mut shading = vec![0.0f32; h * w];
    let mut mean = 0.0f64;
    for px in 0..h * w {
        if den[px] > 1e-9 {
            shading[px] = (num[px] / den[px]) as f32;
        }
    }
    for i in 0..h {
        for j in 0..w {
            if mask.is_film(i, j) {
                mean += shading[i * w + j] as f64;
            }
        }
    }
    mean /= film_count as f64;

    let c = warped.channels();
    let mut out = Vec::with_capacity(h * w * c);
    for i in 0..h {
        for j in 0..w {
            let gain = mean / (shading[i * w + j] as f64).max(0.02);
            for ch in 0..c {
                out.push((warped.get(i, j, ch) as f64 * gain).clamp(0.0, 1.0) as f32);
            }
        }
    }
    let shading_img = ImageGrid::new(h, w, 1, RangeTag::Unit, shading.iter().map(|&v| v.clamp(0.0, 1.0)).collect())?;
    let corrected = ImageGrid::new(h, w, c, RangeTag::Unit, out)?;
    Ok((shading_img, corrected))
}

/// Separable Gaussian blur with zero padding, f64 throughout.
pub(crate) fn gaussian_blur(data: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let mut sum = 0.0;
    for k in -(radius as isize)..=(radius as isize) {
        let v = (-((k * k) as f64) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }

    let mut tmp = vec![0.0f64; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let jj = j as isize + ki as isize - radius as isize;
                if jj >= 0 && (jj as usize) < w {
                    acc += kv * data[i * w + jj as usize];
                }
            }
            tmp[i * w + j] = acc;
        }
    }
    let mut out = vec![0.0f64; h * w];
    for j in 0..w {
        for i in 0..h {
            let mut acc = 0.0;
            for (ki, &kv) in kernel.iter().enumerate() {
                let ii = i as isize + ki as isize - radius as isize;
                if ii >= 0 && (ii as usize) < h {
                    acc += kv * tmp[ii as usize * w + j];
                }
            }
            out[i * w + j] = acc;
        }
    }
    out
}

/// Invert the display window on a UNIT grayscale image:
/// `hu = round(display*ww + wl - ww/2)`, clamped to the HU scale.
pub fn ct_restore(display: &ImageGrid, win: &WindowSpec) -> Result<HuGrid> {
    if display.channels() != 1 {
        return Err(Error::Contract("CT restoration expects a grayscale image".into()));
    }
    if display.range_tag() != RangeTag::Unit {
        return Err(Error::Contract("CT restoration expects a UNIT-range image".into()));
    }
    let data = display
        .data()
        .iter()
        .map(|&v| {
            let hu = (v as f64 * win.ww + win.wl - win.ww / 2.0).round();
            hu.clamp(HU_MIN as f64, HU_MAX as f64) as i16
        })
        .collect();
    HuGrid::new(display.height(), display.width(), data)
}

/// Cascade restorer contract: N declared stages, each returning a full image.
/// Stage outputs feed the recovery objective in `losses`.
pub trait Restorer {
    fn num_stages(&self) -> usize;
    fn apply(&self, input: &ImageGrid) -> Vec<ImageGrid>;
}

/// Reference restorer: every stage passes the input through unchanged.
#[derive(Debug, Clone)]
pub struct IdentityRestorer {
    stages: usize,
}

impl IdentityRestorer {
    pub fn new(stages: usize) -> Result<Self> {
        if stages == 0 {
            return Err(Error::Argument("a restorer needs at least one stage".into()));
        }
        Ok(Self { stages })
    }
}

impl Restorer for IdentityRestorer {
    fn num_stages(&self) -> usize {
        self.stages
    }

    fn apply(&self, input: &ImageGrid) -> Vec<ImageGrid> {
        vec![input.clone(); self.stages]
    }
}

pub fn apply_restorer(restorer: &dyn Restorer, input: &ImageGrid) -> Vec<ImageGrid> {
    let stages = restorer.apply(input);
    debug_assert_eq!(stages.len(), restorer.num_stages());
    stages
}
