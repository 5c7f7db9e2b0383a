//! Image and map containers shared by every stage of the pipeline.
//!
//! Two container types cover everything the pipeline moves around:
//! [`ImageGrid`] for displayable images (unit or signed-unit range) and
//! [`MapField`] for per-pixel annotation maps with a validity mask.
//!
//! Coordinate convention, used everywhere downstream: pixel `(row i, col j)`
//! samples the continuous location `(x, y) = (j + 0.5, i + 0.5)`. UV space has
//! `(0, 0)` at the texture's top-left corner, `u` along width, `v` along
//! height, both in `[0, 1]`.

use crate::error::{Error, Result};

/// Declared value range of an [`ImageGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RangeTag {
    /// Samples in `[0, 1]`.
    Unit,
    /// Samples in `[-1, 1]`.
    SignedUnit,
}

impl RangeTag {
    fn bounds(self) -> (f32, f32) {
        match self {
            RangeTag::Unit => (0.0, 1.0),
            RangeTag::SignedUnit => (-1.0, 1.0),
        }
    }
}

/// Dense floating image, row-major and channel-interleaved.
///
/// Out-of-range samples are clamped at construction and counted in
/// [`ImageGrid::clamped`]; rendering and resampling routinely overshoot by an
/// epsilon and rejecting them outright would make every pipeline stage fallible
/// for no benefit.
#[derive(Debug, Clone)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    range: RangeTag,
    data: Vec<f32>,
    clamped: usize,
}

impl ImageGrid {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        range: RangeTag,
        mut data: Vec<f32>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument("image dimensions must be nonzero".into()));
        }
        if !(1..=3).contains(&channels) {
            return Err(Error::Argument(format!("channel count {channels} outside 1..=3")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Contract(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        let (lo, hi) = range.bounds();
        let mut clamped = 0usize;
        for v in &mut data {
            if !v.is_finite() {
                return Err(Error::NonFinite("image sample".into()));
            }
            if *v < lo || *v > hi {
                *v = v.clamp(lo, hi);
                clamped += 1;
            }
        }
        Ok(Self { height, width, channels, range, data, clamped })
    }

    pub fn constant(height: usize, width: usize, channels: usize, range: RangeTag, value: f32) -> Result<Self> {
        Self::new(height, width, channels, range, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn range_tag(&self) -> RangeTag {
        self.range
    }

    /// Number of samples clamped into range at construction.
    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, ch: usize) -> f32 {
        self.data[(i * self.width + j) * self.channels + ch]
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Channel mean per pixel, as a single-channel image with the same range.
    pub fn luminance(&self) -> ImageGrid {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Vec::with_capacity(self.height * self.width);
        for px in self.data.chunks_exact(self.channels) {
            out.push(px.iter().sum::<f32>() / self.channels as f32);
        }
        ImageGrid::new(self.height, self.width, 1, self.range, out).expect("mean stays in range")
    }

    /// Bilinear sample at a continuous location in pixel-center coordinates,
    /// clamped at the borders.
    pub fn sample_bilinear(&self, x: f64, y: f64, ch: usize) -> f32 {
        let (i0, i1, fy) = split_coord(y, self.height);
        let (j0, j1, fx) = split_coord(x, self.width);
        let v00 = self.get(i0, j0, ch) as f64;
        let v01 = self.get(i0, j1, ch) as f64;
        let v10 = self.get(i1, j0, ch) as f64;
        let v11 = self.get(i1, j1, ch) as f64;
        let top = v00 + (v01 - v00) * fx;
        let bot = v10 + (v11 - v10) * fx;
        (top + (bot - top) * fy) as f32
    }

    /// Linear map `[0,1] -> [-1,1]`, `out = 2*in - 1`.
    pub fn normalize_signed(&self) -> Result<ImageGrid> {
        if self.range != RangeTag::Unit {
            return Err(Error::Contract("normalize_signed requires a UNIT-range image".into()));
        }
        let data = self.data.iter().map(|&v| 2.0 * v - 1.0).collect();
        ImageGrid::new(self.height, self.width, self.channels, RangeTag::SignedUnit, data)
    }

    /// Inverse of [`ImageGrid::normalize_signed`], `out = (in + 1) / 2`.
    pub fn denormalize(&self) -> Result<ImageGrid> {
        if self.range != RangeTag::SignedUnit {
            return Err(Error::Contract("denormalize requires a SIGNED_UNIT-range image".into()));
        }
        let data = self.data.iter().map(|&v| (v + 1.0) * 0.5).collect();
        ImageGrid::new(self.height, self.width, self.channels, RangeTag::Unit, data)
    }

    /// Bilinear resampling with half-pixel-centered coordinates. Resizing to
    /// the current size reproduces the input; constant images stay constant.
    pub fn resize_bilinear(&self, out_h: usize, out_w: usize) -> Result<ImageGrid> {
        if out_h == 0 || out_w == 0 {
            return Err(Error::Argument("target size must be at least 1x1".into()));
        }
        let sy = self.height as f64 / out_h as f64;
        let sx = self.width as f64 / out_w as f64;
        let mut data = Vec::with_capacity(out_h * out_w * self.channels);
        for i in 0..out_h {
            let y = (i as f64 + 0.5) * sy;
            for j in 0..out_w {
                let x = (j as f64 + 0.5) * sx;
                for ch in 0..self.channels {
                    data.push(self.sample_bilinear(x, y, ch));
                }
            }
        }
        ImageGrid::new(out_h, out_w, self.channels, self.range, data)
    }
}

/// Split a continuous pixel-center coordinate into the two bracketing indices
/// and the interpolation fraction, clamped to the border.
#[inline]
fn split_coord(coord: f64, len: usize) -> (usize, usize, f64) {
    let t = coord - 0.5;
    let max = (len - 1) as f64;
    if t <= 0.0 {
        return (0, 0, 0.0);
    }
    if t >= max {
        return (len - 1, len - 1, 0.0);
    }
    let i0 = t.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, t - i0 as f64)
}

/// What a [`MapField`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MapRole {
    Uv,
    Deform,
    Backward,
    Coord3d,
    Normal,
    Depth,
    Albedo,
    Mask,
}

impl MapRole {
    /// Byte code used by the FMAP container format.
    pub fn code(self) -> u8 {
        match self {
            MapRole::Uv => 0,
            MapRole::Deform => 1,
            MapRole::Backward => 2,
            MapRole::Coord3d => 3,
            MapRole::Normal => 4,
            MapRole::Depth => 5,
            MapRole::Albedo => 6,
            MapRole::Mask => 7,
        }
    }

    pub fn from_code(code: u8) -> Option<MapRole> {
        Some(match code {
            0 => MapRole::Uv,
            1 => MapRole::Deform,
            2 => MapRole::Backward,
            3 => MapRole::Coord3d,
            4 => MapRole::Normal,
            5 => MapRole::Depth,
            6 => MapRole::Albedo,
            7 => MapRole::Mask,
            _ => return None,
        })
    }

    /// Channel count the role requires, if fixed.
    pub fn required_channels(self) -> Option<usize> {
        match self {
            MapRole::Uv | MapRole::Deform | MapRole::Backward => Some(2),
            MapRole::Coord3d | MapRole::Normal => Some(3),
            MapRole::Depth | MapRole::Mask => Some(1),
            MapRole::Albedo => None,
        }
    }
}

/// Annotation map: `height x width x channels` floats plus a per-pixel
/// validity mask and a role tag.
///
/// Construction repairs epsilon overshoots of the role's range constraints on
/// valid pixels rather than rejecting: UV, ALBEDO and MASK samples within
/// [`RANGE_SLACK`] of `[0, 1]` clamp onto it, nonpositive DEPTH floors at a
/// small positive value, NORMAL vectors renormalize to unit length (a zero
/// vector invalidates the pixel). Repairs are counted in
/// [`MapField::adjusted`]. Values farther out of range pass through
/// untouched: a UV prediction may point outside the texture, and the merge
/// operation's in-range rule is what filters such pixels.
#[derive(Debug, Clone)]
pub struct MapField {
    height: usize,
    width: usize,
    channels: usize,
    role: MapRole,
    data: Vec<f32>,
    valid: Vec<bool>,
    adjusted: usize,
}

const DEPTH_FLOOR: f32 = 1e-6;

/// Band around a role's value range inside which construction clamps.
pub const RANGE_SLACK: f32 = 1e-3;

impl MapField {
    pub fn new(
        role: MapRole,
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f32>,
        mut valid: Vec<bool>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Argument("map dimensions must be nonzero".into()));
        }
        if let Some(required) = role.required_channels() {
            if channels != required {
                return Err(Error::Contract(format!(
                    "role {role:?} requires {required} channels, got {channels}"
                )));
            }
        }
        if data.len() != height * width * channels {
            return Err(Error::Contract(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        if valid.len() != height * width {
            return Err(Error::Contract(format!(
                "validity length {} != {}x{}",
                valid.len(),
                height,
                width
            )));
        }
        let mut adjusted = 0usize;
        for (px, ok) in valid.iter_mut().enumerate() {
            if !*ok {
                continue;
            }
            let s = &mut data[px * channels..(px + 1) * channels];
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("map sample at pixel {px}")));
            }
            match role {
                MapRole::Uv | MapRole::Albedo | MapRole::Mask => {
                    for v in s.iter_mut() {
                        let in_band = (*v < 0.0 && *v >= -RANGE_SLACK)
                            || (*v > 1.0 && *v <= 1.0 + RANGE_SLACK);
                        if in_band {
                            *v = v.clamp(0.0, 1.0);
                            adjusted += 1;
                        }
                    }
                }
                MapRole::Depth => {
                    if s[0] < DEPTH_FLOOR {
                        s[0] = DEPTH_FLOOR;
                        adjusted += 1;
                    }
                }
                MapRole::Normal => {
                    let norm =
                        (s.iter().map(|&v| (v as f64).powi(2)).sum::<f64>()).sqrt();
                    if norm < 1e-12 {
                        *ok = false;
                        adjusted += 1;
                    } else if (norm - 1.0).abs() > 1e-4 {
                        for v in s.iter_mut() {
                            *v = (*v as f64 / norm) as f32;
                        }
                        adjusted += 1;
                    }
                }
                MapRole::Deform | MapRole::Coord3d | MapRole::Backward => {}
            }
        }
        Ok(Self { height, width, channels, role, data, valid, adjusted })
    }

    /// All-valid field filled with one value.
    pub fn constant(
        role: MapRole,
        height: usize,
        width: usize,
        channels: usize,
        value: f32,
    ) -> Result<Self> {
        Self::new(
            role,
            height,
            width,
            channels,
            vec![value; height * width * channels],
            vec![true; height * width],
        )
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn role(&self) -> MapRole {
        self.role
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    /// Number of samples repaired (or pixels invalidated) at construction.
    pub fn adjusted(&self) -> usize {
        self.adjusted
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, ch: usize) -> f32 {
        self.data[(i * self.width + j) * self.channels + ch]
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[i * self.width + j]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn same_shape(&self, other: &MapField) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Binarize a single-channel field: `1` where the sample is valid and
    /// `>= thresh`, else `0`. The output is a fully valid MASK field.
    pub fn threshold_mask(&self, thresh: f32) -> Result<MapField> {
        if self.channels != 1 {
            return Err(Error::Contract(format!(
                "threshold_mask requires a single channel, got {}",
                self.channels
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&self.valid)
            .map(|(&v, &ok)| if ok && v >= thresh { 1.0 } else { 0.0 })
            .collect();
        MapField::new(MapRole::Mask, self.height, self.width, 1, data, vec![true; self.height * self.width])
    }

    /// Film test used by every masked operation: valid and `>= 0.5`.
    #[inline]
    pub fn is_film(&self, i: usize, j: usize) -> bool {
        debug_assert_eq!(self.channels, 1);
        self.is_valid(i, j) && self.get(i, j, 0) >= 0.5
    }
}

/// Hounsfield-unit slice, the raw CT content behind a film cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuGrid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<i16>,
}

pub const HU_MIN: i16 = -1024;
pub const HU_MAX: i16 = 3071;

impl HuGrid {
    pub fn new(height: usize, width: usize, data: Vec<i16>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Contract(format!(
                "HU data length {} != {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self { height, width, data })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i16 {
        self.data[i * self.width + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize, w: usize, vals: &[f32]) -> ImageGrid {
        ImageGrid::new(h, w, 1, RangeTag::Unit, vals.to_vec()).unwrap()
    }

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let g = ImageGrid::constant(2, 2, 1, RangeTag::Unit, 0.0).unwrap();
        let s = g.normalize_signed().unwrap();
        assert!(s.data().iter().all(|&v| v == -1.0));

        let g = ImageGrid::constant(2, 2, 1, RangeTag::Unit, 0.5).unwrap();
        let s = g.normalize_signed().unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn denormalize_endpoints() {
        let g = ImageGrid::constant(2, 2, 1, RangeTag::SignedUnit, -1.0).unwrap();
        assert!(g.denormalize().unwrap().data().iter().all(|&v| v == 0.0));
        let g = ImageGrid::constant(2, 2, 1, RangeTag::SignedUnit, 1.0).unwrap();
        assert!(g.denormalize().unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn normalize_rejects_wrong_tag() {
        let g = ImageGrid::constant(1, 1, 1, RangeTag::SignedUnit, 0.0).unwrap();
        assert!(matches!(g.normalize_signed(), Err(Error::Contract(_))));
        let g = ImageGrid::constant(1, 1, 1, RangeTag::Unit, 0.0).unwrap();
        assert!(matches!(g.denormalize(), Err(Error::Contract(_))));
    }

    #[test]
    fn construction_clamps_with_counter() {
        let g = ImageGrid::new(1, 2, 1, RangeTag::Unit, vec![-0.25, 1.5]).unwrap();
        assert_eq!(g.clamped(), 2);
        assert_eq!(g.data(), &[0.0, 1.0]);
    }

    #[test]
    fn resize_identity_at_same_size() {
        let g = grid(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let r = g.resize_bilinear(2, 3).unwrap();
        for (a, b) in g.data().iter().zip(r.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_preserves_constants() {
        let g = ImageGrid::constant(3, 5, 2, RangeTag::Unit, 0.37).unwrap();
        for (oh, ow) in [(1, 1), (2, 9), (7, 3), (16, 16)] {
            let r = g.resize_bilinear(oh, ow).unwrap();
            assert!(r.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
        }
    }

    #[test]
    fn resize_checkerboard_center() {
        // 2x2 [0,1;1,0] to 3x3: the center lands exactly between all four
        // samples, so the bilinear kernel gives 0.25*(0+1+1+0) = 0.5.
        let g = grid(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = g.resize_bilinear(3, 3).unwrap();
        assert!((r.get(1, 1, 0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn resize_rejects_zero_size() {
        let g = grid(2, 2, &[0.0; 4]);
        assert!(matches!(g.resize_bilinear(0, 3), Err(Error::Argument(_))));
        assert!(matches!(g.resize_bilinear(3, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn threshold_mask_cases() {
        let f = MapField::constant(MapRole::Mask, 2, 2, 1, 0.9).unwrap();
        assert!(f.threshold_mask(0.5).unwrap().data().iter().all(|&v| v == 1.0));
        let f = MapField::constant(MapRole::Mask, 2, 2, 1, 0.1).unwrap();
        assert!(f.threshold_mask(0.5).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn threshold_idempotent_on_binary() {
        let data = vec![0.0, 1.0, 1.0, 0.0];
        let f = MapField::new(MapRole::Mask, 2, 2, 1, data.clone(), vec![true; 4]).unwrap();
        let t = f.threshold_mask(0.5).unwrap();
        assert_eq!(t.data(), &data[..]);
        let tt = t.threshold_mask(0.5).unwrap();
        assert_eq!(tt.data(), t.data());
    }

    #[test]
    fn mask_role_requires_one_channel() {
        let err = MapField::constant(MapRole::Mask, 2, 2, 2, 0.0);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn normal_field_renormalizes() {
        let data = vec![0.0, 0.0, 2.0, 1.0, 0.0, 0.0];
        let f = MapField::new(MapRole::Normal, 1, 2, 3, data, vec![true; 2]).unwrap();
        assert_eq!(f.adjusted(), 1);
        assert!((f.get(0, 0, 2) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn depth_floor_applies() {
        let f = MapField::new(MapRole::Depth, 1, 2, 1, vec![-3.0, 2.0], vec![true; 2]).unwrap();
        assert!(f.get(0, 0, 0) > 0.0);
        assert_eq!(f.get(0, 1, 0), 2.0);
        assert_eq!(f.adjusted(), 1);
    }
}
