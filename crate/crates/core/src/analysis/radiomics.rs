//! Radiomics feature extraction on restored HU grids: first-order statistics
//! and the GLCM / GLDM texture families.

use crate::error::{Error, Result};
use crate::grid::{HuGrid, HU_MAX, HU_MIN};

/// Offsets the co-occurrence matrix accumulates over.
pub const GLCM_OFFSETS: [(i32, i32); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

const ENTROPY_BINS: usize = 64;

/// Foreground of a slice: everything denser than air.
pub fn non_air_mask(hu: &HuGrid) -> Vec<bool> {
    hu.data.iter().map(|&v| v > -1000).collect()
}

fn masked_values(hu: &HuGrid, mask: &[bool]) -> Result<Vec<f64>> {
    if mask.len() != hu.data.len() {
        return Err(Error::Contract("mask length must match the HU grid".into()));
    }
    let vals: Vec<f64> = hu
        .data
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v as f64)
        .collect();
    if vals.is_empty() {
        return Err(Error::Argument("radiomics features need a nonempty mask".into()));
    }
    Ok(vals)
}

/// Mean, population standard deviation, min, max, energy and the 64-bin
/// histogram entropy (bits) over the full HU scale.
pub fn first_order_features(hu: &HuGrid, mask: &[bool]) -> Result<Vec<(String, f64)>> {
    let vals = masked_values(hu, mask)?;
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let energy = vals.iter().map(|v| v * v).sum::<f64>();

    let mut hist = [0u64; ENTROPY_BINS];
    let span = (HU_MAX as f64 - HU_MIN as f64) + 1.0;
    for &v in &vals {
        let bin = (((v - HU_MIN as f64) / span) * ENTROPY_BINS as f64) as usize;
        hist[bin.min(ENTROPY_BINS - 1)] += 1;
    }
    let entropy = -hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>();

    Ok(vec![
        ("fo_mean".into(), mean),
        ("fo_std".into(), var.sqrt()),
        ("fo_min".into(), min),
        ("fo_max".into(), max),
        ("fo_energy".into(), energy),
        ("fo_entropy".into(), entropy),
    ])
}

/// Uniform quantization of the in-mask value range into `levels` gray levels.
fn quantize(hu: &HuGrid, mask: &[bool], levels: usize) -> Result<Vec<Option<usize>>> {
    let vals = masked_values(hu, mask)?;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    Ok(hu
        .data
        .iter()
        .zip(mask)
        .map(|(&v, &m)| {
            if !m {
                return None;
            }
            if span <= 0.0 {
                return Some(0);
            }
            let q = (((v as f64 - min) / span) * levels as f64) as usize;
            Some(q.min(levels - 1))
        })
        .collect())
}

/// Haralick features of the symmetric, matrix-normalized co-occurrence
/// counts: contrast, correlation, angular second moment and homogeneity.
/// A single-level region defines correlation as 0.
pub fn glcm_features(
    hu: &HuGrid,
    mask: &[bool],
    levels: usize,
    offsets: &[(i32, i32)],
) -> Result<Vec<(String, f64)>> {
    if levels < 2 {
        return Err(Error::Argument("glcm needs at least 2 gray levels".into()));
    }
    let q = quantize(hu, mask, levels)?;
    let (h, w) = (hu.height as i32, hu.width as i32);
    let mut counts = vec![0.0f64; levels * levels];
    let mut total = 0.0f64;
    for i in 0..h {
        for j in 0..w {
            let Some(a) = q[(i * w + j) as usize] else { continue };
            for &(dy, dx) in offsets {
                let (ni, nj) = (i + dy, j + dx);
                if ni < 0 || nj < 0 || ni >= h || nj >= w {
                    continue;
                }
                let Some(b) = q[(ni * w + nj) as usize] else { continue };
                counts[a * levels + b] += 1.0;
                counts[b * levels + a] += 1.0;
                total += 2.0;
            }
        }
    }
    if total == 0.0 {
        // A one-pixel mask has no pairs: a constant texture by definition.
        return Ok(vec![
            ("glcm_contrast".into(), 0.0),
            ("glcm_correlation".into(), 0.0),
            ("glcm_asm".into(), 1.0),
            ("glcm_homogeneity".into(), 1.0),
        ]);
    }
    for c in &mut counts {
        *c /= total;
    }

    let mut contrast = 0.0;
    let mut asm = 0.0;
    let mut homogeneity = 0.0;
    let mut mean_i = 0.0;
    for (idx, &p) in counts.iter().enumerate() {
        let (i, j) = ((idx / levels) as f64, (idx % levels) as f64);
        contrast += p * (i - j) * (i - j);
        asm += p * p;
        homogeneity += p / (1.0 + (i - j) * (i - j));
        mean_i += p * i;
    }
    // The symmetric matrix shares marginals, so one mean/variance pair does.
    let mut var_i = 0.0;
    for (idx, &p) in counts.iter().enumerate() {
        let i = (idx / levels) as f64;
        var_i += p * (i - mean_i) * (i - mean_i);
    }
    let correlation = if var_i > 1e-12 {
        counts
            .iter()
            .enumerate()
            .map(|(idx, &p)| {
                let (i, j) = ((idx / levels) as f64, (idx % levels) as f64);
                p * (i - mean_i) * (j - mean_i)
            })
            .sum::<f64>()
            / var_i
    } else {
        0.0
    };

    Ok(vec![
        ("glcm_contrast".into(), contrast),
        ("glcm_correlation".into(), correlation),
        ("glcm_asm".into(), asm),
        ("glcm_homogeneity".into(), homogeneity),
    ])
}

/// Gray-level dependence features. A pixel's dependence is the number of its
/// 8-neighbors whose quantized level differs by at most `alpha`.
pub fn gldm_features(
    hu: &HuGrid,
    mask: &[bool],
    levels: usize,
    alpha: usize,
) -> Result<Vec<(String, f64)>> {
    if levels < 2 {
        return Err(Error::Argument("gldm needs at least 2 gray levels".into()));
    }
    let q = quantize(hu, mask, levels)?;
    let (h, w) = (hu.height as i32, hu.width as i32);
    // matrix[level][dependence], dependence in 0..=8
    let mut matrix = vec![[0.0f64; 9]; levels];
    let mut n = 0.0f64;
    for i in 0..h {
        for j in 0..w {
            let Some(center) = q[(i * w + j) as usize] else { continue };
            let mut dep = 0usize;
            for dy in -1..=1i32 {
                for dx in -1..=1i32 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let (ni, nj) = (i + dy, j + dx);
                    if ni < 0 || nj < 0 || ni >= h || nj >= w {
                        continue;
                    }
                    if let Some(nb) = q[(ni * w + nj) as usize] {
                        if nb.abs_diff(center) <= alpha {
                            dep += 1;
                        }
                    }
                }
            }
            matrix[center][dep] += 1.0;
            n += 1.0;
        }
    }

    let mut dep_nonuniformity = 0.0;
    for d in 0..9 {
        let col: f64 = matrix.iter().map(|row| row[d]).sum();
        dep_nonuniformity += col * col;
    }
    dep_nonuniformity /= n;
    let dep_nonuniformity_norm = dep_nonuniformity / n;
    let gray_nonuniformity = matrix
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            s * s
        })
        .sum::<f64>()
        / n;
    let entropy = -matrix
        .iter()
        .flat_map(|row| row.iter())
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / n;
            p * p.log2()
        })
        .sum::<f64>();

    Ok(vec![
        ("gldm_dep_nonuniformity".into(), dep_nonuniformity),
        ("gldm_dep_nonuniformity_norm".into(), dep_nonuniformity_norm),
        ("gldm_gray_nonuniformity".into(), gray_nonuniformity),
        ("gldm_dep_entropy".into(), entropy),
    ])
}

/// The full per-slice feature vector (first order + GLCM + GLDM at the
/// default 32 levels).
pub fn extract_features(hu: &HuGrid, mask: &[bool]) -> Result<Vec<(String, f64)>> {
    let mut out = first_order_features(hu, mask)?;
    out.extend(glcm_features(hu, mask, 32, &GLCM_OFFSETS)?);
    out.extend(gldm_features(hu, mask, 32, 0)?);
    Ok(out)
}

/// Whether feature rows describe predictions or ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Pred,
    Gt,
}

/// Per-sample feature vectors with their provenance.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    pub source: Source,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(source: Source) -> Self {
        FeatureTable { names: Vec::new(), ids: Vec::new(), source, rows: Vec::new() }
    }

    /// Append one sample's features; the first row fixes the name order.
    pub fn push(&mut self, id: String, features: Vec<(String, f64)>) -> Result<()> {
        let (names, values): (Vec<String>, Vec<f64>) = features.into_iter().unzip();
        if self.names.is_empty() {
            self.names = names;
        } else if self.names != names {
            return Err(Error::Contract(format!("feature names changed for sample {id}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value for sample {id}")));
        }
        self.ids.push(id);
        self.rows.push(values);
        Ok(())
    }

    /// Column of one feature across samples.
    pub fn column(&self, feature: usize) -> Vec<f64> {
        self.rows.iter().map(|row| row[feature]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,source");
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        let source = match self.source {
            Source::Pred => "pred",
            Source::Gt => "gt",
        };
        for (id, row) in self.ids.iter().zip(&self.rows) {
            out.push_str(id);
            out.push(',');
            out.push_str(source);
            for v in row {
                out.push(',');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_mask(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn first_order_constant_region() {
        let hu = HuGrid::new(4, 4, vec![100; 16]).unwrap();
        let f = first_order_features(&hu, &all_mask(16)).unwrap();
        let get = |name: &str| f.iter().find(|(n, _)| n == name).unwrap().1;
        assert_eq!(get("fo_mean"), 100.0);
        assert_eq!(get("fo_std"), 0.0);
        assert_eq!(get("fo_min"), 100.0);
        assert_eq!(get("fo_max"), 100.0);
        assert_eq!(get("fo_energy"), 16.0 * 100.0 * 100.0);
        assert_eq!(get("fo_entropy"), 0.0);
    }

    #[test]
    fn two_value_entropy_is_one_bit() {
        // 8 pixels each of two values far enough apart for distinct bins.
        let mut data = vec![0i16; 8];
        data.extend(vec![1000i16; 8]);
        let hu = HuGrid::new(4, 4, data).unwrap();
        let f = first_order_features(&hu, &all_mask(16)).unwrap();
        let entropy = f.iter().find(|(n, _)| n == "fo_entropy").unwrap().1;
        assert!((entropy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let hu = HuGrid::new(2, 2, vec![0; 4]).unwrap();
        assert!(first_order_features(&hu, &[false; 4]).is_err());
        assert!(glcm_features(&hu, &[false; 4], 32, &GLCM_OFFSETS).is_err());
    }

    #[test]
    fn glcm_constant_region() {
        let hu = HuGrid::new(4, 4, vec![250; 16]).unwrap();
        let f = glcm_features(&hu, &all_mask(16), 32, &GLCM_OFFSETS).unwrap();
        let get = |name: &str| f.iter().find(|(n, _)| n == name).unwrap().1;
        assert_eq!(get("glcm_contrast"), 0.0);
        assert_eq!(get("glcm_asm"), 1.0);
        assert_eq!(get("glcm_homogeneity"), 1.0);
        assert_eq!(get("glcm_correlation"), 0.0);
    }

    #[test]
    fn glcm_checkerboard_contrast_one() {
        // Adjacent levels alternating: every horizontal pair differs by one
        // level, so contrast under offset (0,1) is exactly 1.
        let data: Vec<i16> = (0..16)
            .map(|px| if (px / 4 + px % 4) % 2 == 0 { 0 } else { 100 })
            .collect();
        let hu = HuGrid::new(4, 4, data).unwrap();
        // levels=2 puts the two values in adjacent bins.
        let f = glcm_features(&hu, &all_mask(16), 2, &[(0, 1)]).unwrap();
        let contrast = f.iter().find(|(n, _)| n == "glcm_contrast").unwrap().1;
        assert!((contrast - 1.0).abs() < 1e-12, "contrast {contrast}");
    }

    #[test]
    fn gldm_constant_region_interior_dependence() {
        let hu = HuGrid::new(5, 5, vec![30; 25]).unwrap();
        let f = gldm_features(&hu, &all_mask(25), 32, 0).unwrap();
        // All pixels land on level 0; the interior pixel has 8 dependents.
        // Dependence entropy reflects the mix of border/corner/interior counts.
        let gn = f.iter().find(|(n, _)| n == "gldm_gray_nonuniformity").unwrap().1;
        assert!((gn - 25.0).abs() < 1e-12, "single gray level: GLN = N, got {gn}");
    }

    #[test]
    fn gldm_single_pixel() {
        let hu = HuGrid::new(1, 1, vec![55]).unwrap();
        let f = gldm_features(&hu, &[true], 32, 0).unwrap();
        let get = |name: &str| f.iter().find(|(n, _)| n == name).unwrap().1;
        assert_eq!(get("gldm_dep_entropy"), 0.0);
        assert_eq!(get("gldm_dep_nonuniformity"), 1.0); // one pixel, dependence 0
    }

    #[test]
    fn feature_table_rejects_mismatched_names() {
        let mut table = FeatureTable::new(Source::Pred);
        table.push("a".into(), vec![("x".into(), 1.0)]).unwrap();
        assert!(table.push("b".into(), vec![("y".into(), 1.0)]).is_err());
    }
}
