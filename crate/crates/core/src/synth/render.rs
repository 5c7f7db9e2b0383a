//! Z-buffered rasterization of the deformed sheet into a photo plus the full
//! annotation bundle: UV, deformation, 3D coordinate, normal, depth, mask and
//! albedo maps, all image-registered at the output resolution.

use crate::error::{Error, Result};
use crate::grid::{HuGrid, ImageGrid, MapField, MapRole, RangeTag};
use crate::quality::WindowSpec;
use crate::synth::surface::SurfaceMesh;
use crate::synth::warp::WarpParams;

/// Everything recorded with one generated sample.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SampleMeta {
    pub params: WarpParams,
    pub seed: u64,
    pub window: WindowSpec,
}

/// One synthetic sample: the warped photo, its eight annotation maps, the
/// flat texture it came from, and the raw CT content behind the texture.
#[derive(Debug, Clone)]
pub struct SampleBundle {
    pub warped: ImageGrid,
    pub coord3d: MapField,
    pub normal: MapField,
    pub depth: MapField,
    pub uv: MapField,
    pub deform: MapField,
    pub bgmask: MapField,
    pub albedo: MapField,
    pub texture: ImageGrid,
    pub hu_slices: Vec<HuGrid>,
    pub meta: SampleMeta,
}

/// Albedo stored behind the sheet where nothing was rendered.
const NEUTRAL_ALBEDO: f32 = 0.5;

/// Triangles closer than this to the camera are dropped.
const NEAR_PLANE: f64 = 0.05;

struct Frame {
    h: usize,
    w: usize,
    zbuf: Vec<f64>,
    uv: Vec<[f64; 2]>,
    pos: Vec<[f64; 3]>,
    normal: Vec<[f64; 3]>,
    covered: Vec<bool>,
}

/// Rasterize the mesh under `params` and assemble the annotation bundle.
///
/// Per covered pixel: perspective-correct texture coordinates and camera-space
/// position, the face normal flipped toward the camera, camera-axis depth,
/// the sampled albedo and the Lambertian-shaded photo value. The deformation
/// map stores `uv * (out_w, out_h) - p` in output pixel units, i.e. each
/// pixel's displacement into the dewarped frame scaled to the output size.
pub fn render_bundle(
    mesh: &SurfaceMesh,
    texture: &ImageGrid,
    params: &WarpParams,
    out_h: usize,
    out_w: usize,
) -> Result<SampleBundle> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Argument("output size must be nonzero".into()));
    }
    if texture.channels() != 1 {
        return Err(Error::Contract("film texture must be grayscale".into()));
    }
    let mut checked = params.clone();
    checked.validate()?;
    let params = &checked;
    let cam = &params.camera;

    // Model space -> camera space -> screen.
    let screen: Vec<([f64; 2], f64)> = mesh
        .vertices
        .iter()
        .map(|p| {
            let z = p[2] + cam.distance;
            let sx = cam.focal * p[0] / z + cam.principal[0];
            let sy = cam.focal * p[1] / z + cam.principal[1];
            ([sx, sy], z)
        })
        .collect();

    let mut frame = Frame {
        h: out_h,
        w: out_w,
        zbuf: vec![f64::INFINITY; out_h * out_w],
        uv: vec![[0.0; 2]; out_h * out_w],
        pos: vec![[0.0; 3]; out_h * out_w],
        normal: vec![[0.0; 3]; out_h * out_w],
        covered: vec![false; out_h * out_w],
    };

    for tri in &mesh.triangles {
        let idx = [tri[0] as usize, tri[1] as usize, tri[2] as usize];
        if idx.iter().any(|&i| screen[i].1 <= NEAR_PLANE) {
            continue;
        }
        raster_triangle(&mut frame, mesh, &screen, idx, cam.distance);
    }

    let film_pixels = frame.covered.iter().filter(|&&c| c).count();
    if film_pixels == 0 {
        return Err(Error::Render("sheet fully off-screen: coverage 0.000".into()));
    }

    let (tex_h, tex_w) = (texture.height() as f64, texture.width() as f64);
    let px_count = out_h * out_w;
    let mut warped = Vec::with_capacity(px_count * 3);
    let mut albedo = Vec::with_capacity(px_count * 3);
    let mut coord3d = vec![0.0f32; px_count * 3];
    let mut normal = vec![0.0f32; px_count * 3];
    let mut depth = vec![0.0f32; px_count];
    let mut uv = vec![0.0f32; px_count * 2];
    let mut deform = vec![0.0f32; px_count * 2];
    let mut mask = vec![0.0f32; px_count];
    let valid = frame.covered.clone();

    for i in 0..out_h {
        for j in 0..out_w {
            let px = i * out_w + j;
            if !frame.covered[px] {
                for ch in 0..3 {
                    warped.push(params.background[ch] as f32);
                    albedo.push(NEUTRAL_ALBEDO);
                }
                continue;
            }
            let [u, v] = frame.uv[px];
            let n = frame.normal[px];
            let gray = texture.sample_bilinear(u * tex_w, v * tex_h, 0);
            let ndotl = (n[0] * params.light.direction[0]
                + n[1] * params.light.direction[1]
                + n[2] * params.light.direction[2])
                .max(0.0);
            let shade = params.light.ambient + params.light.diffuse * ndotl;
            for _ in 0..3 {
                albedo.push(gray);
                warped.push((gray as f64 * shade).clamp(0.0, 1.0) as f32);
            }
            for ch in 0..3 {
                coord3d[px * 3 + ch] = frame.pos[px][ch] as f32;
                normal[px * 3 + ch] = n[ch] as f32;
            }
            depth[px] = frame.pos[px][2] as f32;
            uv[px * 2] = u.clamp(0.0, 1.0) as f32;
            uv[px * 2 + 1] = v.clamp(0.0, 1.0) as f32;
            deform[px * 2] = (u * out_w as f64 - (j as f64 + 0.5)) as f32;
            deform[px * 2 + 1] = (v * out_h as f64 - (i as f64 + 0.5)) as f32;
            mask[px] = 1.0;
        }
    }

    let all_valid = vec![true; px_count];
    Ok(SampleBundle {
        warped: ImageGrid::new(out_h, out_w, 3, RangeTag::Unit, warped)?,
        coord3d: MapField::new(MapRole::Coord3d, out_h, out_w, 3, coord3d, valid.clone())?,
        normal: MapField::new(MapRole::Normal, out_h, out_w, 3, normal, valid.clone())?,
        depth: MapField::new(MapRole::Depth, out_h, out_w, 1, depth, valid.clone())?,
        uv: MapField::new(MapRole::Uv, out_h, out_w, 2, uv, valid.clone())?,
        deform: MapField::new(MapRole::Deform, out_h, out_w, 2, deform, valid)?,
        bgmask: MapField::new(MapRole::Mask, out_h, out_w, 1, mask, all_valid.clone())?,
        albedo: MapField::new(MapRole::Albedo, out_h, out_w, 3, albedo, all_valid)?,
        texture: texture.clone(),
        hu_slices: Vec::new(),
        meta: SampleMeta { params: params.clone(), seed: 0, window: WindowSpec::brain() },
    })
}

fn raster_triangle(
    frame: &mut Frame,
    mesh: &SurfaceMesh,
    screen: &[([f64; 2], f64)],
    idx: [usize; 3],
    distance: f64,
) {
    let [a, b, c] = idx;
    let (pa, za) = screen[a];
    let (pb, zb) = screen[b];
    let (pc, zc) = screen[c];

    let area = edge(pa, pb, pc);
    if area.abs() < 1e-12 {
        return;
    }

    // Face normal in camera space, flipped toward the camera.
    let wa = cam_space(mesh.vertices[a], distance);
    let wb = cam_space(mesh.vertices[b], distance);
    let wc = cam_space(mesh.vertices[c], distance);
    let mut n = cross(sub(wb, wa), sub(wc, wa));
    let nl = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if nl < 1e-15 {
        return;
    }
    for v in &mut n {
        *v /= nl;
    }
    let centroid = [
        (wa[0] + wb[0] + wc[0]) / 3.0,
        (wa[1] + wb[1] + wc[1]) / 3.0,
        (wa[2] + wb[2] + wc[2]) / 3.0,
    ];
    if n[0] * centroid[0] + n[1] * centroid[1] + n[2] * centroid[2] > 0.0 {
        for v in &mut n {
            *v = -*v;
        }
    }

    let min_x = pa[0].min(pb[0]).min(pc[0]);
    let max_x = pa[0].max(pb[0]).max(pc[0]);
    let min_y = pa[1].min(pb[1]).min(pc[1]);
    let max_y = pa[1].max(pb[1]).max(pc[1]);
    let j0 = (min_x - 0.5).floor().max(0.0) as usize;
    let j1 = ((max_x - 0.5).ceil() as isize).clamp(0, frame.w as isize - 1) as usize;
    let i0 = (min_y - 0.5).floor().max(0.0) as usize;
    let i1 = ((max_y - 0.5).ceil() as isize).clamp(0, frame.h as isize - 1) as usize;
    if j0 > j1 || i0 > i1 {
        return;
    }

    let ta = mesh.texcoords[a];
    let tb = mesh.texcoords[b];
    let tc = mesh.texcoords[c];
    let inv = 1.0 / area;

    for i in i0..=i1 {
        let py = i as f64 + 0.5;
        for j in j0..=j1 {
            let px = j as f64 + 0.5;
            let p = [px, py];
            let w0 = edge(pb, pc, p) * inv;
            let w1 = edge(pc, pa, p) * inv;
            let w2 = edge(pa, pb, p) * inv;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            // Perspective-correct interpolation: weights divided by vertex
            // depth, renormalized.
            let q0 = w0 / za;
            let q1 = w1 / zb;
            let q2 = w2 / zc;
            let qsum = q0 + q1 + q2;
            let z = 1.0 / qsum;
            let at = i * frame.w + j;
            if z >= frame.zbuf[at] {
                continue;
            }
            frame.zbuf[at] = z;
            frame.covered[at] = true;
            frame.uv[at] = [
                (q0 * ta[0] + q1 * tb[0] + q2 * tc[0]) * z,
                (q0 * ta[1] + q1 * tb[1] + q2 * tc[1]) * z,
            ];
            frame.pos[at] = [
                (q0 * wa[0] + q1 * wb[0] + q2 * wc[0]) * z,
                (q0 * wa[1] + q1 * wb[1] + q2 * wc[1]) * z,
                z,
            ];
            frame.normal[at] = n;
        }
    }
}

#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

#[inline]
fn cam_space(v: [f64; 3], distance: f64) -> [f64; 3] {
    [v[0], v[1], v[2] + distance]
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl SampleBundle {
    /// Fraction of output pixels covered by film.
    pub fn coverage(&self) -> f64 {
        let film = self
            .bgmask
            .data()
            .iter()
            .filter(|&&v| v >= 0.5)
            .count();
        film as f64 / (self.bgmask.height() * self.bgmask.width()) as f64
    }

    /// Check every bundle invariant; returns the first violation.
    pub fn validate(&self) -> Result<()> {
        let (h, w) = (self.warped.height(), self.warped.width());
        let same = self.coord3d.height() == h
            && self.coord3d.width() == w
            && self.normal.height() == h
            && self.normal.width() == w
            && self.depth.height() == h
            && self.depth.width() == w
            && self.uv.height() == h
            && self.uv.width() == w
            && self.deform.height() == h
            && self.deform.width() == w
            && self.bgmask.height() == h
            && self.bgmask.width() == w
            && self.albedo.height() == h
            && self.albedo.width() == w;
        if !same {
            return Err(Error::Contract("bundle members disagree on the image frame".into()));
        }
        for &m in self.bgmask.data() {
            if m != 0.0 && m != 1.0 {
                return Err(Error::Contract(format!("bgmask sample {m} not binary")));
            }
        }
        let (out_w, out_h) = (w as f64, h as f64);
        for i in 0..h {
            for j in 0..w {
                if !self.bgmask.is_film(i, j) {
                    continue;
                }
                if !self.uv.is_valid(i, j) {
                    return Err(Error::Contract(format!("film pixel ({i},{j}) lacks valid uv")));
                }
                let u = self.uv.get(i, j, 0) as f64;
                let v = self.uv.get(i, j, 1) as f64;
                if !(-1e-6..=1.0 + 1e-6).contains(&u) || !(-1e-6..=1.0 + 1e-6).contains(&v) {
                    return Err(Error::Contract(format!("uv ({u},{v}) outside the unit square")));
                }
                // uv and deform describe the same correspondence in output
                // pixel units; rasterization may round by up to 0.75 px.
                let dx = u * out_w - (j as f64 + 0.5) - self.deform.get(i, j, 0) as f64;
                let dy = v * out_h - (i as f64 + 0.5) - self.deform.get(i, j, 1) as f64;
                if dx.abs() > 0.75 || dy.abs() > 0.75 {
                    return Err(Error::Contract(format!(
                        "uv/deform inconsistency ({dx:.3},{dy:.3}) px at ({i},{j})"
                    )));
                }
                if self.normal.is_valid(i, j) {
                    let norm = (0..3)
                        .map(|ch| (self.normal.get(i, j, ch) as f64).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if (norm - 1.0).abs() > 1e-4 {
                        return Err(Error::Contract(format!("normal norm {norm} at ({i},{j})")));
                    }
                }
                if self.depth.is_valid(i, j) && self.depth.get(i, j, 0) <= 0.0 {
                    return Err(Error::Contract(format!("nonpositive depth at ({i},{j})")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::surface::build_surface;

    fn checker_texture(side: usize) -> ImageGrid {
        let data = (0..side * side)
            .map(|px| {
                let (i, j) = (px / side, px % side);
                if (i / 8 + j / 8) % 2 == 0 {
                    0.8
                } else {
                    0.3
                }
            })
            .collect();
        ImageGrid::new(side, side, 1, RangeTag::Unit, data).unwrap()
    }

    #[test]
    fn flat_fill_produces_identity_uv_and_zero_deform() {
        let (h, w) = (64, 64);
        let params = WarpParams::flat(h, w);
        let mesh = build_surface(&params, 17).unwrap();
        let bundle = render_bundle(&mesh, &checker_texture(64), &params, h, w).unwrap();
        bundle.validate().unwrap();
        assert!(bundle.coverage() > 0.99, "coverage {}", bundle.coverage());
        for i in (1..h - 1).step_by(7) {
            for j in (1..w - 1).step_by(7) {
                assert!(bundle.bgmask.is_film(i, j));
                let u = bundle.uv.get(i, j, 0) as f64;
                let v = bundle.uv.get(i, j, 1) as f64;
                assert!((u * w as f64 - (j as f64 + 0.5)).abs() < 0.75);
                assert!((v * h as f64 - (i as f64 + 0.5)).abs() < 0.75);
                assert!(bundle.deform.get(i, j, 0).abs() < 0.75);
                assert!(bundle.deform.get(i, j, 1).abs() < 0.75);
            }
        }
    }

    #[test]
    fn flat_ambient_photo_equals_albedo() {
        let params = WarpParams::flat(48, 48);
        let mesh = build_surface(&params, 9).unwrap();
        let bundle = render_bundle(&mesh, &checker_texture(48), &params, 48, 48).unwrap();
        for i in 0..48 {
            for j in 0..48 {
                if bundle.bgmask.is_film(i, j) {
                    assert!((bundle.warped.get(i, j, 0) - bundle.albedo.get(i, j, 0)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn off_screen_sheet_is_a_render_error() {
        let mut params = WarpParams::flat(32, 32);
        params.translation = [50.0, 0.0, 0.0];
        let mesh = build_surface(&params, 5).unwrap();
        match render_bundle(&mesh, &checker_texture(32), &params, 32, 32) {
            Err(Error::Render(msg)) => assert!(msg.contains("coverage")),
            other => panic!("expected render error, got {other:?}"),
        }
    }

    #[test]
    fn warped_bundle_passes_validation() {
        use crate::synth::warp::SineTerm;
        let mut params = WarpParams::flat(96, 96);
        params.sine_terms = vec![SineTerm {
            amplitude: 0.06,
            freq: 1.2,
            phase: 0.7,
            direction: [0.9, 0.43],
        }];
        params.curl = 0.9;
        params.rotation = [0.2, -0.25, 0.15];
        params.light = crate::synth::warp::Light {
            direction: [0.2, -0.1, -1.0],
            ambient: 0.35,
            diffuse: 0.6,
        };
        params.camera.focal *= 0.7;
        let mesh = build_surface(&params, 65).unwrap();
        let bundle = render_bundle(&mesh, &checker_texture(96), &params, 96, 96).unwrap();
        bundle.validate().unwrap();
        assert!(bundle.coverage() > 0.2);
        // Shading must actually vary over a curled sheet.
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for i in 0..96 {
            for j in 0..96 {
                if bundle.bgmask.is_film(i, j) && bundle.albedo.get(i, j, 0) > 0.5 {
                    let ratio = bundle.warped.get(i, j, 0) / bundle.albedo.get(i, j, 0);
                    lo = lo.min(ratio);
                    hi = hi.max(ratio);
                }
            }
        }
        assert!(hi - lo > 0.05, "shading range [{lo}, {hi}] too flat");
    }
}
