//! Film sheet geometry: a regular grid over the unit texture square, height
//! field applied, bent around a cylinder, then rigidly placed.

use crate::error::{Error, Result};
use crate::synth::warp::WarpParams;

/// Triangle mesh in model space. The flat configuration is the unit square
/// `[-0.5, 0.5]^2` at `z = 0`, texture coordinates spanning `[0, 1]^2`.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<[f64; 3]>,
    pub texcoords: Vec<[f64; 2]>,
    pub triangles: Vec<[u32; 3]>,
}

/// Evaluate the deformed sheet on a `grid_n x grid_n` vertex lattice.
///
/// Per vertex: height `h = params.height(u, v)` along the sheet normal, then
/// the cylindrical bend about the v-axis with curvature `curl` (arc-length
/// preserving in u), then the rigid rotation and translation.
pub fn build_surface(params: &WarpParams, grid_n: usize) -> Result<SurfaceMesh> {
    if grid_n < 2 {
        return Err(Error::Argument(format!("grid_n {grid_n} must be at least 2")));
    }
    let mut checked = params.clone();
    checked.validate()?;
    let params = &checked;

    let rot = rotation_matrix(params.rotation);
    let n = grid_n;
    let mut vertices = Vec::with_capacity(n * n);
    let mut texcoords = Vec::with_capacity(n * n);
    for gi in 0..n {
        let v = gi as f64 / (n - 1) as f64;
        for gj in 0..n {
            let u = gj as f64 / (n - 1) as f64;
            let h = params.height(u, v);
            let s = u - 0.5;
            let (x, z) = if params.curl.abs() < 1e-9 {
                (s, h)
            } else {
                let k = params.curl;
                let theta = s * k;
                // Point on the cylinder of radius 1/k, displaced by h toward
                // the axis (the sheet's local up direction).
                (theta.sin() * (1.0 / k - h), (1.0 - theta.cos()) / k + h * theta.cos())
            };
            let local = [x, v - 0.5, z];
            let mut p = mat_apply(&rot, local);
            for axis in 0..3 {
                p[axis] += params.translation[axis];
            }
            vertices.push(p);
            texcoords.push([u, v]);
        }
    }

    let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
    for gi in 0..n - 1 {
        for gj in 0..n - 1 {
            let v00 = (gi * n + gj) as u32;
            let v01 = v00 + 1;
            let v10 = v00 + n as u32;
            let v11 = v10 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(SurfaceMesh { vertices, texcoords, triangles })
}

/// Total surface area, the sum of triangle areas.
pub fn mesh_area(mesh: &SurfaceMesh) -> f64 {
    mesh.triangles
        .iter()
        .map(|t| {
            let a = mesh.vertices[t[0] as usize];
            let b = mesh.vertices[t[1] as usize];
            let c = mesh.vertices[t[2] as usize];
            let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let ac = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let cx = ab[1] * ac[2] - ab[2] * ac[1];
            let cy = ab[2] * ac[0] - ab[0] * ac[2];
            let cz = ab[0] * ac[1] - ab[1] * ac[0];
            0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
        })
        .sum()
}

/// Rz * Ry * Rx for angles about x, y, z.
pub(crate) fn rotation_matrix(angles: [f64; 3]) -> [[f64; 3]; 3] {
    let (sx, cx) = angles[0].sin_cos();
    let (sy, cy) = angles[1].sin_cos();
    let (sz, cz) = angles[2].sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&rz, &mat_mul(&ry, &rx))
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub(crate) fn mat_apply(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::warp::SineTerm;

    #[test]
    fn flat_params_give_flat_unit_square() {
        let mesh = build_surface(&WarpParams::flat(64, 64), 9).unwrap();
        assert_eq!(mesh.vertices.len(), 81);
        assert_eq!(mesh.triangles.len(), 2 * 64);
        for v in &mesh.vertices {
            assert!(v[0].abs() <= 0.5 + 1e-12);
            assert!(v[1].abs() <= 0.5 + 1e-12);
            assert!(v[2].abs() < 1e-12);
        }
        assert!((mesh_area(&mesh) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_sine_peak_at_quarter() {
        let mut p = WarpParams::flat(64, 64);
        let a = 0.05;
        p.sine_terms = vec![SineTerm { amplitude: a, freq: 1.0, phase: 0.0, direction: [1.0, 0.0] }];
        let mesh = build_surface(&p, 5).unwrap(); // u grid: 0, .25, .5, .75, 1
        let v = mesh.vertices[1]; // row gi=0, gj=1 -> u = 0.25
        assert!((v[2] - a).abs() < 1e-12, "z at u=0.25 is {}", v[2]);
    }

    #[test]
    fn nonflat_area_exceeds_one() {
        let mut p = WarpParams::flat(64, 64);
        p.sine_terms = vec![SineTerm { amplitude: 0.06, freq: 1.2, phase: 0.4, direction: [0.8, 0.6] }];
        p.curl = 1.0;
        let mesh = build_surface(&p, 33).unwrap();
        assert!(mesh_area(&mesh) > 1.0);
    }

    #[test]
    fn curl_preserves_arc_length() {
        let mut p = WarpParams::flat(64, 64);
        p.curl = 1.5;
        let mesh = build_surface(&p, 65).unwrap();
        // Chord shrinks but the surface is isometric to the flat sheet.
        assert!((mesh_area(&mesh) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_tiny_grid() {
        assert!(build_surface(&WarpParams::flat(64, 64), 1).is_err());
    }
}
