//! Elliptical CT phantoms: the slice content printed onto film textures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{HuGrid, ImageGrid, RangeTag, HU_MAX, HU_MIN};

/// One painted body, in fractional canvas coordinates.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipse {
    /// Center, each coordinate in `[0, 1]`.
    pub center: [f64; 2],
    /// Semi-axes as fractions of the canvas side, strictly positive.
    pub axes: [f64; 2],
    /// Rotation in radians.
    pub angle: f64,
    /// Attenuation painted inside, in Hounsfield units.
    pub hu: i16,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let (sin, cos) = self.angle.sin_cos();
        let xr = dx * cos + dy * sin;
        let yr = -dx * sin + dy * cos;
        (xr / self.axes[0]).powi(2) + (yr / self.axes[1]).powi(2) <= 1.0
    }
}

/// Stack of ellipses over an air background.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    /// Square canvas side in pixels.
    pub canvas: usize,
    /// Painted in listed order; later bodies overwrite earlier ones.
    pub bodies: Vec<Ellipse>,
    /// Half-range of the uniform texture noise added inside bodies, in HU.
    /// Zero disables the noise.
    #[serde(default = "default_noise_hu")]
    pub noise_hu: i16,
}

fn default_noise_hu() -> i16 {
    20
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.canvas == 0 {
            return Err(Error::Argument("phantom canvas must be nonzero".into()));
        }
        for (idx, body) in self.bodies.iter().enumerate() {
            if body.axes[0] <= 0.0 || body.axes[1] <= 0.0 {
                return Err(Error::Argument(format!("body {idx} has nonpositive axes")));
            }
            if body.hu < HU_MIN || body.hu > HU_MAX {
                return Err(Error::Argument(format!(
                    "body {idx} HU {} outside [{HU_MIN}, {HU_MAX}]",
                    body.hu
                )));
            }
        }
        Ok(())
    }

    /// A head-like default: skull shell, brain parenchyma, ventricles and a
    /// small bright lesion, tuned for the brain display window.
    pub fn head() -> Self {
        PhantomSpec {
            canvas: 192,
            bodies: vec![
                Ellipse { center: [0.50, 0.50], axes: [0.42, 0.46], angle: 0.0, hu: 1200 },
                Ellipse { center: [0.50, 0.50], axes: [0.36, 0.40], angle: 0.0, hu: 38 },
                Ellipse { center: [0.42, 0.47], axes: [0.055, 0.13], angle: 0.28, hu: 8 },
                Ellipse { center: [0.58, 0.47], axes: [0.055, 0.13], angle: -0.28, hu: 8 },
                Ellipse { center: [0.57, 0.66], axes: [0.05, 0.045], angle: 0.6, hu: 68 },
            ],
            noise_hu: default_noise_hu(),
        }
    }
}

/// Paint the phantom onto an air canvas. Bodies overwrite in listed order and
/// seeded uniform noise perturbs every pixel covered by at least one body.
pub fn make_phantom_slice(spec: &PhantomSpec, seed: u64) -> Result<HuGrid> {
    spec.validate()?;
    let n = spec.canvas;
    let mut hu = vec![HU_MIN; n * n];
    let mut inside = vec![false; n * n];
    for body in &spec.bodies {
        for i in 0..n {
            let y = (i as f64 + 0.5) / n as f64;
            for j in 0..n {
                let x = (j as f64 + 0.5) / n as f64;
                if body.contains(x, y) {
                    hu[i * n + j] = body.hu;
                    inside[i * n + j] = true;
                }
            }
        }
    }
    if spec.noise_hu > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = spec.noise_hu as i32;
        for (px, covered) in inside.iter().enumerate() {
            if *covered {
                let delta = rng.random_range(-amp..=amp);
                hu[px] = (hu[px] as i32 + delta).clamp(HU_MIN as i32, HU_MAX as i32) as i16;
            }
        }
    }
    HuGrid::new(n, n, hu)
}

/// Display transform: `out = clamp((hu - (wl - ww/2)) / ww, 0, 1)`.
pub fn window_map(hu: &HuGrid, ww: f64, wl: f64) -> Result<ImageGrid> {
    if !(ww > 0.0) {
        return Err(Error::Argument(format!("window width {ww} must be positive")));
    }
    let floor = wl - ww / 2.0;
    let data = hu
        .data
        .iter()
        .map(|&v| (((v as f64 - floor) / ww).clamp(0.0, 1.0)) as f32)
        .collect();
    ImageGrid::new(hu.height, hu.width, 1, RangeTag::Unit, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_phantom_is_air() {
        let spec = PhantomSpec { canvas: 16, bodies: vec![], noise_hu: 20 };
        let slice = make_phantom_slice(&spec, 1).unwrap();
        assert!(slice.data.iter().all(|&v| v == HU_MIN));
    }

    #[test]
    fn full_canvas_ellipse_covers_interior_not_corners() {
        let spec = PhantomSpec {
            canvas: 64,
            bodies: vec![Ellipse { center: [0.5, 0.5], axes: [0.5, 0.5], angle: 0.0, hu: 0 }],
            noise_hu: 20,
        };
        let slice = make_phantom_slice(&spec, 7).unwrap();
        let center = slice.get(32, 32);
        assert!(center.abs() <= 20, "interior {center} should be 0 +- noise");
        assert_eq!(slice.get(0, 0), HU_MIN);
        assert_eq!(slice.get(63, 63), HU_MIN);
    }

    #[test]
    fn ellipse_pixel_count_matches_area() {
        // Brute-force point count against the analytic area pi*a*b*canvas^2.
        let (a, b) = (0.31, 0.22);
        let canvas = 256;
        let spec = PhantomSpec {
            canvas,
            bodies: vec![Ellipse { center: [0.5, 0.5], axes: [a, b], angle: 0.77, hu: 100 }],
            noise_hu: 0,
        };
        let slice = make_phantom_slice(&spec, 0).unwrap();
        let count = slice.data.iter().filter(|&&v| v != HU_MIN).count() as f64;
        let analytic = std::f64::consts::PI * a * b * (canvas * canvas) as f64;
        let rel = (count - analytic).abs() / analytic;
        assert!(rel < 0.02, "pixel count {count} vs analytic {analytic}: rel err {rel}");
    }

    #[test]
    fn determinism_per_seed() {
        let spec = PhantomSpec::head();
        let a = make_phantom_slice(&spec, 5).unwrap();
        let b = make_phantom_slice(&spec, 5).unwrap();
        let c = make_phantom_slice(&spec, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn window_map_values() {
        let hu = HuGrid::new(1, 3, vec![40, -200, 60]).unwrap();
        let img = window_map(&hu, 80.0, 40.0).unwrap();
        assert!((img.get(0, 0, 0) - 0.5).abs() < 1e-6); // window center
        assert_eq!(img.get(0, 1, 0), 0.0); // below the floor clamps
        assert!((img.get(0, 2, 0) - 0.75).abs() < 1e-6); // (60 - 0) / 80
    }

    #[test]
    fn window_map_rejects_bad_width() {
        let hu = HuGrid::new(1, 1, vec![0]).unwrap();
        assert!(matches!(window_map(&hu, 0.0, 40.0), Err(Error::Argument(_))));
    }
}
