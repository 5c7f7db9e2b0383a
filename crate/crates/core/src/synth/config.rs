//! Dataset generation: seeded parameter sampling, per-sample rendering, and
//! the on-disk sample layout with its manifest.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fmap;
use crate::grid::{ImageGrid, MapField, MapRole};
use crate::quality::WindowSpec;
use crate::synth::phantom::{make_phantom_slice, window_map, PhantomSpec};
use crate::synth::render::{render_bundle, SampleBundle, SampleMeta};
use crate::synth::surface::build_surface;
use crate::synth::texture::{compose_film_texture, FilmLayout};
use crate::synth::warp::{Camera, Light, SineTerm, WarpParams};

/// Closed sampling interval.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub fn new(lo: f64, hi: f64) -> Self {
        Span { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.hi <= self.lo {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() || self.hi < self.lo {
            return Err(Error::Argument(format!("bad range for {name}: [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Sampling ranges for every warp, camera and light parameter.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarpRanges {
    pub sine_count_min: usize,
    pub sine_count_max: usize,
    pub amplitude: Span,
    pub freq: Span,
    pub curl: Span,
    pub rotation_deg: Span,
    pub translation_xy: Span,
    pub translation_z: Span,
    /// Focal length as a fraction of `distance * out_w`; 1.0 makes the flat
    /// sheet fill the frame exactly.
    pub focal_scale: Span,
    pub distance: Span,
    pub ambient: Span,
    pub diffuse: Span,
    /// Tilt of the light away from the optical axis, radians.
    pub light_tilt: Span,
    pub background: Span,
}

impl Default for WarpRanges {
    fn default() -> Self {
        WarpRanges {
            sine_count_min: 1,
            sine_count_max: 3,
            amplitude: Span::new(0.01, 0.08),
            freq: Span::new(0.4, 1.3),
            curl: Span::new(-1.5, 1.5),
            rotation_deg: Span::new(-25.0, 25.0),
            translation_xy: Span::new(-0.04, 0.04),
            translation_z: Span::new(-0.05, 0.05),
            focal_scale: Span::new(0.82, 0.92),
            distance: Span::new(2.2, 3.0),
            ambient: Span::new(0.3, 0.5),
            diffuse: Span::new(0.45, 0.65),
            light_tilt: Span::new(0.0, 0.3),
            background: Span::new(0.08, 0.35),
        }
    }
}

/// Phantom settings: the base anatomy plus per-slice variation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub base: PhantomSpec,
    /// Per-slice uniform scale jitter applied to every body axis.
    pub slice_scale_jitter: f64,
    /// Per-slice center jitter in fractional canvas units.
    pub slice_center_jitter: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            base: PhantomSpec::head(),
            slice_scale_jitter: 0.06,
            slice_center_jitter: 0.015,
        }
    }
}

/// Fully documented generation configuration. Unknown keys are rejected.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub out_h: usize,
    pub out_w: usize,
    /// Vertex count per mesh side.
    pub grid_n: usize,
    pub layout: FilmLayout,
    pub phantom: PhantomConfig,
    pub window: WindowSpec,
    pub warp: WarpRanges,
    /// Print PSF of the film texture, Gaussian stddev in texture pixels.
    /// Band-limits the content the way a physical printer does; 0 disables.
    pub print_sigma: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            out_h: 256,
            out_w: 256,
            grid_n: 65,
            layout: FilmLayout { rows: 2, cols: 2, cell: 86, margin: 4, background_level: 0.12 },
            phantom: PhantomConfig::default(),
            window: WindowSpec::brain(),
            warp: WarpRanges::default(),
            print_sigma: 0.9,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.out_h == 0 || self.out_w == 0 {
            return Err(Error::Argument("output size must be nonzero".into()));
        }
        if self.grid_n < 2 {
            return Err(Error::Argument("grid_n must be at least 2".into()));
        }
        self.layout.validate()?;
        self.phantom.base.validate()?;
        if self.phantom.base.bodies.is_empty() {
            return Err(Error::Argument("phantom needs at least one body".into()));
        }
        WindowSpec::new(self.window.ww, self.window.wl)?;
        let w = &self.warp;
        if w.sine_count_min > w.sine_count_max {
            return Err(Error::Argument("sine_count_min exceeds sine_count_max".into()));
        }
        for (span, name) in [
            (w.amplitude, "amplitude"),
            (w.freq, "freq"),
            (w.curl, "curl"),
            (w.rotation_deg, "rotation_deg"),
            (w.translation_xy, "translation_xy"),
            (w.translation_z, "translation_z"),
            (w.focal_scale, "focal_scale"),
            (w.distance, "distance"),
            (w.ambient, "ambient"),
            (w.diffuse, "diffuse"),
            (w.light_tilt, "light_tilt"),
            (w.background, "background"),
        ] {
            span.validate(name)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<GenConfig> {
        let config: GenConfig = serde_json::from_str(text)
            .map_err(|e| Error::Argument(format!("generation config: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}

/// Draw one parameter set from the configured ranges. The draw order is part
/// of the determinism contract.
pub fn sample_params(config: &GenConfig, rng: &mut ChaCha8Rng) -> Result<WarpParams> {
    let w = &config.warp;
    let count = if w.sine_count_max > w.sine_count_min {
        rng.random_range(w.sine_count_min..=w.sine_count_max)
    } else {
        w.sine_count_min
    };
    let mut sine_terms = Vec::with_capacity(count);
    for _ in 0..count {
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        sine_terms.push(SineTerm {
            amplitude: w.amplitude.sample(rng),
            freq: w.freq.sample(rng),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            direction: [angle.cos(), angle.sin()],
        });
    }
    // Rescale amplitudes if the joint slope bound would be violated.
    let slope: f64 = sine_terms
        .iter()
        .map(|t| t.amplitude.abs() * std::f64::consts::TAU * t.freq)
        .sum();
    if slope >= 0.95 {
        let scale = 0.95 / slope;
        for t in &mut sine_terms {
            t.amplitude *= scale;
        }
    }

    let curl = w.curl.sample(rng);
    let deg = std::f64::consts::PI / 180.0;
    let rotation = [
        w.rotation_deg.sample(rng) * deg,
        w.rotation_deg.sample(rng) * deg,
        w.rotation_deg.sample(rng) * deg,
    ];
    let translation = [
        w.translation_xy.sample(rng),
        w.translation_xy.sample(rng),
        w.translation_z.sample(rng),
    ];
    let distance = w.distance.sample(rng);
    let focal = w.focal_scale.sample(rng) * distance * config.out_w as f64;
    let tilt = w.light_tilt.sample(rng);
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let light = Light {
        direction: [tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), -tilt.cos()],
        ambient: w.ambient.sample(rng),
        diffuse: w.diffuse.sample(rng),
    };
    let base = w.background.sample(rng);
    let jitter = |rng: &mut ChaCha8Rng| (base + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0);
    let background = [jitter(rng), jitter(rng), jitter(rng)];

    let mut params = WarpParams {
        sine_terms,
        curl,
        rotation,
        translation,
        camera: Camera {
            focal,
            principal: [config.out_w as f64 / 2.0, config.out_h as f64 / 2.0],
            distance,
        },
        light,
        background,
    };
    params.validate()?;
    Ok(params)
}

fn slice_variant(config: &PhantomConfig, rng: &mut ChaCha8Rng) -> PhantomSpec {
    let mut spec = config.base.clone();
    let scale = 1.0 + rng.random_range(-config.slice_scale_jitter..=config.slice_scale_jitter);
    for body in &mut spec.bodies {
        body.axes[0] = (body.axes[0] * scale).max(1e-3);
        body.axes[1] = (body.axes[1] * scale).max(1e-3);
        let j = config.slice_center_jitter;
        if j > 0.0 {
            body.center[0] = (body.center[0] + rng.random_range(-j..=j)).clamp(0.0, 1.0);
            body.center[1] = (body.center[1] + rng.random_range(-j..=j)).clamp(0.0, 1.0);
        }
    }
    spec
}

/// Render one fully annotated sample from its seed.
pub fn generate_sample(config: &GenConfig, seed: u64) -> Result<SampleBundle> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = sample_params(config, &mut rng)?;

    let n_slices = config.layout.rows * config.layout.cols;
    let mut hu_slices = Vec::with_capacity(n_slices);
    let mut displays = Vec::with_capacity(n_slices);
    for _ in 0..n_slices {
        let spec = slice_variant(&config.phantom, &mut rng);
        let slice_seed = rng.random::<u64>();
        let hu = make_phantom_slice(&spec, slice_seed)?;
        displays.push(window_map(&hu, config.window.ww, config.window.wl)?);
        hu_slices.push(hu);
    }
    let texture = compose_film_texture(&displays, &config.layout)?;
    let texture = apply_print_psf(&texture, config.print_sigma)?;
    let mesh = build_surface(&params, config.grid_n)?;
    let mut bundle = render_bundle(&mesh, &texture, &params, config.out_h, config.out_w)?;
    bundle.hu_slices = hu_slices;
    bundle.meta = SampleMeta { params, seed, window: config.window };
    Ok(bundle)
}

/// Band-limit a texture with the print PSF. Edge-normalized so borders keep
/// their level.
fn apply_print_psf(texture: &ImageGrid, sigma: f64) -> Result<ImageGrid> {
    if sigma <= 0.0 {
        return Ok(texture.clone());
    }
    let (h, w) = (texture.height(), texture.width());
    let values: Vec<f64> = texture.data().iter().map(|&v| v as f64).collect();
    let ones = vec![1.0f64; h * w];
    let blurred = crate::quality::gaussian_blur(&values, h, w, sigma);
    let norm = crate::quality::gaussian_blur(&ones, h, w, sigma);
    let data = blurred
        .iter()
        .zip(&norm)
        .map(|(&v, &n)| (v / n).clamp(0.0, 1.0) as f32)
        .collect();
    ImageGrid::new(h, w, 1, crate::grid::RangeTag::Unit, data)
}

/// Independent per-sample seed stream (splitmix64 over the base seed).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ (index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub seed: u64,
    pub params: WarpParams,
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub samples: Vec<ManifestEntry>,
}

/// Write every bundle file for sample `id` under `dir`. Returns the file map
/// recorded in the manifest. Files are written to a temp name first and
/// renamed into place.
pub fn write_bundle(dir: &Path, id: usize, bundle: &SampleBundle) -> Result<BTreeMap<String, String>> {
    let mut files = BTreeMap::new();
    let mut record = |key: &str, name: String| {
        files.insert(key.to_string(), name);
    };

    let png = |name: String, img: &ImageGrid| -> Result<String> {
        atomic_write(dir, &name, |p| fmap::write_png(p, img))?;
        Ok(name)
    };
    let fm = |name: String, field: &MapField| -> Result<String> {
        atomic_write(dir, &name, |p| fmap::write_fmap(p, field))?;
        Ok(name)
    };

    record("warped", png(format!("{id}_warped.png"), &bundle.warped)?);
    record("texture", png(format!("{id}_texture.png"), &bundle.texture)?);
    record("albedo", fm(format!("{id}_albedo.fmap"), &bundle.albedo)?);
    record("uv", fm(format!("{id}_uv.fmap"), &bundle.uv)?);
    record("deform", fm(format!("{id}_deform.fmap"), &bundle.deform)?);
    record("coord3d", fm(format!("{id}_coord3d.fmap"), &bundle.coord3d)?);
    record("normal", fm(format!("{id}_normal.fmap"), &bundle.normal)?);
    record("depth", fm(format!("{id}_depth.fmap"), &bundle.depth)?);
    record("mask", fm(format!("{id}_mask.fmap"), &bundle.bgmask)?);

    let hu_name = format!("{id}_hu.raw");
    let mut header = None;
    atomic_write(dir, &hu_name, |p| {
        header = Some(fmap::write_hu_payload(p, &bundle.hu_slices, Some(bundle.meta.window))?);
        Ok(())
    })?;
    let header = header.expect("payload write fills the header");
    atomic_write(dir, &format!("{hu_name}.json"), |p| fmap::write_hu_header(p, &header))?;
    record("hu", hu_name);

    let meta_name = format!("{id}_meta.json");
    let meta_json = serde_json::to_string_pretty(&bundle.meta).expect("meta serializes");
    atomic_write(dir, &meta_name, |p| {
        std::fs::write(p, &meta_json).map_err(|e| Error::io(p, e))
    })?;
    record("meta", meta_name);

    Ok(files)
}

/// Load a sample written by [`write_bundle`]. The warped photo and texture
/// come back 8-bit quantized; maps are exact.
pub fn load_bundle(dir: &Path, id: usize) -> Result<SampleBundle> {
    let path = |name: String| dir.join(name);
    let meta_text = std::fs::read_to_string(path(format!("{id}_meta.json")))
        .map_err(|e| Error::io(dir.join(format!("{id}_meta.json")), e))?;
    let meta: SampleMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::format("sample meta", e.to_string()))?;
    let (hu_slices, _) = fmap::read_hu_raw(&path(format!("{id}_hu.raw")))?;
    let expect_role = |field: MapField, role: MapRole| -> Result<MapField> {
        if field.role() != role {
            return Err(Error::format(
                "sample map",
                format!("expected {role:?}, found {:?}", field.role()),
            ));
        }
        Ok(field)
    };
    Ok(SampleBundle {
        warped: fmap::read_png(&path(format!("{id}_warped.png")))?,
        coord3d: expect_role(fmap::read_fmap(&path(format!("{id}_coord3d.fmap")))?, MapRole::Coord3d)?,
        normal: expect_role(fmap::read_fmap(&path(format!("{id}_normal.fmap")))?, MapRole::Normal)?,
        depth: expect_role(fmap::read_fmap(&path(format!("{id}_depth.fmap")))?, MapRole::Depth)?,
        uv: expect_role(fmap::read_fmap(&path(format!("{id}_uv.fmap")))?, MapRole::Uv)?,
        deform: expect_role(fmap::read_fmap(&path(format!("{id}_deform.fmap")))?, MapRole::Deform)?,
        bgmask: expect_role(fmap::read_fmap(&path(format!("{id}_mask.fmap")))?, MapRole::Mask)?,
        albedo: expect_role(fmap::read_fmap(&path(format!("{id}_albedo.fmap")))?, MapRole::Albedo)?,
        texture: fmap::read_png(&path(format!("{id}_texture.png")))?,
        hu_slices,
        meta,
    })
}

fn atomic_write(dir: &Path, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let fin = dir.join(name);
    write(&tmp)?;
    std::fs::rename(&tmp, &fin).map_err(|e| Error::io(&fin, e))
}

/// Generate `n` independently seeded samples into `out_dir` and write the
/// manifest. `jobs` bounds the worker threads; outputs are byte-identical
/// regardless of the worker count.
pub fn generate_dataset(
    config: &GenConfig,
    seed: u64,
    n: usize,
    out_dir: &Path,
    jobs: usize,
) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let jobs = jobs.max(1).min(n.max(1));
    let next = AtomicUsize::new(0);
    let entries: Mutex<Vec<Option<ManifestEntry>>> = Mutex::new(vec![None; n]);
    let failure: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let id = next.fetch_add(1, Ordering::Relaxed);
                if id >= n || failure.lock().unwrap().is_some() {
                    return;
                }
                let sample_seed = derive_seed(seed, id as u64);
                let result = generate_sample(config, sample_seed)
                    .and_then(|bundle| write_bundle(out_dir, id, &bundle).map(|files| (bundle, files)));
                match result {
                    Ok((bundle, files)) => {
                        entries.lock().unwrap()[id] = Some(ManifestEntry {
                            id,
                            seed: sample_seed,
                            params: bundle.meta.params.clone(),
                            files,
                        });
                    }
                    Err(e) => {
                        let mut slot = failure.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let samples: Vec<ManifestEntry> = entries
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|e| e.expect("every sample filled"))
        .collect();
    let manifest = Manifest { samples };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let manifest_path = out_dir.join("manifest.json");
    std::fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GenConfig {
        GenConfig {
            out_h: 96,
            out_w: 96,
            grid_n: 33,
            layout: FilmLayout { rows: 1, cols: 1, cell: 96, margin: 4, background_level: 0.12 },
            phantom: PhantomConfig {
                base: PhantomSpec { canvas: 96, ..PhantomSpec::head() },
                ..PhantomConfig::default()
            },
            ..GenConfig::default()
        }
    }

    #[test]
    fn sample_generation_is_deterministic() {
        let config = small_config();
        let a = generate_sample(&config, 42).unwrap();
        let b = generate_sample(&config, 42).unwrap();
        assert_eq!(a.warped.data(), b.warped.data());
        assert_eq!(a.uv.data(), b.uv.data());
        assert_eq!(a.hu_slices, b.hu_slices);
        let c = generate_sample(&config, 43).unwrap();
        assert_ne!(a.warped.data(), c.warped.data());
    }

    #[test]
    fn generated_bundles_validate() {
        let config = small_config();
        for seed in [1u64, 2, 3] {
            let bundle = generate_sample(&config, seed).unwrap();
            bundle.validate().unwrap();
            assert!(bundle.coverage() > 0.15, "seed {seed}: coverage {}", bundle.coverage());
        }
    }

    #[test]
    fn dataset_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config();
        let manifest = generate_dataset(&config, 7, 2, dir.path(), 2).unwrap();
        assert_eq!(manifest.samples.len(), 2);
        let bundle = load_bundle(dir.path(), 1).unwrap();
        bundle.validate().unwrap();
        assert_eq!(bundle.meta.seed, manifest.samples[1].seed);
    }

    #[test]
    fn empty_dataset_writes_only_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_dataset(&GenConfig::default(), 7, 0, dir.path(), 4).unwrap();
        assert!(manifest.samples.is_empty());
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec!["manifest.json"]);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = GenConfig::from_json(r#"{"out_h": 64, "bogus": 1}"#);
        assert!(matches!(err, Err(Error::Argument(_))));
    }
}
