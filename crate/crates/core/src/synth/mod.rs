//! Procedural generation of annotated warped-film samples: phantom CT slices
//! printed into a film texture, an analytic 3D deformation of the film sheet,
//! and a z-buffered rasterizer that emits the photo together with every
//! ground-truth map the recovery pipeline consumes.

mod config;
mod phantom;
mod render;
mod surface;
mod texture;
mod warp;

pub use config::{
    generate_dataset, generate_sample, load_bundle, write_bundle, GenConfig, Manifest,
    ManifestEntry, PhantomConfig, Span, WarpRanges,
};
pub use phantom::{make_phantom_slice, window_map, Ellipse, PhantomSpec};
pub use render::{render_bundle, SampleBundle, SampleMeta};
pub use surface::{build_surface, mesh_area, SurfaceMesh};
pub use texture::{compose_film_texture, FilmLayout};
pub use warp::{Camera, Light, SineTerm, WarpParams};
