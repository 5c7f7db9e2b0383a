//! Temporary diagnostics for the round-trip error budget.

use filmrec_core::analysis::{evaluate_recovery, psnr, DeshiftMode};
use filmrec_core::grid::{ImageGrid, RangeTag};
use filmrec_core::synth::{
    build_surface, generate_sample, render_bundle, GenConfig, WarpParams,
};

fn film_texture(config: &GenConfig, seed: u64) -> ImageGrid {
    // Reuse a generated bundle's texture for realistic content.
    generate_sample(config, seed).unwrap().texture.clone()
}

#[test]
#[ignore]
fn probe_error_budget() {
    let config = GenConfig::default();
    let texture = film_texture(&config, 5);
    println!("texture {}x{}", texture.height(), texture.width());

    // 1. Flat, frame-filling sheet: pure splat + double-bilinear floor.
    let mut flat = WarpParams::flat(256, 256);
    flat.camera.focal *= 0.88;
    let mesh = build_surface(&flat, config.grid_n).unwrap();
    let bundle = render_bundle(&mesh, &texture, &flat, 256, 256).unwrap();
    let report = evaluate_recovery(&bundle, &bundle.uv, &bundle.deform, DeshiftMode::Plain).unwrap();
    println!("flat:        psnr {:7.3} ssim {:.4} ms_ssim {:.4}", report.psnr, report.ssim, report.ms_ssim);

    // 2. Direct texture sampling error floor (no backward map): sample the
    // texture at each film pixel's uv, then compare the photo's albedo record
    // against the texture at matching points -- measures one bilinear pass.
    let once = psnr(
        &bundle.texture,
        &resample_once(&bundle.texture),
        1.0,
    )
    .unwrap();
    println!("one-bilinear-pass self-resample floor: {once:.3} dB");

    // 3. Rotation only.
    let mut rot = flat.clone();
    rot.rotation = [0.3, -0.35, 0.3];
    let mesh = build_surface(&rot, config.grid_n).unwrap();
    let b = render_bundle(&mesh, &texture, &rot, 256, 256).unwrap();
    let r = evaluate_recovery(&b, &b.uv, &b.deform, DeshiftMode::Plain).unwrap();
    println!("rotated:     psnr {:7.3} ssim {:.4} ms_ssim {:.4} cov {:.2}", r.psnr, r.ssim, r.ms_ssim, b.coverage());

    // 4. Curl only.
    let mut curled = flat.clone();
    curled.curl = 1.4;
    let mesh = build_surface(&curled, config.grid_n).unwrap();
    let b = render_bundle(&mesh, &texture, &curled, 256, 256).unwrap();
    let r = evaluate_recovery(&b, &b.uv, &b.deform, DeshiftMode::Plain).unwrap();
    println!("curled:      psnr {:7.3} ssim {:.4} ms_ssim {:.4} cov {:.2}", r.psnr, r.ssim, r.ms_ssim, b.coverage());

    // 5. Sines only.
    let mut wavy = flat.clone();
    wavy.sine_terms = vec![filmrec_core::synth::SineTerm {
        amplitude: 0.06,
        freq: 1.2,
        phase: 0.7,
        direction: [0.9, 0.43],
    }];
    let mesh = build_surface(&wavy, config.grid_n).unwrap();
    let b = render_bundle(&mesh, &texture, &wavy, 256, 256).unwrap();
    let r = evaluate_recovery(&b, &b.uv, &b.deform, DeshiftMode::Plain).unwrap();
    println!("wavy:        psnr {:7.3} ssim {:.4} ms_ssim {:.4} cov {:.2}", r.psnr, r.ssim, r.ms_ssim, b.coverage());
}

/// Shift by half a pixel and back with bilinear sampling: the classic floor.
fn resample_once(img: &ImageGrid) -> ImageGrid {
    let (h, w) = (img.height(), img.width());
    let mut data = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            data.push(img.sample_bilinear(j as f64 + 1.0, i as f64 + 1.0, 0));
        }
    }
    let shifted = ImageGrid::new(h, w, 1, RangeTag::Unit, data).unwrap();
    let mut back = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            back.push(shifted.sample_bilinear(j as f64, i as f64, 0));
        }
    }
    ImageGrid::new(h, w, 1, RangeTag::Unit, back).unwrap()
}
