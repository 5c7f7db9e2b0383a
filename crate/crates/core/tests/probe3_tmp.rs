//! Temporary probes for fitter convergence and flat-field gains.

use filmrec_core::analysis::psnr;
use filmrec_core::losses::{fit_warp_params, FitConfig};
use filmrec_core::quality::{de_illuminate_oracle, estimate_flatfield};
use filmrec_core::synth::{generate_sample, FilmLayout, GenConfig, PhantomConfig, PhantomSpec};

fn fit_config128() -> GenConfig {
    GenConfig {
        out_h: 128,
        out_w: 128,
        grid_n: 33,
        layout: FilmLayout { rows: 2, cols: 2, cell: 60, margin: 3, background_level: 0.12 },
        phantom: PhantomConfig {
            base: PhantomSpec { canvas: 128, ..PhantomSpec::head() },
            ..PhantomConfig::default()
        },
        ..GenConfig::default()
    }
}

#[test]
#[ignore]
fn probe_fitter_curl() {
    let config = fit_config128();
    let t0 = std::time::Instant::now();
    for seed in 0..10u64 {
        let bundle = generate_sample(&config, seed).unwrap();
        let truth = bundle.meta.params.curl;
        let fit = FitConfig {
            free: vec!["curl".into()],
            init: vec![0.0],
            max_iters: 60,
            eps: 1e-3,
            step0: 0.5,
            fit_h: 128,
            fit_w: 128,
            grid_n: 33,
            ..FitConfig::default()
        };
        let result = fit_warp_params(&bundle, &fit).unwrap();
        let got = result.params.curl;
        let rel = if truth.abs() > 1e-9 { (got - truth).abs() / truth.abs() } else { got.abs() };
        println!(
            "seed {seed}: curl truth {truth:+.4} got {got:+.4} rel {rel:.4} iters {} evals {} final {:.3e}",
            result.loss_trace.len() - 1,
            result.evaluations,
            result.loss_trace.last().unwrap().1
        );
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn probe_fitter_multi() {
    let config = fit_config128();
    let t0 = std::time::Instant::now();
    for seed in [3u64, 7, 11] {
        let bundle = generate_sample(&config, seed).unwrap();
        let p = &bundle.meta.params;
        let truth = [p.sine_terms[0].amplitude, p.curl, p.rotation[0], p.rotation[1]];
        let init = [truth[0] * 0.3, truth[1] * 0.4, truth[2] + 0.12, truth[3] - 0.12];
        let fit = FitConfig {
            free: vec!["sine0_amp".into(), "curl".into(), "rot_x".into(), "rot_y".into()],
            init: init.to_vec(),
            max_iters: 80,
            eps: 1e-3,
            step0: 0.25,
            fit_h: 128,
            fit_w: 128,
            grid_n: 33,
            ..FitConfig::default()
        };
        let result = fit_warp_params(&bundle, &fit).unwrap();
        let initial = result.loss_trace[0].1;
        let last = result.loss_trace.last().unwrap().1;
        println!(
            "seed {seed}: ltrans {initial:.4} -> {last:.4} (ratio {:.3}) iters {} evals {}",
            last / initial,
            result.loss_trace.len() - 1,
            result.evaluations
        );
        for (k, name) in fit.free.iter().enumerate() {
            println!("   {name}: truth {:+.4} init {:+.4} got {:+.4}", truth[k], init[k], result.values[k]);
        }
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn probe_flatfield() {
    // Ambient-only bundle (shading == ambient constant).
    let mut config = GenConfig::default();
    config.warp.ambient = filmrec_core::synth::Span::new(1.0, 1.0);
    config.warp.diffuse = filmrec_core::synth::Span::new(0.0, 0.0);
    let bundle = generate_sample(&config, 3).unwrap();
    let ideal = de_illuminate_oracle(&bundle.warped, &bundle.albedo, &bundle.bgmask).unwrap();
    let sigma = bundle.warped.width().max(bundle.warped.height()) as f64 / 8.0;
    let (_, corrected) = estimate_flatfield(&bundle.warped, &bundle.bgmask, sigma).unwrap();
    let film_psnr = |img: &filmrec_core::ImageGrid| {
        let mut sq = 0.0;
        let mut n = 0usize;
        for i in 0..img.height() {
            for j in 0..img.width() {
                if bundle.bgmask.is_film(i, j) {
                    for ch in 0..img.channels() {
                        let d = img.get(i, j, ch) as f64 - ideal.get(i, j, ch) as f64;
                        sq += d * d;
                        n += 1;
                    }
                }
            }
        }
        10.0 * (1.0 / (sq / n as f64)).log10()
    };
    println!(
        "ambient-only: warped-vs-albedo {:.2} dB, corrected-vs-albedo {:.2} dB",
        film_psnr(&bundle.warped),
        film_psnr(&corrected)
    );

    // No-harm fixture: dimmed ambient-only scenes.
    for ambient in [0.7f64, 0.8] {
        let mut cfg = GenConfig::default();
        cfg.warp.ambient = filmrec_core::synth::Span::new(ambient, ambient);
        cfg.warp.diffuse = filmrec_core::synth::Span::new(0.0, 0.0);
        let b = generate_sample(&cfg, 4).unwrap();
        let ideal_b = de_illuminate_oracle(&b.warped, &b.albedo, &b.bgmask).unwrap();
        let fp = |img: &filmrec_core::ImageGrid| {
            let mut sq = 0.0;
            let mut n = 0usize;
            for i in 0..img.height() {
                for j in 0..img.width() {
                    if b.bgmask.is_film(i, j) {
                        for ch in 0..img.channels() {
                            let d = img.get(i, j, ch) as f64 - ideal_b.get(i, j, ch) as f64;
                            sq += d * d;
                            n += 1;
                        }
                    }
                }
            }
            10.0 * (1.0 / (sq / n as f64)).log10()
        };
        for sigma in [32.0, 64.0, 96.0] {
            let (_, corr) = estimate_flatfield(&b.warped, &b.bgmask, sigma).unwrap();
            println!(
                "no-harm ambient {ambient} sigma {sigma}: warped {:.2} dB corrected {:.2} dB",
                fp(&b.warped),
                fp(&corr)
            );
        }
    }

    // Gradient-lit fixture: side light, shading ramps 0.8 -> 1.2 (mean one).
    let b2 = generate_sample(&GenConfig::default(), 9).unwrap();
    let (h, w, c) = (b2.warped.height(), b2.warped.width(), b2.warped.channels());
    let mut lit = Vec::with_capacity(h * w * c);
    for i in 0..h {
        for j in 0..w {
            let s = 0.8 + 0.4 * j as f32 / (w - 1) as f32;
            for ch in 0..c {
                let base = if b2.bgmask.is_film(i, j) { b2.albedo.get(i, j, ch) * s } else { b2.warped.get(i, j, ch) };
                lit.push(base.clamp(0.0, 1.0));
            }
        }
    }
    let lit = filmrec_core::ImageGrid::new(h, w, c, filmrec_core::RangeTag::Unit, lit).unwrap();
    let ideal2 = de_illuminate_oracle(&lit, &b2.albedo, &b2.bgmask).unwrap();
    let film_psnr2 = |img: &filmrec_core::ImageGrid| {
        let mut sq = 0.0;
        let mut n = 0usize;
        for i in 0..h {
            for j in 0..w {
                if b2.bgmask.is_film(i, j) {
                    for ch in 0..img.channels() {
                        let d = img.get(i, j, ch) as f64 - ideal2.get(i, j, ch) as f64;
                        sq += d * d;
                        n += 1;
                    }
                }
            }
        }
        10.0 * (1.0 / (sq / n as f64)).log10()
    };
    for sigma in [32.0, 64.0, 96.0] {
        let (_, corr2) = estimate_flatfield(&lit, &b2.bgmask, sigma).unwrap();
        println!(
            "gradient-lit sigma {sigma}: warped-vs-albedo {:.2} dB, corrected-vs-albedo {:.2} dB",
            film_psnr2(&lit),
            film_psnr2(&corr2)
        );
    }
}
