//! Pinned-seed desk expectations beyond the acceptance criteria.
//!
//! Each needs several 30-epoch default-configuration runs, so the tests are
//! ignored by default. Run them with `cargo test --test desk_regressions --
//! --ignored --nocapture`. They share the acceptance workspace and reuse its
//! baseline runs as pretrained models.

mod common;

use synthgap::checkpoint::load_checkpoint;
use synthgap::config::Direction;
use synthgap::core::data::{Distribution, Split};
use synthgap::core::train::{evaluate, Normalization};
use synthgap::lab::{SweepResult, SYNTH};
use synthgap::run::CHECKPOINT;

const SEED: u64 = 0;

fn top1(sweep: &SweepResult, n: usize) -> f64 {
    sweep.row(&format!("n={n}")).and_then(|r| r.top1()).unwrap_or_else(|| panic!("row n={n} incomplete"))
}

#[test]
#[ignore = "trains default-configuration models for about an hour on one core"]
fn proxy_model_fits_its_own_distribution() {
    let lab = common::desk_lab(SEED);
    let baselines = lab.run_baselines().unwrap();
    let run = lab.ws.root().join(&baselines.baseline(SYNTH).unwrap().run_dir);
    let mut model = load_checkpoint(run.join(CHECKPOINT)).unwrap();
    let proxy = lab.ws.ensure_dataset(&lab.cfg.proxy_spec(lab.cfg.dataset.fidelity)).unwrap();
    assert_eq!(proxy.spec().distribution, Distribution::Proxy);
    let stats = Normalization::Default.fixed_stats().unwrap();
    let matched = evaluate(&mut model, proxy.split(Split::Val).unwrap(), &[1], &stats, 256).unwrap().topk[0].1;
    eprintln!(
        "proxy-trained model, proxy val top-1 {matched:.4}; gap on real val {:.2}pp",
        baselines.gap_pp().unwrap()
    );
    assert!(matched >= 0.60, "matched-distribution top-1 {matched}");
    assert!(baselines.gap_pp().unwrap() > 0.0);
}

#[test]
#[ignore = "trains three default-configuration transfer runs"]
fn synth_to_real_drop_concentrates_at_the_last_block() {
    let lab = common::desk_lab(SEED);
    let u = lab.cfg.arch().unit_count();
    let sweep = lab.run_transfer_sweep(Direction::SynthToReal, &[1, u - 2, u - 1]).unwrap();
    let (first, late, probe) = (top1(&sweep, 1), top1(&sweep, u - 2), top1(&sweep, u - 1));
    eprintln!("synth-to-real top-1: N=1 {first:.4}, N=U-2 {late:.4}, N=U-1 {probe:.4}");
    assert!(late - probe > first - late, "last-step drop {} vs earlier drop {}", late - probe, first - late);
}

#[test]
#[ignore = "trains two default-configuration transfer runs"]
fn real_to_synth_late_freeze_beats_early_freeze() {
    let lab = common::desk_lab(SEED);
    let u = lab.cfg.arch().unit_count();
    let sweep = lab.run_transfer_sweep(Direction::RealToSynth, &[1, u - 1]).unwrap();
    let (early, late) = (top1(&sweep, 1), top1(&sweep, u - 1));
    eprintln!("real-to-synth top-1: N=1 {early:.4}, N=U-1 {late:.4}");
    assert!(late > early, "N=U-1 {late} does not exceed N=1 {early}");
}

#[test]
#[ignore = "trains four default-configuration runs"]
fn scrambled_textures_score_below_originals() {
    let lab = common::desk_lab(SEED);
    let sweep = lab.run_ablation(synthgap::config::AblationKind::Texture).unwrap();
    for src in ["real", "synth"] {
        let cell = |kind: &str| sweep.row(&format!("{kind}@{src}")).and_then(|r| r.top1()).unwrap();
        let (original, scrambled) = (cell("original"), cell("scrambled"));
        eprintln!("texture {src}: original {original:.4}, scrambled {scrambled:.4}");
        assert!(scrambled < original, "{src}: scrambled {scrambled} >= original {original}");
    }
}
