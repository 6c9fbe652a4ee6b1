//! Synthetic scene generator, SIPR storage, crops, manifests and the
//! block-matching aligner on scenes with planted offsets.

use pansharp_core::data::manifest::scene_seeds;
use pansharp_core::data::sipr::{BitDepth, SiprError, SiprRaster, HEADER_LEN};
use pansharp_core::data::{
    crop_pair, generate_dataset, generate_scene, random_crop_pair, render_scene, Dataset, Manifest, OffsetField,
    SceneConfig,
};
use pansharp_core::metrics::{block_match_align, BLOCK, SEARCH};
use pansharp_tensor::ops::box_downsample;
use pansharp_tensor::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> SceneConfig {
    SceneConfig {
        ms_height: 32,
        ms_width: 32,
        ..SceneConfig::default()
    }
}

fn planted(dy: isize, dx: isize) -> SceneConfig {
    SceneConfig {
        objects: 0,
        global_shift: Some([dy, dx]),
        ..small()
    }
}

fn field_is_constant(f: &OffsetField, d: (isize, isize)) -> bool {
    (0..f.height).all(|y| (0..f.width).all(|x| f.at(y, x) == d))
}

#[test]
fn generator_is_a_pure_function_of_seed_and_config() {
    let a = generate_scene(17, &small()).unwrap();
    let b = generate_scene(17, &small()).unwrap();
    assert_eq!(a.pan.data(), b.pan.data());
    assert_eq!(a.ms.data(), b.ms.data());
    assert_eq!(a.gt_offsets, b.gt_offsets);
    let c = generate_scene(18, &small()).unwrap();
    assert_ne!(a.ms.data(), c.ms.data());
}

#[test]
fn zero_shift_scene_is_a_plain_box_downsample() {
    let cfg = SceneConfig {
        max_global_shift: 0,
        max_object_shift: 0,
        ..small()
    };
    let r = render_scene(5, &cfg).unwrap();
    assert!(field_is_constant(&r.pair.gt_offsets, (0, 0)));
    let want = box_downsample(&r.ms_latent, 4).unwrap();
    // Only the 11-bit snap separates the stored MS from the exact box mean.
    assert!(r.pair.ms.max_abs_diff(&want) <= 0.5 / 2047.0 + 1e-12);
    assert_eq!(r.pan_latent.data(), r.ms_latent.data());
}

#[test]
fn planted_global_shift_gives_a_constant_field() {
    let pair = generate_scene(3, &planted(2, 1)).unwrap();
    assert_eq!(pair.meta.global_shift, [2, 1]);
    assert!(field_is_constant(&pair.gt_offsets, (2, 1)));
}

#[test]
fn samples_lie_on_the_unit_interval() {
    for seed in scene_seeds(1, 6) {
        let pair = generate_scene(seed, &small()).unwrap();
        for t in [&pair.pan, &pair.ms] {
            assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
            // 11-bit grid.
            assert!(t.data().iter().all(|v| ((v * 2047.0).round() - v * 2047.0).abs() < 1e-9));
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let too_far = SceneConfig {
        max_object_shift: 5,
        max_global_shift: 5,
        ..small()
    };
    assert!(generate_scene(0, &too_far).is_err());
    let planted_too_far = SceneConfig {
        global_shift: Some([0, 5]),
        ..small()
    };
    assert!(generate_scene(0, &planted_too_far).is_err());
    let tiny = SceneConfig {
        ms_height: 2,
        ..small()
    };
    assert!(generate_scene(0, &tiny).is_err());
}

#[test]
fn sipr_files_round_trip_and_reject_truncation() {
    let pair = generate_scene(8, &small()).unwrap();
    let raster = SiprRaster::from_tensor(&pair.ms, BitDepth::Eleven).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ms.sipr");
    raster.write(&path).unwrap();
    let back = SiprRaster::read(&path).unwrap();
    assert_eq!(back, raster);
    assert_eq!(back.to_tensor().data(), pair.ms.data());

    let bytes = raster.encode();
    assert_eq!(bytes.len(), HEADER_LEN + 2 * 32 * 32 * 3);
    assert!(matches!(SiprRaster::decode(&bytes[..bytes.len() - 1]), Err(SiprError::Truncated { .. })));
    assert!(SiprRaster::decode(&bytes[..HEADER_LEN - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(SiprRaster::decode(&bad).is_err());
}

#[test]
fn offset_fields_round_trip_through_rasters() {
    let pair = generate_scene(21, &small()).unwrap();
    let back = OffsetField::from_raster(&pair.gt_offsets.to_raster()).unwrap();
    assert_eq!(back, pair.gt_offsets);
}

#[test]
fn crops_keep_pan_and_ms_registered() {
    let pair = generate_scene(4, &small()).unwrap();
    let c = crop_pair(&pair, 3, 5, 8).unwrap();
    assert_eq!(c.ms.shape().dims(), [1, 8, 8, 3]);
    assert_eq!(c.pan.shape().dims(), [1, 32, 32, 1]);
    assert_eq!(c.ms.at(0, 0, 0, 1), pair.ms.at(0, 3, 5, 1));
    assert_eq!(c.pan.at(0, 0, 0, 0), pair.pan.at(0, 12, 20, 0));
    assert_eq!(c.pan.at(0, 31, 31, 0), pair.pan.at(0, 43, 51, 0));
    assert_eq!(c.gt_offsets.at(7, 7), pair.gt_offsets.at(10, 12));
    assert!(crop_pair(&pair, 25, 0, 8).is_err());
    assert!(crop_pair(&pair, 0, 0, 0).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (c, (y, x)) = random_crop_pair(&pair, 16, &mut rng).unwrap();
        assert!(y <= 16 && x <= 16);
        assert_eq!(c.ms.at(0, 15, 15, 2), pair.ms.at(0, y + 15, x + 15, 2));
        assert_eq!(c.pan.at(0, 63, 0, 0), pair.pan.at(0, 4 * y + 63, 4 * x, 0));
    }
}

fn pan_down(pan: &Tensor) -> Tensor {
    box_downsample(pan, 4).unwrap()
}

#[test]
fn block_matching_recovers_a_planted_global_shift() {
    let pair = generate_scene(6, &planted(2, -3)).unwrap();
    let m = block_match_align(&pair.ms, &pan_down(&pair.pan), SEARCH, BLOCK).unwrap();
    assert!(m.blocks.iter().all(|b| (b.dy, b.dx) == (2, -3)), "{:?}", m.blocks);
    assert!((m.residual_misalignment() - 13f64.sqrt()).abs() < 1e-12);
}

#[test]
fn block_matching_an_image_against_itself_finds_no_offset() {
    let pair = generate_scene(7, &small()).unwrap();
    let lum = pansharp_tensor::ops::channel_mean(&pair.ms);
    let m = block_match_align(&pair.ms, &lum, SEARCH, BLOCK).unwrap();
    assert_eq!(m.residual_misalignment(), 0.0);
    assert_eq!(m.aligned.data(), pair.ms.data());
}

#[test]
fn block_matching_follows_the_global_shift_around_objects() {
    // Objects move on their own, so only blocks dominated by background must agree.
    let (mut hits, mut total) = (0, 0);
    for seed in scene_seeds(33, 8) {
        let cfg = SceneConfig {
            global_shift: Some([1, -2]),
            ..small()
        };
        let pair = generate_scene(seed, &cfg).unwrap();
        let m = block_match_align(&pair.ms, &pan_down(&pair.pan), SEARCH, 8).unwrap();
        for b in &m.blocks {
            let background = (b.y0..b.y0 + b.height)
                .flat_map(|y| (b.x0..b.x0 + b.width).map(move |x| (y, x)))
                .all(|(y, x)| pair.gt_offsets.at(y, x) == (1, -2));
            if background {
                total += 1;
                hits += usize::from((b.dy - 1).abs() <= 1 && (b.dx + 2).abs() <= 1);
            }
        }
    }
    assert!(total >= 40, "only {total} background blocks");
    assert!(hits * 10 >= total * 9, "{hits}/{total}");
}

#[test]
fn manifest_generation_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset(dir.path(), 3, 12, &small()).unwrap();
    let loaded = Manifest::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(loaded.entries, manifest.entries);
    let data = Dataset::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(data.len(), 3);
    for (scene, seed) in data.scenes.iter().zip(scene_seeds(12, 3)) {
        let fresh = generate_scene(seed, &small()).unwrap();
        assert_eq!(scene.ms.data(), fresh.ms.data());
        assert_eq!(scene.pan.data(), fresh.pan.data());
        assert_eq!(scene.gt_offsets, fresh.gt_offsets);
        assert_eq!(scene.meta, fresh.meta);
    }
}

#[test]
fn regenerating_a_dataset_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(a.path(), 2, 4, &small()).unwrap();
    generate_dataset(b.path(), 2, 4, &small()).unwrap();
    for name in ["manifest.json", "scene_0001_pan.sipr", "scene_0001_ms.sipr", "scene_0001_offsets.sipr"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn empty_or_malformed_manifests_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    std::fs::write(&path, "[]").unwrap();
    assert!(Manifest::load(&path).is_err());
    std::fs::write(&path, "{not json").unwrap();
    assert!(Manifest::load(&path).is_err());
    assert!(Manifest::load(&dir.path().join("missing.json")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn planted_shifts_are_exact_in_the_ground_truth(dy in -3isize..=3, dx in -3isize..=3, seed in 0u64..1000) {
        let pair = generate_scene(seed, &planted(dy, dx)).unwrap();
        prop_assert!(field_is_constant(&pair.gt_offsets, (dy, dx)));
    }
}
