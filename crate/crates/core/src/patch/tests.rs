use approx::assert_relative_eq;

use crate::fixtures::camera_bundle;
use crate::scene::{DepthMap, Frame, Intrinsics, Pose, SceneBundle};

use super::*;

fn encoded() -> (SceneFeatures, WeightStore, EncoderConfig) {
    let cfg = EncoderConfig::default();
    let store = WeightStore::seeded(&cfg).unwrap();
    let features = encode_bundle(&camera_bundle(), &store, &cfg).unwrap();
    (features, store, cfg)
}

#[test]
fn grid_indexing_round_trips() {
    let grid = PatchGrid::new(64, 64, 16).unwrap();
    assert_eq!((grid.rows(), grid.cols(), grid.len()), (4, 4, 16));
    for row in 0..4 {
        for col in 0..4 {
            let i = grid.index(row, col);
            assert_eq!(grid.origin(i), (col * 16, row * 16));
        }
    }
    assert!(PatchGrid::new(60, 64, 16).is_err());
    assert!(PatchGrid::new(64, 64, 0).is_err());
}

#[test]
fn sixty_four_square_frames_make_sixteen_tokens_each() {
    let (features, _, cfg) = encoded();
    assert_eq!(features.patch_rows, 4);
    assert_eq!(features.patch_cols, 4);
    assert_eq!(features.n_frames(), 4);
    assert_eq!(features.tokens.len(), 64);
    assert_eq!(features.dim, cfg.d_out);
    for t in &features.tokens {
        assert_eq!(t.feature.len(), cfg.d_out);
        assert!(t.feature.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn only_the_carved_out_patch_is_invalid() {
    // Frame 0 of the fixture has its top-left 16x16 block of depth zeroed
    // out, which is exactly patch (0, 0); a second carved region leaves
    // two valid columns inside patch (2, 2).
    let (features, _, _) = encoded();
    let invalid: Vec<usize> = features
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.valid)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(invalid, vec![0]);
    let t = features.token(0, 0, 0);
    assert!(!t.valid);
    assert_eq!(t.center, [0.0; 3]);
    assert!(features.token(0, 2, 2).valid);
}

#[test]
fn invalid_tokens_keep_only_the_projected_semantic_term() {
    let (features, store, cfg) = encoded();
    let bundle = camera_bundle();
    let rgb = bundle.frames[0].rgb.as_ref().unwrap();
    let enc = ProjectedDescriptorEncoder::new(&store).unwrap();
    let sem = enc.encode(rgb, 0, 0, cfg.patch_size).unwrap();
    let expected: Vec<f32> = store
        .get("fuse.p_sem")
        .unwrap()
        .matvec(&sem)
        .unwrap()
        .iter()
        .map(|v| *v as f32)
        .collect();
    assert_eq!(features.token(0, 0, 0).feature, expected);
}

#[test]
fn valid_token_centers_stay_inside_the_scene() {
    let (features, _, _) = encoded();
    for t in features.tokens.iter().filter(|t| t.valid) {
        assert!(t.center[0].abs() < 10.0 && t.center[1].abs() < 10.0);
        let z = f64::from(t.center[2]);
        assert!((-0.1..=3.1).contains(&z));
        assert_ne!(t.center, [0.0; 3]);
    }
}

#[test]
fn encoding_is_deterministic_and_seed_sensitive() {
    let (a, store, cfg) = encoded();
    let b = encode_bundle(&camera_bundle(), &store, &cfg).unwrap();
    assert_eq!(a, b);

    // Same weights, different sampling seed: valid tokens change because
    // different points are drawn; the invalid token is untouched.
    let resampled = encode_bundle(
        &camera_bundle(),
        &store,
        &EncoderConfig {
            seed: 1,
            ..cfg.clone()
        },
    )
    .unwrap();
    assert_eq!(a.tokens[0], resampled.tokens[0]);
    assert_ne!(a, resampled);
}

#[test]
fn features_survive_a_file_round_trip() {
    let (features, _, _) = encoded();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("camera.gsr");
    features.save(&path).unwrap();
    assert_eq!(SceneFeatures::load(&path).unwrap(), features);
}

fn depthless_bundle(rgb: bool) -> SceneBundle {
    let w = 16;
    let frame = Frame {
        depth: DepthMap::from_meters(w, w, vec![0.0; w * w]).unwrap(),
        rgb: rgb.then(|| {
            crate::scene::RgbImage::new(w, w, vec![120u8; 3 * w * w]).unwrap()
        }),
        pose: Pose::identity(),
    };
    SceneBundle {
        scene_id: "empty".into(),
        intrinsics: Intrinsics::new(8.0, 8.0, 8.0, 8.0).unwrap(),
        frames: vec![frame],
        objects: vec![],
        room_area: None,
        axis_align: Default::default(),
    }
}

#[test]
fn all_invalid_depth_yields_all_invalid_tokens() {
    let cfg = EncoderConfig::default();
    let store = WeightStore::seeded(&cfg).unwrap();
    let features = encode_bundle(&depthless_bundle(true), &store, &cfg).unwrap();
    assert_eq!(features.tokens.len(), 1);
    assert!(features.tokens.iter().all(|t| !t.valid));

    // Without RGB the semantic descriptor is zero too, so the whole token
    // vanishes.
    let features = encode_bundle(&depthless_bundle(false), &store, &cfg).unwrap();
    assert!(features.tokens[0].feature.iter().all(|&v| v == 0.0));
}

#[test]
fn indivisible_frames_are_rejected() {
    let cfg = EncoderConfig {
        patch_size: 48,
        ..EncoderConfig::default()
    };
    let store = WeightStore::seeded(&cfg).unwrap();
    assert!(matches!(
        encode_bundle(&camera_bundle(), &store, &cfg),
        Err(PatchError::BadPatchGrid { .. })
    ));
}

#[test]
fn mismatched_weights_are_rejected() {
    let cfg = EncoderConfig::default();
    let narrow = EncoderConfig {
        widths: [16, 32],
        ..EncoderConfig::default()
    };
    let store = WeightStore::seeded(&narrow).unwrap();
    assert!(matches!(
        encode_bundle(&camera_bundle(), &store, &cfg),
        Err(PatchError::ShapeMismatch { .. })
    ));
}

#[test]
fn bad_configs_are_rejected() {
    for cfg in [
        EncoderConfig {
            d_out: 95,
            ..EncoderConfig::default()
        },
        EncoderConfig {
            k_samp: 0,
            ..EncoderConfig::default()
        },
        EncoderConfig {
            voxels: [0.05, 0.0],
            ..EncoderConfig::default()
        },
    ] {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    EncoderConfig::default().validate().unwrap();
}

#[test]
fn config_serializes_with_defaults_for_missing_fields() {
    let cfg: EncoderConfig = toml::from_str("seed = 7\npatch_size = 8\n").unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.patch_size, 8);
    assert_eq!(cfg.k_samp, EncoderConfig::default().k_samp);
    let text = toml::to_string(&EncoderConfig::default()).unwrap();
    let back: EncoderConfig = toml::from_str(&text).unwrap();
    assert_eq!(back, EncoderConfig::default());
}

#[test]
fn token_centers_track_patch_geometry() {
    // The fixture camera looks straight down from z = 3 with the floor at
    // z = 0, so every patch center must sit between floor and camera, and
    // a floor-only patch center must sit on the floor.
    let (features, _, _) = encoded();
    let floor_token = features.token(3, 3, 0);
    assert!(floor_token.valid);
    assert_relative_eq!(f64::from(floor_token.center[2]), 0.0, epsilon = 1e-4);
}
