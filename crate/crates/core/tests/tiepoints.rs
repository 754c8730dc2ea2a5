use coreg::geo::{AffineGeoTransform, Band, PixelPoint};
use coreg::pipeline::{generate_synthetic, SyntheticSpec};
use coreg::tiepoints::{
    describe_and_match, detect_corners, extract_tiepoints, read_tiepoints, write_tiepoints, Corner, DetectConfig,
    MatchConfig, Provenance, TiePoint, TiePointSet, CIRCLE,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn band(w: usize, h: usize, data: Vec<f32>) -> Band {
    Band::from_grid("img", w, h, AffineGeoTransform::north_up(0.0, 0.0, 1.0, -1.0), data).unwrap()
}

/// Plain per-pixel segment test: try every start of a nine-pixel arc.
fn naive_score(img: &Band, c: usize, r: usize, t: f32) -> f32 {
    let p = img.get(c, r);
    let ring: Vec<f32> = CIRCLE
        .iter()
        .map(|&(dx, dy)| img.get((c as i32 + dx) as usize, (r as i32 + dy) as usize))
        .collect();
    let arc = |pred: &dyn Fn(f32) -> bool| (0..16).any(|s| (0..9).all(|k| pred(ring[(s + k) % 16])));
    if !arc(&|v| v > p + t) && !arc(&|v| v < p - t) {
        return 0.0;
    }
    let bright: f32 = ring.iter().filter(|&&v| v > p + t).map(|&v| v - p - t).sum();
    let dark: f32 = ring.iter().filter(|&&v| v < p - t).map(|&v| p - t - v).sum();
    bright.max(dark)
}

fn naive_detect(img: &Band, t: f32) -> Vec<(usize, usize, f32)> {
    let (w, h) = img.dims();
    let mut s = vec![0.0f32; w * h];
    for r in 3..h - 3 {
        for c in 3..w - 3 {
            s[r * w + c] = naive_score(img, c, r, t);
        }
    }
    let mut out = Vec::new();
    for r in 3..h - 3 {
        for c in 3..w - 3 {
            let v = s[r * w + c];
            if v <= 0.0 {
                continue;
            }
            let mut keep = true;
            for rr in r - 1..=r + 1 {
                for cc in c - 1..=c + 1 {
                    if (rr, cc) == (r, c) {
                        continue;
                    }
                    let n = s[rr * w + cc];
                    let earlier = (rr, cc) < (r, c);
                    if n > v || (n == v && earlier) {
                        keep = false;
                    }
                }
            }
            if keep {
                out.push((c, r, v));
            }
        }
    }
    out.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0))));
    out
}

fn as_tuples(cs: &[Corner]) -> Vec<(usize, usize, f32)> {
    cs.iter().map(|c| (c.col, c.row, c.score)).collect()
}

#[test]
fn checkerboard_matches_brute_force_scan() {
    let (w, h) = (64, 48);
    let data = (0..h)
        .flat_map(|r| (0..w).map(move |c| if (c / 7 + r / 5) % 2 == 0 { 200.0 } else { 30.0 }))
        .collect();
    let img = band(w, h, data);
    let got = as_tuples(&detect_corners(&img, usize::MAX, 40));
    assert!(!got.is_empty());
    assert_eq!(got, naive_detect(&img, 40.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn random_images_match_brute_force_scan(seed in any::<u64>(), t in 5u32..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..40 * 40).map(|_| rng.random_range(0..8) as f32 * 32.0).collect();
        let img = band(40, 40, data);
        prop_assert_eq!(as_tuples(&detect_corners(&img, usize::MAX, t)), naive_detect(&img, t as f32));
    }
}

fn textured(size: usize, seed: u64) -> Band {
    let scene = generate_synthetic(&SyntheticSpec {
        size,
        seed,
        resolution_ratio: 1,
        ..SyntheticSpec::default()
    })
    .unwrap();
    scene.warp.reference_band().clone()
}

#[test]
fn identical_images_match_themselves() {
    let img = textured(128, 1);
    let pts: Vec<PixelPoint> = detect_corners(&img, 300, 10).iter().map(Corner::point).collect();
    let interior = pts
        .iter()
        .filter(|p| p.x >= 9.5 && p.y >= 9.5 && p.x <= 128.0 - 9.5 && p.y <= 128.0 - 9.5)
        .count();
    let set = describe_and_match(&img, &img, &pts, &pts, &MatchConfig::default()).unwrap();
    assert_eq!(set.len(), interior);
    assert!(set.points().iter().all(|tp| tp.base == tp.warp && tp.score > 1.0 - 1e-12));
}

#[test]
fn integer_translation_is_recovered_exactly() {
    let big = textured(256, 2);
    let base = big.window(5, 3, 205, 203).unwrap();
    let warp = big.window(0, 0, 200, 200).unwrap();
    let set = extract_tiepoints(&base, &warp, &DetectConfig::default()).unwrap();
    assert!(set.len() > 50, "{}", set.len());
    let exact = set
        .points()
        .iter()
        .filter(|tp| tp.warp.x - tp.base.x == 5.0 && tp.warp.y - tp.base.y == 3.0)
        .count();
    assert_eq!(exact, set.len());
}

#[test]
fn uncorrelated_noise_rarely_matches() {
    let noise = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        band(160, 160, (0..160 * 160).map(|_| rng.random_range(0.0..255.0)).collect())
    };
    let (a, b) = (noise(1), noise(2));
    let cfg = DetectConfig {
        max_corners: 400,
        ..DetectConfig::default()
    };
    let set = extract_tiepoints(&a, &b, &cfg).unwrap();
    assert!((set.len() as f64) < 0.05 * 400.0, "{}", set.len());
}

#[test]
fn matching_is_deterministic() {
    let img = textured(128, 4);
    let other = img.window(2, 1, 120, 120).unwrap();
    let a = extract_tiepoints(&img, &other, &DetectConfig::default()).unwrap();
    let b = extract_tiepoints(&img, &other, &DetectConfig::default()).unwrap();
    assert_eq!(a, b);
}

fn random_set(seed: u64, n: usize) -> TiePointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = (0..n)
        .map(|_| {
            TiePoint::new(
                PixelPoint::new(rng.random_range(0.0..300.0), rng.random_range(0.0..200.0)),
                PixelPoint::new(rng.random_range(0.0..150.0), rng.random_range(0.0..100.0)),
                rng.random_range(0.0..=1.0),
            )
        })
        .collect();
    TiePointSet::new(pts, Provenance::Builtin, 30.0, (300, 200), (150, 100)).unwrap()
}

#[test]
fn hundred_point_fixture_round_trips() {
    let original = random_set(9, 100);
    // Hand-formatted fixture: padded decimals, comments, uneven spacing.
    let mut fixture = String::from("# external matches\nmurat-tiepoints v1 300 200 150 100 30.000\n");
    for tp in original.points() {
        fixture.push_str(&format!(
            "{:.20}  {:.20} {:.17e}\t{:.20} {:.17e}\n",
            tp.base.x, tp.base.y, tp.warp.x, tp.warp.y, tp.score
        ));
    }
    let imported = read_tiepoints(fixture.as_bytes(), "fixture").unwrap();
    let mut exported = Vec::new();
    write_tiepoints(&imported, &mut exported).unwrap();
    let again = read_tiepoints(exported.as_slice(), "fixture").unwrap();
    assert_eq!(imported, again);
    assert_eq!(imported.points(), original.points());
}

proptest! {
    #[test]
    fn export_import_is_lossless(seed in any::<u64>(), n in 0usize..60) {
        let set = random_set(seed, n);
        let mut buf = Vec::new();
        write_tiepoints(&set, &mut buf).unwrap();
        let back = read_tiepoints(buf.as_slice(), "x").unwrap();
        prop_assert_eq!(back.points(), set.points());
        prop_assert_eq!(back.base_dims(), set.base_dims());
        prop_assert_eq!(back.working_gsd_m(), set.working_gsd_m());
    }
}
