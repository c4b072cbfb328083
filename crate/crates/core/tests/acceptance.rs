//! Acceptance checklist for the toolkit: ten numbered criteria, one test
//! each. Every test prints a single `ACCEPTANCE <n> <PASS|FAIL>` line with
//! its measured evidence before asserting, so a full run reads as a
//! checklist even when some criteria are red.

use ghostsim_core::binarization::{
    binarize_point_by_point, binarize_scalar, otsu_code, otsu_threshold, ppb_threshold_map,
    quantize, quantize_values, BlockSpec, ThresholdPropagator,
};
use ghostsim_core::experiment::{run_compare, speckle_stats, ExperimentConfig, ObjectSpec};
use ghostsim_core::metrics::corr;
use ghostsim_core::objects::{make_double_slit, DoubleSlitSpec, Orientation};
use ghostsim_core::reconstruction::Accumulator;
use ghostsim_core::speckle::{generate_frame, generate_run, ReferenceFrame, SpeckleParams};
use ghostsim_core::stack::{read_stack, write_stack};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: u32, pass: bool, detail: &str) {
    use std::io::Write;
    let word = if pass { "PASS" } else { "FAIL" };
    // Write straight to the process stdout, not through `println!`: the
    // harness captures macro output from passing tests, and these checklist
    // lines should be visible in a plain `cargo test` run too.
    let mut out = std::io::stdout().lock();
    writeln!(out, "ACCEPTANCE {criterion} {word}: {detail}").unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {criterion}: {detail}");
}

/// Corr per (seed, method) from a finished comparison.
fn score_of(reports: &[ghostsim_core::MetricsReport], seed: u64, method: &str) -> f64 {
    reports
        .iter()
        .find(|r| r.seed == seed && r.method == method)
        .unwrap_or_else(|| panic!("missing report for {method} seed {seed}"))
        .corr
}

/// Criterion 1: at the default desk scale (128x128 double slit of 4 px slits
/// 12 px apart, grain 1.5 px, 10000 frames, 16x16 blocks, alpha 0.15, 256
/// levels), the correlation scores order point_by_point > otsu > none > mean
/// in at least 4 of 5 fixed seeds.
#[test]
fn criterion_01_method_ranking_on_the_double_slit() {
    let cfg = ExperimentConfig {
        seeds: (0..5).collect(),
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let reports = run_compare(&cfg, dir.path()).unwrap();

    let mut hits = 0;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let p = score_of(&reports, seed, "point_by_point");
        let o = score_of(&reports, seed, "otsu");
        let t = score_of(&reports, seed, "none");
        let m = score_of(&reports, seed, "mean");
        let ordered = p > o && o > t && t > m;
        hits += u32::from(ordered);
        lines.push(format!(
            "seed {seed}: ppb {p:.4} otsu {o:.4} none {t:.4} mean {m:.4}{}",
            if ordered { "" } else { " [out of order]" }
        ));
    }
    verdict(
        1,
        hits >= 4,
        &format!(
            "point_by_point > otsu > none > mean held in {hits}/5 seeds (need 4): {}",
            lines.join("; ")
        ),
    );
}

/// Criterion 2: with a detailed grayscale object (the built-in 128x128 test
/// card) under the same protocol, point_by_point scores the highest
/// correlation of the four methods in at least 4 of 5 seeds.
#[test]
fn criterion_02_ranking_robustness_on_a_detailed_object() {
    let cfg = ExperimentConfig {
        seeds: (0..5).collect(),
        object: ObjectSpec::TestCard,
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let reports = run_compare(&cfg, dir.path()).unwrap();

    let mut hits = 0;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let p = score_of(&reports, seed, "point_by_point");
        let best_other = ["otsu", "none", "mean"]
            .iter()
            .map(|m| score_of(&reports, seed, m))
            .fold(f64::NEG_INFINITY, f64::max);
        let on_top = p > best_other;
        hits += u32::from(on_top);
        lines.push(format!(
            "seed {seed}: ppb {p:.4} vs best other {best_other:.4}{}",
            if on_top { "" } else { " [not on top]" }
        ));
    }
    verdict(
        2,
        hits >= 4,
        &format!(
            "point_by_point was the top scorer in {hits}/5 seeds (need 4): {}",
            lines.join("; ")
        ),
    );
}

/// Criterion 3: with the harmonic factor at 1 the per-pixel threshold map
/// collapses onto the global Otsu level, so point_by_point binarization must
/// be bitwise identical to otsu binarization on 100 frames of assorted
/// shapes (including shapes that are not block multiples).
#[test]
fn criterion_03_alpha_one_collapses_to_global_otsu() {
    let block = BlockSpec::new(16, 16).unwrap();
    let prop = ThresholdPropagator::new(block);
    let combos: [(usize, usize, f64); 4] =
        [(64, 64, 0.0), (64, 64, 1.5), (70, 50, 1.0), (128, 128, 2.0)];
    let mut checked = 0u32;
    let mut mismatches = 0u32;
    for (seed, &(rows, cols, sigma)) in combos.iter().enumerate() {
        let params = SpeckleParams::new(rows, cols, sigma, 1.0, seed as u64).unwrap();
        for idx in 0..25 {
            let frame = generate_frame(&params, idx).unwrap();
            let ppb = binarize_point_by_point(&frame, &prop, 1.0, 256).unwrap();
            let q = quantize(&frame, 256).unwrap();
            let otsu = binarize_scalar(&frame, otsu_threshold(&q));
            checked += 1;
            mismatches += u32::from(ppb.bits != otsu.bits);
        }
    }
    verdict(
        3,
        checked == 100 && mismatches == 0,
        &format!(
            "{mismatches} of {checked} frames differed between point_by_point(alpha=1) and otsu"
        ),
    );
}

/// Exhaustive reference for the optimal histogram split, in exact integer
/// arithmetic. For a split k with class weights w0, w1 and class-0 index sum
/// s0, the between-class variance is d^2 / (w0 w1) with
/// d = s0 * total_weight - total_sum * w0, so two splits compare exactly via
/// d^2 * (w0' w1') vs d'^2 * (w0 w1). Counts are kept small enough that the
/// products stay far below the 128-bit limit.
fn exhaustive_best_split(hist: &[u64]) -> u32 {
    let occupied: Vec<usize> = hist
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > 0)
        .map(|(i, _)| i)
        .collect();
    match occupied.as_slice() {
        [] => return 0,
        [only] => return *only as u32,
        _ => {}
    }
    let w_total: u128 = hist.iter().map(|&h| u128::from(h)).sum();
    let s_total: u128 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as u128 * u128::from(h))
        .sum();
    let mut w0: u128 = 0;
    let mut s0: u128 = 0;
    let mut best: Option<(u32, u128, u128)> = None; // (k, d^2, w0*w1)
    for (k, &count) in hist.iter().enumerate().take(hist.len() - 1) {
        w0 += u128::from(count);
        s0 += k as u128 * u128::from(count);
        if w0 == 0 {
            continue;
        }
        let w1 = w_total - w0;
        if w1 == 0 {
            break;
        }
        let d = (s0 * w_total) as i128 - (s_total * w0) as i128;
        let d2 = d.unsigned_abs().pow(2);
        let ww = w0 * w1;
        let better = match best {
            None => true,
            Some((_, best_d2, best_ww)) => d2 * best_ww > best_d2 * ww,
        };
        if better {
            best = Some((k as u32, d2, ww));
        }
    }
    best.expect("two occupied bins guarantee a valid split").0
}

/// Criterion 4: the scanning threshold selector agrees with an exhaustive
/// exact-arithmetic search (same argmax, smallest index on ties) on 1000
/// random 256-bin histograms plus hand-picked degenerate shapes.
#[test]
fn criterion_04_threshold_selector_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let mut cases: Vec<Vec<u64>> = Vec::new();
    // Dense histograms with moderate counts (bounded so the exact-arithmetic
    // oracle cannot overflow).
    for _ in 0..500 {
        cases.push((0..256).map(|_| rng.random_range(0..=255u64)).collect());
    }
    // Sparse histograms: a few occupied bins.
    for _ in 0..200 {
        let mut h = vec![0u64; 256];
        for _ in 0..rng.random_range(2..=25) {
            h[rng.random_range(0..256usize)] = rng.random_range(1..=255u64);
        }
        cases.push(h);
    }
    // Bimodal histograms: two occupied bands.
    for _ in 0..150 {
        let mut h = vec![0u64; 256];
        let a = rng.random_range(0..100usize);
        let b = rng.random_range(130..250usize);
        for i in 0..rng.random_range(1..=30usize) {
            h[(a + i).min(255)] = rng.random_range(1..=255u64);
            h[(b + i).min(255)] = rng.random_range(1..=255u64);
        }
        cases.push(h);
    }
    // Tie-prone histograms: tiny counts make equal variances common, which
    // exercises the smallest-index tie rule.
    for _ in 0..150 {
        cases.push((0..256).map(|_| rng.random_range(0..=3u64)).collect());
    }
    let random_cases = cases.len();
    // Degenerate shapes.
    cases.push(vec![0u64; 256]);
    let mut single = vec![0u64; 256];
    single[97] = 41;
    cases.push(single);
    let mut spikes = vec![0u64; 256];
    spikes[0] = 2;
    spikes[255] = 2;
    cases.push(spikes);
    cases.push(vec![7u64; 256]);

    let mut mismatches = Vec::new();
    for (i, h) in cases.iter().enumerate() {
        let got = otsu_code(h);
        let want = exhaustive_best_split(h);
        if got != want {
            mismatches.push(format!("case {i}: got {got}, oracle {want}"));
        }
    }
    verdict(
        4,
        mismatches.is_empty(),
        &format!(
            "{} mismatches across {} histograms ({random_cases} random + {} degenerate){}",
            mismatches.len(),
            cases.len(),
            cases.len() - random_cases,
            if mismatches.is_empty() {
                String::new()
            } else {
                format!(": {}", mismatches.join(", "))
            }
        ),
    );
}

/// Block-corner thresholds recomputed independently of the library: each
/// block tile is read with edge-clamped indexing (the padding rule) and given
/// to the same histogram selector.
fn corner_thresholds(frame: &ReferenceFrame, k1: usize, k2: usize, levels: u32) -> Vec<f64> {
    let v = frame.intensity();
    let (rows, cols) = v.dim();
    let mut out = Vec::new();
    for bi in 0..rows.div_ceil(k1) {
        for bj in 0..cols.div_ceil(k2) {
            let tile = Array2::from_shape_fn((k1, k2), |(i, j)| {
                v[[(bi * k1 + i).min(rows - 1), (bj * k2 + j).min(cols - 1)]]
            });
            out.push(otsu_threshold(
                &quantize_values(tile.view(), levels).unwrap(),
            ));
        }
    }
    out
}

/// Criterion 5: every local threshold that propagation produces stays inside
/// the [min, max] hull of that frame's block-corner thresholds (convexity of
/// the propagation weights), checked on 100 frames of varied shapes and
/// block sizes with 1e-12 slack.
#[test]
fn criterion_05_local_thresholds_stay_inside_the_corner_hull() {
    let combos: [(usize, usize, usize, usize, f64); 4] = [
        (64, 64, 16, 16, 1.5),
        (50, 70, 16, 12, 1.0),
        (33, 47, 8, 8, 0.0),
        (128, 128, 16, 16, 2.0),
    ];
    let mut checked = 0u32;
    let mut violations = 0u64;
    let mut worst: f64 = 0.0;
    for (seed, &(rows, cols, k1, k2, sigma)) in combos.iter().enumerate() {
        let params = SpeckleParams::new(rows, cols, sigma, 1.0, 100 + seed as u64).unwrap();
        let block = BlockSpec::new(k1, k2).unwrap();
        for idx in 0..25 {
            let frame = generate_frame(&params, idx).unwrap();
            let map = ppb_threshold_map(&frame, block, 256).unwrap();
            let corners = corner_thresholds(&frame, k1, k2, 256);
            let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for &t in map.local.iter() {
                let excess = (lo - t).max(t - hi);
                if excess > 1e-12 {
                    violations += 1;
                    worst = worst.max(excess);
                }
            }
            checked += 1;
        }
    }
    verdict(
        5,
        checked == 100 && violations == 0,
        &format!(
            "{violations} out-of-hull thresholds across {checked} frames (worst excess {worst:e})"
        ),
    );
}

/// Largest |a - b| over all pixels, relative to the largest |b|.
fn max_rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

/// Criterion 6: the streaming correlator matches a batch two-pass
/// computation within 1e-10 relative on a 1000-frame run; a constant bucket
/// sequence yields an image bounded by 1e-10 of the mean correlate
/// magnitude; shifting every bucket by a large constant moves the image by
/// less than 1e-9 relative; and sharding the stream into three accumulators
/// merged back together agrees within 1e-10 relative.
#[test]
fn criterion_06_streaming_correlator_correctness() {
    let params = SpeckleParams::new(32, 32, 1.0, 1.0, 606).unwrap();
    let object = make_double_slit(&DoubleSlitSpec {
        rows: 32,
        cols: 32,
        slit_width_px: 2,
        separation_px: 6,
        slit_height_px: 16,
        orientation: Orientation::Vertical,
    })
    .unwrap();
    let run = generate_run(&params, object, 1000).unwrap();
    let mut frames = Vec::with_capacity(1000);
    let mut buckets = Vec::with_capacity(1000);
    for pair in run.pairs().unwrap() {
        let (f, b) = pair.unwrap();
        frames.push(f.intensity().clone());
        buckets.push(b.value);
    }
    let count = frames.len() as f64;

    // Batch two-pass reference: center both factors, then average products.
    let bucket_mean = buckets.iter().sum::<f64>() / count;
    let mut frame_mean = Array2::<f64>::zeros((32, 32));
    for f in &frames {
        frame_mean += f;
    }
    frame_mean /= count;
    let mut batch = Array2::<f64>::zeros((32, 32));
    for (f, &b) in frames.iter().zip(&buckets) {
        batch += &((f - &frame_mean) * (b - bucket_mean));
    }
    batch /= count;

    let mut acc = Accumulator::new((32, 32));
    for (f, &b) in frames.iter().zip(&buckets) {
        acc.update(b, f).unwrap();
    }
    let streaming = acc.finalize().unwrap().image;
    let stream_err = max_rel_diff(&streaming, &batch);

    // Constant bucket: no fluctuation to correlate with.
    let mut acc = Accumulator::new((32, 32));
    let mut correlate_sum = 0.0;
    for f in &frames {
        acc.update(7.5, f).unwrap();
        correlate_sum += 7.5 * f.iter().sum::<f64>();
    }
    let flat = acc.finalize().unwrap().image;
    let flat_norm = flat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let correlate_mean = correlate_sum / (count * 32.0 * 32.0);
    let flat_ok = flat_norm <= 1e-10 * correlate_mean;

    // Bucket offset invariance: shift by 1000 bucket means.
    let offset = 1000.0 * bucket_mean;
    let mut acc = Accumulator::new((32, 32));
    for (f, &b) in frames.iter().zip(&buckets) {
        acc.update(b + offset, f).unwrap();
    }
    let shifted = acc.finalize().unwrap().image;
    let offset_err = max_rel_diff(&shifted, &batch);

    // Shard-and-merge: three unequal shards, merged pairwise.
    let mut parts = [
        Accumulator::new((32, 32)),
        Accumulator::new((32, 32)),
        Accumulator::new((32, 32)),
    ];
    for (i, (f, &b)) in frames.iter().zip(&buckets).enumerate() {
        let which = match i {
            0..=36 => 0,
            37..=499 => 1,
            _ => 2,
        };
        parts[which].update(b, f).unwrap();
    }
    let merged = parts[0]
        .merge(&parts[1])
        .unwrap()
        .merge(&parts[2])
        .unwrap()
        .finalize()
        .unwrap()
        .image;
    let merge_err = max_rel_diff(&merged, &streaming);

    let pass = stream_err <= 1e-10 && flat_ok && offset_err <= 1e-9 && merge_err <= 1e-10;
    verdict(
        6,
        pass,
        &format!(
            "stream-vs-batch {stream_err:.2e} (<=1e-10); constant-bucket sup {flat_norm:.2e} vs bound {:.2e}; offset drift {offset_err:.2e} (<=1e-9); merge drift {merge_err:.2e} (<=1e-10)",
            1e-10 * correlate_mean
        ),
    );
}

/// Criterion 7: the correlation score is 1 on identity, invariant under
/// positive-affine remapping to 1e-12, and reproduces the hand-computed
/// value -1/sqrt(5) for g=[1,2,3,4] vs o=[1,0,1,0].
#[test]
fn criterion_07_correlation_score_identities() {
    let card = ghostsim_core::objects::make_test_card(32, 32).unwrap();
    let o = card.transmission();
    let self_corr = corr(o.view(), o.view()).unwrap();

    let params = SpeckleParams::new(32, 32, 1.0, 1.0, 707).unwrap();
    let g = generate_frame(&params, 0).unwrap().intensity().clone();
    let base = corr(g.view(), o.view()).unwrap();
    let remapped = g.mapv(|v| 3.75 * v + 11.0);
    let affine = corr(remapped.view(), o.view()).unwrap();
    let affine_err = (affine - base).abs();

    let hand_g = array![[1.0, 2.0], [3.0, 4.0]];
    let hand_o = array![[1.0, 0.0], [1.0, 0.0]];
    let hand = corr(hand_g.view(), hand_o.view()).unwrap();
    let hand_expected = -1.0 / 5.0f64.sqrt();
    let hand_err = (hand - hand_expected).abs();

    let pass = (self_corr - 1.0).abs() <= 1e-12 && affine_err <= 1e-12 && hand_err <= 1e-12;
    verdict(
        7,
        pass,
        &format!(
            "corr(O,O)={self_corr}; affine drift {affine_err:.2e}; hand case {hand:.12} vs {hand_expected:.12} (err {hand_err:.2e})"
        ),
    );
}

/// Criterion 8: raising the harmonic factor from 0.15 to 0.40 should not
/// shrink the apparent grain of the binarized speckle (small grains are
/// suppressed as the map leans toward the global level), measured as the
/// autocorrelation width of the first frame per seed: width(0.15) <=
/// width(0.40) in a majority of 10 seeds.
#[test]
fn criterion_08_harmonic_factor_grain_effect() {
    let cfg = ExperimentConfig {
        seeds: (0..10).collect(),
        ..ExperimentConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let rows = speckle_stats(&cfg, dir.path()).unwrap();
    let width = |seed: u64, variant: &str| {
        rows.iter()
            .find(|r| r.seed == seed && r.variant == variant)
            .unwrap_or_else(|| panic!("missing {variant} for seed {seed}"))
            .grain_fwhm_px
    };
    let mut wins = 0u32;
    let mut sum_low = 0.0;
    let mut sum_high = 0.0;
    for seed in 0..10 {
        let low = width(seed, "point_by_point_a0.15");
        let high = width(seed, "point_by_point_a0.40");
        sum_low += low;
        sum_high += high;
        wins += u32::from(low <= high);
    }
    verdict(
        8,
        wins >= 6,
        &format!(
            "width(alpha=0.15) <= width(alpha=0.40) in {wins}/10 seeds (need 6); seed-mean widths {:.4} vs {:.4}",
            sum_low / 10.0,
            sum_high / 10.0
        ),
    );
}

/// Criterion 9: two comparison runs with the same configuration produce
/// byte-identical output files (CSV, images, and stored stacks).
#[test]
fn criterion_09_comparison_output_is_byte_deterministic() {
    let cfg = ExperimentConfig {
        rows: 64,
        cols: 64,
        count: 300,
        seeds: vec![0, 1],
        emit_stack: true,
        object: ObjectSpec::DoubleSlit {
            slit_width_px: 4,
            separation_px: 12,
            slit_height_px: None,
        },
        ..ExperimentConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_compare(&cfg, a.path()).unwrap();
    run_compare(&cfg, b.path()).unwrap();

    let names = |p: &std::path::Path| {
        let mut v: Vec<String> = std::fs::read_dir(p)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    let (na, nb) = (names(a.path()), names(b.path()));
    let mut identical = na == nb;
    let mut diffs = Vec::new();
    if identical {
        for name in &na {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            if x != y {
                identical = false;
                diffs.push(name.clone());
            }
        }
    } else {
        diffs.push(format!("file sets differ: {na:?} vs {nb:?}"));
    }
    verdict(
        9,
        identical,
        &format!(
            "{} files compared{}",
            na.len(),
            if diffs.is_empty() {
                ", all byte-identical".to_string()
            } else {
                format!(", differing: {diffs:?}")
            }
        ),
    );
}

/// Criterion 10: the stack format round-trips bit-identically (file bytes
/// are a fixpoint of read-then-write, stored buckets are exact, stored
/// frames are exactly the 32-bit values that were written), and the
/// single-frame 2x2 file is exactly 42 bytes.
#[test]
fn criterion_10_stack_file_round_trip_and_size() {
    let dir = tempfile::tempdir().unwrap();

    let tiny_params = SpeckleParams::new(2, 2, 0.5, 1.0, 10).unwrap();
    let tiny_mask = ghostsim_core::objects::ObjectMask::new(Array2::ones((2, 2)), "open").unwrap();
    let tiny = generate_run(&tiny_params, tiny_mask, 1).unwrap();
    let tiny_path = dir.path().join("tiny.gifs");
    write_stack(&tiny, &tiny_path).unwrap();
    let tiny_len = std::fs::metadata(&tiny_path).unwrap().len();

    let params = SpeckleParams::new(4, 5, 0.8, 1.0, 11).unwrap();
    let mask = ghostsim_core::objects::ObjectMask::new(Array2::ones((4, 5)), "open").unwrap();
    let run = generate_run(&params, mask, 3).unwrap();
    let first = dir.path().join("first.gifs");
    write_stack(&run, &first).unwrap();
    let reread = read_stack(&first).unwrap();
    let second = dir.path().join("second.gifs");
    write_stack(&reread, &second).unwrap();
    let bytes_match = std::fs::read(&first).unwrap() == std::fs::read(&second).unwrap();

    // Stored values: buckets exact, frames exactly the stored 32-bit values.
    let mut values_match = true;
    for (orig, stored) in run
        .pairs()
        .unwrap()
        .zip(read_stack(&first).unwrap().pairs().unwrap())
    {
        let (of, ob) = orig.unwrap();
        let (sf, sb) = stored.unwrap();
        values_match &= ob.value == sb.value;
        values_match &= of
            .intensity()
            .iter()
            .zip(sf.intensity())
            .all(|(&o, &s)| f64::from(o as f32) == s);
    }

    verdict(
        10,
        tiny_len == 42 && bytes_match && values_match,
        &format!(
            "2x2x1 file is {tiny_len} bytes (want 42); rewrite byte-identical: {bytes_match}; stored values exact: {values_match}"
        ),
    );
}
