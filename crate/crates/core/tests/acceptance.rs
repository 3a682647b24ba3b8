//! Acceptance criteria. Each test prints one `ACCEPTANCE <id> PASS|FAIL` line
//! with the measured quantities, then asserts. Tolerances and settings are
//! fixed here; run with `--nocapture` to see the lines.

use std::time::Instant;

use padlab::export::{estimate_table_csv, feature_map_csv, sha256_hex};
use padlab::mspie::{adaptive_avg_pool_2x2, prepare_scale_input, sample_scale, ScaleSchedule};
use padlab::posenc::{
    csg_at, csg_translate, resize_encoding, spe, spe_frequencies, spe_rotate, CsgConvention,
    EncodingKind, ResizeMode,
};
use padlab::presets::preset;
use padlab::probe::{fit_probe, location_statistics, positional_info_score, LocationSplit};
use padlab::statlab::{
    analytic_moments, bias_shift_check, compare_with_analytic, estimate_moments,
    stationarity_verdict, two_layer_expectation, Agreement, OffsetSet, SamplingPlan, StatReport,
};
use padlab::{
    Activation, ConvLayer, FeatureMap, GridSize, NetworkSpec, PaddingMode, RngSpec, Stage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const Z: f64 = 5.0;
const SEED: u64 = 0;
const M: usize = 100_000;
const M_LARGE: usize = 1_000_000;

fn verdict_line(id: &str, pass: bool, detail: &str) {
    println!("ACCEPTANCE {id} {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn sq(n: usize) -> GridSize {
    GridSize::square(n).unwrap()
}

fn plan(samples: usize) -> SamplingPlan {
    SamplingPlan::new(samples, SEED).with_workers(1)
}

fn inv_sqrt_2pi() -> f64 {
    1.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// Largest |estimate - truth| / SE over a map.
fn max_z_against(est: &FeatureMap, se: &FeatureMap, truth: impl Fn(usize, usize, usize) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 0..est.channels() {
        for i in 0..est.height() {
            for j in 0..est.width() {
                worst = worst.max((est.get(c, i, j) - truth(c, i, j)).abs() / se.get(c, i, j));
            }
        }
    }
    worst
}

#[test]
fn c1_weak_stationarity_padding_free_linear() {
    let net = preset("nopad-linear").unwrap();
    let offsets = OffsetSet::standard();
    let t = Instant::now();
    let report = estimate_moments(&net, sq(16), &offsets, &plan(M)).unwrap();
    let single = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let report8 = estimate_moments(&net, sq(16), &offsets, &plan(M).with_workers(8)).unwrap();
    let eight = t.elapsed().as_secs_f64();

    let mean_z = max_z_against(&report.expectation, &report.expectation_se, |_, _, _| 0.5);
    let verdict = stationarity_verdict(&report, Z).unwrap();
    let offsets_ok = verdict.offsets_consistent();
    let pass = mean_z <= Z && offsets_ok && single < 60.0 && eight < 10.0 && report == report8;
    verdict_line(
        "C1",
        pass,
        &format!(
            "max|E-0.5|/SE={mean_z:.3} offsets_consistent={offsets_ok} (max z {:.3}) t1={single:.2}s t8={eight:.2}s identical={}",
            verdict.offsets.iter().map(|o| o.max_z).fold(0.0, f64::max),
            report == report8
        ),
    );
    assert!(pass);
}

/// Random conv-only network with the first layer's padding mode forced.
fn random_linear_net(rng: &mut ChaCha8Rng, first_mode: usize) -> (NetworkSpec, GridSize) {
    loop {
        let size = GridSize::new(rng.gen_range(4..=16), rng.gen_range(4..=16)).unwrap();
        let layers = rng.gen_range(1..=3);
        let mut channels = rng.gen_range(1..=2);
        let input_channels = channels;
        let mut stages = Vec::new();
        for l in 0..layers {
            let out = rng.gen_range(1..=2);
            let (kh, kw) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
            let pad = rng.gen_range(1..=2);
            let mode = if l == 0 { first_mode } else { rng.gen_range(0..4) };
            let padding = match mode {
                0 => PaddingMode::None,
                1 => PaddingMode::Zero(pad),
                2 => PaddingMode::Reflect(pad),
                _ => PaddingMode::Circular(pad),
            };
            let weights = (0..out * channels * kh * kw).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bias = (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect();
            stages.push(Stage::Conv(ConvLayer::new(out, channels, (kh, kw), weights, bias, padding).unwrap()));
            if rng.gen_bool(0.2) {
                stages.push(Stage::Act(Activation::Identity));
            }
            channels = out;
        }
        let Ok(net) = NetworkSpec::new(input_channels, stages) else { continue };
        match net.output_size(size) {
            Ok(o) if o.height() >= 2 && o.width() >= 2 => return (net, size),
            _ => continue,
        }
    }
}

fn offsets_within(size: GridSize) -> OffsetSet {
    let pairs: Vec<(i64, i64)> = [(0i64, 0i64), (0, 1), (1, 1), (2, 2), (3, 0), (-1, 2)]
        .into_iter()
        .filter(|&(di, dj)| (di.unsigned_abs() as usize) < size.height() && (dj.unsigned_abs() as usize) < size.width())
        .collect();
    OffsetSet::from_pairs(&pairs).unwrap()
}

#[test]
fn c2_analytic_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let nets = 24;
    let mut total = Agreement { entries: 0, within: 0, max_z: 0.0 };
    let mut modes_seen = [false; 4];
    for k in 0..nets {
        let (net, size) = random_linear_net(&mut rng, k % 4);
        for s in net.stages() {
            if let Stage::Conv(l) = s {
                let idx = match l.padding() {
                    PaddingMode::None => 0,
                    PaddingMode::Zero(_) => 1,
                    PaddingMode::Reflect(_) => 2,
                    PaddingMode::Circular(_) => 3,
                };
                modes_seen[idx] = true;
            }
        }
        let offsets = offsets_within(net.output_size(size).unwrap());
        let mc = estimate_moments(&net, size, &offsets, &SamplingPlan::new(M, SEED + k as u64)).unwrap();
        let exact = analytic_moments(&net, size, &offsets).unwrap();
        total = total.combine(compare_with_analytic(&mc, &exact, Z));
    }

    let ones = NetworkSpec::new(1, vec![Stage::Conv(ConvLayer::ones(3, 3, 0.0, PaddingMode::None).unwrap())]).unwrap();
    let exact = analytic_moments(&ones, sq(8), &OffsetSet::from_pairs(&[(0, 0), (0, 1), (3, 0)]).unwrap()).unwrap();
    let spot = |k: usize, v: f64| exact.autocorr[k].values.values().iter().all(|&x| (x - v).abs() <= 1e-12);
    let spots = spot(0, 9.0) && spot(1, 6.0) && spot(2, 0.0);

    let pass = total.fraction() >= 0.999 && modes_seen.iter().all(|&m| m) && spots && nets >= 20;
    verdict_line(
        "C2",
        pass,
        &format!(
            "nets={nets} entries={} within_5SE={} fraction={:.6} max_z={:.3} modes={modes_seen:?} spots(9,6,0)={spots}",
            total.entries,
            total.within,
            total.fraction(),
            total.max_z
        ),
    );
    assert!(pass);
}

#[test]
fn c3_zero_padding_bias_two_layer() {
    let net = preset("zeropad-2layer").unwrap();
    let report = estimate_moments(&net, sq(16), &OffsetSet::standard(), &plan(M_LARGE)).unwrap();
    let interior = 0.8 * 27.0 * inv_sqrt_2pi();
    let corner = 0.8 * (5.0 + 2.0 * 6f64.sqrt()) * inv_sqrt_2pi();
    let (e, se) = (&report.expectation, &report.expectation_se);
    let mut interior_z: f64 = 0.0;
    for i in 2..14 {
        for j in 2..14 {
            interior_z = interior_z.max((e.get(0, i, j) - interior).abs() / se.get(0, i, j));
        }
    }
    let corner_z = [(0, 0), (0, 15), (15, 0), (15, 15)]
        .iter()
        .map(|&(i, j)| (e.get(0, i, j) - corner).abs() / se.get(0, i, j))
        .fold(0.0, f64::max);

    let l = ConvLayer::ones(3, 3, 0.0, PaddingMode::Zero(1)).unwrap();
    let closed = two_layer_expectation(&l, 0.2, &l, sq(16)).unwrap();
    let closed_ok = (closed.get(0, 8, 8) - interior).abs() <= 1e-12 && (closed.get(0, 0, 0) - corner).abs() <= 1e-12;

    let pass = interior_z <= Z && corner_z <= Z && closed_ok;
    verdict_line(
        "C3",
        pass,
        &format!(
            "interior={interior:.6} max_z={interior_z:.3} corner={corner:.6} max_z={corner_z:.3} E(8,8)={:.5} E(0,0)={:.5} closed_form_ok={closed_ok}",
            e.get(0, 8, 8),
            e.get(0, 0, 0)
        ),
    );
    assert!(pass);
}

fn autocorr_spread(maps: &[padlab::statlab::AutocorrMap]) -> f64 {
    maps.iter()
        .map(|m| {
            let v = m.values.values();
            let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

#[test]
fn c4_padding_mode_taxonomy() {
    let offsets = OffsetSet::standard();
    let reflect = preset("reflect-linear").unwrap();
    let r = estimate_moments(&reflect, sq(16), &offsets, &plan(M)).unwrap();
    let rv = stationarity_verdict(&r, Z).unwrap();
    let r_exact = analytic_moments(&reflect, sq(16), &offsets).unwrap();
    let r_spread = autocorr_spread(&r_exact.autocorr);

    let circular = preset("circular-linear").unwrap();
    let c = estimate_moments(&circular, sq(16), &offsets, &plan(M)).unwrap();
    let cv = stationarity_verdict(&c, Z).unwrap();
    let c_exact = analytic_moments(&circular, sq(16), &offsets).unwrap();
    let c_spread = autocorr_spread(&c_exact.autocorr);

    let reflect_ok = rv.expectation_uniform && !rv.offsets_consistent() && r_spread > 1.0;
    let circular_ok = cv.stationary() && c_spread == 0.0;
    let pass = reflect_ok && circular_ok;
    verdict_line(
        "C4",
        pass,
        &format!(
            "reflect: E_uniform={} (z {:.3}) R_consistent={} (max z {:.1}) analytic_spread={r_spread}; circular: stationary={} analytic_spread={c_spread}",
            rv.expectation_uniform,
            rv.expectation_max_z,
            rv.offsets_consistent(),
            rv.offsets.iter().map(|o| o.max_z).fold(0.0, f64::max),
            cv.stationary()
        ),
    );
    assert!(pass);
}

#[test]
fn c5_nonlinearity_and_bias_invariance() {
    let offsets = OffsetSet::standard();
    let two = preset("nopad-2layer").unwrap();
    let v2 = stationarity_verdict(&estimate_moments(&two, sq(16), &offsets, &plan(M)).unwrap(), Z).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut conv = |cin: usize, cout: usize| {
        let w = (0..cout * cin * 9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = (0..cout).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Stage::Conv(ConvLayer::new(cout, cin, (3, 3), w, b, PaddingMode::None).unwrap())
    };
    let leaky = || Stage::Act(Activation::leaky_relu(0.2).unwrap());
    let three = NetworkSpec::new(1, vec![conv(1, 2), leaky(), conv(2, 2), leaky(), conv(2, 1)]).unwrap();
    let v3 = stationarity_verdict(&estimate_moments(&three, sq(16), &offsets, &plan(M)).unwrap(), Z).unwrap();

    let linear_nets = [
        preset("nopad-linear").unwrap(),
        preset("reflect-linear").unwrap(),
        NetworkSpec::new(1, vec![Stage::Conv(ConvLayer::ones(3, 3, 0.0, PaddingMode::Zero(1)).unwrap())]).unwrap(),
    ];
    let mut worst_shift: f64 = 0.0;
    for net in &linear_nets {
        for b in [-1.0, 0.0, 2.0] {
            worst_shift = worst_shift.max(bias_shift_check(net, sq(16), &offsets, b).unwrap());
        }
    }
    let pass = v2.stationary() && v3.stationary() && worst_shift <= 1e-12;
    verdict_line(
        "C5",
        pass,
        &format!(
            "nopad-2layer stationary={} (E z {:.3}); 3-layer leaky stationary={} (E z {:.3}); max bias-shift discrepancy={worst_shift:e}",
            v2.stationary(),
            v2.expectation_max_z,
            v3.stationary(),
            v3.expectation_max_z
        ),
    );
    assert!(pass);
}

#[test]
fn c6_probe_separation() {
    let lambda = 1e-3;
    let split = LocationSplit::Checkerboard;
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["nopad-linear", "nopad-2layer"] {
        let stats = location_statistics(&preset(name).unwrap(), sq(16), &plan(M)).unwrap();
        let score = positional_info_score(&fit_probe(&stats, lambda, &split).unwrap());
        pass &= score < 0.1;
        lines.push(format!("{name} score={score:.4} (<0.1)"));
    }
    let stats = location_statistics(&preset("zeropad-2layer").unwrap(), sq(16), &plan(M)).unwrap();
    let r = fit_probe(&stats, lambda, &split).unwrap();
    let score = positional_info_score(&r);
    let corners = r.corners_minimal();
    pass &= score > 0.5 && corners;
    let e = &r.error_map;
    let (min_err, max_err) = e.channel_range(0);
    lines.push(format!(
        "zeropad-2layer score={score:.4} (>0.5) R2={:?} corners_minimal={corners} corner_err={:.4} centre_err={:.4} err_range=[{min_err:.4},{max_err:.4}]",
        r.r_squared,
        e.get(0, 0, 0),
        e.get(0, 8, 8)
    ));
    let band = r.r_squared_where(|i, j| i < 2 || j < 2 || i >= 14 || j >= 14).unwrap();
    let inner = r.r_squared_where(|i, j| (2..14).contains(&i) && (2..14).contains(&j)).unwrap();
    lines.push(format!("zeropad-2layer border-band R2={band:?} interior R2={inner:?}"));
    verdict_line("C6", pass, &lines.join("; "));
    assert!(pass);
}

#[test]
fn c7_encoding_identities() {
    let mut anchor_ok = true;
    let mut translate_ok = true;
    for h in 1..=64 {
        for w in [1, 7, 16, 64] {
            let size = GridSize::new(h, w).unwrap();
            anchor_ok &= csg_at(size, (0, 0)).unwrap() == [-1.0, -1.0];
            for i in 0..h {
                for di in -(i as i64)..(h - i) as i64 {
                    let moved = csg_translate(size, (i, 0), (di, 0)).unwrap();
                    let direct = csg_at(size, ((i as i64 + di) as usize, 0)).unwrap();
                    let exact = h.is_power_of_two();
                    translate_ok &= if exact { moved == direct } else { (moved[0] - direct[0]).abs() <= 1e-15 };
                }
            }
        }
    }

    let channels = 8;
    let maps: Vec<FeatureMap> = (1..=64).map(|n| spe(sq(n), channels).unwrap()).collect();
    let mut prefix_ok = true;
    for (a, small) in maps.iter().enumerate() {
        for big in &maps[a..] {
            for c in 0..channels {
                for i in 0..small.height() {
                    let row = &small.channel(c)[i * small.width()..(i + 1) * small.width()];
                    let big_row = &big.channel(c)[i * big.width()..i * big.width() + small.width()];
                    prefix_ok &= row == big_row;
                }
            }
        }
    }

    let freqs = spe_frequencies(132).unwrap();
    let mut rot_err: f64 = 0.0;
    for &omega in freqs.iter().take(33) {
        for t in 0..=32i64 {
            let x = omega * t as f64;
            for phi in -32..=32i64 {
                let (s, c) = spe_rotate((x.sin(), x.cos()), phi, omega);
                let y = omega * (t + phi) as f64;
                rot_err = rot_err.max((s - y.sin()).abs()).max((c - y.cos()).abs());
            }
        }
    }

    let base = FeatureMap::filled(2, sq(4), 0.0).unwrap();
    let expand_rejected = [
        EncodingKind::Csg { convention: CsgConvention::Literal },
        EncodingKind::Csg { convention: CsgConvention::AlignCorners },
        EncodingKind::FixedConstant { channels: 2, rng: RngSpec::new(1, 0) },
    ]
    .iter()
    .all(|k| matches!(resize_encoding(k, &base, sq(8), ResizeMode::Expand), Err(padlab::Error::Unsupported(_))));

    let pass = anchor_ok && translate_ok && prefix_ok && rot_err <= 1e-9 && expand_rejected;
    verdict_line(
        "C7",
        pass,
        &format!(
            "anchor={anchor_ok} translation={translate_ok} spe_prefix(H,H'<=64)={prefix_ok} rotation_max_err={rot_err:e} (<=1e-9) expand_rejected={expand_rejected}"
        ),
    );
    assert!(pass);
}

/// Brute-force pool: visit every input location and test bin membership
/// `floor(r*n/2) <= i < floor((r+1)*n/2)` in integer arithmetic.
fn pool_oracle(x: &FeatureMap) -> Vec<f64> {
    let in_bin = |r: usize, i: usize, n: usize| r * n / 2 <= i && i < (r + 1) * n / 2;
    let mut out = Vec::new();
    for c in 0..x.channels() {
        for r in 0..2 {
            for s in 0..2 {
                let (mut sum, mut count) = (0.0, 0usize);
                for i in 0..x.height() {
                    for j in 0..x.width() {
                        if in_bin(r, i, x.height()) && in_bin(s, j, x.width()) {
                            sum += x.get(c, i, j);
                            count += 1;
                        }
                    }
                }
                out.push(sum / count as f64);
            }
        }
    }
    out
}

#[test]
fn c8_multiscale_mechanics() {
    let schedule = ScaleSchedule::default();
    let steps = 100_000u64;
    let mut counts = [0usize; 3];
    for step in 0..steps {
        counts[sample_scale(&schedule, SEED, step).scale_index] += 1;
    }
    let freqs: Vec<f64> = counts.iter().map(|&n| n as f64 / steps as f64).collect();
    let draw_dev = freqs.iter().zip([0.5, 0.25, 0.25]).map(|(f, p)| (f - p).abs()).fold(0.0, f64::max);

    let mut pool_err: f64 = 0.0;
    for h in 2..=9 {
        for w in 2..=9 {
            let x = padlab::sample_gaussian(2, GridSize::new(h, w).unwrap(), RngSpec::new(h as u64, w as u64)).unwrap();
            let got = adaptive_avg_pool_2x2(&x).unwrap();
            for (a, b) in got.values().iter().zip(pool_oracle(&x)) {
                pool_err = pool_err.max((a - b).abs());
            }
        }
    }

    let kind = EncodingKind::Spe { channels: 8 };
    let mut prefix_ok = true;
    for base_n in [4, 8, 12] {
        let base = spe(sq(base_n), 8).unwrap();
        for scale in [sq(base_n), sq(16), GridSize::new(20, 24).unwrap()] {
            let big = prepare_scale_input(&kind, &base, scale, ResizeMode::Expand).unwrap();
            prefix_ok &= big.size() == scale;
            for c in 0..8 {
                for i in 0..base_n {
                    for j in 0..base_n {
                        prefix_ok &= big.get(c, i, j) == base.get(c, i, j);
                    }
                }
            }
        }
    }

    let pass = draw_dev <= 0.01 && pool_err <= 1e-12 && prefix_ok;
    verdict_line(
        "C8",
        pass,
        &format!("draw freqs={freqs:?} max_dev={draw_dev:.5} (<=0.01) pool_max_err={pool_err:e} spe_prefix={prefix_ok}"),
    );
    assert!(pass);
}

fn report_digest(r: &StatReport) -> String {
    let mut text = estimate_table_csv(&r.expectation, &r.expectation_se).unwrap();
    text.push_str(&feature_map_csv(&r.variance).unwrap());
    for (k, ac) in r.autocorr.iter().enumerate() {
        text.push_str(&estimate_table_csv(&ac.values, &r.autocorr_se[k]).unwrap());
    }
    sha256_hex(text.as_bytes())
}

#[test]
fn c9_reproducibility_across_workers() {
    let offsets = OffsetSet::standard();
    let mut digests: Vec<(String, Vec<String>)> = Vec::new();
    for name in ["nopad-linear", "zeropad-2layer", "reflect-linear"] {
        let net = preset(name).unwrap();
        let runs: Vec<String> = [1, 1, 4, 8]
            .iter()
            .map(|&w| report_digest(&estimate_moments(&net, sq(16), &offsets, &plan(M).with_workers(w)).unwrap()))
            .collect();
        digests.push((format!("moments:{name}"), runs));
    }
    let net = preset("zeropad-2layer").unwrap();
    let runs: Vec<String> = [1, 1, 4, 8]
        .iter()
        .map(|&w| {
            let stats = location_statistics(&net, sq(16), &plan(M).with_workers(w)).unwrap();
            let r = fit_probe(&stats, 1e-3, &LocationSplit::Checkerboard).unwrap();
            let mut text = feature_map_csv(&stats.features).unwrap();
            text.push_str(&feature_map_csv(&r.error_map).unwrap());
            text.push_str(&format!("{:?}{:?}{:?}", r.coefficients, r.intercept, r.r_squared));
            sha256_hex(text.as_bytes())
        })
        .collect();
    digests.push(("probe:zeropad-2layer".into(), runs));

    let pass = digests.iter().all(|(_, d)| d.iter().all(|x| *x == d[0]));
    let detail: Vec<String> = digests
        .iter()
        .map(|(n, d)| format!("{n}={} ({})", &d[0][..12], if d.iter().all(|x| *x == d[0]) { "same" } else { "DIFFERS" }))
        .collect();
    verdict_line("C9", pass, &format!("workers 1,1,4,8: {}", detail.join(" ")));
    assert!(pass);
}
