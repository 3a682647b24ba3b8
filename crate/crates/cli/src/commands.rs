//! One function per subcommand. Each returns the manifest path.

use std::fs;
use std::path::Path;
use std::time::Instant;

use padlab::export::{estimate_table_csv, location_table_csv, sha256_hex};
use padlab::mspie::{sample_scale, ScaleSchedule};
use padlab::posenc::{resize_encoding, spe_frequencies, CsgConvention, EncodingKind, ResizeMode};
use padlab::presets::{default_input, preset, PRESET_NAMES};
use padlab::probe::{fit_probe, location_statistics, positional_info_score, LocationSplit};
use padlab::statlab::{
    analytic_moments, compare_with_analytic, estimate_moments, stationarity_verdict, Offset,
    SamplingPlan,
};
use padlab::{GridSize, NetworkSpec, RngSpec};
use serde_json::{json, Value};

use crate::config::{
    offsets_as_pairs, RunConfig, DEFAULT_ENCODE_CHANNELS, DEFAULT_ENCODE_SIZE, DEFAULT_LAMBDA,
    DEFAULT_SAMPLES, DEFAULT_STEPS, DEFAULT_Z,
};
use crate::output::OutputDir;
use crate::CliError;

/// A network plus where it came from.
struct LoadedNet {
    net: NetworkSpec,
    inputs: Value,
}

fn load_net(cfg: &RunConfig) -> Result<LoadedNet, CliError> {
    let name = cfg.net.as_deref().ok_or_else(|| {
        CliError::Config(format!(
            "no network: pass --net with a preset ({}) or a JSON file",
            PRESET_NAMES.join(", ")
        ))
    })?;
    let (net, source, file_sha) = if PRESET_NAMES.contains(&name) {
        (preset(name)?, json!({ "preset": name }), None)
    } else {
        let path = Path::new(name);
        let bytes = fs::read(path).map_err(|e| {
            CliError::Config(format!("cannot read network file {}: {e}", path.display()))
        })?;
        let net: NetworkSpec = serde_json::from_slice(&bytes).map_err(|e| {
            CliError::Config(format!("invalid network file {}: {e}", path.display()))
        })?;
        (net, json!({ "file": name }), Some(sha256_hex(&bytes)))
    };
    let canonical = serde_json::to_string(&net).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(LoadedNet {
        inputs: json!({
            "net": {
                "source": source,
                "file_sha256": file_sha,
                "spec_sha256": sha256_hex(canonical.as_bytes()),
            }
        }),
        net,
    })
}

fn plan(cfg: &RunConfig) -> SamplingPlan {
    SamplingPlan::new(cfg.samples.unwrap_or(DEFAULT_SAMPLES), cfg.seed.unwrap_or(0))
        .with_workers(cfg.threads.unwrap_or(0))
}

fn offset_stem(o: &Offset) -> String {
    let part = |v: i64| if v < 0 { format!("m{}", -v) } else { v.to_string() };
    format!("autocorr_{}_{}", part(o.di), part(o.dj))
}

fn encoding_kind(cfg: &RunConfig) -> Result<EncodingKind, CliError> {
    let kind = cfg.kind.as_deref().unwrap_or("csg");
    let channels = cfg.channels;
    let csg = |convention| match channels {
        None | Some(2) => Ok(EncodingKind::Csg { convention }),
        Some(c) => Err(CliError::Config(format!("csg encodings have 2 channels, got --channels {c}"))),
    };
    match kind {
        "csg" => csg(CsgConvention::Literal),
        "csg-aligned" => csg(CsgConvention::AlignCorners),
        "spe" => {
            let channels = channels.unwrap_or(DEFAULT_ENCODE_CHANNELS);
            spe_frequencies(channels)?;
            Ok(EncodingKind::Spe { channels })
        }
        "constant" => Ok(EncodingKind::FixedConstant {
            channels: channels.unwrap_or(DEFAULT_ENCODE_CHANNELS),
            rng: RngSpec::new(cfg.seed.unwrap_or(0), 0),
        }),
        other => Err(CliError::Config(format!(
            "unknown encoding kind '{other}' (known: csg, csg-aligned, spe, constant)"
        ))),
    }
}

pub fn cmd_encode(cfg: &RunConfig) -> Result<std::path::PathBuf, CliError> {
    let start = Instant::now();
    let kind = encoding_kind(cfg)?;
    let size = match cfg.size {
        Some(s) => s,
        None => GridSize::new(DEFAULT_ENCODE_SIZE.0, DEFAULT_ENCODE_SIZE.1)?,
    };
    let base = kind.generate(size)?;
    let (map, mode) = match cfg.resize_to {
        Some(target) => {
            let mode = cfg.mode.unwrap_or(ResizeMode::Interp);
            (resize_encoding(&kind, &base, target, mode)?, Some(mode))
        }
        None => (base, None),
    };
    let frequencies = match kind {
        EncodingKind::Spe { channels } => Some(spe_frequencies(channels)?),
        _ => None,
    };
    let descriptor = json!({
        "encoding": kind,
        "channels": kind.channels(),
        "base_size": size,
        "size": map.size(),
        "resize_mode": mode,
        "frequencies": frequencies,
    });

    let mut out = OutputDir::create(cfg.out_dir()?)?;
    out.write_map("encoding", &map)?;
    out.write("locations.csv", &location_table_csv(&map)?)?;
    out.write_json("encoding.json", &descriptor)?;
    out.finish("encode", cfg, json!({}), descriptor, start.elapsed())
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<std::path::PathBuf, CliError> {
    let start = Instant::now();
    let loaded = load_net(cfg)?;
    let size = cfg.size.unwrap_or_else(default_input);
    let offsets = cfg.offset_set()?;
    let z = cfg.z.unwrap_or(DEFAULT_Z);
    if !(z.is_finite() && z > 0.0) {
        return Err(CliError::Config(format!("z threshold must be positive, got {z}")));
    }
    let report = estimate_moments(&loaded.net, size, &offsets, &plan(cfg))?;
    let verdict = stationarity_verdict(&report, z)?;
    let exact = if loaded.net.is_linear() {
        Some(analytic_moments(&loaded.net, size, &offsets)?)
    } else {
        None
    };

    let mut out = OutputDir::create(cfg.out_dir()?)?;
    out.write("expectation.csv", &estimate_table_csv(&report.expectation, &report.expectation_se)?)?;
    out.write_heatmaps("expectation", &report.expectation)?;
    out.write("variance.csv", &padlab::export::feature_map_csv(&report.variance)?)?;
    out.write_map("anchor", &verdict.anchor_map)?;
    for (k, ac) in report.autocorr.iter().enumerate() {
        let stem = offset_stem(&ac.offset);
        out.write(&format!("{stem}.csv"), &estimate_table_csv(&ac.values, &report.autocorr_se[k])?)?;
        out.write_heatmaps(&stem, &ac.values)?;
    }

    let anchors: Vec<[usize; 3]> = (0..verdict.anchor_map.channels())
        .flat_map(|c| {
            let m = &verdict.anchor_map;
            (0..m.height()).flat_map(move |i| (0..m.width()).map(move |j| [c, i, j]))
        })
        .filter(|&[c, i, j]| verdict.anchor_map.get(c, i, j) > z)
        .collect();
    let (h, w) = (report.expectation.height(), report.expectation.width());
    let corners_flagged = [(0, 0), (0, w - 1), (h - 1, 0), (h - 1, w - 1)]
        .iter()
        .all(|&(i, j)| anchors.iter().any(|a| a[1] == i && a[2] == j));
    let agreement = exact.as_ref().map(|exact| {
        let a = compare_with_analytic(&report, exact, z);
        json!({ "entries": a.entries, "within": a.within, "fraction": a.fraction(), "max_z": a.max_z })
    });
    if let Some(exact) = &exact {
        out.write_map("analytic_expectation", &exact.expectation)?;
        for ac in &exact.autocorr {
            out.write_map(&format!("analytic_{}", offset_stem(&ac.offset)), &ac.values)?;
        }
    }
    let summary = json!({
        "stationary": verdict.stationary(),
        "expectation_uniform": verdict.expectation_uniform,
        "expectation_max_z": verdict.expectation_max_z,
        "expectation_worst": verdict.expectation_worst,
        "offsets_consistent": verdict.offsets_consistent(),
        "offsets": verdict.offsets.iter().map(|o| json!({
            "offset": [o.offset.di, o.offset.dj],
            "consistent": o.consistent,
            "max_z": o.max_z,
            "worst": o.worst,
        })).collect::<Vec<_>>(),
        "anchors_flagged": anchors,
        "corner_anchors_flagged": corners_flagged,
        "analytic_agreement": agreement,
        "samples": report.samples,
        "seed": report.rng.seed,
        "z": z,
        "output_size": report.expectation.size(),
    });
    out.write_json("verdict.json", &summary)?;
    let cfg = RunConfig { offsets: Some(offsets_as_pairs(&offsets)), ..cfg.clone() };
    out.finish("analyze", &cfg, loaded.inputs, summary, start.elapsed())
}

pub fn cmd_probe(cfg: &RunConfig) -> Result<std::path::PathBuf, CliError> {
    let start = Instant::now();
    let loaded = load_net(cfg)?;
    let size = cfg.size.unwrap_or_else(default_input);
    let lambda = cfg.lambda.unwrap_or(DEFAULT_LAMBDA);
    let stats = location_statistics(&loaded.net, size, &plan(cfg))?;
    let split = LocationSplit::Checkerboard;
    let result = fit_probe(&stats, lambda, &split)?;
    let score = positional_info_score(&result);

    let mut out = OutputDir::create(cfg.out_dir()?)?;
    let summary = json!({
        "lambda": lambda,
        "split": split,
        "r_squared": result.r_squared,
        "score": score,
        "train_mse": result.train_mse,
        "corner_errors_minimal": result.corners_minimal(),
        "samples": stats.samples,
        "seed": cfg.seed.unwrap_or(0),
    });
    let features = stats.dim() / 2;
    let probe = json!({
        "summary": summary,
        "feature_layout": format!("{features} channel means followed by {features} channel standard deviations"),
        "coefficients": result.coefficients,
        "intercept": result.intercept,
    });
    out.write_json("probe.json", &probe)?;
    out.write_map("error_map", &result.error_map)?;
    out.write("predictions.csv", &location_table_csv(&result.predictions)?)?;
    out.write("statistics.csv", &location_table_csv(&stats.features)?)?;
    let cfg = RunConfig { lambda: Some(lambda), ..cfg.clone() };
    out.finish("probe", &cfg, loaded.inputs, summary, start.elapsed())
}

pub fn cmd_schedule(cfg: &RunConfig) -> Result<std::path::PathBuf, CliError> {
    let start = Instant::now();
    let (schedule, inputs) = match &cfg.schedule {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| {
                CliError::Config(format!("cannot read schedule file {}: {e}", path.display()))
            })?;
            let schedule: ScaleSchedule = serde_json::from_slice(&bytes).map_err(|e| {
                CliError::Config(format!("invalid schedule file {}: {e}", path.display()))
            })?;
            (schedule, json!({ "schedule_sha256": sha256_hex(&bytes) }))
        }
        None => (ScaleSchedule::default(), json!({})),
    };
    let steps = cfg.steps.unwrap_or(DEFAULT_STEPS);
    if steps == 0 {
        return Err(CliError::Config("--steps must be at least 1".into()));
    }
    let seed = cfg.seed.unwrap_or(0);
    let mut counts = vec![0u64; schedule.scales().len()];
    let mut log = String::from("step,scale_index,height,width\n");
    for step in 0..steps {
        let d = sample_scale(&schedule, seed, step);
        counts[d.scale_index] += 1;
        log.push_str(&format!("{},{},{},{}\n", step, d.scale_index, d.scale.height(), d.scale.width()));
    }
    let rows: Vec<Value> = schedule
        .scales()
        .iter()
        .zip(schedule.probs())
        .zip(&counts)
        .map(|((scale, p), &n)| {
            json!({
                "scale": scale,
                "probability": p,
                "count": n,
                "frequency": n as f64 / steps as f64,
            })
        })
        .collect();
    let max_dev = schedule
        .probs()
        .iter()
        .zip(&counts)
        .map(|(p, &n)| (n as f64 / steps as f64 - p).abs())
        .fold(0.0, f64::max);

    let mut out = OutputDir::create(cfg.out_dir()?)?;
    out.write("draws.csv", &log)?;
    let summary = json!({ "steps": steps, "seed": seed, "scales": rows, "max_abs_deviation": max_dev });
    out.write_json("frequencies.json", &summary)?;
    out.finish("schedule", cfg, inputs, summary, start.elapsed())
}
