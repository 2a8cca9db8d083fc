//! One function per subcommand, plus the error-to-exit-code mapping:
//! 0 success, 2 usage/validation, 3 I/O or format corruption, 4 numerical
//! failure.

use std::path::Path;
use std::time::Instant;

use transdeno_core::autograd::{finite_diff_check, gradcheck_instance, train_denoiser};
use transdeno_core::error::Error;
use transdeno_core::io::{
    generate_scene_set, load_checkpoint, load_scene_pairs, parse_data_spec, parse_train_setup,
    save_checkpoint, write_loss_csv, LoadedParams, Precision, TensorFile,
};
use transdeno_core::metrics::EvalReport;
use transdeno_core::rng::CounterRng;
use transdeno_core::spectral::FeatureMap;
use transdeno_core::transdeno::{transdeno_forward, TransDenoConfig, TransDenoParams};
use transdeno_core::Result;
use transdeno_core::Scalar;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_)
        | Error::ShapeMismatch { .. }
        | Error::Config { .. }
        | Error::Placement { .. } => 2,
        Error::Io(_) | Error::Format { .. } => 3,
        Error::NonFinite { .. } | Error::Divergence { .. } => 4,
    }
}

fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub fn gen_data(spec_path: &Path, out_dir: &Path) -> Result<()> {
    let spec = parse_data_spec(&read_text(spec_path)?)?;
    let pairs = generate_scene_set(&spec, out_dir)?;
    println!(
        "wrote {} scene pairs ({}x{}x{}, L={}) to {}",
        pairs.len(),
        spec.scene.c,
        spec.scene.h,
        spec.scene.w,
        spec.scene.looks,
        out_dir.display()
    );
    Ok(())
}

fn denoise_as<S: Scalar>(
    params: &TransDenoParams<S>,
    input: &TensorFile,
    output: &Path,
    clean: Option<&TensorFile>,
) -> Result<()> {
    let noisy = input.to_feature_map::<S>()?;
    let out = transdeno_forward(&noisy, params)?;
    TensorFile::from_feature_map(&out).write(output)?;
    if let Some(clean_file) = clean {
        let clean_map = clean_file.to_feature_map::<S>()?;
        let report = EvalReport::compute(&out, &clean_map, &noisy)?;
        println!("{}", report.to_json_line());
    }
    Ok(())
}

pub fn denoise(
    input_path: &Path,
    params_path: &Path,
    output: &Path,
    report: bool,
    clean_path: Option<&Path>,
) -> Result<()> {
    let params = load_checkpoint(params_path)?;
    let input = TensorFile::read(input_path)?;
    if input.dims.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "denoise expects a C x H x W tensor, got dims {:?}",
            input.dims
        )));
    }
    let got = (input.dims[0], input.dims[1], input.dims[2]);
    if got != params.dims() {
        return Err(Error::ShapeMismatch {
            context: "denoise input vs checkpoint".into(),
            expected: format!("{:?}", params.dims()),
            actual: format!("{got:?}"),
        });
    }
    let clean = match (report, clean_path) {
        (true, Some(p)) => Some(TensorFile::read(p)?),
        (true, None) => {
            return Err(Error::InvalidArgument(
                "--report requires a --clean reference tensor".into(),
            ))
        }
        _ => None,
    };
    match &params {
        LoadedParams::F32(p) => denoise_as(p, &input, output, clean.as_ref()),
        LoadedParams::F64(p) => denoise_as(p, &input, output, clean.as_ref()),
    }
}

fn train_as<S: Scalar>(
    data_dir: &Path,
    setup: &transdeno_core::io::TrainSetup,
    out_ckpt: &Path,
    loss_csv: &Path,
) -> Result<()> {
    let pairs = load_scene_pairs::<S>(data_dir)?;
    let (c, h, w) = {
        let first = &pairs[0].0;
        (first.channels(), first.height(), first.width())
    };
    let params = TransDenoParams::<S>::init(c, h, w, setup.module.clone(), setup.init_seed)?;
    let (trained, history) = train_denoiser(&setup.train, &pairs, params)?;
    save_checkpoint(out_ckpt, &trained)?;
    write_loss_csv(loss_csv, &history)?;
    println!(
        "trained {} steps on {} pairs: loss {} -> {}",
        setup.train.steps,
        pairs.len(),
        history.first().unwrap(),
        history.last().unwrap()
    );
    Ok(())
}

pub fn train(data_dir: &Path, config_path: &Path, out_ckpt: &Path, loss_csv: &Path) -> Result<()> {
    let setup = parse_train_setup(&read_text(config_path)?)?;
    match setup.precision {
        Precision::F32 => train_as::<f32>(data_dir, &setup, out_ckpt, loss_csv),
        Precision::F64 => train_as::<f64>(data_dir, &setup, out_ckpt, loss_csv),
    }
}

/// Runs the finite-difference verification on the canonical seeded instance
/// and prints the report. Returns whether the check passed.
pub fn gradcheck(eps: f64, seed: u64) -> Result<bool> {
    let (params, input, target) = gradcheck_instance(seed);
    let report = finite_diff_check(&params, &input, &target, eps)?;
    for entry in report.entries.iter().take(5) {
        println!(
            "{}[{}]: analytic {:+.6e} numeric {:+.6e} rel {:.3e}{}",
            entry.path,
            entry.index,
            entry.analytic,
            entry.numeric,
            entry.rel_err,
            if entry.kink_adjacent { " (kink-adjacent, excluded)" } else { "" }
        );
    }
    println!(
        "checked {} scalars ({} kink-adjacent excluded), max relative error {:.3e} at {}",
        report.checked,
        report.excluded,
        report.max_rel_err,
        if report.worst_param_path.is_empty() { "-" } else { &report.worst_param_path }
    );
    let passed = report.passes(GRADCHECK_TOLERANCE);
    println!(
        "gradcheck {} (tolerance {GRADCHECK_TOLERANCE:.0e}, eps {eps:.0e}, seed {seed})",
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(passed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchStats {
    /// Number of forward calls actually executed.
    pub calls: usize,
    pub mean_seconds: f64,
    pub stddev_seconds: f64,
}

/// Times `iters` forward passes of a seeded random map through seeded
/// default-config parameters.
pub fn run_bench(c: usize, h: usize, w: usize, iters: usize, seed: u64) -> Result<BenchStats> {
    if iters == 0 {
        return Err(Error::InvalidArgument("iters must be at least 1".into()));
    }
    let params = TransDenoParams::<f32>::init(c, h, w, TransDenoConfig::default(), seed)?;
    let mut rng = CounterRng::derive(seed, 40);
    let map = FeatureMap::from_fn(c, h, w, |_| rng.uniform_in(-1.0, 1.0) as f32)?;
    let mut calls = 0usize;
    let mut times = Vec::with_capacity(iters);
    let mut sink = 0.0f32;
    for _ in 0..iters {
        let start = Instant::now();
        let out = transdeno_forward(&map, &params)?;
        times.push(start.elapsed().as_secs_f64());
        calls += 1;
        sink += out.data()[(0, 0, 0)];
    }
    std::hint::black_box(sink);
    let mean = times.iter().sum::<f64>() / iters as f64;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / iters as f64;
    Ok(BenchStats {
        calls,
        mean_seconds: mean,
        stddev_seconds: var.sqrt(),
    })
}

pub fn parse_size(size: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = size.split('x').collect();
    let parse = |s: &str| s.parse::<usize>().ok().filter(|&v| v >= 1);
    match parts.as_slice() {
        [c, h, w] => match (parse(c), parse(h), parse(w)) {
            (Some(c), Some(h), Some(w)) => Ok((c, h, w)),
            _ => Err(Error::InvalidArgument(format!("invalid --size {size:?}"))),
        },
        _ => Err(Error::InvalidArgument(format!(
            "--size must be CxHxW, got {size:?}"
        ))),
    }
}

pub fn bench(size: &str, iters: usize) -> Result<()> {
    let (c, h, w) = parse_size(size)?;
    let stats = run_bench(c, h, w, iters, 1)?;
    println!(
        "size {c}x{h}x{w}: {} iters, mean {:.6} ms, stddev {:.6} ms per forward",
        stats.calls,
        stats.mean_seconds * 1e3,
        stats.stddev_seconds * 1e3
    );
    Ok(())
}
