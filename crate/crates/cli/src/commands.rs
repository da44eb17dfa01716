use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gmxc_core::codec::{decode_image, decode_latents, encode_image_detailed, CodedLatents, CompressedContainer};
use gmxc_core::formats::{encode_pgm, encode_tnsr, TnsrArray, TnsrData};
use gmxc_core::metrics::{validate_lambda, RdReport};
use gmxc_core::nn::NetworkWeights;
use gmxc_core::selftest::run_selftest;
use gmxc_core::{CodecError, Geometry, Result, Tensor};
use rayon::prelude::*;

use crate::args::{
    BenchArgs, Cli, Command, DecodeArgs, EncodeArgs, InitWeightsArgs, InspectArgs, ModelShape, ModelSource,
    SelftestArgs,
};
use crate::files::{image_bytes, is_image, read_image, symbols_tnsr, write_atomic};
use crate::EXIT_SELFTEST;

/// Writes to stdout. A closed pipe (`gmxc inspect x | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

macro_rules! out {
    ($($arg:tt)*) => {
        emit(&format!("{}\n", format_args!($($arg)*)))?
    };
}

const DEFAULT_N: usize = 128;
const DEFAULT_K: usize = 3;

pub fn run(cli: Cli) -> Result<u8> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Encode(a) => encode(a, verbose),
        Command::Decode(a) => decode(a, verbose),
        Command::Inspect(a) => inspect(a),
        Command::Selftest(a) => selftest(a),
        Command::Bench(a) => bench(a, verbose),
        Command::InitWeights(a) => init_weights(a),
    }
}

/// Loads the model. With `--init-seed`, `fallback` supplies N and K that
/// were not given on the command line.
fn load_model(src: &ModelSource, shape: &ModelShape, fallback: (usize, usize)) -> Result<NetworkWeights> {
    match (&src.weights, src.init_seed) {
        (Some(path), None) => {
            if shape.n.is_some() || shape.k.is_some() {
                return Err(CodecError::Usage("-N/-K apply only to --init-seed; weight files carry their own".into()));
            }
            NetworkWeights::load(path)
        }
        (None, Some(seed)) => {
            NetworkWeights::init_random(seed, shape.n.unwrap_or(fallback.0), shape.k.unwrap_or(fallback.1))
        }
        _ => Err(CodecError::Usage("give a model with --weights FILE or --init-seed SEED".into())),
    }
}

fn has_model(src: &ModelSource) -> bool {
    src.weights.is_some() || src.init_seed.is_some()
}

fn distinct(input: &Path, output: &Path) -> Result<()> {
    let same = match (input.canonicalize(), output.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == output,
    };
    if same {
        return Err(CodecError::Usage(format!("input and output are the same file: {}", input.display())));
    }
    Ok(())
}

fn read_container(path: &Path) -> Result<CompressedContainer> {
    CompressedContainer::from_bytes(&std::fs::read(path)?)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

struct Coded {
    report: RdReport,
    container: CompressedContainer,
    latents: CodedLatents,
}

fn encode_one(path: &Path, weights: &NetworkWeights, a: &crate::args::RdArgs) -> Result<Coded> {
    let image = read_image(path)?;
    let t0 = Instant::now();
    let enc = encode_image_detailed(&image, weights, a.mode.into())?;
    let encode_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let dec = decode_image(&enc.container, weights)?;
    let decode_seconds = t1.elapsed().as_secs_f64();
    let stats = &enc.latents.stats;
    let mut report = RdReport::evaluate(
        &file_name(path),
        &image,
        &dec.image,
        stats.bpp_y(),
        stats.bpp_z(),
        a.metric.into(),
        a.lambda,
    )?;
    report.encode_seconds = encode_seconds;
    report.decode_seconds = decode_seconds;
    Ok(Coded { report, container: enc.container, latents: enc.latents })
}

fn encode(a: EncodeArgs, verbose: bool) -> Result<u8> {
    distinct(&a.input, &a.output)?;
    validate_lambda(a.rd.lambda)?;
    let weights = load_model(&a.model, &a.shape, (DEFAULT_N, DEFAULT_K))?;
    let coded = encode_one(&a.input, &weights, &a.rd)?;
    write_atomic(&a.output, &coded.container.to_bytes())?;
    if let Some(path) = &a.latents {
        let y = &coded.latents.y_hat;
        write_atomic(path, &symbols_tnsr(y.geometry(), y.data())?)?;
    }
    emit(&coded.report.key_values())?;
    out!("mode={}", coded.container.mode);
    out!("bytes={}", coded.container.to_bytes().len());
    if verbose {
        let s = &coded.latents.stats;
        eprintln!(
            "encode {:.3}s, decode {:.3}s; ŷ {} bytes (model {:.0} bits), ẑ {} bytes incl. {} bytes of prior tables",
            coded.report.encode_seconds,
            coded.report.decode_seconds,
            s.y_payload_bytes,
            s.y_bits_estimated,
            s.z_payload_bytes,
            s.prior_table_bytes
        );
    }
    Ok(0)
}

fn decode(a: DecodeArgs, verbose: bool) -> Result<u8> {
    distinct(&a.input, &a.output)?;
    let container = read_container(&a.input)?;
    let weights = load_model(&a.model, &a.shape, (container.n as usize, container.k as usize))?;
    let t0 = Instant::now();
    let dec = decode_image(&container, &weights)?;
    let bytes = image_bytes(&a.output, &dec.image)?;
    write_atomic(&a.output, &bytes)?;
    if let Some(path) = &a.latents {
        let y = &dec.latents.y_hat;
        write_atomic(path, &symbols_tnsr(y.geometry(), y.data())?)?;
    }
    out!("size={}x{}", container.width, container.height);
    out!("checksum=ok");
    out!("bpp={:.6}", container.bpp());
    if verbose {
        eprintln!("decoded in {:.3}s", t0.elapsed().as_secs_f64());
    }
    Ok(0)
}

const BIT_BINS: [(f64, f64); 7] =
    [(0.0, 0.01), (0.01, 0.5), (0.5, 1.0), (1.0, 2.0), (2.0, 4.0), (4.0, 8.0), (8.0, f64::INFINITY)];

fn print_histogram(bits: &[f64]) -> Result<()> {
    out!("bits per element histogram:");
    for (lo, hi) in BIT_BINS {
        let n = bits.iter().filter(|&&b| b >= lo && b < hi).count();
        let pct = 100.0 * n as f64 / bits.len().max(1) as f64;
        let label = if hi.is_finite() { format!("[{lo}, {hi})") } else { format!("[{lo}, ∞)") };
        out!("  {label:>12} {n:>9} {pct:6.2}%");
    }
    Ok(())
}

/// Bits summed over channels, scaled so the largest position is white.
fn heatmap(map: &Tensor) -> Tensor {
    let g = map.geometry();
    let mut sums = Tensor::zeros(Geometry::new(1, g.height, g.width));
    for c in 0..g.channels {
        for (s, v) in sums.data_mut().iter_mut().zip(map.channel(c)) {
            *s += v;
        }
    }
    let max = sums.data().iter().fold(0.0f32, |m, &v| m.max(v));
    if max > 0.0 {
        sums.map_inplace(|v| v / max);
    }
    sums
}

fn inspect(a: InspectArgs) -> Result<u8> {
    let bytes = std::fs::read(&a.input)?;
    let c = CompressedContainer::from_bytes(&bytes)?;
    out!("format=GMMC v{}", gmxc_core::codec::CONTAINER_VERSION);
    out!("mode={}", c.mode);
    out!("N={}", c.n);
    out!("K={}", c.k);
    out!("size={}x{}", c.width, c.height);
    out!("weights_checksum={:016x}", c.weights_checksum);
    out!("z_payload_bytes={}", c.z_payload.len());
    out!("y_payload_bytes={}", c.y_payload.len());
    out!("container_bytes={}", bytes.len());
    out!("bpp={:.6}", c.bpp());

    if !has_model(&a.model) {
        if a.bits_map.is_some() {
            return Err(CodecError::Usage("--bits-map needs --weights or --init-seed".into()));
        }
        return Ok(0);
    }
    let weights = load_model(&a.model, &a.shape, (c.n as usize, c.k as usize))?;
    let lat = decode_latents(&c, &weights)?;
    let s = &lat.stats;
    let g = lat.y_hat.geometry();
    out!("latent={}x{}x{}", g.channels, g.height, g.width);
    out!("prior_table_bytes={}", s.prior_table_bytes);
    out!("y_bits_estimated={:.3}", s.y_bits_estimated);
    out!("z_bits_estimated={:.3}", s.z_bits_estimated);
    out!("y_bits_coded_model={:.3}", s.y_bits_coded);
    out!("bpp_y={:.6}", s.bpp_y());
    out!("bpp_z={:.6}", s.bpp_z());
    print_histogram(&lat.y_bits)?;
    if let Some(path) = &a.bits_map {
        let map = lat.bits_map();
        let out = if crate::files::is_tnsr(path) {
            let arr = TnsrArray::new(vec![g.channels, g.height, g.width], TnsrData::F32(map.data().to_vec()))?;
            encode_tnsr(&arr)
        } else {
            encode_pgm(&heatmap(&map))?
        };
        write_atomic(path, &out)?;
        out!("bits_map={}", path.display());
    }
    Ok(0)
}

fn selftest(a: SelftestArgs) -> Result<u8> {
    let weights = a.weights.as_ref().map(NetworkWeights::load).transpose()?;
    let results = run_selftest(a.seed, weights.as_ref());
    let mut failed = 0;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        out!("{tag} {}: {} ({:.2}s)", r.name, r.detail, r.seconds);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        out!("{failed} of {} checks failed", results.len());
        return Ok(EXIT_SELFTEST);
    }
    Ok(0)
}

fn bench(a: BenchArgs, verbose: bool) -> Result<u8> {
    validate_lambda(a.rd.lambda)?;
    let weights = load_model(&a.model, &a.shape, (DEFAULT_N, DEFAULT_K))?;
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(&a.dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image(p))
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        return Err(CodecError::Usage(format!("no .ppm/.pgm/.tnsr images in {}", a.dir.display())));
    }
    let rows: Vec<Result<RdReport>> = inputs
        .par_iter()
        .map(|p| {
            let r = encode_one(p, &weights, &a.rd).map(|c| c.report);
            if verbose {
                eprintln!("{}: {}", p.display(), if r.is_ok() { "ok" } else { "failed" });
            }
            r
        })
        .collect();
    let mut csv = String::from(RdReport::csv_header());
    csv.push('\n');
    for (path, row) in inputs.iter().zip(rows) {
        let row = row.inspect_err(|_| eprintln!("gmxc: {} failed", path.display()))?;
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    match &a.output {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => emit(&csv)?,
    }
    Ok(0)
}

fn init_weights(a: InitWeightsArgs) -> Result<u8> {
    let w = NetworkWeights::init_random(a.seed, a.n, a.k)?;
    write_atomic(&a.output, &w.to_bytes())?;
    out!("weights_checksum={:016x}", w.checksum());
    Ok(0)
}
