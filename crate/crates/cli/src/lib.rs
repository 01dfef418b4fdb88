//! `gshade`: key generation, embedding, extraction, detection, tracing and
//! simulation sweeps over GSLT latent files.
//!
//! Exit status: 0 success, 1 negative decision (detect, trace, distcheck),
//! 2 usage or configuration error, 3 I/O or format error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gaussian_shading::distcheck::{run_distcheck, DistcheckPlan};
use gaussian_shading::stats::{detect, solve_threshold, Tracer};
use gaussian_shading::sweep::{format_report, run_sweep, SweepPlan};
use gaussian_shading::{
    channel::apply_channel, CapacityConfig, ChannelSpec, Codec, Error, KeyMaterial, KeyRecord, LatentTensor,
    UserRegistry, WatermarkPayload,
};
use rand::rngs::StdRng;
use rand::SeedableRng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gshade", version, about = "Distribution-preserving latent watermarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a key record, or a user registry with --users.
    Keygen(KeygenArgs),
    /// Sample a watermarked latent and write it as GSLT.
    Embed(EmbedArgs),
    /// Recover the payload from a latent.
    Extract(ExtractArgs),
    /// Test a latent against one key and payload.
    Detect(DetectArgs),
    /// Attribute a latent to a registry user.
    Trace(TraceArgs),
    /// Pass a latent through a simulated channel.
    Attack(AttackArgs),
    /// KS self-test of the sampler's output distribution.
    Distcheck(DistcheckArgs),
    /// Run a capacity/robustness sweep plan.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct KeygenArgs {
    #[arg(long)]
    out: PathBuf,
    /// Capacity configuration, e.g. 4x64x64,fc=1,fhw=8,l=1.
    #[arg(long)]
    cfg: Option<CapacityConfig>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write a registry of this many users instead of a single key.
    #[arg(long)]
    users: Option<usize>,
}

#[derive(Debug, Args)]
struct EmbedArgs {
    #[arg(long, required_unless_present = "registry")]
    key: Option<PathBuf>,
    /// Hex payload file.
    #[arg(long, conflicts_with_all = ["payload_random", "registry"])]
    payload: Option<PathBuf>,
    #[arg(long, conflicts_with = "registry")]
    payload_random: bool,
    /// Embed for a registry user instead of a key file.
    #[arg(long, requires = "user", conflicts_with = "key")]
    registry: Option<PathBuf>,
    #[arg(long)]
    user: Option<u64>,
    #[arg(long)]
    cfg: Option<CapacityConfig>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the embedded payload as hex.
    #[arg(long)]
    payload_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    cfg: Option<CapacityConfig>,
    /// Reference payload to score against.
    #[arg(long)]
    payload: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    payload: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    fpr: f64,
    #[arg(long)]
    cfg: Option<CapacityConfig>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// Compound false-positive rate over the whole registry.
    #[arg(long, default_value_t = 1e-6)]
    fpr: f64,
    #[arg(long, conflicts_with = "key")]
    cfg: Option<CapacityConfig>,
    /// Take the configuration from this key record.
    #[arg(long)]
    key: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// e.g. flip:0.2, gauss:1.0, region:0.25, or terms joined with '+'.
    #[arg(long)]
    channel: ChannelSpec,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DistcheckArgs {
    #[arg(long)]
    cfg: Option<CapacityConfig>,
    #[arg(long, default_value_t = 100)]
    embeds: usize,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Overrides the plan's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    fs::write(path, bytes).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_key(path: &Path) -> Result<KeyRecord, Error> {
    read_text(path)?.parse()
}

fn read_latent(path: &Path) -> Result<LatentTensor, Error> {
    let bytes = fs::read(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    LatentTensor::from_gslt_bytes(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// First non-comment line of a payload file, hex encoded.
fn read_payload(path: &Path, k: usize) -> Result<WatermarkPayload, Error> {
    let text = read_text(path)?;
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| Error::Format(format!("{}: no payload", path.display())))?;
    WatermarkPayload::from_hex(line.strip_prefix("payload=").unwrap_or(line), k)
}

fn rng_for(seed: Option<u64>) -> StdRng {
    match seed {
        Some(s) => StdRng::seed_from_u64(s),
        None => StdRng::from_os_rng(),
    }
}

fn keygen(args: KeygenArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let config = args.cfg.unwrap_or_default();
    let mut rng = rng_for(args.seed);
    match args.users {
        Some(0) => return Err(Error::Usage("--users must be at least 1".into())),
        Some(n) => {
            let registry = UserRegistry::generate(n, config.payload_bits(), &mut rng);
            write_bytes(&args.out, registry.to_string().as_bytes())?;
            writeln!(out, "users={n}")?;
        }
        None => {
            let record = KeyRecord { key: KeyMaterial::from_rng(&mut rng), config };
            write_bytes(&args.out, record.to_string().as_bytes())?;
        }
    }
    writeln!(out, "config={config}")?;
    writeln!(out, "k={}", config.payload_bits())?;
    Ok(EXIT_OK)
}

fn embed(args: EmbedArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let mut rng = rng_for(args.seed);
    let (key, config, payload) = if let Some(path) = &args.registry {
        let config = args.cfg.unwrap_or_default();
        let registry = UserRegistry::parse(&read_text(path)?, config.payload_bits())?;
        let user = args.user.expect("clap enforces --user with --registry");
        let entry =
            registry.get(user).ok_or_else(|| Error::Usage(format!("user {user} is not in {}", path.display())))?;
        (entry.key.clone(), config, entry.payload.clone())
    } else {
        let record = read_key(args.key.as_deref().expect("clap enforces --key"))?;
        let config = args.cfg.unwrap_or(record.config);
        let payload = match (&args.payload, args.payload_random) {
            (Some(p), false) => read_payload(p, config.payload_bits())?,
            (None, true) => WatermarkPayload::random(config.payload_bits(), &mut rng),
            _ => return Err(Error::Usage("give exactly one of --payload or --payload-random".into())),
        };
        (record.key, config, payload)
    };
    let codec = Codec::new(config);
    let z = codec.embed(&payload, &key, &mut rng)?;
    if codec.extract(&z, &key)? != payload {
        return Err(Error::NumericDomain("embedded latent failed self-verification".into()));
    }
    write_bytes(&args.out, &z.to_gslt_bytes())?;
    if let Some(path) = &args.payload_out {
        write_bytes(path, format!("{}\n", payload.to_hex()).as_bytes())?;
    }
    writeln!(out, "config={config}")?;
    writeln!(out, "payload={}", payload.to_hex())?;
    Ok(EXIT_OK)
}

fn extract(args: ExtractArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let record = read_key(&args.key)?;
    let config = args.cfg.unwrap_or(record.config);
    let z = read_latent(&args.input)?;
    let extracted = Codec::new(config).extract(&z, &record.key)?;
    writeln!(out, "payload={}", extracted.to_hex())?;
    if let Some(path) = &args.payload {
        let reference = read_payload(path, config.payload_bits())?;
        let acc = gaussian_shading::stats::acc_count(&reference, &extracted)?;
        writeln!(out, "acc={acc}")?;
        writeln!(out, "k={}", config.payload_bits())?;
        writeln!(out, "bit_accuracy={:.6}", acc as f64 / config.payload_bits() as f64)?;
    }
    Ok(EXIT_OK)
}

fn detect_cmd(args: DetectArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let record = read_key(&args.key)?;
    let config = args.cfg.unwrap_or(record.config);
    let payload = read_payload(&args.payload, config.payload_bits())?;
    let z = read_latent(&args.input)?;
    let policy = solve_threshold(config.payload_bits(), args.fpr, 1)?;
    let report = detect(&z, &record.key, &payload, &Codec::new(config), &policy)?;
    write!(out, "{report}")?;
    Ok(if report.detected { EXIT_OK } else { EXIT_NEGATIVE })
}

fn trace_cmd(args: TraceArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let config = match (&args.cfg, &args.key) {
        (Some(c), _) => *c,
        (None, Some(path)) => read_key(path)?.config,
        (None, None) => CapacityConfig::default(),
    };
    let registry = UserRegistry::parse(&read_text(&args.registry)?, config.payload_bits())?;
    let z = read_latent(&args.input)?;
    let policy = solve_threshold(config.payload_bits(), args.fpr, registry.len())?;
    let report = Tracer::new(&registry, Codec::new(config), policy)?.trace(&z)?;
    write!(out, "{report}")?;
    Ok(if report.detected { EXIT_OK } else { EXIT_NEGATIVE })
}

fn attack(args: AttackArgs, out: &mut dyn Write) -> Result<i32, Error> {
    args.channel.validate()?;
    let z = read_latent(&args.input)?;
    let attacked = apply_channel(&z, &args.channel, &mut rng_for(args.seed))?;
    write_bytes(&args.out, &attacked.to_gslt_bytes())?;
    writeln!(out, "channel={}", args.channel)?;
    Ok(EXIT_OK)
}

fn distcheck(args: DistcheckArgs, out: &mut dyn Write) -> Result<i32, Error> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::Usage("--alpha must be in (0, 1)".into()));
    }
    let plan = DistcheckPlan {
        config: args.cfg.unwrap_or_default(),
        embeds_per_run: args.embeds,
        runs: args.runs,
        seed: args.seed,
        alpha: args.alpha,
        ..DistcheckPlan::default()
    };
    let report = run_distcheck(&plan)?;
    write!(out, "{}", report.to_dsv())?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_NEGATIVE })
}

fn sweep(args: SweepArgs, out: &mut dyn Write) -> Result<i32, Error> {
    let mut plan: SweepPlan = read_text(&args.plan)?.parse()?;
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    let rows = run_sweep(&plan)?;
    write!(out, "{}", format_report(&plan, &rows))?;
    Ok(EXIT_OK)
}

/// Parses `argv` (including the program name) and runs one subcommand.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match cli.command {
        Command::Keygen(a) => keygen(a, out),
        Command::Embed(a) => embed(a, out),
        Command::Extract(a) => extract(a, out),
        Command::Detect(a) => detect_cmd(a, out),
        Command::Trace(a) => trace_cmd(a, out),
        Command::Attack(a) => attack(a, out),
        Command::Distcheck(a) => distcheck(a, out),
        Command::Sweep(a) => sweep(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "gshade: {e}");
            exit_code(&e)
        }
    }
}
