//! Argument surface and command implementations for the `mimo-arena` binary.

use clap::{Args, Parser, Subcommand, ValueEnum};
use mimo_arena_core::channel::FadingMode;
use mimo_arena_core::detect::DetectorKind;
use mimo_arena_core::linksim::{
    run_sweep, ConfigDelta, ConfigError, GrayImage, Parallelism, SessionConfig, SweepError, SweepSpec,
};
use mimo_arena_service::{Engine, Server, ServiceError, DEFAULT_PORT, PORT_ENV};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

pub const CSV_FILE: &str = "sweep.csv";
pub const JSON_FILE: &str = "sweep.json";

#[derive(Debug, Parser)]
#[command(name = "mimo-arena", version, about = "Multi-user MIMO uplink link simulator and live detector arena")]
pub struct Cli {
    /// Master seed for every random draw [default: 1]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory receiving sweep.csv and sweep.json
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Service port; 0 binds any free port
    #[arg(long, global = true, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
    pub port: u16,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo error-rate sweep over detectors and SNR points
    Sweep(SweepArgs),
    /// Start the live service with a scenario preset
    Demo(DemoArgs),
    /// Start the live service with an explicit configuration
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fading {
    Block,
    #[value(name = "per_symbol", alias = "per-symbol")]
    PerSymbol,
}

impl From<Fading> for FadingMode {
    fn from(f: Fading) -> Self {
        match f {
            Fading::Block => FadingMode::Block,
            Fading::PerSymbol => FadingMode::PerSymbol,
        }
    }
}

/// Inclusive SNR grid written `start:step:stop`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrGrid(pub Vec<f64>);

impl std::str::FromStr for SnrGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
            .collect::<Result<Vec<f64>, _>>()?;
        match nums[..] {
            [single] if single.is_finite() => Ok(SnrGrid(vec![single])),
            [start, step, stop] if start.is_finite() && stop.is_finite() && step.is_finite() => {
                if step <= 0.0 {
                    return Err("step must be positive".into());
                }
                if stop < start {
                    return Err("stop must not be below start".into());
                }
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                if count > 10_000 {
                    return Err(format!("{count} points is too many"));
                }
                Ok(SnrGrid((0..count).map(|i| start + step * i as f64).collect()))
            }
            _ => Err("expected start:step:stop in dB".into()),
        }
    }
}

fn parse_order(s: &str) -> Result<u32, String> {
    match s.trim() {
        "4" => Ok(4),
        "16" => Ok(16),
        "64" => Ok(64),
        _ => Err("modulation order must be 4, 16 or 64".into()),
    }
}

fn parse_mask(s: &str) -> Result<u8, String> {
    let s = s.trim();
    let parsed = if let Some(bin) = s.strip_prefix("0b") {
        u8::from_str_radix(bin, 2)
    } else if let Some(hex) = s.strip_prefix("0x") {
        u8::from_str_radix(hex, 16)
    } else {
        s.parse()
    };
    match parsed {
        Ok(0) => Err("at least one antenna must be active".into()),
        Ok(m) => Ok(m),
        Err(_) => Err("expected an 8-bit mask such as 15, 0x0f or 0b00001111".into()),
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated detectors: zf, mmse, sic, ml_brute, sphere
    #[arg(long, value_delimiter = ',', default_value = "zf,mmse,sic,sphere")]
    pub detectors: Vec<DetectorKind>,

    /// SNR grid in dB as start:step:stop (inclusive) or a single value
    #[arg(long, default_value = "0:2:20", allow_hyphen_values = true)]
    pub snr: SnrGrid,

    /// Number of transmit streams
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub streams: u8,

    /// Active receive antennas, taken from port 0 upward
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub antennas: u8,

    /// Constellation order: 4, 16 or 64
    #[arg(long = "mod", default_value = "4", value_parser = parse_order)]
    pub modulation: u32,

    /// Trials per point; each trial sends one packet per stream
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,

    /// Convolutional coding with soft decoding
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    pub coding: Switch,

    /// Channel variation across channel uses
    #[arg(long, value_enum, default_value_t = Fading::PerSymbol)]
    pub fading: Fading,

    /// Candidate list length for soft sphere decoding [default: 4 x constellation order]
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub list_size: Option<u32>,

    /// Run every trial on the calling thread
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 4 streams on 4 antennas, 16-QAM, sphere decoding, 14 dB
    HalvedAntennas,
    /// 4 streams on a single antenna, QPSK, sphere decoding, 22 dB
    #[value(name = "overload-4on1")]
    Overload4On1,
}

impl Preset {
    pub fn config(self) -> SessionConfig {
        let base = SessionConfig {
            detector: DetectorKind::Sphere,
            n_streams: 4,
            coding: true,
            ..SessionConfig::default()
        };
        match self {
            Preset::HalvedAntennas => SessionConfig {
                antenna_mask: 0b0000_1111,
                modulation: 16,
                snr_db: 14.0,
                ..base
            },
            Preset::Overload4On1 => SessionConfig {
                antenna_mask: 0b0000_0001,
                modulation: 4,
                fading: FadingMode::PerSymbol,
                snr_db: 22.0,
                ..base
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct ListenArgs {
    /// Address the service binds to
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,

    /// Source image (binary PGM, 128x128) per stream, in stream order;
    /// repeat the flag for several streams
    #[arg(long = "image")]
    pub images: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Scenario to run
    #[arg(value_enum)]
    pub preset: Preset,

    #[command(flatten)]
    pub listen: ListenArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// JSON session config using the wire field names; flags below override it
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Detector: zf, mmse, sic, ml_brute or sphere
    #[arg(long)]
    pub detector: Option<DetectorKind>,

    /// Number of transmit streams (1..=4)
    #[arg(long)]
    pub streams: Option<u64>,

    /// Active antenna ports as an 8-bit mask (15, 0x0f or 0b00001111)
    #[arg(long, value_parser = parse_mask)]
    pub antenna_mask: Option<u8>,

    /// Constellation order: 4, 16 or 64
    #[arg(long = "mod", value_parser = parse_order)]
    pub modulation: Option<u32>,

    /// Signal-to-noise ratio in dB
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,

    /// Convolutional coding with soft decoding
    #[arg(long, value_enum)]
    pub coding: Option<Switch>,

    /// Channel variation across channel uses
    #[arg(long, value_enum)]
    pub fading: Option<Fading>,

    /// Engine tick rate
    #[arg(long)]
    pub tick_hz: Option<f64>,

    /// Channel uses simulated per tick
    #[arg(long)]
    pub symbols_per_tick: Option<u64>,

    #[command(flatten)]
    pub listen: ListenArgs,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration (exit 2).
    Usage(String),
    /// Runtime failure such as a guard violation or a busy port (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(format!("config error: {e}"))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sweep(ref args) => cmd_sweep(args, cli.seed.unwrap_or(1), &cli.out),
        Command::Demo(ref args) => {
            let mut config = args.preset.config();
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            serve(config, &args.listen, cli.port)
        }
        Command::Serve(ref args) => {
            let config = serve_config(args, cli.seed)?;
            serve(config, &args.listen, cli.port)
        }
    }
}

pub fn sweep_spec(args: &SweepArgs, seed: u64) -> SweepSpec {
    SweepSpec {
        detectors: args.detectors.clone(),
        snrs_db: args.snr.0.clone(),
        n_streams: args.streams as usize,
        antenna_mask: ((1u16 << args.antennas) - 1) as u8,
        modulation: args.modulation,
        coding: args.coding.is_on(),
        fading: args.fading.into(),
        trials: args.trials,
        seed,
        list_size: args.list_size.map(|l| l as usize),
        parallelism: if args.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Parallel
        },
    }
}

fn cmd_sweep(args: &SweepArgs, seed: u64, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let spec = sweep_spec(args, seed);
    let table = run_sweep(&spec).map_err(|e| match e {
        SweepError::Detect { .. } => CliError::Runtime(format!("guard violation: {e}")),
        SweepError::Io(_) => CliError::Runtime(e.to_string()),
        other => CliError::Usage(other.to_string()),
    })?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("--out {}: {e}", out.display())))?;
    let csv = out.join(CSV_FILE);
    let json = out.join(JSON_FILE);
    std::fs::write(&csv, table.to_csv_string()).map_err(|e| CliError::Runtime(format!("{}: {e}", csv.display())))?;
    std::fs::write(&json, table.to_json_string()).map_err(|e| CliError::Runtime(format!("{}: {e}", json.display())))?;
    println!("wrote {} ({} rows)", csv.display(), table.rows.len());
    println!("wrote {}", json.display());
    println!("runtime {:.3} s", started.elapsed().as_secs_f64());
    Ok(())
}

/// Config file (or defaults) with flag overrides applied and validated.
pub fn serve_config(args: &ServeArgs, seed: Option<u64>) -> Result<SessionConfig, CliError> {
    let base = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
            SessionConfig::from_json_str(&text)
                .map_err(|e| CliError::Usage(format!("--config {}: invalid `{}`: {}", path.display(), e.field, e.reason)))?
        }
        None => SessionConfig::default(),
    };
    let delta = ConfigDelta {
        detector: args.detector.map(|d| d.name().to_string()),
        n_streams: args.streams,
        antenna_mask: args.antenna_mask.map(u64::from),
        modulation: args.modulation.map(u64::from),
        snr_db: args.snr_db,
        coding: args.coding.map(Switch::is_on),
        fading: args.fading.map(Into::into),
        tick_hz: args.tick_hz,
        symbols_per_tick: args.symbols_per_tick,
        seed,
    };
    Ok(base.merged(&delta)?)
}

fn load_images(paths: &[PathBuf]) -> Result<Vec<GrayImage>, CliError> {
    paths
        .iter()
        .map(|p| GrayImage::read_pgm(p).map_err(|e| CliError::Usage(format!("--image {}: {e}", p.display()))))
        .collect()
}

fn serve(config: SessionConfig, listen: &ListenArgs, port: u16) -> Result<(), CliError> {
    let sources = load_images(&listen.images)?;
    println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async move {
        let server = Server::bind(SocketAddr::new(listen.host, port)).await.map_err(|e| {
            if e.is_addr_in_use() {
                CliError::Runtime(format!("port {port} is already in use"))
            } else {
                CliError::Runtime(e.to_string())
            }
        })?;
        let addr = server.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        let engine = Engine::spawn(config, sources)?;
        println!("listening on http://{addr}");
        log::info!("session started on {addr}");
        let result = server
            .run(engine.handle(), async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await;
        engine.shutdown();
        result.map_err(|e: ServiceError| CliError::Runtime(e.to_string()))
    })
}
