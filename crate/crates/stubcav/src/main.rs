use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stubcav::commands::{self, Context, FitArgs, SweepOverrides};
use stubcav::config::{parse_config, RunConfig, SweepKind};
use stubcav::AppError;

#[derive(Parser, Debug)]
#[command(name = "stubcav", version, about = "Superconducting stub cavity with a levitated magnet")]
struct Cli {
    /// Configuration file; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory shared by all stages.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides noise.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Temperature,
    Ramp,
    Switch,
}

impl From<KindArg> for SweepKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Temperature => SweepKind::Temperature,
            KindArg::Ramp => SweepKind::Ramp,
            KindArg::Switch => SweepKind::Switch,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve the bare cavity mode.
    ModeSolve {
        /// Also write the field components of every cell.
        #[arg(long)]
        fields: bool,
    },
    /// Frequency shift of the magnet over the stub top.
    ShiftMap,
    /// Tune thermal resistance and critical field against the targets.
    Calibrate,
    /// Replay temperature sweeps, power ramps or power switching.
    Sweep {
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Drive powers for temperature sweeps, dBm.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        powers: Option<Vec<f64>>,
        /// Magnet height above the stub top, m.
        #[arg(long)]
        magnet_z: Option<f64>,
        /// Write a synthetic S21 trace for every record.
        #[arg(long)]
        traces: bool,
    },
    /// Fit resonances to S21 traces.
    Fit {
        /// Trace files; defaults to every file in <out>/traces.
        #[arg(long = "trace")]
        traces: Vec<PathBuf>,
        #[arg(long)]
        background: bool,
        #[arg(long)]
        magnitude_only: bool,
    },
    /// Convert measured frequencies to magnet heights.
    InvertHeight {
        /// Measured frequencies, Hz; defaults to the fitted frequencies.
        #[arg(long, value_delimiter = ',')]
        freqs: Option<Vec<f64>>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, AppError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| AppError::Io(format!("{}: {e}", p.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.noise.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), AppError> {
    let cfg = load_config(&cli)?;
    let ctx = Context::new(cfg, &cli.out, cli.force);
    match cli.cmd {
        Cmd::ModeSolve { fields } => {
            let m = commands::cmd_mode_solve(&ctx, fields)?;
            println!("f0_hz={} geometry_factor_ohm={}", m.f0, m.geometry_factor);
        }
        Cmd::ShiftMap => {
            let map = commands::cmd_shift_map(&ctx)?;
            let feasible = map.delta_f.iter().filter(|v| v.is_some()).count();
            println!("cells={} feasible={feasible}", map.delta_f.len());
        }
        Cmd::Calibrate => {
            let c = commands::cmd_calibrate(&ctx)?;
            println!("r_th_k_per_w={} b_c0_t={}", c.r_th, c.b_c0);
        }
        Cmd::Sweep { kind, powers, magnet_z, traces } => {
            let ov = SweepOverrides { kind: kind.map(Into::into), powers, magnet_z, traces };
            for (name, records) in commands::cmd_sweep(&ctx, &ov)? {
                println!("run={name} records={}", records.len());
            }
        }
        Cmd::Fit { traces, background, magnitude_only } => {
            let n = commands::cmd_fit(&ctx, &FitArgs { traces, background, magnitude_only })?;
            println!("fitted={n}");
        }
        Cmd::InvertHeight { freqs } => {
            let zs = commands::cmd_invert_height(&ctx, freqs.as_deref())?;
            let ok = zs.iter().filter(|z| z.is_ok()).count();
            println!("inverted={ok} failed={}", zs.len() - ok);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
