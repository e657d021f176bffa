use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use phonfield::field::Grid;
use phonfield::io::{
    self, ArchiveMetadata, FieldKind, Format, ResultArchive, RunManifest, SweepArchive,
};
use phonfield::protocol::{BlockKind, ExperimentScenario, Simulator};
use phonfield::sweep::{run_sweep, SweepAxis, SweepSpec};
use phonfield::{presets, Error};

/// Dual-layer neural field model of phonetic accommodation.
#[derive(Parser)]
#[command(name = "phonfield", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one baseline/shadowing/post experiment and write the peak read-out.
    Simulate(SimulateArgs),
    /// Run a parameter sweep.
    Sweep(SweepArgs),
    /// Write field snapshots in long `t,x,value` form.
    ExportTrajectory(ExportArgs),
    /// Parse and check a scenario without running it.
    Validate(ValidateArgs),
    /// Print the built-in presets as config documents.
    Presets(PresetsArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Built-in preset (strut or bath).
    #[arg(long)]
    preset: Option<String>,
    /// TOML config document.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Default)]
struct Overrides {
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Noise strength; 0 integrates deterministically.
    #[arg(long)]
    q: Option<f64>,
    /// Step size in ms.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of grid points over the same interval.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Keep every n-th step as a frame (default keeps a 2 ms interval).
    #[arg(long)]
    frame_stride: Option<usize>,
}

#[derive(Args)]
struct Output {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; inferred from the --out extension when omitted.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Leave the creation time out of the metadata.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichArg {
    Planning,
    Memory,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    output: Output,
    /// Include trajectory frames in JSON output.
    #[arg(long)]
    keep_frames: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    #[command(flatten)]
    output: Output,
    /// Dotted parameter path, e.g. memory.kernel.c_inhibit.
    #[arg(long)]
    parameter: Option<String>,
    /// Comma-separated values for --parameter.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Option<Vec<f64>>,
    /// Optional second parameter path.
    #[arg(long, requires = "values2")]
    parameter2: Option<String>,
    /// Comma-separated values for --parameter2.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "parameter2")]
    values2: Option<Vec<f64>>,
    /// Seeds as a list (1,2,3) or a half-open range (0..100).
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only csv is supported.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Field to export.
    #[arg(long, value_enum, default_value = "planning")]
    which: WhichArg,
    /// Single block to export; all blocks when omitted.
    #[arg(long)]
    block: Option<BlockKind>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct PresetsArgs {
    /// Print only this preset.
    name: Option<String>,
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Run(e)
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Sweep(a) => sweep(a),
        Command::ExportTrajectory(a) => export(a),
        Command::Validate(a) => validate(a),
        Command::Presets(a) => list_presets(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

struct Loaded {
    scenario: ExperimentScenario,
    sweep: Option<SweepSpec>,
    metadata: ArchiveMetadata,
}

fn load(source: &Source, overrides: &Overrides) -> CliResult<Loaded> {
    let (base, sweep, label) = match (&source.preset, &source.config) {
        (Some(name), None) => (presets::by_name(name)?, None, format!("preset:{name}")),
        (None, Some(path)) => {
            let (s, sw) = io::read_config(path).map_err(|e| match e {
                // an unreadable config is a usage problem, not a failed run
                Error::Io { .. } => Failure::Usage(e.to_string()),
                e => e.into(),
            })?;
            (s, sw, format!("config:{}", path.display()))
        }
        _ => unreachable!("clap enforces exactly one source"),
    };
    let (scenario, applied) = apply_overrides(&base, overrides)?;
    let sweep = sweep
        .map(|spec| -> CliResult<SweepSpec> {
            let spec = SweepSpec {
                base: scenario.clone(),
                ..spec
            };
            spec.validate()?;
            Ok(spec)
        })
        .transpose()?;
    let mut metadata = ArchiveMetadata::new(label, &scenario);
    metadata.overrides = applied;
    Ok(Loaded {
        scenario,
        sweep,
        metadata,
    })
}

fn apply_overrides(
    base: &ExperimentScenario,
    o: &Overrides,
) -> CliResult<(ExperimentScenario, Vec<String>)> {
    let mut s = base.clone();
    let mut applied = Vec::new();
    if let Some(seed) = o.seed {
        s.noise.seed = seed;
        applied.push(format!("seed={seed}"));
    }
    if let Some(q) = o.q {
        s.noise.q = q;
        applied.push(format!("q={q}"));
    }
    if let Some(dt) = o.dt {
        let rescale = o.frame_stride.is_none()
            && s.frame_stride == ExperimentScenario::default_frame_stride(s.dt);
        s.dt = dt;
        applied.push(format!("dt={dt}"));
        if rescale && dt.is_finite() && dt > 0.0 {
            s.frame_stride = ExperimentScenario::default_frame_stride(dt);
            applied.push(format!("frame_stride={}", s.frame_stride));
        }
    }
    if let Some(stride) = o.frame_stride {
        s.frame_stride = stride;
        applied.push(format!("frame_stride={stride}"));
    }
    if let Some(n) = o.grid_points {
        s.grid = Grid::new(s.grid.lower(), s.grid.upper(), n)?;
        applied.push(format!("grid_points={n}"));
    }
    s.validate()?;
    Ok((s, applied))
}

fn stamp(metadata: &mut ArchiveMetadata, output: &Output) {
    if !output.no_timestamp {
        metadata.created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs());
    }
}

fn resolve_format(output: &Output) -> Format {
    match output.format {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Json) => Format::Json,
        None => match output.out.as_deref().and_then(Path::extension) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        },
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => {
            io::write_file(path, bytes)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .and_then(|_| stdout.flush())
                .map_err(|source| {
                    Failure::Run(Error::Io {
                        path: PathBuf::from("<stdout>"),
                        source,
                    })
                })?;
        }
    }
    Ok(())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn emit_manifest(out: Option<&Path>, manifest: &RunManifest) -> CliResult<()> {
    if let Some(out) = out {
        let mut bytes = Vec::new();
        io::write_json(manifest, &mut bytes)?;
        emit(Some(&manifest_path(out)), &bytes)?;
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    let Loaded {
        scenario,
        mut metadata,
        ..
    } = load(&args.source, &args.overrides)?;
    stamp(&mut metadata, &args.output);
    let result = Simulator::new(scenario.clone())?.run_experiment(args.keep_frames)?;
    let out = args.output.out.as_deref();
    let mut bytes = Vec::new();
    match resolve_format(&args.output) {
        Format::Csv => {
            io::write_experiment_csv(&result, &mut bytes)?;
            emit(out, &bytes)?;
            emit_manifest(out, &RunManifest::new(metadata, &scenario, None))?;
        }
        Format::Json => {
            io::write_json(&ResultArchive::new(metadata, &scenario, &result), &mut bytes)?;
            emit(out, &bytes)?;
        }
    }
    Ok(())
}

fn parse_seeds(text: &str) -> CliResult<Vec<u64>> {
    let bad = || Failure::Usage(format!("invalid --seeds `{text}`: expected `a..b` or a list"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b <= a {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn sweep(args: SweepArgs) -> CliResult<()> {
    let Loaded {
        scenario,
        sweep,
        mut metadata,
    } = load(&args.source, &args.overrides)?;
    stamp(&mut metadata, &args.output);
    let mut spec = match (args.parameter, args.values, sweep) {
        (Some(p), Some(v), _) => SweepSpec::new(scenario.clone(), &p, v),
        (Some(_), None, _) | (None, Some(_), _) => {
            return Err(Failure::Usage(
                "--parameter and --values must be given together".into(),
            ))
        }
        (None, None, Some(spec)) => spec,
        (None, None, None) => {
            return Err(Failure::Usage(
                "no sweep: pass --parameter/--values or a config with a [sweep] section".into(),
            ))
        }
    };
    if let (Some(p), Some(v)) = (args.parameter2, args.values2) {
        spec.axes.truncate(1);
        spec.axes.push(SweepAxis {
            parameter: p,
            values: v,
        });
    }
    if let Some(seeds) = args.seeds.as_deref() {
        spec.seeds = parse_seeds(seeds)?;
    }
    spec.validate()?;
    if args.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let result = run_sweep(&spec, args.jobs)?;
    let out = args.output.out.as_deref();
    let mut bytes = Vec::new();
    match resolve_format(&args.output) {
        Format::Csv => {
            io::write_sweep_csv(&result, &mut bytes)?;
            emit(out, &bytes)?;
            emit_manifest(out, &RunManifest::new(metadata, &scenario, Some(&spec)))?;
        }
        Format::Json => {
            io::write_json(&SweepArchive::new(metadata, &spec, &result), &mut bytes)?;
            emit(out, &bytes)?;
        }
    }
    let failed = result.rows.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        return Err(Failure::Run(Error::Config(format!(
            "{failed} of {} sweep rows failed; see the error column",
            result.rows.len()
        ))));
    }
    Ok(())
}

fn export(args: ExportArgs) -> CliResult<()> {
    if let FormatArg::Json = args.format {
        return Err(Failure::Usage(
            "trajectory export supports only --format csv".into(),
        ));
    }
    let Loaded { scenario, .. } = load(&args.source, &args.overrides)?;
    let which = match args.which {
        WhichArg::Planning => FieldKind::Planning,
        WhichArg::Memory => FieldKind::Memory,
    };
    let result = Simulator::new(scenario.clone())?.run_experiment(true)?;
    let mut bytes = Vec::new();
    match args.block {
        Some(kind) => {
            let traj = result
                .trial(kind)
                .trajectory
                .as_ref()
                .ok_or(Error::EmptyTrajectory)?;
            io::export_trajectory(traj, which, &scenario.grid, &mut bytes)?;
        }
        None => io::export_experiment_trajectories(&result, which, &scenario.grid, &mut bytes)?,
    }
    emit(args.out.as_deref(), &bytes)
}

fn validate(args: ValidateArgs) -> CliResult<()> {
    let Loaded {
        scenario, sweep, ..
    } = load(&args.source, &args.overrides)?;
    println!(
        "ok: scenario `{}` ({} points, dt {}, {} ms blocks), hash {}",
        scenario.name,
        scenario.grid.len(),
        scenario.dt,
        scenario.block_duration,
        io::config_hash(&scenario)
    );
    if let Some(spec) = sweep {
        let rows = spec.combinations().len() * spec.seeds.len().max(1);
        println!("sweep: {rows} rows");
    }
    Ok(())
}

fn list_presets(args: PresetsArgs) -> CliResult<()> {
    let names: Vec<&str> = match args.name.as_deref() {
        Some(name) => {
            presets::by_name(name)?;
            vec![name]
        }
        None => presets::NAMES.to_vec(),
    };
    for (i, name) in names.iter().enumerate() {
        if i > 0 {
            println!();
        }
        println!("# preset: {name}");
        print!("{}", io::write_config(&presets::by_name(name)?, None));
    }
    Ok(())
}
