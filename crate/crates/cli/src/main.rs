use clap::Parser;
use contmeas_cli::*;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "contmeas", version, about = "Continuous-measurement dissipation simulator")]
struct Args {
    /// What to run.
    #[arg(value_enum)]
    mode: Mode,
    /// TOML configuration; optional for `verify`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV output path; the manifest is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the trajectory random streams.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    ExitCode::from(execute(&args) as u8)
}

fn execute(args: &Args) -> i32 {
    let text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return EXIT_ERROR;
            }
        },
        None if args.mode == Mode::Verify => String::new(),
        None => {
            eprintln!("error: --config is required for {} mode", args.mode.name());
            return EXIT_ERROR;
        }
    };
    let overrides = Overrides {
        mode: Some(args.mode),
        seed: args.seed,
    };
    let cfg = match parse_config_with(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let env_dir = std::env::var(OUTPUT_DIR_ENV).ok();
    let csv = output_path(&cfg, args.out.as_deref(), env_dir.as_deref());
    match run(&cfg, &csv) {
        Ok(report) => {
            for note in &report.notes {
                eprintln!("warning: {note}");
            }
            eprintln!("wrote {} and {}", report.csv.display(), report.manifest.display());
            match (report.flagged, cfg.mode) {
                (false, _) => EXIT_OK,
                (true, Mode::Verify) => EXIT_ERROR,
                (true, _) => EXIT_FLAGGED,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
