use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use radsim_cli::{
    chat_provider, cmd_ingest, cmd_label, cmd_report, cmd_score, embedding_provider, load_config,
    ChatKind, CliError, EmbedderKind, Overrides, RunConfig,
};
use radsim_core::corpus::LabelSource;
use radsim_core::harness::Method;

#[derive(Parser)]
#[command(
    name = "radsim",
    version,
    about = "Label-mediated similarity evaluation for radiology reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "radsim.toml")]
    config: PathBuf,

    /// Overrides the configured split seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Chat provider: mock or http.
    #[arg(long, global = true)]
    provider: Option<ChatKind>,

    /// Embedding provider: hashed, http or file.
    #[arg(long, global = true)]
    embedder: Option<EmbedderKind>,

    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Filter the corpus and split it into two groups.
    Ingest,
    /// Generate label sets for every retained report.
    Label,
    /// Score every cross-group pair.
    Score,
    /// Write the summary table and hexbin figures.
    Report,
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest => {
            let m = cmd_ingest(cfg)?;
            println!(
                "ingest: {} reports, {} retained, {} excluded (no finding only), {} without labels; groups {}x{} = {} pairs",
                m.counts.reports,
                m.counts.retained,
                m.counts.excluded,
                m.counts.missing_labels,
                m.counts.group_a,
                m.counts.group_b,
                m.counts.pairs
            );
        }
        Command::Label => {
            let provider = chat_provider(cfg)?;
            let s = cmd_label(cfg, provider.as_ref())?;
            println!(
                "label: task `{}`, {} reports labeled ({} from cache, {} provider requests)",
                s.record.selected_task.name, s.record.labeled, s.cache_hits, s.provider_requests
            );
        }
        Command::Score => {
            let s = cmd_score(cfg, embedding_provider(cfg)?)?;
            println!(
                "score: {} pairs scored, {} texts embedded",
                s.pairs, s.texts_embedded
            );
        }
        Command::Report => {
            let r = cmd_report(cfg)?;
            println!("report: mean {:?} differences", r.table.mode);
            for method in Method::ALL {
                let cells: Vec<String> = LabelSource::ALL
                    .iter()
                    .filter_map(|s| {
                        r.table
                            .get(method, *s)
                            .map(|c| format!("{s} {:.4}", c.mean_difference))
                    })
                    .collect();
                println!("  {method:<11} {}", cells.join("  "));
            }
            println!(
                "report: {} figures written, {} empty layers",
                r.svgs.len(),
                r.empty_layers.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let overrides = Overrides {
        seed: cli.seed,
        provider: cli.provider,
        embedder: cli.embedder,
        output_dir: cli.output_dir.clone(),
    };
    let result = load_config(&cli.config, &overrides).and_then(|cfg| run(&cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
