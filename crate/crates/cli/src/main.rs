use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridmark::harness::{
    emit_plot_data, export_results, load_thresholds, monte_carlo, presets, read_summary,
    save_thresholds, ExportFormat, MetricsSummary, Scenario, ScenarioConfig,
};
use gridmark::watermark::expected_component;
use gridmark::Error;

/// Dynamic-watermarking experiments on a simulated grid control loop.
#[derive(Debug, Parser)]
#[command(name = "gridmark", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Base seed of the campaign (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for Monte Carlo campaigns.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Named preset; layered under the config file when both are given.
    #[arg(long, global = true)]
    preset: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit detector thresholds on clean runs and write thresholds.json.
    Calibrate { config: Option<PathBuf> },
    /// Single run; writes run.json and plot data.
    Run {
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        run_index: u64,
        /// Thresholds file; calibrated on the fly when absent.
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Monte Carlo campaign; writes results.csv and summary.json.
    Sweep {
        config: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Print a summary.json in readable form.
    Report { results: PathBuf },
    /// List the shipped presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => 2,
                _ => 1,
            })
        }
    }
}

fn load_config(path: Option<&Path>, g: &Global) -> Result<ScenarioConfig, Error> {
    let mut config = match (path, &g.preset) {
        (Some(path), preset) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            match preset {
                Some(name) => {
                    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
                        path: path.display().to_string(),
                        message: e.message().to_string(),
                    })?;
                    table.insert("preset".into(), toml::Value::String(name.clone()));
                    ScenarioConfig::from_toml_str(&table.to_string())?
                }
                None => ScenarioConfig::from_toml_str(&text)?,
            }
        }
        (None, Some(name)) => presets::preset(name).ok_or_else(|| Error::Config {
            path: "--preset".into(),
            message: format!("unknown preset `{name}` (known: {})", presets::PRESETS.join(", ")),
        })?,
        (None, None) => {
            return Err(Error::Config {
                path: "<args>".into(),
                message: "give a config file or --preset".into(),
            })
        }
    };
    if let Some(seed) = g.seed {
        config.base_seed = seed;
    }
    if let Some(dir) = &g.out_dir {
        config.output.dir = dir.clone();
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(config: &ScenarioConfig) -> Result<PathBuf, Error> {
    let dir = config.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn thresholds_for(
    scenario: &Scenario,
    flag: Option<&Path>,
) -> Result<gridmark::detector::Thresholds, Error> {
    match flag.or(scenario.config().output.thresholds.as_deref()) {
        Some(path) => load_thresholds(path),
        None => scenario.calibrate(),
    }
}

fn write_json(value: &gridmark::harness::RunResult, path: &Path) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).expect("serialisable");
    std::fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(cli: Cli) -> Result<(), Error> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                path: "--threads".into(),
                message: e.to_string(),
            })?;
    }
    match &cli.command {
        Command::Calibrate { config } => {
            let scenario = Scenario::new(load_config(config.as_deref(), g)?)?;
            let th = scenario.calibrate()?;
            let path = out_dir(scenario.config())?.join("thresholds.json");
            save_thresholds(&th, &path)?;
            println!(
                "calibrated on {} clean blocks (per-block alpha {:.4}) -> {}",
                th.calibration_blocks,
                th.alpha,
                path.display()
            );
        }
        Command::Run {
            config,
            run_index,
            thresholds,
        } => {
            let scenario = Scenario::new(load_config(config.as_deref(), g)?)?;
            let th = thresholds_for(&scenario, thresholds.as_deref())?;
            let result = scenario.run(*run_index, &th)?;
            let dir = out_dir(scenario.config())?;
            write_json(&result, &dir.join("run.json"))?;

            let art = scenario.simulate_seed(result.seed, true)?;
            let horizon = scenario.config().horizon;
            let channels: Vec<usize> = (0..scenario.model().n_sensors()).collect();
            let templates = channels
                .iter()
                .map(|&ch| expected_component(scenario.model(), &art.key, ch, horizon))
                .collect::<Result<Vec<_>, _>>()?;
            let plot = dir.join("plot.txt");
            emit_plot_data(&art.bundle, &templates, &channels, scenario.config().warm_up, &plot)?;
            println!(
                "run {} (seed {:#018x}): alarm = {}, time to detect = {}, deception RMS = {:.6}",
                result.run_index,
                result.seed,
                result.report.alarm,
                result
                    .report
                    .time_to_detect
                    .map_or("-".to_string(), |t| t.to_string()),
                result.deception_rms
            );
            if result.rejected_writes > 0 {
                println!("authenticated line rejected {} attack writes", result.rejected_writes);
            }
            println!("wrote {} and {}", dir.join("run.json").display(), plot.display());
        }
        Command::Sweep {
            config,
            runs,
            thresholds,
        } => {
            let scenario = Scenario::new(load_config(config.as_deref(), g)?)?;
            let n = runs.unwrap_or(scenario.config().n_runs);
            let th = thresholds_for(&scenario, thresholds.as_deref())?;
            let (results, summary) = monte_carlo(&scenario, n, &th)?;
            let dir = out_dir(scenario.config())?;
            let ch = scenario.config().attack.target_channel;
            export_results(&results, Some(&summary), ch, ExportFormat::Csv, &dir.join("results.csv"))?;
            export_results(&results, Some(&summary), ch, ExportFormat::Json, &dir.join("summary.json"))?;
            print_summary(&summary);
            println!("wrote {}/results.csv and summary.json", dir.display());
        }
        Command::Report { results } => print_summary(&read_summary(results)?),
        Command::Presets => {
            for name in presets::PRESETS {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn print_summary(s: &MetricsSummary) {
    println!("scenario       {}", s.scenario);
    println!("config digest  {}", s.config_digest);
    println!(
        "runs alarmed   {}/{} = {:.4}  (95% CI {:.4} .. {:.4})",
        s.alarms, s.n_runs, s.alarm_rate, s.alarm_interval.0, s.alarm_interval.1
    );
    println!(
        "blocks alarmed {}/{} = {:.4}  (95% CI {:.4} .. {:.4})",
        s.alarmed_blocks,
        s.blocks,
        s.block_alarm_rate,
        s.block_alarm_interval.0,
        s.block_alarm_interval.1
    );
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
    println!(
        "time to detect mean {} / median {} samples",
        opt(s.mean_time_to_detect),
        opt(s.median_time_to_detect)
    );
    println!("deception RMS  {:.6}", s.mean_deception_rms);
    println!(
        "tests fired    gain {}  variance {}  power {}  (runs)",
        s.tests.gain, s.tests.variance, s.tests.power
    );
    if s.rejected_runs > 0 {
        println!("rejected       {} runs hit an authenticated line", s.rejected_runs);
    }
    println!("block alpha    {:.5}", s.thresholds_alpha);
}
