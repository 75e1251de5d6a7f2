use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pronyif::config::Config;
use pronyif::export;
use pronyif::pipeline::{self, normalized_l2_error, ordered_truth};
use pronyif::signalgen::{self, SampledSignal};
use pronyif::Error;

#[derive(Parser)]
#[command(name = "pronyif", version, about = "IF estimation of interfering modes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the configured signal (plus noise) as CSV.
    Generate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run one estimation and write tracks, spectrogram and diagnostics.
    Estimate {
        #[arg(short, long)]
        config: PathBuf,
        /// Signal CSV to analyse instead of synthesizing one.
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(short, long)]
        out_dir: PathBuf,
    },
    /// Run the method × σ sweep and write the error report CSV.
    Sweep {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Draw error against σ from a report CSV.
    Plot {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn create(path: &Path) -> pronyif::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> pronyif::Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn noisy_signal(cfg: &Config) -> pronyif::Result<SampledSignal> {
    let spec = cfg.signal_spec()?;
    let clean = signalgen::synthesize(&spec)?;
    signalgen::add_noise(&clean, cfg.signal.snr_db, cfg.signal.seed)
}

fn generate(config: &Path, out: &Path) -> pronyif::Result<()> {
    let cfg = Config::load(config)?;
    let signal = noisy_signal(&cfg)?;
    write_with(out, |w| export::write_signal_csv(w, &signal))
}

fn estimate(config: &Path, input: Option<&Path>, out_dir: &Path) -> pronyif::Result<()> {
    let cfg = Config::load(config)?;
    let spec = cfg.signal_spec()?;
    let pcfg = cfg.pipeline_config()?;
    let signal = match input {
        Some(p) => {
            let r = BufReader::new(File::open(p)?);
            let n = spec.sample_count as f64;
            export::read_signal_csv(r, n)?
        }
        None => noisy_signal(&cfg)?,
    };
    let order = spec.mode_count();
    let (front, est) = pipeline::run_algorithm1(&signal, order, &pcfg)?;

    fs::create_dir_all(out_dir)?;
    let at = |name: &str| out_dir.join(name);
    write_with(&at("spectrogram.csv"), |w| export::write_spectrogram_csv(w, &front.spectrogram))?;
    export::write_spectrogram_png(&at("spectrogram.png"), &front.spectrogram)?;
    write_with(&at("raw_tracks.csv"), |w| export::write_raw_tracks_csv(w, &est))?;
    write_with(&at("refined.csv"), |w| export::write_refined_csv(w, &est))?;
    write_with(&at("cadzow.csv"), |w| export::write_cadzow_csv(w, &front.diagnostics, order))?;
    if pcfg.method.uses_spline() {
        write_with(&at("point_sets.csv"), |w| export::write_point_sets_csv(w, &est))?;
        write_with(&at("spline_knots.csv"), |w| export::write_spline_knots_csv(w, &est))?;
        write_with(&at("cells.csv"), |w| export::write_cells_csv(w, &est))?;
    }

    if signal.len() == spec.sample_count {
        let truth = ordered_truth(&spec, est.margin);
        for (m, t) in est.modes.iter().zip(&truth) {
            match &m.failure {
                Some(f) => println!("mode {}: failed: {f}", m.track.mode_index),
                None => {
                    let e = normalized_l2_error(&m.estimate, t, est.margin)?;
                    println!("mode {}: {} E = {e:.6}", m.track.mode_index, est.method);
                }
            }
        }
    }
    if let Some(f) = est.modes.iter().find_map(|m| m.failure.clone()) {
        return Err(Error::Numerical(f));
    }
    Ok(())
}

fn sweep(config: &Path, out: &Path) -> pronyif::Result<()> {
    let cfg = Config::load(config)?;
    let spec = cfg.signal_spec()?;
    let sw = cfg.sweep_spec()?;
    let report = pipeline::sweep(&spec, &sw)?;
    write_with(out, |w| export::write_error_report_csv(w, &report))?;
    let failures = report.failures();
    if failures > 0 {
        eprintln!("{failures} of {} cells failed", report.records.len());
    }
    Ok(())
}

fn plot(input: &Path, out: &Path) -> pronyif::Result<()> {
    let report = export::read_error_report_csv(BufReader::new(File::open(input)?))?;
    let svg = export::error_plot_svg(&report);
    write_with(out, |w| w.write_all(svg.as_bytes()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { config, out } => generate(config, out),
        Command::Estimate { config, input, out_dir } => estimate(config, input.as_deref(), out_dir),
        Command::Sweep { config, out } => sweep(config, out),
        Command::Plot { input, out } => plot(input, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
