use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use tonegap::harness::{
    self, capture_gaps, parse_range, preset, read_capture, run_experiment_with_bank, smoothing_csv, sweep_smoothing,
    write_capture, ExperimentConfig, Pipeline, Scheme,
};
use tonegap::nn::{load_bank, recover_gaps, recover_gaps_unscheduled, save_bank, schedule_gaps, train_bank, NnBank, Precision, TrainingConfig};
use tonegap::reconstruct::two_way;
use tonegap::sim::{apply_gap_map, derive_seed, sample_sv_channel, synthesize_iq, Gap, GapMap, IqCapture};

#[derive(Parser)]
#[command(name = "tonegap", version, about = "Phase-based ranging with missing or interfered tones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Gap preset gap1..gap6 (or none).
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated schemes: reference, zero_pad, mps, wps, anm, nn, nn_unscheduled.
    #[arg(long)]
    mode: Option<String>,
    /// Model bank file for the nn schemes.
    #[arg(long)]
    bank: Option<PathBuf>,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.preset {
            cfg.preset = Some(p.clone());
        }
        if let Some(m) = &self.mode {
            cfg.schemes = Scheme::parse_list(m)?;
        }
        if let Some(b) = &self.bank {
            cfg.bank_path = Some(b.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Simulates one realization and writes it as an IQ capture file.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Realization index within the seed's stream.
        #[arg(long, default_value_t = 0)]
        realization: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimates the range from a capture file.
    Estimate {
        capture: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Trains a model bank.
    TrainNn {
        /// Training config (TOML); defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        max_width: Option<usize>,
        #[arg(long)]
        train_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_enum, default_value = "f32")]
        precision: PrecisionArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the recovery order for a gap configuration.
    Schedule {
        #[arg(long)]
        preset: Option<String>,
        /// Comma-separated blocks `a:b`.
        #[arg(long)]
        gaps: Option<String>,
        #[arg(long, default_value_t = 80)]
        tones: usize,
    },
    /// Fills the gaps of a capture and writes the completed two-way response
    /// (as initiator IQ, with unit reflector IQ).
    Recover {
        capture: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo benchmark writing runs, summary and CDF files.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Median error against the smoothing fraction on gap-free channels.
    SweepSmoothing {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        realizations: Option<usize>,
        /// Comma-separated fractions; the config list otherwise.
        #[arg(long)]
        fractions: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn bank_for(cfg: &ExperimentConfig) -> Result<Option<NnBank>> {
    Ok(harness::load_config_bank(cfg)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, realization, out } => {
            let cfg = common.experiment()?;
            let seed = derive_seed(cfg.seed, realization);
            let channel = sample_sv_channel(&cfg.channel, derive_seed(seed, 0))?;
            let clean = synthesize_iq(&channel, &cfg.grid, cfg.snr_db, derive_seed(seed, 1))?;
            let gapped = apply_gap_map(&clean, &cfg.gap_map()?, cfg.sir_db, derive_seed(seed, 2))?;
            write_capture(&out, &gapped)?;
            println!(
                "wrote {} ({} paths, true distance {} m, {} of {} tones available)",
                out.display(),
                channel.num_paths(),
                cfg.channel.distance_m(),
                gapped.num_available(),
                cfg.grid.num_tones
            );
        }
        Command::Estimate { capture, mut common } => {
            if common.mode.is_none() {
                common.mode = Some("mps,wps".into());
            }
            let cfg = common.experiment()?;
            read_capture(&capture).with_context(|| format!("reading {}", capture.display()))?;
            let bank = bank_for(&cfg)?;
            let p = Pipeline {
                music: &cfg.music,
                anm: &cfg.anm,
                bank: bank.as_ref(),
            };
            for &scheme in &cfg.schemes {
                match harness::process_capture_file(&capture, scheme, &p) {
                    Ok(est) => {
                        let bands: Vec<String> = est
                            .bands
                            .iter()
                            .map(|b| format!("{}..{} L={} d={}", b.band.first, b.band.last, b.smoothing, b.signal_dim))
                            .collect();
                        println!(
                            "{:<15} {:.4} m  tau0 {:.3} ns  bands [{}]",
                            scheme.name(),
                            est.distance_m,
                            est.tau0_s * 1e9,
                            bands.join(", ")
                        );
                    }
                    Err(e) => println!("{:<15} failed: {e}", scheme.name()),
                }
            }
        }
        Command::TrainNn {
            config,
            seed,
            max_width,
            train_size,
            epochs,
            precision,
            out,
        } => {
            let mut cfg: TrainingConfig = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => TrainingConfig::default(),
            };
            if let Some(w) = max_width {
                cfg.max_width = w;
            }
            if let Some(n) = train_size {
                cfg.train_size = n;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            let (bank, reports) = train_bank(&cfg, seed)?;
            for r in &reports {
                println!(
                    "{:<8} W={:<2} final loss {:.5}  validation nmse {:.5}",
                    r.kind.name(),
                    r.width,
                    r.epoch_losses.last().copied().unwrap_or(f64::NAN),
                    r.validation_nmse
                );
            }
            let precision = match precision {
                PrecisionArg::F32 => Precision::F32,
                PrecisionArg::F64 => Precision::F64,
            };
            save_bank(&out, &bank, precision)?;
            println!("wrote {} ({} parameters)", out.display(), bank.param_count());
        }
        Command::Schedule { preset: name, gaps, tones } => {
            let mut list: Vec<Gap> = match &name {
                Some(p) => preset(p)?.gaps().to_vec(),
                None => Vec::new(),
            };
            if let Some(g) = &gaps {
                for part in g.split(',').filter(|s| !s.trim().is_empty()) {
                    let (a, b) = parse_range(part)?;
                    list.push(Gap::missing(a, b));
                }
            }
            if list.is_empty() {
                bail!("give --preset or --gaps");
            }
            // Validates overlaps and bounds; the scheduler keeps the given order.
            GapMap::new(list.clone())?.validate(tones)?;
            let avail: Vec<bool> = (0..tones).map(|k| !list.iter().any(|g| g.contains(k))).collect();
            let s = schedule_gaps(&list, &avail);
            for (i, g) in s.order.iter().enumerate() {
                let flag = if g.inputs_complete { "" } else { "  (zero-padded inputs)" };
                println!("{:>2}. {}:{}{}", i + 1, g.gap.start, g.gap.end, flag);
            }
            println!("rounds: {}", s.rounds);
        }
        Command::Recover { capture, mut common, out } => {
            if common.mode.is_none() {
                common.mode = Some("nn".into());
            }
            let cfg = common.experiment()?;
            let [scheme] = cfg.schemes[..] else {
                bail!("recover takes exactly one mode");
            };
            let cap = read_capture(&capture)?;
            let resp = two_way(&cap)?;
            let gaps = capture_gaps(&cap);
            let filled = match scheme {
                Scheme::Anm => tonegap::anm::complete_response(&resp, &cfg.anm)?.0,
                Scheme::Nn | Scheme::NnUnscheduled => {
                    let bank = load_bank(cfg.bank_path.as_deref().context("nn recovery needs --bank")?)?;
                    let rec = if scheme == Scheme::Nn {
                        recover_gaps(&resp, &gaps, &bank)?
                    } else {
                        recover_gaps_unscheduled(&resp, &gaps, &bank)?
                    };
                    println!("{} network flops", rec.flops);
                    rec.response
                }
                other => bail!("{} does not recover gaps; use anm, nn or nn_unscheduled", other.name()),
            };
            let k = filled.grid.num_tones;
            let completed = IqCapture {
                grid: filled.grid,
                iq_initiator: filled.h_sq.clone(),
                iq_reflector: vec![Complex64::new(1.0, 0.0); k],
                available: filled.available.clone(),
                interfered: vec![false; k],
            };
            write_capture(&out, &completed)?;
            println!("wrote {} ({} tones filled)", out.display(), gaps.num_tones());
        }
        Command::Benchmark { common, realizations, out } => {
            let mut cfg = common.experiment()?;
            if let Some(n) = realizations {
                cfg.realizations = n;
            }
            let bank = bank_for(&cfg)?;
            let sweep = if cfg.rician_sweep_db.is_empty() {
                vec![None]
            } else {
                cfg.rician_sweep_db.iter().map(|&r| Some(r)).collect()
            };
            for rician in sweep {
                let mut run_cfg = cfg.clone();
                let prefix = match rician {
                    Some(r) => {
                        run_cfg.channel.rician_db = r;
                        format!("rician_{r}_")
                    }
                    None => String::new(),
                };
                let result = run_experiment_with_bank(&run_cfg, bank.as_ref())?;
                result.write_dir(&out, &prefix)?;
                println!("rician {} dB, {} realizations", run_cfg.channel.rician_db, run_cfg.realizations);
                print!("{}", result.report.table());
            }
            println!("wrote {}", out.display());
        }
        Command::SweepSmoothing {
            common,
            realizations,
            fractions,
            out,
        } => {
            let mut cfg = common.experiment()?;
            if let Some(n) = realizations {
                cfg.realizations = n;
            }
            let fractions: Vec<f64> = match fractions {
                Some(s) => s
                    .split(',')
                    .map(|f| f.trim().parse::<f64>().with_context(|| format!("bad fraction `{f}`")))
                    .collect::<Result<_>>()?,
                None => cfg.smoothing_fractions.clone(),
            };
            let rows = sweep_smoothing(&cfg, &fractions)?;
            println!("{:>5} {:>4} {:>12} {:>10}", "F", "L", "median_cm", "rmse_cm");
            for r in &rows {
                println!(
                    "{:>5} {:>4} {:>12.2} {:>10.2}",
                    r.fraction,
                    r.smoothing,
                    100.0 * r.metrics.median_abs_m,
                    100.0 * r.metrics.rmse_m
                );
            }
            if let Some(dir) = out {
                write_file(&dir, "smoothing.csv", &smoothing_csv(&rows))?;
            }
        }
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}
