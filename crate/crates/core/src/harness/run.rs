use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::capture::{capture_gaps, read_capture};
use super::config::{ExperimentConfig, Scheme};
use super::metrics::{abs_error_cdf, MetricsReport, SchemeMetrics};
use crate::anm::{complete_response, AnmConfig};
use crate::error::{Error, Result};
use crate::music::{estimate_from_response, EstimatorMode, MusicConfig, RangeEstimate};
use crate::nn::{input_layout, load_bank, recover_gaps, recover_gaps_unscheduled, ModelKind, NnBank};
use crate::reconstruct::{two_way, TwoWayResponse};
use crate::sim::{apply_gap_map, derive_seed, sample_sv_channel, synthesize_iq, GapMap, SPEED_OF_LIGHT};

/// Everything a scheme needs besides the data.
#[derive(Clone, Copy, Debug)]
pub struct Pipeline<'a> {
    pub music: &'a MusicConfig,
    pub anm: &'a AnmConfig,
    pub bank: Option<&'a NnBank>,
}

impl Pipeline<'_> {
    fn bank(&self) -> Result<&NnBank> {
        self.bank
            .ok_or_else(|| Error::InvalidParameter("the nn schemes need a model bank (bank_path)".into()))
    }
}

/// Checks up front that every gap has a layout and a model of its width.
pub fn check_bank_covers(bank: &NnBank, gaps: &GapMap, num_tones: usize) -> Result<()> {
    for g in gaps.gaps() {
        let unrecoverable = |reason: String| Error::Unrecoverable {
            start: g.start,
            width: g.width(),
            reason,
        };
        let kind = match input_layout(g, num_tones) {
            Some(crate::nn::InputLayout::Interior { .. }) => ModelKind::Interior,
            Some(_) => ModelKind::Edge,
            None => return Err(unrecoverable("not enough tones beside it".into())),
        };
        if bank.model(kind, g.width()).is_none() {
            return Err(unrecoverable(format!("bank has no {} model of that width", kind.name())));
        }
    }
    Ok(())
}

/// Range estimate of one scheme. `response` holds the gapped two-way
/// response; `reference` is only read by [`Scheme::Reference`].
pub fn estimate_scheme(
    scheme: Scheme,
    response: &TwoWayResponse,
    gaps: &GapMap,
    p: &Pipeline,
) -> Result<RangeEstimate> {
    let full = |r: &TwoWayResponse| estimate_from_response(r, EstimatorMode::Full, p.music);
    match scheme {
        Scheme::Reference => full(response),
        Scheme::ZeroPad => estimate_from_response(response, EstimatorMode::ZeroPad, p.music),
        Scheme::Mps => estimate_from_response(response, EstimatorMode::Mps, p.music),
        Scheme::Wps => estimate_from_response(response, EstimatorMode::Wps, p.music),
        Scheme::Anm => {
            if response.is_complete() {
                return full(response);
            }
            full(&complete_response(response, p.anm)?.0)
        }
        Scheme::Nn => full(&recover_gaps(response, gaps, p.bank()?)?.response),
        Scheme::NnUnscheduled => full(&recover_gaps_unscheduled(response, gaps, p.bank()?)?.response),
    }
}

/// One row of the per-run CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub scheme: Scheme,
    pub realization: usize,
    pub truth_m: f64,
    /// `None` when the scheme failed on this realization.
    pub estimate_m: Option<f64>,
}

impl RunRecord {
    pub fn error_m(&self) -> Option<f64> {
        self.estimate_m.map(|e| e - self.truth_m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub report: MetricsReport,
}

impl ExperimentResult {
    pub fn errors(&self, scheme: Scheme) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.scheme == scheme)
            .filter_map(RunRecord::error_m)
            .collect()
    }

    /// `mode,realization,truth_m,estimate_m,error_m`; failed runs leave the
    /// last two fields empty.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("mode,realization,truth_m,estimate_m,error_m\n");
        for r in &self.records {
            match (r.estimate_m, r.error_m()) {
                (Some(est), Some(err)) => {
                    writeln!(out, "{},{},{},{},{}", r.scheme.name(), r.realization, r.truth_m, est, err)
                }
                _ => writeln!(out, "{},{},{},,", r.scheme.name(), r.realization, r.truth_m),
            }
            .unwrap();
        }
        out
    }

    /// `abs_error_m,cdf` for one scheme.
    pub fn cdf_csv(&self, scheme: Scheme) -> String {
        let mut out = String::from("abs_error_m,cdf\n");
        for (e, f) in abs_error_cdf(&self.errors(scheme)) {
            writeln!(out, "{e},{f}").unwrap();
        }
        out
    }

    /// Writes `runs.csv`, `summary.txt` and one `cdf_<scheme>.csv` per scheme.
    pub fn write_dir(&self, dir: impl AsRef<Path>, prefix: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{prefix}runs.csv")), self.runs_csv())?;
        std::fs::write(dir.join(format!("{prefix}summary.txt")), self.report.table())?;
        for m in &self.report.schemes {
            std::fs::write(dir.join(format!("{prefix}cdf_{}.csv", m.scheme.name())), self.cdf_csv(m.scheme))?;
        }
        Ok(())
    }
}

/// Loads the configured bank when a scheme needs one.
pub fn load_config_bank(cfg: &ExperimentConfig) -> Result<Option<NnBank>> {
    if !cfg.schemes.iter().any(|s| s.needs_bank()) {
        return Ok(None);
    }
    let path = cfg
        .bank_path
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("the nn schemes need bank_path".into()))?;
    load_bank(path)
        .map(Some)
        .map_err(|e| Error::Io(format!("loading model bank {}: {e}", path.display())))
}

/// Monte-Carlo run, loading the bank from `cfg.bank_path` if needed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let bank = load_config_bank(cfg)?;
    run_experiment_with_bank(cfg, bank.as_ref())
}

/// Monte-Carlo run. Realization r draws its channel, noise and interference
/// from streams 0, 1 and 2 of `derive_seed(seed, r)`, so results do not
/// depend on thread scheduling.
pub fn run_experiment_with_bank(cfg: &ExperimentConfig, bank: Option<&NnBank>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let gaps = cfg.gap_map()?;
    if cfg.schemes.iter().any(|s| s.needs_bank()) {
        let bank = bank.ok_or_else(|| Error::InvalidParameter("the nn schemes need a model bank".into()))?;
        check_bank_covers(bank, &gaps, cfg.grid.num_tones)?;
    }
    let pipeline = Pipeline {
        music: &cfg.music,
        anm: &cfg.anm,
        bank,
    };

    let per_realization: Vec<Vec<RunRecord>> = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| realization(cfg, &gaps, &pipeline, r))
        .collect::<Result<_>>()?;
    let records: Vec<RunRecord> = per_realization.into_iter().flatten().collect();

    let schemes = cfg
        .schemes
        .iter()
        .map(|&s| {
            let errors: Vec<f64> = records.iter().filter(|r| r.scheme == s).filter_map(RunRecord::error_m).collect();
            let failures = records.iter().filter(|r| r.scheme == s && r.estimate_m.is_none()).count();
            SchemeMetrics::from_errors(s, &errors, failures)
        })
        .collect();
    Ok(ExperimentResult {
        records,
        report: MetricsReport { schemes },
    })
}

fn realization(cfg: &ExperimentConfig, gaps: &GapMap, p: &Pipeline, r: usize) -> Result<Vec<RunRecord>> {
    let seed = derive_seed(cfg.seed, r as u64);
    let channel = sample_sv_channel(&cfg.channel, derive_seed(seed, 0))?;
    let clean = synthesize_iq(&channel, &cfg.grid, cfg.snr_db, derive_seed(seed, 1))?;
    let gapped = apply_gap_map(&clean, gaps, cfg.sir_db, derive_seed(seed, 2))?;
    let (clean, gapped) = (two_way(&clean)?, two_way(&gapped)?);
    let truth_m = channel.los_delay() * SPEED_OF_LIGHT;
    Ok(cfg
        .schemes
        .iter()
        .map(|&scheme| {
            let input = if scheme == Scheme::Reference { &clean } else { &gapped };
            // Per-realization estimator failures are counted, not fatal.
            let estimate_m = estimate_scheme(scheme, input, gaps, p).ok().map(|e| e.distance_m);
            RunRecord {
                scheme,
                realization: r,
                truth_m,
                estimate_m,
            }
        })
        .collect())
}

/// One row of the smoothing-factor table.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothingRow {
    pub fraction: f64,
    pub smoothing: usize,
    pub metrics: SchemeMetrics,
}

/// L = ⌊F·K⌋ + 1 for a smoothing fraction F.
pub fn smoothing_for_fraction(fraction: f64, num_tones: usize) -> usize {
    (fraction * num_tones as f64 + 1e-9).floor() as usize + 1
}

/// Reference-scheme runs with the smoothing factor forced per fraction.
/// Gaps in the config are ignored.
pub fn sweep_smoothing(cfg: &ExperimentConfig, fractions: &[f64]) -> Result<Vec<SmoothingRow>> {
    let k = cfg.grid.num_tones;
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidParameter(format!("smoothing fraction {f} outside (0, 1)")));
            }
            let l = smoothing_for_fraction(f, k);
            if l >= k {
                return Err(Error::InvalidParameter(format!("fraction {f} gives L = {l} for {k} tones")));
            }
            let mut run_cfg = cfg.clone();
            run_cfg.schemes = vec![Scheme::Reference];
            run_cfg.preset = None;
            run_cfg.missing.clear();
            run_cfg.interfered.clear();
            run_cfg.music.smoothing_override = Some(l);
            let result = run_experiment_with_bank(&run_cfg, None)?;
            Ok(SmoothingRow {
                fraction: f,
                smoothing: l,
                metrics: result.report.schemes[0].clone(),
            })
        })
        .collect()
}

/// `fraction,L,median_abs_m,rmse_m,failures`.
pub fn smoothing_csv(rows: &[SmoothingRow]) -> String {
    let mut out = String::from("fraction,L,median_abs_m,rmse_m,failures\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.fraction, r.smoothing, r.metrics.median_abs_m, r.metrics.rmse_m, r.metrics.failures
        )
        .unwrap();
    }
    out
}

/// Runs one scheme on a capture file. Gaps come from the file's mask.
pub fn process_capture_file(path: impl AsRef<Path>, scheme: Scheme, p: &Pipeline) -> Result<RangeEstimate> {
    let capture = read_capture(path)?;
    let response = two_way(&capture)?;
    if !response.available.iter().any(|&a| a) {
        return Err(Error::NoData);
    }
    let gaps = capture_gaps(&capture);
    if scheme.needs_bank() {
        check_bank_covers(p.bank()?, &gaps, capture.grid.num_tones)?;
    }
    estimate_scheme(scheme, &response, &gaps, p)
}
