//! Single-snapshot MUSIC delay estimation over one or several tone bands.
//!
//! The Hankel matrix H of a band factors as R·D·Cᵀ with Vandermonde column
//! factor C[n, m] = exp(−jΔω n τ_m). The column space of conj(HᴴH) = Hᵀ·conj(H)
//! is spanned by those columns, so the signal subspace is taken from that Gram
//! matrix and matched against e(τ)[n] = exp(−jΔω n τ).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, hankel, CMatrix};
use crate::reconstruct::{
    find_bands, reconstruct_band, sign_resolved_sqrt, two_way, ToneBand, TwoWayResponse,
};
use crate::sim::{IqCapture, SPEED_OF_LIGHT};

/// Relative clamp applied to pseudospectrum denominators: max(D, CLAMP · L).
pub const DENOMINATOR_CLAMP: f64 = 1e-12;

/// Proposition-1 smoothing factor ⌊len/2⌋ + 1, which maximizes
/// min(L, len − L + 1), the number of resolvable delays.
pub fn smoothing_factor(band_len: usize) -> usize {
    band_len / 2 + 1
}

/// e(τ)[n] = exp(−jΔω n τ), n = 0..L−1.
pub fn steering(tau: f64, l: usize, delta_omega: f64) -> Vec<Complex64> {
    (0..l)
        .map(|n| Complex64::from_polar(1.0, -delta_omega * n as f64 * tau))
        .collect()
}

/// Uniform delay search grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayGrid {
    pub start_s: f64,
    pub step_s: f64,
    pub count: usize,
}

impl DelayGrid {
    /// Grid from `start` to `stop` inclusive.
    pub fn span(start_s: f64, stop_s: f64, step_s: f64) -> Result<Self> {
        if !(step_s > 0.0) || !(stop_s >= start_s) {
            return Err(Error::InvalidParameter(format!(
                "delay grid {start_s}..{stop_s} step {step_s}"
            )));
        }
        let count = ((stop_s - start_s) / step_s + 1e-9).floor() as usize + 1;
        Ok(Self {
            start_s,
            step_s,
            count,
        })
    }

    pub fn tau(&self, i: usize) -> f64 {
        self.start_s + i as f64 * self.step_s
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.tau(i)).collect()
    }
}

impl Default for DelayGrid {
    /// 0 to 200 ns in 0.01 ns steps.
    fn default() -> Self {
        Self {
            start_s: 0.0,
            step_s: 0.01e-9,
            count: 20_001,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Plain MUSIC over the complete grid.
    Full,
    /// Unavailable tones set to zero, then plain MUSIC.
    ZeroPad,
    /// Product of per-band denominators.
    Mps,
    /// Smoothing-factor weighted sum of per-band denominators.
    Wps,
}

impl EstimatorMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::ZeroPad => "zero_pad",
            Self::Mps => "mps",
            Self::Wps => "wps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "zero_pad" | "zero-pad" | "zeropad" => Ok(Self::ZeroPad),
            "mps" => Ok(Self::Mps),
            "wps" => Ok(Self::Wps),
            other => Err(Error::InvalidParameter(format!("unknown estimator mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MusicConfig {
    pub delay_grid: DelayGrid,
    /// Eigenvalues ≥ threshold_ratio · λ_max span the signal subspace.
    pub threshold_ratio: f64,
    /// First local maximum reaching this fraction of the global maximum.
    pub prominence_ratio: f64,
    /// Forces the smoothing factor in single-band modes.
    pub smoothing_override: Option<usize>,
    /// Bands shorter than this are skipped by MPS/WPS.
    pub min_band_len: usize,
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self {
            delay_grid: DelayGrid::default(),
            threshold_ratio: 1e-5,
            prominence_ratio: 0.01,
            smoothing_override: None,
            min_band_len: 2,
        }
    }
}

/// Eigenstructure of one band's smoothed Gram matrix.
#[derive(Clone, Debug)]
pub struct SubspaceDecomposition {
    /// Descending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// All eigenvectors as columns; the first `signal_dim` span the signal subspace.
    pub eigenvectors: CMatrix,
    pub signal_dim: usize,
    pub smoothing: usize,
    /// Coefficients of eᴴ P_S e as a trigonometric polynomial in Δωτ.
    projector_lags: Vec<Complex64>,
}

impl SubspaceDecomposition {
    pub fn noise_dim(&self) -> usize {
        self.smoothing - self.signal_dim
    }

    pub fn signal_basis(&self) -> CMatrix {
        CMatrix::from_fn(self.smoothing, self.signal_dim, |r, c| self.eigenvectors[(r, c)])
    }

    pub fn noise_basis(&self) -> CMatrix {
        CMatrix::from_fn(self.smoothing, self.noise_dim(), |r, c| {
            self.eigenvectors[(r, c + self.signal_dim)]
        })
    }

    /// L − ‖V_Sᴴ e(τ)‖², evaluated through the projector's lag sums.
    pub fn denominator(&self, tau: f64, delta_omega: f64) -> f64 {
        let w = Complex64::from_polar(1.0, delta_omega * tau);
        let lags = &self.projector_lags;
        let mut acc = Complex64::new(0.0, 0.0);
        for c in lags[1..].iter().rev() {
            acc = (acc + c) * w;
        }
        let proj = lags[0].re + 2.0 * acc.re;
        self.smoothing as f64 - proj
    }

    /// L − ‖V_Sᴴ e(τ)‖², evaluated directly.
    pub fn denominator_signal_form(&self, tau: f64, delta_omega: f64) -> f64 {
        let e = steering(tau, self.smoothing, delta_omega);
        let proj: f64 = (0..self.signal_dim)
            .map(|c| column_inner(&self.eigenvectors, c, &e).norm_sqr())
            .sum();
        self.smoothing as f64 - proj
    }

    /// ‖V_Nᴴ e(τ)‖².
    pub fn denominator_noise_form(&self, tau: f64, delta_omega: f64) -> f64 {
        let e = steering(tau, self.smoothing, delta_omega);
        (self.signal_dim..self.smoothing)
            .map(|c| column_inner(&self.eigenvectors, c, &e).norm_sqr())
            .sum()
    }

    fn clamp(&self) -> f64 {
        DENOMINATOR_CLAMP * self.smoothing as f64
    }
}

/// vᴴ e for column `c` of `m`.
fn column_inner(m: &CMatrix, c: usize, e: &[Complex64]) -> Complex64 {
    e.iter()
        .enumerate()
        .map(|(r, x)| m[(r, c)].conj() * x)
        .sum()
}

/// Builds the Hankel matrix of `h_band`, eigendecomposes its Gram matrix and
/// splits the signal subspace by a relative eigenvalue threshold.
pub fn decompose(h_band: &[Complex64], l: usize, threshold_ratio: f64) -> Result<SubspaceDecomposition> {
    if h_band.len() < 2 {
        return Err(Error::DegenerateBand(format!(
            "band of {} tone(s) cannot be decomposed",
            h_band.len()
        )));
    }
    let h = hankel(h_band, l)?;
    let rows = h.rows();
    let mut gram = CMatrix::zeros(l, l);
    for i in 0..l {
        for j in i..l {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..rows {
                acc += h[(r, i)] * h[(r, j)].conj();
            }
            gram[(i, j)] = acc;
            gram[(j, i)] = acc.conj();
        }
        gram[(i, i)] = Complex64::new(gram[(i, i)].re, 0.0);
    }
    let eig = eig_hermitian(&gram)?;
    let lambda_max = eig.values[0];
    if !(lambda_max > 0.0) {
        return Err(Error::DegenerateBand("band carries no energy".into()));
    }
    let signal_dim = eig
        .values
        .iter()
        .take_while(|&&v| v >= threshold_ratio * lambda_max)
        .count()
        .max(1);

    let mut lags = vec![Complex64::new(0.0, 0.0); l];
    for m in 0..l {
        for n in 0..=m {
            let mut p = Complex64::new(0.0, 0.0);
            for c in 0..signal_dim {
                p += eig.vectors[(m, c)] * eig.vectors[(n, c)].conj();
            }
            lags[m - n] += p;
        }
    }
    Ok(SubspaceDecomposition {
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        signal_dim,
        smoothing: l,
        projector_lags: lags,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combine {
    /// ∏_j D_j
    Product,
    /// Σ_j L_j · D_j
    Weighted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoSpectrum {
    pub grid: DelayGrid,
    pub values: Vec<f64>,
    /// Grid points where at least one denominator hit the clamp.
    pub clamped_points: usize,
}

/// J(τ) = 1 / (L − ‖V_Sᴴ e(τ)‖²).
pub fn pseudospectrum(dec: &SubspaceDecomposition, grid: &DelayGrid, delta_omega: f64) -> PseudoSpectrum {
    combined_pseudospectrum(std::slice::from_ref(dec), Combine::Product, grid, delta_omega)
}

/// Pseudospectrum combining several band decompositions.
pub fn combined_pseudospectrum(
    decs: &[SubspaceDecomposition],
    combine: Combine,
    grid: &DelayGrid,
    delta_omega: f64,
) -> PseudoSpectrum {
    let mut values = Vec::with_capacity(grid.count);
    let mut clamped_points = 0;
    for i in 0..grid.count {
        let tau = grid.tau(i);
        let mut clamped = false;
        let mut denom = match combine {
            Combine::Product => 1.0,
            Combine::Weighted => 0.0,
        };
        for dec in decs {
            let raw = dec.denominator(tau, delta_omega);
            let d = if raw < dec.clamp() {
                clamped = true;
                dec.clamp()
            } else {
                raw
            };
            match combine {
                Combine::Product => denom *= d,
                Combine::Weighted => denom += dec.smoothing as f64 * d,
            }
        }
        if clamped {
            clamped_points += 1;
        }
        values.push(1.0 / denom);
    }
    PseudoSpectrum {
        grid: *grid,
        values,
        clamped_points,
    }
}

/// Index of the smallest-delay local maximum reaching `prominence_ratio` of
/// the largest one. Only interior points count as maxima, so a spectrum that
/// rises towards a grid endpoint does not produce a peak there.
pub fn first_peak(ps: &PseudoSpectrum, prominence_ratio: f64) -> Result<usize> {
    let v = &ps.values;
    let peaks: Vec<usize> = (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i].is_finite())
        .collect();
    let max = peaks.iter().map(|&i| v[i]).fold(f64::NEG_INFINITY, f64::max);
    peaks
        .into_iter()
        .find(|&i| v[i] >= prominence_ratio * max)
        .ok_or(Error::NoPeak)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandDiagnostics {
    pub band: ToneBand,
    pub smoothing: usize,
    pub signal_dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangeEstimate {
    pub tau0_s: f64,
    pub distance_m: f64,
    pub mode: EstimatorMode,
    pub bands: Vec<BandDiagnostics>,
    /// Bands shorter than the configured minimum.
    pub skipped_bands: Vec<ToneBand>,
    pub peak_index: usize,
    pub clamped_points: usize,
}

/// Runs MUSIC in the requested mode on a capture.
pub fn estimate_range(capture: &IqCapture, mode: EstimatorMode, cfg: &MusicConfig) -> Result<RangeEstimate> {
    estimate_from_response(&two_way(capture)?, mode, cfg)
}

/// Runs MUSIC in the requested mode on a two-way response.
pub fn estimate_from_response(
    response: &TwoWayResponse,
    mode: EstimatorMode,
    cfg: &MusicConfig,
) -> Result<RangeEstimate> {
    if !response.available.iter().any(|&a| a) {
        return Err(Error::NoData);
    }
    let delta_omega = response.grid.delta_omega();
    let k = response.h_sq.len();
    let (decs, bands, skipped, combine) = match mode {
        EstimatorMode::Full | EstimatorMode::ZeroPad => {
            let values = match mode {
                EstimatorMode::Full if !response.is_complete() => {
                    return Err(Error::InvalidParameter(
                        "full mode needs every tone; use zero_pad, mps or wps".into(),
                    ))
                }
                EstimatorMode::Full => response.h_sq.clone(),
                _ => response.zero_padded().h_sq,
            };
            let h_tilde = sign_resolved_sqrt(&values);
            let l = cfg.smoothing_override.unwrap_or_else(|| smoothing_factor(k));
            let dec = decompose(&h_tilde, l, cfg.threshold_ratio)?;
            let band = ToneBand { first: 0, last: k - 1 };
            let diag = BandDiagnostics {
                band,
                smoothing: l,
                signal_dim: dec.signal_dim,
            };
            (vec![dec], vec![diag], Vec::new(), Combine::Product)
        }
        EstimatorMode::Mps | EstimatorMode::Wps => {
            let mut decs = Vec::new();
            let mut diags = Vec::new();
            let mut skipped = Vec::new();
            for band in find_bands(&response.available) {
                if band.len() < cfg.min_band_len.max(2) {
                    skipped.push(band);
                    continue;
                }
                let h_tilde = reconstruct_band(response, band)?;
                let l = smoothing_factor(band.len());
                let dec = decompose(&h_tilde, l, cfg.threshold_ratio)?;
                diags.push(BandDiagnostics {
                    band,
                    smoothing: l,
                    signal_dim: dec.signal_dim,
                });
                decs.push(dec);
            }
            if decs.is_empty() {
                return Err(Error::DegenerateBand(format!(
                    "no band reaches {} tones",
                    cfg.min_band_len.max(2)
                )));
            }
            let combine = if mode == EstimatorMode::Mps {
                Combine::Product
            } else {
                Combine::Weighted
            };
            (decs, diags, skipped, combine)
        }
    };
    let ps = combined_pseudospectrum(&decs, combine, &cfg.delay_grid, delta_omega);
    let peak = first_peak(&ps, cfg.prominence_ratio)?;
    let tau0 = cfg.delay_grid.tau(peak);
    Ok(RangeEstimate {
        tau0_s: tau0,
        distance_m: (SPEED_OF_LIGHT * tau0).max(0.0),
        mode,
        bands,
        skipped_bands: skipped,
        peak_index: peak,
        clamped_points: ps.clamped_points,
    })
}
