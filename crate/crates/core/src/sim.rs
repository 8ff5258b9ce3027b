//! Saleh-Valenzuela style multipath channels, two-way IQ synthesis and gap maps.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform frequency grid: tone k sits at f0 + k·Δf.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneGrid {
    pub f0_hz: f64,
    pub delta_f_hz: f64,
    pub num_tones: usize,
}

impl ToneGrid {
    pub fn new(f0_hz: f64, delta_f_hz: f64, num_tones: usize) -> Result<Self> {
        let grid = Self {
            f0_hz,
            delta_f_hz,
            num_tones,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// 80 tones at 1 MHz spacing starting at 2.401 GHz.
    pub fn ble() -> Self {
        Self {
            f0_hz: 2.401e9,
            delta_f_hz: 1e6,
            num_tones: 80,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_f_hz > 0.0) || !self.delta_f_hz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tone spacing must be positive, got {}",
                self.delta_f_hz
            )));
        }
        if !self.f0_hz.is_finite() {
            return Err(Error::InvalidParameter("carrier must be finite".into()));
        }
        if self.num_tones < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 tones, got {}",
                self.num_tones
            )));
        }
        Ok(())
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.f0_hz + k as f64 * self.delta_f_hz
    }

    /// Δω = 2πΔf.
    pub fn delta_omega(&self) -> f64 {
        TAU * self.delta_f_hz
    }
}

impl Default for ToneGrid {
    fn default() -> Self {
        Self::ble()
    }
}

/// Parameters of the single-cluster channel model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvParams {
    /// Line-of-sight delay in seconds.
    pub tau0_s: f64,
    /// Mean inter-ray spacing 1/λ in seconds.
    pub ray_rate_inv_s: f64,
    /// LoS to non-LoS power ratio in dB.
    pub rician_db: f64,
    /// RMS delay spread of the non-LoS power profile.
    pub rms_delay_spread_s: f64,
    /// Upper bound on the number of paths, LoS included.
    pub max_paths: usize,
    /// Rays are generated up to tau0 + horizon_factor · rms_delay_spread.
    pub horizon_factor: f64,
}

impl Default for SvParams {
    fn default() -> Self {
        Self {
            tau0_s: 6.0 / SPEED_OF_LIGHT,
            ray_rate_inv_s: 4e-9,
            rician_db: 0.0,
            rms_delay_spread_s: 22e-9,
            max_paths: 64,
            horizon_factor: 10.0,
        }
    }
}

impl SvParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("tau0", self.tau0_s)?;
        positive("ray spacing", self.ray_rate_inv_s)?;
        positive("rms delay spread", self.rms_delay_spread_s)?;
        positive("horizon factor", self.horizon_factor)?;
        if !self.rician_db.is_finite() {
            return Err(Error::InvalidParameter("rician factor must be finite".into()));
        }
        if self.max_paths < 1 {
            return Err(Error::InvalidParameter("path cap must be at least 1".into()));
        }
        Ok(())
    }

    pub fn distance_m(&self) -> f64 {
        self.tau0_s * SPEED_OF_LIGHT
    }
}

/// Path gains and delays of one channel draw. Index 0 is the LoS path.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub amplitudes: Vec<Complex64>,
    pub delays: Vec<f64>,
}

impl ChannelRealization {
    pub fn new(amplitudes: Vec<Complex64>, delays: Vec<f64>) -> Result<Self> {
        if amplitudes.len() != delays.len() || amplitudes.is_empty() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {} delays",
                amplitudes.len(),
                delays.len()
            )));
        }
        if delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("delays must be strictly ascending".into()));
        }
        Ok(Self { amplitudes, delays })
    }

    pub fn num_paths(&self) -> usize {
        self.delays.len()
    }

    pub fn los_delay(&self) -> f64 {
        self.delays[0]
    }

    /// (1/M) Σ |a_m|².
    pub fn mean_path_power(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() / self.num_paths() as f64
    }

    /// h_k = Σ a_m exp(−j2π f_k τ_m) for every tone of the grid.
    pub fn frequency_response(&self, grid: &ToneGrid) -> Vec<Complex64> {
        self.frequency_response_range(grid, 0, grid.num_tones)
    }

    /// Response on tones `start..start + len` of the grid.
    pub fn frequency_response_range(
        &self,
        grid: &ToneGrid,
        start: usize,
        len: usize,
    ) -> Vec<Complex64> {
        let mut h = vec![Complex64::new(0.0, 0.0); len];
        for (&a, &tau) in self.amplitudes.iter().zip(&self.delays) {
            let first = Complex64::from_polar(1.0, -TAU * grid.frequency(start) * tau);
            let step = Complex64::from_polar(1.0, -grid.delta_omega() * tau);
            let mut rot = a * first;
            for hk in h.iter_mut() {
                *hk += rot;
                rot *= step;
            }
        }
        h
    }
}

/// Circularly symmetric complex Gaussian with E|z|² = variance.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sigma = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * sigma, im * sigma)
}

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws one channel: exponential inter-ray gaps, an exponentially decaying
/// ray power profile normalized to unit non-LoS power with uniform ray
/// phases, and a real LoS gain set by the Rician factor.
pub fn sample_sv_channel(params: &SvParams, seed: u64) -> Result<ChannelRealization> {
    params.validate()?;
    let mut rng = rng_from(seed);
    let gaps = Exp::new(1.0 / params.ray_rate_inv_s)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let horizon = params.tau0_s + params.horizon_factor * params.rms_delay_spread_s;

    let mut delays = vec![params.tau0_s];
    let mut tau = params.tau0_s;
    while delays.len() < params.max_paths {
        tau += gaps.sample(&mut rng);
        if tau > horizon {
            break;
        }
        if tau > *delays.last().unwrap() {
            delays.push(tau);
        }
    }

    let profile: Vec<f64> = delays[1..]
        .iter()
        .map(|&t| (-(t - params.tau0_s) / params.rms_delay_spread_s).exp())
        .collect();
    let total: f64 = profile.iter().sum();

    let mut amplitudes = Vec::with_capacity(delays.len());
    amplitudes.push(Complex64::new(10f64.powf(params.rician_db / 20.0), 0.0));
    for p in profile {
        amplitudes.push(Complex64::from_polar((p / total).sqrt(), rng.random_range(0.0..TAU)));
    }
    ChannelRealization::new(amplitudes, delays)
}

/// Per-tone IQ measured at both radios plus availability masks.
#[derive(Clone, Debug, PartialEq)]
pub struct IqCapture {
    pub grid: ToneGrid,
    pub iq_initiator: Vec<Complex64>,
    pub iq_reflector: Vec<Complex64>,
    pub available: Vec<bool>,
    pub interfered: Vec<bool>,
}

impl IqCapture {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let k = self.grid.num_tones;
        for (name, len) in [
            ("initiator IQ", self.iq_initiator.len()),
            ("reflector IQ", self.iq_reflector.len()),
            ("availability mask", self.available.len()),
            ("interference mask", self.interfered.len()),
        ] {
            if len != k {
                return Err(Error::Dimension(format!("{name} has {len} entries, grid has {k}")));
            }
        }
        Ok(())
    }

    pub fn num_available(&self) -> usize {
        self.available.iter().filter(|&&a| a).count()
    }
}

/// Synthesizes initiator and reflector IQ with a uniform random PLL phase per
/// tone and complex Gaussian noise whose variance follows the configured SNR
/// against the mean path power. `snr_db = +inf` gives a noise-free capture.
pub fn synthesize_iq(
    channel: &ChannelRealization,
    grid: &ToneGrid,
    snr_db: f64,
    seed: u64,
) -> Result<IqCapture> {
    grid.validate()?;
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter(format!("invalid SNR {snr_db}")));
    }
    let k = grid.num_tones;
    let h = channel.frequency_response(grid);
    let mut rng = rng_from(seed);
    let thetas: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..TAU)).collect();

    let n0 = if snr_db.is_finite() {
        channel.mean_path_power() / 10f64.powf(snr_db / 10.0)
    } else {
        0.0
    };

    let mut iq_initiator = Vec::with_capacity(k);
    let mut iq_reflector = Vec::with_capacity(k);
    for (hk, &theta) in h.iter().zip(&thetas) {
        let rot = Complex64::from_polar(1.0, theta);
        let (mut ini, mut refl) = (rot.conj() * hk, rot * hk);
        if n0 > 0.0 {
            ini += complex_normal(&mut rng, n0);
            refl += complex_normal(&mut rng, n0);
        }
        iq_initiator.push(ini);
        iq_reflector.push(refl);
    }
    Ok(IqCapture {
        grid: *grid,
        iq_initiator,
        iq_reflector,
        available: vec![true; k],
        interfered: vec![false; k],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapKind {
    Missing,
    Interfered,
}

/// Contiguous block of unusable tones, `start..=end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Gap {
    pub start: usize,
    pub end: usize,
    pub kind: GapKind,
}

impl Gap {
    pub fn new(start: usize, end: usize, kind: GapKind) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidParameter(format!("gap {start}:{end} is reversed")));
        }
        Ok(Self { start, end, kind })
    }

    pub fn missing(start: usize, end: usize) -> Self {
        Self::new(start, end, GapKind::Missing).expect("start <= end")
    }

    pub fn interfered(start: usize, end: usize) -> Self {
        Self::new(start, end, GapKind::Interfered).expect("start <= end")
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn contains(&self, k: usize) -> bool {
        self.start <= k && k <= self.end
    }
}

/// Disjoint gaps ordered by first tone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GapMap {
    gaps: Vec<Gap>,
}

impl GapMap {
    pub fn new(mut gaps: Vec<Gap>) -> Result<Self> {
        gaps.sort_by_key(|g| g.start);
        for w in gaps.windows(2) {
            if w[1].start <= w[0].end {
                return Err(Error::OverlappingGaps(w[1].start));
            }
        }
        Ok(Self { gaps })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn gaps(&self) -> &[Gap] {
        &self.gaps
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn num_tones(&self) -> usize {
        self.gaps.iter().map(Gap::width).sum()
    }

    pub fn validate(&self, num_tones: usize) -> Result<()> {
        match self.gaps.last() {
            Some(g) if g.end >= num_tones => Err(Error::Dimension(format!(
                "gap {}:{} exceeds {num_tones} tones",
                g.start, g.end
            ))),
            _ => Ok(()),
        }
    }

    /// Availability mask with every gap tone cleared.
    pub fn availability(&self, num_tones: usize) -> Vec<bool> {
        let mut mask = vec![true; num_tones];
        for g in &self.gaps {
            for k in g.indices() {
                if k < num_tones {
                    mask[k] = false;
                }
            }
        }
        mask
    }

    /// Gaps recovered from an availability mask; every block is tagged missing.
    pub fn from_mask(available: &[bool]) -> Self {
        let mut gaps = Vec::new();
        let mut k = 0;
        while k < available.len() {
            if available[k] {
                k += 1;
                continue;
            }
            let start = k;
            while k < available.len() && !available[k] {
                k += 1;
            }
            gaps.push(Gap::missing(start, k - 1));
        }
        Self { gaps }
    }
}

/// Marks gap tones unavailable. Missing tones are zeroed; interfered tones
/// keep the signal plus complex Gaussian interference at the given
/// signal-to-interference ratio (relative to the capture's mean IQ power).
pub fn apply_gap_map(
    capture: &IqCapture,
    gaps: &GapMap,
    interference_sir_db: f64,
    seed: u64,
) -> Result<IqCapture> {
    capture.validate()?;
    gaps.validate(capture.grid.num_tones)?;
    let mut out = capture.clone();
    if gaps.is_empty() {
        return Ok(out);
    }
    let power = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>() / v.len() as f64;
    let sir = 10f64.powf(interference_sir_db / 10.0);
    let var_i = power(&capture.iq_initiator) / sir;
    let var_r = power(&capture.iq_reflector) / sir;
    let mut rng = rng_from(seed);
    let zero = Complex64::new(0.0, 0.0);
    for g in gaps.gaps() {
        for k in g.indices() {
            out.available[k] = false;
            match g.kind {
                GapKind::Missing => {
                    out.iq_initiator[k] = zero;
                    out.iq_reflector[k] = zero;
                    out.interfered[k] = false;
                }
                GapKind::Interfered => {
                    out.iq_initiator[k] += complex_normal(&mut rng, var_i);
                    out.iq_reflector[k] += complex_normal(&mut rng, var_r);
                    out.interfered[k] = true;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_validation() {
        assert!(ToneGrid::new(2.4e9, 0.0, 80).is_err());
        assert!(ToneGrid::new(2.4e9, 1e6, 1).is_err());
        let g = ToneGrid::ble();
        assert_eq!(g.frequency(79), 2.48e9);
    }

    #[test]
    fn los_delay_is_exact() {
        let params = SvParams {
            tau0_s: 20e-9,
            ..SvParams::default()
        };
        let ch = sample_sv_channel(&params, 5).unwrap();
        assert_eq!(ch.delays[0], 20e-9);
        assert!(ch.delays.windows(2).all(|w| w[1] > w[0]));
        assert!(ch.num_paths() <= 64);
        assert!((SvParams::default().distance_m() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = SvParams {
            ray_rate_inv_s: 0.0,
            ..SvParams::default()
        };
        assert!(sample_sv_channel(&bad, 0).is_err());
    }

    #[test]
    fn first_ray_gap_mean_matches_rate() {
        let params = SvParams {
            ray_rate_inv_s: 4e-9,
            ..SvParams::default()
        };
        let n = 100_000;
        let mut sum = 0.0;
        for seed in 0..n {
            let ch = sample_sv_channel(&params, seed).unwrap();
            sum += ch.delays[1] - ch.delays[0];
        }
        let mean = sum / n as f64;
        assert!((mean / 4e-9 - 1.0).abs() < 0.02, "mean gap {mean}");
    }

    #[test]
    fn rician_ratio_in_aggregate() {
        for db in [-10.0, 0.0, 10.0] {
            let params = SvParams {
                rician_db: db,
                ..SvParams::default()
            };
            let (mut los, mut nlos) = (0.0, 0.0);
            for seed in 0..20_000 {
                let ch = sample_sv_channel(&params, seed).unwrap();
                los += ch.amplitudes[0].norm_sqr();
                nlos += ch.amplitudes[1..].iter().map(|a| a.norm_sqr()).sum::<f64>();
            }
            let measured = 10.0 * (los / nlos).log10();
            assert!((measured - db).abs() < 0.1, "{db} dB measured {measured}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = SvParams::default();
        assert_eq!(sample_sv_channel(&p, 42).unwrap(), sample_sv_channel(&p, 42).unwrap());
        let ch = sample_sv_channel(&p, 42).unwrap();
        let grid = ToneGrid::ble();
        assert_eq!(
            synthesize_iq(&ch, &grid, 20.0, 3).unwrap(),
            synthesize_iq(&ch, &grid, 20.0, 3).unwrap()
        );
    }

    #[test]
    fn unit_path_unit_noise_is_zero_db() {
        let ch = ChannelRealization::new(vec![Complex64::new(1.0, 0.0)], vec![20e-9]).unwrap();
        let n0 = 1.0;
        assert_eq!(10.0 * (ch.mean_path_power() / n0).log10(), 0.0);
    }

    #[test]
    fn empirical_snr_matches_configuration() {
        let ch = sample_sv_channel(&SvParams::default(), 1).unwrap();
        let grid = ToneGrid::new(2.4e9, 1.0, 100_000).unwrap();
        let clean = synthesize_iq(&ch, &grid, f64::INFINITY, 9).unwrap();
        let noisy = synthesize_iq(&ch, &grid, 20.0, 9).unwrap();
        let n0: f64 = noisy
            .iq_initiator
            .iter()
            .zip(&clean.iq_initiator)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / grid.num_tones as f64;
        let snr = 10.0 * (ch.mean_path_power() / n0).log10();
        assert!((snr - 20.0).abs() < 0.1, "snr {snr}");
    }

    #[test]
    fn gap_map_rejects_overlap_and_range() {
        let err = GapMap::new(vec![Gap::missing(3, 5), Gap::interfered(5, 6)]).unwrap_err();
        assert_eq!(err, Error::OverlappingGaps(5));
        let gm = GapMap::new(vec![Gap::missing(78, 80)]).unwrap();
        assert!(gm.validate(80).is_err());
    }

    #[test]
    fn gap_one_layout() {
        let gm = GapMap::new(vec![Gap::missing(0, 2), Gap::missing(78, 79), Gap::missing(24, 26)])
            .unwrap();
        let ch = sample_sv_channel(&SvParams::default(), 0).unwrap();
        let cap = synthesize_iq(&ch, &ToneGrid::ble(), 20.0, 0).unwrap();
        let out = apply_gap_map(&cap, &gm, 0.0, 0).unwrap();
        assert_eq!(out.num_available(), 72);
        assert!(out.iq_initiator[25] == Complex64::new(0.0, 0.0));
        assert_eq!(apply_gap_map(&cap, &GapMap::empty(), 0.0, 0).unwrap(), cap);
    }

    #[test]
    fn interfered_tones_flagged() {
        let gm = GapMap::new(vec![Gap::interfered(10, 12)]).unwrap();
        let ch = sample_sv_channel(&SvParams::default(), 0).unwrap();
        let cap = synthesize_iq(&ch, &ToneGrid::ble(), 20.0, 0).unwrap();
        let out = apply_gap_map(&cap, &gm, 0.0, 1).unwrap();
        for k in 10..=12 {
            assert!(!out.available[k] && out.interfered[k]);
            assert_ne!(out.iq_initiator[k], cap.iq_initiator[k]);
        }
        assert!(out.available[9] && out.available[13]);
    }

    #[test]
    fn mask_round_trip() {
        let gm = GapMap::new(vec![Gap::missing(0, 2), Gap::missing(24, 26)]).unwrap();
        let mask = gm.availability(40);
        assert_eq!(GapMap::from_mask(&mask), gm);
    }

    proptest! {
        #[test]
        fn noise_free_product_cancels_phase(seed in any::<u64>()) {
            let ch = sample_sv_channel(&SvParams::default(), seed).unwrap();
            let grid = ToneGrid::ble();
            let cap = synthesize_iq(&ch, &grid, f64::INFINITY, seed ^ 1).unwrap();
            let h = ch.frequency_response(&grid);
            for k in 0..grid.num_tones {
                let prod = cap.iq_initiator[k] * cap.iq_reflector[k];
                let want = h[k] * h[k];
                prop_assert!((prod - want).norm() <= 1e-12 * want.norm().max(1e-300));
            }
        }

        #[test]
        fn gaps_leave_other_tones_untouched(start in 0usize..70, width in 1usize..10, seed in any::<u64>()) {
            let gm = GapMap::new(vec![Gap::interfered(start, start + width - 1)]).unwrap();
            let ch = sample_sv_channel(&SvParams::default(), seed).unwrap();
            let cap = synthesize_iq(&ch, &ToneGrid::ble(), 25.0, seed).unwrap();
            let out = apply_gap_map(&cap, &gm, -5.0, seed).unwrap();
            for k in 0..80 {
                if k < start || k >= start + width {
                    prop_assert_eq!(out.iq_initiator[k], cap.iq_initiator[k]);
                    prop_assert_eq!(out.iq_reflector[k], cap.iq_reflector[k]);
                    prop_assert!(out.available[k]);
                }
            }
        }
    }
}
