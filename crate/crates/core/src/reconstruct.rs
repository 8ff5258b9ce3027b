//! Two-way channel response and per-band one-way reconstruction.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sim::{IqCapture, ToneGrid};

/// h² per tone. Entries at unavailable tones are zero and carry no information.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoWayResponse {
    pub grid: ToneGrid,
    pub h_sq: Vec<Complex64>,
    pub available: Vec<bool>,
}

impl TwoWayResponse {
    pub fn new(grid: ToneGrid, h_sq: Vec<Complex64>, available: Vec<bool>) -> Result<Self> {
        if h_sq.len() != grid.num_tones || available.len() != grid.num_tones {
            return Err(Error::Dimension(format!(
                "{} values / {} mask entries for {} tones",
                h_sq.len(),
                available.len(),
                grid.num_tones
            )));
        }
        Ok(Self {
            grid,
            h_sq,
            available,
        })
    }

    /// All tones available.
    pub fn complete(grid: ToneGrid, h_sq: Vec<Complex64>) -> Result<Self> {
        let k = h_sq.len();
        Self::new(grid, h_sq, vec![true; k])
    }

    pub fn is_complete(&self) -> bool {
        self.available.iter().all(|&a| a)
    }

    /// Copy with unavailable tones set to zero and marked available.
    pub fn zero_padded(&self) -> Self {
        let h_sq = self
            .h_sq
            .iter()
            .zip(&self.available)
            .map(|(&v, &a)| if a { v } else { Complex64::new(0.0, 0.0) })
            .collect();
        Self {
            grid: self.grid,
            h_sq,
            available: vec![true; self.available.len()],
        }
    }

    /// Copy with every tone scaled by `alpha`.
    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self {
            grid: self.grid,
            h_sq: self.h_sq.iter().map(|v| v * alpha).collect(),
            available: self.available.clone(),
        }
    }
}

/// Maximal run of available tones, `first..=last`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ToneBand {
    pub first: usize,
    pub last: usize,
}

impl ToneBand {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

/// One-way channel estimate: reconstructed values inside the bands, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructedChannel {
    pub h_tilde: Vec<Complex64>,
    pub bands: Vec<ToneBand>,
}

impl ReconstructedChannel {
    pub fn band_values(&self, band: ToneBand) -> &[Complex64] {
        &self.h_tilde[band.range()]
    }
}

/// h²_k = IQ_R(f_k) · IQ_I(f_k) on available tones.
pub fn two_way(capture: &IqCapture) -> Result<TwoWayResponse> {
    capture.validate()?;
    let h_sq = capture
        .iq_initiator
        .iter()
        .zip(&capture.iq_reflector)
        .zip(&capture.available)
        .map(|((&i, &r), &a)| if a { r * i } else { Complex64::new(0.0, 0.0) })
        .collect();
    TwoWayResponse::new(capture.grid, h_sq, capture.available.clone())
}

pub fn find_bands(available: &[bool]) -> Vec<ToneBand> {
    let mut bands = Vec::new();
    let mut k = 0;
    while k < available.len() {
        if !available[k] {
            k += 1;
            continue;
        }
        let first = k;
        while k < available.len() && available[k] {
            k += 1;
        }
        bands.push(ToneBand { first, last: k - 1 });
    }
    bands
}

/// Square root of each h² value with signs chosen so that consecutive phase
/// increments stay within (−π/2, π/2]. The first nonzero tone takes the
/// principal root. Zero tones stay zero and the next tone is compared with
/// the last nonzero one.
pub fn sign_resolved_sqrt(h_sq: &[Complex64]) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(h_sq.len());
    let mut reference: Option<Complex64> = None;
    for &v in h_sq {
        let root = v.sqrt();
        if root.norm() == 0.0 {
            out.push(Complex64::new(0.0, 0.0));
            continue;
        }
        let chosen = match reference {
            None => root,
            Some(prev) => {
                let rel = root * prev.conj();
                if rel.re > 0.0 || (rel.re == 0.0 && rel.im > 0.0) {
                    root
                } else {
                    -root
                }
            }
        };
        reference = Some(chosen);
        out.push(chosen);
    }
    out
}

/// Reconstructs one band; every tone in it must be available.
pub fn reconstruct_band(response: &TwoWayResponse, band: ToneBand) -> Result<Vec<Complex64>> {
    if band.last >= response.h_sq.len() || band.first > band.last {
        return Err(Error::Dimension(format!(
            "band {}..={} outside {} tones",
            band.first,
            band.last,
            response.h_sq.len()
        )));
    }
    if let Some(k) = band.range().find(|&k| !response.available[k]) {
        return Err(Error::InvalidParameter(format!("tone {k} in band is unavailable")));
    }
    Ok(sign_resolved_sqrt(&response.h_sq[band.range()]))
}

/// Reconstructs every available band independently.
pub fn reconstruct(response: &TwoWayResponse) -> Result<ReconstructedChannel> {
    let bands = find_bands(&response.available);
    let mut h_tilde = vec![Complex64::new(0.0, 0.0); response.h_sq.len()];
    for &band in &bands {
        let values = reconstruct_band(response, band)?;
        h_tilde[band.range()].copy_from_slice(&values);
    }
    Ok(ReconstructedChannel { h_tilde, bands })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synthesize_iq, ChannelRealization};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn unit_iq_gives_unit_two_way() {
        let grid = ToneGrid::new(2.4e9, 1e6, 2).unwrap();
        let cap = IqCapture {
            grid,
            iq_initiator: vec![c(1.0, 0.0); 2],
            iq_reflector: vec![c(1.0, 0.0); 2],
            available: vec![true, false],
            interfered: vec![false; 2],
        };
        let tw = two_way(&cap).unwrap();
        assert_eq!(tw.h_sq, vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(tw.available, vec![true, false]);
    }

    #[test]
    fn two_way_matches_elementwise_product() {
        let ch = ChannelRealization::new(
            vec![c(1.0, 0.2), c(0.3, -0.4)],
            vec![20e-9, 31e-9],
        )
        .unwrap();
        let cap = synthesize_iq(&ch, &ToneGrid::ble(), 15.0, 4).unwrap();
        let tw = two_way(&cap).unwrap();
        for k in 0..80 {
            assert_eq!(tw.h_sq[k], cap.iq_reflector[k] * cap.iq_initiator[k]);
        }
    }

    #[test]
    fn band_finding() {
        let mut mask = vec![true; 80];
        for k in [0, 1, 2, 24, 25, 26, 78, 79] {
            mask[k] = false;
        }
        assert_eq!(
            find_bands(&mask),
            vec![ToneBand { first: 3, last: 23 }, ToneBand { first: 27, last: 77 }]
        );
        assert_eq!(find_bands(&[true; 80]), vec![ToneBand { first: 0, last: 79 }]);
        let mut lone = vec![false; 80];
        lone[5] = true;
        assert_eq!(find_bands(&lone), vec![ToneBand { first: 5, last: 5 }]);
        assert!(find_bands(&[false; 10]).is_empty());
    }

    #[test]
    fn single_exponential_band() {
        let h: Vec<Complex64> = (0..80).map(|k| Complex64::from_polar(1.0, -0.3 * k as f64)).collect();
        let grid = ToneGrid::ble();
        let tw = TwoWayResponse::complete(grid, h.iter().map(|z| z * z).collect()).unwrap();
        let rec = reconstruct_band(&tw, ToneBand { first: 0, last: 79 }).unwrap();
        let sign = if (rec[0] - h[0]).norm() < 1e-9 { 1.0 } else { -1.0 };
        for k in 0..80 {
            assert!((rec[k] - h[k] * sign).norm() < 1e-12);
        }
        for k in 1..80 {
            assert!(((rec[k] / rec[k - 1]).arg() + 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn length_one_band_is_principal_root() {
        let grid = ToneGrid::ble();
        let mut h_sq = vec![c(0.0, 0.0); 80];
        h_sq[7] = c(-4.0, 1e-3);
        let mut mask = vec![false; 80];
        mask[7] = true;
        let tw = TwoWayResponse::new(grid, h_sq.clone(), mask).unwrap();
        let rec = reconstruct_band(&tw, ToneBand { first: 7, last: 7 }).unwrap();
        assert_eq!(rec, vec![h_sq[7].sqrt()]);
    }

    #[test]
    fn two_path_band_recovers_channel_up_to_sign() {
        let grid = ToneGrid::ble();
        let ch = ChannelRealization::new(vec![c(1.0, 0.0), c(0.4, 0.3)], vec![20e-9, 27e-9]).unwrap();
        let cap = synthesize_iq(&ch, &grid, f64::INFINITY, 8).unwrap();
        let tw = two_way(&cap).unwrap();
        let rec = reconstruct(&tw).unwrap();
        let h = ch.frequency_response(&grid);
        let sign = if (rec.h_tilde[0] - h[0]).norm() < (rec.h_tilde[0] + h[0]).norm() { 1.0 } else { -1.0 };
        for k in 0..80 {
            assert!((rec.h_tilde[k] - h[k] * sign).norm() < 1e-9);
        }
    }

    #[test]
    fn unavailable_tone_inside_band_rejected() {
        let grid = ToneGrid::ble();
        let mut mask = vec![true; 80];
        mask[10] = false;
        let tw = TwoWayResponse::new(grid, vec![c(1.0, 0.0); 80], mask).unwrap();
        assert!(reconstruct_band(&tw, ToneBand { first: 5, last: 15 }).is_err());
    }

    #[test]
    fn zero_tone_keeps_progression() {
        let h: Vec<Complex64> = (0..6).map(|k| Complex64::from_polar(1.0, 0.4 * k as f64)).collect();
        let mut sq: Vec<Complex64> = h.iter().map(|z| z * z).collect();
        sq[2] = c(0.0, 0.0);
        let rec = sign_resolved_sqrt(&sq);
        assert_eq!(rec[2], c(0.0, 0.0));
        for k in [0, 1, 3, 4, 5] {
            assert!((rec[k] - h[k]).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn magnitude_and_increment_invariants(
            parts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..60)
        ) {
            let sq: Vec<Complex64> = parts.iter().map(|&(a, b)| c(a, b)).collect();
            let rec = sign_resolved_sqrt(&sq);
            for (r, v) in rec.iter().zip(&sq) {
                prop_assert!((r.norm_sqr() - v.norm()).abs() <= 1e-9 * v.norm().max(1e-300));
            }
            for w in rec.windows(2) {
                if w[0].norm() > 0.0 && w[1].norm() > 0.0 {
                    let inc = (w[1] / w[0]).arg();
                    prop_assert!(inc > -std::f64::consts::FRAC_PI_2 - 1e-12);
                    prop_assert!(inc <= std::f64::consts::FRAC_PI_2 + 1e-12);
                }
            }
        }

        #[test]
        fn bands_are_independent(seed in any::<u64>(), cut in 10usize..70) {
            let grid = ToneGrid::ble();
            let ch = crate::sim::sample_sv_channel(&crate::sim::SvParams::default(), seed).unwrap();
            let cap = synthesize_iq(&ch, &grid, 20.0, seed).unwrap();
            let mut tw = two_way(&cap).unwrap();
            tw.available[cut] = false;
            let band = ToneBand { first: cut + 1, last: 79 };
            let before = reconstruct_band(&tw, band).unwrap();
            for k in 0..=cut {
                tw.h_sq[k] = c(99.0, -7.0);
            }
            prop_assert_eq!(reconstruct_band(&tw, band).unwrap(), before);
        }
    }
}
