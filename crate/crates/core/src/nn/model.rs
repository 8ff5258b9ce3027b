use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Which side of the gap the inputs come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    /// W tones before and W tones after the gap.
    Interior,
    /// 2W tones immediately before the gap (gaps against the upper band edge;
    /// lower-edge gaps are mirrored onto this layout).
    Edge,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Interior => "interior",
            ModelKind::Edge => "edge",
        }
    }
}

/// One-hidden-layer ReLU network mapping 4W real features to 2W real outputs.
///
/// Weight matrices are row-major: `w_in` is H×4W, `w_out` is 2W×H.
#[derive(Clone, Debug, PartialEq)]
pub struct NnModel {
    pub kind: ModelKind,
    pub width: usize,
    pub hidden: usize,
    pub w_in: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
    pub in_mean: Vec<f64>,
    pub in_std: Vec<f64>,
    pub out_mean: Vec<f64>,
    pub out_std: Vec<f64>,
}

/// Σ_{w=1..T} (6Hw + (H + 2w) + 12w): stored reals for a bank of interior models.
pub fn bank_param_count(max_width: usize, hidden: usize) -> usize {
    (1..=max_width).map(|w| model_param_count(w, hidden)).sum()
}

pub fn model_param_count(width: usize, hidden: usize) -> usize {
    6 * hidden * width + (hidden + 2 * width) + 12 * width
}

/// Storage for `bank_param_count` at the given bytes per real.
pub fn bank_storage_bytes(max_width: usize, hidden: usize, bytes_per_real: usize) -> usize {
    bank_param_count(max_width, hidden) * bytes_per_real
}

/// Floor applied to standardization deviations.
pub const STD_FLOOR: f64 = 1e-8;

impl NnModel {
    /// All weights zero, identity standardization.
    pub fn zeroed(kind: ModelKind, width: usize, hidden: usize) -> Result<Self> {
        if width == 0 || hidden == 0 {
            return Err(Error::InvalidParameter(format!(
                "model needs width >= 1 and hidden >= 1 (got {width}, {hidden})"
            )));
        }
        let (i, o) = (4 * width, 2 * width);
        Ok(Self {
            kind,
            width,
            hidden,
            w_in: vec![0.0; hidden * i],
            b_hidden: vec![0.0; hidden],
            w_out: vec![0.0; o * hidden],
            b_out: vec![0.0; o],
            in_mean: vec![0.0; i],
            in_std: vec![1.0; i],
            out_mean: vec![0.0; o],
            out_std: vec![1.0; o],
        })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng + ?Sized>(kind: ModelKind, width: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeroed(kind, width, hidden)?;
        let (i, o) = (m.input_dim(), m.output_dim());
        let a_in = (6.0 / (i + hidden) as f64).sqrt();
        let a_out = (6.0 / (hidden + o) as f64).sqrt();
        m.w_in.iter_mut().for_each(|w| *w = rng.random_range(-a_in..a_in));
        m.w_out.iter_mut().for_each(|w| *w = rng.random_range(-a_out..a_out));
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        4 * self.width
    }

    pub fn output_dim(&self) -> usize {
        2 * self.width
    }

    pub fn param_count(&self) -> usize {
        [
            &self.w_in,
            &self.b_hidden,
            &self.w_out,
            &self.b_out,
            &self.in_mean,
            &self.in_std,
            &self.out_mean,
            &self.out_std,
        ]
        .iter()
        .map(|v| v.len())
        .sum()
    }

    /// Multiplies and adds per forward call, standardization included.
    pub fn flops_per_call(&self) -> u64 {
        (12 * self.width * self.hidden + 12 * self.width) as u64
    }

    pub fn check(&self) -> Result<()> {
        let (i, o, h) = (self.input_dim(), self.output_dim(), self.hidden);
        let sizes = [
            (self.w_in.len(), h * i),
            (self.b_hidden.len(), h),
            (self.w_out.len(), o * h),
            (self.b_out.len(), o),
            (self.in_mean.len(), i),
            (self.in_std.len(), i),
            (self.out_mean.len(), o),
            (self.out_std.len(), o),
        ];
        if sizes.iter().any(|(a, b)| a != b) {
            return Err(Error::Dimension(format!(
                "parameter arrays do not match width {} / hidden {h}",
                self.width
            )));
        }
        if self.in_std.iter().chain(&self.out_std).any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("standardization deviations must be positive".into()));
        }
        Ok(())
    }

    pub fn standardize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.in_mean.iter().zip(&self.in_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn standardize_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.out_mean.iter().zip(&self.out_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn destandardize_output(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .zip(self.out_mean.iter().zip(&self.out_std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Network on standardized features; returns (hidden pre-activations, standardized outputs).
    pub(crate) fn forward_standardized(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let i = self.input_dim();
        let pre: Vec<f64> = (0..self.hidden)
            .map(|r| {
                let row = &self.w_in[r * i..(r + 1) * i];
                self.b_hidden[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        let out = (0..self.output_dim())
            .map(|r| {
                let row = &self.w_out[r * self.hidden..(r + 1) * self.hidden];
                self.b_out[r] + row.iter().zip(&pre).map(|(w, p)| w * p.max(0.0)).sum::<f64>()
            })
            .collect();
        (pre, out)
    }

    /// Raw features in, de-standardized outputs out.
    pub fn forward_features(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "{} features for a width-{} model (needs {})",
                features.len(),
                self.width,
                self.input_dim()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite network input".into()));
        }
        let (_, out) = self.forward_standardized(&self.standardize_input(features));
        Ok(self.destandardize_output(&out))
    }

    /// Interior recovery: W values of h² before and W after the gap.
    pub fn forward(&self, before: &[Complex64], after: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.kind != ModelKind::Interior || before.len() != self.width || after.len() != self.width {
            return Err(Error::Dimension(format!(
                "{} model of width {} given {} + {} tones",
                self.kind.name(),
                self.width,
                before.len(),
                after.len()
            )));
        }
        let inputs: Vec<Complex64> = before.iter().chain(after).copied().collect();
        self.forward_scaled(&inputs)
    }

    /// Edge recovery: the 2W values of h² immediately before the gap.
    pub fn forward_one_sided(&self, before: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.kind != ModelKind::Edge || before.len() != 2 * self.width {
            return Err(Error::Dimension(format!(
                "{} model of width {} given {} one-sided tones",
                self.kind.name(),
                self.width,
                before.len()
            )));
        }
        self.forward_scaled(before)
    }

    fn forward_scaled(&self, inputs: &[Complex64]) -> Result<Vec<Complex64>> {
        let alpha = window_scale(self.kind, inputs);
        let features = interleave(inputs.iter().map(|v| v / alpha).collect::<Vec<_>>().iter());
        Ok(deinterleave(&self.forward_features(&features)?).into_iter().map(|v| v * alpha).collect())
    }
}

/// Complex normalizer of one input window: RMS magnitude of the inputs with
/// the phase of the tone just below the gap. Filling a gap commutes with
/// scaling h² by a complex constant, so networks see and predict values
/// divided by this. Falls back to 1 for an all-zero window.
pub fn window_scale(kind: ModelKind, inputs: &[Complex64]) -> Complex64 {
    let n = inputs.len();
    let rms = (inputs.iter().map(|v| v.norm_sqr()).sum::<f64>() / n.max(1) as f64).sqrt();
    if !(rms > 0.0) || !rms.is_finite() {
        return Complex64::new(1.0, 0.0);
    }
    let anchor = match kind {
        ModelKind::Interior => inputs[n / 2 - 1],
        ModelKind::Edge => inputs[n - 1],
    };
    let phase = if anchor.norm() > 0.0 { anchor.arg() } else { 0.0 };
    Complex64::from_polar(rms, phase)
}

/// [re0, im0, re1, im1, ...]
pub(crate) fn interleave<'a>(values: impl Iterator<Item = &'a Complex64>) -> Vec<f64> {
    values.flat_map(|v| [v.re, v.im]).collect()
}

pub(crate) fn deinterleave(values: &[f64]) -> Vec<Complex64> {
    values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

/// Bank of width-indexed models, widths 1..=T for each kind.
#[derive(Clone, Debug, PartialEq)]
pub struct NnBank {
    pub interior: Vec<NnModel>,
    pub edge: Vec<NnModel>,
}

impl NnBank {
    pub fn new(interior: Vec<NnModel>, edge: Vec<NnModel>) -> Result<Self> {
        for (models, kind) in [(&interior, ModelKind::Interior), (&edge, ModelKind::Edge)] {
            for (i, m) in models.iter().enumerate() {
                m.check()?;
                if m.width != i + 1 || m.kind != kind {
                    return Err(Error::InvalidParameter(format!(
                        "bank slot {} of the {} list holds a {} model of width {}",
                        i + 1,
                        kind.name(),
                        m.kind.name(),
                        m.width
                    )));
                }
            }
        }
        if interior.is_empty() {
            return Err(Error::InvalidParameter("bank has no models".into()));
        }
        Ok(Self { interior, edge })
    }

    /// Largest gap width with an interior model.
    pub fn max_width(&self) -> usize {
        self.interior.len()
    }

    pub fn model(&self, kind: ModelKind, width: usize) -> Option<&NnModel> {
        let list = match kind {
            ModelKind::Interior => &self.interior,
            ModelKind::Edge => &self.edge,
        };
        width.checked_sub(1).and_then(|i| list.get(i))
    }

    pub fn param_count(&self) -> usize {
        self.interior.iter().chain(&self.edge).map(NnModel::param_count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng_from;

    #[test]
    fn param_accounting() {
        assert_eq!(bank_param_count(10, 20), 7570);
        assert_eq!(bank_storage_bytes(10, 20, 4), 30280);
        assert_eq!(bank_storage_bytes(10, 20, 8), 60560);
        assert_eq!(bank_param_count(1, 1), 21);
        for w in 1..=10 {
            for h in [1, 4, 20] {
                let m = NnModel::zeroed(ModelKind::Interior, w, h).unwrap();
                assert_eq!(m.param_count(), model_param_count(w, h));
            }
        }
    }

    #[test]
    fn flops_for_largest_model() {
        let m = NnModel::zeroed(ModelKind::Interior, 10, 20).unwrap();
        assert_eq!(m.flops_per_call(), 2520);
    }

    #[test]
    fn zero_network_returns_output_mean() {
        let mut m = NnModel::zeroed(ModelKind::Interior, 2, 5).unwrap();
        m.out_mean = vec![1.0, -2.0, 0.5, 3.0];
        let before = [Complex64::new(7.0, 1.0), Complex64::new(-3.0, 2.0)];
        let after = [Complex64::new(0.1, 0.0), Complex64::new(9.0, 9.0)];
        let out = m.forward(&before, &after).unwrap();
        let alpha = window_scale(ModelKind::Interior, &[before[0], before[1], after[0], after[1]]);
        assert_eq!(out, vec![Complex64::new(1.0, -2.0) * alpha, Complex64::new(0.5, 3.0) * alpha]);
        assert!((alpha.arg() - before[1].arg()).abs() < 1e-12);
    }

    #[test]
    fn forward_is_scale_equivariant() {
        let m = NnModel::xavier(ModelKind::Edge, 2, 6, &mut rng_from(8)).unwrap();
        let x: Vec<Complex64> = (0..4).map(|k| Complex64::from_polar(1.0 + 0.1 * k as f64, 0.3 * k as f64)).collect();
        let a = Complex64::from_polar(3.5, -2.0);
        let scaled: Vec<Complex64> = x.iter().map(|v| v * a).collect();
        let (y, ys) = (m.forward_one_sided(&x).unwrap(), m.forward_one_sided(&scaled).unwrap());
        for (p, q) in y.iter().zip(&ys) {
            assert!((p * a - q).norm() < 1e-12 * q.norm().max(1.0));
        }
        assert_eq!(window_scale(ModelKind::Edge, &[Complex64::default(); 4]), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn standardization_round_trip() {
        let mut rng = rng_from(3);
        let mut m = NnModel::xavier(ModelKind::Interior, 3, 4, &mut rng).unwrap();
        m.out_mean = (0..6).map(|i| i as f64 * 0.7 - 1.0).collect();
        m.out_std = (0..6).map(|i| 0.1 + i as f64).collect();
        let y: Vec<f64> = (0..6).map(|i| (i as f64).sin() * 5.0).collect();
        let back = m.destandardize_output(&m.standardize_output(&y));
        for (a, b) in y.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let m = NnModel::zeroed(ModelKind::Interior, 2, 3).unwrap();
        let z = [Complex64::default(); 3];
        assert!(m.forward(&z, &z[..2]).is_err());
        assert!(m.forward_one_sided(&[Complex64::default(); 4]).is_err());
        assert!(m.forward_features(&[0.0; 7]).is_err());
    }

    #[test]
    fn bank_requires_contiguous_widths() {
        let m1 = NnModel::zeroed(ModelKind::Interior, 1, 2).unwrap();
        let m3 = NnModel::zeroed(ModelKind::Interior, 3, 2).unwrap();
        assert!(NnBank::new(vec![m1.clone(), m3], vec![]).is_err());
        let bank = NnBank::new(vec![m1], vec![]).unwrap();
        assert_eq!(bank.max_width(), 1);
        assert!(bank.model(ModelKind::Edge, 1).is_none());
    }
}
