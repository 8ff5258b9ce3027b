use std::fmt::Write as _;

use super::config::Scheme;

/// Linear-interpolation quantile of sorted data, q in [0, 1].
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Error statistics of one scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeMetrics {
    pub scheme: Scheme,
    pub successes: usize,
    pub failures: usize,
    pub rmse_m: f64,
    /// Median of the signed errors.
    pub median_m: f64,
    /// Median of the absolute errors.
    pub median_abs_m: f64,
    /// Half-width of the interval centred on the median that holds 90% of
    /// the errors: the 0.9 quantile of |e − median|.
    pub q90_m: f64,
}

impl SchemeMetrics {
    /// Statistics over the successful estimates' signed errors.
    pub fn from_errors(scheme: Scheme, errors: &[f64], failures: usize) -> Self {
        let n = errors.len();
        let signed = sorted(errors.iter().copied());
        let median = quantile_sorted(&signed, 0.5);
        let abs = sorted(errors.iter().map(|e| e.abs()));
        let spread = sorted(errors.iter().map(|e| (e - median).abs()));
        let rmse = if n == 0 {
            f64::NAN
        } else {
            (errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt()
        };
        Self {
            scheme,
            successes: n,
            failures,
            rmse_m: rmse,
            median_m: median,
            median_abs_m: quantile_sorted(&abs, 0.5),
            q90_m: quantile_sorted(&spread, 0.9),
        }
    }
}

/// Empirical CDF of |error|: (value, fraction ≤ value), ending at 1.
pub fn abs_error_cdf(errors: &[f64]) -> Vec<(f64, f64)> {
    let abs = sorted(errors.iter().map(|e| e.abs()));
    let n = abs.len() as f64;
    abs.iter().enumerate().map(|(i, &e)| (e, (i + 1) as f64 / n)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub schemes: Vec<SchemeMetrics>,
}

impl MetricsReport {
    pub fn get(&self, scheme: Scheme) -> Option<&SchemeMetrics> {
        self.schemes.iter().find(|m| m.scheme == scheme)
    }

    /// Fixed-width text table, errors in centimetres.
    pub fn table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<15} {:>6} {:>6} {:>10} {:>10} {:>10} {:>10}",
            "scheme", "ok", "fail", "rmse_cm", "median_cm", "|med|_cm", "q90_cm"
        )
        .unwrap();
        for m in &self.schemes {
            writeln!(
                out,
                "{:<15} {:>6} {:>6} {:>10.2} {:>10.2} {:>10.2} {:>10.2}",
                m.scheme.name(),
                m.successes,
                m.failures,
                100.0 * m.rmse_m,
                100.0 * m.median_m,
                100.0 * m.median_abs_m,
                100.0 * m.q90_m
            )
            .unwrap();
        }
        out
    }
}
