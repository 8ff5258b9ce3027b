use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anm::AnmConfig;
use crate::error::{Error, Result};
use crate::music::MusicConfig;
use crate::sim::{Gap, GapMap, SvParams, ToneGrid};

/// Estimation pipeline evaluated per realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Plain MUSIC on the gap-free capture.
    Reference,
    /// Gap tones zeroed, plain MUSIC.
    ZeroPad,
    Mps,
    Wps,
    /// Atomic-norm completion, then plain MUSIC.
    Anm,
    /// Scheduled network recovery, then plain MUSIC.
    Nn,
    /// Network recovery in ascending gap order.
    NnUnscheduled,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Reference,
        Scheme::ZeroPad,
        Scheme::Mps,
        Scheme::Wps,
        Scheme::Anm,
        Scheme::Nn,
        Scheme::NnUnscheduled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Reference => "reference",
            Scheme::ZeroPad => "zero_pad",
            Scheme::Mps => "mps",
            Scheme::Wps => "wps",
            Scheme::Anm => "anm",
            Scheme::Nn => "nn",
            Scheme::NnUnscheduled => "nn_unscheduled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let key = match key.as_str() {
            "full" | "none" => "reference",
            "zeropad" => "zero_pad",
            other => other,
        };
        Self::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mode `{s}`")))
    }

    /// Comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(Self::parse).collect()
    }

    pub fn needs_bank(self) -> bool {
        matches!(self, Scheme::Nn | Scheme::NnUnscheduled)
    }
}

const ADVERTISING: [(usize, usize); 3] = [(0, 2), (78, 79), (24, 26)];

/// Gap configurations 1 to 6: three missing blocks shared by all presets plus
/// preset-specific interfered blocks.
pub fn preset(name: &str) -> Result<GapMap> {
    let interfered: &[(usize, usize)] = match name {
        "gap1" => &[],
        "gap2" => &[(27, 29)],
        "gap3" => &[(59, 61)],
        "gap4" => &[(59, 67)],
        "gap5" => &[
            (29, 30),
            (32, 32),
            (34, 36),
            (38, 38),
            (52, 55),
            (58, 59),
            (62, 63),
            (65, 65),
        ],
        "gap6" => &[(12, 13), (37, 39), (40, 41), (53, 55), (61, 64), (70, 72)],
        "none" => return Ok(GapMap::empty()),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    let gaps = ADVERTISING
        .iter()
        .map(|&(a, b)| Gap::missing(a, b))
        .chain(interfered.iter().map(|&(a, b)| Gap::interfered(a, b)))
        .collect();
    GapMap::new(gaps)
}

pub const PRESETS: [&str; 6] = ["gap1", "gap2", "gap3", "gap4", "gap5", "gap6"];

/// Parses `"a:b"` or `"a"` into an inclusive tone range.
pub fn parse_range(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidParameter(format!("bad tone range `{s}`, expected `a:b` or `a`"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    match s.split_once(':') {
        Some((a, b)) => {
            let (a, b) = (num(a)?, num(b)?);
            if b < a {
                return Err(bad());
            }
            Ok((a, b))
        }
        None => {
            let a = num(s)?;
            Ok((a, a))
        }
    }
}

/// Monte-Carlo experiment description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub realizations: usize,
    pub snr_db: f64,
    /// Signal-to-interference ratio on interfered tones.
    pub sir_db: f64,
    pub schemes: Vec<Scheme>,
    /// `gap1`..`gap6` or `none`.
    pub preset: Option<String>,
    /// Extra missing blocks, `"a:b"`.
    pub missing: Vec<String>,
    /// Extra interfered blocks, `"a:b"`.
    pub interfered: Vec<String>,
    pub bank_path: Option<PathBuf>,
    /// Rician factors for `benchmark`; empty runs `channel.rician_db` only.
    pub rician_sweep_db: Vec<f64>,
    /// Smoothing fractions F for `sweep-smoothing`; L = ⌊F·K⌋ + 1.
    pub smoothing_fractions: Vec<f64>,
    pub grid: ToneGrid,
    pub channel: SvParams,
    pub music: MusicConfig,
    pub anm: AnmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            realizations: 500,
            snr_db: 20.0,
            sir_db: 0.0,
            schemes: vec![Scheme::Reference, Scheme::ZeroPad, Scheme::Mps, Scheme::Wps],
            preset: None,
            missing: Vec::new(),
            interfered: Vec::new(),
            bank_path: None,
            rician_sweep_db: Vec::new(),
            smoothing_fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            grid: ToneGrid::ble(),
            channel: SvParams::default(),
            music: MusicConfig::default(),
            anm: AnmConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Preset gaps plus the explicit extra blocks.
    pub fn gap_map(&self) -> Result<GapMap> {
        let mut gaps = match &self.preset {
            Some(p) => preset(p)?.gaps().to_vec(),
            None => Vec::new(),
        };
        for s in &self.missing {
            let (a, b) = parse_range(s)?;
            gaps.push(Gap::missing(a, b));
        }
        for s in &self.interfered {
            let (a, b) = parse_range(s)?;
            gaps.push(Gap::interfered(a, b));
        }
        let map = GapMap::new(gaps)?;
        map.validate(self.grid.num_tones)?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.schemes.is_empty() {
            return bad("no schemes selected".into());
        }
        if self.snr_db.is_nan() || self.sir_db.is_nan() {
            return bad("snr_db and sir_db must be numbers".into());
        }
        if let Some(f) = self.smoothing_fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return bad(format!("smoothing fraction {f} outside (0, 1)"));
        }
        self.grid.validate()?;
        self.channel.validate()?;
        self.gap_map()?;
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::GapKind;

    fn blocks(map: &GapMap, kind: GapKind) -> Vec<(usize, usize)> {
        map.gaps().iter().filter(|g| g.kind == kind).map(|g| (g.start, g.end)).collect()
    }

    #[test]
    fn presets_match_index_sets() {
        let g1 = preset("gap1").unwrap();
        assert_eq!(blocks(&g1, GapKind::Missing), vec![(0, 2), (24, 26), (78, 79)]);
        assert!(blocks(&g1, GapKind::Interfered).is_empty());
        let g6 = preset("gap6").unwrap();
        assert_eq!(
            blocks(&g6, GapKind::Interfered),
            vec![(12, 13), (37, 39), (40, 41), (53, 55), (61, 64), (70, 72)]
        );
        assert_eq!(blocks(&g6, GapKind::Missing).len(), 3);
        assert_eq!(preset("gap5").unwrap().num_tones(), 8 + 16);
        assert_eq!(preset("gap4").unwrap().num_tones(), 8 + 9);
        for p in PRESETS {
            preset(p).unwrap().validate(80).unwrap();
        }
        assert!(matches!(preset("gap7"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig {
            preset: Some("gap2".into()),
            interfered: vec!["50:51".into()],
            schemes: vec![Scheme::Mps, Scheme::Nn],
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.gap_map().unwrap().len(), 5);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 9\nschemes = [\"wps\"]\n[channel]\nrician_db = 5.0\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.realizations, 500);
        assert_eq!(cfg.channel.rician_db, 5.0);
        assert_eq!(cfg.channel.ray_rate_inv_s, 4e-9);
    }

    #[test]
    fn toml_errors_carry_lines() {
        let err = ExperimentConfig::from_toml("seed = 1\n\nrealizations = \"many\"\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(ExperimentConfig::from_toml("realizations = 0").is_err());
        assert!(ExperimentConfig::from_toml("preset = \"gap9\"").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn scheme_names() {
        for s in Scheme::ALL {
            assert_eq!(Scheme::parse(s.name()).unwrap(), s);
        }
        assert_eq!(Scheme::parse_list("mps, nn-unscheduled").unwrap(), vec![Scheme::Mps, Scheme::NnUnscheduled]);
        assert!(Scheme::parse("music").is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("3:5").unwrap(), (3, 5));
        assert_eq!(parse_range(" 7 ").unwrap(), (7, 7));
        assert!(parse_range("5:3").is_err());
        assert!(parse_range("x").is_err());
    }
}
