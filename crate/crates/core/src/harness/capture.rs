//! Line-oriented IQ capture files.
//!
//! ```text
//! # comment
//! f0_hz = 2401000000
//! delta_f_hz = 1000000
//! K = 80
//! index,avail,interfered,re_I,im_I,re_R,im_R
//! 0,1,0,7.0710678118654757e-1,...
//! ```
//!
//! Header keys accept `=`, `:` or whitespace as separator. Reals are written
//! with 17 significant digits so files round-trip bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sim::{Gap, GapKind, GapMap, IqCapture, ToneGrid};

pub fn format_capture(capture: &IqCapture) -> Result<String> {
    capture.validate()?;
    let g = &capture.grid;
    let mut out = String::new();
    writeln!(out, "f0_hz = {}", g.f0_hz).unwrap();
    writeln!(out, "delta_f_hz = {}", g.delta_f_hz).unwrap();
    writeln!(out, "K = {}", g.num_tones).unwrap();
    writeln!(out, "index,avail,interfered,re_I,im_I,re_R,im_R").unwrap();
    for k in 0..g.num_tones {
        let (i, r) = (capture.iq_initiator[k], capture.iq_reflector[k]);
        writeln!(
            out,
            "{k},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            u8::from(capture.available[k]),
            u8::from(capture.interfered[k]),
            i.re,
            i.im,
            r.re,
            r.im
        )
        .unwrap();
    }
    Ok(out)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_capture(text: &str) -> Result<IqCapture> {
    let mut f0 = None;
    let mut df = None;
    let mut k_total: Option<usize> = None;
    let mut rows: Vec<Option<(bool, bool, Complex64, Complex64)>> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with("index") {
            continue;
        }
        if line.starts_with(|c: char| c.is_ascii_digit()) {
            let k = k_total.ok_or_else(|| parse_err(line_no, "tone record before the K header"))?;
            if rows.is_empty() {
                rows = vec![None; k];
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 7 {
                return Err(parse_err(line_no, format!("expected 7 fields, found {}", fields.len())));
            }
            let idx: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad index `{}`", fields[0])))?;
            if idx >= k {
                return Err(parse_err(line_no, format!("index {idx} outside 0..{k}")));
            }
            if rows[idx].is_some() {
                return Err(parse_err(line_no, format!("duplicate index {idx}")));
            }
            let flag = |s: &str, name: &str| match s {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(parse_err(line_no, format!("{name} must be 0 or 1, got `{s}`"))),
            };
            let real = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(line_no, format!("bad number `{s}`")))
            };
            rows[idx] = Some((
                flag(fields[1], "avail")?,
                flag(fields[2], "interfered")?,
                Complex64::new(real(fields[3])?, real(fields[4])?),
                Complex64::new(real(fields[5])?, real(fields[6])?),
            ));
            continue;
        }
        let (key, value) = line
            .split_once(['=', ':'])
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| parse_err(line_no, format!("unrecognized line `{line}`")))?;
        let value = value.trim();
        let number = || {
            value
                .parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("bad value `{value}` for {}", key.trim())))
        };
        match key.trim() {
            "f0_hz" => f0 = Some(number()?),
            "delta_f_hz" => df = Some(number()?),
            "K" | "k" | "num_tones" => {
                if !rows.is_empty() {
                    return Err(parse_err(line_no, "K header after tone records"));
                }
                k_total = Some(
                    value
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("bad tone count `{value}`")))?,
                );
            }
            other => return Err(parse_err(line_no, format!("unknown header `{other}`"))),
        }
    }

    let last = text.lines().count();
    let missing = |name: &str| parse_err(last, format!("missing {name} header"));
    let grid = ToneGrid::new(f0.ok_or_else(|| missing("f0_hz"))?, df.ok_or_else(|| missing("delta_f_hz"))?, k_total.ok_or_else(|| missing("K"))?)?;
    let k = grid.num_tones;
    if rows.is_empty() {
        rows = vec![None; k];
    }
    if let Some(absent) = rows.iter().position(Option::is_none) {
        return Err(parse_err(last, format!("no record for tone {absent} of {k}")));
    }
    let rows: Vec<_> = rows.into_iter().flatten().collect();
    let capture = IqCapture {
        grid,
        available: rows.iter().map(|r| r.0).collect(),
        interfered: rows.iter().map(|r| r.1).collect(),
        iq_initiator: rows.iter().map(|r| r.2).collect(),
        iq_reflector: rows.iter().map(|r| r.3).collect(),
    };
    if let Some(k) = (0..k).find(|&k| capture.available[k] && capture.interfered[k]) {
        return Err(Error::InvalidParameter(format!("tone {k} is flagged both available and interfered")));
    }
    Ok(capture)
}

pub fn write_capture(path: impl AsRef<Path>, capture: &IqCapture) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_capture(capture)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_capture(path: impl AsRef<Path>) -> Result<IqCapture> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_capture(&text)
}

/// Gap blocks of a capture's availability mask. A block is interfered when
/// any of its tones carries the interference flag.
pub fn capture_gaps(capture: &IqCapture) -> GapMap {
    let blocks = GapMap::from_mask(&capture.available);
    let gaps = blocks
        .gaps()
        .iter()
        .map(|g| {
            let kind = if g.indices().any(|k| capture.interfered[k]) {
                GapKind::Interfered
            } else {
                GapKind::Missing
            };
            Gap { kind, ..*g }
        })
        .collect();
    GapMap::new(gaps).expect("mask blocks are disjoint")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{apply_gap_map, sample_sv_channel, synthesize_iq, SvParams};

    fn capture() -> IqCapture {
        let ch = sample_sv_channel(&SvParams::default(), 3).unwrap();
        let cap = synthesize_iq(&ch, &ToneGrid::ble(), 20.0, 4).unwrap();
        let gaps = GapMap::new(vec![Gap::missing(0, 2), Gap::interfered(40, 41)]).unwrap();
        apply_gap_map(&cap, &gaps, 0.0, 5).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let cap = capture();
        let text = format_capture(&cap).unwrap();
        assert_eq!(parse_capture(&text).unwrap(), cap);
        let gaps = capture_gaps(&cap);
        assert_eq!(gaps.gaps(), &[Gap::missing(0, 2), Gap::interfered(40, 41)]);
    }

    #[test]
    fn accepts_loose_headers_and_order() {
        let text = "# two tones\nf0_hz: 2.4e9\ndelta_f_hz 1e6\nK=2\n1,1,0,0,1,0,1\n0,0,0,0,0,0,0\n";
        let cap = parse_capture(text).unwrap();
        assert_eq!(cap.available, vec![false, true]);
        assert_eq!(cap.iq_reflector[1], Complex64::new(0.0, 1.0));
    }

    fn line_of(text: &str) -> usize {
        match parse_capture(text).unwrap_err() {
            Error::Parse { line, .. } => line,
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let head = "f0_hz = 2.4e9\ndelta_f_hz = 1e6\nK = 2\n";
        assert_eq!(line_of(&format!("{head}0,1,0,1,0,1\n")), 4);
        assert_eq!(line_of(&format!("{head}0,1,0,1,0,1,0\n0,1,0,1,0,1,0\n")), 5);
        assert_eq!(line_of(&format!("{head}0,2,0,1,0,1,0\n")), 4);
        assert_eq!(line_of(&format!("{head}0,1,0,x,0,1,0\n")), 4);
        assert_eq!(line_of(&format!("{head}5,1,0,1,0,1,0\n")), 4);
        assert_eq!(line_of(&format!("{head}0,1,0,1,0,1,0\n")), 4);
        assert_eq!(line_of("f0_hz = 2.4e9\nwat = 3\n"), 2);
        assert_eq!(line_of("0,1,0,1,0,1,0\n"), 1);
    }
}
