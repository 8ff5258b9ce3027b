//! Little-endian binary model files.
//!
//! A bank file is the magic `TGNB`, a u32 version, a u8 precision tag
//! (4 or 8 bytes per real) and a u32 model count, followed by the models.
//! Each model is a u8 kind, u32 width, u32 hidden and then the arrays
//! w_in, b_hidden, w_out, b_out, in_mean, in_std, out_mean, out_std.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::model::{ModelKind, NnBank, NnModel};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TGNB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            4 => Ok(Precision::F32),
            8 => Ok(Precision::F64),
            _ => Err(corrupt(format!("unknown precision tag {tag}"))),
        }
    }
}

fn corrupt(message: String) -> Error {
    Error::Io(format!("bad model file: {message}"))
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn write_reals(w: &mut impl Write, values: &[f64], precision: Precision) -> Result<()> {
    for &v in values {
        match precision {
            Precision::F32 => w.write_all(&(v as f32).to_le_bytes())?,
            Precision::F64 => w.write_all(&v.to_le_bytes())?,
        }
    }
    Ok(())
}

fn read_reals(r: &mut impl Read, n: usize, precision: Precision) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| match precision {
            Precision::F32 => {
                let mut b = [0u8; 4];
                r.read_exact(&mut b)?;
                Ok(f32::from_le_bytes(b) as f64)
            }
            Precision::F64 => {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                Ok(f64::from_le_bytes(b))
            }
        })
        .collect()
}

fn write_model(w: &mut impl Write, m: &NnModel, precision: Precision) -> Result<()> {
    w.write_all(&[match m.kind {
        ModelKind::Interior => 0,
        ModelKind::Edge => 1,
    }])?;
    write_u32(w, m.width as u32)?;
    write_u32(w, m.hidden as u32)?;
    for v in [&m.w_in, &m.b_hidden, &m.w_out, &m.b_out, &m.in_mean, &m.in_std, &m.out_mean, &m.out_std] {
        write_reals(w, v, precision)?;
    }
    Ok(())
}

fn read_model(r: &mut impl Read, precision: Precision) -> Result<NnModel> {
    let kind = match read_u8(r)? {
        0 => ModelKind::Interior,
        1 => ModelKind::Edge,
        t => return Err(corrupt(format!("unknown model kind {t}"))),
    };
    let width = read_u32(r)? as usize;
    let hidden = read_u32(r)? as usize;
    if width == 0 || hidden == 0 || width > 1 << 16 || hidden > 1 << 16 {
        return Err(corrupt(format!("implausible model shape {width}x{hidden}")));
    }
    let mut m = NnModel::zeroed(kind, width, hidden)?;
    for v in [
        &mut m.w_in,
        &mut m.b_hidden,
        &mut m.w_out,
        &mut m.b_out,
        &mut m.in_mean,
        &mut m.in_std,
        &mut m.out_mean,
        &mut m.out_std,
    ] {
        *v = read_reals(r, v.len(), precision)?;
    }
    m.check()?;
    Ok(m)
}

pub fn write_bank(w: &mut impl Write, bank: &NnBank, precision: Precision) -> Result<()> {
    w.write_all(MAGIC)?;
    write_u32(w, FORMAT_VERSION)?;
    w.write_all(&[precision.bytes() as u8])?;
    let models: Vec<&NnModel> = bank.interior.iter().chain(&bank.edge).collect();
    write_u32(w, models.len() as u32)?;
    for m in models {
        write_model(w, m, precision)?;
    }
    Ok(())
}

pub fn read_bank(r: &mut impl Read) -> Result<NnBank> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(corrupt("missing magic".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let precision = Precision::from_tag(read_u8(r)?)?;
    let count = read_u32(r)? as usize;
    let mut interior = Vec::new();
    let mut edge = Vec::new();
    for _ in 0..count {
        let m = read_model(r, precision)?;
        match m.kind {
            ModelKind::Interior => interior.push(m),
            ModelKind::Edge => edge.push(m),
        }
    }
    NnBank::new(interior, edge)
}

pub fn save_bank(path: impl AsRef<Path>, bank: &NnBank, precision: Precision) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_bank(&mut w, bank, precision)?;
    Ok(w.flush()?)
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<NnBank> {
    read_bank(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::rng_from;

    fn bank() -> NnBank {
        let mut rng = rng_from(17);
        let mut make = |kind, w| {
            let mut m = NnModel::xavier(kind, w, 3, &mut rng).unwrap();
            m.in_std.iter_mut().enumerate().for_each(|(i, s)| *s = 0.5 + i as f64);
            m.out_mean.iter_mut().enumerate().for_each(|(i, s)| *s = i as f64 - 1.3);
            m
        };
        let interior = vec![make(ModelKind::Interior, 1), make(ModelKind::Interior, 2)];
        let edge = vec![make(ModelKind::Edge, 1)];
        NnBank::new(interior, edge).unwrap()
    }

    #[test]
    fn f64_round_trip_is_exact() {
        let b = bank();
        let mut buf = Vec::new();
        write_bank(&mut buf, &b, Precision::F64).unwrap();
        let back = read_bank(&mut buf.as_slice()).unwrap();
        assert_eq!(back, b);
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).cos()).collect();
        let m = b.model(ModelKind::Interior, 2).unwrap();
        let m2 = back.model(ModelKind::Interior, 2).unwrap();
        let (a, c) = (m.forward_features(&x).unwrap(), m2.forward_features(&x).unwrap());
        assert!(a.iter().zip(&c).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn f32_file_size_and_values() {
        let b = bank();
        let mut buf = Vec::new();
        write_bank(&mut buf, &b, Precision::F32).unwrap();
        let header = 4 + 4 + 1 + 4;
        let per_model = 1 + 4 + 4;
        assert_eq!(buf.len(), header + 3 * per_model + 4 * b.param_count());
        let back = read_bank(&mut buf.as_slice()).unwrap();
        let (w0, w1) = (&b.interior[1].w_in, &back.interior[1].w_in);
        assert!(w0.iter().zip(w1).all(|(a, c)| (a - c).abs() <= 1e-6 * a.abs().max(1.0)));
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_bank(&mut &b"NOPE\x01\x00\x00\x00"[..]).is_err());
        let mut buf = Vec::new();
        write_bank(&mut buf, &bank(), Precision::F64).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_bank(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.bin");
        save_bank(&path, &bank(), Precision::F64).unwrap();
        assert_eq!(load_bank(&path).unwrap(), bank());
    }
}
