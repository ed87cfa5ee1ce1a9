//! Binary coefficient file: header, dictionary list, then one record per
//! selection in order. All integers and floats are little-endian.

use std::path::Path;

use mgmp::{CoefficientGrid, GaborDictParams, MultiDict, WindowKind, WindowSpec};
use num_complex::Complex64;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 8] = b"MGMPCOEF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefRecord {
    pub dict: u16,
    pub bin: u32,
    pub frame: u32,
    pub value: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefFile {
    /// Padded decomposition length.
    pub len: u64,
    /// Samples written to audio outputs.
    pub orig_len: u64,
    pub sample_rate: u32,
    pub dicts: Vec<GaborDictParams>,
    pub records: Vec<CoefRecord>,
}

impl CoefFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.dicts.len() * 33 + self.records.len() * 26);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.len.to_le_bytes());
        out.extend_from_slice(&self.orig_len.to_le_bytes());
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        out.extend_from_slice(&(self.dicts.len() as u16).to_le_bytes());
        for d in &self.dicts {
            out.push(d.window.kind.code());
            out.extend_from_slice(&(d.window.gl as u64).to_le_bytes());
            out.extend_from_slice(&d.window.tfr.to_le_bytes());
            out.extend_from_slice(&(d.a as u64).to_le_bytes());
            out.extend_from_slice(&(d.m as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&r.dict.to_le_bytes());
            out.extend_from_slice(&r.bin.to_le_bytes());
            out.extend_from_slice(&r.frame.to_le_bytes());
            out.extend_from_slice(&r.value.re.to_le_bytes());
            out.extend_from_slice(&r.value.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> CliResult<Self> {
        let mut c = Reader { bytes, pos: 0 };
        if c.take(8)? != MAGIC {
            return Err(CliError::Format("not a coefficient file (bad magic)".into()));
        }
        let version = c.u32()?;
        if version != VERSION {
            return Err(CliError::Format(format!(
                "coefficient file version {version}, expected {VERSION}"
            )));
        }
        let len = c.u64()?;
        let orig_len = c.u64()?;
        let sample_rate = c.u32()?;
        let count = c.u16()?;
        let mut dicts = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let code = c.u8()?;
            let kind = WindowKind::from_code(code)
                .ok_or_else(|| CliError::Format(format!("unknown window code {code}")))?;
            let gl = c.u64()? as usize;
            let tfr = c.f64()?;
            let a = c.u64()? as usize;
            let m = c.u64()? as usize;
            dicts.push(GaborDictParams::new(WindowSpec::new(kind, gl, tfr), a, m));
        }
        let n = c.u64()?;
        let remaining = bytes.len() - c.pos;
        if n.checked_mul(26) != Some(remaining as u64) {
            return Err(CliError::Format(format!(
                "{n} records declared but {remaining} payload bytes present"
            )));
        }
        let mut records = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let dict = c.u16()?;
            let bin = c.u32()?;
            let frame = c.u32()?;
            let re = c.f64()?;
            let im = c.f64()?;
            records.push(CoefRecord {
                dict,
                bin,
                frame,
                value: Complex64::new(re, im),
            });
        }
        Ok(CoefFile {
            len,
            orig_len,
            sample_rate,
            dicts,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path.display(), e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::from_bytes(&bytes)
    }

    /// Accumulates the records, in order, into one grid per dictionary.
    pub fn grids(&self, multidict: &MultiDict) -> CliResult<Vec<CoefficientGrid>> {
        let len = multidict.len();
        let mut grids: Vec<CoefficientGrid> = multidict
            .dicts()
            .iter()
            .enumerate()
            .map(|(w, d)| CoefficientGrid::zeros(w, d, len))
            .collect();
        for r in &self.records {
            let g = grids.get_mut(r.dict as usize).ok_or_else(|| {
                CliError::Format(format!("record refers to dictionary {}", r.dict))
            })?;
            let (m, n) = (r.bin as usize, r.frame as usize);
            if m >= g.bins || n >= g.frames {
                return Err(CliError::Format(format!(
                    "record ({}, {m}, {n}) outside {}x{} grid",
                    r.dict, g.bins, g.frames
                )));
            }
            *g.get_mut(m, n) += r.value;
        }
        Ok(grids)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(CliError::Format("coefficient file truncated".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> CliResult<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> CliResult<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mgmp::validate_multidict;

    fn sample() -> CoefFile {
        CoefFile {
            len: 256,
            orig_len: 250,
            sample_rate: 16000,
            dicts: vec!["hann:32:8".parse().unwrap(), "gauss:64:16".parse().unwrap()],
            records: vec![
                CoefRecord {
                    dict: 0,
                    bin: 3,
                    frame: 5,
                    value: Complex64::new(0.5, -0.25),
                },
                CoefRecord {
                    dict: 1,
                    bin: 32,
                    frame: 15,
                    value: Complex64::new(-1.0, 0.0),
                },
                CoefRecord {
                    dict: 0,
                    bin: 3,
                    frame: 5,
                    value: Complex64::new(0.25, 0.25),
                },
            ],
        }
    }

    #[test]
    fn bytes_round_trip() {
        let f = sample();
        assert_eq!(CoefFile::from_bytes(&f.to_bytes()).unwrap(), f);
    }

    #[test]
    fn repeated_positions_accumulate() {
        let f = sample();
        let md = validate_multidict(&f.dicts, 256).unwrap();
        let g = f.grids(&md).unwrap();
        assert_eq!(g[0].get(3, 5), Complex64::new(0.75, 0.0));
        assert_eq!(g[1].get(32, 15), Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(CoefFile::from_bytes(&bad).unwrap_err().exit_code(), 5);
        let mut bad = bytes.clone();
        bad[8] = 2;
        assert_eq!(CoefFile::from_bytes(&bad).unwrap_err().exit_code(), 5);
        assert_eq!(CoefFile::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err().exit_code(), 5);
    }

    #[test]
    fn out_of_range_record_rejected() {
        let mut f = sample();
        f.records[0].bin = 17;
        let md = validate_multidict(&f.dicts, 256).unwrap();
        assert_eq!(f.grids(&md).unwrap_err().exit_code(), 5);
    }
}
