use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub channels: u16,
}

/// Reads one channel of a 16/24-bit integer or 32-bit float WAV, scaled to
/// [-1, 1).
pub fn read_channel(path: &Path, channel: u16) -> CliResult<Audio> {
    let reader = WavReader::open(path).map_err(|e| CliError::io(path.display(), e))?;
    let spec = reader.spec();
    if channel >= spec.channels {
        return Err(CliError::Usage(format!(
            "channel {channel} requested but {} has {} channel(s)",
            path.display(),
            spec.channels
        )));
    }
    let stride = spec.channels as usize;
    let pick = channel as usize;
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1u32 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .skip(pick)
                .step_by(stride)
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::io(path.display(), e))?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .skip(pick)
            .step_by(stride)
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::io(path.display(), e))?,
        (fmt, bits) => {
            return Err(CliError::Io(format!(
                "{}: unsupported sample format {fmt:?} with {bits} bits",
                path.display()
            )))
        }
    };
    Ok(Audio {
        samples,
        sample_rate: spec.sample_rate,
        channels: spec.channels,
    })
}

/// Writes mono 32-bit float samples.
pub fn write_f32(path: &Path, samples: &[f64], sample_rate: u32) -> CliResult<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| CliError::io(path.display(), e))?;
    for &s in samples {
        w.write_sample(s as f32).map_err(|e| CliError::io(path.display(), e))?;
    }
    w.finalize().map_err(|e| CliError::io(path.display(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x = [0.0, 0.5, -0.25, 0.125];
        write_f32(&p, &x, 8000).unwrap();
        let a = read_channel(&p, 0).unwrap();
        assert_eq!(a.samples, x);
        assert_eq!(a.sample_rate, 8000);
    }

    #[test]
    fn picks_requested_channel_of_int24() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for (l, r) in [(1 << 22, -(1 << 21)), (0, 1 << 20)] {
            w.write_sample(l).unwrap();
            w.write_sample(r).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(read_channel(&p, 0).unwrap().samples, vec![0.5, 0.0]);
        assert_eq!(read_channel(&p, 1).unwrap().samples, vec![-0.25, 0.125]);
        assert!(matches!(read_channel(&p, 2), Err(CliError::Usage(_))));
    }

    #[test]
    fn rejects_8_bit_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(3i8).unwrap();
        w.finalize().unwrap();
        assert_eq!(read_channel(&p, 0).unwrap_err().exit_code(), 2);
        assert_eq!(read_channel(&dir.path().join("none.wav"), 0).unwrap_err().exit_code(), 2);
    }
}
