//! Mono sample buffers tagged with the filter domain they live in, and
//! 16-bit PCM WAV I/O.

use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Which filters have been applied to a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Natural,
    PreEmphasized,
    Perceptual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub domain: Domain,
}

impl SignalBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32, domain: Domain) -> Self {
        Self {
            samples,
            sample_rate,
            domain,
        }
    }

    /// A 16 kHz natural-domain signal.
    pub fn natural(samples: Vec<f32>) -> Self {
        Self::new(samples, SAMPLE_RATE, Domain::Natural)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub(crate) fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::DomainMismatch {
                expected,
                actual: self.domain,
            });
        }
        Ok(())
    }

    pub(crate) fn expect_rate(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate(self.sample_rate));
        }
        Ok(())
    }
}

fn wav_spec() -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

/// Reads a 16-bit PCM mono 16 kHz WAV file as a natural-domain signal.
pub fn read_wav(path: impl AsRef<Path>) -> Result<SignalBuffer> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    decode_wav(hound::WavReader::new(file)?)
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<SignalBuffer> {
    decode_wav(hound::WavReader::new(std::io::Cursor::new(bytes))?)
}

fn decode_wav<R: std::io::Read>(reader: hound::WavReader<R>) -> Result<SignalBuffer> {
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::InvalidArgument(format!(
            "expected 16-bit PCM mono, got {} channel(s), {} bits, {:?}",
            spec.channels, spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate(spec.sample_rate));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SignalBuffer::natural(samples))
}

/// Converts a sample in [−1, 1] to 16-bit PCM, saturating.
pub fn to_pcm16(x: f32) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_wav(path: impl AsRef<Path>, signal: &SignalBuffer) -> Result<()> {
    signal.expect_rate()?;
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut writer = hound::WavWriter::new(file, wav_spec())?;
    for &s in &signal.samples {
        writer.write_sample(to_pcm16(s))?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_wav_bytes(signal: &SignalBuffer) -> Result<Vec<u8>> {
    signal.expect_rate()?;
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, wav_spec())?;
        for &s in &signal.samples {
            writer.write_sample(to_pcm16(s))?;
        }
        writer.finalize()?;
    }
    Ok(cursor.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_bytes_roundtrip_quantizes_to_16_bit() {
        let sig = SignalBuffer::natural(vec![0.0, 0.5, -0.5, 0.999, -1.0]);
        let bytes = write_wav_bytes(&sig).unwrap();
        let back = read_wav_bytes(&bytes).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in sig.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn rejects_wrong_rate() {
        let sig = SignalBuffer::new(vec![0.0; 4], 8000, Domain::Natural);
        assert!(matches!(write_wav_bytes(&sig), Err(Error::SampleRate(8000))));
    }

    #[test]
    fn pcm_saturates() {
        assert_eq!(to_pcm16(2.0), 32767);
        assert_eq!(to_pcm16(-2.0), -32768);
    }
}
