//! Multichannel waveforms and RIFF/WAVE reading and writing.
//!
//! Only PCM-16 and IEEE float-32 payloads are supported. Samples are held
//! as `f64` in a channels × frames matrix, nominally in `[-1, 1]`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use thiserror::Error;

const WAVE_FORMAT_PCM: u16 = 1;
const WAVE_FORMAT_IEEE_FLOAT: u16 = 3;
const WAVE_FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed RIFF/WAVE data: {0}")]
    Malformed(String),
    #[error("unsupported WAV encoding: format tag {format_tag:#06x}, {bits} bits per sample")]
    UnsupportedEncoding { format_tag: u16, bits: u16 },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Sample encoding used when writing a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Pcm16,
    Float32,
}

/// Multichannel time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Array2<f64>,
    sample_rate: u32,
}

impl Waveform {
    /// Builds a waveform from a channels × frames matrix.
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.nrows() == 0 {
            return Err(AudioError::InvalidWaveform("at least one channel is required".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidWaveform("sample rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        let n = samples.len();
        let samples = Array2::from_shape_vec((1, n), samples)
            .map_err(|e| AudioError::InvalidWaveform(e.to_string()))?;
        Self::new(samples, sample_rate)
    }

    /// Stacks equal-length channels into one waveform.
    pub fn from_channels(channels: &[Array1<f64>], sample_rate: u32) -> Result<Self, AudioError> {
        let Some(first) = channels.first() else {
            return Err(AudioError::InvalidWaveform("at least one channel is required".into()));
        };
        let n = first.len();
        if channels.iter().any(|c| c.len() != n) {
            return Err(AudioError::InvalidWaveform("channels differ in length".into()));
        }
        let mut samples = Array2::zeros((channels.len(), n));
        for (mut row, ch) in samples.rows_mut().into_iter().zip(channels) {
            row.assign(ch);
        }
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut Array2<f64> {
        &mut self.samples
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn num_frames(&self) -> usize {
        self.samples.ncols()
    }

    pub fn channel(&self, index: usize) -> Result<ArrayView1<'_, f64>, AudioError> {
        if index >= self.num_channels() {
            return Err(AudioError::InvalidWaveform(format!(
                "channel {index} out of range for {} channels",
                self.num_channels()
            )));
        }
        Ok(self.samples.index_axis(Axis(0), index))
    }

    /// Single-channel copy of one channel.
    pub fn select_channel(&self, index: usize) -> Result<Waveform, AudioError> {
        let ch = self.channel(index)?;
        let samples = ch.to_owned().insert_axis(Axis(0));
        Ok(Self { samples, sample_rate: self.sample_rate })
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> AudioError + '_ {
    move |source| AudioError::Io { path: path.to_path_buf(), source }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], AudioError> {
        if self.data.len() - self.pos < n {
            return Err(AudioError::Malformed(format!("truncated while reading {what}")));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16, AudioError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, AudioError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[derive(Debug, Clone, Copy)]
struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn parse_fmt(body: &[u8]) -> Result<Format, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::Malformed("fmt chunk shorter than 16 bytes".into()));
    }
    let mut r = Reader { data: body, pos: 0 };
    let mut tag = r.u16("format tag")?;
    let channels = r.u16("channel count")?;
    let sample_rate = r.u32("sample rate")?;
    let _byte_rate = r.u32("byte rate")?;
    let _block_align = r.u16("block align")?;
    let bits = r.u16("bits per sample")?;
    if tag == WAVE_FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) then the sub-format GUID whose
        // first two bytes carry the effective format tag.
        if body.len() < 26 {
            return Err(AudioError::Malformed("extensible fmt chunk too short".into()));
        }
        tag = u16::from_le_bytes([body[24], body[25]]);
    }
    if channels == 0 {
        return Err(AudioError::Malformed("zero channels".into()));
    }
    if sample_rate == 0 {
        return Err(AudioError::Malformed("zero sample rate".into()));
    }
    Ok(Format { tag, channels, sample_rate, bits })
}

/// Reads a PCM-16 or float-32 WAV file into a waveform, channels in file order.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AudioError::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_wav(&bytes)
}

/// Decodes an in-memory RIFF/WAVE image.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    let mut r = Reader { data: bytes, pos: 0 };
    if r.take(4, "RIFF tag")? != b"RIFF" {
        return Err(AudioError::Malformed("missing RIFF tag".into()));
    }
    let _riff_size = r.u32("RIFF size")?;
    if r.take(4, "WAVE tag")? != b"WAVE" {
        return Err(AudioError::Malformed("missing WAVE tag".into()));
    }

    let mut format: Option<Format> = None;
    let mut payload: Option<&[u8]> = None;
    while r.pos + 8 <= bytes.len() {
        let id = r.take(4, "chunk id")?;
        let size = r.u32("chunk size")? as usize;
        let body = r.take(size, "chunk body")?;
        if size % 2 == 1 && r.pos < bytes.len() {
            r.pos += 1;
        }
        match id {
            b"fmt " => format = Some(parse_fmt(body)?),
            b"data" => {
                payload = Some(body);
                break;
            }
            _ => {}
        }
    }
    let format = format.ok_or_else(|| AudioError::Malformed("no fmt chunk".into()))?;
    let payload = payload.ok_or_else(|| AudioError::Malformed("no data chunk".into()))?;

    let bytes_per_sample = match (format.tag, format.bits) {
        (WAVE_FORMAT_PCM, 16) => 2,
        (WAVE_FORMAT_IEEE_FLOAT, 32) => 4,
        (tag, bits) => return Err(AudioError::UnsupportedEncoding { format_tag: tag, bits }),
    };
    let channels = format.channels as usize;
    let frame_bytes = bytes_per_sample * channels;
    if payload.len() % frame_bytes != 0 {
        return Err(AudioError::Malformed(format!(
            "data chunk of {} bytes is not a whole number of {frame_bytes}-byte frames",
            payload.len()
        )));
    }
    let frames = payload.len() / frame_bytes;
    let mut samples = Array2::zeros((channels, frames));
    for (i, chunk) in payload.chunks_exact(bytes_per_sample).enumerate() {
        let value = if bytes_per_sample == 2 {
            f64::from(i16::from_le_bytes([chunk[0], chunk[1]])) / 32768.0
        } else {
            f64::from(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]))
        };
        samples[(i % channels, i / channels)] = value;
    }
    Waveform::new(samples, format.sample_rate)
}

fn pcm16_quantize(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a waveform as a RIFF/WAVE image.
pub fn encode_wav(w: &Waveform, encoding: Encoding) -> Vec<u8> {
    let channels = w.num_channels() as u16;
    let (tag, bits) = match encoding {
        Encoding::Pcm16 => (WAVE_FORMAT_PCM, 16u16),
        Encoding::Float32 => (WAVE_FORMAT_IEEE_FLOAT, 32u16),
    };
    let block_align = channels * (bits / 8);
    let data_len = w.num_frames() * block_align as usize;
    let float = encoding == Encoding::Float32;
    // Float files carry cbSize and a fact chunk as the WAVE rules require for
    // non-PCM data.
    let fmt_len: u32 = if float { 18 } else { 16 };
    let fact_len: u32 = if float { 12 } else { 0 };
    let riff_len = 4 + (8 + fmt_len) + fact_len + 8 + data_len as u32;

    let mut out = Vec::with_capacity(riff_len as usize + 8);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&riff_len.to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&fmt_len.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * u32::from(block_align)).to_le_bytes());
    out.extend_from_slice(&block_align.to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    if float {
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(b"fact");
        out.extend_from_slice(&4u32.to_le_bytes());
        out.extend_from_slice(&(w.num_frames() as u32).to_le_bytes());
    }
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    let samples = w.samples();
    for t in 0..w.num_frames() {
        for m in 0..w.num_channels() {
            let x = samples[(m, t)];
            match encoding {
                Encoding::Pcm16 => out.extend_from_slice(&pcm16_quantize(x).to_le_bytes()),
                Encoding::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
            }
        }
    }
    out
}

/// Writes a waveform as a standard WAV file. Zero-length waveforms produce a
/// valid file with an empty data chunk.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, encoding: Encoding) -> Result<(), AudioError> {
    let path = path.as_ref();
    let bytes = encode_wav(w, encoding);
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&bytes).map_err(io_err(path))?;
    Ok(())
}
