//! Minimal RIFF/WAVE reader for PCM16 and IEEE float32, plus a PCM16 writer.

use std::fs;
use std::path::Path;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy)]
struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

/// Reads a WAV file, scales samples to `[-1, 1]` and averages channels.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes, path)
}

fn le16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub(crate) fn decode_wav(bytes: &[u8], path: &Path) -> Result<Waveform> {
    let corrupt = |message: &str| Error::CorruptFile {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let unsupported = |message: String| Error::UnsupportedFormat {
        path: path.to_path_buf(),
        message,
    };

    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(corrupt("missing RIFF/WAVE header"));
    }

    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le32(&bytes[pos + 4..pos + 8]) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| corrupt("chunk extends past end of file"))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(corrupt("fmt chunk too short"));
                }
                let mut tag = le16(&body[0..2]);
                if tag == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(corrupt("extensible fmt chunk too short"));
                    }
                    // first two bytes of the sub-format GUID carry the format code
                    tag = le16(&body[24..26]);
                }
                format = Some(Format {
                    tag,
                    channels: le16(&body[2..4]),
                    sample_rate: le32(&body[4..8]),
                    bits: le16(&body[14..16]),
                });
            }
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let format = format.ok_or_else(|| corrupt("no fmt chunk"))?;
    let data = data.ok_or_else(|| corrupt("no data chunk"))?;
    if format.channels == 0 || format.sample_rate == 0 {
        return Err(corrupt("zero channels or sample rate"));
    }

    let decode: fn(&[u8]) -> f64 = match (format.tag, format.bits) {
        (FORMAT_PCM, 16) => |b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0,
        (FORMAT_IEEE_FLOAT, 32) => |b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        (tag, bits) => {
            return Err(unsupported(format!(
                "format tag {tag} with {bits} bits per sample (need PCM16 or float32)"
            )))
        }
    };
    let width = format.bits as usize / 8;
    let frame_bytes = width * format.channels as usize;
    if data.is_empty() {
        return Err(corrupt("empty data chunk"));
    }
    if data.len() % frame_bytes != 0 {
        return Err(corrupt("data chunk is not a whole number of sample frames"));
    }

    let channels = format.channels as f64;
    let samples: Vec<f64> = data
        .chunks_exact(frame_bytes)
        .map(|frame| frame.chunks_exact(width).map(decode).sum::<f64>() / channels)
        .collect();
    Waveform::new(samples, format.sample_rate).map_err(|e| corrupt(&e.to_string()))
}

/// Writes mono 16-bit PCM, clipping to `[-1, 1)`.
pub fn write_wav_pcm16(path: &Path, wave: &Waveform) -> Result<()> {
    let n = wave.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&wave.sample_rate().to_le_bytes());
    out.extend_from_slice(&(wave.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in wave.samples() {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
