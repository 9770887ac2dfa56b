use std::path::Path;

use ndarray::Array2;

use super::bytes::{magic_string, put_f32s, Reader};
use super::{read_bytes, write_atomic, StoreError};
use crate::sigsim::{Finger, RecordSet, TouchEvent, RECEIVERS};

pub const DATASET_MAGIC: &[u8; 4] = b"LWTD";
pub const DATASET_VERSION: u16 = 1;
/// Magic, version, record count, channels, samples per channel.
pub const DATASET_HEADER_LEN: usize = 4 + 2 + 4 + 1 + 2;
const RECORD_META_LEN: usize = 3 * 4 + 1;

/// Exact file length for `count` records of `channels x samples` waveforms.
pub fn dataset_file_len(count: usize, channels: usize, samples: usize) -> usize {
    DATASET_HEADER_LEN + count * (RECORD_META_LEN + 4 * channels * samples)
}

/// Serializes records. Every record must share the same waveform shape;
/// an empty set is written with the default 4 x 250 geometry.
pub fn save_dataset(records: &[RecordSet]) -> Result<Vec<u8>, StoreError> {
    let (channels, samples) = records
        .first()
        .map_or((RECEIVERS, 250), |r| r.waveforms.dim());
    if channels > u8::MAX as usize || samples > u16::MAX as usize {
        return Err(StoreError::Shape(format!(
            "{channels}x{samples} waveforms exceed the header fields"
        )));
    }
    let count = u32::try_from(records.len())
        .map_err(|_| StoreError::Shape(format!("{} records exceed u32", records.len())))?;
    let mut out = Vec::with_capacity(dataset_file_len(records.len(), channels, samples));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.push(channels as u8);
    out.extend_from_slice(&(samples as u16).to_le_bytes());
    for (index, r) in records.iter().enumerate() {
        if r.waveforms.dim() != (channels, samples) {
            let (c, s) = r.waveforms.dim();
            return Err(StoreError::InvalidRecord {
                index,
                detail: format!("{c}x{s} waveforms in a {channels}x{samples} dataset"),
            });
        }
        let e = &r.event;
        put_f32s(&mut out, [e.x_cm, e.y_cm, e.pressure].iter());
        out.push(match e.finger {
            Finger::Robot => 0,
            Finger::Human => 1,
        });
        // Row-major iteration gives the channel-major on-disk layout.
        put_f32s(&mut out, r.waveforms.iter());
    }
    Ok(out)
}

/// Parses a dataset. Each record's `seed_index` is its position in the file.
pub fn load_dataset(bytes: &[u8]) -> Result<Vec<RecordSet>, StoreError> {
    let mut rd = Reader::new(bytes);
    let magic = rd.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(StoreError::BadMagic {
            format: "LWTD dataset",
            found: magic_string(magic),
        });
    }
    let version = rd.u16("format version")?;
    if version != DATASET_VERSION {
        return Err(StoreError::UnsupportedVersion {
            format: "dataset",
            version,
            supported: DATASET_VERSION,
        });
    }
    let count = rd.u32("record count")? as usize;
    let channels = rd.u8("channel count")? as usize;
    let samples = rd.u16("samples per channel")? as usize;
    let expected = dataset_file_len(count, channels, samples);
    if bytes.len() < expected {
        return Err(StoreError::Truncated {
            what: format!("{count} records of {channels}x{samples} samples"),
            needed: expected - DATASET_HEADER_LEN,
            available: bytes.len() - DATASET_HEADER_LEN,
        });
    }
    if bytes.len() > expected {
        return Err(StoreError::TrailingBytes(bytes.len() - expected));
    }
    let mut records = Vec::with_capacity(count);
    for index in 0..count {
        let what = format!("record {index}");
        let x = rd.f32(&what)? as f64;
        let y = rd.f32(&what)? as f64;
        let pressure = rd.f32(&what)? as f64;
        let finger = match rd.u8(&what)? {
            0 => Finger::Robot,
            1 => Finger::Human,
            f => {
                return Err(StoreError::InvalidRecord {
                    index,
                    detail: format!("finger flag {f}"),
                })
            }
        };
        let w = rd.f32s(channels * samples, &what)?;
        let waveforms = Array2::from_shape_vec((channels, samples), w).expect("length checked");
        records.push(RecordSet {
            event: TouchEvent {
                x_cm: x,
                y_cm: y,
                pressure,
                finger,
                seed_index: index as u64,
            },
            waveforms,
        });
    }
    rd.finish()?;
    Ok(records)
}

pub fn write_dataset(path: &Path, records: &[RecordSet]) -> Result<(), StoreError> {
    write_atomic(path, &save_dataset(records)?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<RecordSet>, StoreError> {
    load_dataset(&read_bytes(path)?)
}
