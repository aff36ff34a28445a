//! Binary interchange formats, all integers little-endian, each file ending
//! in a CRC-32 (IEEE) of every preceding byte.
//!
//! `EEGD0001` (datasets):
//!
//! ```text
//! "EEGD" "0001"  u32 patient count
//! per patient:   u32 id, u32 recording count
//!   per recording: u32 id, u32 sample rate, u16 channel count,
//!                  per channel (u16 length, UTF-8 name),
//!                  u64 points per channel, channel-major f32 samples,
//!                  u32 interval count, per interval (f64 start, f64 end, u8 class)
//! u32 provenance count, per entry (u16 length, key, u16 length, value)
//! u32 CRC-32
//! ```
//!
//! `EEGS0001` (sample sets such as synthetic pools):
//!
//! ```text
//! "EEGS" "0001"  u32 sample count
//! per sample:    u8 class, u8 origin, u32 patient, u32 recording,
//!                f64 window start, f32 scale, u32 points per channel,
//!                channel-major f32 values
//! u32 CRC-32
//! ```

use std::path::Path;

use super::{
    DataError, DataResult, Dataset, EegSample, Interval, Label, Origin, PatientRecord, Recording,
    CHANNELS,
};

pub const DATASET_MAGIC: &[u8; 4] = b"EEGD";
pub const SAMPLES_MAGIC: &[u8; 4] = b"EEGS";
const VERSION: &[u8; 4] = b"0001";

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        self.0.reserve(v.len() * 4);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) -> DataResult<()> {
        let len = u16::try_from(s.len())
            .map_err(|_| DataError::Invalid(format!("string too long: {} bytes", s.len())))?;
        self.u16(len);
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.0);
        self.u32(crc);
        self.0
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> DataResult<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(DataError::Truncated(self.what))?;
        if end > self.buf.len() {
            return Err(DataError::Truncated(self.what));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> DataResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> DataResult<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> DataResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> DataResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> DataResult<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> DataResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> DataResult<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or(DataError::Truncated(self.what))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn str(&mut self) -> DataResult<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| DataError::Malformed("string is not UTF-8".into()))
    }
}

/// Checks magic, version and trailing checksum; returns a reader positioned
/// after the header and limited to the body.
fn open<'a>(buf: &'a [u8], magic: &[u8; 4], what: &'static str) -> DataResult<Reader<'a>> {
    if buf.len() < 4 || &buf[..4] != magic {
        return Err(DataError::BadMagic { expected: what });
    }
    if buf.len() < 8 {
        return Err(DataError::Truncated(what));
    }
    if &buf[4..8] != VERSION {
        return Err(DataError::UnsupportedVersion {
            format: what,
            found: String::from_utf8_lossy(&buf[4..8]).into_owned(),
        });
    }
    if buf.len() < 12 {
        return Err(DataError::Truncated(what));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(DataError::Checksum { stored, computed });
    }
    Ok(Reader {
        buf: body,
        pos: 8,
        what,
    })
}

fn finish_read(r: &Reader<'_>) -> DataResult<()> {
    if r.pos != r.buf.len() {
        return Err(DataError::Malformed(format!(
            "{} trailing bytes before checksum",
            r.buf.len() - r.pos
        )));
    }
    Ok(())
}

pub fn dataset_to_bytes(ds: &Dataset) -> DataResult<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(DATASET_MAGIC);
    w.0.extend_from_slice(VERSION);
    w.u32(ds.patients.len() as u32);
    for p in &ds.patients {
        w.u32(p.id);
        w.u32(p.recordings.len() as u32);
        for r in &p.recordings {
            w.u32(r.id);
            w.u32(r.sample_rate);
            w.u16(r.channels.len() as u16);
            for name in &r.channel_names {
                w.str(name)?;
            }
            if r.channel_names.len() != r.channels.len() {
                return Err(DataError::Invalid(
                    "channel names do not match channels".into(),
                ));
            }
            w.u64(r.len() as u64);
            for c in &r.channels {
                if c.len() != r.len() {
                    return Err(DataError::Invalid(format!(
                        "recording {} has ragged channels",
                        r.id
                    )));
                }
                w.f32s(c);
            }
            w.u32(r.intervals.len() as u32);
            for iv in &r.intervals {
                w.f64(iv.start);
                w.f64(iv.end);
                w.u8(iv.label.code());
            }
        }
    }
    w.u32(ds.provenance.len() as u32);
    for (k, v) in &ds.provenance {
        w.str(k)?;
        w.str(v)?;
    }
    Ok(w.finish())
}

pub fn dataset_from_bytes(buf: &[u8]) -> DataResult<Dataset> {
    let mut r = open(buf, DATASET_MAGIC, "EEGD")?;
    let np = r.u32()? as usize;
    let mut ds = Dataset::default();
    for _ in 0..np {
        let id = r.u32()?;
        let nr = r.u32()? as usize;
        let mut recordings = Vec::with_capacity(nr.min(1024));
        for _ in 0..nr {
            let rid = r.u32()?;
            let sample_rate = r.u32()?;
            let nc = r.u16()? as usize;
            let channel_names = (0..nc).map(|_| r.str()).collect::<DataResult<Vec<_>>>()?;
            let points = usize::try_from(r.u64()?)
                .map_err(|_| DataError::Malformed("point count overflows".into()))?;
            let channels = (0..nc)
                .map(|_| r.f32s(points))
                .collect::<DataResult<Vec<_>>>()?;
            let ni = r.u32()? as usize;
            let mut intervals = Vec::with_capacity(ni.min(1 << 16));
            for _ in 0..ni {
                let start = r.f64()?;
                let end = r.f64()?;
                let label = Label::from_code(r.u8()?)
                    .ok_or_else(|| DataError::Malformed("bad interval class".into()))?;
                intervals.push(Interval { start, end, label });
            }
            recordings.push(Recording {
                id: rid,
                sample_rate,
                channel_names,
                channels,
                intervals,
            });
        }
        ds.patients.push(PatientRecord { id, recordings });
    }
    let nk = r.u32()? as usize;
    for _ in 0..nk {
        let k = r.str()?;
        let v = r.str()?;
        ds.provenance.insert(k, v);
    }
    finish_read(&r)?;
    Ok(ds)
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> DataResult<()> {
    std::fs::write(path, dataset_to_bytes(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> DataResult<Dataset> {
    dataset_from_bytes(&std::fs::read(path)?)
}

pub fn samples_to_bytes(samples: &[EegSample]) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(SAMPLES_MAGIC);
    w.0.extend_from_slice(VERSION);
    w.u32(samples.len() as u32);
    for s in samples {
        w.u8(s.label.code());
        w.u8(s.origin.code());
        w.u32(s.patient_id);
        w.u32(s.recording_id);
        w.f64(s.window_start);
        w.0.extend_from_slice(&s.scale.to_le_bytes());
        w.u32(s.points() as u32);
        w.f32s(&s.values);
    }
    w.finish()
}

pub fn samples_from_bytes(buf: &[u8]) -> DataResult<Vec<EegSample>> {
    let mut r = open(buf, SAMPLES_MAGIC, "EEGS")?;
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let label = Label::from_code(r.u8()?)
            .ok_or_else(|| DataError::Malformed("bad sample class".into()))?;
        let origin = Origin::from_code(r.u8()?)
            .ok_or_else(|| DataError::Malformed("bad sample origin".into()))?;
        let patient_id = r.u32()?;
        let recording_id = r.u32()?;
        let window_start = r.f64()?;
        let scale = r.f32()?;
        let points = r.u32()? as usize;
        let values = r.f32s(points * CHANNELS)?;
        out.push(EegSample {
            values,
            label,
            origin,
            patient_id,
            recording_id,
            window_start,
            scale,
        });
    }
    finish_read(&r)?;
    Ok(out)
}

pub fn write_samples(samples: &[EegSample], path: impl AsRef<Path>) -> DataResult<()> {
    std::fs::write(path, samples_to_bytes(samples))?;
    Ok(())
}

pub fn read_samples(path: impl AsRef<Path>) -> DataResult<Vec<EegSample>> {
    samples_from_bytes(&std::fs::read(path)?)
}
