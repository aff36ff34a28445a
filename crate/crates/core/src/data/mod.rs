//! Dataset model: samples, recordings, windowing, pairing, splits, evaluation
//! sets, the surrogate generator and the binary interchange formats.

mod csv_ingest;
mod eval_sets;
mod format;
mod pairing;
mod segment;
mod surrogate;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use csv_ingest::{ingest_csv, read_intervals_csv};
pub use eval_sets::{build_eval_sets, EvalSets, TRAIN_PER_CLASS};
pub use format::{
    dataset_from_bytes, dataset_to_bytes, read_dataset, read_samples, samples_from_bytes,
    samples_to_bytes, write_dataset, write_samples, DATASET_MAGIC, SAMPLES_MAGIC,
};
pub use pairing::{lopo_split, pair, LopoSplit};
pub use segment::{segment, windows_overlap, Purpose, Segmented};
pub use surrogate::{surrogate_generate, SurrogateConfig};

pub const SAMPLE_RATE: u32 = 256;
pub const WINDOW_SECONDS: u32 = 4;
pub const WINDOW_POINTS: usize = (SAMPLE_RATE * WINDOW_SECONDS) as usize;
pub const CHANNELS: usize = 2;
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["F7T3", "F8T4"];
/// Distance kept between inter-ictal windows and any seizure boundary.
pub const GUARD_SECONDS: f64 = 60.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("not a {expected} file (bad magic)")]
    BadMagic { expected: &'static str },
    #[error("unsupported {format} version {found:?}")]
    UnsupportedVersion { format: &'static str, found: String },
    #[error("truncated {0} file")]
    Truncated(&'static str),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("unknown patient {0}")]
    UnknownPatient(u32),
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type DataResult<T> = std::result::Result<T, DataError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Interictal,
    Ictal,
}

impl Label {
    pub fn code(self) -> u8 {
        match self {
            Label::Interictal => 0,
            Label::Ictal => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Label::Interictal),
            1 => Some(Label::Ictal),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Interictal => "interictal",
            Label::Ictal => "ictal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = DataError;

    fn from_str(s: &str) -> DataResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ictal" | "seizure" | "1" => Ok(Label::Ictal),
            "interictal" | "inter-ictal" | "0" => Ok(Label::Interictal),
            other => Err(DataError::Invalid(format!("unknown class label `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Origin {
    Real,
    Synthetic,
}

impl Origin {
    pub fn code(self) -> u8 {
        match self {
            Origin::Real => 0,
            Origin::Synthetic => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Origin::Real),
            1 => Some(Origin::Synthetic),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Real => "real",
            Origin::Synthetic => "synthetic",
        }
    }
}

/// One 4 s, two-channel window.
///
/// `values` is channel-major: `CHANNELS × points`. Windows cut by [`segment`]
/// are max-abs normalised per recording, so values lie in `[-1, 1]`, and
/// `scale` maps them back to the recording's units.
#[derive(Clone, Debug, PartialEq)]
pub struct EegSample {
    pub values: Vec<f32>,
    pub label: Label,
    pub origin: Origin,
    pub patient_id: u32,
    pub recording_id: u32,
    /// Seconds from the start of the recording.
    pub window_start: f64,
    pub scale: f32,
}

impl EegSample {
    pub fn points(&self) -> usize {
        self.values.len() / CHANNELS
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.points();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn validate(&self) -> DataResult<()> {
        if self.values.len() != CHANNELS * WINDOW_POINTS {
            return Err(DataError::Invalid(format!(
                "sample has {} values, expected {}",
                self.values.len(),
                CHANNELS * WINDOW_POINTS
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid(
                "sample contains non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// Values in the recording's original units.
    pub fn denormalized(&self) -> Vec<f32> {
        self.values.iter().map(|v| v * self.scale).collect()
    }
}

/// Inter-ictal input and ictal target from the same patient.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedExample {
    pub input: EegSample,
    pub target: EegSample,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub label: Label,
}

impl Interval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub id: u32,
    pub sample_rate: u32,
    pub channel_names: Vec<String>,
    /// One buffer per channel, all the same length.
    pub channels: Vec<Vec<f32>>,
    pub intervals: Vec<Interval>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn seizures(&self) -> impl Iterator<Item = &Interval> {
        self.intervals.iter().filter(|i| i.label == Label::Ictal)
    }

    /// Max-abs scale; an all-zero recording has scale 1.
    pub fn scale(&self) -> f32 {
        let m = self
            .channels
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f32, |a, &v| a.max(v.abs()));
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> DataResult<()> {
        if self.channels.len() != CHANNELS || self.channel_names.len() != CHANNELS {
            return Err(DataError::Invalid(format!(
                "recording {} has {} channels, expected {CHANNELS}",
                self.id,
                self.channels.len()
            )));
        }
        if self.sample_rate != SAMPLE_RATE {
            return Err(DataError::Invalid(format!(
                "recording {} is sampled at {} Hz, expected {SAMPLE_RATE}",
                self.id, self.sample_rate
            )));
        }
        let n = self.len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(DataError::Invalid(format!(
                "recording {} has ragged channels",
                self.id
            )));
        }
        if self.channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid(format!(
                "recording {} contains non-finite values",
                self.id
            )));
        }
        let dur = self.duration();
        let mut seiz: Vec<&Interval> = self.seizures().collect();
        seiz.sort_by(|a, b| a.start.total_cmp(&b.start));
        for iv in &self.intervals {
            if !(iv.start >= 0.0 && iv.end <= dur + 1e-9 && iv.start < iv.end) {
                return Err(DataError::Invalid(format!(
                    "recording {}: interval [{}, {}] outside [0, {dur}]",
                    self.id, iv.start, iv.end
                )));
            }
        }
        for w in seiz.windows(2) {
            if w[1].start < w[0].end {
                return Err(DataError::Invalid(format!(
                    "recording {}: overlapping seizure intervals",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientRecord {
    pub id: u32,
    pub recordings: Vec<Recording>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub patients: Vec<PatientRecord>,
    /// Free-form key/value metadata (generator settings, source files).
    pub provenance: BTreeMap<String, String>,
}

impl Dataset {
    pub fn patient(&self, id: u32) -> DataResult<&PatientRecord> {
        self.patients
            .iter()
            .find(|p| p.id == id)
            .ok_or(DataError::UnknownPatient(id))
    }

    pub fn patient_ids(&self) -> Vec<u32> {
        self.patients.iter().map(|p| p.id).collect()
    }

    pub fn validate(&self) -> DataResult<()> {
        let mut ids = self.patient_ids();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(DataError::Invalid("duplicate patient id".into()));
        }
        for p in &self.patients {
            for r in &p.recordings {
                r.validate()?;
            }
        }
        Ok(())
    }
}

/// Scales `values` by `1 / scale`.
pub fn normalize(values: &[f32], scale: f32) -> Vec<f32> {
    values.iter().map(|v| v / scale).collect()
}

pub fn denormalize(values: &[f32], scale: f32) -> Vec<f32> {
    values.iter().map(|v| v * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recording(values: Vec<f32>) -> Recording {
        Recording {
            id: 0,
            sample_rate: SAMPLE_RATE,
            channel_names: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
            channels: vec![values.clone(), values],
            intervals: vec![],
        }
    }

    #[test]
    fn constant_recording_normalises_to_one() {
        let r = recording(vec![200.0; 512]);
        let n = normalize(&r.channels[0], r.scale());
        assert!(n.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn max_abs_maps_to_one_and_round_trips() {
        let vals: Vec<f32> = (0..300)
            .map(|i| ((i as f32) * 0.37).sin() * 50.0 - 3.0)
            .collect();
        let r = recording(vals.clone());
        let s = r.scale();
        let n = normalize(&vals, s);
        let peak = n.iter().fold(0.0f32, |a, v| a.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-7);
        for (a, b) in denormalize(&n, s).iter().zip(&vals) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }

    #[test]
    fn zero_recording_has_unit_scale() {
        assert_eq!(recording(vec![0.0; 16]).scale(), 1.0);
    }

    #[test]
    fn validation_rejects_overlapping_seizures() {
        let mut r = recording(vec![0.0; 256 * 100]);
        r.intervals = vec![
            Interval {
                start: 10.0,
                end: 30.0,
                label: Label::Ictal,
            },
            Interval {
                start: 20.0,
                end: 40.0,
                label: Label::Ictal,
            },
        ];
        assert!(r.validate().is_err());
        r.intervals[1].start = 30.0;
        r.validate().unwrap();
    }
}
