use log::warn;

use super::{
    EegSample, Label, Origin, PatientRecord, Recording, GUARD_SECONDS, SAMPLE_RATE, WINDOW_POINTS,
    WINDOW_SECONDS,
};

/// What the windows are for; decides the hop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    GanTrain,
    DetectorTrain,
    Test,
}

impl Purpose {
    /// 1 s hop (75 % overlap) for training, 4 s (no overlap) for testing.
    pub fn hop_points(self) -> usize {
        match self {
            Purpose::GanTrain | Purpose::DetectorTrain => SAMPLE_RATE as usize,
            Purpose::Test => WINDOW_POINTS,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Segmented {
    pub ictal: Vec<EegSample>,
    pub interictal: Vec<EegSample>,
    pub warnings: Vec<String>,
}

impl Segmented {
    pub fn of(&self, label: Label) -> &[EegSample] {
        match label {
            Label::Ictal => &self.ictal,
            Label::Interictal => &self.interictal,
        }
    }
}

/// True when two windows of the same recording share any time.
pub fn windows_overlap(a: &EegSample, b: &EegSample) -> bool {
    a.patient_id == b.patient_id
        && a.recording_id == b.recording_id
        && (a.window_start - b.window_start).abs() < WINDOW_SECONDS as f64 - 1e-9
}

fn to_index(seconds: f64, round_up: bool) -> usize {
    let x = seconds * SAMPLE_RATE as f64;
    let i = if round_up {
        (x - 1e-6).ceil()
    } else {
        (x + 1e-6).floor()
    };
    i.max(0.0) as usize
}

/// Cuts 4 s windows from every recording of `record`.
///
/// Ictal windows lie inside labelled seizures. Inter-ictal windows lie
/// inside labelled inter-ictal intervals (or anywhere, if a recording has
/// none) and at least [`GUARD_SECONDS`] from every seizure.
pub fn segment(record: &PatientRecord, purpose: Purpose) -> Segmented {
    let mut out = Segmented::default();
    for rec in &record.recordings {
        segment_recording(record.id, rec, purpose, &mut out);
    }
    out
}

fn segment_recording(patient: u32, rec: &Recording, purpose: Purpose, out: &mut Segmented) {
    let scale = rec.scale();
    let hop = purpose.hop_points();
    let total = rec.len();
    let cut = |lo: usize, hi: usize, label: Label, dest: &mut Vec<EegSample>| {
        let hi = hi.min(total);
        let mut s = lo;
        while s + WINDOW_POINTS <= hi {
            let mut values = Vec::with_capacity(rec.channels.len() * WINDOW_POINTS);
            for ch in &rec.channels {
                values.extend(ch[s..s + WINDOW_POINTS].iter().map(|v| v / scale));
            }
            dest.push(EegSample {
                values,
                label,
                origin: Origin::Real,
                patient_id: patient,
                recording_id: rec.id,
                window_start: s as f64 / SAMPLE_RATE as f64,
                scale,
            });
            s += hop;
        }
    };

    for iv in rec.seizures() {
        if iv.duration() < WINDOW_SECONDS as f64 {
            let msg = format!(
                "patient {patient} recording {}: seizure [{:.1}, {:.1}] s shorter than a window",
                rec.id, iv.start, iv.end
            );
            warn!("{msg}");
            out.warnings.push(msg);
            continue;
        }
        cut(
            to_index(iv.start, true),
            to_index(iv.end, false),
            Label::Ictal,
            &mut out.ictal,
        );
    }

    let labelled: Vec<(f64, f64)> = rec
        .intervals
        .iter()
        .filter(|i| i.label == Label::Interictal)
        .map(|i| (i.start, i.end))
        .collect();
    for &(a, b) in &labelled {
        if b - a < WINDOW_SECONDS as f64 {
            let msg = format!(
                "patient {patient} recording {}: inter-ictal interval [{a:.1}, {b:.1}] s shorter than a window",
                rec.id
            );
            warn!("{msg}");
            out.warnings.push(msg);
        }
    }
    let mut regions = if labelled.is_empty() {
        vec![(0.0, rec.duration())]
    } else {
        labelled
    };
    for sz in rec.seizures() {
        let (ga, gb) = (sz.start - GUARD_SECONDS, sz.end + GUARD_SECONDS);
        regions = regions
            .into_iter()
            .flat_map(|(a, b)| {
                let mut keep = Vec::with_capacity(2);
                if a < ga.min(b) {
                    keep.push((a, ga.min(b)));
                }
                if gb.max(a) < b {
                    keep.push((gb.max(a), b));
                }
                keep
            })
            .collect();
    }
    for (a, b) in regions {
        cut(
            to_index(a, true),
            to_index(b, false),
            Label::Interictal,
            &mut out.interictal,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Interval, CHANNEL_NAMES};

    fn record(seconds: usize, intervals: Vec<Interval>) -> PatientRecord {
        let n = seconds * SAMPLE_RATE as usize;
        let ch: Vec<f32> = (0..n).map(|i| (i as f32 * 0.01).sin()).collect();
        PatientRecord {
            id: 3,
            recordings: vec![Recording {
                id: 1,
                sample_rate: SAMPLE_RATE,
                channel_names: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
                channels: vec![ch.clone(), ch],
                intervals,
            }],
        }
    }

    fn seizure(start: f64, end: f64) -> Interval {
        Interval {
            start,
            end,
            label: Label::Ictal,
        }
    }

    #[test]
    fn window_counts_for_a_twenty_second_seizure() {
        let r = record(400, vec![seizure(100.0, 120.0)]);
        assert_eq!(segment(&r, Purpose::Test).ictal.len(), 5);
        assert_eq!(segment(&r, Purpose::GanTrain).ictal.len(), 17);
    }

    #[test]
    fn short_seizure_is_skipped_with_warning() {
        let r = record(400, vec![seizure(100.0, 103.0)]);
        let s = segment(&r, Purpose::Test);
        assert!(s.ictal.is_empty());
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn interictal_windows_respect_guard_band() {
        let r = record(600, vec![seizure(200.0, 240.0)]);
        let s = segment(&r, Purpose::DetectorTrain);
        assert!(!s.interictal.is_empty());
        for w in &s.interictal {
            let (a, b) = (w.window_start, w.window_start + 4.0);
            assert!(b <= 140.0 + 1e-9 || a >= 300.0 - 1e-9, "window at {a}");
        }
        for w in &s.ictal {
            assert!(w.window_start >= 200.0 && w.window_start + 4.0 <= 240.0);
        }
    }

    #[test]
    fn labelled_interictal_intervals_restrict_windows() {
        let r = record(
            600,
            vec![
                seizure(300.0, 320.0),
                Interval {
                    start: 10.0,
                    end: 30.0,
                    label: Label::Interictal,
                },
            ],
        );
        let s = segment(&r, Purpose::Test);
        assert_eq!(s.interictal.len(), 5);
    }

    #[test]
    fn windows_are_normalised_by_recording_scale() {
        let r = record(100, vec![]);
        let s = segment(&r, Purpose::Test);
        for w in &s.interictal {
            assert!(w.values.iter().all(|v| v.abs() <= 1.0));
            w.validate().unwrap();
        }
    }
}
