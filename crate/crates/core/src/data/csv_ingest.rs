use std::path::Path;

use log::warn;

use super::{DataError, DataResult, Interval, Recording, CHANNEL_NAMES, SAMPLE_RATE};

fn reader(path: &Path) -> DataResult<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(false)
        .from_path(path)?)
}

fn numeric_row(rec: &csv::StringRecord) -> Option<Vec<f64>> {
    rec.iter().map(|f| f.parse::<f64>().ok()).collect()
}

/// Reads `start,end,class` rows (header optional).
pub fn read_intervals_csv(path: impl AsRef<Path>) -> DataResult<Vec<Interval>> {
    let mut out = Vec::new();
    for (i, rec) in reader(path.as_ref())?.records().enumerate() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(DataError::Malformed(format!(
                "interval row {} has {} columns, expected start,end,class",
                i + 1,
                rec.len()
            )));
        }
        let (s, e) = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match (s, e) {
            (Ok(start), Ok(end)) => out.push(Interval {
                start,
                end,
                label: rec[2].parse()?,
            }),
            _ if i == 0 => continue,
            _ => {
                return Err(DataError::Malformed(format!(
                    "interval row {} is not numeric",
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

/// Ingests one recording from `time,ch1,ch2` rows (header optional) and an
/// optional interval sidecar. Input sampled at another rate is linearly
/// resampled to 256 Hz.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    intervals: Option<&Path>,
    recording_id: u32,
) -> DataResult<Recording> {
    let mut time = Vec::new();
    let mut ch = [Vec::new(), Vec::new()];
    for (i, rec) in reader(path.as_ref())?.records().enumerate() {
        let rec = rec?;
        match numeric_row(&rec) {
            Some(v) if v.len() == 3 => {
                time.push(v[0]);
                ch[0].push(v[1]);
                ch[1].push(v[2]);
            }
            Some(v) => {
                return Err(DataError::Malformed(format!(
                    "row {} has {} columns, expected time,ch1,ch2",
                    i + 1,
                    v.len()
                )))
            }
            None if i == 0 => continue,
            None => {
                return Err(DataError::Malformed(format!(
                    "row {} is not numeric",
                    i + 1
                )))
            }
        }
    }
    if time.len() < 2 {
        return Err(DataError::Malformed(
            "recording needs at least two rows".into(),
        ));
    }
    if time.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DataError::Malformed(
            "time column must increase strictly".into(),
        ));
    }
    let t0 = time[0];
    let span = time[time.len() - 1] - t0;
    let rate = (time.len() - 1) as f64 / span;
    let channels: Vec<Vec<f32>> = if (rate - SAMPLE_RATE as f64).abs() < 1e-3 {
        ch.iter()
            .map(|c| c.iter().map(|&v| v as f32).collect())
            .collect()
    } else {
        warn!("resampling from {rate:.3} Hz to {SAMPLE_RATE} Hz");
        let n = (span * SAMPLE_RATE as f64).floor() as usize + 1;
        ch.iter()
            .map(|c| {
                let mut j = 0;
                (0..n)
                    .map(|k| {
                        let t = t0 + k as f64 / SAMPLE_RATE as f64;
                        while j + 2 < time.len() && time[j + 1] <= t {
                            j += 1;
                        }
                        let f = ((t - time[j]) / (time[j + 1] - time[j])).clamp(0.0, 1.0);
                        (c[j] + f * (c[j + 1] - c[j])) as f32
                    })
                    .collect()
            })
            .collect()
    };
    let intervals = match intervals {
        Some(p) => read_intervals_csv(p)?
            .into_iter()
            .map(|iv| Interval {
                start: iv.start - t0,
                end: iv.end - t0,
                label: iv.label,
            })
            .collect(),
        None => Vec::new(),
    };
    let rec = Recording {
        id: recording_id,
        sample_rate: SAMPLE_RATE,
        channel_names: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
        channels,
        intervals,
    };
    rec.validate()?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Label;
    use std::io::Write;

    #[test]
    fn ingests_native_rate_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(f, "time,ch1,ch2").unwrap();
        for i in 0..512 {
            writeln!(f, "{},{},{}", i as f64 / 256.0, i, -(i as f64)).unwrap();
        }
        let iv = dir.path().join("i.csv");
        std::fs::write(&iv, "start,end,class\n0.5,1.5,ictal\n").unwrap();
        let r = ingest_csv(&p, Some(&iv), 4).unwrap();
        assert_eq!(r.len(), 512);
        assert_eq!(r.channels[1][10], -10.0);
        assert_eq!(
            r.intervals,
            vec![Interval {
                start: 0.5,
                end: 1.5,
                label: Label::Ictal
            }]
        );
    }

    #[test]
    fn resamples_other_rates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let mut f = std::fs::File::create(&p).unwrap();
        for i in 0..=512 {
            let t = i as f64 / 512.0;
            writeln!(f, "{t},{},{}", t * 2.0, 1.0).unwrap();
        }
        let r = ingest_csv(&p, None, 1).unwrap();
        assert_eq!(r.len(), 257);
        assert!((r.channels[0][128] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "0,1,2\n0.1,x,3\n").unwrap();
        assert!(ingest_csv(&p, None, 1).is_err());
    }
}
