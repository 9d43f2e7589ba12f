//! CSV tables exchanged between stages: per-frame angles and features.
//!
//! Both start with `recording,frame,side`; angles follow in [`ANGLE_NAMES`]
//! order. Feature tables put `pc_1..pc_k` before the 18 angle columns. All
//! values are written with six decimals.

use std::path::Path;

use super::{Side, ANGLE_NAMES, N_ANGLES};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::kinematics::AngleFrame;

/// Fixed six-decimal rendering; negative zero prints as zero.
pub fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// Rounds to the value a six-decimal rendering would read back as.
pub fn round6(x: f64) -> f64 {
    fmt6(x).parse().expect("formatted float parses")
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleRow {
    pub recording: String,
    pub angles: AngleFrame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub recording: String,
    pub t: i64,
    pub side: Side,
    pub features: FeatureVector,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, format!("{other:?}")),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

pub fn write_angles_csv(path: &Path, rows: &[AngleRow]) -> Result<()> {
    let mut w = writer(path)?;
    let header: Vec<&str> = ["recording", "frame", "side"].into_iter().chain(ANGLE_NAMES).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let mut rec = vec![r.recording.clone(), r.angles.t.to_string(), r.angles.side.to_string()];
        rec.extend(r.angles.angles.iter().map(|&a| fmt6(a)));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

fn parse_num(path: &Path, line: u64, col: &str, s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("line {line}: bad number '{s}' in column '{col}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(path, format!("line {line}: non-finite value in column '{col}'")));
    }
    Ok(v)
}

fn parse_ids(path: &Path, line: u64, rec: &csv::StringRecord) -> Result<(String, i64, Side)> {
    let t = rec[1]
        .parse()
        .map_err(|_| Error::parse(path, format!("line {line}: bad frame index '{}'", &rec[1])))?;
    let side = rec[2]
        .parse()
        .map_err(|_| Error::parse(path, format!("line {line}: bad side '{}'", &rec[2])))?;
    Ok((rec[0].to_string(), t, side))
}

pub fn read_angles_csv(path: &Path) -> Result<Vec<AngleRow>> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let expected: Vec<&str> = ["recording", "frame", "side"].into_iter().chain(ANGLE_NAMES).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::parse(path, "unexpected angle table header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let (recording, t, side) = parse_ids(path, line, &rec)?;
        let mut angles = [0.0; N_ANGLES];
        for (i, a) in angles.iter_mut().enumerate() {
            *a = parse_num(path, line, ANGLE_NAMES[i], &rec[3 + i])?;
        }
        rows.push(AngleRow {
            recording,
            angles: AngleFrame { t, side, angles },
        });
    }
    Ok(rows)
}

pub fn write_features_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let k = rows.first().map_or(0, |r| r.features.pcs.len());
    if rows.iter().any(|r| r.features.pcs.len() != k) {
        return Err(Error::Invariant("feature rows with differing PC counts".into()));
    }
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["recording", "frame", "side"].map(String::from).to_vec();
    header.extend((1..=k).map(|i| format!("pc_{i}")));
    header.extend(ANGLE_NAMES.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let mut rec = vec![r.recording.clone(), r.t.to_string(), r.side.to_string()];
        rec.extend(r.features.pcs.iter().map(|&x| fmt6(x)));
        rec.extend(r.features.raw.iter().map(|&x| fmt6(x)));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let k = cols.len().saturating_sub(3 + N_ANGLES);
    let ok = cols.len() >= 3 + N_ANGLES
        && cols[..3] == ["recording", "frame", "side"]
        && (0..k).all(|i| cols[3 + i] == format!("pc_{}", i + 1))
        && cols[3 + k..] == ANGLE_NAMES;
    if !ok {
        return Err(Error::parse(path, "unexpected feature table header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let (recording, t, side) = parse_ids(path, line, &rec)?;
        let pcs = (0..k)
            .map(|i| parse_num(path, line, cols[3 + i], &rec[3 + i]))
            .collect::<Result<Vec<_>>>()?;
        let mut raw = [0.0; N_ANGLES];
        for (i, a) in raw.iter_mut().enumerate() {
            *a = parse_num(path, line, ANGLE_NAMES[i], &rec[3 + k + i])?;
        }
        rows.push(FeatureRow {
            recording,
            t,
            side,
            features: FeatureVector { pcs, raw },
        });
    }
    Ok(rows)
}

/// Reads several feature tables that must agree on the PC count.
pub fn read_features_many(paths: &[impl AsRef<Path>]) -> Result<Vec<FeatureRow>> {
    let mut all: Vec<FeatureRow> = Vec::new();
    for p in paths {
        let rows = read_features_csv(p.as_ref())?;
        if let (Some(a), Some(b)) = (all.first(), rows.first()) {
            if a.features.pcs.len() != b.features.pcs.len() {
                return Err(Error::parse(p.as_ref(), "PC count differs from earlier feature tables"));
            }
        }
        all.extend(rows);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt6_normalizes_negative_zero() {
        assert_eq!(fmt6(-0.0), "0.000000");
        assert_eq!(fmt6(-1e-9), "0.000000");
        assert_eq!(fmt6(1.5), "1.500000");
        assert_eq!(round6(0.12345678), 0.123457);
    }

    #[test]
    fn angle_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let mut angles = [0.0; N_ANGLES];
        for (i, a) in angles.iter_mut().enumerate() {
            *a = i as f64 * 10.0 + 0.123456;
        }
        let rows = vec![AngleRow {
            recording: "H01".into(),
            angles: AngleFrame {
                t: 4,
                side: Side::Left,
                angles,
            },
        }];
        write_angles_csv(&p, &rows).unwrap();
        assert_eq!(read_angles_csv(&p).unwrap(), rows);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("recording,frame,side,index_mcp,"));
    }

    #[test]
    fn feature_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let rows = vec![FeatureRow {
            recording: "P1".into(),
            t: 0,
            side: Side::Right,
            features: FeatureVector {
                pcs: vec![1.25, -3.5],
                raw: [90.0; N_ANGLES],
            },
        }];
        write_features_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("recording,frame,side,pc_1,pc_2,index_mcp"));
        assert_eq!(read_features_csv(&p).unwrap(), rows);
    }
}
