//! BOP results CSV: `scene_id,im_id,obj_id,score,R,t,time` with `R` as 9
//! space-separated row-major floats and `t` as 3 floats in mm. Distribution
//! results add an optional `mode_prob` column (and optionally `inst_id`).

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::RigidTransform;

/// Rotations in submissions are printed with limited precision.
const RESULT_ROTATION_TOLERANCE: f64 = 1e-3;

const REQUIRED: [&str; 7] = ["scene_id", "im_id", "obj_id", "score", "R", "t", "time"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// 1-based line in the file.
    pub line: u64,
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub score: f64,
    pub pose: RigidTransform,
    pub time: f64,
    pub mode_prob: Option<f64>,
    pub inst_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsFile {
    /// In file order.
    pub rows: Vec<ResultRow>,
    pub rejected: Vec<RejectedRow>,
}

pub fn read_results_csv(path: &Path) -> Result<ResultsFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_results_csv(file, path)
}

struct Columns {
    idx: [usize; 7],
    mode_prob: Option<usize>,
    inst_id: Option<usize>,
}

fn parse_floats(s: &str, n: usize, what: &str) -> std::result::Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(|x| {
            x.parse::<f64>()
                .map_err(|_| format!("{what}: bad number {x:?}"))
        })
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("{what}: expected {n} values, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(format!("{what}: non-finite value"));
    }
    Ok(v)
}

fn parse_row(
    rec: &csv::StringRecord,
    cols: &Columns,
    line: u64,
) -> std::result::Result<ResultRow, String> {
    let get = |i: usize| {
        rec.get(i)
            .map(str::trim)
            .ok_or_else(|| "missing field".to_string())
    };
    let int = |i: usize, name: &str| -> std::result::Result<u32, String> {
        get(i)?
            .parse()
            .map_err(|_| format!("{name}: not a non-negative integer"))
    };
    let float = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let v: f64 = get(i)?.parse().map_err(|_| format!("{name}: bad number"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{name}: non-finite"))
        }
    };
    let [scene, im, obj, score, r, t, time] = cols.idx;
    let rot = parse_floats(get(r)?, 9, "R")?;
    let tr = parse_floats(get(t)?, 3, "t")?;
    let (rm, tv) = RigidTransform::parse_row_major(&rot, &tr).map_err(|e| e.to_string())?;
    let pose = RigidTransform::from_noisy_rotation(rm, tv, RESULT_ROTATION_TOLERANCE)
        .map_err(|e| format!("R: {e}"))?;
    let mode_prob = match cols.mode_prob {
        Some(i) if !get(i)?.is_empty() => {
            let p = float(i, "mode_prob")?;
            if p < 0.0 {
                return Err("mode_prob: negative".into());
            }
            Some(p)
        }
        _ => None,
    };
    let inst_id = match cols.inst_id {
        Some(i) if !get(i)?.is_empty() => Some(int(i, "inst_id")?),
        _ => None,
    };
    Ok(ResultRow {
        line,
        scene_id: int(scene, "scene_id")?,
        im_id: int(im, "im_id")?,
        obj_id: int(obj, "obj_id")?,
        score: float(score, "score")?,
        pose,
        time: float(time, "time")?,
        mode_prob,
        inst_id,
    })
}

/// Parses a results CSV. Malformed rows are collected in `rejected` with
/// their line number; a missing header column fails the whole file.
pub fn parse_results_csv(input: impl Read, path: &Path) -> Result<ResultsFile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = find(name).ok_or_else(|| {
            Error::Dataset(format!("{}: header lacks column `{name}`", path.display()))
        })?;
    }
    let cols = Columns {
        idx,
        mode_prob: find("mode_prob"),
        inst_id: find("inst_id"),
    };
    let mut out = ResultsFile::default();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(line, |p| p.line());
                if record.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                match parse_row(&record, &cols, line) {
                    Ok(row) => out.rows.push(row),
                    Err(reason) => out.rejected.push(RejectedRow { line, reason }),
                }
            }
            Err(e) => {
                let line = e.position().map_or(line, |p| p.line());
                out.rejected.push(RejectedRow {
                    line,
                    reason: e.to_string(),
                });
                if !matches!(
                    e.kind(),
                    csv::ErrorKind::UnequalLengths { .. } | csv::ErrorKind::Utf8 { .. }
                ) {
                    break;
                }
            }
        }
    }
    Ok(out)
}

fn join(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v}").expect("writing to a String");
    }
    s
}

/// Writes rows in the same format, with floats in shortest round-trip form.
/// `mode_prob`/`inst_id` columns are emitted when any row carries them.
pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let with_prob = rows.iter().any(|r| r.mode_prob.is_some());
    let with_inst = rows.iter().any(|r| r.inst_id.is_some());
    let mut s = String::from("scene_id,im_id,obj_id,score,R,t,time");
    if with_prob {
        s.push_str(",mode_prob");
    }
    if with_inst {
        s.push_str(",inst_id");
    }
    s.push('\n');
    for r in rows {
        write!(
            s,
            "{},{},{},{},{},{},{}",
            r.scene_id,
            r.im_id,
            r.obj_id,
            r.score,
            join(&r.pose.rotation_row_major()),
            join(&r.pose.translation_array()),
            r.time
        )
        .expect("writing to a String");
        if with_prob {
            s.push(',');
            if let Some(p) = r.mode_prob {
                write!(s, "{p}").expect("writing to a String");
            }
        }
        if with_inst {
            s.push(',');
            if let Some(i) = r.inst_id {
                write!(s, "{i}").expect("writing to a String");
            }
        }
        s.push('\n');
    }
    super::write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ResultsFile {
        parse_results_csv(text.as_bytes(), Path::new("mem.csv")).unwrap()
    }

    #[test]
    fn single_row_exact_values() {
        let f = parse(
            "scene_id,im_id,obj_id,score,R,t,time\n\
             1,17,2,0.875,0 -1 0 1 0 0 0 0 1,12.5 -3.25 701.125,0.042\n",
        );
        assert!(f.rejected.is_empty());
        let r = &f.rows[0];
        assert_eq!((r.scene_id, r.im_id, r.obj_id), (1, 17, 2));
        assert_eq!(r.score, 0.875);
        assert_eq!(r.time, 0.042);
        assert_eq!(
            r.pose.rotation_row_major(),
            [0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
        assert_eq!(r.pose.translation_array(), [12.5, -3.25, 701.125]);
        assert_eq!(r.line, 2);
        assert_eq!(r.mode_prob, None);
    }

    #[test]
    fn header_only_is_empty() {
        let f = parse("scene_id,im_id,obj_id,score,R,t,time\n");
        assert!(f.rows.is_empty() && f.rejected.is_empty());
    }

    #[test]
    fn reflection_and_garbage_rows_are_reported_with_lines() {
        let f = parse(
            "scene_id,im_id,obj_id,score,R,t,time\n\
             1,1,1,1,1 0 0 0 1 0 0 0 -1,0 0 100,-1\n\
             1,1,1,1,1 0 0 0 1 0 0 0 1,0 0 100,-1\n\
             1,1,x,1,1 0 0 0 1 0 0 0 1,0 0 100,-1\n\
             1,1,1,1,1 0 0 0 1 0 0 0 1,0 0,-1\n\
             1,1,1\n",
        );
        assert_eq!(f.rows.len(), 1);
        assert_eq!(f.rows[0].line, 3);
        let lines: Vec<u64> = f.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 4, 5, 6]);
        assert!(f.rejected[0].reason.contains("R"));
    }

    #[test]
    fn missing_column_fails() {
        assert!(parse_results_csv(
            "scene_id,im_id,obj_id,score,R,t\n".as_bytes(),
            Path::new("x")
        )
        .is_err());
    }

    #[test]
    fn write_read_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let pose =
            RigidTransform::from_translation(crate::Vec3::new(0.1, -2.0 / 3.0, 1e-7)).compose(
                &RigidTransform::from_axis_angle(&crate::Vec3::new(0.3, -0.2, 0.9), 1.234),
            );
        let rows = vec![ResultRow {
            line: 2,
            scene_id: 3,
            im_id: 4,
            obj_id: 5,
            score: 1.0 / 3.0,
            pose,
            time: 0.5,
            mode_prob: Some(0.7),
            inst_id: Some(1),
        }];
        write_results_csv(&path, &rows).unwrap();
        let back = read_results_csv(&path).unwrap();
        assert_eq!(back.rows, rows);
    }
}
