//! Comma-separated point files: a header row naming the columns, then one
//! record per (trajectory, time) sample. `id`, `t`, `x`, `y`, `z` are required;
//! every other column is a raw variable.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::expr::{Expression, SampleScope};
use crate::model::{DomainExtent, PointSample, Sample};

const REQUIRED: [&str; 5] = ["id", "t", "x", "y", "z"];

/// Point samples plus provenance back to the source file.
#[derive(Clone, Debug, PartialEq)]
pub struct PointData {
    pub samples: Vec<PointSample>,
    /// Zero-based record index in the source file for each kept sample.
    pub records: Vec<usize>,
    pub total_records: usize,
    /// Samples removed by [`PointData::retain_in_domain`].
    pub dropped: usize,
    /// Expression that produced the sample values.
    pub expression: String,
}

impl PointData {
    /// Drops samples outside `extent`, returning how many were removed.
    pub fn retain_in_domain(&mut self, extent: &DomainExtent) -> usize {
        let mut kept = Vec::with_capacity(self.samples.len());
        let mut records = Vec::with_capacity(self.samples.len());
        for (s, r) in self.samples.iter().zip(&self.records) {
            if extent.contains(&s.location()) {
                kept.push(*s);
                records.push(*r);
            }
        }
        let removed = self.samples.len() - kept.len();
        self.samples = kept;
        self.records = records;
        self.dropped += removed;
        removed
    }
}

struct RawRecord {
    id: u64,
    pos: [f64; 4],
    offset: u64,
}

fn parse_f64(path: &Path, offset: u64, column: &str, text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| Error::ingest(path, offset, format!("column `{column}`: cannot parse `{text}`")))
}

/// Per-trajectory geometry broadcast to each sample.
struct TrajectoryGeometry {
    path_length: f64,
    displacement: f64,
}

fn distance3(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Loads a point file and evaluates `derive` (or the first raw column when
/// `None`) into each sample's value.
pub fn load_points(path: impl AsRef<Path>, derive: Option<&str>) -> Result<PointData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::ingest(path, 0, format!("unreadable header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut required = [0usize; 5];
    for (slot, name) in required.iter_mut().zip(REQUIRED) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::ingest(path, 0, format!("missing required column `{name}`")))?;
    }
    let raw_columns: Vec<usize> = (0..headers.len()).filter(|i| !required.contains(i)).collect();
    let raw_names: Vec<String> = raw_columns.iter().map(|&i| headers[i].clone()).collect();

    let source = match derive {
        Some(src) => src.to_string(),
        None => raw_names.first().cloned().ok_or_else(|| {
            Error::Expression("point file has no raw variable column and no expression was given".into())
        })?,
    };
    let expression = Expression::compile(&source, &raw_names)?;

    let mut records = Vec::new();
    let mut raw_values: Vec<f64> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let offset = e.position().map_or(0, |p| p.byte());
            Error::ingest(path, offset, format!("malformed record: {e}"))
        })?;
        let offset = row.position().map_or(0, |p| p.byte());
        if row.len() != headers.len() {
            return Err(Error::ingest(path, offset, "record length differs from header"));
        }
        let id_text = &row[required[0]];
        let id = id_text
            .parse::<u64>()
            .map_err(|_| Error::ingest(path, offset, format!("column `id`: cannot parse `{id_text}`")))?;
        let mut pos = [0.0; 4];
        // file order is t, x, y, z; positions are stored x, y, z, t
        for (slot, col) in [(3, 1), (0, 2), (1, 3), (2, 4)] {
            pos[slot] = parse_f64(path, offset, REQUIRED[col], &row[required[col]])?;
            if !pos[slot].is_finite() {
                return Err(Error::ingest(path, offset, format!("column `{}` is not finite", REQUIRED[col])));
            }
        }
        for (&c, name) in raw_columns.iter().zip(&raw_names) {
            raw_values.push(parse_f64(path, offset, name, &row[c])?);
        }
        records.push(RawRecord { id, pos, offset });
    }

    let mut trajectories: HashMap<u64, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let members = trajectories.entry(r.id).or_default();
        if let Some(&prev) = members.last() {
            if records[prev].pos[3] >= r.pos[3] {
                return Err(Error::ingest(
                    path,
                    r.offset,
                    format!("trajectory {}: times must strictly increase", r.id),
                ));
            }
        }
        members.push(i);
    }

    let mut geometry = vec![0usize; records.len()];
    let mut speed = vec![0.0; records.len()];
    let mut per_trajectory = Vec::with_capacity(trajectories.len());
    if expression.uses_trajectory() {
        for members in trajectories.values() {
            let path_length: f64 = members
                .windows(2)
                .map(|w| distance3(&records[w[0]].pos, &records[w[1]].pos))
                .sum();
            let first = &records[members[0]].pos;
            let last = &records[*members.last().expect("non-empty")].pos;
            let slot = per_trajectory.len();
            per_trajectory.push(TrajectoryGeometry {
                path_length,
                displacement: distance3(first, last),
            });
            for (j, &i) in members.iter().enumerate() {
                geometry[i] = slot;
                // forward difference, backward on the last sample
                let (a, b) = if j + 1 < members.len() {
                    (i, members[j + 1])
                } else if j > 0 {
                    (members[j - 1], i)
                } else {
                    continue;
                };
                let dt = records[b].pos[3] - records[a].pos[3];
                speed[i] = distance3(&records[a].pos, &records[b].pos) / dt;
            }
        }
    } else {
        per_trajectory.push(TrajectoryGeometry {
            path_length: 0.0,
            displacement: 0.0,
        });
    }

    let width = raw_columns.len();
    let mut samples = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let g = &per_trajectory[geometry[i]];
        let scope = SampleScope {
            columns: &raw_values[i * width..(i + 1) * width],
            position: r.pos,
            path_length: g.path_length,
            displacement: g.displacement,
            speed: speed[i],
        };
        let value = expression.eval(&scope);
        if !value.is_finite() {
            return Err(Error::ingest(
                path,
                r.offset,
                format!("expression `{source}` is not finite ({value}) for record {i}"),
            ));
        }
        samples.push(PointSample {
            trajectory_id: r.id,
            t: r.pos[3],
            x: r.pos[0],
            y: r.pos[1],
            z: r.pos[2],
            value,
        });
    }

    let total = samples.len();
    Ok(PointData {
        samples,
        records: (0..total).collect(),
        total_records: total,
        dropped: 0,
        expression: source,
    })
}

/// Writes samples as `id,t,x,y,z,<value_column>`.
pub fn write_points(path: impl AsRef<Path>, samples: &[PointSample], value_column: &str) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "id,t,x,y,z,{value_column}").map_err(io)?;
    for s in samples {
        writeln!(w, "{},{},{},{},{},{}", s.trajectory_id, s.t, s.x, s.y, s.z, s.value).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn load(text: &str, derive: Option<&str>) -> Result<PointData> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("points.csv");
        fs::write(&path, text).unwrap();
        load_points(&path, derive)
    }

    #[test]
    fn straight_line_ratio_is_one() {
        let data = load(
            "id,t,x,y,z,v\n1,0,0,0,0,5\n1,1,1,0,0,5\n1,2,2,0,0,5\n",
            Some("displacement/path_length"),
        )
        .unwrap();
        assert!(data.samples.iter().all(|s| s.value == 1.0));
    }

    #[test]
    fn right_angle_ratio() {
        let data = load(
            "id,t,x,y,z\n7,0,0,0,0\n7,1,1,0,0\n7,2,1,1,0\n",
            Some("displacement / path_length"),
        )
        .unwrap();
        for s in &data.samples {
            assert!((s.value - 2f64.sqrt() / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_variable_passthrough_and_default() {
        let text = "id,t,x,y,z,v,w\n1,0,0,0,0,0.25,9\n2,0,1,1,1,0.5,9\n";
        let a = load(text, Some("v")).unwrap();
        let b = load(text, None).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples[1].value, 0.5);
        assert_eq!(a.samples[1].trajectory_id, 2);
    }

    #[test]
    fn speed_uses_forward_then_backward_difference() {
        let data = load("id,t,x,y,z\n1,0,0,0,0\n1,2,4,0,0\n1,3,4,3,0\n", Some("speed")).unwrap();
        let speeds: Vec<f64> = data.samples.iter().map(|s| s.value).collect();
        assert_eq!(speeds, vec![2.0, 3.0, 3.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            load("id,t,x,y,z,v\n1,0,0,0,0,1\n", Some("mass")),
            Err(Error::Expression(_))
        ));
        assert!(matches!(
            load("id,t,x,y,z,v\n1,1,0,0,0,1\n1,1,0,0,0,1\n", None),
            Err(Error::Ingest { .. })
        ));
        // a single-sample trajectory has zero path length
        assert!(matches!(
            load("id,t,x,y,z\n1,0,0,0,0\n", Some("displacement/path_length")),
            Err(Error::Ingest { .. })
        ));
        assert!(matches!(
            load("id,x,y,z\n1,0,0,0\n", None),
            Err(Error::Ingest { .. })
        ));
    }

    #[test]
    fn domain_filtering_counts_add_up() {
        let mut data = load(
            "id,t,x,y,z,v\n1,0,0.5,0.5,0.5,1\n1,1,2,0.5,0.5,1\n2,0,0.1,0.1,0.1,1\n",
            None,
        )
        .unwrap();
        let extent = DomainExtent::new([0.0; 3], [1.0; 3], 0.0, 1.0).unwrap();
        assert_eq!(data.retain_in_domain(&extent), 1);
        assert_eq!(data.samples.len() + data.dropped, data.total_records);
        assert_eq!(data.records, vec![0, 2]);
    }

    #[test]
    fn write_then_load_preserves_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let samples = vec![
            PointSample { trajectory_id: 3, t: 0.1, x: 1.0 / 3.0, y: -2.0, z: 1e-9, value: 0.7 },
            PointSample { trajectory_id: 3, t: 0.2, x: 1.0, y: 2.0, z: 3.0, value: -1.5 },
        ];
        write_points(&path, &samples, "v").unwrap();
        assert_eq!(load_points(&path, None).unwrap().samples, samples);
    }
}
