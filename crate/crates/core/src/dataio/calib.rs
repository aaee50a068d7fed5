//! KITTI-style calibration text: one `key: r11 r12 r13 t1 r21 ... t3` row
//! per rigid transform (row-major 3x4 `[R|t]`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::transform::RigidTransform;

/// Maximum tolerated `|R^T R - I|` entry.
const ORTHONORMAL_TOL: f64 = 1e-3;

/// Row-major `[R|t]`.
pub type CalibRows = [[f64; 4]; 3];

/// Calibration entries in file order. Rows are kept as read, so a file
/// loaded and saved again is reproduced byte for byte.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CalibSet {
    entries: Vec<(String, CalibRows)>,
}

impl CalibSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces `key`.
    pub fn insert(&mut self, key: &str, tf: RigidTransform) {
        let m = tf.to_matrix();
        self.insert_rows(key, [m[0], m[1], m[2]]);
    }

    fn insert_rows(&mut self, key: &str, rows: CalibRows) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = rows,
            None => self.entries.push((key.to_string(), rows)),
        }
    }

    pub fn rows(&self, key: &str) -> Option<&CalibRows> {
        self.entries.iter().find(|(k, _)| k == key).map(|e| &e.1)
    }

    pub fn get(&self, key: &str) -> Option<RigidTransform> {
        self.rows(key).map(to_transform)
    }

    pub fn require(&self, key: &str) -> Result<RigidTransform> {
        self.get(key)
            .ok_or_else(|| Error::Parse { location: key.to_string(), message: "missing calibration key".into() })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, RigidTransform)> + '_ {
        self.entries.iter().map(|(k, r)| (k.as_str(), to_transform(r)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn to_transform(r: &CalibRows) -> RigidTransform {
    let rot = [[r[0][0], r[0][1], r[0][2]], [r[1][0], r[1][1], r[1][2]], [r[2][0], r[2][1], r[2][2]]];
    RigidTransform::from_rotation_matrix(&rot, [r[0][3], r[1][3], r[2][3]])
}

pub fn parse_calib(text: &str) -> Result<CalibSet> {
    let mut set = CalibSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, rest)) = line.split_once(':') else {
            return Err(Error::Parse { location: format!("line {}", lineno + 1), message: "expected 'key: values'".into() });
        };
        let key = key.trim();
        let vals = rest
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { location: key.to_string(), message: e.to_string() })?;
        if vals.len() != 12 {
            return Err(Error::Parse {
                location: key.to_string(),
                message: format!("expected 12 values, found {}", vals.len()),
            });
        }
        let r = [[vals[0], vals[1], vals[2]], [vals[4], vals[5], vals[6]], [vals[8], vals[9], vals[10]]];
        let deviation = orthonormality_error(&r);
        if deviation.is_nan() || deviation > ORTHONORMAL_TOL || determinant(&r) <= 0.0 {
            return Err(Error::NonRigid { key: key.to_string(), deviation });
        }
        set.insert_rows(key, [
            [vals[0], vals[1], vals[2], vals[3]],
            [vals[4], vals[5], vals[6], vals[7]],
            [vals[8], vals[9], vals[10], vals[11]],
        ]);
    }
    Ok(set)
}

pub fn load_calib(path: &Path) -> Result<CalibSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_calib(&text)
}

pub fn format_calib(set: &CalibSet) -> String {
    let mut out = String::new();
    for (key, rows) in &set.entries {
        let _ = write!(out, "{key}:");
        for row in rows {
            for v in row {
                let _ = write!(out, " {v:e}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_calib(set: &CalibSet, path: &Path) -> Result<()> {
    fs::write(path, format_calib(set)).map_err(|e| Error::io(path, e))
}

fn orthonormality_error(r: &[[f64; 3]; 3]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - expect).abs());
        }
    }
    worst
}

fn determinant(r: &[[f64; 3]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}
