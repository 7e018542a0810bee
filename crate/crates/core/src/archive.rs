//! Plain-text archive of labeled matrices.
//!
//! ```text
//! matrix F 4 12
//! -8.6990000000000001e-2 ...   (one line per row, 17 significant digits)
//! ```
//!
//! Lines starting with `#` are comments. Writing is deterministic, so the
//! same design always produces the same bytes.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix4};

use crate::design::{ConeForm, CouplingSign, Gain, PoleRegion, RfcDesign};
use crate::error::ArchiveError;
use crate::model::StateMatrix;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatrixArchive {
    entries: Vec<(String, DMatrix<f64>)>,
}

impl MatrixArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces a matrix. Labels may not contain whitespace.
    pub fn insert(&mut self, label: &str, m: DMatrix<f64>) {
        assert!(
            !label.is_empty() && !label.contains(char::is_whitespace),
            "bad label `{label}`"
        );
        match self.entries.iter_mut().find(|(l, _)| l == label) {
            Some(e) => e.1 = m,
            None => self.entries.push((label.to_string(), m)),
        }
    }

    pub fn insert_scalar(&mut self, label: &str, v: f64) {
        self.insert(label, DMatrix::from_element(1, 1, v));
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(l, _)| l.as_str())
    }

    pub fn get(&self, label: &str) -> Result<&DMatrix<f64>, ArchiveError> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, m)| m)
            .ok_or_else(|| ArchiveError::Missing(label.to_string()))
    }

    pub fn get_shaped(&self, label: &str, rows: usize, cols: usize) -> Result<&DMatrix<f64>, ArchiveError> {
        let m = self.get(label)?;
        if m.shape() != (rows, cols) {
            return Err(ArchiveError::Shape {
                label: label.to_string(),
                rows: m.nrows(),
                cols: m.ncols(),
                expected_rows: rows,
                expected_cols: cols,
            });
        }
        Ok(m)
    }

    pub fn scalar(&self, label: &str) -> Result<f64, ArchiveError> {
        Ok(self.get_shaped(label, 1, 1)?[(0, 0)])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (label, m) in &self.entries {
            let _ = writeln!(out, "matrix {label} {} {}", m.nrows(), m.ncols());
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ArchiveError> {
        let mut archive = Self::new();
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        while let Some((line, header)) = lines.next() {
            let parse_err = |reason: String| ArchiveError::Parse { line, reason };
            let parts: Vec<&str> = header.split_whitespace().collect();
            let [kw, label, rows, cols] = parts[..] else {
                return Err(parse_err(format!(
                    "expected `matrix <label> <rows> <cols>`, got `{header}`"
                )));
            };
            if kw != "matrix" {
                return Err(parse_err(format!("unexpected `{kw}`")));
            }
            let rows: usize = rows.parse().map_err(|_| parse_err(format!("bad row count `{rows}`")))?;
            let cols: usize = cols
                .parse()
                .map_err(|_| parse_err(format!("bad column count `{cols}`")))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (line, row) = lines.next().ok_or(ArchiveError::Parse {
                    line,
                    reason: format!("matrix `{label}` is truncated"),
                })?;
                let values: Result<Vec<f64>, _> = row.split_whitespace().map(str::parse::<f64>).collect();
                let values = values.map_err(|e| ArchiveError::Parse {
                    line,
                    reason: e.to_string(),
                })?;
                if values.len() != cols {
                    return Err(ArchiveError::Parse {
                        line,
                        reason: format!("expected {cols} values, found {}", values.len()),
                    });
                }
                data.extend(values);
            }
            archive.insert(label, DMatrix::from_row_slice(rows, cols, &data));
        }
        Ok(archive)
    }
}

fn dyn_of<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_iterator(R, C, m.iter().copied())
}

fn fixed<const R: usize, const C: usize>(
    a: &MatrixArchive,
    label: &str,
) -> Result<nalgebra::SMatrix<f64, R, C>, ArchiveError> {
    let m = a.get_shaped(label, R, C)?;
    Ok(nalgebra::SMatrix::<f64, R, C>::from_iterator(m.iter().copied()))
}

pub fn design_to_archive(d: &RfcDesign) -> MatrixArchive {
    let mut a = MatrixArchive::new();
    a.insert("F", dyn_of(&d.f));
    a.insert("G", dyn_of(&d.g));
    a.insert("R", dyn_of(&d.r));
    a.insert("Q", dyn_of(&d.q));
    a.insert("S", dyn_of(&d.s));
    a.insert_scalar("kappa", d.kappa);
    a.insert(
        "robot_counts",
        DMatrix::from_row_slice(1, 4, &d.robot_counts.map(|n| n as f64)),
    );
    a.insert(
        "pole_region",
        DMatrix::from_row_slice(1, 3, &[d.region.tau1, d.region.tau2, d.region.tau3]),
    );
    a.insert_scalar("decentralized", if d.scaled { 1.0 } else { 0.0 });
    a.insert_scalar("open_loop_cone", if d.cone == ConeForm::OpenLoop { 1.0 } else { 0.0 });
    a.insert_scalar(
        "flipped_coupling",
        if d.coupling == CouplingSign::Flipped { 1.0 } else { 0.0 },
    );
    a
}

pub fn design_from_archive(a: &MatrixArchive) -> Result<RfcDesign, ArchiveError> {
    let counts = a.get_shaped("robot_counts", 1, 4)?;
    let region = a.get_shaped("pole_region", 1, 3)?;
    let flag = |label: &str| -> Result<bool, ArchiveError> { Ok(a.scalar(label)? != 0.0) };
    let robot_counts = [0, 1, 2, 3].map(|k| counts[(0, k)].round().max(0.0) as usize);
    if robot_counts.iter().zip(counts.iter()).any(|(n, v)| *n as f64 != *v) {
        return Err(ArchiveError::Parse {
            line: 0,
            reason: "robot_counts must be nonnegative integers".into(),
        });
    }
    Ok(RfcDesign {
        f: fixed::<4, 12>(a, "F")? as Gain,
        g: fixed::<4, 4>(a, "G")? as Matrix4<f64>,
        r: fixed::<4, 12>(a, "R")?,
        q: fixed::<12, 12>(a, "Q")? as StateMatrix,
        s: fixed::<4, 4>(a, "S")?,
        kappa: a.scalar("kappa")?,
        scaled: flag("decentralized")?,
        robot_counts,
        region: PoleRegion {
            tau1: region[(0, 0)],
            tau2: region[(0, 1)],
            tau3: region[(0, 2)],
        },
        cone: if flag("open_loop_cone")? {
            ConeForm::OpenLoop
        } else {
            ConeForm::ClosedLoop
        },
        coupling: if flag("flipped_coupling")? {
            CouplingSign::Flipped
        } else {
            CouplingSign::ClosedLoop
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut a = MatrixArchive::new();
        let m = DMatrix::from_row_slice(2, 3, &[1.0 / 3.0, -2.5e-17, 1e300, 0.0, -0.1, std::f64::consts::PI]);
        a.insert("M", m.clone());
        a.insert_scalar("k", 88.25);
        let text = a.to_text();
        let b = MatrixArchive::parse(&text).unwrap();
        assert_eq!(b.get("M").unwrap(), &m);
        assert_eq!(b.scalar("k").unwrap(), 88.25);
        assert_eq!(b.to_text(), text);
    }

    #[test]
    fn reports_shape_and_missing() {
        let mut a = MatrixArchive::new();
        a.insert("M", DMatrix::zeros(2, 2));
        assert!(matches!(a.get_shaped("M", 3, 2), Err(ArchiveError::Shape { .. })));
        assert!(matches!(a.get("N"), Err(ArchiveError::Missing(_))));
    }

    #[test]
    fn truncated_matrix_is_a_parse_error() {
        let err = MatrixArchive::parse("matrix M 2 2\n1 2\n").unwrap_err();
        assert!(matches!(err, ArchiveError::Parse { .. }));
        let err = MatrixArchive::parse("matrix M 1 2\n1 x\n").unwrap_err();
        assert!(matches!(err, ArchiveError::Parse { line: 2, .. }));
    }
}
