//! CSV and SVG output.

use std::path::{Path, PathBuf};

use smoothflow::dynamics::{DiagnosticsRecord, Trajectory};

use crate::svg::Plot;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("nothing to report: the record list is empty")]
    EmptyRecords,
    #[error("record count {records} does not match trajectory length {states}")]
    LengthMismatch { records: usize, states: usize },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("writing {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// One trajectory with its diagnostics, written as `<name>.csv`.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryTable<'a> {
    pub name: &'a str,
    pub trajectory: &'a Trajectory,
    pub records: &'a [DiagnosticsRecord],
}

/// `t,x_1..x_n,v_1..v_n,value_reg,value_raw,residual,energy_E,W,t2_abs_residual,t_speed`
pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend((1..=n).map(|i| format!("v_{i}")));
    h.extend(
        ["value_reg", "value_raw", "residual", "energy_E", "W", "t2_abs_residual", "t_speed"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, ReportError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    csv::Writer::from_path(path).map_err(|source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_trajectory_csv(path: &Path, table: &TrajectoryTable<'_>) -> Result<(), ReportError> {
    let states = &table.trajectory.states;
    if table.records.is_empty() {
        return Err(ReportError::EmptyRecords);
    }
    if table.records.len() != states.len() {
        return Err(ReportError::LengthMismatch {
            records: table.records.len(),
            states: states.len(),
        });
    }
    let n = states[0].x.len();
    let mut rows = Vec::with_capacity(states.len());
    for (st, r) in states.iter().zip(table.records) {
        let mut row = vec![num(st.t)];
        row.extend(st.x.iter().map(|&v| num(v)));
        row.extend(st.v.iter().map(|&v| num(v)));
        row.push(num(r.value_reg));
        row.push(num(r.value_raw));
        row.push(num(r.residual));
        row.push(r.energy_e.map(num).unwrap_or_default());
        row.push(num(r.w));
        row.push(num(r.t2_abs_residual));
        row.push(num(r.t_speed));
        rows.push(row);
    }
    write_table(path, &trajectory_header(n), &rows)
}

/// Writes a plain CSV table.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), ReportError> {
    let mut w = csv_writer(path)?;
    let err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Formats a float table cell.
pub fn cell(v: f64) -> String {
    num(v)
}

pub fn write_svg(path: &Path, plot: &Plot) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| ReportError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, plot.render()).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes one CSV per table and one SVG per plot into `dir`.
pub fn render_report(
    dir: &Path,
    tables: &[TrajectoryTable<'_>],
    plots: &[(&str, &Plot)],
) -> Result<Vec<PathBuf>, ReportError> {
    if tables.is_empty() || tables.iter().any(|t| t.records.is_empty()) {
        return Err(ReportError::EmptyRecords);
    }
    let mut files = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        write_trajectory_csv(&path, t)?;
        files.push(path);
    }
    for (name, plot) in plots {
        let path = dir.join(format!("{name}.svg"));
        write_svg(&path, plot)?;
        files.push(path);
    }
    Ok(files)
}

/// A reference guide `y = y_ref (t / t_ref)^{slope}` over `[t_lo, t_hi]`.
pub fn slope_guide(t_lo: f64, t_hi: f64, t_ref: f64, y_ref: f64, slope: f64) -> Vec<(f64, f64)> {
    [t_lo, t_hi]
        .iter()
        .map(|&t| (t, y_ref * (t / t_ref).powf(slope)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use smoothflow::dynamics::{FlowKind, OdeStats, TrajectoryState};
    use smoothflow::Vector;

    fn record(t: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            t,
            mu: 1.0 / t,
            value_reg: 0.5,
            value_raw: 0.75,
            penalty: 0.1,
            residual: 0.25,
            energy_e: if t > 1.0 { Some(1.5) } else { None },
            w: 2.0,
            t2_abs_residual: 0.25 * t * t,
            t_speed: t,
            t2_raw_gap: 0.0,
        }
    }

    fn traj() -> Trajectory {
        Trajectory {
            kind: FlowKind::Inertial { alpha: 3.0 },
            t0: 1.0,
            states: [1.0, 2.0]
                .iter()
                .map(|&t| TrajectoryState {
                    t,
                    x: Vector::from_column_slice(&[t, -t]),
                    v: Vector::from_column_slice(&[0.5, 0.25]),
                })
                .collect(),
            stats: OdeStats::default(),
            warnings: vec![],
        }
    }

    #[test]
    fn header_follows_schema() {
        assert_eq!(
            trajectory_header(2).join(","),
            "t,x_1,x_2,v_1,v_2,value_reg,value_raw,residual,energy_E,W,t2_abs_residual,t_speed"
        );
    }

    #[test]
    fn empty_records_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let tr = traj();
        let t = TrajectoryTable {
            name: "a",
            trajectory: &tr,
            records: &[],
        };
        assert!(matches!(render_report(dir.path(), &[t], &[]), Err(ReportError::EmptyRecords)));
    }

    #[test]
    fn same_input_gives_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let tr = traj();
        let recs = vec![record(1.0), record(2.0)];
        let table = TrajectoryTable {
            name: "run",
            trajectory: &tr,
            records: &recs,
        };
        let plot = Plot::new("p", "t", "y").with(crate::svg::Series::new("s", vec![(1.0, 1.0), (2.0, 3.0)]));
        let a = render_report(&dir.path().join("a"), &[table], &[("plot", &plot)]).unwrap();
        let b = render_report(&dir.path().join("b"), &[table], &[("plot", &plot)]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let text = std::fs::read_to_string(&a[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        // energy omitted on the first row
        assert!(lines[1].contains(",,"));
    }
}
