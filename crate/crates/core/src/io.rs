//! CSV exchange formats. Fields use `t,z,s`, one row per sample, row-major
//! by time; trajectories add the derivative channels.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::domain::{SpaceTimeField, SpatialGrid, StateSnapshot, StateTrajectory};
use crate::error::{Error, Result};

/// Relative slack when checking that rows share one spatial grid.
const COORD_TOL: f64 = 1e-9;

fn check_header(rdr: &mut csv::Reader<impl Read>, want: &[&str]) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if got.len() < want.len() || got.iter().zip(want).any(|(g, w)| g != w) {
        return Err(Error::Data(format!("expected header {}, got {}", want.join(","), got.join(","))));
    }
    Ok(())
}

fn parse_rows(rdr: &mut csv::Reader<impl Read>, width: usize) -> Result<Vec<Vec<f64>>> {
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            if rec.len() < width {
                return Err(Error::Data(format!("row {} has {} columns, need {width}", i + 2, rec.len())));
            }
            (0..width)
                .map(|c| {
                    rec[c].trim().parse::<f64>().map_err(|e| {
                        Error::Data(format!("row {}, column {}: {e}", i + 2, c + 1))
                    })
                })
                .collect()
        })
        .collect()
}

/// Rows of one time frame.
type Frame<'a> = &'a [Vec<f64>];

/// Groups rows by their time column and recovers the regular grid.
fn group_by_time(rows: &[Vec<f64>]) -> Result<(SpatialGrid, Vec<f64>, Vec<Frame<'_>>)> {
    if rows.is_empty() {
        return Err(Error::Data("no samples".into()));
    }
    let n = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
    if !rows.len().is_multiple_of(n) {
        return Err(Error::Data(format!("{} rows do not split into frames of {n} nodes", rows.len())));
    }
    let frames: Vec<Frame> = rows.chunks(n).collect();
    let z: Vec<f64> = frames[0].iter().map(|r| r[1]).collect();
    let grid = SpatialGrid::new(n, z[0], z[n - 1])?;
    let scale = grid.length() * COORD_TOL;
    let expected = grid.coords();
    if z.iter().zip(&expected).any(|(a, b)| (a - b).abs() > scale) {
        return Err(Error::Data("node coordinates are not a regular grid".into()));
    }
    let mut times = Vec::with_capacity(frames.len());
    for frame in &frames {
        let t = frame[0][0];
        if frame.iter().any(|r| r[0] != t) {
            return Err(Error::Data(format!("frame at t = {t} mixes time stamps")));
        }
        if frame.iter().zip(&expected).any(|(r, b)| (r[1] - b).abs() > scale) {
            return Err(Error::Data(format!("frame at t = {t} uses a different grid")));
        }
        times.push(t);
    }
    Ok((grid, times, frames))
}

pub fn read_field(reader: impl Read) -> Result<SpaceTimeField> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &["t", "z", "s"])?;
    let rows = parse_rows(&mut rdr, 3)?;
    let (grid, times, frames) = group_by_time(&rows)?;
    let values = DMatrix::from_fn(frames.len(), grid.n_nodes(), |i, j| frames[i][j][2]);
    SpaceTimeField::new(grid, times, values)
}

pub fn read_field_file(path: impl AsRef<Path>) -> Result<SpaceTimeField> {
    read_field(std::fs::File::open(path)?)
}

fn write_rows(writer: impl Write, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header)?;
    for row in rows {
        // `{}` on f64 prints the shortest representation that parses back exactly.
        wtr.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    wtr.flush()?;
    Ok(())
}

fn field_rows<'a>(
    field: &'a SpaceTimeField,
    extra: &'a [&'a SpaceTimeField],
) -> impl Iterator<Item = Vec<f64>> + 'a {
    let z = field.grid().coords();
    (0..field.n_times()).flat_map(move |i| {
        let z = z.clone();
        (0..z.len()).map(move |j| {
            let mut row = vec![field.times()[i], z[j], field.values()[(i, j)]];
            row.extend(extra.iter().map(|f| f.values()[(i, j)]));
            row
        })
    })
}

pub fn write_field(writer: impl Write, field: &SpaceTimeField) -> Result<()> {
    write_rows(writer, &["t", "z", "s"], field_rows(field, &[]))
}

/// Field plus ensemble mean and spread, on the same grid and times.
pub fn write_field_with_bands(
    writer: impl Write,
    field: &SpaceTimeField,
    mean: &SpaceTimeField,
    std: &SpaceTimeField,
) -> Result<()> {
    if mean.values().shape() != field.values().shape() || std.values().shape() != field.values().shape() {
        return Err(Error::dim("band fields differ in shape from the prediction"));
    }
    write_rows(writer, &["t", "z", "s", "s_mean", "s_std"], field_rows(field, &[mean, std]))
}

pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "z", "p", "q", "dpdt", "dqdt"];

pub fn write_trajectory(writer: impl Write, traj: &StateTrajectory) -> Result<()> {
    let derivs = traj
        .derivs
        .as_ref()
        .ok_or_else(|| Error::Data("trajectory has no time derivatives to write".into()))?;
    let z = traj.grid.coords();
    let rows = (0..traj.len()).flat_map(|i| {
        let z = z.clone();
        let (s, d) = (&traj.states[i], &derivs[i]);
        let t = traj.times[i];
        (0..z.len()).map(move |j| vec![t, z[j], s.p[j], s.q[j], d.p[j], d.q[j]])
    });
    write_rows(writer, &TRAJECTORY_HEADER, rows)
}

pub fn read_trajectory(reader: impl Read) -> Result<StateTrajectory> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &TRAJECTORY_HEADER)?;
    let rows = parse_rows(&mut rdr, 6)?;
    let (grid, times, frames) = group_by_time(&rows)?;
    let column = |f: &[Vec<f64>], c: usize| DVector::from_iterator(f.len(), f.iter().map(|r| r[c]));
    let states = frames
        .iter()
        .map(|f| StateSnapshot { p: column(f, 2), q: column(f, 3) })
        .collect();
    let derivs = frames
        .iter()
        .map(|f| StateSnapshot { p: column(f, 4), q: column(f, 5) })
        .collect();
    StateTrajectory::new(grid, times, states, Some(derivs))
}

/// One state, header `z,p,q`.
pub fn write_snapshot(writer: impl Write, grid: &SpatialGrid, state: &StateSnapshot) -> Result<()> {
    let z = grid.coords();
    write_rows(writer, &["z", "p", "q"], (0..z.len()).map(|j| vec![z[j], state.p[j], state.q[j]]))
}

pub fn read_snapshot(reader: impl Read) -> Result<(SpatialGrid, StateSnapshot)> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &["z", "p", "q"])?;
    let rows = parse_rows(&mut rdr, 3)?;
    if rows.len() < 3 {
        return Err(Error::Data("snapshot needs at least 3 nodes".into()));
    }
    let n = rows.len();
    let grid = SpatialGrid::new(n, rows[0][0], rows[n - 1][0])?;
    let p: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let q: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    Ok((grid, crate::domain::stack_state(&p, &q)?))
}

/// Generic numeric table with a header row.
pub fn write_table(writer: impl Write, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    write_rows(writer, header, rows.iter().cloned())
}

pub fn read_table(reader: impl Read) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = parse_rows(&mut rdr, header.len())?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_field() -> SpaceTimeField {
        let g = SpatialGrid::new(4, 0.0, 0.3).unwrap();
        SpaceTimeField::from_fn(g, vec![0.0, 0.02, 0.04], |t, z| (7.0 * t + z).sin() / 3.0).unwrap()
    }

    #[test]
    fn field_round_trips_exactly() {
        let f = sample_field();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,z,s\n"));
        assert_eq!(text.lines().count(), 13);
        assert_eq!(read_field(buf.as_slice()).unwrap(), f);
    }

    #[test]
    fn trajectory_round_trips_exactly() {
        let g = SpatialGrid::unit(3).unwrap();
        let s = StateSnapshot::from_flat(&DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6])).unwrap();
        let d = StateSnapshot::from_flat(&DVector::from_vec(vec![1.0, -2.0, 3.0, 1e-17, 5.0, 6.0])).unwrap();
        let traj = StateTrajectory::new(g, vec![0.5, 0.75], vec![s.clone(), d.clone()], Some(vec![d, s])).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &traj).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,z,p,q,dpdt,dqdt\n"));
        assert_eq!(read_trajectory(buf.as_slice()).unwrap(), traj);
    }

    #[test]
    fn snapshot_round_trips() {
        let g = SpatialGrid::unit(3).unwrap();
        let s = StateSnapshot::from_flat(&DVector::from_vec(vec![0.0, 0.2, 0.0, 0.4, 0.5, 0.6])).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &g, &s).unwrap();
        assert_eq!(read_snapshot(buf.as_slice()).unwrap(), (g, s));
    }

    #[test]
    fn malformed_input_is_rejected() {
        assert!(read_field("t,z,x\n0,0,1\n".as_bytes()).is_err());
        assert!(read_field("t,z,s\n0,0,1\n0,0.5,1\n0,1,abc\n".as_bytes()).is_err());
        // Second frame is missing a node.
        assert!(read_field("t,z,s\n0,0,1\n0,0.5,1\n0,1,1\n1,0,1\n1,0.5,1\n".as_bytes()).is_err());
        // Irregular spacing.
        assert!(read_field("t,z,s\n0,0,1\n0,0.2,1\n0,1,1\n".as_bytes()).is_err());
    }

    #[test]
    fn bands_need_matching_shapes() {
        let f = sample_field();
        let mut buf = Vec::new();
        write_field_with_bands(&mut buf, &f, &f, &f).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,z,s,s_mean,s_std\n"));
        let short = f.slice_frames(0, 2).unwrap();
        assert!(write_field_with_bands(Vec::new(), &f, &short, &f).is_err());
    }
}
