//! Plain-text exchange formats. Every CSV may open with `# key=value`
//! comment lines recording the settings that produced it.

use std::io::{Read, Write};

use crate::discovery::HistoryRecord;
use crate::dynamics::{SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::spectral::{EigenfunctionField, Partition, SpectralDecomposition};

fn write_comments<W: Write>(w: &mut W, comments: &[(String, String)]) -> Result<()> {
    for (k, v) in comments {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

/// Header `traj_id,t,x1,…,xd`, one row per sample, `t = step·dt`.
pub fn write_trajectories<W: Write>(
    mut w: W,
    trajectories: &[Trajectory],
    comments: &[(String, String)],
) -> Result<()> {
    write_comments(&mut w, comments)?;
    let dim = trajectories.first().map_or(0, Trajectory::dim);
    let mut out = writer(w);
    let mut header = vec!["traj_id".to_string(), "t".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    out.write_record(&header)?;
    for t in trajectories {
        if t.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: t.dim(),
            });
        }
        for (step, x) in t.states().enumerate() {
            let mut row = vec![t.id.to_string(), (step as f64 * t.dt).to_string()];
            row.extend(x.iter().map(f64::to_string));
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads trajectories grouped by consecutive `traj_id`. The sampling
/// interval is recovered from the second row of each trajectory.
pub fn read_trajectories<R: Read>(r: R, system: &SystemSpec) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let headers = rdr.headers()?.clone();
    let dim = headers.len().saturating_sub(2);
    if headers.get(0) != Some("traj_id") || headers.get(1) != Some("t") || dim == 0 {
        return Err(Error::Format {
            what: "trajectory csv",
            detail: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    let mut current: Option<(u64, Vec<f64>, Vec<Vec<f64>>)> = None;
    let finish = |(id, times, states): (u64, Vec<f64>, Vec<Vec<f64>>)| -> Result<Trajectory> {
        let dt = match times.as_slice() {
            [t0, t1, ..] => t1 - t0,
            _ => {
                return Err(Error::InsufficientData {
                    needed: 2,
                    found: times.len(),
                })
            }
        };
        Trajectory::new(id, system.clone(), dt, states)
    };
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Format {
                    what: "trajectory csv",
                    detail: format!("bad number in column {} of {:?}", i + 1, rec.iter().collect::<Vec<_>>()),
                })
        };
        let id: u64 = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Format {
                what: "trajectory csv",
                detail: format!("bad traj_id {:?}", rec.get(0)),
            })?;
        let t = parse(1)?;
        let x = (0..dim).map(|i| parse(i + 2)).collect::<Result<Vec<_>>>()?;
        match current.as_mut() {
            Some((cid, times, states)) if *cid == id => {
                times.push(t);
                states.push(x);
            }
            _ => {
                if let Some(done) = current.take() {
                    out.push(finish(done)?);
                }
                current = Some((id, vec![t], vec![x]));
            }
        }
    }
    if let Some(done) = current {
        out.push(finish(done)?);
    }
    Ok(out)
}

/// Header `re,im,abs,in_unit_cluster`, in decomposition order.
pub fn write_eigenvalues<W: Write>(
    mut w: W,
    spec: &SpectralDecomposition,
    comments: &[(String, String)],
) -> Result<()> {
    write_comments(&mut w, comments)?;
    let mut out = writer(w);
    out.write_record(["re", "im", "abs", "in_unit_cluster"])?;
    for (i, l) in spec.eigenvalues.iter().enumerate() {
        out.write_record([
            l.re.to_string(),
            l.im.to_string(),
            l.norm().to_string(),
            spec.in_unit_cluster(i).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Header `x1,x2,re_phi,im_phi,abs_phi`, one row per grid node.
pub fn write_field<W: Write>(
    mut w: W,
    field: &EigenfunctionField,
    comments: &[(String, String)],
) -> Result<()> {
    write_comments(&mut w, comments)?;
    let mut out = writer(w);
    out.write_record(["x1", "x2", "re_phi", "im_phi", "abs_phi"])?;
    for (x, v) in field.nodes.iter().zip(&field.values) {
        out.write_record([
            x[0].to_string(),
            x[1].to_string(),
            v.re.to_string(),
            v.im.to_string(),
            v.norm().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Header `x1,x2,label`; unassigned nodes carry label 0.
pub fn write_partition<W: Write>(
    mut w: W,
    partition: &Partition,
    comments: &[(String, String)],
) -> Result<()> {
    write_comments(&mut w, comments)?;
    let mut out = writer(w);
    out.write_record(["x1", "x2", "label"])?;
    for (x, l) in partition.nodes.iter().zip(&partition.labels) {
        out.write_record([x[0].to_string(), x[1].to_string(), l.unwrap_or(0).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Header `row,col,value` over the nonzeros of a sparse matrix.
pub fn write_mask<W: Write>(w: W, nonzeros: &[(usize, usize, f64)]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["row", "col", "value"])?;
    for (i, j, v) in nonzeros {
        out.write_record([i.to_string(), j.to_string(), v.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Header `step[,label],psi1,…,psiL`.
pub fn write_predictions<W: Write>(
    mut w: W,
    rows: &[Vec<f64>],
    label: Option<usize>,
    comments: &[(String, String)],
) -> Result<()> {
    write_comments(&mut w, comments)?;
    let width = rows.first().map_or(0, Vec::len);
    let mut out = writer(w);
    let mut header = vec!["step".to_string()];
    if label.is_some() {
        header.push("label".into());
    }
    header.extend((1..=width).map(|i| format!("psi{i}")));
    out.write_record(&header)?;
    for (step, row) in rows.iter().enumerate() {
        let mut rec = vec![step.to_string()];
        if let Some(l) = label {
            rec.push(l.to_string());
        }
        rec.extend(row.iter().map(f64::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// One JSON object per line.
pub fn write_history<W: Write>(mut w: W, history: &[HistoryRecord]) -> Result<()> {
    for r in history {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_history<R: Read>(r: R) -> Result<Vec<HistoryRecord>> {
    serde_json::Deserializer::from_reader(r)
        .into_iter::<HistoryRecord>()
        .map(|r| r.map_err(Error::from))
        .collect()
}
