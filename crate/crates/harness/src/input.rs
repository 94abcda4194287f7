//! Observation files: header `w, y_1.., z_1..` with an optional `weight`
//! column. Columns may appear in any order.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use cot_pi::datagen::SyntheticDraw;
use cot_pi::sample::{Group, GroupData};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    w: usize,
    y: Vec<usize>,
    z: Vec<usize>,
    weight: Option<usize>,
}

fn indexed(name: &str, prefix: &str) -> Option<usize> {
    name.strip_prefix(prefix)?.parse().ok().filter(|&k| k >= 1)
}

fn layout(headers: &csv::StringRecord) -> Result<Layout> {
    let schema = |m: String| Err(HarnessError::Schema(m));
    let mut w = None;
    let mut weight = None;
    let mut y = Vec::new();
    let mut z = Vec::new();
    for (col, raw) in headers.iter().enumerate() {
        let name = raw.trim();
        if name == "w" {
            if w.replace(col).is_some() {
                return schema("duplicate column `w`".into());
            }
        } else if name == "weight" {
            if weight.replace(col).is_some() {
                return schema("duplicate column `weight`".into());
            }
        } else if let Some(k) = indexed(name, "y_") {
            y.push((k, col));
        } else if let Some(k) = indexed(name, "z_") {
            z.push((k, col));
        } else {
            return schema(format!("unknown column `{name}`"));
        }
    }
    let Some(w) = w else {
        return schema("missing column `w`".into());
    };
    let ordered = |mut v: Vec<(usize, usize)>, prefix: &str| -> Result<Vec<usize>> {
        if v.is_empty() {
            return Err(HarnessError::Schema(format!("missing columns `{prefix}1..`")));
        }
        v.sort_unstable();
        for (i, (k, _)) in v.iter().enumerate() {
            if *k != i + 1 {
                return Err(HarnessError::Schema(format!("expected column `{prefix}{}`", i + 1)));
            }
        }
        Ok(v.into_iter().map(|(_, c)| c).collect())
    };
    Ok(Layout {
        w,
        y: ordered(y, "y_")?,
        z: ordered(z, "z_")?,
        weight,
    })
}

/// Parses observations into control and treated groups.
pub fn read_groups<R: Read>(reader: R) -> Result<(GroupData, GroupData)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let lay = layout(rdr.headers()?)?;
    let (d_y, d_z) = (lay.y.len(), lay.z.len());
    let mut z: [Vec<f64>; 2] = Default::default();
    let mut y: [Vec<f64>; 2] = Default::default();
    let mut wt: [Vec<f64>; 2] = Default::default();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row_err = |message: String| HarnessError::Row { line, message };
        let field = |col: usize, name: &str| -> Result<f64> {
            let raw = rec.get(col).ok_or_else(|| row_err(format!("missing value for `{name}`")))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| row_err(format!("`{name}` is not a number: {raw:?}")))?;
            if !v.is_finite() {
                return Err(row_err(format!("`{name}` is not finite: {raw:?}")));
            }
            Ok(v)
        };
        let g = match rec.get(lay.w) {
            Some("0") => 0,
            Some("1") => 1,
            other => return Err(row_err(format!("`w` must be 0 or 1, got {other:?}"))),
        };
        for (k, &c) in lay.y.iter().enumerate() {
            y[g].push(field(c, &format!("y_{}", k + 1))?);
        }
        for (k, &c) in lay.z.iter().enumerate() {
            z[g].push(field(c, &format!("z_{}", k + 1))?);
        }
        if let Some(c) = lay.weight {
            let v = field(c, "weight")?;
            if v <= 0.0 {
                return Err(row_err(format!("`weight` must be positive, got {v}")));
            }
            wt[g].push(v);
        }
    }
    let [z0, z1] = z;
    let [y0, y1] = y;
    let [w0, w1] = wt;
    let mut g0 = GroupData::new(Group::Control, d_z, d_y, z0, y0);
    let mut g1 = GroupData::new(Group::Treated, d_z, d_y, z1, y1);
    if lay.weight.is_some() {
        g0.weights = Some(w0);
        g1.weights = Some(w1);
    }
    if g0.is_empty() || g1.is_empty() {
        return Err(HarnessError::Schema("both w=0 and w=1 rows are required".into()));
    }
    Ok((g0, g1))
}

pub fn read_groups_path(path: &Path) -> Result<(GroupData, GroupData)> {
    read_groups(File::open(path)?)
}

/// Writes both arms of a draw in the observation schema.
pub fn write_groups<W: Write>(out: W, g0: &GroupData, g1: &GroupData) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["w".to_string()];
    header.extend((1..=g0.d_y).map(|k| format!("y_{k}")));
    header.extend((1..=g0.d_z).map(|k| format!("z_{k}")));
    let weighted = g0.weights.is_some() && g1.weights.is_some();
    if weighted {
        header.push("weight".into());
    }
    wtr.write_record(&header)?;
    for (w, g) in [(0, g0), (1, g1)] {
        for i in 0..g.len() {
            let mut row = vec![w.to_string()];
            row.extend(g.outcome(i).iter().map(|v| v.to_string()));
            row.extend(g.covariate(i).iter().map(|v| v.to_string()));
            if let (true, Some(ws)) = (weighted, &g.weights) {
                row.push(ws[i].to_string());
            }
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_draw<W: Write>(out: W, draw: &SyntheticDraw) -> Result<()> {
    write_groups(out, &draw.control, &draw.treated)
}
