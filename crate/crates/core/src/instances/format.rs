//! Native line-oriented JSON instance format and the Dumas TSPTW text format.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_tsptw, Hardness, Instance, RawTsptw, TspdlInstance, TsptwInstance, Variant};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NativeRecord {
    variant: Variant,
    n: usize,
    coords: Vec<[f64; 2]>,
    tw: Option<Vec<[f64; 2]>>,
    demand: Option<Vec<u32>>,
    draft: Option<Vec<u32>>,
    hardness: Hardness,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time_scale: Option<f64>,
}

/// One-line JSON encoding. Floats use the shortest representation that
/// parses back to the same bits.
pub fn serialize_instance(instance: &Instance) -> String {
    let record = match instance {
        Instance::Tsptw(i) => NativeRecord {
            variant: Variant::Tsptw,
            n: i.n(),
            coords: i.coords().to_vec(),
            tw: Some(i.tw_lo().iter().zip(i.tw_hi()).map(|(&l, &u)| [l, u]).collect()),
            demand: None,
            draft: None,
            hardness: i.hardness(),
            seed: i.seed(),
            time_scale: Some(i.time_scale()),
        },
        Instance::Tspdl(i) => NativeRecord {
            variant: Variant::Tspdl,
            n: i.n(),
            coords: i.coords().to_vec(),
            tw: None,
            demand: Some(i.demand().to_vec()),
            draft: Some(i.draft().to_vec()),
            hardness: i.hardness(),
            seed: i.seed(),
            time_scale: None,
        },
    };
    serde_json::to_string(&record).expect("instance records always serialize")
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let record: NativeRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    from_record(record).map_err(|e| match e {
        Error::InvalidInstance(msg) => Error::Parse { line: 1, msg },
        other => other,
    })
}

fn from_record(r: NativeRecord) -> Result<Instance> {
    if r.coords.len() != r.n + 1 {
        return Err(Error::InvalidInstance(format!(
            "n = {} but {} coordinates",
            r.n,
            r.coords.len()
        )));
    }
    match r.variant {
        Variant::Tsptw => {
            let tw =
                r.tw.ok_or_else(|| Error::InvalidInstance("tsptw record without `tw`".into()))?;
            let time_scale = r
                .time_scale
                .ok_or_else(|| Error::InvalidInstance("tsptw record without `time_scale`".into()))?;
            let (lo, hi) = tw.iter().map(|w| (w[0], w[1])).unzip();
            TsptwInstance::new(r.coords, lo, hi, time_scale, r.hardness, r.seed).map(Instance::Tsptw)
        }
        Variant::Tspdl => {
            let demand = r
                .demand
                .ok_or_else(|| Error::InvalidInstance("tspdl record without `demand`".into()))?;
            let draft = r
                .draft
                .ok_or_else(|| Error::InvalidInstance("tspdl record without `draft`".into()))?;
            TspdlInstance::new(r.coords, demand, draft, r.hardness, r.seed).map(Instance::Tspdl)
        }
    }
}

/// Reads a dataset: one native record per non-blank line.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Instance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst = parse_instance(line).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { line: k + 1, msg },
            other => other,
        })?;
        out.push(inst);
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, instances: &[Instance]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    for inst in instances {
        buf.push_str(&serialize_instance(inst));
        buf.push('\n');
    }
    file.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Parses a Dumas-style TSPTW benchmark file into raw form.
///
/// Rows are `id x y demand ready due service`; id 1 is the depot and a lone
/// `999` ends the table. Non-numeric lines before the first row are headers.
pub fn parse_dumas_raw(text: &str) -> Result<RawTsptw> {
    let mut rows: BTreeMap<usize, ([f64; 2], f64, f64)> = BTreeMap::new();
    for (k, raw_line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let first_numeric = tokens[0].parse::<f64>().is_ok();
        if !first_numeric {
            if rows.is_empty() {
                continue;
            }
            return Err(Error::Parse {
                line: line_no,
                msg: format!("unexpected text `{line}` inside the node table"),
            });
        }
        if tokens[0] == "999" && tokens.len() == 1 {
            break;
        }
        if tokens.len() != 7 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 7 fields, found {}", tokens.len()),
            });
        }
        let mut vals = [0.0f64; 7];
        for (v, t) in vals.iter_mut().zip(&tokens) {
            *v = t.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("`{t}` is not a number"),
            })?;
        }
        let id = vals[0];
        if !(id >= 1.0 && id.fract() == 0.0) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("invalid node id `{}`", tokens[0]),
            });
        }
        let (ready, due, service) = (vals[4], vals[5], vals[6]);
        if ready < 0.0 || due < 0.0 || ready > due {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("invalid window [{ready}, {due}]"),
            });
        }
        if service != 0.0 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("nonzero service time {service} is not supported"),
            });
        }
        if rows.insert(id as usize, ([vals[1], vals[2]], ready, due)).is_some() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate node id {}", id as usize),
            });
        }
    }
    if rows.len() < 2 {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            msg: "need a depot and at least one customer".into(),
        });
    }
    if let Some((pos, (&id, _))) = rows.iter().enumerate().find(|(p, (&id, _))| id != p + 1) {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!(
                "node ids must be 1..={}; id {} found at rank {}",
                rows.len(),
                id,
                pos + 1
            ),
        });
    }
    let mut coords = Vec::with_capacity(rows.len());
    let mut tw_lo = Vec::with_capacity(rows.len());
    let mut tw_hi = Vec::with_capacity(rows.len());
    for (c, lo, hi) in rows.into_values() {
        coords.push(c);
        tw_lo.push(lo);
        tw_hi.push(hi);
    }
    Ok(RawTsptw {
        coords,
        tw_lo,
        tw_hi,
        hardness: Hardness::Benchmark,
        seed: 0,
    })
}

/// Parses and normalizes a Dumas benchmark file. The file's depot due date is
/// kept as the depot deadline.
pub fn parse_dumas(text: &str) -> Result<TsptwInstance> {
    normalize_tsptw(&parse_dumas_raw(text)?)
}
