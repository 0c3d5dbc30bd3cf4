//! Product files.
//!
//! `bin` layout (little-endian):
//! ```text
//! 0   magic        b"RDTPROD1"
//! 8   header len   u64
//! 16  header       UTF-8 JSON: {"kind", "metadata", "arrays": [{"name", "shape"}]}
//! ..  payload      each listed array as f64, row-major, in listed order
//! ```
//! `json` carries the same header with each array's `data` inline (NaN as
//! null); `csv` is one row per sample in long form.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde_json::{json, Value};

use super::qpe::AccumulationGrid;
use super::qvp::QvpProfile;
use super::timeseries::Timeseries;
use crate::chunkstore::canonical_json;
use crate::time::Timestamp;

pub const BIN_MAGIC: &[u8; 8] = b"RDTPROD1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Bin,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "bin" => Ok(Format::Bin),
            other => Err(format!("unknown format {other:?} (expected csv, json or bin)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Bin => "bin",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedArray {
    fn new(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Self {
        NamedArray { name: name.into(), shape, data }
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

fn times_json(t: &[Timestamp]) -> Value {
    Value::Array(t.iter().map(|t| Value::String(t.to_rfc3339())).collect())
}

/// A serializable analysis result.
pub trait Product {
    fn kind(&self) -> &'static str;
    fn metadata(&self) -> Value;
    fn arrays(&self) -> Vec<NamedArray>;
    fn write_csv(&self, w: &mut dyn Write) -> io::Result<()>;

    fn write(&self, format: Format, w: &mut dyn Write) -> io::Result<()> {
        match format {
            Format::Csv => self.write_csv(w),
            Format::Json => {
                let arrays: serde_json::Map<String, Value> = self
                    .arrays()
                    .into_iter()
                    .map(|a| (a.name, json!({ "shape": a.shape, "data": a.data.into_iter().map(num).collect::<Vec<_>>() })))
                    .collect();
                let doc = json!({ "kind": self.kind(), "metadata": self.metadata(), "arrays": arrays });
                serde_json::to_writer_pretty(&mut *w, &doc)?;
                w.write_all(b"\n")
            }
            Format::Bin => {
                let arrays = self.arrays();
                let listing: Vec<Value> = arrays.iter().map(|a| json!({ "name": a.name, "shape": a.shape })).collect();
                let header = canonical_json(&json!({ "kind": self.kind(), "metadata": self.metadata(), "arrays": listing }));
                w.write_all(BIN_MAGIC)?;
                w.write_all(&(header.len() as u64).to_le_bytes())?;
                w.write_all(&header)?;
                let mut buf = Vec::new();
                for a in &arrays {
                    buf.clear();
                    buf.reserve(a.data.len() * 8);
                    a.data.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
                    w.write_all(&buf)?;
                }
                Ok(())
            }
        }
    }

    fn to_bytes(&self, format: Format) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(format, &mut out).expect("writing to a Vec cannot fail");
        out
    }
}

/// Parse a `bin` product back into its header and arrays.
pub fn decode_bin(bytes: &[u8]) -> Result<(Value, Vec<NamedArray>), String> {
    if bytes.len() < 16 || &bytes[..8] != BIN_MAGIC {
        return Err("not a product file".into());
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16usize.checked_add(n).filter(|&e| e <= bytes.len()).ok_or("header length exceeds file")?;
    let header: Value = serde_json::from_slice(&bytes[16..header_end]).map_err(|e| e.to_string())?;
    let mut pos = header_end;
    let mut arrays = Vec::new();
    for a in header["arrays"].as_array().ok_or("header lacks arrays")? {
        let name = a["name"].as_str().ok_or("array without name")?.to_string();
        let shape: Vec<usize> = a["shape"]
            .as_array()
            .ok_or("array without shape")?
            .iter()
            .map(|d| d.as_u64().map(|d| d as usize).ok_or("bad shape"))
            .collect::<Result<_, _>>()?;
        let len: usize = shape.iter().product();
        let end = pos + len * 8;
        if end > bytes.len() {
            return Err(format!("payload of {name} truncated"));
        }
        let data = bytes[pos..end].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        pos = end;
        arrays.push(NamedArray { name, shape, data });
    }
    if pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - pos));
    }
    Ok((header, arrays))
}

impl Product for QvpProfile {
    fn kind(&self) -> &'static str {
        "qvp"
    }

    fn metadata(&self) -> Value {
        json!({
            "vcp": self.vcp,
            "sweep": self.sweep,
            "moment": self.moment.code(),
            "units": self.moment.units(),
            "threshold": self.threshold,
            "elevation_deg": num(self.elevation_deg),
            "site_altitude_m": self.site_altitude_m,
            "times": times_json(&self.times),
        })
    }

    fn arrays(&self) -> Vec<NamedArray> {
        let (t, g) = self.values.dim();
        vec![
            NamedArray::new("range_m", vec![g], self.range_m.clone()),
            NamedArray::new("height_m", vec![g], self.height_m.clone()),
            NamedArray::new("values", vec![t, g], self.values.iter().copied().collect()),
            NamedArray::new("valid_fraction", vec![t, g], self.valid_fraction.iter().copied().collect()),
        ]
    }

    fn write_csv(&self, w: &mut dyn Write) -> io::Result<()> {
        let mut w = io::BufWriter::new(w);
        writeln!(w, "time,range_m,height_m,value,valid_fraction")?;
        for (ti, t) in self.times.iter().enumerate() {
            let ts = t.to_rfc3339();
            for g in 0..self.range_m.len() {
                writeln!(
                    w,
                    "{ts},{},{},{},{}",
                    self.range_m[g],
                    self.height_m[g],
                    self.values[[ti, g]],
                    self.valid_fraction[[ti, g]]
                )?;
            }
        }
        w.flush()
    }
}

impl Product for AccumulationGrid {
    fn kind(&self) -> &'static str {
        "qpe"
    }

    fn metadata(&self) -> Value {
        json!({
            "vcp": self.vcp,
            "sweep": self.sweep,
            "zr_a": self.params.a,
            "zr_b": self.params.b,
            "max_gap_s": self.max_gap_s,
            "n_scans": self.times.len(),
            "time_start": self.times.first().map(|t| t.to_rfc3339()),
            "time_end": self.times.last().map(|t| t.to_rfc3339()),
            "units": "mm",
        })
    }

    fn arrays(&self) -> Vec<NamedArray> {
        let (r, g) = self.totals_mm.dim();
        vec![
            NamedArray::new("azimuth_deg", vec![r], self.azimuth_deg.clone()),
            NamedArray::new("range_m", vec![g], self.range_m.clone()),
            NamedArray::new("totals_mm", vec![r, g], self.totals_mm.iter().copied().collect()),
            NamedArray::new("coverage_seconds", vec![r, g], self.coverage_seconds.iter().copied().collect()),
        ]
    }

    fn write_csv(&self, w: &mut dyn Write) -> io::Result<()> {
        let mut w = io::BufWriter::new(w);
        writeln!(w, "azimuth_deg,range_m,total_mm,coverage_seconds")?;
        for (r, az) in self.azimuth_deg.iter().enumerate() {
            for (g, rg) in self.range_m.iter().enumerate() {
                writeln!(w, "{az},{rg},{},{}", self.totals_mm[[r, g]], self.coverage_seconds[[r, g]])?;
            }
        }
        w.flush()
    }
}

impl Product for Timeseries {
    fn kind(&self) -> &'static str {
        "timeseries"
    }

    fn metadata(&self) -> Value {
        json!({
            "vcp": self.vcp,
            "sweep": self.sweep,
            "moment": self.moment.code(),
            "units": self.moment.units(),
            "target": { "latitude_deg": self.target.latitude_deg, "longitude_deg": self.target.longitude_deg },
            "gate": self.gate.map(|g| json!({
                "ray": g.ray,
                "gate": g.gate,
                "slant_range_m": num(g.slant_range_m),
                "bearing_deg": num(g.bearing_deg),
                "beam_height_m": num(g.beam_height_m),
            })),
            "times": times_json(&self.times),
        })
    }

    fn arrays(&self) -> Vec<NamedArray> {
        vec![NamedArray::new("values", vec![self.values.len()], self.values.iter().map(|&v| v as f64).collect())]
    }

    fn write_csv(&self, w: &mut dyn Write) -> io::Result<()> {
        let mut w = io::BufWriter::new(w);
        writeln!(w, "time,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{},{v}", t.to_rfc3339())?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunkstore::AccessTrace;
    use crate::model::MomentKind;
    use ndarray::Array2;

    fn profile() -> QvpProfile {
        QvpProfile {
            vcp: "VCP-212".into(),
            sweep: 0,
            moment: MomentKind::Dbzh,
            threshold: 0.5,
            elevation_deg: 0.5,
            site_altitude_m: 378.0,
            times: vec![Timestamp::from_seconds(0), Timestamp::from_seconds(300)],
            range_m: vec![125.0, 375.0],
            height_m: vec![379.0, 381.0],
            values: Array2::from_shape_vec((2, 2), vec![1.0, f64::NAN, 3.0, 4.5]).unwrap(),
            valid_fraction: Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 1.0, 1.0]).unwrap(),
            moment_trace: AccessTrace::default(),
        }
    }

    #[test]
    fn bin_roundtrip() {
        let p = profile();
        let bytes = p.to_bytes(Format::Bin);
        let (header, arrays) = decode_bin(&bytes).unwrap();
        assert_eq!(header["kind"], "qvp");
        assert_eq!(header["metadata"]["times"][1], "1970-01-01T00:05:00Z");
        assert_eq!(arrays[2].name, "values");
        assert_eq!(arrays[2].shape, vec![2, 2]);
        assert!(arrays[2].data[1].is_nan());
        assert_eq!(arrays[2].data[3], 4.5);
        assert_eq!(p.to_bytes(Format::Bin), bytes);
        assert!(decode_bin(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn json_and_csv() {
        let p = profile();
        let v: Value = serde_json::from_slice(&p.to_bytes(Format::Json)).unwrap();
        assert_eq!(v["arrays"]["values"]["data"][1], Value::Null);
        let csv = String::from_utf8(p.to_bytes(Format::Csv)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "time,range_m,height_m,value,valid_fraction");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "1970-01-01T00:00:00Z,375,381,NaN,0");
    }

    #[test]
    fn format_parse() {
        assert_eq!("bin".parse::<Format>().unwrap(), Format::Bin);
        assert!("xml".parse::<Format>().is_err());
    }
}
