//! File formats: datasets as `x1,…,xd,y` CSV, models as JSON, and the `#`
//! header lines that make every artifact reproducible.

use std::fmt::Write as _;

use serde_json::json;

use crate::error::{Error, Result};
use crate::features::{CoefficientVector, FeatureSet};
use crate::sampling::SampleSet;

/// `# key=value` lines, one per entry.
pub fn header_lines(entries: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in entries {
        let _ = writeln!(s, "# {k}={v}");
    }
    s
}

/// The `key=value` pairs of the leading `#` lines of a file.
pub fn read_header(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map_while(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Parse {
            line: p.line() as usize,
            message: e.to_string(),
        },
        None => Error::Csv(e),
    }
}

/// Dataset CSV with header `x1,…,xd,y`, preceded by `header`. Floats use the
/// shortest representation that round-trips.
pub fn write_dataset(x: &SampleSet, header: &[(String, String)]) -> String {
    let mut s = header_lines(header);
    let d = x.dimension();
    let names: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["y".into()]).collect();
    s.push_str(&names.join(","));
    s.push('\n');
    for j in 0..x.len() {
        for i in 0..d {
            let _ = write!(s, "{},", x.points()[(j, i)]);
        }
        let _ = writeln!(s, "{}", x.labels()[j]);
    }
    s
}

pub fn read_dataset(text: &str) -> Result<SampleSet> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let head = r.headers().map_err(csv_error)?.clone();
    let d = head.len().saturating_sub(1);
    let expected = (1..=d).all(|i| head[i - 1] == format!("x{i}")) && head.get(d) == Some("y");
    if d == 0 || !expected {
        return Err(Error::Parse {
            line: 1 + text.lines().take_while(|l| l.starts_with('#')).count(),
            message: "expected header x1,…,xd,y".into(),
        });
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {field:?}"),
            })?;
            if i == d {
                labels.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let m = labels.len();
    let points = faer::Mat::from_fn(m, d, |j, i| values[j * d + i]);
    SampleSet::new(points, labels)
}

/// A fitted model: features, coefficients and free-form metadata.
#[derive(Clone, Debug)]
pub struct Model {
    pub features: FeatureSet,
    pub coefficients: CoefficientVector,
    pub metadata: serde_json::Map<String, serde_json::Value>,
}

impl Model {
    pub fn to_json(&self) -> String {
        let v = json!({
            "features": self.features.to_value(),
            "coefficients": self.coefficients.to_value(),
            "metadata": self.metadata,
        });
        serde_json::to_string_pretty(&v).expect("models always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut v: serde_json::Value = serde_json::from_str(s)?;
        let take = |v: &mut serde_json::Value, k: &str| {
            v.get_mut(k)
                .map(serde_json::Value::take)
                .ok_or_else(|| Error::invalid(format!("model JSON lacks {k:?}")))
        };
        let features = FeatureSet::from_value(take(&mut v, "features")?)?;
        let coefficients = CoefficientVector::from_value(take(&mut v, "coefficients")?, &features.layout())?;
        let metadata = match v.get_mut("metadata").map(serde_json::Value::take) {
            Some(serde_json::Value::Object(m)) => m,
            _ => Default::default(),
        };
        Ok(Model {
            features,
            coefficients,
            metadata,
        })
    }
}
