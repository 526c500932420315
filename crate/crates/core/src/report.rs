//! Residual reports and plain-text export helpers.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::numerics::max_rms;

/// Summary of a pointwise residual: `{name, max, rms, nodes, params}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub name: String,
    pub max: f64,
    pub rms: f64,
    pub nodes: usize,
    pub params: BTreeMap<String, f64>,
}

impl Residual {
    pub fn from_values(name: impl Into<String>, values: impl IntoIterator<Item = f64>) -> Self {
        let (max, rms, nodes) = max_rms(values);
        Residual {
            name: name.into(),
            max,
            rms,
            nodes,
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn within(&self, tolerance: f64) -> bool {
        self.max.is_finite() && self.max <= tolerance
    }
}

/// Decimal with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV table with 17-significant-digit cells.
pub fn write_csv<W: Write>(mut out: W, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> std::io::Result<()> {
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt17).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 0.0, 1e-300] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn residual_summary() {
        let r = Residual::from_values("x", [3.0, -4.0]).with_param("E", 0.5);
        assert_eq!(r.max, 4.0);
        assert!((r.rms - (12.5f64).sqrt()).abs() < 1e-15);
        assert!(r.within(4.0) && !r.within(3.9));
        let json = format!("{:?}", r.params);
        assert!(json.contains("\"E\""));
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &["a", "b"], vec![vec![1.0, 2.0]].into_iter()).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "a,b\n1.0000000000000000e0,2.0000000000000000e0\n");
    }
}
