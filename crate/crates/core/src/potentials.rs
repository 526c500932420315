//! One-dimensional external potentials `V(q)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{lagrange_basis, SampledField1D};

/// Potential given as a table `(q_i, V_i)` with strictly increasing `q_i`,
/// interpolated by 4-point cubics.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential {
    q: Vec<f64>,
    v: Vec<f64>,
}

impl TabulatedPotential {
    pub fn new(q: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if q.len() != v.len() {
            return Err(Error::InvalidInput(format!(
                "potential table columns differ in length ({} vs {})",
                q.len(),
                v.len()
            )));
        }
        if q.len() < 4 {
            return Err(Error::InvalidInput(
                "potential table needs at least 4 rows".into(),
            ));
        }
        if q.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("potential table has non-finite entries".into()));
        }
        if q.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput(
                "potential table positions must be strictly increasing".into(),
            ));
        }
        Ok(TabulatedPotential { q, v })
    }

    pub fn from_field(field: &SampledField1D) -> Result<Self> {
        TabulatedPotential::new(field.grid().nodes(), field.values().to_vec())
    }

    /// Two-column `q,V` CSV; a non-numeric first row is treated as a header.
    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let (mut q, mut v) = (Vec::new(), Vec::new());
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::InvalidInput(format!(
                    "potential CSV row {} has {} columns, expected 2",
                    row + 1,
                    record.len()
                )));
            }
            let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
            match parsed {
                (Ok(a), Ok(b)) => {
                    q.push(a);
                    v.push(b);
                }
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "potential CSV row {} is not numeric",
                        row + 1
                    )))
                }
            }
        }
        TabulatedPotential::new(q, v)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        TabulatedPotential::from_csv_reader(file)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.q[0], self.q[self.q.len() - 1])
    }

    fn evaluate(&self, q: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        let slack = 1e-12 * (hi - lo);
        if !(q >= lo - slack && q <= hi + slack) {
            return Err(Error::OutOfRange {
                what: "q",
                value: q,
                lo,
                hi,
            });
        }
        let n = self.q.len();
        let k = self.q.partition_point(|&x| x <= q).saturating_sub(1).min(n - 2);
        let j0 = k.saturating_sub(1).min(n - 4);
        let nodes: [f64; 4] = std::array::from_fn(|i| self.q[j0 + i]);
        let w = lagrange_basis(&nodes, q);
        Ok((0..4).map(|i| w[i] * self.v[j0 + i]).sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    Free,
    Linear { slope: f64 },
    Harmonic { stiffness: f64 },
    /// `-depth` for `|q| < half_width`, zero outside.
    SquareWell { depth: f64, half_width: f64 },
    Tabulated(TabulatedPotential),
}

impl Potential {
    pub fn linear(slope: f64) -> Result<Self> {
        check_finite("slope", slope)?;
        Ok(Potential::Linear { slope })
    }

    pub fn harmonic(stiffness: f64) -> Result<Self> {
        check_finite("stiffness", stiffness)?;
        Ok(Potential::Harmonic { stiffness })
    }

    pub fn square_well(depth: f64, half_width: f64) -> Result<Self> {
        check_finite("depth", depth)?;
        check_finite("half_width", half_width)?;
        if half_width <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "square well half-width must be positive (got {half_width})"
            )));
        }
        Ok(Potential::SquareWell { depth, half_width })
    }

    pub fn evaluate(&self, q: f64) -> Result<f64> {
        if !q.is_finite() {
            return Err(Error::InvalidInput(format!("position must be finite (got {q})")));
        }
        Ok(match self {
            Potential::Free => 0.0,
            Potential::Linear { slope } => slope * q,
            Potential::Harmonic { stiffness } => 0.5 * stiffness * q * q,
            Potential::SquareWell { depth, half_width } => {
                if q.abs() < *half_width {
                    -depth
                } else {
                    0.0
                }
            }
            Potential::Tabulated(t) => t.evaluate(q)?,
        })
    }

    /// Positions where `V` is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Potential::SquareWell { half_width, .. } => vec![-half_width, *half_width],
            _ => Vec::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::Free => "free",
            Potential::Linear { .. } => "linear",
            Potential::Harmonic { .. } => "harmonic",
            Potential::SquareWell { .. } => "square_well",
            Potential::Tabulated(_) => "tabulated",
        }
    }
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must be finite (got {x})")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn catalog_values() {
        assert_eq!(Potential::Free.evaluate(3.7).unwrap(), 0.0);
        assert_eq!(Potential::linear(2.0).unwrap().evaluate(1.5).unwrap(), 3.0);
        assert_eq!(Potential::harmonic(1.0).unwrap().evaluate(2.0).unwrap(), 2.0);
        let w = Potential::square_well(5.0, 1.0).unwrap();
        assert_eq!(w.evaluate(0.3).unwrap(), -5.0);
        assert_eq!(w.evaluate(1.0).unwrap(), 0.0);
        assert_eq!(w.evaluate(-2.0).unwrap(), 0.0);
        assert_eq!(w.breakpoints(), vec![-1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Potential::linear(f64::NAN).is_err());
        assert!(Potential::square_well(1.0, 0.0).is_err());
        assert!(Potential::Free.evaluate(f64::INFINITY).is_err());
    }

    #[test]
    fn tabulated_interpolates_cubics_and_checks_range() {
        let q: Vec<f64> = (0..11).map(|i| i as f64 * 0.3).collect();
        let v: Vec<f64> = q.iter().map(|x| x * x * x - x).collect();
        let p = Potential::Tabulated(TabulatedPotential::new(q, v).unwrap());
        let x = 1.234;
        assert!((p.evaluate(x).unwrap() - (x * x * x - x)).abs() < 1e-12);
        assert!(matches!(p.evaluate(3.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn csv_with_and_without_header() {
        let body = "0,0\n1,1\n2,4\n3,9\n4,16\n";
        let a = TabulatedPotential::from_csv_reader(body.as_bytes()).unwrap();
        let b = TabulatedPotential::from_csv_reader(format!("q,V\n{body}").as_bytes()).unwrap();
        assert_eq!(a, b);
        assert!((a.evaluate(2.5).unwrap() - 6.25).abs() < 1e-12);
        assert!(TabulatedPotential::from_csv_reader("q,V\n0,1\nx,2\n".as_bytes()).is_err());
        assert!(TabulatedPotential::from_csv_reader("0,1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn tabulated_rejects_unsorted_positions() {
        assert!(TabulatedPotential::new(vec![0.0, 2.0, 1.0, 3.0], vec![0.0; 4]).is_err());
    }

    proptest! {
        #[test]
        fn square_well_is_even(q in -10.0f64..10.0, depth in -5.0f64..5.0, a in 0.1f64..5.0) {
            let w = Potential::square_well(depth, a).unwrap();
            prop_assert_eq!(w.evaluate(q).unwrap(), w.evaluate(-q).unwrap());
        }
    }
}
