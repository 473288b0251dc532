use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type BasisFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// User-supplied basis with its analytic derivatives.
#[derive(Clone)]
pub struct CustomBasis {
    pub name: String,
    pub dim: usize,
    pub phi: BasisFn,
    pub dphi: BasisFn,
    pub d2phi: BasisFn,
}

impl fmt::Debug for CustomBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomBasis").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

/// Time basis `φ(t)`; the differential parameter is modelled as `αᵀ ∂tφ(t)`.
#[derive(Clone, Debug)]
pub enum TimeBasis {
    /// `φ(t) = [t]`.
    Linear,
    /// `φ(t) = [sin t, cos t, ..., sin(bt/2), cos(bt/2)]` with `b` even.
    Fourier { b: usize },
    Custom(CustomBasis),
}

/// Serializable description of the built-in bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisSpec {
    Linear,
    Fourier { b: usize },
}

impl BasisSpec {
    pub fn build(self) -> Result<TimeBasis> {
        match self {
            BasisSpec::Linear => Ok(TimeBasis::Linear),
            BasisSpec::Fourier { b } => TimeBasis::fourier(b),
        }
    }
}

impl std::str::FromStr for BasisSpec {
    type Err = Error;

    /// Parses `linear` or `fourier:B`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "linear" {
            return Ok(BasisSpec::Linear);
        }
        if let Some(rest) = s.strip_prefix("fourier:") {
            let b: usize = rest
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad Fourier dimension '{rest}'")))?;
            TimeBasis::fourier(b)?;
            return Ok(BasisSpec::Fourier { b });
        }
        Err(Error::InvalidInput(format!("unknown basis '{s}', expected 'linear' or 'fourier:B'")))
    }
}

impl TimeBasis {
    pub fn fourier(b: usize) -> Result<Self> {
        if b == 0 || b % 2 != 0 {
            return Err(Error::InvalidInput(format!("Fourier basis dimension must be even and positive, got {b}")));
        }
        Ok(TimeBasis::Fourier { b })
    }

    pub fn spec(&self) -> Option<BasisSpec> {
        match self {
            TimeBasis::Linear => Some(BasisSpec::Linear),
            TimeBasis::Fourier { b } => Some(BasisSpec::Fourier { b: *b }),
            TimeBasis::Custom(_) => None,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TimeBasis::Linear => 1,
            TimeBasis::Fourier { b } => *b,
            TimeBasis::Custom(c) => c.dim,
        }
    }

    pub fn phi_into(&self, t: f64, out: &mut [f64]) {
        match self {
            TimeBasis::Linear => out[0] = t,
            TimeBasis::Fourier { b } => {
                for m in 0..b / 2 {
                    let w = (m + 1) as f64;
                    out[2 * m] = (w * t).sin();
                    out[2 * m + 1] = (w * t).cos();
                }
            }
            TimeBasis::Custom(c) => (c.phi)(t, out),
        }
    }

    pub fn dphi_into(&self, t: f64, out: &mut [f64]) {
        match self {
            TimeBasis::Linear => out[0] = 1.0,
            TimeBasis::Fourier { b } => {
                for m in 0..b / 2 {
                    let w = (m + 1) as f64;
                    out[2 * m] = w * (w * t).cos();
                    out[2 * m + 1] = -w * (w * t).sin();
                }
            }
            TimeBasis::Custom(c) => (c.dphi)(t, out),
        }
    }

    pub fn d2phi_into(&self, t: f64, out: &mut [f64]) {
        match self {
            TimeBasis::Linear => out[0] = 0.0,
            TimeBasis::Fourier { b } => {
                for m in 0..b / 2 {
                    let w = (m + 1) as f64;
                    out[2 * m] = -w * w * (w * t).sin();
                    out[2 * m + 1] = -w * w * (w * t).cos();
                }
            }
            TimeBasis::Custom(c) => (c.d2phi)(t, out),
        }
    }

    pub fn phi(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.phi_into(t, &mut v);
        v
    }

    pub fn dphi(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.dphi_into(t, &mut v);
        v
    }

    pub fn d2phi(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.d2phi_into(t, &mut v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_basis() {
        let b = TimeBasis::Linear;
        assert_eq!(b.phi(0.3), vec![0.3]);
        assert_eq!(b.dphi(0.3), vec![1.0]);
        assert_eq!(b.d2phi(0.3), vec![0.0]);
    }

    #[test]
    fn fourier_rejects_odd() {
        assert!(TimeBasis::fourier(3).is_err());
        assert!(TimeBasis::fourier(0).is_err());
        assert_eq!(TimeBasis::fourier(4).unwrap().dim(), 4);
    }

    #[test]
    fn parse_spec() {
        assert_eq!("linear".parse::<BasisSpec>().unwrap(), BasisSpec::Linear);
        assert_eq!("fourier:6".parse::<BasisSpec>().unwrap(), BasisSpec::Fourier { b: 6 });
        assert!("fourier:5".parse::<BasisSpec>().is_err());
        assert!("spline".parse::<BasisSpec>().is_err());
    }
}
