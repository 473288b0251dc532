use serde::{Deserialize, Serialize};

/// Boundary-vanishing weight `g(t) = -(t - t_start)(t - t_end)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub t_start: f64,
    pub t_end: f64,
}

impl Default for WeightFunction {
    fn default() -> Self {
        Self { t_start: 0.0, t_end: 1.0 }
    }
}

impl WeightFunction {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        Self { t_start, t_end }
    }

    /// Written as `(t - t_start)(t_end - t)` so both endpoints give an exact zero.
    pub fn g(&self, t: f64) -> f64 {
        (t - self.t_start) * (self.t_end - t)
    }

    pub fn dg(&self, t: f64) -> f64 {
        -(2.0 * t - self.t_start - self.t_end)
    }

    pub fn eval(&self, t: f64) -> (f64, f64) {
        (self.g(t), self.dg(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_domain_values() {
        let w = WeightFunction::default();
        assert_eq!(w.eval(0.0), (0.0, 1.0));
        assert_eq!(w.eval(1.0), (0.0, -1.0));
        assert_eq!(w.eval(0.5), (0.25, 0.0));
    }

    #[test]
    fn boundary_zero_on_shifted_domain() {
        let w = WeightFunction::new(-3.25, 7.5);
        assert_eq!(w.g(-3.25), 0.0);
        assert_eq!(w.g(7.5), 0.0);
        assert!(w.g(2.0) > 0.0);
    }
}
