//! Initial data: sine series plus polynomial per component, or raw samples.

use super::StateGrid;

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentData {
    /// `Σ_r sine[r] sin((r + 1) π x) + Σ_d poly[d] x^d`.
    Series { sine: Vec<f64>, poly: Vec<f64> },
    /// Values on a uniform grid of `[0, 1]`, interpolated linearly.
    Samples(Vec<f64>),
}

impl ComponentData {
    pub fn zero() -> Self {
        Self::Series {
            sine: Vec::new(),
            poly: Vec::new(),
        }
    }

    pub fn sine(amplitudes: &[f64]) -> Self {
        Self::Series {
            sine: amplitudes.to_vec(),
            poly: Vec::new(),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Series { sine, poly } => {
                let s: f64 = sine
                    .iter()
                    .enumerate()
                    .map(|(r, a)| a * ((r + 1) as f64 * std::f64::consts::PI * x).sin())
                    .sum();
                s + poly.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            Self::Samples(v) => crate::numerics::interp_uniform(v, x),
        }
    }

    /// Exact derivative for series data; `None` for samples.
    pub fn slope(&self, x: f64) -> Option<f64> {
        match self {
            Self::Series { sine, poly } => {
                let pi = std::f64::consts::PI;
                let s: f64 = sine
                    .iter()
                    .enumerate()
                    .map(|(r, a)| {
                        let w = (r + 1) as f64 * pi;
                        a * w * (w * x).cos()
                    })
                    .sum();
                let p = poly
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (d, c)| acc * x + d as f64 * c);
                Some(s + p)
            }
            Self::Samples(_) => None,
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::Series { sine, poly } => Self::Series {
                sine: sine.iter().map(|a| a * factor).collect(),
                poly: poly.iter().map(|a| a * factor).collect(),
            },
            Self::Samples(v) => Self::Samples(v.iter().map(|a| a * factor).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub components: Vec<ComponentData>,
}

impl InitialData {
    pub fn new(components: Vec<ComponentData>) -> Self {
        Self { components }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            components: vec![ComponentData::zero(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn value(&self, component: usize, x: f64) -> f64 {
        self.components[component].value(x)
    }

    /// Derivative in `x`: exact for series data, second-order one-sided or
    /// central differences on the grid of `nx` points otherwise.
    pub fn slope(&self, component: usize, x: f64, nx: usize) -> f64 {
        let data = &self.components[component];
        if let Some(s) = data.slope(x) {
            return s;
        }
        let dx = 1.0 / (nx - 1) as f64;
        let f = |y: f64| data.value(y);
        if x - dx < 0.0 {
            (-3.0 * f(x) + 4.0 * f(x + dx) - f(x + 2.0 * dx)) / (2.0 * dx)
        } else if x + dx > 1.0 {
            (3.0 * f(x) - 4.0 * f(x - dx) + f(x - 2.0 * dx)) / (2.0 * dx)
        } else {
            (f(x + dx) - f(x - dx)) / (2.0 * dx)
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scaled(factor)).collect(),
        }
    }

    /// Samples the data on an `nx`-point grid at `t = 0`.
    pub fn sample(&self, nx: usize) -> StateGrid {
        let mut state = StateGrid::zeros(self.n(), nx);
        for c in 0..self.n() {
            for p in 0..nx {
                let x = state.x(p);
                state.values[c * nx + p] = self.value(c, x);
            }
        }
        state
    }

    /// `max(sup |w|, sup |∂_x w|)` over the grid.
    pub fn c1_norm(&self, nx: usize) -> f64 {
        let mut best = 0.0f64;
        for c in 0..self.n() {
            for p in 0..nx {
                let x = p as f64 / (nx - 1) as f64;
                best = best.max(self.value(c, x).abs()).max(self.slope(c, x, nx).abs());
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_value_and_slope() {
        let d = ComponentData::Series {
            sine: vec![1.0, 0.5],
            poly: vec![0.1, 2.0],
        };
        let pi = std::f64::consts::PI;
        let x = 0.3;
        let v = (pi * x).sin() + 0.5 * (2.0 * pi * x).sin() + 0.1 + 2.0 * x;
        assert!((d.value(x) - v).abs() < 1e-15);
        let s = pi * (pi * x).cos() + pi * (2.0 * pi * x).cos() + 2.0;
        assert!((d.slope(x).unwrap() - s).abs() < 1e-13);
    }

    #[test]
    fn sample_slopes_are_second_order_at_ends() {
        let nx = 11;
        let samples: Vec<f64> = (0..nx).map(|p| (p as f64 / 10.0).powi(2)).collect();
        let data = InitialData::new(vec![ComponentData::Samples(samples)]);
        assert!(data.slope(0, 0.0, nx).abs() < 1e-13);
        assert!((data.slope(0, 1.0, nx) - 2.0).abs() < 1e-13);
        assert!((data.slope(0, 0.5, nx) - 1.0).abs() < 1e-13);
    }
}
