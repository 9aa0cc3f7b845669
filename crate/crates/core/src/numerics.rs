//! Small numerical kernels shared by the other modules.

/// Absolute tolerance requested from the adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-12;

/// Adaptive (double-exponential) quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    quadrature::integrate(f, a, b, QUAD_TOL).integral
}

/// One classical fourth-order Runge-Kutta step for the autonomous scalar ODE `x' = f(x)`.
#[inline]
pub fn rk4_step<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    let k1 = f(x);
    let k2 = f(x + 0.5 * h * k1);
    let k3 = f(x + 0.5 * h * k2);
    let k4 = f(x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Linear interpolation of uniform samples on `[0, 1]`; clamps outside.
#[inline]
pub fn interp_uniform(values: &[f64], x: f64) -> f64 {
    let last = values.len() - 1;
    let pos = x.clamp(0.0, 1.0) * last as f64;
    let p = (pos.floor() as usize).min(last.saturating_sub(1));
    let frac = pos - p as f64;
    if frac == 0.0 || last == 0 {
        return values[p];
    }
    values[p] * (1.0 - frac) + values[p + 1] * frac
}

/// Composite trapezoid rule on a uniform grid with spacing `dx`.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values {
        [] | [_] => 0.0,
        [first, inner @ .., last] => dx * (0.5 * (first + last) + inner.iter().sum::<f64>()),
    }
}

/// Cumulative trapezoid integral, `out[p] ≈ ∫_0^{x_p} f`.
pub fn cumulative_trapezoid(values: &[f64], dx: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dx * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Inverts a strictly increasing tabulated function `table[p] = F(x_p)` on the
/// uniform grid of `[0, 1]`, by linear interpolation. Values beyond the table
/// are extrapolated with the end slope.
pub fn invert_increasing(table: &[f64], value: f64) -> f64 {
    let last = table.len() - 1;
    let dx = 1.0 / last as f64;
    let p = match table.binary_search_by(|v| v.total_cmp(&value)) {
        Ok(p) => return p as f64 * dx,
        Err(p) => p.clamp(1, last),
    };
    let (lo, hi) = (table[p - 1], table[p]);
    (p - 1) as f64 * dx + dx * (value - lo) / (hi - lo)
}

/// Cubic Hermite basis `(h00, h10, h01, h11)` at `s ∈ [0, 1]`.
#[inline]
pub fn hermite_basis(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    ]
}

/// Derivatives of [`hermite_basis`] with respect to `s`.
#[inline]
pub fn hermite_basis_slope(s: f64) -> [f64; 4] {
    let s2 = s * s;
    [
        6.0 * s2 - 6.0 * s,
        3.0 * s2 - 4.0 * s + 1.0,
        -6.0 * s2 + 6.0 * s,
        3.0 * s2 - 2.0 * s,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_of_reciprocal() {
        let v = integrate(|x| 1.0 / (1.0 + x), 0.0, 1.0);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-13);
    }

    #[test]
    fn rk4_exponential() {
        let mut x = 1.0;
        for _ in 0..100 {
            x = rk4_step(&|y| -y, x, 0.01);
        }
        assert!((x - (-1.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn interpolation_hits_nodes_and_midpoints() {
        let v = [0.0, 1.0, 4.0];
        assert_eq!(interp_uniform(&v, 0.5), 1.0);
        assert_eq!(interp_uniform(&v, 0.75), 2.5);
        assert_eq!(interp_uniform(&v, 1.0), 4.0);
        assert_eq!(interp_uniform(&v, 2.0), 4.0);
        assert_eq!(interp_uniform(&v, -1.0), 0.0);
    }

    #[test]
    fn trapezoid_exact_for_linear() {
        let v: Vec<f64> = (0..11).map(|p| 3.0 * p as f64 / 10.0 + 1.0).collect();
        assert!((trapezoid(&v, 0.1) - 2.5).abs() < 1e-14);
        let cum = cumulative_trapezoid(&v, 0.1);
        assert!((cum[10] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn inversion_round_trip() {
        let table: Vec<f64> = (0..101).map(|p| 2.0 * p as f64 / 100.0).collect();
        assert!((invert_increasing(&table, 1.0) - 0.5).abs() < 1e-15);
        assert!((invert_increasing(&table, 0.333) - 0.1665).abs() < 1e-14);
        assert!((invert_increasing(&table, 2.2) - 1.1).abs() < 1e-14);
    }

    #[test]
    fn hermite_endpoints() {
        assert_eq!(hermite_basis(0.0), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(hermite_basis(1.0), [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(hermite_basis_slope(0.0), [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(hermite_basis_slope(1.0), [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(hermite_basis(0.5)[0], 0.5);
    }
}
