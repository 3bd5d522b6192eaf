//! Dormand–Prince 5(4) with adaptive steps, landing exactly on grid points.

use serde::{Deserialize, Serialize};

use super::ValidateError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { rtol: 1e-9, atol: 1e-12 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Integrates `y' = f(t, y)` from `grid[0]` and returns the state at every
/// grid point.
pub fn dopri5<F>(mut f: F, y0: &[f64], grid: &[f64], tol: Tolerances) -> Result<Vec<Vec<f64>>, ValidateError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), ValidateError>,
{
    let n = y0.len();
    let mut out = vec![y0.to_vec()];
    let mut t = grid[0];
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut h = ((grid[grid.len() - 1] - t) / 100.0).max(1e-6);
    f(t, &y, &mut k[0])?;
    for &target in &grid[1..] {
        while t < target {
            let last = h >= target - t;
            let step = if last { target - t } else { h };
            if step <= 1e-14 * t.abs().max(1.0) {
                return Err(ValidateError::StepCollapse(t));
            }
            for s in 1..7 {
                let (prev, rest) = k.split_at_mut(s);
                for (i, v) in tmp.iter_mut().enumerate() {
                    *v = y[i] + step * prev.iter().zip(A[s]).map(|(kj, a)| a * kj[i]).sum::<f64>();
                }
                f(t + C[s] * step, &tmp, &mut rest[0])?;
            }
            // k[6] is evaluated at the fifth-order solution (FSAL).
            let mut err: f64 = 0.0;
            let mut y5 = vec![0.0; n];
            for i in 0..n {
                y5[i] = y[i] + step * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>();
                let e = step * (0..7).map(|j| (B5[j] - B4[j]) * k[j][i]).sum::<f64>();
                let sc = tol.atol + tol.rtol * y[i].abs().max(y5[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() || y5.iter().any(|v| !v.is_finite()) {
                h = step / 10.0;
                continue;
            }
            if err <= 1.0 {
                t = if last { target } else { t + step };
                y = y5;
                k[0] = k[6].clone();
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = step * if err <= 1.0 { factor } else { factor.min(1.0) };
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.7).collect();
        let ys = dopri5(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            &[1.0, 0.0],
            &grid,
            Tolerances::default(),
        )
        .unwrap();
        for (t, y) in grid.iter().zip(&ys) {
            assert!((y[0] - t.cos()).abs() < 1e-8, "{t}");
        }
    }

    #[test]
    fn blow_up_collapses() {
        let r = dopri5(
            |_, y, dy| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            &[1.0],
            &[0.0, 2.0],
            Tolerances::default(),
        );
        assert!(r.is_err());
    }
}
