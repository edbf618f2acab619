use crate::{Error, Real, Result};

/// Cardinal B-spline of order `n` (0 = top-hat, 1 = triangle,
/// 2 = quadratic) at `xi`, measured in cell widths from the particle center.
///
/// Order 0 is half-open: 1 on [-½, ½), so `b0(-½) = 1` and `b0(½) = 0`.
pub fn bspline(n: usize, xi: Real) -> Result<Real> {
    let a = xi.abs();
    let v = match n {
        0 => {
            if (-0.5..0.5).contains(&xi) {
                1.0
            } else {
                0.0
            }
        }
        1 => (1.0 - a).max(0.0),
        2 => {
            if a < 0.5 {
                0.75 - a * a
            } else if a < 1.5 {
                0.5 * (1.5 - a) * (1.5 - a)
            } else {
                0.0
            }
        }
        _ => return Err(Error::usage(format!("B-spline order {n} not supported (max 2)"))),
    };
    Ok(v)
}
