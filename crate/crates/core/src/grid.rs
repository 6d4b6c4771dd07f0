use crate::error::{require_nonnegative, require_positive, Result};

/// Splits `[0, t_final]` into `n` equal steps of length close to `dt`.
/// When `t_final` is not a multiple of `dt` the step is shrunk so the grid
/// still ends exactly at `t_final`.
pub fn time_grid(t_final: f64, dt: f64) -> Result<(usize, f64)> {
    require_positive("dt", dt)?;
    require_nonnegative("t_final", t_final)?;
    if t_final == 0.0 {
        return Ok((0, dt));
    }
    let ratio = t_final / dt;
    let rounded = ratio.round();
    let n = if (rounded - ratio).abs() <= 1e-9 * ratio.max(1.0) {
        rounded as usize
    } else {
        ratio.ceil() as usize
    };
    let n = n.max(1);
    Ok((n, t_final / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_inexact_grids() {
        assert_eq!(time_grid(1.0, 0.25).unwrap(), (4, 0.25));
        let (n, h) = time_grid(20.0, 1e-3).unwrap();
        assert_eq!(n, 20_000);
        assert!((h - 1e-3).abs() < 1e-18);
        let (n, h) = time_grid(1.0, 0.3).unwrap();
        assert_eq!(n, 4);
        assert_eq!(h, 0.25);
        assert!(time_grid(1.0, 0.0).is_err());
        assert_eq!(time_grid(0.0, 0.1).unwrap().0, 0);
    }
}
