use crate::error::{Error, Result};

pub const Z_95: f64 = 1.96;

/// Mean and 95% half-width `1.96 · s / √n`, with `s` the sample standard
/// deviation (n − 1 denominator).
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "a confidence interval needs at least 2 values, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    Ok((mean, Z_95 * sd / nf.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_values() {
        let (m, h) = confidence_interval(&[0.8; 600]).unwrap();
        assert!((m - 0.8).abs() < 1e-12);
        assert!(h.abs() < 1e-12);
    }

    #[test]
    fn two_values() {
        // s = √2/2·|a−b|
        let (m, h) = confidence_interval(&[0.0, 1.0]).unwrap();
        assert_eq!(m, 0.5);
        assert!((h - 1.96 * 0.5f64.sqrt() / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn too_few() {
        assert!(confidence_interval(&[0.3]).is_err());
        assert!(confidence_interval(&[]).is_err());
    }
}
