//! Single-site unitaries acting on one base-p digit.

use ndarray::Array2;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::C64;

/// p×p unitary applied to one tensor factor; `flat` means all entries share
/// the modulus p^{-1/2}.
#[derive(Debug, Clone)]
pub struct SiteUnitary {
    pub mat: Array2<C64>,
}

impl SiteUnitary {
    pub fn new(mat: Array2<C64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::Dimension(mat.nrows(), mat.ncols()));
        }
        let s = SiteUnitary { mat };
        let r = s.unitarity_residual();
        if r > 1e-12 {
            return Err(Error::Precond(format!(
                "site matrix is not unitary: residual {:.3e}",
                r
            )));
        }
        Ok(s)
    }

    pub fn p(&self) -> usize {
        self.mat.nrows()
    }

    pub fn unitarity_residual(&self) -> f64 {
        let p = self.p();
        let mut worst = 0.0f64;
        for i in 0..p {
            for j in 0..p {
                let g: C64 = (0..p).map(|r| self.mat[[r, i]].conj() * self.mat[[r, j]]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    pub fn is_flat(&self) -> bool {
        let want = 1.0 / (self.p() as f64).sqrt();
        self.mat.iter().all(|z| (z.norm() - want).abs() < 1e-12)
    }

    /// Multiply every entry by a global phase e^{iφ}.
    pub fn phased(&self, phi: f64) -> SiteUnitary {
        let ph = C64::from_polar(1.0, phi);
        SiteUnitary {
            mat: self.mat.mapv(|z| z * ph),
        }
    }
}

/// Discrete Fourier transform site: entries p^{-1/2} e^{2πi lm/p}.
pub fn dft(p: usize) -> Result<SiteUnitary> {
    if p < 2 {
        return Err(Error::Precond(format!("site dimension {} is degenerate", p)));
    }
    let scale = 1.0 / (p as f64).sqrt();
    let mat = Array2::from_shape_fn((p, p), |(l, m)| {
        C64::from_polar(scale, std::f64::consts::TAU * (l * m) as f64 / p as f64)
    });
    Ok(SiteUnitary { mat })
}

#[derive(Deserialize)]
struct SiteSpec {
    p: usize,
    entries: Vec<[f64; 2]>,
}

/// Parse `{"p":2, "entries":[[re,im],…]}` (row-major).
pub fn site_from_json(text: &str) -> Result<SiteUnitary> {
    let spec: SiteSpec =
        serde_json::from_str(text).map_err(|e| Error::Precond(format!("site JSON: {}", e)))?;
    if spec.entries.len() != spec.p * spec.p {
        return Err(Error::Dimension(spec.entries.len(), spec.p * spec.p));
    }
    let mat = Array2::from_shape_fn((spec.p, spec.p), |(i, j)| {
        let e = spec.entries[i * spec.p + j];
        C64::new(e[0], e[1])
    });
    SiteUnitary::new(mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dft2_entries() {
        let u = dft(2).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(u.mat[[0, 0]].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(u.mat[[1, 1]].re, -s, epsilon = 1e-15);
        assert!(u.is_flat());
        assert!(u.unitarity_residual() < 1e-15);
    }

    #[test]
    fn dft3_unitary() {
        let u = dft(3).unwrap();
        assert!(u.unitarity_residual() < 1e-15);
        assert!(u.is_flat());
    }

    #[test]
    fn degenerate_rejected() {
        assert!(dft(1).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let text = format!(
            "{{\"p\":2,\"entries\":[[{s},0],[{s},0],[{s},0],[{ns},0]]}}",
            s = s,
            ns = -s
        );
        let u = site_from_json(&text).unwrap();
        assert!(u.is_flat());
    }

    #[test]
    fn phase_preserves_modulus() {
        let u = dft(2).unwrap().phased(0.7);
        assert!(u.is_flat());
        assert!(u.unitarity_residual() < 1e-14);
    }
}
