//! Dense unitary quantizations of transfer matrices: the uniform DFT-block
//! construction and the composed block-diagonal × uniform construction.

use ndarray::Array2;
use num::Zero;

use crate::error::{Error, Result};
use crate::linalg::{C64, DenseOp, LinearOp};
use crate::map::{decompose, rat_u, PiecewiseLinearMap};
use crate::site::{dft, SiteUnitary};
use crate::transfer::TransferMatrix;

/// Block-DFT unitary for a uniform slope-p map on an n-cell grid (p | n):
/// column c + m·(n/p) meets rows p·c + l with entry 𝐔(l,m).
pub fn uniform_block_unitary(site: &SiteUnitary, n: usize) -> Result<Array2<C64>> {
    let p = site.p();
    if n % p != 0 {
        return Err(Error::Size(n, p as u64));
    }
    let stride = n / p;
    let mut u = Array2::zeros((n, n));
    for c in 0..stride {
        for l in 0..p {
            for m in 0..p {
                u[[p * c + l, c + m * stride]] = site.mat[[l, m]];
            }
        }
    }
    Ok(u)
}

/// Quantize a uniform-slope map on N = p^k cells.
pub fn quantize_uniform(map: &PiecewiseLinearMap, n: usize) -> Result<DenseOp> {
    if !map.is_uniform() {
        return Err(Error::Precond("map is not uniform".into()));
    }
    let p = map.slopes()[0] as usize;
    let mut m = n;
    while m > 1 && m % p == 0 {
        m /= p;
    }
    if m != 1 {
        return Err(Error::Size(n, p as u64));
    }
    Ok(DenseOp::new(uniform_block_unitary(&dft(p)?, n)?))
}

/// Quantize a decomposable map as Ū·U^BD on an aligned grid (N = (p·ΠΛ̄)^k
/// always works).
pub fn quantize_general(map: &PiecewiseLinearMap, n: usize) -> Result<DenseOp> {
    let dec = decompose(map)?;
    let p = dec.p as usize;
    if n % p != 0 {
        return Err(Error::Size(n, dec.p));
    }
    let width = n / p;
    let mut u_bd: Array2<C64> = Array2::zeros((n, n));
    for block in &dec.blocks {
        let start_r = &block.start * rat_u(n as u64);
        if *start_r.denom() != num::BigInt::from(1) {
            return Err(Error::PartitionAlignment(block.start.to_string(), n));
        }
        let start: usize = start_r
            .numer()
            .to_string()
            .parse()
            .map_err(|_| Error::PartitionAlignment(block.start.to_string(), n))?;
        if block.inner_slope == 1 {
            for i in 0..n {
                u_bd[[i, i]] = C64::new(1.0, 0.0);
            }
            break;
        }
        let local = uniform_block_unitary(&dft(block.inner_slope as usize)?, width)?;
        for i in 0..width {
            for j in 0..width {
                if !local[[i, j]].is_zero() {
                    u_bd[[start + i, start + j]] = local[[i, j]];
                }
            }
        }
    }
    let u_bar = uniform_block_unitary(&dft(p)?, n)?;
    Ok(DenseOp::new(u_bar.dot(&u_bd)))
}

/// Agreement report between a unitary and a transfer matrix.
#[derive(Debug, Clone)]
pub struct QuantizationReport {
    /// max over entries of | |U(i,j)|² − B(j,i) |.
    pub max_modulus_residual: f64,
    /// max entry of |U*U − I|.
    pub max_unitarity_residual: f64,
    /// Nonzero pattern of U equals the transposed pattern of B.
    pub support_match: bool,
}

impl QuantizationReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_modulus_residual < tol && self.max_unitarity_residual < 1e-12 && self.support_match
    }
}

/// Check |U(i,j)|² = B(j,i) column-by-column (matrix-free friendly).
pub fn verify_quantization(u: &dyn LinearOp, b: &TransferMatrix) -> Result<QuantizationReport> {
    let n = u.dim();
    if n != b.size() {
        return Err(Error::Dimension(n, b.size()));
    }
    let mut e = ndarray::Array1::zeros(n);
    let mut max_mod = 0.0f64;
    let mut support_match = true;
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        let col = u.apply(&e.view());
        e[j] = C64::new(0.0, 0.0);
        let mut expect = vec![0.0f64; n];
        let mut exact_zero = vec![true; n];
        for (i, v) in &b.rows()[j] {
            expect[*i] = crate::map::rat_to_f64(v);
            exact_zero[*i] = false;
        }
        for i in 0..n {
            max_mod = max_mod.max((col[i].norm_sqr() - expect[i]).abs());
            let u_nonzero = col[i].norm_sqr() > 1e-12;
            if u_nonzero == exact_zero[i] {
                support_match = false;
            }
        }
    }
    let max_unit = crate::linalg::unitarity_residual(u)?;
    Ok(QuantizationReport {
        max_modulus_residual: max_mod,
        max_unitarity_residual: max_unit,
        support_match,
    })
}
