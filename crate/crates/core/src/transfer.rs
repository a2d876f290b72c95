//! Frobenius–Perron transfer matrices on uniform grids, kept in exact
//! rational arithmetic with sparse rows.

use ndarray::Array2;
use num::{BigInt, BigRational, One, ToPrimitive, Zero};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::map::{rat_to_f64, rat_u, Decomposition, PiecewiseLinearMap};

/// Row-sparse rational matrix of cell-to-cell transition weights.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    size: usize,
    rows: Vec<Vec<(usize, BigRational)>>,
}

impl TransferMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn rows(&self) -> &[Vec<(usize, BigRational)>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> BigRational {
        self.rows[i]
            .iter()
            .find(|&&(c, _)| c == j)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(BigRational::zero)
    }

    /// Exact check that every row and column sums to one.
    pub fn is_doubly_stochastic(&self) -> bool {
        let mut col_sums = vec![BigRational::zero(); self.size];
        for row in &self.rows {
            let mut s = BigRational::zero();
            for (c, v) in row {
                s += v;
                col_sums[*c] += v;
            }
            if !s.is_one() {
                return false;
            }
        }
        col_sums.iter().all(|s| s.is_one())
    }

    /// Exact sparse product `self · other`.
    pub fn matmul(&self, other: &TransferMatrix) -> TransferMatrix {
        assert_eq!(self.size, other.size);
        let mut rows = Vec::with_capacity(self.size);
        for row in &self.rows {
            let mut acc: BTreeMap<usize, BigRational> = BTreeMap::new();
            for (m, a) in row {
                for (j, b) in &other.rows[*m] {
                    *acc.entry(*j).or_insert_with(BigRational::zero) += a * b;
                }
            }
            rows.push(
                acc.into_iter()
                    .filter(|(_, v)| !v.is_zero())
                    .collect::<Vec<_>>(),
            );
        }
        TransferMatrix {
            size: self.size,
            rows,
        }
    }

    pub fn eq_exact(&self, other: &TransferMatrix) -> bool {
        self.size == other.size && self.rows == other.rows
    }

    pub fn to_dense_f64(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.size, self.size));
        for (i, row) in self.rows.iter().enumerate() {
            for (j, v) in row {
                a[[i, *j]] = rat_to_f64(v);
            }
        }
        a
    }
}

/// Transfer matrix of the map on the `n`-cell uniform grid.
pub fn transfer_matrix(map: &PiecewiseLinearMap, n: usize) -> Result<TransferMatrix> {
    let pieces: Vec<_> = map
        .branches()
        .iter()
        .zip(map.slopes().iter().zip(map.offsets().iter()))
        .map(|((lo, hi), (&s, off))| (lo.clone(), hi.clone(), s, off.clone()))
        .collect();
    transfer_from_pieces(&pieces, n)
}

/// Transfer matrix of the block-diagonal factor of a decomposition.
pub fn block_diagonal_transfer(dec: &Decomposition, n: usize) -> Result<TransferMatrix> {
    transfer_from_pieces(&dec.block_diagonal_pieces(), n)
}

/// Transfer matrix of a piecewise-affine map given as
/// `(lo, hi, integer slope, offset)` pieces covering [0,1].
pub fn transfer_from_pieces(
    pieces: &[(BigRational, BigRational, u64, BigRational)],
    n: usize,
) -> Result<TransferMatrix> {
    let nr = rat_u(n as u64);
    let mut rows = vec![Vec::new(); n];
    let mut covered = 0usize;
    for (lo, hi, slope, offset) in pieces {
        let lo_idx = grid_index(lo, &nr, n)?;
        let hi_idx = grid_index(hi, &nr, n)?;
        // Image of cell i is [slope·i + offset·n, +slope) in grid units.
        let off_n = offset * &nr;
        if !off_n.denom().is_one() {
            return Err(Error::PartitionAlignment(offset.to_string(), n));
        }
        let off_i = off_n
            .numer()
            .to_isize()
            .ok_or_else(|| Error::PartitionAlignment(offset.to_string(), n))?;
        let s = *slope as usize;
        let weight = BigRational::new(BigInt::one(), BigInt::from(*slope));
        for i in lo_idx..hi_idx {
            let start = i as isize * s as isize + off_i;
            if start < 0 || start as usize + s > n {
                return Err(Error::Alignment(format!("cell {}", i), n));
            }
            for m in 0..s {
                rows[i].push((start as usize + m, weight.clone()));
            }
        }
        covered += hi_idx - lo_idx;
    }
    if covered != n {
        return Err(Error::PartitionAlignment("piece cover".into(), n));
    }
    for row in &mut rows {
        row.sort_by_key(|&(c, _)| c);
    }
    Ok(TransferMatrix { size: n, rows })
}

fn grid_index(x: &BigRational, nr: &BigRational, n: usize) -> Result<usize> {
    let scaled = x * nr;
    if !scaled.denom().is_one() {
        return Err(Error::PartitionAlignment(x.to_string(), n));
    }
    scaled
        .numer()
        .to_usize()
        .ok_or_else(|| Error::PartitionAlignment(x.to_string(), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{build_map, decompose, rat};

    #[test]
    fn doubling_small_grids() {
        let m = build_map(&[2, 2]).unwrap();
        let b2 = transfer_matrix(&m, 2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(b2.get(i, j), rat(1, 2));
            }
        }
        let b4 = transfer_matrix(&m, 4).unwrap();
        let expect = [
            [1, 1, 0, 0],
            [0, 0, 1, 1],
            [1, 1, 0, 0],
            [0, 0, 1, 1],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(b4.get(i, j), rat(expect[i][j], 2));
            }
        }
        assert!(b4.is_doubly_stochastic());
    }

    #[test]
    fn mixed_slope_grid() {
        let m = build_map(&[2, 4, 4]).unwrap();
        let b = transfer_matrix(&m, 4).unwrap();
        let expect = [
            [rat(1, 2), rat(1, 2), rat(0, 1), rat(0, 1)],
            [rat(0, 1), rat(0, 1), rat(1, 2), rat(1, 2)],
            [rat(1, 4), rat(1, 4), rat(1, 4), rat(1, 4)],
            [rat(1, 4), rat(1, 4), rat(1, 4), rat(1, 4)],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(b.get(i, j), expect[i][j]);
            }
        }
        assert!(b.is_doubly_stochastic());
    }

    #[test]
    fn misaligned_grid_rejected() {
        let m = build_map(&[2, 4, 4]).unwrap();
        assert!(matches!(
            transfer_matrix(&m, 6),
            Err(Error::PartitionAlignment(..))
        ));
    }

    #[test]
    fn doubly_stochastic_various() {
        for slopes in [vec![2u64, 2], vec![2, 4, 4], vec![3, 3, 3], vec![6, 6, 6, 4, 4]] {
            let m = build_map(&slopes).unwrap();
            fn gcd(a: u64, b: u64) -> u64 {
                if b == 0 { a } else { gcd(b, a % b) }
            }
            let lcm = slopes.iter().fold(1u64, |a, &b| a * b / gcd(a, b));
            for mult in [1usize, 2, 4] {
                let n = lcm as usize * mult;
                if n > 4096 {
                    continue;
                }
                let b = transfer_matrix(&m, n).unwrap();
                assert!(b.is_doubly_stochastic(), "slopes {:?} n {}", slopes, n);
                for row in b.rows() {
                    for (_, v) in row {
                        // Entries are exactly 0 or a reciprocal slope.
                        assert!(slopes.iter().any(|&s| v == &rat(1, s as i64)));
                    }
                }
            }
        }
    }

    #[test]
    fn factorization_identity() {
        let m = build_map(&[6, 6, 6, 4, 4]).unwrap();
        let dec = decompose(&m).unwrap();
        let bar = build_map(&vec![dec.p; dec.p as usize]).unwrap();
        for n in [12usize, 144] {
            let b = transfer_matrix(&m, n).unwrap();
            let b_bd = block_diagonal_transfer(&dec, n).unwrap();
            let b_bar = transfer_matrix(&bar, n).unwrap();
            assert!(b_bd.matmul(&b_bar).eq_exact(&b), "n = {}", n);
        }
    }

    #[test]
    fn trivial_factorization_identity() {
        let m = build_map(&[2, 2]).unwrap();
        let dec = decompose(&m).unwrap();
        let b = transfer_matrix(&m, 4).unwrap();
        let b_bd = block_diagonal_transfer(&dec, 4).unwrap();
        // Identity factor: B = B^BD · B̄ trivially.
        assert!(b_bd.matmul(&b).eq_exact(&b));
    }
}
