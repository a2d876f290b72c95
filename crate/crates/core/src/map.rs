//! Piecewise-linear expanding interval maps with exact rational branch data.

use num::{BigInt, BigRational, One, Signed, Zero};

use crate::error::{Error, Result};

/// Exact rational from an integer pair.
pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Rational value of an unsigned integer.
pub fn rat_u(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// `r` as f64 (exact ratio of big integers, rounded once).
pub fn rat_to_f64(r: &BigRational) -> f64 {
    let num = r.numer();
    let den = r.denom();
    // Split into quotient + remainder so huge numerators stay accurate.
    let (q, rem) = (num / den, num % den);
    let qf: f64 = q.to_string().parse().unwrap_or(f64::NAN);
    let rf: f64 = rem.to_string().parse().unwrap_or(f64::NAN);
    let df: f64 = den.to_string().parse().unwrap_or(f64::NAN);
    qf + rf / df
}

/// Detected common-base structure: every slope is `p^exponent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniformBase {
    pub p: u64,
    pub exponents: Vec<u32>,
}

/// Expanding map of [0,1] with full affine branches `x ↦ Λ_j x + b_j`.
///
/// Branch intervals are right-open except the last; every branch maps its
/// interval onto [0,1].
#[derive(Debug, Clone)]
pub struct PiecewiseLinearMap {
    slopes: Vec<u64>,
    offsets: Vec<BigRational>,
    branches: Vec<(BigRational, BigRational)>,
    uniform_base: Option<UniformBase>,
}

impl PiecewiseLinearMap {
    pub fn slopes(&self) -> &[u64] {
        &self.slopes
    }

    pub fn offsets(&self) -> &[BigRational] {
        &self.offsets
    }

    pub fn branches(&self) -> &[(BigRational, BigRational)] {
        &self.branches
    }

    pub fn branch_count(&self) -> usize {
        self.slopes.len()
    }

    pub fn uniform_base(&self) -> Option<&UniformBase> {
        self.uniform_base.as_ref()
    }

    pub fn max_slope(&self) -> u64 {
        *self.slopes.iter().max().unwrap()
    }

    /// True when every branch has the same slope.
    pub fn is_uniform(&self) -> bool {
        self.slopes.iter().all(|&s| s == self.slopes[0])
    }

    /// Index of the branch containing `x` (right-open convention, last branch
    /// closed).
    pub fn branch_of(&self, x: &BigRational) -> Option<usize> {
        let last = self.branches.len() - 1;
        for (j, (lo, hi)) in self.branches.iter().enumerate() {
            if x >= lo && (x < hi || (j == last && x <= hi)) {
                return Some(j);
            }
        }
        None
    }

    /// Horizon up to which quantum evolution tracks the classical map.
    pub fn ehrenfest_time(&self, n_cells: usize) -> usize {
        ((n_cells as f64).ln() / (self.max_slope() as f64).ln()).floor() as usize
    }
}

/// Build the map with slopes `Λ_j` from the Lebesgue-partition condition
/// Σ 1/Λ_j = 1; offsets are forced by continuity of the branch images onto
/// [0,1].
pub fn build_map(slopes: &[u64]) -> Result<PiecewiseLinearMap> {
    if slopes.is_empty() {
        return Err(Error::SlopeSum("0".into()));
    }
    for &s in slopes {
        if s < 2 {
            return Err(Error::SlopeRange(s));
        }
    }
    let total: BigRational = slopes
        .iter()
        .map(|&s| BigRational::new(BigInt::one(), BigInt::from(s)))
        .sum();
    if !total.is_one() {
        return Err(Error::SlopeSum(total.to_string()));
    }
    let mut offsets = Vec::with_capacity(slopes.len());
    let mut branches = Vec::with_capacity(slopes.len());
    let mut lo = BigRational::zero();
    for &s in slopes {
        let hi = &lo + BigRational::new(BigInt::one(), BigInt::from(s));
        // b_j = -Λ_j · (left endpoint), so Λ_j·lo + b_j = 0 and Λ_j·hi + b_j = 1.
        offsets.push(-rat_u(s) * &lo);
        branches.push((lo.clone(), hi.clone()));
        lo = hi;
    }
    let uniform_base = detect_uniform_base(slopes);
    Ok(PiecewiseLinearMap {
        slopes: slopes.to_vec(),
        offsets,
        branches,
        uniform_base,
    })
}

fn detect_uniform_base(slopes: &[u64]) -> Option<UniformBase> {
    let max = *slopes.iter().max().unwrap();
    // Smallest p works because any common base divides into the smaller ones.
    for p in 2..=max {
        let mut exps = Vec::with_capacity(slopes.len());
        let mut ok = true;
        for &s in slopes {
            match exponent_of(s, p) {
                Some(e) => exps.push(e),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Some(UniformBase { p, exponents: exps });
        }
    }
    None
}

fn exponent_of(value: u64, base: u64) -> Option<u32> {
    let mut v = value;
    let mut e = 0u32;
    while v > 1 {
        if v % base != 0 {
            return None;
        }
        v /= base;
        e += 1;
    }
    if v == 1 {
        Some(e)
    } else {
        None
    }
}

/// Exact image of `x` under `steps` iterations.
pub fn apply_map(map: &PiecewiseLinearMap, x: &BigRational, steps: usize) -> BigRational {
    let mut y = x.clone();
    for _ in 0..steps {
        let j = map
            .branch_of(&y)
            .expect("point left the unit interval");
        y = rat_u(map.slopes[j]) * &y + &map.offsets[j];
    }
    y
}

/// One block of the uniform × block-diagonal factorization.
#[derive(Debug, Clone)]
pub struct Block {
    pub start: BigRational,
    pub end: BigRational,
    /// Internal expansion rate Λ̄ of the block-diagonal factor.
    pub inner_slope: u64,
    /// Number of original branches covered by the block.
    pub branch_count: usize,
}

/// Factorization data for `T = T̄_p ∘ T_BD`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub p: u64,
    pub blocks: Vec<Block>,
}

impl Decomposition {
    /// Affine pieces (lo, hi, slope, offset) of the block-diagonal factor.
    pub fn block_diagonal_pieces(&self) -> Vec<(BigRational, BigRational, u64, BigRational)> {
        let mut pieces = Vec::new();
        for b in &self.blocks {
            if b.inner_slope == 1 {
                // Trivial block: identity on [start, end].
                pieces.push((b.start.clone(), b.end.clone(), 1, BigRational::zero()));
                continue;
            }
            let lam = b.inner_slope * self.p;
            let width = BigRational::new(BigInt::one(), BigInt::from(lam));
            for r in 0..b.branch_count as u64 {
                let lo = &b.start + rat_u(r) * &width;
                let hi = &lo + &width;
                // Sub-branch maps onto [start, start + 1/p] with slope Λ̄.
                let offset = &b.start - rat_u(b.inner_slope) * &lo;
                pieces.push((lo, hi, b.inner_slope, offset));
            }
        }
        pieces
    }
}

/// Factor the map into a uniform slope-`p` map composed with a block-diagonal
/// map, when the slope structure admits the coprime-block form.
pub fn decompose(map: &PiecewiseLinearMap) -> Result<Decomposition> {
    let slopes = map.slopes();
    if map.is_uniform() {
        return Ok(Decomposition {
            p: slopes[0],
            blocks: vec![Block {
                start: BigRational::zero(),
                end: BigRational::one(),
                inner_slope: 1,
                branch_count: slopes.len(),
            }],
        });
    }
    // Group maximal runs of equal consecutive slopes.
    let mut runs: Vec<(u64, usize)> = Vec::new();
    for &s in slopes {
        match runs.last_mut() {
            Some((v, c)) if *v == s => *c += 1,
            _ => runs.push((s, 1)),
        }
    }
    let distinct: Vec<u64> = runs.iter().map(|&(v, _)| v).collect();
    {
        let mut sorted = distinct.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != distinct.len() {
            return Err(Error::NotDecomposable(format!(
                "slope {:?} runs are interleaved; blocks must be contiguous",
                distinct
            )));
        }
    }
    let p = distinct.iter().copied().fold(0u64, gcd);
    let inner: Vec<u64> = distinct.iter().map(|&s| s / p).collect();
    if p < 2 || inner.iter().any(|&l| l < 2) {
        return Err(Error::NotDecomposable(format!(
            "gcd {} gives reduced slopes {:?}; need every reduced slope >= 2",
            p, inner
        )));
    }
    for i in 0..inner.len() {
        for j in i + 1..inner.len() {
            if gcd(inner[i], inner[j]) != 1 {
                return Err(Error::NotDecomposable(format!(
                    "reduced slopes {} and {} share a factor {}",
                    inner[i],
                    inner[j],
                    gcd(inner[i], inner[j])
                )));
            }
        }
    }
    for (k, &(_, count)) in runs.iter().enumerate() {
        if count as u64 != inner[k] {
            return Err(Error::NotDecomposable(format!(
                "slope {} appears {} times; the block form needs exactly {}",
                distinct[k], count, inner[k]
            )));
        }
    }
    if runs.len() as u64 != p {
        return Err(Error::NotDecomposable(format!(
            "{} blocks but uniform factor {}; widths 1/p cannot tile [0,1]",
            runs.len(),
            p
        )));
    }
    // Blocks are width-1/p squares; run k spans [k/p, (k+1)/p].
    let mut blocks = Vec::new();
    let mut cursor = BigRational::zero();
    for (k, &(_, count)) in runs.iter().enumerate() {
        let end = &cursor + BigRational::new(BigInt::one(), BigInt::from(p));
        blocks.push(Block {
            start: cursor.clone(),
            end: end.clone(),
            inner_slope: inner[k],
            branch_count: count,
        });
        cursor = end;
    }
    debug_assert!(cursor.is_one());
    Ok(Decomposition { p, blocks })
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact cylinder interval `[v, v + p^{-m}]` of a base-`p` digit string.
pub fn cylinder_interval(p: u64, digits: &[u8]) -> Result<(BigRational, BigRational)> {
    let mut v = BigRational::zero();
    let mut scale = BigRational::one();
    let pr = rat_u(p);
    for &d in digits {
        if u64::from(d) >= p {
            return Err(Error::DigitRange(d, p));
        }
        scale /= &pr;
        v += rat_u(u64::from(d)) * &scale;
    }
    let hi = &v + &scale;
    debug_assert!(!v.is_negative());
    Ok((v, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_branch_map() {
        let m = build_map(&[2, 2]).unwrap();
        assert_eq!(m.branches()[0], (rat(0, 1), rat(1, 2)));
        assert_eq!(m.branches()[1], (rat(1, 2), rat(1, 1)));
        assert_eq!(m.offsets(), &[rat(0, 1), rat(-1, 1)]);
        let ub = m.uniform_base().unwrap();
        assert_eq!((ub.p, ub.exponents.as_slice()), (2, &[1u32, 1][..]));
    }

    #[test]
    fn three_branch_map() {
        let m = build_map(&[2, 4, 4]).unwrap();
        assert_eq!(
            m.branches(),
            &[
                (rat(0, 1), rat(1, 2)),
                (rat(1, 2), rat(3, 4)),
                (rat(3, 4), rat(1, 1))
            ]
        );
        assert_eq!(m.offsets(), &[rat(0, 1), rat(-2, 1), rat(-3, 1)]);
        let ub = m.uniform_base().unwrap();
        assert_eq!(ub.p, 2);
        assert_eq!(ub.exponents, vec![1, 2, 2]);
    }

    #[test]
    fn bad_slope_sum() {
        assert!(matches!(build_map(&[3, 3, 2]), Err(Error::SlopeSum(_))));
        assert!(matches!(build_map(&[1, 2]), Err(Error::SlopeRange(1))));
    }

    #[test]
    fn iterate_points() {
        let doubling = build_map(&[2, 2]).unwrap();
        assert_eq!(apply_map(&doubling, &rat(1, 3), 1), rat(2, 3));
        let m = build_map(&[2, 4, 4]).unwrap();
        assert_eq!(apply_map(&m, &rat(5, 8), 1), rat(1, 2));
        for n in 0..6 {
            assert_eq!(apply_map(&m, &rat(0, 1), n), rat(0, 1));
        }
        // Right endpoint stays fixed via the last branch.
        assert_eq!(apply_map(&m, &rat(1, 1), 3), rat(1, 1));
    }

    #[test]
    fn decompose_blocks() {
        let m = build_map(&[6, 6, 6, 4, 4]).unwrap();
        let d = decompose(&m).unwrap();
        assert_eq!(d.p, 2);
        assert_eq!(d.blocks.len(), 2);
        assert_eq!(d.blocks[0].inner_slope, 3);
        assert_eq!(d.blocks[0].start, rat(0, 1));
        assert_eq!(d.blocks[0].end, rat(1, 2));
        assert_eq!(d.blocks[1].inner_slope, 2);
        assert_eq!(d.blocks[1].start, rat(1, 2));
        assert_eq!(d.blocks[1].end, rat(1, 1));
    }

    #[test]
    fn decompose_uniform_trivial() {
        let m = build_map(&[2, 2]).unwrap();
        let d = decompose(&m).unwrap();
        assert_eq!(d.p, 2);
        assert_eq!(d.blocks.len(), 1);
        assert_eq!(d.blocks[0].inner_slope, 1);
    }

    #[test]
    fn decompose_rejects_nested_powers() {
        let m = build_map(&[2, 4, 4]).unwrap();
        assert!(matches!(decompose(&m), Err(Error::NotDecomposable(_))));
    }

    #[test]
    fn cylinders() {
        assert_eq!(cylinder_interval(2, &[1]).unwrap(), (rat(1, 2), rat(1, 1)));
        assert_eq!(
            cylinder_interval(2, &[1, 0]).unwrap(),
            (rat(1, 2), rat(3, 4))
        );
        assert_eq!(
            cylinder_interval(3, &[2, 1]).unwrap(),
            (rat(7, 9), rat(8, 9))
        );
        assert!(matches!(
            cylinder_interval(2, &[2]),
            Err(Error::DigitRange(2, 2))
        ));
    }

    #[test]
    fn cylinder_shift_matches_map() {
        // Image of ⟦x⟧ under one step is the cylinder of the shifted digits.
        let m = build_map(&[2, 4, 4]).unwrap();
        let p = m.uniform_base().unwrap().p;
        let exps = m.uniform_base().unwrap().exponents.clone();
        for len in 2..=10usize {
            for idx in 0..(1u32 << len) {
                let digits: Vec<u8> =
                    (0..len).map(|i| ((idx >> (len - 1 - i)) & 1) as u8).collect();
                let (lo, hi) = cylinder_interval(p, &digits).unwrap();
                let j = m.branch_of(&lo).unwrap();
                let n = exps[j] as usize;
                if n > len {
                    continue;
                }
                // Cylinder must sit inside one branch for the shift to apply.
                if &hi > &m.branches()[j].1 {
                    continue;
                }
                let (slo, shi) = cylinder_interval(p, &digits[n..]).unwrap();
                assert_eq!(apply_map(&m, &lo, 1), slo);
                let img_hi = rat_u(m.slopes()[j]) * &hi + &m.offsets()[j];
                assert_eq!(img_hi, shi);
            }
        }
    }
}
