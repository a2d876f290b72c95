//! Matrix-free tensor-product realization of the quantized map: a basis
//! string is shifted by its branch length while the leading digits pass
//! through single-site unitaries.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::{C64, LinearOp};
use crate::map::{rat_u, PiecewiseLinearMap};
use crate::site::SiteUnitary;

/// Tensorial unitary on (C^p)^{⊗k}; digit 1 is the most significant.
///
/// On a basis string x inside branch j (shift length n_j), the action is
/// |x_{n_j+1} … x_k⟩ ⊗ 𝐔_{n_j}|x_{n_j}⟩ ⊗ … ⊗ 𝐔_1|x_1⟩.
#[derive(Debug, Clone)]
pub struct TensorialUnitary {
    p: usize,
    k: usize,
    dim: usize,
    n_max: usize,
    /// Per leading-value data: shift length n and the p^n scatter amplitudes.
    table: Vec<(usize, Vec<C64>)>,
}

impl TensorialUnitary {
    /// Uniform map: every branch shifts one digit through the same site.
    pub fn uniform(site: &SiteUnitary, k: usize) -> Result<TensorialUnitary> {
        if k == 0 {
            return Err(Error::Depth(0, 1));
        }
        if !site.is_flat() {
            return Err(Error::Precond("site unitary must be flat".into()));
        }
        let p = site.p();
        let table = (0..p)
            .map(|d| (1usize, (0..p).map(|y| site.mat[[y, d]]).collect()))
            .collect();
        Ok(TensorialUnitary {
            p,
            k,
            dim: p.pow(k as u32),
            n_max: 1,
            table,
        })
    }

    /// Non-uniform map with common base p; `sites[s]` acts on digit s+1.
    pub fn nonuniform(
        map: &PiecewiseLinearMap,
        sites: &[SiteUnitary],
        k: usize,
    ) -> Result<TensorialUnitary> {
        let base = map
            .uniform_base()
            .ok_or(Error::NotTp)?
            .clone();
        let p = base.p as usize;
        let n_max = *base.exponents.iter().max().unwrap() as usize;
        if k < n_max {
            return Err(Error::Depth(k, n_max as u32));
        }
        if sites.len() < n_max {
            return Err(Error::Depth(sites.len(), n_max as u32));
        }
        for s in &sites[..n_max] {
            if s.p() != p {
                return Err(Error::Dimension(s.p(), p));
            }
            if !s.is_flat() {
                return Err(Error::Precond("site unitaries must be flat".into()));
            }
        }
        // Branch prefixes: branch j must be the cylinder of its first n_j digits.
        let mut prefixes = Vec::with_capacity(map.branch_count());
        for (j, (lo, _)) in map.branches().iter().enumerate() {
            let n = base.exponents[j] as usize;
            let scaled = lo * rat_u((p as u64).pow(n as u32));
            if *scaled.denom() != num::BigInt::from(1) {
                return Err(Error::NotTp);
            }
            let val: usize = scaled.numer().to_string().parse().map_err(|_| Error::NotTp)?;
            prefixes.push((n, val));
        }
        let lead_cells = p.pow(n_max as u32);
        let mut table = Vec::with_capacity(lead_cells);
        for lead in 0..lead_cells {
            let (n, digits) = {
                let mut found = None;
                for &(n, val) in &prefixes {
                    if lead / p.pow((n_max - n) as u32) == val {
                        found = Some(n);
                        break;
                    }
                }
                let n = found.ok_or(Error::NotTp)?;
                let mut digits = vec![0usize; n];
                let mut rest = lead / p.pow((n_max - n) as u32);
                for s in (0..n).rev() {
                    digits[s] = rest % p;
                    rest /= p;
                }
                (n, digits)
            };
            // amps[m]: y_s = digit s of m (least significant = y_1), coefficient
            // Π_s 𝐔_s(y_s, x_s).
            let combos = p.pow(n as u32);
            let mut amps = vec![C64::new(1.0, 0.0); combos];
            for (m, amp) in amps.iter_mut().enumerate() {
                let mut mm = m;
                for s in 0..n {
                    let y = mm % p;
                    mm /= p;
                    *amp *= sites[s].mat[[y, digits[s]]];
                }
            }
            table.push((n, amps));
        }
        Ok(TensorialUnitary {
            p,
            k,
            dim: p.pow(k as u32),
            n_max,
            table,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Shift length of the branch containing basis index `i`.
    pub fn shift_of(&self, i: usize) -> usize {
        let lead = i / self.p.pow((self.k - self.n_max) as u32);
        self.table[lead].0
    }
}

impl LinearOp for TensorialUnitary {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &ArrayView1<C64>) -> Array1<C64> {
        assert_eq!(v.len(), self.dim);
        let mut out = Array1::zeros(self.dim);
        let lead_div = self.p.pow((self.k - self.n_max) as u32);
        for i in 0..self.dim {
            let a = v[i];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let (n, amps) = &self.table[i / lead_div];
            let pn = self.p.pow(*n as u32);
            let r = i % (self.dim / pn);
            let base = r * pn;
            for (m, amp) in amps.iter().enumerate() {
                out[base + m] += a * amp;
            }
        }
        out
    }

    fn apply_adjoint(&self, v: &ArrayView1<C64>) -> Array1<C64> {
        assert_eq!(v.len(), self.dim);
        let mut out = Array1::zeros(self.dim);
        let lead_div = self.p.pow((self.k - self.n_max) as u32);
        for i in 0..self.dim {
            let (n, amps) = &self.table[i / lead_div];
            let pn = self.p.pow(*n as u32);
            let r = i % (self.dim / pn);
            let base = r * pn;
            let mut acc = C64::new(0.0, 0.0);
            for (m, amp) in amps.iter().enumerate() {
                acc += amp.conj() * v[base + m];
            }
            out[i] = acc;
        }
        out
    }
}
