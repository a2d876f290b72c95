//! Quantum partitions, entropies/pressures of states, the entropic
//! uncertainty audit, and the closed-form entropy bounds.

use ndarray::{Array1, Array2};

use crate::cylinder::{classical_entropy, classical_pressure, CylinderTable, Strings};
use crate::error::{Error, Result};
use crate::linalg::{norm2, operator_norm, random_unit_vector, sigma_max, C64, LinearOp};
use crate::map::PiecewiseLinearMap;
use crate::observable::{interval_mask, preimage_intervals, QuantizedObservable, SmoothPartition};

/// Ordering of the time-evolved factors inside a partition element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// P_ε = P_{ε_{n−1}}(n−1) ⋯ P_{ε_0}(0).
    Forward,
    /// P*_ε = P_{ε_0}(0) ⋯ P_{ε_{n−1}}(n−1).
    Reversed,
}

enum Step {
    Mask(usize),
    Fwd,
    Inv,
}

/// Family {P_ε} over branch strings of length n, resolving the identity.
pub struct QuantumPartition<'a> {
    u: &'a dyn LinearOp,
    pub n: usize,
    pub delta: f64,
    pub flavor: Flavor,
    pub alphabet: usize,
    components: Vec<QuantizedObservable>,
    /// Exact cylinder masks when the sharp partition evolves diagonally.
    diagonal: Option<Vec<Vec<bool>>>,
    /// Residual of Σ ‖P_ε v‖² = 1 over probe vectors.
    pub resolution_residual: f64,
}

impl<'a> QuantumPartition<'a> {
    fn steps(&self, eps: &[u8]) -> Vec<Step> {
        let n = eps.len();
        let mut s = Vec::new();
        match self.flavor {
            Flavor::Forward => {
                s.push(Step::Mask(eps[0] as usize));
                for &e in &eps[1..] {
                    s.push(Step::Fwd);
                    s.push(Step::Mask(e as usize));
                }
                for _ in 1..n {
                    s.push(Step::Inv);
                }
            }
            Flavor::Reversed => {
                for _ in 1..n {
                    s.push(Step::Fwd);
                }
                for (i, &e) in eps.iter().enumerate().rev() {
                    s.push(Step::Mask(e as usize));
                    if i > 0 {
                        s.push(Step::Inv);
                    }
                }
            }
        }
        s
    }

    fn run(&self, steps: &[Step], v: &Array1<C64>, adjoint: bool) -> Array1<C64> {
        let mut w = v.clone();
        let apply_one = |w: &Array1<C64>, s: &Step, adj: bool| -> Array1<C64> {
            match (s, adj) {
                (Step::Mask(i), _) => self.components[*i].apply(&w.view()),
                (Step::Fwd, false) | (Step::Inv, true) => self.u.apply(&w.view()),
                (Step::Inv, false) | (Step::Fwd, true) => self.u.apply_adjoint(&w.view()),
            }
        };
        if adjoint {
            for s in steps.iter().rev() {
                w = apply_one(&w, s, true);
            }
        } else {
            for s in steps {
                w = apply_one(&w, s, false);
            }
        }
        w
    }

    /// P_ε v (full operator, unitary prefactors included).
    pub fn apply_element(&self, eps: &[u8], v: &Array1<C64>) -> Array1<C64> {
        if let Some(masks) = &self.diagonal {
            let idx = string_index(eps, self.alphabet);
            let mask = &masks[idx];
            return Array1::from_iter(
                v.iter()
                    .zip(mask.iter())
                    .map(|(z, &m)| if m { *z } else { C64::new(0.0, 0.0) }),
            );
        }
        self.run(&self.steps(eps), v, false)
    }

    pub fn apply_element_adjoint(&self, eps: &[u8], v: &Array1<C64>) -> Array1<C64> {
        if self.diagonal.is_some() {
            return self.apply_element(eps, v);
        }
        self.run(&self.steps(eps), v, true)
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal.is_some()
    }

    pub fn diagonal_mask(&self, eps: &[u8]) -> Option<&Vec<bool>> {
        self.diagonal
            .as_ref()
            .map(|m| &m[string_index(eps, self.alphabet)])
    }
}

fn string_index(eps: &[u8], base: usize) -> usize {
    eps.iter().fold(0usize, |a, &d| a * base + d as usize)
}

/// Build the depth-n quantum partition refined from the branch partition.
pub fn build_quantum_partition<'a>(
    u: &'a dyn LinearOp,
    map: &PiecewiseLinearMap,
    n: usize,
    delta: f64,
    flavor: Flavor,
) -> Result<QuantumPartition<'a>> {
    if n == 0 {
        return Err(Error::Precond("partition depth must be >= 1".into()));
    }
    let dim = u.dim();
    let smooth = SmoothPartition::new(map.branches(), delta)?;
    let l = map.branch_count();
    let components: Vec<QuantizedObservable> =
        (0..l).map(|i| smooth.diagonal(i, dim)).collect();
    let mut part = QuantumPartition {
        u,
        n,
        delta,
        flavor,
        alphabet: l,
        components,
        diagonal: None,
        resolution_residual: 0.0,
    };
    // Sharp partitions within the exact-Egorov horizon act as cylinder masks.
    if delta == 0.0 && map.uniform_base().is_some() && n <= map.ehrenfest_time(dim) {
        let mut branch_masks: Vec<Vec<Vec<bool>>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut level = Vec::with_capacity(l);
            for b in 0..l {
                let pre = preimage_intervals(map, &[map.branches()[b].clone()], i);
                level.push(interval_mask(&pre, dim)?);
            }
            branch_masks.push(level);
        }
        let mut masks = Vec::new();
        for eps in Strings::new(l, n) {
            let mut m = vec![true; dim];
            for (i, &e) in eps.iter().enumerate() {
                for (c, cell) in m.iter_mut().enumerate() {
                    *cell = *cell && branch_masks[i][e as usize][c];
                }
            }
            masks.push(m);
        }
        // Verify the diagonal action before trusting it.
        let mut worst = 0.0f64;
        for seed in 0..3u64 {
            let v = random_unit_vector(dim, 7000 + seed);
            for eps in Strings::new(l, n) {
                let exact = part.run(&part.steps(&eps), &v, false);
                let mask = &masks[string_index(&eps, l)];
                let masked = Array1::from_iter(
                    v.iter()
                        .zip(mask.iter())
                        .map(|(z, &m)| if m { *z } else { C64::new(0.0, 0.0) }),
                );
                let diff = &exact - &masked;
                worst = worst.max(norm2(&diff.view()));
            }
        }
        if worst < 1e-11 {
            part.diagonal = Some(masks);
        }
    }
    // Resolution of unity over probe vectors.
    let mut resid = 0.0f64;
    for seed in 0..4u64 {
        let v = random_unit_vector(dim, 9000 + seed);
        let total: f64 = Strings::new(l, n)
            .map(|eps| {
                let w = part.apply_element(&eps, &v);
                norm2(&w.view()).powi(2)
            })
            .sum();
        resid = resid.max((total - 1.0).abs());
    }
    part.resolution_residual = resid;
    Ok(part)
}

/// μ̂(⟦ε⟧) = ‖P_ε ψ‖² over all strings of the partition depth.
pub fn state_weights(part: &QuantumPartition, psi: &Array1<C64>) -> CylinderTable {
    let mut t = CylinderTable::new(part.alphabet, part.n);
    for eps in Strings::new(part.alphabet, part.n) {
        let w = part.apply_element(&eps, psi);
        let val = norm2(&w.view()).powi(2);
        if val != 0.0 {
            t.weights.insert(eps, val);
        }
    }
    t
}

/// Weights ‖P*_ε ψ‖² built from the adjoint elements of the partition.
pub fn state_weights_star(part: &QuantumPartition, psi: &Array1<C64>) -> CylinderTable {
    let mut t = CylinderTable::new(part.alphabet, part.n);
    for eps in Strings::new(part.alphabet, part.n) {
        let w = part.apply_element_adjoint(&eps, psi);
        let val = norm2(&w.view()).powi(2);
        if val != 0.0 {
            t.weights.insert(eps, val);
        }
    }
    t
}

/// Per-branch pressure weights Λ_j^{-1/2}.
pub fn slope_weights(map: &PiecewiseLinearMap) -> Vec<f64> {
    map.slopes().iter().map(|&s| 1.0 / (s as f64).sqrt()).collect()
}

pub fn quantum_entropy(table: &CylinderTable) -> Result<f64> {
    classical_entropy(table)
}

pub fn quantum_pressure(table: &CylinderTable, symbol_weights: &[f64]) -> Result<f64> {
    classical_pressure(table, symbol_weights)
}

/// Entropic-uncertainty audit report.
#[derive(Debug, Clone)]
pub struct EupReport {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pair_eps: Vec<u8>,
    pub pair_eps_prime: Vec<u8>,
    pub pair_norm: f64,
}

/// lhs = p̂_{π̂,v}(ψ) + p̂_{τ̂,w}(𝒰ψ); rhs = −2 log sup v_ε w_ε' ‖π̂_ε 𝒰 τ̂*_ε'‖.
pub fn eup_audit(
    pa: &QuantumPartition,
    pb: &QuantumPartition,
    va: &[f64],
    wb: &[f64],
    iso: &dyn LinearOp,
    psi: &Array1<C64>,
) -> Result<EupReport> {
    let mu_a = state_weights(pa, psi);
    let mut upsi = iso.apply(&psi.view());
    let nrm = norm2(&upsi.view());
    upsi.mapv_inplace(|z| z / nrm);
    let mu_b = state_weights_star(pb, &upsi);
    let lhs = classical_pressure(&mu_a, va)? + classical_pressure(&mu_b, wb)?;

    let iso_dense: Option<Array2<C64>> = if pa.is_diagonal() && pb.is_diagonal() {
        Some(iso.to_dense()?)
    } else {
        None
    };
    let mut best = 0.0f64;
    let mut best_pair = (vec![0u8; pa.n], vec![0u8; pb.n]);
    for ea in Strings::new(pa.alphabet, pa.n) {
        let va_e: f64 = ea.iter().map(|&c| va[c as usize]).product();
        for eb in Strings::new(pb.alphabet, pb.n) {
            let wb_e: f64 = eb.iter().map(|&c| wb[c as usize]).product();
            let nrm = pair_norm(pa, &ea, pb, &eb, iso, iso_dense.as_ref())?;
            let val = va_e * wb_e * nrm;
            if val > best {
                best = val;
                best_pair = (ea.clone(), eb.clone());
            }
        }
    }
    let rhs = -2.0 * best.ln();
    Ok(EupReport {
        lhs,
        rhs,
        margin: lhs - rhs,
        pair_eps: best_pair.0,
        pair_eps_prime: best_pair.1,
        pair_norm: best,
    })
}

fn pair_norm(
    pa: &QuantumPartition,
    ea: &[u8],
    pb: &QuantumPartition,
    eb: &[u8],
    iso: &dyn LinearOp,
    iso_dense: Option<&Array2<C64>>,
) -> Result<f64> {
    if let (Some(ma), Some(mb), Some(dense)) =
        (pa.diagonal_mask(ea), pb.diagonal_mask(eb), iso_dense)
    {
        // ‖diag(χ_a)·𝒰·diag(χ_b)‖ = largest singular value of the submatrix.
        let rows: Vec<usize> = ma
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        let cols: Vec<usize> = mb
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        if rows.is_empty() || cols.is_empty() {
            return Ok(0.0);
        }
        let sub = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
            dense[[rows[i], cols[j]]]
        });
        return sigma_max(&sub);
    }
    let dim = iso.dim();
    let apply = |v: &ndarray::ArrayView1<C64>| -> Array1<C64> {
        let w = pb.apply_element_adjoint(eb, &v.to_owned());
        let w = iso.apply(&w.view());
        pa.apply_element(ea, &w)
    };
    let adjoint = |v: &ndarray::ArrayView1<C64>| -> Array1<C64> {
        let w = pa.apply_element_adjoint(ea, &v.to_owned());
        let w = iso.apply_adjoint(&w.view());
        pb.apply_element(eb, &w)
    };
    operator_norm(dim, apply, adjoint)
}

/// Measured ‖U P_{ε_0} ⋯ U P_{ε_{n−1}}‖ against the e^{ncδ}√N ΠΛ^{-1/2}
/// ceiling (c = 2√Λ_max).
pub fn norm_bound_check(
    u: &dyn LinearOp,
    map: &PiecewiseLinearMap,
    eps: &[u8],
    delta: f64,
) -> Result<(f64, f64)> {
    let dim = u.dim();
    let n = eps.len();
    let smooth = SmoothPartition::new(map.branches(), delta)?;
    let comps: Vec<QuantizedObservable> = (0..map.branch_count())
        .map(|i| smooth.diagonal(i, dim))
        .collect();
    let apply = |v: &ndarray::ArrayView1<C64>| -> Array1<C64> {
        let mut w = v.to_owned();
        for &e in eps.iter().rev() {
            w = comps[e as usize].apply(&w.view());
            w = u.apply(&w.view());
        }
        w
    };
    let adjoint = |v: &ndarray::ArrayView1<C64>| -> Array1<C64> {
        let mut w = v.to_owned();
        for &e in eps.iter() {
            w = u.apply_adjoint(&w.view());
            w = comps[e as usize].apply(&w.view());
        }
        w
    };
    let measured = operator_norm(dim, apply, adjoint)?;
    let c = 2.0 * (map.max_slope() as f64).sqrt();
    let prod: f64 = eps
        .iter()
        .map(|&e| 1.0 / (map.slopes()[e as usize] as f64).sqrt())
        .product();
    let bound = (n as f64 * c * delta).exp() * (dim as f64).sqrt() * prod;
    Ok((measured, bound))
}

/// |μ̂(⟦ε⟧) − Σ_{|ε'|=n} μ̂(⟦ε'ε⟧)|: defect of pull-back invariance.
pub fn invariance_defect(
    u: &dyn LinearOp,
    map: &PiecewiseLinearMap,
    psi: &Array1<C64>,
    eps: &[u8],
    n: usize,
    delta: f64,
    flavor: Flavor,
) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let m = eps.len();
    let short = build_quantum_partition(u, map, m, delta, flavor)?;
    let long = build_quantum_partition(u, map, m + n, delta, flavor)?;
    let base = norm2(&short.apply_element(eps, psi).view()).powi(2);
    let mut pulled = 0.0;
    for prefix in Strings::new(map.branch_count(), n) {
        let mut full = prefix.clone();
        full.extend_from_slice(eps);
        pulled += norm2(&long.apply_element(&full, psi).view()).powi(2);
    }
    Ok((base - pulled).abs())
}

/// Σ μ(I_j) log Λ_j − ½ log Λ_max.
pub fn bound_thm2(branch_weights: &[f64], map: &PiecewiseLinearMap) -> Result<f64> {
    if branch_weights.len() != map.branch_count() {
        return Err(Error::Dimension(branch_weights.len(), map.branch_count()));
    }
    let s: f64 = branch_weights
        .iter()
        .zip(map.slopes())
        .map(|(&w, &l)| w * (l as f64).ln())
        .sum();
    Ok(s - 0.5 * (map.max_slope() as f64).ln())
}

/// ½ Σ μ(I_j) log Λ_j (common-base maps).
pub fn bound_thm3(branch_weights: &[f64], map: &PiecewiseLinearMap) -> Result<f64> {
    if branch_weights.len() != map.branch_count() {
        return Err(Error::Dimension(branch_weights.len(), map.branch_count()));
    }
    if map.uniform_base().is_none() {
        return Err(Error::NotTp);
    }
    let s: f64 = branch_weights
        .iter()
        .zip(map.slopes())
        .map(|(&w, &l)| w * (l as f64).ln())
        .sum();
    Ok(0.5 * s)
}
