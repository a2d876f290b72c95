//! First-return tower over the uniform base map: classical levels, measure
//! lift/projection, Abramov-type entropy relations, and the quantum tower
//! space with its evolution and eigenstate lift.

use ndarray::Array1;

use crate::cylinder::{classical_entropy, CylinderTable, Strings};
use crate::error::{Error, Result};
use crate::linalg::{inner, norm2, C64, LinearOp};
use crate::map::PiecewiseLinearMap;
use crate::site::SiteUnitary;
use crate::tensorial::TensorialUnitary;

/// Base-p digit prefixes of the branch intervals (branch j = cylinder of its
/// first n_j digits).
pub fn branch_prefixes(map: &PiecewiseLinearMap) -> Result<Vec<Vec<u8>>> {
    let base = map.uniform_base().ok_or(Error::NotTp)?;
    let p = base.p;
    let mut out = Vec::with_capacity(map.branch_count());
    for (j, (lo, _)) in map.branches().iter().enumerate() {
        let n = base.exponents[j] as usize;
        let scaled = lo * crate::map::rat_u(p.pow(n as u32));
        if *scaled.denom() != num::BigInt::from(1) {
            return Err(Error::NotTp);
        }
        let mut val: u64 = scaled.numer().to_string().parse().map_err(|_| Error::NotTp)?;
        let mut digits = vec![0u8; n];
        for d in digits.iter_mut().rev() {
            *d = (val % p) as u8;
            val /= p;
        }
        out.push(digits);
    }
    Ok(out)
}

/// Classical tower: level-η points move by the digit shift and drop to the
/// floor exactly on the jump set of their level.
pub struct ClassicalTower {
    pub p: usize,
    pub height: usize,
    /// return_digits[η][d]: the one-digit cylinder ⟦d⟧ at level η drops.
    pub return_digits: Vec<Vec<bool>>,
    pub prefixes: Vec<Vec<u8>>,
}

pub fn build_classical_tower(map: &PiecewiseLinearMap) -> Result<ClassicalTower> {
    let base = map.uniform_base().ok_or(Error::NotTp)?;
    let p = base.p as usize;
    let prefixes = branch_prefixes(map)?;
    let height = prefixes.iter().map(|c| c.len()).max().unwrap();
    let mut return_digits = vec![vec![false; p]; height];
    for (eta, row) in return_digits.iter_mut().enumerate() {
        for c in &prefixes {
            if c.len() == eta + 1 {
                row[c[eta] as usize] = true;
            }
        }
        // A branch still climbing past η must not sit inside the jump set.
        for c in &prefixes {
            if c.len() >= eta + 2 && row[c[eta] as usize] {
                return Err(Error::NotTp);
            }
        }
    }
    Ok(ClassicalTower {
        p,
        height,
        return_digits,
        prefixes,
    })
}

impl ClassicalTower {
    /// One tower step on a symbolic point: (shifted string, next level).
    pub fn step(&self, s: &[u8], eta: usize) -> Result<(Vec<u8>, usize)> {
        if s.is_empty() || eta >= self.height {
            return Err(Error::Precond("tower step out of range".into()));
        }
        let next_level = if self.return_digits[eta][s[0] as usize] {
            0
        } else {
            eta + 1
        };
        Ok((s[1..].to_vec(), next_level))
    }

    /// Iterate from the floor until the floor is hit again.
    pub fn first_return(&self, w: &[u8]) -> Result<(Vec<u8>, usize)> {
        let mut s = w.to_vec();
        let mut eta = 0usize;
        for steps in 1..=self.height {
            let (next, lvl) = self.step(&s, eta)?;
            s = next;
            eta = lvl;
            if eta == 0 {
                return Ok((s, steps));
            }
        }
        Err(Error::Precond("no return within tower height".into()))
    }
}

/// Symbolic identity: the first return of (w, 0) is the shift by n_j where j
/// is the branch of ⟦w⟧, i.e. the original map. Checked on every string of
/// length `len`.
pub fn first_return_matches_map(
    map: &PiecewiseLinearMap,
    tower: &ClassicalTower,
    len: usize,
) -> Result<()> {
    let prefixes = branch_prefixes(map)?;
    for w in Strings::new(tower.p, len) {
        let j = prefixes
            .iter()
            .position(|c| w.starts_with(c))
            .ok_or(Error::NotTp)?;
        let n = prefixes[j].len();
        let (s, steps) = tower.first_return(&w)?;
        if steps != n || s != w[n..] {
            return Err(Error::Precond(format!(
                "first return mismatch on {:?}: {} steps",
                w, steps
            )));
        }
    }
    Ok(())
}

/// Mean return time Γ = Σ_j n_j μ(I_j) of a digit-cylinder measure.
pub fn gamma(map: &PiecewiseLinearMap, oracle: &dyn Fn(&[u8]) -> f64) -> Result<f64> {
    let prefixes = branch_prefixes(map)?;
    Ok(prefixes.iter().map(|c| c.len() as f64 * oracle(c)).sum())
}

/// μ of the part of ⟦s⟧ lying in branches that climb past level η.
fn climb_weight(
    prefixes: &[Vec<u8>],
    p: usize,
    oracle: &dyn Fn(&[u8]) -> f64,
    s: &[u8],
    eta: usize,
) -> f64 {
    for c in prefixes {
        if s.starts_with(c) {
            return if c.len() >= eta + 1 { oracle(s) } else { 0.0 };
        }
    }
    // Branch undetermined: refine by one digit.
    (0..p as u8)
        .map(|d| {
            let mut t = s.to_vec();
            t.push(d);
            climb_weight(prefixes, p, oracle, &t, eta)
        })
        .sum()
}

/// Tower measure tables μ̃(⟦x⟧×{η}) at string length m, one table per level.
pub fn lift_classical_measure(
    map: &PiecewiseLinearMap,
    tower: &ClassicalTower,
    oracle: &dyn Fn(&[u8]) -> f64,
    m: usize,
) -> Result<Vec<CylinderTable>> {
    let prefixes = branch_prefixes(map)?;
    let g = gamma(map, oracle)?;
    let mut levels = Vec::with_capacity(tower.height);
    for eta in 0..tower.height {
        let mut t = CylinderTable::new(tower.p, m);
        for x in Strings::new(tower.p, m) {
            let mut val = 0.0;
            for w in Strings::new(tower.p, eta) {
                let mut s = w.clone();
                s.extend_from_slice(&x);
                val += climb_weight(&prefixes, tower.p, oracle, &s, eta);
            }
            if val != 0.0 {
                t.weights.insert(x, val / g);
            }
        }
        levels.push(t);
    }
    Ok(levels)
}

/// μ̄(⟦x⟧) = Σ_η μ̃(⟦x⟧×{η}).
pub fn project_measure(levels: &[CylinderTable]) -> CylinderTable {
    let mut out = CylinderTable::new(levels[0].base, levels[0].len);
    for t in levels {
        for (s, w) in &t.weights {
            *out.weights.entry(s.clone()).or_insert(0.0) += w;
        }
    }
    out
}

/// Entropy-rate comparison of (T, μ) against Γ·(T̄_p, μ̄).
#[derive(Debug, Clone)]
pub struct AbramovReport {
    pub gamma: f64,
    /// h_n(T,μ)/n over branch strings, n = 1..n_max.
    pub rates_map: Vec<f64>,
    /// h_n(T̄,μ̄)/n over digit strings.
    pub rates_base: Vec<f64>,
    /// |rates_map − Γ·rates_base| per n.
    pub gaps: Vec<f64>,
    /// h_n(μ̃) − h_n(μ̄) per n (must sit in [0, log height]).
    pub sandwich: Vec<f64>,
    pub log_height: f64,
}

pub fn abramov_audit(
    map: &PiecewiseLinearMap,
    oracle: &dyn Fn(&[u8]) -> f64,
    n_max: usize,
) -> Result<AbramovReport> {
    let tower = build_classical_tower(map)?;
    let prefixes = branch_prefixes(map)?;
    let g = gamma(map, oracle)?;
    let l = map.branch_count();
    let mut rates_map = Vec::with_capacity(n_max);
    let mut rates_base = Vec::with_capacity(n_max);
    let mut gaps = Vec::with_capacity(n_max);
    let mut sandwich = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut branch_table = CylinderTable::new(l, n);
        for eps in Strings::new(l, n) {
            let digits: Vec<u8> = eps
                .iter()
                .flat_map(|&e| prefixes[e as usize].iter().copied())
                .collect();
            let w = oracle(&digits);
            if w != 0.0 {
                branch_table.weights.insert(eps, w);
            }
        }
        let h_map = classical_entropy(&branch_table)? / n as f64;

        let levels = lift_classical_measure(map, &tower, oracle, n)?;
        let h_tilde: f64 = levels
            .iter()
            .map(classical_entropy)
            .collect::<Result<Vec<f64>>>()?
            .iter()
            .sum();
        let bar = project_measure(&levels);
        let h_bar = classical_entropy(&bar)?;

        rates_map.push(h_map);
        rates_base.push(h_bar / n as f64);
        gaps.push((h_map - g * h_bar / n as f64).abs());
        sandwich.push(h_tilde - h_bar);
    }
    Ok(AbramovReport {
        gamma: g,
        rates_map,
        rates_base,
        gaps,
        sandwich,
        log_height: (tower.height as f64).ln(),
    })
}

/// Quantum tower vector (φ_0, φ_1); φ_1 is stored in the ambient space and
/// must lie in the level-1 subspace Ū P_{⟦1⟧} H.
#[derive(Debug, Clone)]
pub struct TowerState {
    pub phi0: Array1<C64>,
    pub phi1: Array1<C64>,
}

impl TowerState {
    pub fn norm(&self) -> f64 {
        (norm2(&self.phi0.view()).powi(2) + norm2(&self.phi1.view()).powi(2)).sqrt()
    }

    pub fn inner(&self, other: &TowerState) -> C64 {
        inner(&self.phi0.view(), &other.phi0.view())
            + inner(&self.phi1.view(), &other.phi1.view())
    }

    pub fn sub(&self, other: &TowerState) -> TowerState {
        TowerState {
            phi0: &self.phi0 - &other.phi0,
            phi1: &self.phi1 - &other.phi1,
        }
    }

    pub fn scale(&self, z: C64) -> TowerState {
        TowerState {
            phi0: self.phi0.mapv(|a| a * z),
            phi1: self.phi1.mapv(|a| a * z),
        }
    }
}

/// Ũ_θ on H̃ = H ⊕ ŪP_{⟦1⟧}H: the floor branch ⟦0⟧ returns through Ū, the
/// branch ⟦1⟧ climbs with phase e^{iθ}, and level 1 drops through Ū_1 = σŪ⁽²⁾
/// (σ swaps the two trailing digit positions).
pub struct TowerEvolution {
    pub k: usize,
    pub dim0: usize,
    pub theta: f64,
    u1: TensorialUnitary,
    u2: TensorialUnitary,
}

pub fn tower_evolution(k: usize, theta: f64, sites: &[SiteUnitary]) -> Result<TowerEvolution> {
    if k < 2 {
        return Err(Error::Depth(k, 2));
    }
    if sites.len() < 2 || sites[0].p() != 2 || sites[1].p() != 2 {
        return Err(Error::Precond("two binary site unitaries required".into()));
    }
    Ok(TowerEvolution {
        k,
        dim0: 1usize << k,
        theta,
        u1: TensorialUnitary::uniform(&sites[0], k)?,
        u2: TensorialUnitary::uniform(&sites[1], k)?,
    })
}

impl TowerEvolution {
    fn mask_first(&self, v: &Array1<C64>, digit: usize) -> Array1<C64> {
        let half = self.dim0 / 2;
        Array1::from_shape_fn(self.dim0, |i| {
            if i / half == digit {
                v[i]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    fn swap_last_two(&self, v: &Array1<C64>) -> Array1<C64> {
        Array1::from_shape_fn(self.dim0, |i| {
            let (a, b) = ((i >> 1) & 1, i & 1);
            v[(i & !3usize) | (b << 1) | a]
        })
    }

    /// P′_{⟦j⟧} = Ū P_{⟦j⟧} Ū*.
    pub fn level_projector(&self, digit: usize, v: &Array1<C64>) -> Array1<C64> {
        let w = self.u1.apply_adjoint(&v.view());
        self.u1.apply(&self.mask_first(&w, digit).view())
    }

    pub fn apply(&self, phi: &TowerState) -> TowerState {
        let drop1 = self.swap_last_two(
            &self
                .u2
                .apply(&self.level_projector(1, &phi.phi1).view()),
        );
        let stay = self.u1.apply(&self.mask_first(&phi.phi0, 0).view());
        let climb = self.u1.apply(&self.mask_first(&phi.phi0, 1).view());
        let ph = C64::from_polar(1.0, self.theta);
        TowerState {
            phi0: &drop1 + &stay,
            phi1: climb.mapv(|a| a * ph),
        }
    }

    pub fn apply_adjoint(&self, phi: &TowerState) -> TowerState {
        let from_floor = self
            .u1
            .apply_adjoint(&self.level_projector(0, &phi.phi0).view());
        let ph = C64::from_polar(1.0, -self.theta);
        let from_level1 = self.u1.apply_adjoint(&phi.phi1.view()).mapv(|a| a * ph);
        let up = self.level_projector(
            1,
            &self
                .u2
                .apply_adjoint(&self.swap_last_two(&phi.phi0).view()),
        );
        TowerState {
            phi0: &from_floor + &from_level1,
            phi1: up,
        }
    }

    /// Embedded orthonormal basis: floor states, then ℰ_{(x,1)} = Ū|1x⟩.
    pub fn basis(&self) -> Vec<TowerState> {
        let n = self.dim0;
        let mut out = Vec::with_capacity(n + n / 2);
        for i in 0..n {
            let mut v: Array1<C64> = Array1::zeros(n);
            v[i] = C64::new(1.0, 0.0);
            out.push(TowerState {
                phi0: v,
                phi1: Array1::zeros(n),
            });
        }
        for x in 0..n / 2 {
            let mut v: Array1<C64> = Array1::zeros(n);
            v[n / 2 + x] = C64::new(1.0, 0.0);
            out.push(TowerState {
                phi0: Array1::zeros(n),
                phi1: self.u1.apply(&v.view()),
            });
        }
        out
    }
}

/// Max deviation of the basis Gram matrix from the identity.
pub fn gram_residual(basis: &[TowerState]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.inner(b) - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Ψ = (ψ, ŪP_{⟦1⟧}ψ)/√Γ_ψ with Γ_ψ = 1 + ⟨ψ, P_{⟦1⟧}ψ⟩; fails unless Ψ is
/// an eigenvector of Ũ_θ at the evolution's phase.
pub fn lift_eigenstate(ev: &TowerEvolution, psi: &Array1<C64>) -> Result<TowerState> {
    let p1psi = ev.mask_first(psi, 1);
    let gamma_psi = 1.0 + inner(&psi.view(), &p1psi.view()).re;
    let s = C64::new(1.0 / gamma_psi.sqrt(), 0.0);
    let lifted = TowerState {
        phi0: psi.mapv(|a| a * s),
        phi1: ev.u1.apply(&p1psi.view()).mapv(|a| a * s),
    };
    let resid = ev
        .apply(&lifted)
        .sub(&lifted.scale(C64::from_polar(1.0, ev.theta)))
        .norm();
    if resid >= 1e-10 {
        return Err(Error::Residual(resid));
    }
    Ok(lifted)
}

/// Per-level cylinder weights of a tower state and their projection μ̄.
pub fn tower_measures(
    ev: &TowerEvolution,
    phi: &TowerState,
    m: usize,
) -> (Vec<CylinderTable>, CylinderTable) {
    let n = ev.dim0;
    let cells = 1usize << m;
    let width0 = n / cells;
    let mut level0 = CylinderTable::new(2, m);
    let mut level1 = CylinderTable::new(2, m);
    let coords = ev.u1.apply_adjoint(&phi.phi1.view());
    for (idx, x) in Strings::new(2, m).enumerate() {
        let w0: f64 = (idx * width0..(idx + 1) * width0)
            .map(|i| phi.phi0[i].norm_sqr())
            .sum();
        if w0 != 0.0 {
            level0.weights.insert(x.clone(), w0);
        }
        // Level-1 coordinates sit on ⟦1x⟧ of the ambient space.
        let start = n / 2 + idx * (width0 / 2);
        let w1: f64 = (start..start + width0 / 2)
            .map(|i| coords[i].norm_sqr())
            .sum();
        if w1 != 0.0 {
            level1.weights.insert(x, w1);
        }
    }
    let levels = vec![level0, level1];
    let bar = project_measure(&levels);
    (levels, bar)
}

#[derive(Debug, Clone)]
pub struct TowerBoundReport {
    pub h_top: f64,
    pub bound: f64,
    pub holds: bool,
    /// (1/n)h_n(μ̄) against the subadditive lower line, n = 1..k−1.
    pub rate_checks: Vec<(f64, f64)>,
}

/// h_{k−1}(μ̄) against ((k−1)/2 − 1)·log2, plus the subadditive rate bound
/// (1/n)h_n ≥ (1/(k−1))h_{k−1} − n·log2/(k−1).
pub fn tower_entropy_bound_audit(
    ev: &TowerEvolution,
    phi: &TowerState,
    k: usize,
) -> Result<TowerBoundReport> {
    let top = k - 1;
    let (_, bar) = tower_measures(ev, phi, top);
    let h_top = classical_entropy(&bar)?;
    let bound = ((top as f64) / 2.0 - 1.0) * 2f64.ln();
    let mut rate_checks = Vec::with_capacity(top);
    for n in 1..=top {
        let (_, bn) = tower_measures(ev, phi, n);
        let rate = classical_entropy(&bn)? / n as f64;
        let line = h_top / top as f64 - (n as f64) * 2f64.ln() / top as f64;
        rate_checks.push((rate, line));
    }
    let holds = h_top >= bound - 1e-10
        && rate_checks.iter().all(|(r, l)| *r >= *l - 1e-10);
    Ok(TowerBoundReport {
        h_top,
        bound,
        holds,
        rate_checks,
    })
}
