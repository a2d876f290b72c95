//! Cylinder-set weight tables and entropy/pressure functionals.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Finite-string weight table over a fixed alphabet; represents a measure
/// restricted to cylinders of one common length.
#[derive(Debug, Clone)]
pub struct CylinderTable {
    pub base: usize,
    pub len: usize,
    pub weights: BTreeMap<Vec<u8>, f64>,
}

impl CylinderTable {
    pub fn new(base: usize, len: usize) -> Self {
        CylinderTable {
            base,
            len,
            weights: BTreeMap::new(),
        }
    }

    /// Materialize all `base^len` weights from an oracle.
    pub fn from_oracle(oracle: &dyn Fn(&[u8]) -> f64, base: usize, len: usize) -> Self {
        let mut t = CylinderTable::new(base, len);
        for s in Strings::new(base, len) {
            let w = oracle(&s);
            if w != 0.0 {
                t.weights.insert(s, w);
            }
        }
        t
    }

    pub fn get(&self, s: &[u8]) -> f64 {
        self.weights.get(s).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }
}

/// Iterator over all strings of a fixed length, lexicographic order.
pub struct Strings {
    base: usize,
    current: Option<Vec<u8>>,
}

impl Strings {
    pub fn new(base: usize, len: usize) -> Self {
        Strings {
            base,
            current: Some(vec![0; len]),
        }
    }
}

impl Iterator for Strings {
    type Item = Vec<u8>;

    fn next(&mut self) -> Option<Vec<u8>> {
        let out = self.current.clone()?;
        let mut next = out.clone();
        let mut i = next.len();
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            next[i] += 1;
            if (next[i] as usize) < self.base {
                self.current = Some(next);
                break;
            }
            next[i] = 0;
        }
        Some(out)
    }
}

/// `w log w` with the 0·log 0 = 0 convention.
fn xlogx(w: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        w * w.ln()
    }
}

/// Shannon entropy −Σ w log w of the table.
pub fn classical_entropy(table: &CylinderTable) -> Result<f64> {
    let mut h = 0.0;
    for &w in table.weights.values() {
        if w < -1e-12 {
            return Err(Error::NegativeWeight(w));
        }
        h -= xlogx(w);
    }
    Ok(h)
}

/// Pressure −Σ w(ε) log(v_ε² w(ε)) with per-symbol weights v, v_ε = Π v_{ε_i}.
pub fn classical_pressure(table: &CylinderTable, symbol_weights: &[f64]) -> Result<f64> {
    if symbol_weights.len() != table.base {
        return Err(Error::Dimension(symbol_weights.len(), table.base));
    }
    if symbol_weights.iter().any(|&v| v <= 0.0) {
        return Err(Error::Precond("pressure weights must be positive".into()));
    }
    let log_v: Vec<f64> = symbol_weights.iter().map(|v| v.ln()).collect();
    let mut p = 0.0;
    for (s, &w) in &table.weights {
        if w < -1e-12 {
            return Err(Error::NegativeWeight(w));
        }
        if w <= 0.0 {
            continue;
        }
        let lv: f64 = s.iter().map(|&c| log_v[c as usize]).sum();
        p -= w * (2.0 * lv + w.ln());
    }
    Ok(p)
}

/// Per-depth entropy rates h_n/n for n = 1..n_max; the last entry is the
/// working estimate of the entropy rate.
///
/// The oracle is checked for marginal consistency Σ_a w(x·a) = w(x) at every
/// depth below `n_max`.
pub fn ks_entropy_estimate(
    oracle: &dyn Fn(&[u8]) -> f64,
    base: usize,
    n_max: usize,
) -> Result<Vec<f64>> {
    let mut rates = Vec::with_capacity(n_max);
    let mut prev: Option<BTreeMap<Vec<u8>, f64>> = None;
    for n in 1..=n_max {
        let table = CylinderTable::from_oracle(oracle, base, n);
        if let Some(p) = &prev {
            // Marginal consistency against the previous depth.
            let mut sums: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
            for (s, w) in &table.weights {
                *sums.entry(s[..n - 1].to_vec()).or_insert(0.0) += w;
            }
            for s in Strings::new(base, n - 1) {
                let parent = p.get(&s).copied().unwrap_or(0.0);
                let child = sums.get(&s).copied().unwrap_or(0.0);
                if (parent - child).abs() > 1e-9 {
                    return Err(Error::InconsistentMeasure(parent - child, s));
                }
            }
        }
        let h = classical_entropy(&table)?;
        rates.push(h / n as f64);
        prev = Some(table.weights);
    }
    Ok(rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_and_point_mass() {
        let n = 5;
        let uniform = CylinderTable::from_oracle(&|_s| 1.0 / 32.0, 2, n);
        assert_abs_diff_eq!(
            classical_entropy(&uniform).unwrap(),
            n as f64 * 2f64.ln(),
            epsilon = 1e-12
        );
        let mut point = CylinderTable::new(2, 3);
        point.weights.insert(vec![1, 0, 1], 1.0);
        assert_eq!(classical_entropy(&point).unwrap(), 0.0);
    }

    #[test]
    fn three_weight_entropy() {
        let mut t = CylinderTable::new(3, 1);
        t.weights.insert(vec![0], 0.5);
        t.weights.insert(vec![1], 0.25);
        t.weights.insert(vec![2], 0.25);
        assert_abs_diff_eq!(
            classical_entropy(&t).unwrap(),
            1.5 * 2f64.ln(),
            epsilon = 1e-14
        );
        // Unit weights reduce pressure to entropy.
        assert_abs_diff_eq!(
            classical_pressure(&t, &[1.0, 1.0, 1.0]).unwrap(),
            1.5 * 2f64.ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn pressure_entropy_relation() {
        // p_v(μ) = h(μ) − Σ μ(ε) log Π v_{ε_i}².
        let mut t = CylinderTable::new(2, 2);
        t.weights.insert(vec![0, 0], 0.1);
        t.weights.insert(vec![0, 1], 0.2);
        t.weights.insert(vec![1, 0], 0.3);
        t.weights.insert(vec![1, 1], 0.4);
        let v = [0.7, 1.3];
        let p = classical_pressure(&t, &v).unwrap();
        let h = classical_entropy(&t).unwrap();
        let cross: f64 = t
            .weights
            .iter()
            .map(|(s, w)| {
                let lv: f64 = s.iter().map(|&c| (v[c as usize] as f64).ln()).sum();
                w * 2.0 * lv
            })
            .sum();
        assert_abs_diff_eq!(p, h - cross, epsilon = 1e-13);
    }

    #[test]
    fn bernoulli_rate() {
        let rates = ks_entropy_estimate(&|s| 0.5f64.powi(s.len() as i32), 2, 8).unwrap();
        for r in rates {
            assert_abs_diff_eq!(r, 2f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn alternating_rate() {
        // Odd positions deterministic, even positions fair: rate → ½ log 2.
        let oracle = |s: &[u8]| -> f64 {
            let mut w = 1.0;
            for (i, &d) in s.iter().enumerate() {
                if i % 2 == 0 {
                    if d != 1 {
                        return 0.0;
                    }
                } else {
                    w *= 0.5;
                }
            }
            w
        };
        let rates = ks_entropy_estimate(&oracle, 2, 14).unwrap();
        assert_abs_diff_eq!(rates[13], 0.5 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn inconsistent_oracle_rejected() {
        let oracle = |s: &[u8]| -> f64 {
            if s.len() == 1 {
                0.5
            } else {
                0.3f64.powi(s.len() as i32 - 1) * 0.5
            }
        };
        assert!(matches!(
            ks_entropy_estimate(&oracle, 2, 3),
            Err(Error::InconsistentMeasure(..))
        ));
    }

    #[test]
    fn subadditive_on_products() {
        let q = [0.3, 0.7];
        let oracle = |s: &[u8]| -> f64 { s.iter().map(|&d| q[d as usize]).product() };
        let mut h = Vec::new();
        for n in 1..=12 {
            let t = CylinderTable::from_oracle(&oracle, 2, n);
            h.push(classical_entropy(&t).unwrap());
        }
        for n in 1..=11 {
            for m in 1..=(12 - n) {
                assert!(h[n + m - 1] <= h[n - 1] + h[m - 1] + 1e-12);
            }
        }
    }
}
