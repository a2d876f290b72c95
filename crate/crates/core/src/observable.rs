//! Diagonal quantization of classical observables and the Egorov-type
//! defect measurements.

use ndarray::{Array1, ArrayView1};
use num::{BigRational, One};

use crate::error::{Error, Result};
use crate::linalg::{operator_norm, C64, LinearOp};
use crate::map::{rat_to_f64, rat_u, PiecewiseLinearMap};

/// 16-point Gauss–Legendre nodes/weights on [-1, 1].
const GL16_X: [f64; 16] = [
    -0.9894009349916499,
    -0.9445750230732326,
    -0.8656312023878318,
    -0.7554044083550030,
    -0.6178762444026438,
    -0.4580167776572274,
    -0.2816035507792589,
    -0.0950125098376374,
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL16_W: [f64; 16] = [
    0.0271524594117541,
    0.0622535239386479,
    0.0951585116824928,
    0.1246289712555339,
    0.1495959888165767,
    0.1691565193950025,
    0.1826034150449236,
    0.1894506104550685,
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

/// Diagonal operator with entries equal to cell averages of a classical
/// observable.
#[derive(Debug, Clone)]
pub struct QuantizedObservable {
    pub diagonal: Array1<f64>,
}

impl QuantizedObservable {
    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn apply(&self, v: &ArrayView1<C64>) -> Array1<C64> {
        Array1::from_iter(v.iter().zip(self.diagonal.iter()).map(|(z, d)| z * d))
    }

    pub fn sup(&self) -> f64 {
        self.diagonal.iter().fold(0.0f64, |a, &d| a.max(d.abs()))
    }
}

/// Cell averages of `f` over the N-cell grid; `breakpoints` lists the points
/// where f is not smooth so every quadrature panel is smooth inside.
pub fn op_quantize(
    f: &dyn Fn(f64) -> f64,
    n: usize,
    breakpoints: &[BigRational],
) -> Result<QuantizedObservable> {
    let mut bps: Vec<f64> = breakpoints.iter().map(rat_to_f64).collect();
    bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut diagonal = Array1::zeros(n);
    for i in 0..n {
        let lo = i as f64 / n as f64;
        let hi = (i + 1) as f64 / n as f64;
        let mut cuts = vec![lo];
        for &b in &bps {
            if b > lo && b < hi {
                cuts.push(b);
            }
        }
        cuts.push(hi);
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for q in 0..16 {
                let v = f(c + h * GL16_X[q]);
                if !v.is_finite() {
                    return Err(Error::Integration);
                }
                acc += h * GL16_W[q] * v;
            }
        }
        diagonal[i] = acc * n as f64;
    }
    Ok(QuantizedObservable { diagonal })
}

/// All non-smooth points of f∘T^m when f has the given breakpoints:
/// preimages of branch endpoints up to depth m, plus preimages of f's own
/// breakpoints.
pub fn composed_breakpoints(
    map: &PiecewiseLinearMap,
    f_breakpoints: &[BigRational],
    m: usize,
) -> Vec<BigRational> {
    let mut pts: Vec<BigRational> = Vec::new();
    for (lo, hi) in map.branches() {
        pts.push(lo.clone());
        pts.push(hi.clone());
    }
    let mut frontier: Vec<BigRational> = pts.clone();
    frontier.extend_from_slice(f_breakpoints);
    let mut all = frontier.clone();
    for _ in 1..m.max(1) {
        let mut next = Vec::new();
        for y in &frontier {
            for (j, (lo, hi)) in map.branches().iter().enumerate() {
                let x = (y - &map.offsets()[j]) / rat_u(map.slopes()[j]);
                if &x >= lo && &x <= hi {
                    next.push(x);
                }
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all.sort();
    all.dedup();
    all
}

/// f∘T^m as a float-evaluable closure (breakpoint-safe away from the exact
/// breakpoints returned by `composed_breakpoints`).
pub fn compose_with_map<'a>(
    map: &'a PiecewiseLinearMap,
    f: &'a dyn Fn(f64) -> f64,
    m: usize,
) -> impl Fn(f64) -> f64 + 'a {
    let branches: Vec<(f64, f64, f64, f64)> = map
        .branches()
        .iter()
        .zip(map.slopes().iter().zip(map.offsets().iter()))
        .map(|((lo, hi), (&s, off))| (rat_to_f64(lo), rat_to_f64(hi), s as f64, rat_to_f64(off)))
        .collect();
    move |x0: f64| {
        let mut x = x0;
        for _ in 0..m {
            let last = branches.len() - 1;
            for (j, &(lo, hi, s, off)) in branches.iter().enumerate() {
                if x >= lo && (x < hi || j == last) {
                    x = s * x + off;
                    break;
                }
            }
            x = x.clamp(0.0, 1.0);
        }
        f(x)
    }
}

/// Square-summing partition of unity subordinate to a list of intervals.
///
/// Component values are sampled pointwise (so Σχ² = 1 holds exactly); the
/// δ-wide transition at each interior endpoint uses the cos/sin ramp pair.
#[derive(Debug, Clone)]
pub struct SmoothPartition {
    endpoints: Vec<f64>,
    delta: f64,
}

impl SmoothPartition {
    pub fn new(intervals: &[(BigRational, BigRational)], delta: f64) -> Result<SmoothPartition> {
        let min_len = intervals
            .iter()
            .map(|(lo, hi)| rat_to_f64(hi) - rat_to_f64(lo))
            .fold(f64::INFINITY, f64::min);
        if delta < 0.0 || (delta > 0.0 && delta >= 0.5 * min_len) {
            return Err(Error::DeltaTooLarge(delta, min_len));
        }
        let mut endpoints: Vec<f64> = vec![rat_to_f64(&intervals[0].0)];
        for (_, hi) in intervals {
            endpoints.push(rat_to_f64(hi));
        }
        Ok(SmoothPartition { endpoints, delta })
    }

    pub fn len(&self) -> usize {
        self.endpoints.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value of component i at x.
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        let lo = self.endpoints[i];
        let hi = self.endpoints[i + 1];
        let d = self.delta;
        if d == 0.0 {
            let in_cell = x >= lo && (x < hi || (i + 2 == self.endpoints.len() && x <= hi));
            return if in_cell { 1.0 } else { 0.0 };
        }
        // Interior endpoints ramp over [β−δ, β+δ]; the outer boundary is sharp.
        let left_ramp = i > 0;
        let right_ramp = i + 2 < self.endpoints.len();
        // Outer boundaries are sharp; only interior endpoints ramp.
        let a = if left_ramp { lo - d } else { f64::NEG_INFINITY };
        let b = if right_ramp { hi + d } else { f64::INFINITY };
        if x <= a || x >= b {
            return 0.0;
        }
        if left_ramp && x < lo + d {
            let t = (x - (lo - d)) / (2.0 * d);
            return (std::f64::consts::FRAC_PI_2 * t).sin();
        }
        if right_ramp && x > hi - d {
            let t = (x - (hi - d)) / (2.0 * d);
            return (std::f64::consts::FRAC_PI_2 * t).cos();
        }
        1.0
    }

    /// Pointwise diagonal (cell-center samples) for an N-cell grid.
    pub fn diagonal(&self, i: usize, n: usize) -> QuantizedObservable {
        let diagonal =
            Array1::from_iter((0..n).map(|c| self.eval(i, (c as f64 + 0.5) / n as f64)));
        QuantizedObservable { diagonal }
    }
}

/// ‖U^{-n} Op(f) U^n − Op(f∘T^n)‖ with Op(f∘T^n) built by breakpoint-split
/// quadrature; power iteration on the Hermitian defect.
pub fn egorov_defect(
    u: &dyn LinearOp,
    map: &PiecewiseLinearMap,
    f: &dyn Fn(f64) -> f64,
    f_breakpoints: &[BigRational],
    n: usize,
) -> Result<f64> {
    let dim = u.dim();
    let d_f = op_quantize(f, dim, f_breakpoints)?;
    let composed = compose_with_map(map, f, n);
    let bps = composed_breakpoints(map, f_breakpoints, n);
    let d_fc = op_quantize(&composed, dim, &bps)?;
    let apply = |v: &ArrayView1<C64>| -> Array1<C64> {
        let mut w = v.to_owned();
        for _ in 0..n {
            w = u.apply(&w.view());
        }
        let mut w = d_f.apply(&w.view());
        for _ in 0..n {
            w = u.apply_adjoint(&w.view());
        }
        &w - &d_fc.apply(v)
    };
    operator_norm(dim, &apply, &apply)
}

/// ‖[U^{-n} Op(f) U^n, Op(g)]‖.
pub fn commutator_defect(
    u: &dyn LinearOp,
    f: &dyn Fn(f64) -> f64,
    f_breakpoints: &[BigRational],
    g: &dyn Fn(f64) -> f64,
    g_breakpoints: &[BigRational],
    n: usize,
) -> Result<f64> {
    let dim = u.dim();
    let d_f = op_quantize(f, dim, f_breakpoints)?;
    let d_g = op_quantize(g, dim, g_breakpoints)?;
    let evolved = |v: ArrayView1<C64>| -> Array1<C64> {
        let mut w = v.to_owned();
        for _ in 0..n {
            w = u.apply(&w.view());
        }
        let mut w = d_f.apply(&w.view());
        for _ in 0..n {
            w = u.apply_adjoint(&w.view());
        }
        w
    };
    let apply = move |v: &ArrayView1<C64>| -> Array1<C64> {
        let a = evolved(d_g.apply(v).view());
        let b = d_g.apply(&evolved(v.view()).view());
        &a - &b
    };
    // Skew-Hermitian commutator of Hermitian factors: adjoint is the negative.
    let adjoint = |v: &ArrayView1<C64>| -> Array1<C64> { apply(v).mapv(|z| -z) };
    operator_norm(dim, &apply, adjoint)
}

/// Exact rational preimage T^{-n}X of a finite union of intervals.
pub fn preimage_intervals(
    map: &PiecewiseLinearMap,
    x: &[(BigRational, BigRational)],
    n: usize,
) -> Vec<(BigRational, BigRational)> {
    let mut current: Vec<(BigRational, BigRational)> = x.to_vec();
    for _ in 0..n {
        let mut next = Vec::new();
        for (a, b) in &current {
            for (j, (lo, hi)) in map.branches().iter().enumerate() {
                let s = rat_u(map.slopes()[j]);
                let pa = (a - &map.offsets()[j]) / &s;
                let pb = (b - &map.offsets()[j]) / &s;
                let left = if &pa > lo { pa } else { lo.clone() };
                let right = if &pb < hi { pb } else { hi.clone() };
                if left < right {
                    next.push((left, right));
                }
            }
        }
        next.sort();
        current = next;
    }
    current
}

/// 0/1 grid mask of a union of intervals; errors when an endpoint is off the
/// grid.
pub fn interval_mask(
    intervals: &[(BigRational, BigRational)],
    n: usize,
) -> Result<Vec<bool>> {
    let nr = rat_u(n as u64);
    let mut mask = vec![false; n];
    for (a, b) in intervals {
        let ai = a * &nr;
        let bi = b * &nr;
        if !ai.denom().is_one() || !bi.denom().is_one() {
            return Err(Error::Alignment(format!("[{}, {}]", a, b), n));
        }
        let ai: usize = ai.numer().to_string().parse().unwrap();
        let bi: usize = bi.numer().to_string().parse().unwrap();
        for c in mask.iter_mut().take(bi).skip(ai) {
            *c = true;
        }
    }
    Ok(mask)
}

/// Max-entry residual of U^{-n} P_X U^n = P_{T^{-n}X} for a grid-aligned
/// interval (or cylinder) X.
pub fn exact_egorov_check(
    u: &dyn LinearOp,
    map: &PiecewiseLinearMap,
    x: &(BigRational, BigRational),
    n: usize,
) -> Result<f64> {
    let dim = u.dim();
    let source = vec![x.clone()];
    let mask_x = interval_mask(&source, dim)?;
    let pre = preimage_intervals(map, &source, n);
    let mask_y = interval_mask(&pre, dim)?;
    let mut e: Array1<C64> = Array1::zeros(dim);
    let mut worst = 0.0f64;
    for j in 0..dim {
        e[j] = C64::new(1.0, 0.0);
        let mut w = e.clone();
        for _ in 0..n {
            w = u.apply(&w.view());
        }
        for (i, m) in mask_x.iter().enumerate() {
            if !m {
                w[i] = C64::new(0.0, 0.0);
            }
        }
        for _ in 0..n {
            w = u.apply_adjoint(&w.view());
        }
        for i in 0..dim {
            let target = if i == j && mask_y[j] { 1.0 } else { 0.0 };
            worst = worst.max((w[i] - C64::new(target, 0.0)).norm());
        }
        e[j] = C64::new(0.0, 0.0);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseOp;
    use crate::map::{build_map, cylinder_interval, rat};
    use crate::quantize::quantize_uniform;
    use crate::site::dft;
    use crate::tensorial::TensorialUnitary;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cell_averages() {
        let one = op_quantize(&|_x| 1.0, 8, &[]).unwrap();
        for d in one.diagonal.iter() {
            assert_abs_diff_eq!(*d, 1.0, epsilon = 1e-14);
        }
        let lin = op_quantize(&|x| x, 4, &[]).unwrap();
        for (i, want) in [0.125, 0.375, 0.625, 0.875].iter().enumerate() {
            assert_abs_diff_eq!(lin.diagonal[i], want, epsilon = 1e-14);
        }
        let ind = op_quantize(
            &|x| if x >= 0.5 { 1.0 } else { 0.0 },
            4,
            &[rat(1, 2)],
        )
        .unwrap();
        assert_abs_diff_eq!(ind.diagonal[0], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ind.diagonal[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ind.diagonal[2], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ind.diagonal[3], 1.0, epsilon = 1e-13);
    }

    #[test]
    fn positivity_and_sup() {
        let f = |x: f64| (std::f64::consts::TAU * x).sin().abs();
        let q = op_quantize(&f, 64, &[rat(1, 2)]).unwrap();
        assert!(q.diagonal.iter().all(|&d| d >= -1e-15));
        assert!(q.sup() <= 1.0 + 1e-12);
    }

    #[test]
    fn smooth_partition_ramp() {
        let m = build_map(&[2, 2]).unwrap();
        let part = SmoothPartition::new(m.branches(), 1.0 / 16.0).unwrap();
        let v = part.eval(0, 0.5);
        assert_abs_diff_eq!(v, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(part.eval(1, 0.5), v, epsilon = 1e-12);
        // Squares sum to one on a dense grid.
        for g in 0..=100_000 {
            let x = g as f64 / 100_000.0;
            let s: f64 = (0..part.len()).map(|i| part.eval(i, x).powi(2)).sum();
            assert!((s - 1.0).abs() < 1e-12, "x = {}", x);
        }
        // Measured slope stays within the ramp bound.
        let delta: f64 = 1.0 / 16.0;
        let bound = std::f64::consts::FRAC_PI_2 / delta + 1.0;
        let mut worst: f64 = 0.0;
        for g in 0..100_000 {
            let x0 = g as f64 / 100_000.0;
            let x1 = (g + 1) as f64 / 100_000.0;
            worst = worst.max((part.eval(0, x1) - part.eval(0, x0)).abs() * 100_000.0);
        }
        assert!(worst <= bound);
    }

    #[test]
    fn sharp_partition_squares() {
        let m = build_map(&[2, 4, 4]).unwrap();
        let part = SmoothPartition::new(m.branches(), 0.0).unwrap();
        for g in 0..=10_000 {
            let x = g as f64 / 10_000.0;
            let s: f64 = (0..part.len()).map(|i| part.eval(i, x).powi(2)).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
        }
        assert!(SmoothPartition::new(m.branches(), 0.2).is_err());
    }

    #[test]
    fn constant_defects_vanish() {
        let m = build_map(&[2, 2]).unwrap();
        let u = quantize_uniform(&m, 16).unwrap();
        let d = egorov_defect(&u, &m, &|_x| 1.0, &[], 1).unwrap();
        assert!(d < 1e-12);
        let c = commutator_defect(&u, &|x| x, &[], &|_x| 0.25, &[], 1).unwrap();
        assert!(c < 1e-12);
    }

    #[test]
    fn commutator_triangle_bound() {
        let m = build_map(&[2, 4, 4]).unwrap();
        let site = dft(2).unwrap();
        let u = TensorialUnitary::nonuniform(&m, &[site.clone(), site], 6).unwrap();
        let f = |x: f64| (std::f64::consts::TAU * x).sin();
        let c = commutator_defect(&u, &f, &[], &f, &[], 1).unwrap();
        let e = egorov_defect(&u, &m, &f, &[], 1).unwrap();
        assert!(c <= 2.0 * e * 1.0 + 1e-9);
    }

    #[test]
    fn preimages_exact() {
        let m = build_map(&[2, 4, 4]).unwrap();
        let x = vec![(rat(0, 1), rat(1, 2))];
        let pre = preimage_intervals(&m, &x, 1);
        // T^{-1}[0,1/2] = [0,1/4] ∪ [1/2,5/8] ∪ [3/4,7/8].
        assert_eq!(
            pre,
            vec![
                (rat(0, 1), rat(1, 4)),
                (rat(1, 2), rat(5, 8)),
                (rat(3, 4), rat(7, 8))
            ]
        );
    }

    #[test]
    fn exact_egorov_small() {
        let m = build_map(&[2, 4, 4]).unwrap();
        let site = dft(2).unwrap();
        let u = TensorialUnitary::nonuniform(&m, &[site.clone(), site], 8).unwrap();
        let x = cylinder_interval(2, &[1]).unwrap();
        let r = exact_egorov_check(&u, &m, &x, 1).unwrap();
        assert!(r < 1e-13, "residual {}", r);
        // Whole interval: both sides are the identity.
        let full = (rat(0, 1), rat(1, 1));
        let r = exact_egorov_check(&u, &m, &full, 2).unwrap();
        assert!(r < 1e-13);
    }

    #[test]
    fn exact_egorov_identity_op_fails() {
        // An operator with the wrong Egorov behavior yields a large residual.
        let m = build_map(&[2, 2]).unwrap();
        let id = DenseOp::new(ndarray::Array2::eye(4).mapv(|x: f64| C64::new(x, 0.0)));
        let x = (rat(0, 1), rat(1, 2));
        let r = exact_egorov_check(&id, &m, &x, 1).unwrap();
        assert!(r > 0.9);
    }
}
