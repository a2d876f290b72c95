//! Dense/matrix-free operator plumbing: operator norms, eigensolve, basis
//! helpers.

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::{Eig, Norm, SVD};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Linear operator with matrix-free forward and adjoint application.
pub trait LinearOp {
    fn dim(&self) -> usize;
    fn apply(&self, v: &ArrayView1<C64>) -> Array1<C64>;
    fn apply_adjoint(&self, v: &ArrayView1<C64>) -> Array1<C64>;

    /// Dense matrix, columns obtained by applying to basis vectors.
    fn to_dense(&self) -> Result<Array2<C64>> {
        let n = self.dim();
        if n > 16384 {
            return Err(Error::Precond(format!(
                "dense materialization capped at 16384, got {}",
                n
            )));
        }
        let mut a = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for j in 0..n {
            e[j] = C64::new(1.0, 0.0);
            let col = self.apply(&e.view());
            for i in 0..n {
                a[[i, j]] = col[i];
            }
            e[j] = C64::new(0.0, 0.0);
        }
        Ok(a)
    }
}

/// Dense operator backed by an owned complex matrix.
#[derive(Debug, Clone)]
pub struct DenseOp {
    pub mat: Array2<C64>,
}

impl DenseOp {
    pub fn new(mat: Array2<C64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols());
        DenseOp { mat }
    }
}

impl LinearOp for DenseOp {
    fn dim(&self) -> usize {
        self.mat.nrows()
    }

    fn apply(&self, v: &ArrayView1<C64>) -> Array1<C64> {
        self.mat.dot(v)
    }

    fn apply_adjoint(&self, v: &ArrayView1<C64>) -> Array1<C64> {
        self.mat.t().mapv(|z| z.conj()).dot(v)
    }

    fn to_dense(&self) -> Result<Array2<C64>> {
        Ok(self.mat.clone())
    }
}

/// Deterministic random unit vector (fixed-stream generator).
pub fn random_unit_vector(n: usize, seed: u64) -> Array1<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Array1<C64> = Array1::from_iter(
        (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)),
    );
    let nrm = norm2(&v.view());
    v.mapv_inplace(|z| z / nrm);
    v
}

pub fn norm2(v: &ArrayView1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn inner(a: &ArrayView1<C64>, b: &ArrayView1<C64>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Largest singular value of `A` via power iteration on `A*A`.
///
/// `apply`/`apply_adjoint` give the matrix-free action of `A`; 500-iteration
/// cap, tolerance 1e-10 on the Rayleigh quotient.
pub fn operator_norm<F, G>(n: usize, apply: F, apply_adjoint: G) -> Result<f64>
where
    F: Fn(&ArrayView1<C64>) -> Array1<C64>,
    G: Fn(&ArrayView1<C64>) -> Array1<C64>,
{
    let mut v = random_unit_vector(n, 0x5eed);
    let mut lambda = 0.0f64;
    let mut prev = f64::INFINITY;
    for _ in 0..500 {
        let w = apply_adjoint(&apply(&v.view()).view());
        let nrm = norm2(&w.view());
        if nrm < 1e-300 {
            return Ok(0.0);
        }
        lambda = inner(&v.view(), &w.view()).re.max(0.0);
        v = w / C64::new(nrm, 0.0);
        if (lambda - prev).abs() <= 1e-10 * lambda.max(1.0) {
            return Ok(lambda.sqrt());
        }
        prev = lambda;
    }
    // Near-degenerate top singular pairs converge slowly; accept the upper
    // bracket edge when it is tight to 1e-6 relative, else report the bracket.
    let hi = {
        let w = apply_adjoint(&apply(&v.view()).view());
        norm2(&w.view())
    };
    if hi <= lambda * (1.0 + 1e-5) {
        return Ok(hi.sqrt());
    }
    Err(Error::Convergence(lambda.sqrt(), hi.sqrt()))
}

/// Largest singular value of a dense matrix by LAPACK SVD.
pub fn sigma_max(a: &Array2<C64>) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let (_, s, _) = a
        .svd(false, false)
        .map_err(|e| Error::Eig(format!("{}", e)))?;
    Ok(s.iter().cloned().fold(0.0, f64::max))
}

/// Max |entry| of `A*A − I`.
pub fn unitarity_residual(op: &dyn LinearOp) -> Result<f64> {
    let n = op.dim();
    let mut e: Array1<C64> = Array1::zeros(n);
    let mut worst = 0.0f64;
    for j in 0..n {
        e[j] = C64::new(1.0, 0.0);
        let col = op.apply_adjoint(&op.apply(&e.view()).view());
        for i in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((col[i] - C64::new(target, 0.0)).norm());
        }
        e[j] = C64::new(0.0, 0.0);
    }
    Ok(worst)
}

/// Eigenpair of a unitary matrix.
#[derive(Debug, Clone)]
pub struct EigenState {
    pub vector: Array1<C64>,
    pub phase: f64,
    pub residual: f64,
}

/// Full spectrum of a dense unitary; states sorted by eigenphase in [0, 2π).
pub fn eigensolve(mat: &Array2<C64>) -> Result<Vec<EigenState>> {
    let n = mat.nrows();
    if n > 4096 {
        return Err(Error::Precond(format!("eigensolve capped at 4096, got {}", n)));
    }
    let (vals, vecs) = mat.eig().map_err(|e| Error::Eig(format!("{}", e)))?;
    let mut states = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Array1<C64> = vecs.column(j).to_owned();
        let nrm = norm2(&v.view());
        v.mapv_inplace(|z| z / nrm);
        let lam = vals[j];
        let resid = (&mat.dot(&v) - &v.mapv(|z| z * lam)).norm_l2();
        let mut phase = lam.arg();
        if phase < 0.0 {
            phase += std::f64::consts::TAU;
        }
        states.push(EigenState {
            vector: v,
            phase,
            residual: resid,
        });
    }
    states.sort_by(|a, b| a.phase.partial_cmp(&b.phase).unwrap());
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn norm_of_diagonal() {
        let d = array![
            [C64::new(0.5, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(-2.0, 0.0)]
        ];
        let op = DenseOp::new(d.clone());
        let nrm = operator_norm(2, |v| op.apply(v), |v| op.apply_adjoint(v)).unwrap();
        assert_abs_diff_eq!(nrm, 2.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sigma_max(&d).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn eigensolve_identity_and_dft() {
        let id = Array2::eye(2).mapv(|x: f64| C64::new(x, 0.0));
        let states = eigensolve(&id).unwrap();
        assert!(states.iter().all(|s| s.phase.abs() < 1e-12));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let dft2 = array![
            [C64::new(s, 0.0), C64::new(s, 0.0)],
            [C64::new(s, 0.0), C64::new(-s, 0.0)]
        ];
        let states = eigensolve(&dft2).unwrap();
        let phases: Vec<f64> = states.iter().map(|st| st.phase).collect();
        assert_abs_diff_eq!(phases[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(phases[1], std::f64::consts::PI, epsilon = 1e-12);
        assert!(states.iter().all(|st| st.residual < 1e-13));
    }
}
