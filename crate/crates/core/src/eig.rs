//! Eigenvalue machinery for periodic-orbit products.
//!
//! On a periodic orbit the asymptotic growth rates are exactly
//! `(1/q) log |eigenvalue|` of the period product, and the invariant
//! subspaces are generalized eigenspaces. Eigenvalues of nearly equal
//! modulus are merged into one block, and each block's subspace is the
//! kernel of the real polynomial product over the block — this covers
//! defective (Jordan) structure without separate eigenvector extraction.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::Subspace;

/// Moduli at or below this are treated as exactly zero (growth rate minus
/// infinity); eigenvalue noise for unit-scale matrices sits well below it.
pub const ZERO_MODULUS: f64 = 1e-12;

/// Relative tolerance for merging eigenvalue moduli into one block.
pub const MODULUS_MERGE_TOL: f64 = 1e-6;

/// All complex eigenvalues, sorted by descending modulus (ties by
/// descending real part, then descending imaginary part, for determinism).
pub fn complex_eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eigs: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    eigs
}

/// A block of eigenvalues sharing one modulus (within the merge
/// tolerance).
#[derive(Clone, Debug)]
pub struct ModulusGroup {
    /// Representative modulus (mean over the block); exactly zero for the
    /// singular block.
    pub modulus: f64,
    pub eigenvalues: Vec<Complex<f64>>,
}

impl ModulusGroup {
    pub fn multiplicity(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Partition eigenvalues into modulus blocks, descending. Moduli within
/// relative distance `rel_tol` of the block representative are merged;
/// moduli at or below [`ZERO_MODULUS`] form a final zero block.
pub fn group_by_modulus(eigs: &[Complex<f64>], rel_tol: f64) -> Vec<ModulusGroup> {
    let mut sorted = eigs.to_vec();
    sorted.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    let mut groups: Vec<ModulusGroup> = Vec::new();
    for lambda in sorted {
        let r = lambda.norm();
        let r = if r <= ZERO_MODULUS { 0.0 } else { r };
        match groups.last_mut() {
            Some(g)
                if (g.modulus == 0.0 && r == 0.0)
                    || (g.modulus > 0.0 && (g.modulus - r).abs() <= rel_tol * g.modulus) =>
            {
                g.eigenvalues.push(lambda);
                if r > 0.0 {
                    // Keep the representative a running mean so long
                    // near-ties merge against the block, not the last entry.
                    let k = g.eigenvalues.len() as f64;
                    g.modulus += (r - g.modulus) / k;
                }
            }
            _ => groups.push(ModulusGroup { modulus: r, eigenvalues: vec![lambda] }),
        }
    }
    groups
}

/// Generalized eigenspace for one modulus block: the kernel of
/// `prod (M - lambda I)` over the block, computed via SVD. The product is
/// real because blocks are closed under conjugation.
pub fn modulus_group_subspace(m: &DMatrix<f64>, group: &[Complex<f64>]) -> Result<Subspace> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch("square matrix required".into()));
    }
    let dim = group.len();
    if dim == 0 || dim > n {
        return Err(Error::InvalidInput(format!("block of size {dim} in dimension {n}")));
    }
    if dim == n {
        return Ok(Subspace::full(n));
    }
    let mc = m.map(|x| Complex::new(x, 0.0));
    let id = DMatrix::<Complex<f64>>::identity(n, n);
    let mut prod = id.clone();
    for lambda in group {
        prod = (&mc - &id * *lambda) * prod;
    }
    let imag_max = prod.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let scale = prod.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    if imag_max > 1e-8 * scale {
        return Err(Error::InvalidInput(
            "eigenvalue block not closed under conjugation".into(),
        ));
    }
    let real = prod.map(|z| z.re);
    kernel_of_dimension(&real, dim)
}

/// The `dim`-dimensional subspace of right singular vectors with the
/// smallest singular values — the numerical kernel when the matrix has
/// rank `n - dim`.
pub fn kernel_of_dimension(m: &DMatrix<f64>, dim: usize) -> Result<Subspace> {
    let n = m.ncols();
    if dim == 0 || dim > n {
        return Err(Error::InvalidInput(format!("kernel dimension {dim} of {n}")));
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested v_t");
    // Singular values are sorted descending; the kernel directions are the
    // last rows of V^T.
    let mut basis = DMatrix::zeros(n, dim);
    for (col, row_idx) in ((n - dim)..n).enumerate() {
        for i in 0..n {
            basis[(i, col)] = v_t[(row_idx, i)];
        }
    }
    Subspace::from_orthonormal(basis)
}

/// Left Perron data of an entrywise-positive matrix: the dominant
/// eigenvalue and the positive left eigenvector normalized to unit sum,
/// via power iteration on the transpose.
pub fn left_perron(m: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = m.nrows();
    if m.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch("square matrix required".into()));
    }
    if m.iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidInput("Perron iteration needs positive entries".into()));
    }
    let mt = m.transpose();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = &mt * &v;
        let next_lambda = w.sum();
        let next = &w / next_lambda;
        let diff = (&next - &v).amax();
        v = next;
        lambda = next_lambda;
        if diff < 1e-15 {
            return Ok((lambda, v));
        }
    }
    // Positive matrices contract the Hilbert metric, so non-convergence in
    // 10^4 rounds means pathological conditioning.
    Err(Error::NoConvergence { iterations: 10_000, residual: (&mt * &v - &v * lambda).amax() })
}
