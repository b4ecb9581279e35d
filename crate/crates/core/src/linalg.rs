//! Small dense linear-algebra kernels shared by the other modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`. The matrices in this
//! crate are tiny (state dimension at most a few dozen), so every routine
//! favors exact dense factorizations over iterative schemes.

use nalgebra::{DMatrix, Schur, SymmetricEigen, SVD};

use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

/// Degrees and scaling thresholds of the diagonal Padé approximants used by
/// [`expm`] (Higham 2005, Table 2.3).
const PADE_THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
    (13, 5.371920351148152e0),
];

fn pade_coefficients(degree: usize) -> &'static [f64] {
    match degree {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!("unsupported Padé degree {degree}"),
    }
}

/// Induced 1-norm (maximum absolute column sum).
pub fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé
/// approximant of degree 3, 5, 7, 9 or 13.
///
/// # Panics
/// Panics if `a` is not square.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm requires a square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = norm_1(a);
    let ident = DMatrix::<f64>::identity(n, n);

    for &(degree, theta) in &PADE_THETA[..4] {
        if norm <= theta {
            let (u, v) = pade_low(a, degree, &ident);
            return pade_solve(&u, &v);
        }
    }

    let theta13 = PADE_THETA[4].1;
    let squarings = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a * 2f64.powi(-squarings);
    let (u, v) = pade13(&scaled, &ident);
    let mut result = pade_solve(&u, &v);
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn pade_low(a: &DMatrix<f64>, degree: usize, ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = pade_coefficients(degree);
    let a2 = a * a;
    let mut power = ident.clone();
    let mut odd = ident * b[1];
    let mut even = ident * b[0];
    for k in 1..=degree / 2 {
        power = &power * &a2;
        even += &power * b[2 * k];
        odd += &power * b[2 * k + 1];
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>, ident: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = pade_coefficients(13);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + ident * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + ident * b[0];
    (u, v)
}

fn pade_solve(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let q = v - u;
    let p = v + u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular inside the scaling threshold")
}

/// Eigenvalues of a general real square matrix via a real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<num_complex::Complex64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "eigenvalues",
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Solver("Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Eigenvalues of the symmetric part of `a`, in ascending order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    vals.sort_by(f64::total_cmp);
    vals
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a).first().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a).last().copied().unwrap_or(0.0)
}

/// `(a + aᵀ) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest singular value.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    SVD::try_new(a.clone(), false, false, f64::EPSILON, 0)
        .map(|svd| svd.singular_values.max())
        .expect("SVD of a small finite matrix converges")
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij != 0.0 {
                out.view_mut((i * br, j * bc), (br, bc))
                    .copy_from(&(b * aij));
            }
        }
    }
    out
}

/// Symmetric square root of a PSD matrix; small negative eigenvalues are
/// clamped to zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Check that `a` is symmetric PSD up to `-tol·max(1, ‖a‖₂)` and return the
/// smallest eigenvalue.
pub fn check_psd(a: &DMatrix<f64>, name: &'static str, tol: f64) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: name,
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if let Some(&bad) = a.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { name, value: bad });
    }
    let scale = a.norm().max(1.0);
    let asym = (a - a.transpose()).norm();
    if asym > tol.max(1e-12) * scale {
        return Err(Error::Invalid(format!(
            "{name} is not symmetric (asymmetry {asym:.3e})"
        )));
    }
    let min = min_eigenvalue(a);
    let top = max_eigenvalue(a).abs().max(1.0);
    if min < -tol * top {
        return Err(Error::NotPsd {
            name,
            min_eigenvalue: min,
        });
    }
    Ok(min)
}

/// Clamp tiny negative eigenvalues of a symmetric matrix to zero. Returns the
/// input untouched when it is already PSD.
pub fn clamp_psd(a: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return a;
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    symmetrize(
        &(&eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()),
    )
}
