//! Dense complex linear-algebra kernel shared by all other modules.
//!
//! Everything here is a pure function of its inputs; LAPACK does the heavy
//! lifting and the wrappers enforce the residual contracts the rest of the
//! crate relies on.

use ndarray::{s, Array1, Array2, Axis};
use ndarray_linalg::{Eig, Eigh, Factorize, Norm, Solve, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = Array2<C64>;
pub type CVector = Array1<C64>;

pub const SOLVE_TOL: f64 = 1e-10;
pub const EIG_TOL: f64 = 1e-10;
pub const GEN_TOL: f64 = 1e-8;
pub const HERM_TOL: f64 = 1e-10;
pub const PIVOT_FLOOR: f64 = 1e-14;
pub const GRAM_FLOOR: f64 = 1e-10;
pub const DEF_TOL: f64 = 1e-8;
pub const QUAD_TOL: f64 = 1e-5;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    Array2::eye(n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    Array2::zeros((rows, cols))
}

/// Conjugate transpose.
pub fn adjoint(a: &CMatrix) -> CMatrix {
    a.t().mapv(|x| x.conj())
}

/// Hermitian part (A + A^H)/2.
pub fn herm_part(a: &CMatrix) -> CMatrix {
    (a + &adjoint(a)).mapv(|x| x * 0.5)
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn all_finite(a: &CMatrix) -> bool {
    a.iter().all(|x| x.re.is_finite() && x.im.is_finite())
}

/// Relative Hermitian defect ‖A − A^H‖₂ / ‖A‖₂ (0 for the zero matrix).
pub fn herm_defect(a: &CMatrix) -> f64 {
    let na = op_norm_2(a);
    if na == 0.0 {
        return 0.0;
    }
    op_norm_2(&(a - &adjoint(a))) / na
}

pub fn require_square(a: &CMatrix, what: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

pub fn require_hermitian(a: &CMatrix, what: &str) -> Result<()> {
    require_square(a, what)?;
    let d = herm_defect(a);
    if d > HERM_TOL {
        return Err(Error::NotHermitian(d));
    }
    Ok(())
}

/// Assemble [[a, b], [c, d]] from equally sized square blocks.
pub fn block2(a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut m = zeros(2 * n, 2 * n);
    m.slice_mut(s![..n, ..n]).assign(a);
    m.slice_mut(s![..n, n..]).assign(b);
    m.slice_mut(s![n.., ..n]).assign(c);
    m.slice_mut(s![n.., n..]).assign(d);
    m
}

/// Split a 2n×2n matrix into its four n×n blocks (a, b, c, d).
pub fn split2(m: &CMatrix) -> (CMatrix, CMatrix, CMatrix, CMatrix) {
    let n = m.nrows() / 2;
    (
        m.slice(s![..n, ..n]).to_owned(),
        m.slice(s![..n, n..]).to_owned(),
        m.slice(s![n.., ..n]).to_owned(),
        m.slice(s![n.., n..]).to_owned(),
    )
}

/// Kronecker product A ⊗ B.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = (a.nrows(), a.ncols());
    let (br, bc) = (b.nrows(), b.ncols());
    let mut out = zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
                .assign(&b.mapv(|x| aij * x));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct HermEig {
    /// Real eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Unitary matrix of eigenvectors (columns), same order as `values`.
    pub vectors: CMatrix,
}

impl HermEig {
    /// V · diag(f(λ)) · V^H.
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.values.len();
        let mut d = zeros(n, n);
        for (i, &l) in self.values.iter().enumerate() {
            d[[i, i]] = f(l);
        }
        self.vectors.dot(&d).dot(&adjoint(&self.vectors))
    }
}

#[derive(Debug, Clone)]
pub struct GenEig {
    pub values: Vec<C64>,
    /// Right eigenvectors (columns, unit 2-norm), same order as `values`.
    pub vectors: Option<CMatrix>,
    /// Per-pair backward error ‖Av − λv‖₂ / ‖A‖₂.
    pub residuals: Vec<f64>,
}

/// Solve AX = B by LU with partial pivoting (column by column, fixed order).
pub fn solve_linear(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = require_square(a, "solve_linear A")?;
    if b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "solve_linear: A is {n}x{n}, B has {} rows",
            b.nrows()
        )));
    }
    if !all_finite(a) || !all_finite(b) {
        return Err(Error::DomainError("solve_linear: non-finite input".into()));
    }
    // Cheap singularity guard before LAPACK reports an exact zero pivot.
    let floor = PIVOT_FLOOR * max_abs(a).max(1e-300);
    // Factor once; every right-hand side reuses the same LU decomposition.
    let lu = a
        .factorize()
        .map_err(|_| Error::SingularMatrix { pivot: 0.0, floor })?;
    let mut x = zeros(n, b.ncols());
    for (j, col) in b.axis_iter(Axis(1)).enumerate() {
        let sol = lu
            .solve(&col.to_owned())
            .map_err(|_| Error::SingularMatrix { pivot: 0.0, floor })?;
        x.column_mut(j).assign(&sol);
    }
    if !all_finite(&x) {
        return Err(Error::SingularMatrix { pivot: 0.0, floor });
    }
    // Residual-based pivot guard: reject numerically singular systems.
    // Frobenius norms suffice for the guard and avoid extra factorizations.
    let fro = |m: &CMatrix| m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let r = a.dot(&x) - b;
    let scale = fro(b).max(1.0) * fro(a).max(1.0) * fro(&x).max(1.0);
    let rel = fro(&r) / scale;
    if !rel.is_finite() || rel > 1e-6 {
        return Err(Error::SingularMatrix { pivot: rel, floor });
    }
    Ok(x)
}

/// Eigendecomposition of a Hermitian matrix (symmetrized before factoring).
pub fn hermitian_eig(a: &CMatrix) -> Result<HermEig> {
    require_hermitian(a, "hermitian_eig")?;
    let sym = herm_part(a);
    let (vals, vecs) = sym
        .eigh(UPLO::Lower)
        .map_err(|_| Error::NoConvergence("hermitian_eig"))?;
    // zheev runs on the transposed (column-major) view, so the eigenvectors
    // of A arrive conjugated.
    Ok(HermEig {
        values: vals.to_vec(),
        vectors: vecs.mapv(|x| x.conj()),
    })
}

/// General dense eigendecomposition with per-pair residuals.
pub fn general_eig(a: &CMatrix) -> Result<GenEig> {
    require_square(a, "general_eig")?;
    let (vals, vecs) = a.eig().map_err(|_| Error::NoConvergence("general_eig"))?;
    let na = op_norm_2(a).max(1e-300);
    let mut vectors = vecs;
    let mut residuals = Vec::with_capacity(vals.len());
    for (i, &l) in vals.iter().enumerate() {
        let mut v = vectors.column(i).to_owned();
        let nv = v.norm_l2();
        if nv > 0.0 {
            v.mapv_inplace(|x| x / nv);
            vectors.column_mut(i).assign(&v);
        }
        let r = a.dot(&v) - &v.mapv(|x| l * x);
        residuals.push(r.norm_l2() / na);
    }
    Ok(GenEig {
        values: vals.to_vec(),
        vectors: Some(vectors),
        residuals,
    })
}

/// f(A) = V diag(f(λ)) V^H for Hermitian A.
pub fn matfun_hermitian(a: &CMatrix, f: impl Fn(f64) -> C64) -> Result<CMatrix> {
    let e = hermitian_eig(a)?;
    matfun_from_eig(&e, f)
}

/// Same as `matfun_hermitian` given a precomputed eigendecomposition.
pub fn matfun_from_eig(e: &HermEig, f: impl Fn(f64) -> C64) -> Result<CMatrix> {
    for &l in &e.values {
        let y = f(l);
        if !y.re.is_finite() || !y.im.is_finite() {
            return Err(Error::DomainError(format!(
                "matfun: f undefined at eigenvalue {l}"
            )));
        }
    }
    Ok(e.apply(f))
}

/// Largest singular value. Full SVD for small matrices, deterministic power
/// iteration on A^H A above the cutoff.
pub fn op_norm_2(a: &CMatrix) -> f64 {
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return 0.0;
    }
    if m.max(n) <= 800 {
        return svd_values(a).first().copied().unwrap_or(0.0);
    }
    let ah = adjoint(a);
    // Fixed starting vector keeps repeated runs bit-identical.
    let mut v: CVector = Array1::from_iter(
        (0..n).map(|i| c(1.0 + (i as f64 + 1.0).sin() * 0.25, 0.0)),
    );
    let mut nv = v.norm_l2();
    v.mapv_inplace(|x| x / nv);
    let mut last = 0.0f64;
    for _ in 0..2000 {
        let w = ah.dot(&a.dot(&v));
        nv = w.norm_l2();
        if nv == 0.0 {
            return 0.0;
        }
        v = w.mapv(|x| x / nv);
        let est = nv.sqrt();
        if (est - last).abs() <= 1e-12 * est.max(1.0) {
            return est;
        }
        last = est;
    }
    last
}

/// Singular values in descending order.
pub fn svd_values(a: &CMatrix) -> Vec<f64> {
    use ndarray_linalg::SVD;
    match a.svd(false, false) {
        Ok((_, s, _)) => {
            let mut v = s.to_vec();
            v.sort_by(|x, y| y.partial_cmp(x).unwrap());
            v
        }
        Err(_) => vec![f64::NAN],
    }
}

/// Moore–Penrose inverse, zeroing singular values below cutoff·σ_max.
pub fn pseudo_inverse(a: &CMatrix, cutoff: f64) -> CMatrix {
    use ndarray_linalg::SVD;
    let (m, n) = (a.nrows(), a.ncols());
    if m == 0 || n == 0 {
        return zeros(n, m);
    }
    let (u, sv, vt) = a.svd(true, true).expect("svd failed");
    let u = u.unwrap();
    let vt = vt.unwrap();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let k = sv.len();
    let mut sinv = zeros(k, k);
    for i in 0..k {
        if sv[i] > cutoff * smax && sv[i] > 0.0 {
            sinv[[i, i]] = cr(1.0 / sv[i]);
        }
    }
    // A⁺ = V Σ⁺ U^H with the economy-size factors.
    let v = adjoint(&vt);
    let uk = u.slice(s![.., ..k]).to_owned();
    let vk = v.slice(s![.., ..k]).to_owned();
    vk.dot(&sinv).dot(&adjoint(&uk))
}

/// Orthonormal basis of the column space (columns of the result); singular
/// vectors with σ > tol·σ_max.
pub fn range_basis(a: &CMatrix, tol: f64) -> CMatrix {
    use ndarray_linalg::SVD;
    if a.nrows() == 0 || a.ncols() == 0 {
        return zeros(a.nrows(), 0);
    }
    let (u, sv, _) = a.svd(true, false).expect("svd failed");
    let u = u.unwrap();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let r = sv.iter().filter(|&&s| s > tol * smax && s > 0.0).count();
    u.slice(s![.., ..r]).to_owned()
}

/// Numerical rank with relative cutoff.
pub fn rank(a: &CMatrix, rel_cutoff: f64) -> usize {
    let sv = svd_values(a);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_cutoff * smax).count()
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant. Works for arbitrary square complex matrices.
pub fn expm(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return zeros(0, 0);
    }
    let norm = a
        .axis_iter(Axis(1))
        .map(|col| col.iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max); // 1-norm
    let theta13 = 5.371920351148152;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let a1 = a.mapv(|x| x / cr(2f64.powi(s)));
    let b: [f64; 14] = [
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
    ];
    let id = identity(n);
    let a2 = a1.dot(&a1);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let u_inner = {
        let t1 = a6.mapv(|x| x * cr(b[13])) + &a4.mapv(|x| x * cr(b[11])) + &a2.mapv(|x| x * cr(b[9]));
        
        a6.dot(&t1)
            + &a6.mapv(|x| x * cr(b[7]))
            + &a4.mapv(|x| x * cr(b[5]))
            + &a2.mapv(|x| x * cr(b[3]))
            + &id.mapv(|x| x * cr(b[1]))
    };
    let u = a1.dot(&u_inner);
    let v = {
        let t1 = a6.mapv(|x| x * cr(b[12])) + &a4.mapv(|x| x * cr(b[10])) + &a2.mapv(|x| x * cr(b[8]));
        a6.dot(&t1)
            + &a6.mapv(|x| x * cr(b[6]))
            + &a4.mapv(|x| x * cr(b[4]))
            + &a2.mapv(|x| x * cr(b[2]))
            + &id.mapv(|x| x * cr(b[0]))
    };
    let num = &v + &u;
    let den = &v - &u;
    let mut f = solve_linear(&den, &num).expect("expm: Padé denominator singular");
    for _ in 0..s {
        f = f.dot(&f);
    }
    f
}
