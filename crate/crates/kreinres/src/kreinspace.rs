//! Krein-space structure on finite-dimensional spaces: indefinite forms,
//! adjoints, positivity, and projections.

use crate::error::{Error, Result};
use crate::numkernel::*;

/// Invertible Hermitian Gram matrix J defining the form ⟨u|v⟩ = u^H J v.
#[derive(Debug, Clone)]
pub struct KreinStructure {
    j: CMatrix,
    j_inv: CMatrix,
}

impl KreinStructure {
    pub fn new(j: CMatrix) -> Result<Self> {
        require_hermitian(&j, "KreinStructure J")?;
        let sv = svd_values(&j);
        let smin = sv.last().copied().unwrap_or(0.0);
        // negated form so a NaN singular value also rejects J
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(smin >= GRAM_FLOOR) {
            return Err(Error::DegenerateRange(smin));
        }
        let j_inv = solve_linear(&j, &identity(j.nrows()))?;
        Ok(Self { j, j_inv })
    }

    /// Hilbert case J = I.
    pub fn hilbert(n: usize) -> Self {
        Self {
            j: identity(n),
            j_inv: identity(n),
        }
    }

    /// Charge form on 2n-dimensional phase space: J = [[0, I], [I, 0]].
    pub fn charge(n: usize) -> Self {
        let j = block2(&zeros(n, n), &identity(n), &identity(n), &zeros(n, n));
        Self {
            j_inv: j.clone(),
            j,
        }
    }

    pub fn dim(&self) -> usize {
        self.j.nrows()
    }

    pub fn gram(&self) -> &CMatrix {
        &self.j
    }

    pub fn gram_inv(&self) -> &CMatrix {
        &self.j_inv
    }
}

/// ⟨u|v⟩ = u^H J v.
pub fn krein_form(ks: &KreinStructure, u: &CVector, v: &CVector) -> Result<C64> {
    if u.len() != ks.dim() || v.len() != ks.dim() {
        return Err(Error::DimensionMismatch(format!(
            "krein_form: J is {0}x{0}, u has {1}, v has {2}",
            ks.dim(),
            u.len(),
            v.len()
        )));
    }
    let jv = ks.j.dot(v);
    Ok(u.iter().zip(jv.iter()).map(|(a, b)| a.conj() * b).sum())
}

/// Krein adjoint T* = J⁻¹ T^H J.
pub fn krein_adjoint(ks: &KreinStructure, t: &CMatrix) -> Result<CMatrix> {
    let n = require_square(t, "krein_adjoint T")?;
    if n != ks.dim() {
        return Err(Error::DimensionMismatch(format!(
            "krein_adjoint: J is {}x{}, T is {n}x{n}",
            ks.dim(),
            ks.dim()
        )));
    }
    Ok(ks.j_inv.dot(&adjoint(t)).dot(&ks.j))
}

/// True iff ‖JT − T^H J‖₂ ≤ tol·‖JT‖₂.
pub fn is_krein_selfadjoint(ks: &KreinStructure, t: &CMatrix, tol: f64) -> bool {
    if t.nrows() != ks.dim() || t.ncols() != ks.dim() {
        return false;
    }
    let jt = ks.j.dot(t);
    let defect = op_norm_2(&(&jt - &adjoint(&jt)));
    defect <= tol * op_norm_2(&jt).max(1e-300)
}

/// Krein positivity: ⟨u|Su⟩ ≥ 0 for all u, i.e. Herm(JS) ⪰ −tol·‖JS‖₂.
pub fn is_krein_positive(ks: &KreinStructure, s: &CMatrix, tol: f64) -> Result<bool> {
    if !is_krein_selfadjoint(ks, s, tol.max(1e-8)) {
        let jt = ks.j.dot(s);
        let defect = op_norm_2(&(&jt - &adjoint(&jt))) / op_norm_2(&jt).max(1e-300);
        return Err(Error::NotSelfadjoint(defect));
    }
    let js = herm_part(&ks.j.dot(s));
    let e = hermitian_eig(&js)?;
    let min = e.values.first().copied().unwrap_or(0.0);
    Ok(min >= -tol * op_norm_2(&js).max(1e-300))
}

/// Positivity of the phase-space-symmetric block operator S = [[a, b], [c, a^H]]
/// under the charge form: b, c ⪰ 0 and
/// sup over a decreasing ε-grid of ‖(b+ε)^{−1/2} a (c+ε)^{−1/2}‖₂ ≤ 1
/// (the Schur-complement contraction for the Hermitian block [[c, aᴴ], [a, b]]).
pub fn block_positivity_test(a: &CMatrix, b: &CMatrix, c: &CMatrix, tol: f64) -> Result<bool> {
    require_hermitian(b, "block_positivity b")?;
    require_hermitian(c, "block_positivity c")?;
    let scale = op_norm_2(b).max(op_norm_2(c)).max(1.0);
    let eig_b = hermitian_eig(b)?;
    let eig_c = hermitian_eig(c)?;
    if eig_b.values.first().copied().unwrap_or(0.0) < -tol * scale
        || eig_c.values.first().copied().unwrap_or(0.0) < -tol * scale
    {
        return Ok(false);
    }
    let mut sup = 0.0f64;
    let mut eps = 1.0;
    while eps >= 1e-8 * 0.999 {
        let bi = matfun_from_eig(&eig_b, |x| cr(1.0 / (x.max(0.0) + eps).sqrt()))?;
        let ci = matfun_from_eig(&eig_c, |x| cr(1.0 / (x.max(0.0) + eps).sqrt()))?;
        sup = sup.max(op_norm_2(&bi.dot(a).dot(&ci)));
        eps *= 0.1;
    }
    Ok(sup <= 1.0 + tol)
}

#[derive(Debug, Clone)]
pub struct ProjectionReport {
    pub projection_defect: f64,
    pub is_projection: bool,
    pub is_positive: bool,
    /// Smallest eigenvalue of the compressed Gram on ran P; None for P = 0.
    pub hilbert_constant: Option<f64>,
}

/// Checks that P is a projection, that it is Krein-positive, and that its
/// range is a Hilbert subspace (compressed Gram positive definite).
pub fn positive_projection_check(
    ks: &KreinStructure,
    p: &CMatrix,
    tol: f64,
) -> Result<ProjectionReport> {
    require_square(p, "positive_projection P")?;
    let scale = op_norm_2(p).max(1.0);
    let defect = op_norm_2(&(&p.dot(p) - p));
    let is_projection = defect <= tol * scale;
    let is_positive = matches!(is_krein_positive(ks, p, tol), Ok(true));
    let basis = range_basis(p, 1e-10);
    let hilbert_constant = if basis.ncols() == 0 {
        None
    } else {
        let g = herm_part(&adjoint(&basis).dot(ks.gram()).dot(&basis));
        let e = hermitian_eig(&g)?;
        Some(e.values.first().copied().unwrap_or(0.0))
    };
    Ok(ProjectionReport {
        projection_defect: defect,
        is_projection,
        is_positive,
        hilbert_constant,
    })
}

/// ‖S‖_Π: largest |generalized eigenvalue| of the pair
/// (compressed Hermitian form of JS, compressed Gram) on ran P.
pub fn compressed_norm(ks: &KreinStructure, p: &CMatrix, s: &CMatrix) -> Result<f64> {
    let basis = range_basis(p, 1e-10);
    if basis.ncols() == 0 {
        return Ok(0.0);
    }
    let g = herm_part(&adjoint(&basis).dot(ks.gram()).dot(&basis));
    let ge = hermitian_eig(&g)?;
    let gmin = ge.values.first().copied().unwrap_or(0.0);
    if gmin < GRAM_FLOOR {
        return Err(Error::DegenerateRange(gmin));
    }
    let q = herm_part(&adjoint(&basis).dot(&ks.gram().dot(s)).dot(&basis));
    // whiten by G^{-1/2} and read off the extreme eigenvalues
    let g_isqrt = matfun_from_eig(&ge, |x| cr(1.0 / x.sqrt()))?;
    let w = herm_part(&g_isqrt.dot(&q).dot(&g_isqrt));
    let e = hermitian_eig(&w)?;
    Ok(e.values.iter().map(|x| x.abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn jc2() -> KreinStructure {
        KreinStructure::charge(1)
    }

    #[test]
    fn form_neutral_and_values() {
        let ks = jc2();
        let u = array![cr(1.0), cr(0.0)];
        assert!(krein_form(&ks, &u, &u).unwrap().norm() < 1e-15);
        let w = array![cr(1.0), cr(1.0)];
        assert!((krein_form(&ks, &w, &w).unwrap() - cr(2.0)).norm() < 1e-15);
        // Hilbert case: nonnegative
        let ks_h = KreinStructure::hilbert(2);
        let v = array![c(0.3, -0.2), c(1.0, 0.5)];
        let f = krein_form(&ks_h, &v, &v).unwrap();
        assert!(f.im.abs() < 1e-15 && f.re > 0.0);
    }

    #[test]
    fn form_hermitian_symmetry() {
        let ks = jc2();
        let u = array![c(1.0, 2.0), c(-0.5, 0.3)];
        let v = array![c(0.2, -1.0), c(0.7, 0.1)];
        let a = krein_form(&ks, &u, &v).unwrap();
        let b = krein_form(&ks, &v, &u).unwrap();
        assert!((a - b.conj()).norm() < 1e-14);
    }

    #[test]
    fn adjoint_swap_example() {
        let ks = jc2();
        let t = array![[cr(1.0), cr(2.0)], [cr(3.0), cr(4.0)]];
        let ts = krein_adjoint(&ks, &t).unwrap();
        let expect = array![[cr(4.0), cr(2.0)], [cr(3.0), cr(1.0)]];
        assert!(op_norm_2(&(&ts - &expect)) < 1e-13);
    }

    #[test]
    fn adjoint_hilbert_is_conjugate_transpose() {
        let ks = KreinStructure::hilbert(2);
        let t = array![[c(1.0, 1.0), cr(2.0)], [cr(0.0), c(0.0, -3.0)]];
        assert!(op_norm_2(&(&krein_adjoint(&ks, &t).unwrap() - &adjoint(&t))) < 1e-14);
    }

    #[test]
    fn adjoint_defining_identity_and_involution() {
        // random-ish J (definite-free) and T
        let j = herm_part(&array![
            [cr(2.0), c(0.3, 0.4), cr(0.0)],
            [c(0.3, -0.4), cr(-1.5), c(0.1, -0.2)],
            [cr(0.0), c(0.1, 0.2), cr(1.0)]
        ]);
        let ks = KreinStructure::new(j).unwrap();
        let t = array![
            [c(0.2, 1.0), cr(0.5), c(-0.3, 0.1)],
            [cr(1.1), c(0.0, -0.7), cr(0.4)],
            [c(0.6, 0.6), cr(-0.9), c(0.3, 0.2)]
        ];
        let ts = krein_adjoint(&ks, &t).unwrap();
        let u = array![c(0.1, 0.9), cr(-0.4), c(0.7, 0.2)];
        let v = array![cr(1.0), c(0.3, -0.6), c(-0.2, 0.5)];
        let lhs = krein_form(&ks, &ts.dot(&u), &v).unwrap();
        let rhs = krein_form(&ks, &u, &t.dot(&v)).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
        let tss = krein_adjoint(&ks, &ts).unwrap();
        assert!(op_norm_2(&(&tss - &t)) < 1e-12);
    }

    #[test]
    fn selfadjoint_checks() {
        let ks = jc2();
        let t = array![[cr(0.0), cr(1.0)], [cr(1.0), cr(0.0)]];
        assert!(is_krein_selfadjoint(&ks, &t, 1e-10));
        let ks_h = KreinStructure::hilbert(2);
        let skew = array![[cr(0.0), cr(1.0)], [cr(-1.0), cr(0.0)]];
        assert!(!is_krein_selfadjoint(&ks_h, &skew, 1e-10));
    }

    #[test]
    fn identity_positive_only_in_hilbert_case() {
        let ks_h = KreinStructure::hilbert(2);
        assert!(is_krein_positive(&ks_h, &identity(2), 1e-10).unwrap());
        let ks = jc2();
        assert!(!is_krein_positive(&ks, &identity(2), 1e-10).unwrap());
    }

    #[test]
    fn block_positivity_examples() {
        let i = identity(2);
        let z = zeros(2, 2);
        assert!(block_positivity_test(&z, &i, &i, 1e-10).unwrap());
        assert!(block_positivity_test(&i, &i, &i, 1e-6).unwrap());
        let two = i.mapv(|x| x * cr(2.0));
        assert!(!block_positivity_test(&two, &i, &i, 1e-6).unwrap());
    }

    #[test]
    fn block_positivity_matches_assembled_form() {
        // S = [[a, b], [c, a^H]] positive under the charge form iff
        // Herm(Jc S) = [[c, a^H], [a, b]] is PSD.
        let a = array![[c(0.3, 0.1)]];
        let b = array![[cr(1.0)]];
        let cc = array![[cr(0.5)]];
        let s = block2(&a, &b, &cc, &adjoint(&a));
        let ks = jc2();
        let direct = is_krein_positive(&ks, &s, 1e-9).unwrap();
        let blockwise = block_positivity_test(&a, &b, &cc, 1e-9).unwrap();
        assert_eq!(direct, blockwise);
    }

    #[test]
    fn projection_trivial_cases() {
        let ks = KreinStructure::hilbert(2);
        let r0 = positive_projection_check(&ks, &zeros(2, 2), 1e-10).unwrap();
        assert!(r0.is_projection && r0.is_positive && r0.hilbert_constant.is_none());
        let r1 = positive_projection_check(&ks, &identity(2), 1e-10).unwrap();
        assert!(r1.is_projection && r1.is_positive);
        assert!((r1.hilbert_constant.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compressed_norm_trivial() {
        let ks = KreinStructure::hilbert(2);
        let i = identity(2);
        assert!((compressed_norm(&ks, &i, &i).unwrap() - 1.0).abs() < 1e-12);
        let s = array![[cr(2.0), cr(0.0)], [cr(0.0), cr(-3.0)]];
        assert!((compressed_norm(&ks, &i, &s).unwrap() - 3.0).abs() < 1e-12);
    }
}
