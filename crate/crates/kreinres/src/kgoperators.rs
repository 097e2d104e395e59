//! Quadratic pencils and Klein-Gordon block operators: assembly, resolvents,
//! spectra, charge/energy forms, weighted norms, and propagators.

use crate::error::{Error, Result};
use crate::kreinspace::KreinStructure;
use crate::numkernel::*;

/// Pencil data (h, k) with the derived h₀ = h + k², ε = h₀^{1/2} and the
/// weights ⟨ε⟩^σ computed from the stored eigendecomposition of h₀.
#[derive(Debug, Clone)]
pub struct PencilModel {
    n: usize,
    h: CMatrix,
    k: CMatrix,
    h0: CMatrix,
    h0_eig: HermEig,
}

impl PencilModel {
    pub fn new(h: CMatrix, k: CMatrix) -> Result<Self> {
        require_hermitian(&h, "PencilModel h")?;
        require_hermitian(&k, "PencilModel k")?;
        if h.nrows() != k.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "PencilModel: h is {0}x{0}, k is {1}x{1}",
                h.nrows(),
                k.nrows()
            )));
        }
        let h0 = herm_part(&(&h + &k.dot(&k)));
        let h0_eig = hermitian_eig(&h0)?;
        Ok(Self {
            n: h.nrows(),
            h,
            k,
            h0,
            h0_eig,
        })
    }

    /// Free model: k = 0, h = h₀.
    pub fn free(h0: CMatrix) -> Result<Self> {
        let n = h0.nrows();
        Self::new(h0, zeros(n, n))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> &CMatrix {
        &self.h
    }

    pub fn k(&self) -> &CMatrix {
        &self.k
    }

    pub fn h0(&self) -> &CMatrix {
        &self.h0
    }

    pub fn h0_eig(&self) -> &HermEig {
        &self.h0_eig
    }

    pub fn is_free(&self) -> bool {
        max_abs(&self.k) <= 1e-14 * max_abs(&self.h).max(1.0)
    }

    fn min_h0(&self) -> f64 {
        self.h0_eig.values.first().copied().unwrap_or(0.0)
    }

    /// ε = h₀^{1/2}, with eigenvalues in [−eig_tol, 0) clamped to 0.
    pub fn eps(&self) -> Result<CMatrix> {
        let min = self.min_h0();
        if min < -EIG_TOL {
            return Err(Error::EpsUndefined(min));
        }
        matfun_from_eig(&self.h0_eig, |x| cr(x.max(0.0).sqrt()))
    }

    /// f(ε) for scalar f, via the h₀ eigendecomposition.
    pub fn eps_fun(&self, f: impl Fn(f64) -> C64) -> Result<CMatrix> {
        let min = self.min_h0();
        if min < -EIG_TOL {
            return Err(Error::EpsUndefined(min));
        }
        matfun_from_eig(&self.h0_eig, |x| f(x.max(0.0).sqrt()))
    }

    /// ⟨ε⟩^σ = (1 + h₀)^{σ/2} with clamped eigenvalues.
    pub fn weight(&self, sigma: f64) -> Result<CMatrix> {
        self.eps_fun(|e| cr((1.0 + e * e).powf(sigma / 2.0)))
    }

    /// Smallest eigenvalue of ε (after clamping).
    pub fn eps_min(&self) -> Result<f64> {
        let min = self.min_h0();
        if min < -EIG_TOL {
            return Err(Error::EpsUndefined(min));
        }
        Ok(min.max(0.0).sqrt())
    }
}

/// Charge-space Krein structure of order θ with weight Wθ = diag(⟨ε⟩^{2θ}, ⟨ε⟩^{−2θ}).
#[derive(Debug, Clone)]
pub struct ChargeStructure {
    pub jc: KreinStructure,
    pub theta: f64,
    pub wtheta: CMatrix,
    pub wtheta_inv: CMatrix,
}

pub fn charge_structure(m: &PencilModel, theta: f64) -> Result<ChargeStructure> {
    let wp = m.weight(2.0 * theta)?;
    let wm = m.weight(-2.0 * theta)?;
    let n = m.n();
    let z = zeros(n, n);
    Ok(ChargeStructure {
        jc: KreinStructure::charge(n),
        theta,
        wtheta: block2(&wp, &z, &z, &wm),
        wtheta_inv: block2(&wm, &z, &z, &wp),
    })
}

/// Energy-space norm weight WE = diag(⟨ε⟩, I).
#[derive(Debug, Clone)]
pub struct EnergyStructure {
    pub we: CMatrix,
    pub we_inv: CMatrix,
}

pub fn energy_structure(m: &PencilModel) -> Result<EnergyStructure> {
    let w = m.weight(1.0)?;
    let wi = m.weight(-1.0)?;
    let n = m.n();
    let z = zeros(n, n);
    let i = identity(n);
    Ok(EnergyStructure {
        we: block2(&w, &z, &z, &i),
        we_inv: block2(&wi, &z, &z, &i),
    })
}

/// p(z) = h + z(2k − z) = h₀ − (k − z)².
pub fn pencil_eval(m: &PencilModel, z: C64) -> CMatrix {
    let n = m.n();
    let zi = identity(n).mapv(|x| x * z);
    &m.h + &(&m.k.mapv(|x| x * (2.0 * z)) - &zi.mapv(|x| x * z))
}

/// K̂ = [[k, I], [h₀, k]] on the 2n-dimensional charge space.
pub fn assemble_k(m: &PencilModel) -> CMatrix {
    let n = m.n();
    block2(&m.k, &identity(n), &m.h0, &m.k)
}

/// Ĥ = [[0, I], [h, 2k]] (energy-space generator).
pub fn assemble_h_energy(m: &PencilModel) -> CMatrix {
    let n = m.n();
    block2(&zeros(n, n), &identity(n), &m.h, &m.k.mapv(|x| x * cr(2.0)))
}

/// R(z) = (K̂ − z)⁻¹ via the pencil inverse:
/// [[p⁻¹(z−k), p⁻¹], [I + (z−k)p⁻¹(z−k), (z−k)p⁻¹]].
pub fn resolvent_k(m: &PencilModel, z: C64) -> Result<CMatrix> {
    let p = pencil_eval(m, z);
    let np = op_norm_2(&p);
    let smin = svd_values(&p).last().copied().unwrap_or(0.0);
    // negated form so a NaN singular value also counts as a spectrum hit
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(smin > PIVOT_FLOOR * np.max(1e-300)) {
        return Err(Error::SpectrumHit { re: z.re, im: z.im });
    }
    let n = m.n();
    let zk = identity(n).mapv(|x| x * z) - &m.k;
    let pinv = solve_linear(&p, &identity(n)).map_err(|_| Error::SpectrumHit { re: z.re, im: z.im })?;
    let r11 = pinv.dot(&zk);
    let r21 = identity(n) + &zk.dot(&r11);
    let r22 = zk.dot(&pinv);
    Ok(block2(&r11, &pinv, &r21, &r22))
}

/// Free resolvent R(z) = (K₀ + z)(h₀ − z²)⁻¹ for k = 0.
pub fn resolvent_k0(m: &PencilModel, z: C64) -> Result<CMatrix> {
    if !m.is_free() {
        return Err(Error::DimensionMismatch("resolvent_k0 needs k = 0".into()));
    }
    let n = m.n();
    let shifted = &m.h0 - &identity(n).mapv(|x| x * (z * z));
    let np = op_norm_2(&shifted);
    let smin = svd_values(&shifted).last().copied().unwrap_or(0.0);
    // negated form so a NaN singular value also counts as a spectrum hit
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(smin > PIVOT_FLOOR * np.max(1e-300)) {
        return Err(Error::SpectrumHit { re: z.re, im: z.im });
    }
    let rh = solve_linear(&shifted, &identity(n))
        .map_err(|_| Error::SpectrumHit { re: z.re, im: z.im })?;
    let zrh = rh.mapv(|x| x * z);
    Ok(block2(&zrh, &rh, &m.h0.dot(&rh), &zrh))
}

/// Eigenvalues of K̂.
pub fn spectrum_k(m: &PencilModel) -> Result<GenEig> {
    general_eig(&assemble_k(m))
}

/// Charge form ⟨u|v⟩ = (u₀|v₁) + (u₁|v₀) on 2n vectors.
pub fn charge_form(u: &CVector, v: &CVector) -> Result<C64> {
    if u.len() != v.len() || !u.len().is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!(
            "charge_form: lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let n = u.len() / 2;
    let mut acc = cr(0.0);
    for i in 0..n {
        acc += u[i].conj() * v[n + i] + u[n + i].conj() * v[i];
    }
    Ok(acc)
}

/// Energy form (u₀|h v₀) + (k u₀ + u₁ | k v₀ + v₁).
pub fn energy_form(m: &PencilModel, u: &CVector, v: &CVector) -> Result<C64> {
    if u.len() != 2 * m.n() || v.len() != 2 * m.n() {
        return Err(Error::DimensionMismatch(format!(
            "energy_form: model dim {}, vectors {} and {}",
            2 * m.n(),
            u.len(),
            v.len()
        )));
    }
    let n = m.n();
    let u0 = u.slice(ndarray::s![..n]).to_owned();
    let u1 = u.slice(ndarray::s![n..]).to_owned();
    let v0 = v.slice(ndarray::s![..n]).to_owned();
    let v1 = v.slice(ndarray::s![n..]).to_owned();
    let hv0 = m.h.dot(&v0);
    let ku0 = m.k.dot(&u0) + &u1;
    let kv0 = m.k.dot(&v0) + &v1;
    let dot = |a: &CVector, b: &CVector| -> C64 {
        a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
    };
    Ok(dot(&u0, &hv0) + dot(&ku0, &kv0))
}

/// ‖T‖ in the K_θ operator norm: ‖Wθ T Wθ⁻¹‖₂.
pub fn ktheta_opnorm(m: &PencilModel, theta: f64, t: &CMatrix) -> Result<f64> {
    let cs = charge_structure(m, theta)?;
    Ok(op_norm_2(&cs.wtheta.dot(t).dot(&cs.wtheta_inv)))
}

/// e^{itK̂} by scaling-and-squaring matrix exponential.
pub fn propagator(m: &PencilModel, t: f64) -> CMatrix {
    let k = assemble_k(m);
    expm(&k.mapv(|x| x * c(0.0, t)))
}

/// Closed-form free propagator [[cos(tε), iε⁻¹sin(tε)], [iε sin(tε), cos(tε)]].
pub fn propagator_free(m: &PencilModel, t: f64) -> Result<CMatrix> {
    if !m.is_free() {
        return Err(Error::DimensionMismatch("propagator_free needs k = 0".into()));
    }
    let emin = m.eps_min()?;
    if emin <= EIG_TOL.sqrt() {
        return Err(Error::EpsSingular(emin));
    }
    let cos = m.eps_fun(|e| cr((t * e).cos()))?;
    let isin_over = m.eps_fun(|e| c(0.0, (t * e).sin() / e))?;
    let isin_times = m.eps_fun(|e| c(0.0, (t * e).sin() * e))?;
    Ok(block2(&cos, &isin_over, &isin_times, &cos))
}
