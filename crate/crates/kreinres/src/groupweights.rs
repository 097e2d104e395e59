//! C₀-group machinery: Bessel-potential kernels, group-integral weights
//! ⟨εA⟩^{±s}, regularity norms, truncated exponentials, Taylor commutator
//! expansions and their ε-scaling estimates.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::kreinspace::{krein_adjoint, KreinStructure};
use crate::numkernel::*;
use crate::quad::{gauss_legendre_on, linear_fit};
use crate::speccalc::SymbolFn;

/// G_σ(t): Fourier transform of ⟨τ⟩^{−σ}, evaluated by adaptive quadrature
/// of the subordination integral in r = e^u coordinates.
pub fn bessel_g(sigma: f64, t: f64) -> Result<f64> {
    assert!(sigma > 0.0, "bessel_g needs sigma > 0");
    if t == 0.0 {
        return Err(Error::DomainError("bessel_g undefined at t = 0".into()));
    }
    let t2 = t * t;
    let log_integrand = |u: f64| -> f64 { -t2 * (-u).exp() - u.exp() / 4.0 + 0.5 * (sigma - 1.0) * u };
    // locate the peak by coarse scan, then bracket where the log drops by 45
    let mut peak_u = 0.0;
    let mut peak_v = f64::NEG_INFINITY;
    let mut u = -80.0;
    while u <= 20.0 {
        let v = log_integrand(u);
        if v > peak_v {
            peak_v = v;
            peak_u = u;
        }
        u += 0.25;
    }
    let mut lo = peak_u;
    while log_integrand(lo) > peak_v - 45.0 && lo > -700.0 {
        lo -= 0.5;
    }
    let mut hi = peak_u;
    while log_integrand(hi) > peak_v - 45.0 && hi < 700.0 {
        hi += 0.5;
    }
    let norm = 1.0 / (2f64.powf(sigma) * std::f64::consts::PI.sqrt() * gamma(sigma / 2.0));
    let mut prev = f64::NAN;
    let mut panels = 8usize;
    for _ in 0..12 {
        let mut acc = 0.0;
        for p in 0..panels {
            let pa = lo + (hi - lo) * p as f64 / panels as f64;
            let pb = lo + (hi - lo) * (p + 1) as f64 / panels as f64;
            let (xs, ws) = gauss_legendre_on(12, pa, pb);
            acc += xs
                .iter()
                .zip(&ws)
                .map(|(&x, &w)| w * (log_integrand(x) - peak_v).exp())
                .sum::<f64>();
        }
        let val = acc * peak_v.exp() * norm;
        if prev.is_finite() && (val - prev).abs() <= 1e-9 * val.abs().max(1e-300) {
            return Ok(val);
        }
        prev = val;
        panels *= 2;
    }
    Err(Error::QuadratureBudgetExceeded("bessel_g"))
}

/// Quadrature table for t ↦ G_σ(t) on (0, t_max]: geometric panels toward the
/// origin, unit panels in the tail.
#[derive(Debug, Clone)]
pub struct BesselKernel {
    pub sigma: f64,
    /// positive half-line quadrature: (node, weight, G_σ(node))
    pub samples: Vec<(f64, f64, f64)>,
    pub t_max: f64,
}

impl BesselKernel {
    pub fn build(sigma: f64, t_max: f64) -> Result<Self> {
        let mut samples = Vec::new();
        // (0, 1]: geometric panels 2^{−j−1}..2^{−j}
        for j in 0..44 {
            let hi = 2f64.powi(-j);
            let lo = hi * 0.5;
            let (xs, ws) = gauss_legendre_on(8, lo, hi);
            for (&x, &w) in xs.iter().zip(&ws) {
                samples.push((x, w, bessel_g(sigma, x)?));
            }
        }
        // [1, t_max]: unit panels
        let mut lo = 1.0;
        while lo < t_max {
            let hi = (lo + 1.0).min(t_max);
            let (xs, ws) = gauss_legendre_on(8, lo, hi);
            for (&x, &w) in xs.iter().zip(&ws) {
                samples.push((x, w, bessel_g(sigma, x)?));
            }
            lo = hi;
        }
        Ok(Self {
            sigma,
            samples,
            t_max,
        })
    }

    /// ∫_ℝ G_σ(t) dt, using evenness.
    pub fn integral(&self) -> f64 {
        2.0 * self.samples.iter().map(|(_, w, g)| w * g).sum::<f64>()
    }

    /// ∫_ℝ e^{iτt} G_σ(t) dt = 2 ∫₀^∞ cos(τt) G_σ(t) dt.
    pub fn fourier(&self, tau: f64) -> f64 {
        2.0 * self
            .samples
            .iter()
            .map(|(t, w, g)| w * g * (tau * t).cos())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct BesselDerivativeReport {
    pub c_fit: f64,
    pub rel_residual: f64,
    pub std_over_mean: f64,
}

/// Fits C_σ in G_σ'(t) = C_σ t G_{σ−2}(t) from finite differences of G_σ.
pub fn bessel_derivative_relation_check(sigma: f64, tgrid: &[f64]) -> Result<BesselDerivativeReport> {
    assert!(sigma > 2.0, "relation needs sigma > 2");
    let h = 1e-3;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut cs = Vec::new();
    for &t in tgrid {
        let d = (bessel_g(sigma, t + h)? - bessel_g(sigma, t - h)?) / (2.0 * h);
        let rhs = t * bessel_g(sigma - 2.0, t)?;
        xs.push(rhs);
        ys.push(d);
        cs.push(d / rhs);
    }
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let den: f64 = xs.iter().map(|x| x * x).sum();
    let c_fit = num / den;
    let rel_residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - c_fit * x).abs())
        .fold(0.0, f64::max)
        / ys.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-300);
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    let var = cs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / cs.len() as f64;
    Ok(BesselDerivativeReport {
        c_fit,
        rel_residual,
        std_over_mean: var.sqrt() / mean.abs(),
    })
}

#[derive(Clone)]
enum GroupRep {
    Herm(HermEig),
    Diag {
        v: CMatrix,
        vinv: CMatrix,
        vals: Vec<C64>,
    },
    Dense,
}

/// Generator data for the group W_t = e^{ita}, with fitted growth constants
/// ‖W_t‖ ≤ M e^{γ|t|} on a probe grid.
#[derive(Clone)]
pub struct GroupData {
    pub a: CMatrix,
    pub m: f64,
    pub gamma: f64,
    rep: GroupRep,
}

impl std::fmt::Debug for GroupData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GroupData")
            .field("dim", &self.a.nrows())
            .field("m", &self.m)
            .field("gamma", &self.gamma)
            .finish()
    }
}

impl GroupData {
    /// Fit (M, γ) by log-linear regression of ‖e^{ita}‖ on t ∈ [−10, 10].
    pub fn fit(a: CMatrix) -> Result<Self> {
        require_square(&a, "GroupData a")?;
        let rep = if herm_defect(&a) <= HERM_TOL {
            GroupRep::Herm(hermitian_eig(&a)?)
        } else {
            let eig = general_eig(&a)?;
            let v = eig.vectors.clone().unwrap();
            match solve_linear(&v, &identity(a.nrows())) {
                Ok(vinv) if op_norm_2(&v) * op_norm_2(&vinv) < 1e10 => GroupRep::Diag {
                    v,
                    vinv,
                    vals: eig.values.clone(),
                },
                _ => GroupRep::Dense,
            }
        };
        let mut g = Self {
            a,
            m: 1.0,
            gamma: 0.0,
            rep,
        };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 1..=20 {
            let t = i as f64 * 0.5;
            let n = op_norm_2(&g.element(t)).max(op_norm_2(&g.element(-t)));
            xs.push(t);
            ys.push(n.max(1e-300).ln());
        }
        let (slope, _, _) = linear_fit(&xs, &ys);
        let gamma = slope.max(0.0);
        let mut m: f64 = 1.0;
        for (x, y) in xs.iter().zip(&ys) {
            m = m.max((y - gamma * x).exp());
        }
        g.gamma = gamma;
        g.m = m * 1.01;
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        matches!(self.rep, GroupRep::Herm(_))
    }

    /// W_t = e^{ita}.
    pub fn element(&self, t: f64) -> CMatrix {
        match &self.rep {
            GroupRep::Herm(e) => e.apply(|l| c(0.0, t * l).exp()),
            GroupRep::Diag { v, vinv, vals } => {
                let n = vals.len();
                let mut d = zeros(n, n);
                for (i, &l) in vals.iter().enumerate() {
                    d[[i, i]] = (c(0.0, t) * l).exp();
                }
                v.dot(&d).dot(vinv)
            }
            GroupRep::Dense => expm(&self.a.mapv(|x| x * c(0.0, t))),
        }
    }
}

/// ⟨εa⟩^{−σ} = ∫ e^{iεta} G_σ(t) dt by kernel quadrature.
pub fn weight_from_group(g: &GroupData, sigma: f64, eps: f64) -> Result<CMatrix> {
    let prod = 2.0 * eps * g.gamma;
    if prod >= 1.0 {
        return Err(Error::GrowthViolation(prod));
    }
    // truncate where e^{γε t}·e^{−t/2} falls below 1e−12
    let margin = 0.5 - eps * g.gamma;
    let t_max = (30.0 / margin).min(2000.0);
    let kernel = BesselKernel::build(sigma, t_max)?;
    let n = g.dim();
    let mut acc = zeros(n, n);
    for &(t, w, gv) in &kernel.samples {
        let sum = g.element(eps * t) + &g.element(-eps * t);
        acc += &sum.mapv(|x| x * cr(w * gv));
    }
    Ok(acc)
}

/// ⟨εa⟩^{s} for s ∈ (0,1): (1 + (εa)²)·⟨εa⟩^{−(2−s)}, the group-integral form
/// of the kernel G_σ − G_σ'' with σ = 2−s integrated by parts.
pub fn weight_positive_power(g: &GroupData, s: f64, eps: f64) -> Result<CMatrix> {
    assert!(s > 0.0 && s < 1.0, "weight_positive_power needs s in (0,1)");
    let w = weight_from_group(g, 2.0 - s, eps)?;
    let ea = g.a.mapv(|x| x * cr(eps));
    Ok(&w + &ea.dot(&ea).dot(&w))
}

/// ‖f‖_{M_γ} = ∫ e^{γ|t|} |f̂(t)| dt with tail divergence detection.
pub fn m_gamma_norm(fhat: impl Fn(f64) -> C64, gamma: f64) -> Result<f64> {
    let mut total = 0.0;
    // (0, 1]: geometric panels for the possible singularity at 0
    for j in 0..44 {
        let hi = 2f64.powi(-j);
        let (xs, ws) = gauss_legendre_on(8, hi * 0.5, hi);
        total += xs
            .iter()
            .zip(&ws)
            .map(|(&x, &w)| w * (gamma * x).exp() * (fhat(x).norm() + fhat(-x).norm()))
            .sum::<f64>();
    }
    // unit panels with growth detection
    let mut prev_panel = f64::INFINITY;
    let mut grow_count = 0;
    for j in 0..400 {
        let lo = 1.0 + j as f64;
        let (xs, ws) = gauss_legendre_on(8, lo, lo + 1.0);
        let panel: f64 = xs
            .iter()
            .zip(&ws)
            .map(|(&x, &w)| w * (gamma * x).exp() * (fhat(x).norm() + fhat(-x).norm()))
            .sum();
        if panel >= prev_panel && panel > 1e-14 {
            grow_count += 1;
            if grow_count >= 5 {
                return Err(Error::Divergent(lo));
            }
        } else {
            grow_count = 0;
        }
        total += panel;
        if panel < 1e-13 * total.max(1e-300) {
            return Ok(total);
        }
        prev_panel = panel;
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct HolderReport {
    pub c_values: Vec<f64>,
    pub c_max: f64,
    pub c_median: f64,
    pub stable: bool,
}

/// ‖⟨A⟩^s u‖ ≤ C(‖u‖ + sup_{|x|<1}|x|^{−m}‖(W(x)−1)u‖): fitted C per sample.
pub fn holder_estimate_check(
    g: &GroupData,
    s: f64,
    m_exp: f64,
    us: &[CVector],
) -> Result<HolderReport> {
    assert!(0.0 < s && s < m_exp && m_exp < 1.0, "need 0 < s < m < 1");
    let bracket = if g.is_hermitian() {
        matfun_hermitian(&g.a, |x| cr((1.0 + x * x).powf(s / 2.0)))?
    } else {
        weight_positive_power(g, s, 1.0)?
    };
    let n = g.dim();
    let id = identity(n);
    let mut c_values = Vec::new();
    for u in us {
        let norm_u = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let lhs = {
            let v = bracket.dot(u);
            v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
        };
        let mut sup = 0.0f64;
        for k in 1..=40 {
            let x = k as f64 / 40.0;
            for sign in [1.0, -1.0] {
                let w = g.element(sign * x) - &id;
                let wu = w.dot(u);
                let nv = wu.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                sup = sup.max(nv / x.powf(m_exp));
            }
        }
        c_values.push(lhs / (norm_u + sup).max(1e-300));
    }
    let mut sorted = c_values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let c_median = sorted[sorted.len() / 2];
    let c_max = *sorted.last().unwrap();
    Ok(HolderReport {
        c_values,
        c_max,
        c_median,
        stable: c_max <= 10.0 * c_median,
    })
}

/// E_k(τ) = (iτ)^{−k}(e^{iτ} − Σ_{j<k}(iτ)^j/j!), with the entire-series form
/// near the origin.
pub fn truncated_exp(k: usize, tau: C64) -> C64 {
    let it = c(0.0, 1.0) * tau;
    if tau.norm() < 1.0 {
        // Σ_j (iτ)^j / (j+k)!
        let mut acc = cr(0.0);
        let mut term = cr(1.0 / (1..=k).map(|i| i as f64).product::<f64>());
        for j in 0..60 {
            acc += term;
            term = term * it / cr((j + k + 1) as f64);
            if term.norm() < 1e-18 {
                break;
            }
        }
        acc
    } else {
        let mut partial = cr(0.0);
        let mut term = cr(1.0);
        for j in 0..k {
            partial += term;
            term = term * it / cr((j + 1) as f64);
        }
        (it.exp() - partial) / it.powi(k as i32)
    }
}

#[derive(Debug, Clone)]
pub struct TaylorExpansionReport {
    pub lhs: CMatrix,
    pub partial_sum: CMatrix,
    pub remainder: CMatrix,
    pub residual: f64,
}

fn fourier_integral(fhat: &dyn Fn(f64) -> C64, x: f64, t_max: f64) -> C64 {
    let mut acc = cr(0.0);
    for j in 0..44 {
        let hi = 2f64.powi(-j);
        let (xs, ws) = gauss_legendre_on(8, hi * 0.5, hi);
        for (&t, &w) in xs.iter().zip(&ws) {
            acc += (c(0.0, x * t).exp() * fhat(t) + c(0.0, -x * t).exp() * fhat(-t)) * cr(w);
        }
    }
    let mut lo = 1.0;
    while lo < t_max {
        let (xs, ws) = gauss_legendre_on(8, lo, lo + 1.0);
        for (&t, &w) in xs.iter().zip(&ws) {
            acc += (c(0.0, x * t).exp() * fhat(t) + c(0.0, -x * t).exp() * fhat(-t)) * cr(w);
        }
        lo += 1.0;
    }
    acc
}

/// S f(a) = Σ_{j<k} ad^j(f^{(j)}(a) S)/j! + ad^k(ℛ_k(f^{(k)})(S)) with the
/// remainder ℛ_k(g)(S) = ∫ e^{ita}·E_k(t·ad)(S)·ĝ(t) dt computed by double
/// quadrature; ĝ(t) = (it)^k f̂(t).
pub fn taylor_commutator_expansion(
    s: &CMatrix,
    a: &CMatrix,
    f: &SymbolFn,
    fhat: impl Fn(f64) -> C64,
    k: usize,
) -> Result<TaylorExpansionReport> {
    assert!(k >= 1);
    require_hermitian(a, "taylor_commutator_expansion a")?;
    if f.d_max() < k {
        return Err(Error::MissingDerivative(k));
    }
    // Fourier consistency probe
    let t_max = 80.0;
    let mut worst = 0.0f64;
    for &x in &[-0.7, 0.3, 1.1] {
        let err = (fourier_integral(&fhat, x, t_max) - f.eval(x)).norm();
        worst = worst.max(err);
    }
    if worst > 1e-5 {
        return Err(Error::FourierMismatch(worst));
    }
    let eig = hermitian_eig(a)?;
    let v = &eig.vectors;
    let vh = adjoint(v);
    let s_tilde = vh.dot(s).dot(v); // S in the eigenbasis of a
    let n = a.nrows();
    let ad = |t: &CMatrix| -> CMatrix { t.dot(a) - &a.dot(t) };
    let lhs = s.dot(&eig.apply(|x| f.eval(x)));
    // partial sum Σ_{j<k} ad^j(f^{(j)}(a)·S)/j!
    let mut partial = zeros(n, n);
    let mut fact = 1.0;
    for j in 0..k {
        if j > 0 {
            fact *= j as f64;
        }
        let fj = eig.apply(|x| f.deriv(j, x).unwrap());
        let mut term = fj.dot(s);
        for _ in 0..j {
            term = ad(&term);
        }
        partial += &term.mapv(|x| x / cr(fact));
    }
    // remainder core: double quadrature over t and θ in the eigenbasis,
    // where e^{iθt·ad}(S) has entries e^{iθt(λ_q − λ_p)} S̃_{pq}
    let fact_k1: f64 = (1..k).map(|i| i as f64).product();
    let (thetas, theta_ws) = gauss_legendre_on(16, 0.0, 1.0);
    let ghat = |t: f64| -> C64 { c(0.0, t).powi(k as i32) * fhat(t) };
    let mut core_tilde = zeros(n, n);
    let mut accumulate = |t: f64, w: f64| {
        let g2 = ghat(t);
        if g2.norm() < 1e-300 {
            return;
        }
        // inner θ-integral of E_k(t·ad)(S̃), entrywise
        let mut inner = zeros(n, n);
        for (&th, &tw) in thetas.iter().zip(&theta_ws) {
            let wt = tw * (1.0 - th).powi(k as i32 - 1) / fact_k1;
            for p in 0..n {
                for q in 0..n {
                    let phase = c(0.0, th * t * (eig.values[q] - eig.values[p])).exp();
                    inner[[p, q]] += s_tilde[[p, q]] * phase * cr(wt);
                }
            }
        }
        // multiply by e^{ita} (diagonal in this basis) and the t-weight
        for p in 0..n {
            let eit = c(0.0, t * eig.values[p]).exp();
            for q in 0..n {
                core_tilde[[p, q]] += eit * inner[[p, q]] * g2 * cr(w);
            }
        }
    };
    for j in 0..44 {
        let hi = 2f64.powi(-j);
        let (xs, ws) = gauss_legendre_on(8, hi * 0.5, hi);
        for (&t, &w) in xs.iter().zip(&ws) {
            accumulate(t, w);
            accumulate(-t, w);
        }
    }
    let mut lo = 1.0;
    while lo < t_max {
        let (xs, ws) = gauss_legendre_on(8, lo, lo + 1.0);
        for (&t, &w) in xs.iter().zip(&ws) {
            accumulate(t, w);
            accumulate(-t, w);
        }
        lo += 1.0;
    }
    let core = v.dot(&core_tilde).dot(&vh);
    let mut remainder = core;
    for _ in 0..k {
        remainder = ad(&remainder);
    }
    let scale = op_norm_2(&lhs).max(1.0);
    let residual = op_norm_2(&(&lhs - &(&partial + &remainder))) / scale;
    Ok(TaylorExpansionReport {
        lhs,
        partial_sum: partial,
        remainder,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingKind {
    /// ⟨εA⟩^{s}[⟨εA⟩^{−s}, S]⟨εA⟩^{s} = O(ε^β)
    Est1,
    /// ⟨εA⟩^{s}[S, if(εA)]⟨εA⟩^{s} − ε[S, iA] = O(ε^{1+α})
    Estime,
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub slope: f64,
    pub r2: f64,
    pub degenerate: bool,
    pub pass: bool,
}

/// Antiderivative f(τ) = ∫₀^τ ⟨u⟩^{−2s} du by Gauss-Legendre quadrature.
fn nice_symbol_eval(s: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let (xs, ws) = gauss_legendre_on(64, 0.0, x.abs());
    let v: f64 = xs
        .iter()
        .zip(&ws)
        .map(|(&u, &w)| w * (1.0 + u * u).powf(-s))
        .sum();
    v * x.signum()
}

/// Fits the ε-slope of the commutator estimates on a geometric ε-grid.
pub fn est_scaling_check(
    kind: ScalingKind,
    s_mat: &CMatrix,
    a: &CMatrix,
    s: f64,
    target: f64,
    eps_grid: &[f64],
) -> Result<ScalingReport> {
    require_hermitian(a, "est_scaling_check a")?;
    let eig = hermitian_eig(a)?;
    let scale = op_norm_2(s_mat).max(1e-300);
    let sprime = (s_mat.dot(a) - &a.dot(s_mat)).mapv(|x| x * c(0.0, 1.0)); // [S, iA]
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    let mut all_tiny = true;
    for &eps in eps_grid {
        let wp = eig.apply(|x| cr((1.0 + (eps * x).powi(2)).powf(s / 2.0)));
        let wm = eig.apply(|x| cr((1.0 + (eps * x).powi(2)).powf(-s / 2.0)));
        let norm = match kind {
            ScalingKind::Est1 => {
                let comm = wm.dot(s_mat) - &s_mat.dot(&wm);
                op_norm_2(&wp.dot(&comm).dot(&wp))
            }
            ScalingKind::Estime => {
                let f_eps = eig.apply(|x| cr(nice_symbol_eval(s, eps * x)));
                let comm = (s_mat.dot(&f_eps) - &f_eps.dot(s_mat)).mapv(|x| x * c(0.0, 1.0));
                let weighted = wp.dot(&comm).dot(&wp);
                op_norm_2(&(&weighted - &sprime.mapv(|x| x * cr(eps))))
            }
        };
        if norm > 1e-14 * scale {
            all_tiny = false;
        }
        lx.push(eps.ln());
        ly.push(norm.max(1e-300).ln());
    }
    if all_tiny {
        return Ok(ScalingReport {
            slope: f64::INFINITY,
            r2: 1.0,
            degenerate: true,
            pass: true,
        });
    }
    let (slope, _, r2) = linear_fit(&lx, &ly);
    if r2 < 0.9 {
        return Err(Error::FitUnstable(r2));
    }
    Ok(ScalingReport {
        slope,
        r2,
        degenerate: false,
        pass: slope >= target - 0.15,
    })
}

#[derive(Debug, Clone)]
pub struct KreinC1Report {
    pub b: CMatrix,
    pub residual: f64,
    pub pass: bool,
}

/// A* = A + B: compares B from the Krein adjoint with the numerical
/// derivative i d/dt [J⁻¹ e^{−ita^H} J e^{ita}] at t = 0.
pub fn krein_c1_check(ks: &KreinStructure, g: &GroupData) -> Result<KreinC1Report> {
    let b1 = krein_adjoint(ks, &g.a)? - &g.a;
    let ah = adjoint(&g.a);
    let phi = |t: f64| -> CMatrix {
        let left = expm(&ah.mapv(|x| x * c(0.0, -t)));
        ks.gram_inv().dot(&left).dot(ks.gram()).dot(&g.element(t))
    };
    let h = 1e-4;
    let d1 = (phi(h) - &phi(-h)).mapv(|x| x / cr(2.0 * h));
    let d2 = (phi(h / 2.0) - &phi(-h / 2.0)).mapv(|x| x / cr(h));
    // Richardson extrapolation of the central difference
    let deriv = (d2.mapv(|x| x * cr(4.0)) - &d1).mapv(|x| x / cr(3.0));
    let b2 = deriv.mapv(|x| x * c(0.0, 1.0));
    let residual = op_norm_2(&(&b1 - &b2));
    let pass = residual <= 1e-5 * (1.0 + op_norm_2(&b1));
    Ok(KreinC1Report {
        b: b1,
        residual,
        pass,
    })
}

/// f(x) = ⟨x⟩^{−1} with derivatives up to order 3; its Fourier transform is G₁.
pub fn bracket_inv_symbol() -> SymbolFn {
    let fns: Vec<std::sync::Arc<dyn Fn(f64) -> C64 + Send + Sync>> = vec![
        std::sync::Arc::new(|x: f64| cr((1.0 + x * x).powf(-0.5))),
        std::sync::Arc::new(|x: f64| cr(-x * (1.0 + x * x).powf(-1.5))),
        std::sync::Arc::new(|x: f64| {
            cr(-(1.0 + x * x).powf(-1.5) + 3.0 * x * x * (1.0 + x * x).powf(-2.5))
        }),
        std::sync::Arc::new(|x: f64| {
            cr(9.0 * x * (1.0 + x * x).powf(-2.5) - 15.0 * x.powi(3) * (1.0 + x * x).powf(-3.5))
        }),
    ];
    SymbolFn::with_derivs("1/<x>", fns).expect("bracket_inv derivative probe")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bessel_normalization() {
        for &sigma in &[0.5, 1.5, 3.0] {
            let kern = BesselKernel::build(sigma, 60.0).unwrap();
            assert!(
                (kern.integral() - 1.0).abs() < 1e-6,
                "sigma {sigma}: integral {}",
                kern.integral()
            );
        }
    }

    #[test]
    fn bessel_fourier_reciprocity() {
        let kern = BesselKernel::build(1.5, 80.0).unwrap();
        for &tau in &[0.0, 1.0, 5.0] {
            let got = kern.fourier(tau);
            let want = (1.0 + tau * tau).powf(-0.75);
            assert!((got - want).abs() < 1e-6, "tau {tau}: {got} vs {want}");
        }
    }

    #[test]
    fn bessel_small_t_and_decay() {
        // |t^k G^{(k)}| ≤ C|t|^{σ−1} for k = 0,1 on (0,1)
        let sigma = 0.5;
        for &t in &[0.05, 0.1, 0.3, 0.7] {
            let g0 = bessel_g(sigma, t).unwrap();
            assert!(g0 > 0.0);
            let bound = 5.0 * t.powf(sigma - 1.0);
            assert!(g0 <= bound, "G at {t}: {g0} vs {bound}");
            let h = t * 1e-3;
            let d = (bessel_g(sigma, t + h).unwrap() - bessel_g(sigma, t - h).unwrap()) / (2.0 * h);
            assert!((t * d).abs() <= 5.0 * t.powf(sigma - 1.0));
        }
        // exponential decay e^{−t/2}
        for &t in &[2.0, 5.0, 10.0] {
            let g = bessel_g(1.5, t).unwrap();
            assert!(g <= 2.0 * (-t / 2.0).exp(), "t {t}: {g}");
        }
    }

    #[test]
    fn bessel_derivative_relation() {
        let grid: Vec<f64> = vec![0.3, 0.5, 0.8, 1.2, 2.0];
        let rep = bessel_derivative_relation_check(3.0, &grid).unwrap();
        assert!(rep.rel_residual <= 1e-4, "residual {}", rep.rel_residual);
        assert!(rep.std_over_mean <= 1e-3, "spread {}", rep.std_over_mean);
        assert!(rep.c_fit < 0.0);
    }

    #[test]
    fn weight_from_group_scalar_oracle() {
        let a = array![[cr(0.0), cr(0.0)], [cr(0.0), cr(10.0)]];
        let g = GroupData::fit(a).unwrap();
        assert!(g.gamma < 1e-6); // unitary group
        let w = weight_from_group(&g, 1.5, 0.1).unwrap();
        assert!((w[[0, 0]].re - 1.0).abs() < 1e-6);
        assert!((w[[1, 1]].re - 2f64.powf(-0.75)).abs() < 1e-6);
        assert!(w[[0, 1]].norm() < 1e-9);
    }

    #[test]
    fn weight_from_group_zero_generator() {
        let g = GroupData::fit(zeros(2, 2)).unwrap();
        let w = weight_from_group(&g, 1.5, 0.3).unwrap();
        assert!(op_norm_2(&(&w - &identity(2))) < 1e-6);
    }

    #[test]
    fn weight_matches_matfun_on_hermitian() {
        let a = herm_part(&array![
            [cr(1.0), c(0.3, 0.4)],
            [c(0.3, -0.4), cr(-2.0)]
        ]);
        let g = GroupData::fit(a.clone()).unwrap();
        let eps = 0.35;
        let w = weight_from_group(&g, 1.5, eps).unwrap();
        let oracle = matfun_hermitian(&a, |x| {
            cr((1.0 + (eps * x).powi(2)).powf(-0.75))
        })
        .unwrap();
        assert!(op_norm_2(&(&w - &oracle)) < 1e-6);
    }

    #[test]
    fn weight_positive_power_oracle() {
        let a = array![[cr(1.0)]];
        let g = GroupData::fit(a).unwrap();
        let w = weight_positive_power(&g, 0.5, 1.0).unwrap();
        assert!((w[[0, 0]].re - 2f64.powf(0.25)).abs() < 1e-5, "{}", w[[0, 0]].re);
        // inverse relation
        let winv = weight_from_group(&g, 0.5, 1.0).unwrap();
        assert!((w[[0, 0]] * winv[[0, 0]] - cr(1.0)).norm() < 1e-5);
    }

    #[test]
    fn m_gamma_examples() {
        // γ < 1/2: finite; equals L¹ norm at γ = 0
        let finite = m_gamma_norm(|t| cr(bessel_g(1.5, t).unwrap_or(0.0)), 0.4).unwrap();
        assert!(finite.is_finite() && finite > 1.0);
        let l1 = m_gamma_norm(|t| cr(bessel_g(1.5, t).unwrap_or(0.0)), 0.0).unwrap();
        assert!((l1 - 1.0).abs() < 1e-5); // G positive with ∫G = 1
        // the kernel actually decays like e^{−|t|} (Bessel-K asymptotics), so
        // the weighted integral stays finite up to γ = 1 and blows up past it
        assert!(m_gamma_norm(|t| cr(bessel_g(1.5, t).unwrap_or(0.0)), 0.6)
            .unwrap()
            .is_finite());
        assert!(matches!(
            m_gamma_norm(|t| cr(bessel_g(1.5, t).unwrap_or(0.0)), 1.2),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn holder_check_cases() {
        // a = 0: LHS = ‖u‖, sup = 0, C = 1
        let g0 = GroupData::fit(zeros(2, 2)).unwrap();
        let us = vec![array![cr(1.0), cr(0.0)], array![c(0.3, 0.4), cr(-1.0)]];
        let rep = holder_estimate_check(&g0, 0.3, 0.6, &us).unwrap();
        for c in &rep.c_values {
            assert!((c - 1.0).abs() < 1e-9);
        }
        // random Hermitian a: stable fitted C
        let a = herm_part(&array![
            [cr(0.7), c(0.2, -0.5)],
            [c(0.2, 0.5), cr(-1.1)]
        ]);
        let g = GroupData::fit(a).unwrap();
        let us: Vec<CVector> = (0..12)
            .map(|i| {
                let x = i as f64;
                array![c((x * 0.7).sin(), (x * 1.3).cos()), c((x * 0.4).cos(), (x * 2.1).sin())]
            })
            .collect();
        let rep = holder_estimate_check(&g, 0.3, 0.6, &us).unwrap();
        assert!(rep.stable, "C spread {} / {}", rep.c_max, rep.c_median);
    }

    #[test]
    fn truncated_exp_identities() {
        // E_k(0) = 1/k!
        for k in 1..5 {
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            assert!((truncated_exp(k, cr(0.0)) - cr(1.0 / fact)).norm() < 1e-15);
        }
        // recursion at τ = 2+i
        let tau = c(2.0, 1.0);
        for k in 1..4 {
            let fact: f64 = (1..=k).map(|i| i as f64).product();
            let lhs = truncated_exp(k, tau);
            let rhs = cr(1.0 / fact) + c(0.0, 1.0) * tau * truncated_exp(k + 1, tau);
            assert!((lhs - rhs).norm() < 1e-12);
        }
        // E_1(π) = 2i/π
        let e1 = truncated_exp(1, cr(std::f64::consts::PI));
        assert!((e1 - c(0.0, 2.0 / std::f64::consts::PI)).norm() < 1e-12);
        // series/direct agreement near the crossover
        for &t in &[0.9, 1.1] {
            let a = truncated_exp(2, cr(t));
            let direct = (c(0.0, t).exp() - cr(1.0) - c(0.0, t)) / c(0.0, t).powi(2);
            assert!((a - direct).norm() < 1e-13);
        }
    }

    #[test]
    fn truncated_exp_integral_form_and_delta() {
        let (xs, ws) = gauss_legendre_on(32, 0.0, 1.0);
        for &tau in &[c(0.4, 0.0), c(2.0, 1.0), c(-3.0, 0.5)] {
            for k in 1..4 {
                let fact: f64 = (1..k).map(|i| i as f64).product();
                let integral: C64 = xs
                    .iter()
                    .zip(&ws)
                    .map(|(&th, &w)| {
                        (c(0.0, 1.0) * tau * cr(th)).exp() * cr(w * (1.0 - th).powi(k as i32 - 1) / fact)
                    })
                    .sum();
                assert!((integral - truncated_exp(k, tau)).norm() < 1e-10);
            }
            // δE_k = E_{k−1} − k E_k where (δE)(τ) = d/dτ(τ E(τ))·… realized
            // as the recursion E_{k−1}(τ) = k E_k(τ) + iτ E_k'(τ) checked via
            // the derivative of the series by finite differences
            for k in 2..4 {
                let h = 1e-6;
                let d = (truncated_exp(k, tau + cr(h)) - truncated_exp(k, tau - cr(h))) / cr(2.0 * h);
                let delta = truncated_exp(k - 1, tau) - truncated_exp(k, tau) * cr(k as f64);
                assert!((tau * d - delta).norm() < 1e-6, "k {k} tau {tau}");
            }
        }
    }

    #[test]
    fn taylor_expansion_commuting_case() {
        let s = array![[cr(2.0), cr(0.0)], [cr(0.0), cr(3.0)]];
        let a = array![[cr(1.0), cr(0.0)], [cr(0.0), cr(-0.5)]];
        let f = bracket_inv_symbol();
        let rep = taylor_commutator_expansion(&s, &a, &f, |t| cr(bessel_g(1.0, t).unwrap_or(0.0)), 2)
            .unwrap();
        assert!(rep.residual < 1e-5, "residual {}", rep.residual);
        // all commutator corrections vanish
        assert!(op_norm_2(&(&rep.lhs - &rep.partial_sum)) < 1e-6);
    }

    #[test]
    fn taylor_expansion_random_3x3() {
        let s = array![
            [c(0.4, 0.1), cr(-0.7), c(0.2, 0.3)],
            [cr(1.1), c(0.0, -0.2), cr(0.5)],
            [c(-0.3, 0.6), cr(0.9), c(0.1, 0.1)]
        ];
        let a = herm_part(&array![
            [cr(0.8), c(0.3, 0.2), cr(-0.1)],
            [c(0.3, -0.2), cr(-0.4), c(0.0, 0.5)],
            [cr(-0.1), c(0.0, -0.5), cr(1.2)]
        ]);
        let f = bracket_inv_symbol();
        for k in [1usize, 2, 3] {
            let rep =
                taylor_commutator_expansion(&s, &a, &f, |t| cr(bessel_g(1.0, t).unwrap_or(0.0)), k)
                    .unwrap();
            assert!(rep.residual < 1e-5, "k {k}: residual {}", rep.residual);
        }
    }

    #[test]
    fn scaling_pauli_fixture() {
        let sx = array![[cr(0.0), cr(1.0)], [cr(1.0), cr(0.0)]];
        let sz = array![[cr(1.0), cr(0.0)], [cr(0.0), cr(-1.0)]];
        // shifted σ_z: the pure σ_z weight ⟨εσ_z⟩ is scalar, which makes the
        // first estimate degenerate, so offset the eigenvalues
        let a1 = array![[cr(1.5), cr(0.0)], [cr(0.0), cr(-0.5)]];
        let eps: Vec<f64> = (0..=12).map(|i| 1e-3 * 10f64.powf(i as f64 / 4.0)).collect();
        let r1 = est_scaling_check(ScalingKind::Est1, &sx, &a1, 0.7, 1.0, &eps).unwrap();
        assert!(r1.pass && !r1.degenerate, "est1 slope {}", r1.slope);
        assert!(r1.slope >= 0.85);
        let r2 = est_scaling_check(ScalingKind::Estime, &sx, &sz, 0.7, 2.0, &eps).unwrap();
        assert!(r2.pass && !r2.degenerate, "estime slope {}", r2.slope);
        assert!(r2.slope >= 1.85);
    }

    #[test]
    fn scaling_degenerate_commuting() {
        let s = array![[cr(2.0), cr(0.0)], [cr(0.0), cr(3.0)]];
        let a = array![[cr(1.0), cr(0.0)], [cr(0.0), cr(-1.0)]];
        let eps: Vec<f64> = (0..=8).map(|i| 1e-3 * 10f64.powf(i as f64 / 3.0)).collect();
        let r = est_scaling_check(ScalingKind::Est1, &s, &a, 0.7, 1.0, &eps).unwrap();
        assert!(r.degenerate && r.pass);
    }

    #[test]
    fn krein_c1_cases() {
        // Hermitian a commuting with J: B = 0
        let ks = KreinStructure::hilbert(2);
        let a = herm_part(&array![
            [cr(0.4), c(0.1, 0.3)],
            [c(0.1, -0.3), cr(-0.9)]
        ]);
        let g = GroupData::fit(a).unwrap();
        let rep = krein_c1_check(&ks, &g).unwrap();
        assert!(rep.pass && op_norm_2(&rep.b) < 1e-10);
        // nilpotent generator with the swap form: here J a^H J happens to
        // equal a, so the two computations agree at B = 0
        let ks2 = KreinStructure::charge(1);
        let a2 = array![[cr(0.0), cr(1.0)], [cr(0.0), cr(0.0)]];
        let g2 = GroupData::fit(a2.clone()).unwrap();
        let rep2 = krein_c1_check(&ks2, &g2).unwrap();
        assert!(rep2.pass, "residual {}", rep2.residual);
        // same generator against J = diag(1, −1): genuinely non-selfadjoint
        let j3 = array![[cr(1.0), cr(0.0)], [cr(0.0), cr(-1.0)]];
        let ks3 = KreinStructure::new(j3).unwrap();
        let g3 = GroupData::fit(a2).unwrap();
        let rep3 = krein_c1_check(&ks3, &g3).unwrap();
        assert!(rep3.pass, "residual {}", rep3.residual);
        assert!((op_norm_2(&rep3.b) - 1.0).abs() < 1e-8); // B = −[[0,1],[1,0]]-swap
    }
}
