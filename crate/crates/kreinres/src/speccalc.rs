//! Functional calculus: symbols with analytic derivatives, the free
//! Klein-Gordon block calculus with Λ/Λ_θ norms, spectral projections,
//! boundary-value smooth calculus, and the definitizable-matrix calculus
//! with order functions and resolvent bounds.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kgoperators::PencilModel;
use crate::kreinspace::KreinStructure;
use crate::numkernel::*;
use crate::quad::{gauss_legendre_on, linear_fit};

type ScalarFn = Arc<dyn Fn(f64) -> C64 + Send + Sync>;

/// Scalar symbol ℝ → ℂ with analytically supplied derivatives.
#[derive(Clone)]
pub struct SymbolFn {
    label: String,
    /// fns[0] is the value, fns[j] the j-th derivative.
    fns: Vec<ScalarFn>,
    support: Option<(f64, f64)>,
}

impl std::fmt::Debug for SymbolFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolFn")
            .field("label", &self.label)
            .field("d_max", &(self.fns.len() - 1))
            .field("support", &self.support)
            .finish()
    }
}

impl SymbolFn {
    pub fn new(label: &str, value: impl Fn(f64) -> C64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.to_string(),
            fns: vec![Arc::new(value)],
            support: None,
        }
    }

    /// Build a symbol from value plus derivatives; the first derivative is
    /// probed against a central finite difference of the value.
    pub fn with_derivs(label: &str, fns: Vec<ScalarFn>) -> Result<Self> {
        assert!(!fns.is_empty());
        let s = Self {
            label: label.to_string(),
            fns,
            support: None,
        };
        s.check_derivative_consistency(&[-1.7, -0.3, 0.45, 1.1, 2.3])?;
        Ok(s)
    }

    fn with_derivs_unchecked(label: &str, fns: Vec<ScalarFn>) -> Self {
        Self {
            label: label.to_string(),
            fns,
            support: None,
        }
    }

    pub fn with_support(mut self, a: f64, b: f64) -> Self {
        self.support = Some((a, b));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        self.support
    }

    pub fn d_max(&self) -> usize {
        self.fns.len() - 1
    }

    pub fn eval(&self, x: f64) -> C64 {
        (self.fns[0])(x)
    }

    pub fn deriv(&self, j: usize, x: f64) -> Result<C64> {
        self.fns
            .get(j)
            .map(|f| f(x))
            .ok_or(Error::MissingDerivative(j))
    }

    pub fn check_derivative_consistency(&self, probes: &[f64]) -> Result<()> {
        if self.fns.len() < 2 {
            return Ok(());
        }
        let h = 1e-5;
        for &x in probes {
            let fd = (self.eval(x + h) - self.eval(x - h)) / cr(2.0 * h);
            let an = (self.fns[1])(x);
            if (fd - an).norm() > 1e-4 * (1.0 + an.norm()) {
                return Err(Error::DomainError(format!(
                    "symbol {}: derivative probe mismatch at x={x}",
                    self.label
                )));
            }
        }
        Ok(())
    }

    // --- stock symbols -----------------------------------------------------

    pub fn constant(v: C64) -> Self {
        Self::with_derivs_unchecked(
            &format!("const({v})"),
            vec![Arc::new(move |_| v), Arc::new(|_| cr(0.0))],
        )
    }

    pub fn identity_symbol() -> Self {
        Self::with_derivs_unchecked(
            "x",
            vec![Arc::new(cr), Arc::new(|_| cr(1.0)), Arc::new(|_| cr(0.0))],
        )
    }

    /// Real-coefficient polynomial, ascending coefficients; all derivatives.
    pub fn poly(coeffs: &[f64]) -> Self {
        let deg = coeffs.len().saturating_sub(1);
        let mut fns: Vec<ScalarFn> = Vec::new();
        let mut cur: Vec<f64> = coeffs.to_vec();
        for _ in 0..=deg + 1 {
            let c = cur.clone();
            fns.push(Arc::new(move |x| {
                cr(c.iter().rev().fold(0.0, |acc, &a| acc * x + a))
            }));
            cur = cur
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &a)| a * i as f64)
                .collect();
            if cur.is_empty() {
                cur = vec![0.0];
            }
        }
        Self::with_derivs_unchecked(&format!("poly(deg {deg})"), fns)
    }

    /// (x − z)⁻¹ with all derivatives up to `d_max`.
    pub fn resolvent(z: C64, d_max: usize) -> Self {
        let mut fns: Vec<ScalarFn> = Vec::new();
        for j in 0..=d_max {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let fact = (1..=j).map(|i| i as f64).product::<f64>();
            fns.push(Arc::new(move |x| {
                cr(sign * fact) / (cr(x) - z).powi(j as i32 + 1)
            }));
        }
        Self::with_derivs_unchecked(&format!("1/(x-({z}))"), fns)
    }

    /// sin(N x) with derivatives up to `d_max`.
    pub fn sin_scaled(n: f64, d_max: usize) -> Self {
        let mut fns: Vec<ScalarFn> = Vec::new();
        for j in 0..=d_max {
            let scale = n.powi(j as i32);
            let phase = j % 4;
            fns.push(Arc::new(move |x| {
                let t = n * x;
                cr(scale
                    * match phase {
                        0 => t.sin(),
                        1 => t.cos(),
                        2 => -t.sin(),
                        _ => -t.cos(),
                    })
            }));
        }
        Self::with_derivs_unchecked(&format!("sin({n}x)"), fns)
    }

    /// e^{itx} with derivatives up to `d_max`.
    pub fn exp_it(t: f64, d_max: usize) -> Self {
        let mut fns: Vec<ScalarFn> = Vec::new();
        for j in 0..=d_max {
            fns.push(Arc::new(move |x| c(0.0, t).powi(j as i32) * c(0.0, t * x).exp()));
        }
        Self::with_derivs_unchecked(&format!("exp(i{t}x)"), fns)
    }

    /// Gaussian e^{−((x−c)/w)²} with first two derivatives.
    pub fn gaussian(center: f64, width: f64) -> Self {
        let g = move |x: f64| (-((x - center) / width).powi(2)).exp();
        Self::with_derivs_unchecked(
            &format!("gauss({center},{width})"),
            vec![
                Arc::new(move |x| cr(g(x))),
                Arc::new(move |x| cr(g(x) * (-2.0 * (x - center) / (width * width)))),
                Arc::new(move |x| {
                    let u = (x - center) / width;
                    cr(g(x) * (4.0 * u * u - 2.0) / (width * width))
                }),
            ],
        )
    }

    /// C³ plateau bump: ≡1 on (d1, d2), supported in (c1, c2), built from the
    /// order-7 smoothstep 35u⁴ − 84u⁵ + 70u⁶ − 20u⁷.
    pub fn bump(c1: f64, d1: f64, d2: f64, c2: f64) -> Self {
        assert!(c1 < d1 && d1 < d2 && d2 < c2, "bump needs c1<d1<d2<c2");
        let mk = move |j: usize| -> ScalarFn {
            Arc::new(move |x: f64| {
                if x <= c1 || x >= c2 {
                    cr(0.0)
                } else if x >= d1 && x <= d2 {
                    cr(if j == 0 { 1.0 } else { 0.0 })
                } else if x < d1 {
                    let w = d1 - c1;
                    cr(smoothstep7_deriv(j, (x - c1) / w) / w.powi(j as i32))
                } else {
                    let w = c2 - d2;
                    let sgn = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
                    cr(sgn * smoothstep7_deriv(j, (c2 - x) / w) / w.powi(j as i32))
                }
            })
        };
        Self::with_derivs_unchecked(
            &format!("bump({c1},{d1},{d2},{c2})"),
            (0..=3).map(mk).collect(),
        )
        .with_support(c1, c2)
    }
}

fn smoothstep7_deriv(j: usize, u: f64) -> f64 {
    // p(u) = 35u^4 - 84u^5 + 70u^6 - 20u^7 on [0,1]
    let coeffs = [0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0];
    let mut c = coeffs.to_vec();
    for _ in 0..j {
        c = c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, &a)| a * i as f64)
            .collect();
    }
    c.iter().rev().fold(0.0, |acc, &a| acc * u + a)
}

/// Even part φ₊ and the odd quotient φ₋(x)/x (value φ'(0) at the origin).
pub fn even_odd_split(phi: &SymbolFn) -> Result<(SymbolFn, SymbolFn)> {
    let p = phi.clone();
    let even = SymbolFn::new(&format!("{}_even", phi.label()), move |x| {
        (p.eval(x) + p.eval(-x)) * cr(0.5)
    });
    if phi.d_max() < 1 {
        return Err(Error::MissingDerivative(1));
    }
    let p2 = phi.clone();
    let odd_over_x = SymbolFn::new(&format!("{}_odd/x", phi.label()), move |x| {
        if x.abs() < 1e-7 {
            // (φ₋/x)(0) = φ'(0); near zero blend through the derivative at the
            // midpoint to control cancellation
            p2.deriv(1, 0.0).unwrap()
        } else {
            (p2.eval(x) - p2.eval(-x)) / cr(2.0 * x)
        }
    });
    // pointwise reconstruction sanity: φ₊ + x·(φ₋/x) = φ
    for &x in &[-1.3, 0.4, 2.7] {
        let err = (even.eval(x) + cr(x) * odd_over_x.eval(x) - phi.eval(x)).norm();
        if err > 1e-12 * (1.0 + phi.eval(x).norm()) {
            return Err(Error::DomainError(format!(
                "even/odd split failed to reconstruct {} at x={x}",
                phi.label()
            )));
        }
    }
    Ok((even, odd_over_x))
}

/// φ(K₀) = [[φ₊(ε), (φ₋/x)(ε)], [φ₋(ε)ε, φ₊(ε)]] for a free model (k = 0).
pub fn free_calculus(m: &PencilModel, phi: &SymbolFn) -> Result<CMatrix> {
    if !m.is_free() {
        return Err(Error::DimensionMismatch("free_calculus needs k = 0".into()));
    }
    let (even, odd_over_x) = even_odd_split(phi)?;
    let pp = m.eps_fun(|e| even.eval(e))?;
    let pm_over = m.eps_fun(|e| odd_over_x.eval(e))?;
    let pm_times = m.eps_fun(|e| odd_over_x.eval(e) * cr(e * e))?;
    Ok(block2(&pp, &pm_over, &pm_times, &pp))
}

/// Dense sampling grid for Λ-norms: [0, x_max] plus dyadic tail points.
pub fn lambda_grid(x_max: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=2000).map(|i| x_max * i as f64 / 2000.0).collect();
    // quarter-octave dyadic tail
    let x0 = x_max.max(1.0);
    for j in 1..=96 {
        g.push(x0 * 2f64.powf(j as f64 / 4.0));
    }
    g
}

/// ‖φ‖_Λ = sup|φ| + sup|φ₋(x)/x| over ±grid.
pub fn lambda_norm(phi: &SymbolFn, grid: &[f64]) -> f64 {
    let mut sup_phi = 0.0f64;
    let mut sup_ratio = 0.0f64;
    for &x in grid {
        sup_phi = sup_phi.max(phi.eval(x).norm()).max(phi.eval(-x).norm());
        let r = if x.abs() < 1e-9 {
            phi.deriv(1, 0.0).map(|v| v.norm()).unwrap_or(0.0)
        } else {
            ((phi.eval(x) - phi.eval(-x)) / cr(2.0 * x)).norm()
        };
        sup_ratio = sup_ratio.max(r);
    }
    sup_phi + sup_ratio
}

/// ‖φ‖_{Λ_θ} = ‖φ‖_Λ + sup|φ₋(x)|⟨x⟩^{|4θ−1|}; reports +∞ when the tail
/// term keeps growing along the dyadic samples.
pub fn lambda_theta_norm(phi: &SymbolFn, theta: f64, grid: &[f64]) -> f64 {
    let base = lambda_norm(phi, grid);
    let expo = (4.0 * theta - 1.0).abs();
    if expo == 0.0 {
        return base;
    }
    let term = |x: f64| {
        let odd = (phi.eval(x) - phi.eval(-x)).norm() * 0.5;
        odd * (1.0 + x * x).powf(expo / 2.0)
    };
    let mut sup = 0.0f64;
    for &x in grid {
        sup = sup.max(term(x));
    }
    // divergence detection: per-octave suprema on the tail must not keep
    // growing with |x|
    let mut sorted: Vec<f64> = grid.iter().map(|x| x.abs()).filter(|&x| x > 0.0).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let xmax = *sorted.last().unwrap_or(&1.0);
    let mut octaves: Vec<(f64, f64)> = Vec::new(); // (octave midpoint, sup)
    let mut edge = xmax;
    for _ in 0..10 {
        let lo = edge / 2.0;
        let vals: Vec<f64> = sorted
            .iter()
            .filter(|&&x| x > lo && x <= edge)
            .map(|&x| term(x))
            .collect();
        if !vals.is_empty() {
            octaves.push((edge, vals.iter().cloned().fold(0.0, f64::max)));
        }
        edge = lo;
    }
    if octaves.len() >= 4 {
        let lx: Vec<f64> = octaves.iter().map(|(x, _)| x.ln()).collect();
        let ly: Vec<f64> = octaves.iter().map(|(_, v)| v.max(1e-300).ln()).collect();
        let (slope, _, _) = linear_fit(&lx, &ly);
        let tail_sup = octaves.iter().map(|(_, v)| *v).fold(0.0, f64::max);
        if slope > 0.3 && tail_sup > 3.0 * base.max(1e-300) {
            return f64::INFINITY;
        }
    }
    base + sup
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    Energy,
    Charge(f64),
}

#[derive(Debug, Clone)]
pub struct NormBoundRow {
    pub label: String,
    pub weighted_norm: f64,
    pub t_diag: f64,
    pub t_upper: f64,
    pub t_lower: f64,
    pub sandwich_ok: bool,
}

/// Block-norm sandwich for the weighted norm of φ(K₀):
/// max block-norm ≤ ‖φ(K₀)‖_W ≤ ‖φ₊‖ + ‖upper‖ + ‖lower‖.
pub fn norm_bound_check(
    m: &PencilModel,
    mode: WeightMode,
    family: &[SymbolFn],
) -> Result<Vec<NormBoundRow>> {
    if !m.is_free() {
        return Err(Error::DimensionMismatch("norm_bound_check needs k = 0".into()));
    }
    // exponent of ⟨ε⟩ conjugating the off-diagonal blocks
    let expo = match mode {
        WeightMode::Energy => 1.0,
        WeightMode::Charge(theta) => 4.0 * theta,
    };
    let mut rows = Vec::new();
    for phi in family {
        let (even, odd_over_x) = even_odd_split(phi)?;
        let fk = free_calculus(m, phi)?;
        let w = match mode {
            WeightMode::Energy => crate::kgoperators::energy_structure(m)?.we,
            WeightMode::Charge(theta) => crate::kgoperators::charge_structure(m, theta)?.wtheta,
        };
        let wi = match mode {
            WeightMode::Energy => crate::kgoperators::energy_structure(m)?.we_inv,
            WeightMode::Charge(theta) => crate::kgoperators::charge_structure(m, theta)?.wtheta_inv,
        };
        let weighted_norm = op_norm_2(&w.dot(&fk).dot(&wi));
        let t_diag = op_norm_2(&m.eps_fun(|e| even.eval(e))?);
        let t_upper = op_norm_2(
            &m.eps_fun(|e| odd_over_x.eval(e) * cr((1.0 + e * e).powf(expo / 2.0)))?,
        );
        let t_lower = op_norm_2(
            &m.eps_fun(|e| odd_over_x.eval(e) * cr(e * e * (1.0 + e * e).powf(-expo / 2.0)))?,
        );
        let lo = t_diag.max(t_upper).max(t_lower);
        let hi = t_diag + t_upper + t_lower;
        let tol = 1e-9 * hi.max(1.0);
        rows.push(NormBoundRow {
            label: phi.label().to_string(),
            weighted_norm,
            t_diag,
            t_upper,
            t_lower,
            sandwich_ok: weighted_norm >= lo - tol && weighted_norm <= hi + tol,
        });
    }
    Ok(rows)
}

/// Π± = ½ [[I, ±ε⁻¹], [±ε, I]], the spectral projections of the free operator.
pub fn spectral_projections(m: &PencilModel, sign: i8) -> Result<CMatrix> {
    if !m.is_free() {
        return Err(Error::DimensionMismatch("spectral_projections needs k = 0".into()));
    }
    let emin = m.eps_min()?;
    if emin <= 1e-8 {
        return Err(Error::EpsSingular(emin));
    }
    let s = if sign >= 0 { 1.0 } else { -1.0 };
    let n = m.n();
    let inv = m.eps_fun(|e| cr(s / e))?;
    let eps = m.eps_fun(|e| cr(s * e))?;
    Ok(block2(&identity(n), &inv, &eps, &identity(n)).mapv(|x| x * cr(0.5)))
}

/// χ(H) by boundary-value quadrature of the resolvent:
/// χ(H) = (2πi)⁻¹ ∫ (R(λ+i0) − R(λ−i0)) χ(λ) dλ, with each boundary value
/// represented through an order-n almost-analytic continuation at height ν.
pub fn smooth_calculus_bv(h: &CMatrix, chi: &SymbolFn, nu: f64, order: usize) -> Result<CMatrix> {
    let n = require_square(h, "smooth_calculus_bv H")?;
    assert!(order >= 1 && nu > 0.0);
    if chi.d_max() < order {
        return Err(Error::MissingDerivative(order));
    }
    let (a, b) = chi
        .support()
        .ok_or_else(|| Error::DomainError("smooth_calculus_bv: symbol has no support data".into()))?;
    let resolvent = |z: C64| -> Result<CMatrix> {
        let m = h - &identity(n).mapv(|x| x * z);
        solve_linear(&m, &identity(n)).map_err(|_| Error::SpectrumHit { re: z.re, im: z.im })
    };
    // growth pre-check: ‖R(λ+iμ)‖ must not blow up faster than μ^{1−n}
    {
        let width = b - a;
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for i in 1..=3 {
            let lam = a + width * i as f64 / 4.0;
            for j in 0..10 {
                let mu = nu * (1e-3f64).powf(j as f64 / 9.0);
                let r = resolvent(c(lam, mu))?;
                lx.push(mu.ln());
                ly.push(op_norm_2(&r).max(1e-300).ln());
            }
        }
        let (slope, _, _) = linear_fit(&lx, &ly);
        let observed = -slope;
        let allowed = (order - 1) as f64;
        if observed > allowed + 0.35 {
            return Err(Error::GrowthCheckFailed { observed, allowed });
        }
    }
    // λ-panels: 16-node Gauss-Legendre, at least 40 nodes per unit length,
    // with edges refined geometrically toward the real eigenvalues of H so
    // the resolvent peak is resolved at every height μ
    let len = b - a;
    let base_panels = ((len * 40.0 / 16.0).ceil() as usize).max(2);
    let mut edges: Vec<f64> = (0..=base_panels)
        .map(|p| a + len * p as f64 / base_panels as f64)
        .collect();
    let heig = general_eig(h)?;
    for z in &heig.values {
        if z.im.abs() > 1e-6 || z.re < a - 0.1 * len || z.re > b + 0.1 * len {
            continue;
        }
        let xi = z.re;
        let mut d = len;
        for _ in 0..32 {
            d *= 0.5;
            for e in [xi - d, xi + d] {
                if e > a && e < b {
                    edges.push(e);
                }
            }
        }
        if xi > a && xi < b {
            edges.push(xi);
        }
    }
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup_by(|x, y| (*x - *y).abs() < 1e-13 * len);
    let mut lam_nodes = Vec::new();
    let mut lam_weights = Vec::new();
    for w in edges.windows(2) {
        if w[1] - w[0] < 1e-13 * len {
            continue;
        }
        let (xs, ws) = gauss_legendre_on(16, w[0], w[1]);
        lam_nodes.extend(xs);
        lam_weights.extend(ws);
    }
    // μ-nodes: geometric panels toward 0, 6-node rule each (> 200 nodes)
    let mut mu_nodes = Vec::new();
    let mut mu_weights = Vec::new();
    let mut hi = nu;
    for _ in 0..35 {
        let lo = hi * 0.5;
        let (xs, ws) = gauss_legendre_on(6, lo, hi);
        mu_nodes.extend(xs);
        mu_weights.extend(ws);
        hi = lo;
    }
    let fact_n1: f64 = (1..order).map(|i| i as f64).product();
    let mut upper = zeros(n, n);
    let mut lower = zeros(n, n);
    for (&lam, &wl) in lam_nodes.iter().zip(&lam_weights) {
        // boundary term at height ν with the order-n Taylor continuation
        let mut chi_up = cr(0.0);
        let mut chi_dn = cr(0.0);
        let mut fact = 1.0;
        for k in 0..order {
            if k > 0 {
                fact *= k as f64;
            }
            let d = chi.deriv(k, lam)?;
            chi_up += d * c(0.0, nu).powi(k as i32) / cr(fact);
            chi_dn += d * c(0.0, -nu).powi(k as i32) / cr(fact);
        }
        if chi_up.norm() > 1e-300 {
            upper = upper + resolvent(c(lam, nu))?.mapv(|x| x * (chi_up * cr(wl)));
        }
        if chi_dn.norm() > 1e-300 {
            lower = lower + resolvent(c(lam, -nu))?.mapv(|x| x * (chi_dn * cr(wl)));
        }
        let dn = chi.deriv(order, lam)?;
        if dn.norm() > 1e-300 {
            for (&mu, &wm) in mu_nodes.iter().zip(&mu_weights) {
                // d(iμ)^n/n! = (iμ)^{n−1} i dμ/(n−1)!
                let wu = c(0.0, mu).powi(order as i32 - 1) * c(0.0, 1.0) / cr(fact_n1);
                let wd = c(0.0, -mu).powi(order as i32 - 1) * c(0.0, -1.0) / cr(fact_n1);
                upper = upper + resolvent(c(lam, mu))?.mapv(|x| x * (dn * wu * cr(wl * wm)));
                lower = lower + resolvent(c(lam, -mu))?.mapv(|x| x * (dn * wd * cr(wl * wm)));
            }
        }
    }
    let diff = upper - lower;
    Ok(diff.mapv(|x| x / c(0.0, 2.0 * std::f64::consts::PI)))
}

/// Finite-support order function on ℝ ∪ {∞}.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrderFunction {
    /// (point, order) with order ≥ 1, sorted by point.
    pub finite: Vec<(f64, usize)>,
    /// order at ∞ (0 = absent).
    pub infinity: usize,
}

impl OrderFunction {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn order_at(&self, x: f64) -> usize {
        self.finite
            .iter()
            .find(|(p, _)| (*p - x).abs() < 1e-12)
            .map(|(_, s)| *s)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct DefinitizeResult {
    /// Real coefficients of the definitizing polynomial, ascending.
    pub poly_coeffs: Vec<f64>,
    pub alpha: OrderFunction,
    /// Real zeros of p with multiplicities (the critical points).
    pub critical_points: Vec<(f64, usize)>,
    /// Upper-half-plane eigenvalues with their Riesz indices.
    pub nonreal_pairs: Vec<(C64, usize)>,
    /// min eig of Herm(J·p(H)), relative to ‖p(H)‖.
    pub positivity_margin: f64,
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// p(H) by Horner evaluation.
pub fn poly_apply(coeffs: &[f64], h: &CMatrix) -> CMatrix {
    let n = h.nrows();
    let mut acc = zeros(n, n);
    for &cj in coeffs.iter().rev() {
        acc = h.dot(&acc) + &identity(n).mapv(|x| x * cr(cj));
    }
    acc
}

/// Riesz index of ξ as an eigenvalue of H via the rank filtration of (H−ξ)^j.
pub fn riesz_index(h: &CMatrix, xi: C64) -> usize {
    let n = h.nrows();
    let b = h - &identity(n).mapv(|x| x * xi);
    let cutoff = 1e-8;
    let mut power = b.clone();
    let mut prev_rank = rank(&power, cutoff);
    if prev_rank == n {
        return 0;
    }
    for j in 1..=n {
        let next = power.dot(&b);
        let r = rank(&next, cutoff);
        if r == prev_rank {
            return j;
        }
        prev_rank = r;
        power = next;
    }
    n
}

fn cluster_eigenvalues(vals: &[C64], scale: f64) -> (Vec<f64>, Vec<C64>) {
    let real_tol = 1e-7 * scale.max(1.0);
    let cluster_tol = 1e-6 * scale.max(1.0);
    let mut reals: Vec<f64> = Vec::new();
    let mut nonreal: Vec<C64> = Vec::new();
    for &z in vals {
        if z.im.abs() <= real_tol {
            reals.push(z.re);
        } else if z.im > 0.0 {
            nonreal.push(z);
        }
    }
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut reps: Vec<f64> = Vec::new();
    for r in reals {
        if reps.last().is_none_or(|&p| (r - p).abs() > cluster_tol) {
            reps.push(r);
        }
    }
    let mut nreps: Vec<C64> = Vec::new();
    for z in nonreal {
        if nreps
            .iter()
            .all(|&p| (z - p).norm() > cluster_tol)
        {
            nreps.push(z);
        }
    }
    (reps, nreps)
}

/// Search for a real definitizing polynomial p with Herm(J p(H)) ⪰ 0.
pub fn definitize(ks: &KreinStructure, h: &CMatrix) -> Result<DefinitizeResult> {
    if !crate::kreinspace::is_krein_selfadjoint(ks, h, 1e-8) {
        return Err(Error::NotSelfadjoint(f64::NAN));
    }
    let scale = op_norm_2(h);
    let eig = general_eig(h)?;
    let (real_pts, nonreal_pts) = cluster_eigenvalues(&eig.values, scale);
    let nonreal_pairs: Vec<(C64, usize)> = nonreal_pts
        .iter()
        .map(|&z| (z, riesz_index(h, z).max(1)))
        .collect();
    // mandatory factor: Π ((x−λ)(x−λ̄))^{riesz}
    let mut base = vec![1.0];
    for &(z, idx) in &nonreal_pairs {
        let quad = [z.norm_sqr(), -2.0 * z.re, 1.0];
        for _ in 0..idx {
            base = poly_mul(&base, &quad);
        }
    }
    let bounds: Vec<usize> = real_pts.iter().map(|&x| 2 * riesz_index(h, cr(x)).max(1)).collect();
    let budget: usize = bounds.iter().sum();
    let mut best_margin = f64::NEG_INFINITY;
    // enumerate degree tuples by total degree, then lexicographically
    let mut tuples: Vec<Vec<usize>> = vec![vec![]];
    for &b in &bounds {
        let mut next = Vec::new();
        for t in &tuples {
            for d in 0..=b {
                let mut t2 = t.clone();
                t2.push(d);
                next.push(t2);
            }
        }
        tuples = next;
    }
    tuples.sort_by_key(|t| (t.iter().sum::<usize>(), t.clone()));
    for t in &tuples {
        if t.iter().sum::<usize>() > budget {
            continue;
        }
        let mut p = base.clone();
        for (i, &d) in t.iter().enumerate() {
            for _ in 0..d {
                p = poly_mul(&p, &[-real_pts[i], 1.0]);
            }
        }
        for &sigma in &[1.0f64, -1.0] {
            let ps: Vec<f64> = p.iter().map(|&x| sigma * x).collect();
            let ph = poly_apply(&ps, h);
            // scale against the a-priori bound Σ|c_j|‖H‖^j so that p(H) ≈ 0
            // (a genuinely definitizing polynomial) is accepted
            let nph = ps
                .iter()
                .enumerate()
                .map(|(j, &cj)| cj.abs() * scale.max(1.0).powi(j as i32))
                .sum::<f64>()
                .max(1e-300);
            let jp = herm_part(&ks.gram().dot(&ph));
            let e = hermitian_eig(&jp)?;
            let margin = e.values.first().copied().unwrap_or(0.0);
            best_margin = best_margin.max(margin / nph);
            if margin >= -DEF_TOL * nph {
                let critical: Vec<(f64, usize)> = real_pts
                    .iter()
                    .zip(t)
                    .filter(|(_, &d)| d > 0)
                    .map(|(&x, &d)| (x, d))
                    .collect();
                let deg = ps.len() - 1;
                let alpha = OrderFunction {
                    finite: critical.clone(),
                    infinity: deg % 2,
                };
                return Ok(DefinitizeResult {
                    poly_coeffs: ps,
                    alpha,
                    critical_points: critical,
                    nonreal_pairs,
                    positivity_margin: margin / nph,
                });
            }
        }
    }
    Err(Error::SearchExhausted {
        best_margin,
    })
}

/// Taylor polynomial T_{(ξ,s)}φ of order < s at ξ, evaluated at x.
fn taylor_at(phi: &SymbolFn, xi: f64, s: usize, x: f64) -> Result<C64> {
    let mut acc = cr(0.0);
    let mut fact = 1.0;
    for j in 0..s {
        if j > 0 {
            fact *= j as f64;
        }
        acc += phi.deriv(j, xi)? * cr((x - xi).powi(j as i32) / fact);
    }
    Ok(acc)
}

/// Remainder quotient R_{(ξ,s)}φ(x) = (φ(x) − T_{(ξ,s)}φ(x)) / (x−ξ)^s,
/// switching to the integral remainder form near ξ.
fn remainder_quotient(phi: &SymbolFn, xi: f64, s: usize, x: f64) -> Result<C64> {
    if s == 0 {
        return Ok(phi.eval(x));
    }
    if (x - xi).abs() >= 1e-3 {
        let t = taylor_at(phi, xi, s, x)?;
        return Ok((phi.eval(x) - t) / cr((x - xi).powi(s as i32)));
    }
    // ∫₀¹ φ^{(s)}(ξ + t(x−ξ)) (1−t)^{s−1} dt · s/s! (=1/(s−1)!)
    let fact: f64 = (1..s).map(|i| i as f64).product();
    let (ts, ws) = gauss_legendre_on(16, 0.0, 1.0);
    let mut acc = cr(0.0);
    for (&t, &w) in ts.iter().zip(&ws) {
        acc += phi.deriv(s, xi + t * (x - xi))? * cr(w * (1.0 - t).powi(s as i32 - 1) / fact);
    }
    Ok(acc)
}

/// Grid-sup C^α norm: max over ω ⪯ α of Σ_{μ≤ω} sup|R_μφ|.
pub fn calpha_norm(phi: &SymbolFn, alpha: &OrderFunction, grid: &[f64]) -> Result<f64> {
    let sup_phi = grid
        .iter()
        .map(|&x| phi.eval(x).norm())
        .fold(0.0, f64::max);
    let mut best: f64 = sup_phi;
    for &(xi, s) in &alpha.finite {
        let mut total = 0.0;
        for sp in 0..=s {
            let mut sup = 0.0f64;
            for &x in grid {
                sup = sup.max(remainder_quotient(phi, xi, sp, x)?.norm());
            }
            total += sup;
        }
        best = best.max(total);
    }
    if alpha.infinity > 0 {
        let s = alpha.infinity;
        // dyadic tail samples for the expansion φ(x) ≈ Σ_{j≤s} a_j x^{−j}
        let x0 = grid.iter().map(|x| x.abs()).fold(8.0, f64::max);
        let tail: Vec<f64> = (0..=13)
            .flat_map(|j| {
                let x = x0 * 2f64.powi(j);
                [x, -x]
            })
            .collect();
        // weighted least squares: minimize |(φ(x) − Σ a_j x^{−j})·x^s|²
        let cols = s + 1;
        let mut ata = zeros(cols, cols);
        let mut atb = zeros(cols, 1);
        for &x in &tail {
            let row: Vec<C64> = (0..cols).map(|j| cr(x.powi(s as i32 - j as i32))).collect();
            let fx = phi.eval(x) * cr(x.powi(s as i32));
            for i in 0..cols {
                for j in 0..cols {
                    ata[[i, j]] += row[i].conj() * row[j];
                }
                atb[[i, 0]] += row[i].conj() * fx;
            }
        }
        let a = solve_linear(&ata, &atb).map_err(|_| Error::TailFitFailed(f64::NAN))?;
        // residual decay check: (φ − fit)·x^s must not grow toward ∞
        let wres = |x: f64| -> f64 {
            let fit: C64 = (0..cols).map(|j| a[[j, 0]] * cr(x.powi(-(j as i32)))).sum();
            ((phi.eval(x) - fit) * cr(x.powi(s as i32))).norm()
        };
        let mid = wres(x0 * 2f64.powi(6)).max(wres(-x0 * 2f64.powi(6)));
        let far = wres(x0 * 2f64.powi(13)).max(wres(-x0 * 2f64.powi(13)));
        if far > 4.0 * mid.max(1e-9 * sup_phi.max(1.0)) {
            return Err(Error::TailFitFailed(far));
        }
        let mut total = 0.0;
        for sp in 0..=s {
            let mut sup = 0.0f64;
            for &x in tail.iter().chain(grid.iter().filter(|&&x| x.abs() >= 1.0)) {
                let t: C64 = (0..sp).map(|j| a[[j, 0]] * cr(x.powi(-(j as i32)))).sum();
                sup = sup.max(((phi.eval(x) - t) * cr(x.powi(sp as i32))).norm());
            }
            total += sup;
        }
        best = best.max(total);
    }
    Ok(best)
}

/// φ(H) for a general matrix: eigendecomposition when the eigenvector basis
/// is well conditioned, nilpotent Taylor evaluation for a single-eigenvalue
/// Jordan structure.
pub fn matfun_general(h: &CMatrix, phi: &SymbolFn) -> Result<CMatrix> {
    let n = require_square(h, "matfun_general H")?;
    let eig = general_eig(h)?;
    let v = eig.vectors.clone().unwrap();
    if let Ok(vinv) = solve_linear(&v, &identity(n)) {
        let cond = op_norm_2(&v) * op_norm_2(&vinv);
        if cond < 1e8 {
            let mut d = zeros(n, n);
            for (i, z) in eig.values.iter().enumerate() {
                if z.im.abs() > 1e-8 * op_norm_2(h).max(1.0) {
                    return Err(Error::DomainError(format!(
                        "matfun_general: nonreal eigenvalue {z} for a real symbol"
                    )));
                }
                d[[i, i]] = phi.eval(z.re);
            }
            return Ok(v.dot(&d).dot(&vinv));
        }
    }
    // single-eigenvalue Jordan path: H = λI + N, φ(H) = Σ φ^{(j)}(λ) N^j / j!
    let mean: C64 = eig.values.iter().sum::<C64>() / cr(n as f64);
    let spread = eig
        .values
        .iter()
        .map(|z| (z - mean).norm())
        .fold(0.0, f64::max);
    if spread > 1e-6 * op_norm_2(h).max(1.0) {
        return Err(Error::DomainError(
            "matfun_general: defective matrix with multiple eigenvalues".into(),
        ));
    }
    let lam = mean.re;
    let nmat = h - &identity(n).mapv(|x| x * cr(lam));
    let mut acc = identity(n).mapv(|x| x * phi.eval(lam));
    let mut pow = identity(n);
    let mut fact = 1.0;
    for j in 1..n {
        pow = pow.dot(&nmat);
        fact *= j as f64;
        if op_norm_2(&pow) < 1e-12 {
            break;
        }
        let dj = phi.deriv(j, lam)? / cr(fact);
        acc += &pow.mapv(|x| x * dj);
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct JonasRow {
    pub label: String,
    pub op_norm: f64,
    pub alpha_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct JonasReport {
    pub definitize: DefinitizeResult,
    pub rows: Vec<JonasRow>,
    pub max_ratio: f64,
}

/// ‖φ(H)‖ ≤ C‖φ‖_α across a family of symbols; reports the ratios.
pub fn jonas_bound_check(
    ks: &KreinStructure,
    h: &CMatrix,
    family: &[SymbolFn],
    grid: &[f64],
) -> Result<JonasReport> {
    let def = definitize(ks, h)?;
    let mut rows = Vec::new();
    let mut max_ratio = 0.0f64;
    for phi in family {
        let op = op_norm_2(&matfun_general(h, phi)?);
        // a diverging tail means φ is outside the class at ∞: the bound is
        // vacuous there, recorded as an infinite norm
        let an = match calpha_norm(phi, &def.alpha, grid) {
            Ok(v) => v,
            Err(Error::TailFitFailed(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let ratio = if an > 0.0 { op / an } else { 0.0 };
        max_ratio = max_ratio.max(ratio);
        rows.push(JonasRow {
            label: phi.label().to_string(),
            op_norm: op,
            alpha_norm: an,
            ratio,
        });
    }
    Ok(JonasReport {
        definitize: def,
        rows,
        max_ratio,
    })
}

#[derive(Debug, Clone)]
pub struct ResoReport {
    pub c: f64,
    pub worst_z: C64,
    pub rows: Vec<(C64, f64, f64)>,
}

/// Fitted constant in c‖R(z)‖ ≤ Σ_{ξ nonreal}|z−ξ|^{−α} +
/// |Im z|⁻¹(1 + Σ_{ξ critical}|z−ξ|^{−α} + |z|^{α(∞)}).
pub fn reso_bound_check(ks: &KreinStructure, h: &CMatrix, zgrid: &[C64]) -> Result<ResoReport> {
    let def = definitize(ks, h)?;
    let n = h.nrows();
    let mut rows = Vec::new();
    let mut c_fit = f64::INFINITY;
    let mut worst = cr(0.0);
    for &z in zgrid {
        if z.im == 0.0 {
            continue;
        }
        let m = h - &identity(n).mapv(|x| x * z);
        let r = match solve_linear(&m, &identity(n)) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let lhs = op_norm_2(&r);
        let mut rhs = 0.0;
        for &(xi, idx) in &def.nonreal_pairs {
            rhs += (z - xi).norm().powi(-(idx as i32));
            rhs += (z - xi.conj()).norm().powi(-(idx as i32));
        }
        let mut inner = 1.0;
        for &(xi, mult) in &def.critical_points {
            inner += (z - cr(xi)).norm().powi(-(mult as i32));
        }
        inner += z.norm().powi(def.alpha.infinity as i32);
        rhs += inner / z.im.abs();
        rows.push((z, lhs, rhs));
        let ratio = rhs / lhs.max(1e-300);
        if ratio < c_fit {
            c_fit = ratio;
            worst = z;
        }
    }
    Ok(ResoReport {
        c: c_fit,
        worst_z: worst,
        rows,
    })
}
