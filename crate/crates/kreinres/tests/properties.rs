//! Randomized structural properties of the Krein-space machinery.

use kreinres::kgoperators::{assemble_k, charge_structure, resolvent_k, spectrum_k, PencilModel};
use kreinres::kreinspace::{
    block_positivity_test, is_krein_positive, is_krein_selfadjoint, krein_adjoint, KreinStructure,
};
use kreinres::mourrelap::lap_sweep;
use kreinres::numkernel::*;
use kreinres::speccalc::{calpha_norm, free_calculus, OrderFunction, SymbolFn};
use kreinres::Error;
use proptest::prelude::*;

fn cmat(n: usize) -> impl Strategy<Value = CMatrix> {
    proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n).prop_map(move |v| {
        let mut m = zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let (re, im) = v[i * n + j];
                m[[i, j]] = c(re, im);
            }
        }
        m
    })
}

fn hmat(n: usize) -> impl Strategy<Value = CMatrix> {
    cmat(n).prop_map(|m| herm_part(&m))
}

fn jdiag(n: usize) -> impl Strategy<Value = KreinStructure> {
    proptest::collection::vec(proptest::bool::ANY, n).prop_map(move |signs| {
        let mut j = zeros(n, n);
        for (i, s) in signs.iter().enumerate() {
            j[[i, i]] = cr(if *s { 1.0 } else { -1.0 });
        }
        KreinStructure::new(j).unwrap()
    })
}

/// Random pencil with positive-definite h₀ and bounded k.
fn pencil(n: usize) -> impl Strategy<Value = PencilModel> {
    (cmat(n), hmat(n)).prop_map(move |(g, k)| {
        let h0 = adjoint(&g).dot(&g) + &identity(n).mapv(|x| x * cr(0.5));
        let k = k.mapv(|x| x * cr(0.3));
        let h = &h0 - &k.dot(&k);
        PencilModel::new(h, k).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn krein_adjoint_antimultiplicative(s in cmat(4), t in cmat(4), ks in jdiag(4)) {
        let lhs = krein_adjoint(&ks, &s.dot(&t)).unwrap();
        let rhs = krein_adjoint(&ks, &t).unwrap().dot(&krein_adjoint(&ks, &s).unwrap());
        let scale = op_norm_2(&s).max(1.0) * op_norm_2(&t).max(1.0);
        prop_assert!(op_norm_2(&(&lhs - &rhs)) <= 1e-11 * scale);
        // involution
        let back = krein_adjoint(&ks, &krein_adjoint(&ks, &s).unwrap()).unwrap();
        prop_assert!(op_norm_2(&(&back - &s)) <= 1e-11 * op_norm_2(&s).max(1.0));
    }

    #[test]
    fn krein_positivity_transfer(a in cmat(4), t in cmat(4), ks in jdiag(4)) {
        // S = J⁻¹ AᴴA is Krein-selfadjoint and Krein-positive
        let s = ks.gram_inv().dot(&adjoint(&a)).dot(&a);
        prop_assert!(is_krein_selfadjoint(&ks, &s, 1e-9));
        prop_assert!(is_krein_positive(&ks, &s, 1e-9).unwrap());
        let tst = krein_adjoint(&ks, &t).unwrap().dot(&s).dot(&t);
        prop_assert!(is_krein_selfadjoint(&ks, &tst, 1e-8));
        prop_assert!(is_krein_positive(&ks, &tst, 1e-8).unwrap());
    }

    #[test]
    fn block_positivity_agreement(a in cmat(3), gb in cmat(3), gc in cmat(3), shift in -0.4f64..0.4) {
        let b = adjoint(&gb).dot(&gb) + &identity(3).mapv(|x| x * cr(shift));
        let c_blk = adjoint(&gc).dot(&gc) + &identity(3).mapv(|x| x * cr(shift));
        let tol = 1e-9;
        let block = block_positivity_test(&a, &b, &c_blk, tol).unwrap();
        // assembled S = [[a, b], [c, aᴴ]] under the charge form
        let s = block2(&a, &b, &c_blk, &adjoint(&a));
        let ks = KreinStructure::charge(3);
        let direct = is_krein_positive(&ks, &s, tol).unwrap();
        // exclude boundary cases for both criteria
        let js = herm_part(&ks.gram().dot(&s));
        let margin = hermitian_eig(&js).unwrap().values[0] / op_norm_2(&js).max(1e-300);
        prop_assume!(margin.abs() > 1e-6);
        prop_assert_eq!(block, direct, "margin {}", margin);
    }

    #[test]
    fn resolvent_identity_and_krein_symmetry(
        m in pencil(3),
        re1 in -1.0f64..1.0, im1 in 0.3f64..1.0,
        re2 in -1.0f64..1.0, im2 in 0.3f64..1.0,
    ) {
        let z1 = c(re1, im1);
        let z2 = c(re2, -im2);
        let r1 = resolvent_k(&m, z1).unwrap();
        let r2 = resolvent_k(&m, z2).unwrap();
        let lhs = &r1 - &r2;
        let rhs = r1.dot(&r2).mapv(|x| x * (z1 - z2));
        let scale = op_norm_2(&r1) * op_norm_2(&r2) * (z1 - z2).norm();
        prop_assert!(op_norm_2(&(&lhs - &rhs)) <= 1e-9 * scale.max(1.0));
        // R(z)* = R(z̄) in the charge form
        let ks = KreinStructure::charge(3);
        let star = krein_adjoint(&ks, &r1).unwrap();
        let rbar = resolvent_k(&m, z1.conj()).unwrap();
        prop_assert!(op_norm_2(&(&star - &rbar)) <= 1e-10 * op_norm_2(&r1).max(1.0));
    }

    #[test]
    fn nonreal_eigenvectors_neutral(h in hmat(3), k in hmat(3)) {
        // strong k forces superradiant (nonreal) pairs in some draws
        let m = PencilModel::new(h, k.mapv(|x| x * cr(2.0)));
        prop_assume!(m.is_ok());
        let m = m.unwrap();
        let eig = spectrum_k(&m).unwrap();
        let v = eig.vectors.unwrap();
        let ks = KreinStructure::charge(3);
        let scale = op_norm_2(&assemble_k(&m)).max(1.0);
        for (i, lam) in eig.values.iter().enumerate() {
            if lam.im.abs() > 1e-6 * scale {
                let u = v.column(i).to_owned();
                let ju = ks.gram().dot(&u);
                let neut: C64 = u.iter().zip(ju.iter()).map(|(a, b)| a.conj() * b).sum();
                prop_assert!(neut.norm() <= 1e-8, "neutrality {} at {lam}", neut.norm());
            }
        }
    }

    #[test]
    fn spectrum_enclosure(m in pencil(3), re in -2.0f64..2.0, im_extra in 0.1f64..2.0) {
        // z far enough above the numerical range is never a spectrum hit
        let c0 = op_norm_2(m.k()) + 1.0;
        let z = c(re, re.abs() + c0 + im_extra);
        let hit = matches!(resolvent_k(&m, z), Err(Error::SpectrumHit { .. }));
        prop_assert!(!hit);
    }

    #[test]
    fn matfun_polynomial_morphism(a in hmat(4)) {
        // f(x) = x² − 0.5, g(x) = 0.3x + 1
        let f = |x: f64| x * x - 0.5;
        let g = |x: f64| 0.3 * x + 1.0;
        let fa = matfun_hermitian(&a, |x| cr(f(x))).unwrap();
        let ga = matfun_hermitian(&a, |x| cr(g(x))).unwrap();
        let fga = matfun_hermitian(&a, |x| cr(f(x) * g(x))).unwrap();
        let scale = op_norm_2(&fa).max(1.0) * op_norm_2(&ga).max(1.0);
        prop_assert!(op_norm_2(&(&fga - &fa.dot(&ga))) <= 1e-10 * scale);
    }

    #[test]
    fn general_eig_real_matrix_conjugation_symmetric(m in cmat(4)) {
        let real = m.mapv(|z| cr(z.re));
        let eig = general_eig(&real).unwrap();
        let scale = op_norm_2(&real).max(1.0);
        for lam in &eig.values {
            let mirror = eig.values.iter()
                .map(|mu| (mu - lam.conj()).norm())
                .fold(f64::INFINITY, f64::min);
            prop_assert!(mirror <= 1e-8 * scale, "unpaired {lam}");
        }
    }

    #[test]
    fn free_calculus_polynomial_morphism(g in cmat(3)) {
        let h0 = adjoint(&g).dot(&g) + &identity(3).mapv(|x| x * cr(0.5));
        let m = PencilModel::new(h0, zeros(3, 3)).unwrap();
        let phi = SymbolFn::poly(&[0.2, -1.0, 0.4]);
        let psi = SymbolFn::poly(&[1.0, 0.5]);
        // product polynomial by coefficient convolution
        let prod = SymbolFn::poly(&[0.2, -0.9, -0.1, 0.2]);
        let lhs = free_calculus(&m, &prod).unwrap();
        let rhs = free_calculus(&m, &phi).unwrap().dot(&free_calculus(&m, &psi).unwrap());
        let scale = op_norm_2(&rhs).max(1.0);
        prop_assert!(op_norm_2(&(&lhs - &rhs)) <= 1e-9 * scale);
    }

    #[test]
    fn calpha_norm_monotone(seed in 0u64..1000) {
        let phi = SymbolFn::resolvent(c(0.3 + 1e-4 * seed as f64, 0.7), 3);
        let grid: Vec<f64> = (-40..=40).map(|i| i as f64 / 10.0).collect();
        let small = OrderFunction { finite: vec![(0.0, 1)], infinity: 1 };
        let large = OrderFunction { finite: vec![(0.0, 2), (0.5, 1)], infinity: 2 };
        let ns = calpha_norm(&phi, &small, &grid).unwrap();
        let nl = calpha_norm(&phi, &large, &grid).unwrap();
        prop_assert!(nl >= ns - 1e-12, "small {ns} large {nl}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn lap_sweep_submultiplicative_sanity(m in pencil(3), araw in hmat(3)) {
        let theta = 0.25;
        let s = 0.7;
        let eps = 0.8;
        let a = araw;
        let mus: Vec<f64> = (0..5).map(|i| 0.05 * 10f64.powf(i as f64 / 4.0)).collect();
        let rep = lap_sweep(&m, theta, &a, s, eps, (0.0, 0.2), &mus, 0.5);
        prop_assume!(rep.is_ok());
        let rep = rep.unwrap();
        let w = matfun_hermitian(&a, |x| cr((1.0 + (eps * x).powi(2)).powf(-s / 2.0))).unwrap();
        let cs = charge_structure(&m, theta).unwrap();
        let factor = op_norm_2(&cs.wtheta) * op_norm_2(&cs.wtheta_inv) * op_norm_2(&w).powi(2);
        for row in rep.rows.iter().filter(|r| r.flag == "ok") {
            prop_assert!(
                row.weighted_norm <= factor * row.unweighted_norm * (1.0 + 1e-8),
                "weighted {} vs factor {} * unweighted {}",
                row.weighted_norm, factor, row.unweighted_norm
            );
        }
    }

    #[test]
    fn weight_from_group_unitary_covariance(a in hmat(3), g in hmat(3)) {
        use kreinres::groupweights::{weight_from_group, GroupData};
        let u = expm(&g.mapv(|x| x * c(0.0, 1.0)));
        let ga = GroupData::fit(a.clone()).unwrap();
        let conj = u.dot(&a).dot(&adjoint(&u));
        let gc = GroupData::fit(herm_part(&conj)).unwrap();
        let w1 = u.dot(&weight_from_group(&ga, 1.5, 0.2).unwrap()).dot(&adjoint(&u));
        let w2 = weight_from_group(&gc, 1.5, 0.2).unwrap();
        prop_assert!(op_norm_2(&(&w1 - &w2)) <= 1e-8 * op_norm_2(&w2).max(1.0));
    }
}
