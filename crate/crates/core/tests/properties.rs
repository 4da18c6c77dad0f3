use std::path::Path;

use eigenrate_core::fem::{assemble, Family, FeSpace, SymmetricPair};
use eigenrate_core::gevp::{all_eigenvalues, solve_gevp_with, Method, SolveOptions};
use eigenrate_core::linalg::CsrMatrix;
use eigenrate_core::mesh::{interval_mesh, rect_mesh, tri_mesh_from_rect, SplitRule};
use eigenrate_core::spectra::{laplace_interval, weyl_estimate};
use eigenrate_core::studio::report::ErrorRecord;
use eigenrate_core::studio::{ConfigFile, StudyConfig, StudyKind, StudyReport};
use proptest::prelude::*;

fn diag_pair(a: &[f64], b: &[f64]) -> SymmetricPair {
    let n = a.len();
    // tridiagonal coupling keeps both matrices SPD (diagonally dominant)
    let mut ta = Vec::new();
    let mut tb = Vec::new();
    for i in 0..n {
        ta.push((i, i, a[i]));
        tb.push((i, i, b[i]));
        if i + 1 < n {
            let ca = 0.25 * a[i].min(a[i + 1]);
            let cb = 0.25 * b[i].min(b[i + 1]);
            ta.extend([(i, i + 1, -ca), (i + 1, i, -ca)]);
            tb.extend([(i, i + 1, cb), (i + 1, i, cb)]);
        }
    }
    SymmetricPair {
        a: CsrMatrix::from_triplets(n, ta),
        b: CsrMatrix::from_triplets(n, tb),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn element_measures_fill_the_domain(nx in 1usize..12, ny in 1usize..12, gx in 1.0f64..2.5, gy in 1.0f64..2.5, tri in any::<bool>()) {
        let rect = rect_mesh(nx, ny, [0.0, -1.0], [2.0, 0.5], [gx, gy]).unwrap();
        let mesh = if tri { tri_mesh_from_rect(&rect, SplitRule::Alternating).unwrap() } else { rect };
        let want = mesh.domain_measure();
        prop_assert!((mesh.measure() - want).abs() <= 1e-12 * want);
        for f in &mesh.facets {
            prop_assert_eq!(f.neighbors.len(), if f.boundary { 1 } else { 2 });
            for &(e, local) in &f.neighbors {
                prop_assert_eq!(mesh.element_facets[e][local], f.id);
            }
        }
    }

    #[test]
    fn random_pairs_are_certified_and_sorted(
        a in proptest::collection::vec(1.0f64..50.0, 3..24),
        bscale in 0.5f64..3.0,
    ) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, _)| bscale * (1.0 + (i % 3) as f64)).collect();
        let pair = diag_pair(&a, &b);
        let n = a.len();
        let sol = solve_gevp_with(&pair, &SolveOptions::new(n).method(Method::Dense)).unwrap();
        let l = sol.lambdas();
        prop_assert!(l.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(sol.max_residual <= 1e-10 && sol.orthogonality <= 1e-10);
        let all = all_eigenvalues(&pair).unwrap();
        let (s1, s2): (f64, f64) = (l.iter().sum(), all.iter().sum());
        prop_assert!((s1 - s2).abs() <= 1e-8 * s2.abs());
    }

    #[test]
    fn discrete_eigenpairs_satisfy_the_galerkin_equations(n in 4usize..40, p2 in any::<bool>(), grading in 1.0f64..2.0) {
        let fam = if p2 { Family::P2 } else { Family::P1 };
        let space = FeSpace::new(interval_mesh(0.0, 1.0, n, grading).unwrap(), fam, 1).unwrap();
        let pair = assemble(&space, false).unwrap();
        let sol = solve_gevp_with(&pair, &SolveOptions::new(3.min(space.n_free()))).unwrap();
        let anorm = pair.a.frobenius_norm();
        for p in &sol.pairs {
            let au = pair.a.matvec(&p.vector);
            let bu = pair.b.matvec(&p.vector);
            let unorm = p.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            for i in 0..au.len() {
                prop_assert!((au[i] - p.lambda * bu[i]).abs() <= 1e-9 * anorm * unorm);
            }
        }
    }

    #[test]
    fn conforming_eigenvalues_sit_above_the_exact_ones(n in 2usize..60) {
        let space = FeSpace::new(interval_mesh(0.0, 1.0, n, 1.0).unwrap(), Family::P1, 1).unwrap();
        let pair = assemble(&space, false).unwrap();
        let k = 4.min(space.n_free());
        let sol = solve_gevp_with(&pair, &SolveOptions::new(k)).unwrap();
        for (p, e) in sol.pairs.iter().zip(laplace_interval(k)) {
            prop_assert!(p.lambda >= e.lambda * (1.0 - 1e-12));
        }
    }

    #[test]
    fn interval_weyl_is_exact(j in 1usize..5000) {
        let l = (j as f64 * std::f64::consts::PI).powi(2);
        prop_assert!((weyl_estimate(j, 1, 1.0) - l).abs() <= 1e-12 * l);
    }

    #[test]
    fn unknown_keys_are_rejected(key in "[a-z]{3,12}") {
        let cfg = StudyConfig::defaults("x", StudyKind::Laplace1d);
        prop_assume!(!StudyKind::Laplace1d.keys().contains(&key.as_str()));
        prop_assume!(!["kind", "family", "levels", "solver", "gates", "seed"].contains(&key.as_str()));
        let text = format!("[{}]\nkind = laplace-1d\n{key} = 1\n", cfg.name);
        prop_assert!(ConfigFile::parse(&text, Path::new("p.cfg")).is_err());
    }

    #[test]
    fn report_json_round_trips(vals in proptest::collection::vec(-1e300f64..1e300, 1..20), h in 1e-6f64..1.0) {
        let cfg = StudyConfig::defaults("rt", StudyKind::Laplace1d);
        let mut r = StudyReport::new(&cfg);
        let mut rec = ErrorRecord::new(0, [1, 1], h, [h, 0.0], 3);
        for (i, v) in vals.iter().enumerate() {
            rec.push(format!("v{i}"), *v);
        }
        r.records.push(rec);
        r.gate("g", true, vals[0], "x", "y");
        r.settle();
        let text = r.to_json().unwrap();
        let back = StudyReport::from_json(&text).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(back.to_json().unwrap(), text);
    }
}
