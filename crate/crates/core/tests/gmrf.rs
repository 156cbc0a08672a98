use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use stinla::gmrf::{
    build_icar_structure, build_iid_structure, build_rw_structure, build_seasonal_structure, cholesky,
    cholesky_sparse, eigenvalues, kronecker, numeric_rank, solve, GmrfSampler, PrecisionStructure, SiteGraph,
    SparseSym,
};

/// A spanning chain over a random permutation plus extra random edges, so
/// the graph is always connected.
fn connected_graph() -> impl Strategy<Value = SiteGraph> {
    (2usize..=9)
        .prop_flat_map(|n| {
            (
                Just(n),
                Just((1..=n).collect::<Vec<_>>()).prop_shuffle(),
                prop::collection::vec((1..=n, 1..=n), 0..n),
            )
        })
        .prop_map(|(n, order, extra)| {
            let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
            for (a, b) in extra {
                let e = (a.min(b), a.max(b));
                if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == e) {
                    edges.push(e);
                }
            }
            SiteGraph::new(n, &edges).unwrap()
        })
}

fn assert_builder_invariants(s: &PrecisionStructure) {
    let d = s.to_dense();
    assert_eq!(d, d.transpose(), "structure must be exactly symmetric");
    let ev = eigenvalues(s).unwrap();
    assert!(ev[0] >= -1e-10, "smallest eigenvalue {}", ev[0]);
    assert_eq!(numeric_rank(s).unwrap(), s.dim() - s.rank_deficiency());
}

proptest! {
    #[test]
    fn icar_builder_invariants(g in connected_graph()) {
        let s = build_icar_structure(&g).unwrap();
        assert_builder_invariants(&s);
        for i in 1..=g.n_sites() {
            for j in 1..=g.n_sites() {
                if i != j && !g.has_edge(i, j) {
                    prop_assert_eq!(s.entry(i - 1, j - 1), 0.0);
                }
            }
        }
    }

    #[test]
    fn seasonal_builder_invariants(p in 2usize..=6, extra in 0usize..=12) {
        let s = build_seasonal_structure(p + extra, p).unwrap();
        assert_builder_invariants(&s);
        prop_assert_eq!(s.rank_deficiency(), p - 1);
    }

    #[test]
    fn rw_builder_invariants(order in 1usize..=2, t in 3usize..=15) {
        assert_builder_invariants(&build_rw_structure(t, order).unwrap());
    }

    #[test]
    fn kronecker_rank_multiplies(g in connected_graph(), t in 3usize..=8, order in 1usize..=2) {
        let a = build_icar_structure(&g).unwrap();
        let b = build_rw_structure(t, order).unwrap();
        let k = kronecker(&a, &b).unwrap();
        prop_assert_eq!(numeric_rank(&k).unwrap(), numeric_rank(&a).unwrap() * numeric_rank(&b).unwrap());
        prop_assert_eq!(k.dim(), a.dim() * b.dim());
    }

    #[test]
    fn cholesky_solve_round_trip(
        n in 1usize..=25,
        seed in prop::collection::vec(-1.0f64..1.0, 25 * 25),
        rhs in prop::collection::vec(-5.0f64..5.0, 25),
    ) {
        // B B' + n I with a sparsified B.
        let b = DMatrix::from_fn(n, n, |i, j| {
            let v = seed[i * 25 + j];
            if v.abs() < 0.6 { 0.0 } else { v }
        });
        let m = &b * b.transpose() + DMatrix::identity(n, n) * n as f64;
        let sparse = SparseSym::from_dense(&m).unwrap();
        let f = cholesky_sparse(&sparse, 0.0).unwrap();
        let x = solve(&f, &rhs[..n]).unwrap();
        let r = &m * DVector::from_column_slice(&x) - DVector::from_column_slice(&rhs[..n]);
        let scale = DVector::from_column_slice(&rhs[..n]).norm().max(1e-300);
        prop_assert!(r.norm() / scale <= 1e-8);
        let dense_log_det = m.clone().cholesky().unwrap().l().diagonal().iter().map(|v| 2.0 * v.ln()).sum::<f64>();
        prop_assert!((f.log_det() - dense_log_det).abs() <= 1e-9 * (1.0 + dense_log_det.abs()));
    }

    #[test]
    fn constrained_draws_respect_constraints(g in connected_graph(), z in prop::collection::vec(-3.0f64..3.0, 9)) {
        let s = build_icar_structure(&g).unwrap();
        let x = GmrfSampler::new(&s).unwrap().sample(&z[..g.n_sites()]);
        prop_assert!(x.iter().sum::<f64>().abs() <= 1e-10);
    }
}

#[test]
fn four_cycle_spectrum() {
    let g = SiteGraph::new(4, &[(1, 2), (2, 3), (3, 4), (4, 1)]).unwrap();
    let s = build_icar_structure(&g).unwrap();
    assert_eq!(s.rank_deficiency(), 1);
    for i in 0..4 {
        assert_eq!(s.entry(i, i), 2.0);
    }
    assert_eq!(s.entry(0, 1), -1.0);
    assert_eq!(s.entry(0, 2), 0.0);
    let dense = DMatrix::from_fn(4, 4, |i, j| s.entry(i, j));
    let mut ev: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    for (got, want) in ev.iter().zip([0.0, 2.0, 2.0, 4.0]) {
        assert!((got - want).abs() < 1e-12, "{ev:?}");
    }
}

#[test]
fn seasonal_day_pair_rank() {
    let s = build_seasonal_structure(24, 12).unwrap();
    assert_eq!(numeric_rank(&s).unwrap(), 13);
    assert_eq!(s.rank_deficiency(), 11);
}

#[test]
fn second_order_walk_rank() {
    assert_eq!(numeric_rank(&build_rw_structure(5, 2).unwrap()).unwrap(), 3);
}

#[test]
fn path_times_walk() {
    let g = SiteGraph::new(3, &[(1, 2), (2, 3)]).unwrap();
    let k = kronecker(&build_icar_structure(&g).unwrap(), &build_rw_structure(4, 1).unwrap()).unwrap();
    assert_eq!(k.dim(), 12);
    assert_eq!(numeric_rank(&k).unwrap(), 6);
}

#[test]
fn type_iv_rank_on_a_four_node_graph() {
    let g = SiteGraph::new(4, &[(1, 2), (2, 3), (3, 4), (1, 3)]).unwrap();
    let k = kronecker(&build_icar_structure(&g).unwrap(), &build_rw_structure(4, 1).unwrap()).unwrap();
    assert_eq!(numeric_rank(&k).unwrap(), 9);
}

#[test]
fn jitter_makes_icar_factorable() {
    let g = SiteGraph::new(3, &[(1, 2), (2, 3)]).unwrap();
    let s = build_icar_structure(&g).unwrap();
    assert!(cholesky(&s, 1e-6).is_ok());
    assert!(matches!(
        cholesky(&s, 0.0),
        Err(stinla::Error::NotPositiveDefinite { .. })
    ));
}

#[test]
fn type_i_structure_is_identity() {
    let k = kronecker(&build_iid_structure(5).unwrap(), &build_iid_structure(7).unwrap()).unwrap();
    assert_eq!(k.to_dense(), DMatrix::identity(35, 35));
}
