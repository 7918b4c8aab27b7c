mod common;

use common::*;
use proptest::prelude::*;
use vortex_core::fock::sector_dimension;
use vortex_core::LatticeSpec;

fn small_spec() -> impl Strategy<Value = LatticeSpec> {
    (2usize..=4, 2usize..=3, 0.0f64..4.0, 0.0f64..2.0, prop::option::of(0.2f64..8.0), 0.05f64..0.6).prop_map(
        |(nx, ny, n_phi, j_pin, u, fill)| {
            let n_sites = nx * ny;
            let n = ((fill * n_sites as f64).round() as usize).clamp(1, n_sites - 1);
            let n_max = if u.is_some() { 2 } else { 1 };
            spec(nx, ny, n, n_phi, j_pin, u, n_max)
        },
    )
}

fn dense_sized(s: &LatticeSpec) -> bool {
    sector_dimension(s.n_sites(), s.n_particles, s.n_max) <= 600
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn lanczos_agrees_with_dense(s in small_spec(), k in 1usize..4) {
        prop_assume!(dense_sized(&s));
        let dim = sector_dimension(s.n_sites(), s.n_particles, s.n_max) as usize;
        prop_assume!(dim > k + 4);
        prop_assert!(lanczos_vs_dense(&s, k) <= 1e-9);
    }

    #[test]
    fn hamiltonian_is_hermitian_and_conserves_number(s in small_spec()) {
        prop_assume!(dense_sized(&s));
        prop_assert!(hermiticity_defect(&s) < 1e-13);
        let dev = number_conservation(&s);
        prop_assert!(dev.is_some_and(|d| d < 1e-10), "{:?}", dev);
    }

    #[test]
    fn spectrum_is_gauge_invariant(s in small_spec(), seed in 0u64..1000) {
        prop_assume!(dense_sized(&s));
        prop_assert!(gauge_defect(&s, seed) < 1e-9);
    }

    #[test]
    fn eigenstate_currents_are_conserved(s in small_spec()) {
        prop_assume!(dense_sized(&s));
        let (div, total) = current_checks(&s);
        prop_assert!(div < 1e-9, "divergence {}", div);
        prop_assert!(total < 1e-9, "total vorticity {}", total);
    }

    #[test]
    fn pin_rdms_are_states(s in small_spec(), seed in 0u64..1000) {
        prop_assume!(dense_sized(&s) && s.n_max == 1);
        let (trace, min_eig) = rdm_checks(&s, seed).expect("valid RDMs");
        prop_assert!(trace < 1e-10);
        prop_assert!(min_eig > -1e-10);
    }
}

#[test]
fn fixed_instances() {
    for s in oracle_instances() {
        assert!(sector_dimension(s.n_sites(), s.n_particles, s.n_max) <= 4000);
    }
    for s in small_instances() {
        assert!(gauge_defect(&s, 1) < 1e-9, "{s:?}");
    }
}
