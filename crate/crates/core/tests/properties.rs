//! Randomized structural properties over generated maps and states.

use proptest::prelude::*;

use qimap_core::cylinder::{classical_entropy, CylinderTable, Strings};
use qimap_core::entropy::{build_quantum_partition, state_weights, Flavor};
use qimap_core::linalg::random_unit_vector;
use qimap_core::map::build_map;
use qimap_core::quantize::{quantize_general, quantize_uniform, verify_quantization};
use qimap_core::site::dft;
use qimap_core::tensorial::TensorialUnitary;
use qimap_core::transfer::transfer_matrix;

/// Slopes of a base-p map: leaves of a full p-ary tree give p^{depth} slopes
/// summing to one in reciprocal.
fn tp_slopes(p: u64, max_depth: u32) -> impl Strategy<Value = Vec<u64>> {
    let leaf = Just(vec![0u32]).boxed();
    let subtree = leaf.prop_recursive(max_depth, 16, p as u32, move |inner| {
        proptest::collection::vec(inner, p as usize..=p as usize)
            .prop_map(|kids| kids.into_iter().flatten().map(|d| d + 1).collect())
            .boxed()
    });
    // Force at least one split so the reciprocal slopes sum to one.
    proptest::collection::vec(subtree, p as usize..=p as usize)
        .prop_map(|kids| -> Vec<u32> { kids.into_iter().flatten().map(|d| d + 1).collect() })
        .prop_map(move |depths| depths.iter().map(|&d| p.pow(d)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn transfer_is_doubly_stochastic(slopes in tp_slopes(2, 2), extra in 0usize..2) {
        let map = build_map(&slopes).unwrap();
        let base = map.uniform_base().unwrap();
        let n_max = *base.exponents.iter().max().unwrap() as usize;
        let n = 2usize.pow((n_max + 1 + extra) as u32);
        let b = transfer_matrix(&map, n).unwrap();
        prop_assert!(b.is_doubly_stochastic());
    }

    #[test]
    fn uniform_quantization_verifies(lam in 2u64..6, extra in 0u32..2) {
        let slopes = vec![lam; lam as usize];
        let map = build_map(&slopes).unwrap();
        let n = (lam as usize).pow(1 + extra);
        let u = quantize_uniform(&map, n).unwrap();
        let b = transfer_matrix(&map, n).unwrap();
        prop_assert!(verify_quantization(&u, &b).unwrap().passes(1e-12));
    }

    #[test]
    fn composite_quantization_verifies(scale in 1usize..3) {
        // The two-base slope family quantized through the composition route.
        let map = build_map(&[6, 6, 6, 4, 4]).unwrap();
        let n = 12 * scale * scale;
        if let Ok(u) = quantize_general(&map, n) {
            let b = transfer_matrix(&map, n).unwrap();
            prop_assert!(verify_quantization(&u, &b).unwrap().passes(1e-12));
        }
    }

    #[test]
    fn tensorial_matches_uniform_route(slopes in tp_slopes(2, 2)) {
        let map = build_map(&slopes).unwrap();
        let base = map.uniform_base().unwrap();
        let n_max = *base.exponents.iter().max().unwrap() as usize;
        let k = n_max + 1;
        let site = dft(2).unwrap();
        let sites = vec![site; n_max];
        let u = TensorialUnitary::nonuniform(&map, &sites, k).unwrap();
        let b = transfer_matrix(&map, 1 << k).unwrap();
        prop_assert!(verify_quantization(&u, &b).unwrap().passes(1e-12));
    }

    #[test]
    fn quantum_weights_resolve_unity(slopes in tp_slopes(2, 2), seed in 0u64..1000, n in 1usize..3) {
        let map = build_map(&slopes).unwrap();
        let base = map.uniform_base().unwrap();
        let n_max = *base.exponents.iter().max().unwrap() as usize;
        let k = (n_max + 2).max(n * n_max + 1);
        let site = dft(2).unwrap();
        let sites = vec![site; n_max];
        let u = TensorialUnitary::nonuniform(&map, &sites, k).unwrap();
        let psi = random_unit_vector(1 << k, seed);
        let part = build_quantum_partition(&u, &map, n, 0.0, Flavor::Forward).unwrap();
        let table = state_weights(&part, &psi);
        prop_assert!((table.total() - 1.0).abs() < 1e-10);
        for w in table.weights.values() {
            prop_assert!(*w >= -1e-12 && *w <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn product_measure_entropy_is_additive(w0 in 0.05f64..0.95, n in 1usize..5) {
        let w = [w0, 1.0 - w0];
        let oracle = move |s: &[u8]| -> f64 { s.iter().map(|&d| w[d as usize]).product() };
        let t1 = CylinderTable::from_oracle(&oracle, 2, 1);
        let tn = CylinderTable::from_oracle(&oracle, 2, n);
        let h1 = classical_entropy(&t1).unwrap();
        let hn = classical_entropy(&tn).unwrap();
        prop_assert!((hn - n as f64 * h1).abs() < 1e-10);
        let total: f64 = Strings::new(2, n).map(|s| oracle(&s)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
