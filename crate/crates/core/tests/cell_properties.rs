use nalgebra::{DMatrix, SymmetricEigen};
use pnph::cell_solver::SolverOptions;
use pnph::geometry::{parse_raster, Phase, ReferenceCell};
use pnph::tensors::compute_effective_tensors;
use proptest::prelude::*;

const N: usize = 8;

fn mask() -> impl Strategy<Value = Vec<bool>> {
    proptest::collection::vec(proptest::bool::weighted(0.7), N * N)
        .prop_filter("both phases present", |m| m.iter().any(|&b| b) && m.iter().any(|&b| !b))
}

fn cell(pore: &[bool], sigma: f64) -> ReferenceCell {
    let phase = pore.iter().map(|&b| if b { Phase::Pore } else { Phase::Solid }).collect();
    ReferenceCell::new(vec![N, N], vec![1.0, 1.0], phase, sigma, 0.5, 0.0).unwrap()
}

fn roll(pore: &[bool], sx: usize, sy: usize) -> Vec<bool> {
    let mut out = vec![false; N * N];
    for j in 0..N {
        for i in 0..N {
            out[((j + sy) % N) * N + (i + sx) % N] = pore[j * N + i];
        }
    }
    out
}

fn transpose(pore: &[bool]) -> Vec<bool> {
    let mut out = vec![false; N * N];
    for j in 0..N {
        for i in 0..N {
            out[i * N + j] = pore[j * N + i];
        }
    }
    out
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn diffusion_tensor_is_symmetric_and_bounded(pore in mask()) {
        let c = cell(&pore, 0.0);
        let t = compute_effective_tensors(&c, &SolverOptions::default()).unwrap();
        prop_assert!(close(&t.d_hat, &t.d_hat.transpose(), 1e-8));
        let eig = SymmetricEigen::new(t.d_hat.clone()).eigenvalues;
        for &l in eig.iter() {
            // between zero and the porosity (arithmetic-mean bound)
            prop_assert!(l >= -1e-8 && l <= t.p + 1e-8, "eigenvalue {l}, p {}", t.p);
        }
        prop_assert!(close(&t.eps_hat, &(&t.d_hat * (0.25)), 1e-8));
        prop_assert!(close(&t.m_hat, &t.d_hat, 1e-8));
    }

    #[test]
    fn tensors_are_translation_invariant(pore in mask(), sx in 0..N, sy in 0..N) {
        let opts = SolverOptions::default();
        let a = compute_effective_tensors(&cell(&pore, -0.1), &opts).unwrap();
        let b = compute_effective_tensors(&cell(&roll(&pore, sx, sy), -0.1), &opts).unwrap();
        prop_assert!(close(&a.d_hat, &b.d_hat, 1e-8));
        prop_assert!((a.p - b.p).abs() < 1e-15);
        prop_assert!((a.rho_s - b.rho_s).abs() < 1e-12);
    }

    #[test]
    fn transposing_the_cell_swaps_axes(pore in mask()) {
        let opts = SolverOptions::default();
        let a = compute_effective_tensors(&cell(&pore, 0.0), &opts).unwrap();
        let b = compute_effective_tensors(&cell(&transpose(&pore), 0.0), &opts).unwrap();
        prop_assert!((a.d_hat[(0, 0)] - b.d_hat[(1, 1)]).abs() < 1e-8);
        prop_assert!((a.d_hat[(1, 1)] - b.d_hat[(0, 0)]).abs() < 1e-8);
        prop_assert!((a.d_hat[(0, 1)] - b.d_hat[(1, 0)]).abs() < 1e-8);
    }

    #[test]
    fn raster_round_trip(pore in mask(), sigma in -1.0f64..1.0) {
        let c = cell(&pore, sigma);
        let back = parse_raster(&c.to_raster_string(sigma), 0.5, 0.0).unwrap();
        prop_assert_eq!(back.dims(), c.dims());
        prop_assert_eq!(back.phases(), c.phases());
        prop_assert!((back.porosity() - c.porosity()).abs() < 1e-15);
    }
}
