#![allow(dead_code)]

use dls::assembly::AssemblyOptions;
use dls::formulation::{make_case, make_formulation, Formulation, FormulationKind, ManufacturedCase};
use dls::linalg::DenseMatrix;
use dls::{RealScalar, Scalar, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POISSON: [FormulationKind; 3] = [
    FormulationKind::FoslsStrong,
    FormulationKind::PrimalDpg,
    FormulationKind::UltraweakDpg,
];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<T: Scalar>(r: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix<T> {
    DenseMatrix::from_fn(rows, cols, |_, _| {
        T::from_c64(C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
    })
}

pub fn random_vector<T: Scalar>(r: &mut impl Rng, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| T::from_c64(C64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))))
        .collect()
}

pub fn norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus_sq().as_f64()).sum::<f64>().sqrt()
}

/// `‖a − b‖ / ‖b‖`.
pub fn rel<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    assert_eq!(a.len(), b.len());
    let d: f64 = a.iter().zip(b).map(|(&x, &y)| (x - y).modulus_sq().as_f64()).sum();
    d.sqrt() / norm(b).max(f64::MIN_POSITIVE)
}

/// Poisson formulation with the case's coefficients, or the acoustics one.
pub fn setup(kind: FormulationKind, p: usize, dp: usize, case: &str) -> (Formulation, ManufacturedCase) {
    let case = make_case(case).unwrap();
    let form = make_formulation(kind, p, dp, case.parameters()).unwrap();
    (form, case)
}

pub fn options(condense: bool, gram: bool, global: bool) -> AssemblyOptions {
    AssemblyOptions {
        condense,
        precondition_gram: gram,
        precondition_global: global,
        parallel: false,
    }
}
