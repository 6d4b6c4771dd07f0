//! Random matrices for tests and the verification suite.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, CMat, C64};

/// Hermitian matrix with Gaussian entries scaled by `1/sqrt(dim)`, so the
/// spectrum stays O(1) for every dimension.
pub fn random_hermitian<R: Rng>(dim: usize, rng: &mut R) -> CMat {
    let s = 1.0 / (dim as f64).sqrt();
    let g = CMat::from_fn(dim, dim, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * s
    });
    (&g + g.adjoint()) * c(0.5)
}

/// `G G^dag / tr(G G^dag)` with Gaussian `G`: a full-rank density matrix.
pub fn random_density<R: Rng>(dim: usize, rng: &mut R) -> CMat {
    let g = CMat::from_fn(dim, dim, |_, _| {
        C64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let m = &g * g.adjoint();
    let t = crate::linalg::trace(&m).re;
    crate::linalg::symmetrize(&(m / c(t)))
}
