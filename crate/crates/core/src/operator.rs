//! Operators and states on a truncated Fock space.
//!
//! Everything is dense `dim x dim` complex matrices in double precision.
//! Oscillator operators use unit mass: `H = P^2/2 + omega^2 Q^2/2`.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{require_positive, Error, Result};
use crate::linalg::{self, c, CMat, CVec, C64, I};

/// Largest tolerated `max |X - X^dag|` for a Hermitian-flagged operator.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Residual above which a matrix handed in as Hermitian is rejected
/// instead of silently symmetrized.
const HERMITIAN_REJECT: f64 = 1e-8;

/// Populations discarded by truncating a coherent or thermal state above
/// this level are an error.
pub const TRUNCATION_LEAK_MAX: f64 = 1e-8;

/// A square complex matrix acting on the truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: CMat,
    hermitian: bool,
}

impl Operator {
    /// Wraps a general (possibly non-Hermitian) square matrix.
    pub fn new(matrix: CMat) -> Result<Self> {
        check_square(&matrix)?;
        Ok(Operator {
            matrix,
            hermitian: false,
        })
    }

    /// Wraps a matrix that should be Hermitian. It is symmetrized as
    /// `(X + X^dag)/2`; the pre-symmetrization residual is logged and must
    /// be below 1e-8.
    pub fn hermitian(matrix: CMat, name: &'static str) -> Result<Self> {
        check_square(&matrix)?;
        let residual = linalg::hermitian_residual(&matrix);
        log::debug!("hermitian operator `{name}`: residual before symmetrization {residual:e}");
        if residual > HERMITIAN_REJECT * linalg::max_abs(&matrix).max(1.0) {
            return Err(Error::NotHermitian { name, residual });
        }
        Ok(Operator {
            matrix: linalg::symmetrize(&matrix),
            hermitian: true,
        })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Operator {
            matrix: CMat::zeros(dim, dim),
            hermitian: true,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Operator {
            matrix: CMat::identity(dim, dim),
            hermitian: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn scale(&self, factor: C64) -> Operator {
        Operator {
            matrix: &self.matrix * factor,
            hermitian: self.hermitian && factor.im == 0.0,
        }
    }

    pub fn scale_real(&self, factor: f64) -> Operator {
        self.scale(c(factor))
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    pub fn hermitian_residual(&self) -> f64 {
        linalg::hermitian_residual(&self.matrix)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        linalg::max_abs_diff(&self.matrix, &other.matrix)
    }

    pub(crate) fn ensure_same_dim(&self, other: &Operator) -> Result<()> {
        same_dim(self.dim(), other.dim())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        Err(Error::InvalidDimension { dim })
    } else {
        Ok(())
    }
}

fn check_square(m: &CMat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            left: m.nrows(),
            right: m.ncols(),
        });
    }
    check_dim(m.nrows())
}

pub(crate) fn same_dim(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left, right })
    }
}

impl<'a> Add<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn add(self, rhs: &'a Operator) -> Operator {
        Operator {
            matrix: &self.matrix + &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl<'a> Sub<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn sub(self, rhs: &'a Operator) -> Operator {
        Operator {
            matrix: &self.matrix - &rhs.matrix,
            hermitian: self.hermitian && rhs.hermitian,
        }
    }
}

impl<'a> Mul<&'a Operator> for &'a Operator {
    type Output = Operator;
    fn mul(self, rhs: &'a Operator) -> Operator {
        Operator {
            matrix: &self.matrix * &rhs.matrix,
            hermitian: false,
        }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

/// `XY - YX`
pub fn commutator(x: &Operator, y: &Operator) -> Result<Operator> {
    x.ensure_same_dim(y)?;
    Ok(Operator {
        matrix: &x.matrix * &y.matrix - &y.matrix * &x.matrix,
        hermitian: false,
    })
}

/// `XY + YX`
pub fn anticommutator(x: &Operator, y: &Operator) -> Result<Operator> {
    x.ensure_same_dim(y)?;
    Ok(Operator {
        matrix: &x.matrix * &y.matrix + &y.matrix * &x.matrix,
        hermitian: x.hermitian && y.hermitian,
    })
}

/// Tolerances used to accept a matrix as a density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateTolerances {
    pub trace: f64,
    pub hermitian: f64,
    pub positivity: f64,
}

impl Default for StateTolerances {
    fn default() -> Self {
        StateTolerances {
            trace: 1e-9,
            hermitian: HERMITIAN_TOL,
            positivity: 1e-8,
        }
    }
}

/// A Hermitian, unit-trace, positive semidefinite operator.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    op: Operator,
    trace_deviation: f64,
    min_eigenvalue: f64,
}

impl DensityMatrix {
    pub fn new(matrix: CMat) -> Result<Self> {
        Self::with_tolerances(matrix, StateTolerances::default())
    }

    /// Validates `matrix` against `tol`. The stored copy is symmetrized.
    pub fn with_tolerances(matrix: CMat, tol: StateTolerances) -> Result<Self> {
        check_square(&matrix)?;
        let residual = linalg::hermitian_residual(&matrix);
        if residual > tol.hermitian {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("hermiticity residual {residual:e} above {:e}", tol.hermitian),
            });
        }
        let matrix = linalg::symmetrize(&matrix);
        let trace_deviation = (linalg::trace(&matrix).re - 1.0).abs();
        if trace_deviation > tol.trace {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("trace deviates from 1 by {trace_deviation:e}"),
            });
        }
        let min_eigenvalue = linalg::min_eigenvalue(&matrix);
        if min_eigenvalue < -tol.positivity {
            return Err(Error::InvalidDensityMatrix {
                reason: format!("minimum eigenvalue {min_eigenvalue:e}"),
            });
        }
        Ok(DensityMatrix {
            op: Operator {
                matrix,
                hermitian: true,
            },
            trace_deviation,
            min_eigenvalue,
        })
    }

    /// Normalized projector onto `ket`.
    pub fn from_ket(ket: &CVec) -> Result<Self> {
        check_dim(ket.len())?;
        let norm = ket.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidDensityMatrix {
                reason: "zero state vector".into(),
            });
        }
        let psi = ket / c(norm);
        Self::new(&psi * psi.adjoint())
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Self::new(CMat::identity(dim, dim) / c(dim as f64))
    }

    /// Wraps an already symmetrized matrix whose diagnostics the caller
    /// computed; no validation.
    pub(crate) fn from_parts(matrix: CMat, trace_deviation: f64, min_eigenvalue: f64) -> Self {
        DensityMatrix {
            op: Operator {
                matrix,
                hermitian: true,
            },
            trace_deviation,
            min_eigenvalue,
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn matrix(&self) -> &CMat {
        self.op.matrix()
    }

    pub fn trace_deviation(&self) -> f64 {
        self.trace_deviation
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn purity(&self) -> f64 {
        let m = self.matrix();
        m.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Population in the two highest retained Fock levels.
    pub fn truncation_leak(&self) -> f64 {
        truncation_leak(self.matrix())
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        same_dim(self.dim(), other.dim())?;
        Ok(linalg::trace_distance(self.matrix(), other.matrix()))
    }
}

pub(crate) fn truncation_leak(m: &CMat) -> f64 {
    let n = m.nrows();
    m[(n - 1, n - 1)].re + m[(n - 2, n - 2)].re
}

/// `tr(rho X)`
pub fn expectation(rho: &DensityMatrix, x: &Operator) -> Result<C64> {
    same_dim(rho.dim(), x.dim())?;
    Ok(expectation_raw(rho.matrix(), x.matrix()))
}

pub(crate) fn expectation_raw(rho: &CMat, x: &CMat) -> C64 {
    let n = rho.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += rho[(i, j)] * x[(j, i)];
        }
    }
    acc
}

/// Harmonic-oscillator operators (unit mass) on a truncated Fock space.
#[derive(Clone, Debug)]
pub struct OscillatorOps {
    pub q: Operator,
    pub p: Operator,
    pub h: Operator,
    pub lower: Operator,
    pub raise: Operator,
    pub omega: f64,
    pub hbar: f64,
}

impl OscillatorOps {
    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    /// `a^dag a`, exact on the truncated space.
    pub fn number(&self) -> Operator {
        let n = self.dim();
        Operator {
            matrix: CMat::from_diagonal(&CVec::from_iterator(n, (0..n).map(|k| c(k as f64)))),
            hermitian: true,
        }
    }
}

/// Ladder operators from `sqrt(n)` matrix elements,
/// `Q = sqrt(hbar/2 omega)(a + a^dag)`, `P = i sqrt(hbar omega/2)(a^dag - a)`
/// and `H = P^2/2 + omega^2 Q^2/2`.
///
/// `H` is built from the truncated `P` and `Q`, so its top diagonal entry is
/// `hbar omega (dim - 1)/2` rather than `hbar omega (dim - 1/2)`; all other
/// entries are exact.
pub fn make_oscillator_ops(dim: usize, omega: f64, hbar: f64) -> Result<OscillatorOps> {
    check_dim(dim)?;
    require_positive("omega", omega)?;
    require_positive("hbar", hbar)?;
    let mut a = CMat::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = c((n as f64).sqrt());
    }
    let a_dag = a.adjoint();
    let q = (&a + &a_dag) * c((hbar / (2.0 * omega)).sqrt());
    let p = (&a_dag - &a) * (I * (hbar * omega / 2.0).sqrt());
    let h = (&p * &p) * c(0.5) + (&q * &q) * c(0.5 * omega * omega);
    Ok(OscillatorOps {
        q: Operator::hermitian(q, "Q")?,
        p: Operator::hermitian(p, "P")?,
        h: Operator::hermitian(h, "H")?,
        lower: Operator::new(a)?,
        raise: Operator::new(a_dag)?,
        omega,
        hbar,
    })
}

pub fn fock_ket(dim: usize, n: usize) -> Result<CVec> {
    check_dim(dim)?;
    if n >= dim {
        return Err(Error::InvalidIndex { index: n, dim });
    }
    let mut v = CVec::zeros(dim);
    v[n] = c(1.0);
    Ok(v)
}

pub fn fock_state(dim: usize, n: usize) -> Result<DensityMatrix> {
    DensityMatrix::from_ket(&fock_ket(dim, n)?)
}

/// Truncated and renormalized coherent-state vector. Fails when the
/// population beyond the truncation exceeds 1e-8.
pub fn coherent_ket(dim: usize, alpha: C64) -> Result<CVec> {
    check_dim(dim)?;
    let mut amp = C64::from_polar((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    let mut v = CVec::zeros(dim);
    for n in 0..dim {
        if n > 0 {
            amp *= alpha / (n as f64).sqrt();
        }
        v[n] = amp;
    }
    // tail beyond the truncation, summed until the terms stop mattering
    let mut leak = 0.0;
    let mut n = dim;
    loop {
        amp *= alpha / (n as f64).sqrt();
        let term = amp.norm_sqr();
        leak += term;
        if term < 1e-20 * leak.max(1e-300) || n > dim + 10_000 {
            break;
        }
        n += 1;
    }
    if leak > TRUNCATION_LEAK_MAX {
        return Err(Error::TruncationInsufficient {
            leak,
            threshold: TRUNCATION_LEAK_MAX,
        });
    }
    let norm = v.norm();
    Ok(v / c(norm))
}

pub fn coherent_state(dim: usize, alpha: C64) -> Result<DensityMatrix> {
    DensityMatrix::from_ket(&coherent_ket(dim, alpha)?)
}

/// Truncated Bose-Einstein state with mean occupation `nbar`: diagonal with
/// weights proportional to `(nbar/(1+nbar))^n`, renormalized after
/// truncation.
pub fn thermal_state(dim: usize, nbar: f64) -> Result<DensityMatrix> {
    check_dim(dim)?;
    crate::error::require_nonnegative("nbar", nbar)?;
    let ratio = nbar / (1.0 + nbar);
    let leak = ratio.powi(dim as i32);
    if leak > TRUNCATION_LEAK_MAX {
        return Err(Error::TruncationInsufficient {
            leak,
            threshold: TRUNCATION_LEAK_MAX,
        });
    }
    let weights: Vec<f64> = (0..dim).map(|n| ratio.powi(n as i32)).collect();
    let total: f64 = weights.iter().sum();
    let diag = CVec::from_iterator(dim, weights.iter().map(|w| c(w / total)));
    DensityMatrix::new(CMat::from_diagonal(&diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ops(dim: usize) -> OscillatorOps {
        make_oscillator_ops(dim, 1.0, 1.0).unwrap()
    }

    #[test]
    fn dim_two_position_operator() {
        let o = ops(2);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = CMat::from_row_slice(2, 2, &[c(0.0), c(s), c(s), c(0.0)]);
        assert!(linalg::max_abs_diff(o.q.matrix(), &expect) < 1e-15);
    }

    #[test]
    fn dim_two_hamiltonian_truncated_top_level() {
        // P^2/2 + Q^2/2 at dim 2 is I/2: the upper level is 1/2 instead of 3/2.
        let o = ops(2);
        let expect = CMat::identity(2, 2) * c(0.5);
        assert!(linalg::max_abs_diff(o.h.matrix(), &expect) < 1e-15);
    }

    #[test]
    fn hamiltonian_diagonal_away_from_top() {
        let o = make_oscillator_ops(12, 1.7, 0.6).unwrap();
        for n in 0..11 {
            let e = o.h.matrix()[(n, n)].re;
            assert!((e - 0.6 * 1.7 * (n as f64 + 0.5)).abs() < 1e-12);
        }
        assert!((o.h.matrix()[(11, 11)].re - 0.6 * 1.7 * 11.0 / 2.0).abs() < 1e-12);
        let h = (o.p.matrix() * o.p.matrix()) * c(0.5)
            + (o.q.matrix() * o.q.matrix()) * c(0.5 * 1.7 * 1.7);
        assert!(linalg::max_abs_diff(o.h.matrix(), &h) < 1e-12);
    }

    #[test]
    fn canonical_commutator_on_interior_block() {
        for &(dim, hbar) in &[(2, 1.0), (7, 0.3), (20, 2.0)] {
            let o = make_oscillator_ops(dim, 2.5, hbar).unwrap();
            let k = commutator(&o.q, &o.p).unwrap();
            assert!((k.matrix()[(0, 0)] - I * hbar).norm() < 1e-12);
            for i in 0..dim - 1 {
                for j in 0..dim - 1 {
                    let want = if i == j { I * hbar } else { c(0.0) };
                    assert!((k.matrix()[(i, j)] - want).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn commutator_identities() {
        let o = ops(6);
        assert!(linalg::max_abs(commutator(&o.q, &o.q).unwrap().matrix()) == 0.0);
        let id = Operator::identity(6).unwrap();
        let ac = anticommutator(&id, &o.p).unwrap();
        assert!(ac.max_abs_diff(&o.p.scale_real(2.0)) < 1e-15);
        let other = ops(5);
        assert!(matches!(
            commutator(&o.q, &other.q),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constructor_errors() {
        assert_eq!(
            make_oscillator_ops(1, 1.0, 1.0).unwrap_err(),
            Error::InvalidDimension { dim: 1 }
        );
        assert!(matches!(
            make_oscillator_ops(4, 0.0, 1.0),
            Err(Error::NonPositiveParameter { name: "omega", .. })
        ));
        assert!(matches!(
            make_oscillator_ops(4, 1.0, -1.0),
            Err(Error::NonPositiveParameter { name: "hbar", .. })
        ));
        assert_eq!(
            fock_state(4, 4).unwrap_err(),
            Error::InvalidIndex { index: 4, dim: 4 }
        );
        assert!(matches!(
            coherent_state(5, C64::new(3.0, 0.0)),
            Err(Error::TruncationInsufficient { .. })
        ));
        assert!(matches!(
            thermal_state(10, 5.0),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn ground_state_energy_and_trivial_expectations() {
        let o = ops(10);
        let g = fock_state(10, 0).unwrap();
        assert!((expectation(&g, &o.h).unwrap() - c(0.5)).norm() < 1e-14);
        let mixed = DensityMatrix::maximally_mixed(10).unwrap();
        let id = Operator::identity(10).unwrap();
        assert!((expectation(&mixed, &id).unwrap() - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn zero_temperature_and_zero_amplitude_give_vacuum() {
        let vac = fock_state(8, 0).unwrap();
        let t = thermal_state(8, 0.0).unwrap();
        let z = coherent_state(8, C64::new(0.0, 0.0)).unwrap();
        assert!(linalg::max_abs_diff(t.matrix(), vac.matrix()) < 1e-15);
        assert!(linalg::max_abs_diff(z.matrix(), vac.matrix()) < 1e-15);
    }

    #[test]
    fn thermal_state_mean_occupation() {
        // sum_n n (1-r) r^n = nbar, truncation at 40 discards r^40 ~ 1e-12
        let o = ops(40);
        let rho = thermal_state(40, 1.0).unwrap();
        let n = expectation(&rho, &o.number()).unwrap();
        assert!((n.re - 1.0).abs() < 1e-6);
        let e = expectation(&rho, &o.h).unwrap().re;
        assert!((e - 1.5).abs() < 1e-6);
    }

    #[test]
    fn coherent_state_position_brute_force() {
        // <Q> = sqrt(2 hbar/omega) Re(alpha); oracle: sum over the explicit
        // Poisson amplitudes at dim 40.
        let dim = 40;
        let alpha = 1.0_f64;
        let mut amps = vec![0.0; dim];
        let mut fact = 1.0;
        for n in 0..dim {
            if n > 0 {
                fact *= n as f64;
            }
            amps[n] = (-0.5 * alpha * alpha).exp() * alpha.powi(n as i32) / fact.sqrt();
        }
        // <a + a^dag> = 2 sum sqrt(n) c_{n-1} c_n
        let brute: f64 = (1..dim)
            .map(|n| 2.0 * (n as f64).sqrt() * amps[n - 1] * amps[n])
            .sum::<f64>()
            * (0.5_f64).sqrt();
        assert!((brute - 2f64.sqrt()).abs() < 1e-6);
        let o = ops(dim);
        let rho = coherent_state(dim, C64::new(alpha, 0.0)).unwrap();
        let q = expectation(&rho, &o.q).unwrap();
        assert!((q.re - brute).abs() < 1e-12);
        assert!((q.re - 2f64.sqrt()).abs() < 1e-6);
        assert!(q.im.abs() < 1e-10);
    }

    #[test]
    fn doubling_dim_is_converged() {
        for &(dim, alpha, nbar) in &[(30usize, 1.0, 0.5), (40, 1.5, 1.0)] {
            let small = ops(dim);
            let big = ops(2 * dim);
            let cs = coherent_state(dim, C64::new(alpha, 0.3)).unwrap();
            let cb = coherent_state(2 * dim, C64::new(alpha, 0.3)).unwrap();
            let ts = thermal_state(dim, nbar).unwrap();
            let tb = thermal_state(2 * dim, nbar).unwrap();
            for (s, b) in [(&cs, &cb), (&ts, &tb)] {
                for (xs, xb) in [(&small.q, &big.q), (&small.p, &big.p), (&small.h, &big.h)] {
                    let d = expectation(s, xs).unwrap() - expectation(b, xb).unwrap();
                    assert!(d.norm() < 1e-8, "dim {dim}: {d}");
                }
            }
        }
    }

    #[test]
    fn hermitian_rejects_non_hermitian_input() {
        let m = CMat::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        assert!(matches!(
            Operator::hermitian(m, "X"),
            Err(Error::NotHermitian { name: "X", .. })
        ));
    }

    #[test]
    fn density_matrix_validation() {
        let bad_trace = CMat::identity(3, 3);
        assert!(DensityMatrix::new(bad_trace).is_err());
        let neg = CMat::from_diagonal(&CVec::from_vec(vec![c(1.2), c(-0.2)]));
        assert!(DensityMatrix::new(neg).is_err());
        let ok = DensityMatrix::maximally_mixed(4).unwrap();
        assert!((ok.purity() - 0.25).abs() < 1e-15);
        assert!((ok.truncation_leak() - 0.5).abs() < 1e-15);
    }
}
