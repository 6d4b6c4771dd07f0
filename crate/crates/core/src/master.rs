//! Non-selective dynamics: the master equation in its two algebraic forms,
//! the superoperator, time integration and steady states.
//!
//! Superoperators act on row-major vectorizations: `vec(rho)[i*dim + j] =
//! rho[(i, j)]`, so `vec(X rho Y) = (X kron Y^T) vec(rho)`.
//!
//! The Lindblad form uses the dissipator
//! `-(kappa/2)(l^dag l rho - 2 l rho l^dag + rho l^dag l)`. With `l^dag l` on
//! the right (not `l l^dag`) it agrees with the double-commutator form for
//! every `A`, `B`; the tests pin this.

use nalgebra::SVD;

use crate::error::{require_positive, Error, Result};
use crate::grid::time_grid;
use crate::linalg::{self, c, CMat, CVec, RowSparse, I};
use crate::measurement::{effective_hamiltonian, lindblad_operator, MeasurementModel};
use crate::operator::{same_dim, truncation_leak, DensityMatrix, Operator};

/// Largest `dim^2` accepted by [`build_liouvillian`] and [`steady_state`].
pub const LIOUVILLIAN_CAP: usize = 4096;

/// Population in the top two Fock levels above which a run is flagged.
pub const LEAK_WARN: f64 = 1e-6;

/// `dt * ||L||` above which RK4 is no longer guaranteed stable.
const RK4_STABILITY_LIMIT: f64 = 2.5;

fn lambda_sq_coefficient(m: &MeasurementModel) -> f64 {
    if m.lambda() == 0.0 {
        0.0
    } else {
        m.lambda() * m.lambda() / (8.0 * m.kappa() * m.hbar() * m.hbar())
    }
}

fn comm(x: &CMat, y: &CMat) -> CMat {
    x * y - y * x
}

fn anticomm(x: &CMat, y: &CMat) -> CMat {
    x * y + y * x
}

fn check_dims(m: &MeasurementModel, h: &Operator, rho_dim: usize) -> Result<()> {
    same_dim(m.dim(), h.dim())?;
    same_dim(m.dim(), rho_dim)
}

/// `-(i/hbar)[H + C, rho] - (kappa/2)[A,[A,rho]] - lambda^2/(8 kappa hbar^2)[B,[B,rho]]
///  - (i lambda / 2 hbar)[B, {A, rho}]`
pub fn rhs_double_commutator(
    m: &MeasurementModel,
    h: &Operator,
    rho: &DensityMatrix,
) -> Result<Operator> {
    check_dims(m, h, rho.dim())?;
    Operator::new(double_commutator_raw(m, h, rho.matrix()))
}

pub(crate) fn double_commutator_raw(m: &MeasurementModel, h: &Operator, rho: &CMat) -> CMat {
    let a = m.a().matrix();
    let b = m.b().matrix();
    let hc = h.matrix() + m.c().matrix();
    let hbar = m.hbar();
    comm(&hc, rho) * (-I / hbar)
        - comm(a, &comm(a, rho)) * c(m.kappa() / 2.0)
        - comm(b, &comm(b, rho)) * c(lambda_sq_coefficient(m))
        - comm(b, &anticomm(a, rho)) * (I * (m.lambda() / (2.0 * hbar)))
}

/// `-(i/hbar)[H + C + shift, rho] - (kappa/2)(l^dag l rho - 2 l rho l^dag + rho l^dag l)`
pub fn rhs_lindblad(m: &MeasurementModel, h: &Operator, rho: &DensityMatrix) -> Result<Operator> {
    check_dims(m, h, rho.dim())?;
    let heff = effective_hamiltonian(m, h)?;
    let l = lindblad_operator(m);
    let l = l.matrix();
    let ld = l.adjoint();
    let ldl = &ld * l;
    let r = rho.matrix();
    let out = comm(heff.op.matrix(), r) * (-I / m.hbar())
        - (&ldl * r - (l * r * &ld) * c(2.0) + r * &ldl) * c(m.kappa() / 2.0);
    Operator::new(out)
}

/// Precomputed generator in the form
/// `L(rho) = K rho + rho K^dag + kappa l rho l^dag` with
/// `K = -(i/hbar) H_eff - (kappa/2) l^dag l`.
#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    dim: usize,
    kappa: f64,
    k: CMat,
    l: CMat,
    k_rows: RowSparse,
    l_rows: RowSparse,
}

impl LindbladGenerator {
    pub fn new(m: &MeasurementModel, h: &Operator) -> Result<Self> {
        same_dim(m.dim(), h.dim())?;
        let heff = effective_hamiltonian(m, h)?;
        let l = lindblad_operator(m).into_matrix();
        let ldl = l.adjoint() * &l;
        let k = heff.op.matrix() * (-I / m.hbar()) - ldl * c(m.kappa() / 2.0);
        Ok(LindbladGenerator {
            dim: m.dim(),
            kappa: m.kappa(),
            k_rows: RowSparse::new(&k),
            l_rows: RowSparse::new(&l),
            k,
            l,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Applies the generator to an arbitrary square matrix.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let rho_dag = rho.adjoint();
        let left = self.k_rows.mul(rho);
        let right = self.k_rows.mul(&rho_dag).adjoint();
        let lr = self.l_rows.mul(&rho_dag).adjoint();
        let jump = self.l_rows.mul(&lr);
        left + right + jump * c(self.kappa)
    }

    /// Same as [`apply`](Self::apply) for Hermitian `rho`, reusing buffers.
    /// The result is Hermitian to roundoff.
    fn apply_hermitian(&self, rho: &CMat, out: &mut CMat, scratch: &mut CMat) {
        self.k_rows.mul_into(rho, out);
        self.l_rows.mul_into(rho, scratch);
        let lr_dag = scratch.adjoint();
        self.l_rows.mul_into(&lr_dag, scratch);
        let n = self.dim;
        for j in 0..n {
            for i in 0..j {
                let v = out[(i, j)] + out[(j, i)].conj() + scratch[(i, j)] * self.kappa;
                let w = out[(j, i)] + out[(i, j)].conj() + scratch[(j, i)] * self.kappa;
                let s = (v + w.conj()) * 0.5;
                out[(i, j)] = s;
                out[(j, i)] = s.conj();
            }
            let d = out[(j, j)].re * 2.0 + scratch[(j, j)].re * self.kappa;
            out[(j, j)] = c(d);
        }
    }

    /// Upper bound on the generator's operator norm (Hilbert-Schmidt),
    /// `2 ||K|| + kappa ||l||^2`.
    pub fn norm_bound(&self) -> f64 {
        let ln = linalg::spectral_norm(&self.l);
        2.0 * linalg::spectral_norm(&self.k) + self.kappa * ln * ln
    }

    /// The `dim^2 x dim^2` matrix of the generator.
    pub fn superoperator(&self) -> CMat {
        let id = CMat::identity(self.dim, self.dim);
        self.k.kronecker(&id)
            + id.kronecker(&self.k.map(|z| z.conj()))
            + self.l.kronecker(&self.l.map(|z| z.conj())) * c(self.kappa)
    }
}

/// Row-major vectorization.
pub fn vectorize(m: &CMat) -> CVec {
    let (rows, cols) = m.shape();
    CVec::from_iterator(rows * cols, (0..rows).flat_map(|i| (0..cols).map(move |j| m[(i, j)])))
}

pub fn unvectorize(v: &CVec, dim: usize) -> CMat {
    CMat::from_row_slice(dim, dim, v.as_slice())
}

/// The generator as an explicit superoperator matrix.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    pub model: MeasurementModel,
    pub h: Operator,
    pub matrix: CMat,
}

impl Liouvillian {
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn apply(&self, rho: &CMat) -> CMat {
        unvectorize(&(&self.matrix * vectorize(rho)), self.dim())
    }

    /// `vec(I)^T L`, which vanishes for a trace-preserving generator.
    pub fn trace_functional_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for col in 0..n * n {
            let s: linalg::C64 = (0..n).map(|i| self.matrix[(i * n + i, col)]).sum();
            worst = worst.max(s.norm());
        }
        worst
    }
}

pub fn build_liouvillian(m: &MeasurementModel, h: &Operator) -> Result<Liouvillian> {
    build_liouvillian_capped(m, h, LIOUVILLIAN_CAP)
}

pub fn build_liouvillian_capped(m: &MeasurementModel, h: &Operator, cap: usize) -> Result<Liouvillian> {
    let size = m.dim() * m.dim();
    if size > cap {
        return Err(Error::DimensionCapExceeded { size, cap });
    }
    let generator = LindbladGenerator::new(m, h)?;
    Ok(Liouvillian {
        model: m.clone(),
        h: h.clone(),
        matrix: generator.superoperator(),
    })
}

/// What to do when the state leaves the positive cone by more than the
/// tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PositivityPolicy {
    #[default]
    Flag,
    Abort,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Store every `output_stride`-th step (and always the first and last).
    pub output_stride: usize,
    /// Eigenvalues below `-positivity_tol` are flagged.
    pub positivity_tol: f64,
    pub trace_tol: f64,
    pub leak_warn: f64,
    pub policy: PositivityPolicy,
}

impl EvolveOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        EvolveOptions {
            dt,
            t_final,
            output_stride: 1,
            positivity_tol: 1e-6,
            trace_tol: 1e-8,
            leak_warn: LEAK_WARN,
            policy: PositivityPolicy::Flag,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.output_stride = stride.max(1);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub trace_drift: f64,
    /// Largest Hermiticity residual seen before re-symmetrization since the
    /// previous sample.
    pub hermitian_residual: f64,
    pub min_eigenvalue: f64,
    pub leak: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Warning {
    Positivity { time: f64, min_eigenvalue: f64 },
    TraceDrift { time: f64, drift: f64 },
    TruncationLeak { time: f64, leak: f64 },
}

#[derive(Clone, Debug)]
pub struct EvolutionSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub warnings: Vec<Warning>,
}

impl EvolutionSeries {
    pub fn flagged(&self) -> bool {
        !self.warnings.is_empty()
    }

    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("series holds the initial state")
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.diagnostics.iter().fold(0.0, |a, d| a.max(d.trace_drift))
    }

    pub fn max_hermitian_residual(&self) -> f64 {
        self.diagnostics
            .iter()
            .fold(0.0, |a, d| a.max(d.hermitian_residual))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.diagnostics
            .iter()
            .fold(f64::INFINITY, |a, d| a.min(d.min_eigenvalue))
    }

    pub fn max_leak(&self) -> f64 {
        self.diagnostics.iter().fold(0.0, |a, d| a.max(d.leak))
    }
}

/// Integrates the master equation with classical fixed-step RK4.
///
/// A practical step size is `dt <= 0.01 / max(omega, kappa ||A||^2, gamma)`
/// in terms of the physical scales; steps where `dt` times the generator
/// norm bound exceeds the RK4 stability limit are rejected outright.
pub fn evolve(
    rho0: &DensityMatrix,
    m: &MeasurementModel,
    h: &Operator,
    opts: &EvolveOptions,
) -> Result<EvolutionSeries> {
    check_dims(m, h, rho0.dim())?;
    require_positive("positivity_tol", opts.positivity_tol)?;
    let (n_steps, dt) = time_grid(opts.t_final, opts.dt)?;
    let generator = LindbladGenerator::new(m, h)?;
    let bound = generator.norm_bound();
    if bound * dt > RK4_STABILITY_LIMIT {
        return Err(Error::StepSizeRejected {
            dt,
            product: bound * dt,
            limit: RK4_STABILITY_LIMIT,
        });
    }
    log::debug!("evolve: {n_steps} steps of {dt}, dt*|L| <= {:.3}", bound * dt);

    let dim = rho0.dim();
    let stride = opts.output_stride.max(1);
    let mut series = EvolutionSeries {
        times: Vec::with_capacity(n_steps / stride + 2),
        states: Vec::with_capacity(n_steps / stride + 2),
        diagnostics: Vec::with_capacity(n_steps / stride + 2),
        warnings: Vec::new(),
    };

    let mut rho = rho0.matrix().clone();
    let mut k = [
        CMat::zeros(dim, dim),
        CMat::zeros(dim, dim),
        CMat::zeros(dim, dim),
        CMat::zeros(dim, dim),
    ];
    let mut scratch = CMat::zeros(dim, dim);
    let mut stage = CMat::zeros(dim, dim);
    let mut herm_residual: f64 = 0.0;

    record(&mut series, 0.0, &rho, 0.0, opts)?;
    for step in 1..=n_steps {
        generator.apply_hermitian(&rho, &mut k[0], &mut scratch);
        euler_stage(&mut stage, &rho, dt / 2.0, &k[0]);
        generator.apply_hermitian(&stage, &mut k[1], &mut scratch);
        euler_stage(&mut stage, &rho, dt / 2.0, &k[1]);
        generator.apply_hermitian(&stage, &mut k[2], &mut scratch);
        euler_stage(&mut stage, &rho, dt, &k[2]);
        generator.apply_hermitian(&stage, &mut k[3], &mut scratch);
        for j in 0..dim {
            for i in 0..dim {
                rho[(i, j)] += (k[0][(i, j)] + k[1][(i, j)] * 2.0 + k[2][(i, j)] * 2.0 + k[3][(i, j)])
                    * (dt / 6.0);
            }
        }
        herm_residual = herm_residual.max(linalg::hermitian_residual(&rho));
        rho = linalg::symmetrize(&rho);

        if step % stride == 0 || step == n_steps {
            record(&mut series, step as f64 * dt, &rho, herm_residual, opts)?;
            herm_residual = 0.0;
        }
    }
    Ok(series)
}

/// `stage = rho + h k`
fn euler_stage(stage: &mut CMat, rho: &CMat, h: f64, k: &CMat) {
    for ((s, r), d) in stage
        .as_mut_slice()
        .iter_mut()
        .zip(rho.as_slice())
        .zip(k.as_slice())
    {
        *s = r + d * h;
    }
}

fn record(
    series: &mut EvolutionSeries,
    time: f64,
    rho: &CMat,
    hermitian_residual: f64,
    opts: &EvolveOptions,
) -> Result<()> {
    let trace_drift = (linalg::trace(rho).re - 1.0).abs();
    let min_eigenvalue = linalg::min_eigenvalue(rho);
    let leak = truncation_leak(rho);
    if min_eigenvalue < -opts.positivity_tol {
        if opts.policy == PositivityPolicy::Abort {
            return Err(Error::PositivityViolation {
                time,
                min_eigenvalue,
            });
        }
        log::warn!("positivity violated at t = {time}: {min_eigenvalue:e}");
        series.warnings.push(Warning::Positivity {
            time,
            min_eigenvalue,
        });
    }
    if trace_drift > opts.trace_tol {
        log::warn!("trace drift {trace_drift:e} at t = {time}");
        series.warnings.push(Warning::TraceDrift {
            time,
            drift: trace_drift,
        });
    }
    if leak > opts.leak_warn {
        log::warn!("truncation leak {leak:e} at t = {time}");
        series.warnings.push(Warning::TruncationLeak { time, leak });
    }
    series.times.push(time);
    series.states.push(DensityMatrix::from_parts(
        rho.clone(),
        trace_drift,
        min_eigenvalue,
    ));
    series.diagnostics.push(StepDiagnostics {
        trace_drift,
        hermitian_residual,
        min_eigenvalue,
        leak,
    });
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SteadyState {
    pub state: DensityMatrix,
    /// `max |L rho_ss|` elementwise.
    pub residual: f64,
    pub smallest_singular_value: f64,
    pub second_singular_value: f64,
    pub leak: f64,
    /// Set when the truncated steady state sits at the edge of the basis,
    /// i.e. no physical (normalizable) steady state is resolved.
    pub flagged: bool,
}

/// Kernel of the Liouvillian from its smallest right singular vector.
pub fn steady_state(m: &MeasurementModel, h: &Operator) -> Result<SteadyState> {
    let liouvillian = build_liouvillian(m, h)?;
    let dim = m.dim();
    let svd = SVD::new(liouvillian.matrix.clone(), false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma = &svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[a].total_cmp(&sigma[b]));
    let smallest = sigma[order[0]];
    let second = sigma[order[1]];
    let largest = sigma[order[order.len() - 1]];
    if second <= 1e-9 * largest {
        return Err(Error::DegenerateKernel { sigma: second });
    }
    let v: CVec = v_t.row(order[0]).adjoint();
    let raw = unvectorize(&v, dim);
    let tr = linalg::trace(&raw);
    if tr.norm() < 1e-300 {
        return Err(Error::NoConvergence { residual: f64::NAN });
    }
    let rho = linalg::symmetrize(&(raw / tr));
    let residual = linalg::max_abs(&liouvillian.apply(&rho));
    if residual > 1e-10 {
        return Err(Error::NoConvergence { residual });
    }
    let state = DensityMatrix::new(rho)?;
    let leak = state.truncation_leak();
    let flagged = leak > LEAK_WARN;
    if flagged {
        log::warn!("steady state reaches the truncation edge (leak {leak:e})");
    }
    Ok(SteadyState {
        state,
        residual,
        smallest_singular_value: smallest,
        second_singular_value: second,
        leak,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, max_abs_diff, C64};
    use crate::measurement::oscillator_model;
    use crate::moments::{moments_from_density, steady_moments, MomentParams};
    use crate::operator::{coherent_state, commutator, expectation, fock_state, make_oscillator_ops};
    use crate::randmat::{random_density, random_hermitian};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Case {
        model: MeasurementModel,
        h: Operator,
        rho: DensityMatrix,
    }

    fn random_case(dim: usize, rng: &mut ChaCha8Rng) -> Case {
        let herm = |rng: &mut ChaCha8Rng, name| Operator::hermitian(random_hermitian(dim, rng), name).unwrap();
        let a = herm(rng, "A");
        let b = herm(rng, "B");
        let cc = herm(rng, "C");
        let h = herm(rng, "H");
        let kappa = rng.random_range(0.1..2.0);
        let lambda = rng.random_range(0.0..2.0);
        let hbar = rng.random_range(0.5..2.0);
        Case {
            model: MeasurementModel::new(a, b, Some(cc), kappa, lambda, hbar).unwrap(),
            h,
            rho: DensityMatrix::new(random_density(dim, rng)).unwrap(),
        }
    }

    #[test]
    fn minimally_disturbing_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = 5;
        let a = Operator::hermitian(random_hermitian(dim, &mut rng), "A").unwrap();
        let b = Operator::hermitian(random_hermitian(dim, &mut rng), "B").unwrap();
        let h = Operator::hermitian(random_hermitian(dim, &mut rng), "H").unwrap();
        let m = MeasurementModel::new(a.clone(), b, None, 0.6, 0.0, 1.3).unwrap();
        let rho = DensityMatrix::new(random_density(dim, &mut rng)).unwrap();
        let (am, r) = (a.matrix(), rho.matrix());
        let want = comm(h.matrix(), r) * (-I / 1.3) - comm(am, &comm(am, r)) * c(0.3);
        let dc = rhs_double_commutator(&m, &h, &rho).unwrap();
        assert!(max_abs_diff(dc.matrix(), &want) < 1e-13);
        let want_l = comm(h.matrix(), r) * (-I / 1.3)
            - (am * am * r - am * r * am * c(2.0) + r * am * am) * c(0.3);
        let lf = rhs_lindblad(&m, &h, &rho).unwrap();
        assert!(max_abs_diff(lf.matrix(), &want_l) < 1e-13);
    }

    #[test]
    fn maximally_mixed_input() {
        // double commutators of I vanish; -(i lambda/2 hbar)[B, 2A/dim] remains
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dim = 6;
        let a = Operator::hermitian(random_hermitian(dim, &mut rng), "A").unwrap();
        let b = Operator::hermitian(random_hermitian(dim, &mut rng), "B").unwrap();
        let (lambda, hbar) = (0.7, 0.9);
        let m = MeasurementModel::new(a.clone(), b.clone(), None, 0.4, lambda, hbar).unwrap();
        let zero = Operator::zeros(dim).unwrap();
        let rho = DensityMatrix::maximally_mixed(dim).unwrap();
        let out = rhs_double_commutator(&m, &zero, &rho).unwrap();
        let want = commutator(&b, &a).unwrap().scale(-I * (lambda / (hbar * dim as f64)));
        assert!(out.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn lindblad_form_equals_double_commutator_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 2..=16 {
            for _ in 0..4 {
                let case = random_case(dim, &mut rng);
                let dc = rhs_double_commutator(&case.model, &case.h, &case.rho).unwrap();
                let lf = rhs_lindblad(&case.model, &case.h, &case.rho).unwrap();
                let d = dc.max_abs_diff(&lf);
                assert!(d < 1e-12, "dim {dim}: {d:e}");
                assert!(dc.trace().norm() < 1e-12);
                assert!(lf.trace().norm() < 1e-12);
                assert!(lf.hermitian_residual() < 1e-12);
            }
        }
    }

    #[test]
    fn dissipator_right_term_must_be_l_dag_l() {
        // rho l l^dag in place of rho l^dag l breaks the equivalence whenever
        // A and B do not commute.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let case = random_case(4, &mut rng);
        let m = &case.model;
        let l = lindblad_operator(m).into_matrix();
        let ld = l.adjoint();
        let r = case.rho.matrix();
        let heff = effective_hamiltonian(m, &case.h).unwrap();
        let swapped = comm(heff.op.matrix(), r) * (-I / m.hbar())
            - (&ld * &l * r - &l * r * &ld * c(2.0) + r * &l * &ld) * c(m.kappa() / 2.0);
        let dc = rhs_double_commutator(m, &case.h, &case.rho).unwrap();
        assert!(m.lambda() > 0.0);
        assert!(max_abs_diff(&swapped, dc.matrix()) > 1e-3);
    }

    #[test]
    fn generator_matches_explicit_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [2, 5, 9] {
            let case = random_case(dim, &mut rng);
            let g = LindbladGenerator::new(&case.model, &case.h).unwrap();
            let lf = rhs_lindblad(&case.model, &case.h, &case.rho).unwrap();
            assert!(max_abs_diff(&g.apply(case.rho.matrix()), lf.matrix()) < 1e-13);
            let (mut out, mut scratch) = (CMat::zeros(dim, dim), CMat::zeros(dim, dim));
            g.apply_hermitian(case.rho.matrix(), &mut out, &mut scratch);
            assert!(max_abs_diff(&out, lf.matrix()) < 1e-13);
        }
    }

    #[test]
    fn superoperator_action_and_trace_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let case = random_case(5, &mut rng);
        let liou = build_liouvillian(&case.model, &case.h).unwrap();
        for _ in 0..100 {
            let rho = DensityMatrix::new(random_density(5, &mut rng)).unwrap();
            let direct = rhs_lindblad(&case.model, &case.h, &rho).unwrap();
            assert!(max_abs_diff(&liou.apply(rho.matrix()), direct.matrix()) < 1e-12);
        }
        assert!(liou.trace_functional_residual() < 1e-10);
        // row-major convention: vec(rho)[i*dim + j] = rho[(i, j)]
        let m = CMat::from_fn(3, 3, |i, j| C64::new(i as f64, j as f64));
        let v = vectorize(&m);
        assert_eq!(v[5], m[(1, 2)]);
        assert_eq!(unvectorize(&v, 3), m);
    }

    #[test]
    fn unitary_superoperator_has_imaginary_spectrum() {
        let h = Operator::hermitian(
            CMat::from_diagonal(&CVec::from_vec(vec![c(0.5), c(-0.5)])),
            "H",
        )
        .unwrap();
        let zero = Operator::zeros(2).unwrap();
        let m = MeasurementModel::unmonitored(zero.clone(), zero, None, 1.0).unwrap();
        let liou = build_liouvillian(&m, &h).unwrap();
        // i L Hermitian <=> spectrum of L on the imaginary axis
        let il = &liou.matrix * I;
        assert!(linalg::hermitian_residual(&il) < 1e-15);
        assert!(max_abs(&liou.matrix) > 0.5);
    }

    #[test]
    fn liouvillian_cap() {
        let ops = make_oscillator_ops(65, 1.0, 1.0).unwrap();
        let m = oscillator_model(&ops, 0.1, 0.2).unwrap();
        assert_eq!(
            build_liouvillian(&m, &ops.h).unwrap_err(),
            Error::DimensionCapExceeded { size: 65 * 65, cap: LIOUVILLIAN_CAP }
        );
    }

    #[test]
    fn unitary_evolution_keeps_amplitude() {
        let dim = 30;
        let ops = make_oscillator_ops(dim, 1.0, 1.0).unwrap();
        let m = MeasurementModel::unmonitored(ops.p.clone(), ops.q.clone(), None, 1.0).unwrap();
        let rho0 = coherent_state(dim, C64::new(1.0, 0.0)).unwrap();
        let period = 2.0 * std::f64::consts::PI;
        let opts = EvolveOptions::new(10.0 * period, 1e-3).with_stride(50);
        let series = evolve(&rho0, &m, &ops.h, &opts).unwrap();
        for (t, s) in series.times.iter().zip(&series.states) {
            let q = expectation(s, &ops.q).unwrap().re;
            let p = expectation(s, &ops.p).unwrap().re;
            assert!((q - 2f64.sqrt() * t.cos()).abs() < 1e-6, "t = {t}");
            assert!(((q * q + p * p).sqrt() - 2f64.sqrt()).abs() < 1e-6);
        }
        assert!(series.max_trace_drift() < 1e-8);
        assert!(!series.flagged());
    }

    #[test]
    fn evolve_rejects_unstable_step() {
        let ops = make_oscillator_ops(20, 1.0, 1.0).unwrap();
        let m = oscillator_model(&ops, 0.1, 0.2).unwrap();
        let rho0 = fock_state(20, 0).unwrap();
        assert!(matches!(
            evolve(&rho0, &m, &ops.h, &EvolveOptions::new(1.0, 0.5)),
            Err(Error::StepSizeRejected { .. })
        ));
    }

    #[test]
    fn positivity_policy_abort() {
        // a slightly negative initial eigenvalue trips the abort policy at t = 0
        let dim = 4;
        let ops = make_oscillator_ops(dim, 1.0, 1.0).unwrap();
        let m = oscillator_model(&ops, 0.1, 0.2).unwrap();
        let diag = CVec::from_vec(vec![c(0.6), c(0.4 + 5e-9), c(-5e-9), c(0.0)]);
        let rho0 = DensityMatrix::new(CMat::from_diagonal(&diag)).unwrap();
        let mut opts = EvolveOptions::new(0.01, 1e-3);
        opts.positivity_tol = 1e-9;
        opts.policy = PositivityPolicy::Abort;
        assert!(matches!(
            evolve(&rho0, &m, &ops.h, &opts),
            Err(Error::PositivityViolation { .. })
        ));
        opts.policy = PositivityPolicy::Flag;
        let series = evolve(&rho0, &m, &ops.h, &opts).unwrap();
        assert!(series.flagged());
    }

    #[test]
    fn purity_cannot_grow_from_maximally_mixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dim = 6;
        let a = Operator::hermitian(random_hermitian(dim, &mut rng), "A").unwrap();
        let b = Operator::hermitian(random_hermitian(dim, &mut rng), "B").unwrap();
        let h = Operator::hermitian(random_hermitian(dim, &mut rng), "H").unwrap();
        let m = MeasurementModel::new(a, b, None, 0.8, 0.0, 1.0).unwrap();
        let rho = DensityMatrix::maximally_mixed(dim).unwrap();
        let d = rhs_lindblad(&m, &h, &rho).unwrap();
        let dpurity = 2.0 * crate::operator::expectation_raw(rho.matrix(), d.matrix()).re;
        assert!(dpurity <= 1e-10);
    }

    #[test]
    fn steady_state_matches_closed_form_moments() {
        let dim = 16;
        let (omega, kappa, lambda) = (1.0, 0.1, 0.2);
        let ops = make_oscillator_ops(dim, omega, 1.0).unwrap();
        let m = oscillator_model(&ops, kappa, lambda).unwrap();
        let ss = steady_state(&m, &ops.h).unwrap();
        assert!(!ss.flagged);
        assert!(ss.residual < 1e-10);
        assert!(ss.state.min_eigenvalue() > -1e-8);
        let got = moments_from_density(&ss.state, &ops).unwrap();
        let want = steady_moments(&MomentParams::new(omega, lambda, kappa, 1.0).unwrap()).unwrap();
        assert!(got.max_abs_diff(&want) < 1e-4, "{got:?} vs {want:?}");

        // long-time evolution lands on the same state
        let rho0 = fock_state(dim, 0).unwrap();
        let series = evolve(&rho0, &m, &ops.h, &EvolveOptions::new(150.0, 5e-3).with_stride(1000)).unwrap();
        let late = moments_from_density(series.last(), &ops).unwrap();
        assert!(late.max_abs_diff(&got) < 1e-4);
    }

    #[test]
    fn undamped_momentum_monitoring_has_no_physical_steady_state() {
        let ops = make_oscillator_ops(12, 1.0, 1.0).unwrap();
        let m = oscillator_model(&ops, 0.2, 0.0).unwrap();
        let ss = steady_state(&m, &ops.h).unwrap();
        assert!(ss.flagged);
        assert!(ss.leak > LEAK_WARN);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn trace_and_hermiticity_preserved(seed in any::<u64>(), dim in 2usize..12) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let case = random_case(dim, &mut rng);
                let lf = rhs_lindblad(&case.model, &case.h, &case.rho).unwrap();
                let dc = rhs_double_commutator(&case.model, &case.h, &case.rho).unwrap();
                prop_assert!(lf.trace().norm() < 1e-12);
                prop_assert!(dc.trace().norm() < 1e-12);
                prop_assert!(lf.hermitian_residual() < 1e-12);
                prop_assert!(dc.hermitian_residual() < 1e-12);
                prop_assert!(lf.max_abs_diff(&dc) < 1e-12);
            }

            #[test]
            fn evolution_stays_positive(seed in any::<u64>(), dim in 2usize..7) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let case = random_case(dim, &mut rng);
                let opts = EvolveOptions::new(2.0, 1e-2).with_stride(20);
                let series = evolve(&case.rho, &case.model, &case.h, &opts).unwrap();
                prop_assert!(series.min_eigenvalue() >= -1e-6);
                prop_assert!(series.max_trace_drift() < 1e-8);
            }
        }
    }
}
