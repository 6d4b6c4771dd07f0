//! Readout-conditioned (selective) evolution in discrete time.
//!
//! One step of length `dt` given the readout `a` applies
//!
//! 1. `exp(-i (H + C) dt / 2 hbar)`
//! 2. the restriction `exp(-kappa dt (A - a)^2)`
//! 3. the back-action phase `exp(-i lambda a B dt / hbar)`
//! 4. `exp(-i (H + C) dt / 2 hbar)`
//!
//! so the monitored observable acts before its back-action. Readouts are
//! drawn with density `p(a) = sqrt(2 kappa dt / pi) || M(a) psi ||^2`, where
//! `M(a)` is the step above and `psi` the normalized state. The family
//! `{ sqrt(p-normalization) M(a) }` resolves the identity, so averaging the
//! normalized conditioned states over readouts reproduces the master
//! equation up to `O(dt^2)` per step.
//!
//! Per-trajectory random streams are `ChaCha8Rng::seed_from_u64(seed)` with
//! the stream number set to the trajectory index; results never depend on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{require_positive, Error, Result};
use crate::grid::time_grid;
use crate::linalg::{self, c, CMat, CVec, C64};
use crate::measurement::MeasurementModel;
use crate::operator::{same_dim, DensityMatrix, Operator};

/// A step whose squared norm falls below this is treated as a collapse.
pub const NORM_UNDERFLOW: f64 = 1e-150;

/// Trajectories per work item in the ensemble runner.
const CHUNK: usize = 16;

/// Deterministic per-trajectory random stream.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Row-major complex matrix split into real and imaginary planes.
#[derive(Clone, Debug)]
struct SplitMatrix {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitMatrix {
    fn new(m: &CMat) -> Self {
        let n = m.nrows();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        SplitMatrix { n, re, im }
    }

    #[inline]
    fn apply(&self, x: &SplitVec, y: &mut SplitVec) {
        let n = self.n;
        for i in 0..n {
            let rr = &self.re[i * n..(i + 1) * n];
            let ri = &self.im[i * n..(i + 1) * n];
            let (mut sr, mut si) = (0.0, 0.0);
            for j in 0..n {
                sr += rr[j] * x.re[j] - ri[j] * x.im[j];
                si += rr[j] * x.im[j] + ri[j] * x.re[j];
            }
            y.re[i] = sr;
            y.im[i] = si;
        }
    }
}

#[derive(Clone, Debug)]
struct SplitVec {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl SplitVec {
    fn zeros(n: usize) -> Self {
        SplitVec {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    fn from_cvec(v: &CVec) -> Self {
        SplitVec {
            re: v.iter().map(|z| z.re).collect(),
            im: v.iter().map(|z| z.im).collect(),
        }
    }

    fn to_cvec(&self) -> CVec {
        CVec::from_iterator(
            self.re.len(),
            self.re.iter().zip(&self.im).map(|(&r, &i)| C64::new(r, i)),
        )
    }

    fn norm_sqr(&self) -> f64 {
        self.re.iter().map(|x| x * x).sum::<f64>() + self.im.iter().map(|x| x * x).sum::<f64>()
    }

    fn scale(&mut self, s: f64) {
        self.re.iter_mut().for_each(|x| *x *= s);
        self.im.iter_mut().for_each(|x| *x *= s);
    }
}

/// Cached eigen-decompositions and propagators for steps of fixed `dt`.
#[derive(Clone, Debug)]
pub struct StepKernel {
    dim: usize,
    dt: f64,
    kappa: f64,
    lambda: f64,
    hbar: f64,
    a_vals: Vec<f64>,
    a_vecs: CMat,
    b_vals: Vec<f64>,
    b_vecs: CMat,
    u_half: CMat,
    // A-basis coordinates of U_half psi
    first: SplitMatrix,
    // A basis -> B basis
    a_to_b: SplitMatrix,
    // B basis (after back-action) -> A-basis coordinates of the next U_half psi
    b_to_next: SplitMatrix,
    // B basis (after back-action) -> Fock basis at the end of the step
    b_to_fock: SplitMatrix,
}

impl StepKernel {
    pub fn new(m: &MeasurementModel, h: &Operator, dt: f64) -> Result<Self> {
        require_positive("dt", dt)?;
        same_dim(m.dim(), h.dim())?;
        let hc = h + m.c();
        let u_half = linalg::unitary_exp(hc.matrix(), dt / (2.0 * m.hbar()));
        let (a_vals, a_vecs) = linalg::hermitian_eigen(m.a().matrix());
        let (b_vals, b_vecs) = linalg::hermitian_eigen(m.b().matrix());
        let first = a_vecs.adjoint() * &u_half;
        let a_to_b = b_vecs.adjoint() * &a_vecs;
        let b_to_fock = &u_half * &b_vecs;
        let b_to_next = a_vecs.adjoint() * &u_half * &b_to_fock;
        Ok(StepKernel {
            dim: m.dim(),
            dt,
            kappa: m.kappa(),
            lambda: m.lambda(),
            hbar: m.hbar(),
            first: SplitMatrix::new(&first),
            a_to_b: SplitMatrix::new(&a_to_b),
            b_to_next: SplitMatrix::new(&b_to_next),
            b_to_fock: SplitMatrix::new(&b_to_fock),
            a_vals,
            a_vecs,
            b_vals,
            b_vecs,
            u_half,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Eigenvalues of the monitored observable, ascending.
    pub fn a_eigenvalues(&self) -> &[f64] {
        &self.a_vals
    }

    fn monitored(&self) -> bool {
        self.kappa > 0.0
    }

    /// Standard deviation `1/sqrt(4 kappa dt)` of the readout around an
    /// eigenvalue of `A`.
    pub fn readout_std(&self) -> f64 {
        1.0 / (4.0 * self.kappa * self.dt).sqrt()
    }

    /// `sqrt(2 kappa dt / pi)`: normalizes `||M(a) psi||^2` to a density in `a`.
    pub fn readout_normalization(&self) -> f64 {
        (2.0 * self.kappa * self.dt / std::f64::consts::PI).sqrt()
    }

    #[inline]
    fn restriction(&self, alpha: f64, a: f64) -> f64 {
        (-self.kappa * self.dt * (alpha - a) * (alpha - a)).exp()
    }

    #[inline]
    fn back_action(&self, b: f64, a: f64) -> C64 {
        C64::from_polar(1.0, -self.lambda * a * b * self.dt / self.hbar)
    }

    /// Unnormalized `M(a) psi` in the Fock basis.
    pub fn conditional_step(&self, psi: &CVec, a: f64) -> Result<CVec> {
        same_dim(psi.len(), self.dim)?;
        let mut x = self.a_vecs.adjoint() * (&self.u_half * psi);
        for (xi, &alpha) in x.iter_mut().zip(&self.a_vals) {
            *xi *= self.restriction(alpha, a);
        }
        let mut y = self.b_vecs.adjoint() * (&self.a_vecs * x);
        for (yi, &b) in y.iter_mut().zip(&self.b_vals) {
            *yi *= self.back_action(b, a);
        }
        Ok(&self.u_half * (&self.b_vecs * y))
    }

    /// Draws a readout for a measurement acting on `psi`: an eigenvalue of
    /// `A` with Born weight, then Gaussian noise of variance
    /// `1/(4 kappa dt)`. Unmonitored models return 0 and consume no
    /// randomness.
    pub fn sample_readout<R: Rng>(&self, psi: &CVec, rng: &mut R) -> Result<f64> {
        same_dim(psi.len(), self.dim)?;
        if !self.monitored() {
            return Ok(0.0);
        }
        let coords = self.a_vecs.adjoint() * psi;
        let weights: Vec<f64> = coords.iter().map(|z| z.norm_sqr()).collect();
        Ok(self.draw(&weights, rng))
    }

    fn draw<R: Rng>(&self, weights: &[f64], rng: &mut R) -> f64 {
        let total: f64 = weights.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                pick = k;
                break;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        self.a_vals[pick] + self.readout_std() * z
    }

    /// The readout-averaged step `sum_a w_a N M(a) rho M(a)^dag` evaluated by
    /// trapezoidal quadrature on a uniform grid of spacing
    /// `readout_std / points_per_std` covering every eigenvalue of `A` by
    /// `+-10` standard deviations.
    pub fn readout_averaged_step(&self, rho: &CMat, points_per_std: usize) -> Result<CMat> {
        same_dim(rho.nrows(), self.dim)?;
        if !self.monitored() {
            let u = &self.u_half * &self.u_half;
            return Ok(&u * rho * u.adjoint());
        }
        let sigma = self.readout_std();
        let h = sigma / points_per_std.max(1) as f64;
        let lo = self.a_vals[0] - 10.0 * sigma;
        let hi = self.a_vals[self.dim - 1] + 10.0 * sigma;
        let n = ((hi - lo) / h).ceil() as usize + 1;
        let first = self.a_vecs.adjoint() * &self.u_half;
        let rho_a = &first * rho * first.adjoint();
        let a_to_b = self.b_vecs.adjoint() * &self.a_vecs;
        let mut acc = CMat::zeros(self.dim, self.dim);
        for k in 0..n {
            let a = lo + k as f64 * h;
            let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
            let g: Vec<f64> = self.a_vals.iter().map(|&al| self.restriction(al, a)).collect();
            let x = CMat::from_fn(self.dim, self.dim, |i, j| rho_a[(i, j)] * (g[i] * g[j]));
            let y = &a_to_b * x * a_to_b.adjoint();
            let d: Vec<C64> = self.b_vals.iter().map(|&b| self.back_action(b, a)).collect();
            acc += CMat::from_fn(self.dim, self.dim, |i, j| y[(i, j)] * d[i] * d[j].conj()) * c(w);
        }
        acc *= c(self.readout_normalization());
        let last = &self.u_half * &self.b_vecs;
        Ok(&last * acc * last.adjoint())
    }
}

/// One conditioned step from scratch; loops should build a [`StepKernel`].
pub fn conditional_step(
    state: &CVec,
    m: &MeasurementModel,
    h: &Operator,
    a: f64,
    dt: f64,
) -> Result<CVec> {
    StepKernel::new(m, h, dt)?.conditional_step(state, a)
}

/// Samples a readout for a measurement of `m.a()` on `state`.
pub fn sample_readout<R: Rng>(state: &CVec, m: &MeasurementModel, dt: f64, rng: &mut R) -> Result<f64> {
    require_positive("dt", dt)?;
    same_dim(state.len(), m.dim())?;
    let zero = Operator::zeros(m.dim())?;
    StepKernel::new(m, &zero, dt)?.sample_readout(state, rng)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryOptions {
    pub t_final: f64,
    pub dt: f64,
    /// Store the state every `record_stride` steps (and at the end).
    pub record_stride: usize,
}

impl TrajectoryOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        TrajectoryOptions {
            t_final,
            dt,
            record_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride.max(1);
        self
    }
}

/// One readout-conditioned realization.
#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub dt: f64,
    /// Readout of each step; `readouts[k]` belongs to the step ending at
    /// `(k + 1) dt`.
    pub readouts: Vec<f64>,
    /// Accumulated log-density of the readout record after each step.
    pub log_weight: Vec<f64>,
    /// Times of the stored states.
    pub times: Vec<f64>,
    /// Normalized conditioned states at `times`.
    pub states: Vec<CVec>,
}

/// Pure-state decomposition of an initial density matrix.
#[derive(Clone, Debug)]
pub struct InitialEnsemble {
    weights: Vec<f64>,
    kets: Vec<CVec>,
}

impl InitialEnsemble {
    pub fn new(rho: &DensityMatrix) -> Self {
        let (vals, vecs) = linalg::hermitian_eigen(rho.matrix());
        let mut weights = Vec::new();
        let mut kets = Vec::new();
        for (k, &v) in vals.iter().enumerate() {
            if v > 1e-14 {
                weights.push(v);
                kets.push(vecs.column(k).into_owned());
            }
        }
        InitialEnsemble { weights, kets }
    }

    pub fn pure(psi: &CVec) -> Self {
        InitialEnsemble {
            weights: vec![1.0],
            kets: vec![psi.normalize()],
        }
    }

    pub fn is_pure(&self) -> bool {
        self.kets.len() == 1
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> &CVec {
        if self.is_pure() {
            return &self.kets[0];
        }
        let total: f64 = self.weights.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (w, k) in self.weights.iter().zip(&self.kets) {
            acc += w;
            if target < acc {
                return k;
            }
        }
        self.kets.last().expect("non-empty decomposition")
    }
}

/// Runs one trajectory, calling `visit(step, psi)` at step 0 and at every
/// `stride`-th step and the last one, and `on_step(readout, log_weight)`
/// after each step.
fn propagate<R: Rng>(
    kernel: &StepKernel,
    psi0: &CVec,
    n_steps: usize,
    stride: usize,
    rng: &mut R,
    mut visit: impl FnMut(usize, &SplitVec),
    mut on_step: impl FnMut(f64, f64),
) -> Result<()> {
    let dim = kernel.dim;
    let psi = SplitVec::from_cvec(&psi0.normalize());
    visit(0, &psi);
    let mut coords = SplitVec::zeros(dim);
    let mut b_coords = SplitVec::zeros(dim);
    let mut fock = SplitVec::zeros(dim);
    kernel.first.apply(&psi, &mut coords);
    let log_norm = if kernel.monitored() {
        kernel.readout_normalization().ln()
    } else {
        0.0
    };
    let mut weights = vec![0.0; dim];
    let mut log_weight = 0.0;
    for step in 1..=n_steps {
        let before = coords.norm_sqr();
        let a = if kernel.monitored() {
            for (k, w) in weights.iter_mut().enumerate() {
                *w = coords.re[k] * coords.re[k] + coords.im[k] * coords.im[k];
            }
            let a = kernel.draw(&weights, rng);
            for (k, &alpha) in kernel.a_vals.iter().enumerate() {
                let g = kernel.restriction(alpha, a);
                coords.re[k] *= g;
                coords.im[k] *= g;
            }
            a
        } else {
            0.0
        };
        kernel.a_to_b.apply(&coords, &mut b_coords);
        if kernel.lambda != 0.0 {
            for (k, &b) in kernel.b_vals.iter().enumerate() {
                let ph = kernel.back_action(b, a);
                let (r, i) = (b_coords.re[k], b_coords.im[k]);
                b_coords.re[k] = r * ph.re - i * ph.im;
                b_coords.im[k] = r * ph.im + i * ph.re;
            }
        }
        let after = b_coords.norm_sqr();
        if !(after >= NORM_UNDERFLOW * before) {
            return Err(Error::NormUnderflow {
                step,
                norm_sqr: after / before,
            });
        }
        log_weight += (after / before).ln() + log_norm;
        b_coords.scale(1.0 / after.sqrt());
        on_step(a, log_weight);
        if step % stride == 0 || step == n_steps {
            kernel.b_to_fock.apply(&b_coords, &mut fock);
            visit(step, &fock);
        }
        kernel.b_to_next.apply(&b_coords, &mut coords);
    }
    Ok(())
}

/// One readout-conditioned trajectory. Reproducible for a fixed seed; the
/// record is independent of the seed when the model is unmonitored.
pub fn run_trajectory(
    state0: &DensityMatrix,
    m: &MeasurementModel,
    h: &Operator,
    opts: &TrajectoryOptions,
    seed: u64,
) -> Result<TrajectoryRecord> {
    same_dim(state0.dim(), m.dim())?;
    let (n_steps, dt) = time_grid(opts.t_final, opts.dt)?;
    let kernel = StepKernel::new(m, h, dt)?;
    let initial = InitialEnsemble::new(state0);
    let mut rng = trajectory_rng(seed, 0);
    run_with_kernel(&kernel, &initial, n_steps, opts.record_stride.max(1), &mut rng)
}

/// `n_traj` independent records; record `i` is drawn from
/// [`trajectory_rng`]`(seed, i)`, so the first equals [`run_trajectory`].
pub fn run_trajectories(
    state0: &DensityMatrix,
    m: &MeasurementModel,
    h: &Operator,
    opts: &TrajectoryOptions,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    same_dim(state0.dim(), m.dim())?;
    let (n_steps, dt) = time_grid(opts.t_final, opts.dt)?;
    let kernel = StepKernel::new(m, h, dt)?;
    let initial = InitialEnsemble::new(state0);
    let stride = opts.record_stride.max(1);
    (0..n_traj as u64)
        .into_par_iter()
        .map(|i| run_with_kernel(&kernel, &initial, n_steps, stride, &mut trajectory_rng(seed, i)))
        .collect()
}

fn run_with_kernel<R: Rng>(
    kernel: &StepKernel,
    initial: &InitialEnsemble,
    n_steps: usize,
    stride: usize,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    let psi0 = initial.pick(rng).clone();
    let dt = kernel.dt;
    let mut record = TrajectoryRecord {
        dt,
        readouts: Vec::with_capacity(n_steps),
        log_weight: Vec::with_capacity(n_steps),
        times: Vec::new(),
        states: Vec::new(),
    };
    let mut times = Vec::new();
    let mut states = Vec::new();
    propagate(
        kernel,
        &psi0,
        n_steps,
        stride,
        rng,
        |step, psi| {
            times.push(step as f64 * dt);
            states.push(psi.to_cvec());
        },
        |a, lw| {
            record.readouts.push(a);
            record.log_weight.push(lw);
        },
    )?;
    record.times = times;
    record.states = states;
    Ok(record)
}

/// Average of the conditioned states over independent trajectories.
#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub mean_state: Vec<DensityMatrix>,
    pub n_traj: usize,
    pub rng_seed: u64,
}

/// Averages `n_traj` trajectories' normalized projectors at the record
/// times. Trajectory `i` uses [`trajectory_rng`]`(seed, i)`; partial sums
/// are formed over fixed blocks and combined pairwise in index order, so
/// the result is the same for any thread count.
pub fn ensemble_average(
    state0: &DensityMatrix,
    m: &MeasurementModel,
    h: &Operator,
    opts: &TrajectoryOptions,
    n_traj: usize,
    seed: u64,
) -> Result<EnsembleResult> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    same_dim(state0.dim(), m.dim())?;
    let (n_steps, dt) = time_grid(opts.t_final, opts.dt)?;
    let stride = opts.record_stride.max(1);
    let kernel = StepKernel::new(m, h, dt)?;
    let initial = InitialEnsemble::new(state0);
    let mut times: Vec<f64> = (0..=n_steps)
        .filter(|s| s % stride == 0 || *s == n_steps)
        .map(|s| s as f64 * dt)
        .collect();
    times.dedup();
    let n_records = times.len();
    let dim = m.dim();

    let blocks: Vec<Result<Vec<CMat>>> = (0..n_traj.div_ceil(CHUNK))
        .into_par_iter()
        .map(|block| {
            let mut sums = vec![CMat::zeros(dim, dim); n_records];
            for index in block * CHUNK..((block + 1) * CHUNK).min(n_traj) {
                let mut rng = trajectory_rng(seed, index as u64);
                let psi0 = initial.pick(&mut rng).clone();
                let mut slot = 0;
                propagate(
                    &kernel,
                    &psi0,
                    n_steps,
                    stride,
                    &mut rng,
                    |_, psi| {
                        add_projector(&mut sums[slot], psi);
                        slot += 1;
                    },
                    |_, _| {},
                )?;
            }
            Ok(sums)
        })
        .collect();
    let blocks = blocks.into_iter().collect::<Result<Vec<_>>>()?;
    let total = pairwise_sum(blocks);
    let scale = c(1.0 / n_traj as f64);
    let tol = crate::operator::StateTolerances {
        positivity: 1e-8,
        ..Default::default()
    };
    let mean_state = total
        .into_iter()
        .map(|s| DensityMatrix::with_tolerances(linalg::symmetrize(&(s * scale)), tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleResult {
        times,
        mean_state,
        n_traj,
        rng_seed: seed,
    })
}

fn add_projector(acc: &mut CMat, psi: &SplitVec) {
    let n = psi.re.len();
    for j in 0..n {
        let (bj_re, bj_im) = (psi.re[j], -psi.im[j]);
        for i in 0..n {
            let (ar, ai) = (psi.re[i], psi.im[i]);
            acc[(i, j)] += C64::new(ar * bj_re - ai * bj_im, ar * bj_im + ai * bj_re);
        }
    }
}

fn pairwise_sum(mut level: Vec<Vec<CMat>>) -> Vec<CMat> {
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(mut left) = it.next() {
            if let Some(right) = it.next() {
                for (l, r) in left.iter_mut().zip(right) {
                    *l += r;
                }
            }
            next.push(left);
        }
        level = next;
    }
    level.pop().unwrap_or_default()
}
