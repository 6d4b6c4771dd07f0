//! First and second moments of the monitored oscillator.
//!
//! For `A = P`, `B = omega Q` the master equation closes on the five moments
//! `<P>`, `<Q>`, `<P^2>`, `<PQ + QP>`, `<Q^2>`:
//!
//! ```text
//! d<P>/dt   = -omega^2 <Q> - gamma <P>
//! d<Q>/dt   = <P>
//! d<P^2>/dt = -omega^2 <PQ+QP> - 2 gamma <P^2> + lambda^2 omega^2 / (4 kappa)
//! d<PQ+QP>/dt = -gamma <PQ+QP> + 2 (<P^2> - omega^2 <Q^2>)
//! d<Q^2>/dt = <PQ+QP> + kappa hbar^2
//! ```
//!
//! with damping `gamma = lambda omega`. `hbar = 0` is allowed here and gives
//! the classical limit.

use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::grid::time_grid;
use crate::linalg::{CMat, CVec};
use crate::operator::{anticommutator, expectation_raw, same_dim, DensityMatrix, OscillatorOps};

/// Imaginary parts of moment expectations above this mean a broken state.
const IMAG_TOL: f64 = 1e-9;

const RK4_STABILITY_LIMIT: f64 = 2.5;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MomentState {
    pub mean_p: f64,
    pub mean_q: f64,
    /// `<P^2>`
    pub p2: f64,
    /// `<PQ + QP>`
    pub pq: f64,
    /// `<Q^2>`
    pub q2: f64,
}

impl MomentState {
    pub fn var_p(&self) -> f64 {
        self.p2 - self.mean_p * self.mean_p
    }

    pub fn var_q(&self) -> f64 {
        self.q2 - self.mean_q * self.mean_q
    }

    /// Symmetrized covariance `<PQ+QP>/2 - <P><Q>`.
    pub fn covariance(&self) -> f64 {
        self.pq / 2.0 - self.mean_p * self.mean_q
    }

    /// `var_p var_q - cov^2 - hbar^2/4`; non-negative for physical states.
    pub fn uncertainty_excess(&self, hbar: f64) -> f64 {
        self.var_p() * self.var_q() - self.covariance().powi(2) - hbar * hbar / 4.0
    }

    fn to_array(self) -> [f64; 5] {
        [self.mean_p, self.mean_q, self.p2, self.pq, self.q2]
    }

    fn from_array(a: [f64; 5]) -> Self {
        MomentState {
            mean_p: a[0],
            mean_q: a[1],
            p2: a[2],
            pq: a[3],
            q2: a[4],
        }
    }

    pub fn max_abs_diff(&self, other: &MomentState) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentParams {
    pub omega: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub hbar: f64,
}

impl MomentParams {
    pub fn new(omega: f64, lambda: f64, kappa: f64, hbar: f64) -> Result<Self> {
        require_positive("omega", omega)?;
        require_nonnegative("lambda", lambda)?;
        require_positive("kappa", kappa)?;
        require_nonnegative("hbar", hbar)?;
        Ok(MomentParams {
            omega,
            lambda,
            kappa,
            hbar,
        })
    }

    /// Friction coefficient `lambda omega`.
    pub fn gamma(&self) -> f64 {
        self.lambda * self.omega
    }

    /// `lambda^2 omega^2 / (4 kappa)`, the source term of `d<P^2>/dt`.
    pub fn momentum_diffusion(&self) -> f64 {
        self.gamma() * self.gamma() / (4.0 * self.kappa)
    }

    /// `kappa hbar^2`, the source term of `d<Q^2>/dt`.
    pub fn position_diffusion(&self) -> f64 {
        self.kappa * self.hbar * self.hbar
    }
}

/// `(d<P>/dt, d<Q>/dt)`
pub fn first_moment_rhs(s: &MomentState, p: &MomentParams) -> (f64, f64) {
    (
        -p.omega * p.omega * s.mean_q - p.gamma() * s.mean_p,
        s.mean_p,
    )
}

/// `(d<P^2>/dt, d<PQ+QP>/dt, d<Q^2>/dt)`
pub fn second_moment_rhs(s: &MomentState, p: &MomentParams) -> (f64, f64, f64) {
    let w2 = p.omega * p.omega;
    (
        -w2 * s.pq - 2.0 * p.gamma() * s.p2 + p.momentum_diffusion(),
        -p.gamma() * s.pq + 2.0 * (s.p2 - w2 * s.q2),
        s.pq + p.position_diffusion(),
    )
}

/// Time derivative of all five moments.
pub fn moment_rhs(s: &MomentState, p: &MomentParams) -> MomentState {
    let (dp, dq) = first_moment_rhs(s, p);
    let (dp2, dpq, dq2) = second_moment_rhs(s, p);
    MomentState {
        mean_p: dp,
        mean_q: dq,
        p2: dp2,
        pq: dpq,
        q2: dq2,
    }
}

#[derive(Clone, Debug, Default)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub states: Vec<MomentState>,
}

impl MomentSeries {
    pub fn last(&self) -> &MomentState {
        self.states.last().expect("series holds the initial state")
    }

    pub fn mean_q(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.mean_q).collect()
    }
}

/// RK4 on the five moment equations, every step stored.
pub fn integrate_moments(
    s0: &MomentState,
    p: &MomentParams,
    t_final: f64,
    dt: f64,
) -> Result<MomentSeries> {
    integrate_moments_strided(s0, p, t_final, dt, 1)
}

/// Like [`integrate_moments`], storing every `stride`-th step plus the last.
pub fn integrate_moments_strided(
    s0: &MomentState,
    p: &MomentParams,
    t_final: f64,
    dt: f64,
    stride: usize,
) -> Result<MomentSeries> {
    let (n_steps, dt) = time_grid(t_final, dt)?;
    // infinity norm of the linear part
    let w2 = p.omega * p.omega;
    let g = p.gamma();
    let bound = [w2 + g, 1.0, w2 + 2.0 * g, g + 2.0 + 2.0 * w2, 1.0]
        .into_iter()
        .fold(0.0, f64::max);
    if bound * dt > RK4_STABILITY_LIMIT {
        return Err(Error::StepSizeRejected {
            dt,
            product: bound * dt,
            limit: RK4_STABILITY_LIMIT,
        });
    }
    let stride = stride.max(1);
    let mut out = MomentSeries {
        times: Vec::with_capacity(n_steps / stride + 2),
        states: Vec::with_capacity(n_steps / stride + 2),
    };
    let f = |x: [f64; 5]| moment_rhs(&MomentState::from_array(x), p).to_array();
    let axpy = |x: [f64; 5], h: f64, k: [f64; 5]| -> [f64; 5] {
        std::array::from_fn(|i| x[i] + h * k[i])
    };
    let mut x = s0.to_array();
    out.times.push(0.0);
    out.states.push(*s0);
    for step in 1..=n_steps {
        let k1 = f(x);
        let k2 = f(axpy(x, dt / 2.0, k1));
        let k3 = f(axpy(x, dt / 2.0, k2));
        let k4 = f(axpy(x, dt, k3));
        x = std::array::from_fn(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        if step % stride == 0 || step == n_steps {
            out.times.push(step as f64 * dt);
            out.states.push(MomentState::from_array(x));
        }
    }
    Ok(out)
}

/// Fixed point of the moment equations:
/// `<PQ+QP> = -kappa hbar^2`,
/// `<P^2> = lambda omega/(8 kappa) + omega kappa hbar^2/(2 lambda)`,
/// `omega^2 <Q^2> = <P^2> + lambda omega kappa hbar^2 / 2`, means zero.
pub fn steady_moments(p: &MomentParams) -> Result<MomentState> {
    if p.lambda == 0.0 {
        return Err(Error::NoDamping);
    }
    let kh2 = p.kappa * p.hbar * p.hbar;
    let p2 = p.lambda * p.omega / (8.0 * p.kappa) + p.omega * kh2 / (2.0 * p.lambda);
    let q2 = (p2 + p.lambda * p.omega * kh2 / 2.0) / (p.omega * p.omega);
    Ok(MomentState {
        mean_p: 0.0,
        mean_q: 0.0,
        p2,
        pq: -kh2,
        q2,
    })
}

/// `(<P^2> + omega^2 <Q^2>)/2`
pub fn mean_energy(s: &MomentState, omega: f64) -> f64 {
    0.5 * (s.p2 + omega * omega * s.q2)
}

/// Time `lambda / (8 kappa^2 omega hbar^2)` before which the position
/// diffusion `kappa hbar^2 t` stays small against the classical steady
/// `<Q^2>`. Infinite when `hbar = 0`.
pub fn diffusion_negligible_horizon(p: &MomentParams) -> f64 {
    if p.hbar == 0.0 {
        return f64::INFINITY;
    }
    p.lambda / (8.0 * p.kappa * p.kappa * p.omega * p.hbar * p.hbar)
}

/// The five moments of `rho` using the truncated operators.
pub fn moments_from_density(rho: &DensityMatrix, ops: &OscillatorOps) -> Result<MomentState> {
    same_dim(rho.dim(), ops.dim())?;
    moments_from_matrix(rho.matrix(), ops)
}

pub(crate) fn moments_from_matrix(rho: &CMat, ops: &OscillatorOps) -> Result<MomentState> {
    let p = ops.p.matrix();
    let q = ops.q.matrix();
    let pq = anticommutator(&ops.p, &ops.q)?;
    let take = |name: &'static str, x: &CMat| -> Result<f64> {
        let z = expectation_raw(rho, x);
        if z.im.abs() > IMAG_TOL {
            return Err(Error::ImaginaryPartTooLarge { name, value: z.im });
        }
        Ok(z.re)
    };
    Ok(MomentState {
        mean_p: take("P", p)?,
        mean_q: take("Q", q)?,
        p2: take("P^2", &(p * p))?,
        pq: take("PQ+QP", pq.matrix())?,
        q2: take("Q^2", &(q * q))?,
    })
}

/// Moments of a normalized pure state.
pub fn moments_from_ket(psi: &CVec, ops: &OscillatorOps) -> Result<MomentState> {
    same_dim(psi.len(), ops.dim())?;
    let p_psi = ops.p.matrix() * psi;
    let q_psi = ops.q.matrix() * psi;
    let norm = psi.norm_squared();
    let pq = p_psi.dotc(&q_psi);
    Ok(MomentState {
        mean_p: psi.dotc(&p_psi).re / norm,
        mean_q: psi.dotc(&q_psi).re / norm,
        p2: p_psi.norm_squared() / norm,
        pq: 2.0 * pq.re / norm,
        q2: q_psi.norm_squared() / norm,
    })
}

/// Frequency of an oscillating signal from its zero crossings
/// (linearly interpolated): `pi (crossings - 1) / (t_last - t_first)`.
/// `None` with fewer than three crossings.
pub fn fit_oscillation_frequency(times: &[f64], values: &[f64]) -> Option<f64> {
    let crossings: Vec<f64> = times
        .windows(2)
        .zip(values.windows(2))
        .filter_map(|(t, v)| {
            if v[0] == 0.0 {
                Some(t[0])
            } else if v[0] * v[1] < 0.0 {
                Some(t[0] + (t[1] - t[0]) * v[0] / (v[0] - v[1]))
            } else {
                None
            }
        })
        .collect();
    if crossings.len() < 3 {
        return None;
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Some(std::f64::consts::PI * (crossings.len() - 1) as f64 / span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::operator::{coherent_state, fock_state, make_oscillator_ops};

    fn params(omega: f64, lambda: f64, kappa: f64, hbar: f64) -> MomentParams {
        MomentParams::new(omega, lambda, kappa, hbar).unwrap()
    }

    #[test]
    fn first_moment_examples() {
        let zero = MomentState::default();
        assert_eq!(first_moment_rhs(&zero, &params(1.0, 0.3, 1.0, 1.0)), (0.0, 0.0));
        let s = MomentState {
            mean_q: 1.0,
            ..Default::default()
        };
        assert_eq!(first_moment_rhs(&s, &params(2.0, 0.0, 1.0, 1.0)), (-4.0, 0.0));
        let s = MomentState {
            mean_p: 2.0,
            ..Default::default()
        };
        assert_eq!(first_moment_rhs(&s, &params(1.0, 0.5, 1.0, 1.0)), (-1.0, 2.0));
    }

    #[test]
    fn second_moment_examples() {
        let zero = MomentState::default();
        let p = params(1.5, 0.4, 0.7, 0.0);
        let (a, b, c) = second_moment_rhs(&zero, &p);
        assert_eq!((b, c), (0.0, 0.0));
        assert!((a - 0.4f64.powi(2) * 1.5f64.powi(2) / (4.0 * 0.7)).abs() < 1e-15);

        let (_, _, dq2) = second_moment_rhs(&zero, &params(1.0, 0.2, 0.3, 1.0));
        assert!((dq2 - 0.3).abs() < 1e-15);

        let classical = params(1.3, 0.2, 0.9, 0.0);
        let ss = steady_moments(&classical).unwrap();
        let (a, b, c) = second_moment_rhs(&ss, &classical);
        assert!(a.abs() < 1e-15 && b.abs() < 1e-15 && c.abs() < 1e-15);
    }

    #[test]
    fn classical_steady_state_values() {
        let ss = steady_moments(&params(1.0, 0.1, 1.0, 0.0)).unwrap();
        assert!((ss.p2 - 0.0125).abs() < 1e-15);
        assert!((ss.q2 - 0.0125).abs() < 1e-15);
        assert_eq!(ss.pq, 0.0);
        assert!((mean_energy(&ss, 1.0) - 0.0125).abs() < 1e-15);
        assert_eq!(steady_moments(&params(1.0, 0.0, 1.0, 1.0)), Err(Error::NoDamping));
    }

    #[test]
    fn quantum_steady_state_against_linear_solve() {
        // rows: d<P^2>, d<PQ+QP>, d<Q^2> = 0 as M x = rhs
        let p = params(1.0, 0.1, 1.0, 1.0);
        let (w2, g) = (p.omega * p.omega, p.gamma());
        let m = nalgebra::Matrix3::new(-2.0 * g, -w2, 0.0, 2.0, -g, -2.0 * w2, 0.0, 1.0, 0.0);
        let rhs = nalgebra::Vector3::new(-p.momentum_diffusion(), 0.0, -p.position_diffusion());
        let x = m.lu().solve(&rhs).unwrap();
        let ss = steady_moments(&p).unwrap();
        assert!((ss.p2 - x[0]).abs() < 1e-12);
        assert!((ss.pq - x[1]).abs() < 1e-12);
        assert!((ss.q2 - x[2]).abs() < 1e-12);
    }

    #[test]
    fn mean_energy_arithmetic() {
        assert_eq!(mean_energy(&MomentState::default(), 3.0), 0.0);
        let s = MomentState {
            p2: 1.0,
            q2: 1.0,
            ..Default::default()
        };
        assert_eq!(mean_energy(&s, 2.0), 2.5);
    }

    #[test]
    fn horizon() {
        let p = params(1.0, 0.1, 1.0, 1.0);
        let t = diffusion_negligible_horizon(&p);
        assert!((t - 0.0125).abs() < 1e-15);
        assert_eq!(diffusion_negligible_horizon(&params(1.0, 0.1, 1.0, 0.0)), f64::INFINITY);
        // spread at 1% of the horizon is 1% of the classical <Q^2>
        let classical = steady_moments(&params(1.0, 0.1, 1.0, 0.0)).unwrap();
        let spread = p.position_diffusion() * 0.01 * t;
        assert!((spread / classical.q2 - 0.01).abs() < 1e-12);
    }

    #[test]
    fn density_moments() {
        let ops = make_oscillator_ops(40, 1.0, 1.0).unwrap();
        let g = moments_from_density(&fock_state(40, 0).unwrap(), &ops).unwrap();
        assert!((g.p2 - 0.5).abs() < 1e-14 && (g.q2 - 0.5).abs() < 1e-14);
        assert!(g.pq.abs() < 1e-14);
        let alpha = 0.8;
        let cs = moments_from_density(&coherent_state(40, C64::new(alpha, 0.0)).unwrap(), &ops).unwrap();
        assert!((cs.mean_q - 2f64.sqrt() * alpha).abs() < 1e-9);
        assert!(cs.mean_p.abs() < 1e-12);

        let mut mixed = CMat::zeros(40, 40);
        for k in 0..5 {
            mixed[(k, k)] = C64::new(0.2, 0.0);
        }
        let mm = moments_from_density(&DensityMatrix::new(mixed).unwrap(), &ops).unwrap();
        assert!(mm.mean_p.abs() < 1e-15 && mm.mean_q.abs() < 1e-15);
    }

    #[test]
    fn imaginary_expectation_is_rejected() {
        let ops = make_oscillator_ops(4, 1.0, 1.0).unwrap();
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = C64::new(0.5, 0.0);
        m[(1, 1)] = C64::new(0.5, 0.0);
        m[(0, 1)] = C64::new(0.0, 0.5);
        m[(1, 0)] = C64::new(0.0, -0.5);
        // anti-Hermitian perturbation to make <Q> complex
        m[(1, 0)] = C64::new(0.3, -0.5);
        assert!(matches!(
            moments_from_matrix(&m, &ops),
            Err(Error::ImaginaryPartTooLarge { .. })
        ));
    }

    #[test]
    fn ket_and_density_moments_agree() {
        let ops = make_oscillator_ops(30, 1.3, 0.7).unwrap();
        let psi = crate::operator::coherent_ket(30, C64::new(0.6, -0.9)).unwrap();
        let a = moments_from_ket(&psi, &ops).unwrap();
        let b = moments_from_density(&DensityMatrix::from_ket(&psi).unwrap(), &ops).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn small_time_momentum_diffusion_slope() {
        let p = params(1.0, 0.3, 0.2, 0.0);
        let dt = 1e-4;
        let series = integrate_moments(&MomentState::default(), &p, 10.0 * dt, dt).unwrap();
        let slope = series.states[1].p2 / dt;
        let d = p.momentum_diffusion();
        assert!((slope - d * (1.0 - p.gamma() * dt)).abs() < 1e-9);
    }

    #[test]
    fn rejects_unstable_step() {
        let p = params(10.0, 0.1, 1.0, 1.0);
        assert!(matches!(
            integrate_moments(&MomentState::default(), &p, 1.0, 0.1),
            Err(Error::StepSizeRejected { .. })
        ));
    }

    #[test]
    fn frequency_of_pure_cosine() {
        let times: Vec<f64> = (0..20_000).map(|k| k as f64 * 1e-3).collect();
        let values: Vec<f64> = times.iter().map(|t| (1.7 * t + 0.3).cos()).collect();
        let f = fit_oscillation_frequency(&times, &values).unwrap();
        assert!((f - 1.7).abs() < 1e-6);
        assert_eq!(fit_oscillation_frequency(&times[..10], &values[..10]), None);
    }
}
