//! The continuously monitored observable and its back-action.
//!
//! A measurement is described by the monitored observable `A`, the
//! back-action observable `B`, an extra phase generator `C` and two real
//! strengths: `kappa` (how sharply the readout restricts `A`) and `lambda`
//! (the readout-proportional phase `lambda * a(t) * B`). Averaged over
//! readouts this yields a Lindblad generator with the single jump operator
//! `l = A - i lambda/(2 kappa hbar) B` and the Hermitian correction
//! `(lambda/4)(AB + BA)` to the Hamiltonian.
//!
//! Units are the caller's: `kappa [A]^2 t` and `lambda [A][B] t / hbar` must
//! be dimensionless.

use crate::error::{require_nonnegative, require_positive, Error, Result};
use crate::linalg::I;
use crate::operator::{anticommutator, OscillatorOps, Operator};

#[derive(Clone, Debug)]
pub struct MeasurementModel {
    a: Operator,
    b: Operator,
    c: Operator,
    kappa: f64,
    lambda: f64,
    hbar: f64,
}

impl MeasurementModel {
    /// `c = None` means the zero operator. Requires `kappa > 0`.
    pub fn new(
        a: Operator,
        b: Operator,
        c: Option<Operator>,
        kappa: f64,
        lambda: f64,
        hbar: f64,
    ) -> Result<Self> {
        require_positive("kappa", kappa)?;
        require_nonnegative("lambda", lambda)?;
        require_positive("hbar", hbar)?;
        let c = match c {
            Some(c) => c,
            None => Operator::zeros(a.dim())?,
        };
        a.ensure_same_dim(&b)?;
        a.ensure_same_dim(&c)?;
        for (name, op) in [("A", &a), ("B", &b), ("C", &c)] {
            if !op.is_hermitian() {
                return Err(Error::NotHermitian {
                    name,
                    residual: op.hermitian_residual(),
                });
            }
        }
        Ok(MeasurementModel {
            a,
            b,
            c,
            kappa,
            lambda,
            hbar,
        })
    }

    /// A model with `kappa = lambda = 0`: no readout, no dissipation. Useful
    /// for checking the unitary limit of the integrators.
    pub fn unmonitored(a: Operator, b: Operator, c: Option<Operator>, hbar: f64) -> Result<Self> {
        let mut m = Self::new(a, b, c, 1.0, 0.0, hbar)?;
        m.kappa = 0.0;
        Ok(m)
    }

    pub fn is_monitored(&self) -> bool {
        self.kappa > 0.0
    }

    pub fn a(&self) -> &Operator {
        &self.a
    }
    pub fn b(&self) -> &Operator {
        &self.b
    }
    pub fn c(&self) -> &Operator {
        &self.c
    }
    pub fn kappa(&self) -> f64 {
        self.kappa
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn hbar(&self) -> f64 {
        self.hbar
    }
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// `lambda / (2 kappa hbar)`, the weight of `B` inside the jump operator.
    pub fn back_action_ratio(&self) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        self.lambda / (2.0 * self.kappa * self.hbar)
    }
}

/// Momentum monitoring with position back-action: `A = P`, `B = omega Q`,
/// `C = 0`.
pub fn oscillator_model(ops: &OscillatorOps, kappa: f64, lambda: f64) -> Result<MeasurementModel> {
    MeasurementModel::new(
        ops.p.clone(),
        ops.q.scale_real(ops.omega),
        None,
        kappa,
        lambda,
        ops.hbar,
    )
}

/// `l = A - i lambda/(2 kappa hbar) B`. Generally not Hermitian.
pub fn lindblad_operator(m: &MeasurementModel) -> Operator {
    let b = m.b.scale(-I * m.back_action_ratio());
    &m.a + &b
}

/// `-i (kappa hbar / 4)(l^dag^2 - l^2)`, which equals `(lambda/4)(AB + BA)`.
pub fn hamiltonian_shift(m: &MeasurementModel) -> Operator {
    let l = lindblad_operator(m);
    let ld = l.adjoint();
    let diff = &(&ld * &ld) - &(&l * &l);
    let raw = diff.scale(-I * (m.kappa * m.hbar / 4.0));
    // the algebraic form is Hermitian; drop the roundoff in the imaginary parts
    Operator::hermitian(raw.into_matrix(), "hamiltonian shift")
        .expect("shift built from Hermitian A and B is Hermitian")
}

/// `(lambda/4)(AB + BA)` computed directly.
pub fn hamiltonian_shift_direct(m: &MeasurementModel) -> Operator {
    anticommutator(&m.a, &m.b)
        .expect("model operators share a dimension")
        .scale_real(m.lambda / 4.0)
}

/// `H + C + shift`, with the shift kept separately.
#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub op: Operator,
    pub shift: Operator,
}

pub fn effective_hamiltonian(m: &MeasurementModel, h: &Operator) -> Result<EffectiveHamiltonian> {
    h.ensure_same_dim(&m.a)?;
    let shift = hamiltonian_shift(m);
    let op = &(h + &m.c) + &shift;
    Ok(EffectiveHamiltonian { op, shift })
}

/// Frequency of the damped oscillator, `omega sqrt(1 - lambda^2/4)`.
/// Only the underdamped range `0 <= lambda < 2` has a real frequency.
pub fn effective_oscillator_frequency(omega: f64, lambda: f64) -> Result<f64> {
    require_positive("omega", omega)?;
    require_nonnegative("lambda", lambda)?;
    if lambda >= 2.0 {
        return Err(Error::OverdampedRegime { lambda });
    }
    Ok(omega * (1.0 - lambda * lambda / 4.0).sqrt())
}
