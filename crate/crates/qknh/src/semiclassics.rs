//! Classical and quantum-corrected action integrals for the double well.
//!
//! For well-minimum < E < V_b the four turning points x1 < x2 < x3 < x4
//! split the axis into the left well A = [x1, x2], the barrier [x2, x3],
//! and the right well C = [x3, x4]. The module computes
//!
//! ```text
//! S_A(E, lambda)  = integral over A of sqrt(2 mu [E - V]) dx     (likewise S_C)
//! T_b(E, lambda)  = integral over the barrier of sqrt(2 mu [V - E]) dx
//! Phi(y)          = arg Gamma(1/2 - i y) + y (ln y - 1),  y = T_b / (pi hbar)
//! S~_{A,C}        = S_{A,C} - (hbar / 2) Phi
//! ```
//!
//! together with their E and lambda partial derivatives and the
//! Poisson-like bracket [F, G] = dF/dE dG/dlambda - dG/dE dF/dlambda.
//!
//! Near the barrier top the exact inverted-parabola integral gives
//! T_b -> pi sqrt(mu/kappa) (V_b - E); published asymptotics sometimes quote
//! this limit without the factor pi. The quadrature here is the authority
//! and the tests freeze the pi-full form.
//!
//! dS/dE is computed as the period integral (not by differencing S), because
//! it diverges logarithmically as E -> V_b and differencing cancels
//! catastrophically there. The Phi term reproduces the same logarithm with
//! opposite sign, which is why dS~/dE stays bounded through the separatrix.

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::{gl128, gl64, integrate};
use crate::potential::{Potential, PotentialError};
use crate::special::{arg_gamma_half_minus_i, digamma};

/// Which well of the double well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// Left well, between the two lowest turning points.
    A,
    /// Right well, between the two highest turning points.
    C,
}

/// Symbols addressable by the bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSymbol {
    SA,
    SC,
    STildeA,
    STildeC,
    Tb,
}

#[derive(Debug, Error)]
pub enum ActionError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("energy {e} at lambda = {lambda} is not in the four-turning-point double-well regime")]
    NotDoubleWell { e: f64, lambda: f64 },
}

/// All action data and partials at one (E, lambda) point.
///
/// `de_` prefixes are d/dE, `dl_` prefixes d/dlambda; `s_ta`, `s_tc` are the
/// corrected actions S~_A, S~_C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionTable {
    pub e: f64,
    pub lambda: f64,
    pub s_a: f64,
    pub s_c: f64,
    pub t_b: f64,
    pub phi: f64,
    pub s_ta: f64,
    pub s_tc: f64,
    pub de_s_a: f64,
    pub de_s_c: f64,
    pub de_t_b: f64,
    pub de_s_ta: f64,
    pub de_s_tc: f64,
    pub dl_s_a: f64,
    pub dl_s_c: f64,
    pub dl_t_b: f64,
    pub dl_s_ta: f64,
    pub dl_s_tc: f64,
}

impl ActionTable {
    fn partials(&self, f: ActionSymbol) -> (f64, f64) {
        match f {
            ActionSymbol::SA => (self.de_s_a, self.dl_s_a),
            ActionSymbol::SC => (self.de_s_c, self.dl_s_c),
            ActionSymbol::STildeA => (self.de_s_ta, self.dl_s_ta),
            ActionSymbol::STildeC => (self.de_s_tc, self.dl_s_tc),
            ActionSymbol::Tb => (self.de_t_b, self.dl_t_b),
        }
    }

    /// Poisson-like bracket [F, G] = dF/dE dG/dl - dG/dE dF/dl.
    pub fn bracket(&self, f: ActionSymbol, g: ActionSymbol) -> f64 {
        let (fe, fl) = self.partials(f);
        let (ge, gl) = self.partials(g);
        fe * gl - ge * fl
    }
}

/// The classically allowed interval of the requested well.
///
/// With four turning points A is the left pair and C the right pair; a
/// single-well potential (two turning points) exposes its full allowed
/// interval under either side label.
pub fn well_interval(
    pot: &Potential,
    e: f64,
    lambda: f64,
    side: Side,
) -> Result<(f64, f64), ActionError> {
    let tp = pot.turning_points(e, lambda)?;
    match tp.len() {
        2 => Ok((tp[0], tp[1])),
        4 => Ok(match side {
            Side::A => (tp[0], tp[1]),
            Side::C => (tp[2], tp[3]),
        }),
        _ => Err(ActionError::NotDoubleWell { e, lambda }),
    }
}

fn barrier_interval(pot: &Potential, e: f64, lambda: f64) -> Result<(f64, f64), ActionError> {
    let tp = pot.turning_points(e, lambda)?;
    if tp.len() == 4 {
        Ok((tp[1], tp[2]))
    } else {
        Err(ActionError::NotDoubleWell { e, lambda })
    }
}

/// Integral of f over [xl, xr] where f has square-root or inverse-square-root
/// endpoint behavior: the substitution x = x_t +- u^2 at each end makes the
/// integrand analytic in u.
fn turning_point_integral<F: Fn(f64) -> f64>(f: F, xl: f64, xr: f64, rule: &[(f64, f64)]) -> f64 {
    let xm = 0.5 * (xl + xr);
    let left = integrate(|u| 2.0 * u * f(xl + u * u), 0.0, (xm - xl).sqrt(), rule);
    let right = integrate(|u| 2.0 * u * f(xr - u * u), 0.0, (xr - xm).sqrt(), rule);
    left + right
}

fn momentum_integral(pot: &Potential, e: f64, lambda: f64, xl: f64, xr: f64, rule: &[(f64, f64)]) -> f64 {
    let mu = pot.mu();
    turning_point_integral(
        |x| (2.0 * mu * (e - pot.value(x, lambda)).max(0.0)).sqrt(),
        xl,
        xr,
        rule,
    )
}

fn period_integral(pot: &Potential, e: f64, lambda: f64, xl: f64, xr: f64, rule: &[(f64, f64)]) -> f64 {
    let mu = pot.mu();
    turning_point_integral(
        |x| {
            let p2 = 2.0 * mu * (e - pot.value(x, lambda));
            mu / p2.max(1e-300).sqrt()
        },
        xl,
        xr,
        rule,
    )
}

/// Classical well action S = integral sqrt(2 mu [E - V]) over the well.
pub fn well_action(pot: &Potential, e: f64, lambda: f64, side: Side) -> Result<f64, ActionError> {
    well_action_with_rule(pot, e, lambda, side, gl64())
}

/// Well action under an explicit quadrature rule (convergence studies).
pub fn well_action_with_rule(
    pot: &Potential,
    e: f64,
    lambda: f64,
    side: Side,
    rule: &[(f64, f64)],
) -> Result<f64, ActionError> {
    let (xl, xr) = well_interval(pot, e, lambda, side)?;
    Ok(momentum_integral(pot, e, lambda, xl, xr, rule))
}

/// Tunneling action T_b = integral sqrt(2 mu [V - E]) across the barrier.
pub fn tunneling_action(pot: &Potential, e: f64, lambda: f64) -> Result<f64, ActionError> {
    tunneling_action_with_rule(pot, e, lambda, gl64())
}

/// Tunneling action under an explicit quadrature rule.
pub fn tunneling_action_with_rule(
    pot: &Potential,
    e: f64,
    lambda: f64,
    rule: &[(f64, f64)],
) -> Result<f64, ActionError> {
    let (xl, xr) = barrier_interval(pot, e, lambda)?;
    let mu = pot.mu();
    Ok(turning_point_integral(
        |x| (2.0 * mu * (pot.value(x, lambda) - e).max(0.0)).sqrt(),
        xl,
        xr,
        rule,
    ))
}

/// Phi(y) = arg Gamma(1/2 - i y) + y (ln y - 1); Phi(0) = 0.
pub fn phase_of(y: f64) -> f64 {
    assert!(y >= 0.0, "tunneling action ratio must be nonnegative");
    if y == 0.0 {
        return 0.0;
    }
    arg_gamma_half_minus_i(y) + y * (y.ln() - 1.0)
}

/// dPhi/dy = ln y - Re psi(1/2 - i y); diverges logarithmically as y -> 0+.
pub fn phase_slope(y: f64) -> f64 {
    assert!(y > 0.0, "phase slope requires y > 0");
    y.ln() - digamma(Complex64::new(0.5, -y)).re
}

/// Barrier phase Phi(E, lambda) evaluated from the tunneling action.
pub fn barrier_phase(pot: &Potential, e: f64, lambda: f64) -> Result<f64, ActionError> {
    let t_b = tunneling_action(pot, e, lambda)?;
    Ok(phase_of(t_b / (std::f64::consts::PI * pot.hbar())))
}

/// Corrected action S~ = S - (hbar / 2) Phi.
///
/// With only two turning points (a single well, or energy above the
/// barrier) there is no barrier and Phi = 0.
pub fn corrected_action(pot: &Potential, e: f64, lambda: f64, side: Side) -> Result<f64, ActionError> {
    let s = well_action(pot, e, lambda, side)?;
    match barrier_phase(pot, e, lambda) {
        Ok(phi) => Ok(s - 0.5 * pot.hbar() * phi),
        Err(ActionError::NotDoubleWell { .. }) => Ok(s),
        Err(err) => Err(err),
    }
}

fn central4<E>(f: impl Fn(f64) -> Result<f64, E>, x: f64, h: f64) -> Result<f64, E> {
    Ok((f(x - 2.0 * h)? - 8.0 * f(x - h)? + 8.0 * f(x + h)? - f(x + 2.0 * h)?) / (12.0 * h))
}

/// Step for lambda differences: 1e-4 times the lambda scale.
fn lambda_step(lambda: f64) -> f64 {
    1e-4 * lambda.abs().max(1.0)
}

/// Full action table at (E, lambda): values, corrected values, and E/lambda
/// partials.
///
/// dS/dE and dT_b/dE are period integrals under the same endpoint
/// substitution as the actions; d/dlambda is a 4th-order central difference
/// with step 1e-4 times the lambda scale.
pub fn action_derivatives(pot: &Potential, e: f64, lambda: f64) -> Result<ActionTable, ActionError> {
    let rule = gl64();
    let (a_l, a_r) = well_interval(pot, e, lambda, Side::A)?;
    let (c_l, c_r) = well_interval(pot, e, lambda, Side::C)?;
    let (b_l, b_r) = barrier_interval(pot, e, lambda)?;

    let s_a = momentum_integral(pot, e, lambda, a_l, a_r, rule);
    let s_c = momentum_integral(pot, e, lambda, c_l, c_r, rule);
    let t_b = tunneling_action_with_rule(pot, e, lambda, rule)?;

    let de_s_a = period_integral(pot, e, lambda, a_l, a_r, rule);
    let de_s_c = period_integral(pot, e, lambda, c_l, c_r, rule);
    let mu = pot.mu();
    let de_t_b = -turning_point_integral(
        |x| {
            let q2 = 2.0 * mu * (pot.value(x, lambda) - e);
            mu / q2.max(1e-300).sqrt()
        },
        b_l,
        b_r,
        rule,
    );

    let h = lambda_step(lambda);
    let dl_s_a = central4(|l| well_action(pot, e, l, Side::A), lambda, h)?;
    let dl_s_c = central4(|l| well_action(pot, e, l, Side::C), lambda, h)?;
    let dl_t_b = central4(|l| tunneling_action(pot, e, l), lambda, h)?;

    let hbar = pot.hbar();
    let pi_hbar = std::f64::consts::PI * hbar;
    let y = t_b / pi_hbar;
    let phi = phase_of(y);
    let slope = phase_slope(y);
    let de_phi = slope * de_t_b / pi_hbar;
    let dl_phi = slope * dl_t_b / pi_hbar;

    Ok(ActionTable {
        e,
        lambda,
        s_a,
        s_c,
        t_b,
        phi,
        s_ta: s_a - 0.5 * hbar * phi,
        s_tc: s_c - 0.5 * hbar * phi,
        de_s_a,
        de_s_c,
        de_t_b,
        de_s_ta: de_s_a - 0.5 * hbar * de_phi,
        de_s_tc: de_s_c - 0.5 * hbar * de_phi,
        dl_s_a,
        dl_s_c,
        dl_t_b,
        dl_s_ta: dl_s_a - 0.5 * hbar * dl_phi,
        dl_s_tc: dl_s_c - 0.5 * hbar * dl_phi,
    })
}
