//! Subspace growth rates and the capture theorems.
//!
//! The separatrix zone splits the spectrum into three dynamical subspaces:
//! left-ladder levels A and right-ladder levels C below the zone, zig-zagging
//! delocalized levels B above it. As lambda sweeps, the subspace
//! dimensionalities drift at the average rates
//!
//! ```text
//!     dD_A/dlambda = -Gamma Y
//!     dD_B/dlambda = +Gamma (Y - X)
//!     dD_C/dlambda = +Gamma X
//! ```
//!
//! which sum to zero by construction; Gamma is the number of levels crossing
//! the separatrix per unit lambda. Amplitude can leave only a shrinking
//! subspace and arrive only in growing ones, in proportion to their growth
//! rates. In the canonical case 0 < X < Y that is the capture law P(A to C) =
//! X/Y, P(A to B) = 1 - X/Y; every other sign pattern reduces to forced
//! assignments into a single growing subspace or a rate-weighted split out of
//! a single shrinking one. The classical counterpart replaces dimension
//! counts with lobe areas at the barrier energy.
//!
//! The geometry ops count which levels an M-line ensemble can reach while it
//! enters a zone D levels wide; the weak bounds put the capture probability
//! within (D + 1)/M of X/Y, and the strong prediction claims exactness for
//! ensemble sizes matching the period of the P_mn pattern, found by
//! continued fractions.

use thiserror::Error;

use crate::numerics::{brent, gl128, integrate};
use crate::potential::{Potential, PotentialError};
use crate::semiclassics::Side;
use crate::spectrum::LatticeParams;

#[derive(Debug, Error)]
pub enum KnhError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("neither lobe area changes at lambda = {lambda}; no flux crosses the separatrix")]
    CaseViolation { lambda: f64 },
    #[error("X and Y both vanish; the separatrix has no direction in the level lattice")]
    DegenerateCase,
    #[error("no subspace shrinks; transitions cannot occur and the map is the identity")]
    AllGrowing,
}

/// Dynamical subspaces, in the fixed order used by rate and map arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    A,
    B,
    C,
}

/// Sign classification of one subspace growth rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trend {
    Shrinking,
    Frozen,
    Growing,
}

/// Average subspace growth rates, in levels per unit lambda.
#[derive(Debug, Clone, Copy)]
pub struct GrowthRates {
    pub d_a: f64,
    pub d_b: f64,
    pub d_c: f64,
    /// Levels crossing the separatrix per unit lambda.
    pub gamma: f64,
    /// Sign tags in subspace order [A, B, C].
    pub trend: [Trend; 3],
}

impl GrowthRates {
    pub fn rate(&self, s: Subspace) -> f64 {
        match s {
            Subspace::A => self.d_a,
            Subspace::B => self.d_b,
            Subspace::C => self.d_c,
        }
    }

    pub fn trend_of(&self, s: Subspace) -> Trend {
        self.trend[s as usize]
    }
}

/// X and Y both below this magnitude: no separatrix direction.
const XY_DEGENERATE: f64 = 1e-12;
/// Rates under this fraction of the largest rate count as frozen.
const RATE_FLOOR: f64 = 1e-12;
/// Both lobe rates under this magnitude: no classical flux.
const FLUX_TOL: f64 = 1e-10;
/// Relative lambda step for the lobe-area derivatives.
const LAMBDA_H: f64 = 1e-3;

/// Subspace growth rates from the local lattice parameters.
///
/// d_b is assembled as -(d_a + d_c) so the three rates sum to zero exactly;
/// Gamma is carried in the params as [S~_A, S~_C] / (pi hbar (X dS~_A/dE +
/// Y dS~_C/dE)).
pub fn growth_rates(params: &LatticeParams) -> Result<GrowthRates, KnhError> {
    if params.x.abs() <= XY_DEGENERATE && params.y.abs() <= XY_DEGENERATE {
        return Err(KnhError::DegenerateCase);
    }
    let gamma = params.gamma_rate;
    let d_a = -gamma * params.y;
    let d_c = gamma * params.x;
    let d_b = -(d_a + d_c);
    let scale = d_a.abs().max(d_b.abs()).max(d_c.abs());
    let classify = |r: f64| {
        if r.abs() <= RATE_FLOOR * scale {
            Trend::Frozen
        } else if r > 0.0 {
            Trend::Growing
        } else {
            Trend::Shrinking
        }
    };
    Ok(GrowthRates {
        d_a,
        d_b,
        d_c,
        gamma,
        trend: [classify(d_a), classify(d_b), classify(d_c)],
    })
}

/// Growth rates with the row-stochastic transition map over [A, B, C].
#[derive(Debug, Clone, Copy)]
pub struct KnhPrediction {
    pub rates: GrowthRates,
    /// map[from][to]; every row sums to one.
    pub map: [[f64; 3]; 3],
}

impl KnhPrediction {
    pub fn p(&self, from: Subspace, to: Subspace) -> f64 {
        self.map[from as usize][to as usize]
    }
}

/// Transition probabilities out of each subspace.
///
/// Growing and frozen subspaces keep their amplitude (identity rows); each
/// shrinking subspace distributes over the growing ones in proportion to
/// their growth rates. With a single grower the assignment is forced to
/// probability one; the largest receiving entry is set by complement so rows
/// sum to one exactly.
pub fn knh_predict(params: &LatticeParams) -> Result<KnhPrediction, KnhError> {
    let rates = growth_rates(params)?;
    if !rates.trend.contains(&Trend::Shrinking) {
        return Err(KnhError::AllGrowing);
    }
    let r = [rates.d_a, rates.d_b, rates.d_c];
    let growing: Vec<usize> = (0..3).filter(|&i| rates.trend[i] == Trend::Growing).collect();
    let total: f64 = growing.iter().map(|&i| r[i]).sum();
    let lead = *growing
        .iter()
        .max_by(|&&i, &&j| r[i].total_cmp(&r[j]))
        .expect("zero-sum rates with a shrinker leave a grower");
    let mut map = [[0.0; 3]; 3];
    for i in 0..3 {
        if rates.trend[i] == Trend::Shrinking {
            let mut rest = 0.0;
            for &j in &growing {
                if j != lead {
                    map[i][j] = r[j] / total;
                    rest += map[i][j];
                }
            }
            map[i][lead] = 1.0 - rest;
        } else {
            map[i][i] = 1.0;
        }
    }
    Ok(KnhPrediction { rates, map })
}

/// Classical capture report at the barrier energy.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalCapture {
    /// Probability that a transiting orbit is captured into the right lobe.
    pub p: f64,
    /// Unclamped rate ratio behind `p`.
    pub raw: f64,
    /// Total-lambda derivatives of the lobe areas F(lambda) = S(V_b(lambda), lambda).
    pub df_a: f64,
    pub df_c: f64,
    /// True when `raw` fell outside [0, 1].
    pub clamped: bool,
}

/// Classical capture probability into the right region for orbits forced
/// across the separatrix at lambda.
///
/// Uses total lambda-derivatives of the lobe areas at the barrier energy,
/// V_b(lambda) moving with lambda. With the left lobe shrinking this is the
/// ratio
///
/// ```text
///     P = (dF_C/dlambda) / (-dF_A/dlambda),
/// ```
///
/// clamped to [0, 1] when the right lobe also drains or outpaces the donor.
/// With the left lobe growing, flux leaves the outer region (or the right
/// lobe) instead and the capture probability follows the same
/// rate-proportional split; when neither lobe area moves there is no flux to
/// apportion.
pub fn classical_knh(pot: &Potential, lambda: f64) -> Result<ClassicalCapture, KnhError> {
    let df_a = lobe_rate(pot, lambda, Side::A)?;
    let df_c = lobe_rate(pot, lambda, Side::C)?;
    if df_a.abs() < FLUX_TOL && df_c.abs() < FLUX_TOL {
        return Err(KnhError::CaseViolation { lambda });
    }
    let (raw, clamped) = if df_a < 0.0 {
        let r = df_c / -df_a;
        (r, !(0.0..=1.0).contains(&r))
    } else if df_c >= 0.0 {
        // both lobes grow (or A is static): flux leaves the outer region and
        // splits in proportion to the lobe growth rates
        (df_c / (df_a + df_c), false)
    } else {
        // only the right lobe shrinks; nothing can enter it
        (0.0, false)
    };
    Ok(ClassicalCapture { p: raw.clamp(0.0, 1.0), raw, df_a, df_c, clamped })
}

/// Total lambda-derivative of one lobe area at the barrier energy, by
/// 4th-order central differences of F(lambda) = S(V_b(lambda), lambda).
fn lobe_rate(pot: &Potential, lambda: f64, side: Side) -> Result<f64, KnhError> {
    let h = LAMBDA_H * lambda.abs().max(1.0);
    let f = |l: f64| lobe_area(pot, l, side);
    Ok((f(lambda - 2.0 * h)? - 8.0 * f(lambda - h)? + 8.0 * f(lambda + h)? - f(lambda + 2.0 * h)?)
        / (12.0 * h))
}

/// Lobe action at the barrier energy: integral of sqrt(2 mu [V_b - V])
/// between the outer turning point and the hilltop, single traversal like
/// the well actions elsewhere.
///
/// The integrand has a square-root zero at the outer turning point (u^2
/// substitution) and a linear zero at the hilltop (plain quadrature).
fn lobe_area(pot: &Potential, lambda: f64, side: Side) -> Result<f64, KnhError> {
    let bar = pot.barrier_top(lambda)?;
    let ws = pot.well_structure(lambda);
    let x_min = match side {
        Side::A => ws.minima.iter().rev().find(|m| m.0 < bar.x0),
        Side::C => ws.minima.iter().find(|m| m.0 > bar.x0),
    }
    .expect("an interior barrier is flanked by minima")
    .0;
    let dir = if matches!(side, Side::A) { -1.0 } else { 1.0 };
    let x_out = outer_turning(pot, lambda, bar.v_b, x_min, bar.x0, dir);
    let mu = pot.mu();
    let f = |x: f64| (2.0 * mu * (bar.v_b - pot.value(x, lambda)).max(0.0)).sqrt();
    let rule = gl128();
    let area = match side {
        Side::A => {
            let xm = 0.5 * (x_out + bar.x0);
            integrate(|u| 2.0 * u * f(x_out + u * u), 0.0, (xm - x_out).sqrt(), rule)
                + integrate(f, xm, bar.x0, rule)
        }
        Side::C => {
            let xm = 0.5 * (bar.x0 + x_out);
            integrate(f, bar.x0, xm, rule)
                + integrate(|u| 2.0 * u * f(x_out - u * u), 0.0, (x_out - xm).sqrt(), rule)
        }
    };
    Ok(area)
}

/// Outer solution of V(x) = v_b on the far side of the well minimum: walk
/// outward doubling the step until V exceeds v_b, then refine by bisection.
fn outer_turning(pot: &Potential, lambda: f64, v_b: f64, x_min: f64, x0: f64, dir: f64) -> f64 {
    let mut inner = x_min;
    let mut step = (x0 - x_min).abs().max(1e-3);
    for _ in 0..60 {
        let probe = inner + dir * step;
        if pot.value(probe, lambda) > v_b {
            let (lo, hi) = if dir < 0.0 { (probe, inner) } else { (inner, probe) };
            return brent(|x| pot.value(x, lambda) - v_b, lo, hi, 1e-13);
        }
        inner = probe;
        step *= 2.0;
    }
    panic!("potential does not reconfine outward of x = {x_min}");
}

/// Level counts for the entry phase of the sweep.
#[derive(Debug, Clone, Copy)]
pub struct GeometrySummary {
    /// Initial ensemble size in levels.
    pub m: i64,
    /// Zone width in levels.
    pub d: i64,
    /// Right-ladder levels below the zone reachable by full entry: N.
    pub n: i64,
    /// Zig-zag levels above the zone reachable by full entry: K.
    pub k_above: i64,
    /// Rounding residual N - M X/Y.
    pub delta_n: f64,
    /// Rounding residual K - (M - kD)(1 - X/Y).
    pub delta_k: f64,
    /// Constant-lambda split k = dS~_A/dE / (dS~_A/dE + dS~_C/dE).
    pub k: f64,
}

/// Closed-form level counts: by the time an M-line ensemble has fully
/// entered a zone D levels wide,
///
/// ```text
///     N = M X/Y + deltaN                    right-ladder levels below,
///     K = (M - kD)(1 - X/Y) + deltaK        zig-zag levels above,
/// ```
///
/// with integer rounding residuals |delta| <= 1/2. The -kD term accounts for
/// constant-lambda lines not being parallel to the n axis; published
/// statements quote the conservative residual bound |delta| < 1.
pub fn subspace_geometry(m: i64, d: i64, params: &LatticeParams) -> GeometrySummary {
    assert!(m >= 1 && d >= 0, "need a nonempty ensemble and a nonnegative zone width");
    assert!(params.x > 0.0 && params.y > params.x, "entry geometry needs 0 < X < Y");
    let ratio = params.x / params.y;
    let n_real = m as f64 * ratio;
    let n = n_real.round();
    let k_real = (m as f64 - params.k * d as f64) * (1.0 - ratio);
    let k_above = k_real.round();
    let out = GeometrySummary {
        m,
        d,
        n: n as i64,
        k_above: k_above as i64,
        delta_n: n - n_real,
        delta_k: k_above - k_real,
        k: params.k,
    };
    debug_assert!((out.k_above + out.n + out.d - out.m).abs() <= out.d + 2);
    out
}

/// Interval certain to contain the capture probability into C for an M-line
/// ensemble: X/Y widened by (D + 1)/M on both sides and intersected with
/// [0, 1]. The extra 1 absorbs the geometry rounding residuals.
pub fn weak_bounds(m: i64, d: i64, params: &LatticeParams) -> (f64, f64) {
    assert!(m > 0 && d >= 0);
    let ratio = params.x / params.y;
    let slack = (d + 1) as f64 / m as f64;
    ((ratio - slack).max(0.0), (ratio + slack).min(1.0))
}

/// Strong-theorem report: minimal rational approximation of X/Y and the
/// ensemble period for which the capture probability is claimed exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrongPrediction {
    /// Numerator of the minimal fraction q/p within tol of X/Y.
    pub q: i64,
    /// Denominator of that fraction.
    pub p: i64,
    /// The exact prediction X/Y that q/p approximates.
    pub value: f64,
    /// Ensemble sizes M = J * period repeat the P_mn pattern exactly.
    pub period: i64,
}

/// Exact capture probability X/Y with its minimal rational approximation and
/// the ensemble period behind the exactness claim.
///
/// -ln P_mn = Z e^{mX + nY} is invariant under (m, n) -> (m + p, n - q) when
/// X/Y = q/p in lowest terms, so the pattern repeats every p left-ladder
/// levels and exactness is claimed for M a multiple of p. Published
/// discussion writes the ensemble sizes as M_J = q x J with q naming the
/// denominator slot, so its example (q, p) = (2, 5) at M = 10 corresponds to
/// J = 2 here.
pub fn strong_prediction(params: &LatticeParams, tol: f64) -> StrongPrediction {
    assert!(params.x > 0.0 && params.y > params.x, "the strong theorem needs 0 < X < Y");
    assert!(tol > 0.0);
    let value = params.x / params.y;
    let (q, p) = simplest_fraction(value - tol, value + tol);
    StrongPrediction { q, p, value, period: p }
}

/// Smallest-denominator fraction in [lo, hi], by the continued-fraction walk:
/// take the integer part, recurse on the reciprocal of the fractional
/// remainder with the interval endpoints swapped.
fn simplest_fraction(lo: f64, hi: f64) -> (i64, i64) {
    debug_assert!(lo <= hi);
    let a = lo.ceil();
    if a <= hi {
        return (a as i64, 1);
    }
    let base = lo.floor();
    let (p, q) = simplest_fraction(1.0 / (hi - base), 1.0 / (lo - base));
    (base as i64 * p + q, p)
}
