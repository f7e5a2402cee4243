//! Parameter-dependent 1-D potentials, their barrier geometry, and turning
//! points.
//!
//! The primary family is the tilted quartic double well
//!
//! ```text
//! V(x, lambda) = alpha x^4 - beta(lambda) x^2 + gamma(lambda) x
//! ```
//!
//! with beta and gamma polynomials in the sweep parameter lambda. A harmonic
//! family (V = mu omega^2 x^2 / 2) exists for closed-form checks and a static
//! sampled family interpolates a fixed table. The mass mu, Planck constant
//! hbar, and the affine sweep lambda(t) = lambda0 + rate * t live on the
//! potential so every downstream quantity is evaluable from one value.

use thiserror::Error;

use crate::numerics::brent;

/// Polynomial in lambda, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    /// Polynomial from ascending coefficients; empty means identically zero.
    pub fn new(coeffs: Vec<f64>) -> Self {
        Poly { coeffs }
    }

    /// Constant polynomial.
    pub fn constant(c: f64) -> Self {
        Poly { coeffs: vec![c] }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Value at lambda by Horner's rule.
    pub fn eval(&self, lambda: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * lambda + c)
    }

    /// Derivative value at lambda.
    pub fn deriv(&self, lambda: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * lambda + k as f64 * c)
    }
}

/// Affine sweep lambda(t) = lambda0 + rate * t with rate > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub lambda0: f64,
    pub rate: f64,
}

impl Sweep {
    /// Time at which the sweep reaches the given lambda.
    pub fn time_at(&self, lambda: f64) -> f64 {
        (lambda - self.lambda0) / self.rate
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    Quartic { alpha: f64, beta: Poly, gamma: Poly },
    Harmonic { omega: f64 },
    Sampled { xs: Vec<f64>, vs: Vec<f64>, slopes: Vec<f64> },
}

/// Barrier-top geometry: V(x) ~ v_b - kappa (x - x0)^2 / 2 near x0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierInfo {
    pub x0: f64,
    pub v_b: f64,
    pub kappa: f64,
}

/// Stationary structure at one lambda: well minima bracketing an optional
/// interior maximum.
#[derive(Debug, Clone)]
pub struct WellStructure {
    /// (x, V) of local minima, sorted in x.
    pub minima: Vec<(f64, f64)>,
    pub barrier: Option<BarrierInfo>,
}

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("no interior barrier at lambda = {lambda} (single-well regime)")]
    NoBarrier { lambda: f64 },
    #[error(
        "energy {e} is within tolerance of the stationary value {stationary} at lambda = {lambda}; offset the energy"
    )]
    DegenerateEnergy { e: f64, stationary: f64, lambda: f64 },
}

/// A 1-D potential with mass, hbar, and the sweep descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    family: Family,
    mu: f64,
    hbar: f64,
    sweep: Sweep,
}

/// Relative tolerance for treating E as degenerate with a stationary value.
const DEGENERATE_TOL: f64 = 1e-9;
/// Absolute x tolerance for bracketed turning-point refinement.
const ROOT_TOL_X: f64 = 1e-12;

impl Potential {
    /// Tilted quartic double well alpha x^4 - beta(lambda) x^2 + gamma(lambda) x.
    pub fn quartic(alpha: f64, beta: Poly, gamma: Poly, mu: f64, hbar: f64, sweep: Sweep) -> Self {
        assert!(alpha > 0.0, "quartic coefficient must be positive (confining)");
        Self::checked(Family::Quartic { alpha, beta, gamma }, mu, hbar, sweep)
    }

    /// Harmonic test instance V = mu omega^2 x^2 / 2, lambda-independent.
    pub fn harmonic(omega: f64, mu: f64, hbar: f64) -> Self {
        assert!(omega > 0.0, "harmonic frequency must be positive");
        let sweep = Sweep { lambda0: 0.0, rate: 1.0 };
        Self::checked(Family::Harmonic { omega }, mu, hbar, sweep)
    }

    /// Static tabulated potential, interpolated by a monotone cubic Hermite
    /// spline; lambda-independent.
    pub fn sampled(xs: Vec<f64>, vs: Vec<f64>, mu: f64, hbar: f64) -> Self {
        assert!(xs.len() >= 4 && xs.len() == vs.len(), "need >= 4 samples");
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "sample x must be strictly increasing");
        let slopes = hermite_slopes(&xs, &vs);
        let sweep = Sweep { lambda0: 0.0, rate: 1.0 };
        Self::checked(Family::Sampled { xs, vs, slopes }, mu, hbar, sweep)
    }

    fn checked(family: Family, mu: f64, hbar: f64, sweep: Sweep) -> Self {
        assert!(mu > 0.0, "mass must be positive");
        assert!(hbar > 0.0, "hbar must be positive");
        assert!(sweep.rate > 0.0, "sweep rate must be positive (monotonic sweep)");
        Potential { family, mu, hbar, sweep }
    }

    /// Same potential with a different hbar (semiclassical-limit studies).
    pub fn with_hbar(&self, hbar: f64) -> Self {
        assert!(hbar > 0.0);
        let mut p = self.clone();
        p.hbar = hbar;
        p
    }

    /// Same potential with a different sweep descriptor.
    pub fn with_sweep(&self, sweep: Sweep) -> Self {
        assert!(sweep.rate > 0.0);
        let mut p = self.clone();
        p.sweep = sweep;
        p
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn sweep(&self) -> Sweep {
        self.sweep
    }

    /// V(x, lambda).
    pub fn value(&self, x: f64, lambda: f64) -> f64 {
        match &self.family {
            Family::Quartic { alpha, beta, gamma } => {
                let x2 = x * x;
                alpha * x2 * x2 - beta.eval(lambda) * x2 + gamma.eval(lambda) * x
            }
            Family::Harmonic { omega } => 0.5 * self.mu * omega * omega * x * x,
            Family::Sampled { xs, vs, slopes } => hermite_eval(xs, vs, slopes, x),
        }
    }

    /// dV/dx at (x, lambda).
    pub fn slope(&self, x: f64, lambda: f64) -> f64 {
        match &self.family {
            Family::Quartic { alpha, beta, gamma } => {
                4.0 * alpha * x * x * x - 2.0 * beta.eval(lambda) * x + gamma.eval(lambda)
            }
            Family::Harmonic { omega } => self.mu * omega * omega * x,
            Family::Sampled { xs, vs, slopes } => hermite_deriv(xs, vs, slopes, x),
        }
    }

    /// d2V/dx2 at (x, lambda).
    pub fn curvature(&self, x: f64, lambda: f64) -> f64 {
        match &self.family {
            Family::Quartic { alpha, beta, .. } => 12.0 * alpha * x * x - 2.0 * beta.eval(lambda),
            Family::Harmonic { omega } => self.mu * omega * omega,
            Family::Sampled { .. } => {
                let h = 1e-5 * self.x_scale(0.0);
                (self.slope(x + h, 0.0) - self.slope(x - h, 0.0)) / (2.0 * h)
            }
        }
    }

    /// partial V / partial lambda at (x, lambda); zero for static families.
    pub fn lambda_slope(&self, x: f64, lambda: f64) -> f64 {
        match &self.family {
            Family::Quartic { beta, gamma, .. } => -beta.deriv(lambda) * x * x + gamma.deriv(lambda) * x,
            Family::Harmonic { .. } | Family::Sampled { .. } => 0.0,
        }
    }

    /// Half-width of the x range guaranteed to contain all structure at this
    /// energy: outside it the confining term dominates.
    fn x_reach(&self, e: f64, lambda: f64) -> f64 {
        match &self.family {
            Family::Quartic { alpha, beta, gamma } => {
                let b = beta.eval(lambda).abs();
                let g = gamma.eval(lambda).abs();
                let budget = (b + g + e.abs() + 1.0) / alpha;
                2.0 * budget.powf(0.25) + 2.0 * (b / alpha).sqrt().sqrt() + 1.0
            }
            Family::Harmonic { omega } => {
                (2.0 * e.max(0.0) / (self.mu * omega * omega)).sqrt() + 1.0
            }
            Family::Sampled { xs, .. } => xs[xs.len() - 1].abs().max(xs[0].abs()) + 1.0,
        }
    }

    fn x_scale(&self, lambda: f64) -> f64 {
        self.x_reach(0.0, lambda).max(1.0)
    }

    /// Stationary points of V(., lambda), sorted; closed-form for the
    /// quartic family, scan plus refinement for sampled tables.
    fn stationary_points(&self, lambda: f64) -> Vec<f64> {
        match &self.family {
            Family::Quartic { alpha, beta, gamma } => {
                // 4 alpha x^3 - 2 beta x + gamma = 0, depressed cubic.
                let p = -beta.eval(lambda) / (2.0 * alpha);
                let q = gamma.eval(lambda) / (4.0 * alpha);
                let mut roots = depressed_cubic_roots(p, q);
                // Two Newton polish steps against the exact derivative.
                for r in &mut roots {
                    for _ in 0..2 {
                        let c = self.curvature(*r, lambda);
                        if c != 0.0 {
                            *r -= self.slope(*r, lambda) / c;
                        }
                    }
                }
                roots.sort_by(f64::total_cmp);
                roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
                roots
            }
            Family::Harmonic { .. } => vec![0.0],
            Family::Sampled { xs, .. } => {
                let (lo, hi) = (xs[0], xs[xs.len() - 1]);
                let n = 2048;
                let step = (hi - lo) / n as f64;
                let mut stationary = Vec::new();
                let mut prev_x = lo;
                let mut prev_s = self.slope(prev_x, lambda);
                for i in 1..=n {
                    let x = lo + i as f64 * step;
                    let s = self.slope(x, lambda);
                    if prev_s == 0.0 {
                        stationary.push(prev_x);
                    } else if prev_s * s < 0.0 {
                        stationary.push(brent(|t| self.slope(t, lambda), prev_x, x, ROOT_TOL_X));
                    }
                    prev_x = x;
                    prev_s = s;
                }
                stationary
            }
        }
    }

    /// Local minima and the interior maximum (if any) at this lambda.
    pub fn well_structure(&self, lambda: f64) -> WellStructure {
        let stationary = self.stationary_points(lambda);
        let mut minima = Vec::new();
        let mut barrier = None;
        for &x in &stationary {
            let c = self.curvature(x, lambda);
            if c > 0.0 {
                minima.push((x, self.value(x, lambda)));
            } else if c < 0.0 {
                barrier = Some(BarrierInfo { x0: x, v_b: self.value(x, lambda), kappa: -c });
            }
        }
        minima.sort_by(|a, b| a.0.total_cmp(&b.0));
        // A maximum not flanked by two minima is not an interior barrier.
        if minima.len() < 2 {
            barrier = None;
        }
        WellStructure { minima, barrier }
    }

    /// Barrier-top position, height, and downward curvature.
    pub fn barrier_top(&self, lambda: f64) -> Result<BarrierInfo, PotentialError> {
        self.well_structure(lambda).barrier.ok_or(PotentialError::NoBarrier { lambda })
    }

    /// Sorted real roots of V(x, lambda) = E.
    ///
    /// Four roots in the double-well regime below the barrier, two above it
    /// (or for single wells). Energies within relative tolerance of a
    /// stationary value are rejected: the adjacent quadrature is singular
    /// there and the caller must offset.
    pub fn turning_points(&self, e: f64, lambda: f64) -> Result<Vec<f64>, PotentialError> {
        let ws = self.well_structure(lambda);
        let mut scale = 1.0f64;
        for &(_, v) in &ws.minima {
            scale = scale.max(v.abs());
        }
        if let Some(b) = &ws.barrier {
            scale = scale.max(b.v_b.abs());
        }
        for stationary in ws
            .minima
            .iter()
            .map(|&(_, v)| v)
            .chain(ws.barrier.as_ref().map(|b| b.v_b))
        {
            if (e - stationary).abs() < DEGENERATE_TOL * scale {
                return Err(PotentialError::DegenerateEnergy { e, stationary, lambda });
            }
        }
        let min_v = ws
            .minima
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::INFINITY, f64::min);
        assert!(e > min_v, "turning_points requires E above the global minimum");

        if let Family::Quartic { alpha, beta, gamma } = &self.family {
            if gamma.eval(lambda) == 0.0 {
                return Ok(biquadratic_roots(*alpha, beta.eval(lambda), e));
            }
        }

        // V is monotone between consecutive stationary points, so each
        // segment of the partition holds at most one simple root.
        let reach = self.x_reach(e, lambda);
        let (lo, hi) = match &self.family {
            Family::Sampled { xs, .. } => (xs[0], xs[xs.len() - 1]),
            _ => (-reach, reach),
        };
        let mut knots = vec![lo];
        knots.extend(self.stationary_points(lambda).iter().filter(|&&x| x > lo && x < hi));
        knots.push(hi);
        let mut roots = Vec::new();
        for w in knots.windows(2) {
            let (xl, xr) = (w[0], w[1]);
            let (fl, fr) = (self.value(xl, lambda) - e, self.value(xr, lambda) - e);
            if fl == 0.0 {
                roots.push(xl);
            } else if fl * fr < 0.0 {
                roots.push(brent(|t| self.value(t, lambda) - e, xl, xr, ROOT_TOL_X));
            }
        }
        roots.sort_by(f64::total_cmp);
        Ok(roots)
    }
}

/// Real roots of t^3 + p t + q = 0.
fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    if p == 0.0 && q == 0.0 {
        return vec![0.0];
    }
    let d = 0.25 * q * q + p * p * p / 27.0;
    if d > 0.0 {
        let s = d.sqrt();
        vec![(-0.5 * q + s).cbrt() + (-0.5 * q - s).cbrt()]
    } else {
        // Three real roots (p < 0 here), trigonometric form.
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (2.0 * p) * (-3.0 / p).sqrt()).clamp(-1.0, 1.0);
        let theta = arg.acos();
        (0..3)
            .map(|k| r * ((theta - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos())
            .collect()
    }
}

/// Roots of alpha x^4 - beta x^2 = E in closed form.
fn biquadratic_roots(alpha: f64, beta: f64, e: f64) -> Vec<f64> {
    let disc = beta * beta + 4.0 * alpha * e;
    let mut roots = Vec::new();
    if disc < 0.0 {
        return roots;
    }
    let sq = disc.sqrt();
    for num in [beta - sq, beta + sq] {
        let x2 = num / (2.0 * alpha);
        if x2 > 0.0 {
            let r = x2.sqrt();
            roots.push(-r);
            roots.push(r);
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Fritsch-Carlson monotone cubic Hermite slopes.
fn hermite_slopes(xs: &[f64], vs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut d = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        d.push((vs[i + 1] - vs[i]) / (xs[i + 1] - xs[i]));
    }
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        m[i] = if d[i - 1] * d[i] <= 0.0 { 0.0 } else { 0.5 * (d[i - 1] + d[i]) };
    }
    for i in 0..n - 1 {
        if d[i] == 0.0 {
            m[i] = 0.0;
            m[i + 1] = 0.0;
        } else {
            let a = m[i] / d[i];
            let b = m[i + 1] / d[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                m[i] = t * a * d[i];
                m[i + 1] = t * b * d[i];
            }
        }
    }
    m
}

fn hermite_segment(xs: &[f64], x: f64) -> usize {
    match xs.binary_search_by(|p| p.total_cmp(&x)) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i.clamp(1, xs.len() - 1) - 1,
    }
}

fn hermite_eval(xs: &[f64], vs: &[f64], slopes: &[f64], x: f64) -> f64 {
    let i = hermite_segment(xs, x);
    let h = xs[i + 1] - xs[i];
    let t = ((x - xs[i]) / h).clamp(0.0, 1.0);
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * vs[i] + h10 * h * slopes[i] + h01 * vs[i + 1] + h11 * h * slopes[i + 1]
}

fn hermite_deriv(xs: &[f64], vs: &[f64], slopes: &[f64], x: f64) -> f64 {
    let i = hermite_segment(xs, x);
    let h = xs[i + 1] - xs[i];
    let t = ((x - xs[i]) / h).clamp(0.0, 1.0);
    let t2 = t * t;
    let d00 = (6.0 * t2 - 6.0 * t) / h;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = (-6.0 * t2 + 6.0 * t) / h;
    let d11 = 3.0 * t2 - 2.0 * t;
    d00 * vs[i] + d10 * slopes[i] + d01 * vs[i + 1] + d11 * slopes[i + 1]
}
