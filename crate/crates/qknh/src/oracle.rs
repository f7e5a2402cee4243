//! Exact eigenvalue reference on a hard-wall grid.
//!
//! The Hamiltonian -(hbar^2/2mu) d^2/dx^2 + V(x, lambda) is discretized with
//! three-point finite differences on N_x interior points, psi = 0 at both
//! walls:
//!
//! ```text
//!     H[i][i]   = hbar^2/(mu h^2) + V(x_i)      x_i = x_min + (i+1) h
//!     H[i][i+1] = -hbar^2/(2 mu h^2)            h   = (x_max - x_min)/(N_x + 1)
//! ```
//!
//! The matrix is symmetric tridiagonal, so eigenvalues come from Sturm
//! bisection: the LDL^T sign count gives the number of eigenvalues below any
//! trial energy, and each level is bisected to machine precision inside its
//! Gershgorin bracket. The truncation error is O(h^2); every solve is run at
//! N_x and 2N_x + 1 interior points (exactly half the spacing) and Richardson
//! extrapolation cancels the h^2 term:
//!
//! ```text
//!     E = E_fine + (E_fine - E_coarse)/3 + O(h^4)
//! ```
//!
//! Hard walls are only faithful when every returned state dies off before
//! reaching them. The boundary weight is estimated from the WKB tail,
//! exp(-2 integral kappa dx / hbar) from the outermost classical turning
//! point to the wall, and solves whose top state leaks more than 1e-8 are
//! rejected. A potential with no local minimum (a flat box table) never
//! reconfines the state, so there the walls are treated as the physics.

use crate::numerics::{gl64, integrate, par_map_indexed};
use crate::potential::{Potential, PotentialError};
use crate::spectrum::CrossingNode;
use thiserror::Error;

/// Interior point count used by [`default_grid`].
pub const DEFAULT_NX: usize = 4000;

/// Largest tolerated WKB boundary weight for the top returned state.
const BOUNDARY_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("estimated wavefunction weight {mass:.3e} at the {side} wall exceeds 1e-8; widen the domain")]
    GridTooSmall { side: &'static str, mass: f64 },
    #[error("minimal gap near lambda = {lambda} sits below the eigensolver resolution {resolution:.3e}")]
    TrackingLoss { lambda: f64, resolution: f64 },
}

/// Hard-wall discretization window: psi(x_min) = psi(x_max) = 0 with `n_x`
/// interior points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_x: usize) -> Self {
        assert!(x_min.is_finite() && x_max.is_finite() && x_min < x_max);
        assert!(n_x >= 200, "need at least 200 interior points");
        GridSpec { x_min, x_max, n_x }
    }

    /// Interior spacing.
    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x + 1) as f64
    }

    /// Same window at exactly half the spacing.
    fn refined(&self) -> Self {
        GridSpec { n_x: 2 * self.n_x + 1, ..*self }
    }
}

/// Domain sized for states up to `e_top`: walls sit 8 decay lengths
/// l = sqrt(hbar / sqrt(8 mu (V - E))) beyond the outermost turning points,
/// widened further until the estimated boundary weight is negligible.
pub fn default_grid(pot: &Potential, lambda: f64, e_top: f64) -> Result<GridSpec, OracleError> {
    let tp = turning_nudged(pot, e_top, lambda)?;
    assert!(tp.len() >= 2, "energy must be classically confined");
    let (x1, x4) = (tp[0], tp[tp.len() - 1]);
    let mut lo = x1 - decay_margin(pot, lambda, e_top, x1, -1.0);
    let mut hi = x4 + decay_margin(pot, lambda, e_top, x4, 1.0);
    for _ in 0..32 {
        let ml = boundary_mass(pot, lambda, e_top, x1, lo);
        let mr = boundary_mass(pot, lambda, e_top, x4, hi);
        if ml <= 0.1 * BOUNDARY_MASS_TOL && mr <= 0.1 * BOUNDARY_MASS_TOL {
            break;
        }
        if ml > 0.1 * BOUNDARY_MASS_TOL {
            lo = x1 - 1.5 * (x1 - lo);
        }
        if mr > 0.1 * BOUNDARY_MASS_TOL {
            hi = x4 + 1.5 * (hi - x4);
        }
    }
    Ok(GridSpec::new(lo, hi, DEFAULT_NX))
}

/// Eight decay lengths, the length evaluated self-consistently one decay
/// length into the forbidden region.
fn decay_margin(pot: &Potential, lambda: f64, e: f64, x_t: f64, dir: f64) -> f64 {
    let mut l = 0.01 * (1.0 + x_t.abs());
    for _ in 0..32 {
        let v = (pot.value(x_t + dir * l, lambda) - e).max(1e-9);
        let next = (pot.hbar() / (8.0 * pot.mu() * v).sqrt()).sqrt();
        l = 0.5 * (l + next);
    }
    8.0 * l
}

/// WKB weight exp(-2 integral kappa / hbar) between a turning point and a
/// wall; 1 when the wall is classically allowed.
fn boundary_mass(pot: &Potential, lambda: f64, e: f64, x_turn: f64, wall: f64) -> f64 {
    if pot.value(wall, lambda) <= e {
        return 1.0;
    }
    let dir = if wall >= x_turn { 1.0 } else { -1.0 };
    let mu = pot.mu();
    let width = (wall - x_turn).abs();
    let kappa = |x: f64| (2.0 * mu * (pot.value(x, lambda) - e).max(0.0)).sqrt();
    let action = integrate(
        |u| 2.0 * u * kappa(x_turn + dir * u * u),
        0.0,
        width.sqrt(),
        gl64(),
    );
    (-2.0 * action / pot.hbar()).exp()
}

/// Turning points with a tiny upward energy nudge when the requested energy
/// sits exactly on a stationary value.
fn turning_nudged(pot: &Potential, e: f64, lambda: f64) -> Result<Vec<f64>, PotentialError> {
    match pot.turning_points(e, lambda) {
        Err(PotentialError::DegenerateEnergy { .. }) => {
            pot.turning_points(e + 1e-8 * e.abs().max(1.0), lambda)
        }
        other => other,
    }
}

/// Diagonal, squared off-diagonal, and off-diagonal magnitude of the
/// discretized Hamiltonian.
fn assemble(pot: &Potential, lambda: f64, grid: &GridSpec) -> (Vec<f64>, f64, f64) {
    let h = grid.h();
    let t = pot.hbar() * pot.hbar() / (2.0 * pot.mu() * h * h);
    let diag = (0..grid.n_x)
        .map(|i| 2.0 * t + pot.value(grid.x_min + (i + 1) as f64 * h, lambda))
        .collect();
    (diag, t * t, t)
}

/// Number of eigenvalues strictly below `t` (LDL^T sign count).
fn sturm_below(diag: &[f64], off2: f64, pivmin: f64, t: f64) -> usize {
    let mut count = 0;
    let mut d = diag[0] - t;
    if d.abs() < pivmin {
        d = -pivmin;
    }
    if d < 0.0 {
        count += 1;
    }
    for &a in &diag[1..] {
        d = (a - t) - off2 / d;
        if d.abs() < pivmin {
            d = -pivmin;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// k-th eigenvalue (0-based) by bisection; requires count(lo) <= k < count(hi).
fn kth_eigenvalue(diag: &[f64], off2: f64, pivmin: f64, k: usize, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..220 {
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            break;
        }
        if sturm_below(diag, off2, pivmin, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Lowest `count` eigenvalues on a single grid, no extrapolation and no
/// boundary check. The raw solver is exposed so convergence order can be
/// measured directly.
pub fn grid_eigenvalues(pot: &Potential, lambda: f64, grid: &GridSpec, count: usize) -> Vec<f64> {
    assert!(count >= 1 && count <= grid.n_x, "count must fit the interior grid");
    let (diag, off2, t) = assemble(pot, lambda, grid);
    let mut lo = diag.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * t;
    let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * t;
    let pivmin = ((hi - lo) * 1e-16).max(1e-290);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let e = kth_eigenvalue(&diag, off2, pivmin, k, lo, hi);
        lo = e;
        out.push(e);
    }
    out
}

/// Dual-grid solve with Richardson extrapolation.
#[derive(Debug, Clone)]
pub struct ExactSpectrum {
    /// Extrapolated eigenvalues, the reference values.
    pub levels: Vec<f64>,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    /// Per-level extrapolation increment |fine - coarse|/3, the error scale
    /// of the raw grids.
    pub delta: Vec<f64>,
}

/// Lowest `count` eigenvalues at N_x and 2N_x + 1 interior points, combined
/// by Richardson extrapolation. Errors with [`OracleError::GridTooSmall`]
/// when the top returned state reaches a wall with estimated weight above
/// 1e-8; a potential with no local minimum keeps its walls as physics.
pub fn exact_spectrum(
    pot: &Potential,
    lambda: f64,
    grid: &GridSpec,
    count: usize,
) -> Result<ExactSpectrum, OracleError> {
    let coarse = grid_eigenvalues(pot, lambda, grid, count);
    let fine = grid_eigenvalues(pot, lambda, &grid.refined(), count);
    let mut levels = Vec::with_capacity(count);
    let mut delta = Vec::with_capacity(count);
    for i in 0..count {
        let d = (fine[i] - coarse[i]) / 3.0;
        levels.push(fine[i] + d);
        delta.push(d.abs());
    }
    let e_top = levels[count - 1];
    if !pot.well_structure(lambda).minima.is_empty() {
        let tp = turning_nudged(pot, e_top, lambda)?;
        if let (Some(&x1), Some(&x4)) = (tp.first(), tp.last()) {
            for (x_t, wall, side) in [(x1, grid.x_min, "left"), (x4, grid.x_max, "right")] {
                let mass = boundary_mass(pot, lambda, e_top, x_t, wall);
                if mass > BOUNDARY_MASS_TOL {
                    return Err(OracleError::GridTooSmall { side, mass });
                }
            }
        }
    }
    Ok(ExactSpectrum { levels, coarse, fine, delta })
}

/// Result of a gap scan across one avoided crossing.
#[derive(Debug, Clone)]
pub struct GapScan {
    /// Minimal gap, parabolically refined around the smallest sample.
    pub gap: f64,
    pub lambda_at_min: f64,
    /// 0-based indices of the tracked level pair.
    pub pair: (usize, usize),
    pub lambdas: Vec<f64>,
    pub gaps: Vec<f64>,
}

/// Scan the exact gap of the level pair straddling a crossing node across
/// `lambda_halfwidth` on both sides.
///
/// The pair is picked once at the node: of the pairs adjacent to the count
/// of exact levels below the node energy, the one whose mean energy sits
/// nearest the node is the crossing pair. Its indices are then held fixed
/// across the scan, so levels are tracked purely by energy ordering. The minimum
/// is refined with a parabola through the three smallest squared gaps,
/// which is exact for the two-level hyperbola; if the refined gap falls
/// below the eigensolver resolution the pair can no longer be told apart
/// and the scan reports [`OracleError::TrackingLoss`].
pub fn gap_scan(
    pot: &Potential,
    node: &CrossingNode,
    grid: &GridSpec,
    lambda_halfwidth: f64,
    steps: usize,
) -> Result<GapScan, OracleError> {
    assert!(steps >= 5, "need at least five scan points");
    assert!(lambda_halfwidth > 0.0);
    let (diag, off2, t) = assemble(pot, node.lambda, grid);
    let pivmin = (4.0 * t * 1e-16).max(1e-290);
    let k0 = sturm_below(&diag, off2, pivmin, node.e);
    assert!(k0 >= 1, "crossing energy must lie above the ground state");
    // The predicted crossing energy carries an O(hbar^2) bias that can exceed
    // the gap itself, so the pair need not straddle it: of the three pairs
    // adjacent to the below-count, take the one whose mean sits nearest.
    let probe = exact_spectrum(pot, node.lambda, grid, k0 + 2)?;
    let mut k = k0;
    let mut best = f64::INFINITY;
    for u in k0.saturating_sub(1).max(1)..=k0 + 1 {
        let mid = 0.5 * (probe.levels[u] + probe.levels[u - 1]);
        if (mid - node.e).abs() < best {
            best = (mid - node.e).abs();
            k = u;
        }
    }

    let step = 2.0 * lambda_halfwidth / (steps - 1) as f64;
    let lambdas: Vec<f64> = (0..steps)
        .map(|i| node.lambda - lambda_halfwidth + i as f64 * step)
        .collect();
    let points = par_map_indexed(steps, |i| {
        exact_spectrum(pot, lambdas[i], grid, k + 1).map(|s| {
            let gap = s.levels[k] - s.levels[k - 1];
            let res = (s.delta[k] - s.delta[k - 1]).abs() + 1e-12 * s.levels[k].abs().max(1.0);
            (gap, res)
        })
    });
    let mut gaps = Vec::with_capacity(steps);
    let mut reses = Vec::with_capacity(steps);
    for p in points {
        let (g, r) = p?;
        gaps.push(g);
        reses.push(r);
    }

    let i0 = (0..steps).min_by(|&a, &b| gaps[a].total_cmp(&gaps[b])).unwrap();
    let (mut lambda_at_min, mut gap) = (lambdas[i0], gaps[i0]);
    if i0 > 0 && i0 + 1 < steps {
        // Two coupled levels give gap^2 = g0^2 + s^2 (lambda - lambda*)^2, a
        // parabola in lambda even when the steps are far wider than the core,
        // so the vertex is fit on the squared gaps.
        let (a, b, c) = (
            gaps[i0 - 1] * gaps[i0 - 1],
            gaps[i0] * gaps[i0],
            gaps[i0 + 1] * gaps[i0 + 1],
        );
        let curv = a - 2.0 * b + c;
        let off = 0.5 * (a - c) / curv;
        if curv > 0.0 && off.abs() <= 1.0 {
            lambda_at_min = lambdas[i0] + off * step;
            gap = (b - 0.125 * (a - c) * (a - c) / curv).max(0.0).sqrt();
        }
    }
    let resolution = reses[i0];
    if gap < resolution {
        return Err(OracleError::TrackingLoss { lambda: lambda_at_min, resolution });
    }
    Ok(GapScan { gap, lambda_at_min, pair: (k - 1, k), lambdas, gaps })
}

/// Exact levels tabulated over a lambda grid, with the classical barrier
/// height alongside.
#[derive(Debug, Clone)]
pub struct SpectrumSheet {
    pub lambdas: Vec<f64>,
    /// `levels[i][n]` is level n at `lambdas[i]`.
    pub levels: Vec<Vec<f64>>,
    /// Barrier height per column; None when the barrier is gone.
    pub v_b: Vec<Option<f64>>,
}

/// One local dip of an adjacent-level gap across lambda.
#[derive(Debug, Clone, Copy)]
pub struct SheetMinimum {
    /// Lower index of the pair.
    pub pair_low: usize,
    pub lambda: f64,
    pub e_mean: f64,
    pub gap: f64,
    pub below_barrier: bool,
}

impl SpectrumSheet {
    /// Local dips of every adjacent-level gap over the lambda grid.
    ///
    /// A sample counts as a dip when it is a local minimum sitting below 0.6
    /// of its taller neighbor; the contrast cut rejects float-level wiggles
    /// on flat stretches, so the lambda grid must be coarse enough for the
    /// dip to stand out against its surroundings.
    pub fn gap_minima(&self) -> Vec<SheetMinimum> {
        let cols = self.lambdas.len();
        let n_levels = self.levels.first().map_or(0, Vec::len);
        let mut out = Vec::new();
        for p in 0..n_levels.saturating_sub(1) {
            for i in 1..cols.saturating_sub(1) {
                let g = |j: usize| self.levels[j][p + 1] - self.levels[j][p];
                let (gm, g0, gp) = (g(i - 1), g(i), g(i + 1));
                if g0 < gm && g0 <= gp && g0 < 0.6 * gm.max(gp) {
                    let e_mean = 0.5 * (self.levels[i][p] + self.levels[i][p + 1]);
                    let below = self.v_b[i].map_or(false, |vb| e_mean < vb);
                    out.push(SheetMinimum {
                        pair_low: p,
                        lambda: self.lambdas[i],
                        e_mean,
                        gap: g0,
                        below_barrier: below,
                    });
                }
            }
        }
        out
    }
}

/// Exact spectrum at every lambda of a grid; columns are independent solves
/// run in parallel.
pub fn spectrum_sheet(
    pot: &Potential,
    lambdas: &[f64],
    grid: &GridSpec,
    count: usize,
) -> Result<SpectrumSheet, OracleError> {
    assert!(!lambdas.is_empty());
    let rows = par_map_indexed(lambdas.len(), |i| {
        exact_spectrum(pot, lambdas[i], grid, count).map(|s| s.levels)
    });
    let mut levels = Vec::with_capacity(rows.len());
    for r in rows {
        levels.push(r?);
    }
    let v_b = lambdas
        .iter()
        .map(|&l| pot.barrier_top(l).ok().map(|b| b.v_b))
        .collect();
    Ok(SpectrumSheet { lambdas: lambdas.to_vec(), levels, v_b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Poly, Sweep};
    use crate::semiclassics::action_derivatives;
    use crate::spectrum::crossing_lattice;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn harmonic() -> Potential {
        Potential::harmonic(1.0, 1.0, 1.0)
    }

    /// Symmetric quartic, no tilt, static for all practical purposes.
    fn static_quartic(hbar: f64) -> Potential {
        Potential::quartic(
            1.0,
            Poly::constant(2.0),
            Poly::constant(0.0),
            1.0,
            hbar,
            Sweep { lambda0: 0.0, rate: 1e-4 },
        )
    }

    /// Symmetric quartic with a lambda-proportional tilt.
    fn swept_quartic(hbar: f64) -> Potential {
        Potential::quartic(
            1.0,
            Poly::constant(2.0),
            Poly::new(vec![0.0, 0.2]),
            1.0,
            hbar,
            Sweep { lambda0: -0.5, rate: 1e-4 },
        )
    }

    #[test]
    fn harmonic_ladder_matches_closed_form() {
        let p = harmonic();
        let grid = GridSpec::new(-12.0, 12.0, 2000);
        let s = exact_spectrum(&p, 0.0, &grid, 10).unwrap();
        let mut worst_raw = 0.0f64;
        let mut worst_extrap = 0.0f64;
        for (n, (&e, &c)) in s.levels.iter().zip(&s.coarse).enumerate() {
            let exact = n as f64 + 0.5;
            worst_extrap = worst_extrap.max((e - exact).abs());
            worst_raw = worst_raw.max((c - exact).abs());
        }
        assert!(worst_extrap < 1e-4, "extrapolated error {worst_extrap:.2e}");
        assert!(worst_extrap < worst_raw, "extrapolation must beat the raw grid");
    }

    #[test]
    fn hard_wall_box_matches_closed_form() {
        let xs = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let p = Potential::sampled(xs, vec![0.0; 5], 1.0, 1.0);
        let grid = GridSpec::new(0.0, 1.0, 3999);
        let s = exact_spectrum(&p, 0.0, &grid, 6).unwrap();
        for (i, &e) in s.levels.iter().enumerate() {
            let n = (i + 1) as f64;
            let exact = n * n * std::f64::consts::PI.powi(2) / 2.0;
            assert_abs_diff_eq!(e, exact, epsilon = 1e-4);
        }
    }

    #[test]
    fn error_drops_fourfold_when_the_grid_doubles() {
        let p = harmonic();
        let coarse = GridSpec::new(-10.0, 10.0, 250);
        let fine = coarse.refined();
        let ec = grid_eigenvalues(&p, 0.0, &coarse, 6);
        let ef = grid_eigenvalues(&p, 0.0, &fine, 6);
        for n in 0..6 {
            let exact = n as f64 + 0.5;
            let ratio = (ec[n] - exact).abs() / (ef[n] - exact).abs();
            assert!((3.5..4.5).contains(&ratio), "level {n}: ratio {ratio}");
        }
    }

    #[test]
    fn eigenvalues_come_out_strictly_ordered() {
        let p = swept_quartic(0.1);
        let grid = default_grid(&p, 0.3, 0.8).unwrap();
        let s = exact_spectrum(&p, 0.3, &grid, 20).unwrap();
        for w in s.levels.windows(2) {
            assert!(w[1] > w[0], "levels must be strictly increasing");
        }
    }

    #[test]
    fn doublet_splitting_tracks_the_tunneling_rate() {
        let p = static_quartic(0.1);
        let grid = GridSpec::new(-2.6, 2.6, 4000);
        let s = exact_spectrum(&p, 0.0, &grid, 10).unwrap();
        let e = &s.levels;
        let mut checked = 0;
        for k in 1..e.len() - 2 {
            let gap = e[k + 1] - e[k];
            let mean = 0.5 * (e[k] + e[k + 1]);
            let around = (e[k] - e[k - 1]).min(e[k + 2] - e[k + 1]);
            if !(-0.75..-0.25).contains(&mean) || gap > 0.25 * around {
                continue;
            }
            let t = action_derivatives(&p, mean, 0.0).unwrap();
            let gamma = (-t.t_b / p.hbar()).exp() / (t.de_s_a * t.de_s_c).sqrt();
            let ratio = p.hbar() * gamma / gap;
            assert!(
                (0.85..1.15).contains(&ratio),
                "doublet at {mean:.3}: hbar gamma / splitting = {ratio:.3}"
            );
            checked += 1;
        }
        assert!(checked >= 2, "expected at least two resolvable doublets, got {checked}");
    }

    #[test]
    fn undersized_domain_is_rejected() {
        let p = harmonic();
        let grid = GridSpec::new(-3.0, 3.0, 2000);
        let err = exact_spectrum(&p, 0.0, &grid, 10).unwrap_err();
        assert!(matches!(err, OracleError::GridTooSmall { .. }), "{err}");
    }

    #[test]
    fn wall_in_the_soft_tail_is_rejected() {
        // Walls just past the turning point of the top state: classically
        // forbidden, but with far too little decay before the cutoff.
        let p = harmonic();
        let grid = GridSpec::new(-4.6, 4.6, 2000);
        let err = exact_spectrum(&p, 0.0, &grid, 10).unwrap_err();
        assert!(matches!(err, OracleError::GridTooSmall { .. }), "{err}");
    }

    #[test]
    fn default_grid_clears_the_turning_points() {
        let p = static_quartic(0.1);
        let grid = default_grid(&p, 0.0, 0.3).unwrap();
        let x_t = 1.4631;
        assert!(grid.x_min < -x_t - 0.5 && grid.x_max > x_t + 0.5);
        let s = exact_spectrum(&p, 0.0, &grid, 8).unwrap();
        assert!(s.levels[7] < 0.3, "top requested level stays in the sized window");
    }

    #[test]
    fn sheet_rows_match_pointwise_solves_and_flag_the_barrier() {
        let p = harmonic();
        let grid = GridSpec::new(-10.0, 10.0, 1200);
        let lambdas = [-0.1, 0.0, 0.2];
        let sheet = spectrum_sheet(&p, &lambdas, &grid, 6).unwrap();
        for (i, &l) in lambdas.iter().enumerate() {
            let direct = exact_spectrum(&p, l, &grid, 6).unwrap();
            assert_eq!(sheet.levels[i], direct.levels);
            assert_eq!(sheet.v_b[i], None);
        }

        let q = static_quartic(0.1);
        let qgrid = default_grid(&q, 0.0, 0.4).unwrap();
        let qsheet = spectrum_sheet(&q, &[0.0], &qgrid, 4).unwrap();
        let vb = qsheet.v_b[0].expect("double well carries a barrier");
        assert_abs_diff_eq!(vb, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn scan_finds_the_avoided_crossing_gap() {
        let p = swept_quartic(0.05);
        let lat = crossing_lattice(&p, (-0.4, 0.4), (-0.45, -0.08)).unwrap();
        let node = lat.nodes[lat.nodes.len() / 2];
        let grid = default_grid(&p, node.lambda, node.e + 0.2).unwrap();
        let scan = gap_scan(&p, &node, &grid, 0.03, 9).unwrap();
        assert!(scan.gap > 0.0);
        assert_eq!(scan.pair.1, scan.pair.0 + 1);
        let step = 2.0 * 0.03 / 8.0;
        assert!(
            (scan.lambda_at_min - node.lambda).abs() <= step,
            "minimum at {} vs predicted {}",
            scan.lambda_at_min,
            node.lambda
        );
        let ratio = scan.gap / node.gap;
        assert!((0.85..1.15).contains(&ratio), "exact/predicted gap ratio {ratio:.3}");
    }

    #[test]
    fn collapsed_doublet_reports_tracking_loss() {
        // Deep symmetric doublet: splitting far below what the grids resolve.
        let p = static_quartic(0.025);
        let grid = GridSpec::new(-2.2, 2.2, 2000);
        let s = exact_spectrum(&p, 0.0, &grid, 2).unwrap();
        let node = CrossingNode {
            m: 0,
            n: 0,
            e: 0.5 * (s.levels[0] + s.levels[1]),
            lambda: 0.0,
            t: 0.0,
            gamma: 0.0,
            gap: 0.0,
            p: 0.0,
            minus_ln_p: 0.0,
        };
        let err = gap_scan(&p, &node, &grid, 0.01, 5).unwrap_err();
        assert!(matches!(err, OracleError::TrackingLoss { .. }), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn levels_stay_sorted_for_random_quartics(
            beta in 1.5..2.5f64,
            tilt in -0.3..0.3f64,
            hbar in 0.05..0.3f64,
        ) {
            let p = Potential::quartic(
                1.0,
                Poly::constant(beta),
                Poly::constant(tilt),
                1.0,
                hbar,
                Sweep { lambda0: 0.0, rate: 1e-4 },
            );
            let grid = GridSpec::new(-4.0, 4.0, 400);
            let e = grid_eigenvalues(&p, 0.0, &grid, 10);
            for w in e.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }
    }
}
