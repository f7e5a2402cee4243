//! Branch levels, the modified quantization condition, the lattice of
//! avoided crossings, and the quantum separatrix.
//!
//! Branch levels solve S~_side(E, lambda) = (k + 1/2) pi hbar. The full
//! below-barrier spectrum solves
//!
//! ```text
//! cos((S~_A - S~_C)/hbar) = -sqrt(1 + e^{-2 T_b/hbar}) cos((S~_A + S~_C)/hbar)
//! ```
//!
//! which is rewritten here as two smooth phase families
//! W -+ arccos(-cos(U)/R) = 2 pi k with W = (S~_A + S~_C)/hbar,
//! U = (S~_A - S~_C)/hbar, R = sqrt(1 + e^{-2 T_b/hbar}): since R > 1
//! strictly below the barrier the arccos argument stays inside (-1, 1), the
//! families are smooth, and the near-degenerate doublet roots are separated
//! by construction instead of being hunted as tiny sign dips.
//!
//! Crossings (m, n) solve both branch conditions simultaneously; Newton
//! iteration starts from the affine lattice prediction around a reference
//! node and each solved node carries its Landau-Zener data: the minimal gap
//! hbar gamma with gamma = e^{-T_b/hbar} / sqrt(dS_A/dE dS_C/dE), and the
//! diabatic passage probability
//! P = exp[-pi hbar e^{-2 T_b/hbar} / (rate |[S~_A, S~_C]|)].
//!
//! P falls from 1 deep in the wells to 0 near the barrier top (T_b shrinks,
//! the gap grows), and the quantum separatrix E_s is the energy where
//! P = 1/e.

use thiserror::Error;

use crate::numerics::brent;
use crate::potential::Potential;
use crate::semiclassics::{
    action_derivatives, corrected_action, tunneling_action, ActionError, ActionSymbol, ActionTable,
    Side,
};

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error("no level of branch {side:?} inside E window [{lo}, {hi}] at lambda = {lambda}")]
    EmptyWindow { side: Side, lo: f64, hi: f64, lambda: f64 },
    #[error("no below-barrier quantum separatrix at lambda = {lambda}: P ranges [{p_min}, {p_max}] and never crosses 1/e (sweep too fast if p_min > 1/e)")]
    NoRoot { lambda: f64, p_min: f64, p_max: f64 },
    #[error("reference node ({m}, {n}) did not converge after {iters} Newton iterations")]
    NonConvergence { m: i64, n: i64, iters: usize },
}

/// One quantized level of a single branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchLevel {
    pub side: Side,
    /// Absolute quantization integer k in S~ = (k + 1/2) pi hbar.
    pub label: i64,
    pub lambda: f64,
    pub e: f64,
    /// dE/dlambda = -dS~/dlambda / (dS~/dE) along the branch.
    pub de_dlambda: f64,
}

/// One avoided crossing of the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingNode {
    /// Labels relative to the lattice origin (separatrix-nearest levels).
    pub m: i64,
    pub n: i64,
    pub e: f64,
    pub lambda: f64,
    /// Sweep time at which the crossing is reached.
    pub t: f64,
    /// gamma = e^{-T_b/hbar} / sqrt(dS_A/dE dS_C/dE).
    pub gamma: f64,
    /// Minimal gap hbar gamma.
    pub gap: f64,
    /// Diabatic passage probability at the configured sweep rate.
    pub p: f64,
    /// -ln P, exact in log space (p itself can round to 1.0).
    pub minus_ln_p: f64,
}

impl CrossingNode {
    /// Minimal avoided-crossing gap hbar gamma.
    pub fn min_gap(&self) -> f64 {
        self.gap
    }
}

/// The solved lattice around the separatrix, plus bookkeeping.
#[derive(Debug, Clone)]
pub struct CrossingLattice {
    pub nodes: Vec<CrossingNode>,
    /// Seeds that failed Newton convergence, skipped.
    pub skipped: Vec<(i64, i64)>,
    /// Absolute branch labels of the (0, 0) node.
    pub m_offset: i64,
    pub n_offset: i64,
}

impl CrossingLattice {
    pub fn node(&self, m: i64, n: i64) -> Option<&CrossingNode> {
        self.nodes.iter().find(|c| c.m == m && c.n == n)
    }
}

/// Local descriptor of the probability lattice around one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    pub e00: f64,
    pub lambda00: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// [S~_A, S~_C] at the origin.
    pub bracket_ac: f64,
    pub de_s_ta: f64,
    pub de_s_tc: f64,
    /// Gamma: levels crossing the separatrix per unit lambda.
    pub gamma_rate: f64,
    /// k = dS~_A/dE / (dS~_A/dE + dS~_C/dE).
    pub k: f64,
    /// Sweep rate at the origin.
    pub rate: f64,
}

/// Corrected action and its two partials for one side, tolerating the
/// two-turning-point single-well regime (where Phi = 0).
fn corrected_with_partials(
    pot: &Potential,
    e: f64,
    lambda: f64,
    side: Side,
) -> Result<(f64, f64, f64), ActionError> {
    match action_derivatives(pot, e, lambda) {
        Ok(t) => Ok(match side {
            Side::A => (t.s_ta, t.de_s_ta, t.dl_s_ta),
            Side::C => (t.s_tc, t.de_s_tc, t.dl_s_tc),
        }),
        Err(ActionError::NotDoubleWell { .. }) => {
            let s = corrected_action(pot, e, lambda, side)?;
            let h = 1e-6 * e.abs().max(1.0);
            let sp = corrected_action(pot, e + h, lambda, side)?;
            let sm = corrected_action(pot, e - h, lambda, side)?;
            let hl = 1e-4 * lambda.abs().max(1.0);
            let lp = corrected_action(pot, e, lambda + hl, side)?;
            let lm = corrected_action(pot, e, lambda - hl, side)?;
            Ok((s, (sp - sm) / (2.0 * h), (lp - lm) / (2.0 * hl)))
        }
        Err(e) => Err(e),
    }
}

/// All levels of one branch inside the energy window at fixed lambda.
pub fn branch_levels(
    pot: &Potential,
    lambda: f64,
    side: Side,
    e_window: (f64, f64),
) -> Result<Vec<BranchLevel>, SpectrumError> {
    let (lo, hi) = e_window;
    assert!(lo < hi, "energy window must be ordered");
    let pi_hbar = std::f64::consts::PI * pot.hbar();
    let s_lo = corrected_action(pot, lo, lambda, side)?;
    let s_hi = corrected_action(pot, hi, lambda, side)?;
    // S~ grows with E; sample densely enough that each level is bracketed.
    let n = (((s_hi - s_lo) / pi_hbar).abs() * 8.0).ceil() as usize + 8;
    let mut grid = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let e = lo + (hi - lo) * i as f64 / n as f64;
        grid.push((e, corrected_action(pot, e, lambda, side)?));
    }
    let k_lo = (s_lo / pi_hbar - 0.5).ceil() as i64;
    let k_hi = (s_hi / pi_hbar - 0.5).floor() as i64;
    let mut levels = Vec::new();
    for k in k_lo..=k_hi {
        let target = (k as f64 + 0.5) * pi_hbar;
        let Some(w) = grid
            .windows(2)
            .find(|w| (w[0].1 - target) * (w[1].1 - target) <= 0.0)
        else {
            continue;
        };
        let e = brent(
            |e| corrected_action(pot, e, lambda, side).expect("bracket within window") - target,
            w[0].0,
            w[1].0,
            1e-14 * hi.abs().max(1.0),
        );
        let (s, de, dl) = corrected_with_partials(pot, e, lambda, side)?;
        debug_assert!((s - target).abs() < 1e-10 * pi_hbar);
        levels.push(BranchLevel { side, label: k, lambda, e, de_dlambda: -dl / de });
    }
    if levels.is_empty() {
        return Err(SpectrumError::EmptyWindow { side, lo, hi, lambda });
    }
    Ok(levels)
}

/// All roots of the modified quantization condition in the window, sorted.
pub fn modified_levels(
    pot: &Potential,
    lambda: f64,
    e_window: (f64, f64),
) -> Result<Vec<f64>, SpectrumError> {
    let (lo, hi) = e_window;
    assert!(lo < hi, "energy window must be ordered");
    let hbar = pot.hbar();
    let phase = |e: f64| -> Result<(f64, f64), ActionError> {
        let sa = corrected_action(pot, e, lambda, Side::A)?;
        let sc = corrected_action(pot, e, lambda, Side::C)?;
        let tb = tunneling_action(pot, e, lambda)?;
        let w = (sa + sc) / hbar;
        let u = (sa - sc) / hbar;
        let r = (1.0 + (-2.0 * tb / hbar).exp()).sqrt();
        let c = (-u.cos() / r).clamp(-1.0, 1.0);
        Ok((w, c.acos()))
    };
    // Sample so the fast phase W advances well under a period per step.
    let ta = action_derivatives(pot, lo, lambda)?;
    let tb = action_derivatives(pot, hi, lambda)?;
    let wrate = ((ta.de_s_ta + ta.de_s_tc) / hbar).max((tb.de_s_ta + tb.de_s_tc) / hbar);
    let n = ((hi - lo) * wrate / 0.7).ceil() as usize + 8;
    let mut grid = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let e = lo + (hi - lo) * i as f64 / n as f64;
        grid.push((e, phase(e)?));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut roots = Vec::new();
    for family in [-1.0, 1.0] {
        let f = |w: f64, a: f64| w + family * a;
        for win in grid.windows(2) {
            let ((e0, (w0, a0)), (e1, (w1, a1))) = (win[0], win[1]);
            let (f0, f1) = (f(w0, a0), f(w1, a1));
            let k_lo = (f0.min(f1) / two_pi).ceil() as i64;
            let k_hi = (f0.max(f1) / two_pi).floor() as i64;
            for k in k_lo..=k_hi {
                let target = k as f64 * two_pi;
                let root = brent(
                    |e| {
                        let (w, a) = phase(e).expect("window interior stays valid");
                        f(w, a) - target
                    },
                    e0,
                    e1,
                    1e-15 * hi.abs().max(1.0),
                );
                roots.push(root);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * hi.abs().max(1.0));
    if roots.is_empty() {
        return Err(SpectrumError::EmptyWindow { side: Side::A, lo, hi, lambda });
    }
    Ok(roots)
}

/// Residual of the modified quantization condition at E (diagnostics).
pub fn modified_residual(pot: &Potential, e: f64, lambda: f64) -> Result<f64, ActionError> {
    let hbar = pot.hbar();
    let sa = corrected_action(pot, e, lambda, Side::A)?;
    let sc = corrected_action(pot, e, lambda, Side::C)?;
    let tb = tunneling_action(pot, e, lambda)?;
    let r = (1.0 + (-2.0 * tb / hbar).exp()).sqrt();
    Ok(((sa - sc) / hbar).cos() + r * ((sa + sc) / hbar).cos())
}

/// Diabatic passage probability P(E, lambda) at sweep rate `rate`.
pub fn diabatic_probability(
    pot: &Potential,
    e: f64,
    lambda: f64,
    rate: f64,
) -> Result<f64, SpectrumError> {
    Ok((-minus_ln_diabatic(pot, e, lambda, rate)?).exp())
}

/// -ln P(E, lambda), the stable log-space form.
pub fn minus_ln_diabatic(
    pot: &Potential,
    e: f64,
    lambda: f64,
    rate: f64,
) -> Result<f64, SpectrumError> {
    assert!(rate > 0.0, "sweep rate must be positive");
    let t = action_derivatives(pot, e, lambda)?;
    let hbar = pot.hbar();
    let b = t.bracket(ActionSymbol::STildeA, ActionSymbol::STildeC).abs();
    Ok(std::f64::consts::PI * hbar * (-2.0 * t.t_b / hbar).exp() / (rate * b))
}

/// The quantum separatrix energy E_s(lambda): the root of P = 1/e.
///
/// P decreases from ~1 deep in the wells to ~0 at the barrier top, so a
/// 64-step scan of ln P + 1 brackets at most one root. The scan stands off
/// the shallower well floor and the barrier top by 1e-3 of the well depth
/// so the lambda finite differences inside stay in the double-well regime.
pub fn separatrix_energy(pot: &Potential, lambda: f64, rate: f64) -> Result<f64, SpectrumError> {
    let ws = pot.well_structure(lambda);
    let b = ws
        .barrier
        .ok_or(ActionError::Potential(crate::potential::PotentialError::NoBarrier { lambda }))?;
    let floor = ws
        .minima
        .iter()
        .map(|&(_, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = b.v_b - floor;
    let (lo, hi) = (floor + 1e-3 * span, b.v_b - 1e-3 * span);
    let f = |e: f64| -> Result<f64, SpectrumError> { Ok(1.0 - minus_ln_diabatic(pot, e, lambda, rate)?) };
    let steps = 64;
    let mut prev_e = lo;
    let mut prev_f = f(lo)?;
    let mut p_min = f64::INFINITY;
    let mut p_max = f64::NEG_INFINITY;
    for i in 1..=steps {
        let e = lo + (hi - lo) * i as f64 / steps as f64;
        let fe = f(e)?;
        p_min = p_min.min((fe - 1.0).exp());
        p_max = p_max.max((fe - 1.0).exp());
        if prev_f * fe <= 0.0 {
            let root = brent(
                |e| f(e).expect("interior of scanned bracket"),
                prev_e,
                e,
                1e-13 * span,
            );
            return Ok(root);
        }
        prev_e = e;
        prev_f = fe;
    }
    Err(SpectrumError::NoRoot { lambda, p_min, p_max })
}

/// Quantization targets for absolute labels.
fn branch_target(k: i64, pi_hbar: f64) -> f64 {
    (k as f64 + 0.5) * pi_hbar
}

/// Label of the branch level nearest (in action) to energy `e`.
///
/// An exact tie between two neighbors resolves to the lower level.
fn nearest_label(s: f64, pi_hbar: f64) -> i64 {
    let frac = s / pi_hbar - 0.5;
    let k = frac.round();
    if (frac - k + 0.5).abs() < 1e-12 {
        // Halfway case: round down to the lower level.
        frac.floor() as i64
    } else {
        k as i64
    }
}

/// Newton solve of the two branch conditions for absolute labels (ka, kc).
fn solve_node(
    pot: &Potential,
    ka: i64,
    kc: i64,
    e0: f64,
    lambda0: f64,
) -> Result<(f64, f64, ActionTable), ActionError> {
    let pi_hbar = std::f64::consts::PI * pot.hbar();
    let (ta_target, tc_target) = (branch_target(ka, pi_hbar), branch_target(kc, pi_hbar));
    let (mut e, mut lambda) = (e0, lambda0);
    let mut table = action_derivatives(pot, e, lambda)?;
    let mut res = ((table.s_ta - ta_target).powi(2) + (table.s_tc - tc_target).powi(2)).sqrt();
    let tol = 1e-11 * pi_hbar;
    for _ in 0..50 {
        if res < tol {
            return Ok((e, lambda, table));
        }
        let (f1, f2) = (table.s_ta - ta_target, table.s_tc - tc_target);
        let det = table.de_s_ta * table.dl_s_tc - table.dl_s_ta * table.de_s_tc;
        if det == 0.0 {
            break;
        }
        let de = -(f1 * table.dl_s_tc - f2 * table.dl_s_ta) / det;
        let dl = -(table.de_s_ta * f2 - table.de_s_tc * f1) / det;
        // Halve the step until the residual decreases.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let (e_try, l_try) = (e + scale * de, lambda + scale * dl);
            if let Ok(t_try) = action_derivatives(pot, e_try, l_try) {
                let r_try =
                    ((t_try.s_ta - ta_target).powi(2) + (t_try.s_tc - tc_target).powi(2)).sqrt();
                if r_try < res {
                    e = e_try;
                    lambda = l_try;
                    table = t_try;
                    res = r_try;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if res < 1e-10 * pi_hbar {
        Ok((e, lambda, table))
    } else {
        Err(ActionError::NotDoubleWell { e, lambda })
    }
}

/// Landau-Zener data at a solved crossing point.
fn node_from_solution(
    pot: &Potential,
    m: i64,
    n: i64,
    e: f64,
    lambda: f64,
    table: &ActionTable,
) -> CrossingNode {
    let hbar = pot.hbar();
    let gamma = (-table.t_b / hbar).exp() / (table.de_s_a * table.de_s_c).sqrt();
    let rate = pot.sweep().rate;
    let b = table.bracket(ActionSymbol::STildeA, ActionSymbol::STildeC).abs();
    let minus_ln_p = std::f64::consts::PI * hbar * (-2.0 * table.t_b / hbar).exp() / (rate * b);
    CrossingNode {
        m,
        n,
        e,
        lambda,
        t: pot.sweep().time_at(lambda),
        gamma,
        gap: hbar * gamma,
        p: (-minus_ln_p).exp(),
        minus_ln_p,
    }
}

/// Affine lattice prediction around a reference table (the linearized
/// crossing positions).
pub fn affine_prediction(table: &ActionTable, pi_hbar: f64, dm: i64, dn: i64) -> (f64, f64) {
    let b = table.bracket(ActionSymbol::STildeA, ActionSymbol::STildeC);
    let (m, n) = (dm as f64, dn as f64);
    let de = pi_hbar * (m * table.dl_s_tc - n * table.dl_s_ta) / b;
    let dl = pi_hbar * (n * table.de_s_ta - m * table.de_s_tc) / b;
    (table.e + de, table.lambda + dl)
}

/// All avoided crossings inside the (lambda, E) windows.
///
/// Offsets are chosen so the branch levels nearest the quantum separatrix
/// at the initial lambda carry label 0; the (0,0) node is Newton-solved
/// first and every other node starts from the affine prediction around it.
/// Non-converged seeds are skipped and reported.
pub fn crossing_lattice(
    pot: &Potential,
    lambda_window: (f64, f64),
    e_window: (f64, f64),
) -> Result<CrossingLattice, SpectrumError> {
    let (l_lo, l_hi) = lambda_window;
    let (e_lo, e_hi) = e_window;
    assert!(l_lo < l_hi && e_lo < e_hi, "windows must be ordered");
    let rate = pot.sweep().rate;
    let pi_hbar = std::f64::consts::PI * pot.hbar();

    let e_s = separatrix_energy(pot, l_lo, rate)?;
    let anchor = action_derivatives(pot, e_s, l_lo)?;
    let m_offset = nearest_label(anchor.s_ta, pi_hbar);
    let n_offset = nearest_label(anchor.s_tc, pi_hbar);

    let l_mid = 0.5 * (l_lo + l_hi);
    let (e00, l00, t00) = solve_node(pot, m_offset, n_offset, e_s, l_mid)
        .map_err(|_| SpectrumError::NonConvergence { m: 0, n: 0, iters: 50 })?;

    // Integer window bounds from the inverse affine map at the corners.
    let (mut m_lo, mut m_hi, mut n_lo, mut n_hi) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for &(ec, lc) in &[(e_lo, l_lo), (e_lo, l_hi), (e_hi, l_lo), (e_hi, l_hi)] {
        let dm = (t00.de_s_ta * (ec - e00) + t00.dl_s_ta * (lc - l00)) / pi_hbar;
        let dn = (t00.de_s_tc * (ec - e00) + t00.dl_s_tc * (lc - l00)) / pi_hbar;
        m_lo = m_lo.min(dm.floor() as i64);
        m_hi = m_hi.max(dm.ceil() as i64);
        n_lo = n_lo.min(dn.floor() as i64);
        n_hi = n_hi.max(dn.ceil() as i64);
    }

    let mut nodes = Vec::new();
    let mut skipped = Vec::new();
    for dm in m_lo..=m_hi {
        for dn in n_lo..=n_hi {
            let (e_pred, l_pred) = affine_prediction(&t00, pi_hbar, dm, dn);
            if !(e_lo..=e_hi).contains(&e_pred) || !(l_lo..=l_hi).contains(&l_pred) {
                continue;
            }
            match solve_node(pot, m_offset + dm, n_offset + dn, e_pred, l_pred) {
                Ok((e, lambda, table)) => {
                    if (e_lo..=e_hi).contains(&e) && (l_lo..=l_hi).contains(&lambda) {
                        nodes.push(node_from_solution(pot, dm, dn, e, lambda, &table));
                    }
                }
                Err(_) => skipped.push((dm, dn)),
            }
        }
    }
    nodes.sort_by(|a, b| (a.m, a.n).cmp(&(b.m, b.n)));
    Ok(CrossingLattice { nodes, skipped, m_offset, n_offset })
}

/// Local lattice parameters (X, Y, Z, Gamma, k) at a node, at sweep rate
/// `rate`.
pub fn local_params(
    pot: &Potential,
    node: &CrossingNode,
    rate: f64,
) -> Result<LatticeParams, SpectrumError> {
    assert!(rate > 0.0, "sweep rate must be positive");
    let t = action_derivatives(pot, node.e, node.lambda)?;
    let hbar = pot.hbar();
    use ActionSymbol::{STildeA, STildeC, Tb};
    let b_ac = t.bracket(STildeA, STildeC);
    let x = 2.0 * t.bracket(Tb, STildeC) / b_ac;
    let y = 2.0 * t.bracket(Tb, STildeA) / t.bracket(STildeC, STildeA);
    let z = 2.0 * std::f64::consts::PI * hbar * (-2.0 * t.t_b / hbar).exp() / (rate * b_ac.abs());
    let gamma_rate = b_ac / (std::f64::consts::PI * hbar * (x * t.de_s_ta + y * t.de_s_tc));
    let k = t.de_s_ta / (t.de_s_ta + t.de_s_tc);
    assert!(z > 0.0 && z.is_finite());
    assert!(k > 0.0 && k < 1.0);
    Ok(LatticeParams {
        e00: node.e,
        lambda00: node.lambda,
        x,
        y,
        z,
        bracket_ac: b_ac,
        de_s_ta: t.de_s_ta,
        de_s_tc: t.de_s_tc,
        gamma_rate,
        k,
        rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{Poly, Sweep};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn harmonic() -> Potential {
        Potential::harmonic(1.0, 1.0, 1.0)
    }

    /// Symmetric quartic with a lambda-proportional tilt, hbar = 0.1.
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
    fn harmonic_levels_are_half_integers() {
        let p = harmonic();
        let levels = branch_levels(&p, 0.0, Side::A, (0.2, 5.2)).unwrap();
        assert_eq!(levels.len(), 5);
        for l in &levels {
            assert_relative_eq!(l.e, l.label as f64 + 0.5, max_relative = 1e-10);
            assert_abs_diff_eq!(l.de_dlambda, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn symmetric_branches_coincide() {
        let p = swept_quartic(0.1);
        let a = branch_levels(&p, 0.0, Side::A, (-0.9, -0.1)).unwrap();
        let c = branch_levels(&p, 0.0, Side::C, (-0.9, -0.1)).unwrap();
        assert_eq!(a.len(), c.len());
        for (la, lc) in a.iter().zip(&c) {
            assert_relative_eq!(la.e, lc.e, max_relative = 1e-9);
        }
    }

    #[test]
    fn level_count_matches_action_span() {
        let p = swept_quartic(0.05);
        let (lo, hi) = (-0.9, -0.15);
        let levels = branch_levels(&p, 0.1, Side::A, (lo, hi)).unwrap();
        let span = corrected_action(&p, hi, 0.1, Side::A).unwrap()
            - corrected_action(&p, lo, 0.1, Side::A).unwrap();
        let expected = span / (std::f64::consts::PI * p.hbar());
        assert!((levels.len() as f64 - expected).abs() <= 1.0);
    }

    #[test]
    fn branch_levels_strictly_increasing_with_label() {
        let p = swept_quartic(0.1);
        let levels = branch_levels(&p, 0.3, Side::C, (-0.9, -0.1)).unwrap();
        for w in levels.windows(2) {
            assert!(w[1].label == w[0].label + 1);
            assert!(w[1].e > w[0].e);
        }
    }

    #[test]
    fn modified_levels_match_branch_union_deep_below() {
        // hbar small enough that e^{-2 T_b / hbar} < 1e-12 in the window.
        let p = swept_quartic(0.05);
        let window = (-0.85, -0.6);
        let roots = modified_levels(&p, 0.2, window).unwrap();
        let mut union: Vec<f64> = Vec::new();
        for side in [Side::A, Side::C] {
            union.extend(branch_levels(&p, 0.2, side, window).unwrap().iter().map(|l| l.e));
        }
        union.sort_by(f64::total_cmp);
        assert_eq!(roots.len(), union.len());
        for (r, u) in roots.iter().zip(&union) {
            assert_relative_eq!(*r, *u, max_relative = 1e-8);
        }
    }

    #[test]
    fn modified_level_residuals_are_tiny() {
        let p = swept_quartic(0.1);
        let roots = modified_levels(&p, 0.15, (-0.8, -0.3)).unwrap();
        assert!(!roots.is_empty());
        for &e in &roots {
            assert!(modified_residual(&p, e, 0.15).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_doublets_split_by_gap() {
        // Untilted quartic at lambda = 0: doublets split by ~ hbar gamma.
        let p = swept_quartic(0.1);
        let roots = modified_levels(&p, 0.0, (-0.75, -0.55)).unwrap();
        assert_eq!(roots.len() % 2, 0);
        for pair in roots.chunks(2) {
            let mid = 0.5 * (pair[0] + pair[1]);
            let t = action_derivatives(&p, mid, 0.0).unwrap();
            let gamma = (-t.t_b / p.hbar()).exp() / (t.de_s_a * t.de_s_c).sqrt();
            let split = pair[1] - pair[0];
            assert_relative_eq!(split, p.hbar() * gamma, max_relative = 0.05);
        }
    }

    #[test]
    fn diabatic_probability_limits_in_rate() {
        let p = swept_quartic(0.1);
        let (e, lam) = (-0.4, 0.0);
        let fast = diabatic_probability(&p, e, lam, 1e6).unwrap();
        let slow = diabatic_probability(&p, e, lam, 1e-9).unwrap();
        assert!(fast > 1.0 - 1e-6);
        assert!(slow < 1e-6);
    }

    #[test]
    fn diabatic_probability_decreases_towards_barrier() {
        // T_b shrinks with E, the gap grows, passage turns adiabatic.
        let p = swept_quartic(0.1);
        let rate = 1e-4;
        let mut prev = f64::INFINITY;
        for e in [-0.8, -0.6, -0.4, -0.2, -0.1, -0.05] {
            let pr = diabatic_probability(&p, e, 0.0, rate).unwrap();
            assert!(pr < prev, "P must fall monotonically in E");
            prev = pr;
        }
    }

    #[test]
    fn separatrix_fixpoint_residual() {
        let p = swept_quartic(0.1);
        let rate = 1e-4;
        let e_s = separatrix_energy(&p, 0.0, rate).unwrap();
        let pr = diabatic_probability(&p, e_s, 0.0, rate).unwrap();
        assert!((pr - (-1.0f64).exp()).abs() < 1e-10);
        assert!(e_s < 0.0);
    }

    #[test]
    fn separatrix_rises_with_rate() {
        let p = swept_quartic(0.1);
        let mut prev = f64::NEG_INFINITY;
        for rate in [1e-6, 1e-5, 1e-4, 1e-3] {
            let e_s = separatrix_energy(&p, 0.0, rate).unwrap();
            assert!(e_s > prev);
            prev = e_s;
        }
    }

    #[test]
    fn too_fast_sweep_has_no_separatrix() {
        let p = swept_quartic(0.1);
        match separatrix_energy(&p, 0.0, 1e9) {
            Err(SpectrumError::NoRoot { p_min, .. }) => assert!(p_min > (-1.0f64).exp()),
            other => panic!("expected NoRoot, got {other:?}"),
        }
    }

    /// Lattice used by the node tests: dense enough to hold ~10 crossings.
    fn test_lattice(p: &Potential) -> CrossingLattice {
        crossing_lattice(p, (-0.4, 0.4), (-0.45, -0.08)).unwrap()
    }

    #[test]
    fn lattice_nodes_satisfy_both_branch_conditions() {
        let p = swept_quartic(0.05);
        let lat = test_lattice(&p);
        assert!(lat.nodes.len() >= 8, "expected a populated lattice, got {}", lat.nodes.len());
        let pi_hbar = std::f64::consts::PI * p.hbar();
        for node in &lat.nodes {
            let t = action_derivatives(&p, node.e, node.lambda).unwrap();
            let ra = t.s_ta / pi_hbar - 0.5 - (lat.m_offset + node.m) as f64;
            let rc = t.s_tc / pi_hbar - 0.5 - (lat.n_offset + node.n) as f64;
            assert!(ra.abs() < 1e-10, "A-branch residual {ra}");
            assert!(rc.abs() < 1e-10, "C-branch residual {rc}");
            assert!(node.gap > 0.0);
            assert!(node.minus_ln_p > 0.0);
        }
    }

    #[test]
    fn neighbor_spacing_follows_affine_prediction() {
        let p = swept_quartic(0.05);
        let lat = test_lattice(&p);
        let pi_hbar = std::f64::consts::PI * p.hbar();
        let (a, up) = lat
            .nodes
            .iter()
            .find_map(|a| lat.node(a.m + 1, a.n).map(|b| (a, b)))
            .expect("some node has an (m+1, n) neighbor");
        let t = action_derivatives(&p, a.e, a.lambda).unwrap();
        let b = t.bracket(ActionSymbol::STildeA, ActionSymbol::STildeC);
        let dl_pred = -pi_hbar * t.de_s_tc / b;
        assert_relative_eq!(up.lambda - a.lambda, dl_pred, max_relative = 0.05);
        let (c, right) = lat
            .nodes
            .iter()
            .find_map(|c| lat.node(c.m, c.n + 1).map(|d| (c, d)))
            .expect("some node has an (m, n+1) neighbor");
        let t = action_derivatives(&p, c.e, c.lambda).unwrap();
        let b = t.bracket(ActionSymbol::STildeA, ActionSymbol::STildeC);
        let dl_pred = pi_hbar * t.de_s_ta / b;
        assert_relative_eq!(right.lambda - c.lambda, dl_pred, max_relative = 0.05);
    }

    #[test]
    fn local_params_scalings() {
        let p = swept_quartic(0.05);
        let lat = test_lattice(&p);
        let node = &lat.nodes[lat.nodes.len() / 2];
        let rate = p.sweep().rate;
        let lp = local_params(&p, node, rate).unwrap();
        let lp_half = local_params(&p, node, 0.5 * rate).unwrap();
        // Z doubles when the sweep slows by half; X, Y are rate-free.
        assert_relative_eq!(lp_half.z, 2.0 * lp.z, max_relative = 1e-12);
        assert_relative_eq!(lp_half.x, lp.x, max_relative = 1e-12);
        assert_relative_eq!(lp_half.y, lp.y, max_relative = 1e-12);
        assert!(lp.k > 0.0 && lp.k < 1.0);
    }

    #[test]
    fn local_params_match_finite_difference_brackets() {
        // Independent oracle: brackets from plain central differences of
        // T_b and S~ in (E, lambda).
        let p = swept_quartic(0.05);
        let lat = test_lattice(&p);
        let node = &lat.nodes[lat.nodes.len() / 2];
        let lp = local_params(&p, node, p.sweep().rate).unwrap();
        let (e, lam) = (node.e, node.lambda);
        let (he, hl) = (1e-5, 1e-5);
        let val = |f: &dyn Fn(f64, f64) -> f64| {
            let de = (f(e + he, lam) - f(e - he, lam)) / (2.0 * he);
            let dl = (f(e, lam + hl) - f(e, lam - hl)) / (2.0 * hl);
            (de, dl)
        };
        let sta = |e: f64, l: f64| corrected_action(&p, e, l, Side::A).unwrap();
        let stc = |e: f64, l: f64| corrected_action(&p, e, l, Side::C).unwrap();
        let tb = |e: f64, l: f64| tunneling_action(&p, e, l).unwrap();
        let (de_a, dl_a) = val(&sta);
        let (de_c, dl_c) = val(&stc);
        let (de_t, dl_t) = val(&tb);
        let br = |fe: f64, fl: f64, ge: f64, gl: f64| fe * gl - ge * fl;
        let b_ac = br(de_a, dl_a, de_c, dl_c);
        let x_fd = 2.0 * br(de_t, dl_t, de_c, dl_c) / b_ac;
        let y_fd = 2.0 * br(de_t, dl_t, de_a, dl_a) / -b_ac;
        assert_relative_eq!(lp.x, x_fd, max_relative = 1e-4);
        assert_relative_eq!(lp.y, y_fd, max_relative = 1e-4);
    }

    #[test]
    fn x_y_stable_under_hbar_halving() {
        // At a fixed (E, lambda) point X and Y are bracket ratios of
        // hbar-free classical data up to the Phi correction, so halving
        // hbar moves them by O(hbar) only.
        let mut xs = Vec::new();
        for hbar in [0.1, 0.05] {
            let p = swept_quartic(hbar);
            let t = action_derivatives(&p, -0.4, 0.1).unwrap();
            use ActionSymbol::{STildeA, STildeC, Tb};
            let x = 2.0 * t.bracket(Tb, STildeC) / t.bracket(STildeA, STildeC);
            let y = 2.0 * t.bracket(Tb, STildeA) / t.bracket(STildeC, STildeA);
            xs.push((x, y));
        }
        assert_relative_eq!(xs[0].0, xs[1].0, max_relative = 1e-2);
        assert_relative_eq!(xs[0].1, xs[1].1, max_relative = 1e-2);
    }
}
