//! Landau-Zener network evolution over the lattice of avoided crossings.
//!
//! Each crossing (m, n) between A line m and C line n carries a diabatic
//! passage probability written in log space as
//!
//! ```text
//! -ln P_mn = Z e^{m X + n Y},      w_mn = ln(-ln P_mn) = ln Z + m X + n Y
//! ```
//!
//! Along an A line successive crossings raise w by Y per column; along a
//! C line they lower it by X. The separatrix zone is the band
//! w in [ln(-ln(1-eps)), ln(-ln eps)]: below it P ~ 1 (diabatic, lines
//! keep their label), above it P ~ 0 (adiabatic, amplitudes swap labels
//! every crossing and zig-zag upward). Amplitude that leaves the zone
//! downward on a C line is captured; amplitude that leaves upward has
//! crossed the quantum separatrix.
//!
//! A crossing applies the unitary
//!
//! ```text
//! U = e^{-ia} [  sqrt(P) e^{-i(b+c)}   sqrt(1-P) e^{-i(b-c)} ]
//!              [ -sqrt(1-P) e^{i(b-c)}  sqrt(P) e^{i(b+c)}   ]
//! ```
//!
//! on (A_m, C_n); discarding the phases gives the incoherent doubly
//! stochastic mixing p_A' = P p_A + (1-P) p_C, p_C' = (1-P) p_A + P p_C.
//! Phases are drawn by a counter-based hash of (seed, m, n), so results
//! are independent of processing order and thread count.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::par_map_indexed;
use crate::semiclassics::Side;
use crate::spectrum::{CrossingLattice, LatticeParams};

const ZONE_PROB_EPS: f64 = 1e-6;
const OVERFLOW_EPS: f64 = 1e-8;
const PRUNE_PROB: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum LznetError {
    #[error("no initially occupied lines")]
    EmptyInitial,
    #[error("probability {p} on line {side:?} {label} is stuck inside the zone at the window edge")]
    WindowOverflow { side: Side, label: i64, p: f64 },
}

/// Synthetic probability lattice with uniform local parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticLattice {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Ratio of C-line to A-line energy slopes (level-count geometry only;
    /// the event schedule is the same for any positive ratio).
    pub slope_ratio: f64,
    /// Zone tolerance: the zone is P in (eps, 1 - eps).
    pub epsilon: f64,
}

impl SyntheticLattice {
    pub fn new(x: f64, y: f64, z: f64, slope_ratio: f64, epsilon: f64) -> Self {
        assert!(x > 0.0 && y > 0.0 && z > 0.0, "X, Y, Z must be positive");
        assert!(slope_ratio > 0.0, "slope ratio must be positive");
        assert!(epsilon > 0.0 && epsilon < 0.5, "epsilon must lie in (0, 1/2)");
        SyntheticLattice { x, y, z, slope_ratio, epsilon }
    }

    /// Local parameters of a physical lattice as a synthetic one.
    pub fn from_params(p: &LatticeParams, slope_ratio: f64, epsilon: f64) -> Self {
        SyntheticLattice::new(p.x.abs(), p.y.abs(), p.z, slope_ratio, epsilon)
    }

    /// -ln P at crossing (m, n), exact in log space.
    pub fn minus_ln_p(&self, m: i64, n: i64) -> f64 {
        (self.z.ln() + m as f64 * self.x + n as f64 * self.y).exp()
    }

    /// w = ln(-ln P) at crossing (m, n).
    pub fn w(&self, m: i64, n: i64) -> f64 {
        self.z.ln() + m as f64 * self.x + n as f64 * self.y
    }

    /// The M lines directly below the zone at column 0: the standard
    /// initial occupation.
    pub fn initial_lines(&self, m_count: usize) -> Vec<i64> {
        assert!(m_count > 0);
        let edges = self.zone();
        let top = ((edges.w_lo - self.z.ln()) / (self.x + self.y)).ceil() as i64 - 1;
        (top - m_count as i64 + 1..=top).collect()
    }

    /// Zone geometry for this lattice.
    pub fn zone(&self) -> ZoneInfo {
        let w_lo = (-(1.0 - self.epsilon).ln()).ln();
        let w_hi = (-(self.epsilon).ln()).ln();
        let dw = w_hi - w_lo;
        ZoneInfo {
            w_lo,
            w_hi,
            depth: dw * (self.slope_ratio + 1.0) / (self.x * self.slope_ratio + self.y),
            columns_a: dw / self.y,
            columns_c: dw / self.x,
        }
    }
}

/// The separatrix zone in w, and how many lines and columns span it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneInfo {
    pub w_lo: f64,
    pub w_hi: f64,
    /// D: number of lines (both ladders) inside the zone at a fixed time.
    pub depth: f64,
    /// Columns an A line needs to rise through the zone.
    pub columns_a: f64,
    /// Columns a C line needs to fall through the zone.
    pub columns_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZoneClass {
    Below,
    Inside,
    Above,
}

/// Classify a crossing by its w against the zone band.
pub fn classify_w(zone: &ZoneInfo, w: f64) -> ZoneClass {
    if w < zone.w_lo {
        ZoneClass::Below
    } else if w > zone.w_hi {
        ZoneClass::Above
    } else {
        ZoneClass::Inside
    }
}

/// Zone geometry of a synthetic lattice (levels divide into captured,
/// in-zone, and promoted by their next-crossing w).
pub fn classify_levels(lat: &SyntheticLattice) -> ZoneInfo {
    lat.zone()
}

/// One crossing of a physical network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetEvent {
    pub m: i64,
    pub n: i64,
    pub minus_ln_p: f64,
    pub lambda: f64,
}

/// A network the evolvers can run: synthetic columns or a finite list of
/// solved crossings in sweep order.
#[derive(Debug, Clone)]
pub enum CrossingNetwork {
    Synthetic { lat: SyntheticLattice, n_c_max: usize },
    Physical { events: Vec<NetEvent>, zone: ZoneInfo },
}

/// Physical network from a solved crossing lattice, ordered by lambda.
pub fn network_from_lattice(lat: &CrossingLattice, zone: ZoneInfo) -> CrossingNetwork {
    let mut events: Vec<NetEvent> = lat
        .nodes
        .iter()
        .map(|c| NetEvent { m: c.m, n: c.n, minus_ln_p: c.minus_ln_p, lambda: c.lambda })
        .collect();
    events.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    CrossingNetwork::Physical { events, zone }
}

/// Deterministic counter-based generator: order-independent phases.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of (seed, a, b, c) via chained splitmix64 rounds.
pub fn counter_hash(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = splitmix64(seed);
    z = splitmix64(z ^ a);
    z = splitmix64(z ^ b);
    z ^= c;
    splitmix64(z)
}

fn hash_to_angle(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    /// Uniform [0, 2 pi) per crossing and per phase slot.
    Random,
    /// All phases zero (deterministic interference).
    Zero,
}

/// Per-crossing phase triple (a, b, c), keyed by crossing labels only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSource {
    pub seed: u64,
    pub mode: PhaseMode,
}

impl PhaseSource {
    pub fn phases(&self, m: i64, n: i64) -> (f64, f64, f64) {
        match self.mode {
            PhaseMode::Zero => (0.0, 0.0, 0.0),
            PhaseMode::Random => (
                hash_to_angle(counter_hash(self.seed, m as u64, n as u64, 0)),
                hash_to_angle(counter_hash(self.seed, m as u64, n as u64, 1)),
                hash_to_angle(counter_hash(self.seed, m as u64, n as u64, 2)),
            ),
        }
    }
}

/// The 2x2 crossing unitary on (A_m, C_n) for -ln P = u and phases
/// (a, b, c). Exactly unitary up to rounding for any u >= 0.
pub fn crossing_unitary(u: f64, a: f64, b: f64, c: f64) -> [[Complex64; 2]; 2] {
    let sp = (-0.5 * u).exp();
    let sq = (-(-u).exp_m1()).sqrt();
    let ea = Complex64::from_polar(1.0, -a);
    [
        [
            ea * Complex64::from_polar(sp, -(b + c)),
            ea * Complex64::from_polar(sq, -(b - c)),
        ],
        [
            ea * Complex64::from_polar(sq, b - c) * -1.0,
            ea * Complex64::from_polar(sp, b + c),
        ],
    ]
}

/// Line-indexed state a crossing event can act on.
trait LineState {
    fn apply_event(&mut self, m: i64, n: i64, u: f64);
    fn a_keys(&self) -> Vec<i64>;
    fn c_keys(&self) -> Vec<i64>;
    fn prob(&self, side: Side, label: i64) -> f64;
    fn prune(&mut self);
    fn total(&self) -> f64 {
        let a: f64 = self.a_keys().iter().map(|&m| self.prob(Side::A, m)).sum();
        let c: f64 = self.c_keys().iter().map(|&n| self.prob(Side::C, n)).sum();
        a + c
    }
}

/// Incoherent state: probability per line.
struct ProbState {
    a: BTreeMap<i64, f64>,
    c: BTreeMap<i64, f64>,
}

impl LineState for ProbState {
    fn apply_event(&mut self, m: i64, n: i64, u: f64) {
        let pa = self.a.get(&m).copied().unwrap_or(0.0);
        let pc = self.c.get(&n).copied().unwrap_or(0.0);
        if pa == 0.0 && pc == 0.0 {
            return;
        }
        let q = -(-u).exp_m1();
        // Both updates share one product, so pa + pc drifts by at most an
        // ulp per event.
        let flow = q * (pa - pc);
        self.a.insert(m, pa - flow);
        self.c.insert(n, pc + flow);
    }

    fn a_keys(&self) -> Vec<i64> {
        self.a.keys().copied().collect()
    }

    fn c_keys(&self) -> Vec<i64> {
        self.c.keys().copied().collect()
    }

    fn prob(&self, side: Side, label: i64) -> f64 {
        match side {
            Side::A => self.a.get(&label).copied().unwrap_or(0.0),
            Side::C => self.c.get(&label).copied().unwrap_or(0.0),
        }
    }

    fn prune(&mut self) {
        self.a.retain(|_, p| *p > PRUNE_PROB);
        self.c.retain(|_, p| *p > PRUNE_PROB);
    }
}

/// Coherent state: complex amplitude per line, phases from the source.
struct AmpState {
    a: BTreeMap<i64, Complex64>,
    c: BTreeMap<i64, Complex64>,
    phases: PhaseSource,
}

impl LineState for AmpState {
    fn apply_event(&mut self, m: i64, n: i64, u: f64) {
        let aa = self.a.get(&m).copied().unwrap_or(Complex64::ZERO);
        let ac = self.c.get(&n).copied().unwrap_or(Complex64::ZERO);
        if aa == Complex64::ZERO && ac == Complex64::ZERO {
            return;
        }
        let (pa, pb, pc) = self.phases.phases(m, n);
        let um = crossing_unitary(u, pa, pb, pc);
        self.a.insert(m, um[0][0] * aa + um[0][1] * ac);
        self.c.insert(n, um[1][0] * aa + um[1][1] * ac);
    }

    fn a_keys(&self) -> Vec<i64> {
        self.a.keys().copied().collect()
    }

    fn c_keys(&self) -> Vec<i64> {
        self.c.keys().copied().collect()
    }

    fn prob(&self, side: Side, label: i64) -> f64 {
        match side {
            Side::A => self.a.get(&label).map_or(0.0, |z| z.norm_sqr()),
            Side::C => self.c.get(&label).map_or(0.0, |z| z.norm_sqr()),
        }
    }

    fn prune(&mut self) {
        self.a.retain(|_, z| z.norm_sqr() > PRUNE_PROB);
        self.c.retain(|_, z| z.norm_sqr() > PRUNE_PROB);
    }
}

/// Final division of probability by zone class.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOutcome {
    /// Captured: on C lines below the zone.
    pub p_minus: f64,
    /// Crossed the separatrix: above the zone on either ladder.
    pub p_plus: f64,
    /// Still inside the zone.
    pub p_zone: f64,
    /// Not yet processed: on A lines below the zone.
    pub p_below_a: f64,
    /// Columns (synthetic) or events (physical) actually processed.
    pub columns: usize,
    /// |total probability - 1| at the end.
    pub norm_error: f64,
    /// Final probability per A line and per C line.
    pub final_a: BTreeMap<i64, f64>,
    pub final_c: BTreeMap<i64, f64>,
    /// Per initial line: its own capture probability (unitary mode).
    pub per_line: Vec<(i64, f64)>,
}

struct Classified {
    p_minus: f64,
    p_plus: f64,
    p_zone: f64,
    p_below_a: f64,
}

/// Classify a synthetic-mode state by each line's next crossing (at
/// column c).
fn classify_synthetic(st: &dyn LineState, lat: &SyntheticLattice, zone: &ZoneInfo, c: i64) -> Classified {
    let mut out = Classified { p_minus: 0.0, p_plus: 0.0, p_zone: 0.0, p_below_a: 0.0 };
    for m in st.a_keys() {
        let p = st.prob(Side::A, m);
        match classify_w(zone, lat.w(m, m + c)) {
            ZoneClass::Below => out.p_below_a += p,
            ZoneClass::Inside => out.p_zone += p,
            ZoneClass::Above => out.p_plus += p,
        }
    }
    for n in st.c_keys() {
        let p = st.prob(Side::C, n);
        match classify_w(zone, lat.w(n - c, n)) {
            ZoneClass::Below => out.p_minus += p,
            ZoneClass::Inside => out.p_zone += p,
            ZoneClass::Above => out.p_plus += p,
        }
    }
    out
}

/// Run synthetic columns on a set of equally weighted states in lockstep.
/// Stops when the aggregate zone probability drops below 1e-6 after having
/// entered the zone, or after n_c_max columns.
fn run_synthetic_columns(
    lat: &SyntheticLattice,
    n_c_max: usize,
    states: &mut [Box<dyn LineState>],
) -> usize {
    let zone = lat.zone();
    let weight = 1.0 / states.len() as f64;
    let mut entered = false;
    for c in 0..n_c_max {
        let pz: f64 = states
            .iter()
            .map(|s| classify_synthetic(s.as_ref(), lat, &zone, c as i64).p_zone)
            .sum::<f64>()
            * weight;
        if pz >= ZONE_PROB_EPS {
            entered = true;
        } else if entered {
            return c;
        }
        for st in states.iter_mut() {
            let mut ms = st.a_keys();
            ms.extend(st.c_keys().iter().map(|n| n - c as i64));
            ms.sort_unstable();
            ms.dedup();
            for m in ms {
                let n = m + c as i64;
                st.apply_event(m, n, lat.minus_ln_p(m, n));
            }
            st.prune();
        }
    }
    n_c_max
}

fn outcome_synthetic(
    lat: &SyntheticLattice,
    states: &[Box<dyn LineState>],
    initial: &[i64],
    columns: usize,
) -> EvolveOutcome {
    let zone = lat.zone();
    let weight = 1.0 / states.len() as f64;
    let mut agg = Classified { p_minus: 0.0, p_plus: 0.0, p_zone: 0.0, p_below_a: 0.0 };
    let mut per_line = Vec::new();
    let mut final_a: BTreeMap<i64, f64> = BTreeMap::new();
    let mut final_c: BTreeMap<i64, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (i, st) in states.iter().enumerate() {
        let cl = classify_synthetic(st.as_ref(), lat, &zone, columns as i64);
        agg.p_minus += weight * cl.p_minus;
        agg.p_plus += weight * cl.p_plus;
        agg.p_zone += weight * cl.p_zone;
        agg.p_below_a += weight * cl.p_below_a;
        if states.len() > 1 {
            per_line.push((initial[i], cl.p_minus));
        }
        for m in st.a_keys() {
            *final_a.entry(m).or_insert(0.0) += weight * st.prob(Side::A, m);
        }
        for n in st.c_keys() {
            *final_c.entry(n).or_insert(0.0) += weight * st.prob(Side::C, n);
        }
        total += weight * st.total();
    }
    EvolveOutcome {
        p_minus: agg.p_minus,
        p_plus: agg.p_plus,
        p_zone: agg.p_zone,
        p_below_a: agg.p_below_a,
        columns,
        norm_error: (total - 1.0).abs(),
        final_a,
        final_c,
        per_line,
    }
}

/// Last-event w per line of a physical network.
fn physical_line_w(events: &[NetEvent]) -> (BTreeMap<i64, f64>, BTreeMap<i64, f64>) {
    let mut wa = BTreeMap::new();
    let mut wc = BTreeMap::new();
    for ev in events {
        let w = ev.minus_ln_p.ln();
        wa.insert(ev.m, w);
        wc.insert(ev.n, w);
    }
    (wa, wc)
}

fn outcome_physical(
    events: &[NetEvent],
    zone: &ZoneInfo,
    states: &[Box<dyn LineState>],
    initial: &[i64],
) -> Result<EvolveOutcome, LznetError> {
    let (wa, wc) = physical_line_w(events);
    let weight = 1.0 / states.len() as f64;
    let mut agg = Classified { p_minus: 0.0, p_plus: 0.0, p_zone: 0.0, p_below_a: 0.0 };
    let mut per_line = Vec::new();
    let mut final_a: BTreeMap<i64, f64> = BTreeMap::new();
    let mut final_c: BTreeMap<i64, f64> = BTreeMap::new();
    let mut total = 0.0;
    for (i, st) in states.iter().enumerate() {
        let mut cl = Classified { p_minus: 0.0, p_plus: 0.0, p_zone: 0.0, p_below_a: 0.0 };
        for m in st.a_keys() {
            let p = st.prob(Side::A, m);
            let w = wa.get(&m).copied().unwrap_or(f64::NEG_INFINITY);
            match classify_w(zone, w) {
                ZoneClass::Below => cl.p_below_a += p,
                ZoneClass::Inside => {
                    if p > OVERFLOW_EPS {
                        return Err(LznetError::WindowOverflow { side: Side::A, label: m, p });
                    }
                    cl.p_zone += p;
                }
                ZoneClass::Above => cl.p_plus += p,
            }
        }
        for n in st.c_keys() {
            let p = st.prob(Side::C, n);
            let w = wc.get(&n).copied().unwrap_or(f64::NEG_INFINITY);
            match classify_w(zone, w) {
                ZoneClass::Below => cl.p_minus += p,
                ZoneClass::Inside => {
                    if p > OVERFLOW_EPS {
                        return Err(LznetError::WindowOverflow { side: Side::C, label: n, p });
                    }
                    cl.p_zone += p;
                }
                ZoneClass::Above => cl.p_plus += p,
            }
        }
        agg.p_minus += weight * cl.p_minus;
        agg.p_plus += weight * cl.p_plus;
        agg.p_zone += weight * cl.p_zone;
        agg.p_below_a += weight * cl.p_below_a;
        if states.len() > 1 {
            per_line.push((initial[i], cl.p_minus));
        }
        for m in st.a_keys() {
            *final_a.entry(m).or_insert(0.0) += weight * st.prob(Side::A, m);
        }
        for n in st.c_keys() {
            *final_c.entry(n).or_insert(0.0) += weight * st.prob(Side::C, n);
        }
        total += weight * st.total();
    }
    Ok(EvolveOutcome {
        p_minus: agg.p_minus,
        p_plus: agg.p_plus,
        p_zone: agg.p_zone,
        p_below_a: agg.p_below_a,
        columns: events.len(),
        norm_error: (total - 1.0).abs(),
        final_a,
        final_c,
        per_line,
    })
}

fn run_states(
    net: &CrossingNetwork,
    mut states: Vec<Box<dyn LineState>>,
    initial: &[i64],
) -> Result<EvolveOutcome, LznetError> {
    if initial.is_empty() {
        return Err(LznetError::EmptyInitial);
    }
    match net {
        CrossingNetwork::Synthetic { lat, n_c_max } => {
            let columns = run_synthetic_columns(lat, *n_c_max, &mut states);
            Ok(outcome_synthetic(lat, &states, initial, columns))
        }
        CrossingNetwork::Physical { events, zone } => {
            for st in states.iter_mut() {
                for ev in events {
                    st.apply_event(ev.m, ev.n, ev.minus_ln_p);
                }
                st.prune();
            }
            outcome_physical(events, zone, &states, initial)
        }
    }
}

/// Incoherent evolution of weighted initial A lines (the update is linear
/// in the probabilities, so one aggregate run suffices).
pub fn evolve_incoherent(
    net: &CrossingNetwork,
    initial: &[(i64, f64)],
) -> Result<EvolveOutcome, LznetError> {
    let labels: Vec<i64> = initial.iter().map(|&(m, _)| m).collect();
    let mut a = BTreeMap::new();
    for &(m, p) in initial {
        assert!(p >= 0.0);
        *a.entry(m).or_insert(0.0) += p;
    }
    let state = ProbState { a, c: BTreeMap::new() };
    run_states(net, vec![Box::new(state)], &labels)
}

/// Equal weights over a set of lines.
pub fn uniform_initial(lines: &[i64]) -> Vec<(i64, f64)> {
    let w = 1.0 / lines.len() as f64;
    lines.iter().map(|&m| (m, w)).collect()
}

/// Coherent evolution of the uniform mixture over `initial` lines: M pure
/// runs (one per line) under the same phases, averaged.
pub fn evolve_unitary(
    net: &CrossingNetwork,
    initial: &[i64],
    phases: &PhaseSource,
) -> Result<EvolveOutcome, LznetError> {
    let states: Vec<Box<dyn LineState>> = initial
        .iter()
        .map(|&m| {
            let mut a = BTreeMap::new();
            a.insert(m, Complex64::ONE);
            Box::new(AmpState { a, c: BTreeMap::new(), phases: *phases }) as Box<dyn LineState>
        })
        .collect();
    run_states(net, states, initial)
}

/// Mean and spread of the capture probability over seeded realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepStats {
    pub mean_p_minus: f64,
    pub std_p_minus: f64,
    /// Standard error of the mean.
    pub se_p_minus: f64,
    pub mean_p_plus: f64,
    pub p_minus: Vec<f64>,
    pub p_plus: Vec<f64>,
}

/// Coherent realizations r = 0..R with phases seeded per realization,
/// computed in parallel (QKNH_THREADS caps the worker count).
pub fn sweep_realizations(
    net: &CrossingNetwork,
    initial: &[i64],
    seed: u64,
    realizations: usize,
) -> Result<SweepStats, LznetError> {
    assert!(realizations >= 2, "need at least two realizations for a spread");
    let outcomes = par_map_indexed(realizations, |r| {
        let phases = PhaseSource { seed: counter_hash(seed, r as u64, 0, 0), mode: PhaseMode::Random };
        evolve_unitary(net, initial, &phases)
    });
    let mut p_minus = Vec::with_capacity(realizations);
    let mut p_plus = Vec::with_capacity(realizations);
    for out in outcomes {
        let out = out?;
        p_minus.push(out.p_minus);
        p_plus.push(out.p_plus);
    }
    let n = realizations as f64;
    let mean = p_minus.iter().sum::<f64>() / n;
    let var = p_minus.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mean_plus = p_plus.iter().sum::<f64>() / n;
    Ok(SweepStats {
        mean_p_minus: mean,
        std_p_minus: var.sqrt(),
        se_p_minus: (var / n).sqrt(),
        mean_p_plus: mean_plus,
        p_minus,
        p_plus,
    })
}

/// Final lines ranked by energy position at the last column: A_m sits
/// between C_{m+c-1} and C_{m+c}. Rank 1 is the lowest occupied line.
pub fn final_ranking(out: &EvolveOutcome) -> Vec<(Side, i64, usize, f64)> {
    let c = out.columns as i64;
    let mut lines: Vec<(i64, Side, i64, f64)> = Vec::new();
    for (&n, &p) in &out.final_c {
        if p > PRUNE_PROB {
            lines.push((2 * n, Side::C, n, p));
        }
    }
    for (&m, &p) in &out.final_a {
        if p > PRUNE_PROB {
            lines.push((2 * (m + c) - 1, Side::A, m, p));
        }
    }
    lines.sort_by_key(|&(key, ..)| key);
    lines
        .into_iter()
        .enumerate()
        .map(|(i, (_, side, label, p))| (side, label, i + 1, p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// The canonical synthetic parameters: X = 0.5, Y = 1.25, Z = 1.
    fn fig_lattice() -> SyntheticLattice {
        SyntheticLattice::new(0.5, 1.25, 1.0, 1.0, 1e-3)
    }

    #[test]
    fn zone_edges_and_depth() {
        let zone = fig_lattice().zone();
        assert_relative_eq!(zone.w_lo, -6.907255070523716, max_relative = 1e-12);
        assert_relative_eq!(zone.w_hi, 1.9326447339160655, max_relative = 1e-12);
        assert_relative_eq!(zone.depth, 2.0 * (zone.w_hi - zone.w_lo) / 1.75, max_relative = 1e-12);
        assert!(zone.depth > 10.0 && zone.depth < 10.2);
    }

    #[test]
    fn initial_lines_sit_below_the_zone() {
        let lat = fig_lattice();
        let lines = lat.initial_lines(10);
        assert_eq!(lines, (-13..=-4).collect::<Vec<i64>>());
        let zone = lat.zone();
        for &m in &lines {
            assert!(lat.w(m, m) < zone.w_lo);
        }
        assert!(lat.w(-3, -3) >= zone.w_lo);
    }

    #[test]
    fn crossing_unitary_is_unitary() {
        for (u, a, b, c) in [
            (0.0, 0.3, 1.1, 2.0),
            (1.0, 5.9, 0.1, 4.4),
            (20.0, 2.2, 3.3, 0.7),
            (1e-8, 0.0, 0.0, 0.0),
            (f64::INFINITY, 1.0, 2.0, 3.0),
        ] {
            let um = crossing_unitary(u, a, b, c);
            let dot = |r: usize, s: usize| {
                um[0][r] * um[0][s].conj() + um[1][r] * um[1][s].conj()
            };
            assert_abs_diff_eq!(dot(0, 0).re, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(dot(1, 1).re, 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(dot(0, 1).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn unitary_limits_stay_and_swap() {
        let stay = crossing_unitary(0.0, 0.0, 0.0, 0.0);
        assert_abs_diff_eq!((stay[0][0] - 1.0).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(stay[0][1].norm(), 0.0, epsilon = 1e-15);
        let swap = crossing_unitary(f64::INFINITY, 0.0, 0.0, 0.0);
        assert_abs_diff_eq!(swap[0][0].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((swap[0][1] - 1.0).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((swap[1][0] + 1.0).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn incoherent_event_is_doubly_stochastic() {
        let mut st = ProbState { a: BTreeMap::new(), c: BTreeMap::new() };
        st.a.insert(0, 0.7);
        st.c.insert(0, 0.3);
        let u = 0.8;
        st.apply_event(0, 0, u);
        let p = (-u).exp();
        let pa = p * 0.7 + (1.0 - p) * 0.3;
        assert_relative_eq!(st.a[&0], pa, max_relative = 1e-14);
        assert_abs_diff_eq!(st.a[&0] + st.c[&0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn incoherent_capture_matches_flux_ratio() {
        // The KNH ratio: a fraction X/Y of the inflow is captured.
        let lat = fig_lattice();
        let net = CrossingNetwork::Synthetic { lat, n_c_max: 80 };
        let init = uniform_initial(&lat.initial_lines(10));
        let out = evolve_incoherent(&net, &init).unwrap();
        assert!((out.p_minus - 0.4).abs() < 1e-3, "p_minus = {}", out.p_minus);
        assert!((out.p_plus - 0.6).abs() < 1e-3, "p_plus = {}", out.p_plus);
        assert!(out.p_zone < ZONE_PROB_EPS);
        assert!(out.norm_error < 1e-12);
        assert!(out.columns < 80, "should terminate early, ran {}", out.columns);
    }

    #[test]
    fn capture_ratio_holds_for_other_parameters() {
        for (x, y) in [(0.3, 1.0), (0.8, 1.6), (0.25, 2.0)] {
            let lat = SyntheticLattice::new(x, y, 1.0, 1.0, 1e-3);
            let net = CrossingNetwork::Synthetic { lat, n_c_max: 400 };
            let init = uniform_initial(&lat.initial_lines(24));
            let out = evolve_incoherent(&net, &init).unwrap();
            assert!(
                (out.p_minus - x / y).abs() < 2e-3,
                "X = {x}, Y = {y}: p_minus = {} vs {}",
                out.p_minus,
                x / y
            );
        }
    }

    #[test]
    fn unitary_zero_phase_single_event_matches_incoherent() {
        let lat = fig_lattice();
        // One line, one column: no interference possible.
        let net = CrossingNetwork::Synthetic { lat, n_c_max: 1 };
        let coh = evolve_unitary(&net, &[-4], &PhaseSource { seed: 1, mode: PhaseMode::Zero })
            .unwrap();
        let inc = evolve_incoherent(&net, &[(-4, 1.0)]).unwrap();
        assert_relative_eq!(coh.final_a[&-4], inc.final_a[&-4], max_relative = 1e-13);
        assert_relative_eq!(coh.final_c[&-4], inc.final_c[&-4], max_relative = 1e-13);
    }

    #[test]
    fn unitary_norm_is_conserved() {
        let lat = fig_lattice();
        let net = CrossingNetwork::Synthetic { lat, n_c_max: 80 };
        let init = lat.initial_lines(10);
        let out = evolve_unitary(&net, &init, &PhaseSource { seed: 7, mode: PhaseMode::Random })
            .unwrap();
        assert!(out.norm_error < 1e-12, "norm error {}", out.norm_error);
    }

    #[test]
    fn realizations_obey_weak_bounds() {
        let lat = fig_lattice();
        let net = CrossingNetwork::Synthetic { lat, n_c_max: 80 };
        let init = lat.initial_lines(10);
        let bound = (lat.zone().depth + 1.0) / 10.0;
        let stats = sweep_realizations(&net, &init, 42, 24).unwrap();
        for &p in &stats.p_minus {
            assert!((p - 0.4).abs() <= bound, "p_minus = {p}, bound {bound}");
        }
        assert!(stats.std_p_minus > 0.0);
    }

    #[test]
    fn realization_mean_approaches_incoherent() {
        let lat = fig_lattice();
        let net = CrossingNetwork::Synthetic { lat, n_c_max: 80 };
        let init = lat.initial_lines(10);
        let inc = evolve_incoherent(&net, &uniform_initial(&init)).unwrap();
        let stats = sweep_realizations(&net, &init, 3, 64).unwrap();
        let dev = (stats.mean_p_minus - inc.p_minus).abs();
        assert!(dev <= 4.0 * stats.se_p_minus, "dev {dev}, se {}", stats.se_p_minus);
    }

    #[test]
    fn sweep_is_deterministic_for_fixed_seed() {
        let lat = fig_lattice();
        let net = CrossingNetwork::Synthetic { lat, n_c_max: 40 };
        let init = lat.initial_lines(6);
        let s1 = sweep_realizations(&net, &init, 9, 8).unwrap();
        let s2 = sweep_realizations(&net, &init, 9, 8).unwrap();
        assert_eq!(s1.p_minus, s2.p_minus);
    }

    #[test]
    fn ranking_interleaves_ladders() {
        let out = EvolveOutcome {
            p_minus: 0.0,
            p_plus: 0.0,
            p_zone: 0.0,
            p_below_a: 0.0,
            columns: 2,
            norm_error: 0.0,
            final_a: BTreeMap::from([(-1, 0.25), (0, 0.25)]),
            final_c: BTreeMap::from([(0, 0.25), (1, 0.25)]),
            per_line: Vec::new(),
        };
        // Positions: C_0 at 0, A_-1 at 1, C_1 at 2, A_0 at 3.
        let ranks = final_ranking(&out);
        assert_eq!(
            ranks.iter().map(|&(s, l, r, _)| (s, l, r)).collect::<Vec<_>>(),
            vec![
                (Side::C, 0, 1),
                (Side::A, -1, 2),
                (Side::C, 1, 3),
                (Side::A, 0, 4),
            ]
        );
    }

    #[test]
    fn phases_are_order_independent() {
        let src = PhaseSource { seed: 5, mode: PhaseMode::Random };
        let first = src.phases(3, -7);
        let _ = src.phases(100, 100);
        assert_eq!(src.phases(3, -7), first);
        assert_ne!(src.phases(3, -6), first);
        for (a, b, c) in [src.phases(0, 0), src.phases(-1, 2)] {
            for v in [a, b, c] {
                assert!((0.0..std::f64::consts::TAU).contains(&v));
            }
        }
    }

    #[test]
    #[should_panic(expected = "epsilon")]
    fn epsilon_outside_half_interval_panics() {
        SyntheticLattice::new(0.5, 1.25, 1.0, 1.0, 0.6);
    }
}
