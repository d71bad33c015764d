//! Frequency-domain synchronization checks: the small phase test for a
//! feedback pair, heterogeneous edge dynamics on undirected graphs, and
//! agent-dependent controllers on directed graphs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::ltisys::{phase_response, phases_along, PhaseResponseOptions, SampleKind, StateSpace, TransferMatrix};
use crate::netgraph::{component_phase_bounds, connectivity, frobenius_form, incidence, WeightedDigraph};
use crate::phasecore::{classify_with, PhaseOptions, SectorialityKind};

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub response: PhaseResponseOptions,
    /// Required distance (radians) of every phase sum from `+-pi`.
    pub min_margin: f64,
    /// Tighten non-root component bounds with the diagonal scaling search.
    pub refine: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { response: PhaseResponseOptions::default(), min_margin: 0.05, refine: false }
    }
}

/// One sample of the phase-sum trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub component: usize,
    pub omega: f64,
    /// Real part of the sample point; nonzero on indentations and the large arc.
    pub re: f64,
    pub kind: SampleKind,
    /// Largest phase sum.
    pub upper: f64,
    /// Smallest phase sum.
    pub lower: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentResult {
    pub index: usize,
    pub nodes: Vec<usize>,
    /// Laplacian phase bound of the component (0 for a plain feedback pair).
    pub theta: f64,
    /// Open interval the phases have to stay in.
    pub condition: [f64; 2],
    /// Smallest and largest phase attained along the path.
    pub attained: [f64; 2],
    pub margin: f64,
    pub worst_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidueCheck {
    pub omega: f64,
    /// The block-diagonal stack of residues is sectorial.
    pub joint: bool,
    /// Each residue is sectorial on its own.
    pub individual: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisVerdict {
    pub holds: bool,
    /// Smallest distance of a phase sum from `+-pi` (NaN when no comparison was made).
    pub margin: f64,
    pub worst_frequency: f64,
    pub per_component: Vec<ComponentResult>,
    /// A standing assumption failed; no phase comparison was made.
    pub precondition_failed: bool,
    pub reason: String,
    pub residues: Vec<ResidueCheck>,
    pub min_margin: f64,
    pub trace: Vec<TracePoint>,
}

impl AnalysisVerdict {
    fn precondition(reason: String, residues: Vec<ResidueCheck>, min_margin: f64) -> Self {
        AnalysisVerdict {
            holds: false,
            margin: f64::NAN,
            worst_frequency: f64::NAN,
            per_component: Vec::new(),
            precondition_failed: true,
            reason,
            residues,
            min_margin,
            trace: Vec::new(),
        }
    }

    fn trivial(reason: &str, min_margin: f64) -> Self {
        AnalysisVerdict {
            holds: true,
            margin: PI,
            worst_frequency: 0.0,
            per_component: Vec::new(),
            precondition_failed: false,
            reason: reason.into(),
            residues: Vec::new(),
            min_margin,
            trace: Vec::new(),
        }
    }
}

enum Outcome {
    Checked(ComponentResult, Vec<TracePoint>),
    Failed(String),
}

/// Sectoriality of the residues of a block-diagonal system with the given block sizes.
fn residue_checks(g: &TransferMatrix, sizes: &[usize]) -> Vec<ResidueCheck> {
    let opts = PhaseOptions::default();
    let sectorial = |m: &CMatrix| classify_with(m, &opts).is_ok_and(|s| s.kind == SectorialityKind::Sectorial);
    g.modes
        .omega
        .iter()
        .zip(&g.residues)
        .map(|(&omega, r)| {
            let mut off = 0;
            let individual = sizes.iter().all(|&k| {
                let ok = sectorial(&r.view((off, off), (k, k)).into_owned());
                off += k;
                ok
            });
            ResidueCheck { omega, joint: sectorial(r), individual }
        })
        .collect()
}

fn failed_residue(checks: &[ResidueCheck]) -> Option<String> {
    checks
        .iter()
        .find(|c| !c.joint)
        .map(|c| format!("residue at omega = {} is not sectorial", c.omega))
}

/// Phase sums of `g` (plus `h` if given) widened by `theta` along the indented axis.
fn phase_sums(
    index: usize,
    nodes: Vec<usize>,
    g: &TransferMatrix,
    h: Option<&TransferMatrix>,
    theta: f64,
    opts: &AnalysisOptions,
) -> Outcome {
    let mut resp = phase_response(g, &opts.response);
    let mut along = None;
    if let Some(h) = h {
        if !h.modes.omega.is_empty() {
            return Outcome::Failed("second system has imaginary-axis poles".into());
        }
        if !h.remainder.is_stable(1e-9 * h.remainder.norm().max(1.0)).unwrap_or(false) {
            return Outcome::Failed("second system is not stable".into());
        }
        let rh = phase_response(h, &opts.response);
        if rh.kind != SectorialityKind::Sectorial {
            let at = rh.violations.first().map(|v| v.omega).unwrap_or(f64::NAN);
            return Outcome::Failed(format!("second system is not frequency-wise sectorial (near omega = {at:.6})"));
        }
        let mut axis = resp.axis_frequencies();
        axis.extend(rh.axis_frequencies());
        axis.sort_by(f64::total_cmp);
        axis.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
        resp = phase_response(g, &PhaseResponseOptions { axis: Some(axis), ..opts.response.clone() });
        let hs = phases_along(h, &resp.samples, &opts.response.phase);
        if let Some(bad) = hs
            .iter()
            .find(|s| s.profile.as_ref().is_none_or(|p| p.kind.kind != SectorialityKind::Sectorial))
        {
            return Outcome::Failed(format!("second system is not sectorial at s = {}{:+}j", bad.s.re, bad.s.im));
        }
        along = Some(hs);
    }
    if !resp.is_semi_sectorial() {
        let at = resp.violations.first().map(|v| v.omega).unwrap_or(f64::NAN);
        return Outcome::Failed(format!("loop is not frequency-wise semi-sectorial (near omega = {at:.6})"));
    }
    let mut trace = Vec::with_capacity(resp.samples.len());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut margin, mut worst) = (f64::INFINITY, f64::NAN);
    for (i, s) in resp.samples.iter().enumerate() {
        let Some(p) = &s.profile else { continue };
        if p.phases.is_empty() {
            continue;
        }
        let (mut top, mut bottom) = (p.max(), p.min());
        if let Some(hs) = &along {
            let q = hs[i].profile.as_ref().expect("checked above");
            top += q.max();
            bottom += q.min();
        }
        hi = hi.max(top);
        lo = lo.min(bottom);
        let (upper, lower) = (top + theta, bottom - theta);
        let m = (PI - upper).min(PI + lower);
        if m < margin {
            margin = m;
            worst = s.omega;
        }
        trace.push(TracePoint { component: index, omega: s.omega, re: s.s.re, kind: s.kind, upper, lower, margin: m });
    }
    let result = ComponentResult {
        index,
        nodes,
        theta,
        condition: [-PI + theta, PI - theta],
        attained: [lo, hi],
        margin,
        worst_frequency: worst,
    };
    Outcome::Checked(result, trace)
}

fn assemble(outcomes: Vec<Outcome>, residues: Vec<ResidueCheck>, min_margin: f64) -> AnalysisVerdict {
    let mut per_component = Vec::new();
    let mut trace = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Checked(r, t) => {
                per_component.push(r);
                trace.extend(t);
            }
            Outcome::Failed(msg) => failures.push(msg),
        }
    }
    if !failures.is_empty() {
        return AnalysisVerdict::precondition(failures.join("; "), residues, min_margin);
    }
    let worst = per_component.iter().min_by(|a, b| a.margin.total_cmp(&b.margin));
    let (margin, worst_frequency, which) = match worst {
        Some(w) => (w.margin, w.worst_frequency, w.index + 1),
        None => (PI, 0.0, 1),
    };
    let holds = margin > min_margin;
    let reason = if holds {
        format!("phase condition holds with margin {margin:.6} rad")
    } else if margin <= 0.0 {
        format!("phase condition violated at omega = {worst_frequency:.6} in component {which} (margin {margin:.6} rad)")
    } else {
        format!(
            "margin {margin:.6} rad at omega = {worst_frequency:.6} in component {which} is below the required {min_margin}"
        )
    };
    AnalysisVerdict {
        holds,
        margin,
        worst_frequency,
        per_component,
        precondition_failed: false,
        reason,
        residues,
        min_margin,
        trace,
    }
}

/// Negative feedback of a semi-stable `g` with a stable `h`: holds when the
/// phase sums stay inside `(-pi, pi)` along the indented axis.
pub fn small_phase_check(g: &TransferMatrix, h: &TransferMatrix, opts: &AnalysisOptions) -> Result<AnalysisVerdict> {
    if g.m() != h.m() {
        return Err(Error::DimensionMismatch(format!("loop elements are {}x{} and {}x{}", g.m(), g.m(), h.m(), h.m())));
    }
    let residues = residue_checks(g, &[g.m()]);
    if let Some(msg) = failed_residue(&residues) {
        return Ok(AnalysisVerdict::precondition(msg, residues, opts.min_margin));
    }
    let out = phase_sums(0, Vec::new(), g, Some(h), 0.0, opts);
    Ok(assemble(vec![out], residues, opts.min_margin))
}

/// `small_phase_check` on state-space data; modes that are not simple poles
/// of `g` are reported as a failed precondition.
pub fn small_phase_check_realized(
    g: &StateSpace,
    omega: &[f64],
    h: &StateSpace,
    opts: &AnalysisOptions,
) -> Result<AnalysisVerdict> {
    let gt = match TransferMatrix::from_state_space(g, omega) {
        Ok(t) => t,
        Err(e @ (Error::NotSemisimple { .. } | Error::ModeMultiplicity { .. } | Error::UnexpectedPole { .. })) => {
            return Ok(AnalysisVerdict::precondition(e.to_string(), Vec::new(), opts.min_margin));
        }
        Err(e) => return Err(e),
    };
    small_phase_check(&gt, &TransferMatrix::stable(h.clone())?, opts)
}

fn same_size(agents: &[TransferMatrix]) -> Result<usize> {
    let m = agents.first().ok_or(Error::Empty)?.m();
    if agents.iter().any(|a| a.m() != m) {
        return Err(Error::DimensionMismatch("agents have different I/O dimensions".into()));
    }
    Ok(m)
}

/// Agents coupled through stable edge dynamics `W_k` (incidence order) on a
/// connected undirected graph.
pub fn check_theorem1(
    agents: &[TransferMatrix],
    edges: &[StateSpace],
    g: &WeightedDigraph,
    opts: &AnalysisOptions,
) -> Result<AnalysisVerdict> {
    let m = same_size(agents)?;
    if agents.len() != g.n {
        return Err(Error::DimensionMismatch(format!("{} agents on a {}-node graph", agents.len(), g.n)));
    }
    if !g.is_undirected() {
        return Err(Error::Precondition("edge dynamics need an undirected graph".into()));
    }
    if !connectivity(g).has_spanning_tree {
        return Err(Error::Precondition("graph is not connected".into()));
    }
    let inc = incidence(g)?;
    if edges.len() != inc.weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} edge systems for {} undirected edges",
            edges.len(),
            inc.weights.len()
        )));
    }
    if edges.iter().any(|w| w.inputs() != m || w.outputs() != m) {
        return Err(Error::DimensionMismatch(format!("edge systems must be {m}x{m}")));
    }
    if edges.is_empty() {
        return Ok(AnalysisVerdict::trivial("single agent", opts.min_margin));
    }
    let p = TransferMatrix::block_diag(agents)?;
    let w = TransferMatrix::block_diag(
        &edges.iter().map(|e| TransferMatrix::stable(e.clone())).collect::<Result<Vec<_>>>()?,
    )?;
    let residues = residue_checks(&p, &vec![m; agents.len()]);
    if let Some(msg) = failed_residue(&residues) {
        return Ok(AnalysisVerdict::precondition(msg, residues, opts.min_margin));
    }
    let out = phase_sums(0, (0..g.n).collect(), &p, Some(&w), 0.0, opts);
    Ok(assemble(vec![out], residues, opts.min_margin))
}

/// Agent-dependent controllers on a digraph with a spanning tree: the loop
/// phases of each strongly connected component must stay inside
/// `(-pi + theta_k, pi - theta_k)`.
pub fn check_theorem2(
    agents: &[TransferMatrix],
    controllers: &[StateSpace],
    g: &WeightedDigraph,
    opts: &AnalysisOptions,
) -> Result<AnalysisVerdict> {
    let m = same_size(agents)?;
    if agents.len() != g.n || controllers.len() != g.n {
        return Err(Error::DimensionMismatch(format!(
            "{} agents and {} controllers on a {}-node graph",
            agents.len(),
            controllers.len(),
            g.n
        )));
    }
    for c in controllers {
        if c.inputs() != m || c.outputs() != m {
            return Err(Error::DimensionMismatch(format!("controllers must be {m}x{m}")));
        }
        if !c.is_stable(1e-9 * c.norm().max(1.0))? {
            return Err(Error::UnstableController);
        }
    }
    let dec = frobenius_form(g)?;
    let thetas = component_phase_bounds(&dec, opts.refine)?;
    let loops: Vec<TransferMatrix> =
        agents.iter().zip(controllers).map(|(p, c)| p.series(c)).collect::<Result<_>>()?;
    let parts = dec
        .blocks
        .par_iter()
        .zip(thetas.par_iter())
        .enumerate()
        .map(|(k, (b, &theta))| -> Result<(Vec<ResidueCheck>, Outcome)> {
            let members: Vec<TransferMatrix> = b.nodes.iter().map(|&i| loops[i].clone()).collect();
            let pc = TransferMatrix::block_diag(&members)?;
            let checks = residue_checks(&pc, &vec![m; members.len()]);
            if let Some(msg) = failed_residue(&checks) {
                return Ok((checks, Outcome::Failed(format!("component {k}: {msg}"))));
            }
            let out = phase_sums(k, b.nodes.clone(), &pc, None, theta, opts);
            Ok((checks, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut residues = Vec::new();
    let mut outcomes = Vec::new();
    for (c, o) in parts {
        residues.extend(c);
        outcomes.push(o);
    }
    Ok(assemble(outcomes, residues, opts.min_margin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::ltisys::{closed_loop, verify_sync, Coupling, PersistentModes, Term, TermSpec};
    use crate::RMatrix;

    fn scalar(num: &[f64], den: &[f64]) -> TransferMatrix {
        let spec: TermSpec = serde_json::from_value(serde_json::json!({"den": den, "num": [[num]]})).unwrap();
        TransferMatrix::from_terms(&[Term::from_spec(&spec).unwrap()]).unwrap()
    }

    fn ss(num: &[f64], den: &[f64]) -> StateSpace {
        scalar(num, den).realization()
    }

    fn integrator(k: f64) -> TransferMatrix {
        scalar(&[k], &[1.0, 0.0])
    }

    #[test]
    fn integrator_with_unit_feedback() {
        let v = small_phase_check(&integrator(1.0), &scalar(&[1.0], &[1.0]), &AnalysisOptions::default()).unwrap();
        assert!(v.holds, "{}", v.reason);
        assert!((v.margin - PI / 2.0).abs() < 1e-9, "{}", v.margin);
        assert!(v.trace.iter().all(|t| t.upper <= 1e-12 && t.lower >= -PI / 2.0 - 1e-9));
    }

    #[test]
    fn integrator_with_lead_feedback() {
        let h = scalar(&[1.0, 1.0], &[1.0, 2.0]);
        let v = small_phase_check(&integrator(1.0), &h, &AnalysisOptions::default()).unwrap();
        let lead = 2f64.sqrt().atan() - (2f64.sqrt() / 2.0).atan();
        assert!(v.holds);
        assert!(v.margin > PI / 2.0 - lead);
        let top = v.trace.iter().map(|t| t.upper).fold(f64::NEG_INFINITY, f64::max);
        assert!(top < -PI / 2.0 + lead + 1e-3 || top <= 1e-9);
    }

    #[test]
    fn double_integrator_fails_precondition() {
        let g = StateSpace::new(
            RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            RMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            RMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            RMatrix::zeros(1, 1),
        );
        let h = StateSpace::gain(RMatrix::identity(1, 1));
        let v = small_phase_check_realized(&g, &[0.0], &h, &AnalysisOptions::default()).unwrap();
        assert!(v.precondition_failed && !v.holds);
    }

    #[test]
    fn unstable_second_system_fails_precondition() {
        let one = RMatrix::identity(1, 1);
        let h = TransferMatrix::stable(StateSpace::new(one.clone(), one.clone(), one, RMatrix::zeros(1, 1))).unwrap();
        let v = small_phase_check(&integrator(1.0), &h, &AnalysisOptions::default()).unwrap();
        assert!(v.precondition_failed);
    }

    #[test]
    fn integrators_with_static_edges() {
        let g = WeightedDigraph::undirected(4, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5)]).unwrap();
        let agents: Vec<TransferMatrix> = [1.0, 2.0, 0.5, 3.0].iter().map(|&k| integrator(k)).collect();
        let edges = vec![StateSpace::gain(RMatrix::identity(1, 1)); 3];
        let v = check_theorem1(&agents, &edges, &g, &AnalysisOptions::default()).unwrap();
        assert!(v.holds, "{}", v.reason);
        assert!(v.residues.iter().all(|r| r.joint && r.individual));
        let cl = closed_loop(&agents, &Coupling::Edges(edges), &g).unwrap();
        assert!(verify_sync(&cl, &PersistentModes { omega: vec![0.0], m: 1 }, 4, 1).unwrap().pass);
    }

    #[test]
    fn lagging_edge_violates() {
        let g = WeightedDigraph::undirected(2, &[(0, 1, 1.0)]).unwrap();
        let agents = vec![integrator(1.0), integrator(1.0)];
        // two lag stages of (s + 1)/(10 s + 1), each lagging 0.958 rad at 1/sqrt(10)
        let lag = ss(&[1.0, 2.0, 1.0], &[100.0, 20.0, 1.0]);
        let v = check_theorem1(&agents, &[lag], &g, &AnalysisOptions::default()).unwrap();
        assert!(!v.holds && !v.precondition_failed);
        assert!(v.margin < 0.0);
        assert!((v.worst_frequency - 0.1f64.sqrt()).abs() < 0.02, "{}", v.worst_frequency);
    }

    #[test]
    fn directed_graph_rejected_for_edge_dynamics() {
        let g = WeightedDigraph::directed(2, &[(0, 1, 1.0)]).unwrap();
        let r = check_theorem1(
            &[integrator(1.0), integrator(1.0)],
            &[StateSpace::gain(RMatrix::identity(1, 1))],
            &g,
            &AnalysisOptions::default(),
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    fn cycle3() -> WeightedDigraph {
        WeightedDigraph::directed(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap()
    }

    #[test]
    fn positive_real_loops_on_directed_cycle() {
        let agents = vec![integrator(1.0); 3];
        let ctrl = vec![ss(&[1.0, 1.0], &[1.0, 2.0]); 3];
        let v = check_theorem2(&agents, &ctrl, &cycle3(), &AnalysisOptions::default()).unwrap();
        assert!(v.holds, "{}", v.reason);
        assert!((v.per_component[0].theta - PI / 6.0).abs() < 1e-8);
        let cl = closed_loop(&agents, &Coupling::Controllers(ctrl), &cycle3()).unwrap();
        assert!(verify_sync(&cl, &PersistentModes { omega: vec![0.0], m: 1 }, 3, 1).unwrap().pass);
    }

    #[test]
    fn lag_breaks_directed_cycle_but_not_undirected() {
        let agents = vec![integrator(1.0); 3];
        // (s + 1)/(20 s + 1) lags 1.131 rad at 1/sqrt(20)
        let ctrl = vec![ss(&[1.0, 1.0], &[20.0, 1.0]); 3];
        let v = check_theorem2(&agents, &ctrl, &cycle3(), &AnalysisOptions::default()).unwrap();
        assert!(!v.holds);
        assert!((v.worst_frequency - 0.05f64.sqrt()).abs() < 0.02, "{}", v.worst_frequency);
        let und = WeightedDigraph::undirected(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        assert!(check_theorem2(&agents, &ctrl, &und, &AnalysisOptions::default()).unwrap().holds);
    }

    #[test]
    fn oscillator_residue_checks() {
        // s/(s^2 + 1) has residue 1/2 at j
        let g = scalar(&[1.0, 0.0], &[1.0, 0.0, 1.0]);
        let checks = residue_checks(&g, &[1]);
        assert_eq!(checks.len(), 1);
        assert!(checks[0].joint);
        assert!((g.residues[0][(0, 0)] - c(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn missing_mode_makes_joint_residue_singular() {
        let g = WeightedDigraph::undirected(2, &[(0, 1, 1.0)]).unwrap();
        let agents = vec![integrator(1.0), scalar(&[1.0], &[1.0, 1.0])];
        let v = check_theorem1(&agents, &[StateSpace::gain(RMatrix::identity(1, 1))], &g, &AnalysisOptions::default())
            .unwrap();
        assert!(v.precondition_failed);
        assert!(v.residues[0].joint == v.residues[0].individual);
    }
}
