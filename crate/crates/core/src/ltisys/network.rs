//! Closed-loop assembly of agents coupled over a graph, the eigenstructure
//! synchronization test, and time-domain simulation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{PersistentModes, StateSpace, TransferMatrix};
use crate::error::{Error, Result};
use crate::linalg::{c, kron, null_split, real_eigenvalues, rfrobenius, to_complex, CMatrix, RMatrix};
use crate::netgraph::{incidence, laplacian, WeightedDigraph};

/// How neighbour outputs reach the agents' inputs.
#[derive(Debug, Clone)]
pub enum Coupling {
    /// `u_i = -C_i(s) sum_j a_ij (y_i - y_j)`, one controller per agent.
    Controllers(Vec<StateSpace>),
    /// The same controller at every agent.
    Uniform(StateSpace),
    /// Undirected graph with dynamics `W_k` per edge in incidence order:
    /// `u = -(E (x) I) diag(a_k W_k) (E (x) I)' y`.
    Edges(Vec<StateSpace>),
    /// Dynamics per directed edge in `g.edges` order:
    /// `u_i = sum_(j->i) a_ij W_ij (y_j - y_i)`.
    EdgeMap(Vec<StateSpace>),
}

fn check_stable(parts: &[StateSpace]) -> Result<()> {
    for p in parts {
        let tol = 1e-9 * p.norm().max(1.0);
        if !p.is_stable(tol)? {
            return Err(Error::UnstableController);
        }
    }
    Ok(())
}

fn square_dims(parts: &[StateSpace], m: usize) -> Result<()> {
    if parts.iter().any(|p| p.inputs() != m || p.outputs() != m) {
        return Err(Error::DimensionMismatch(format!("coupling blocks must be {m}x{m}")));
    }
    Ok(())
}

/// Coupling as a single system from the stacked outputs `y` to the stacked inputs `u`.
fn coupling_system(coupling: &Coupling, g: &WeightedDigraph, m: usize) -> Result<StateSpace> {
    let n = g.n;
    let im = RMatrix::identity(m, m);
    match coupling {
        Coupling::Controllers(_) | Coupling::Uniform(_) if g.edges.is_empty() => {
            if let Coupling::Controllers(cs) = coupling {
                if cs.len() != n {
                    return Err(Error::DimensionMismatch(format!("{} controllers for {n} agents", cs.len())));
                }
            }
            Ok(StateSpace::gain(RMatrix::zeros(n * m, n * m)))
        }
        Coupling::Controllers(cs) => {
            if cs.len() != n {
                return Err(Error::DimensionMismatch(format!("{} controllers for {n} agents", cs.len())));
            }
            square_dims(cs, m)?;
            check_stable(cs)?;
            let lm = kron(&laplacian(g), &im);
            StateSpace::series(&StateSpace::block_diag(cs), &StateSpace::gain(-lm))
        }
        Coupling::Uniform(c0) => coupling_system(&Coupling::Controllers(vec![c0.clone(); n]), g, m),
        Coupling::Edges(ws) => {
            let inc = incidence(g)?;
            if ws.len() != inc.weights.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} edge systems for {} undirected edges",
                    ws.len(),
                    inc.weights.len()
                )));
            }
            square_dims(ws, m)?;
            check_stable(ws)?;
            if ws.is_empty() {
                return Ok(StateSpace::gain(RMatrix::zeros(n * m, n * m)));
            }
            let em = kron(&inc.e, &im);
            let scaled: Vec<StateSpace> = ws.iter().zip(&inc.weights).map(|(w, &a)| w.scaled(a)).collect();
            let inner = StateSpace::series(&StateSpace::block_diag(&scaled), &StateSpace::gain(em.transpose()))?;
            StateSpace::series(&StateSpace::gain(-em), &inner)
        }
        Coupling::EdgeMap(ws) => {
            if ws.len() != g.edges.len() {
                return Err(Error::DimensionMismatch(format!("{} edge systems for {} edges", ws.len(), g.edges.len())));
            }
            square_dims(ws, m)?;
            check_stable(ws)?;
            if ws.is_empty() {
                return Ok(StateSpace::gain(RMatrix::zeros(n * m, n * m)));
            }
            let parts = ws
                .iter()
                .zip(&g.edges)
                .map(|(w, e)| {
                    let mut sel = RMatrix::zeros(1, n);
                    sel[(0, e.from)] = 1.0;
                    sel[(0, e.to)] = -1.0;
                    let mut inj = RMatrix::zeros(n, 1);
                    inj[(e.to, 0)] = e.w;
                    let inner = StateSpace::series(w, &StateSpace::gain(kron(&sel, &im)))?;
                    StateSpace::series(&StateSpace::gain(kron(&inj, &im)), &inner)
                })
                .collect::<Result<Vec<_>>>()?;
            StateSpace::parallel(&parts)
        }
    }
}

/// Autonomous closed loop `x' = A x`, `y = C x`; agent states come first, in
/// agent order, followed by the coupling states. `B` and `D` have no columns.
pub fn closed_loop(agents: &[TransferMatrix], coupling: &Coupling, g: &WeightedDigraph) -> Result<StateSpace> {
    let m = agents.first().ok_or(Error::Empty)?.m();
    if agents.iter().any(|a| a.m() != m) {
        return Err(Error::DimensionMismatch("agents have different I/O dimensions".into()));
    }
    if agents.len() != g.n {
        return Err(Error::DimensionMismatch(format!("{} agents on a {}-node graph", agents.len(), g.n)));
    }
    let p = StateSpace::block_diag(&agents.iter().map(|a| a.realization()).collect::<Vec<_>>());
    let k = coupling_system(coupling, g, m)?;
    let nm = g.n * m;
    let f = (RMatrix::identity(nm, nm) - &k.d * &p.d).try_inverse().ok_or(Error::IllPosed)?;
    let (np, nk) = (p.states(), k.states());
    let cy_p = &p.c + &p.d * &f * &k.d * &p.c;
    let cy_k = &p.d * &f * &k.c;
    let mut a = RMatrix::zeros(np + nk, np + nk);
    a.view_mut((0, 0), (np, np)).copy_from(&(&p.a + &p.b * &f * &k.d * &p.c));
    a.view_mut((0, np), (np, nk)).copy_from(&(&p.b * &f * &k.c));
    a.view_mut((np, 0), (nk, np)).copy_from(&(&k.b * &cy_p));
    a.view_mut((np, np), (nk, nk)).copy_from(&(&k.a + &k.b * &cy_k));
    let mut cm = RMatrix::zeros(nm, np + nk);
    cm.view_mut((0, 0), (nm, np)).copy_from(&cy_p);
    cm.view_mut((0, np), (nm, nk)).copy_from(&cy_k);
    Ok(StateSpace::new(a, RMatrix::zeros(np + nk, 0), cm, RMatrix::zeros(nm, 0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCheck {
    pub omega: f64,
    pub algebraic: usize,
    pub geometric: usize,
    pub expected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncReport {
    pub pass: bool,
    pub modes: Vec<ModeCheck>,
    /// Eigenvalues `[re, im]` with real part `>= -tol` that are not persistent modes.
    pub offending: Vec<[f64; 2]>,
    /// Largest real part among the remaining (stable) eigenvalues.
    pub slowest_stable: f64,
    pub tol: f64,
    pub reason: String,
}

/// Passes when the closed-right-half-plane eigenvalues are exactly `jOmega`,
/// each semi-simple with multiplicity `m`.
pub fn verify_sync(cl: &StateSpace, modes: &PersistentModes, n: usize, m: usize) -> Result<SyncReport> {
    let ev = real_eigenvalues(&cl.a)?;
    let norm = rfrobenius(&cl.a);
    let tol = 1e-8 * norm.max(1e-300);
    let cluster = 1e-7 * norm + 1e-12;
    let near_mode = |l: &Complex64| modes.omega.iter().any(|&w| (l - c(0.0, w)).norm() <= cluster || (l - c(0.0, -w)).norm() <= cluster);
    let mut offending = Vec::new();
    let mut slowest_stable = f64::NEG_INFINITY;
    for l in &ev {
        if near_mode(l) {
            continue;
        }
        if l.re >= -tol {
            offending.push([l.re, l.im]);
        } else {
            slowest_stable = slowest_stable.max(l.re);
        }
    }
    let ac = to_complex(&cl.a);
    let checks: Vec<ModeCheck> = modes
        .omega
        .iter()
        .map(|&w| {
            let lam = c(0.0, w);
            let algebraic = ev.iter().filter(|l| (*l - lam).norm() <= cluster).count();
            let geometric = if algebraic == 0 {
                0
            } else {
                let shifted: CMatrix = &ac - CMatrix::identity(ac.nrows(), ac.nrows()) * lam;
                null_split(&shifted, 1e-8).null.ncols()
            };
            ModeCheck { omega: w, algebraic, geometric, expected: m }
        })
        .collect();
    let mut reasons = Vec::new();
    if !offending.is_empty() {
        reasons.push(format!("{} eigenvalue(s) off the mode set with real part >= -{tol:.2e}", offending.len()));
    }
    for ch in &checks {
        if ch.algebraic != m {
            reasons.push(format!(
                "mode {} has multiplicity {} (expected {m}{})",
                ch.omega,
                ch.algebraic,
                if ch.algebraic == n * m && n > 1 { ", agents are decoupled" } else { "" }
            ));
        } else if ch.geometric < ch.algebraic {
            reasons.push(format!("mode {} is not semi-simple", ch.omega));
        }
    }
    let pass = reasons.is_empty();
    Ok(SyncReport {
        pass,
        modes: checks,
        offending,
        slowest_stable,
        tol,
        reason: if pass { "synchronized".into() } else { reasons.join("; ") },
    })
}

/// Horizon `T = 20 / sigma` from the slowest stable eigenvalue real part `-sigma`
/// (clamped to `[10, 1e5]`) and step `max(1e-2, T / 20000)`.
pub fn simulation_horizon(report: &SyncReport) -> (f64, f64) {
    let t = if report.slowest_stable.is_finite() && report.slowest_stable < 0.0 {
        (20.0 / -report.slowest_stable).clamp(10.0, 1e5)
    } else {
        10.0
    };
    (t, (t / 20000.0).max(1e-2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    /// Stacked outputs per time sample.
    pub y: Vec<Vec<f64>>,
}

/// Exact discretization `x_{k+1} = exp(A dt) x_k`.
pub fn simulate(cl: &StateSpace, x0: &[f64], t_final: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite() && t_final >= 0.0 && t_final.is_finite()) {
        return Err(Error::Input(format!("invalid horizon T = {t_final}, dt = {dt}")));
    }
    let nx = cl.states();
    if x0.len() != nx {
        return Err(Error::DimensionMismatch(format!("initial state has {} entries, system has {nx} states", x0.len())));
    }
    let steps = (t_final / dt).round() as usize;
    let phi = (&cl.a * dt).exp();
    let mut x = nalgebra::DVector::from_column_slice(x0);
    let mut t = Vec::with_capacity(steps + 1);
    let mut y = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        t.push(k as f64 * dt);
        y.push((&cl.c * &x).iter().copied().collect());
        x = &phi * x;
    }
    Ok(Trajectory { t, y })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub y_ave: Vec<Vec<f64>>,
    pub y_dis: Vec<Vec<f64>>,
    /// Largest `|y_dis|` entry over the last 10% of the samples.
    pub tail_sup: f64,
}

pub fn disagreement(traj: &Trajectory, n: usize, m: usize) -> Result<Disagreement> {
    if traj.y.iter().any(|row| row.len() != n * m) || n == 0 {
        return Err(Error::DimensionMismatch(format!("trajectory rows must have n*m = {} entries", n * m)));
    }
    let mut y_ave = Vec::with_capacity(traj.y.len());
    let mut y_dis = Vec::with_capacity(traj.y.len());
    for row in &traj.y {
        let ave: Vec<f64> = (0..m).map(|k| (0..n).map(|i| row[i * m + k]).sum::<f64>() / n as f64).collect();
        y_dis.push((0..n * m).map(|idx| row[idx] - ave[idx % m]).collect::<Vec<f64>>());
        y_ave.push(ave);
    }
    let start = y_dis.len() - (y_dis.len() / 10).max(1);
    let tail_sup = y_dis[start..].iter().flatten().fold(0.0f64, |a, &v| a.max(v.abs()));
    Ok(Disagreement { y_ave, y_dis, tail_sup })
}
