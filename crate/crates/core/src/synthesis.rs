//! Controller synthesis: matrix interpolation through the bilinear map
//! `x = (1 - s)/(1 + s)`, sector LMIs for a shared controller, per-agent and
//! uniform designs, and the low-gain search.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::io::complex_matrix;
use crate::linalg::{block_diag, c, frobenius, hermitian_eigen, real_eigenvalues, singular_values, to_complex, CMatrix, RMatrix};
use crate::ltisys::{closed_loop, verify_sync, Coupling, PersistentModes, Poly, StateSpace, SyncReport, Term, TermSpec, TransferMatrix};
use crate::netgraph::{component_phase_bounds, frobenius_form, LaplacianDecomposition, WeightedDigraph};
use crate::phasecore::{phases, PhaseOptions, SectorialityKind};

/// Targets `C(0) = K_0` and `C(j w_k) = K_k` for the positive mode frequencies.
#[derive(Debug, Clone)]
pub struct InterpolationSpec {
    pub omega: Vec<f64>,
    pub k0: RMatrix,
    pub targets: Vec<CMatrix>,
}

/// `C(s) = sum_d F_d x(s)^d` with `x(s) = (1 - s)/(1 + s)`; every pole sits at -1.
#[derive(Debug, Clone)]
pub struct Interpolant {
    pub coefficients: Vec<RMatrix>,
    /// Largest imaginary part discarded from the coefficients.
    pub max_imag: f64,
    pub realization: StateSpace,
    /// `N(s) / (s + 1)^(2q)` entrywise.
    pub term: Term,
}

impl Interpolant {
    pub fn eval(&self, s: Complex64) -> CMatrix {
        let x = (c(1.0, 0.0) - s) / (c(1.0, 0.0) + s);
        let m = self.coefficients[0].nrows();
        self.coefficients.iter().rev().fold(CMatrix::zeros(m, m), |acc, f| acc * x + to_complex(f))
    }
}

fn nonsingular(k: &CMatrix) -> bool {
    let sv = singular_values(k);
    sv.first().is_some_and(|&hi| hi > 0.0 && sv[sv.len() - 1] > 1e-12 * hi)
}

/// Matrix Lagrange interpolation in `x` through the node `1` (for `s = 0`) and
/// the conjugate pairs `(1 -+ j w_k)/(1 +- j w_k)`.
pub fn interpolate(spec: &InterpolationSpec) -> Result<Interpolant> {
    let m = spec.k0.nrows();
    if spec.k0.ncols() != m || spec.targets.iter().any(|k| k.shape() != (m, m)) {
        return Err(Error::DimensionMismatch(format!("interpolation targets must be {m}x{m}")));
    }
    if spec.targets.len() != spec.omega.len() {
        return Err(Error::DimensionMismatch(format!("{} targets for {} frequencies", spec.targets.len(), spec.omega.len())));
    }
    if spec.omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Input("interpolation frequencies must be positive".into()));
    }
    let k0 = to_complex(&spec.k0);
    if !nonsingular(&k0) {
        return Err(Error::SingularTarget { index: 0 });
    }
    let mut nodes = vec![c(1.0, 0.0)];
    let mut values = vec![k0];
    for (i, (&w, k)) in spec.omega.iter().zip(&spec.targets).enumerate() {
        if !nonsingular(k) {
            return Err(Error::SingularTarget { index: i + 1 });
        }
        let x = c(1.0, -w) / c(1.0, w);
        nodes.push(x);
        values.push(k.clone());
        nodes.push(x.conj());
        values.push(k.map(|z| z.conj()));
    }
    for i in 0..nodes.len() {
        for j in 0..i {
            if (nodes[i] - nodes[j]).norm() <= 1e-12 {
                return Err(Error::CoincidentNodes);
            }
        }
    }
    let deg = nodes.len() - 1;
    let mut coef = vec![CMatrix::zeros(m, m); deg + 1];
    for (i, xi) in nodes.iter().enumerate() {
        // basis polynomial, lowest power first
        let mut basis = vec![c(1.0, 0.0)];
        for (j, xj) in nodes.iter().enumerate() {
            if j == i {
                continue;
            }
            let scale = c(1.0, 0.0) / (xi - xj);
            let mut next = vec![c(0.0, 0.0); basis.len() + 1];
            for (d, b) in basis.iter().enumerate() {
                next[d + 1] += b * scale;
                next[d] -= b * xj * scale;
            }
            basis = next;
        }
        for (d, b) in basis.iter().enumerate() {
            coef[d] += &values[i] * *b;
        }
    }
    let max_imag = coef.iter().flat_map(|f| f.iter()).fold(0.0f64, |a, z| a.max(z.im.abs()));
    let coefficients: Vec<RMatrix> = coef.iter().map(|f| f.map(|z| z.re)).collect();

    // Horner: C = F_0 + w (F_1 + w (F_2 + ...)) with w(s) = -1 + 2/(s + 1)
    let im = RMatrix::identity(m, m);
    let w = StateSpace::new(-&im, &im * 2.0, im.clone(), -&im);
    let mut real = StateSpace::gain(coefficients[deg].clone());
    for f in coefficients[..deg].iter().rev() {
        let tail = StateSpace::series(&w, &real)?;
        real = StateSpace::parallel(&[StateSpace::gain(f.clone()), tail])?;
    }

    let one_minus = Poly::from_high(&[-1.0, 1.0]);
    let one_plus = Poly::from_high(&[1.0, 1.0]);
    let num = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    coefficients.iter().enumerate().fold(Poly::constant(0.0), |acc, (d, f)| {
                        acc.add(&one_minus.pow(d).mul(&one_plus.pow(deg - d)).scale(f[(i, j)]))
                    })
                })
                .collect()
        })
        .collect();
    let term = Term { gain: 1.0, den: one_plus.pow(deg), num };
    Ok(Interpolant { coefficients, max_imag, realization: real, term })
}

/// `lambda_min(Herm(e^{+-j theta} M K)) > 0` for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorConstraint {
    #[serde(with = "complex_matrix")]
    pub m: CMatrix,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiProblem {
    pub dim: usize,
    /// Restrict the variable to real matrices.
    pub real: bool,
    pub constraints: Vec<SectorConstraint>,
}

#[derive(Debug, Clone)]
pub struct LmiOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    pub feas_tol: f64,
}

impl Default for LmiOptions {
    fn default() -> Self {
        LmiOptions { restarts: 5, iterations: 3000, seed: 0, feas_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiSolution {
    #[serde(with = "complex_matrix")]
    pub k: CMatrix,
    /// Smallest eigenvalue margin over all constraints, for residues divided by `scale`.
    pub margin: f64,
    pub feasible: bool,
    /// Largest residue Frobenius norm.
    pub scale: f64,
    /// Best margin after each iteration of the winning start.
    pub history: Vec<f64>,
}

impl LmiProblem {
    /// Worst constraint value with the eigenvector and rotation attaining it.
    fn evaluate(&self, k: &CMatrix, scale: f64) -> (f64, CMatrix) {
        let mut best = (f64::INFINITY, CMatrix::zeros(self.dim, self.dim));
        for con in &self.constraints {
            let x = &con.m * k / c(scale, 0.0);
            for rot in [con.theta, -con.theta] {
                let e = Complex64::from_polar(1.0, rot);
                let (vals, vecs) = hermitian_eigen(&crate::linalg::hermitize(&(&x * e)));
                if vals[0] < best.0 {
                    let v = vecs.column(0).into_owned();
                    // gradient of Re(v* e M K v) / scale with respect to K
                    let grad = (&con.m.adjoint() * &v * v.adjoint()) * (e.conj() / scale);
                    best = (vals[0], grad);
                }
            }
        }
        best
    }

    fn scale(&self) -> f64 {
        self.constraints.iter().map(|c0| frobenius(&c0.m)).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
    }

    /// Constraint margin of `k` (normalized to unit Frobenius norm) in the solver's units.
    pub fn margin(&self, k: &CMatrix) -> f64 {
        let n = frobenius(k).max(f64::MIN_POSITIVE);
        self.evaluate(&(k / c(n, 0.0)), self.scale()).0
    }
}

fn project(k: CMatrix, real: bool) -> CMatrix {
    let k = if real { k.map(|z| c(z.re, 0.0)) } else { k };
    let n = frobenius(&k);
    if n > 1.0 {
        k / c(n, 0.0)
    } else {
        k
    }
}

fn ascend(p: &LmiProblem, start: CMatrix, scale: f64, iterations: usize) -> (CMatrix, f64, Vec<f64>) {
    let mut k = project(start, p.real);
    let (mut best_k, mut best) = (k.clone(), f64::NEG_INFINITY);
    let mut history = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let (val, grad) = p.evaluate(&k, scale);
        if val > best {
            best = val;
            best_k = k.clone();
        }
        history.push(best);
        let g = if p.real { grad.map(|z| c(z.re, 0.0)) } else { grad };
        let gn = frobenius(&g);
        if gn == 0.0 {
            break;
        }
        let step = 0.3 / ((it + 1) as f64).sqrt();
        k = project(&k + g * c(step / gn, 0.0), p.real);
    }
    (best_k, best, history)
}

/// Maximizes the smallest sector margin over `||K||_F <= 1` by projected
/// supergradient ascent from the normalized residue inverses, the identity
/// and seeded random starts.
pub fn solve_sector_lmi(p: &LmiProblem, opts: &LmiOptions) -> Result<LmiSolution> {
    let d = p.dim;
    if d == 0 || p.constraints.iter().any(|c0| c0.m.shape() != (d, d)) {
        return Err(Error::DimensionMismatch(format!("sector constraints must be {d}x{d}")));
    }
    if p.constraints.iter().any(|c0| !(0.0..FRAC_PI_2).contains(&c0.theta)) {
        return Err(Error::Input("sector angles must lie in [0, pi/2)".into()));
    }
    let scale = p.scale();
    let mut starts = vec![CMatrix::identity(d, d)];
    let mut avg = CMatrix::zeros(d, d);
    for con in &p.constraints {
        if let Some(inv) = con.m.clone().try_inverse() {
            let n = frobenius(&inv);
            if n.is_finite() && n > 0.0 {
                avg += &inv / c(n, 0.0);
                starts.push(inv / c(n, 0.0));
            }
        }
    }
    if frobenius(&avg) > 0.0 {
        starts.insert(0, avg);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.restarts {
        starts.push(CMatrix::from_fn(d, d, |_, _| {
            let re = rng.random::<f64>() * 2.0 - 1.0;
            let im = if p.real { 0.0 } else { rng.random::<f64>() * 2.0 - 1.0 };
            c(re, im)
        }));
    }
    let runs: Vec<(CMatrix, f64, Vec<f64>)> =
        starts.into_par_iter().map(|s| ascend(p, s, scale, opts.iterations)).collect();
    let (k, margin, history) = runs
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("at least one start");
    Ok(LmiSolution { k, margin, feasible: margin > opts.feas_tol, scale, history })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMode {
    PerAgent,
    Uniform,
}

/// Eigen-angles of `M K (L_kk (x) I)` for one mode and component; for the
/// root component the `m` eigenvalues nearest zero are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleCertificate {
    pub omega: f64,
    pub component: usize,
    pub angles: Vec<f64>,
    /// All retained eigenvalues lie in the open right half plane.
    pub hurwitz: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonTrial {
    pub epsilon: f64,
    pub pass: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSearch {
    pub found: bool,
    /// Largest passing gain of the scan (0 when none passes).
    pub epsilon: f64,
    /// Smallest failing gain above `epsilon`, or 1 when the first trial passes.
    pub epsilon_star: f64,
    pub precondition: bool,
    pub certificates: Vec<AngleCertificate>,
    pub trials: Vec<EpsilonTrial>,
    pub report: Option<SyncReport>,
}

#[derive(Debug, Clone)]
pub struct DesignOptions {
    pub refine: bool,
    pub lmi: LmiOptions,
    /// Smallest gain tried by the scan.
    pub eps_min: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions { refine: false, lmi: LmiOptions::default(), eps_min: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiReport {
    pub omega: f64,
    pub margin: f64,
    pub feasible: bool,
    #[serde(with = "complex_matrix")]
    pub k: CMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCheck {
    pub omega: f64,
    pub component: usize,
    pub theta: f64,
    /// Smallest and largest phase of the stacked `M_k K_k` blocks.
    pub phases: [f64; 2],
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub mode: DesignMode,
    pub feasible: bool,
    pub reason: String,
    pub epsilon: f64,
    pub epsilon_star: f64,
    pub static_controller: bool,
    pub thetas: Vec<f64>,
    /// Final controllers `epsilon * C~(s)`, one per agent or a single shared one.
    pub controllers: Vec<TermSpec>,
    pub lmi: Vec<LmiReport>,
    pub phase_checks: Vec<PhaseCheck>,
    pub certificates: Vec<AngleCertificate>,
    pub trials: Vec<EpsilonTrial>,
    pub sync: Option<SyncReport>,
    /// State-space form of `controllers`.
    #[serde(skip)]
    pub realizations: Vec<StateSpace>,
}

impl DesignResult {
    /// One controller per agent.
    pub fn per_agent(&self, n: usize) -> Vec<StateSpace> {
        match self.mode {
            DesignMode::Uniform => vec![self.realizations[0].clone(); n],
            DesignMode::PerAgent => self.realizations.clone(),
        }
    }

    fn infeasible(mode: DesignMode, reason: String, thetas: Vec<f64>) -> Self {
        DesignResult {
            mode,
            feasible: false,
            reason,
            epsilon: 0.0,
            epsilon_star: 0.0,
            static_controller: false,
            thetas,
            controllers: Vec::new(),
            lmi: Vec::new(),
            phase_checks: Vec::new(),
            certificates: Vec::new(),
            trials: Vec::new(),
            sync: None,
            realizations: Vec::new(),
        }
    }
}

/// The persistent modes shared by every agent.
fn common_modes(agents: &[TransferMatrix]) -> Result<PersistentModes> {
    let first = agents.first().ok_or(Error::Empty)?;
    for a in agents {
        let same = a.m() == first.m()
            && a.modes.omega.len() == first.modes.omega.len()
            && a.modes.omega.iter().zip(&first.modes.omega).all(|(x, y)| (x - y).abs() <= 1e-9 * x.max(1.0));
        if !same {
            return Err(Error::Precondition("agents do not share the same persistent modes and size".into()));
        }
    }
    Ok(first.modes.clone())
}

fn certificates(
    agents: &[TransferMatrix],
    controllers: &[StateSpace],
    dec: &LaplacianDecomposition,
) -> Result<Vec<AngleCertificate>> {
    let modes = &agents[0].modes;
    let m = modes.m;
    let mut out = Vec::new();
    for (k, &w) in modes.omega.iter().enumerate() {
        let gains = controllers.iter().map(|cs| cs.eval(c(0.0, w))).collect::<Result<Vec<_>>>()?;
        for (kappa, b) in dec.blocks.iter().enumerate() {
            let mk = block_diag(&b.nodes.iter().map(|&i| &agents[i].residues[k] * &gains[i]).collect::<Vec<_>>());
            let lk = to_complex(&crate::linalg::kron(&b.l_kk, &RMatrix::identity(m, m)));
            let prod = mk * lk;
            let mut ev = crate::linalg::eigenvalues(&prod)?;
            ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
            let kept = if kappa == 0 { &ev[m.min(ev.len())..] } else { &ev[..] };
            let tol = 1e-9 * frobenius(&prod).max(1e-300);
            out.push(AngleCertificate {
                omega: w,
                component: kappa,
                angles: kept.iter().map(|z| z.arg()).collect(),
                hurwitz: kept.iter().all(|z| z.re > tol),
            });
        }
    }
    Ok(out)
}

fn scan(
    agents: &[TransferMatrix],
    controllers: &[StateSpace],
    g: &WeightedDigraph,
    eps_min: f64,
) -> Result<EpsilonSearch> {
    let modes = common_modes(agents)?;
    if controllers.len() != agents.len() || agents.len() != g.n {
        return Err(Error::DimensionMismatch(format!(
            "{} agents, {} controllers, {} nodes",
            agents.len(),
            controllers.len(),
            g.n
        )));
    }
    let dec = frobenius_form(g)?;
    let certs = certificates(agents, controllers, &dec)?;
    let precondition = certs.iter().all(|c0| c0.hurwitz);
    let mut trials = Vec::new();
    let mut eps = 1.0;
    while eps >= eps_min {
        let scaled: Vec<StateSpace> = controllers.iter().map(|cs| cs.scaled(eps)).collect();
        let cl = closed_loop(agents, &Coupling::Controllers(scaled), g)?;
        let rep = verify_sync(&cl, &modes, g.n, modes.m)?;
        trials.push(EpsilonTrial { epsilon: eps, pass: rep.pass, reason: rep.reason.clone() });
        if rep.pass {
            let star = if eps == 1.0 { 1.0 } else { 2.0 * eps };
            return Ok(EpsilonSearch {
                found: true,
                epsilon: eps,
                epsilon_star: star,
                precondition,
                certificates: certs,
                trials,
                report: Some(rep),
            });
        }
        eps *= 0.5;
    }
    Ok(EpsilonSearch {
        found: false,
        epsilon: 0.0,
        epsilon_star: trials.last().map_or(1.0, |t| t.epsilon),
        precondition,
        certificates: certs,
        trials,
        report: None,
    })
}

/// Halves the gain from 1 until the closed loop passes the eigenstructure
/// test; fails when nothing down to `eps_min` passes.
pub fn epsilon_search(
    agents: &[TransferMatrix],
    controllers: &[StateSpace],
    g: &WeightedDigraph,
    eps_min: f64,
) -> Result<EpsilonSearch> {
    let s = scan(agents, controllers, g, eps_min)?;
    if s.found {
        return Ok(s);
    }
    let bad: Vec<String> = s
        .certificates
        .iter()
        .filter(|c0| !c0.hurwitz)
        .map(|c0| format!("mode {} component {}", c0.omega, c0.component))
        .collect();
    let last = s.trials.last().map(|t| t.reason.clone()).unwrap_or_default();
    Err(Error::SearchFailure(if bad.is_empty() {
        format!("no gain down to {eps_min:e} synchronizes; last: {last}")
    } else {
        format!(
            "no gain down to {eps_min:e} synchronizes; Hurwitz precondition fails at {}; last: {last}",
            bad.join(", ")
        )
    }))
}

fn inverse(m: &CMatrix, omega: f64) -> Result<CMatrix> {
    if !nonsingular(m) {
        return Err(Error::SingularResidue { omega });
    }
    m.clone().try_inverse().ok_or(Error::SingularResidue { omega })
}

/// Targets for one controller; `K_0 = I` when zero is not a mode.
fn spec_from(modes: &PersistentModes, gains: &[CMatrix]) -> InterpolationSpec {
    let m = modes.m;
    let mut k0 = RMatrix::identity(m, m);
    let mut omega = Vec::new();
    let mut targets = Vec::new();
    for (&w, k) in modes.omega.iter().zip(gains) {
        if w == 0.0 {
            k0 = k.map(|z| z.re);
        } else {
            omega.push(w);
            targets.push(k.clone());
        }
    }
    InterpolationSpec { omega, k0, targets }
}

fn finish(
    mode: DesignMode,
    thetas: Vec<f64>,
    agents: &[TransferMatrix],
    interpolants: Vec<Interpolant>,
    g: &WeightedDigraph,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    let per_agent: Vec<StateSpace> = match mode {
        DesignMode::Uniform => vec![interpolants[0].realization.clone(); agents.len()],
        DesignMode::PerAgent => interpolants.iter().map(|i| i.realization.clone()).collect(),
    };
    let search = scan(agents, &per_agent, g, opts.eps_min)?;
    let eps = search.epsilon;
    let reason = if search.found {
        format!("synchronizes at gain {eps:e}")
    } else if search.precondition {
        "no gain in the scan synchronizes".to_string()
    } else {
        "no gain in the scan synchronizes; the angle precondition fails".to_string()
    };
    let controllers =
        interpolants.iter().map(|i| Term { gain: eps, ..i.term.clone() }.to_spec()).collect();
    let realizations = interpolants.iter().map(|i| i.realization.scaled(eps)).collect();
    Ok(DesignResult {
        mode,
        feasible: search.found,
        reason,
        epsilon: eps,
        epsilon_star: search.epsilon_star,
        static_controller: interpolants.iter().all(|i| i.coefficients.len() == 1),
        thetas,
        controllers,
        lmi: Vec::new(),
        phase_checks: Vec::new(),
        certificates: search.certificates,
        trials: search.trials,
        sync: search.report,
        realizations,
    })
}

/// One controller per agent interpolating the inverse residues.
pub fn design_per_agent(agents: &[TransferMatrix], g: &WeightedDigraph, opts: &DesignOptions) -> Result<DesignResult> {
    let modes = common_modes(agents)?;
    let dec = frobenius_form(g)?;
    let thetas = component_phase_bounds(&dec, opts.refine)?;
    let interpolants = agents
        .iter()
        .map(|a| {
            let gains =
                a.modes.omega.iter().zip(&a.residues).map(|(&w, r)| inverse(r, w)).collect::<Result<Vec<_>>>()?;
            interpolate(&spec_from(&modes, &gains))
        })
        .collect::<Result<Vec<_>>>()?;
    finish(DesignMode::PerAgent, thetas, agents, interpolants, g, opts)
}

/// A single controller from the sector LMIs at every mode.
pub fn design_uniform(agents: &[TransferMatrix], g: &WeightedDigraph, opts: &DesignOptions) -> Result<DesignResult> {
    let modes = common_modes(agents)?;
    let dec = frobenius_form(g)?;
    let thetas = component_phase_bounds(&dec, opts.refine)?;
    let m = modes.m;
    for (k, &w) in modes.omega.iter().enumerate() {
        for a in agents {
            inverse(&a.residues[k], w)?;
        }
    }
    let mut reports = Vec::new();
    let mut checks = Vec::new();
    let mut gains = Vec::new();
    let mut failures = Vec::new();
    for (k, &w) in modes.omega.iter().enumerate() {
        let constraints = (0..agents.len())
            .map(|i| SectorConstraint { m: agents[i].residues[k].clone(), theta: thetas[dec.block_of(i)] })
            .collect();
        let problem = LmiProblem { dim: m, real: w == 0.0, constraints };
        let sol = solve_sector_lmi(&problem, &opts.lmi)?;
        if !sol.feasible {
            failures.push(format!("sector LMI at omega = {w} is infeasible (margin {:.3e})", sol.margin));
        }
        for (kappa, b) in dec.blocks.iter().enumerate() {
            let theta = thetas[kappa];
            let x = block_diag(&b.nodes.iter().map(|&i| &agents[i].residues[k] * &sol.k).collect::<Vec<_>>());
            let (range, ok) = match phases(&x, &PhaseOptions::default()) {
                Ok(p) if p.kind.kind == SectorialityKind::Sectorial => {
                    let ok = p.max() < FRAC_PI_2 - theta && p.min() > -FRAC_PI_2 + theta;
                    ([p.min(), p.max()], ok)
                }
                _ => ([f64::NAN, f64::NAN], false),
            };
            if sol.feasible && !ok {
                failures.push(format!("phases at omega = {w} leave the sector of component {kappa}"));
            }
            checks.push(PhaseCheck { omega: w, component: kappa, theta, phases: range, ok });
        }
        reports.push(LmiReport { omega: w, margin: sol.margin, feasible: sol.feasible, k: sol.k.clone() });
        gains.push(sol.k);
    }
    if !failures.is_empty() {
        let mut r = DesignResult::infeasible(DesignMode::Uniform, failures.join("; "), thetas);
        r.lmi = reports;
        r.phase_checks = checks;
        return Ok(r);
    }
    let interp = interpolate(&spec_from(&modes, &gains))?;
    let mut r = finish(DesignMode::Uniform, thetas, agents, vec![interp], g, opts)?;
    r.lmi = reports;
    r.phase_checks = checks;
    Ok(r)
}

/// Real eigenvalues of the interpolant's state matrix, for pole checks.
pub fn interpolant_poles(i: &Interpolant) -> Result<Vec<Complex64>> {
    if i.realization.states() == 0 {
        return Ok(Vec::new());
    }
    real_eigenvalues(&i.realization.a)
}
