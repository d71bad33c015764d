//! Transfer matrices with persistent imaginary-axis modes, state-space
//! realizations, phase responses along the indented imaginary axis, and
//! network closed loops.

mod network;
mod poly;
mod response;
mod transfer;

pub use network::{
    closed_loop, disagreement, simulate, simulation_horizon, verify_sync, Coupling, Disagreement, ModeCheck,
    SyncReport, Trajectory,
};
pub use poly::{Poly, PolySpec, Term, TermKind, TermSpec};
pub use response::{
    axis_grid, phase_response, phases_along, PhaseResponse, PhaseResponseOptions, PhaseSample, SampleKind, Violation,
};
pub use transfer::{residues, Residues, TransferMatrix};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_diag as blkdiag, real_eigenvalues, rfrobenius, to_complex, CMatrix, RMatrix};

/// Nonnegative frequencies of the imaginary-axis poles shared by the agents.
/// The full mode set is `{0 if present} U {+-j omega_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistentModes {
    pub omega: Vec<f64>,
    pub m: usize,
}

impl PersistentModes {
    pub fn new(mut omega: Vec<f64>, m: usize) -> Result<Self> {
        if omega.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Input("mode frequencies must be finite and nonnegative".into()));
        }
        omega.sort_by(f64::total_cmp);
        if omega.windows(2).any(|w| w[1] - w[0] <= 1e-12 * w[1].max(1.0)) {
            return Err(Error::Input("mode frequencies must be distinct".into()));
        }
        Ok(PersistentModes { omega, m })
    }

    pub fn has_zero(&self) -> bool {
        self.omega.first().is_some_and(|&w| w == 0.0)
    }

    /// Positive frequencies only.
    pub fn oscillatory(&self) -> Vec<f64> {
        self.omega.iter().copied().filter(|&w| w > 0.0).collect()
    }

    /// Number of imaginary-axis eigenvalues `|jOmega|` counted once each.
    pub fn count(&self) -> usize {
        self.omega.iter().map(|&w| if w == 0.0 { 1 } else { 2 }).sum()
    }

    pub fn max_frequency(&self) -> f64 {
        self.omega.last().copied().unwrap_or(0.0)
    }

    pub fn contains(&self, w: f64, tol: f64) -> bool {
        self.omega.iter().any(|&o| (o - w.abs()).abs() <= tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub a: RMatrix,
    pub b: RMatrix,
    pub c: RMatrix,
    pub d: RMatrix,
}

impl StateSpace {
    pub fn new(a: RMatrix, b: RMatrix, c: RMatrix, d: RMatrix) -> Self {
        StateSpace { a, b, c, d }
    }

    pub fn validated(a: RMatrix, b: RMatrix, c: RMatrix, d: RMatrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "state-space shapes A {:?}, B {:?}, C {:?}, D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).chain(d.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("state-space matrices"));
        }
        Ok(StateSpace { a, b, c, d })
    }

    pub fn gain(d: RMatrix) -> Self {
        let (p, m) = d.shape();
        StateSpace { a: RMatrix::zeros(0, 0), b: RMatrix::zeros(0, m), c: RMatrix::zeros(p, 0), d }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.d.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.d.nrows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<Complex64>> {
        if self.states() == 0 {
            return Ok(Vec::new());
        }
        real_eigenvalues(&self.a)
    }

    /// True when every eigenvalue has real part below `-tol`.
    pub fn is_stable(&self, tol: f64) -> Result<bool> {
        Ok(self.eigenvalues()?.iter().all(|l| l.re < -tol))
    }

    /// `C (sI - A)^{-1} B + D`.
    pub fn eval(&self, s: Complex64) -> Result<CMatrix> {
        let n = self.states();
        let mut out = to_complex(&self.d);
        if n == 0 {
            return Ok(out);
        }
        let mut m = -to_complex(&self.a);
        for i in 0..n {
            m[(i, i)] += s;
        }
        let lu = m.lu();
        let u = lu.u();
        let scale = u.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);
        let pivot = (0..n).fold(f64::INFINITY, |a, i| a.min(u[(i, i)].norm()));
        if pivot <= 1e-14 * scale {
            return Err(Error::PoleEvaluation { re: s.re, im: s.im });
        }
        let x = lu.solve(&to_complex(&self.b)).ok_or(Error::PoleEvaluation { re: s.re, im: s.im })?;
        out += to_complex(&self.c) * x;
        Ok(out)
    }

    /// `outer * inner`: the output of `inner` drives `outer`.
    pub fn series(outer: &StateSpace, inner: &StateSpace) -> Result<StateSpace> {
        if outer.inputs() != inner.outputs() {
            return Err(Error::DimensionMismatch(format!(
                "series: {} outputs feed {} inputs",
                inner.outputs(),
                outer.inputs()
            )));
        }
        let (n1, n2) = (inner.states(), outer.states());
        let mut a = RMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&inner.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&outer.b * &inner.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&outer.a);
        let mut b = RMatrix::zeros(n1 + n2, inner.inputs());
        b.view_mut((0, 0), (n1, inner.inputs())).copy_from(&inner.b);
        b.view_mut((n1, 0), (n2, inner.inputs())).copy_from(&(&outer.b * &inner.d));
        let mut c = RMatrix::zeros(outer.outputs(), n1 + n2);
        c.view_mut((0, 0), (outer.outputs(), n1)).copy_from(&(&outer.d * &inner.c));
        c.view_mut((0, n1), (outer.outputs(), n2)).copy_from(&outer.c);
        Ok(StateSpace { a, b, c, d: &outer.d * &inner.d })
    }

    /// Sum of systems sharing input and output dimensions.
    pub fn parallel(parts: &[StateSpace]) -> Result<StateSpace> {
        let first = parts.first().ok_or(Error::Empty)?;
        let (p, m) = (first.outputs(), first.inputs());
        if parts.iter().any(|s| s.outputs() != p || s.inputs() != m) {
            return Err(Error::DimensionMismatch("parallel connection of differently sized systems".into()));
        }
        let a = blkdiag(&parts.iter().map(|s| s.a.clone()).collect::<Vec<_>>());
        let n = a.nrows();
        let mut b = RMatrix::zeros(n, m);
        let mut c = RMatrix::zeros(p, n);
        let mut d = RMatrix::zeros(p, m);
        let mut off = 0;
        for s in parts {
            let k = s.states();
            b.view_mut((off, 0), (k, m)).copy_from(&s.b);
            c.view_mut((0, off), (p, k)).copy_from(&s.c);
            d += &s.d;
            off += k;
        }
        Ok(StateSpace { a, b, c, d })
    }

    pub fn block_diag(parts: &[StateSpace]) -> StateSpace {
        let pick = |f: fn(&StateSpace) -> &RMatrix| blkdiag(&parts.iter().map(|s| f(s).clone()).collect::<Vec<_>>());
        StateSpace { a: pick(|s| &s.a), b: pick(|s| &s.b), c: pick(|s| &s.c), d: pick(|s| &s.d) }
    }

    /// Output scaled by `k`.
    pub fn scaled(&self, k: f64) -> StateSpace {
        StateSpace { a: self.a.clone(), b: self.b.clone(), c: &self.c * k, d: &self.d * k }
    }

    pub fn norm(&self) -> f64 {
        rfrobenius(&self.a)
    }
}
