//! Partial-fraction transfer matrices: residues at the persistent modes plus a
//! stable remainder.

use nalgebra::SVD;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::poly::{Term, TermKind};
use super::{PersistentModes, StateSpace};
use crate::error::{Error, Result};
use crate::linalg::{
    block_diag as blkdiag, c, frobenius, null_split, real_part, rfrobenius, to_complex, CMatrix, RMatrix, J,
};

/// `P(s) = sum_k M_k/(s - j w_k) + conj terms + Delta(s)` with `Delta` stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub modes: PersistentModes,
    /// Residue at `j * modes.omega[k]`; real for the mode at 0.
    pub residues: Vec<CMatrix>,
    pub remainder: StateSpace,
}

/// Residues at the requested modes together with the stable remainder.
#[derive(Debug, Clone)]
pub struct Residues {
    pub residues: Vec<CMatrix>,
    pub remainder: StateSpace,
    /// Algebraic multiplicity found at each mode.
    pub multiplicity: Vec<usize>,
}

impl TransferMatrix {
    pub fn new(modes: PersistentModes, residues: Vec<CMatrix>, remainder: StateSpace) -> Result<Self> {
        let m = modes.m;
        if residues.len() != modes.omega.len() {
            return Err(Error::DimensionMismatch(format!("{} residues for {} modes", residues.len(), modes.omega.len())));
        }
        if residues.iter().any(|r| r.shape() != (m, m)) || remainder.inputs() != m || remainder.outputs() != m {
            return Err(Error::DimensionMismatch(format!("transfer matrix blocks must be {m}x{m}")));
        }
        let mut residues = residues;
        for (w, r) in modes.omega.iter().zip(residues.iter_mut()) {
            if *w == 0.0 {
                if r.iter().any(|z| z.im.abs() > 1e-9 * (1.0 + z.norm())) {
                    return Err(Error::Input("residue at the zero mode must be real".into()));
                }
                *r = r.map(|z| c(z.re, 0.0));
            }
        }
        Ok(TransferMatrix { modes, residues, remainder })
    }

    /// Stable system without persistent modes.
    pub fn stable(ss: StateSpace) -> Result<Self> {
        let m = ss.outputs();
        if ss.inputs() != m {
            return Err(Error::NotSquare { rows: m, cols: ss.inputs() });
        }
        TransferMatrix::new(PersistentModes { omega: Vec::new(), m }, Vec::new(), ss)
    }

    /// Constant gain matrix.
    pub fn gain(d: RMatrix) -> Result<Self> {
        TransferMatrix::stable(StateSpace::gain(d))
    }

    /// Sum of rational terms: imaginary-axis terms become residues, stable terms
    /// are realized and summed into the remainder.
    pub fn from_terms(terms: &[Term]) -> Result<Self> {
        let m = terms.first().ok_or_else(|| Error::InvalidRational("no terms".into()))?.dim();
        if terms.iter().any(|t| t.dim() != m) {
            return Err(Error::DimensionMismatch("terms have different dimensions".into()));
        }
        let mut modes: Vec<(f64, CMatrix)> = Vec::new();
        let mut stable = Vec::new();
        for t in terms {
            match t.classify()? {
                TermKind::Stable => stable.push(t.realize()),
                TermKind::Marginal(roots) => {
                    if t.num_degree() >= t.den.degree() {
                        return Err(Error::InvalidRational(
                            "an imaginary-axis term must be strictly proper".into(),
                        ));
                    }
                    for p in roots {
                        let w = if p.im.abs() < 1e-9 { 0.0 } else { p.im };
                        let r = t.residue(c(0.0, w));
                        match modes.iter_mut().find(|(o, _)| (o - w).abs() <= 1e-9 * w.max(1.0)) {
                            Some((_, acc)) => *acc += r,
                            None => modes.push((w, r)),
                        }
                    }
                }
            }
        }
        modes.sort_by(|a, b| a.0.total_cmp(&b.0));
        let remainder = if stable.is_empty() {
            StateSpace::gain(RMatrix::zeros(m, m))
        } else {
            StateSpace::parallel(&stable)?
        };
        let pm = PersistentModes::new(modes.iter().map(|x| x.0).collect(), m)?;
        TransferMatrix::new(pm, modes.into_iter().map(|x| x.1).collect(), remainder)
    }

    /// Splits a state-space system at the given modes (multiplicities unchecked
    /// beyond semi-simplicity).
    pub fn from_state_space(ss: &StateSpace, omega: &[f64]) -> Result<Self> {
        let m = ss.outputs();
        if ss.inputs() != m {
            return Err(Error::NotSquare { rows: m, cols: ss.inputs() });
        }
        let modes = PersistentModes::new(omega.to_vec(), m)?;
        let split = decompose(ss, &modes.omega, None)?;
        TransferMatrix::new(modes, split.residues, split.remainder)
    }

    pub fn m(&self) -> usize {
        self.modes.m
    }

    /// Residue at the zero mode, if present.
    pub fn m0(&self) -> Option<RMatrix> {
        if self.modes.has_zero() {
            Some(real_part(&self.residues[0]))
        } else {
            None
        }
    }

    pub fn residue_at(&self, w: f64) -> Option<&CMatrix> {
        self.modes.omega.iter().position(|&o| (o - w).abs() <= 1e-9 * w.max(1.0)).map(|k| &self.residues[k])
    }

    /// Modal realization: an integrator block per zero mode, a rotation block per
    /// oscillatory mode, then the remainder.
    pub fn realization(&self) -> StateSpace {
        let m = self.m();
        let mut parts = Vec::new();
        for (&w, r) in self.modes.omega.iter().zip(&self.residues) {
            if w == 0.0 {
                parts.push(StateSpace::new(RMatrix::zeros(m, m), real_part(r), RMatrix::identity(m, m), RMatrix::zeros(m, m)));
            } else {
                let mut a = RMatrix::zeros(2 * m, 2 * m);
                let mut b = RMatrix::zeros(2 * m, m);
                let mut cm = RMatrix::zeros(m, 2 * m);
                for k in 0..m {
                    a[(k, m + k)] = w;
                    a[(m + k, k)] = -w;
                    cm[(k, k)] = 1.0;
                }
                for i in 0..m {
                    for j in 0..m {
                        b[(i, j)] = 2.0 * r[(i, j)].re;
                        b[(m + i, j)] = -2.0 * r[(i, j)].im;
                    }
                }
                parts.push(StateSpace::new(a, b, cm, RMatrix::zeros(m, m)));
            }
        }
        parts.push(self.remainder.clone());
        StateSpace::parallel(&parts).expect("blocks share dimensions")
    }

    /// Evaluates the partial-fraction form.
    pub fn eval(&self, s: Complex64) -> Result<CMatrix> {
        let mut out = self.remainder.eval(s)?;
        for (&w, r) in self.modes.omega.iter().zip(&self.residues) {
            let mut terms = vec![(c(0.0, w), r.clone())];
            if w > 0.0 {
                terms.push((c(0.0, -w), r.map(|z| z.conj())));
            }
            for (p, res) in terms {
                let d = s - p;
                if d.norm() <= 1e-14 * (1.0 + w) {
                    return Err(Error::PoleEvaluation { re: s.re, im: s.im });
                }
                out += res / d;
            }
        }
        Ok(out)
    }

    /// Evaluates through the state-space realization.
    pub fn eval_state_space(&self, s: Complex64) -> Result<CMatrix> {
        self.realization().eval(s)
    }

    /// Value at infinity (the remainder's feedthrough).
    pub fn at_infinity(&self) -> RMatrix {
        self.remainder.d.clone()
    }

    /// `P C` for a stable `C`; residues become `M_k C(j w_k)`.
    pub fn series(&self, ctrl: &StateSpace) -> Result<TransferMatrix> {
        if ctrl.outputs() != self.m() || ctrl.inputs() != self.m() {
            return Err(Error::DimensionMismatch("series factor must be square of the same size".into()));
        }
        let ss = StateSpace::series(&self.realization(), ctrl)?;
        let split = decompose(&ss, &self.modes.omega, None)?;
        TransferMatrix::new(self.modes.clone(), split.residues, split.remainder)
    }

    /// Block-diagonal stacking; the mode set is the union of the parts' modes.
    pub fn block_diag(parts: &[TransferMatrix]) -> Result<TransferMatrix> {
        if parts.is_empty() {
            return Err(Error::Empty);
        }
        let mut omega: Vec<f64> = Vec::new();
        for p in parts {
            for &w in &p.modes.omega {
                if !omega.iter().any(|&o| (o - w).abs() <= 1e-9 * w.max(1.0)) {
                    omega.push(w);
                }
            }
        }
        omega.sort_by(f64::total_cmp);
        let residues = omega
            .iter()
            .map(|&w| {
                let blocks: Vec<CMatrix> = parts
                    .iter()
                    .map(|p| p.residue_at(w).cloned().unwrap_or_else(|| CMatrix::zeros(p.m(), p.m())))
                    .collect();
                blkdiag(&blocks)
            })
            .collect();
        let m = parts.iter().map(|p| p.m()).sum();
        let remainder = StateSpace::block_diag(&parts.iter().map(|p| p.remainder.clone()).collect::<Vec<_>>());
        TransferMatrix::new(PersistentModes { omega, m }, residues, remainder)
    }

    pub fn scaled(&self, k: f64) -> TransferMatrix {
        TransferMatrix {
            modes: self.modes.clone(),
            residues: self.residues.iter().map(|r| r * c(k, 0.0)).collect(),
            remainder: self.remainder.scaled(k),
        }
    }
}

/// Residues of a state-space system at `jOmega`, each required to be a
/// semi-simple eigenvalue of multiplicity `m`.
pub fn residues(ss: &StateSpace, modes: &PersistentModes) -> Result<Vec<CMatrix>> {
    Ok(decompose(ss, &modes.omega, Some(modes.m))?.residues)
}

/// Spectral projectors at each mode give the residues; the complementary
/// invariant subspace carries the remainder.
pub(crate) fn decompose(ss: &StateSpace, omega: &[f64], expected: Option<usize>) -> Result<Residues> {
    let n = ss.states();
    let ev = ss.eigenvalues()?;
    let norm_a = rfrobenius(&ss.a);
    let cluster = 1e-7 * norm_a + 1e-12;
    let ac = to_complex(&ss.a);
    let (bc, cc) = (to_complex(&ss.b), to_complex(&ss.c));
    let mut total = CMatrix::zeros(n, n);
    let mut out = Vec::with_capacity(omega.len());
    let mut multiplicity = Vec::with_capacity(omega.len());

    for &w in omega {
        let lam = c(0.0, w);
        let algebraic = ev.iter().filter(|l| (*l - lam).norm() <= cluster).count();
        let shifted = &ac - CMatrix::identity(n, n) * lam;
        let right = null_split(&shifted, 1e-8).null;
        let left = null_split(&shifted.adjoint(), 1e-8).null;
        let geometric = if algebraic == 0 { 0 } else { right.ncols() };
        if geometric < algebraic || (algebraic > 0 && left.ncols() != geometric) {
            return Err(Error::NotSemisimple { omega: w, algebraic, geometric: geometric.min(left.ncols()) });
        }
        if let Some(m) = expected {
            if algebraic != m {
                return Err(Error::ModeMultiplicity { omega: w, found: algebraic, expected: m });
            }
        }
        multiplicity.push(algebraic);
        if algebraic == 0 {
            out.push(CMatrix::zeros(ss.outputs(), ss.inputs()));
            continue;
        }
        let gram = left.adjoint() * &right;
        let gram_inv = gram.try_inverse().ok_or(Error::NotSemisimple { omega: w, algebraic, geometric })?;
        let proj = &right * gram_inv * left.adjoint();
        let mut res = &cc * &proj * &bc;
        if w == 0.0 {
            res = res.map(|z| c(z.re, 0.0));
            total += &proj;
        } else {
            total += &proj + proj.map(|z| z.conj());
        }
        check_limit(ss, lam, &res, &ev, cluster)?;
        out.push(res);
    }

    // remainder on the complementary invariant subspace
    let comp = real_part(&(CMatrix::identity(n, n) - &total));
    let svd = SVD::new(comp.clone(), true, false);
    let u = svd.u.expect("u requested");
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > 0.5).collect();
    let z = RMatrix::from_fn(n, keep.len(), |i, k| u[(i, keep[k])]);
    let remainder = StateSpace::new(z.transpose() * &ss.a * &z, z.transpose() * &comp * &ss.b, &ss.c * &z, ss.d.clone());
    let tol = 1e-9 * norm_a.max(1.0);
    for l in remainder.eigenvalues()? {
        if l.re >= -tol {
            return Err(Error::UnexpectedPole { re: l.re, im: l.im });
        }
    }
    Ok(Residues { residues: out, remainder, multiplicity })
}

/// Cross-checks a residue against the symmetric difference quotient of
/// `(s - lam) P(s)` around the pole.
fn check_limit(ss: &StateSpace, lam: Complex64, res: &CMatrix, ev: &[Complex64], cluster: f64) -> Result<()> {
    let gap = ev
        .iter()
        .filter(|l| (*l - lam).norm() > cluster)
        .map(|l| (l - lam).norm())
        .fold(f64::INFINITY, f64::min);
    let delta = 1e-3 * gap.min(1.0 + lam.norm());
    let mut avg = CMatrix::zeros(res.nrows(), res.ncols());
    for dir in [c(1.0, 0.0), c(-1.0, 0.0), J, -J] {
        let d = dir * delta;
        avg += ss.eval(lam + d)? * (d * 0.25);
    }
    let err = frobenius(&(avg - res));
    if err > 1e-4 * (1.0 + frobenius(res)) {
        return Err(Error::NumericalDegeneracy(format!(
            "residue at {}j disagrees with the numeric limit by {err:.3e}",
            lam.im
        )));
    }
    Ok(())
}
