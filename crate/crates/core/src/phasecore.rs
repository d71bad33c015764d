//! Numerical-range support data, sectoriality classification and matrix phases.
//!
//! The phases of a sectorial matrix `C = T* D T` are the arguments of the
//! unitary diagonal `D`. They are computed here without forming `T`: rotate `C`
//! by the direction that pushes its numerical range furthest from the origin,
//! split the rotated matrix into Hermitian parts `H + jS` with `H > 0`, and read
//! the phases off the eigenvalues of `H^{-1/2} S H^{-1/2}`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, eigenvalues, ensure_finite, ensure_square, frobenius, hermitian_eigen, hermitian_eigenvalues,
    hermitian_parts, kron, null_split, CMatrix,
};

/// Default relative tolerance used by [`PhaseOptions::default`].
pub const DEFAULT_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectorialityKind {
    Sectorial,
    QuasiSectorial,
    SemiSectorial,
    NotSemiSectorial,
}

impl SectorialityKind {
    pub fn is_semi_sectorial(self) -> bool {
        self != SectorialityKind::NotSemiSectorial
    }

    /// Sectorial matrices count as quasi-sectorial (0 plus a sectorial block of full size).
    pub fn is_quasi_sectorial(self) -> bool {
        matches!(self, SectorialityKind::Sectorial | SectorialityKind::QuasiSectorial)
    }

    pub fn label(self) -> &'static str {
        match self {
            SectorialityKind::Sectorial => "sectorial",
            SectorialityKind::QuasiSectorial => "quasi-sectorial",
            SectorialityKind::SemiSectorial => "semi-sectorial",
            SectorialityKind::NotSemiSectorial => "not semi-sectorial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sectoriality {
    pub kind: SectorialityKind,
    /// `max_theta lambda_min(Herm(e^{-j theta} C))`: positive when 0 is outside W(C).
    pub margin: f64,
    pub rank: usize,
    /// Rotation attaining the margin.
    pub rotation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOptions {
    /// Absolute sectoriality tolerance; `None` means `1e-9 * ||C||_F`.
    pub tol: Option<f64>,
    /// Relative singular-value threshold for rank and null-space decisions.
    pub rank_tol: f64,
    /// Uniform rotation grid size before golden-section refinement.
    pub grid: usize,
    /// Rotation to try first (e.g. from a neighbouring frequency sample).
    pub hint: Option<f64>,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions { tol: None, rank_tol: DEFAULT_REL_TOL, grid: 720, hint: None }
    }
}

impl PhaseOptions {
    pub fn with_hint(mut self, hint: f64) -> Self {
        self.hint = Some(hint);
        self
    }

    fn abs_tol(&self, m: &CMatrix) -> f64 {
        self.tol.unwrap_or(DEFAULT_REL_TOL * frobenius(m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseProfile {
    /// Phases in radians, sorted descending.
    pub phases: Vec<f64>,
    /// Phase center `(max + min) / 2`.
    pub center: f64,
    pub kind: Sectoriality,
    /// True when some phases were emitted as `rotation +- pi/2` boundary pairs.
    pub boundary_detected: bool,
}

impl PhaseProfile {
    pub fn max(&self) -> f64 {
        self.phases.first().copied().unwrap_or(self.center)
    }

    pub fn min(&self) -> f64 {
        self.phases.last().copied().unwrap_or(self.center)
    }

    pub fn spread(&self) -> f64 {
        self.max() - self.min()
    }

    /// Adds `2 pi k` to every phase and the center.
    pub fn shifted(&self, turns: i64) -> PhaseProfile {
        let d = 2.0 * PI * turns as f64;
        PhaseProfile {
            phases: self.phases.iter().map(|p| p + d).collect(),
            center: self.center + d,
            kind: self.kind,
            boundary_detected: self.boundary_detected,
        }
    }

    /// Shifts by a whole number of turns so the center lies within pi of `reference`.
    pub fn aligned_to(&self, reference: f64) -> PhaseProfile {
        let turns = ((reference - self.center) / (2.0 * PI)).round() as i64;
        self.shifted(turns)
    }

    fn from_unsorted(mut phases: Vec<f64>, kind: Sectoriality, boundary_detected: bool) -> PhaseProfile {
        phases.sort_by(|a, b| b.total_cmp(a));
        let center = if phases.is_empty() { 0.0 } else { 0.5 * (phases[0] + phases[phases.len() - 1]) };
        let profile = PhaseProfile { phases, center, kind, boundary_detected };
        profile.principal()
    }

    /// Principal branch: center in (-pi, pi].
    pub fn principal(&self) -> PhaseProfile {
        let wrapped = linalg::wrap_angle(self.center);
        let turns = ((wrapped - self.center) / (2.0 * PI)).round() as i64;
        self.shifted(turns)
    }
}

/// `lambda_min(Herm(e^{-j theta} C))` evaluated from precomputed Hermitian parts.
struct RotationObjective {
    h0: CMatrix,
    s0: CMatrix,
}

impl RotationObjective {
    fn new(m: &CMatrix) -> Self {
        let (h0, s0) = hermitian_parts(m);
        RotationObjective { h0, s0 }
    }

    fn rotated(&self, theta: f64) -> CMatrix {
        &self.h0 * c(theta.cos(), 0.0) + &self.s0 * c(theta.sin(), 0.0)
    }

    fn eval(&self, theta: f64) -> f64 {
        hermitian_eigenvalues(&self.rotated(theta))[0]
    }

    fn golden(&self, mut lo: f64, mut hi: f64) -> (f64, f64) {
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = self.eval(x1);
        let mut f2 = self.eval(x2);
        while hi - lo > 1e-11 {
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = self.eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = self.eval(x2);
            }
        }
        if f1 >= f2 {
            (x1, f1)
        } else {
            (x2, f2)
        }
    }

    /// Maximizes the objective over theta: uniform grid, then golden section
    /// around the best grid point. A hint that already certifies sectoriality
    /// short-circuits the grid.
    fn maximize(&self, grid: usize, hint: Option<f64>, tol: f64) -> (f64, f64) {
        if let Some(h) = hint {
            let (t, v) = self.golden(h - 0.4, h + 0.4);
            if v > tol {
                return (t, v);
            }
        }
        let grid = grid.max(8);
        let step = 2.0 * PI / grid as f64;
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..grid {
            let t = i as f64 * step;
            let v = self.eval(t);
            if v > best.1 + 1e-15 {
                best = (t, v);
            }
        }
        let (t, v) = self.golden(best.0 - step, best.0 + step);
        let (t, v) = if v >= best.1 { (t, v) } else { best };
        (linalg::wrap_angle(t), v)
    }
}

/// Support function of the numerical range: `lambda_max(Herm(e^{-j theta} C))`.
pub fn support(m: &CMatrix, theta: f64) -> Result<f64> {
    ensure_square(m)?;
    let obj = RotationObjective::new(m);
    let ev = hermitian_eigenvalues(&obj.rotated(theta));
    Ok(ev[ev.len() - 1])
}

pub fn classify(m: &CMatrix, tol: f64) -> Result<Sectoriality> {
    classify_with(m, &PhaseOptions { tol: Some(tol), ..Default::default() })
}

pub fn classify_with(m: &CMatrix, opts: &PhaseOptions) -> Result<Sectoriality> {
    let n = ensure_square(m)?;
    ensure_finite(m, "matrix")?;
    let norm = frobenius(m);
    if norm == 0.0 {
        return Ok(Sectoriality { kind: SectorialityKind::QuasiSectorial, margin: 0.0, rank: 0, rotation: 0.0 });
    }
    let tol = opts.abs_tol(m);
    let obj = RotationObjective::new(m);
    let (rotation, margin) = obj.maximize(opts.grid, opts.hint, tol);
    if margin > tol {
        return Ok(Sectoriality { kind: SectorialityKind::Sectorial, margin, rank: n, rotation });
    }
    if margin < -tol {
        return Ok(Sectoriality { kind: SectorialityKind::NotSemiSectorial, margin, rank: n, rotation });
    }
    let split = null_split(m, opts.rank_tol);
    let rank = split.range.ncols();
    let mut kind = SectorialityKind::SemiSectorial;
    if rank < n && kernels_match(m, &split.null, split.sigma_max, opts.rank_tol) {
        if rank == 0 {
            kind = SectorialityKind::QuasiSectorial;
        } else {
            let reduced = split.range.adjoint() * m * &split.range;
            let inner = classify_with(&reduced, &PhaseOptions { tol: None, hint: Some(rotation), ..*opts })?;
            if inner.kind == SectorialityKind::Sectorial {
                kind = SectorialityKind::QuasiSectorial;
            }
        }
    }
    Ok(Sectoriality { kind, margin, rank, rotation })
}

fn kernels_match(m: &CMatrix, null: &CMatrix, sigma_max: f64, rank_tol: f64) -> bool {
    if null.ncols() == 0 {
        return true;
    }
    let residual = frobenius(&(m.adjoint() * null));
    residual <= 1e3 * rank_tol * sigma_max.max(f64::MIN_POSITIVE) * (null.ncols() as f64).sqrt()
}

pub fn phases(m: &CMatrix, opts: &PhaseOptions) -> Result<PhaseProfile> {
    let class = classify_with(m, opts)?;
    phases_classified(m, class, opts)
}

fn phases_classified(m: &CMatrix, class: Sectoriality, opts: &PhaseOptions) -> Result<PhaseProfile> {
    let n = m.nrows();
    match class.kind {
        SectorialityKind::NotSemiSectorial => Err(Error::NotSemiSectorial { margin: class.margin }),
        SectorialityKind::Sectorial => Ok(sectorial_phases(m, class.rotation, class)),
        _ if class.rank == 0 => Ok(PhaseProfile::from_unsorted(Vec::new(), class, false)),
        _ if class.rank < n => {
            let split = null_split(m, opts.rank_tol);
            if !kernels_match(m, &split.null, split.sigma_max, opts.rank_tol) {
                return Err(Error::NumericalDegeneracy(
                    "kernel of C differs from kernel of C*: zero is not a normal eigenvalue".into(),
                ));
            }
            let reduced = split.range.adjoint() * m * &split.range;
            let inner_opts = PhaseOptions { tol: None, hint: Some(class.rotation), ..*opts };
            let inner_class = classify_with(&reduced, &inner_opts)?;
            let inner = match inner_class.kind {
                SectorialityKind::NotSemiSectorial => {
                    // rounding in the compression can tip a boundary case over; the
                    // original classification already certified semi-sectoriality
                    let forced = Sectoriality { kind: SectorialityKind::SemiSectorial, ..inner_class };
                    phases_classified(&reduced, forced, &inner_opts)?
                }
                _ => phases_classified(&reduced, inner_class, &inner_opts)?,
            };
            Ok(PhaseProfile::from_unsorted(inner.phases, class, inner.boundary_detected))
        }
        _ => boundary_phases(m, class, opts),
    }
}

fn sectorial_phases(m: &CMatrix, rotation: f64, class: Sectoriality) -> PhaseProfile {
    let rotated = m * Complex64::from_polar(1.0, -rotation);
    let (h, s) = hermitian_parts(&rotated);
    let (hv, hq) = hermitian_eigen(&h);
    let inv_sqrt = DVector::from_iterator(hv.len(), hv.iter().map(|&l| c(1.0 / l.max(f64::MIN_POSITIVE).sqrt(), 0.0)));
    let h_inv_half = &hq * nalgebra::DMatrix::from_diagonal(&inv_sqrt) * hq.adjoint();
    let core = &h_inv_half * s * &h_inv_half;
    let mu = hermitian_eigenvalues(&core);
    let phases = mu.iter().map(|&x| rotation + x.atan()).collect();
    PhaseProfile::from_unsorted(phases, class, false)
}

/// Phases of a nonsingular semi-sectorial matrix whose numerical range touches 0.
///
/// Rank deficiency `k` of `Herm(e^{-j gamma} C)` at the optimal rotation is
/// reported as `k` pairs of boundary phases `gamma +- pi/2`. The remaining
/// phases are half-angles of the eigenvalues of the cosquare `C^{-*} C`, whose
/// spectrum is `exp(2j phi_i)`.
fn boundary_phases(m: &CMatrix, class: Sectoriality, opts: &PhaseOptions) -> Result<PhaseProfile> {
    let n = m.nrows();
    let norm = frobenius(m);
    let mut gamma = class.rotation;
    let rotated = m * Complex64::from_polar(1.0, -gamma);
    let (h, s) = hermitian_parts(&rotated);
    let near_zero = 1e-7 * norm;

    if frobenius(&h) <= near_zero {
        // rotated Hermitian: W(C) is a segment through the origin
        if gamma > FRAC_PI_2 + 1e-12 || gamma <= -FRAC_PI_2 {
            gamma = linalg::wrap_angle(gamma + PI);
            let flipped = -&s;
            return Ok(rotated_hermitian(&flipped, gamma, class, opts));
        }
        return Ok(rotated_hermitian(&s, gamma, class, opts));
    }

    let hv = hermitian_eigenvalues(&h);
    let k = hv.iter().filter(|&&l| l.abs() <= near_zero).count().min(n / 2);

    let lu = m.adjoint().lu();
    let cosquare = lu
        .solve(m)
        .ok_or_else(|| Error::NumericalDegeneracy("cosquare of a singular matrix".into()))?;
    let ev = eigenvalues(&cosquare)?;
    let rot2 = Complex64::from_polar(1.0, -2.0 * gamma);
    let mut halves: Vec<f64> = ev.iter().map(|&l| 0.5 * (l * rot2).arg()).collect();
    // boundary pairs sit at half-angle +-pi/2; drop the 2k closest to it
    halves.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let mut phases: Vec<f64> = halves[2 * k..].iter().map(|a| gamma + a).collect();
    for _ in 0..k {
        phases.push(gamma + FRAC_PI_2);
        phases.push(gamma - FRAC_PI_2);
    }
    Ok(PhaseProfile::from_unsorted(phases, class, k > 0))
}

fn rotated_hermitian(s: &CMatrix, gamma: f64, class: Sectoriality, opts: &PhaseOptions) -> PhaseProfile {
    let ev = hermitian_eigenvalues(s);
    let scale = ev.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let phases = ev
        .iter()
        .filter(|&&l| l.abs() > opts.rank_tol * scale)
        .map(|&l| if l > 0.0 { gamma + FRAC_PI_2 } else { gamma - FRAC_PI_2 })
        .collect();
    PhaseProfile::from_unsorted(phases, Sectoriality { rotation: gamma, ..class }, true)
}

/// Compression `X* C X` of `C` by a full-column-rank `X`.
pub fn compress(m: &CMatrix, x: &CMatrix) -> Result<CMatrix> {
    let n = ensure_square(m)?;
    if x.nrows() != n || x.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!("compression matrix is {}x{}, expected {n}xk", x.nrows(), x.ncols())));
    }
    let sv = linalg::singular_values(x);
    let (hi, lo) = (sv[0], sv[sv.len() - 1]);
    if x.ncols() > n || lo <= 1e-12 * hi {
        return Err(Error::RankDeficient);
    }
    Ok(x.adjoint() * m * x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleInterval {
    pub lo: f64,
    pub hi: f64,
    /// Sum of the phase centers; eigen-angles are measured within pi of it.
    pub center: f64,
}

impl AngleInterval {
    pub fn contains(&self, a: f64, tol: f64) -> bool {
        a >= self.lo - tol && a <= self.hi + tol
    }
}

/// Bounds on the nonzero eigen-angles of `AB` for quasi-sectorial `A` and semi-sectorial `B`.
pub fn product_angle_bounds(a: &CMatrix, b: &CMatrix, opts: &PhaseOptions) -> Result<AngleInterval> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch("product operands differ in shape".into()));
    }
    let pa = phases(a, opts)?;
    if !pa.kind.kind.is_quasi_sectorial() {
        return Err(Error::Precondition("left factor is not quasi-sectorial".into()));
    }
    let pb = phases(b, opts)?;
    Ok(AngleInterval { lo: pa.min() + pb.min(), hi: pa.max() + pb.max(), center: pa.center + pb.center })
}

/// Angles of the eigenvalues of `AB` with modulus above `rel_tol * ||A|| ||B||`,
/// taken in `(center - pi, center + pi]`.
pub fn product_eigen_angles(a: &CMatrix, b: &CMatrix, center: f64, rel_tol: f64) -> Result<Vec<f64>> {
    let ab = a * b;
    let floor = rel_tol * frobenius(a) * frobenius(b);
    Ok(eigenvalues(&ab)?
        .into_iter()
        .filter(|l| l.norm() > floor)
        .map(|l| linalg::angle_near(l.arg(), center))
        .collect())
}

/// Phases of `A (x) B` as the pairwise sums of the phases of the factors.
pub fn kron_phases(a: &CMatrix, b: &CMatrix, opts: &PhaseOptions) -> Result<PhaseProfile> {
    let pa = phases(a, opts)?;
    let pb = phases(b, opts)?;
    let spread = pa.spread() + pb.spread();
    if spread > PI + 1e-9 {
        return Err(Error::SpreadViolated { spread });
    }
    let sums: Vec<f64> = pa.phases.iter().flat_map(|x| pb.phases.iter().map(move |y| x + y)).collect();
    let kind = if pa.kind.kind == SectorialityKind::Sectorial && pb.kind.kind == SectorialityKind::Sectorial && spread < PI
    {
        SectorialityKind::Sectorial
    } else if pa.kind.kind.is_quasi_sectorial() && pb.kind.kind.is_quasi_sectorial() && spread < PI {
        SectorialityKind::QuasiSectorial
    } else {
        SectorialityKind::SemiSectorial
    };
    let class = Sectoriality {
        kind,
        margin: pa.kind.margin.min(pb.kind.margin),
        rank: pa.phases.len() * pb.phases.len(),
        rotation: pa.kind.rotation + pb.kind.rotation,
    };
    Ok(PhaseProfile::from_unsorted(sums, class, pa.boundary_detected || pb.boundary_detected))
}

/// Convenience: `phases(A (x) B)` computed directly on the Kronecker product.
pub fn phases_of_kron(a: &CMatrix, b: &CMatrix, opts: &PhaseOptions) -> Result<PhaseProfile> {
    phases(&kron(a, b), opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssentialPhaseResult {
    /// Upper bound on the largest essential phase.
    pub value: f64,
    /// Positive diagonal scaling `D` (the bound is `max phase of D^{-1} C D`).
    pub scaling: Vec<f64>,
    /// True when the value is exact (Laplacian route), false for the numeric search.
    pub exact: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EssentialOptions {
    pub restarts: usize,
    pub seed: u64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evaluations: usize,
    pub phase: PhaseOptions,
}

impl Default for EssentialOptions {
    fn default() -> Self {
        EssentialOptions {
            restarts: 3,
            seed: 0,
            initial_step: 1.0,
            min_step: 1e-6,
            max_evaluations: 20_000,
            phase: PhaseOptions::default(),
        }
    }
}

/// Numerical upper bound on the largest essential phase by coordinate descent
/// over log-scalings `D = exp(diag(u))`.
pub fn essential_phase(m: &CMatrix, opts: &EssentialOptions) -> Result<EssentialPhaseResult> {
    essential_phase_traced(m, opts, |_, _| {})
}

/// Like [`essential_phase`], calling `observe(scaling, value)` for every scaling
/// evaluated (`value` is infinite where the scaled matrix is not semi-sectorial).
pub fn essential_phase_traced<F>(m: &CMatrix, opts: &EssentialOptions, mut observe: F) -> Result<EssentialPhaseResult>
where
    F: FnMut(&[f64], f64),
{
    let n = ensure_square(m)?;
    let evals = std::cell::Cell::new(0usize);
    let objective = |u: &[f64], observe: &mut F| -> f64 {
        evals.set(evals.get() + 1);
        let d: Vec<f64> = u.iter().map(|x| x.exp()).collect();
        let scaled = CMatrix::from_fn(n, n, |i, j| m[(i, j)] * (d[j] / d[i]));
        let v = match phases(&scaled, &opts.phase) {
            Ok(p) if !p.phases.is_empty() => p.max(),
            Ok(_) => 0.0,
            Err(_) => f64::INFINITY,
        };
        observe(&d, v);
        v
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for restart in 0..=opts.restarts {
        let mut u: Vec<f64> = if restart == 0 {
            vec![0.0; n]
        } else {
            (0..n).map(|i| if i == 0 { 0.0 } else { rng.random_range(-1.0..1.0) }).collect()
        };
        let mut fu = objective(&u, &mut observe);
        let mut step = opts.initial_step;
        while step >= opts.min_step && evals.get() < opts.max_evaluations {
            let mut improved = false;
            // coordinate 0 stays fixed: scaling is invariant to a common factor
            for i in 1..n {
                for dir in [1.0, -1.0] {
                    let mut trial = u.clone();
                    trial[i] += dir * step;
                    let ft = objective(&trial, &mut observe);
                    if ft < fu - 1e-14 {
                        u = trial;
                        fu = ft;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|(_, b)| fu < *b) {
            best = Some((u, fu));
        }
    }
    let (u, value) = best.expect("at least one start");
    if !value.is_finite() {
        return Err(Error::NotEssentiallySemiSectorial);
    }
    Ok(EssentialPhaseResult { value, scaling: u.iter().map(|x| x.exp()).collect(), exact: false })
}
