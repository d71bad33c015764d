//! Phase responses along the indented imaginary axis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::TransferMatrix;
use crate::linalg::{c, singular_values};
use crate::phasecore::{classify_with, phases, PhaseOptions, PhaseProfile, SectorialityKind};

#[derive(Debug, Clone)]
pub struct PhaseResponseOptions {
    /// Indentation radius at frequency `w` is `eps_rel * (1 + w)`.
    pub eps_rel: f64,
    /// Base grid size (half logarithmic, half linear).
    pub points: usize,
    /// Upper end of the axis grid; default `100 * max(1, w_q)`.
    pub omega_max: Option<f64>,
    /// Fixed axis frequencies replacing the default grid.
    pub axis: Option<Vec<f64>>,
    pub adaptive: bool,
    /// Bisect between samples whose phases differ by more than this (radians).
    pub adapt_tol: f64,
    pub max_passes: usize,
    /// Samples per indentation semicircle.
    pub arc_points: usize,
    /// Add a large arc when the system vanishes at infinity.
    pub infinity_arc: bool,
    pub phase: PhaseOptions,
}

impl Default for PhaseResponseOptions {
    fn default() -> Self {
        PhaseResponseOptions {
            eps_rel: 1e-3,
            points: 400,
            omega_max: None,
            axis: None,
            adaptive: true,
            adapt_tol: 0.1,
            max_passes: 6,
            arc_points: 16,
            infinity_arc: true,
            phase: PhaseOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleKind {
    Axis,
    Indentation,
    InfinityArc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Segment {
    Axis,
    Arc { center: Complex64, radius: f64, theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub s: Complex64,
    /// Imaginary part of `s`.
    pub omega: f64,
    pub kind: SampleKind,
    /// Unwrapped phases; `None` where the sample is not semi-sectorial.
    pub profile: Option<PhaseProfile>,
    pub margin: f64,
    #[serde(skip)]
    segment: Option<Segment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub omega: f64,
    pub re: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResponse {
    pub samples: Vec<PhaseSample>,
    /// Worst classification along the path.
    pub kind: SectorialityKind,
    /// Largest phase over axis samples.
    pub sup: f64,
    /// Smallest phase over axis samples.
    pub inf: f64,
    pub violations: Vec<Violation>,
    /// Indentation centers (frequency) and radii.
    pub indentations: Vec<(f64, f64)>,
}

impl PhaseResponse {
    pub fn axis_samples(&self) -> impl Iterator<Item = &PhaseSample> {
        self.samples.iter().filter(|s| s.kind == SampleKind::Axis)
    }

    /// Axis frequencies with a profile.
    pub fn axis_frequencies(&self) -> Vec<f64> {
        self.axis_samples().filter(|s| s.profile.is_some()).map(|s| s.omega).collect()
    }

    /// Profile of the axis sample at frequency `w` (exact match within 1e-12 relative).
    pub fn at(&self, w: f64) -> Option<&PhaseProfile> {
        self.axis_samples()
            .find(|s| (s.omega - w).abs() <= 1e-12 * w.abs().max(1.0))
            .and_then(|s| s.profile.as_ref())
    }

    pub fn is_semi_sectorial(&self) -> bool {
        self.kind.is_semi_sectorial()
    }

    /// Largest jump of the phase center between consecutive samples.
    pub fn max_center_jump(&self) -> f64 {
        let centers: Vec<f64> = self.samples.iter().filter_map(|s| s.profile.as_ref().map(|p| p.center)).collect();
        centers.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }
}

/// Half logarithmic, half linear frequency grid on `[0, omega_max]`.
pub fn axis_grid(omega_max: f64, points: usize) -> Vec<f64> {
    let half = (points / 2).max(2);
    let lo = (1e-3 * omega_max.min(1.0)).max(1e-6);
    let mut g: Vec<f64> = (0..half).map(|i| omega_max * i as f64 / (half - 1) as f64).collect();
    let (l0, l1) = (lo.ln(), omega_max.ln());
    g.extend((0..half).map(|i| (l0 + (l1 - l0) * i as f64 / (half - 1) as f64).exp()));
    g.sort_by(f64::total_cmp);
    g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    g
}

fn worse(a: SectorialityKind, b: SectorialityKind) -> SectorialityKind {
    let rank = |k| match k {
        SectorialityKind::Sectorial => 0,
        SectorialityKind::QuasiSectorial => 1,
        SectorialityKind::SemiSectorial => 2,
        SectorialityKind::NotSemiSectorial => 3,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

struct Point {
    s: Complex64,
    kind: SampleKind,
    seg: Segment,
}

fn arc(center: Complex64, radius: f64, from: f64, to: f64, count: usize, kind: SampleKind) -> Vec<Point> {
    (0..count)
        .map(|i| {
            let theta = from + (to - from) * i as f64 / (count - 1) as f64;
            Point { s: center + Complex64::from_polar(radius, theta), kind, seg: Segment::Arc { center, radius, theta } }
        })
        .collect()
}

/// Phases of `G` along the imaginary axis, indented around persistent modes
/// and imaginary-axis zeros, unwrapped continuously from the DC end.
pub fn phase_response(g: &TransferMatrix, opts: &PhaseResponseOptions) -> PhaseResponse {
    let wq = g.modes.max_frequency();
    let omega_max = opts.omega_max.unwrap_or(100.0 * wq.max(1.0));
    let base = opts.axis.clone().unwrap_or_else(|| axis_grid(omega_max, opts.points));
    let radius = |w: f64| opts.eps_rel * (1.0 + w);

    let mut centers: Vec<f64> = g.modes.omega.clone();
    for w in axis_zeros(g, &base) {
        if !centers.iter().any(|&c0| (c0 - w).abs() <= radius(c0)) {
            centers.push(w);
        }
    }
    centers.sort_by(f64::total_cmp);

    let mut pts: Vec<Point> = Vec::new();
    let starts_indented = centers.first().is_some_and(|&w| w == 0.0);
    if starts_indented {
        pts.extend(arc(c(0.0, 0.0), radius(0.0), 0.0, FRAC_PI_2, opts.arc_points / 2 + 1, SampleKind::Indentation));
    }
    let mut axis: Vec<f64> =
        base.iter().copied().filter(|&w| !centers.iter().any(|&c0| (w - c0).abs() <= radius(c0))).collect();
    let vanishes_at_infinity = opts.infinity_arc && singular_values(&crate::linalg::to_complex(&g.at_infinity()))
        .first()
        .is_none_or(|&s| s <= 1e-12);
    let far = omega_max.max(1.0 / opts.eps_rel * wq.max(1.0));
    if vanishes_at_infinity && opts.axis.is_none() {
        let (l0, l1) = (omega_max.ln(), far.ln());
        axis.extend((1..=20).map(|i| (l0 + (l1 - l0) * i as f64 / 20.0).exp()));
    }
    let mut ci = centers.iter().copied().filter(|&w| w > 0.0).peekable();
    for w in axis {
        while let Some(&c0) = ci.peek() {
            if c0 < w {
                pts.extend(arc(c(0.0, c0), radius(c0), -FRAC_PI_2, FRAC_PI_2, opts.arc_points, SampleKind::Indentation));
                ci.next();
            } else {
                break;
            }
        }
        pts.push(Point { s: c(0.0, w), kind: SampleKind::Axis, seg: Segment::Axis });
    }
    for c0 in ci {
        pts.extend(arc(c(0.0, c0), radius(c0), -FRAC_PI_2, FRAC_PI_2, opts.arc_points, SampleKind::Indentation));
    }
    if vanishes_at_infinity {
        let top = pts.last().map(|p| p.s.im).unwrap_or(far).max(far);
        pts.extend(arc(c(0.0, 0.0), top, FRAC_PI_2, 0.0, opts.arc_points / 2 + 1, SampleKind::InfinityArc).into_iter().skip(1));
    }

    let mut samples: Vec<PhaseSample> = Vec::with_capacity(pts.len());
    let mut hint = None;
    for p in &pts {
        let sample = evaluate(g, p, hint, &opts.phase);
        if let Some(pr) = &sample.profile {
            hint = Some(pr.kind.rotation);
        }
        samples.push(sample);
    }

    if opts.adaptive {
        for _ in 0..opts.max_passes {
            unwrap(&mut samples);
            let mut inserted = false;
            let mut out = Vec::with_capacity(samples.len());
            for i in 0..samples.len() {
                out.push(samples[i].clone());
                if i + 1 == samples.len() {
                    break;
                }
                let (a, b) = (&samples[i], &samples[i + 1]);
                if !needs_split(a, b, opts.adapt_tol) {
                    continue;
                }
                if let Some(mid) = midpoint(a, b) {
                    let h = a.profile.as_ref().map(|p| p.kind.rotation);
                    out.push(evaluate(g, &mid, h, &opts.phase));
                    inserted = true;
                }
            }
            samples = out;
            if !inserted {
                break;
            }
        }
    }
    unwrap(&mut samples);

    let mut kind = SectorialityKind::Sectorial;
    let mut violations = Vec::new();
    // a center jump that survives refinement means no continuous phase branch exists
    let mut prev: Option<&PhaseSample> = None;
    for s in samples.iter().filter(|s| s.profile.is_some()) {
        if let Some(a) = prev {
            let (ca, cb) = (a.profile.as_ref().unwrap().center, s.profile.as_ref().unwrap().center);
            if (cb - ca).abs() > FRAC_PI_2 {
                kind = SectorialityKind::NotSemiSectorial;
                violations.push(Violation { omega: s.omega, re: s.s.re, margin: a.margin.min(s.margin) });
            }
        }
        prev = Some(s);
    }
    let (mut sup, mut inf) = (f64::NEG_INFINITY, f64::INFINITY);
    for s in &samples {
        match &s.profile {
            Some(p) => {
                kind = worse(kind, p.kind.kind);
                if s.kind == SampleKind::Axis && !p.phases.is_empty() {
                    sup = sup.max(p.max());
                    inf = inf.min(p.min());
                }
            }
            None => {
                kind = SectorialityKind::NotSemiSectorial;
                violations.push(Violation { omega: s.omega, re: s.s.re, margin: s.margin });
            }
        }
    }
    PhaseResponse {
        samples,
        kind,
        sup,
        inf,
        violations,
        indentations: centers.iter().map(|&w| (w, radius(w))).collect(),
    }
}

/// Phases of `g` at the points of another response's path, in order, with the
/// same hint chaining and continuous unwrapping.
pub fn phases_along(g: &TransferMatrix, path: &[PhaseSample], phase: &PhaseOptions) -> Vec<PhaseSample> {
    let mut hint = None;
    let mut out: Vec<PhaseSample> = path
        .iter()
        .map(|p| {
            let pt = Point { s: p.s, kind: p.kind, seg: p.segment.unwrap_or(Segment::Axis) };
            let sample = evaluate(g, &pt, hint, phase);
            if let Some(pr) = &sample.profile {
                hint = Some(pr.kind.rotation);
            }
            sample
        })
        .collect();
    unwrap(&mut out);
    out
}

fn evaluate(g: &TransferMatrix, p: &Point, hint: Option<f64>, phase: &PhaseOptions) -> PhaseSample {
    let opts = PhaseOptions { hint, ..*phase };
    let (profile, margin) = match g.eval(p.s) {
        Ok(v) => match classify_with(&v, &opts) {
            Ok(k) if k.kind.is_semi_sectorial() => match phases(&v, &opts) {
                Ok(pr) => (Some(pr), k.margin),
                Err(_) => (None, k.margin),
            },
            Ok(k) => (None, k.margin),
            Err(_) => (None, f64::NAN),
        },
        Err(_) => (None, f64::NAN),
    };
    PhaseSample { s: p.s, omega: p.s.im, kind: p.kind, profile, margin, segment: Some(p.seg) }
}

fn unwrap(samples: &mut [PhaseSample]) {
    let mut prev: Option<f64> = None;
    for s in samples.iter_mut() {
        if let Some(p) = s.profile.take() {
            let aligned = match prev {
                Some(c0) => p.aligned_to(c0),
                None => p.principal(),
            };
            prev = Some(aligned.center);
            s.profile = Some(aligned);
        }
    }
}

fn needs_split(a: &PhaseSample, b: &PhaseSample, tol: f64) -> bool {
    match (&a.profile, &b.profile) {
        (Some(p), Some(q)) => {
            (p.center - q.center).abs() > tol || (p.max() - q.max()).abs() > tol || (p.min() - q.min()).abs() > tol
        }
        _ => false,
    }
}

fn midpoint(a: &PhaseSample, b: &PhaseSample) -> Option<Point> {
    let (sa, sb) = (a.segment?, b.segment?);
    if (a.s - b.s).norm() <= 1e-9 * (1.0 + a.s.norm()) {
        return None;
    }
    match (sa, sb) {
        (Segment::Arc { center: c1, radius: r1, theta: t1 }, Segment::Arc { center: c2, theta: t2, .. })
            if c1 == c2 && a.kind == b.kind =>
        {
            let theta = 0.5 * (t1 + t2);
            Some(Point { s: c1 + Complex64::from_polar(r1, theta), kind: a.kind, seg: Segment::Arc { center: c1, radius: r1, theta } })
        }
        _ if a.s.re.abs() <= 1e-15 && b.s.re.abs() <= 1e-15 => {
            Some(Point { s: c(0.0, 0.5 * (a.s.im + b.s.im)), kind: SampleKind::Axis, seg: Segment::Axis })
        }
        _ => None,
    }
}

/// Local minima of `sigma_min / sigma_max` on the grid that fall below 1e-8.
fn axis_zeros(g: &TransferMatrix, grid: &[f64]) -> Vec<f64> {
    let ratio: Vec<f64> = grid
        .iter()
        .map(|&w| match g.eval(c(0.0, w)) {
            Ok(v) => {
                let sv = singular_values(&v);
                let hi = sv[0];
                if hi == 0.0 {
                    0.0
                } else {
                    sv[sv.len() - 1] / hi
                }
            }
            Err(_) => f64::INFINITY,
        })
        .collect();
    (0..grid.len())
        .filter(|&i| {
            ratio[i] < 1e-8
                && (i == 0 || ratio[i] <= ratio[i - 1])
                && (i + 1 == grid.len() || ratio[i] <= ratio[i + 1])
        })
        .map(|i| grid[i])
        .collect()
}
