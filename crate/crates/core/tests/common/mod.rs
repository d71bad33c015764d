//! Random instance generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use phasesync::linalg::{c, singular_values, CMatrix, RMatrix};
use phasesync::ltisys::{PersistentModes, StateSpace, TransferMatrix};
use phasesync::netgraph::WeightedDigraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

pub fn cnormal(r: &mut ChaCha8Rng) -> Complex64 {
    c(normal(r), normal(r))
}

pub fn cond(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    s[0] / s[s.len() - 1]
}

/// Random complex matrix with condition number at most `max_cond`.
pub fn conditioned(r: &mut ChaCha8Rng, n: usize, max_cond: f64) -> CMatrix {
    loop {
        let t = CMatrix::from_fn(n, n, |_, _| cnormal(r));
        if cond(&t) <= max_cond {
            return t;
        }
    }
}

pub fn real_conditioned(r: &mut ChaCha8Rng, n: usize, max_cond: f64) -> RMatrix {
    loop {
        let t = RMatrix::from_fn(n, n, |_, _| normal(r));
        if cond(&t.map(|x| c(x, 0.0))) <= max_cond {
            return t;
        }
    }
}

/// `n` phases with the given center, spread at most `spread`, endpoints included.
pub fn phase_set(r: &mut ChaCha8Rng, n: usize, center: f64, spread: f64) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| center + spread * (r.random::<f64>() - 0.5)).collect();
    if n >= 2 {
        p[0] = center + spread / 2.0;
        p[1] = center - spread / 2.0;
    }
    p.sort_by(|a, b| b.total_cmp(a));
    p
}

/// `T* diag(e^{j phi}, 0, ..) T` with `T` well conditioned: known phases, given rank.
pub fn with_phases(r: &mut ChaCha8Rng, phases: &[f64], n: usize) -> CMatrix {
    let t = conditioned(r, n, 20.0);
    let d = CMatrix::from_fn(n, n, |i, j| if i == j && i < phases.len() { Complex64::from_polar(1.0, phases[i]) } else { c(0.0, 0.0) });
    t.adjoint() * d * t
}

/// Phases of a nonsingular sectorial matrix from the eigenvalues of `(C*)^{-1} C`,
/// which are `e^{2j phi}`; angles are unwrapped around `center`.
pub fn phases_by_congruence(m: &CMatrix, center: f64) -> Vec<f64> {
    let x = m.adjoint().try_inverse().expect("nonsingular") * m;
    let mut p: Vec<f64> = phasesync::linalg::eigenvalues(&x)
        .unwrap()
        .iter()
        .map(|l| phasesync::linalg::angle_near(l.arg(), 2.0 * center) / 2.0)
        .collect();
    p.sort_by(|a, b| b.total_cmp(a));
    p
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Symmetric positive definite matrix with eigenvalues in [0.5, 3].
pub fn spd(r: &mut ChaCha8Rng, m: usize) -> RMatrix {
    let q = real_conditioned(r, m, 1e3).qr().q();
    let d = RMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |_, _| 0.5 + 2.5 * r.random::<f64>()));
    &q * d * q.transpose()
}

fn weight(r: &mut ChaCha8Rng) -> f64 {
    0.5 + 1.5 * r.random::<f64>()
}

/// Random directed tree out of node 0 plus `extra` random edges, with weights in [0.5, 2].
pub fn spanning_digraph(r: &mut ChaCha8Rng, n: usize, extra: usize) -> WeightedDigraph {
    let mut order: Vec<usize> = (1..n).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, r.random_range(0..=i));
    }
    let mut placed = vec![0];
    let mut set = BTreeSet::new();
    for v in order {
        let parent = placed[r.random_range(0..placed.len())];
        set.insert((parent, v));
        placed.push(v);
    }
    for _ in 0..extra {
        let (a, b) = (r.random_range(0..n), r.random_range(0..n));
        if a != b {
            set.insert((a, b));
        }
    }
    let edges: Vec<(usize, usize, f64)> = set.into_iter().map(|(a, b)| (a, b, weight(r))).collect();
    WeightedDigraph::directed(n, &edges).unwrap()
}

/// Random connected undirected graph: a random tree plus `extra` chords.
pub fn connected_undirected(r: &mut ChaCha8Rng, n: usize, extra: usize) -> WeightedDigraph {
    let mut set = BTreeSet::new();
    for v in 1..n {
        let u = r.random_range(0..v);
        set.insert((u, v));
    }
    for _ in 0..extra {
        let (a, b) = (r.random_range(0..n), r.random_range(0..n));
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    let pairs: Vec<(usize, usize, f64)> = set.into_iter().map(|(a, b)| (a, b, weight(r))).collect();
    WeightedDigraph::undirected(n, &pairs).unwrap()
}

/// `m x m` stable remainder `diag(d_i/(s + p_i))` plus a random feedthrough-free coupling.
pub fn stable_remainder(r: &mut ChaCha8Rng, m: usize, scale: f64) -> StateSpace {
    let a = RMatrix::from_fn(m, m, |i, j| if i == j { -(0.5 + 4.5 * r.random::<f64>()) } else { 0.0 });
    let b = RMatrix::identity(m, m);
    let cm = RMatrix::from_fn(m, m, |_, _| scale * normal(r));
    StateSpace::new(a, b, cm, RMatrix::zeros(m, m))
}

pub fn agent(omega: &[f64], residues: Vec<CMatrix>, remainder: StateSpace) -> TransferMatrix {
    let m = residues[0].nrows();
    TransferMatrix::new(PersistentModes::new(omega.to_vec(), m).unwrap(), residues, remainder).unwrap()
}

pub fn real_c(m: &RMatrix) -> CMatrix {
    m.map(|x| c(x, 0.0))
}

/// Distinct positive frequencies, at least a factor 1.5 apart.
pub fn frequencies(r: &mut ChaCha8Rng, q: usize) -> Vec<f64> {
    let mut w = 0.2 + r.random::<f64>();
    (0..q)
        .map(|_| {
            let out = w;
            w *= 1.5 + 2.0 * r.random::<f64>();
            out
        })
        .collect()
}

pub fn three_cycle() -> WeightedDigraph {
    WeightedDigraph::directed(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap()
}

pub const SIXTH: f64 = PI / 6.0;
