//! Real polynomials and matrix-valued rational terms `gain * N(s) / d(s)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::StateSpace;
use crate::error::{Error, Result};
use crate::linalg::{real_eigenvalues, CMatrix, RMatrix};

/// Real polynomial stored lowest power first.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    pub coef: Vec<f64>,
}

impl Poly {
    pub fn new(mut coef: Vec<f64>) -> Self {
        while coef.len() > 1 && coef[coef.len() - 1] == 0.0 {
            coef.pop();
        }
        if coef.is_empty() {
            coef.push(0.0);
        }
        Poly { coef }
    }

    /// From coefficients listed highest power first.
    pub fn from_high(high: &[f64]) -> Self {
        Poly::new(high.iter().rev().copied().collect())
    }

    pub fn to_high(&self) -> Vec<f64> {
        self.coef.iter().rev().copied().collect()
    }

    pub fn constant(c: f64) -> Self {
        Poly::new(vec![c])
    }

    /// Product of the given factors, each listed highest power first.
    pub fn from_factors(factors: &[Vec<f64>]) -> Self {
        factors.iter().fold(Poly::constant(1.0), |acc, f| acc.mul(&Poly::from_high(f)))
    }

    pub fn degree(&self) -> usize {
        self.coef.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coef.iter().all(|&c| c == 0.0)
    }

    pub fn leading(&self) -> f64 {
        self.coef[self.coef.len() - 1]
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coef.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * s + c)
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.coef.len() + other.coef.len() - 1];
        for (i, a) in self.coef.iter().enumerate() {
            for (j, b) in other.coef.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coef.len().max(other.coef.len());
        Poly::new((0..n).map(|i| self.coef.get(i).unwrap_or(&0.0) + other.coef.get(i).unwrap_or(&0.0)).collect())
    }

    pub fn scale(&self, k: f64) -> Poly {
        Poly::new(self.coef.iter().map(|c| c * k).collect())
    }

    pub fn derivative(&self) -> Poly {
        if self.coef.len() == 1 {
            return Poly::constant(0.0);
        }
        Poly::new(self.coef.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect())
    }

    pub fn pow(&self, k: usize) -> Poly {
        (0..k).fold(Poly::constant(1.0), |acc, _| acc.mul(self))
    }

    pub fn roots(&self) -> Result<Vec<Complex64>> {
        let r = self.degree();
        if r == 0 {
            return Ok(Vec::new());
        }
        let lead = self.leading();
        let comp = RMatrix::from_fn(r, r, |i, j| {
            if i == 0 {
                -self.coef[r - 1 - j] / lead
            } else if j + 1 == i {
                1.0
            } else {
                0.0
            }
        });
        real_eigenvalues(&comp)
    }
}

/// JSON form of a polynomial: a coefficient list (highest power first) or a
/// product of such lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolySpec {
    Coefficients(Vec<f64>),
    Factors { factors: Vec<Vec<f64>> },
}

impl PolySpec {
    pub fn to_poly(&self) -> Poly {
        match self {
            PolySpec::Coefficients(c) => Poly::from_high(c),
            PolySpec::Factors { factors } => Poly::from_factors(factors),
        }
    }
}

impl From<&Poly> for PolySpec {
    fn from(p: &Poly) -> Self {
        PolySpec::Coefficients(p.to_high())
    }
}

/// `gain * N(s) / d(s)` with an `m x m` polynomial numerator and scalar denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub gain: f64,
    pub den: Poly,
    pub num: Vec<Vec<Poly>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    #[serde(default = "one")]
    pub gain: f64,
    pub den: PolySpec,
    pub num: Vec<Vec<PolySpec>>,
}

fn one() -> f64 {
    1.0
}

/// Where the roots of a term's denominator lie.
#[derive(Debug, Clone, PartialEq)]
pub enum TermKind {
    /// Simple roots on the imaginary axis (listed with nonnegative imaginary part).
    Marginal(Vec<Complex64>),
    Stable,
}

impl Term {
    pub fn from_spec(spec: &TermSpec) -> Result<Self> {
        let m = spec.num.len();
        if m == 0 || spec.num.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidRational("numerator must be a nonempty square array".into()));
        }
        let t = Term {
            gain: spec.gain,
            den: spec.den.to_poly(),
            num: spec.num.iter().map(|row| row.iter().map(PolySpec::to_poly).collect()).collect(),
        };
        if t.den.is_zero() {
            return Err(Error::InvalidRational("zero denominator".into()));
        }
        if !t.gain.is_finite() || t.den.coef.iter().chain(t.num.iter().flatten().flat_map(|p| p.coef.iter())).any(|c| !c.is_finite())
        {
            return Err(Error::InvalidRational("non-finite coefficient".into()));
        }
        if t.num_degree() > t.den.degree() {
            return Err(Error::InvalidRational("improper term (numerator degree exceeds denominator)".into()));
        }
        Ok(t)
    }

    pub fn to_spec(&self) -> TermSpec {
        TermSpec {
            gain: self.gain,
            den: (&self.den).into(),
            num: self.num.iter().map(|row| row.iter().map(PolySpec::from).collect()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.num.len()
    }

    pub fn num_degree(&self) -> usize {
        self.num.iter().flatten().map(|p| if p.is_zero() { 0 } else { p.degree() }).max().unwrap_or(0)
    }

    pub fn eval(&self, s: Complex64) -> CMatrix {
        let d = self.den.eval(s);
        let m = self.dim();
        CMatrix::from_fn(m, m, |i, j| self.num[i][j].eval(s) * self.gain / d)
    }

    pub fn classify(&self) -> Result<TermKind> {
        let roots = self.den.roots()?;
        if roots.is_empty() {
            return Ok(TermKind::Stable);
        }
        let scale = roots.iter().fold(1.0f64, |a, r| a.max(r.norm()));
        let tol = 1e-9 * scale;
        if roots.iter().all(|r| r.re < -tol) {
            return Ok(TermKind::Stable);
        }
        if roots.iter().all(|r| r.re.abs() <= tol) {
            let mut axis: Vec<Complex64> = roots.iter().map(|r| Complex64::new(0.0, r.im)).collect();
            axis.sort_by(|a, b| a.im.total_cmp(&b.im));
            for w in axis.windows(2) {
                if (w[1].im - w[0].im).abs() <= 1e-6 * scale {
                    return Err(Error::InvalidRational(format!("repeated imaginary-axis root at {}j", w[0].im)));
                }
            }
            return Ok(TermKind::Marginal(axis.into_iter().filter(|r| r.im >= 0.0).collect()));
        }
        Err(Error::InvalidRational(
            "denominator mixes imaginary-axis and stable roots (or has unstable roots); split it into separate terms".into(),
        ))
    }

    /// Residue `gain * N(p) / d'(p)` at a simple root `p`.
    pub fn residue(&self, p: Complex64) -> CMatrix {
        let dp = self.den.derivative().eval(p);
        let m = self.dim();
        CMatrix::from_fn(m, m, |i, j| self.num[i][j].eval(p) * self.gain / dp)
    }

    /// Block controllable realization of a stable term.
    pub fn realize(&self) -> StateSpace {
        let m = self.dim();
        let r = self.den.degree();
        let lead = self.den.leading();
        // monic denominator a_0 + ... + a_{r-1} s^{r-1} + s^r
        let a: Vec<f64> = self.den.coef.iter().map(|c| c / lead).collect();
        let coeff = |i: usize, j: usize, k: usize| self.num[i][j].coef.get(k).copied().unwrap_or(0.0) * self.gain / lead;
        let d = RMatrix::from_fn(m, m, |i, j| coeff(i, j, r));
        if r == 0 {
            return StateSpace::new(RMatrix::zeros(0, 0), RMatrix::zeros(0, m), RMatrix::zeros(m, 0), d);
        }
        let n = r * m;
        let mut am = RMatrix::zeros(n, n);
        for blk in 0..r - 1 {
            for k in 0..m {
                am[(blk * m + k, (blk + 1) * m + k)] = 1.0;
            }
        }
        for blk in 0..r {
            for k in 0..m {
                am[((r - 1) * m + k, blk * m + k)] = -a[blk];
            }
        }
        let mut bm = RMatrix::zeros(n, m);
        for k in 0..m {
            bm[((r - 1) * m + k, k)] = 1.0;
        }
        // strictly proper part N~ = N - D d
        let cm = RMatrix::from_fn(m, n, |i, col| {
            let (blk, j) = (col / m, col % m);
            coeff(i, j, blk) - d[(i, j)] * a[blk]
        });
        StateSpace::new(am, bm, cm, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, frobenius};

    #[test]
    fn poly_basics() {
        let p = Poly::from_high(&[1.0, 3.0, 2.0]);
        assert_eq!(p.coef, vec![2.0, 3.0, 1.0]);
        assert_eq!(p.eval(c(-1.0, 0.0)), c(0.0, 0.0));
        assert_eq!(Poly::from_factors(&[vec![1.0, 1.0], vec![1.0, 2.0]]), p);
        assert_eq!(p.derivative().to_high(), vec![2.0, 3.0]);
        let mut r: Vec<f64> = p.roots().unwrap().iter().map(|z| z.re).collect();
        r.sort_by(f64::total_cmp);
        assert!((r[0] + 2.0).abs() < 1e-12 && (r[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_parsing() {
        let spec: TermSpec =
            serde_json::from_str(r#"{"gain": 3, "den": [1, 2], "num": [[[1, 1], [1, 4]], [[1, -1], {"factors": [[1, 3]]}]]}"#)
                .unwrap();
        let t = Term::from_spec(&spec).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.classify().unwrap(), TermKind::Stable);
        let v = t.eval(c(0.0, 0.0));
        assert!((v[(0, 1)] - c(6.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn marginal_residue() {
        // [8s-10, 12s-2; 14s-6, 2s-2] / (s^2 + 1) at s = j
        let spec: TermSpec = serde_json::from_str(
            r#"{"den": [1, 0, 1], "num": [[[8, -10], [12, -2]], [[14, -6], [2, -2]]]}"#,
        )
        .unwrap();
        let t = Term::from_spec(&spec).unwrap();
        let roots = match t.classify().unwrap() {
            TermKind::Marginal(r) => r,
            k => panic!("{k:?}"),
        };
        assert_eq!(roots.len(), 1);
        let m = t.residue(roots[0]);
        let want = CMatrix::from_row_slice(2, 2, &[c(4.0, 5.0), c(6.0, 1.0), c(7.0, 3.0), c(1.0, 1.0)]);
        assert!(frobenius(&(m - want)) < 1e-12);
    }

    #[test]
    fn mixed_roots_rejected() {
        let spec: TermSpec = serde_json::from_str(r#"{"den": {"factors": [[1, 0], [1, 1]]}, "num": [[[1]]]}"#).unwrap();
        assert!(matches!(Term::from_spec(&spec).unwrap().classify(), Err(Error::InvalidRational(_))));
        let improper: TermSpec = serde_json::from_str(r#"{"den": [1, 1], "num": [[[1, 0, 0]]]}"#).unwrap();
        assert!(Term::from_spec(&improper).is_err());
    }

    #[test]
    fn realization_matches_evaluation() {
        let spec: TermSpec = serde_json::from_str(
            r#"{"gain": 10, "den": {"factors": [[1, 4], [1, 2]]}, "num": [[{"factors": [[1, 8], [1, 3]]}, [1, 14]], [[1, -5], [1, 7]]]}"#,
        )
        .unwrap();
        let t = Term::from_spec(&spec).unwrap();
        let ss = t.realize();
        for s in [c(0.0, 0.0), c(0.0, 1.0), c(1.5, -2.0), c(0.0, 30.0)] {
            assert!(frobenius(&(ss.eval(s).unwrap() - t.eval(s))) < 1e-10);
        }
    }
}
