//! Dense univariate polynomials with ascending coefficients.

use nalgebra::DMatrix;
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            return Self { coeffs: vec![0.0] };
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Nominal degree (length - 1), including zero leading coefficients.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::new(vec![0.0]);
        }
        Poly::new(self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect())
    }

    /// Drops leading coefficients that are negligible relative to the largest.
    pub fn trimmed(&self, rel_tol: f64) -> Poly {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if scale == 0.0 {
            return Poly::new(vec![0.0]);
        }
        let mut n = self.coeffs.len();
        while n > 1 && self.coeffs[n - 1].abs() <= rel_tol * scale {
            n -= 1;
        }
        Poly::new(self.coeffs[..n].to_vec())
    }

    /// All complex roots as `(re, im)` pairs, from the eigenvalues of the
    /// balanced companion matrix. Leading coefficients below `1e-14` of the
    /// largest coefficient are treated as zero.
    pub fn roots(&self) -> Vec<(f64, f64)> {
        let p = self.trimmed(1e-14);
        let n = p.degree();
        match n {
            0 => Vec::new(),
            1 => vec![(-p.coeffs[0] / p.coeffs[1], 0.0)],
            _ => {
                let lead = p.coeffs[n];
                let mut m = DMatrix::<f64>::zeros(n, n);
                for i in 1..n {
                    m[(i, i - 1)] = 1.0;
                }
                for i in 0..n {
                    m[(i, n - 1)] = -p.coeffs[i] / lead;
                }
                balance(&mut m);
                m.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
            }
        }
    }

    /// Real roots (|imag| below `imag_tol`) that fall in `[lo, hi]`, sorted.
    pub fn real_roots_in(&self, lo: f64, hi: f64, imag_tol: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .roots()
            .into_iter()
            .filter(|&(re, im)| im.abs() < imag_tol && re >= lo && re <= hi)
            .map(|(re, _)| re)
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

// Parlett-Reinsch diagonal similarity scaling by powers of two.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let sqrdx = radix * radix;
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 100 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let mut g = r / radix;
            let mut f = 1.0;
            let s = c + r;
            while c < g {
                f *= radix;
                c *= sqrdx;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                let inv = 1.0 / f;
                for j in 0..n {
                    m[(i, j)] *= inv;
                }
                for j in 0..n {
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new(
            (0..n)
                .map(|i| self.coeffs.get(i).copied().unwrap_or(0.0) + rhs.coeffs.get(i).copied().unwrap_or(0.0))
                .collect(),
        )
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Poly::new(
            (0..n)
                .map(|i| self.coeffs.get(i).copied().unwrap_or(0.0) - rhs.coeffs.get(i).copied().unwrap_or(0.0))
                .collect(),
        )
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }
}
