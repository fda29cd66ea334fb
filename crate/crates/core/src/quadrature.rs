//! Gaussian quadrature rules for the classical densities.
//!
//! Nodes come from the Golub–Welsch eigenvalue problem, are polished by
//! Newton steps on the orthonormal recurrence, and the weights are the
//! Christoffel numbers `1/Σ p̂_j(x_i)²`, which keeps them relatively accurate
//! even where they underflow towards zero in the tails.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::hp;

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Sums mirror-image node pairs first, so that an odd integrand over a
    /// symmetric rule gives exactly zero.
    pub fn integrate_paired(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.len();
        let mut acc = 0.0;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            acc += self.weights[i] * f(self.nodes[i]) + self.weights[j] * f(self.nodes[j]);
        }
        if n % 2 == 1 {
            acc += self.weights[n / 2] * f(self.nodes[n / 2]);
        }
        acc
    }
}

pub fn gamma(x: f64) -> f64 {
    hp::float(x).gamma().to_f64()
}

pub fn beta(a: f64, b: f64) -> f64 {
    let (a, b) = (hp::float(a), hp::float(b));
    let s = rug::Float::with_val(hp::PREC, &a + &b).gamma();
    (a.gamma() * b.gamma() / s).to_f64()
}

/// Builds a rule from monic recurrence coefficients `x p_k = p_{k+1} + a_k p_k + b_k p_{k−1}`
/// and the total mass `mu0`.
fn from_recurrence(n: usize, a: impl Fn(usize) -> f64, b: impl Fn(usize) -> f64, mu0: f64) -> Rule {
    if n == 0 {
        return Rule {
            nodes: vec![],
            weights: vec![],
        };
    }
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            a(i)
        } else if i + 1 == j {
            b(j).sqrt()
        } else if j + 1 == i {
            b(i).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jac)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    nodes.sort_by(f64::total_cmp);

    // Orthonormal values p̂_0..p̂_n at x and the derivative of p̂_n.
    let eval = |x: f64| {
        let mut vals = Vec::with_capacity(n + 1);
        let (mut p_prev, mut p) = (0.0, 1.0 / mu0.sqrt());
        let (mut d_prev, mut d) = (0.0, 0.0);
        vals.push(p);
        for k in 0..n {
            let sb_next = b(k + 1).sqrt();
            let sb = if k == 0 { 0.0 } else { b(k).sqrt() };
            let p_next = ((x - a(k)) * p - sb * p_prev) / sb_next;
            let d_next = (p + (x - a(k)) * d - sb * d_prev) / sb_next;
            p_prev = p;
            p = p_next;
            d_prev = d;
            d = d_next;
            vals.push(p);
        }
        (vals, d)
    };
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (vals, d) = eval(*x);
            if d == 0.0 || !d.is_finite() {
                break;
            }
            let step = vals[n] / d;
            if !step.is_finite() {
                break;
            }
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (vals, _) = eval(x);
            1.0 / vals[..n].iter().map(|v| v * v).sum::<f64>()
        })
        .collect();
    Rule { nodes, weights }
}

/// Gauss–Jacobi rule for `x^α (1−x)^β` on (0,1).
pub fn gauss_jacobi01(n: usize, alpha: f64, beta_: f64) -> Rule {
    // On (−1,1) the density is (1−t)^a (1+t)^b with t = 2x − 1, so a = β, b = α.
    let (pa, pb) = (beta_, alpha);
    let ab = pa + pb;
    let a = move |k: usize| {
        let t = if k == 0 {
            (pb - pa) / (ab + 2.0)
        } else {
            let s = 2.0 * k as f64 + ab;
            (pb * pb - pa * pa) / (s * (s + 2.0))
        };
        0.5 * (t + 1.0)
    };
    let b = move |k: usize| {
        let k_ = k as f64;
        let t = if k == 1 {
            4.0 * (1.0 + pa) * (1.0 + pb) / ((2.0 + ab).powi(2) * (3.0 + ab))
        } else {
            let s = 2.0 * k_ + ab;
            4.0 * k_ * (k_ + pa) * (k_ + pb) * (k_ + ab) / (s * s * (s + 1.0) * (s - 1.0))
        };
        0.25 * t
    };
    from_recurrence(n, a, b, beta(alpha + 1.0, beta_ + 1.0))
}

/// Gauss–Legendre rule on (0,1).
pub fn gauss_legendre01(n: usize) -> Rule {
    let mut r = gauss_jacobi01(n, 0.0, 0.0);
    symmetrize(&mut r, 0.5);
    r
}

/// Generalized Gauss–Laguerre rule for `x^α e^{−x}` on (0,∞).
pub fn gauss_laguerre(n: usize, alpha: f64) -> Rule {
    from_recurrence(
        n,
        move |k| 2.0 * k as f64 + alpha + 1.0,
        move |k| k as f64 * (k as f64 + alpha),
        gamma(alpha + 1.0),
    )
}

/// Gauss–Hermite rule for `e^{−x²}`.
pub fn gauss_hermite(n: usize) -> Rule {
    let mut r = from_recurrence(n, |_| 0.0, |k| 0.5 * k as f64, std::f64::consts::PI.sqrt());
    symmetrize(&mut r, 0.0);
    r
}

/// Gauss–Hermite rule for `e^{−t²/2}`, exactly symmetric about 0.
pub fn gauss_hermite_prob(n: usize) -> Rule {
    let mut r = from_recurrence(
        n,
        |_| 0.0,
        |k| k as f64,
        (2.0 * std::f64::consts::PI).sqrt(),
    );
    symmetrize(&mut r, 0.0);
    r
}

/// Forces exact mirror symmetry of nodes and weights about `center`.
fn symmetrize(r: &mut Rule, center: f64) {
    let n = r.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let half = 0.5 * ((center - r.nodes[i]) + (r.nodes[j] - center));
        let w = 0.5 * (r.weights[i] + r.weights[j]);
        r.nodes[i] = center - half;
        r.nodes[j] = center + half;
        r.weights[i] = w;
        r.weights[j] = w;
    }
    if n % 2 == 1 {
        r.nodes[n / 2] = center;
    }
}
