//! Extended-precision complex matrices.
//!
//! Monic orthogonal polynomials computed from a block Hankel moment sequence
//! suffer catastrophic cancellation: on (0,1) the degree-20 norms are about
//! 1e-29 times the moments they are assembled from. Closed-form moments are
//! therefore kept alongside the `f64` values at [`PREC`] bits, and the
//! orthogonalization runs at that precision before rounding back.

use rug::Float;

use crate::linalg::{c64, CMat};

/// Working precision in bits.
pub const PREC: u32 = 256;

/// Unit roundoff of [`PREC`].
pub fn unit_roundoff() -> f64 {
    2f64.powi(-(PREC as i32))
}

pub fn float(x: f64) -> Float {
    Float::with_val(PREC, x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HpComplex {
    pub re: Float,
    pub im: Float,
}

impl HpComplex {
    pub fn zero() -> Self {
        Self {
            re: float(0.0),
            im: float(0.0),
        }
    }

    pub fn real(re: Float) -> Self {
        Self { re, im: float(0.0) }
    }

    pub fn from_c64(z: num_complex::Complex64) -> Self {
        Self {
            re: float(z.re),
            im: float(z.im),
        }
    }

    pub fn to_c64(&self) -> num_complex::Complex64 {
        c64(self.re.to_f64(), self.im.to_f64())
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            re: Float::with_val(PREC, &self.re + &o.re),
            im: Float::with_val(PREC, &self.im + &o.im),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self {
            re: Float::with_val(PREC, &self.re - &o.re),
            im: Float::with_val(PREC, &self.im - &o.im),
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let rr = Float::with_val(PREC, &self.re * &o.re);
        let ii = Float::with_val(PREC, &self.im * &o.im);
        let ri = Float::with_val(PREC, &self.re * &o.im);
        let ir = Float::with_val(PREC, &self.im * &o.re);
        Self {
            re: rr - ii,
            im: ri + ir,
        }
    }

    pub fn scale(&self, s: &Float) -> Self {
        Self {
            re: Float::with_val(PREC, &self.re * s),
            im: Float::with_val(PREC, &self.im * s),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: Float::with_val(PREC, -&self.im),
        }
    }

    pub fn norm_sqr(&self) -> Float {
        let a = Float::with_val(PREC, self.re.square_ref());
        let b = Float::with_val(PREC, self.im.square_ref());
        a + b
    }

    pub fn div(&self, o: &Self) -> Self {
        let d = o.norm_sqr();
        let num = self.mul(&o.conj());
        Self {
            re: num.re / &d,
            im: num.im / &d,
        }
    }

    pub fn abs_f64(&self) -> f64 {
        self.norm_sqr().sqrt().to_f64()
    }
}

/// Dense row-major complex matrix at [`PREC`] bits.
#[derive(Debug, Clone, PartialEq)]
pub struct HpMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<HpComplex>,
}

impl HpMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![HpComplex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, HpComplex::real(float(1.0)));
        }
        m
    }

    pub fn from_cmat(a: &CMat) -> Self {
        let mut m = Self::zeros(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                m.set(i, j, HpComplex::from_c64(a[(i, j)]));
            }
        }
        m
    }

    pub fn to_cmat(&self) -> CMat {
        CMat::from_fn(self.rows, self.cols, |i, j| self.get(i, j).to_c64())
    }

    pub fn get(&self, i: usize, j: usize) -> &HpComplex {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: HpComplex) {
        self.data[i * self.cols + j] = v;
    }

    pub fn add(&self, o: &Self) -> Self {
        let data = self
            .data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| a.add(b))
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        let data = self
            .data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| a.sub(b))
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn scale(&self, s: &Float) -> Self {
        let data = self.data.iter().map(|a| a.scale(s)).collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(
            self.cols, o.rows,
            "dimension mismatch in extended-precision product"
        );
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for j in 0..o.cols {
                let mut acc = HpComplex::zero();
                for k in 0..self.cols {
                    acc = acc.add(&self.get(i, k).mul(o.get(k, j)));
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    /// Frobenius norm, rounded to `f64`.
    pub fn norm_f64(&self) -> f64 {
        let mut acc = float(0.0);
        for z in &self.data {
            acc += z.norm_sqr();
        }
        acc.sqrt().to_f64()
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.rows;
        if n != self.cols {
            return None;
        }
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| {
                a.get(i, col)
                    .norm_sqr()
                    .partial_cmp(&a.get(j, col).norm_sqr())
                    .unwrap()
            })?;
            if a.get(pivot, col).norm_sqr().is_zero() {
                return None;
            }
            if pivot != col {
                for j in 0..n {
                    a.data.swap(col * n + j, pivot * n + j);
                    inv.data.swap(col * n + j, pivot * n + j);
                }
            }
            let p = a.get(col, col).clone();
            for j in 0..n {
                let v = a.get(col, j).div(&p);
                a.set(col, j, v);
                let v = inv.get(col, j).div(&p);
                inv.set(col, j, v);
            }
            for i in 0..n {
                if i == col {
                    continue;
                }
                let f = a.get(i, col).clone();
                if f.norm_sqr().is_zero() {
                    continue;
                }
                for j in 0..n {
                    let v = a.get(i, j).sub(&f.mul(a.get(col, j)));
                    a.set(i, j, v);
                    let v = inv.get(i, j).sub(&f.mul(inv.get(col, j)));
                    inv.set(i, j, v);
                }
            }
        }
        Some(inv)
    }
}
