//! Small dense square matrices: products, powers by repeated squaring and a
//! general (non-symmetric) eigenvalue solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

/// Eigenvalue as a real/imaginary pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn modulus(&self) -> f64 {
        math::hypot(self.re, self.im)
    }
}

impl Matrix {
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, found: data.len() });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::LengthMismatch { expected: n, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1))
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[j * n + i] = self.get(i, j);
            }
        }
        Self { n, data: out }
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.n, other.n, "matrix dimension mismatch");
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += a * other.get(k, j);
                }
            }
        }
        Matrix { n, data: out }
    }

    /// `self^t` by repeated squaring; `t = 0` gives the identity.
    pub fn pow(&self, mut t: u32) -> Matrix {
        let mut result = Matrix::identity(self.n);
        let mut base = self.clone();
        while t > 0 {
            if t & 1 == 1 {
                result = result.mul(&base);
            }
            t >>= 1;
            if t > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Row vector times matrix, `v · M`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length mismatch");
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += vi * self.get(i, j);
            }
        }
        out
    }

    /// All eigenvalues, via reduction to upper Hessenberg form followed by
    /// the Francis double-shift QR iteration.
    pub fn eigenvalues(&self) -> Result<Vec<Eigenvalue>> {
        let mut h = self.clone();
        h.reduce_to_hessenberg();
        h.hessenberg_qr()
    }

    // Gaussian elimination with partial pivoting; similarity transform.
    fn reduce_to_hessenberg(&mut self) {
        let n = self.n;
        if n < 3 {
            return;
        }
        for m in 1..n - 1 {
            let mut x = 0.0;
            let mut piv = m;
            for j in m..n {
                if math::abs(self.get(j, m - 1)) > math::abs(x) {
                    x = self.get(j, m - 1);
                    piv = j;
                }
            }
            if piv != m {
                for j in (m - 1)..n {
                    let (a, b) = (self.get(piv, j), self.get(m, j));
                    self.set(piv, j, b);
                    self.set(m, j, a);
                }
                for j in 0..n {
                    let (a, b) = (self.get(j, piv), self.get(j, m));
                    self.set(j, piv, b);
                    self.set(j, m, a);
                }
            }
            if x != 0.0 {
                for i in (m + 1)..n {
                    let mut y = self.get(i, m - 1);
                    if y != 0.0 {
                        y /= x;
                        self.set(i, m - 1, 0.0);
                        for j in m..n {
                            let v = self.get(i, j) - y * self.get(m, j);
                            self.set(i, j, v);
                        }
                        for j in 0..n {
                            let v = self.get(j, m) + y * self.get(j, i);
                            self.set(j, m, v);
                        }
                    }
                }
            }
        }
        for i in 2..n {
            for j in 0..i - 1 {
                self.set(i, j, 0.0);
            }
        }
    }

    fn hessenberg_qr(mut self) -> Result<Vec<Eigenvalue>> {
        let n = self.n as isize;
        let mut wr = vec![0.0; self.n];
        let mut wi = vec![0.0; self.n];
        if n == 0 {
            return Ok(Vec::new());
        }
        let max_iter = 60usize;

        let a = |h: &Matrix, i: isize, j: isize| h.get(i as usize, j as usize);
        let put = |h: &mut Matrix, i: isize, j: isize, v: f64| h.set(i as usize, j as usize, v);
        let sign = |x: f64, s: f64| if s >= 0.0 { math::abs(x) } else { -math::abs(x) };

        let mut anorm = 0.0;
        for i in 0..n {
            for j in (i - 1).max(0)..n {
                anorm += math::abs(a(&self, i, j));
            }
        }

        let mut nn = n - 1;
        let mut t = 0.0;
        let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
        while nn >= 0 {
            let mut its = 0usize;
            loop {
                let mut l = nn;
                while l >= 1 {
                    let mut s = math::abs(a(&self, l - 1, l - 1)) + math::abs(a(&self, l, l));
                    if s == 0.0 {
                        s = anorm;
                    }
                    if math::abs(a(&self, l, l - 1)) + s == s {
                        put(&mut self, l, l - 1, 0.0);
                        break;
                    }
                    l -= 1;
                }
                let mut x = a(&self, nn, nn);
                if l == nn {
                    wr[nn as usize] = x + t;
                    wi[nn as usize] = 0.0;
                    nn -= 1;
                    break;
                }
                let mut y = a(&self, nn - 1, nn - 1);
                let mut w = a(&self, nn, nn - 1) * a(&self, nn - 1, nn);
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    let mut z = math::sqrt(math::abs(q));
                    x += t;
                    let (i0, i1) = ((nn - 1) as usize, nn as usize);
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        wr[i0] = x + z;
                        wr[i1] = x + z;
                        if z != 0.0 {
                            wr[i1] = x - w / z;
                        }
                        wi[i0] = 0.0;
                        wi[i1] = 0.0;
                    } else {
                        wr[i0] = x + p;
                        wr[i1] = x + p;
                        wi[i0] = -z;
                        wi[i1] = z;
                    }
                    nn -= 2;
                    break;
                }
                if its == max_iter {
                    return Err(Error::NoConvergence { iterations: max_iter });
                }
                if its == 10 || its == 20 {
                    // exceptional shift
                    t += x;
                    for i in 0..=nn {
                        let v = a(&self, i, i) - x;
                        put(&mut self, i, i, v);
                    }
                    let s = math::abs(a(&self, nn, nn - 1)) + math::abs(a(&self, nn - 1, nn - 2));
                    x = 0.75 * s;
                    y = x;
                    w = -0.4375 * s * s;
                }
                its += 1;

                let mut m = nn - 2;
                let mut z;
                while m >= l {
                    z = a(&self, m, m);
                    r = x - z;
                    let s = y - z;
                    p = (r * s - w) / a(&self, m + 1, m) + a(&self, m, m + 1);
                    q = a(&self, m + 1, m + 1) - z - r - s;
                    r = a(&self, m + 2, m + 1);
                    let s = math::abs(p) + math::abs(q) + math::abs(r);
                    p /= s;
                    q /= s;
                    r /= s;
                    if m == l {
                        break;
                    }
                    let u = math::abs(a(&self, m, m - 1)) * (math::abs(q) + math::abs(r));
                    let v = math::abs(p)
                        * (math::abs(a(&self, m - 1, m - 1)) + math::abs(z) + math::abs(a(&self, m + 1, m + 1)));
                    if u + v == v {
                        break;
                    }
                    m -= 1;
                }
                for i in (m + 2)..=nn {
                    put(&mut self, i, i - 2, 0.0);
                    if i != m + 2 {
                        put(&mut self, i, i - 3, 0.0);
                    }
                }
                let mut k = m;
                while k < nn {
                    if k != m {
                        p = a(&self, k, k - 1);
                        q = a(&self, k + 1, k - 1);
                        r = 0.0;
                        if k != nn - 1 {
                            r = a(&self, k + 2, k - 1);
                        }
                        x = math::abs(p) + math::abs(q) + math::abs(r);
                        if x != 0.0 {
                            p /= x;
                            q /= x;
                            r /= x;
                        }
                    }
                    let s = sign(math::sqrt(p * p + q * q + r * r), p);
                    if s != 0.0 {
                        if k == m {
                            if l != m {
                                let v = -a(&self, k, k - 1);
                                put(&mut self, k, k - 1, v);
                            }
                        } else {
                            put(&mut self, k, k - 1, -s * x);
                        }
                        p += s;
                        x = p / s;
                        y = q / s;
                        z = r / s;
                        q /= p;
                        r /= p;
                        for j in k..=nn {
                            p = a(&self, k, j) + q * a(&self, k + 1, j);
                            if k != nn - 1 {
                                p += r * a(&self, k + 2, j);
                                let v = a(&self, k + 2, j) - p * z;
                                put(&mut self, k + 2, j, v);
                            }
                            let v = a(&self, k + 1, j) - p * y;
                            put(&mut self, k + 1, j, v);
                            let v = a(&self, k, j) - p * x;
                            put(&mut self, k, j, v);
                        }
                        let mmin = if nn < k + 3 { nn } else { k + 3 };
                        for i in l..=mmin {
                            p = x * a(&self, i, k) + y * a(&self, i, k + 1);
                            if k != nn - 1 {
                                p += z * a(&self, i, k + 2);
                                let v = a(&self, i, k + 2) - p * r;
                                put(&mut self, i, k + 2, v);
                            }
                            let v = a(&self, i, k + 1) - p * q;
                            put(&mut self, i, k + 1, v);
                            let v = a(&self, i, k) - p;
                            put(&mut self, i, k, v);
                        }
                    }
                    k += 1;
                }
                if l >= nn - 1 {
                    break;
                }
            }
        }
        Ok(wr.into_iter().zip(wi).map(|(re, im)| Eigenvalue { re, im }).collect())
    }
}
