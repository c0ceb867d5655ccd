//! Tridiagonal matrices from 1D linear-element assembly, with a direct
//! LDL^T factorization and a Jacobi-preconditioned conjugate gradient.

/// Square tridiagonal matrix. `lower[i]` is A[i+1][i] and `upper[i]` is A[i][i+1].
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self { diag: vec![0.0; n], lower: vec![0.0; n.saturating_sub(1)], upper: vec![0.0; n.saturating_sub(1)] }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Adds a 2x2 element matrix coupling rows `i` and `i + 1`.
    pub fn add_element(&mut self, i: usize, e: [[f64; 2]; 2]) {
        self.diag[i] += e[0][0];
        self.upper[i] += e[0][1];
        self.lower[i] += e[1][0];
        self.diag[i + 1] += e[1][1];
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.upper[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// Largest |A[i][j] - A[j][i]|.
    pub fn symmetry_defect(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| (l - u).abs()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = self.diag[i];
            if i + 1 < n {
                a[i][i + 1] = self.upper[i];
                a[i + 1][i] = self.lower[i];
            }
        }
        a
    }
}

/// LDL^T factors of a symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl LdlFactor {
    /// Fails with the offending row and pivot if the matrix is not positive definite.
    pub fn new(a: &Tridiagonal) -> std::result::Result<Self, (usize, f64)> {
        let n = a.dim();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = a.diag[0];
        if !(d[0] > 0.0) {
            return Err((0, d[0]));
        }
        for i in 0..n - 1 {
            l[i] = a.lower[i] / d[i];
            d[i + 1] = a.diag[i + 1] - l[i] * a.upper[i];
            if !(d[i + 1] > 0.0) {
                return Err((i + 1, d[i + 1]));
            }
        }
        Ok(Self { d, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        let mut x = b.to_vec();
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient on `a x = b`, starting from `x`.
pub fn pcg(a: &Tridiagonal, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> CgReport {
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgReport { iterations: 0, relative_residual: 0.0, converged: true };
    }
    let ax = a.matvec(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let inv_diag: Vec<f64> = a.diag.iter().map(|d| 1.0 / d).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > rel_tol && it < max_iter {
        let ap = a.matvec(&p);
        let alpha = rz / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..z.len() {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        res = dot(&r, &r).sqrt() / b_norm;
    }
    CgReport { iterations: it, relative_residual: res, converged: res <= rel_tol }
}
