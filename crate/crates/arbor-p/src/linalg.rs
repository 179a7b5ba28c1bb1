//! Small exact linear algebra shared by the tree and quaternion modules:
//! 2x2 rational matrices, integer HNF for rank-4 lattices, and shell
//! enumeration of positive definite integral quadratic forms.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub type Rat = BigRational;

pub fn rat_int(n: i64) -> Rat {
    BigRational::from_integer(BigInt::from(n))
}

pub fn rat(n: i64, d: i64) -> Rat {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// v_p of a nonzero rational.
pub fn rat_valuation(x: &Rat, p: u64) -> Option<i64> {
    if x.is_zero() {
        return None;
    }
    let p_big = BigInt::from(p);
    let mut v = 0i64;
    let mut n = x.numer().clone();
    while (&n % &p_big).is_zero() {
        n /= &p_big;
        v += 1;
    }
    let mut d = x.denom().clone();
    while (&d % &p_big).is_zero() {
        d /= &p_big;
        v -= 1;
    }
    Some(v)
}

/// 2x2 matrix over Q, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat2 {
    pub a: Rat,
    pub b: Rat,
    pub c: Rat,
    pub d: Rat,
}

impl Mat2 {
    pub fn new(a: Rat, b: Rat, c: Rat, d: Rat) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn from_i64(a: i64, b: i64, c: i64, d: i64) -> Self {
        Mat2::new(rat_int(a), rat_int(b), rat_int(c), rat_int(d))
    }

    pub fn identity() -> Self {
        Mat2::from_i64(1, 0, 0, 1)
    }

    pub fn det(&self) -> Rat {
        &self.a * &self.d - &self.b * &self.c
    }

    pub fn trace(&self) -> Rat {
        &self.a + &self.d
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            &self.a * &o.a + &self.b * &o.c,
            &self.a * &o.b + &self.b * &o.d,
            &self.c * &o.a + &self.d * &o.c,
            &self.c * &o.b + &self.d * &o.d,
        )
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2::new(&self.a + &o.a, &self.b + &o.b, &self.c + &o.c, &self.d + &o.d)
    }

    pub fn scale(&self, s: &Rat) -> Mat2 {
        Mat2::new(&self.a * s, &self.b * s, &self.c * s, &self.d * s)
    }

    pub fn inv(&self) -> Option<Mat2> {
        let det = self.det();
        if det.is_zero() {
            return None;
        }
        Some(Mat2::new(
            &self.d / &det,
            -&self.b / &det,
            -&self.c / &det,
            &self.a / &det,
        ))
    }

    pub fn apply(&self, x: &Rat, y: &Rat) -> (Rat, Rat) {
        (&self.a * x + &self.b * y, &self.c * x + &self.d * y)
    }
}

/// Hermite normal form of the row span of an integer matrix.
///
/// Returns a row basis (rank rows) of the lattice generated by the rows.
pub fn hnf_rows(rows: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    if rows.is_empty() {
        return vec![];
    }
    let ncols = rows[0].len();
    let mut work: Vec<Vec<BigInt>> = rows.to_vec();
    let mut pivot_row = 0usize;
    for col in 0..ncols {
        // Find a row with nonzero entry in this column at or below pivot_row.
        loop {
            let mut best: Option<usize> = None;
            for r in pivot_row..work.len() {
                if !work[r][col].is_zero() {
                    best = match best {
                        None => Some(r),
                        Some(b) => {
                            if work[r][col].abs() < work[b][col].abs() {
                                Some(r)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
            }
            let Some(b) = best else { break };
            work.swap(pivot_row, b);
            if work[pivot_row][col].is_negative() {
                for x in work[pivot_row].iter_mut() {
                    *x = -x.clone();
                }
            }
            let mut done = true;
            let pivot_val = work[pivot_row][col].clone();
            for r in 0..work.len() {
                if r == pivot_row || work[r][col].is_zero() {
                    continue;
                }
                let q = num_integer::Integer::div_floor(&work[r][col], &pivot_val);
                if !q.is_zero() {
                    for c in 0..ncols {
                        let sub = &q * &work[pivot_row][c];
                        work[r][c] -= sub;
                    }
                }
                if !work[r][col].is_zero() && r > pivot_row {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
        if pivot_row < work.len() && !work[pivot_row][col].is_zero() {
            pivot_row += 1;
        }
        if pivot_row == work.len() {
            break;
        }
    }
    work.truncate(pivot_row);
    work.retain(|r| r.iter().any(|x| !x.is_zero()));
    work
}

/// Integer square root of a nonnegative i128, floor.
pub fn isqrt_i128(n: i128) -> i128 {
    assert!(n >= 0);
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as i128;
    while x > 0 && x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Exact square root of an i128 if it is a perfect square.
pub fn perfect_sqrt_i128(n: i128) -> Option<i128> {
    if n < 0 {
        return None;
    }
    let r = isqrt_i128(n);
    if r * r == n {
        Some(r)
    } else {
        None
    }
}

/// All integer vectors x with x^T G x = target, for G positive definite
/// symmetric (i128 entries, dimension 3 or 4). Enumerates the shell exactly:
/// outer coordinates range over a box from the Cholesky bound, the innermost
/// coordinate is solved by the quadratic formula. Returns each vector once
/// (both x and -x appear).
pub fn shell_vectors(gram: &[Vec<i128>], target: i128) -> Vec<Vec<i128>> {
    let n = gram.len();
    assert!(gram.iter().all(|r| r.len() == n));
    if target < 0 {
        return vec![];
    }
    if target == 0 {
        return vec![vec![0; n]];
    }
    // Floating Cholesky for search bounds only; membership checks are exact.
    let mut l = vec![vec![0f64; n]; n];
    let mut diag = vec![0f64; n];
    let mut q = vec![vec![0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            q[i][j] = gram[i][j] as f64;
        }
    }
    // Decompose Q = L D L^T with unit lower-triangular L.
    for j in 0..n {
        let mut d = q[j][j];
        for k in 0..j {
            d -= diag[k] * l[j][k] * l[j][k];
        }
        diag[j] = d;
        assert!(d > 0.0, "form must be positive definite");
        for i in (j + 1)..n {
            let mut v = q[i][j];
            for k in 0..j {
                v -= diag[k] * l[i][k] * l[j][k];
            }
            l[i][j] = v / d;
        }
    }
    let mut out = Vec::new();
    let mut x = vec![0i128; n];
    // Depth-first over coordinates n-1 .. 1; coordinate 0 solved exactly.
    fn eval(gram: &[Vec<i128>], x: &[i128]) -> i128 {
        let n = gram.len();
        let mut s = 0i128;
        for i in 0..n {
            for j in 0..n {
                s += gram[i][j] * x[i] * x[j];
            }
        }
        s
    }
    fn recurse(
        gram: &[Vec<i128>],
        l: &Vec<Vec<f64>>,
        diag: &Vec<f64>,
        target: i128,
        level: usize,
        x: &mut Vec<i128>,
        out: &mut Vec<Vec<i128>>,
    ) {
        let n = gram.len();
        if level == 0 {
            // Solve g00 x0^2 + 2 (sum_j g0j xj) x0 + rest = target exactly.
            let a = gram[0][0];
            let mut b = 0i128;
            for j in 1..n {
                b += gram[0][j] * x[j];
            }
            b *= 2;
            let mut c = -target;
            for i in 1..n {
                for j in 1..n {
                    c += gram[i][j] * x[i] * x[j];
                }
            }
            let disc = b * b - 4 * a * c;
            if let Some(s) = perfect_sqrt_i128(disc) {
                for num in [-b + s, -b - s] {
                    if num % (2 * a) == 0 {
                        x[0] = num / (2 * a);
                        debug_assert_eq!(eval(gram, x), target);
                        out.push(x.clone());
                        if s == 0 {
                            break;
                        }
                    }
                }
            }
            x[0] = 0;
            return;
        }
        // Bound: diag[level] * (x_level + sum_{j>level} l[j][level] x_j)^2 <= target - (outer partial).
        // Conservative box: |x_level + center| <= sqrt(target / diag[level]) + slack.
        let mut center = 0f64;
        for j in (level + 1)..n {
            center += l[j][level] * x[j] as f64;
        }
        // Remaining budget from coordinates above this level.
        let mut outer = 0f64;
        for i in (level + 1)..n {
            let mut t = x[i] as f64;
            for j in (i + 1)..n {
                t += l[j][i] * x[j] as f64;
            }
            outer += diag[i] * t * t;
        }
        let budget = target as f64 - outer;
        if budget < -0.5 {
            return;
        }
        let radius = (budget.max(0.0) / diag[level]).sqrt() + 1.0;
        let lo = (-center - radius).floor() as i128;
        let hi = (-center + radius).ceil() as i128;
        for v in lo..=hi {
            x[level] = v;
            recurse(gram, l, diag, target, level - 1, x, out);
        }
        x[level] = 0;
    }
    recurse(gram, &l, &diag, target, n - 1, &mut x, &mut out);
    out.sort();
    out.dedup();
    out
}

/// Like `shell_vectors` but on an affine slice x = offset + M z with M an
/// m-row integer basis and z ranging over Z^m; returns the x vectors with
/// x^T G x = target.
///
/// Float arithmetic is used only for search bounds (with slack); membership
/// is decided by exact integer evaluation at the innermost level.
pub fn shell_vectors_affine(
    gram_full: &[Vec<i128>],
    offset: &[i128],
    basis: &[Vec<i128>],
    target: i128,
) -> Vec<Vec<i128>> {
    let n = gram_full.len();
    let m = basis.len();
    assert!(basis.iter().all(|b| b.len() == n));
    assert_eq!(offset.len(), n);
    // Induced form on z: Q(z) = z^T G z + 2 L.z + C with
    // G = M^T gram M, L = M^T gram offset, C = offset^T gram offset.
    let mut g = vec![vec![0i128; m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut s = 0i128;
            for a in 0..n {
                for b in 0..n {
                    s += basis[i][a] * gram_full[a][b] * basis[j][b];
                }
            }
            g[i][j] = s;
        }
    }
    let mut lin = vec![0i128; m];
    for i in 0..m {
        let mut s = 0i128;
        for a in 0..n {
            for b in 0..n {
                s += basis[i][a] * gram_full[a][b] * offset[b];
            }
        }
        lin[i] = s;
    }
    let mut cst = 0i128;
    for a in 0..n {
        for b in 0..n {
            cst += offset[a] * gram_full[a][b] * offset[b];
        }
    }
    // Real center c = -G^-1 L by Gaussian elimination.
    let mut center = vec![0f64; m];
    {
        let mut a = vec![vec![0f64; m + 1]; m];
        for i in 0..m {
            for j in 0..m {
                a[i][j] = g[i][j] as f64;
            }
            a[i][m] = -(lin[i] as f64);
        }
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            let d = a[col][col];
            assert!(d.abs() > 1e-9, "form must be positive definite");
            for r in 0..m {
                if r != col {
                    let f = a[r][col] / d;
                    for c in col..=m {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        for i in 0..m {
            center[i] = a[i][m] / a[i][i];
        }
    }
    // Q(z) = (z - c)^T G (z - c) + (C + L.c): homogeneous budget.
    let mut min_val = cst as f64;
    for i in 0..m {
        min_val += lin[i] as f64 * center[i];
    }
    let budget = target as f64 - min_val;
    if budget < -2.0 {
        return vec![];
    }
    // LDL of G for the homogeneous part.
    let mut l = vec![vec![0f64; m]; m];
    let mut diag = vec![0f64; m];
    for j in 0..m {
        let mut d = g[j][j] as f64;
        for k in 0..j {
            d -= diag[k] * l[j][k] * l[j][k];
        }
        diag[j] = d;
        assert!(d > 0.0, "form must be positive definite");
        for i in (j + 1)..m {
            let mut v = g[i][j] as f64;
            for k in 0..j {
                v -= diag[k] * l[i][k] * l[j][k];
            }
            l[i][j] = v / d;
        }
    }
    fn eval_affine(g: &[Vec<i128>], lin: &[i128], cst: i128, z: &[i128]) -> i128 {
        let m = g.len();
        let mut s = cst;
        for i in 0..m {
            s += 2 * lin[i] * z[i];
            for j in 0..m {
                s += g[i][j] * z[i] * z[j];
            }
        }
        s
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        g: &[Vec<i128>],
        lin: &[i128],
        cst: i128,
        center: &[f64],
        l: &[Vec<f64>],
        diag: &[f64],
        target: i128,
        budget: f64,
        used: f64,
        level: usize,
        z: &mut Vec<i128>,
        out: &mut Vec<Vec<i128>>,
    ) {
        if level == 0 {
            // Exact solve of the integer quadratic in z_0.
            let a = g[0][0];
            let mut b = 2 * lin[0];
            for j in 1..g.len() {
                b += 2 * g[0][j] * z[j];
            }
            let mut c = cst - target;
            for i in 1..g.len() {
                c += 2 * lin[i] * z[i];
                for j in 1..g.len() {
                    c += g[i][j] * z[i] * z[j];
                }
            }
            let disc = b * b - 4 * a * c;
            if let Some(s) = perfect_sqrt_i128(disc) {
                for num in [-b + s, -b - s] {
                    if num.rem_euclid(2 * a) == 0 {
                        z[0] = num.div_euclid(2 * a);
                        debug_assert_eq!(eval_affine(g, lin, cst, z), target);
                        out.push(z.clone());
                        if s == 0 {
                            break;
                        }
                    }
                }
            }
            z[0] = 0;
            return;
        }
        // w_level = (z_level - c_level) + sum_{j>level} l[j][level] (z_j - c_j),
        // contributing diag[level] * w^2 to the homogeneous part.
        let mut tail = 0f64;
        for j in (level + 1)..g.len() {
            tail += l[j][level] * (z[j] as f64 - center[j]);
        }
        let rem = budget - used;
        if rem < -2.0 {
            z[level] = 0;
            return;
        }
        let radius = (rem.max(0.0) / diag[level]).sqrt() + 1.0;
        let mid = center[level] - tail;
        let lo = (mid - radius).floor() as i128;
        let hi = (mid + radius).ceil() as i128;
        for v in lo..=hi {
            z[level] = v;
            let w = (v as f64 - center[level]) + tail;
            let used2 = used + diag[level] * w * w;
            recurse(g, lin, cst, center, l, diag, target, budget, used2, level - 1, z, out);
        }
        z[level] = 0;
    }
    let mut z = vec![0i128; m];
    let mut results = Vec::new();
    recurse(&g, &lin, cst, &center, &l, &diag, target, budget + 2.0, 0.0, m - 1, &mut z, &mut results);
    let mut xs: Vec<Vec<i128>> = results
        .iter()
        .map(|z| {
            let mut x = offset.to_vec();
            for i in 0..m {
                for a in 0..n {
                    x[a] += z[i] * basis[i][a];
                }
            }
            x
        })
        .collect();
    xs.sort();
    xs.dedup();
    xs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hnf_of_redundant_generators() {
        let rows = vec![
            vec![BigInt::from(2), BigInt::from(0)],
            vec![BigInt::from(0), BigInt::from(3)],
            vec![BigInt::from(2), BigInt::from(3)],
        ];
        let h = hnf_rows(&rows);
        assert_eq!(h.len(), 2);
        // Lattice is 2Z x 3Z.
        assert_eq!(h[0], vec![BigInt::from(2), BigInt::from(0)]);
        assert_eq!(h[1], vec![BigInt::from(0), BigInt::from(3)]);
    }

    #[test]
    fn shell_on_identity_form() {
        // x^2 + y^2 + z^2 + w^2 = 4: vectors are permutations of
        // (+-2,0,0,0) [8] and (+-1,+-1,+-1,+-1) [16].
        let gram = vec![
            vec![1, 0, 0, 0],
            vec![0, 1, 0, 0],
            vec![0, 0, 1, 0],
            vec![0, 0, 0, 1],
        ];
        let shell = shell_vectors(&gram, 4);
        assert_eq!(shell.len(), 24);
    }

    #[test]
    fn shell_matches_naive_box() {
        let gram = vec![vec![2, 1, 0], vec![1, 3, 1], vec![0, 1, 5]];
        for target in 1..40i128 {
            let fast = shell_vectors(&gram, target);
            let mut naive = Vec::new();
            for x in -12i128..=12 {
                for y in -12i128..=12 {
                    for z in -12i128..=12 {
                        let v = vec![x, y, z];
                        let mut s = 0;
                        for i in 0..3 {
                            for j in 0..3 {
                                s += gram[i][j] * v[i] * v[j];
                            }
                        }
                        if s == target {
                            naive.push(v);
                        }
                    }
                }
            }
            naive.sort();
            assert_eq!(fast, naive, "target {}", target);
        }
    }

    #[test]
    fn affine_shell_matches_naive() {
        let gram = vec![vec![2, 0, 0], vec![0, 3, 0], vec![0, 0, 7]];
        let offset = vec![1, 1, 1];
        let basis = vec![vec![2, 0, 0], vec![0, 1, 1]];
        for target in 1..200i128 {
            let fast = shell_vectors_affine(&gram, &offset, &basis, target);
            let mut naive = Vec::new();
            for a in -20i128..=20 {
                for b in -20i128..=20 {
                    let x = vec![1 + 2 * a, 1 + b, 1 + b];
                    let mut s = 0;
                    for i in 0..3 {
                        for j in 0..3 {
                            s += gram[i][j] * x[i] * x[j];
                        }
                    }
                    if s == target {
                        naive.push(x);
                    }
                }
            }
            naive.sort();
            assert_eq!(fast, naive, "target {}", target);
        }
    }

    #[test]
    fn mat2_inverse() {
        let m = Mat2::from_i64(2, 1, 7, 4);
        let inv = m.inv().unwrap();
        assert_eq!(m.mul(&inv), Mat2::identity());
    }
}
