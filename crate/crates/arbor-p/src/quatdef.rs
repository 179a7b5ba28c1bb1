//! Definite quaternion algebras ramified at one finite prime q: exact
//! algebra and order arithmetic, maximal orders, unit groups, the
//! orientation at q, ideal classes, and enumeration of oriented optimal
//! embeddings of imaginary quadratic orders.
//!
//! Elements live on the basis (1, i, j, ij) with i^2 = a, j^2 = b,
//! ij = -ji; orders are rank-4 lattices given by rational row bases. The
//! reduced discriminant is computed from the trace form, ideal classes by
//! a breadth-first walk over right ideals of p-power norm with exact
//! principality tests (shell enumeration at the ideal norm).

use crate::linalg::{hnf_rows, shell_vectors, shell_vectors_affine, Rat};
use crate::quadforms::{conductor, splitting_type, SplittingType};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuatError {
    #[error("discriminant {d} must be coprime to q*p = {qp}")]
    BadGcd { d: i128, qp: u64 },
    #[error("p = {p} must be inert in the order of discriminant {d}")]
    NotInert { d: i128, p: u64 },
}

/// The Hilbert pair (a, b) with i^2 = a, j^2 = b, ij = -ji.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QuaternionAlgebra {
    pub a: i64,
    pub b: i64,
}

/// Quaternion with rational coordinates on (1, i, j, ij).
#[derive(Debug, Clone, PartialEq)]
pub struct QuatElement {
    pub coords: [Rat; 4],
}

impl QuatElement {
    pub fn new(coords: [Rat; 4]) -> Self {
        QuatElement { coords }
    }

    pub fn from_i64(t: i64, x: i64, y: i64, z: i64) -> Self {
        QuatElement::new([
            Rat::from_integer(BigInt::from(t)),
            Rat::from_integer(BigInt::from(x)),
            Rat::from_integer(BigInt::from(y)),
            Rat::from_integer(BigInt::from(z)),
        ])
    }

    pub fn one() -> Self {
        QuatElement::from_i64(1, 0, 0, 0)
    }

    pub fn zero() -> Self {
        QuatElement::from_i64(0, 0, 0, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    pub fn add(&self, o: &QuatElement) -> QuatElement {
        QuatElement::new(std::array::from_fn(|k| &self.coords[k] + &o.coords[k]))
    }

    pub fn sub(&self, o: &QuatElement) -> QuatElement {
        QuatElement::new(std::array::from_fn(|k| &self.coords[k] - &o.coords[k]))
    }

    pub fn scale(&self, s: &Rat) -> QuatElement {
        QuatElement::new(std::array::from_fn(|k| &self.coords[k] * s))
    }

    pub fn mul(&self, o: &QuatElement, alg: &QuaternionAlgebra) -> QuatElement {
        let a = Rat::from_integer(BigInt::from(alg.a));
        let b = Rat::from_integer(BigInt::from(alg.b));
        let [t1, x1, y1, z1] = &self.coords;
        let [t2, x2, y2, z2] = &o.coords;
        let ab = &a * &b;
        let t = t1 * t2 + &a * x1 * x2 + &b * y1 * y2 - &ab * z1 * z2;
        let x = t1 * x2 + x1 * t2 - &b * (y1 * z2 - z1 * y2);
        let y = t1 * y2 + y1 * t2 + &a * (x1 * z2 - z1 * x2);
        let z = t1 * z2 + z1 * t2 + (x1 * y2 - y1 * x2);
        QuatElement::new([t, x, y, z])
    }

    pub fn conj(&self) -> QuatElement {
        QuatElement::new([
            self.coords[0].clone(),
            -self.coords[1].clone(),
            -self.coords[2].clone(),
            -self.coords[3].clone(),
        ])
    }

    /// Reduced trace 2t.
    pub fn trd(&self) -> Rat {
        &self.coords[0] + &self.coords[0]
    }

    /// Reduced norm t^2 - a x^2 - b y^2 + ab z^2.
    pub fn nrd(&self, alg: &QuaternionAlgebra) -> Rat {
        let a = Rat::from_integer(BigInt::from(alg.a));
        let b = Rat::from_integer(BigInt::from(alg.b));
        let [t, x, y, z] = &self.coords;
        t * t - &a * x * x - &b * y * y + &a * &b * z * z
    }
}

/// A rank-4 lattice in B with a canonical (HNF-normalized) rational row
/// basis; used for both orders and ideals.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice4 {
    /// Rows are basis elements in (1, i, j, ij) coordinates.
    pub rows: [[Rat; 4]; 4],
}

impl Lattice4 {
    /// Canonical lattice from a generating set.
    pub fn from_generators(gens: &[QuatElement]) -> Lattice4 {
        // Common denominator.
        let mut den = BigInt::one();
        for g in gens {
            for c in &g.coords {
                den = den.lcm(c.denom());
            }
        }
        let int_rows: Vec<Vec<BigInt>> = gens
            .iter()
            .map(|g| {
                g.coords
                    .iter()
                    .map(|c| c.numer() * (&den / c.denom()))
                    .collect()
            })
            .collect();
        let h = hnf_rows(&int_rows);
        assert_eq!(h.len(), 4, "lattice must have full rank");
        let rows = std::array::from_fn(|i| {
            std::array::from_fn(|j| Rat::new(h[i][j].clone(), den.clone()))
        });
        Lattice4 { rows }
    }

    pub fn basis_elements(&self) -> [QuatElement; 4] {
        std::array::from_fn(|i| QuatElement::new(self.rows[i].clone()))
    }

    /// Inverse of the basis matrix, for coordinate computations.
    fn basis_inverse(&self) -> [[Rat; 4]; 4] {
        invert4(&self.rows).expect("basis is invertible")
    }

    /// Coordinates of x in this basis (x = coords . rows).
    pub fn coordinates(&self, x: &QuatElement) -> [Rat; 4] {
        let inv = self.basis_inverse();
        row_times_matrix(&x.coords, &inv)
    }

    pub fn contains(&self, x: &QuatElement) -> bool {
        self.coordinates(x).iter().all(|c| c.denom().is_one())
    }

    /// Product lattice generated by pairwise basis products.
    pub fn product(&self, other: &Lattice4, alg: &QuaternionAlgebra) -> Lattice4 {
        let mut gens = Vec::with_capacity(16);
        for e in self.basis_elements() {
            for f in other.basis_elements() {
                gens.push(e.mul(&f, alg));
            }
        }
        Lattice4::from_generators(&gens)
    }

    pub fn conjugate(&self) -> Lattice4 {
        Lattice4::from_generators(&self.basis_elements().map(|e| e.conj()))
    }

    pub fn scale(&self, s: &Rat) -> Lattice4 {
        Lattice4::from_generators(&self.basis_elements().map(|e| e.scale(s)))
    }

    /// Gram matrix trd(e_i conj(e_j)) of the (positive definite) norm form,
    /// integral for integral lattices; errors if entries are fractional.
    pub fn gram(&self, alg: &QuaternionAlgebra) -> [[i128; 4]; 4] {
        let es = self.basis_elements();
        std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let t = es[i].mul(&es[j].conj(), alg).trd();
                assert!(t.denom().is_one(), "lattice norm form must be integral");
                t.numer().to_i128().expect("desk-scale entries")
            })
        })
    }

    /// |det(trd(e_i e_j))| of the (unconjugated) trace form; the reduced
    /// discriminant is its square root for orders.
    pub fn trace_form_det(&self, alg: &QuaternionAlgebra) -> BigInt {
        let es = self.basis_elements();
        let mut m: Vec<Vec<Rat>> = vec![vec![Rat::zero(); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = es[i].mul(&es[j], alg).trd();
            }
        }
        let d = det4(&m);
        let v = d.numer() / d.denom();
        v.abs()
    }

    /// Reduced norm of the lattice: gcd of nrd over all elements, from the
    /// Gram entries (diagonal halved).
    pub fn reduced_norm(&self, alg: &QuaternionAlgebra) -> BigInt {
        let g = self.gram(alg);
        let mut acc = BigInt::zero();
        for i in 0..4 {
            acc = acc.gcd(&BigInt::from(g[i][i] / 2));
            for j in (i + 1)..4 {
                acc = acc.gcd(&BigInt::from(g[i][j]));
            }
        }
        acc
    }

    /// Closed under multiplication and containing 1.
    pub fn is_order(&self, alg: &QuaternionAlgebra) -> bool {
        if !self.contains(&QuatElement::one()) {
            return false;
        }
        let es = self.basis_elements();
        for e in &es {
            for f in &es {
                if !self.contains(&e.mul(f, alg)) {
                    return false;
                }
            }
        }
        true
    }
}

fn row_times_matrix(row: &[Rat; 4], m: &[[Rat; 4]; 4]) -> [Rat; 4] {
    std::array::from_fn(|j| {
        (0..4).map(|k| &row[k] * &m[k][j]).fold(Rat::zero(), |acc, v| acc + v)
    })
}

fn invert4(m: &[[Rat; 4]; 4]) -> Option<[[Rat; 4]; 4]> {
    // Gauss-Jordan over Q.
    let mut a: Vec<Vec<Rat>> = (0..4)
        .map(|i| {
            let mut row: Vec<Rat> = m[i].to_vec();
            for j in 0..4 {
                row.push(if i == j { Rat::one() } else { Rat::zero() });
            }
            row
        })
        .collect();
    for col in 0..4 {
        let piv = (col..4).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, piv);
        let d = a[col][col].clone();
        for x in a[col].iter_mut() {
            *x = &*x / &d;
        }
        for r in 0..4 {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for c in 0..8 {
                    let sub = &f * &a[col][c];
                    a[r][c] = &a[r][c] - &sub;
                }
            }
        }
    }
    Some(std::array::from_fn(|i| std::array::from_fn(|j| a[i][j + 4].clone())))
}

fn det4(m: &[Vec<Rat>]) -> Rat {
    // Laplace is fine at 4x4 scale; use elimination for stability.
    let mut a: Vec<Vec<Rat>> = m.to_vec();
    let mut det = Rat::one();
    for col in 0..4 {
        let Some(piv) = (col..4).find(|&r| !a[r][col].is_zero()) else {
            return Rat::zero();
        };
        if piv != col {
            a.swap(col, piv);
            det = -det;
        }
        det *= a[col][col].clone();
        let d = a[col][col].clone();
        for r in (col + 1)..4 {
            if !a[r][col].is_zero() {
                let f = &a[r][col] / &d;
                for c in col..4 {
                    let sub = &f * &a[col][c];
                    a[r][c] = &a[r][c] - &sub;
                }
            }
        }
    }
    det
}

/// A maximal order with its ambient algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct QuatOrder {
    pub alg: QuaternionAlgebra,
    pub lattice: Lattice4,
}

impl QuatOrder {
    pub fn reduced_discriminant(&self) -> BigInt {
        let d = self.lattice.trace_form_det(&self.alg);
        let r = d.sqrt();
        assert_eq!(&r * &r, d, "trace form determinant must be a square");
        r
    }

    pub fn contains(&self, x: &QuatElement) -> bool {
        self.lattice.contains(x)
    }

    /// All units (reduced norm 1), including -1.
    pub fn unit_group(&self) -> Vec<QuatElement> {
        let gram = self.lattice.gram(&self.alg);
        let gram: Vec<Vec<i128>> = gram.iter().map(|r| r.to_vec()).collect();
        // nrd(x) = 1 <=> x^T Gram x = 2.
        let shell = shell_vectors(&gram, 2);
        let es = self.lattice.basis_elements();
        shell
            .into_iter()
            .map(|c| combine(&es, &c))
            .collect()
    }

    /// All elements of a given reduced norm.
    pub fn elements_of_norm(&self, n: i128) -> Vec<QuatElement> {
        let gram = self.lattice.gram(&self.alg);
        let gram: Vec<Vec<i128>> = gram.iter().map(|r| r.to_vec()).collect();
        let shell = shell_vectors(&gram, 2 * n);
        let es = self.lattice.basis_elements();
        shell.into_iter().map(|c| combine(&es, &c)).collect()
    }
}

fn combine(es: &[QuatElement; 4], coords: &[i128]) -> QuatElement {
    let mut acc = QuatElement::zero();
    for (k, c) in coords.iter().enumerate() {
        acc = acc.add(&es[k].scale(&Rat::from_integer(BigInt::from(*c))));
    }
    acc
}

/// Legendre symbol for odd primes.
fn legendre(a: i128, p: u64) -> i64 {
    let r = a.rem_euclid(p as i128) as u64;
    if r == 0 {
        return 0;
    }
    let mut result = 1u64;
    let mut base = r % p;
    let mut e = (p - 1) / 2;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % p;
        }
        base = base * base % p;
        e >>= 1;
    }
    if result == 1 {
        1
    } else {
        -1
    }
}

/// A place of Q: a finite prime or infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Place {
    Finite(u64),
    Infinite,
}

/// The local Hilbert symbol (a, b) at a place.
pub fn hilbert_symbol(a: i64, b: i64, place: Place) -> i64 {
    assert!(a != 0 && b != 0);
    match place {
        Place::Infinite => {
            if a < 0 && b < 0 {
                -1
            } else {
                1
            }
        }
        Place::Finite(2) => {
            let (alpha, u) = two_split(a);
            let (beta, v) = two_split(b);
            let eps = |x: i64| ((x - 1) / 2).rem_euclid(2);
            let omega = |x: i64| ((x * x - 1) / 8).rem_euclid(2);
            let e = eps(u) * eps(v) + alpha * omega(v) + beta * omega(u);
            if e % 2 == 0 {
                1
            } else {
                -1
            }
        }
        Place::Finite(l) => {
            let (alpha, u) = l_split(a, l);
            let (beta, v) = l_split(b, l);
            let eps = ((l - 1) / 2) as i64;
            let mut sign = if (alpha * beta * eps) % 2 == 1 { -1 } else { 1 };
            if beta % 2 == 1 {
                sign *= legendre(u as i128, l);
            }
            if alpha % 2 == 1 {
                sign *= legendre(v as i128, l);
            }
            sign
        }
    }
}

fn two_split(x: i64) -> (i64, i64) {
    let mut a = 0;
    let mut u = x;
    while u % 2 == 0 {
        u /= 2;
        a += 1;
    }
    (a, u)
}

fn l_split(x: i64, l: u64) -> (i64, i64) {
    let mut a = 0;
    let mut u = x;
    while u % (l as i64) == 0 {
        u /= l as i64;
        a += 1;
    }
    (a, u)
}

/// Finite places where (a, b) ramifies, plus infinity when definite.
pub fn ramification_set(a: i64, b: i64) -> (Vec<u64>, bool) {
    let mut primes = vec![2u64];
    for x in [a.unsigned_abs(), b.unsigned_abs()] {
        let mut n = x;
        let mut f = 3u64;
        while f * f <= n {
            if n % f == 0 {
                primes.push(f);
                while n % f == 0 {
                    n /= f;
                }
            }
            f += 2;
        }
        if n > 2 {
            primes.push(n);
        }
    }
    primes.sort();
    primes.dedup();
    let finite: Vec<u64> = primes
        .into_iter()
        .filter(|&l| hilbert_symbol(a, b, Place::Finite(l)) == -1)
        .collect();
    let infinite = hilbert_symbol(a, b, Place::Infinite) == -1;
    (finite, infinite)
}

fn is_prime(n: u64) -> bool {
    crate::config::is_prime(n)
}

/// The definite algebra ramified exactly at {q, infinity} and a maximal
/// order in it.
///
/// The Hilbert pair is the classical one per residue class of q; the
/// starting basis is saturated (if needed) until the reduced discriminant
/// equals q, which certifies maximality.
pub fn construct_algebra_and_maximal_order(q: u64) -> (QuaternionAlgebra, QuatOrder) {
    assert!(is_prime(q), "q must be prime");
    let half = Rat::new(BigInt::one(), BigInt::from(2));
    let (alg, gens) = if q == 2 {
        let alg = QuaternionAlgebra { a: -1, b: -1 };
        // 1, i, j, (1 + i + j + ij)/2.
        let omega = QuatElement::from_i64(1, 1, 1, 1).scale(&half);
        (alg, vec![
            QuatElement::one(),
            QuatElement::from_i64(0, 1, 0, 0),
            QuatElement::from_i64(0, 0, 1, 0),
            omega,
        ])
    } else if q % 4 == 3 {
        let alg = QuaternionAlgebra { a: -1, b: -(q as i64) };
        // 1, i, (i + j)/2, (1 + ij)/2.
        (alg, vec![
            QuatElement::one(),
            QuatElement::from_i64(0, 1, 0, 0),
            QuatElement::from_i64(0, 1, 1, 0).scale(&half),
            QuatElement::from_i64(1, 0, 0, 1).scale(&half),
        ])
    } else if q % 8 == 5 {
        let alg = QuaternionAlgebra { a: -2, b: -(q as i64) };
        // 1, i, (1 + i + j)/2, (i + ij)/2.
        (alg, vec![
            QuatElement::one(),
            QuatElement::from_i64(0, 1, 0, 0),
            QuatElement::from_i64(1, 1, 1, 0).scale(&half),
            QuatElement::from_i64(0, 1, 0, 1).scale(&half),
        ])
    } else {
        // q = 1 mod 8: (-q, -r) with r the least prime 3 mod 4 having
        // (q | r) = -1; start from the free order and saturate.
        let r = (3u64..)
            .step_by(4)
            .find(|&r| is_prime(r) && legendre(q as i128, r) == -1)
            .unwrap();
        let alg = QuaternionAlgebra { a: -(q as i64), b: -(r as i64) };
        (alg, vec![
            QuatElement::one(),
            QuatElement::from_i64(0, 1, 0, 0),
            QuatElement::from_i64(0, 0, 1, 0),
            QuatElement::from_i64(0, 0, 0, 1),
        ])
    };
    // Verify the ramification is as intended.
    debug_assert_eq!(ramification_set(alg.a, alg.b), (vec![q], true));
    let lattice = Lattice4::from_generators(&gens);
    let order = saturate(QuatOrder { alg, lattice }, q);
    assert_eq!(order.reduced_discriminant(), BigInt::from(q));
    debug_assert!(order.lattice.is_order(&alg));
    (alg, order)
}

/// Enlarges an order until its reduced discriminant reaches the target
/// (the algebra discriminant), i.e. until maximal.
fn saturate(mut order: QuatOrder, q: u64) -> QuatOrder {
    let target = BigInt::from(q);
    loop {
        let disc = order.reduced_discriminant();
        if disc == target {
            return order;
        }
        let ratio = &disc / &target;
        debug_assert!((&disc % &target).is_zero());
        // Smallest prime dividing the excess index.
        let mut l = 2u64;
        while !(&ratio % BigInt::from(l)).is_zero() {
            l += 1;
        }
        let es = order.lattice.basis_elements();
        let mut improved = false;
        'search: for a0 in 0..l {
            for a1 in 0..l {
                for a2 in 0..l {
                    for a3 in 0..l {
                        if a0 == 0 && a1 == 0 && a2 == 0 && a3 == 0 {
                            continue;
                        }
                        let num = combine(&es, &[a0 as i128, a1 as i128, a2 as i128, a3 as i128]);
                        let x = num.scale(&Rat::new(BigInt::one(), BigInt::from(l)));
                        // Integrality of the candidate.
                        if !x.trd().denom().is_one() || !x.nrd(&order.alg).denom().is_one() {
                            continue;
                        }
                        let mut gens: Vec<QuatElement> = es.to_vec();
                        gens.push(x);
                        let bigger = Lattice4::from_generators(&gens);
                        if bigger.is_order(&order.alg) {
                            let new_disc =
                                QuatOrder { alg: order.alg, lattice: bigger.clone() }
                                    .reduced_discriminant();
                            if new_disc < disc {
                                order = QuatOrder { alg: order.alg, lattice: bigger };
                                improved = true;
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        assert!(improved, "saturation stalled at discriminant {}", disc);
    }
}

/// Elements of the quadratic extension F_q[s]/(s^2 - n) (odd q, n a fixed
/// non-residue) or F_2[s]/(s^2 + s + 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fq2 {
    pub c0: u64,
    pub c1: u64,
}

/// The field F_{q^2} with its reduction rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fq2Field {
    pub q: u64,
    /// s^2 = n for odd q; ignored for q = 2 where s^2 = s + 1.
    pub n: u64,
}

impl Fq2Field {
    pub fn new(q: u64) -> Self {
        if q == 2 {
            Fq2Field { q, n: 0 }
        } else {
            let n = (2..q).find(|&n| legendre(n as i128, q) == -1).unwrap();
            Fq2Field { q, n }
        }
    }

    pub fn add(&self, a: Fq2, b: Fq2) -> Fq2 {
        Fq2 { c0: (a.c0 + b.c0) % self.q, c1: (a.c1 + b.c1) % self.q }
    }

    pub fn mul(&self, a: Fq2, b: Fq2) -> Fq2 {
        let q = self.q;
        if q == 2 {
            // s^2 = s + 1.
            let t = a.c1 * b.c1 % q;
            Fq2 {
                c0: (a.c0 * b.c0 + t) % q,
                c1: (a.c0 * b.c1 + a.c1 * b.c0 + t) % q,
            }
        } else {
            Fq2 {
                c0: (a.c0 * b.c0 + self.n * (a.c1 * b.c1 % q)) % q,
                c1: (a.c0 * b.c1 + a.c1 * b.c0) % q,
            }
        }
    }

    pub fn scalar(&self, c: u64) -> Fq2 {
        Fq2 { c0: c % self.q, c1: 0 }
    }

    /// Frobenius x -> x^q.
    pub fn frobenius(&self, a: Fq2) -> Fq2 {
        if self.q == 2 {
            // s -> s^2 = s + 1.
            Fq2 { c0: (a.c0 + a.c1) % 2, c1: a.c1 }
        } else {
            // s -> -s.
            Fq2 { c0: a.c0, c1: (self.q - a.c1 % self.q) % self.q }
        }
    }

    /// Roots in F_{q^2} of a monic quadratic t^2 - tr t + nm (tr, nm mod q).
    pub fn quadratic_roots(&self, tr: u64, nm: u64) -> Vec<Fq2> {
        let mut out = Vec::new();
        for c0 in 0..self.q {
            for c1 in 0..self.q {
                let x = Fq2 { c0, c1 };
                let x2 = self.mul(x, x);
                let tr_x = Fq2 { c0: tr * c0 % self.q, c1: tr * c1 % self.q };
                let val = Fq2 {
                    c0: (x2.c0 + self.q * self.q + nm - tr_x.c0 + self.q) % self.q,
                    c1: (x2.c1 + self.q - tr_x.c1 % self.q) % self.q,
                };
                if val.c0 == 0 && val.c1 == 0 {
                    out.push(x);
                }
            }
        }
        out.sort();
        out
    }
}

/// The orientation of a maximal order at the ramified prime q: the maximal
/// two-sided ideal P above q together with a fixed identification of the
/// residue ring with F_{q^2}.
#[derive(Debug, Clone)]
pub struct OrientationAtQ {
    pub q: u64,
    pub field: Fq2Field,
    /// Row-reduced basis of P/qO inside O/qO (coordinates in the order
    /// basis, mod q).
    pub radical: Vec<[u64; 4]>,
    /// A basis element g of O/P complementing 1, with its image in F_{q^2}.
    pub generator_coords: [u64; 4],
    pub generator_image: Fq2,
    /// Projection data: for e_i the order basis, the image of e_i in O/P
    /// written as c + d*g.
    pub basis_images: [(u64, u64); 4],
}

/// Builds the orientation of a maximal order at its ramified prime.
///
/// The radical of O/qO is the kernel of the (unconjugated) trace pairing;
/// the quotient is F_{q^2}; among the two identifications the one sending
/// the chosen generator to the lexicographically least root of its minimal
/// polynomial is fixed.
pub fn orientation_at_q(order: &QuatOrder, q: u64) -> OrientationAtQ {
    let es = order.lattice.basis_elements();
    // Trace pairing matrix mod q.
    let mut m = [[0u64; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let t = es[i].mul(&es[j], &order.alg).trd();
            assert!(t.denom().is_one());
            m[i][j] = t.numer().mod_floor(&BigInt::from(q)).to_u64().unwrap();
        }
    }
    // Kernel mod q by Gaussian elimination.
    let radical = kernel_mod_q(&m, q);
    assert_eq!(radical.len(), 2, "radical of the ramified quotient is 2-dimensional");
    // Build the quotient O/P = F_q<1, g>: find a basis vector independent
    // of 1 mod P. Work with the 4-dim coordinate space mod q; P is spanned
    // by the radical plus nothing else (dimension 2), and 1 has coordinates
    // of the identity element.
    let one_coords = coords_mod_q(order, &QuatElement::one(), q);
    // Choose g = first basis vector independent from {radical, 1}.
    let mut span = radical.clone();
    span.push(one_coords);
    let mut g_idx = 0;
    let mut g_coords = [0u64; 4];
    for i in 0..4 {
        let mut e = [0u64; 4];
        e[i] = 1;
        if !in_span_mod_q(&span, &e, q) {
            g_idx = i;
            g_coords = e;
            break;
        }
        if i == 3 {
            panic!("no generator found for the residue field");
        }
    }
    let _ = g_idx;
    // Minimal polynomial of g modulo P: g^2 = beta g + alpha with scalars
    // from reduction: express g^2 mod P in the basis {1, g}.
    let g_elem = es[index_of(&g_coords)].clone();
    let g2 = g_elem.mul(&g_elem, &order.alg);
    let g2_coords = coords_mod_q(order, &g2, q);
    let (alpha, beta) = express_in_one_g(&radical, &one_coords, &g_coords, &g2_coords, q);
    // Identify with F_{q^2}: g maps to a root of t^2 - beta t - alpha.
    let field = Fq2Field::new(q);
    let tr = beta % q;
    let nm = (q - alpha % q) % q; // t^2 - beta t - alpha = t^2 - tr t + nm
    let roots = field.quadratic_roots(tr, nm);
    assert_eq!(roots.len(), 2, "residue generator must be quadratic over F_q");
    assert_ne!(roots[0], roots[1]);
    let generator_image = roots[0]; // lexicographically least
    // Projection of every basis vector onto {1, g} mod P.
    let basis_images = std::array::from_fn(|i| {
        let mut e = [0u64; 4];
        e[i] = 1;
        express_in_one_g(&radical, &one_coords, &g_coords, &e, q)
    });
    OrientationAtQ {
        q,
        field,
        radical,
        generator_coords: g_coords,
        generator_image,
        basis_images,
    }
}

fn index_of(e: &[u64; 4]) -> usize {
    e.iter().position(|&c| c == 1).unwrap()
}

fn coords_mod_q(order: &QuatOrder, x: &QuatElement, q: u64) -> [u64; 4] {
    let c = order.lattice.coordinates(x);
    std::array::from_fn(|i| {
        let r = &c[i];
        // Denominator is prime to q for q-integral elements.
        let qb = BigInt::from(q);
        let den_inv = mod_inverse_big(&r.denom().mod_floor(&qb), &qb)
            .expect("denominator must be invertible mod q");
        ((r.numer().mod_floor(&qb) * den_inv).mod_floor(&qb))
            .to_u64()
            .unwrap()
    })
}

fn mod_inverse_big(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let e = a.extended_gcd(m);
    if e.gcd.is_one() {
        Some(e.x.mod_floor(m))
    } else {
        None
    }
}

fn kernel_mod_q(m: &[[u64; 4]; 4], q: u64) -> Vec<[u64; 4]> {
    // Solve m v = 0 mod q.
    let mut a: Vec<Vec<u64>> = (0..4).map(|i| m[i].to_vec()).collect();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..4 {
        if let Some(r) = (row..4).find(|&r| a[r][col] % q != 0) {
            a.swap(row, r);
            let inv = mod_inverse_u64(a[row][col], q);
            for c in 0..4 {
                a[row][c] = a[row][c] * inv % q;
            }
            for r2 in 0..4 {
                if r2 != row && a[r2][col] % q != 0 {
                    let f = a[r2][col] % q;
                    for c in 0..4 {
                        a[r2][c] = (a[r2][c] + (q - f) * a[row][c]) % q;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
    }
    let mut kernel = Vec::new();
    for free in 0..4 {
        if pivots.contains(&free) {
            continue;
        }
        let mut v = [0u64; 4];
        v[free] = 1;
        for (r, &pc) in pivots.iter().enumerate() {
            v[pc] = (q - a[r][free] % q) % q;
        }
        kernel.push(v);
    }
    kernel
}

fn mod_inverse_u64(a: u64, q: u64) -> u64 {
    let mut result = 1u64;
    let mut base = a % q;
    let mut e = q - 2;
    while e > 0 {
        if e & 1 == 1 {
            result = result * base % q;
        }
        base = base * base % q;
        e >>= 1;
    }
    result
}

fn in_span_mod_q(span: &[[u64; 4]], v: &[u64; 4], q: u64) -> bool {
    // Row-reduce span and check whether v reduces to zero.
    let mut rows: Vec<[u64; 4]> = span.to_vec();
    let mut target = *v;
    let mut col = 0;
    let mut r0 = 0;
    while col < 4 && r0 < rows.len() {
        if let Some(r) = (r0..rows.len()).find(|&r| rows[r][col] % q != 0) {
            rows.swap(r0, r);
            let inv = mod_inverse_u64(rows[r0][col], q);
            for c in 0..4 {
                rows[r0][c] = rows[r0][c] * inv % q;
            }
            let rows_r0 = rows[r0];
            for (r2, other) in rows.iter_mut().enumerate() {
                if r2 != r0 && other[col] % q != 0 {
                    let f = other[col] % q;
                    for c in 0..4 {
                        other[c] = (other[c] + (q - f) * rows_r0[c]) % q;
                    }
                }
            }
            if target[col] % q != 0 {
                let f = target[col] % q;
                for c in 0..4 {
                    target[c] = (target[c] + (q - f) * rows_r0[c]) % q;
                }
            }
            r0 += 1;
        }
        col += 1;
    }
    target.iter().all(|&c| c % q == 0)
}

/// Writes v mod (P + F_q 1 + F_q g) as (c, d) with v = c + d g mod P.
fn express_in_one_g(
    radical: &[[u64; 4]],
    one: &[u64; 4],
    g: &[u64; 4],
    v: &[u64; 4],
    q: u64,
) -> (u64, u64) {
    // Solve v = c*one + d*g + (radical combination) mod q: 4 equations,
    // 2 + 2 unknowns.
    for c in 0..q {
        for d in 0..q {
            let mut w = [0u64; 4];
            for t in 0..4 {
                w[t] = (v[t] + q * q - (c * one[t] + d * g[t]) % q) % q;
            }
            if in_span_mod_q(radical, &w, q) {
                return (c, d);
            }
        }
    }
    panic!("element does not reduce to the residue field");
}

/// Orientation value of an integral element.
pub fn orientation_of(order: &QuatOrder, o: &OrientationAtQ, x: &QuatElement) -> Fq2 {
    let c = coords_mod_q(order, x, o.q);
    let mut acc = Fq2 { c0: 0, c1: 0 };
    for i in 0..4 {
        let (ci, di) = o.basis_images[i];
        let term = o.field.mul(
            o.field.scalar(c[i]),
            Fq2 { c0: ci, c1: 0 },
        );
        let term_g = o.field.mul(
            o.field.scalar(c[i] * di % o.q),
            o.generator_image,
        );
        acc = o.field.add(acc, o.field.add(term, term_g));
    }
    acc
}

/// One Brandt class: a right-ideal representative, its left order, and the
/// unit count of that order.
#[derive(Debug, Clone)]
pub struct IdealClass {
    pub ideal: Lattice4,
    pub left_order: QuatOrder,
    pub unit_count: usize,
}

/// Right ideal classes of the maximal order, walked through ideals of
/// p-power norm (every class contains one, by strong approximation at p).
pub fn ideal_classes(order: &QuatOrder, p: u64) -> Vec<IdealClass> {
    let alg = order.alg;
    let start = order.lattice.clone();
    let mut classes: Vec<(Lattice4, BigInt)> = vec![(start.clone(), BigInt::one())];
    let mut frontier: Vec<(Lattice4, BigInt)> = vec![(start, BigInt::one())];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for (ideal, n) in &frontier {
            for child in norm_p_children(ideal, order, p) {
                let cn = n * BigInt::from(p);
                let is_new = classes
                    .iter()
                    .all(|(rep, rn)| !right_ideals_equivalent(&child, &cn, rep, rn, &alg));
                if is_new {
                    classes.push((child.clone(), cn.clone()));
                    next.push((child, cn));
                }
            }
        }
        frontier = next;
    }
    classes
        .into_iter()
        .map(|(ideal, n)| {
            // Left order = (1/n) I conj(I).
            let prod = ideal.product(&ideal.conjugate(), &alg);
            let left = prod.scale(&Rat::new(BigInt::one(), n));
            let left_order = QuatOrder { alg, lattice: left };
            debug_assert!(left_order.lattice.is_order(&alg));
            debug_assert_eq!(left_order.reduced_discriminant(), order.reduced_discriminant());
            let unit_count = left_order.unit_group().len();
            IdealClass { ideal, left_order, unit_count }
        })
        .collect()
}

/// The p+1 right sub-ideals of index p^2 in a right ideal (its "children"
/// in the p-walk): preimages of the 2-dimensional right-stable subspaces
/// of I/pI.
fn norm_p_children(ideal: &Lattice4, order: &QuatOrder, p: u64) -> Vec<Lattice4> {
    let alg = order.alg;
    let es = ideal.basis_elements();
    let os = order.lattice.basis_elements();
    // Right multiplication matrices mod p on I/pI in the basis of I.
    let inv = invert4(&ideal.rows).unwrap();
    let mut mults = Vec::new();
    for o in &os {
        let mut m = [[0u64; 4]; 4];
        for (i, e) in es.iter().enumerate() {
            let prod = e.mul(o, &alg);
            let coords = row_times_matrix(&prod.coords, &inv);
            for (j, c) in coords.iter().enumerate() {
                let qb = BigInt::from(p);
                let den_inv = mod_inverse_big(&c.denom().mod_floor(&qb), &qb)
                    .expect("right multiplication preserves the ideal");
                m[i][j] = ((c.numer().mod_floor(&qb) * den_inv).mod_floor(&qb))
                    .to_u64()
                    .unwrap();
            }
        }
        mults.push(m);
    }
    // Enumerate 2-dimensional subspaces of F_p^4 stable under all mults.
    let mut children = Vec::new();
    let subspaces = two_dim_subspaces(p);
    for w in subspaces {
        let stable = mults.iter().all(|m| {
            w.iter().all(|v| {
                let mut img = [0u64; 4];
                for j in 0..4 {
                    let mut s = 0u64;
                    for i in 0..4 {
                        s = (s + v[i] * m[i][j]) % p;
                    }
                    img[j] = s;
                }
                in_span_mod_q(&w, &img, p)
            })
        });
        if !stable {
            continue;
        }
        // Lattice spanned by pI and the lifts of w.
        let mut gens: Vec<QuatElement> = es
            .iter()
            .map(|e| e.scale(&Rat::from_integer(BigInt::from(p))))
            .collect();
        for v in &w {
            let mut x = QuatElement::zero();
            for (i, &c) in v.iter().enumerate() {
                x = x.add(&es[i].scale(&Rat::from_integer(BigInt::from(c))));
            }
            gens.push(x);
        }
        let child = Lattice4::from_generators(&gens);
        // Keep only genuine norm-p steps (the two-sided pO has norm p^2).
        if child.reduced_norm(&alg) == ideal.reduced_norm(&alg) * BigInt::from(p) {
            children.push(child);
        }
    }
    children
}

/// All 2-dimensional subspaces of F_p^4, as reduced row bases.
fn two_dim_subspaces(p: u64) -> Vec<Vec<[u64; 4]>> {
    let mut out: Vec<Vec<[u64; 4]>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let all_vectors: Vec<[u64; 4]> = {
        let mut v = Vec::new();
        for a in 0..p {
            for b in 0..p {
                for c in 0..p {
                    for d in 0..p {
                        if (a, b, c, d) != (0, 0, 0, 0) {
                            v.push([a, b, c, d]);
                        }
                    }
                }
            }
        }
        v
    };
    for v1 in &all_vectors {
        for v2 in &all_vectors {
            if in_span_mod_q(&[*v1], v2, p) {
                continue;
            }
            // Canonical form: row echelon of {v1, v2}.
            let canon = echelon2(&[*v1, *v2], p);
            if seen.insert(canon) {
                out.push(vec![canon[0], canon[1]]);
            }
        }
    }
    out
}

fn echelon2(rows: &[[u64; 4]; 2], p: u64) -> [[u64; 4]; 2] {
    let mut a = *rows;
    // Reduce first row on its leading column, then second.
    let lead = |v: &[u64; 4]| v.iter().position(|&c| c % p != 0);
    let l0 = lead(&a[0]).unwrap();
    let l1 = lead(&a[1]).unwrap();
    if l1 < l0 {
        a.swap(0, 1);
    }
    let l0 = lead(&a[0]).unwrap();
    let inv = mod_inverse_u64(a[0][l0], p);
    for c in 0..4 {
        a[0][c] = a[0][c] * inv % p;
    }
    if a[1][l0] % p != 0 {
        let f = a[1][l0] % p;
        for c in 0..4 {
            a[1][c] = (a[1][c] + (p - f) * a[0][c]) % p;
        }
    }
    let l1 = lead(&a[1]).expect("independent rows");
    let inv = mod_inverse_u64(a[1][l1], p);
    for c in 0..4 {
        a[1][c] = a[1][c] * inv % p;
    }
    if a[0][l1] % p != 0 {
        let f = a[0][l1] % p;
        for c in 0..4 {
            a[0][c] = (a[0][c] + (p - f) * a[1][c]) % p;
        }
    }
    a
}

/// Two right ideals are in the same class iff I conj(J) contains an element
/// of reduced norm n(I) n(J); the shell test is an exact decision.
fn right_ideals_equivalent(
    i1: &Lattice4,
    n1: &BigInt,
    i2: &Lattice4,
    n2: &BigInt,
    alg: &QuaternionAlgebra,
) -> bool {
    let prod = i1.product(&i2.conjugate(), alg);
    let target_norm = n1 * n2;
    let gram = prod.gram(alg);
    let gram: Vec<Vec<i128>> = gram.iter().map(|r| r.to_vec()).collect();
    let t = (BigInt::from(2) * &target_norm).to_i128().expect("desk scale");
    !shell_vectors(&gram, t).is_empty()
}

/// One oriented optimal embedding class.
#[derive(Debug, Clone, Serialize)]
pub struct EmbeddingClass {
    /// Index of the ideal class (left order) the embedding lands in.
    pub class_index: usize,
    /// Coordinates of x = psi((d + sqrt d)/2) in that order's basis.
    pub x_coords: [i64; 4],
    /// Orientation value at q as (c0, c1) in F_{q^2}.
    pub orientation: (u64, u64),
}

/// Enumerates the oriented optimal embeddings of the order of discriminant
/// d into the maximal orders of the algebra ramified at q, up to conjugacy
/// by units of Z[1/p]; one class per Picard class of the quadratic order.
///
/// Candidates in each ideal-class order are the integral x with reduced
/// trace d and reduced norm (d^2 - d)/4; classes are orbits under the
/// finite unit group of that order (the stabilizer of the corresponding
/// vertex), filtered to the fixed orientation at q.
pub fn enumerate_optimal_embeddings(
    d: i128,
    q: u64,
    p: u64,
) -> Result<Vec<EmbeddingClass>, QuatError> {
    let g = gcd_i128(d, (q as i128) * (p as i128));
    if g != 1 {
        return Err(QuatError::BadGcd { d, qp: q * p });
    }
    if splitting_type(d, p) != SplittingType::Inert {
        return Err(QuatError::NotInert { d, p });
    }
    if legendre(d, q) != -1 && q != 2 {
        return Ok(vec![]);
    }
    if q == 2 && d.rem_euclid(8) != 5 {
        // Inert at 2 means d = 5 mod 8.
        return Ok(vec![]);
    }
    let (_alg, order) = construct_algebra_and_maximal_order(q);
    let orientation = orientation_at_q(&order, q);
    let classes = ideal_classes(&order, p);
    // Target orientation: the least root of the minimal polynomial of
    // (d + sqrt d)/2, i.e. t^2 - d t + (d^2 - d)/4 mod q.
    let qb = q as i128;
    let tr = d.rem_euclid(qb) as u64;
    let nm = (((d * d - d) / 4).rem_euclid(qb)) as u64;
    let roots = orientation.field.quadratic_roots(tr, nm);
    assert_eq!(roots.len(), 2, "d inert at q gives a quadratic residue generator");
    let mu_target = roots[0];
    let mut out = Vec::new();
    for (ci, class) in classes.iter().enumerate() {
        let found = embeddings_in_order(d, &class.left_order, &order, &orientation, mu_target);
        for x_coords in found {
            let x = combine(&class.left_order.lattice.basis_elements(), &x_coords.map(|c| c as i128));
            let nu = orientation_of(&order, &orientation, &x);
            out.push(EmbeddingClass {
                class_index: ci,
                x_coords,
                orientation: (nu.c0, nu.c1),
            });
        }
    }
    Ok(out)
}

fn gcd_i128(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Embeddings of the order of discriminant d into one maximal order, up to
/// its unit group, keeping only those with the target orientation value.
/// Returns canonical coordinate vectors for x = psi((d + sqrt d)/2).
fn embeddings_in_order(
    d: i128,
    target: &QuatOrder,
    base_order: &QuatOrder,
    orientation: &OrientationAtQ,
    mu_target: Fq2,
) -> Vec<[i64; 4]> {
    let alg = target.alg;
    let es = target.lattice.basis_elements();
    // Trace-d affine slice: sum c_i trd(e_i) = d.
    let traces: [i128; 4] = std::array::from_fn(|i| {
        let t = es[i].trd();
        assert!(t.denom().is_one());
        t.numer().to_i128().unwrap()
    });
    let Some((particular, kernel)) = solve_linear_diophantine(&traces, d) else {
        return vec![];
    };
    let gram = target.lattice.gram(&alg);
    let gram_vec: Vec<Vec<i128>> = gram.iter().map(|r| r.to_vec()).collect();
    // nrd(x) = (d^2 - d)/4 <=> x^T Gram x = (d^2 - d)/2.
    let target_val = (d * d - d) / 2;
    let shell = shell_vectors_affine(&gram_vec, &particular, &kernel, target_val);
    // Optimality filter at primes dividing the conductor of d.
    let f = conductor(d);
    let conductor_primes: Vec<u64> = prime_divisors(f);
    let mut candidates: Vec<[i128; 4]> = Vec::new();
    'cand: for c in shell {
        let x = combine(&es, &c);
        debug_assert_eq!(x.trd(), Rat::from_integer(BigInt::from(d)));
        for &l in &conductor_primes {
            if !optimal_in_order_at(&x, target, l) {
                continue 'cand;
            }
        }
        candidates.push([c[0], c[1], c[2], c[3]]);
    }
    // Group by unit conjugacy and keep the canonical representative of
    // each orbit with the fixed orientation.
    let units = target.unit_group();
    let inv_basis = invert4(&target.lattice.rows).unwrap();
    let mut canon_map: BTreeMap<[i64; 4], [i64; 4]> = BTreeMap::new();
    let mut out = Vec::new();
    for c in &candidates {
        let key: [i64; 4] = std::array::from_fn(|i| c[i] as i64);
        if canon_map.contains_key(&key) {
            continue;
        }
        let x = combine(&es, &c.map(|v| v));
        // Orbit under conjugation by units.
        let mut orbit: Vec<[i64; 4]> = Vec::new();
        for u in &units {
            let y = u.mul(&x, &alg).mul(&u.conj(), &alg);
            let coords = row_times_matrix(&y.coords, &inv_basis);
            let mut ic = [0i64; 4];
            let mut ok = true;
            for (t, cc) in coords.iter().enumerate() {
                if cc.denom().is_one() {
                    ic[t] = cc.numer().to_i64().unwrap();
                } else {
                    ok = false;
                    break;
                }
            }
            if ok {
                orbit.push(ic);
            }
        }
        orbit.sort();
        orbit.dedup();
        let canon = orbit[0];
        for member in &orbit {
            canon_map.insert(*member, canon);
        }
        // Orientation filter on the orbit representative (the value is
        // conjugation invariant over the unit group).
        let nu = orientation_of(base_order, orientation, &x);
        if nu == mu_target {
            out.push(canon);
        }
    }
    out.sort();
    out.dedup();
    out
}

fn prime_divisors(n: i128) -> Vec<u64> {
    let mut out = Vec::new();
    let mut n = n.unsigned_abs();
    let mut f = 2u128;
    while f * f <= n {
        if n % f == 0 {
            out.push(f as u64);
            while n % f == 0 {
                n /= f;
            }
        }
        f += 1;
    }
    if n > 1 {
        out.push(n as u64);
    }
    out
}

/// Optimality at l: no integer r makes (x - r)/l integral in the order.
fn optimal_in_order_at(x: &QuatElement, order: &QuatOrder, l: u64) -> bool {
    for r in 0..l {
        let shifted = x.sub(&QuatElement::from_i64(r as i64, 0, 0, 0));
        let scaled = shifted.scale(&Rat::new(BigInt::one(), BigInt::from(l)));
        if order.contains(&scaled) {
            return false;
        }
    }
    true
}

/// JSON-ready dump of embedding classes.
pub fn embeddings_json(d: i128, q: u64, p: u64) -> Result<serde_json::Value, QuatError> {
    let classes = enumerate_optimal_embeddings(d, q, p)?;
    Ok(serde_json::json!({
        "d": d,
        "q": q,
        "p": p,
        "count": classes.len(),
        "classes": classes.iter().enumerate().map(|(i, c)| serde_json::json!({
            "id": i,
            "ideal_class": c.class_index,
            "x": c.x_coords,
            "orientation": [c.orientation.0, c.orientation.1],
        })).collect::<Vec<_>>(),
    }))
}

/// Solves sum t_i c_i = d over the integers: a particular solution plus a
/// basis of the kernel lattice (3 rows).
fn solve_linear_diophantine(t: &[i128; 4], d: i128) -> Option<([i128; 4], Vec<Vec<i128>>)> {
    // Unimodular column operations reducing t to (g, 0, 0, 0).
    let mut u = [[0i128; 4]; 4];
    for (i, row) in u.iter_mut().enumerate() {
        row[i] = 1;
    }
    let mut v = *t;
    loop {
        // Find the two smallest nonzero |entries| and reduce.
        let nz: Vec<usize> = (0..4).filter(|&i| v[i] != 0).collect();
        if nz.is_empty() {
            return None;
        }
        if nz.len() == 1 {
            let g = v[nz[0]];
            if d % g != 0 {
                return None;
            }
            let scale = d / g;
            // Particular solution: scale * (column nz[0] of U), kernel: the
            // other columns of U.
            let mut part = [0i128; 4];
            for r in 0..4 {
                part[r] = scale * u[r][nz[0]];
            }
            let kernel: Vec<Vec<i128>> = (0..4)
                .filter(|&c| c != nz[0])
                .map(|c| (0..4).map(|r| u[r][c]).collect())
                .collect();
            return Some((part, kernel));
        }
        // Reduce the largest by the smallest.
        let &imin = nz.iter().min_by_key(|&&i| v[i].abs()).unwrap();
        for &i in &nz {
            if i == imin {
                continue;
            }
            let f = v[i] / v[imin];
            if f != 0 {
                v[i] -= f * v[imin];
                for r in 0..4 {
                    let sub = f * u[r][imin];
                    u[r][i] -= sub;
                }
            }
        }
        // If nothing changed (all remainders nonzero but smaller), loop.
        if nz.iter().all(|&i| i == imin || v[i].abs() < v[imin].abs() || v[i] == 0) {
            continue;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_order_and_units() {
        let (alg, order) = construct_algebra_and_maximal_order(2);
        assert_eq!((alg.a, alg.b), (-1, -1));
        assert_eq!(order.reduced_discriminant(), BigInt::from(2));
        let units = order.unit_group();
        assert_eq!(units.len(), 24);
        // Group closure and inverses.
        for u in &units {
            assert_eq!(u.nrd(&alg), Rat::one());
            let inv = u.conj();
            assert!(units.contains(&inv));
            for v in units.iter().take(6) {
                let w = u.mul(v, &alg);
                assert!(units.contains(&w));
            }
        }
    }

    #[test]
    fn maximal_orders_small_primes() {
        for q in [2u64, 3, 5, 7, 11, 13] {
            let (alg, order) = construct_algebra_and_maximal_order(q);
            assert_eq!(order.reduced_discriminant(), BigInt::from(q), "q = {}", q);
            assert!(order.lattice.is_order(&alg));
            assert!(order.contains(&QuatElement::one()));
            // Basis elements are integral: trd and nrd in Z.
            for e in order.lattice.basis_elements() {
                assert!(e.trd().denom().is_one());
                assert!(e.nrd(&alg).denom().is_one());
            }
            let (finite, infinite) = ramification_set(alg.a, alg.b);
            assert_eq!(finite, vec![q]);
            assert!(infinite);
        }
    }

    #[test]
    fn unit_counts_match_mass_formula() {
        // Single-class primes: mass (q-1)/24 = 1/|units|.
        for (q, expect) in [(2u64, 24usize), (3, 12), (5, 6), (7, 4), (13, 2)] {
            let (_, order) = construct_algebra_and_maximal_order(q);
            assert_eq!(order.unit_group().len(), expect, "q = {}", q);
        }
        // q = 11: two classes, 4 and 6 units.
        let (_, order) = construct_algebra_and_maximal_order(11);
        assert_eq!(order.unit_group().len(), 4);
    }

    #[test]
    fn hilbert_symbol_examples() {
        assert_eq!(hilbert_symbol(-1, -1, Place::Finite(2)), -1);
        assert_eq!(hilbert_symbol(-1, -1, Place::Infinite), -1);
        assert_eq!(hilbert_symbol(-1, -1, Place::Finite(3)), 1);
        // Brute-force oracle at 2: z^2 = -x^2 - y^2 has no primitive
        // solution mod 2^8.
        let m = 1i64 << 8;
        let mut found = false;
        for x in 0..m {
            for y in 0..m {
                if x % 2 == 0 && y % 2 == 0 {
                    continue;
                }
                let rhs = (-(x * x) - y * y).rem_euclid(m);
                let mut z = 0;
                while z < m {
                    if (z * z).rem_euclid(m) == rhs {
                        found = true;
                        break;
                    }
                    z += 1;
                }
                if found {
                    break;
                }
            }
            if found {
                break;
            }
        }
        assert!(!found, "(-1,-1) must be anisotropic at 2");
    }

    #[test]
    fn hilbert_product_formula() {
        for (a, b) in [(-1i64, -1i64), (-1, -11), (-2, -5), (-2, -13), (-17, -3), (3, 5), (-6, 10)] {
            let mut product = hilbert_symbol(a, b, Place::Infinite);
            let mut primes = vec![2u64];
            for x in [a.unsigned_abs(), b.unsigned_abs()] {
                let mut n = x;
                let mut f = 3;
                while f * f <= n {
                    if n % f == 0 {
                        primes.push(f);
                        while n % f == 0 {
                            n /= f;
                        }
                    }
                    f += 2;
                }
                if n > 2 {
                    primes.push(n);
                }
            }
            primes.sort();
            primes.dedup();
            for l in primes {
                product *= hilbert_symbol(a, b, Place::Finite(l));
            }
            assert_eq!(product, 1, "(a,b) = ({},{})", a, b);
        }
    }

    #[test]
    fn brute_force_solubility_agrees_with_symbol_at_3() {
        // (a, b)_3 = 1 iff z^2 = a x^2 + b y^2 has a nontrivial solution
        // over Q3; search primitive solutions mod 3^4.
        for (a, b) in [(-1i64, -1i64), (-1, -3), (-2, -5), (-1, -11), (2, 3)] {
            let m = 81i64;
            let mut found = false;
            'outer: for x in 0..m {
                for y in 0..m {
                    for z in 0..m {
                        if x % 3 == 0 && y % 3 == 0 && z % 3 == 0 {
                            continue;
                        }
                        if (a * x * x + b * y * y - z * z).rem_euclid(m) == 0 {
                            found = true;
                            break 'outer;
                        }
                    }
                }
            }
            let symbol = hilbert_symbol(a, b, Place::Finite(3));
            assert_eq!(found, symbol == 1, "(a,b) = ({},{})", a, b);
        }
    }

    #[test]
    fn nrd_multiplicative_trd_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let alg = QuaternionAlgebra { a: -2, b: -5 };
        for _ in 0..500 {
            let x = QuatElement::from_i64(
                rng.gen_range(-9..9),
                rng.gen_range(-9..9),
                rng.gen_range(-9..9),
                rng.gen_range(-9..9),
            );
            let y = QuatElement::from_i64(
                rng.gen_range(-9..9),
                rng.gen_range(-9..9),
                rng.gen_range(-9..9),
                rng.gen_range(-9..9),
            );
            let xy = x.mul(&y, &alg);
            let yx = y.mul(&x, &alg);
            assert_eq!(xy.nrd(&alg), x.nrd(&alg) * y.nrd(&alg));
            assert_eq!(xy.trd(), yx.trd());
        }
    }

    #[test]
    fn definiteness() {
        let alg = QuaternionAlgebra { a: -1, b: -11 };
        for t in -3..3i64 {
            for x in -3..3i64 {
                for y in -3..3i64 {
                    for z in -3..3i64 {
                        let e = QuatElement::from_i64(t, x, y, z);
                        let n = e.nrd(&alg);
                        assert!(n >= Rat::zero());
                        assert_eq!(n.is_zero(), e.is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn fincke_pohst_matches_box_search() {
        // Norm shells on the Hurwitz order up to 50 against a naive box
        // search; one integer Gram pass over the box tallies every norm.
        let (alg, order) = construct_algebra_and_maximal_order(2);
        let gram = order.lattice.gram(&alg);
        let max_n = 50i128;
        // Per-coordinate bound from the dual form: c_i^2 <= 2n (G^-1)_ii.
        let ginv_diag_max: f64 = {
            let mut a = [[0f64; 8]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    a[i][j] = gram[i][j] as f64;
                }
                a[i][4 + i] = 1.0;
            }
            for col in 0..4 {
                let piv = (col..4).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
                a.swap(col, piv);
                let d = a[col][col];
                for r in 0..4 {
                    if r != col {
                        let f = a[r][col] / d;
                        for c in 0..8 {
                            a[r][c] -= f * a[col][c];
                        }
                    }
                }
            }
            (0..4).map(|i| a[i][4 + i] / a[i][i]).fold(0.0f64, f64::max)
        };
        let bound = ((2.0 * max_n as f64 * ginv_diag_max).sqrt() as i128) + 2;
        let mut tally = vec![0usize; (max_n + 1) as usize];
        for c0 in -bound..=bound {
            for c1 in -bound..=bound {
                for c2 in -bound..=bound {
                    for c3 in -bound..=bound {
                        let c = [c0, c1, c2, c3];
                        let mut s = 0i128;
                        for i in 0..4 {
                            for j in 0..4 {
                                s += gram[i][j] * c[i] * c[j];
                            }
                        }
                        if s % 2 == 0 && s / 2 <= max_n {
                            tally[(s / 2) as usize] += 1;
                        }
                    }
                }
            }
        }
        for n in 1..=max_n {
            let fast = order.elements_of_norm(n).len();
            assert_eq!(fast, tally[n as usize], "norm {}", n);
        }
    }

    #[test]
    fn ideal_classes_counts() {
        // H = 1 for q in {2, 3, 5, 7, 13}; H = 2 for q = 11.
        for (q, expect) in [(2u64, 1usize), (3, 1), (5, 1), (7, 1), (11, 2), (13, 1)] {
            let (_, order) = construct_algebra_and_maximal_order(q);
            let classes = ideal_classes(&order, if q == 3 { 2 } else { 3 });
            assert_eq!(classes.len(), expect, "q = {}", q);
            // Mass formula: sum of 1/|units| = (q-1)/24.
            let mass: Rat = classes
                .iter()
                .map(|c| Rat::new(BigInt::one(), BigInt::from(c.unit_count as i64)))
                .fold(Rat::zero(), |acc, v| acc + v);
            assert_eq!(mass, Rat::new(BigInt::from(q as i64 - 1), BigInt::from(24)));
        }
    }

    #[test]
    fn orientation_respects_unit_conjugation() {
        use rand::{Rng, SeedableRng};
        let (alg, order) = construct_algebra_and_maximal_order(2);
        let orientation = orientation_at_q(&order, 2);
        let units = order.unit_group();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let es = order.lattice.basis_elements();
        for _ in 0..50 {
            let x = combine(&es, &[
                rng.gen_range(-5..5),
                rng.gen_range(-5..5),
                rng.gen_range(-5..5),
                rng.gen_range(-5..5),
            ]);
            let base = orientation_of(&order, &orientation, &x);
            for u in &units {
                let y = u.mul(&x, &alg).mul(&u.conj(), &alg);
                assert!(order.contains(&y));
                assert_eq!(orientation_of(&order, &orientation, &y), base);
            }
        }
    }

    #[test]
    fn orientation_basics() {
        let (_, order) = construct_algebra_and_maximal_order(2);
        let o = orientation_at_q(&order, 2);
        // 1 -> 1, integers -> their residue in the prime field.
        assert_eq!(
            orientation_of(&order, &o, &QuatElement::one()),
            Fq2 { c0: 1, c1: 0 }
        );
        assert_eq!(
            orientation_of(&order, &o, &QuatElement::from_i64(3, 0, 0, 0)),
            Fq2 { c0: 1, c1: 0 }
        );
        // The two identifications differ by Frobenius: check the generator
        // image and its conjugate are the two roots.
        let tr_g;
        {
            // minimal polynomial data is internal; just verify Frobenius
            // moves the generator image.
            tr_g = o.field.frobenius(o.generator_image);
        }
        assert_ne!(tr_g, o.generator_image);
    }

    #[test]
    fn embedding_counts_match_class_numbers() {
        for (d, q, p, h) in [
            (-19i128, 2u64, 3u64, 1usize),
            (-43, 2, 3, 1),
            (-91, 2, 3, 2),
            (-4, 11, 3, 1),
            (-67, 11, 3, 1),
        ] {
            let classes = enumerate_optimal_embeddings(d, q, p).unwrap();
            assert_eq!(classes.len(), h, "(d, q, p) = ({}, {}, {})", d, q, p);
        }
    }

    #[test]
    fn embedding_preconditions() {
        assert!(matches!(
            enumerate_optimal_embeddings(-3, 2, 3),
            Err(QuatError::BadGcd { .. })
        ));
        // d = -11 is 1 mod 3, hence split at p = 3: rejected.
        assert!(matches!(
            enumerate_optimal_embeddings(-11, 2, 3),
            Err(QuatError::NotInert { .. })
        ));
        let empty = enumerate_optimal_embeddings(-7, 11, 3).unwrap();
        assert!(empty.is_empty());
    }
}
