//! Fixed-precision arithmetic in Qp and in the unramified quadratic
//! extension Q_{p^2}.
//!
//! A nonzero element is stored as p^v * u with u a unit known modulo p^N;
//! N is the number of significant base-p digits. Operations propagate the
//! smallest precision of their inputs and fail loudly (rather than round)
//! when no significant digit survives, e.g. on full cancellation in a sum.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

/// Default number of significant base-p digits.
pub const DEFAULT_PRECISION: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PadicError {
    /// No significant digit survives the operation.
    #[error("p-adic precision exhausted: fewer than one significant digit remains")]
    PrecisionExhausted,
    #[error("division by zero in Qp")]
    DivisionByZero,
    /// The argument has no square root in the field at hand.
    #[error("no square root: {0}")]
    NoSquareRoot(String),
}

/// How d sits inside Qp^x modulo squares, for d a nonzero rational.
///
/// `Square` corresponds to a split quadratic algebra Qp(sqrt d), `UnitNonSquare`
/// to the unramified field Q_{p^2}, and `Ramified` to the two ramified classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SquareClass {
    Square,
    UnitNonSquare,
    Ramified,
}

fn pow_u(p: u64, n: u32) -> BigUint {
    BigUint::from(p).pow(n)
}

/// v_p of a nonzero integer.
fn int_valuation(n: &BigInt, p: u64) -> (u64, BigInt) {
    assert!(!n.is_zero());
    let p_big = BigInt::from(p);
    let mut v = 0u64;
    let mut m = n.clone();
    loop {
        let (q, r) = m.div_rem(&p_big);
        if r.is_zero() {
            v += 1;
            m = q;
        } else {
            return (v, m);
        }
    }
}

/// An element of Qp known to finite precision.
///
/// Zero is stored with an infinite-valuation sentinel (`repr == None`).
#[derive(Debug, Clone)]
pub struct Padic {
    prime: u64,
    repr: Option<Repr>,
}

#[derive(Debug, Clone)]
struct Repr {
    val: i64,
    /// Unit part in [1, p^prec), coprime to p.
    unit: BigUint,
    prec: u32,
}

impl Padic {
    pub fn zero(p: u64) -> Self {
        Padic { prime: p, repr: None }
    }

    pub fn one(p: u64, prec: u32) -> Self {
        Padic::from_int(p, &BigInt::one(), prec)
    }

    /// Exact integer input; the result carries `prec` significant digits.
    pub fn from_int(p: u64, n: &BigInt, prec: u32) -> Self {
        assert!(prec >= 1, "precision must be at least 1 digit");
        if n.is_zero() {
            return Padic::zero(p);
        }
        let (v, m) = int_valuation(n, p);
        let modulus = pow_u(p, prec);
        let unit = m.mod_floor(&BigInt::from(modulus.clone())).to_biguint().unwrap();
        Padic {
            prime: p,
            repr: Some(Repr { val: v as i64, unit, prec }),
        }
    }

    pub fn from_i64(p: u64, n: i64, prec: u32) -> Self {
        Padic::from_int(p, &BigInt::from(n), prec)
    }

    /// Exact rational input num/den, converted with `prec` digits.
    pub fn from_ratio(p: u64, num: &BigInt, den: &BigInt, prec: u32) -> Result<Self, PadicError> {
        if den.is_zero() {
            return Err(PadicError::DivisionByZero);
        }
        if num.is_zero() {
            return Ok(Padic::zero(p));
        }
        let (vn, mn) = int_valuation(num, p);
        let (vd, md) = int_valuation(den, p);
        let modulus = BigInt::from(pow_u(p, prec));
        let inv = mod_inverse(&md.mod_floor(&modulus), &modulus)
            .expect("denominator unit is invertible");
        let unit = (mn * inv).mod_floor(&modulus).to_biguint().unwrap();
        Ok(Padic {
            prime: p,
            repr: Some(Repr { val: vn as i64 - vd as i64, unit, prec }),
        })
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn is_zero(&self) -> bool {
        self.repr.is_none()
    }

    /// v_p, or None for the zero element (infinite valuation).
    pub fn valuation(&self) -> Option<i64> {
        self.repr.as_ref().map(|r| r.val)
    }

    /// Significant digits of the unit part; zero reports the default.
    pub fn precision(&self) -> u32 {
        self.repr.as_ref().map(|r| r.prec).map_or(DEFAULT_PRECISION, |n| n)
    }

    /// Unit part as an integer in [1, p^prec), or None for zero.
    pub fn unit_part(&self) -> Option<BigUint> {
        self.repr.as_ref().map(|r| r.unit.clone())
    }

    /// Base-p digits of the unit part, least significant first.
    pub fn unit_digits(&self) -> Vec<u64> {
        match &self.repr {
            None => vec![],
            Some(r) => {
                let mut digits = Vec::with_capacity(r.prec as usize);
                let p = BigUint::from(self.prime);
                let mut u = r.unit.clone();
                for _ in 0..r.prec {
                    let (q, rem) = u.div_rem(&p);
                    digits.push(rem.to_u64().unwrap());
                    u = q;
                }
                digits
            }
        }
    }

    /// The canonical rational representative sum_{v <= i < v+prec} c_i p^i.
    pub fn canonical_rational(&self) -> (BigInt, BigInt) {
        match &self.repr {
            None => (BigInt::zero(), BigInt::one()),
            Some(r) => {
                let num = BigInt::from(r.unit.clone());
                if r.val >= 0 {
                    (num * BigInt::from(self.prime).pow(r.val as u32), BigInt::one())
                } else {
                    (num, BigInt::from(self.prime).pow((-r.val) as u32))
                }
            }
        }
    }

    fn truncate(&self, prec: u32) -> Padic {
        match &self.repr {
            None => self.clone(),
            Some(r) => {
                assert!(prec >= 1);
                if prec >= r.prec {
                    return self.clone();
                }
                let modulus = pow_u(self.prime, prec);
                let unit = &r.unit % &modulus;
                if unit.is_zero() {
                    // Truncation may not erase the leading digit: units are
                    // coprime to p, so this cannot happen.
                    unreachable!("unit part cannot vanish under truncation");
                }
                Padic {
                    prime: self.prime,
                    repr: Some(Repr { val: r.val, unit, prec }),
                }
            }
        }
    }

    pub fn neg(&self) -> Padic {
        match &self.repr {
            None => self.clone(),
            Some(r) => {
                let modulus = pow_u(self.prime, r.prec);
                Padic {
                    prime: self.prime,
                    repr: Some(Repr { val: r.val, unit: &modulus - &r.unit, prec: r.prec }),
                }
            }
        }
    }

    pub fn add(&self, other: &Padic) -> Result<Padic, PadicError> {
        self.add_or_floor(other).map_err(|_| PadicError::PrecisionExhausted)
    }

    /// Like `add`, but on full cancellation reports the certified floor f:
    /// the sum is known to vanish modulo p^f, with digits beyond unknown.
    pub fn add_or_floor(&self, other: &Padic) -> Result<Padic, i64> {
        assert_eq!(self.prime, other.prime);
        let (a, b) = match (&self.repr, &other.repr) {
            (None, _) => return Ok(other.clone()),
            (_, None) => return Ok(self.clone()),
            (Some(a), Some(b)) => (a, b),
        };
        // Align to the smaller valuation: p^va*(ua + p^(vb-va) ub).
        let (lo, hi) = if a.val <= b.val { (a, b) } else { (b, a) };
        let shift = (hi.val - lo.val) as u32;
        // Digits of the sum are known modulo p^min(lo.prec, shift + hi.prec).
        let known = lo.prec.min(shift.saturating_add(hi.prec));
        let modulus = pow_u(self.prime, known);
        let sum = (&lo.unit + &hi.unit * pow_u(self.prime, shift)) % &modulus;
        if sum.is_zero() {
            // All known digits cancel: valuation >= lo.val + known certified.
            return Err(lo.val + known as i64);
        }
        let sum_int = BigInt::from(sum);
        let (extra_v, m) = int_valuation(&sum_int, self.prime);
        let extra_v = extra_v as u32;
        debug_assert!(extra_v < known);
        let prec = known - extra_v;
        let unit = m
            .mod_floor(&BigInt::from(pow_u(self.prime, prec)))
            .to_biguint()
            .unwrap();
        Ok(Padic {
            prime: self.prime,
            repr: Some(Repr { val: lo.val + extra_v as i64, unit, prec }),
        })
    }

    pub fn sub(&self, other: &Padic) -> Result<Padic, PadicError> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Padic) -> Result<Padic, PadicError> {
        assert_eq!(self.prime, other.prime);
        let (a, b) = match (&self.repr, &other.repr) {
            (None, _) | (_, None) => return Ok(Padic::zero(self.prime)),
            (Some(a), Some(b)) => (a, b),
        };
        let prec = a.prec.min(b.prec);
        let modulus = pow_u(self.prime, prec);
        let unit = (&a.unit * &b.unit) % &modulus;
        Ok(Padic {
            prime: self.prime,
            repr: Some(Repr { val: a.val + b.val, unit, prec }),
        })
    }

    pub fn inv(&self) -> Result<Padic, PadicError> {
        let r = self.repr.as_ref().ok_or(PadicError::DivisionByZero)?;
        let modulus = BigInt::from(pow_u(self.prime, r.prec));
        let inv = mod_inverse(&BigInt::from(r.unit.clone()), &modulus).unwrap();
        Ok(Padic {
            prime: self.prime,
            repr: Some(Repr { val: -r.val, unit: inv.to_biguint().unwrap(), prec: r.prec }),
        })
    }

    pub fn div(&self, other: &Padic) -> Result<Padic, PadicError> {
        self.mul(&other.inv()?)
    }

    pub fn mul_pow_p(&self, k: i64) -> Padic {
        match &self.repr {
            None => self.clone(),
            Some(r) => Padic {
                prime: self.prime,
                repr: Some(Repr { val: r.val + k, unit: r.unit.clone(), prec: r.prec }),
            },
        }
    }

    /// Whether the element is a square in Qp^x; zero counts as a square.
    pub fn is_square(&self) -> bool {
        match self.square_class() {
            None => true,
            Some(SquareClass::Square) => true,
            _ => false,
        }
    }

    /// Square class of a nonzero element; None for zero.
    pub fn square_class(&self) -> Option<SquareClass> {
        let r = self.repr.as_ref()?;
        if r.val % 2 != 0 {
            return Some(SquareClass::Ramified);
        }
        if self.prime == 2 {
            // Needs three digits of the unit to decide.
            assert!(r.prec >= 3, "square class mod 2 needs at least 3 digits");
            let m = (&r.unit % BigUint::from(8u32)).to_u64().unwrap();
            Some(match m {
                1 => SquareClass::Square,
                5 => SquareClass::UnitNonSquare,
                _ => SquareClass::Ramified,
            })
        } else {
            let m = (&r.unit % BigUint::from(self.prime)).to_u64().unwrap();
            if legendre_unit(m, self.prime) == 1 {
                Some(SquareClass::Square)
            } else {
                Some(SquareClass::UnitNonSquare)
            }
        }
    }

    /// Canonical Hensel square root.
    ///
    /// For odd p the branch with residue mod p in [1, (p-1)/2] is returned;
    /// for p = 2 the branch congruent to 1 mod 4. The result carries one
    /// digit fewer than the input when p = 2.
    pub fn sqrt(&self) -> Result<Padic, PadicError> {
        let r = self.repr.as_ref().ok_or_else(|| {
            PadicError::NoSquareRoot("square root of zero is zero; nonzero input required".into())
        })?;
        if r.val % 2 != 0 {
            return Err(PadicError::NoSquareRoot(format!(
                "odd valuation {} has no square root in Qp",
                r.val
            )));
        }
        let half_val = r.val / 2;
        let p = self.prime;
        if p == 2 {
            if r.prec < 3 {
                return Err(PadicError::PrecisionExhausted);
            }
            let m = (&r.unit % BigUint::from(8u32)).to_u64().unwrap();
            if m != 1 {
                return Err(PadicError::NoSquareRoot(format!(
                    "2-adic unit congruent to {} mod 8 is not a square",
                    m
                )));
            }
            // Lift digit by digit: x odd, x^2 = u mod 2^k implies x or
            // x + 2^(k-1) works mod 2^(k+1).
            let n = r.prec;
            let mut x = BigUint::one();
            for k in 3..n {
                let modulus = pow_u(2, k + 1);
                if (&x * &x) % &modulus != &r.unit % &modulus {
                    x += pow_u(2, k - 1);
                }
            }
            // The root is determined mod 2^(n-1); normalize to 1 mod 4.
            let out_prec = n - 1;
            let modulus = pow_u(2, out_prec);
            let mut root = x % &modulus;
            if (&root % BigUint::from(4u32)).to_u64().unwrap() != 1 {
                root = &modulus - &root;
            }
            Ok(Padic {
                prime: p,
                repr: Some(Repr { val: half_val, unit: root, prec: out_prec }),
            })
        } else {
            let m = (&r.unit % BigUint::from(p)).to_u64().unwrap();
            if legendre_unit(m, p) != 1 {
                return Err(PadicError::NoSquareRoot(format!(
                    "unit {} is a quadratic non-residue mod {}",
                    m, p
                )));
            }
            // Seed by brute force over residues; p is small here.
            let seed = (1..p).find(|x| (x * x) % p == m).unwrap();
            let n = r.prec;
            let modulus = BigInt::from(pow_u(p, n));
            let u = BigInt::from(r.unit.clone());
            let mut x = BigInt::from(seed);
            // Newton: x <- (x + u/x)/2, doubling correct digits each step.
            let two_inv = mod_inverse(&BigInt::from(2), &modulus).unwrap();
            let mut correct = 1u32;
            while correct < n {
                let x_inv = mod_inverse(&x, &modulus).unwrap();
                x = ((&x + &u * x_inv) * &two_inv).mod_floor(&modulus);
                correct = correct.saturating_mul(2);
            }
            debug_assert_eq!((&x * &x).mod_floor(&modulus), u.mod_floor(&modulus));
            let mut root = x.to_biguint().unwrap();
            // Canonical branch: residue mod p in [1, (p-1)/2].
            let res = (&root % BigUint::from(p)).to_u64().unwrap();
            if res > (p - 1) / 2 {
                root = pow_u(p, n) - &root;
            }
            Ok(Padic {
                prime: p,
                repr: Some(Repr { val: half_val, unit: root, prec: n }),
            })
        }
    }
}

/// Agreement at the smaller of the two precisions.
impl PartialEq for Padic {
    fn eq(&self, other: &Self) -> bool {
        if self.prime != other.prime {
            return false;
        }
        match (&self.repr, &other.repr) {
            (None, None) => true,
            (Some(a), Some(b)) => {
                if a.val != b.val {
                    return false;
                }
                let prec = a.prec.min(b.prec);
                let modulus = pow_u(self.prime, prec);
                &a.unit % &modulus == &b.unit % &modulus
            }
            _ => false,
        }
    }
}

impl std::fmt::Display for Padic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.repr {
            None => write!(f, "0"),
            Some(r) => write!(f, "{}^{} * {} (mod {}^{})", self.prime, r.val, r.unit, self.prime, r.val + r.prec as i64),
        }
    }
}

fn mod_inverse(a: &BigInt, modulus: &BigInt) -> Option<BigInt> {
    let e = a.extended_gcd(modulus);
    if e.gcd.is_one() {
        Some(e.x.mod_floor(modulus))
    } else {
        None
    }
}

fn legendre_unit(mut a: u64, p: u64) -> i64 {
    a %= p;
    debug_assert!(a != 0);
    // Euler's criterion by fast exponentiation.
    let mut result = 1u64;
    let mut base = a % p;
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

/// Defining data of the unramified quadratic extension Q_{p^2} = Qp(w).
///
/// For odd p, w^2 = u with u the smallest positive non-residue mod p.
/// For p = 2, w^2 + w + 1 = 0 (w is a primitive cube root of unity).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtGenerator {
    pub prime: u64,
    /// Some(u) for odd p; None marks the p = 2 generator with w^2 = -w - 1.
    pub omega_square: Option<u64>,
}

impl ExtGenerator {
    pub fn for_prime(p: u64) -> Self {
        if p == 2 {
            ExtGenerator { prime: 2, omega_square: None }
        } else {
            let u = (2..p).find(|&u| legendre_unit(u, p) == -1).expect("non-residue exists");
            ExtGenerator { prime: p, omega_square: Some(u) }
        }
    }
}

/// An element x + y*w of Q_{p^2}, both coordinates at working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadExt {
    pub x: Padic,
    pub y: Padic,
    pub gen: ExtGenerator,
}

impl QuadExt {
    pub fn new(x: Padic, y: Padic, gen: ExtGenerator) -> Self {
        assert_eq!(x.prime(), gen.prime);
        assert_eq!(y.prime(), gen.prime);
        QuadExt { x, y, gen }
    }

    pub fn from_base(x: Padic, gen: ExtGenerator) -> Self {
        let p = gen.prime;
        QuadExt::new(x, Padic::zero(p), gen)
    }

    pub fn omega(gen: ExtGenerator, prec: u32) -> Self {
        let p = gen.prime;
        QuadExt::new(Padic::zero(p), Padic::one(p, prec), gen)
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero() && self.y.is_zero()
    }

    /// Lies in the base field Qp.
    pub fn is_rational(&self) -> bool {
        self.y.is_zero()
    }

    pub fn add(&self, other: &QuadExt) -> Result<QuadExt, PadicError> {
        assert_eq!(self.gen, other.gen);
        Ok(QuadExt::new(self.x.add(&other.x)?, self.y.add(&other.y)?, self.gen))
    }

    pub fn sub(&self, other: &QuadExt) -> Result<QuadExt, PadicError> {
        assert_eq!(self.gen, other.gen);
        Ok(QuadExt::new(self.x.sub(&other.x)?, self.y.sub(&other.y)?, self.gen))
    }

    pub fn neg(&self) -> QuadExt {
        QuadExt::new(self.x.neg(), self.y.neg(), self.gen)
    }

    pub fn mul(&self, other: &QuadExt) -> Result<QuadExt, PadicError> {
        assert_eq!(self.gen, other.gen);
        let (x1, y1, x2, y2) = (&self.x, &self.y, &other.x, &other.y);
        let prec_c = x1
            .precision()
            .max(y1.precision())
            .max(x2.precision())
            .max(y2.precision());
        match self.gen.omega_square {
            Some(u) => {
                // (x1 + y1 w)(x2 + y2 w) = x1x2 + u y1y2 + (x1y2 + x2y1) w.
                let u = Padic::from_i64(self.gen.prime, u as i64, prec_c);
                let xx = x1.mul(x2)?;
                let yy = y1.mul(y2)?.mul(&u)?;
                let x = xx.add(&yy)?;
                let y = x1.mul(y2)?.add(&x2.mul(y1)?)?;
                Ok(QuadExt::new(x, y, self.gen))
            }
            None => {
                // w^2 = -1 - w: x = x1x2 - y1y2, y = x1y2 + x2y1 - y1y2.
                let yy = y1.mul(y2)?;
                let x = x1.mul(x2)?.sub(&yy)?;
                let y = x1.mul(y2)?.add(&x2.mul(y1)?)?.sub(&yy)?;
                Ok(QuadExt::new(x, y, self.gen))
            }
        }
    }

    /// Galois conjugate over Qp.
    pub fn conj(&self) -> Result<QuadExt, PadicError> {
        match self.gen.omega_square {
            Some(_) => Ok(QuadExt::new(self.x.clone(), self.y.neg(), self.gen)),
            // Frobenius sends w to w^2 = -1 - w: x + yw -> (x - y) - yw.
            None => Ok(QuadExt::new(self.x.sub(&self.y)?, self.y.neg(), self.gen)),
        }
    }

    /// Field norm to Qp: elem * conj(elem).
    pub fn norm(&self) -> Result<Padic, PadicError> {
        match self.gen.omega_square {
            Some(u) => {
                let u = Padic::from_i64(self.gen.prime, u as i64, self.precision_floor());
                // x^2 - u y^2; avoid spurious cancellation errors when y = 0.
                if self.y.is_zero() {
                    return self.x.mul(&self.x);
                }
                if self.x.is_zero() {
                    return Ok(self.y.mul(&self.y)?.mul(&u)?.neg());
                }
                self.x.mul(&self.x)?.sub(&self.y.mul(&self.y)?.mul(&u)?)
            }
            None => {
                // x^2 - xy + y^2.
                if self.y.is_zero() {
                    return self.x.mul(&self.x);
                }
                if self.x.is_zero() {
                    return self.y.mul(&self.y);
                }
                let xx = self.x.mul(&self.x)?;
                let yy = self.y.mul(&self.y)?;
                let xy = self.x.mul(&self.y)?;
                xx.sub(&xy)?.add(&yy)
            }
        }
    }

    /// Field trace to Qp.
    pub fn trace(&self) -> Result<Padic, PadicError> {
        let two = Padic::from_i64(self.gen.prime, 2, self.precision_floor());
        match self.gen.omega_square {
            Some(_) => self.x.mul(&two),
            // trace(x + yw) = 2x - y.
            None => self.x.mul(&two)?.sub(&self.y),
        }
    }

    pub fn inv(&self) -> Result<QuadExt, PadicError> {
        if self.is_zero() {
            return Err(PadicError::DivisionByZero);
        }
        let n = self.norm()?;
        let n_inv = n.inv()?;
        let c = self.conj()?;
        Ok(QuadExt::new(c.x.mul(&n_inv)?, c.y.mul(&n_inv)?, self.gen))
    }

    fn precision_floor(&self) -> u32 {
        self.x.precision().min(self.y.precision())
    }

    /// Canonical square root of a rational d inside Q_{p^2}.
    ///
    /// Requires d to have even p-valuation with unit part a non-square
    /// (the inert case); errors with NoSquareRoot otherwise. The branch is
    /// fixed by the canonical Hensel branch of the base-field root used.
    pub fn sqrt_of_rational(d: &BigInt, gen: ExtGenerator, prec: u32) -> Result<QuadExt, PadicError> {
        let p = gen.prime;
        let dp = Padic::from_int(p, d, prec);
        let r = dp.repr.as_ref().ok_or_else(|| {
            PadicError::NoSquareRoot("zero input".into())
        })?;
        if r.val % 2 != 0 {
            return Err(PadicError::NoSquareRoot(
                "odd valuation: sqrt lies in a ramified extension".into(),
            ));
        }
        match dp.square_class() {
            Some(SquareClass::Square) => {
                // Already rational; return it as an extension element.
                Ok(QuadExt::from_base(dp.sqrt()?, gen))
            }
            Some(SquareClass::UnitNonSquare) => match gen.omega_square {
                Some(u) => {
                    // sqrt(d) = sqrt(d/u) * w.
                    let u_p = Padic::from_i64(p, u as i64, prec);
                    let quotient = dp.div(&u_p)?;
                    let s = quotient.sqrt()?;
                    Ok(QuadExt::new(Padic::zero(p), s, gen))
                }
                None => {
                    // (1 + 2w)^2 = -3, so sqrt(d) = sqrt(-d/3) * (1 + 2w).
                    let m3 = Padic::from_i64(2, -3, prec);
                    let quotient = dp.div(&m3)?;
                    let s = quotient.sqrt()?;
                    let two = Padic::from_i64(2, 2, prec);
                    Ok(QuadExt::new(s.clone(), s.mul(&two)?, gen))
                }
            },
            _ => Err(PadicError::NoSquareRoot(
                "ramified square class: no root in the unramified extension".into(),
            )),
        }
    }
}

/// A p-adic quantity that is either known to some digits or only certified
/// to vanish modulo p^floor.
///
/// The second state arises from full cancellation in sums of finite-precision
/// values: nothing is known beyond a lower bound on the valuation. The
/// calculus below propagates that bound soundly; consumers decide whether the
/// bound suffices (e.g. a vertex reduction needing digits only below p^a).
#[derive(Debug, Clone)]
pub enum Approx {
    Known(Padic),
    ZeroMod { prime: u64, floor: i64 },
}

impl Approx {
    pub fn known(x: Padic) -> Self {
        Approx::Known(x)
    }

    pub fn prime(&self) -> u64 {
        match self {
            Approx::Known(x) => x.prime(),
            Approx::ZeroMod { prime, .. } => *prime,
        }
    }

    /// Exact valuation if available: Some(None) is exact zero.
    pub fn exact_valuation(&self) -> Option<Option<i64>> {
        match self {
            Approx::Known(x) => Some(x.valuation()),
            Approx::ZeroMod { .. } => None,
        }
    }

    /// A certified lower bound on the valuation; None means exact zero.
    pub fn valuation_floor(&self) -> Option<i64> {
        match self {
            Approx::Known(x) => x.valuation(),
            Approx::ZeroMod { floor, .. } => Some(*floor),
        }
    }

    pub fn add(&self, other: &Approx) -> Approx {
        match (self, other) {
            (Approx::Known(a), Approx::Known(b)) => match a.add_or_floor(b) {
                Ok(x) => Approx::Known(x),
                Err(floor) => Approx::ZeroMod { prime: a.prime(), floor },
            },
            (Approx::Known(a), Approx::ZeroMod { prime, floor })
            | (Approx::ZeroMod { prime, floor }, Approx::Known(a)) => match a.valuation() {
                None => Approx::ZeroMod { prime: *prime, floor: *floor },
                Some(v) if v < *floor => {
                    // Digits of a below the floor survive; beyond is unknown.
                    let keep = ((*floor - v) as u64).min(a.precision() as u64) as u32;
                    Approx::Known(a.truncate(keep))
                }
                Some(_) => Approx::ZeroMod { prime: *prime, floor: *floor },
            },
            (Approx::ZeroMod { prime, floor: f1 }, Approx::ZeroMod { floor: f2, .. }) => {
                Approx::ZeroMod { prime: *prime, floor: (*f1).min(*f2) }
            }
        }
    }

    pub fn neg(&self) -> Approx {
        match self {
            Approx::Known(x) => Approx::Known(x.neg()),
            z => z.clone(),
        }
    }

    pub fn sub(&self, other: &Approx) -> Approx {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Approx) -> Approx {
        match (self, other) {
            (Approx::Known(a), Approx::Known(b)) => Approx::Known(a.mul(b).expect("mul is total")),
            (Approx::Known(a), Approx::ZeroMod { prime, floor })
            | (Approx::ZeroMod { prime, floor }, Approx::Known(a)) => match a.valuation() {
                None => Approx::Known(Padic::zero(*prime)),
                Some(v) => Approx::ZeroMod { prime: *prime, floor: *floor + v },
            },
            (
                Approx::ZeroMod { prime, floor: f1 },
                Approx::ZeroMod { floor: f2, .. },
            ) => Approx::ZeroMod { prime: *prime, floor: *f1 + *f2 },
        }
    }

    /// Division by a known nonzero value.
    pub fn div_known(&self, d: &Padic) -> Result<Approx, PadicError> {
        let vd = d.valuation().ok_or(PadicError::DivisionByZero)?;
        match self {
            Approx::Known(x) => Ok(Approx::Known(x.div(d)?)),
            Approx::ZeroMod { prime, floor } => {
                Ok(Approx::ZeroMod { prime: *prime, floor: *floor - vd })
            }
        }
    }
}
