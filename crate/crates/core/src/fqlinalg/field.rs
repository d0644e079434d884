use std::fmt;

use super::LinalgError;

/// A prime field `F_q`. Elements are stored as canonical representatives in `[0, q)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldSpec {
    q: u32,
}

/// Binary operations exposed through [`FieldSpec::apply`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldOp {
    Add,
    Sub,
    Mul,
    Div,
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let n = n as u64;
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

impl FieldSpec {
    pub fn new(q: u32) -> Result<Self, LinalgError> {
        if is_prime(q) {
            Ok(Self { q })
        } else {
            Err(LinalgError::NotPrime(q))
        }
    }

    /// The binary field, used by every experiment in this crate.
    pub const fn binary() -> Self {
        Self { q: 2 }
    }

    #[inline]
    pub fn q(&self) -> u32 {
        self.q
    }

    #[inline]
    pub fn is_binary(&self) -> bool {
        self.q == 2
    }

    pub fn contains(&self, a: u32) -> bool {
        a < self.q
    }

    pub fn check(&self, a: u32) -> Result<u32, LinalgError> {
        if self.contains(a) {
            Ok(a)
        } else {
            Err(LinalgError::EntryOutOfRange { value: a, q: self.q })
        }
    }

    /// All field elements in increasing order.
    pub fn elements(&self) -> impl Iterator<Item = u32> {
        0..self.q
    }

    #[inline]
    pub fn add(&self, a: u32, b: u32) -> u32 {
        let s = a as u64 + b as u64;
        (s % self.q as u64) as u32
    }

    #[inline]
    pub fn neg(&self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: u32, b: u32) -> u32 {
        ((a as u64 * b as u64) % self.q as u64) as u32
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(&self, a: u32) -> Result<u32, LinalgError> {
        if a == 0 {
            return Err(LinalgError::DivisionByZero);
        }
        Ok(self.pow(a, self.q - 2))
    }

    pub fn pow(&self, a: u32, mut e: u32) -> u32 {
        let q = self.q as u64;
        let mut base = a as u64 % q;
        let mut acc = 1u64 % q;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base % q;
            }
            base = base * base % q;
            e >>= 1;
        }
        acc as u32
    }

    pub fn div(&self, a: u32, b: u32) -> Result<u32, LinalgError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn apply(&self, a: u32, b: u32, op: FieldOp) -> Result<u32, LinalgError> {
        self.check(a)?;
        self.check(b)?;
        match op {
            FieldOp::Add => Ok(self.add(a, b)),
            FieldOp::Sub => Ok(self.sub(a, b)),
            FieldOp::Mul => Ok(self.mul(a, b)),
            FieldOp::Div => self.div(a, b),
        }
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F_{}", self.q)
    }
}
