//! Real/complex scalar abstraction shared by every field container.

use num_complex::Complex64;
use num_traits::{One, Zero};
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

pub type C64 = Complex64;

pub trait Scalar:
    Copy
    + Send
    + Sync
    + Debug
    + Default
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    const IS_COMPLEX: bool;

    fn conj(self) -> Self;
    fn norm_sqr(self) -> f64;
    fn re(self) -> f64;
    fn from_re(x: f64) -> Self;
    /// `None` when the value has a non-zero imaginary part and `Self` is real.
    fn from_complex(z: C64) -> Option<Self>;
    fn to_complex(self) -> C64;
    fn is_finite(self) -> bool;
    fn exp(self) -> Self;

    fn abs(self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn norm_sqr(self) -> f64 {
        self * self
    }
    #[inline]
    fn re(self) -> f64 {
        self
    }
    #[inline]
    fn from_re(x: f64) -> Self {
        x
    }
    #[inline]
    fn from_complex(z: C64) -> Option<Self> {
        if z.im == 0.0 {
            Some(z.re)
        } else {
            None
        }
    }
    #[inline]
    fn to_complex(self) -> C64 {
        C64::new(self, 0.0)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

impl Scalar for C64 {
    const IS_COMPLEX: bool = true;

    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    #[inline]
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    #[inline]
    fn re(self) -> f64 {
        self.re
    }
    #[inline]
    fn from_re(x: f64) -> Self {
        C64::new(x, 0.0)
    }
    #[inline]
    fn from_complex(z: C64) -> Option<Self> {
        Some(z)
    }
    #[inline]
    fn to_complex(self) -> C64 {
        self
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    #[inline]
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
}

/// Deterministic pairwise-tree sum. The split points depend only on the
/// length, so the result is independent of thread count.
pub fn pairwise_sum<S: Scalar>(xs: &[S]) -> S {
    const LEAF: usize = 256;
    if xs.len() <= LEAF {
        let mut acc = S::zero();
        for &x in xs {
            acc += x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    let (a, b) = xs.split_at(mid);
    if xs.len() > 1 << 16 {
        let (sa, sb) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
        sa + sb
    } else {
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Pairwise-tree sum of `f(i)` for `i in 0..n`.
pub fn pairwise_map_sum<S: Scalar, F>(n: usize, f: &F) -> S
where
    F: Fn(usize) -> S + Sync,
{
    fn rec<S: Scalar, F: Fn(usize) -> S + Sync>(lo: usize, hi: usize, f: &F) -> S {
        const LEAF: usize = 256;
        if hi - lo <= LEAF {
            let mut acc = S::zero();
            for i in lo..hi {
                acc += f(i);
            }
            return acc;
        }
        let mid = lo + (hi - lo) / 2;
        if hi - lo > 1 << 16 {
            let (a, b) = rayon::join(|| rec(lo, mid, f), || rec(mid, hi, f));
            a + b
        } else {
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, f)
}
