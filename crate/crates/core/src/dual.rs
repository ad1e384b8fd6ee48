//! Second-order forward-mode differentiation.
//!
//! A [`D2Scalar`] carries a value together with its gradient and Hessian with
//! respect to the `m` ephemeral constants of a program. Evaluating a program
//! once over this algebra yields the prediction, its gradient and its Hessian.
//!
//! The Hessian is stored as a packed lower triangle, so symmetry holds by
//! construction.

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Packed derivative storage: `m` gradient entries followed by the
/// `m(m+1)/2` lower-triangular Hessian entries. Inline up to m = 5.
type Packed = SmallVec<[f64; 20]>;

#[inline]
pub(crate) fn tri(j: usize, k: usize) -> usize {
    let (hi, lo) = if j >= k { (j, k) } else { (k, j) };
    hi * (hi + 1) / 2 + lo
}

#[inline]
fn packed_len(m: usize) -> usize {
    m + m * (m + 1) / 2
}

#[derive(Clone, PartialEq)]
pub struct D2Scalar {
    value: f64,
    m: usize,
    data: Packed,
}

impl D2Scalar {
    /// A constant: zero gradient and zero Hessian.
    pub fn constant(value: f64, m: usize) -> Self {
        Self {
            value,
            m,
            data: SmallVec::from_elem(0.0, packed_len(m)),
        }
    }

    /// The `j`-th differentiation variable evaluated at `value`.
    pub fn seed(value: f64, j: usize, m: usize) -> Result<Self> {
        if j >= m {
            return Err(Error::IndexOutOfRange { index: j, len: m });
        }
        let mut out = Self::constant(value, m);
        out.data[j] = 1.0;
        Ok(out)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Number of differentiation variables.
    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn grad(&self) -> &[f64] {
        &self.data[..self.m]
    }

    pub fn hess(&self, j: usize, k: usize) -> f64 {
        assert!(j < self.m && k < self.m, "hessian index out of range");
        self.data[self.m + tri(j, k)]
    }

    /// Dense copy of the Hessian.
    pub fn hess_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.m)
            .map(|j| (0..self.m).map(|k| self.hess(j, k)).collect())
            .collect()
    }

    pub(crate) fn hess_packed(&self) -> &[f64] {
        &self.data[self.m..]
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.m != other.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: other.m,
            });
        }
        Ok(())
    }

    /// Applies `kernel`, checking operand dimensions. Unary kernels take
    /// `b = None`; binary kernels require `Some`.
    pub fn apply(kernel: Kernel, a: &Self, b: Option<&Self>) -> Result<Self> {
        match (kernel.arity(), b) {
            (2, None) => Err(Error::MissingOperand(kernel.name())),
            (2, Some(b)) => {
                a.check_dim(b)?;
                Ok(Self::apply_binary(kernel, a, b))
            }
            (_, Some(b)) => {
                a.check_dim(b)?;
                Ok(Self::apply_unary(kernel, a))
            }
            (_, None) => Ok(Self::apply_unary(kernel, a)),
        }
    }

    fn apply_binary(kernel: Kernel, a: &Self, b: &Self) -> Self {
        debug_assert_eq!(a.m, b.m);
        match kernel {
            Kernel::Add => a.zip(b, a.value + b.value, |x, y| x + y),
            Kernel::Sub => a.zip(b, a.value - b.value, |x, y| x - y),
            Kernel::Mul => a.mul(b),
            Kernel::Div => a.div(b),
            Kernel::Log | Kernel::Sin => Self::apply_unary(kernel, a),
        }
    }

    fn apply_unary(kernel: Kernel, a: &Self) -> Self {
        match kernel {
            // f = ln a, f' = 1/a, f'' = -1/a^2
            Kernel::Log => {
                let inv = 1.0 / a.value;
                a.chain(a.value.ln(), inv, -inv * inv)
            }
            Kernel::Sin => {
                // black_box keeps LLVM from fusing these into sincos, whose
                // sine can differ from `f64::sin` in the last bit.
                let s = a.value.sin();
                let c = std::hint::black_box(a.value).cos();
                a.chain(s, c, -s)
            }
            _ => unreachable!("binary kernel applied as unary"),
        }
    }

    fn zip(&self, other: &Self, value: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Self {
            value,
            m: self.m,
            data,
        }
    }

    /// Univariate chain rule: grad = f'·∇a, hess = f'·∇²a + f''·∇a∇aᵀ.
    fn chain(&self, value: f64, d1: f64, d2: f64) -> Self {
        let m = self.m;
        let g = self.grad();
        let h = self.hess_packed();
        let mut data = Packed::with_capacity(packed_len(m));
        data.extend(g.iter().map(|&x| d1 * x));
        for j in 0..m {
            for k in 0..=j {
                data.push(d1 * h[tri(j, k)] + d2 * g[j] * g[k]);
            }
        }
        Self { value, m, data }
    }

    fn mul(&self, other: &Self) -> Self {
        let m = self.m;
        let (a, b) = (self.value, other.value);
        let (ga, gb) = (self.grad(), other.grad());
        let (ha, hb) = (self.hess_packed(), other.hess_packed());
        let mut data = Packed::with_capacity(packed_len(m));
        data.extend((0..m).map(|j| a * gb[j] + b * ga[j]));
        for j in 0..m {
            for k in 0..=j {
                let t = tri(j, k);
                data.push(a * hb[t] + b * ha[t] + ga[j] * gb[k] + gb[j] * ga[k]);
            }
        }
        Self {
            value: a * b,
            m,
            data,
        }
    }

    /// Quotient q = a/b from a = q·b:
    /// ∇q = (∇a − q∇b)/b, ∇²q = (∇²a − q∇²b − ∇q∇bᵀ − ∇b∇qᵀ)/b.
    fn div(&self, other: &Self) -> Self {
        let m = self.m;
        let b = other.value;
        let q = self.value / b;
        let (ga, gb) = (self.grad(), other.grad());
        let (ha, hb) = (self.hess_packed(), other.hess_packed());
        let mut data = Packed::with_capacity(packed_len(m));
        data.extend((0..m).map(|j| (ga[j] - q * gb[j]) / b));
        for j in 0..m {
            for k in 0..=j {
                let t = tri(j, k);
                let (gqj, gqk) = (data[j], data[k]);
                data.push((ha[t] - q * hb[t] - gqj * gb[k] - gb[j] * gqk) / b);
            }
        }
        Self { value: q, m, data }
    }
}

impl fmt::Debug for D2Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("D2Scalar")
            .field("value", &self.value)
            .field("grad", &self.grad())
            .field("hess", &self.hess_matrix())
            .finish()
    }
}

/// A CGP function node kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Kernel {
    Add,
    Sub,
    Mul,
    Div,
    Log,
    Sin,
}

impl Kernel {
    pub const ALL: [Kernel; 6] = [
        Kernel::Add,
        Kernel::Sub,
        Kernel::Mul,
        Kernel::Div,
        Kernel::Log,
        Kernel::Sin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Add => "add",
            Kernel::Sub => "sub",
            Kernel::Mul => "mul",
            Kernel::Div => "div",
            Kernel::Log => "log",
            Kernel::Sin => "sin",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::UnknownKernel(name.to_string()))
    }

    pub fn arity(self) -> usize {
        match self {
            Kernel::Log | Kernel::Sin => 1,
            _ => 2,
        }
    }

    /// Plain real evaluation. Unprotected: non-finite results propagate.
    #[inline]
    pub fn apply_f64(self, a: f64, b: f64) -> f64 {
        match self {
            Kernel::Add => a + b,
            Kernel::Sub => a - b,
            Kernel::Mul => a * b,
            Kernel::Div => a / b,
            Kernel::Log => a.ln(),
            Kernel::Sin => a.sin(),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered, duplicate-free list of kernels. Position defines the integer
/// kernel gene.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct KernelSet(Vec<Kernel>);

impl KernelSet {
    pub fn new(kernels: Vec<Kernel>) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidParams("kernel set is empty".into()));
        }
        for (i, k) in kernels.iter().enumerate() {
            if kernels[..i].contains(k) {
                return Err(Error::DuplicateKernel(k.name().to_string()));
            }
        }
        Ok(Self(kernels))
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let kernels = names
            .iter()
            .map(|n| Kernel::from_name(n.as_ref().trim()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(kernels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, gene: usize) -> Kernel {
        self.0[gene]
    }

    pub fn iter(&self) -> impl Iterator<Item = Kernel> + '_ {
        self.0.iter().copied()
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(|k| k.name().to_string()).collect()
    }
}

impl TryFrom<Vec<String>> for KernelSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::from_names(&names)
    }
}

impl From<KernelSet> for Vec<String> {
    fn from(set: KernelSet) -> Self {
        set.names()
    }
}

/// The scalar algebra a CGP program can be evaluated over.
pub trait Scalar: Clone {
    /// Lifts an input feature (no sensitivity).
    fn input(value: f64, m: usize) -> Self;
    /// The `j`-th ephemeral constant terminal.
    fn ephemeral(value: f64, j: usize, m: usize) -> Self;
    /// Applies a kernel; `b` is ignored by unary kernels.
    fn apply(kernel: Kernel, a: &Self, b: &Self) -> Self;
    fn value(&self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn input(value: f64, _m: usize) -> Self {
        value
    }

    #[inline]
    fn ephemeral(value: f64, _j: usize, _m: usize) -> Self {
        value
    }

    #[inline]
    fn apply(kernel: Kernel, a: &Self, b: &Self) -> Self {
        kernel.apply_f64(*a, *b)
    }

    #[inline]
    fn value(&self) -> f64 {
        *self
    }
}

impl Scalar for D2Scalar {
    fn input(value: f64, m: usize) -> Self {
        D2Scalar::constant(value, m)
    }

    fn ephemeral(value: f64, j: usize, m: usize) -> Self {
        D2Scalar::seed(value, j, m).expect("constant index within m")
    }

    fn apply(kernel: Kernel, a: &Self, b: &Self) -> Self {
        if kernel.arity() == 1 {
            D2Scalar::apply_unary(kernel, a)
        } else {
            D2Scalar::apply_binary(kernel, a, b)
        }
    }

    fn value(&self) -> f64 {
        self.value
    }
}
