//! Cartesian Genetic Programming chromosome.
//!
//! The integer part of a chromosome lists, for each of the `rows × columns`
//! function nodes (column-major), a kernel gene followed by two connection
//! genes, and finally a single output gene. Input terminals are addressed
//! first: features `x0..x{n-1}`, then the ephemeral constants `c0..c{m-1}`.
//! Node `i` has address `n_features + m + i`.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{Kernel, KernelSet, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgpParams {
    pub n_features: usize,
    pub n_constants: usize,
    pub rows: usize,
    pub columns: usize,
    pub levels_back: usize,
    pub kernels: KernelSet,
}

impl CgpParams {
    pub fn new(
        n_features: usize,
        n_constants: usize,
        rows: usize,
        columns: usize,
        levels_back: usize,
        kernels: KernelSet,
    ) -> Result<Self> {
        let params = Self {
            n_features,
            n_constants,
            rows,
            columns,
            levels_back,
            kernels,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::InvalidParams("at least one feature is required".into()));
        }
        if self.rows == 0 || self.columns == 0 {
            return Err(Error::InvalidParams("rows and columns must be ≥ 1".into()));
        }
        if self.levels_back == 0 || self.levels_back > self.columns {
            return Err(Error::InvalidParams(format!(
                "levels_back must lie in [1, {}], got {}",
                self.columns, self.levels_back
            )));
        }
        if self.kernels.is_empty() {
            return Err(Error::InvalidParams("kernel set is empty".into()));
        }
        Ok(())
    }

    /// Number of input terminals (features plus constants).
    pub fn n_inputs(&self) -> usize {
        self.n_features + self.n_constants
    }

    pub fn n_nodes(&self) -> usize {
        self.rows * self.columns
    }

    pub fn n_genes(&self) -> usize {
        3 * self.n_nodes() + 1
    }

    pub fn output_gene(&self) -> usize {
        3 * self.n_nodes()
    }

    /// Legal values of the gene at `pos`.
    pub fn gene_range(&self, pos: usize) -> GeneRange {
        assert!(pos < self.n_genes(), "gene position out of range");
        let n_in = self.n_inputs();
        if pos == self.output_gene() {
            return GeneRange::Address {
                terminals: n_in,
                node_lo: n_in,
                node_hi: n_in + self.n_nodes(),
            };
        }
        let node = pos / 3;
        if pos % 3 == 0 {
            return GeneRange::Kernel(self.kernels.len());
        }
        let column = node / self.rows;
        let first_column = column.saturating_sub(self.levels_back);
        GeneRange::Address {
            terminals: n_in,
            node_lo: n_in + self.rows * first_column,
            node_hi: n_in + self.rows * column,
        }
    }
}

/// The set of values a single gene may take.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeneRange {
    /// `0..n`
    Kernel(usize),
    /// `0..terminals` ∪ `node_lo..node_hi`
    Address {
        terminals: usize,
        node_lo: usize,
        node_hi: usize,
    },
}

impl GeneRange {
    pub fn size(&self) -> usize {
        match *self {
            GeneRange::Kernel(n) => n,
            GeneRange::Address {
                terminals,
                node_lo,
                node_hi,
            } => terminals + (node_hi - node_lo),
        }
    }

    pub fn contains(&self, value: usize) -> bool {
        match *self {
            GeneRange::Kernel(n) => value < n,
            GeneRange::Address {
                terminals,
                node_lo,
                node_hi,
            } => value < terminals || (node_lo..node_hi).contains(&value),
        }
    }

    fn nth(&self, i: usize) -> usize {
        match *self {
            GeneRange::Kernel(_) => i,
            GeneRange::Address {
                terminals, node_lo, ..
            } => {
                if i < terminals {
                    i
                } else {
                    node_lo + (i - terminals)
                }
            }
        }
    }

    fn position(&self, value: usize) -> usize {
        match *self {
            GeneRange::Kernel(_) => value,
            GeneRange::Address {
                terminals, node_lo, ..
            } => {
                if value < terminals {
                    value
                } else {
                    terminals + (value - node_lo)
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.nth(rng.gen_range(0..self.size()))
    }

    /// Uniform over the range minus `current`; `current` itself when the
    /// range has a single value.
    pub fn sample_other<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> usize {
        let size = self.size();
        if size < 2 {
            return current;
        }
        let skip = self.position(current);
        let mut i = rng.gen_range(0..size - 1);
        if i >= skip {
            i += 1;
        }
        self.nth(i)
    }
}

/// Distribution for freshly drawn ephemeral constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstInit {
    Uniform { low: f64, high: f64 },
}

impl Default for ConstInit {
    fn default() -> Self {
        ConstInit::Uniform {
            low: -1.0,
            high: 1.0,
        }
    }
}

impl ConstInit {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ConstInit::Uniform { low, high } if low < high => rng.gen_range(low..high),
            ConstInit::Uniform { low, .. } => low,
        }
    }
}

/// How constants are printed by [`Genotype::decode_infix_with`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstFormat {
    /// Fixed number of significant digits.
    Significant(usize),
    /// Shortest representation that parses back to the same `f64`.
    Exact,
}

impl ConstFormat {
    pub fn render(&self, v: f64) -> String {
        match *self {
            ConstFormat::Exact => format!("{v:?}"),
            ConstFormat::Significant(digits) => {
                let digits = digits.max(1);
                if v == 0.0 || !v.is_finite() {
                    return format!("{:.*}", digits - 1, v);
                }
                let exp = v.abs().log10().floor() as i32;
                if (-5..15).contains(&exp) {
                    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
                    format!("{v:.decimals$}")
                } else {
                    format!("{:.*e}", digits - 1, v)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genotype {
    pub genes: Vec<usize>,
    pub constants: Vec<f64>,
}

impl Genotype {
    pub fn new(genes: Vec<usize>, constants: Vec<f64>, params: &CgpParams) -> Result<Self> {
        let g = Self { genes, constants };
        g.validate(params)?;
        Ok(g)
    }

    pub fn random<R: Rng + ?Sized>(params: &CgpParams, rng: &mut R, init: &ConstInit) -> Self {
        let genes = (0..params.n_genes())
            .map(|pos| params.gene_range(pos).sample(rng))
            .collect();
        let constants = (0..params.n_constants).map(|_| init.sample(rng)).collect();
        Self { genes, constants }
    }

    pub fn validate(&self, params: &CgpParams) -> Result<()> {
        if self.genes.len() != params.n_genes() {
            return Err(Error::InvalidGenotype(format!(
                "expected {} genes, got {}",
                params.n_genes(),
                self.genes.len()
            )));
        }
        if self.constants.len() != params.n_constants {
            return Err(Error::InvalidGenotype(format!(
                "expected {} constants, got {}",
                params.n_constants,
                self.constants.len()
            )));
        }
        if let Some(c) = self.constants.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidGenotype(format!("non-finite constant {c}")));
        }
        for (pos, &gene) in self.genes.iter().enumerate() {
            if !params.gene_range(pos).contains(gene) {
                return Err(Error::InvalidGenotype(format!(
                    "gene {pos} has illegal value {gene}"
                )));
            }
        }
        Ok(())
    }

    fn kernel(&self, params: &CgpParams, node: usize) -> Kernel {
        params.kernels.get(self.genes[3 * node])
    }

    pub fn output(&self, params: &CgpParams) -> usize {
        self.genes[params.output_gene()]
    }

    /// Node indices reachable from the output gene, in evaluation order.
    pub fn active_nodes(&self, params: &CgpParams) -> Vec<usize> {
        let n_in = params.n_inputs();
        let mut active = vec![false; params.n_nodes()];
        let out = self.output(params);
        if out >= n_in {
            active[out - n_in] = true;
        }
        for node in (0..params.n_nodes()).rev() {
            if !active[node] {
                continue;
            }
            let arity = self.kernel(params, node).arity();
            for &addr in &self.genes[3 * node + 1..3 * node + 1 + arity] {
                if addr >= n_in {
                    active[addr - n_in] = true;
                }
            }
        }
        (0..params.n_nodes()).filter(|&i| active[i]).collect()
    }

    /// Number of active function nodes.
    pub fn complexity(&self, params: &CgpParams) -> usize {
        self.active_nodes(params).len()
    }

    /// Redraws between 1 and `max_mutations` distinct integer genes. The
    /// constants are copied unchanged.
    pub fn mutate<R: Rng + ?Sized>(
        &self,
        params: &CgpParams,
        max_mutations: usize,
        rng: &mut R,
    ) -> Genotype {
        let n = params.n_genes();
        let k = rng.gen_range(1..=max_mutations.clamp(1, n));
        let mut genes = self.genes.clone();
        for pos in index::sample(rng, n, k) {
            genes[pos] = params.gene_range(pos).sample_other(genes[pos], rng);
        }
        Genotype {
            genes,
            constants: self.constants.clone(),
        }
    }

    pub fn program(&self, params: &CgpParams) -> Program {
        Program::compile(self, params)
    }

    /// Evaluates the expressed program on one input vector.
    pub fn evaluate<S: Scalar>(&self, params: &CgpParams, inputs: &[f64]) -> S {
        let mut buf = Vec::new();
        self.program(params).eval(inputs, &self.constants, &mut buf)
    }

    /// Fully parenthesized infix form with six significant digits for
    /// constants.
    pub fn decode_infix(&self, params: &CgpParams, names: Option<&[String]>) -> String {
        self.decode_infix_with(params, names, ConstFormat::Significant(6))
    }

    pub fn decode_infix_with(
        &self,
        params: &CgpParams,
        names: Option<&[String]>,
        format: ConstFormat,
    ) -> String {
        let n_in = params.n_inputs();
        let terminal = |addr: usize| -> String {
            if addr < params.n_features {
                match names {
                    Some(names) => names[addr].clone(),
                    None => format!("x{addr}"),
                }
            } else {
                format.render(self.constants[addr - params.n_features])
            }
        };
        let mut exprs: Vec<Option<String>> = vec![None; params.n_nodes()];
        let operand = |addr: usize, exprs: &[Option<String>]| -> String {
            if addr < n_in {
                terminal(addr)
            } else {
                exprs[addr - n_in].clone().expect("operand decoded before use")
            }
        };
        for node in self.active_nodes(params) {
            let a = operand(self.genes[3 * node + 1], &exprs);
            let kernel = self.kernel(params, node);
            let s = match kernel {
                Kernel::Log | Kernel::Sin => format!("{}({a})", kernel.name()),
                _ => {
                    let b = operand(self.genes[3 * node + 2], &exprs);
                    let op = match kernel {
                        Kernel::Add => '+',
                        Kernel::Sub => '-',
                        Kernel::Mul => '*',
                        _ => '/',
                    };
                    format!("({a} {op} {b})")
                }
            };
            exprs[node] = Some(s);
        }
        operand(self.output(params), &exprs)
    }
}

/// A genotype's active subgraph flattened into straight-line code, for
/// repeated evaluation over many samples.
#[derive(Clone, Debug)]
pub struct Program {
    n_features: usize,
    n_constants: usize,
    ops: Vec<Op>,
    output: usize,
}

#[derive(Clone, Copy, Debug)]
struct Op {
    kernel: Kernel,
    a: usize,
    b: usize,
}

impl Program {
    pub fn compile(g: &Genotype, params: &CgpParams) -> Self {
        let n_in = params.n_inputs();
        let active = g.active_nodes(params);
        let mut slot = vec![usize::MAX; params.n_nodes()];
        let remap = |addr: usize, slot: &[usize]| {
            if addr < n_in {
                addr
            } else {
                slot[addr - n_in]
            }
        };
        let mut ops = Vec::with_capacity(active.len());
        for (i, &node) in active.iter().enumerate() {
            let kernel = g.kernel(params, node);
            let a = remap(g.genes[3 * node + 1], &slot);
            let b = if kernel.arity() == 2 {
                remap(g.genes[3 * node + 2], &slot)
            } else {
                a
            };
            ops.push(Op { kernel, a, b });
            slot[node] = n_in + i;
        }
        Self {
            n_features: params.n_features,
            n_constants: params.n_constants,
            ops,
            output: remap(g.output(params), &slot),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Whether any constant terminal feeds the output.
    pub fn reads_constants(&self) -> bool {
        let is_const = |slot: usize| (self.n_features..self.n_features + self.n_constants).contains(&slot);
        is_const(self.output) || self.ops.iter().any(|op| is_const(op.a) || is_const(op.b))
    }

    /// Evaluates on one sample; `buf` is scratch space reused across calls.
    pub fn eval<S: Scalar>(&self, inputs: &[f64], constants: &[f64], buf: &mut Vec<S>) -> S {
        assert_eq!(inputs.len(), self.n_features, "wrong number of inputs");
        assert_eq!(constants.len(), self.n_constants, "wrong number of constants");
        let m = self.n_constants;
        buf.clear();
        buf.extend(inputs.iter().map(|&x| S::input(x, m)));
        buf.extend(
            constants
                .iter()
                .enumerate()
                .map(|(j, &c)| S::ephemeral(c, j, m)),
        );
        for op in &self.ops {
            let v = S::apply(op.kernel, &buf[op.a], &buf[op.b]);
            buf.push(v);
        }
        buf[self.output].clone()
    }
}
