//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code path it checks.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use momes_core::{CgpParams, Dataset, Genotype, Individual, KernelSet};

pub const TABLE2_KERNELS: [&str; 5] = ["add", "sub", "mul", "div", "log"];
pub const TABLE5_KERNELS: [&str; 6] = ["add", "sub", "mul", "div", "log", "sin"];

pub fn kernels(names: &[&str]) -> KernelSet {
    KernelSet::from_names(names).unwrap()
}

/// Table 2 CGP shape: 2 rows, 20 columns, levels-back 20.
pub fn table2_params(n_features: usize, n_constants: usize, names: &[&str]) -> CgpParams {
    CgpParams::new(n_features, n_constants, 2, 20, 20, kernels(names)).unwrap()
}

/// Gene-by-gene validity check written from the encoding rules.
pub fn is_valid(g: &Genotype, p: &CgpParams) -> bool {
    let n_in = p.n_features + p.n_constants;
    let n_nodes = p.rows * p.columns;
    if g.genes.len() != 3 * n_nodes + 1 || g.constants.len() != p.n_constants {
        return false;
    }
    if g.constants.iter().any(|c| !c.is_finite()) {
        return false;
    }
    for node in 0..n_nodes {
        let q = node / p.rows;
        if g.genes[3 * node] >= p.kernels.len() {
            return false;
        }
        for c in 1..=2 {
            let a = g.genes[3 * node + c];
            let ok = a < n_in || {
                let target_col = (a - n_in) / p.rows;
                a - n_in < n_nodes && target_col < q && q - target_col <= p.levels_back
            };
            if !ok {
                return false;
            }
        }
    }
    g.genes[3 * n_nodes] < n_in + n_nodes
}

/// Arity as the decoder must see it.
pub fn arity(p: &CgpParams, kernel_gene: usize) -> usize {
    match p.kernels.names()[kernel_gene].as_str() {
        "log" | "sin" => 1,
        _ => 2,
    }
}

/// Explicit dependency graph plus depth-first reachability from the output.
pub fn reachable_nodes(g: &Genotype, p: &CgpParams) -> BTreeSet<usize> {
    let n_in = p.n_features + p.n_constants;
    let n_nodes = p.rows * p.columns;
    let mut edges: HashMap<usize, Vec<usize>> = HashMap::new();
    for node in 0..n_nodes {
        let k = g.genes[3 * node];
        let reads: Vec<usize> = (0..arity(p, k)).map(|c| g.genes[3 * node + 1 + c]).collect();
        edges.insert(n_in + node, reads);
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![g.genes[3 * n_nodes]];
    while let Some(addr) = stack.pop() {
        if addr < n_in || !seen.insert(addr - n_in) {
            continue;
        }
        stack.extend(edges[&addr].iter().copied());
    }
    seen
}

/// Central differences (second differences for the Hessian) refined by
/// Ridders' extrapolation over steps shrinking by 1.4, down to
/// h = 1e-4·max(1,|c|) and below. Each entry keeps the tableau value with
/// the smallest error estimate; refinement stops once rounding noise takes
/// over. Second differences start from a wider bracket (≈15h) since their
/// rounding noise grows as 1/h².
pub fn fd_grad_hess(f: &dyn Fn(&[f64]) -> f64, c: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    const CON: f64 = 1.4;
    const LEVELS: usize = 10;
    const WIDE: i32 = 8;
    let m = c.len();
    let levels: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (-WIDE..LEVELS as i32)
        .map(|i| central(f, c, CON.powi(-i)))
        .collect();
    let w = WIDE as usize;
    let grad = (0..m)
        .map(|j| ridders(|i| levels[w + i].0[j], LEVELS, CON))
        .collect();
    let hess = (0..m)
        .map(|j| {
            (0..m)
                .map(|k| ridders(|i| levels[i].1[j][k], LEVELS + w, CON))
                .collect()
        })
        .collect();
    (grad, hess)
}

/// Ridders' tableau over the quotients `d(0), d(1), …` taken at steps
/// `h, h/con, h/con², …` (second order in h).
fn ridders(d: impl Fn(usize) -> f64, levels: usize, con: f64) -> f64 {
    let con2 = con * con;
    let mut a = vec![vec![0.0; levels]; levels];
    a[0][0] = d(0);
    let mut best = a[0][0];
    let mut err = f64::INFINITY;
    for i in 1..levels {
        a[0][i] = d(i);
        let mut fac = con2;
        for j in 1..=i {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= con2;
            let e = (a[j][i] - a[j - 1][i])
                .abs()
                .max((a[j][i] - a[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = a[j][i];
            }
        }
        if (a[i][i] - a[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    best
}

fn central(f: &dyn Fn(&[f64]) -> f64, c: &[f64], scale: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = c.len();
    let h: Vec<f64> = c.iter().map(|x| scale * 1e-4 * x.abs().max(1.0)).collect();
    let at = |d: &[(usize, f64)]| {
        let mut p = c.to_vec();
        for &(j, s) in d {
            p[j] += s * h[j];
        }
        f(&p)
    };
    let grad = (0..m)
        .map(|j| (at(&[(j, 1.0)]) - at(&[(j, -1.0)])) / (2.0 * h[j]))
        .collect();
    let f0 = f(c);
    let mut hess = vec![vec![0.0; m]; m];
    for j in 0..m {
        hess[j][j] = (at(&[(j, 1.0)]) - 2.0 * f0 + at(&[(j, -1.0)])) / (h[j] * h[j]);
        for k in 0..j {
            let v = (at(&[(j, 1.0), (k, 1.0)]) - at(&[(j, 1.0), (k, -1.0)])
                - at(&[(j, -1.0), (k, 1.0)])
                + at(&[(j, -1.0), (k, -1.0)]))
                / (4.0 * h[j] * h[k]);
            hess[j][k] = v;
            hess[k][j] = v;
        }
    }
    (grad, hess)
}

/// Worst relative gradient and Hessian errors of `(grad, hess)` against
/// the FD oracle of `f` at `c`. Entries smaller than the oracle's rounding
/// noise are compared against that noise level instead of zero: about
/// 1e-4·max(1,|f|) for the gradient and 1e-2·max(1,|f|) for the Hessian,
/// four decades above ε·|f|/h and ε·|f|/h².
pub fn fd_errors(
    f: &dyn Fn(&[f64]) -> f64,
    c: &[f64],
    grad: &[f64],
    hess: &[Vec<f64>],
) -> (f64, f64) {
    let (fg, fh) = fd_grad_hess(f, c);
    let scale = f(c).abs().max(1.0);
    let mut eg: f64 = 0.0;
    let mut eh: f64 = 0.0;
    for j in 0..c.len() {
        eg = eg.max(rel_err(grad[j], fg[j], 1e-4 * scale));
        for k in 0..c.len() {
            eh = eh.max(rel_err(hess[j][k], fh[j][k], 1e-2 * scale));
        }
    }
    (eg, eh)
}

/// Recursive interpreter straight from the genes, independent of the
/// compiled program path.
pub fn interpret(g: &Genotype, p: &CgpParams, x: &[f64], c: &[f64]) -> f64 {
    fn value(addr: usize, g: &Genotype, p: &CgpParams, x: &[f64], c: &[f64]) -> f64 {
        let n_f = p.n_features;
        let n_in = n_f + p.n_constants;
        if addr < n_f {
            return x[addr];
        }
        if addr < n_in {
            return c[addr - n_f];
        }
        let node = addr - n_in;
        let a = value(g.genes[3 * node + 1], g, p, x, c);
        match p.kernels.names()[g.genes[3 * node]].as_str() {
            "add" => a + value(g.genes[3 * node + 2], g, p, x, c),
            "sub" => a - value(g.genes[3 * node + 2], g, p, x, c),
            "mul" => a * value(g.genes[3 * node + 2], g, p, x, c),
            "div" => a / value(g.genes[3 * node + 2], g, p, x, c),
            "log" => a.ln(),
            "sin" => a.sin(),
            k => panic!("unknown kernel {k}"),
        }
    }
    value(g.genes[3 * p.rows * p.columns], g, p, x, c)
}

/// Mean squared error by a naive two-pass recomputation.
pub fn naive_mse(g: &Genotype, p: &CgpParams, d: &Dataset) -> f64 {
    let preds: Vec<f64> = (0..d.len())
        .map(|i| interpret(g, p, d.row(i), &g.constants))
        .collect();
    let mut s = 0.0;
    for (i, pr) in preds.iter().enumerate() {
        let r = d.targets()[i] - pr;
        s += r * r;
    }
    s / d.len() as f64
}

/// Exhaustive pairwise dominance oracle, written from the definition.
pub fn brute_force_fronts(pool: &[Individual]) -> Vec<Vec<usize>> {
    fn dom(a: &Individual, b: &Individual) -> bool {
        let fa = a.loss.is_finite();
        let fb = b.loss.is_finite();
        if fa && !fb {
            return true;
        }
        if !fa && fb {
            return false;
        }
        if !fa && !fb {
            return a.complexity < b.complexity;
        }
        (a.loss <= b.loss && a.complexity <= b.complexity)
            && (a.loss < b.loss || a.complexity < b.complexity)
    }
    let mut remaining: Vec<usize> = (0..pool.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let front: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| !remaining.iter().any(|&j| j != i && dom(&pool[j], &pool[i])))
            .collect();
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

/// Tokenizer + recursive-descent parser for the fully parenthesized infix
/// output, evaluating with the given feature values.
pub fn eval_infix(s: &str, names: &[String], x: &[f64]) -> f64 {
    struct P<'a> {
        s: &'a [u8],
        i: usize,
        names: &'a [String],
        x: &'a [f64],
    }
    impl P<'_> {
        fn ws(&mut self) {
            while self.i < self.s.len() && self.s[self.i] == b' ' {
                self.i += 1;
            }
        }
        fn expect(&mut self, c: u8) {
            self.ws();
            assert_eq!(self.s[self.i] as char, c as char, "at {}", self.i);
            self.i += 1;
        }
        fn expr(&mut self) -> f64 {
            self.ws();
            if self.s[self.i] == b'(' {
                self.i += 1;
                let a = self.expr();
                self.ws();
                let op = self.s[self.i];
                self.i += 1;
                let b = self.expr();
                self.expect(b')');
                return match op {
                    b'+' => a + b,
                    b'-' => a - b,
                    b'*' => a * b,
                    b'/' => a / b,
                    _ => panic!("bad operator {}", op as char),
                };
            }
            let start = self.i;
            while self.i < self.s.len() && !b" ()".contains(&self.s[self.i]) {
                // exponent sign belongs to the number
                self.i += 1;
            }
            let tok = std::str::from_utf8(&self.s[start..self.i]).unwrap();
            if tok == "log" || tok == "sin" {
                self.expect(b'(');
                let a = self.expr();
                self.expect(b')');
                return if tok == "log" { a.ln() } else { a.sin() };
            }
            if let Some(j) = self.names.iter().position(|n| n == tok) {
                return self.x[j];
            }
            tok.parse::<f64>()
                .unwrap_or_else(|_| panic!("bad token `{tok}`"))
        }
    }
    let mut p = P {
        s: s.as_bytes(),
        i: 0,
        names,
        x,
    };
    let v = p.expr();
    p.ws();
    assert_eq!(p.i, s.len(), "trailing input in `{s}`");
    v
}

/// Closed-form OLS on `[features | 1]` via explicit normal equations and
/// Gauss-Jordan elimination.
pub fn ols_oracle(d: &Dataset) -> Vec<f64> {
    let n = d.n_features() + 1;
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, y) in d.targets().iter().enumerate() {
        let mut row = d.row(i).to_vec();
        row.push(1.0);
        for j in 0..n {
            for k in 0..n {
                a[j][k] += row[j] * row[k];
            }
            a[j][n] += row[j] * y;
        }
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        let pv = a[col][col];
        for k in 0..=n {
            a[col][k] /= pv;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                for k in 0..=n {
                    a[r][k] -= f * a[col][k];
                }
            }
        }
    }
    a.iter().map(|r| r[n]).collect()
}

/// Smallest log argument or |denominator| met while evaluating the active
/// graph on `x` (`+∞` if there is none). Negative log arguments count as
/// their value.
pub fn singular_margin(g: &Genotype, p: &CgpParams, x: &[f64], c: &[f64]) -> f64 {
    let n_f = p.n_features;
    let n_in = n_f + p.n_constants;
    let n_nodes = p.rows * p.columns;
    let mut vals = vec![0.0; n_nodes];
    let mut margin = f64::INFINITY;
    let get = |a: usize, vals: &[f64]| {
        if a < n_f {
            x[a]
        } else if a < n_in {
            c[a - n_f]
        } else {
            vals[a - n_in]
        }
    };
    let active = reachable_nodes(g, p);
    for &node in &active {
        let a = get(g.genes[3 * node + 1], &vals);
        let b = get(g.genes[3 * node + 2], &vals);
        vals[node] = match p.kernels.names()[g.genes[3 * node]].as_str() {
            "add" => a + b,
            "sub" => a - b,
            "mul" => a * b,
            "div" => {
                margin = margin.min(b.abs());
                a / b
            }
            "log" => {
                margin = margin.min(a);
                a.ln()
            }
            "sin" => a.sin(),
            k => panic!("unknown kernel {k}"),
        };
    }
    margin
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(b.abs()).max(floor)
    }
}

/// CGP encoding of `c0·x0 + … + c{n-1}·x{n-1} + cn` over kernels
/// {add, sub, mul, div}: one row of 2n nodes.
pub fn linear_genotype(n: usize, constants: Vec<f64>) -> (CgpParams, Genotype) {
    let p = CgpParams::new(n, n + 1, 1, 2 * n, 2 * n, kernels(&["add", "sub", "mul", "div"]))
        .unwrap();
    let n_in = 2 * n + 1;
    let mut genes = Vec::new();
    for j in 0..n {
        genes.extend([2, j, n + j]); // x_j * c_j
    }
    let mut acc = n_in; // address of the first product
    for j in 1..n {
        genes.extend([0, acc, n_in + j]);
        acc = n_in + n + j - 1;
    }
    genes.extend([0, acc, 2 * n]); // + c_n
    genes.push(n_in + 2 * n - 1);
    let g = Genotype::new(genes, constants, &p).unwrap();
    (p, g)
}

/// Random features in [-3, 3] with a noisy linear target.
pub fn random_linear_data(rng: &mut impl rand::Rng, n: usize, rows: usize) -> Dataset {
    let w: Vec<f64> = (0..=n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let xs: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    let y = xs
        .iter()
        .map(|x| {
            x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[n] + rng.gen_range(-1.0..1.0)
        })
        .collect();
    Dataset::new(xs, y, None, None).unwrap()
}

/// Straightforward metric recomputation: (rmse, mae, over, under, precision).
pub fn metrics_oracle(
    pred: &[f64],
    y: &[f64],
    bounds: Option<(&[f64], &[f64])>,
) -> (f64, f64, f64, f64, Option<f64>) {
    let n = y.len() as f64;
    let r: Vec<f64> = pred.iter().zip(y).map(|(p, t)| p - t).collect();
    let rmse = (r.iter().map(|v| v.powi(2)).sum::<f64>() / n).sqrt();
    let mae = r.iter().map(|v| v.abs()).sum::<f64>() / n;
    let cond_mean = |vals: Vec<f64>| {
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let over = cond_mean(r.iter().copied().filter(|&v| v > 0.0).collect());
    let under = cond_mean(r.iter().filter(|&&v| v < 0.0).map(|v| -v).collect());
    let precision = bounds.map(|(lo, hi)| {
        (0..y.len())
            .filter(|&i| pred[i] >= lo[i] && pred[i] <= hi[i])
            .count() as f64
            / n
    });
    (rmse, mae, over, under, precision)
}

/// Random dataset with per-row bounds around the target.
pub fn random_bounded_data(rng: &mut impl rand::Rng, n: usize, rows: usize) -> Dataset {
    use momes_core::Bounds;
    let xs: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    let y: Vec<f64> = (0..rows).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let lower = y.iter().map(|v| v - rng.gen_range(0.0..1.5)).collect();
    let upper = y.iter().map(|v| v + rng.gen_range(0.0..1.5)).collect();
    Dataset::new(xs, y, Some(Bounds { lower, upper }), None).unwrap()
}
