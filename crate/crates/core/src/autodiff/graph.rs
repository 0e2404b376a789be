use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, sigmoid, softplus};

pub type Mat = DMatrix<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Softplus(Var),
    Tanh(Var),
    Sqrt(Var),
    Square(Var),
    Lgamma(Var),
    Clamp(Var, f64, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Cholesky(Var),
    SolveLower(Var, Var),
    SolveLowerT(Var, Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    ScaleBy(Var, Var),
    Broadcast(Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddCol(Var, Var),
    MulCol(Var, Var),
    SqDist(Var, Var),
    Diag(Var),
    DiagEmbed(Var),
    TrilStrict(Var),
    LogSumExpRows(Var),
    Pick(Var, Vec<usize>),
    GatherRows(Var, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Mat,
    op: Op,
}

/// Define-by-run computation graph over dense matrices.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and the backward pass walks it in reverse. Scalars are
/// 1×1 matrices.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the root with respect to the input node `v`; zeros when
    /// `v` does not influence the root. Interior adjoints are not retained.
    pub fn wrt(&self, v: Var) -> Mat {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Mat::zeros(r, c)
            }
        }
    }
}

fn map(m: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    m.map(f)
}

fn tril(m: &Mat) -> Mat {
    let mut out = m.clone();
    for j in 0..out.ncols() {
        for i in 0..j.min(out.nrows()) {
            out[(i, j)] = 0.0;
        }
    }
    out
}

fn assert_same_shape(a: &Mat, b: &Mat, what: &str) {
    assert!(
        a.shape() == b.shape(),
        "{what}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert!(m.shape() == (1, 1), "not a scalar node: {:?}", m.shape());
        m[(0, 0)]
    }

    /// Leaf node. Parameters and constants are both inputs; which of them
    /// receive updates is up to the caller.
    pub fn input(&mut self, value: Mat) -> Var {
        self.push(value, Op::Input)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.input(Mat::from_element(1, 1, x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_same_shape(va, vb, "add");
        let v = va + vb;
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_same_shape(va, vb, "sub");
        let v = va - vb;
        self.push(v, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_same_shape(va, vb, "mul");
        let v = va.component_mul(vb);
        self.push(v, Op::Mul(a, b))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_same_shape(va, vb, "div");
        let v = va.component_div(vb);
        self.push(v, Op::Div(a, b))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.push(v, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).add_scalar(c);
        self.push(v, Op::Offset(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::ln);
        self.push(v, Op::Log(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = map(self.value(a), sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = map(self.value(a), softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = map(self.value(a), f64::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = map(self.value(a), |x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn lgamma(&mut self, a: Var) -> Var {
        let v = map(self.value(a), ln_gamma);
        self.push(v, Op::Lgamma(a))
    }

    /// Elementwise clamp; the gradient is blocked where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = map(self.value(a), |x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    /// log σ(x) = −softplus(−x).
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let n = self.neg(a);
        let s = self.softplus(n);
        self.neg(s)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert!(
            va.ncols() == vb.nrows(),
            "matmul: {:?} x {:?}",
            va.shape(),
            vb.shape()
        );
        let v = va * vb;
        self.push(v, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// Lower Cholesky factor of a symmetric positive-definite matrix. Only the
    /// lower triangle of the input is read.
    pub fn cholesky(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        assert!(va.is_square(), "cholesky of non-square {:?}", va.shape());
        let l = lower_cholesky(va).ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?;
        Ok(self.push(l, Op::Cholesky(a)))
    }

    /// L⁻¹ B for lower-triangular L.
    pub fn solve_lower(&mut self, l: Var, b: Var) -> Result<Var> {
        let x = self
            .value(l)
            .solve_lower_triangular(self.value(b))
            .ok_or_else(|| Error::Numerical("singular triangular solve".into()))?;
        Ok(self.push(x, Op::SolveLower(l, b)))
    }

    /// L⁻ᵀ B for lower-triangular L.
    pub fn solve_lower_t(&mut self, l: Var, b: Var) -> Result<Var> {
        let x = self
            .value(l)
            .tr_solve_lower_triangular(self.value(b))
            .ok_or_else(|| Error::Numerical("singular triangular solve".into()))?;
        Ok(self.push(x, Op::SolveLowerT(l, b)))
    }

    /// Sum of all entries, as a 1×1 node.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_element(1, 1, self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Per-row sums (n×m → n×1).
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).column_sum();
        let v = Mat::from_column_slice(v.len(), 1, v.as_slice());
        self.push(v, Op::SumRows(a))
    }

    /// Per-column sums (n×m → 1×m).
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).row_sum();
        let v = Mat::from_row_slice(1, v.len(), v.as_slice());
        self.push(v, Op::SumCols(a))
    }

    /// Matrix times a 1×1 node.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let sv = self.scalar_value(s);
        let v = self.value(a) * sv;
        self.push(v, Op::ScaleBy(a, s))
    }

    /// Repeat a 1×1 node into a rows×cols matrix.
    pub fn broadcast(&mut self, s: Var, rows: usize, cols: usize) -> Var {
        let sv = self.scalar_value(s);
        self.push(Mat::from_element(rows, cols, sv), Op::Broadcast(s))
    }

    /// Adds a 1×m row to every row of an n×m matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert!(vr.nrows() == 1 && vr.ncols() == va.ncols(), "add_row shape");
        let mut v = va.clone();
        for mut r in v.row_iter_mut() {
            r += vr;
        }
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of an n×m matrix elementwise by a 1×m row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert!(vr.nrows() == 1 && vr.ncols() == va.ncols(), "mul_row shape");
        let mut v = va.clone();
        for mut r in v.row_iter_mut() {
            r.component_mul_assign(vr);
        }
        self.push(v, Op::MulRow(a, row))
    }

    /// Adds an n×1 column to every column of an n×m matrix.
    pub fn add_col(&mut self, a: Var, col: Var) -> Var {
        let (va, vc) = (self.value(a), self.value(col));
        assert!(vc.ncols() == 1 && vc.nrows() == va.nrows(), "add_col shape");
        let mut v = va.clone();
        for mut c in v.column_iter_mut() {
            c += vc;
        }
        self.push(v, Op::AddCol(a, col))
    }

    /// Multiplies every column of an n×m matrix elementwise by an n×1 column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (va, vc) = (self.value(a), self.value(col));
        assert!(vc.ncols() == 1 && vc.nrows() == va.nrows(), "mul_col shape");
        let mut v = va.clone();
        for mut c in v.column_iter_mut() {
            c.component_mul_assign(vc);
        }
        self.push(v, Op::MulCol(a, col))
    }

    /// Pairwise squared Euclidean distances between the rows of `a` (n×e)
    /// and the rows of `b` (m×e), giving n×m.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Var {
        let v = sq_dist(self.value(a), self.value(b));
        self.push(v, Op::SqDist(a, b))
    }

    /// Diagonal of a square matrix as an n×1 column.
    pub fn diag(&mut self, a: Var) -> Var {
        let d = self.value(a).diagonal();
        let v = Mat::from_column_slice(d.len(), 1, d.as_slice());
        self.push(v, Op::Diag(a))
    }

    /// n×1 column → n×n diagonal matrix.
    pub fn diag_embed(&mut self, a: Var) -> Var {
        let va = self.value(a);
        assert!(va.ncols() == 1, "diag_embed expects a column");
        let mut v = Mat::zeros(va.nrows(), va.nrows());
        for i in 0..va.nrows() {
            v[(i, i)] = va[(i, 0)];
        }
        self.push(v, Op::DiagEmbed(a))
    }

    /// Strictly lower-triangular part.
    pub fn tril_strict(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for j in 0..v.ncols() {
            for i in 0..=j.min(v.nrows().saturating_sub(1)) {
                v[(i, j)] = 0.0;
            }
        }
        self.push(v, Op::TrilStrict(a))
    }

    /// Row-wise log-sum-exp (n×m → n×1).
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let mut v = Mat::zeros(va.nrows(), 1);
        for (i, row) in va.row_iter().enumerate() {
            let max = row.max();
            v[(i, 0)] = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        }
        self.push(v, Op::LogSumExpRows(a))
    }

    /// Picks one column per row: out[i] = a[i, cols[i]].
    pub fn pick(&mut self, a: Var, cols: Vec<usize>) -> Var {
        let va = self.value(a);
        assert!(cols.len() == va.nrows(), "pick: one column per row");
        let v = Mat::from_fn(va.nrows(), 1, |i, _| va[(i, cols[i])]);
        self.push(v, Op::Pick(a, cols))
    }

    /// Selects rows (with repetition allowed).
    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let va = self.value(a);
        let v = Mat::from_fn(rows.len(), va.ncols(), |r, j| va[(rows[r], j)]);
        self.push(v, Op::GatherRows(a, rows))
    }

    /// 1 / a, elementwise.
    pub fn recip(&mut self, a: Var) -> Var {
        let (r, c) = self.value(a).shape();
        let one = self.input(Mat::from_element(r, c, 1.0));
        self.div(one, a)
    }

    /// Reverse pass from a 1×1 root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar root, got {shape:?}"
            )));
        }
        let n = root.0 + 1;
        let mut adj: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        adj[root.0] = Some(Mat::from_element(1, 1, 1.0));

        for i in (0..n).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Input) {
                adj[i] = Some(g);
                continue;
            }
            let out = &node.value;
            match &node.op {
                Op::Input => unreachable!(),
                Op::Add(a, b) => {
                    acc(&mut adj, *a, g.clone());
                    acc(&mut adj, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut adj, *b, -&g);
                    acc(&mut adj, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = g.component_mul(self.value(*b));
                    let gb = g.component_mul(self.value(*a));
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Div(a, b) => {
                    let vb = self.value(*b);
                    let ga = g.component_div(vb);
                    let gb = -ga.component_mul(out);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Neg(a) => acc(&mut adj, *a, -&g),
                Op::Scale(a, c) => acc(&mut adj, *a, &g * *c),
                Op::Offset(a) => acc(&mut adj, *a, g.clone()),
                Op::Exp(a) => acc(&mut adj, *a, g.component_mul(out)),
                Op::Log(a) => acc(&mut adj, *a, g.component_div(self.value(*a))),
                Op::Sigmoid(a) => {
                    let d = out.map(|s| s * (1.0 - s));
                    acc(&mut adj, *a, g.component_mul(&d));
                }
                Op::Softplus(a) => {
                    let d = self.value(*a).map(sigmoid);
                    acc(&mut adj, *a, g.component_mul(&d));
                }
                Op::Tanh(a) => {
                    let d = out.map(|t| 1.0 - t * t);
                    acc(&mut adj, *a, g.component_mul(&d));
                }
                Op::Sqrt(a) => {
                    let d = out.map(|s| 0.5 / s);
                    acc(&mut adj, *a, g.component_mul(&d));
                }
                Op::Square(a) => {
                    let d = self.value(*a) * 2.0;
                    acc(&mut adj, *a, g.component_mul(&d));
                }
                Op::Lgamma(a) => {
                    let d = self.value(*a).map(digamma);
                    acc(&mut adj, *a, g.component_mul(&d));
                }
                Op::Clamp(a, lo, hi) => {
                    let va = self.value(*a);
                    let ga = Mat::from_fn(g.nrows(), g.ncols(), |r, c| {
                        let x = va[(r, c)];
                        if x >= *lo && x <= *hi {
                            g[(r, c)]
                        } else {
                            0.0
                        }
                    });
                    acc(&mut adj, *a, ga);
                }
                Op::MatMul(a, b) => {
                    let ga = &g * self.value(*b).transpose();
                    let gb = self.value(*a).transpose() * &g;
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Transpose(a) => acc(&mut adj, *a, g.transpose()),
                Op::Cholesky(a) => {
                    let ga = cholesky_adjoint(out, &g)?;
                    acc(&mut adj, *a, ga);
                }
                Op::SolveLower(l, b) => {
                    let vl = self.value(*l);
                    let gb = vl
                        .tr_solve_lower_triangular(&g)
                        .ok_or_else(|| Error::Numerical("singular solve in backward".into()))?;
                    let gl = -tril(&(&gb * out.transpose()));
                    acc(&mut adj, *l, gl);
                    acc(&mut adj, *b, gb);
                }
                Op::SolveLowerT(l, b) => {
                    let vl = self.value(*l);
                    let gb = vl
                        .solve_lower_triangular(&g)
                        .ok_or_else(|| Error::Numerical("singular solve in backward".into()))?;
                    let gl = -tril(&(out * gb.transpose()));
                    acc(&mut adj, *l, gl);
                    acc(&mut adj, *b, gb);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut adj, *a, Mat::from_element(r, c, g[(0, 0)]));
                }
                Op::SumRows(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut adj, *a, Mat::from_fn(r, c, |i, _| g[(i, 0)]));
                }
                Op::SumCols(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut adj, *a, Mat::from_fn(r, c, |_, j| g[(0, j)]));
                }
                Op::ScaleBy(a, s) => {
                    let sv = self.scalar_value(*s);
                    let gs = g.component_mul(self.value(*a)).sum();
                    acc(&mut adj, *a, &g * sv);
                    acc(&mut adj, *s, Mat::from_element(1, 1, gs));
                }
                Op::Broadcast(s) => acc(&mut adj, *s, Mat::from_element(1, 1, g.sum())),
                Op::AddRow(a, row) => {
                    let gr = g.row_sum();
                    acc(
                        &mut adj,
                        *row,
                        Mat::from_row_slice(1, gr.len(), gr.as_slice()),
                    );
                    acc(&mut adj, *a, g);
                }
                Op::MulRow(a, row) => {
                    let vr = self.value(*row);
                    let va = self.value(*a);
                    let gr = g.component_mul(va).row_sum();
                    let mut ga = g.clone();
                    for mut r in ga.row_iter_mut() {
                        r.component_mul_assign(vr);
                    }
                    acc(
                        &mut adj,
                        *row,
                        Mat::from_row_slice(1, gr.len(), gr.as_slice()),
                    );
                    acc(&mut adj, *a, ga);
                }
                Op::AddCol(a, col) => {
                    let gc = g.column_sum();
                    acc(
                        &mut adj,
                        *col,
                        Mat::from_column_slice(gc.len(), 1, gc.as_slice()),
                    );
                    acc(&mut adj, *a, g);
                }
                Op::MulCol(a, col) => {
                    let vc = self.value(*col);
                    let va = self.value(*a);
                    let gc = g.component_mul(va).column_sum();
                    let mut ga = g.clone();
                    for mut c in ga.column_iter_mut() {
                        c.component_mul_assign(vc);
                    }
                    acc(
                        &mut adj,
                        *col,
                        Mat::from_column_slice(gc.len(), 1, gc.as_slice()),
                    );
                    acc(&mut adj, *a, ga);
                }
                Op::SqDist(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let rs = g.column_sum();
                    let cs = g.row_sum();
                    let mut ga = -(&g * vb);
                    for (i, mut r) in ga.row_iter_mut().enumerate() {
                        r += va.row(i) * rs[i];
                    }
                    let mut gb = -(g.transpose() * va);
                    for (j, mut r) in gb.row_iter_mut().enumerate() {
                        r += vb.row(j) * cs[j];
                    }
                    acc(&mut adj, *a, ga * 2.0);
                    acc(&mut adj, *b, gb * 2.0);
                }
                Op::Diag(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Mat::zeros(r, c);
                    for k in 0..r.min(c) {
                        ga[(k, k)] = g[(k, 0)];
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::DiagEmbed(a) => {
                    let d = g.diagonal();
                    acc(
                        &mut adj,
                        *a,
                        Mat::from_column_slice(d.len(), 1, d.as_slice()),
                    );
                }
                Op::TrilStrict(a) => {
                    let mut ga = g;
                    for j in 0..ga.ncols() {
                        for i in 0..=j.min(ga.nrows().saturating_sub(1)) {
                            ga[(i, j)] = 0.0;
                        }
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::LogSumExpRows(a) => {
                    let va = self.value(*a);
                    let ga = Mat::from_fn(va.nrows(), va.ncols(), |i, j| {
                        g[(i, 0)] * (va[(i, j)] - out[(i, 0)]).exp()
                    });
                    acc(&mut adj, *a, ga);
                }
                Op::Pick(a, cols) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Mat::zeros(r, c);
                    for (i, &j) in cols.iter().enumerate() {
                        ga[(i, j)] += g[(i, 0)];
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::GatherRows(a, rows) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Mat::zeros(r, c);
                    for (k, &src) in rows.iter().enumerate() {
                        for j in 0..c {
                            ga[(src, j)] += g[(k, j)];
                        }
                    }
                    acc(&mut adj, *a, ga);
                }
            }
        }

        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads: adj, shapes })
    }
}

fn acc(adj: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut adj[v.0] {
        Some(existing) => *existing += g,
        slot @ None => *slot = Some(g),
    }
}

/// Adjoint of the lower Cholesky factor, written with triangular solves.
///
/// With Σ = LLᵀ and upstream adjoint L̄: P = Φ(Lᵀ tril(L̄)) where Φ keeps the
/// lower triangle and halves the diagonal; Σ̄ = sym(L⁻ᵀ P L⁻¹).
fn cholesky_adjoint(l: &Mat, lbar: &Mat) -> Result<Mat> {
    let mut p = l.transpose() * tril(lbar);
    let n = p.nrows();
    for j in 0..n {
        for i in 0..j {
            p[(i, j)] = 0.0;
        }
        p[(j, j)] *= 0.5;
    }
    let singular = || Error::Numerical("singular factor in cholesky adjoint".into());
    // X = L⁻ᵀ P, then S = X L⁻¹ = (L⁻ᵀ Xᵀ)ᵀ.
    let x = l.tr_solve_lower_triangular(&p).ok_or_else(singular)?;
    let st = l
        .tr_solve_lower_triangular(&x.transpose())
        .ok_or_else(singular)?;
    let s = st.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Lower Cholesky factor, `None` if the matrix is not positive definite.
pub fn lower_cholesky(a: &Mat) -> Option<Mat> {
    let n = a.nrows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Pairwise squared distances between rows.
pub fn sq_dist(a: &Mat, b: &Mat) -> Mat {
    assert!(a.ncols() == b.ncols(), "sq_dist: feature dims differ");
    Mat::from_fn(a.nrows(), b.nrows(), |i, j| {
        let mut s = 0.0;
        for k in 0..a.ncols() {
            let d = a[(i, k)] - b[(j, k)];
            s += d * d;
        }
        s
    })
}
