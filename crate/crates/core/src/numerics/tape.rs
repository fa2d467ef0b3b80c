//! Reverse-mode differentiation over matrix-valued operations.
//!
//! A [`Tape`] is built fresh for every forward pass. Each method evaluates
//! one primitive eagerly, stores the result and remembers how to push a
//! gradient back to its inputs. [`Tape::backward`] consumes the tape, walks
//! the nodes in exact reverse order and accumulates into the
//! [`ParamStore`] the parameters were read from.

use rand::Rng;

use super::param::{ParamId, ParamStore};
use super::special;
use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    SoftmaxRows(Var),
    Transpose(Var),
    SelectRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mask(Var, Matrix),
    /// Per-row zero mean, unit variance; keeps 1/σ of every row.
    RowStandardize(Var, Vec<f64>),
    /// Scalar output whose partial derivatives wrt each input were computed
    /// during the forward evaluation.
    Fused(Vec<(Var, Matrix)>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite value from {op:?}");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a value that gradients do not flow into.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// Reads a parameter; its gradient is accumulated on backward.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        Ok(self.push(v, Op::MatMulT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// Adds a `1×c` row vector to every row of an `r×c` matrix.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let (mv, rv) = (self.value(m), self.value(row));
        if rv.rows() != 1 || rv.cols() != mv.cols() {
            return Err(Error::Dimension {
                op: "add_row",
                left: mv.shape(),
                right: rv.shape(),
            });
        }
        let mut out = mv.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(m, row)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    /// Scales row `i` of an `r×c` matrix by entry `i` of an `r×1` column.
    pub fn mul_col(&mut self, m: Var, col: Var) -> Result<Var> {
        let (mv, cv) = (self.value(m), self.value(col));
        if cv.cols() != 1 || cv.rows() != mv.rows() {
            return Err(Error::Dimension {
                op: "mul_col",
                left: mv.shape(),
                right: cv.shape(),
            });
        }
        let mut out = mv.clone();
        for r in 0..out.rows() {
            let s = cv.data()[r];
            out.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        Ok(self.push(out, Op::MulCol(m, col)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a).map(|x| x * factor);
        self.push(v, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, shift: f64) -> Var {
        let v = self.value(a).map(|x| x + shift);
        self.push(v, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(special::sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(special::softplus);
        self.push(v, Op::Softplus(a))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn select_rows(&mut self, a: Var, index: &[usize]) -> Var {
        let v = self.value(a).select_rows(index);
        self.push(v, Op::SelectRows(a, index.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a).select_cols(start, width);
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::vstack(&mats)?;
        Ok(self.push(v, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let v = Matrix::hstack(&mats)?;
        Ok(self.push(v, Op::ConcatCols(parts.to_vec())))
    }

    /// Sum of all entries as a `1×1` matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(a))
    }

    /// Shifts and scales each row to zero mean and unit variance
    /// (`eps` is added to the variance).
    pub fn row_standardize(&mut self, a: Var, eps: f64) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.cols() as f64;
        let mut inv_std = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / cols;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols;
            let inv = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
            inv_std.push(inv);
        }
        self.push(out, Op::RowStandardize(a, inv_std))
    }

    /// Inverted dropout. Identity (no node recorded) at inference or rate 0.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let (r, c) = self.shape(a);
        let mut mask = Matrix::zeros(r, c);
        for m in mask.data_mut() {
            if rng.gen::<f64>() >= rate {
                *m = keep;
            }
        }
        let v = self.value(a).zip_map(&mask, |x, m| x * m)?;
        Ok(self.push(v, Op::Mask(a, mask)))
    }

    /// Records a scalar whose gradient wrt each input is already known.
    /// Each partial must have the shape of its input.
    pub fn fused_scalar(&mut self, value: f64, partials: Vec<(Var, Matrix)>) -> Result<Var> {
        for (v, g) in &partials {
            if self.shape(*v) != g.shape() {
                return Err(Error::Dimension {
                    op: "fused_scalar",
                    left: self.shape(*v),
                    right: g.shape(),
                });
            }
        }
        Ok(self.push(Matrix::filled(1, 1, value), Op::Fused(partials)))
    }

    /// Propagates d(output)/d(node) from a `1×1` output back to every
    /// parameter read on this tape. Consumes the tape, so each forward pass
    /// supports exactly one backward pass.
    pub fn backward(self, output: Var, store: &mut ParamStore) -> Result<()> {
        if self.shape(output) != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                left: self.shape(output),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => store.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, g.matmul_t(bv)?);
                    accumulate(&mut grads, *b, av.t_matmul(&g)?);
                }
                Op::MatMulT(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    accumulate(&mut grads, *a, g.matmul(bv)?);
                    accumulate(&mut grads, *b, g.t_matmul(av)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::AddRow(m, row) => {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &x) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *row, gr);
                    accumulate(&mut grads, *m, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), |x, y| x * y)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MulCol(m, col) => {
                    let (mv, cv) = (self.value(*m), self.value(*col));
                    let mut gm = g.clone();
                    let mut gc = Matrix::zeros(cv.rows(), 1);
                    for r in 0..g.rows() {
                        let s = cv.data()[r];
                        gc.data_mut()[r] = super::matrix::dot(g.row(r), mv.row(r));
                        gm.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    }
                    accumulate(&mut grads, *m, gm);
                    accumulate(&mut grads, *col, gc);
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.map(|x| x * f)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y * (1.0 - y))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * (1.0 - y * y))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = g.zip_map(self.value(*a), |x, z| x * special::sigmoid(z))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let inner = super::matrix::dot(g.row(r), y.row(r));
                        for ((o, &gy), &yy) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                            *o = yy * (gy - inner);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::SelectRows(a, index) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for (k, &i) in index.iter().enumerate() {
                        for (o, &x) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for row in 0..r {
                        ga.row_mut(row)[*start..*start + g.cols()].copy_from_slice(g.row(row));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.shape(p).0;
                        let index: Vec<usize> = (offset..offset + rows).collect();
                        accumulate(&mut grads, p, g.select_rows(&index));
                        offset += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.shape(p).1;
                        accumulate(&mut grads, p, g.select_cols(offset, cols));
                        offset += cols;
                    }
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.data()[0]));
                }
                Op::RowStandardize(a, inv_std) => {
                    let y = &node.value;
                    let cols = y.cols() as f64;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let mean_g = gr.iter().sum::<f64>() / cols;
                        let mean_gy = super::matrix::dot(gr, yr) / cols;
                        for ((o, &gv), &yv) in ga.row_mut(r).iter_mut().zip(gr).zip(yr) {
                            *o = inv_std[r] * (gv - mean_g - yv * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mask(a, mask) => accumulate(&mut grads, *a, g.zip_map(mask, |x, m| x * m)?),
                Op::Fused(partials) => {
                    let up = g.data()[0];
                    for (v, p) in partials {
                        accumulate(&mut grads, *v, p.map(|x| x * up));
                    }
                }
            }
        }
        store.mark_gradients();
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_scaled(&g, 1.0),
        slot @ None => *slot = Some(g),
    }
}

/// Row-wise softmax of a plain matrix.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        row.iter_mut().for_each(|x| *x /= total);
    }
    out
}
