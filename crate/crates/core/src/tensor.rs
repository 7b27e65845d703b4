//! Dense and block-sparse matrices, bias-free GRU cells and the activation
//! primitives used by every layer of the generator.
//!
//! All arithmetic is single precision. Every matrix-vector product
//! accumulates each output row left to right over the input index, on both
//! the dense and the block-sparse path, so a sparse matrix and its densified
//! copy produce identical results.

use crate::error::{dims_err, Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f32 = 0.2;

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn leaky_relu(x: f32, slope: f32) -> f32 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    LeakyRelu(f32),
}

impl Activation {
    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE)
    }

    #[inline]
    pub fn eval(self, x: f32) -> f32 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::LeakyRelu(slope) => leaky_relu(x, slope),
        }
    }

    pub fn apply(self, x: &[f32]) -> Vec<f32> {
        x.iter().map(|&v| self.eval(v)).collect()
    }

    pub fn apply_in_place(self, x: &mut [f32]) {
        for v in x {
            *v = self.eval(*v);
        }
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dims_err(
                "DenseMatrix::new",
                format!("{rows}x{cols} = {} values", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DenseMatrix::new"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn gemv(&self, x: &[f32]) -> Result<Vec<f32>> {
        let mut y = vec![0.0; self.rows];
        self.gemv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn gemv_into(&self, x: &[f32], y: &mut [f32]) -> Result<()> {
        check_gemv_dims("gemv", self.rows, self.cols, x.len(), y.len())?;
        let cols = self.cols;
        // Eight independent row accumulators; each row still sums in index order.
        let tiles = self.rows / 8;
        for t in 0..tiles {
            let base = t * 8 * cols;
            let block = &self.data[base..base + 8 * cols];
            let mut acc = [0.0f32; 8];
            for (j, &xj) in x.iter().enumerate() {
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += block[k * cols + j] * xj;
                }
            }
            y[t * 8..t * 8 + 8].copy_from_slice(&acc);
        }
        for i in tiles * 8..self.rows {
            let mut acc = 0.0f32;
            for (w, &xj) in self.row(i).iter().zip(x) {
                acc += w * xj;
            }
            y[i] = acc;
        }
        Ok(())
    }
}

fn check_gemv_dims(op: &'static str, rows: usize, cols: usize, x: usize, y: usize) -> Result<()> {
    if x != cols {
        return Err(dims_err(
            op,
            format!("input of length {cols} for a {rows}x{cols} matrix"),
            format!("input of length {x}"),
        ));
    }
    if y != rows {
        return Err(dims_err(
            op,
            format!("output of length {rows}"),
            format!("output of length {y}"),
        ));
    }
    Ok(())
}

/// Shape of one sparsity block, in matrix rows by matrix columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockShape {
    pub rows: usize,
    pub cols: usize,
}

impl BlockShape {
    pub const fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub const fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for BlockShape {
    /// 16 consecutive output rows by one input column.
    fn default() -> Self {
        Self::new(16, 1)
    }
}

/// Block-sparse matrix: a bit mask over fixed-shape blocks and the packed
/// values of the kept blocks.
///
/// Blocks are ordered row-major over the block grid; values inside a block are
/// row-major as well.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparseMatrix {
    rows: usize,
    cols: usize,
    block: BlockShape,
    mask: Vec<bool>,
    values: Vec<f32>,
    // CSR-style index over the block grid, derived from `mask`.
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl BlockSparseMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        block: BlockShape,
        mask: Vec<bool>,
        values: Vec<f32>,
    ) -> Result<Self> {
        validate_block_grid(rows, cols, block)?;
        let (brows, bcols) = (rows / block.rows, cols / block.cols);
        if mask.len() != brows * bcols {
            return Err(dims_err(
                "BlockSparseMatrix::new",
                format!("mask over {} blocks", brows * bcols),
                format!("mask over {} blocks", mask.len()),
            ));
        }
        let kept = mask.iter().filter(|&&m| m).count();
        if values.len() != kept * block.len() {
            return Err(dims_err(
                "BlockSparseMatrix::new",
                format!("{} values for {kept} kept blocks", kept * block.len()),
                format!("{} values", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("BlockSparseMatrix::new"));
        }
        let mut row_ptr = Vec::with_capacity(brows + 1);
        let mut col_idx = Vec::with_capacity(kept);
        row_ptr.push(0);
        for br in 0..brows {
            for bc in 0..bcols {
                if mask[br * bcols + bc] {
                    col_idx.push(bc);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows,
            cols,
            block,
            mask,
            values,
            row_ptr,
            col_idx,
        })
    }

    /// Keeps the blocks selected by `mask` (row-major over the block grid).
    pub fn from_dense(dense: &DenseMatrix, block: BlockShape, mask: Vec<bool>) -> Result<Self> {
        validate_block_grid(dense.rows, dense.cols, block)?;
        let bcols = dense.cols / block.cols;
        if mask.len() != (dense.rows / block.rows) * bcols {
            return Err(dims_err(
                "BlockSparseMatrix::from_dense",
                format!("mask over {} blocks", (dense.rows / block.rows) * bcols),
                format!("mask over {} blocks", mask.len()),
            ));
        }
        let mut values = Vec::new();
        for (b, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            let (br, bc) = (b / bcols, b % bcols);
            for r in 0..block.rows {
                for c in 0..block.cols {
                    values.push(dense.get(br * block.rows + r, bc * block.cols + c));
                }
            }
        }
        Self::new(dense.rows, dense.cols, block, mask, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block_shape(&self) -> BlockShape {
        self.block
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn total_blocks(&self) -> usize {
        self.mask.len()
    }

    pub fn kept_blocks(&self) -> usize {
        self.col_idx.len()
    }

    pub fn density(&self) -> f64 {
        self.kept_blocks() as f64 / self.total_blocks() as f64
    }

    pub fn active_params(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        let bl = self.block.len();
        for br in 0..self.rows / self.block.rows {
            for (k, &bc) in self.col_idx[self.row_ptr[br]..self.row_ptr[br + 1]]
                .iter()
                .enumerate()
            {
                let vals = &self.values[(self.row_ptr[br] + k) * bl..][..bl];
                for r in 0..self.block.rows {
                    for c in 0..self.block.cols {
                        d.data[(br * self.block.rows + r) * self.cols + bc * self.block.cols + c] =
                            vals[r * self.block.cols + c];
                    }
                }
            }
        }
        d
    }

    pub fn gemv(&self, x: &[f32]) -> Result<Vec<f32>> {
        let mut y = vec![0.0; self.rows];
        self.gemv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn gemv_into(&self, x: &[f32], y: &mut [f32]) -> Result<()> {
        check_gemv_dims("sparse gemv", self.rows, self.cols, x.len(), y.len())?;
        if self.block == BlockShape::new(16, 1) {
            self.gemv_16x1(x, y);
            return Ok(());
        }
        let (bh, bw) = (self.block.rows, self.block.cols);
        let bl = self.block.len();
        for br in 0..self.rows / bh {
            let out = &mut y[br * bh..(br + 1) * bh];
            out.fill(0.0);
            for k in self.row_ptr[br]..self.row_ptr[br + 1] {
                let c0 = self.col_idx[k] * bw;
                let vals = &self.values[k * bl..(k + 1) * bl];
                for c in 0..bw {
                    let xv = x[c0 + c];
                    for (r, o) in out.iter_mut().enumerate() {
                        *o += vals[r * bw + c] * xv;
                    }
                }
            }
        }
        Ok(())
    }

    fn gemv_16x1(&self, x: &[f32], y: &mut [f32]) {
        for (br, out) in y.chunks_exact_mut(16).enumerate() {
            let mut acc = [0.0f32; 16];
            let (lo, hi) = (self.row_ptr[br], self.row_ptr[br + 1]);
            let vals = &self.values[lo * 16..hi * 16];
            for (&c, blk) in self.col_idx[lo..hi].iter().zip(vals.chunks_exact(16)) {
                let xv = x[c];
                for (a, &v) in acc.iter_mut().zip(blk) {
                    *a += v * xv;
                }
            }
            out.copy_from_slice(&acc);
        }
    }
}

fn validate_block_grid(rows: usize, cols: usize, block: BlockShape) -> Result<()> {
    if block.is_empty() || rows % block.rows != 0 || cols % block.cols != 0 {
        return Err(dims_err(
            "block grid",
            format!("matrix dims divisible by block {}x{}", block.rows, block.cols),
            format!("{rows}x{cols}"),
        ));
    }
    Ok(())
}

/// A weight matrix in either storage.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Dense(DenseMatrix),
    Sparse(BlockSparseMatrix),
}

impl Matrix {
    pub fn rows(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.rows(),
            Matrix::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.cols(),
            Matrix::Sparse(m) => m.cols(),
        }
    }

    pub fn total_params(&self) -> usize {
        self.rows() * self.cols()
    }

    pub fn active_params(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.rows() * m.cols(),
            Matrix::Sparse(m) => m.active_params(),
        }
    }

    pub fn density(&self) -> f64 {
        match self {
            Matrix::Dense(_) => 1.0,
            Matrix::Sparse(m) => m.density(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Matrix::Sparse(_))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            Matrix::Dense(m) => m.clone(),
            Matrix::Sparse(m) => m.to_dense(),
        }
    }

    pub fn gemv(&self, x: &[f32]) -> Result<Vec<f32>> {
        match self {
            Matrix::Dense(m) => m.gemv(x),
            Matrix::Sparse(m) => m.gemv(x),
        }
    }

    pub fn gemv_into(&self, x: &[f32], y: &mut [f32]) -> Result<()> {
        match self {
            Matrix::Dense(m) => m.gemv_into(x, y),
            Matrix::Sparse(m) => m.gemv_into(x, y),
        }
    }
}

impl From<DenseMatrix> for Matrix {
    fn from(m: DenseMatrix) -> Self {
        Matrix::Dense(m)
    }
}

impl From<BlockSparseMatrix> for Matrix {
    fn from(m: BlockSparseMatrix) -> Self {
        Matrix::Sparse(m)
    }
}

/// `x ⊙ σ(gate · x)`; the gate is square.
pub fn glu(x: &[f32], gate: &Matrix) -> Result<Vec<f32>> {
    let mut out = vec![0.0; x.len()];
    glu_into(x, gate, &mut out)?;
    Ok(out)
}

pub fn glu_into(x: &[f32], gate: &Matrix, out: &mut [f32]) -> Result<()> {
    if gate.rows() != x.len() {
        return Err(dims_err(
            "glu",
            format!("gate with {} output rows", x.len()),
            format!("gate of {}x{}", gate.rows(), gate.cols()),
        ));
    }
    gate.gemv_into(x, out)?;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v * sigmoid(*o);
    }
    Ok(())
}

/// Bias-free GRU cell weights. `w_*` act on the input, `u_*` on the state.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_update: Matrix,
    pub w_reset: Matrix,
    pub w_candidate: Matrix,
    pub u_update: Matrix,
    pub u_reset: Matrix,
    pub u_candidate: Matrix,
}

impl GruParams {
    pub fn new(
        w_update: Matrix,
        w_reset: Matrix,
        w_candidate: Matrix,
        u_update: Matrix,
        u_reset: Matrix,
        u_candidate: Matrix,
    ) -> Result<Self> {
        let hidden_dim = u_update.rows();
        let input_dim = w_update.cols();
        for (name, m) in [
            ("w_update", &w_update),
            ("w_reset", &w_reset),
            ("w_candidate", &w_candidate),
        ] {
            if m.rows() != hidden_dim || m.cols() != input_dim {
                return Err(Error::Shape {
                    tensor: name.into(),
                    expected: format!("{hidden_dim}x{input_dim}"),
                    actual: format!("{}x{}", m.rows(), m.cols()),
                });
            }
        }
        for (name, m) in [
            ("u_update", &u_update),
            ("u_reset", &u_reset),
            ("u_candidate", &u_candidate),
        ] {
            if m.rows() != hidden_dim || m.cols() != hidden_dim {
                return Err(Error::Shape {
                    tensor: name.into(),
                    expected: format!("{hidden_dim}x{hidden_dim}"),
                    actual: format!("{}x{}", m.rows(), m.cols()),
                });
            }
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            w_update,
            w_reset,
            w_candidate,
            u_update,
            u_reset,
            u_candidate,
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Matrix::from(DenseMatrix::zeros(hidden_dim, input_dim));
        let u = || Matrix::from(DenseMatrix::zeros(hidden_dim, hidden_dim));
        Self {
            input_dim,
            hidden_dim,
            w_update: w(),
            w_reset: w(),
            w_candidate: w(),
            u_update: u(),
            u_reset: u(),
            u_candidate: u(),
        }
    }
}

/// Scratch buffers for [`gru_step_into`].
#[derive(Debug, Clone, Default)]
pub struct GruScratch {
    wx: Vec<f32>,
    uh: Vec<f32>,
    z: Vec<f32>,
    rh: Vec<f32>,
}

/// One bias-free GRU update:
///
/// ```text
/// z  = σ(Wz x + Uz h)
/// r  = σ(Wr x + Ur h)
/// h~ = tanh(Wc x + Uc (r ⊙ h))
/// h' = (1 − z) ⊙ h + z ⊙ h~
/// ```
pub fn gru_step(p: &GruParams, h: &[f32], x: &[f32]) -> Result<Vec<f32>> {
    let mut state = h.to_vec();
    gru_step_into(p, &mut state, x, &mut GruScratch::default())?;
    Ok(state)
}

pub fn gru_step_into(
    p: &GruParams,
    h: &mut [f32],
    x: &[f32],
    scratch: &mut GruScratch,
) -> Result<()> {
    if h.len() != p.hidden_dim {
        return Err(dims_err("gru_step", format!("state of length {}", p.hidden_dim), h.len()));
    }
    if x.len() != p.input_dim {
        return Err(dims_err("gru_step", format!("input of length {}", p.input_dim), x.len()));
    }
    if h.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gru_step"));
    }
    let n = p.hidden_dim;
    let GruScratch { wx, uh, z, rh } = scratch;
    for buf in [&mut *wx, &mut *uh, &mut *z, &mut *rh] {
        buf.resize(n, 0.0);
    }

    p.w_update.gemv_into(x, wx)?;
    p.u_update.gemv_into(h, uh)?;
    for i in 0..n {
        z[i] = sigmoid(wx[i] + uh[i]);
    }

    p.w_reset.gemv_into(x, wx)?;
    p.u_reset.gemv_into(h, uh)?;
    for i in 0..n {
        rh[i] = sigmoid(wx[i] + uh[i]) * h[i];
    }

    p.w_candidate.gemv_into(x, wx)?;
    p.u_candidate.gemv_into(rh, uh)?;
    for i in 0..n {
        let cand = (wx[i] + uh[i]).tanh();
        h[i] = (1.0 - z[i]) * h[i] + z[i] * cand;
    }
    Ok(())
}
