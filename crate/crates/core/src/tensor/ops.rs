use super::{Result, Tensor, TensorError};
use crate::scalar::Scalar;

/// Clamp applied to predictions inside [`Tensor::bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

pub(crate) enum Op<T: Scalar> {
    MatMul(Tensor<T>, Tensor<T>),
    Add(Tensor<T>, Tensor<T>),
    Sub(Tensor<T>, Tensor<T>),
    Mul(Tensor<T>, Tensor<T>),
    Scale(Tensor<T>, T),
    Relu(Tensor<T>),
    Sigmoid(Tensor<T>),
    SoftmaxRows(Tensor<T>),
    Transpose(Tensor<T>),
    ConcatRows(Vec<Tensor<T>>),
    ConcatCols(Vec<Tensor<T>>),
    SliceRows(Tensor<T>, usize, usize),
    Sum(Tensor<T>),
    Mean(Tensor<T>),
    MeanRows(Tensor<T>),
    BroadcastRows(Tensor<T>),
    GatherRows(Tensor<T>, Vec<usize>),
    SegmentSum(Tensor<T>, Vec<usize>),
    Bce(Tensor<T>, Vec<T>),
}

impl<T: Scalar> Op<T> {
    pub(crate) fn parents(&self) -> Vec<&Tensor<T>> {
        match self {
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::ConcatRows(ps) | Op::ConcatCols(ps) => ps.iter().collect(),
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::Transpose(a)
            | Op::SliceRows(a, _, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::MeanRows(a)
            | Op::BroadcastRows(a)
            | Op::GatherRows(a, _)
            | Op::SegmentSum(a, _)
            | Op::Bce(a, _) => vec![a],
        }
    }

    /// Gradients for every parent that requires them, given the op output
    /// `out` and the upstream gradient `g` (same length as `out`).
    pub(crate) fn backward(&self, out: &[T], g: &[T]) -> Vec<(Tensor<T>, Vec<T>)> {
        let mut res = Vec::new();
        match self {
            Op::MatMul(a, b) => {
                let (n, k) = (a.shape()[0], a.shape()[1]);
                let m = b.shape()[1];
                if a.requires_grad() {
                    // ga = g · bᵀ
                    let bv = b.values();
                    let mut ga = vec![T::zero(); n * k];
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let brow = &bv[p * m..(p + 1) * m];
                            ga[i * k + p] = dot(grow, brow);
                        }
                    }
                    res.push((a.clone(), ga));
                }
                if b.requires_grad() {
                    // gb = aᵀ · g
                    let av = a.values();
                    let mut gb = vec![T::zero(); k * m];
                    for i in 0..n {
                        let grow = &g[i * m..(i + 1) * m];
                        for p in 0..k {
                            let s = av[i * k + p];
                            if s == T::zero() {
                                continue;
                            }
                            axpy(&mut gb[p * m..(p + 1) * m], s, grow);
                        }
                    }
                    res.push((b.clone(), gb));
                }
            }
            Op::Add(a, b) => {
                if a.requires_grad() {
                    res.push((a.clone(), g.to_vec()));
                }
                if b.requires_grad() {
                    res.push((b.clone(), g.to_vec()));
                }
            }
            Op::Sub(a, b) => {
                if a.requires_grad() {
                    res.push((a.clone(), g.to_vec()));
                }
                if b.requires_grad() {
                    res.push((b.clone(), g.iter().map(|&x| -x).collect()));
                }
            }
            Op::Mul(a, b) => {
                if a.requires_grad() {
                    let bv = b.values();
                    res.push((a.clone(), g.iter().zip(&bv).map(|(&x, &y)| x * y).collect()));
                }
                if b.requires_grad() {
                    let av = a.values();
                    res.push((b.clone(), g.iter().zip(&av).map(|(&x, &y)| x * y).collect()));
                }
            }
            Op::Scale(a, c) => res.push((a.clone(), g.iter().map(|&x| x * *c).collect())),
            Op::Relu(a) => {
                let av = a.values();
                let ga = g
                    .iter()
                    .zip(&av)
                    .map(|(&x, &v)| if v > T::zero() { x } else { T::zero() })
                    .collect();
                res.push((a.clone(), ga));
            }
            Op::Sigmoid(a) => {
                let ga = g.iter().zip(out).map(|(&x, &y)| x * y * (T::one() - y)).collect();
                res.push((a.clone(), ga));
            }
            Op::SoftmaxRows(a) => {
                let cols = a.shape()[1];
                let mut ga = vec![T::zero(); out.len()];
                for (r, (grow, yrow)) in g.chunks(cols).zip(out.chunks(cols)).enumerate() {
                    let inner = dot(grow, yrow);
                    for j in 0..cols {
                        ga[r * cols + j] = yrow[j] * (grow[j] - inner);
                    }
                }
                res.push((a.clone(), ga));
            }
            Op::Transpose(a) => {
                let (r, c) = (a.shape()[0], a.shape()[1]);
                // out is c×r; g likewise.
                let mut ga = vec![T::zero(); r * c];
                for i in 0..c {
                    for j in 0..r {
                        ga[j * c + i] = g[i * r + j];
                    }
                }
                res.push((a.clone(), ga));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = p.numel();
                    if p.requires_grad() {
                        res.push((p.clone(), g[offset..offset + n].to_vec()));
                    }
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let rows = parts[0].shape()[0];
                let total: usize = parts.iter().map(|p| p.shape()[1]).sum();
                let mut col0 = 0;
                for p in parts {
                    let c = p.shape()[1];
                    if p.requires_grad() {
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(&g[r * total + col0..r * total + col0 + c]);
                        }
                        res.push((p.clone(), gp));
                    }
                    col0 += c;
                }
            }
            Op::SliceRows(a, start, _end) => {
                let cols = a.shape()[1];
                let mut ga = vec![T::zero(); a.numel()];
                ga[start * cols..start * cols + g.len()].copy_from_slice(g);
                res.push((a.clone(), ga));
            }
            Op::Sum(a) => res.push((a.clone(), vec![g[0]; a.numel()])),
            Op::Mean(a) => {
                let n = T::from_usize(a.numel()).expect("count fits scalar");
                res.push((a.clone(), vec![g[0] / n; a.numel()]));
            }
            Op::MeanRows(a) => {
                let (r, c) = (a.shape()[0], a.shape()[1]);
                let n = T::from_usize(r).expect("count fits scalar");
                let mut ga = Vec::with_capacity(r * c);
                for _ in 0..r {
                    ga.extend(g.iter().map(|&x| x / n));
                }
                res.push((a.clone(), ga));
            }
            Op::BroadcastRows(a) => {
                let c = a.shape()[1];
                let mut ga = vec![T::zero(); c];
                for row in g.chunks(c) {
                    ga.iter_mut().zip(row).for_each(|(s, &x)| *s = *s + x);
                }
                res.push((a.clone(), ga));
            }
            Op::GatherRows(table, idx) => {
                let c = table.shape()[1];
                let mut gt = vec![T::zero(); table.numel()];
                for (r, &i) in idx.iter().enumerate() {
                    axpy(&mut gt[i * c..(i + 1) * c], T::one(), &g[r * c..(r + 1) * c]);
                }
                res.push((table.clone(), gt));
            }
            Op::SegmentSum(a, seg) => {
                let c = a.shape()[1];
                let mut ga = Vec::with_capacity(a.numel());
                for &s in seg {
                    ga.extend_from_slice(&g[s * c..(s + 1) * c]);
                }
                res.push((a.clone(), ga));
            }
            Op::Bce(pred, target) => {
                let eps = T::lit(BCE_EPS);
                let n = T::from_usize(pred.numel()).expect("count fits scalar");
                let pv = pred.values();
                let gp = pv
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| {
                        if p <= eps || p >= T::one() - eps {
                            T::zero()
                        } else {
                            g[0] * (p - t) / (p * (T::one() - p)) / n
                        }
                    })
                    .collect();
                res.push((pred.clone(), gp));
            }
        }
        res
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi = *yi + a * xi);
}

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    fn derived(shape: Vec<usize>, values: Vec<T>, op: Op<T>) -> Self {
        let rg = op.parents().iter().any(|p| p.requires_grad());
        Self::build(shape, values, rg, if rg { Some(op) } else { None })
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Vec<T> {
        let b = other.values();
        self.with_values(|a| a.iter().zip(&b).map(|(&x, &y)| f(x, y)).collect())
    }

    fn map(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.with_values(|a| a.iter().map(|&x| f(x)).collect())
    }

    /// Matrix product of `[n,k]` and `[k,m]`. Zero entries of the left operand
    /// are skipped, so sparse constant inputs are cheap.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (n, k) = self.rows_cols("matmul")?;
        let (k2, m) = other.rows_cols("matmul")?;
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape().to_vec(),
                right: other.shape().to_vec(),
            });
        }
        let bv = other.values();
        let mut out = vec![T::zero(); n * m];
        self.with_values(|av| {
            for i in 0..n {
                let orow = &mut out[i * m..(i + 1) * m];
                for p in 0..k {
                    let s = av[i * k + p];
                    if s == T::zero() {
                        continue;
                    }
                    axpy(orow, s, &bv[p * m..(p + 1) * m]);
                }
            }
        });
        Ok(Self::derived(vec![n, m], out, Op::MatMul(self.clone(), other.clone())))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_shape("add", self, other)?;
        let v = self.zip_with(other, |a, b| a + b);
        Ok(Self::derived(
            self.shape().to_vec(),
            v,
            Op::Add(self.clone(), other.clone()),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        same_shape("sub", self, other)?;
        let v = self.zip_with(other, |a, b| a - b);
        Ok(Self::derived(
            self.shape().to_vec(),
            v,
            Op::Sub(self.clone(), other.clone()),
        ))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        same_shape("mul", self, other)?;
        let v = self.zip_with(other, |a, b| a * b);
        Ok(Self::derived(
            self.shape().to_vec(),
            v,
            Op::Mul(self.clone(), other.clone()),
        ))
    }

    pub fn scale(&self, c: T) -> Self {
        let v = self.map(|x| x * c);
        Self::derived(self.shape().to_vec(), v, Op::Scale(self.clone(), c))
    }

    pub fn relu(&self) -> Self {
        let v = self.map(|x| if x > T::zero() { x } else { T::zero() });
        Self::derived(self.shape().to_vec(), v, Op::Relu(self.clone()))
    }

    pub fn sigmoid(&self) -> Self {
        let v = self.map(sigmoid);
        Self::derived(self.shape().to_vec(), v, Op::Sigmoid(self.clone()))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Result<Self> {
        let (_, c) = self.rows_cols("softmax_rows")?;
        let mut v = self.values();
        if c > 0 {
            for row in v.chunks_mut(c) {
                let mx = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
                let mut s = T::zero();
                for x in row.iter_mut() {
                    *x = (*x - mx).exp();
                    s = s + *x;
                }
                for x in row.iter_mut() {
                    *x = *x / s;
                }
            }
        }
        Ok(Self::derived(self.shape().to_vec(), v, Op::SoftmaxRows(self.clone())))
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.rows_cols("transpose")?;
        let mut out = vec![T::zero(); r * c];
        self.with_values(|a| {
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = a[i * c + j];
                }
            }
        });
        Ok(Self::derived(vec![c, r], out, Op::Transpose(self.clone())))
    }

    /// Stacks matrices vertically; all parts need the same column count.
    pub fn concat_rows(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or(TensorError::OutOfRange {
            op: "concat_rows",
            index: 0,
            bound: 0,
        })?;
        let (_, c) = first.rows_cols("concat_rows")?;
        let mut rows = 0;
        let mut v = Vec::new();
        for p in parts {
            let (r, pc) = p.rows_cols("concat_rows")?;
            if pc != c {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: first.shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
            rows += r;
            p.with_values(|x| v.extend_from_slice(x));
        }
        Ok(Self::derived(vec![rows, c], v, Op::ConcatRows(parts.to_vec())))
    }

    /// Joins matrices side by side; all parts need the same row count.
    pub fn concat_cols(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or(TensorError::OutOfRange {
            op: "concat_cols",
            index: 0,
            bound: 0,
        })?;
        let (r, _) = first.rows_cols("concat_cols")?;
        let mut total = 0;
        for p in parts {
            let (pr, pc) = p.rows_cols("concat_cols")?;
            if pr != r {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: first.shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
            total += pc;
        }
        let vals: Vec<Vec<T>> = parts.iter().map(|p| p.values()).collect();
        let mut v = Vec::with_capacity(r * total);
        for row in 0..r {
            for (p, pv) in parts.iter().zip(&vals) {
                let c = p.shape()[1];
                v.extend_from_slice(&pv[row * c..(row + 1) * c]);
            }
        }
        Ok(Self::derived(vec![r, total], v, Op::ConcatCols(parts.to_vec())))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        let (r, c) = self.rows_cols("slice_rows")?;
        if start > end || end > r {
            return Err(TensorError::OutOfRange {
                op: "slice_rows",
                index: end,
                bound: r,
            });
        }
        let v = self.with_values(|a| a[start * c..end * c].to_vec());
        Ok(Self::derived(
            vec![end - start, c],
            v,
            Op::SliceRows(self.clone(), start, end),
        ))
    }

    pub fn sum(&self) -> Self {
        let s = self.with_values(|a| a.iter().copied().sum());
        Self::derived(Vec::new(), vec![s], Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Self {
        let n = T::from_usize(self.numel().max(1)).expect("count fits scalar");
        let s: T = self.with_values(|a| a.iter().copied().sum());
        Self::derived(Vec::new(), vec![s / n], Op::Mean(self.clone()))
    }

    /// Column means of a matrix, as a `[1, cols]` row.
    pub fn mean_rows(&self) -> Result<Self> {
        let (r, c) = self.rows_cols("mean_rows")?;
        let n = T::from_usize(r.max(1)).expect("count fits scalar");
        let mut out = vec![T::zero(); c];
        self.with_values(|a| {
            for row in a.chunks(c.max(1)) {
                out.iter_mut().zip(row).for_each(|(s, &x)| *s = *s + x);
            }
        });
        out.iter_mut().for_each(|x| *x = *x / n);
        Ok(Self::derived(vec![1, c], out, Op::MeanRows(self.clone())))
    }

    /// Repeats a `[1, c]` row `n` times.
    pub fn broadcast_rows(&self, n: usize) -> Result<Self> {
        let (r, c) = self.rows_cols("broadcast_rows")?;
        if r != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_rows",
                left: self.shape().to_vec(),
                right: vec![1, c],
            });
        }
        let row = self.values();
        let mut v = Vec::with_capacity(n * c);
        for _ in 0..n {
            v.extend_from_slice(&row);
        }
        Ok(Self::derived(vec![n, c], v, Op::BroadcastRows(self.clone())))
    }

    /// Selects rows of a lookup table (embedding lookup).
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Self> {
        let (r, c) = self.rows_cols("gather_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(TensorError::OutOfRange {
                op: "gather_rows",
                index: bad,
                bound: r,
            });
        }
        let v = self.with_values(|a| {
            let mut v = Vec::with_capacity(idx.len() * c);
            for &i in idx {
                v.extend_from_slice(&a[i * c..(i + 1) * c]);
            }
            v
        });
        Ok(Self::derived(
            vec![idx.len(), c],
            v,
            Op::GatherRows(self.clone(), idx.to_vec()),
        ))
    }

    /// Sums rows into `segments` buckets: row `i` is added to bucket `seg[i]`.
    pub fn segment_sum(&self, seg: &[usize], segments: usize) -> Result<Self> {
        let (r, c) = self.rows_cols("segment_sum")?;
        if seg.len() != r {
            return Err(TensorError::ShapeMismatch {
                op: "segment_sum",
                left: self.shape().to_vec(),
                right: vec![seg.len()],
            });
        }
        if let Some(&bad) = seg.iter().find(|&&s| s >= segments) {
            return Err(TensorError::OutOfRange {
                op: "segment_sum",
                index: bad,
                bound: segments,
            });
        }
        let mut out = vec![T::zero(); segments * c];
        self.with_values(|a| {
            for (i, &s) in seg.iter().enumerate() {
                axpy(&mut out[s * c..(s + 1) * c], T::one(), &a[i * c..(i + 1) * c]);
            }
        });
        Ok(Self::derived(
            vec![segments, c],
            out,
            Op::SegmentSum(self.clone(), seg.to_vec()),
        ))
    }

    /// Mean binary cross-entropy between predictions in (0,1) and 0/1 targets.
    /// Predictions are clamped to `[ε, 1−ε]` with ε = 1e-7.
    pub fn bce_loss(&self, target: &Self) -> Result<Self> {
        same_shape("bce_loss", self, target)?;
        let eps = T::lit(BCE_EPS);
        let t = target.values();
        let n = T::from_usize(self.numel().max(1)).expect("count fits scalar");
        let total: T = self.with_values(|p| {
            p.iter()
                .zip(&t)
                .map(|(&p, &t)| {
                    let p = p.max(eps).min(T::one() - eps);
                    -(t * p.ln() + (T::one() - t) * (T::one() - p).ln())
                })
                .sum()
        });
        Ok(Self::derived(Vec::new(), vec![total / n], Op::Bce(self.clone(), t)))
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
