//! Dense K-way tensors and the handful of contractions the estimators use.
//!
//! Storage is colexicographic: the first index varies fastest. Mode indices in
//! this API are zero-based.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} entries, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        validate_shape(shape)?;
        let len = shape.iter().product();
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every zero-based multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_shape(shape)?;
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment_colex(&mut idx, shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Column-major matrix as an order-2 tensor.
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            shape: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.shape.len() {
            return Err(Error::Shape(format!(
                "index of length {} for order-{} tensor",
                idx.len(),
                self.shape.len()
            )));
        }
        let mut lin = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::Shape(format!("index {idx:?} outside shape {:?}", self.shape)));
            }
            lin += i * stride;
            stride *= d;
        }
        Ok(lin)
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.linear_index(idx)?])
    }

    /// Value of an order-0 tensor, the result of contracting every mode.
    pub fn scalar(&self) -> Option<f64> {
        (self.shape.is_empty()).then(|| self.data[0])
    }

    /// Contracts mode `k` against `v`, dropping that mode. Contracting the
    /// last remaining mode yields an order-0 tensor holding a single value.
    pub fn mode_product(&self, k: usize, v: &[f64]) -> Result<DenseTensor> {
        let (left, dk, right) = self.split_at_mode(k)?;
        if v.len() != dk {
            return Err(Error::Shape(format!(
                "mode {k} has length {dk}, vector has length {}",
                v.len()
            )));
        }
        let mut out = vec![0.0; left * right];
        for r in 0..right {
            let dst = &mut out[r * left..(r + 1) * left];
            for (i, &vi) in v.iter().enumerate() {
                if vi == 0.0 {
                    continue;
                }
                let base = left * (i + dk * r);
                let src = &self.data[base..base + left];
                for (o, &x) in dst.iter_mut().zip(src) {
                    *o += x * vi;
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(k);
        Ok(DenseTensor { shape, data: out })
    }

    /// Contracts every mode, `vectors[k]` against mode `k`.
    pub fn contract_all<V: AsRef<[f64]>>(&self, vectors: &[V]) -> Result<f64> {
        if vectors.len() != self.order() {
            return Err(Error::Shape(format!(
                "{} vectors for order-{} tensor",
                vectors.len(),
                self.order()
            )));
        }
        let mut cur = self.mode_product(self.order() - 1, vectors[self.order() - 1].as_ref())?;
        for k in (0..self.order() - 1).rev() {
            cur = cur.mode_product(k, vectors[k].as_ref())?;
        }
        Ok(cur.data[0])
    }

    /// Mode-`k` unfolding: a `d_k × (d / d_k)` matrix whose columns run over the
    /// remaining multi-indices in colexicographic order.
    pub fn unfold(&self, k: usize) -> Result<DMatrix<f64>> {
        let (left, dk, right) = self.split_at_mode(k)?;
        let mut m = DMatrix::zeros(dk, left * right);
        for r in 0..right {
            for i in 0..dk {
                let base = left * (i + dk * r);
                for l in 0..left {
                    m[(i, l + left * r)] = self.data[base + l];
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn refold(m: &DMatrix<f64>, k: usize, shape: &[usize]) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(shape)?;
        let (left, dk, right) = out.split_at_mode(k)?;
        if m.nrows() != dk || m.ncols() != left * right {
            return Err(Error::Shape(format!(
                "{}x{} matrix cannot refold along mode {k} into {shape:?}",
                m.nrows(),
                m.ncols()
            )));
        }
        for r in 0..right {
            for i in 0..dk {
                let base = left * (i + dk * r);
                for l in 0..left {
                    out.data[base + l] = m[(i, l + left * r)];
                }
            }
        }
        Ok(out)
    }

    /// `self += weight * (v_1 ∘ v_2 ∘ … ∘ v_K)`.
    pub fn rank1_accumulate<V: AsRef<[f64]>>(&mut self, weight: f64, vectors: &[V]) -> Result<()> {
        if vectors.len() != self.order() {
            return Err(Error::Shape(format!(
                "{} vectors for order-{} tensor",
                vectors.len(),
                self.order()
            )));
        }
        for (k, (v, &d)) in vectors.iter().zip(&self.shape).enumerate() {
            if v.as_ref().len() != d {
                return Err(Error::Shape(format!(
                    "vector {k} has length {}, mode has length {d}",
                    v.as_ref().len()
                )));
            }
        }
        if weight == 0.0 {
            return Ok(());
        }
        let outer = outer_product(weight, vectors);
        for (a, o) in self.data.iter_mut().zip(outer) {
            *a += o;
        }
        Ok(())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &DenseTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseTensor) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    fn check_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    fn split_at_mode(&self, k: usize) -> Result<(usize, usize, usize)> {
        if k >= self.shape.len() {
            return Err(Error::Shape(format!(
                "mode {k} out of range for order-{} tensor",
                self.shape.len()
            )));
        }
        let left = self.shape[..k].iter().product();
        let right = self.shape[k + 1..].iter().product();
        Ok((left, self.shape[k], right))
    }
}

/// Colexicographic outer product `weight * v_1 ∘ … ∘ v_K` as a flat vector.
pub fn outer_product<V: AsRef<[f64]>>(weight: f64, vectors: &[V]) -> Vec<f64> {
    let mut cur = vec![weight];
    for v in vectors {
        let v = v.as_ref();
        let mut next = Vec::with_capacity(cur.len() * v.len());
        for &vi in v {
            next.extend(cur.iter().map(|c| c * vi));
        }
        cur = next;
    }
    cur
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::Shape("tensor needs at least one mode".into()));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero-length mode in {shape:?}")));
    }
    Ok(())
}

fn increment_colex(idx: &mut [usize], shape: &[usize]) {
    for (i, &d) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < d {
            return;
        }
        *i = 0;
    }
}

/// A time-ordered sequence of equally shaped tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSeries {
    shape: Vec<usize>,
    items: Vec<DenseTensor>,
}

impl TensorSeries {
    pub fn new(items: Vec<DenseTensor>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InsufficientData("empty tensor series".into()))?;
        let shape = first.shape().to_vec();
        if let Some((t, bad)) = items.iter().enumerate().find(|(_, x)| x.shape() != shape) {
            return Err(Error::Shape(format!(
                "element {t} has shape {:?}, expected {shape:?}",
                bad.shape()
            )));
        }
        Ok(Self { shape, items })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of entries per observation.
    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&DenseTensor> {
        self.items.get(t)
    }

    pub fn items(&self) -> &[DenseTensor] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DenseTensor> {
        self.items.iter()
    }

    /// Observations `0..end`.
    pub fn prefix(&self, end: usize) -> Result<TensorSeries> {
        if end == 0 || end > self.items.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix length {end} outside 1..={}",
                self.items.len()
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            items: self.items[..end].to_vec(),
        })
    }

    pub fn scaled(&self, c: f64) -> TensorSeries {
        let items = self
            .items
            .iter()
            .map(|x| {
                let mut y = x.clone();
                y.scale(c);
                y
            })
            .collect();
        Self {
            shape: self.shape.clone(),
            items,
        }
    }
}
