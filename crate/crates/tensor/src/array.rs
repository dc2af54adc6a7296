use std::fmt;

/// Dense row-major `f64` array with a dynamic shape.
#[derive(Clone, PartialEq)]
pub struct Array {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Array {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Array{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Array {
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            numel(shape),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_vec(&[1], vec![value])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n = numel(shape);
        Self::from_vec(shape, (0..n).map(&mut f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Single value of a one-element array.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on array of shape {:?}", self.shape);
        self.data[0]
    }

    /// `(n, c, h, w)` of a rank-4 array.
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        match self.shape[..] {
            [n, c, h, w] => (n, c, h, w),
            _ => panic!("expected rank-4 array, got shape {:?}", self.shape),
        }
    }

    pub fn dims3(&self) -> (usize, usize, usize) {
        match self.shape[..] {
            [b, m, n] => (b, m, n),
            _ => panic!("expected rank-3 array, got shape {:?}", self.shape),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(
            numel(shape),
            self.data.len(),
            "cannot reshape {:?} into {shape:?}",
            self.shape
        );
        self.shape = shape.to_vec();
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Array, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, other.shape, "shape mismatch in elementwise op");
        Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Array) {
        assert_eq!(self.shape, other.shape, "shape mismatch in accumulation");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Element at a multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut o = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
            o = o * d + i;
        }
        o
    }

    /// Splits the shape around `axis` into `(outer, axis_len, inner)`.
    pub(crate) fn axis_split(&self, axis: usize) -> (usize, usize, usize) {
        assert!(axis < self.shape.len(), "axis {axis} out of range");
        let outer = numel(&self.shape[..axis]);
        let inner = numel(&self.shape[axis + 1..]);
        (outer, self.shape[axis], inner)
    }

    /// Copies the slab `start..start+len` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Array {
        let (outer, alen, inner) = self.axis_split(axis);
        assert!(start + len <= alen, "narrow out of range");
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * alen + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Array::from_vec(&shape, data)
    }

    /// Concatenates arrays along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[&Array], axis: usize) -> Array {
        assert!(!parts.is_empty(), "concat of zero arrays");
        let first = parts[0];
        let (outer, _, inner) = first.axis_split(axis);
        let mut shape = first.shape.clone();
        shape[axis] = 0;
        for p in parts {
            assert_eq!(p.ndim(), first.ndim(), "concat rank mismatch");
            for (d, (&a, &b)) in p.shape.iter().zip(&first.shape).enumerate() {
                assert!(d == axis || a == b, "concat shape mismatch {:?} vs {:?}", p.shape, first.shape);
            }
            shape[axis] += p.shape[axis];
        }
        let mut data = Vec::with_capacity(numel(&shape));
        for o in 0..outer {
            for p in parts {
                let alen = p.shape[axis];
                let base = o * alen * inner;
                data.extend_from_slice(&p.data[base..base + alen * inner]);
            }
        }
        Array::from_vec(&shape, data)
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&self) -> Array {
        let r = self.ndim();
        assert!(r >= 2, "transpose needs rank >= 2");
        let m = self.shape[r - 2];
        let n = self.shape[r - 1];
        let batch = numel(&self.shape[..r - 2]);
        let mut out = vec![0.0; self.data.len()];
        for b in 0..batch {
            let src = &self.data[b * m * n..(b + 1) * m * n];
            let dst = &mut out[b * m * n..(b + 1) * m * n];
            for i in 0..m {
                for j in 0..n {
                    dst[j * m + i] = src[i * n + j];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.swap(r - 2, r - 1);
        Array::from_vec(&shape, out)
    }

    /// Index of the maximum along `axis` (first maximum wins).
    pub fn argmax_axis(&self, axis: usize) -> Vec<usize> {
        let (outer, alen, inner) = self.axis_split(axis);
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = 0;
                let mut best_v = f64::NEG_INFINITY;
                for a in 0..alen {
                    let v = self.data[(o * alen + a) * inner + i];
                    if v > best_v {
                        best_v = v;
                        best = a;
                    }
                }
                out.push(best);
            }
        }
        out
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax_axis(&self, axis: usize) -> Array {
        let (outer, alen, inner) = self.axis_split(axis);
        let mut out = self.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |a: usize| (o * alen + a) * inner + i;
                let mut m = f64::NEG_INFINITY;
                for a in 0..alen {
                    m = m.max(out[idx(a)]);
                }
                let mut s = 0.0;
                for a in 0..alen {
                    let e = (out[idx(a)] - m).exp();
                    out[idx(a)] = e;
                    s += e;
                }
                for a in 0..alen {
                    out[idx(a)] /= s;
                }
            }
        }
        Array::from_vec(&self.shape, out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
