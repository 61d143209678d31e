use super::TensorError;

/// Dense row-major tensor of 64-bit floats.
///
/// A rank-0 tensor (empty shape) holds a single scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.contains(&0) {
            return Err(TensorError::InvalidShape(shape));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::ShapeMismatch(shape, vec![data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// 1-D tensor from a non-empty vector.
    pub fn from_vec(data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(vec![data.len()], data)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension in {shape:?}");
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
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

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < d, "index {ix} out of range for axis {i} of size {d}");
            off = off * d + ix;
        }
        self.data[off]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub(crate) fn reshaped(mut self, shape: Vec<usize>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape;
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise combination under trailing-dimension broadcasting.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, TensorError> {
        let out_shape = broadcast_shapes(&self.shape, &other.shape)?;
        if self.shape == other.shape {
            let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
            return Ok(Tensor { shape: out_shape, data });
        }
        let sa = broadcast_strides(&self.shape, &out_shape);
        let sb = broadcast_strides(&other.shape, &out_shape);
        let mut data = Vec::with_capacity(out_shape.iter().product());
        walk2(&out_shape, &sa, &sb, |ia, ib| {
            data.push(f(self.data[ia], other.data[ib]))
        });
        Ok(Tensor { shape: out_shape, data })
    }

    /// Broadcast this tensor up to `shape`.
    pub fn expand_to(&self, shape: &[usize]) -> Result<Tensor, TensorError> {
        let out = broadcast_shapes(&self.shape, shape)?;
        if out != shape {
            return Err(TensorError::ShapeMismatch(self.shape.clone(), shape.to_vec()));
        }
        if self.shape == shape {
            return Ok(self.clone());
        }
        let s = broadcast_strides(&self.shape, shape);
        let mut data = Vec::with_capacity(shape.iter().product());
        walk1(shape, &s, |i| data.push(self.data[i]));
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Sum over the dimensions that broadcasting would stretch, producing a
    /// tensor of `target` shape. Inverse of [`Tensor::expand_to`] for gradients.
    pub fn sum_to_shape(&self, target: &[usize]) -> Tensor {
        if self.shape == target {
            return self.clone();
        }
        let s = broadcast_strides(target, &self.shape);
        let mut data = vec![0.0; target.iter().product::<usize>().max(1)];
        let mut k = 0;
        walk1(&self.shape, &s, |i| {
            data[i] += self.data[k];
            k += 1;
        });
        Tensor {
            shape: target.to_vec(),
            data,
        }
    }

    /// Views the tensor as `[outer, axis, inner]` around `axis`.
    pub(crate) fn axis_split(&self, axis: usize) -> (usize, usize, usize) {
        let outer = self.shape[..axis].iter().product();
        let inner = self.shape[axis + 1..].iter().product();
        (outer, self.shape[axis], inner)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Trailing-dimension broadcast of two shapes.
pub fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>, TensorError> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(TensorError::ShapeMismatch(a.to_vec(), b.to_vec())),
        };
    }
    Ok(out)
}

/// Strides of `src` laid over `out`, zero where `src` is broadcast.
pub(crate) fn broadcast_strides(src: &[usize], out: &[usize]) -> Vec<usize> {
    let pad = out.len() - src.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..src.len()).rev() {
        if src[i] != 1 {
            strides[pad + i] = acc;
        }
        acc *= src[i];
    }
    strides
}

fn walk1(shape: &[usize], s: &[usize], mut f: impl FnMut(usize)) {
    if shape.is_empty() {
        f(0);
        return;
    }
    let last = shape.len() - 1;
    let (n, st) = (shape[last], s[last]);
    let mut idx = vec![0usize; last];
    let mut base = 0usize;
    loop {
        for j in 0..n {
            f(base + j * st);
        }
        let mut d = last;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            base += s[d];
            if idx[d] < shape[d] {
                break;
            }
            base -= s[d] * idx[d];
            idx[d] = 0;
        }
    }
}

fn walk2(shape: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize)) {
    if shape.is_empty() {
        f(0, 0);
        return;
    }
    let last = shape.len() - 1;
    let n = shape[last];
    let (ta, tb) = (sa[last], sb[last]);
    let mut idx = vec![0usize; last];
    let (mut ba, mut bb) = (0usize, 0usize);
    loop {
        for j in 0..n {
            f(ba + j * ta, bb + j * tb);
        }
        let mut d = last;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            idx[d] += 1;
            ba += sa[d];
            bb += sb[d];
            if idx[d] < shape[d] {
                break;
            }
            ba -= sa[d] * idx[d];
            bb -= sb[d] * idx[d];
            idx[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shapes(&[2, 3], &[3]).unwrap(), vec![2, 3]);
        assert_eq!(broadcast_shapes(&[2, 1], &[1, 4]).unwrap(), vec![2, 4]);
        assert_eq!(broadcast_shapes(&[], &[5]).unwrap(), vec![5]);
        assert!(broadcast_shapes(&[2, 3], &[2]).is_err());
    }

    #[test]
    fn zip_and_sum_back() {
        let a = Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![10., 20.]).unwrap();
        let c = a.zip_with(&b, |x, y| x + y).unwrap();
        assert_eq!(c.data(), &[11., 12., 13., 24., 25., 26.]);
        let back = c.sum_to_shape(&[2, 1]);
        assert_eq!(back.data(), &[36., 75.]);
        let cols = c.sum_to_shape(&[3]);
        assert_eq!(cols.data(), &[35., 37., 39.]);
    }

    #[test]
    fn zero_dims_rejected() {
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0]).is_err());
    }

    #[test]
    fn expand_middle_axis() {
        let a = Tensor::new(vec![2, 1, 2], vec![1., 2., 3., 4.]).unwrap();
        let e = a.expand_to(&[2, 3, 2]).unwrap();
        assert_eq!(e.data(), &[1., 2., 1., 2., 1., 2., 3., 4., 3., 4., 3., 4.]);
    }
}
