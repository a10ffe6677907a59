//! Dense row-major `f64` tensors of rank 1 or 2.
//!
//! Only the handful of operations the forecaster needs are provided; there is
//! no broadcasting. Every binary operation checks shapes and reports both
//! operands on mismatch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor", into = "RawTensor")]
pub struct Tensor {
    /// `[len, 0]` for vectors, `[rows, cols]` for matrices.
    dims: [usize; 2],
    rank: usize,
    values: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl From<Tensor> for RawTensor {
    fn from(t: Tensor) -> Self {
        RawTensor {
            shape: t.shape().to_vec(),
            values: t.values,
        }
    }
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        Tensor::new(raw.shape, raw.values)
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::Rank {
                op: "Tensor::new",
                expected: 2,
                got: shape,
            });
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Dimension {
                op: "Tensor::new",
                left: shape,
                right: vec![values.len()],
            });
        }
        Ok(Tensor::with_shape(&shape, values))
    }

    fn with_shape(shape: &[usize], values: Vec<f64>) -> Self {
        let mut dims = [0; 2];
        dims[..shape.len()].copy_from_slice(shape);
        Tensor {
            dims,
            rank: shape.len(),
            values,
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor {
            dims: [values.len(), 0],
            rank: 1,
            values,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::vector(vec![value])
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], values)
    }

    /// # Panics
    /// If `shape` has rank other than 1 or 2.
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(matches!(shape.len(), 1 | 2), "tensors have rank 1 or 2");
        Tensor::with_shape(shape, vec![0.0; shape.iter().product()])
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor {
            dims: other.dims,
            rank: other.rank,
            values: vec![0.0; other.values.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.dims[..self.rank]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    /// Columns of a matrix; 1 for a vector.
    pub fn cols(&self) -> usize {
        if self.rank == 2 {
            self.dims[1]
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.values[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    /// Scalar value of a length-1 tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.values.len(), 1);
        self.values[0]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims,
            rank: self.rank,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        same_shape(op, self, other)?;
        Ok(Tensor {
            dims: self.dims,
            rank: self.rank,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub(crate) fn add_assign(&mut self, other: &[f64]) {
        debug_assert_eq!(self.values.len(), other.len());
        for (a, b) in self.values.iter_mut().zip(other) {
            *a += b;
        }
    }
}

pub(crate) fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

pub(crate) fn require_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::Rank {
            op,
            expected: rank,
            got: t.shape().to_vec(),
        });
    }
    Ok(())
}

/// Inner product with four independent partial sums; the fixed
/// association keeps results reproducible.
pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Matrix-vector product `m · v`.
pub fn matvec(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    require_rank("matvec", m, 2)?;
    require_rank("matvec", v, 1)?;
    if m.cols() != v.len() {
        return Err(Error::Dimension {
            op: "matvec",
            left: m.shape().to_vec(),
            right: v.shape().to_vec(),
        });
    }
    Ok(matvec_block(m, &v.values, 0))
}

/// Product of the column block `m[:, offset..offset + |v|]` with `v`.
///
/// `matvec(m, concat(a, b))` equals `matvec_cols(m, a, 0) + matvec_cols(m, b, |a|)`
/// without materialising the concatenation.
pub fn matvec_cols(m: &Tensor, v: &Tensor, offset: usize) -> Result<Tensor> {
    require_rank("matvec_cols", m, 2)?;
    require_rank("matvec_cols", v, 1)?;
    if offset + v.len() > m.cols() {
        return Err(Error::Dimension {
            op: "matvec_cols",
            left: m.shape().to_vec(),
            right: v.shape().to_vec(),
        });
    }
    Ok(matvec_block(m, &v.values, offset))
}

fn matvec_block(m: &Tensor, v: &[f64], offset: usize) -> Tensor {
    let out = (0..m.rows())
        .map(|r| dot_slices(&m.row(r)[offset..offset + v.len()], v))
        .collect();
    Tensor::vector(out)
}

/// `mᵀ · v`.
pub fn matvec_t(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    require_rank("matvec_t", m, 2)?;
    require_rank("matvec_t", v, 1)?;
    if m.rows() != v.len() {
        return Err(Error::Dimension {
            op: "matvec_t",
            left: m.shape().to_vec(),
            right: v.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; m.cols()];
    for (r, &w) in v.values.iter().enumerate() {
        for (o, &x) in out.iter_mut().zip(m.row(r)) {
            *o += w * x;
        }
    }
    Ok(Tensor::vector(out))
}

/// `m` with `v` added to every row.
pub fn add_rows(m: &Tensor, v: &Tensor) -> Result<Tensor> {
    require_rank("add_rows", m, 2)?;
    require_rank("add_rows", v, 1)?;
    if m.cols() != v.len() {
        return Err(Error::Dimension {
            op: "add_rows",
            left: m.shape().to_vec(),
            right: v.shape().to_vec(),
        });
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        out.row_mut(r).iter_mut().zip(&v.values).for_each(|(o, &x)| *o += x);
    }
    Ok(out)
}

pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, "hadamard", |x, y| x * y)
}

pub fn concat(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    require_rank("concat", a, 1)?;
    require_rank("concat", b, 1)?;
    let mut values = Vec::with_capacity(a.len() + b.len());
    values.extend_from_slice(&a.values);
    values.extend_from_slice(&b.values);
    Ok(Tensor::vector(values))
}

pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn tanh_act(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

/// Max-shifted softmax of a vector.
pub fn softmax(u: &Tensor) -> Result<Tensor> {
    require_rank("softmax", u, 1)?;
    if u.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    let max = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = u.values.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(Tensor::vector(exps.into_iter().map(|e| e / total).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity_and_row_sums() {
        let id = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(
            matvec(&id, &Tensor::vector(vec![3.0, 4.0])).unwrap().values(),
            &[3.0, 4.0]
        );
        let m = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(
            matvec(&m, &Tensor::vector(vec![1.0, 1.0])).unwrap().values(),
            &[3.0, 7.0]
        );
    }

    #[test]
    fn matvec_shape_error_names_both_shapes() {
        let m = Tensor::zeros(&[2, 3]);
        let err = matvec(&m, &Tensor::vector(vec![1.0, 2.0])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn matvec_cols_matches_concat() {
        let m = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let a = Tensor::vector(vec![0.5]);
        let b = Tensor::vector(vec![-1.0, 2.0]);
        let full = matvec(&m, &concat(&a, &b).unwrap()).unwrap();
        let pa = matvec_cols(&m, &a, 0).unwrap();
        let pb = matvec_cols(&m, &b, 1).unwrap();
        for r in 0..2 {
            assert!((full.values()[r] - (pa.values()[r] + pb.values()[r])).abs() < 1e-15);
        }
        assert!(matvec_cols(&m, &b, 2).is_err());
    }

    #[test]
    fn hadamard_examples() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        assert_eq!(
            hadamard(&a, &Tensor::vector(vec![0.0, 0.0])).unwrap().values(),
            &[0.0, 0.0]
        );
        assert_eq!(
            hadamard(&a, &Tensor::vector(vec![3.0, 4.0])).unwrap().values(),
            &[3.0, 8.0]
        );
        assert!(hadamard(&a, &Tensor::vector(vec![1.0])).is_err());
    }

    #[test]
    fn concat_examples() {
        let c = concat(&Tensor::vector(vec![1.0]), &Tensor::vector(vec![2.0, 3.0])).unwrap();
        assert_eq!(c.values(), &[1.0, 2.0, 3.0]);
        let c = concat(&Tensor::vector(vec![]), &Tensor::vector(vec![5.0])).unwrap();
        assert_eq!(c.values(), &[5.0]);
        assert!(matches!(
            concat(&Tensor::zeros(&[1, 1]), &Tensor::vector(vec![1.0])),
            Err(Error::Rank { .. })
        ));
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(&Tensor::scalar(0.0)).item(), 0.5);
        assert!((sigmoid(&Tensor::scalar(50.0)).item() - 1.0).abs() < 1e-15);
        assert!(sigmoid(&Tensor::scalar(-800.0)).item() >= 0.0);
        assert_eq!(tanh_act(&Tensor::scalar(0.0)).item(), 0.0);
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&Tensor::vector(vec![2.5, 2.5, 2.5])).unwrap();
        for v in s.values() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&Tensor::vector(vec![0.0, 1000.0])).unwrap();
        assert!(s.values()[0].abs() < 1e-12 && (s.values()[1] - 1.0).abs() < 1e-12);
        assert!(matches!(softmax(&Tensor::vector(vec![])), Err(Error::Domain(_))));
    }

    #[test]
    fn tensor_new_validates_length() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![2, 2, 2], vec![1.0; 8]).is_err());
        let json = r#"{"shape":[2],"values":[1.0]}"#;
        assert!(serde_json::from_str::<Tensor>(json).is_err());
    }
}
