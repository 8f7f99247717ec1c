use crate::error::{Error, Result};

/// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover every model in
/// this crate; scalars are rank-1 tensors of length 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Internal constructor that skips validation; callers guarantee the
    /// element count matches, and finiteness is checked by the recording op.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    /// Builds a tensor from raw data, validating the element count and that
    /// every entry is finite.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "from_vec",
                format!("shape {:?} needs {} entries, got {}", shape, n, data.len()),
            ));
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data,
        };
        t.check_finite("from_vec")?;
        Ok(t)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::shape("from_rows", "ragged rows"));
            }
            data.extend_from_slice(row);
        }
        Tensor::from_vec(&[r, c], data)
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<f64> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::shape(
                "scalar_value",
                format!("expected scalar, got shape {:?}", self.shape),
            ))
        }
    }

    /// Number of rows: first dimension for rank-2, length for rank-1.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Number of columns: second dimension for rank-2, 1 for rank-1.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let c = self.cols();
        self.data[i * c + j] = v;
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// In-place `self += other`, shapes must match exactly.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "add_assign",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// In-place `self += k * other`.
    pub fn add_scaled(&mut self, other: &Tensor, k: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "add_scaled",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape("transpose", format!("rank {}", self.rank())));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Tensor {
            shape: vec![c, r],
            data: out,
        })
    }

    fn matmul_dims(a: &Tensor, b: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
        if a.rank() != 2 || b.rank() != 2 {
            return Err(Error::shape(
                op,
                format!("need rank-2 operands, got {:?} and {:?}", a.shape, b.shape),
            ));
        }
        Ok((a.shape[0], a.shape[1], b.shape[1]))
    }

    /// `self (r x k) * other (k x c)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (r, k, c) = Tensor::matmul_dims(self, other, "matmul")?;
        if other.shape[0] != k {
            return Err(Error::shape(
                "matmul",
                format!("inner dims differ: {:?} x {:?}", self.shape, other.shape),
            ));
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let arow = &self.data[i * k..(i + 1) * k];
            let orow = &mut out[i * c..(i + 1) * c];
            for (p, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let brow = &other.data[p * c..(p + 1) * c];
                for j in 0..c {
                    orow[j] += av * brow[j];
                }
            }
        }
        Ok(Tensor {
            shape: vec![r, c],
            data: out,
        })
    }

    /// `self (r x k) * other^T (c x k)` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (r, k, _) = Tensor::matmul_dims(self, other, "matmul_nt")?;
        if other.shape[1] != k {
            return Err(Error::shape(
                "matmul_nt",
                format!("inner dims differ: {:?} x {:?}^T", self.shape, other.shape),
            ));
        }
        let c = other.shape[0];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let arow = &self.data[i * k..(i + 1) * k];
            let orow = &mut out[i * c..(i + 1) * c];
            for (j, item) in orow.iter_mut().enumerate() {
                let brow = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for p in 0..k {
                    acc += arow[p] * brow[p];
                }
                *item = acc;
            }
        }
        Ok(Tensor {
            shape: vec![r, c],
            data: out,
        })
    }

    /// `self^T (k x r) * other (k x c)` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor> {
        let (k, r, c) = Tensor::matmul_dims(self, other, "matmul_tn")?;
        if other.shape[0] != k {
            return Err(Error::shape(
                "matmul_tn",
                format!("inner dims differ: {:?}^T x {:?}", self.shape, other.shape),
            ));
        }
        let mut out = vec![0.0; r * c];
        for p in 0..k {
            let arow = &self.data[p * r..(p + 1) * r];
            let brow = &other.data[p * c..(p + 1) * c];
            for (i, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let orow = &mut out[i * c..(i + 1) * c];
                for j in 0..c {
                    orow[j] += av * brow[j];
                }
            }
        }
        Ok(Tensor {
            shape: vec![r, c],
            data: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_validates_length_and_finiteness() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::from_vec(&[2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::from_vec(&[2, 2], vec![1.0; 4]).is_ok());
    }

    #[test]
    fn matmul_matches_hand_result() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::from_vec(&[3, 2], vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_rejects_mismatched_inner_dims() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        let err = a.matmul(&b).unwrap_err();
        assert!(err.to_string().contains("[2, 3]"), "{err}");
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let a = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 4.0, -1.0]).unwrap();
        let b = Tensor::from_vec(&[4, 3], (0..12).map(|i| i as f64 * 0.3 - 1.0).collect()).unwrap();
        let nt = a.matmul_nt(&b).unwrap();
        let explicit = a.matmul(&b.transpose().unwrap()).unwrap();
        assert_eq!(nt, explicit);

        let c = Tensor::from_vec(&[2, 4], (0..8).map(|i| i as f64 - 3.0).collect()).unwrap();
        let tn = a.matmul_tn(&c).unwrap();
        let explicit = a.transpose().unwrap().matmul(&c).unwrap();
        assert_eq!(tn, explicit);
    }
}
