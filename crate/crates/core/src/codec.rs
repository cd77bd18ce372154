//! JSON encoding for complex matrices: `{dim, re, im}` with `re` and `im`
//! flattened row-major.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{c, ComplexMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixJson {
    pub fn encode(m: &ComplexMatrix) -> Self {
        let dim = m.nrows();
        let mut re = Vec::with_capacity(dim * dim);
        let mut im = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixJson { dim, re, im }
    }

    pub fn decode(&self) -> Result<ComplexMatrix> {
        let n = self.dim;
        if n == 0 {
            return Err(invalid("matrix dim must be positive"));
        }
        if self.re.len() != n * n || self.im.len() != n * n {
            return Err(invalid(format!(
                "matrix of dim {n} needs {} entries in re and im, got {} and {}",
                n * n,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(ComplexMatrix::from_fn(n, n, |i, j| c(self.re[i * n + j], self.im[i * n + j])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_layout() {
        let m = ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 1.0), c(3.0, -1.0), c(4.0, 0.0)]);
        let j = MatrixJson::encode(&m);
        assert_eq!(j.re, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(j.im, vec![0.0, 1.0, -1.0, 0.0]);
        assert_eq!(j.decode().unwrap(), m);
        let text = serde_json::to_string(&j).unwrap();
        assert_eq!(text, r#"{"dim":2,"re":[1.0,2.0,3.0,4.0],"im":[0.0,1.0,-1.0,0.0]}"#);
    }

    #[test]
    fn rejects_wrong_lengths() {
        let j = MatrixJson { dim: 2, re: vec![0.0; 3], im: vec![0.0; 4] };
        assert!(j.decode().is_err());
    }
}
