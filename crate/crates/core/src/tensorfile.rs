//! Binary tensor container.
//!
//! Layout, all integers little-endian: magic `TTTK`, `u32` version, `u32`
//! dtype code (1 = f32, 2 = f64), `u32` rank, `rank` x `u64` dims, then the
//! row-major payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{PolarField, PolarGrid};
use crate::matrix::Matrix;
use crate::scalar::{Dtype, Real};

pub const MAGIC: &[u8; 4] = b"TTTK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::shape("tensor", format!("{dims:?} ({len} values)"), data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.dims.len() + T::DTYPE.size() * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&T::DTYPE.code().to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &self.data {
            v.write_le(&mut out);
        }
        out
    }

    /// Parses a container whose dtype must equal `T`.
    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let (dtype, dims, payload) = parse_header(bytes)?;
        if dtype != T::DTYPE {
            return Err(format!("stored dtype {dtype:?} but {:?} was requested", T::DTYPE));
        }
        Ok(Self {
            dims,
            data: payload.chunks_exact(dtype.size()).map(T::read_le).collect(),
        })
    }

    /// Parses a container of either dtype, converting values to `T`.
    pub fn from_bytes_converted(bytes: &[u8]) -> std::result::Result<Self, String> {
        let (dtype, dims, payload) = parse_header(bytes)?;
        let data = match dtype {
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|c| T::lit(f32::read_le(c) as f64))
                .collect(),
            Dtype::F64 => payload.chunks_exact(8).map(|c| T::lit(f64::read_le(c))).collect(),
        };
        Ok(Self { dims, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|message| Error::Format {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Loads either dtype, converting to `T`.
    pub fn load_converted(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes_converted(&bytes).map_err(|message| Error::Format {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Header of a stored tensor without decoding the payload.
    pub fn peek(path: impl AsRef<Path>) -> Result<(Dtype, Vec<usize>)> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_header(&bytes)
            .map(|(dtype, dims, _)| (dtype, dims))
            .map_err(|message| Error::Format {
                path: path.to_path_buf(),
                message,
            })
    }

    pub fn from_matrix(m: &Matrix<T>) -> Self {
        Self {
            dims: vec![m.rows(), m.cols()],
            data: m.data.clone(),
        }
    }

    pub fn to_matrix(&self) -> Result<Matrix<T>> {
        match self.dims[..] {
            [r, c] => Matrix::from_vec(r, c, self.data.clone()),
            _ => Err(Error::shape("matrix tensor", "rank 2", format!("{:?}", self.dims))),
        }
    }

    /// `[n_rho, n_theta]`, matching polar storage order.
    pub fn from_polar(f: &PolarField<T>) -> Self {
        Self {
            dims: vec![f.grid.n_rho(), f.grid.n_theta()],
            data: f.values.clone(),
        }
    }

    pub fn to_polar(&self) -> Result<PolarField<T>> {
        match self.dims[..] {
            [nr, nt] => PolarField::new(PolarGrid::new(nt, nr)?, self.data.clone()),
            _ => Err(Error::shape("polar tensor", "rank 2", format!("{:?}", self.dims))),
        }
    }

    /// The `i`-th slice along the leading axis.
    pub fn slice(&self, i: usize) -> Result<Tensor<T>> {
        let Some((&n, rest)) = self.dims.split_first() else {
            return Err(Error::shape("tensor slice", "rank >= 1", "rank 0"));
        };
        if i >= n {
            return Err(Error::invalid(format!("slice {i} out of range for {n} entries")));
        }
        let len: usize = rest.iter().product();
        Ok(Self {
            dims: rest.to_vec(),
            data: self.data[i * len..(i + 1) * len].to_vec(),
        })
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(Error::invalid("cannot stack zero tensors"));
        };
        let mut data = Vec::with_capacity(items.len() * first.data.len());
        for t in items {
            if t.dims != first.dims {
                return Err(Error::shape(
                    "tensor stack",
                    format!("{:?}", first.dims),
                    format!("{:?}", t.dims),
                ));
            }
            data.extend_from_slice(&t.data);
        }
        let mut dims = vec![items.len()];
        dims.extend_from_slice(&first.dims);
        Ok(Self { dims, data })
    }
}

fn parse_header(bytes: &[u8]) -> std::result::Result<(Dtype, Vec<usize>, &[u8]), String> {
    let mut cursor = bytes;
    let mut take = |n: usize| -> std::result::Result<&[u8], String> {
        if cursor.len() < n {
            return Err("file is truncated".to_string());
        }
        let (head, tail) = cursor.split_at(n);
        cursor = tail;
        Ok(head)
    };
    if take(4)? != MAGIC {
        return Err("not a TTTK tensor file (bad magic)".into());
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let code = u32_at(take(4)?);
    let dtype = Dtype::from_code(code).ok_or_else(|| format!("unknown dtype code {code}"))?;
    let rank = u32_at(take(4)?) as usize;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = u64::from_le_bytes(take(8)?.try_into().unwrap());
        dims.push(usize::try_from(d).map_err(|_| format!("dimension {d} too large"))?);
    }
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .and_then(|n| n.checked_mul(dtype.size()))
        .ok_or("dimensions overflow")?;
    if cursor.len() != len {
        return Err(format!(
            "payload has {} bytes but dims {dims:?} need {len}",
            cursor.len()
        ));
    }
    Ok((dtype, dims, cursor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn f64_round_trip_is_bitwise(data in proptest::collection::vec(any::<f64>(), 0..40), split in 1usize..5) {
            let n = data.len() - data.len() % split;
            let t = Tensor::new(vec![split, n / split], data[..n].to_vec()).unwrap();
            let back = Tensor::<f64>::from_bytes(&t.to_bytes()).unwrap();
            prop_assert_eq!(back.dims, t.dims);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.data), bits(&t.data));
        }

        #[test]
        fn f32_round_trip_is_bitwise(data in proptest::collection::vec(any::<f32>(), 0..40)) {
            let t = Tensor::new(vec![data.len()], data).unwrap();
            let back = Tensor::<f32>::from_bytes(&t.to_bytes()).unwrap();
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.data), bits(&t.data));
        }
    }

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 3], vec![0.0f32; 6]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"TTTK");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(b.len(), 16 + 16 + 24);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let t = Tensor::new(vec![4], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let b = t.to_bytes();
        assert!(Tensor::<f64>::from_bytes(&b[..b.len() - 1]).is_err());
        assert!(Tensor::<f64>::from_bytes(b"JUNKJUNKJUNK").is_err());
        assert!(Tensor::<f32>::from_bytes(&b).is_err());
        let conv = Tensor::<f32>::from_bytes_converted(&b).unwrap();
        assert_eq!(conv.data, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn load_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tttk");
        std::fs::write(&path, b"nope").unwrap();
        let err = Tensor::<f64>::load(&path).unwrap_err().to_string();
        assert!(err.contains("bad.tttk"), "{err}");
        let missing = Tensor::<f64>::load(dir.path().join("missing.tttk")).unwrap_err();
        assert!(missing.to_string().contains("missing.tttk"));
    }

    #[test]
    fn stack_and_slice() {
        let a = Tensor::new(vec![2], vec![1.0f64, 2.0]).unwrap();
        let b = Tensor::new(vec![2], vec![3.0f64, 4.0]).unwrap();
        let s = Tensor::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.dims, vec![2, 2]);
        assert_eq!(s.slice(1).unwrap(), b);
        assert!(Tensor::new(vec![3], vec![1.0f64]).is_err());
    }
}
