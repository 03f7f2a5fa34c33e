//! Dense row-major arrays of rank 0, 1 or 2.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Real, Result};

/// Extents of an array. Scalars have rank 0, vectors rank 1, matrices rank 2.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: [usize; 2],
    rank: u8,
}

impl Shape {
    pub const fn scalar() -> Self {
        Shape {
            dims: [1, 1],
            rank: 0,
        }
    }

    pub const fn vector(n: usize) -> Self {
        Shape {
            dims: [n, 1],
            rank: 1,
        }
    }

    pub const fn matrix(rows: usize, cols: usize) -> Self {
        Shape {
            dims: [rows, cols],
            rank: 2,
        }
    }

    /// Builds a shape from a list of extents; every extent must be positive.
    pub fn from_dims(dims: &[usize]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Contract(alloc::format!(
                "shape extents must be positive, got {dims:?}"
            )));
        }
        match dims {
            [] => Ok(Shape::scalar()),
            [n] => Ok(Shape::vector(*n)),
            [r, c] => Ok(Shape::matrix(*r, *c)),
            _ => Err(Error::Contract(alloc::format!(
                "rank {} arrays are not supported",
                dims.len()
            ))),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank as usize
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.rank as usize]
    }

    pub fn numel(&self) -> usize {
        self.dims().iter().product()
    }

    /// Rows when viewed as a matrix; a vector is a single row.
    pub fn rows(&self) -> usize {
        match self.rank {
            2 => self.dims[0],
            _ => 1,
        }
    }

    /// Columns when viewed as a matrix; a vector of length n has n columns.
    pub fn cols(&self) -> usize {
        match self.rank {
            0 => 1,
            1 => self.dims[0],
            _ => self.dims[1],
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rank {
            0 => write!(f, "[]"),
            1 => write!(f, "[{}]", self.dims[0]),
            _ => write!(f, "[{}×{}]", self.dims[0], self.dims[1]),
        }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// An owned array; the storage for parameters, optimizer state and values
/// carried between decoding steps.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::Contract(alloc::format!(
                "shape {shape} needs {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.numel()],
        }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        Tensor {
            shape: Shape::vector(data.len()),
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Tensor::new(Shape::matrix(rows, cols), data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(Shape::matrix(n, n));
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.shape.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&x| U::of(x.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}
