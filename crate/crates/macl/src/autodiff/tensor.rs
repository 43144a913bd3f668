//! Dense tensors over 64-bit reals.

use crate::error::{Error, Result};

/// Tensor rank is at most two; sessions and parameters never need more.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn numel(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }

    /// Rows when viewed as a row-major 2-D array; a vector is one row.
    pub fn rows(&self) -> usize {
        match *self {
            Shape::Vector(_) => 1,
            Shape::Matrix(r, _) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(_, c) => c,
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}x{c}]"),
        }
    }
}

/// A dense array of 64-bit reals with an optional accumulated gradient.
///
/// Tensors are plain value storage; differentiation happens on a [`Tape`]
/// (see [`crate::autodiff::Tape`]) which copies leaf values in and hands
/// gradients back out. Gradients accumulate with `+=` across backward
/// passes until [`Tensor::zero_grad`] resets them.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    values: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn from_vec(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if shape.numel() != values.len() {
            return Err(Error::Shape(format!(
                "shape {shape} expects {} values, got {}",
                shape.numel(),
                values.len()
            )));
        }
        Ok(Tensor { shape, values, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor { shape, values: vec![0.0; shape.numel()], requires_grad: false, grad: None }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: Shape::Vector(1), values: vec![v], requires_grad: false, grad: None }
    }

    /// Mark as trainable. Leaves registered from a trainable tensor receive
    /// gradients during backward.
    pub fn trainable(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Add `g` into the accumulated gradient (allocating it on first use).
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "gradient length {} does not match tensor length {}",
                g.len(),
                self.values.len()
            )));
        }
        match &mut self.grad {
            Some(acc) => {
                for (a, gi) in acc.iter_mut().zip(g) {
                    *a += gi;
                }
            }
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// All entries finite (no NaN, no infinity).
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(Shape::Matrix(2, 3), vec![0.0; 5]).is_err());
        let t = Tensor::from_vec(Shape::Matrix(2, 3), vec![1.0; 6]).unwrap();
        assert_eq!(t.shape().numel(), 6);
        assert_eq!(t.shape().dims(), vec![2, 3]);
    }

    #[test]
    fn grad_accumulates_and_resets() {
        let mut t = Tensor::zeros(Shape::Vector(3)).trainable();
        t.accumulate_grad(&[1.0, 2.0, 3.0]).unwrap();
        t.accumulate_grad(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }
}
