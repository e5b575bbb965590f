//! Monomial observables and their Jacobians.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Exponent vector of one monomial `x_1^{e_1} ⋯ x_d^{e_d}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }
}

/// Ordered set of monomials of total degree at most `max_degree`.
///
/// Monomials are sorted by ascending total degree and, within a degree, in
/// graded-lexicographic order with `x_1 > x_2 > … > x_d`; for two states and
/// degree two this is `1, x, y, x², xy, y²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    state_dim: usize,
    max_degree: u32,
    include_constant: bool,
    indices: Vec<MultiIndex>,
}

impl Dictionary {
    pub fn new(state_dim: usize, max_degree: u32, include_constant: bool) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::InvalidArgument("state_dim must be at least 1".into()));
        }
        if max_degree == 0 {
            return Err(Error::InvalidArgument("max_degree must be at least 1".into()));
        }
        let start = if include_constant { 0 } else { 1 };
        let mut indices = Vec::new();
        for degree in start..=max_degree {
            let mut current = alloc::vec![0u32; state_dim];
            compositions(degree, 0, &mut current, &mut indices);
        }
        Ok(Self {
            state_dim,
            max_degree,
            include_constant,
            indices,
        })
    }

    /// Rebuilds a dictionary from a stored index list, checking it against
    /// the canonical ordering.
    pub fn from_indices(
        state_dim: usize,
        max_degree: u32,
        include_constant: bool,
        indices: Vec<MultiIndex>,
    ) -> Result<Self> {
        let canonical = Self::new(state_dim, max_degree, include_constant)?;
        if canonical.indices != indices {
            return Err(Error::InvalidArgument(
                "monomial indices do not match the canonical ordering".into(),
            ));
        }
        Ok(canonical)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn include_constant(&self) -> bool {
        self.include_constant
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Number of observables `n`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                context: "dictionary",
                expected: self.state_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `Φ(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(DVector::from_iterator(
            self.len(),
            self.indices.iter().map(|idx| monomial(x, &idx.0)),
        ))
    }

    /// `∂Φ/∂x`, an `n × d` matrix.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let mut jac = DMatrix::zeros(self.len(), self.state_dim);
        let mut reduced = alloc::vec![0u32; self.state_dim];
        for (i, idx) in self.indices.iter().enumerate() {
            for j in 0..self.state_dim {
                let e = idx.0[j];
                if e == 0 {
                    continue;
                }
                reduced.copy_from_slice(&idx.0);
                reduced[j] = e - 1;
                jac[(i, j)] = f64::from(e) * monomial(x, &reduced);
            }
        }
        Ok(jac)
    }

    /// Position of the constant monomial, if present.
    pub fn constant_index(&self) -> Option<usize> {
        self.indices.iter().position(|idx| idx.degree() == 0)
    }
}

fn monomial(x: &[f64], exponents: &[u32]) -> f64 {
    x.iter()
        .zip(exponents)
        .map(|(&xi, &e)| powu(xi, e))
        .product()
}

fn powu(x: f64, e: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..e {
        acc *= x;
    }
    acc
}

// Emits every exponent vector with entries from `pos` onward summing to
// `remaining`, in descending lexicographic order.
fn compositions(remaining: u32, pos: usize, current: &mut [u32], out: &mut Vec<MultiIndex>) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        current[pos] = e;
        compositions(remaining - e, pos + 1, current, out);
    }
    current[pos] = 0;
}
