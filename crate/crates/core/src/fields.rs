//! Node-indexed fields bound to a [`SurfaceGrid`](crate::geometry::SurfaceGrid).

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Identity of a constructed grid; fields remember which grid they live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId(pub(crate) u64);

impl GridId {
    pub fn get(self) -> u64 {
        self.0
    }
}

/// Values attached to every node of one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: GridId,
    values: Vec<T>,
}

pub type ScalarField = Field<f64>;
pub type AmbientField = Field<Vec3>;
pub type MatrixField = Field<Mat3>;

impl<T> Field<T> {
    pub(crate) fn new(grid: GridId, values: Vec<T>) -> Self {
        Self { grid, values }
    }

    pub fn grid_id(&self) -> GridId {
        self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ensure_on(&self, grid: GridId) -> Result<()> {
        if self.grid == grid {
            Ok(())
        } else {
            Err(Error::GridMismatch { expected: grid.0, found: self.grid.0 })
        }
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Field<U> {
        Field { grid: self.grid, values: self.values.iter().map(f).collect() }
    }
}

impl ScalarField {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl AmbientField {
    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// A tangential vector field. Constructed only through
/// [`SurfaceGrid::tangent`](crate::geometry::SurfaceGrid::tangent), which
/// applies the tangential projection.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentField(pub(crate) AmbientField);

impl TangentField {
    pub fn as_ambient(&self) -> &AmbientField {
        &self.0
    }

    pub fn into_ambient(self) -> AmbientField {
        self.0
    }

    pub fn values(&self) -> &[Vec3] {
        self.0.values()
    }

    pub fn grid_id(&self) -> GridId {
        self.0.grid_id()
    }

    pub fn max_norm(&self) -> f64 {
        self.0.max_norm()
    }
}

/// Thickness weight `g` with a certified positive lower bound.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    field: ScalarField,
    lower_bound: f64,
}

impl WeightField {
    /// Wrap `g`, checking `min g >= lower_bound > 0`.
    pub fn new(field: ScalarField, lower_bound: f64) -> Result<Self> {
        if lower_bound <= 0.0 || !lower_bound.is_finite() {
            return Err(Error::Config(format!("weight lower bound must be positive, got {lower_bound}")));
        }
        let min = field.values().iter().cloned().fold(f64::INFINITY, f64::min);
        if min < lower_bound {
            return Err(Error::Config(format!("weight minimum {min} is below the lower bound {lower_bound}")));
        }
        Ok(Self { field, lower_bound })
    }

    /// Wrap `g` using its own minimum as the bound.
    pub fn from_field(field: ScalarField) -> Result<Self> {
        let min = field.values().iter().cloned().fold(f64::INFINITY, f64::min);
        Self::new(field, min)
    }

    pub fn field(&self) -> &ScalarField {
        &self.field
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn grid_id(&self) -> GridId {
        self.field.grid_id()
    }

    /// True when every node carries the same value.
    pub fn is_constant(&self) -> bool {
        let v = self.values();
        v.iter().all(|x| *x == v[0])
    }
}
