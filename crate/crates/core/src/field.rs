//! Sampled 2D fields, 3D voxel volumes and the optical geometry that links them.
//!
//! Samples are stored x-fastest, then y, then plane. All reductions run in a
//! fixed order with compensated summation so results are reproducible bit for
//! bit across runs.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform transverse sampling grid. Pitch is in micrometers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    pitch: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Parameter(format!(
                "grid needs at least 2 samples per axis, got {nx}x{ny}"
            )));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::Parameter(format!("pitch must be positive, got {pitch}")));
        }
        Ok(Self { nx, ny, pitch })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical extent (x, y) in micrometers.
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.pitch, self.ny as f64 * self.pitch)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny);
        x + self.nx * y
    }
}

/// Anything backed by a flat slice of complex samples.
pub trait Samples {
    fn samples(&self) -> &[Complex64];
}

impl Samples for [Complex64] {
    fn samples(&self) -> &[Complex64] {
        self
    }
}

impl Samples for Vec<Complex64> {
    fn samples(&self) -> &[Complex64] {
        self
    }
}

/// Complex field sampled on a [`Grid2D`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid2D,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_values(grid: Grid2D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "field of {}x{} needs {} samples, got {}",
                grid.nx,
                grid.ny,
                grid.len(),
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for y in 0..grid.ny {
            for x in 0..grid.nx {
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    /// Real and imaginary parts drawn uniformly from [-1, 1).
    pub fn random<R: Rng + ?Sized>(grid: Grid2D, rng: &mut R) -> Self {
        Self {
            grid,
            values: random_samples(grid.len(), rng),
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn get(&self, x: usize, y: usize) -> Complex64 {
        self.values[self.grid.index(x, y)]
    }

    pub fn set(&mut self, x: usize, y: usize, v: Complex64) {
        let i = self.grid.index(x, y);
        self.values[i] = v;
    }
}

impl Samples for ComplexField {
    fn samples(&self) -> &[Complex64] {
        &self.values
    }
}

/// Complex voxel volume: one [`Grid2D`] slice per axial plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    grid: Grid2D,
    zplanes: Vec<f64>,
    values: Vec<Complex64>,
}

impl Volume {
    pub fn zeros(grid: Grid2D, zplanes: Vec<f64>) -> Result<Self> {
        check_planes(&zplanes)?;
        let n = grid.len() * zplanes.len();
        Ok(Self {
            grid,
            zplanes,
            values: vec![Complex64::new(0.0, 0.0); n],
        })
    }

    pub fn from_values(grid: Grid2D, zplanes: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        check_planes(&zplanes)?;
        let n = grid.len() * zplanes.len();
        if values.len() != n {
            return Err(Error::Dimension(format!(
                "volume of {}x{}x{} needs {} samples, got {}",
                grid.nx,
                grid.ny,
                zplanes.len(),
                n,
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self {
            grid,
            zplanes,
            values,
        })
    }

    /// Real and imaginary parts drawn uniformly from [-1, 1).
    ///
    /// # Panics
    /// If `zplanes` is not strictly increasing.
    pub fn random<R: Rng + ?Sized>(grid: Grid2D, zplanes: Vec<f64>, rng: &mut R) -> Self {
        check_planes(&zplanes).expect("invalid axial planes");
        let values = random_samples(grid.len() * zplanes.len(), rng);
        Self {
            grid,
            zplanes,
            values,
        }
    }

    /// Same geometry as `self`, all voxels zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            grid: self.grid,
            zplanes: self.zplanes.clone(),
            values: vec![Complex64::new(0.0, 0.0); self.values.len()],
        }
    }

    /// Same geometry as `self` with new samples. Length must match.
    pub fn with_values(&self, values: Vec<Complex64>) -> Result<Self> {
        Self::from_values(self.grid, self.zplanes.clone(), values)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn zplanes(&self) -> &[f64] {
        &self.zplanes
    }

    pub fn num_planes(&self) -> usize {
        self.zplanes.len()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Plane `c` (0-based) as a flat slice.
    pub fn plane(&self, c: usize) -> &[Complex64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [Complex64] {
        let n = self.grid.len();
        &mut self.values[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> std::slice::ChunksExact<'_, Complex64> {
        self.values.chunks_exact(self.grid.len())
    }

    pub fn planes_mut(&mut self) -> std::slice::ChunksExactMut<'_, Complex64> {
        let n = self.grid.len();
        self.values.chunks_exact_mut(n)
    }

    /// Copy of plane `c` (0-based) as a standalone field.
    pub fn plane_field(&self, c: usize) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self.plane(c).to_vec(),
        }
    }

    pub fn set_plane(&mut self, c: usize, field: &ComplexField) -> Result<()> {
        if field.grid != self.grid {
            return Err(Error::Dimension("plane grid differs from volume grid".into()));
        }
        self.plane_mut(c).copy_from_slice(&field.values);
        Ok(())
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> Complex64 {
        self.values[self.grid.index(x, y) + c * self.grid.len()]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: Complex64) {
        let i = self.grid.index(x, y) + c * self.grid.len();
        self.values[i] = v;
    }

    pub fn same_shape(&self, other: &Volume) -> bool {
        self.grid == other.grid && self.zplanes == other.zplanes
    }
}

impl Samples for Volume {
    fn samples(&self) -> &[Complex64] {
        &self.values
    }
}

/// Illumination wavelength, sampling grid and axial layout of the object box.
///
/// Lengths are in micrometers. The last object plane doubles as the reference
/// plane for the illumination phase.
#[derive(Clone, Debug, PartialEq)]
pub struct OpticalSetup {
    wavelength: f64,
    grid: Grid2D,
    zplanes: Vec<f64>,
    z_detector: f64,
}

impl OpticalSetup {
    pub fn new(wavelength: f64, grid: Grid2D, zplanes: Vec<f64>, z_detector: f64) -> Result<Self> {
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::Parameter(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        check_planes(&zplanes)?;
        let last = *zplanes.last().expect("checked non-empty");
        if !(z_detector > last && z_detector.is_finite()) {
            return Err(Error::Parameter(format!(
                "detector at {z_detector} um must lie beyond the last plane at {last} um"
            )));
        }
        Ok(Self {
            wavelength,
            grid,
            zplanes,
            z_detector,
        })
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn zplanes(&self) -> &[f64] {
        &self.zplanes
    }

    pub fn num_planes(&self) -> usize {
        self.zplanes.len()
    }

    pub fn z_detector(&self) -> f64 {
        self.z_detector
    }

    /// The reference plane z₂ of the illumination phase (the last object plane).
    pub fn reference_plane(&self) -> f64 {
        *self.zplanes.last().expect("checked non-empty")
    }

    pub fn zero_volume(&self) -> Volume {
        Volume::zeros(self.grid, self.zplanes.clone()).expect("setup planes already validated")
    }

    pub fn zero_field(&self) -> ComplexField {
        ComplexField::zeros(self.grid)
    }
}

fn random_samples<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

fn check_planes(zplanes: &[f64]) -> Result<()> {
    if zplanes.is_empty() {
        return Err(Error::Parameter("at least one axial plane is required".into()));
    }
    if zplanes.iter().any(|z| !z.is_finite()) {
        return Err(Error::Parameter("axial plane positions must be finite".into()));
    }
    if zplanes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter(
            "axial plane positions must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn check_finite(values: &[Complex64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Parameter(format!("non-finite sample at index {i}"))),
        None => Ok(()),
    }
}

/// Neumaier-compensated running sum of complex terms.
#[derive(Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    re: (f64, f64),
    im: (f64, f64),
}

impl CompensatedSum {
    #[inline]
    fn add_part(acc: &mut (f64, f64), x: f64) {
        let t = acc.0 + x;
        if acc.0.abs() >= x.abs() {
            acc.1 += (acc.0 - t) + x;
        } else {
            acc.1 += (x - t) + acc.0;
        }
        acc.0 = t;
    }

    #[inline]
    pub(crate) fn add(&mut self, z: Complex64) {
        Self::add_part(&mut self.re, z.re);
        Self::add_part(&mut self.im, z.im);
    }

    pub(crate) fn value(&self) -> Complex64 {
        Complex64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

/// Σ conj(a)·b over two equally long sample slices.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch");
    let mut acc = CompensatedSum::default();
    for (x, y) in a.iter().zip(b) {
        acc.add(x.conj() * y);
    }
    acc.value()
}

/// Σ |a|² with compensated summation.
pub fn norm_sqr(a: &[Complex64]) -> f64 {
    let mut acc = CompensatedSum::default();
    for x in a {
        acc.add(Complex64::new(x.norm_sqr(), 0.0));
    }
    acc.value().re
}

/// Scalar product on the detector grid, antilinear in `a`.
pub fn inner_product_2d(a: &ComplexField, b: &ComplexField) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(Error::Dimension(format!(
            "inner product of {:?} and {:?}",
            a.grid, b.grid
        )));
    }
    Ok(dot(&a.values, &b.values))
}

/// Scalar product over the voxel volume, antilinear in `a`.
pub fn inner_product_3d(a: &Volume, b: &Volume) -> Result<Complex64> {
    if !a.same_shape(b) {
        return Err(Error::Dimension(
            "inner product of volumes with different grids or planes".into(),
        ));
    }
    Ok(dot(&a.values, &b.values))
}

pub fn frobenius_norm<T: Samples + ?Sized>(x: &T) -> f64 {
    norm_sqr(x.samples()).sqrt()
}
