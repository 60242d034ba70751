//! Test objects and the reference simulation geometry.
//!
//! Two voxel phantoms are provided: four 2×2 unit reflectors on separate
//! planes, and four unit-amplitude phase letters A–D on separate planes.
//! Plane numbers in [`PhantomSpec`] are 1-based.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid2D, OpticalSetup, Volume};

pub const REFERENCE_WAVELENGTH_UM: f64 = 0.5;
pub const REFERENCE_GRID: usize = 128;
pub const REFERENCE_PLANES: usize = 30;
pub const REFERENCE_EXTENT_UM: (f64, f64, f64) = (640.0, 640.0, 750.0);
/// Distance from the last object plane to the detector.
pub const REFERENCE_DETECTOR_DISTANCE_UM: f64 = 1060.0;

pub const AMPLITUDE_PLANES: [usize; 4] = [3, 11, 20, 28];
pub const TEXT_PLANES: [usize; 4] = [1, 10, 20, 30];
/// Phases of the letters A, B, C, D.
pub const TEXT_PHASES: [f64; 4] = [2.0 * PI / 3.0, PI / 4.0, PI / 3.0, PI / 2.0];
pub const DEFAULT_GLYPH_SIZE: usize = 32;

/// How an axial extent is divided among the planes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxialSpacing {
    /// `Δz = depth / Mz`: every plane is the center of one voxel slab.
    #[default]
    VoxelDepth,
    /// `Δz = depth / (Mz − 1)`: first and last planes span the full depth.
    Endpoints,
}

/// Evenly spaced planes starting at `z = 0`.
pub fn plane_positions(depth: f64, count: usize, spacing: AxialSpacing) -> Vec<f64> {
    let dz = match spacing {
        AxialSpacing::VoxelDepth => depth / count as f64,
        AxialSpacing::Endpoints if count > 1 => depth / (count - 1) as f64,
        AxialSpacing::Endpoints => 0.0,
    };
    (0..count).map(|c| c as f64 * dz).collect()
}

/// The reference simulation box: 128×128×30 voxels over 640×640×750 µm,
/// λ = 0.5 µm, detector 1060 µm past the last plane.
pub fn make_setup_paper() -> OpticalSetup {
    make_setup_paper_with(AxialSpacing::VoxelDepth)
}

pub fn make_setup_paper_with(spacing: AxialSpacing) -> OpticalSetup {
    let pitch = REFERENCE_EXTENT_UM.0 / REFERENCE_GRID as f64;
    let grid = Grid2D::new(REFERENCE_GRID, REFERENCE_GRID, pitch).expect("valid grid");
    let zplanes = plane_positions(REFERENCE_EXTENT_UM.2, REFERENCE_PLANES, spacing);
    let z_detector = zplanes[REFERENCE_PLANES - 1] + REFERENCE_DETECTOR_DISTANCE_UM;
    OpticalSetup::new(REFERENCE_WAVELENGTH_UM, grid, zplanes, z_detector).expect("valid setup")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    AmplitudeReflectors,
    TextPhase,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    /// Occupied planes, 1-based, one object per plane.
    pub planes: [usize; 4],
    /// Letter height in pixels (text phantom only).
    pub glyph_size: usize,
}

impl PhantomSpec {
    pub fn amplitude() -> Self {
        Self {
            kind: PhantomKind::AmplitudeReflectors,
            planes: AMPLITUDE_PLANES,
            glyph_size: DEFAULT_GLYPH_SIZE,
        }
    }

    pub fn text_phase() -> Self {
        Self {
            kind: PhantomKind::TextPhase,
            planes: TEXT_PLANES,
            glyph_size: DEFAULT_GLYPH_SIZE,
        }
    }

    pub fn generate(&self, setup: &OpticalSetup) -> Result<Volume> {
        match self.kind {
            PhantomKind::AmplitudeReflectors => amplitude_phantom(self, setup),
            PhantomKind::TextPhase => text_phase_phantom(self, setup),
        }
    }

    fn check_planes(&self, setup: &OpticalSetup) -> Result<()> {
        let nz = setup.num_planes();
        for &p in &self.planes {
            if p == 0 || p > nz {
                return Err(Error::Parameter(format!(
                    "plane {p} outside 1..={nz}"
                )));
            }
        }
        let mut sorted = self.planes;
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("occupied planes must be distinct".into()));
        }
        Ok(())
    }
}

/// Four 2×2 blocks of value 1, one per occupied plane, centered on the
/// quadrant centers in the order top-left, top-right, bottom-left,
/// bottom-right.
pub fn amplitude_phantom(spec: &PhantomSpec, setup: &OpticalSetup) -> Result<Volume> {
    if spec.kind != PhantomKind::AmplitudeReflectors {
        return Err(Error::Parameter("expected an amplitude phantom spec".into()));
    }
    spec.check_planes(setup)?;
    let g = setup.grid();
    let (nx, ny) = (g.nx(), g.ny());
    if nx < 4 || ny < 4 {
        return Err(Error::Parameter(format!(
            "grid {nx}x{ny} too small for four 2x2 reflectors"
        )));
    }
    let centers = quadrant_centers(nx, ny);
    let mut u = setup.zero_volume();
    let one = Complex64::new(1.0, 0.0);
    for (&plane, &(cx, cy)) in spec.planes.iter().zip(&centers) {
        for y in cy - 1..=cy {
            for x in cx - 1..=cx {
                u.set(x, y, plane - 1, one);
            }
        }
    }
    Ok(u)
}

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;

// 5x7 block capitals, top row first
const GLYPHS: [[&str; GLYPH_H]; 4] = [
    [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
    ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."],
    [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."],
    ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
];

/// Letter mask of height `size`, nearest-neighbour scaled from the 5×7
/// bitmap. Returned as (width, height, row-major mask).
pub fn glyph_mask(letter: usize, size: usize) -> (usize, usize, Vec<bool>) {
    let h = size;
    let w = ((size * GLYPH_W) as f64 / GLYPH_H as f64).round().max(1.0) as usize;
    let rows = &GLYPHS[letter];
    let mut mask = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = rows[y * GLYPH_H / h].as_bytes();
        for x in 0..w {
            mask.push(row[x * GLYPH_W / w] == b'#');
        }
    }
    (w, h, mask)
}

/// Quadrant centers in the order top-left, top-right, bottom-left,
/// bottom-right.
fn quadrant_centers(nx: usize, ny: usize) -> [(usize, usize); 4] {
    [
        (nx / 4, ny / 4),
        (3 * nx / 4, ny / 4),
        (nx / 4, 3 * ny / 4),
        (3 * nx / 4, 3 * ny / 4),
    ]
}

/// Unit-amplitude letters A, B, C, D with phases 2π/3, π/4, π/3, π/2, one
/// per occupied plane, each centered on its own quadrant so the letters do
/// not overlap laterally.
pub fn text_phase_phantom(spec: &PhantomSpec, setup: &OpticalSetup) -> Result<Volume> {
    if spec.kind != PhantomKind::TextPhase {
        return Err(Error::Parameter("expected a text phase phantom spec".into()));
    }
    spec.check_planes(setup)?;
    if spec.glyph_size == 0 {
        return Err(Error::Parameter("glyph size must be positive".into()));
    }
    let g = setup.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut u = setup.zero_volume();
    let centers = quadrant_centers(nx, ny);
    for (letter, (&plane, &phase)) in spec.planes.iter().zip(&TEXT_PHASES).enumerate() {
        let (w, h, mask) = glyph_mask(letter, spec.glyph_size);
        if w > nx / 2 || h > ny / 2 {
            return Err(Error::Parameter(format!(
                "glyph of {w}x{h} does not fit a quadrant of a {nx}x{ny} grid"
            )));
        }
        let (cx, cy) = centers[letter];
        let (x0, y0) = (cx - w / 2, cy - h / 2);
        let value = Complex64::from_polar(1.0, phase);
        for y in 0..h {
            for x in 0..w {
                if mask[y * w + x] {
                    u.set(x0 + x, y0 + y, plane - 1, value);
                }
            }
        }
    }
    Ok(u)
}
