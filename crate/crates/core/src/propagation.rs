//! Slice-wise free-space propagation and the hologram formation operator.
//!
//! Every object plane is carried to the detector by a pure-phase transfer
//! function applied in the spatial-frequency domain, weighted by the
//! illumination phase of that plane and summed. The adjoint runs the same
//! steps backwards with conjugated multipliers, so the pair satisfies the
//! scalar-product identity to rounding error, padded or not.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    frobenius_norm, inner_product_2d, inner_product_3d, ComplexField, Grid2D, OpticalSetup, Volume,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Which free-space transfer function to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferKind {
    /// Paraxial (Fresnel) transfer function. Pure phase everywhere.
    #[default]
    Fresnel,
    /// Exact plane-wave dispersion; evanescent components are zeroed.
    AngularSpectrum,
}

/// Spatial frequency (cycles per micrometer) of DFT bin `i` on an axis of
/// `n` samples. Bins at or beyond `n/2` alias to negative frequencies.
#[inline]
pub fn frequency(i: usize, n: usize, pitch: f64) -> f64 {
    let m = if i < n.div_ceil(2) {
        i as f64
    } else {
        i as f64 - n as f64
    };
    m / (n as f64 * pitch)
}

/// `exp(2πi·cycles)`. Whole cycles are removed first so that large axial
/// phases keep full relative precision; `%` is exact and odd, so negating
/// `cycles` conjugates the result bit for bit.
#[inline]
pub(crate) fn unit_phasor(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * (cycles % 1.0))
}

/// Fresnel transfer function `exp(ikz)·exp(-iπλz(fx²+fy²))` in DFT bin order.
///
/// Both phase terms are combined into a single angle before exponentiation,
/// so `T(-z)` is the exact conjugate of `T(z)`.
pub fn fresnel_transfer(grid: &Grid2D, wavelength: f64, z: f64) -> Vec<Complex64> {
    // phases in cycles: z/λ − λz(fx²+fy²)/2
    let axial = (z / wavelength) % 1.0;
    let chirp = 0.5 * wavelength * z;
    let fy2: Vec<f64> = (0..grid.ny())
        .map(|j| frequency(j, grid.ny(), grid.pitch()).powi(2))
        .collect();
    let fx2: Vec<f64> = (0..grid.nx())
        .map(|i| frequency(i, grid.nx(), grid.pitch()).powi(2))
        .collect();
    let mut out = Vec::with_capacity(grid.len());
    for fy in &fy2 {
        for fx in &fx2 {
            out.push(unit_phasor(axial - chirp * (fx + fy)));
        }
    }
    out
}

/// Angular-spectrum transfer function `exp(iz·sqrt(k² − 4π²(fx²+fy²)))`.
pub fn angular_spectrum_transfer(grid: &Grid2D, wavelength: f64, z: f64) -> Vec<Complex64> {
    let inv_l2 = 1.0 / (wavelength * wavelength);
    let mut out = Vec::with_capacity(grid.len());
    for j in 0..grid.ny() {
        let fy = frequency(j, grid.ny(), grid.pitch());
        for i in 0..grid.nx() {
            let fx = frequency(i, grid.nx(), grid.pitch());
            // axial spatial frequency, cycles per micrometer
            let fz2 = inv_l2 - (fx * fx + fy * fy);
            if fz2 > 0.0 {
                out.push(unit_phasor(z * fz2.sqrt()));
            } else {
                out.push(ZERO);
            }
        }
    }
    out
}

pub fn transfer(kind: TransferKind, grid: &Grid2D, wavelength: f64, z: f64) -> Vec<Complex64> {
    match kind {
        TransferKind::Fresnel => fresnel_transfer(grid, wavelength, z),
        TransferKind::AngularSpectrum => angular_spectrum_transfer(grid, wavelength, z),
    }
}

/// Unnormalized 2D DFT on an `nx × ny` x-fastest buffer.
#[derive(Clone)]
pub(crate) struct Fft2 {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

/// Scratch space for [`Fft2`]; not shared between threads.
pub(crate) struct Fft2Scratch {
    transposed: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Fft2 {
    pub(crate) fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
        }
    }

    pub(crate) fn scratch(&self) -> Fft2Scratch {
        let len = [&self.row_fwd, &self.row_inv, &self.col_fwd, &self.col_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Fft2Scratch {
            transposed: vec![ZERO; self.nx * self.ny],
            scratch: vec![ZERO; len],
        }
    }

    pub(crate) fn forward(&self, data: &mut [Complex64], s: &mut Fft2Scratch) {
        self.run(data, s, false);
    }

    /// Unnormalized inverse; `inverse(forward(x)) = nx·ny·x`.
    pub(crate) fn inverse(&self, data: &mut [Complex64], s: &mut Fft2Scratch) {
        self.run(data, s, true);
    }

    fn run(&self, data: &mut [Complex64], s: &mut Fft2Scratch, inverse: bool) {
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        debug_assert_eq!(data.len(), self.nx * self.ny);
        row.process_with_scratch(data, &mut s.scratch);
        transpose(data, &mut s.transposed, self.nx, self.ny);
        col.process_with_scratch(&mut s.transposed, &mut s.scratch);
        transpose(&s.transposed, data, self.ny, self.nx);
    }
}

/// `src` is `rows` rows of `cols` samples; `dst` receives `cols` rows of `rows`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Propagate `field` over a distance `z` (micrometers; negative = backwards)
/// with the Fresnel transfer function on a periodic grid. Unitary.
pub fn propagate(field: &ComplexField, z: f64, setup: &OpticalSetup) -> Result<ComplexField> {
    propagate_with(field, z, setup, TransferKind::Fresnel)
}

pub fn propagate_with(
    field: &ComplexField,
    z: f64,
    setup: &OpticalSetup,
    kind: TransferKind,
) -> Result<ComplexField> {
    let grid = *setup.grid();
    if *field.grid() != grid {
        return Err(Error::Dimension(
            "field grid differs from the optical setup grid".into(),
        ));
    }
    let t = transfer(kind, &grid, setup.wavelength(), z);
    let fft = Fft2::new(grid.nx(), grid.ny());
    let mut s = fft.scratch();
    let mut buf = field.values().to_vec();
    let scale = 1.0 / grid.len() as f64;
    fft.forward(&mut buf, &mut s);
    for (b, t) in buf.iter_mut().zip(&t) {
        *b *= t * scale;
    }
    fft.inverse(&mut buf, &mut s);
    ComplexField::from_values(grid, buf)
}

/// Options fixed at plan construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions {
    /// Zero-padding factor, 1 = periodic.
    pub padding: usize,
    pub kernel: TransferKind,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            padding: 1,
            kernel: TransferKind::Fresnel,
        }
    }
}

/// Precomputed transfer functions and illumination phases for one geometry.
#[derive(Clone)]
pub struct PropagatorPlan {
    setup: OpticalSetup,
    options: PlanOptions,
    padded: Grid2D,
    transfers: Vec<Vec<Complex64>>,
    phases: Vec<Complex64>,
    fft: Fft2,
}

impl std::fmt::Debug for PropagatorPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PropagatorPlan")
            .field("setup", &self.setup)
            .field("options", &self.options)
            .finish_non_exhaustive()
    }
}

impl PropagatorPlan {
    pub fn new(setup: &OpticalSetup) -> Self {
        Self::with_options(setup, PlanOptions::default()).expect("default options are valid")
    }

    pub fn with_options(setup: &OpticalSetup, options: PlanOptions) -> Result<Self> {
        if options.padding < 1 {
            return Err(Error::Parameter("padding factor must be at least 1".into()));
        }
        let g = setup.grid();
        let padded = Grid2D::new(g.nx() * options.padding, g.ny() * options.padding, g.pitch())?;
        let z2 = setup.reference_plane();
        let zd = setup.z_detector();
        let transfers = setup
            .zplanes()
            .iter()
            .map(|&z| transfer(options.kernel, &padded, setup.wavelength(), zd - z))
            .collect();
        let phases = setup
            .zplanes()
            .iter()
            .map(|&z| unit_phasor((z - z2) / setup.wavelength()))
            .collect();
        Ok(Self {
            setup: setup.clone(),
            options,
            padded,
            transfers,
            phases,
            fft: Fft2::new(padded.nx(), padded.ny()),
        })
    }

    pub fn setup(&self) -> &OpticalSetup {
        &self.setup
    }

    pub fn options(&self) -> &PlanOptions {
        &self.options
    }

    pub fn num_planes(&self) -> usize {
        self.phases.len()
    }

    /// Transfer function of plane `c` (0-based) on the padded grid, DFT order.
    pub fn transfer(&self, c: usize) -> &[Complex64] {
        &self.transfers[c]
    }

    /// Illumination phase `exp(ik(z_c − z₂))` of plane `c` (0-based).
    pub fn phase(&self, c: usize) -> Complex64 {
        self.phases[c]
    }

    fn check_volume(&self, u: &Volume) -> Result<()> {
        if u.grid() != self.setup.grid() || u.zplanes() != self.setup.zplanes() {
            return Err(Error::Dimension(
                "volume geometry differs from the propagator plan".into(),
            ));
        }
        Ok(())
    }

    fn check_field(&self, v: &ComplexField) -> Result<()> {
        if v.grid() != self.setup.grid() {
            return Err(Error::Dimension(
                "field grid differs from the propagator plan".into(),
            ));
        }
        Ok(())
    }

    fn pad_into(&self, src: &[Complex64], dst: &mut [Complex64]) {
        let g = self.setup.grid();
        if self.options.padding == 1 {
            dst.copy_from_slice(src);
            return;
        }
        dst.fill(ZERO);
        let pnx = self.padded.nx();
        for (y, row) in src.chunks_exact(g.nx()).enumerate() {
            dst[y * pnx..y * pnx + g.nx()].copy_from_slice(row);
        }
    }

    fn crop_into(&self, src: &[Complex64], dst: &mut [Complex64]) {
        let g = self.setup.grid();
        if self.options.padding == 1 {
            dst.copy_from_slice(src);
            return;
        }
        let pnx = self.padded.nx();
        for (y, row) in dst.chunks_exact_mut(g.nx()).enumerate() {
            row.copy_from_slice(&src[y * pnx..y * pnx + g.nx()]);
        }
    }

    /// Hologram formation: propagate every slice to the detector and sum.
    pub fn forward(&self, u: &Volume) -> Result<ComplexField> {
        self.check_volume(u)?;
        let n = self.padded.len();
        let scale = 1.0 / n as f64;
        let mut s = self.fft.scratch();
        let mut acc = vec![ZERO; n];
        let mut buf = vec![ZERO; n];
        for (c, plane) in u.planes().enumerate() {
            if plane.iter().all(|v| *v == ZERO) {
                continue;
            }
            self.pad_into(plane, &mut buf);
            self.fft.forward(&mut buf, &mut s);
            let w = self.phases[c] * scale;
            for ((a, b), t) in acc.iter_mut().zip(&buf).zip(&self.transfers[c]) {
                *a += w * (t * b);
            }
        }
        self.fft.inverse(&mut acc, &mut s);
        let mut out = self.setup.zero_field();
        self.crop_into(&acc, out.values_mut());
        Ok(out)
    }

    /// Hermitian adjoint of [`forward`](Self::forward): back-propagate the
    /// detector field to every plane and undo the illumination phase.
    pub fn adjoint(&self, v: &ComplexField) -> Result<Volume> {
        let mut out = self.setup.zero_volume();
        self.adjoint_into(v, &mut out)?;
        Ok(out)
    }

    /// [`adjoint`](Self::adjoint) writing into an existing volume.
    pub fn adjoint_into(&self, v: &ComplexField, out: &mut Volume) -> Result<()> {
        self.check_field(v)?;
        self.check_volume(out)?;
        let n = self.padded.len();
        let scale = 1.0 / n as f64;
        let mut s = self.fft.scratch();
        let mut spectrum = vec![ZERO; n];
        self.pad_into(v.values(), &mut spectrum);
        self.fft.forward(&mut spectrum, &mut s);
        let mut buf = vec![ZERO; n];
        for (c, plane) in out.planes_mut().enumerate() {
            let w = self.phases[c].conj() * scale;
            for ((b, f), t) in buf.iter_mut().zip(&spectrum).zip(&self.transfers[c]) {
                *b = w * (t.conj() * f);
            }
            self.fft.inverse(&mut buf, &mut s);
            self.crop_into(&buf, plane);
        }
        Ok(())
    }

    /// Holographic replay. Identical to [`adjoint`](Self::adjoint).
    pub fn backproject(&self, v: &ComplexField) -> Result<Volume> {
        self.adjoint(v)
    }

    /// `A†A u`.
    pub fn normal(&self, u: &Volume) -> Result<Volume> {
        self.adjoint(&self.forward(u)?)
    }
}

pub fn forward(u: &Volume, plan: &PropagatorPlan) -> Result<ComplexField> {
    plan.forward(u)
}

pub fn adjoint(v: &ComplexField, plan: &PropagatorPlan) -> Result<Volume> {
    plan.adjoint(v)
}

pub fn backproject(v: &ComplexField, plan: &PropagatorPlan) -> Result<Volume> {
    plan.backproject(v)
}

/// `|⟨A u, v⟩ − ⟨u, adj⟩| / (‖A u‖·‖v‖)` where `adj` is a claimed `A†v`.
pub fn adjoint_mismatch(plan: &PropagatorPlan, u: &Volume, v: &ComplexField, adj: &Volume) -> Result<f64> {
    let au = plan.forward(u)?;
    let lhs = inner_product_2d(&au, v)?;
    let rhs = inner_product_3d(u, adj)?;
    Ok((lhs - rhs).norm() / (frobenius_norm(&au) * frobenius_norm(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(nx: usize, ny: usize, nz: usize) -> OpticalSetup {
        let g = Grid2D::new(nx, ny, 5.0).unwrap();
        let zs: Vec<f64> = (0..nz).map(|c| 25.0 * c as f64).collect();
        let zd = zs.last().unwrap() + 1060.0;
        OpticalSetup::new(0.5, g, zs, zd).unwrap()
    }

    fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let d: Vec<_> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        frobenius_norm(&d) / frobenius_norm(b)
    }

    #[test]
    fn frequency_ordering() {
        assert_eq!(frequency(0, 8, 1.0), 0.0);
        assert_eq!(frequency(3, 8, 1.0), 3.0 / 8.0);
        assert_eq!(frequency(4, 8, 1.0), -4.0 / 8.0);
        assert_eq!(frequency(7, 8, 1.0), -1.0 / 8.0);
        assert_eq!(frequency(2, 5, 1.0), 2.0 / 5.0);
        assert_eq!(frequency(3, 5, 1.0), -2.0 / 5.0);
    }

    #[test]
    fn transfer_at_zero_distance_is_identity() {
        let g = Grid2D::new(16, 12, 5.0).unwrap();
        assert!(fresnel_transfer(&g, 0.5, 0.0)
            .iter()
            .all(|t| *t == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn transfer_dc_and_first_bin() {
        let g = Grid2D::new(128, 128, 5.0).unwrap();
        let lambda = 0.5;
        let z = 1060.0;
        let k = 2.0 * PI / lambda;
        let t = fresnel_transfer(&g, lambda, z);
        let dc = Complex64::from_polar(1.0, k * z);
        // k·z is ~1.3e4 rad, so the reference itself carries ~1e-12 error
        assert!((t[0] - dc).norm() < 1e-11);

        // f_x = 1/640 per um at bin (1, 0)
        let expected = Complex64::from_polar(1.0, k * z)
            * Complex64::from_polar(1.0, -PI * lambda * z / (640.0 * 640.0));
        assert!((t[1] - expected).norm() < 1e-9);
    }

    #[test]
    fn transfer_is_pure_phase_and_conjugate_symmetric_in_z() {
        let g = Grid2D::new(32, 24, 5.0).unwrap();
        let t = fresnel_transfer(&g, 0.5, 812.5);
        let tm = fresnel_transfer(&g, 0.5, -812.5);
        for (a, b) in t.iter().zip(&tm) {
            assert!((a.norm() - 1.0).abs() < 1e-14);
            assert_eq!(*b, a.conj());
        }
    }

    #[test]
    fn constant_field_gains_axial_phase() {
        let s = setup(16, 16, 1);
        let f = ComplexField::from_values(*s.grid(), vec![Complex64::new(1.0, 0.0); 256]).unwrap();
        let z = 333.0;
        let out = propagate(&f, z, &s).unwrap();
        let expected = Complex64::from_polar(1.0, s.wavenumber() * z);
        for v in out.values() {
            assert!((v - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn propagate_round_trip_unitary_and_composition() {
        let s = setup(32, 16, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = ComplexField::random(*s.grid(), &mut rng);
        let fwd = propagate(&f, 700.0, &s).unwrap();
        assert!(
            (frobenius_norm(&fwd) - frobenius_norm(&f)).abs() <= 1e-12 * frobenius_norm(&f)
        );
        let back = propagate(&fwd, -700.0, &s).unwrap();
        assert!(rel(back.values(), f.values()) < 1e-12);

        let two_step = propagate(&propagate(&f, 300.0, &s).unwrap(), 400.0, &s).unwrap();
        assert!(rel(two_step.values(), fwd.values()) < 1e-12);
    }

    #[test]
    fn plan_phases_and_transfers() {
        let s = setup(16, 16, 6);
        let plan = PropagatorPlan::new(&s);
        assert_eq!(plan.phase(5), Complex64::new(1.0, 0.0));
        for c in 0..6 {
            assert!((plan.phase(c).norm() - 1.0).abs() < 1e-15);
            assert!(plan.transfer(c).iter().all(|t| (t.norm() - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn forward_of_zero_and_last_plane() {
        let s = setup(16, 16, 4);
        let plan = PropagatorPlan::new(&s);
        let zero = s.zero_volume();
        assert!(plan.forward(&zero).unwrap().values().iter().all(|v| v.norm() == 0.0));
        assert!(plan.adjoint(&s.zero_field()).unwrap().values().iter().all(|v| v.norm() == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let slice = ComplexField::random(*s.grid(), &mut rng);
        let mut u = s.zero_volume();
        u.set_plane(3, &slice).unwrap();
        let v = plan.forward(&u).unwrap();
        let direct = propagate(&slice, s.z_detector() - s.reference_plane(), &s).unwrap();
        assert!(rel(v.values(), direct.values()) < 1e-14);
    }

    #[test]
    fn adjoint_identity_periodic_and_padded() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for padding in [1, 2, 3] {
            let s = setup(12, 10, 3);
            let plan = PropagatorPlan::with_options(
                &s,
                PlanOptions {
                    padding,
                    kernel: TransferKind::Fresnel,
                },
            )
            .unwrap();
            for _ in 0..5 {
                let u = Volume::random(*s.grid(), s.zplanes().to_vec(), &mut rng);
                let v = ComplexField::random(*s.grid(), &mut rng);
                let au = plan.forward(&u).unwrap();
                let lhs = inner_product_2d(&au, &v).unwrap();
                let rhs = inner_product_3d(&u, &plan.adjoint(&v).unwrap()).unwrap();
                let mismatch = (lhs - rhs).norm() / (frobenius_norm(&au) * frobenius_norm(&v));
                assert!(mismatch < 1e-12, "padding {padding}: {mismatch}");
            }
        }
    }

    #[test]
    fn angular_spectrum_plan_is_adjoint_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Grid2D::new(16, 16, 0.3).unwrap();
        let s = OpticalSetup::new(0.5, g, vec![0.0, 5.0, 10.0], 40.0).unwrap();
        let plan = PropagatorPlan::with_options(
            &s,
            PlanOptions {
                padding: 1,
                kernel: TransferKind::AngularSpectrum,
            },
        )
        .unwrap();
        // pitch 0.3 um puts the outer bins past the evanescent cutoff
        assert!(plan.transfer(0).iter().any(|t| t.norm() == 0.0));
        let u = Volume::random(g, s.zplanes().to_vec(), &mut rng);
        let v = ComplexField::random(g, &mut rng);
        let au = plan.forward(&u).unwrap();
        let lhs = inner_product_2d(&au, &v).unwrap();
        let rhs = inner_product_3d(&u, &plan.adjoint(&v).unwrap()).unwrap();
        assert!((lhs - rhs).norm() / (frobenius_norm(&au) * frobenius_norm(&v)) < 1e-12);
    }

    #[test]
    fn forward_then_adjoint_of_field_is_plane_count_multiple() {
        let s = setup(16, 8, 5);
        let plan = PropagatorPlan::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = ComplexField::random(*s.grid(), &mut rng);
        let aav = plan.forward(&plan.adjoint(&v).unwrap()).unwrap();
        let expected: Vec<_> = v.values().iter().map(|x| x * 5.0).collect();
        assert!(rel(aav.values(), &expected) < 1e-10);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let s = setup(16, 16, 3);
        let plan = PropagatorPlan::new(&s);
        let other = setup(16, 16, 4);
        assert!(matches!(plan.forward(&other.zero_volume()), Err(Error::Dimension(_))));
        let g = Grid2D::new(8, 8, 5.0).unwrap();
        assert!(matches!(plan.adjoint(&ComplexField::zeros(g)), Err(Error::Dimension(_))));
        assert!(propagate(&ComplexField::zeros(g), 1.0, &s).is_err());
    }
}
