//! Forward and adjoint operators checked against FFT-free references: a
//! direct spatial Fresnel sum at critical sampling, explicit O(N⁴) DFTs,
//! and a dense eigenvalue solve for the spectral norm.

use std::f64::consts::PI;

use holo3d::propagation::{propagate, PlanOptions, PropagatorPlan, TransferKind};
use holo3d::solver::{spectral_norm, SolverConfig, StepPolicy};
use holo3d::regularizers::Regularizer;
use holo3d::{ComplexField, Grid2D, OpticalSetup, Volume};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cis(theta: f64) -> Complex64 {
    Complex64::new(theta.cos(), theta.sin())
}

fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

/// Single-plane setup where `λz = N·pitch²`, so the sampled spatial chirp is
/// exactly periodic on the grid.
fn critical_setup(n: usize, wavelength: f64, z: f64) -> OpticalSetup {
    let pitch = (wavelength * z / n as f64).sqrt();
    let g = Grid2D::new(n, n, pitch).unwrap();
    OpticalSetup::new(wavelength, g, vec![0.0], z).unwrap()
}

/// Circular spatial convolution with `p²·e^{ikz}/(iλz)·exp(iπ r²/(λz))`.
fn direct_fresnel(input: &ComplexField, wavelength: f64, z: f64) -> ComplexField {
    let g = *input.grid();
    let (n, p) = (g.nx(), g.pitch());
    let lz = wavelength * z;
    let axial = cis(2.0 * PI * z / wavelength) * Complex64::new(0.0, -p * p / lz);
    ComplexField::from_fn(g, |x, y| {
        let mut acc = Complex64::new(0.0, 0.0);
        for ys in 0..n {
            for xs in 0..n {
                let dx = (x as f64 - xs as f64) * p;
                let dy = (y as f64 - ys as f64) * p;
                acc += input.get(xs, ys) * cis(PI * (dx * dx + dy * dy) / lz);
            }
        }
        acc * axial
    })
}

#[test]
fn point_impulse_matches_direct_fresnel_sum() {
    let (wavelength, z) = (0.5, 500.0);
    let s = critical_setup(8, wavelength, z);
    let mut impulse = s.zero_field();
    impulse.set(3, 5, Complex64::new(1.0, 0.0));
    let fft = propagate(&impulse, z, &s).unwrap();
    let direct = direct_fresnel(&impulse, wavelength, z);
    assert!(max_rel(fft.values(), direct.values()) < 1e-12);
    // constant modulus 1/N everywhere
    for v in fft.values() {
        assert!((v.norm() - 1.0 / 8.0).abs() < 1e-14);
    }
}

#[test]
fn random_field_matches_direct_fresnel_sum() {
    let (wavelength, z) = (0.5, 500.0);
    let s = critical_setup(8, wavelength, z);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let input = ComplexField::random(*s.grid(), &mut rng);
    let fft = propagate(&input, z, &s).unwrap();
    let direct = direct_fresnel(&input, wavelength, z);
    assert!(max_rel(fft.values(), direct.values()) < 1e-12);
}

/// Explicit DFT, `sign = -1` forward, `+1` inverse, unnormalized.
fn naive_dft(data: &[Complex64], nx: usize, ny: usize, sign: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); nx * ny];
    for ky in 0..ny {
        for kx in 0..nx {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..ny {
                for x in 0..nx {
                    let ph = sign
                        * 2.0
                        * PI
                        * ((kx * x) as f64 / nx as f64 + (ky * y) as f64 / ny as f64);
                    acc += data[x + nx * y] * cis(ph);
                }
            }
            out[kx + nx * ky] = acc;
        }
    }
    out
}

fn signed_freq(k: usize, n: usize, pitch: f64) -> f64 {
    let m = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    m / (n as f64 * pitch)
}

fn naive_transfer(kind: TransferKind, nx: usize, ny: usize, pitch: f64, wl: f64, z: f64) -> Vec<Complex64> {
    let mut t = Vec::with_capacity(nx * ny);
    for ky in 0..ny {
        for kx in 0..nx {
            let f2 = signed_freq(kx, nx, pitch).powi(2) + signed_freq(ky, ny, pitch).powi(2);
            t.push(match kind {
                TransferKind::Fresnel => cis(2.0 * PI * z / wl - PI * wl * z * f2),
                TransferKind::AngularSpectrum => {
                    let fz2 = 1.0 / (wl * wl) - f2;
                    if fz2 > 0.0 {
                        cis(2.0 * PI * z * fz2.sqrt())
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                }
            });
        }
    }
    t
}

/// `crop(IDFT(T·DFT(pad(slice))))` with `T` or `conj(T)`.
fn naive_slice_op(
    slice: &[Complex64],
    nx: usize,
    ny: usize,
    pad: usize,
    transfer: &[Complex64],
    conjugate: bool,
) -> Vec<Complex64> {
    let (px, py) = (nx * pad, ny * pad);
    let mut padded = vec![Complex64::new(0.0, 0.0); px * py];
    for y in 0..ny {
        for x in 0..nx {
            padded[x + px * y] = slice[x + nx * y];
        }
    }
    let mut spec = naive_dft(&padded, px, py, -1.0);
    for (s, t) in spec.iter_mut().zip(transfer) {
        *s *= if conjugate { t.conj() } else { *t };
    }
    let back = naive_dft(&spec, px, py, 1.0);
    let norm = (px * py) as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            out.push(back[x + px * y] / norm);
        }
    }
    out
}

fn small_setup() -> OpticalSetup {
    let g = Grid2D::new(6, 4, 3.0).unwrap();
    OpticalSetup::new(0.6, g, vec![0.0, 17.0, 40.0], 260.0).unwrap()
}

fn naive_forward(s: &OpticalSetup, u: &Volume, pad: usize, kind: TransferKind) -> Vec<Complex64> {
    let (nx, ny, p) = (s.grid().nx(), s.grid().ny(), s.grid().pitch());
    let wl = s.wavelength();
    let z2 = *s.zplanes().last().unwrap();
    let mut acc = vec![Complex64::new(0.0, 0.0); nx * ny];
    for (c, &zc) in s.zplanes().iter().enumerate() {
        let t = naive_transfer(kind, nx * pad, ny * pad, p, wl, s.z_detector() - zc);
        let phase = cis(2.0 * PI * (zc - z2) / wl);
        let part = naive_slice_op(u.plane(c), nx, ny, pad, &t, false);
        for (a, v) in acc.iter_mut().zip(part) {
            *a += phase * v;
        }
    }
    acc
}

fn naive_adjoint(s: &OpticalSetup, v: &ComplexField, pad: usize, kind: TransferKind) -> Vec<Complex64> {
    let (nx, ny, p) = (s.grid().nx(), s.grid().ny(), s.grid().pitch());
    let wl = s.wavelength();
    let z2 = *s.zplanes().last().unwrap();
    let mut out = Vec::new();
    for &zc in s.zplanes() {
        let t = naive_transfer(kind, nx * pad, ny * pad, p, wl, s.z_detector() - zc);
        let phase = cis(2.0 * PI * (zc - z2) / wl).conj();
        out.extend(naive_slice_op(v.values(), nx, ny, pad, &t, true).into_iter().map(|x| x * phase));
    }
    out
}

#[test]
fn forward_and_adjoint_match_explicit_dft() {
    let s = small_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for kind in [TransferKind::Fresnel, TransferKind::AngularSpectrum] {
        for pad in [1, 2] {
            let plan = PropagatorPlan::with_options(&s, PlanOptions { padding: pad, kernel: kind }).unwrap();
            let u = Volume::random(*s.grid(), s.zplanes().to_vec(), &mut rng);
            let v = ComplexField::random(*s.grid(), &mut rng);
            let fwd = plan.forward(&u).unwrap();
            let adj = plan.adjoint(&v).unwrap();
            assert!(max_rel(fwd.values(), &naive_forward(&s, &u, pad, kind)) < 1e-10);
            assert!(max_rel(adj.values(), &naive_adjoint(&s, &v, pad, kind)) < 1e-10);
        }
    }
}

#[test]
fn padded_spectral_norm_matches_dense_eigenvalue() {
    let g = Grid2D::new(8, 8, 4.0).unwrap();
    let s = OpticalSetup::new(0.5, g, vec![0.0, 20.0, 40.0, 60.0, 80.0], 600.0).unwrap();
    let plan = PropagatorPlan::with_options(
        &s,
        PlanOptions {
            padding: 2,
            kernel: TransferKind::Fresnel,
        },
    )
    .unwrap();

    // dense A, one column per voxel
    let rows = g.len();
    let cols = g.len() * s.num_planes();
    let mut a = DMatrix::<Complex64>::zeros(rows, cols);
    let mut e = s.zero_volume();
    for j in 0..cols {
        e.values_mut()[j] = Complex64::new(1.0, 0.0);
        let col = plan.forward(&e).unwrap();
        for (i, v) in col.values().iter().enumerate() {
            a[(i, j)] = *v;
        }
        e.values_mut()[j] = Complex64::new(0.0, 0.0);
    }
    let gram = &a * a.adjoint();
    let eig = gram.symmetric_eigen();
    let oracle = eig.eigenvalues.iter().copied().fold(f64::MIN, f64::max);

    let mut cfg = SolverConfig::new(0.0, 1, Regularizer::l1_positive());
    cfg.step = StepPolicy::PowerIteration;
    cfg.power_iterations = 5000;
    cfg.power_tolerance = 1e-14;
    let kappa = spectral_norm(&plan, &cfg).unwrap();
    assert!(oracle < 5.0, "padding breaks per-slice unitarity: {oracle}");
    assert!((kappa - oracle).abs() / oracle < 1e-6, "{kappa} vs {oracle}");
}
