//! Sparsity penalties and their proximity operators.
//!
//! The TV penalty uses backward first differences within each plane; a
//! difference that would reach outside the plane is zero (Neumann boundary).
//! The FGP dual iteration below is built on exactly this difference operator,
//! so the penalty and its prox agree.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Volume};

pub const DEFAULT_TV_INNER_ITERATIONS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerKind {
    /// ℓ1 norm plus the indicator of the real nonnegative orthant.
    L1Positive,
    /// Sum of per-plane isotropic total variation.
    TvSlicewise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Regularizer {
    kind: RegularizerKind,
    tv_inner_iterations: usize,
}

impl Regularizer {
    pub fn l1_positive() -> Self {
        Self {
            kind: RegularizerKind::L1Positive,
            tv_inner_iterations: DEFAULT_TV_INNER_ITERATIONS,
        }
    }

    pub fn tv(inner_iterations: usize) -> Result<Self> {
        if inner_iterations == 0 {
            return Err(Error::Parameter(
                "TV prox needs at least one inner iteration".into(),
            ));
        }
        Ok(Self {
            kind: RegularizerKind::TvSlicewise,
            tv_inner_iterations: inner_iterations,
        })
    }

    pub fn new(kind: RegularizerKind, tv_inner_iterations: usize) -> Result<Self> {
        match kind {
            RegularizerKind::L1Positive => Ok(Self {
                kind,
                tv_inner_iterations,
            }),
            RegularizerKind::TvSlicewise => Self::tv(tv_inner_iterations),
        }
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn tv_inner_iterations(&self) -> usize {
        self.tv_inner_iterations
    }

    /// Value of the penalty at `u`. For ℓ1 with positivity this is `+∞` when
    /// any voxel leaves the real nonnegative orthant.
    pub fn penalty(&self, u: &Volume) -> f64 {
        match self.kind {
            RegularizerKind::L1Positive => {
                if u.values().iter().any(|v| v.im != 0.0 || v.re < 0.0) {
                    f64::INFINITY
                } else {
                    l1_norm(u)
                }
            }
            RegularizerKind::TvSlicewise => tv_volume(u),
        }
    }

    /// Proximity operator of `mu` times the penalty.
    pub fn prox(&self, u: &Volume, mu: f64) -> Result<Volume> {
        match self.kind {
            RegularizerKind::L1Positive => prox_l1_positive(u, mu),
            RegularizerKind::TvSlicewise => prox_tv(u, mu, self),
        }
    }
}

/// Σ |u| over all voxels.
pub fn l1_norm(u: &Volume) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in u.values() {
        // Kahan
        let y = v.norm() - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn tv_plane(p: &[Complex64], nx: usize, ny: usize) -> f64 {
    let mut total = 0.0;
    for b in 0..ny {
        for a in 0..nx {
            let i = a + nx * b;
            let dx = if a > 0 { (p[i] - p[i - 1]).norm_sqr() } else { 0.0 };
            let dy = if b > 0 { (p[i] - p[i - nx]).norm_sqr() } else { 0.0 };
            total += (dx + dy).sqrt();
        }
    }
    total
}

/// Isotropic total variation of one plane, complex moduli of differences.
pub fn tv_slice(p: &ComplexField) -> f64 {
    tv_plane(p.values(), p.grid().nx(), p.grid().ny())
}

/// Σ over planes of [`tv_slice`].
pub fn tv_volume(u: &Volume) -> f64 {
    let (nx, ny) = (u.grid().nx(), u.grid().ny());
    u.planes().map(|p| tv_plane(p, nx, ny)).sum()
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::Parameter(format!(
            "prox weight must be finite and nonnegative, got {mu}"
        )));
    }
    Ok(())
}

/// Positive soft-thresholding: keeps `Re(u) − μ` where `Re(u) ≥ μ`, zero
/// elsewhere. The imaginary part is always dropped.
pub fn prox_l1_positive(u: &Volume, mu: f64) -> Result<Volume> {
    check_mu(mu)?;
    let mut out = u.clone();
    soft_threshold_positive(out.values_mut(), mu);
    Ok(out)
}

pub(crate) fn soft_threshold_positive(values: &mut [Complex64], mu: f64) {
    for v in values {
        *v = if v.re >= mu {
            Complex64::new(v.re - mu, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
}

/// Per-plane TV prox solved by fast gradient projection on the dual.
///
/// Real and imaginary channels are denoised independently, each with weight
/// `mu`.
pub fn prox_tv(u: &Volume, mu: f64, reg: &Regularizer) -> Result<Volume> {
    check_mu(mu)?;
    if reg.kind != RegularizerKind::TvSlicewise {
        return Err(Error::Parameter(
            "prox_tv called with a non-TV regularizer".into(),
        ));
    }
    let mut out = u.clone();
    if mu == 0.0 {
        return Ok(out);
    }
    let (nx, ny) = (u.grid().nx(), u.grid().ny());
    let mut ws = FgpWorkspace::new(nx, ny);
    for plane in out.planes_mut() {
        for (b, v) in ws.input.iter_mut().zip(plane.iter()) {
            *b = v.re;
        }
        ws.denoise(mu, reg.tv_inner_iterations);
        for (v, x) in plane.iter_mut().zip(&ws.output) {
            v.re = *x;
        }
        for (b, v) in ws.input.iter_mut().zip(plane.iter()) {
            *b = v.im;
        }
        ws.denoise(mu, reg.tv_inner_iterations);
        for (v, x) in plane.iter_mut().zip(&ws.output) {
            v.im = *x;
        }
    }
    Ok(out)
}

/// Fast gradient projection for `argmin_x μ·TV(x) + ½‖x − b‖²` on one real
/// `nx × ny` image.
pub fn fgp_denoise(b: &[f64], nx: usize, ny: usize, mu: f64, iterations: usize) -> Vec<f64> {
    assert_eq!(b.len(), nx * ny);
    let mut ws = FgpWorkspace::new(nx, ny);
    ws.input.copy_from_slice(b);
    if mu == 0.0 {
        return b.to_vec();
    }
    ws.denoise(mu, iterations);
    ws.output
}

/// Dual variables are stored per pixel for the x and y differences ending at
/// that pixel; entries on the first column (x) and first row (y) stay zero.
struct FgpWorkspace {
    nx: usize,
    ny: usize,
    input: Vec<f64>,
    output: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
    rx: Vec<f64>,
    ry: Vec<f64>,
    row_prev: Vec<f64>,
    row_cur: Vec<f64>,
}

impl FgpWorkspace {
    fn new(nx: usize, ny: usize) -> Self {
        let n = nx * ny;
        Self {
            nx,
            ny,
            input: vec![0.0; n],
            output: vec![0.0; n],
            px: vec![0.0; n],
            py: vec![0.0; n],
            rx: vec![0.0; n],
            ry: vec![0.0; n],
            row_prev: vec![0.0; nx],
            row_cur: vec![0.0; nx],
        }
    }

    /// Row `b` of `input − μ·Dᵀ(qx, qy)` written to `out`.
    #[allow(clippy::too_many_arguments)]
    fn primal_row(
        input: &[f64],
        qx: &[f64],
        qy: &[f64],
        nx: usize,
        ny: usize,
        b: usize,
        mu: f64,
        out: &mut [f64],
    ) {
        let row = b * nx;
        let inp = &input[row..row + nx];
        let qx_row = &qx[row..row + nx];
        let qy_row = &qy[row..row + nx];
        // (Dxᵀq)_a = q_a − q_{a+1}, (Dyᵀq)_b = q_b − q_{b+1}
        for a in 0..nx {
            out[a] = qx_row[a] + qy_row[a];
        }
        for a in 0..nx - 1 {
            out[a] -= qx_row[a + 1];
        }
        if b + 1 < ny {
            let below = &qy[row + nx..row + 2 * nx];
            for a in 0..nx {
                out[a] -= below[a];
            }
        }
        for a in 0..nx {
            out[a] = inp[a] - mu * out[a];
        }
    }

    fn denoise(&mut self, mu: f64, iterations: usize) {
        let (nx, ny) = (self.nx, self.ny);
        self.px.fill(0.0);
        self.py.fill(0.0);
        self.rx.fill(0.0);
        self.ry.fill(0.0);
        let step = 1.0 / (8.0 * mu);
        let mut t = 1.0_f64;
        for _ in 0..iterations {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            // Row b of the primal only reads duals of rows b and b+1, so the
            // duals of row b can be updated right after it is formed.
            for b in 0..ny {
                Self::primal_row(
                    &self.input, &self.rx, &self.ry, nx, ny, b, mu, &mut self.row_cur,
                );
                let row = b * nx;
                let cur = &self.row_cur;
                let prev = &self.row_prev;
                let px = &mut self.px[row..row + nx];
                let py = &mut self.py[row..row + nx];
                let rx = &mut self.rx[row..row + nx];
                let ry = &mut self.ry[row..row + nx];
                let has_above = b > 0;
                for a in 0..nx {
                    let gx = if a > 0 { cur[a] - cur[a - 1] } else { 0.0 };
                    let gy = if has_above { cur[a] - prev[a] } else { 0.0 };
                    let qx = rx[a] + step * gx;
                    let qy = ry[a] + step * gy;
                    let s = (qx * qx + qy * qy).sqrt().max(1.0);
                    let (vx, vy) = (qx / s, qy / s);
                    rx[a] = vx + beta * (vx - px[a]);
                    ry[a] = vy + beta * (vy - py[a]);
                    px[a] = vx;
                    py[a] = vy;
                }
                std::mem::swap(&mut self.row_prev, &mut self.row_cur);
            }
            t = t_next;
        }
        for b in 0..ny {
            let row = b * nx;
            Self::primal_row(
                &self.input, &self.px, &self.py, nx, ny, b, mu, &mut self.row_cur,
            );
            self.output[row..row + nx].copy_from_slice(&self.row_cur);
        }
    }
}
