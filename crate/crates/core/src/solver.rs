//! FISTA reconstruction of a 3D volume from one detector-plane field.
//!
//! Minimizes `½‖V − A·U‖² + α·C₂(U)` with a gradient step of size `τ = 1/κ`
//! on the data term, the proximity operator of `ατ·C₂`, and Nesterov
//! momentum. `κ` is the spectral norm of `A†A`, estimated by power iteration
//! unless the configuration supplies it.

use std::time::Instant;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{dot, norm_sqr, ComplexField, Volume};
use crate::metrics::{object_domain_error, relative_residual};
use crate::propagation::PropagatorPlan;
use crate::regularizers::{soft_threshold_positive, Regularizer, RegularizerKind};

/// How the Lipschitz constant κ (and so the step τ = 1/κ) is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepPolicy {
    /// Power iteration on `A†A` from a seeded random start.
    PowerIteration,
    /// `κ = Mz`. Exact for the periodic Fresnel plan, an upper bound otherwise.
    Analytic,
    /// Use the given κ as is.
    Kappa(f64),
}

/// Start volume of the iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Initialization {
    #[default]
    Zero,
    Backprojection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    pub regularizer: Regularizer,
    pub power_iterations: usize,
    pub power_tolerance: f64,
    pub seed: u64,
    pub step: StepPolicy,
    /// Stride between recorded iterations; the first and last are always kept.
    pub record_every: usize,
    /// Stop once `‖U⁽ⁿ⁺¹⁾ − U⁽ⁿ⁾‖ / ‖U⁽ⁿ⁾‖` falls below this.
    pub early_stop_tolerance: Option<f64>,
    pub initialization: Initialization,
}

impl SolverConfig {
    pub fn new(alpha: f64, max_iterations: usize, regularizer: Regularizer) -> Self {
        Self {
            alpha,
            max_iterations,
            regularizer,
            power_iterations: 100,
            power_tolerance: 1e-8,
            seed: 0,
            step: StepPolicy::PowerIteration,
            record_every: 10,
            early_stop_tolerance: None,
            initialization: Initialization::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Parameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be at least 1".into()));
        }
        if self.power_iterations == 0 {
            return Err(Error::Parameter("power_iterations must be at least 1".into()));
        }
        if self.power_tolerance.is_nan() || self.power_tolerance < 0.0 {
            return Err(Error::Parameter("power_tolerance must be nonnegative".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Parameter("record_every must be at least 1".into()));
        }
        if let StepPolicy::Kappa(k) = self.step {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Parameter(format!("kappa must be positive, got {k}")));
            }
        }
        if self.regularizer.kind() == RegularizerKind::TvSlicewise
            && self.regularizer.tv_inner_iterations() == 0
        {
            return Err(Error::Parameter("TV needs at least one inner iteration".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub c1: f64,
    #[serde(with = "extended_float")]
    pub c2: f64,
    #[serde(with = "extended_float")]
    pub total: f64,
}

/// JSON has no infinity; the penalty is `+inf` outside the ℓ1 feasible set,
/// so non-finite values are written as the strings `"inf"`, `"-inf"`, `"nan"`.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("invalid number {t:?}"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub iteration: usize,
    pub c1: f64,
    #[serde(with = "extended_float")]
    pub c2: f64,
    #[serde(with = "extended_float")]
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub iteration: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub iterations: usize,
    pub kappa: f64,
    pub tau: f64,
    pub mu: f64,
    pub stopped_early: bool,
    pub cost_history: Vec<CostRecord>,
    /// Empty when the data field is identically zero.
    pub data_error_history: Vec<ErrorRecord>,
    /// Empty unless a ground truth was supplied.
    pub object_error_history: Vec<ErrorRecord>,
    pub final_cost: Cost,
    pub final_data_error: Option<f64>,
    pub final_object_error: Option<f64>,
    pub wall_time_s: f64,
}

impl RunReport {
    /// Running minimum of the total cost over the recorded iterations.
    pub fn cost_envelope(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.cost_history
            .iter()
            .map(|r| {
                best = best.min(r.total);
                best
            })
            .collect()
    }
}

/// Largest eigenvalue of `A†A` by power iteration.
pub fn spectral_norm(plan: &PropagatorPlan, cfg: &SolverConfig) -> Result<f64> {
    if cfg.power_iterations == 0 {
        return Err(Error::Parameter("power_iterations must be at least 1".into()));
    }
    let setup = plan.setup();
    let mut seed = cfg.seed;
    let mut u = loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Volume::random(*setup.grid(), setup.zplanes().to_vec(), &mut rng);
        if norm_sqr(u.values()) > 0.0 {
            break u;
        }
        seed = seed.wrapping_add(1);
    };
    normalize(&mut u);

    let mut estimate = 0.0;
    for _ in 0..cfg.power_iterations {
        let mut w = plan.normal(&u)?;
        // ‖u‖ = 1, so the Rayleigh quotient is <u, A†A u>
        let rayleigh = dot(u.values(), w.values()).re;
        if !rayleigh.is_finite() {
            return Err(Error::Divergence { iteration: 0 });
        }
        let wn = normalize(&mut w);
        let previous = estimate;
        estimate = rayleigh;
        if wn == 0.0 {
            // u lies in the null space of A; restart elsewhere
            seed = seed.wrapping_add(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            u = Volume::random(*setup.grid(), setup.zplanes().to_vec(), &mut rng);
            normalize(&mut u);
            continue;
        }
        u = w;
        if previous > 0.0 && ((estimate - previous) / estimate).abs() < cfg.power_tolerance {
            break;
        }
    }
    Ok(estimate)
}

fn normalize(u: &mut Volume) -> f64 {
    let n = norm_sqr(u.values()).sqrt();
    if n > 0.0 {
        let inv = 1.0 / n;
        for v in u.values_mut() {
            *v *= inv;
        }
    }
    n
}

fn check_data(v: &ComplexField, plan: &PropagatorPlan) -> Result<()> {
    if v.grid() != plan.setup().grid() {
        return Err(Error::Dimension(
            "data field grid differs from the propagator plan".into(),
        ));
    }
    Ok(())
}

/// `A†(A·U − V)`, the gradient of `½‖V − A·U‖²`.
pub fn grad_data_term(u: &Volume, v: &ComplexField, plan: &PropagatorPlan) -> Result<Volume> {
    check_data(v, plan)?;
    let mut r = plan.forward(u)?;
    for (r, v) in r.values_mut().iter_mut().zip(v.values()) {
        *r -= v;
    }
    plan.adjoint(&r)
}

pub fn cost(u: &Volume, v: &ComplexField, plan: &PropagatorPlan, cfg: &SolverConfig) -> Result<Cost> {
    check_data(v, plan)?;
    let au = plan.forward(u)?;
    Ok(cost_from_forward(u, v, &au, cfg))
}

fn cost_from_forward(u: &Volume, v: &ComplexField, au: &ComplexField, cfg: &SolverConfig) -> Cost {
    let r: Vec<Complex64> = v.values().iter().zip(au.values()).map(|(a, b)| a - b).collect();
    let c1 = 0.5 * norm_sqr(&r);
    let c2 = cfg.regularizer.penalty(u);
    Cost {
        c1,
        c2,
        total: c1 + cfg.alpha * c2,
    }
}

fn resolve_kappa(plan: &PropagatorPlan, cfg: &SolverConfig) -> Result<f64> {
    match cfg.step {
        StepPolicy::PowerIteration => spectral_norm(plan, cfg),
        StepPolicy::Analytic => Ok(plan.num_planes() as f64),
        StepPolicy::Kappa(k) => Ok(k),
    }
}

/// Run FISTA. `u0` defaults to the configured initialization.
pub fn fista(
    v: &ComplexField,
    plan: &PropagatorPlan,
    cfg: &SolverConfig,
    u0: Option<&Volume>,
    truth: Option<&Volume>,
) -> Result<(Volume, RunReport)> {
    fista_observed(v, plan, cfg, u0, truth, |_, _| {})
}

/// [`fista`] that also hands every iterate `U⁽ⁿ⁾` (n ≥ 1) to `observer`.
pub fn fista_observed(
    v: &ComplexField,
    plan: &PropagatorPlan,
    cfg: &SolverConfig,
    u0: Option<&Volume>,
    truth: Option<&Volume>,
    mut observer: impl FnMut(usize, &Volume),
) -> Result<(Volume, RunReport)> {
    let started = Instant::now();
    cfg.validate()?;
    check_data(v, plan)?;
    let setup = plan.setup();
    let start = match (u0, cfg.initialization) {
        (Some(u0), _) => {
            if u0.grid() != setup.grid() || u0.zplanes() != setup.zplanes() {
                return Err(Error::Dimension(
                    "initial volume differs from the plan geometry".into(),
                ));
            }
            u0.clone()
        }
        (None, Initialization::Zero) => setup.zero_volume(),
        (None, Initialization::Backprojection) => plan.backproject(v)?,
    };
    if let Some(t) = truth {
        if !t.same_shape(&start) {
            return Err(Error::Dimension(
                "ground truth differs from the plan geometry".into(),
            ));
        }
    }

    let kappa = resolve_kappa(plan, cfg)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Parameter(format!("spectral norm must be positive, got {kappa}")));
    }
    let tau = 1.0 / kappa;
    let mu = cfg.alpha * tau;
    let data_norm = norm_sqr(v.values()).sqrt();

    let mut report = RunReport {
        iterations: 0,
        kappa,
        tau,
        mu,
        stopped_early: false,
        cost_history: Vec::new(),
        data_error_history: Vec::new(),
        object_error_history: Vec::new(),
        final_cost: Cost {
            c1: 0.0,
            c2: 0.0,
            total: 0.0,
        },
        final_data_error: None,
        final_object_error: None,
        wall_time_s: 0.0,
    };

    let record = |report: &mut RunReport, n: usize, u: &Volume| -> Result<()> {
        let au = plan.forward(u)?;
        let c = cost_from_forward(u, v, &au, cfg);
        report.cost_history.push(CostRecord {
            iteration: n,
            c1: c.c1,
            c2: c.c2,
            total: c.total,
        });
        report.final_cost = c;
        if data_norm > 0.0 {
            let e = relative_residual(v, &au)?;
            report.data_error_history.push(ErrorRecord { iteration: n, value: e });
            report.final_data_error = Some(e);
        }
        if let Some(t) = truth {
            let e = object_domain_error(t, u)?;
            report.object_error_history.push(ErrorRecord { iteration: n, value: e });
            report.final_object_error = Some(e);
        }
        Ok(())
    };

    record(&mut report, 0, &start)?;

    let mut u_prev = start.clone();
    let mut z = start;
    let mut work = setup.zero_volume();
    let mut t = 1.0_f64;
    let mut last_recorded = 0;

    for n in 1..=cfg.max_iterations {
        // gradient step: work = Z − τ·A†(A·Z − V)
        let mut residual = plan.forward(&z)?;
        for (r, d) in residual.values_mut().iter_mut().zip(v.values()) {
            *r -= d;
        }
        if !norm_sqr(residual.values()).is_finite() {
            return Err(Error::Divergence { iteration: n });
        }
        plan.adjoint_into(&residual, &mut work)?;
        for (w, zv) in work.values_mut().iter_mut().zip(z.values()) {
            *w = zv - *w * tau;
        }

        // proximity step
        let u_next = match cfg.regularizer.kind() {
            RegularizerKind::L1Positive => {
                soft_threshold_positive(work.values_mut(), mu);
                work
            }
            RegularizerKind::TvSlicewise => cfg.regularizer.prox(&work, mu)?,
        };

        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        let mut change = 0.0;
        for ((zv, un), up) in z
            .values_mut()
            .iter_mut()
            .zip(u_next.values())
            .zip(u_prev.values())
        {
            let d = un - up;
            change += d.norm_sqr();
            *zv = un + d * beta;
        }
        if !change.is_finite() {
            return Err(Error::Divergence { iteration: n });
        }
        t = t_next;

        let prev_norm = norm_sqr(u_prev.values()).sqrt();
        work = std::mem::replace(&mut u_prev, u_next);
        observer(n, &u_prev);
        report.iterations = n;

        let converged = match cfg.early_stop_tolerance {
            Some(tol) if prev_norm > 0.0 => change.sqrt() / prev_norm < tol,
            _ => false,
        };
        if n % cfg.record_every == 0 || n == cfg.max_iterations || converged {
            record(&mut report, n, &u_prev)?;
            last_recorded = n;
        }
        if converged {
            report.stopped_early = true;
            break;
        }
    }
    debug_assert_eq!(last_recorded, report.iterations);

    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok((u_prev, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{inner_product_3d, Grid2D, OpticalSetup};
    use crate::metrics::data_domain_error;
    use crate::propagation::{PlanOptions, TransferKind};
    use rand::Rng;

    fn setup(n: usize, nz: usize) -> OpticalSetup {
        let g = Grid2D::new(n, n, 5.0).unwrap();
        let zs: Vec<f64> = (0..nz).map(|c| 25.0 * c as f64).collect();
        let zd = zs.last().unwrap() + 1060.0;
        OpticalSetup::new(0.5, g, zs, zd).unwrap()
    }

    fn c1(u: &Volume, v: &ComplexField, plan: &PropagatorPlan) -> f64 {
        let au = plan.forward(u).unwrap();
        let r: Vec<_> = v.values().iter().zip(au.values()).map(|(a, b)| a - b).collect();
        0.5 * norm_sqr(&r)
    }

    #[test]
    fn spectral_norm_single_plane_and_many_planes() {
        let cfg = SolverConfig::new(1e-3, 1, Regularizer::l1_positive());
        let k1 = spectral_norm(&PropagatorPlan::new(&setup(16, 1)), &cfg).unwrap();
        assert!((k1 - 1.0).abs() < 1e-8);
        let k7 = spectral_norm(&PropagatorPlan::new(&setup(16, 7)), &cfg).unwrap();
        assert!((k7 - 7.0).abs() < 7e-6);
    }

    #[test]
    fn spectral_norm_is_deterministic() {
        let s = setup(8, 3);
        let plan = PropagatorPlan::with_options(&s, PlanOptions { padding: 2, kernel: TransferKind::Fresnel }).unwrap();
        let cfg = SolverConfig::new(1e-3, 1, Regularizer::l1_positive());
        assert_eq!(
            spectral_norm(&plan, &cfg).unwrap().to_bits(),
            spectral_norm(&plan, &cfg).unwrap().to_bits()
        );
    }

    #[test]
    fn gradient_at_zero_and_at_solution() {
        let s = setup(16, 3);
        let plan = PropagatorPlan::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = Volume::random(*s.grid(), s.zplanes().to_vec(), &mut rng);
        let v = plan.forward(&truth).unwrap();

        let g0 = grad_data_term(&s.zero_volume(), &v, &plan).unwrap();
        let bp = plan.adjoint(&v).unwrap();
        for (a, b) in g0.values().iter().zip(bp.values()) {
            assert!((a + b).norm() < 1e-12);
        }
        let g = grad_data_term(&truth, &v, &plan).unwrap();
        assert!(norm_sqr(g.values()).sqrt() < 1e-10 * norm_sqr(bp.values()).sqrt());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let s = setup(8, 3);
        let plan = PropagatorPlan::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = Volume::random(*s.grid(), s.zplanes().to_vec(), &mut rng);
        let v = ComplexField::random(*s.grid(), &mut rng);
        let g = grad_data_term(&u, &v, &plan).unwrap();
        let eps = 1e-4;
        for imaginary in [false, true] {
            let mut d = Volume::random(*s.grid(), s.zplanes().to_vec(), &mut rng);
            if imaginary {
                for x in d.values_mut() {
                    *x = Complex64::new(0.0, x.im);
                }
            } else {
                for x in d.values_mut() {
                    *x = Complex64::new(x.re, 0.0);
                }
            }
            let shift = |sign: f64| {
                u.with_values(u.values().iter().zip(d.values()).map(|(a, b)| a + b * (sign * eps)).collect())
                    .unwrap()
            };
            let fd = (c1(&shift(1.0), &v, &plan) - c1(&shift(-1.0), &v, &plan)) / (2.0 * eps);
            let an = inner_product_3d(&g, &d).unwrap().re;
            assert!((fd - an).abs() <= 1e-6 * an.abs(), "{fd} vs {an}");
        }
    }

    #[test]
    fn cost_examples() {
        let s = setup(8, 3);
        let plan = PropagatorPlan::new(&s);
        let cfg = SolverConfig::new(0.1, 1, Regularizer::tv(10).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = Volume::random(*s.grid(), s.zplanes().to_vec(), &mut rng);
        let v = plan.forward(&truth).unwrap();
        assert!(cost(&truth, &v, &plan, &cfg).unwrap().c1 < 1e-25);
        let c0 = cost(&s.zero_volume(), &v, &plan, &cfg).unwrap();
        assert!((c0.c1 - 0.5 * norm_sqr(v.values())).abs() < 1e-12 * c0.c1);
        assert_eq!(c0.c2, 0.0);

        let other = Volume::random(*s.grid(), s.zplanes().to_vec(), &mut rng);
        let c = cost(&other, &v, &plan, &cfg).unwrap();
        let expected_c2 = crate::regularizers::tv_volume(&other);
        assert!((c.c1 - c1(&other, &v, &plan)).abs() < 1e-12 * c.c1);
        assert_eq!(c.c2, expected_c2);
        assert!((c.total - (c.c1 + 0.1 * expected_c2)).abs() < 1e-12 * c.total);
    }

    #[test]
    fn zero_data_is_a_fixed_point() {
        let s = setup(8, 4);
        let plan = PropagatorPlan::new(&s);
        for reg in [Regularizer::l1_positive(), Regularizer::tv(5).unwrap()] {
            let cfg = SolverConfig::new(1e-3, 20, reg);
            let (u, report) = fista(&s.zero_field(), &plan, &cfg, None, None).unwrap();
            assert!(u.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
            assert!(report.cost_history.iter().all(|c| c.total == 0.0));
            assert!(report.data_error_history.is_empty());
        }
    }

    #[test]
    fn unitary_single_plane_solves_in_one_step() {
        let s = setup(16, 1);
        let plan = PropagatorPlan::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut truth = s.zero_volume();
        for x in truth.values_mut() {
            *x = Complex64::new(rng.gen_range(0.5..1.5), 0.0);
        }
        let v = plan.forward(&truth).unwrap();
        let mut cfg = SolverConfig::new(1e-12, 5, Regularizer::l1_positive());
        cfg.record_every = 1;
        let (u, report) = fista(&v, &plan, &cfg, None, Some(&truth)).unwrap();
        assert!((report.kappa - 1.0).abs() < 1e-8);
        assert!(report.data_error_history.iter().skip(1).all(|e| e.value < 1e-10));
        assert!(data_domain_error(&v, &u, &plan).unwrap() < 1e-10);
    }

    #[test]
    fn iterates_are_real_nonnegative_and_history_is_consistent() {
        let s = setup(16, 4);
        let plan = PropagatorPlan::new(&s);
        let mut truth = s.zero_volume();
        truth.set(4, 4, 1, Complex64::new(1.0, 0.0));
        truth.set(11, 9, 3, Complex64::new(0.7, 0.0));
        let v = plan.forward(&truth).unwrap();
        let mut cfg = SolverConfig::new(1e-2, 40, Regularizer::l1_positive());
        cfg.record_every = 7;
        let mut stored = Vec::new();
        let (u, report) = fista_observed(&v, &plan, &cfg, None, Some(&truth), |n, u| {
            assert!(u.values().iter().all(|x| x.im == 0.0 && x.re >= 0.0));
            stored.push((n, u.clone()));
        })
        .unwrap();
        assert_eq!(stored.len(), 40);
        for rec in report.data_error_history.iter().skip(1) {
            let (_, iterate) = &stored[rec.iteration - 1];
            assert_eq!(rec.value, data_domain_error(&v, iterate, &plan).unwrap());
        }
        assert_eq!(report.data_error_history.last().unwrap().iteration, 40);
        let first = report.cost_history.first().unwrap().total;
        assert!(report.final_cost.total < first);
        assert_eq!(&stored.last().unwrap().1, &u);
    }

    #[test]
    fn runs_are_bit_identical() {
        let s = setup(16, 3);
        let plan = PropagatorPlan::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = ComplexField::random(*s.grid(), &mut rng);
        let cfg = SolverConfig::new(1e-2, 15, Regularizer::tv(5).unwrap());
        let (u1, mut r1) = fista(&v, &plan, &cfg, None, None).unwrap();
        let (u2, mut r2) = fista(&v, &plan, &cfg, None, None).unwrap();
        assert_eq!(u1, u2);
        r1.wall_time_s = 0.0;
        r2.wall_time_s = 0.0;
        assert_eq!(r1, r2);
    }

    #[test]
    fn early_stop_and_validation() {
        let s = setup(8, 1);
        let plan = PropagatorPlan::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let v = ComplexField::random(*s.grid(), &mut rng);
        let mut cfg = SolverConfig::new(1e-3, 1000, Regularizer::tv(5).unwrap());
        cfg.early_stop_tolerance = Some(1e-10);
        let (_, report) = fista(&v, &plan, &cfg, None, None).unwrap();
        assert!(report.stopped_early);
        assert!(report.iterations < 1000);

        let mut bad = cfg.clone();
        bad.alpha = 0.0;
        assert!(fista(&v, &plan, &bad, None, None).is_err());
        let mut bad = cfg.clone();
        bad.max_iterations = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let s = setup(8, 2);
        let plan = PropagatorPlan::new(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v = ComplexField::random(*s.grid(), &mut rng);
        let mut cfg = SolverConfig::new(1e-3, 5000, Regularizer::tv(2).unwrap());
        // a step far beyond 2/κ blows the iteration up
        cfg.step = StepPolicy::Kappa(1e-3);
        match fista(&v, &plan, &cfg, None, None) {
            Err(Error::Divergence { iteration }) => assert!(iteration > 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
