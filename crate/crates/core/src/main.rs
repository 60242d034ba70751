use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use holo3d::io::{self, Channel, RunConfigFile};
use holo3d::metrics::{data_domain_error, object_domain_error, support_contrast};
use holo3d::phantoms::PhantomKind;
use holo3d::propagation::adjoint_mismatch;
use holo3d::solver::{fista, spectral_norm};
use holo3d::{ComplexField, Error, OpticalSetup, PropagatorPlan, Result, Volume};

/// Adjoint identity threshold for `adjoint-test`.
const ADJOINT_TOLERANCE: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "holo3d", version, about = "Compressive 3D reconstruction from a single hologram field")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides solver.seed (at most 2^63 − 1, the TOML integer range).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Suppress informational output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom volume.
    Phantom {
        /// Overrides phantom.kind.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
    /// Propagate a volume to the detector plane.
    Forward {
        #[arg(long)]
        input: PathBuf,
    },
    /// Replay a detector field into the volume (adjoint).
    Backproject {
        #[arg(long)]
        input: PathBuf,
    },
    /// Regularized reconstruction of a volume from a detector field.
    Reconstruct {
        #[arg(long)]
        input: PathBuf,
        /// Ground-truth volume for object-domain errors.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Report path; defaults to the output path with a .json extension.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check ⟨A U, V⟩ = ⟨U, A†V⟩ on seeded random pairs.
    AdjointTest {
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Overrides optics.padding.
        #[arg(long)]
        padding: Option<usize>,
        #[arg(long, hide = true)]
        corrupt_adjoint: bool,
    },
    /// Estimate the spectral norm of A†A by power iteration.
    SpectralNorm,
    /// Object- and data-domain errors of an estimate.
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        estimate: PathBuf,
        /// Detector field for the data-domain error.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write volume planes as 16-bit PGM images.
    ExportSlices {
        #[arg(long)]
        input: PathBuf,
        /// 1-based plane numbers; all planes when omitted.
        #[arg(long, value_delimiter = ',')]
        planes: Vec<usize>,
        #[arg(long, value_enum, default_value = "magnitude")]
        channel: ChannelArg,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum KindArg {
    AmplitudeReflectors,
    TextPhase,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ChannelArg {
    Magnitude,
    Real,
    Imag,
    Phase,
}

impl From<ChannelArg> for Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Magnitude => Channel::Magnitude,
            ChannelArg::Real => Channel::Real,
            ChannelArg::Imag => Channel::Imag,
            ChannelArg::Phase => Channel::Phase,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Io(_) => 2,
        Error::Consistency(_) | Error::Format { .. } | Error::Dimension(_) | Error::UndefinedMetric(_) => 3,
        Error::Divergence { .. } => 4,
    }
}

struct Ctx {
    config: RunConfigFile,
    out: Option<PathBuf>,
    quiet: bool,
}

impl Ctx {
    fn load(common: &Common) -> Result<Self> {
        let mut config = match &common.config {
            Some(p) => RunConfigFile::load(p)?,
            None => RunConfigFile::default(),
        };
        if let Some(seed) = common.seed {
            config.solver.seed = seed;
        }
        Ok(Self {
            config,
            out: common.out.clone(),
            quiet: common.quiet,
        })
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config("--out <path> is required".into()))
    }

    fn setup(&self) -> Result<OpticalSetup> {
        self.config.optics.setup().map_err(as_config)
    }

    fn plan(&self, setup: &OpticalSetup) -> Result<PropagatorPlan> {
        let options = self.config.optics.plan_options()?;
        PropagatorPlan::with_options(setup, options).map_err(as_config)
    }

    fn say(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

/// Invalid geometry in the configuration is a user error.
fn as_config(e: Error) -> Error {
    match e {
        Error::Parameter(m) | Error::Dimension(m) => Error::Config(m),
        other => other,
    }
}

fn read_volume_checked(path: &Path, setup: &OpticalSetup) -> Result<Volume> {
    let (u, header) = io::read_volume(path)?;
    header.check_matches(setup)?;
    Ok(u)
}

fn read_field_checked(path: &Path, setup: &OpticalSetup) -> Result<ComplexField> {
    let (v, header) = io::read_field(path)?;
    header.check_matches(setup)?;
    Ok(v)
}

fn run(cli: Cli) -> Result<()> {
    let mut ctx = Ctx::load(&cli.common)?;
    match cli.command {
        Command::Phantom { kind } => {
            if let Some(k) = kind {
                let kind = match k {
                    KindArg::AmplitudeReflectors => PhantomKind::AmplitudeReflectors,
                    KindArg::TextPhase => PhantomKind::TextPhase,
                };
                let section = ctx.config.phantom.get_or_insert(io::PhantomSection {
                    kind,
                    planes: None,
                    glyph_size: holo3d::phantoms::DEFAULT_GLYPH_SIZE,
                });
                if section.kind != kind {
                    section.kind = kind;
                    section.planes = None;
                }
            }
            let section = ctx.config.phantom.as_mut().ok_or_else(|| {
                Error::Config("no phantom kind: add a [phantom] section or pass --kind".into())
            })?;
            let spec = section.spec();
            section.planes = Some(spec.planes);
            let setup = ctx.setup()?;
            let out = ctx.out()?;
            let u = spec.generate(&setup).map_err(as_config)?;
            io::write_volume(out, &u, &setup)?;
            ctx.say(ctx.config.to_toml()?.trim_end());
        }
        Command::Forward { input } => {
            let setup = ctx.setup()?;
            let plan = ctx.plan(&setup)?;
            let out = ctx.out()?;
            let u = read_volume_checked(&input, &setup)?;
            let v = plan.forward(&u)?;
            io::write_field(out, &v, &setup)?;
            ctx.say(format!("wrote {}", out.display()));
        }
        Command::Backproject { input } => {
            let setup = ctx.setup()?;
            let plan = ctx.plan(&setup)?;
            let out = ctx.out()?;
            let v = read_field_checked(&input, &setup)?;
            let u = plan.backproject(&v)?;
            io::write_volume(out, &u, &setup)?;
            ctx.say(format!("wrote {}", out.display()));
        }
        Command::Reconstruct {
            input,
            truth,
            report,
        } => {
            let cfg = ctx.config.solver.solver_config()?;
            let setup = ctx.setup()?;
            let plan = ctx.plan(&setup)?;
            let out = ctx.out()?.to_path_buf();
            let report_path = report
                .or_else(|| ctx.config.io.report.clone())
                .unwrap_or_else(|| out.with_extension("json"));
            let truth_path = truth.or_else(|| ctx.config.io.truth.clone());
            let v = read_field_checked(&input, &setup)?;
            let truth = match &truth_path {
                Some(p) => Some(read_volume_checked(p, &setup)?),
                None => None,
            };
            let (u, rep) = fista(&v, &plan, &cfg, None, truth.as_ref())?;
            io::write_volume(&out, &u, &setup)?;
            io::write_report(&report_path, &rep)?;
            ctx.say(format!(
                "iterations {} kappa {} data_error {} object_error {}",
                rep.iterations,
                rep.kappa,
                fmt_opt(rep.final_data_error),
                fmt_opt(rep.final_object_error),
            ));
        }
        Command::AdjointTest {
            trials,
            padding,
            corrupt_adjoint,
        } => {
            if let Some(p) = padding {
                ctx.config.optics.padding = p;
            }
            let setup = ctx.setup()?;
            let plan = ctx.plan(&setup)?;
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.solver.seed);
            let mut worst = 0.0_f64;
            for _ in 0..trials {
                let u = Volume::random(*setup.grid(), setup.zplanes().to_vec(), &mut rng);
                let v = ComplexField::random(*setup.grid(), &mut rng);
                let mut adj = plan.adjoint(&v)?;
                if corrupt_adjoint {
                    for x in adj.values_mut() {
                        *x = x.conj();
                    }
                }
                worst = worst.max(adjoint_mismatch(&plan, &u, &v, &adj)?);
            }
            ctx.say(format!(
                "trials {trials} padding {} max relative mismatch {worst:e}",
                plan.options().padding
            ));
            if worst.is_nan() || worst >= ADJOINT_TOLERANCE {
                return Err(Error::Consistency(format!(
                    "adjoint mismatch {worst:e} exceeds {ADJOINT_TOLERANCE:e}"
                )));
            }
        }
        Command::SpectralNorm => {
            let setup = ctx.setup()?;
            let plan = ctx.plan(&setup)?;
            let cfg = ctx.config.solver.solver_config_with_alpha(0.0)?;
            let kappa = spectral_norm(&plan, &cfg)?;
            println!("{kappa}");
        }
        Command::Metrics {
            truth,
            estimate,
            data,
        } => {
            let (t, th) = io::read_volume(&truth)?;
            let (e, eh) = io::read_volume(&estimate)?;
            let setup = th.setup()?;
            eh.check_matches(&setup)?;
            let mut summary = MetricsSummary {
                object_error: object_domain_error(&t, &e)?,
                data_error: None,
                median_on_support: None,
                median_off_support: None,
            };
            if let Ok(sc) = support_contrast(&t, &e) {
                summary.median_on_support = Some(sc.median_on);
                summary.median_off_support = Some(sc.median_off);
            }
            if let Some(d) = data {
                let v = read_field_checked(&d, &setup)?;
                let plan = ctx.plan(&setup)?;
                summary.data_error = Some(data_domain_error(&v, &e, &plan)?);
            }
            let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))?;
            if let Some(out) = &ctx.out {
                io::write_atomic(out, format!("{text}\n").as_bytes())?;
            }
            ctx.say(text);
        }
        Command::ExportSlices {
            input,
            planes,
            channel,
        } => {
            let (u, _) = io::read_volume(&input)?;
            let out = ctx.out()?;
            let planes = if planes.is_empty() {
                (1..=u.num_planes()).collect()
            } else {
                planes
            };
            let written = io::export_slices(&u, &planes, channel.into(), out)?;
            for p in written {
                ctx.say(format!("wrote {}", p.display()));
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct MetricsSummary {
    object_error: f64,
    data_error: Option<f64>,
    median_on_support: Option<f64>,
    median_off_support: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Config(_)) {
                eprintln!("hint: see `holo3d --help` and the example configuration in the README");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
