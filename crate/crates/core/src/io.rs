//! File formats.
//!
//! Fields and volumes are stored as a raw payload of little-endian `f64`
//! pairs `(re, im)`, x fastest, then y, then plane, next to a TOML header
//! with the same stem and a `.toml` extension. Run configurations are TOML,
//! run reports JSON, and exported slices 16-bit binary PGM images with a
//! JSON sidecar holding the linear scaling.
//!
//! Every write goes to a temporary file in the target directory that is then
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, Grid2D, OpticalSetup, Volume};
use crate::phantoms::{
    PhantomKind, PhantomSpec, AMPLITUDE_PLANES, DEFAULT_GLYPH_SIZE, REFERENCE_DETECTOR_DISTANCE_UM,
    REFERENCE_GRID, REFERENCE_PLANES, REFERENCE_WAVELENGTH_UM, TEXT_PLANES,
};
use crate::propagation::{PlanOptions, TransferKind};
use crate::regularizers::{Regularizer, RegularizerKind, DEFAULT_TV_INNER_ITERATIONS};
use crate::solver::{Initialization, RunReport, SolverConfig, StepPolicy};

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE: &str = "complex128-le";

/// Relative tolerance when comparing header geometry with a configuration.
const GEOMETRY_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    Field,
    Volume,
}

/// Sidecar header. It always carries the full optical geometry so a file can
/// be checked against the configuration it is used with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub kind: DataKind,
    pub dtype: String,
    pub nx: usize,
    pub ny: usize,
    /// Planes in the payload: 1 for a field.
    pub nz: usize,
    pub pitch_um: f64,
    pub wavelength_um: f64,
    pub zplanes_um: Vec<f64>,
    pub z_detector_um: f64,
}

impl Header {
    pub fn new(kind: DataKind, setup: &OpticalSetup) -> Self {
        let g = setup.grid();
        Self {
            format_version: FORMAT_VERSION,
            kind,
            dtype: DTYPE.to_string(),
            nx: g.nx(),
            ny: g.ny(),
            nz: match kind {
                DataKind::Field => 1,
                DataKind::Volume => setup.num_planes(),
            },
            pitch_um: g.pitch(),
            wavelength_um: setup.wavelength(),
            zplanes_um: setup.zplanes().to_vec(),
            z_detector_um: setup.z_detector(),
        }
    }

    pub fn setup(&self) -> Result<OpticalSetup> {
        let grid = Grid2D::new(self.nx, self.ny, self.pitch_um)?;
        OpticalSetup::new(
            self.wavelength_um,
            grid,
            self.zplanes_um.clone(),
            self.z_detector_um,
        )
    }

    /// Consistency error naming the first quantity that differs from `setup`.
    pub fn check_matches(&self, setup: &OpticalSetup) -> Result<()> {
        let g = setup.grid();
        let close = |a: f64, b: f64| (a - b).abs() <= GEOMETRY_RTOL * a.abs().max(b.abs());
        let mismatch = |what: &str, file: String, cfg: String| {
            Err(Error::Consistency(format!(
                "{what} differs: file has {file}, configuration has {cfg}"
            )))
        };
        if (self.nx, self.ny) != (g.nx(), g.ny()) {
            return mismatch(
                "grid size",
                format!("{}x{}", self.nx, self.ny),
                format!("{}x{}", g.nx(), g.ny()),
            );
        }
        if !close(self.pitch_um, g.pitch()) {
            return mismatch("pitch", self.pitch_um.to_string(), g.pitch().to_string());
        }
        if !close(self.wavelength_um, setup.wavelength()) {
            return mismatch(
                "wavelength",
                self.wavelength_um.to_string(),
                setup.wavelength().to_string(),
            );
        }
        let planes_match = self.zplanes_um.len() == setup.num_planes()
            && self.zplanes_um.iter().zip(setup.zplanes()).all(|(a, b)| close(*a, *b));
        if !planes_match {
            return mismatch(
                "plane positions",
                format!("{:?}", self.zplanes_um),
                format!("{:?}", setup.zplanes()),
            );
        }
        if !close(self.z_detector_um, setup.z_detector()) {
            return mismatch(
                "detector position",
                self.z_detector_um.to_string(),
                setup.z_detector().to_string(),
            );
        }
        Ok(())
    }
}

/// Sidecar path for a payload path.
pub fn header_path(payload: &Path) -> PathBuf {
    payload.with_extension("toml")
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn encode_samples(values: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 * values.len());
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_samples(bytes: &[u8]) -> Vec<Complex64> {
    bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect()
}

fn write_data(path: &Path, header: &Header, values: &[Complex64]) -> Result<()> {
    if path.extension().is_some_and(|e| e == "toml") {
        return Err(format_err(path, "payload path must not end in .toml"));
    }
    let text = toml::to_string(header).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(path, &encode_samples(values))?;
    write_atomic(&header_path(path), text.as_bytes())
}

fn read_data(path: &Path, kind: DataKind) -> Result<(Header, Vec<Complex64>)> {
    let hpath = header_path(path);
    let text = fs::read_to_string(&hpath)?;
    let header: Header = toml::from_str(&text).map_err(|e| format_err(&hpath, e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(format_err(
            &hpath,
            format!("unsupported format version {}", header.format_version),
        ));
    }
    if header.dtype != DTYPE {
        return Err(format_err(&hpath, format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.kind != kind {
        return Err(format_err(
            &hpath,
            format!("expected a {kind:?} file, found {:?}", header.kind),
        ));
    }
    let expected_nz = match kind {
        DataKind::Field => 1,
        DataKind::Volume => header.zplanes_um.len(),
    };
    if header.nz != expected_nz {
        return Err(format_err(
            &hpath,
            format!("nz = {} but {expected_nz} planes expected", header.nz),
        ));
    }
    let bytes = fs::read(path)?;
    let expected = 16 * header.nx * header.ny * header.nz;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!("payload has {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    Ok((header, decode_samples(&bytes)))
}

pub fn write_volume(path: &Path, u: &Volume, setup: &OpticalSetup) -> Result<()> {
    if u.grid() != setup.grid() || u.zplanes() != setup.zplanes() {
        return Err(Error::Dimension("volume does not match the optical setup".into()));
    }
    write_data(path, &Header::new(DataKind::Volume, setup), u.values())
}

pub fn read_volume(path: &Path) -> Result<(Volume, Header)> {
    let (header, values) = read_data(path, DataKind::Volume)?;
    let grid = Grid2D::new(header.nx, header.ny, header.pitch_um)
        .map_err(|e| format_err(path, e.to_string()))?;
    let u = Volume::from_values(grid, header.zplanes_um.clone(), values)
        .map_err(|e| format_err(path, e.to_string()))?;
    Ok((u, header))
}

pub fn write_field(path: &Path, v: &ComplexField, setup: &OpticalSetup) -> Result<()> {
    if v.grid() != setup.grid() {
        return Err(Error::Dimension("field does not match the optical setup".into()));
    }
    write_data(path, &Header::new(DataKind::Field, setup), v.values())
}

pub fn read_field(path: &Path) -> Result<(ComplexField, Header)> {
    let (header, values) = read_data(path, DataKind::Field)?;
    let grid = Grid2D::new(header.nx, header.ny, header.pitch_um)
        .map_err(|e| format_err(path, e.to_string()))?;
    let v = ComplexField::from_values(grid, values).map_err(|e| format_err(path, e.to_string()))?;
    Ok((v, header))
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

// ---------------------------------------------------------------------------
// run configuration

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub optics: OpticsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub io: IoSection,
}

/// Geometry. Planes are either listed in `zplanes_um` or generated as
/// `z_first_um + c·plane_spacing_um`; the detector sits at `z_detector_um`
/// or `detector_distance_um` past the last plane. Defaults reproduce the
/// reference 128×128×30 setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpticsSection {
    pub wavelength_um: f64,
    pub nx: usize,
    pub ny: usize,
    pub pitch_um: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zplanes_um: Option<Vec<f64>>,
    pub num_planes: usize,
    pub plane_spacing_um: f64,
    pub z_first_um: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_detector_um: Option<f64>,
    pub detector_distance_um: f64,
    pub padding: usize,
    pub kernel: TransferKind,
}

impl Default for OpticsSection {
    fn default() -> Self {
        Self {
            wavelength_um: REFERENCE_WAVELENGTH_UM,
            nx: REFERENCE_GRID,
            ny: REFERENCE_GRID,
            pitch_um: 5.0,
            zplanes_um: None,
            num_planes: REFERENCE_PLANES,
            plane_spacing_um: 25.0,
            z_first_um: 0.0,
            z_detector_um: None,
            detector_distance_um: REFERENCE_DETECTOR_DISTANCE_UM,
            padding: 1,
            kernel: TransferKind::Fresnel,
        }
    }
}

impl OpticsSection {
    pub fn setup(&self) -> Result<OpticalSetup> {
        let grid = Grid2D::new(self.nx, self.ny, self.pitch_um)?;
        let zplanes = match &self.zplanes_um {
            Some(z) => z.clone(),
            None => {
                if self.num_planes == 0 {
                    return Err(Error::Config("num_planes must be at least 1".into()));
                }
                (0..self.num_planes)
                    .map(|c| self.z_first_um + c as f64 * self.plane_spacing_um)
                    .collect()
            }
        };
        let last = *zplanes
            .last()
            .ok_or_else(|| Error::Config("at least one object plane is required".into()))?;
        let z_detector = self.z_detector_um.unwrap_or(last + self.detector_distance_um);
        OpticalSetup::new(self.wavelength_um, grid, zplanes, z_detector)
    }

    pub fn plan_options(&self) -> Result<PlanOptions> {
        if self.padding == 0 {
            return Err(Error::Config("padding must be at least 1".into()));
        }
        Ok(PlanOptions {
            padding: self.padding,
            kernel: self.kernel,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    pub kind: PhantomKind,
    /// 1-based occupied planes; the kind's defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planes: Option<[usize; 4]>,
    #[serde(default = "default_glyph_size")]
    pub glyph_size: usize,
}

fn default_glyph_size() -> usize {
    DEFAULT_GLYPH_SIZE
}

impl PhantomSection {
    pub fn spec(&self) -> PhantomSpec {
        let planes = self.planes.unwrap_or(match self.kind {
            PhantomKind::AmplitudeReflectors => AMPLITUDE_PLANES,
            PhantomKind::TextPhase => TEXT_PLANES,
        });
        PhantomSpec {
            kind: self.kind,
            planes,
            glyph_size: self.glyph_size,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    #[default]
    PowerIteration,
    Analytic,
}

/// Solver settings. `alpha` has no default and must be given for
/// reconstruction; a `kappa` value overrides `step`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub max_iterations: usize,
    pub regularizer: RegularizerKind,
    pub tv_inner_iterations: usize,
    pub power_iterations: usize,
    pub power_tolerance: f64,
    /// TOML integers are signed, so seeds above `i64::MAX` cannot be stored.
    pub seed: u64,
    pub step: StepKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub record_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop_tolerance: Option<f64>,
    pub init: Initialization,
}

impl Default for SolverSection {
    fn default() -> Self {
        let reference = SolverConfig::new(0.0, 10_000, Regularizer::l1_positive());
        Self {
            alpha: None,
            max_iterations: reference.max_iterations,
            regularizer: RegularizerKind::L1Positive,
            tv_inner_iterations: DEFAULT_TV_INNER_ITERATIONS,
            power_iterations: reference.power_iterations,
            power_tolerance: reference.power_tolerance,
            seed: reference.seed,
            step: StepKind::PowerIteration,
            kappa: None,
            record_every: reference.record_every,
            early_stop_tolerance: None,
            init: Initialization::Zero,
        }
    }
}

impl SolverSection {
    pub fn regularizer(&self) -> Result<Regularizer> {
        Regularizer::new(self.regularizer, self.tv_inner_iterations)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn step_policy(&self) -> StepPolicy {
        match (self.kappa, self.step) {
            (Some(k), _) => StepPolicy::Kappa(k),
            (None, StepKind::PowerIteration) => StepPolicy::PowerIteration,
            (None, StepKind::Analytic) => StepPolicy::Analytic,
        }
    }

    /// Full solver configuration; fails when `alpha` is missing.
    pub fn solver_config(&self) -> Result<SolverConfig> {
        let alpha = self.alpha.ok_or_else(|| {
            Error::Config("solver.alpha is required, e.g. `alpha = 5e-4` under [solver]".into())
        })?;
        let cfg = self.solver_config_with_alpha(alpha)?;
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Configuration with an explicit α, for commands that do not use it.
    pub fn solver_config_with_alpha(&self, alpha: f64) -> Result<SolverConfig> {
        Ok(SolverConfig {
            alpha,
            max_iterations: self.max_iterations,
            regularizer: self.regularizer()?,
            power_iterations: self.power_iterations,
            power_tolerance: self.power_tolerance,
            seed: self.seed,
            step: self.step_policy(),
            record_every: self.record_every,
            early_stop_tolerance: self.early_stop_tolerance,
            initialization: self.init,
        })
    }
}

/// Optional default paths, overridden by command-line arguments.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

// ---------------------------------------------------------------------------
// slice export

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Magnitude,
    Real,
    Imag,
    Phase,
}

impl Channel {
    pub fn apply(self, v: Complex64) -> f64 {
        match self {
            Channel::Magnitude => v.norm(),
            Channel::Real => v.re,
            Channel::Imag => v.im,
            Channel::Phase => v.arg(),
        }
    }
}

pub const GRAY_LEVELS: u16 = u16::MAX;

/// Linear map between stored gray levels and values:
/// `value = min + level · (max − min) / 65535`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceScaling {
    /// 1-based plane number.
    pub plane: usize,
    pub channel: Channel,
    pub min: f64,
    pub max: f64,
    pub levels: u16,
}

impl SliceScaling {
    pub fn value(&self, level: u16) -> f64 {
        self.min + f64::from(level) * (self.max - self.min) / f64::from(self.levels)
    }
}

/// Quantize one plane channel to 16-bit levels with min-max scaling. A
/// constant plane maps to level 0 everywhere.
pub fn quantize(values: &[f64]) -> (Vec<u16>, f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let levels = values
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - min) / range * f64::from(GRAY_LEVELS)).round() as u16
            } else {
                0
            }
        })
        .collect();
    (levels, min, max)
}

/// Binary PGM with maxval 65535 (big-endian samples), rows top to bottom.
pub fn encode_pgm(nx: usize, ny: usize, levels: &[u16]) -> Vec<u8> {
    let mut out = format!("P5\n{nx} {ny}\n{GRAY_LEVELS}\n").into_bytes();
    for l in levels {
        out.extend_from_slice(&l.to_be_bytes());
    }
    out
}

/// Inverse of [`encode_pgm`]: (nx, ny, levels).
pub fn decode_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<u16>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?.to_string());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != GRAY_LEVELS.to_string() {
        return None;
    }
    let nx: usize = fields[1].parse().ok()?;
    let ny: usize = fields[2].parse().ok()?;
    let data = bytes.get(pos..)?;
    if data.len() != 2 * nx * ny {
        return None;
    }
    let levels = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Some((nx, ny, levels))
}

/// Path of the image for a 1-based plane: `<prefix>_plane<NN>.pgm`.
pub fn slice_path(prefix: &Path, plane: usize) -> PathBuf {
    let name = prefix
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    prefix.with_file_name(format!("{name}_plane{plane:02}.pgm"))
}

/// Write one image and scaling sidecar per requested 1-based plane.
/// Returns the image paths.
pub fn export_slices(
    u: &Volume,
    planes: &[usize],
    channel: Channel,
    prefix: &Path,
) -> Result<Vec<PathBuf>> {
    let nz = u.num_planes();
    if let Some(&bad) = planes.iter().find(|&&p| p == 0 || p > nz) {
        return Err(Error::Parameter(format!("plane {bad} outside 1..={nz}")));
    }
    let (nx, ny) = (u.grid().nx(), u.grid().ny());
    let mut written = Vec::with_capacity(planes.len());
    for &p in planes {
        let values: Vec<f64> = u.plane(p - 1).iter().map(|&v| channel.apply(v)).collect();
        let (levels, min, max) = quantize(&values);
        let scaling = SliceScaling {
            plane: p,
            channel,
            min,
            max,
            levels: GRAY_LEVELS,
        };
        let image = slice_path(prefix, p);
        write_atomic(&image, &encode_pgm(nx, ny, &levels))?;
        let mut json =
            serde_json::to_string_pretty(&scaling).map_err(|e| Error::Config(e.to_string()))?;
        json.push('\n');
        write_atomic(&image.with_extension("json"), json.as_bytes())?;
        written.push(image);
    }
    Ok(written)
}

pub fn read_slice_scaling(image: &Path) -> Result<SliceScaling> {
    let path = image.with_extension("json");
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))
}
