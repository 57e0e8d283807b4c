//! `voxfilter` command-line front end.
//!
//! Every subcommand is also callable as a function so that tests can drive
//! the same code paths without spawning a process. Machine-readable output
//! is JSON; exit codes are 0 on success, 1 on runtime failure and 2 on
//! usage errors.

pub mod image;

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use voxfilter_core::filters::{FilterConfig, FilterKind};
use voxfilter_core::histogram::build_histogram;
use voxfilter_core::metrics::{
    comparison_csv, comparison_table, run_entropy_comparison, run_timing_benchmark, EntropyReport,
    TimingReport,
};
use voxfilter_core::phantom::{generate_phantom, presets, PhantomSpec};
use voxfilter_core::pgm::load_slice_stack;
use voxfilter_core::render::{render_frame, Camera, Orbit, RenderParams, DEFAULT_FOV_DEG};
use voxfilter_core::volume::{load_raw_with_sidecar, save_raw};
use voxfilter_core::Volume;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<voxfilter_core::Error> for CliError {
    fn from(e: voxfilter_core::Error) -> Self {
        use voxfilter_core::Error as E;
        match e {
            E::InvalidSpec { .. } | E::FilterConfig(_) | E::Camera(_) | E::RenderParams(_) | E::InvalidArgument(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "voxfilter", version, about = "Noise-filtered first-hit volume rendering of CT data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Generate a synthetic phantom volume (raw + .meta.json sidecar).
    Phantom(PhantomArgs),
    /// Print the Otsu threshold and class statistics of a volume as JSON.
    Otsu(OtsuArgs),
    /// Render one frame to an image plus a metadata JSON file.
    Render(RenderArgs),
    /// Render every filter, compare image entropy and frame times.
    Compare(CompareArgs),
    /// Frame-time benchmark only.
    Bench(BenchArgs),
    /// Serve the live viewer protocol over HTTP/WebSocket.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Sphere of grey 200 plus 50 isolated spot voxels of grey 255.
    Spot,
    /// Box, shell and sphere under heavy Gaussian and spot noise.
    Noisy,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Phantom description as JSON.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in phantom instead of a spec file.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Edge length for presets.
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u32).range(1..=2048))]
    pub size: u32,
    /// Output raw file; the sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Volume input: a `.raw` file with its `.meta.json` sidecar, or a
/// directory of `.pgm` slices.
#[derive(Debug, Args)]
pub struct VolumeArg {
    pub volume: PathBuf,
}

#[derive(Debug, Args)]
pub struct OtsuArgs {
    #[command(flatten)]
    pub input: VolumeArg,
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    /// Data threshold T (default: Otsu threshold of the volume).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Odd kernel edge length M.
    #[arg(long, default_value_t = 3)]
    pub kernel_size: usize,
    /// Sigma filter band in global standard deviations.
    #[arg(long, default_value_t = 2.0)]
    pub sigma_mult: f64,
    /// Okada neighbour difference threshold in grey levels.
    #[arg(long, default_value_t = 25.0)]
    pub okada_threshold: f64,
    /// Entropy filter threshold in bits.
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub entropy_threshold: f64,
    /// Per-axis offset of the diagonal clusters.
    #[arg(long, default_value_t = 1)]
    pub cluster_offset: i64,
}

impl FilterArgs {
    pub fn config(&self, kind: FilterKind) -> FilterConfig {
        FilterConfig {
            kind,
            kernel_size: self.kernel_size,
            threshold: self.threshold,
            sigma_mult: self.sigma_mult,
            okada_threshold: self.okada_threshold,
            entropy_threshold: self.entropy_threshold,
            cluster_offset: self.cluster_offset,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ViewArgs {
    /// Orbit azimuth in degrees around the z axis.
    #[arg(long, default_value_t = 35.0, allow_hyphen_values = true)]
    pub azimuth: f64,
    /// Orbit elevation in degrees above the xy plane.
    #[arg(long, default_value_t = 25.0, allow_hyphen_values = true)]
    pub elevation: f64,
    /// Camera distance from the volume center in voxels (default 2.2 x largest edge).
    #[arg(long)]
    pub distance: Option<f64>,
    /// Vertical field of view in degrees.
    #[arg(long, default_value_t = DEFAULT_FOV_DEG)]
    pub fov: f64,
    #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u32).range(1..=8192))]
    pub width: u32,
    #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u32).range(1..=8192))]
    pub height: u32,
    /// Ray-march step in voxels.
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
}

impl ViewArgs {
    pub fn camera(&self, dims: [usize; 3]) -> Camera {
        let distance = self.distance.unwrap_or(Orbit::default_for(dims).distance);
        let mut cam = Camera::orbit(
            dims,
            Orbit {
                azimuth: self.azimuth,
                elevation: self.elevation,
                distance,
            },
        );
        cam.fov_deg = self.fov;
        cam
    }

    pub fn params(&self) -> RenderParams {
        RenderParams {
            step_size: self.step,
            ..RenderParams::with_size(self.width, self.height)
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub input: VolumeArg,
    /// One of: none, mean, sigma, okada, entropy, local-cluster.
    #[arg(long, default_value = "local-cluster")]
    pub filter: FilterKind,
    #[command(flatten)]
    pub filter_args: FilterArgs,
    #[command(flatten)]
    pub view: ViewArgs,
    /// Output image (.png, or .pgm).
    #[arg(long)]
    pub out: PathBuf,
    /// Metadata JSON path (default: image path with .json extension).
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

/// Comma-separated filter list.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterList(pub Vec<FilterKind>);

fn parse_filter_list(s: &str) -> Result<FilterList, String> {
    let kinds = s
        .split(',')
        .map(|p| p.trim().parse::<FilterKind>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FilterList(kinds))
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub input: VolumeArg,
    /// Filters to time, comma separated (default: all six).
    #[arg(long, value_parser = parse_filter_list)]
    pub filters: Option<FilterList>,
    #[command(flatten)]
    pub filter_args: FilterArgs,
    #[command(flatten)]
    pub view: ViewArgs,
    /// Timed renders per filter.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    pub samples: u32,
    /// Discarded renders per filter before timing.
    #[arg(long, default_value_t = 2)]
    pub warmup: u32,
    /// Timing report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: VolumeArg,
    /// Filters to compare, comma separated (default: all six).
    #[arg(long, value_parser = parse_filter_list)]
    pub filters: Option<FilterList>,
    #[command(flatten)]
    pub filter_args: FilterArgs,
    #[command(flatten)]
    pub view: ViewArgs,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    pub samples: u32,
    #[arg(long, default_value_t = 2)]
    pub warmup: u32,
    /// Directory for report.json, report.txt, report.csv and one image per filter.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub input: VolumeArg,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Directory of viewer files served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

/// Combined output of `compare`. Everything timing-dependent sits under
/// `timing`, so dropping that key leaves a reproducible document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareReport {
    pub volume: String,
    pub camera: Camera,
    pub entropy: EntropyReport,
    pub images: Vec<String>,
    pub timing: TimingReport,
}

pub fn load_volume(path: &Path) -> CliResult<Volume> {
    if path.is_dir() {
        Ok(load_slice_stack(path)?)
    } else {
        Ok(load_raw_with_sidecar(path)?)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult {
    std::fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Output files may name directories that do not exist yet.
fn create_parent(path: &Path) -> CliResult {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => create_dir(dir),
        _ => Ok(()),
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        CliCommand::Phantom(a) => cmd_phantom(&a, out),
        CliCommand::Otsu(a) => cmd_otsu(&a, out),
        CliCommand::Render(a) => cmd_render(&a, out),
        CliCommand::Compare(a) => cmd_compare(&a, out).map(|_| ()),
        CliCommand::Bench(a) => cmd_bench(&a, out),
        CliCommand::Serve(a) => cmd_serve(&a, out),
    }
}

fn print(out: &mut dyn Write, text: impl std::fmt::Display) -> CliResult {
    writeln!(out, "{text}").map_err(|e| CliError::Runtime(format!("stdout: {e}")))
}

/// Parses a phantom spec, reporting the JSON path of any type error.
pub fn parse_phantom_spec(text: &str) -> CliResult<PhantomSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: PhantomSpec = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Usage(format!("invalid phantom spec at `{}`: {}", e.path(), e.inner())))?;
    spec.validate()?;
    Ok(spec)
}

pub fn cmd_phantom(a: &PhantomArgs, out: &mut dyn Write) -> CliResult {
    let spec = match (&a.spec, a.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            parse_phantom_spec(&text)?
        }
        (None, Some(Preset::Spot)) => presets::spot_phantom(a.size as usize),
        (None, Some(Preset::Noisy)) => presets::noisy_phantom(a.size as usize),
        _ => return Err(CliError::Usage("give exactly one of --spec or --preset".into())),
    };
    let volume = generate_phantom(&spec)?;
    let source = match (&a.spec, a.preset) {
        (Some(p), _) => format!("phantom spec {}", p.display()),
        (_, Some(p)) => format!("phantom preset {p:?} {}", a.size).to_lowercase(),
        _ => unreachable!(),
    };
    create_parent(&a.out)?;
    let sidecar = save_raw(&volume, &a.out, &source)?;
    print(
        out,
        serde_json::json!({
            "volume": a.out,
            "meta": sidecar,
            "dims": volume.dims(),
            "hash": volume.identity_hash(),
        }),
    )
}

pub fn cmd_otsu(a: &OtsuArgs, out: &mut dyn Write) -> CliResult {
    let volume = load_volume(&a.input.volume)?;
    let h = build_histogram(&volume)?;
    let t = h.otsu_threshold();
    print(
        out,
        serde_json::to_string_pretty(&serde_json::json!({
            "volume_hash": volume.identity_hash(),
            "threshold": t,
            "mean": h.mean(),
            "global_sigma": h.global_sigma(),
            "split": h.split(t),
        }))
        .expect("serializes"),
    )
}

pub fn cmd_render(a: &RenderArgs, out: &mut dyn Write) -> CliResult {
    let config = a.filter_args.config(a.filter);
    config.validate()?;
    let params = a.view.params();
    params.validate()?;
    let volume = load_volume(&a.input.volume)?;
    let camera = a.view.camera(volume.dims());
    camera.basis()?;
    let h = build_histogram(&volume)?;
    let frame = render_frame(&volume, &camera, &params, &config, Some(&h))?;
    create_parent(&a.out)?;
    image::write_grey(&a.out, frame.width, frame.height, &frame.pixels)?;
    let meta_path = a.meta.clone().unwrap_or_else(|| a.out.with_extension("json"));
    create_parent(&meta_path)?;
    let meta = frame.metadata(&volume.identity_hash());
    write_json(&meta_path, &meta)?;
    print(
        out,
        serde_json::json!({
            "image": a.out,
            "meta": meta_path,
            "threshold": frame.snapshot.threshold,
            "hit_pixels": frame.stats.hit_pixels,
            "total_ms": frame.timing.total_ms,
        }),
    )
}

fn selected_filters(kinds: &Option<FilterList>, args: &FilterArgs) -> Vec<FilterConfig> {
    kinds
        .as_ref()
        .map_or_else(|| FilterKind::ALL.to_vec(), |l| l.0.clone())
        .into_iter()
        .map(|k| args.config(k))
        .collect()
}

fn check_inputs(filters: &[FilterConfig], view: &ViewArgs) -> CliResult<RenderParams> {
    for f in filters {
        f.validate()?;
    }
    let params = view.params();
    params.validate()?;
    Ok(params)
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let filters = selected_filters(&a.filters, &a.filter_args);
    let params = check_inputs(&filters, &a.view)?;
    let volume = load_volume(&a.input.volume)?;
    let camera = a.view.camera(volume.dims());
    camera.basis()?;
    let h = build_histogram(&volume)?;
    let report = run_timing_benchmark(&volume, &h, &camera, &params, &filters, a.samples, a.warmup)?;
    create_parent(&a.out)?;
    write_json(&a.out, &report)?;
    print(out, comparison_table(None, Some(&report)))
}

/// Image file name used by `compare` for a filter.
pub fn frame_file_name(kind: FilterKind) -> String {
    format!("frame-{}.png", kind.name())
}

pub fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> CliResult<CompareReport> {
    let filters = selected_filters(&a.filters, &a.filter_args);
    let params = check_inputs(&filters, &a.view)?;
    let volume = load_volume(&a.input.volume)?;
    let camera = a.view.camera(volume.dims());
    camera.basis()?;
    let h = build_histogram(&volume)?;
    create_dir(&a.out_dir)?;

    let (entropy, frames) = run_entropy_comparison(&volume, &h, &camera, &params, &filters)?;
    let mut images = Vec::with_capacity(frames.len());
    for frame in &frames {
        let name = frame_file_name(frame.snapshot.filter.kind);
        image::write_grey(&a.out_dir.join(&name), frame.width, frame.height, &frame.pixels)?;
        images.push(name);
    }
    let timing = run_timing_benchmark(&volume, &h, &camera, &params, &filters, a.samples, a.warmup)?;

    let report = CompareReport {
        volume: volume.identity_hash(),
        camera,
        entropy,
        images,
        timing,
    };
    write_json(&a.out_dir.join("report.json"), &report)?;
    let table = comparison_table(Some(&report.entropy), Some(&report.timing));
    std::fs::write(a.out_dir.join("report.txt"), &table)
        .and_then(|()| {
            std::fs::write(
                a.out_dir.join("report.csv"),
                comparison_csv(Some(&report.entropy), Some(&report.timing)),
            )
        })
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.out_dir.display())))?;
    print(out, &table)?;
    Ok(report)
}

pub fn cmd_serve(a: &ServeArgs, out: &mut dyn Write) -> CliResult {
    let volume = load_volume(&a.input.volume)?;
    let app = voxfilter_service::AppState::new(volume).map_err(|e| CliError::Runtime(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
    runtime.block_on(async {
        let listener = voxfilter_service::bind(SocketAddr::new(a.host, a.port))
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let addr = listener.local_addr().map_err(|e| CliError::Runtime(e.to_string()))?;
        print(out, format!("listening on http://{addr}"))?;
        out.flush().ok();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        voxfilter_service::serve(listener, app, a.static_dir.clone(), shutdown)
            .await
            .map_err(|e| CliError::Runtime(e.to_string()))
    })
}
