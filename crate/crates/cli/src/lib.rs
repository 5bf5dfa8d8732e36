//! `omniview` command line: batch projection, colorization, benchmarking,
//! synthetic rendering and the streaming service.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 I/O failure.

pub mod benchmark;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand};
use omniview_core::{
    build_projection_map, calibration, colorize, ply, remap, CameraRig, ColorizeOptions, ImageFrame, ProjectionMap,
    ProjectionSpec,
};
use omniview_oracle::{reference_view, render_rig, Scene};
use omniview_service::{ServiceConfig, ServiceError, SourceConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Port used by `serve` when neither `--port` nor `OMNIVIEW_PORT` is given.
pub const DEFAULT_PORT: u16 = 8080;
pub const PORT_ENV: &str = "OMNIVIEW_PORT";

#[derive(Debug, Parser)]
#[command(name = "omniview", version, about = "Virtual views and Lidar coloring from calibrated camera rigs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Remap one set of camera images into a virtual view.
    Project(ProjectArgs),
    /// Color a Lidar scan from one set of camera images.
    Colorize(ColorizeArgs),
    /// Time map builds and map operations over the standard resolution grid.
    Benchmark(BenchmarkArgs),
    /// Ray-cast a scene through the rig, writing one PNG per camera.
    RenderSynthetic(RenderArgs),
    /// Serve live views over HTTP, MJPEG and WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, clap::Args)]
pub struct ProjectArgs {
    /// Camera rig calibration (JSON).
    #[arg(long)]
    pub rig: PathBuf,
    /// Projection spec of the virtual view (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Directory holding `<camera>.png` for every rig camera.
    #[arg(long)]
    pub images: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
    /// Lookup table cache. Reused when it matches the rig and spec,
    /// otherwise rebuilt and rewritten.
    #[arg(long)]
    pub lut_cache: Option<PathBuf>,
    /// Color for pixels no camera sees, as R,G,B.
    #[arg(long, value_parser = parse_rgb, default_value = "0,0,0")]
    pub fill: [u8; 3],
}

#[derive(Debug, clap::Args)]
pub struct ColorizeArgs {
    /// Camera rig calibration (JSON); must carry a Lidar extrinsic.
    #[arg(long)]
    pub rig: PathBuf,
    /// Directory holding `<camera>.png` for every rig camera.
    #[arg(long)]
    pub images: PathBuf,
    /// Input scan (PLY).
    #[arg(long)]
    pub cloud: PathBuf,
    /// Output colored scan (ASCII PLY).
    #[arg(long)]
    pub out: PathBuf,
    /// Exclusion boxes (JSON); points hidden behind them get the fill color.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    /// Color for points no camera sees, as R,G,B.
    #[arg(long, value_parser = parse_rgb, default_value = "128,128,128")]
    pub fill: [u8; 3],
}

#[derive(Debug, clap::Args)]
pub struct BenchmarkArgs {
    /// Camera rig calibration (JSON).
    #[arg(long)]
    pub rig: PathBuf,
    /// Projection spec whose surface parameters and pose seed the grid.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Timed repetitions per row (at least 10).
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory with `<camera>.png` images to remap; generated when absent.
    #[arg(long)]
    pub images: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct RenderArgs {
    /// Scene description (JSON).
    #[arg(long)]
    pub scene: PathBuf,
    /// Camera rig calibration (JSON).
    #[arg(long)]
    pub rig: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also ray-cast this virtual view directly into `reference.png`.
    #[arg(long)]
    pub reference_spec: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
#[command(group(ArgGroup::new("input").required(true).args(["source", "scene"])))]
pub struct ServeArgs {
    /// Camera rig calibration (JSON).
    #[arg(long)]
    pub rig: PathBuf,
    /// Comma-separated projection specs; each file stem becomes a view id.
    #[arg(long, value_delimiter = ',', required = true)]
    pub specs: Vec<PathBuf>,
    /// Recorded frames: `<camera>/<timestamp_ns>.png`, optional `lidar/<timestamp_ns>.ply`.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Render this scene through the rig instead of reading recordings.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Listening port (0 picks a free one). OMNIVIEW_PORT takes precedence.
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    /// Listening address.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Source frame sets per second; 0 advances only on POST /source/advance.
    #[arg(long, default_value_t = 10.0)]
    pub fps: f64,
    /// Restart recorded sources from the beginning when exhausted.
    #[arg(long = "loop")]
    pub looping: bool,
    /// Exclusion boxes (JSON) for the colored scan.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    /// JPEG quality of streamed frames (1-100).
    #[arg(long, default_value_t = omniview_service::DEFAULT_JPEG_QUALITY,
          value_parser = clap::value_parser!(u8).range(1..=100))]
    pub jpeg_quality: u8,
}

fn parse_rgb(s: &str) -> Result<[u8; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected R,G,B, got `{s}`"));
    }
    let mut out = [0u8; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("`{p}` is not in 0..=255"))?;
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] omniview_core::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Core(e) if e.is_io() => EXIT_IO,
            CliError::Core(_) => EXIT_INVALID,
            CliError::Service(ServiceError::Bind { .. } | ServiceError::Io(_)) => EXIT_IO,
            CliError::Service(ServiceError::Core(e) | ServiceError::View { source: e, .. }) if e.is_io() => EXIT_IO,
            CliError::Service(_) => EXIT_INVALID,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Project(a) => project(a),
        Command::Colorize(a) => colorize_cmd(a),
        Command::Benchmark(a) => benchmark_cmd(a),
        Command::RenderSynthetic(a) => render_synthetic(a),
        Command::Serve(a) => serve(a),
    }
}

/// Loads `<dir>/<camera>.png` for every camera, in rig order. A missing
/// file is an input error naming the camera; everything is checked before
/// any image is decoded.
pub fn load_camera_images(rig: &CameraRig, dir: &Path, timestamp_ns: u64) -> Result<Vec<ImageFrame>, CliError> {
    let paths: Vec<PathBuf> = rig.cameras.iter().map(|c| dir.join(format!("{}.png", c.name))).collect();
    let missing: Vec<&str> = rig
        .cameras
        .iter()
        .zip(&paths)
        .filter(|(_, p)| !p.is_file())
        .map(|(c, _)| c.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Invalid(format!(
            "no image for camera {} in {}",
            missing.iter().map(|n| format!("`{n}`")).collect::<Vec<_>>().join(", "),
            dir.display()
        )));
    }
    rig.cameras
        .iter()
        .zip(paths)
        .map(|(c, p)| Ok(ImageFrame::load_png(p)?.with_camera(&c.name).with_timestamp(timestamp_ns)))
        .collect()
}

fn map_with_cache(rig: &CameraRig, spec: &ProjectionSpec, cache: Option<&Path>) -> Result<ProjectionMap, CliError> {
    let Some(path) = cache else {
        return Ok(build_projection_map(rig, spec)?);
    };
    match File::open(path) {
        Ok(f) => match ProjectionMap::read_lut(std::io::BufReader::new(f), rig, spec) {
            Ok(map) => {
                log::info!("reusing lookup table {}", path.display());
                return Ok(map);
            }
            Err(e) => log::warn!("{}: {e}; rebuilding", path.display()),
        },
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(path)(e)),
    }
    let map = build_projection_map(rig, spec)?;
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    map.write_lut(&mut w).and_then(|_| w.flush()).map_err(io_err(path))?;
    Ok(map)
}

fn project(a: ProjectArgs) -> Result<(), CliError> {
    let rig = calibration::load_rig(&a.rig)?;
    let spec = calibration::load_projection_spec(&a.spec)?;
    let frames = load_camera_images(&rig, &a.images, 0)?;
    let map = map_with_cache(&rig, &spec, a.lut_cache.as_deref())?;
    let out = remap(&map, &frames, a.fill)?;
    if map.none_count() > 0 {
        log::info!("{} of {} pixels unseen", map.none_count(), map.entries.len());
    }
    out.save_png(&a.out)?;
    Ok(())
}

fn colorize_cmd(a: ColorizeArgs) -> Result<(), CliError> {
    let rig = calibration::load_rig(&a.rig)?;
    let Some(lidar) = rig.lidar_extrinsic.clone() else {
        return Err(CliError::Invalid(format!(
            "{}: rig has no lidar_extrinsic",
            a.rig.display()
        )));
    };
    let cloud = ply::load_cloud(&a.cloud)?;
    // A single image set is taken to be synchronous with the scan.
    let frames = load_camera_images(&rig, &a.images, cloud.timestamp_ns)?;
    let volumes = match &a.exclusions {
        Some(p) => calibration::load_exclusions(p, &rig.reference_frame)?,
        None => Vec::new(),
    };
    let opts = ColorizeOptions {
        fill: a.fill,
        ..ColorizeOptions::default()
    };
    let colored = colorize(&rig, &frames, &lidar, &cloud, &volumes, &opts)?;
    ply::save_colored_cloud(&a.out, &colored)?;
    Ok(())
}

fn benchmark_cmd(a: BenchmarkArgs) -> Result<(), CliError> {
    if a.iterations < benchmark::MIN_ITERATIONS {
        return Err(CliError::Invalid(format!(
            "--iterations must be at least {}, got {}",
            benchmark::MIN_ITERATIONS,
            a.iterations
        )));
    }
    let rig = calibration::load_rig(&a.rig)?;
    let base = match &a.spec {
        Some(p) => calibration::load_projection_spec(p)?,
        None => ProjectionSpec::new(
            omniview_core::Surface::Perspective(omniview_core::PerspectiveParams {
                focal_length: 1.0,
                hfov: 130f64.to_radians(),
            }),
            512,
            256,
            omniview_core::Pose::identity(&rig.reference_frame, "view"),
        ),
    };
    let frames = match &a.images {
        Some(dir) => load_camera_images(&rig, dir, 0)?,
        None => benchmark::placeholder_frames(&rig),
    };
    let report = benchmark::run(&rig, &benchmark::standard_grid(&base), &frames, a.iterations)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&a.out, text + "\n").map_err(io_err(&a.out))?;
    Ok(())
}

fn render_synthetic(a: RenderArgs) -> Result<(), CliError> {
    let scene = Scene::load(&a.scene)?;
    let rig = calibration::load_rig(&a.rig)?;
    let reference = match &a.reference_spec {
        Some(p) => Some(calibration::load_projection_spec(p)?),
        None => None,
    };
    let frames = render_rig(&scene, &rig, 0)?;
    std::fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    for f in &frames {
        f.save_png(a.out.join(format!("{}.png", f.camera_name)))?;
    }
    if let Some(spec) = reference {
        reference_view(&scene, &spec)?.save_png(a.out.join("reference.png"))?;
    }
    Ok(())
}

/// View id for a spec file: its stem.
fn view_id(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .ok_or_else(|| CliError::Invalid(format!("{}: cannot derive a view id", path.display())))
}

fn port_from_env(flag: u16) -> Result<u16, CliError> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("{PORT_ENV}=`{v}` is not a port number"))),
        Err(_) => Ok(flag),
    }
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    if !(a.fps >= 0.0 && a.fps.is_finite()) {
        return Err(CliError::Invalid(format!("--fps must be a finite non-negative number, got {}", a.fps)));
    }
    let rig = calibration::load_rig(&a.rig)?;
    let mut views = Vec::with_capacity(a.specs.len());
    for p in &a.specs {
        views.push((view_id(p)?, calibration::load_projection_spec(p)?));
    }
    let source = match (&a.source, &a.scene) {
        (Some(dir), _) => SourceConfig::Recorded {
            dir: dir.clone(),
            looping: a.looping,
        },
        (None, Some(scene)) => SourceConfig::Synthetic {
            scene: Scene::load(scene)?,
            period_ns: if a.fps > 0.0 { (1e9 / a.fps) as u64 } else { 100_000_000 },
        },
        (None, None) => unreachable!("clap requires one input"),
    };
    let exclusions = match &a.exclusions {
        Some(p) => calibration::load_exclusions(p, &rig.reference_frame)?,
        None => Vec::new(),
    };
    let mut config = ServiceConfig::new(rig, views, source);
    config.fps = a.fps;
    config.exclusions = exclusions;
    config.jpeg_quality = a.jpeg_quality;
    let addr = SocketAddr::new(a.host, port_from_env(a.port)?);

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io {
            path: PathBuf::from("<runtime>"),
            source: e,
        })?;
    runtime.block_on(async move {
        let service = omniview_service::start(config, addr).await?;
        println!("listening on http://{}", service.addr);
        std::io::stdout().flush().ok();
        tokio::select! {
            r = service.wait() => r.map_err(ServiceError::Io)?,
            _ = tokio::signal::ctrl_c() => log::info!("interrupted"),
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn rgb_parsing() {
        assert_eq!(parse_rgb("1, 2,3"), Ok([1, 2, 3]));
        assert!(parse_rgb("1,2").is_err());
        assert!(parse_rgb("1,2,256").is_err());
    }

    #[test]
    fn view_ids_are_file_stems() {
        assert_eq!(view_id(Path::new("a/front.json")).unwrap(), "front");
        assert!(view_id(Path::new("/")).is_err());
    }
}
