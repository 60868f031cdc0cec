//! Command-line surface tying the pipeline together: shape synthesis,
//! volume rendering, iso-surface extraction, mesh refinement, and metrics.
//!
//! Exit codes: 0 success, 2 usage error, 1 data error.

use clap::{Args, Parser, Subcommand};
use invrend::camera::Camera;
use invrend::eval;
use invrend::fixtures::{self, Shape};
use invrend::grid::{FeatureGrid, OccupancyGrid, SemiImplicitVolume};
use invrend::io;
use invrend::refine::{refine, RefineConfig};
use invrend::volren::{render_view, RaySampleSpec};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "invrend", version, about = "Differentiable volume/mesh rendering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy, Debug)]
struct CameraArgs {
    /// Azimuth in degrees.
    #[arg(long, default_value_t = 0.0)]
    az: f64,
    /// Elevation in degrees, strictly between -90 and 90.
    #[arg(long, default_value_t = 0.0, value_parser = parse_elevation)]
    el: f64,
    /// Camera distance from the origin; must exceed sqrt(3) so the camera
    /// stays outside the canonical cube.
    #[arg(long, default_value_t = 2.5, value_parser = parse_distance)]
    dist: f64,
    /// Vertical field of view in degrees, in (0, 180).
    #[arg(long, default_value_t = 30.0, value_parser = parse_fov)]
    fov: f64,
    /// Image size as WxH.
    #[arg(long, default_value = "64x64", value_parser = parse_size)]
    size: (usize, usize),
}

fn parse_elevation(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad elevation {s:?}"))?;
    if v > -90.0 && v < 90.0 {
        Ok(v)
    } else {
        Err(format!("elevation must be in (-90, 90), got {v}"))
    }
}

fn parse_distance(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad distance {s:?}"))?;
    if v > 3f64.sqrt() {
        Ok(v)
    } else {
        Err(format!("distance must exceed sqrt(3) ~ 1.732, got {v}"))
    }
}

fn parse_fov(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad field of view {s:?}"))?;
    if v > 0.0 && v < 180.0 {
        Ok(v)
    } else {
        Err(format!("fov must be in (0, 180), got {v}"))
    }
}

impl CameraArgs {
    fn build(&self) -> anyhow::Result<Camera<f64>> {
        Ok(Camera::new(
            self.az.to_radians(),
            self.el.to_radians(),
            self.dist,
            self.fov.to_radians(),
            self.size.0,
            self.size.1,
        )?)
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    if w == 0 || h == 0 {
        return Err("image dimensions must be >= 1".into());
    }
    Ok((w, h))
}

fn parse_iso(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad iso value {s:?}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("iso must be in (0,1), got {v}"))
    }
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| format!("bad threshold {s:?}"))
}

fn parse_kind(s: &str) -> Result<Shape, String> {
    Shape::parse(s).ok_or_else(|| {
        format!("unknown shape kind {s:?} (sphere, box, cylinder, torus, box-plus-bump, chair-proxy)")
    })
}

fn parse_steps(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|_| format!("bad step count {s:?}"))?;
    if v == 0 {
        return Err("step counts must be >= 1".into());
    }
    Ok(v)
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural shape: mesh, occupancy voxels, color voxels.
    Synth {
        /// One of: sphere, box, cylinder, torus, box-plus-bump, chair-proxy.
        #[arg(long, value_parser = parse_kind)]
        kind: Shape,
        /// Output prefix; writes `<prefix>.obj`, `<prefix>.vox`, `<prefix>.rgb.vox`.
        #[arg(long)]
        out_prefix: PathBuf,
        /// Voxelization resolution.
        #[arg(long, default_value_t = 32)]
        res: usize,
    },
    /// Render an occupancy (+ optional color) volume to an image and mask.
    RenderVolume {
        occupancy: PathBuf,
        /// Color feature voxels (3 channels); 0.5 gray when absent.
        #[arg(long)]
        color: Option<PathBuf>,
        /// Ray sample count.
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        out_image: PathBuf,
        #[arg(long)]
        out_mask: PathBuf,
        #[command(flatten)]
        camera: CameraArgs,
    },
    /// Extract an iso-surface mesh from occupancy voxels.
    Extract {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 0.5, value_parser = parse_iso)]
        iso: f64,
    },
    /// Refine a mesh against a target image/mask pair.
    Refine {
        mesh: PathBuf,
        image: PathBuf,
        mask: PathBuf,
        /// JSON config; missing keys take module defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_obj: PathBuf,
        /// Per-step loss trace CSV.
        #[arg(long)]
        out_trace: Option<PathBuf>,
        #[command(flatten)]
        camera: CameraArgs,
    },
    /// Voxel IoU of two grids, binarized at the given thresholds.
    EvalIou {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        tau_a: f64,
        #[arg(long, default_value_t = 0.5)]
        tau_b: f64,
    },
    /// Surface F-score between two meshes at a distance threshold.
    EvalFscore {
        pred: PathBuf,
        gt: PathBuf,
        /// Distance threshold; defaults to two voxel widths at 32^3.
        #[arg(long, default_value_t = 0.125)]
        tau: f64,
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exhaustive rotation/threshold alignment of a grid onto a reference.
    Align {
        pred: PathBuf,
        gt: PathBuf,
        /// Number of azimuth steps over [0, 360).
        #[arg(long, default_value_t = 36, value_parser = parse_steps)]
        az_steps: usize,
        /// Number of elevation steps over [-60, 60] degrees (1 = only 0).
        #[arg(long, default_value_t = 1, value_parser = parse_steps)]
        el_steps: usize,
        #[arg(long, default_value = "0.5", value_delimiter = ',', value_parser = parse_threshold)]
        thresholds: Vec<f64>,
    },
}

/// Pipeline options accepted as JSON. `D`, `iso` and `seed` belong to the
/// shared schema; the refine subcommand ignores them.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct ConfigFile {
    #[serde(rename = "D")]
    d: Option<usize>,
    iso: Option<f64>,
    #[serde(rename = "K")]
    k: Option<usize>,
    inner_steps: Option<usize>,
    step_size: Option<f64>,
    lambda_rgb: Option<f64>,
    lambda_mask: Option<f64>,
    lambda_disp: Option<f64>,
    lambda_lap: Option<f64>,
    sigma: Option<f64>,
    gamma: Option<f64>,
    optimize_pose: Option<bool>,
    seed: Option<u64>,
}

impl ConfigFile {
    fn load(path: Option<&PathBuf>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }

    fn refine_config(&self) -> RefineConfig<f64> {
        let mut cfg = RefineConfig::default();
        if let Some(k) = self.k {
            cfg.outer_iterations = k;
        }
        if let Some(n) = self.inner_steps {
            cfg.inner_steps = n;
        }
        if let Some(s) = self.step_size {
            cfg.step_size = s;
        }
        if let Some(w) = self.lambda_rgb {
            cfg.lambda_rgb = w;
        }
        if let Some(w) = self.lambda_mask {
            cfg.lambda_mask = w;
        }
        if let Some(w) = self.lambda_disp {
            cfg.lambda_disp = w;
        }
        if let Some(w) = self.lambda_lap {
            cfg.lambda_laplacian = w;
        }
        if let Some(s) = self.sigma {
            cfg.raster.sigma = s;
        }
        if let Some(g) = self.gamma {
            cfg.raster.gamma = g;
        }
        if let Some(p) = self.optimize_pose {
            cfg.optimize_pose = p;
        }
        cfg
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth {
            kind,
            out_prefix,
            res,
        } => {
            let mesh = fixtures::make_shape::<f64>(&kind)?;
            let occupancy = eval::voxelize(&mesh, res)?;
            let color = FeatureGrid::<f64>::from_color_fn(res, fixtures::procedural_color)?;
            let prefix = out_prefix.to_string_lossy();
            io::write_obj(format!("{prefix}.obj"), &mesh)?;
            io::write_vox(format!("{prefix}.vox"), &io::VoxData::from_occupancy(&occupancy))?;
            io::write_vox(
                format!("{prefix}.rgb.vox"),
                &io::VoxData::from_feature(&color),
            )?;
            println!(
                "{}",
                serde_json::json!({
                    "mesh": format!("{prefix}.obj"),
                    "occupancy": format!("{prefix}.vox"),
                    "color": format!("{prefix}.rgb.vox"),
                    "vertices": mesh.vertex_count(),
                    "faces": mesh.face_count(),
                })
            );
        }
        Command::RenderVolume {
            occupancy,
            color,
            samples,
            out_image,
            out_mask,
            camera,
        } => {
            let cam = camera.build()?;
            let occ: OccupancyGrid<f64> = io::read_vox(&occupancy)?.into_occupancy()?;
            let feat: FeatureGrid<f64> = match color {
                Some(path) => io::read_vox(&path)?.into_feature()?,
                None => FeatureGrid::constant(occ.resolution(), 3, 0.5)?,
            };
            let volume = SemiImplicitVolume::new(occ, feat);
            let spec = RaySampleSpec {
                count: samples,
                ..RaySampleSpec::for_camera(&cam)
            };
            let (image, mask) = render_view(&volume, &cam, &spec)?;
            io::write_image(&out_image, &image)?;
            io::write_mask(&out_mask, &mask)?;
        }
        Command::Extract { input, output, iso } => {
            let occ: OccupancyGrid<f64> = io::read_vox(&input)?.into_occupancy()?;
            let mesh = invrend::meshex::extract_mesh(&occ, iso)?;
            io::write_obj(&output, &mesh)?;
            println!(
                "{}",
                serde_json::json!({
                    "vertices": mesh.vertex_count(),
                    "faces": mesh.face_count(),
                })
            );
        }
        Command::Refine {
            mesh,
            image,
            mask,
            config,
            out_obj,
            out_trace,
            camera,
        } => {
            let cam = camera.build()?;
            let init: invrend::TexturedMesh<f64> = io::read_obj(&mesh)?;
            let target_image = io::read_image(&image)?;
            let target_mask = io::read_mask(&mask)?;
            let file = ConfigFile::load(config.as_ref())?;
            let cfg = file.refine_config();
            let (refined, out_cam, trace) =
                refine(&init, &cam, &target_image, &target_mask, &cfg)?;
            io::write_obj(&out_obj, &refined)?;
            if let Some(path) = out_trace {
                let mut csv = String::from("iteration,l_rgb,l_mask,l_disp,l_lap,total\n");
                for row in &trace.rows {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        row.step, row.rgb, row.mask, row.displacement, row.laplacian, row.total
                    ));
                }
                std::fs::write(path, csv)?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "initial_total": trace.first_total(),
                    "final_total": trace.last_total(),
                    "azimuth_deg": out_cam.azimuth.to_degrees(),
                    "elevation_deg": out_cam.elevation.to_degrees(),
                })
            );
        }
        Command::EvalIou { a, b, tau_a, tau_b } => {
            let ga: OccupancyGrid<f64> = io::read_vox(&a)?.into_occupancy()?;
            let gb: OccupancyGrid<f64> = io::read_vox(&b)?.into_occupancy()?;
            let iou = eval::iou3d(&ga, &gb, tau_a, tau_b)?;
            println!("{}", serde_json::json!({ "iou": iou }));
        }
        Command::EvalFscore {
            pred,
            gt,
            tau,
            points,
            seed,
        } => {
            let mp: invrend::TexturedMesh<f64> = io::read_obj(&pred)?;
            let mg: invrend::TexturedMesh<f64> = io::read_obj(&gt)?;
            let pp = eval::sample_surface(&mp, points, seed)?;
            let pg = eval::sample_surface(&mg, points, seed.wrapping_add(1))?;
            let (precision, recall, f) = eval::fscore(&pp, &pg, tau)?;
            println!(
                "{}",
                serde_json::json!({
                    "precision": precision,
                    "recall": recall,
                    "fscore": f,
                })
            );
        }
        Command::Align {
            pred,
            gt,
            az_steps,
            el_steps,
            thresholds,
        } => {
            let gp: OccupancyGrid<f64> = io::read_vox(&pred)?.into_occupancy()?;
            let gg: OccupancyGrid<f64> = io::read_vox(&gt)?.into_occupancy()?;
            let azimuths: Vec<f64> = (0..az_steps)
                .map(|k| std::f64::consts::TAU * k as f64 / az_steps as f64)
                .collect();
            let elevations: Vec<f64> = if el_steps == 1 {
                vec![0.0]
            } else {
                let lim = 60f64.to_radians();
                (0..el_steps)
                    .map(|k| -lim + 2.0 * lim * k as f64 / (el_steps - 1) as f64)
                    .collect()
            };
            let best = eval::align_search(&gp, &gg, &azimuths, &elevations, &thresholds)?;
            println!(
                "{}",
                serde_json::json!({
                    "azimuth_deg": best.azimuth.to_degrees(),
                    "elevation_deg": best.elevation.to_degrees(),
                    "threshold": best.threshold,
                    "iou": best.iou,
                })
            );
        }
    }
    Ok(())
}
