//! Command-line surface: nine subcommands covering registration,
//! deviation analysis, metrics, grid projection, dosage arithmetic,
//! modulus fitting, voxel slicing, compensation and the combined report.
//!
//! Exit codes: 0 success, 2 completed but not converged, 64 usage,
//! 65 malformed data, 70 internal numerical failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use prismetric_core::dosage::PowderSpec;
use prismetric_core::mechanics::{
    compression_stress_strain, fit_young_modulus,BendingSetup, CompressionSetup, FitConfig,
    LoadRecord,
};
use prismetric_core::projection::DEFAULT_NORMAL_FILTER_DEG;
use prismetric_core::register::{IcpConfig, IcpResult, RegisterError};
use prismetric_core::sample::downsample_random;
use prismetric_core::register::apply_transform;
use prismetric_core::voxel::{
    compensate, export_instructions, voxelize, voxelize_bounding, CompensationPolicy, VoxelModel,
};
use prismetric_core::{FaceLabel, Point3, PointCloud, ReferencePrism, Vector3};
use prismetric::cloud::write_xyz;
use prismetric::gridcsv::{read_grid_csv, write_grid_csv};
use prismetric::jsonio::{
    read_json, write_json, AlignJson, MechJson, MetricsJson, PolicyJson, TransformJson, VoxelJson,
};
use prismetric::records::{read_deviation_csv, read_dosage_csv, write_deviation_csv};
use prismetric::report::{
    face_stats_csv, fit_bending_file, mech_csv, mech_groups, read_scan, resolve_mech,
    resolve_scans, run_report, wc_csv, wc_rows, MechOptions, MechSpecimen, PipelineConfig,
    PipelineError, Reference, ReportJob,
};
use prismetric::stl::read_stl;
use prismetric::{fmt_fixed, FileError};

#[derive(Parser)]
#[command(
    name = "prismetric",
    version,
    about = "Dimensional quality control for voxelised concrete printing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a scan onto the reference geometry
    Align(AlignCmd),
    /// Signed deviation field of a registered scan
    Deviate(DeviateCmd),
    /// Hausdorff, Chamfer and print-accuracy metrics
    Metrics(MetricsCmd),
    /// Project deviations onto per-face grids
    Project(ProjectCmd),
    /// Water-to-cement estimates from a dosage table
    Wc(WcCmd),
    /// Elastic modulus fits from load-displacement curves
    Mech(MechCmd),
    /// Voxelize a mesh and emit printer instructions
    Slice(SliceCmd),
    /// Deviation-driven voxel compensation
    Compensate(CompensateCmd),
    /// Full report bundle over scans, dosages and curves
    Report(ReportCmd),
}

#[derive(Args)]
struct CommonOpts {
    /// Seed for all randomised sampling
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Fixed decimal places in text artifacts
    #[arg(long, default_value_t = 4)]
    decimals: usize,
}

#[derive(Args)]
struct RefOpts {
    /// Reference prism dimensions in mm, e.g. 159.6x39.9x39.9
    #[arg(long, value_name = "LxWxH", conflicts_with = "reference_stl")]
    reference_dims: Option<String>,
    /// Reference mesh file; its bounding box becomes the prism spec
    #[arg(long, value_name = "PATH")]
    reference_stl: Option<PathBuf>,
    /// Random reference surface samples (the 8 corners are always added)
    #[arg(long, default_value_t = 1000)]
    reference_samples: usize,
}

impl RefOpts {
    fn build(&self, seed: u64) -> Result<Reference, PipelineError> {
        if let Some(path) = &self.reference_stl {
            return Reference::from_stl(path, self.reference_samples, seed);
        }
        let prism = match &self.reference_dims {
            Some(spec) => {
                let dims = parse_dims(spec).map_err(PipelineError::Usage)?;
                ReferencePrism::new(dims, Point3::origin())
                    .map_err(|e| PipelineError::Usage(e.to_string()))?
            }
            None => ReferencePrism::standard(),
        };
        Ok(Reference::from_prism(prism, self.reference_samples, seed))
    }
}

fn parse_dims(spec: &str) -> Result<Vector3, String> {
    let parts: Vec<&str> = spec.split(['x', 'X']).collect();
    if parts.len() != 3 {
        return Err(format!("'{spec}': expected LxWxH, e.g. 159.6x39.9x39.9"));
    }
    let mut dims = [0.0f64; 3];
    for (slot, part) in dims.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v > 0.0)
            .ok_or_else(|| format!("'{part}' is not a positive length"))?;
    }
    Ok(Vector3::new(dims[0], dims[1], dims[2]))
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("'{other}': expected 'on' or 'off'")),
    }
}

#[derive(Args)]
struct IcpOpts {
    /// Scan points kept after random downsampling
    #[arg(long, default_value_t = 50_000)]
    downsample: usize,
    /// Iteration cap for the registration loop
    #[arg(long, default_value_t = 100)]
    icp_max_iter: usize,
    /// Stop when the mean-squared-error change drops below this (mm²)
    #[arg(long, default_value_t = 1e-5)]
    icp_tol: f64,
}

#[derive(Args)]
struct GridOpts {
    /// Face grid node spacing in mm
    #[arg(long, default_value_t = 1.0)]
    grid_spacing: f64,
    /// Restrict grid sources to scan normals within 45 deg of the face
    #[arg(long, value_parser = parse_on_off, default_value = "on")]
    normal_filter: bool,
}

fn pipeline_config(common: &CommonOpts, reference: &RefOpts, icp: &IcpOpts, grid: Option<&GridOpts>) -> PipelineConfig {
    PipelineConfig {
        seed: common.seed,
        downsample: icp.downsample,
        reference_samples: reference.reference_samples,
        icp: IcpConfig {
            max_iterations: icp.icp_max_iter,
            cost_change_tolerance: icp.icp_tol,
        },
        grid_spacing_mm: grid.map_or(1.0, |g| g.grid_spacing),
        normal_filter_deg: match grid {
            Some(g) if !g.normal_filter => None,
            _ => Some(DEFAULT_NORMAL_FILTER_DEG),
        },
        decimals: common.decimals,
    }
}

// ---- subcommand argument structs --------------------------------------

#[derive(Args)]
struct AlignCmd {
    /// Scan file (.stl/.xyz/.txt) or directory of scans
    #[arg(long)]
    scan: PathBuf,
    #[command(flatten)]
    reference: RefOpts,
    #[command(flatten)]
    icp: IcpOpts,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct DeviateCmd {
    #[arg(long)]
    scan: PathBuf,
    /// Apply this transform JSON instead of running registration
    #[arg(long)]
    transform: Option<PathBuf>,
    #[command(flatten)]
    reference: RefOpts,
    #[command(flatten)]
    icp: IcpOpts,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct MetricsCmd {
    #[arg(long)]
    scan: PathBuf,
    #[arg(long)]
    transform: Option<PathBuf>,
    #[command(flatten)]
    reference: RefOpts,
    #[command(flatten)]
    icp: IcpOpts,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct ProjectCmd {
    /// Scan to run the full pipeline on
    #[arg(long, conflicts_with = "deviation")]
    scan: Option<PathBuf>,
    /// Pre-computed deviation CSV to project directly
    #[arg(long)]
    deviation: Option<PathBuf>,
    #[arg(long)]
    transform: Option<PathBuf>,
    #[command(flatten)]
    reference: RefOpts,
    #[command(flatten)]
    icp: IcpOpts,
    #[command(flatten)]
    grid: GridOpts,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct WcCmd {
    /// Dosage table CSV
    #[arg(long)]
    dosage: PathBuf,
    /// Voxel pitch in mm
    #[arg(long, default_value_t = VoxelModel::DEFAULT_PITCH_MM)]
    pitch: f64,
    /// Powder bulk density in kg/m³
    #[arg(long, default_value_t = 1695.0)]
    bulk_density: f64,
    /// Cement mass fraction of the powder
    #[arg(long, default_value_t = 0.25)]
    cement_fraction: f64,
    /// Measured part volume in mm³ (enables the volume correction)
    #[arg(long)]
    v_real: Option<f64>,
    /// Reference volume in mm³ (defaults to the reference prism volume)
    #[arg(long)]
    v_ref: Option<f64>,
    #[command(flatten)]
    reference: RefOpts,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct MechCmd {
    /// Curve TSV file or directory of curves
    #[arg(long)]
    curves: PathBuf,
    /// Test mode: bending or compression
    #[arg(long, default_value = "bending", value_parser = ["bending", "compression"])]
    mode: String,
    /// Support span for bending, mm
    #[arg(long, default_value_t = BendingSetup::DEFAULT_SPAN_MM)]
    span: f64,
    /// Specimen width, mm
    #[arg(long, default_value_t = 39.9)]
    width: f64,
    /// Specimen height, mm
    #[arg(long, default_value_t = 39.9)]
    height: f64,
    /// Header lines to skip in each curve file
    #[arg(long, default_value_t = 4)]
    skip_lines: usize,
    /// First column stored ×100 (percent convention)
    #[arg(long, value_parser = parse_on_off, default_value = "on")]
    x_percent: bool,
    /// Regression window length in samples
    #[arg(long, default_value_t = 100)]
    window: usize,
    /// Window step in samples
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Winner slope floor as a fraction of the steepest window
    #[arg(long, default_value_t = 0.5)]
    slope_floor: f64,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct SliceCmd {
    /// Mesh to voxelize (defaults to the reference prism)
    #[arg(long)]
    stl: Option<PathBuf>,
    /// Voxel pitch in mm
    #[arg(long, default_value_t = VoxelModel::DEFAULT_PITCH_MM)]
    pitch: f64,
    /// Nozzle opening time per voxel, ms
    #[arg(long, default_value_t = 30.0)]
    nozzle_time: f64,
    /// Lattice origin "x,y,z" in mm (defaults to the mesh bounding-box
    /// minimum)
    #[arg(long)]
    origin: Option<String>,
    #[command(flatten)]
    reference: RefOpts,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct CompensateCmd {
    /// Voxel model JSON produced by `slice`
    #[arg(long)]
    voxel: PathBuf,
    /// Directory of mean deviation grids (mean_px.csv … or px.csv …)
    #[arg(long)]
    grids: Option<PathBuf>,
    /// Compensation policy JSON (defaults to pitch-multiple thresholds)
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Override the policy's global shrink switch
    #[arg(long, value_parser = parse_on_off)]
    global_shrink: Option<bool>,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct ReportCmd {
    /// Scan file or directory of scans
    #[arg(long)]
    scan: Option<PathBuf>,
    /// Dosage table CSV
    #[arg(long)]
    dosage: Option<PathBuf>,
    /// Bending curve TSV file or directory
    #[arg(long)]
    mech: Option<PathBuf>,
    #[arg(long, default_value_t = VoxelModel::DEFAULT_PITCH_MM)]
    pitch: f64,
    #[arg(long, default_value_t = 1695.0)]
    bulk_density: f64,
    #[arg(long, default_value_t = 0.25)]
    cement_fraction: f64,
    #[arg(long, default_value_t = BendingSetup::DEFAULT_SPAN_MM)]
    span: f64,
    #[arg(long, default_value_t = 4)]
    skip_lines: usize,
    #[arg(long, value_parser = parse_on_off, default_value = "on")]
    x_percent: bool,
    #[command(flatten)]
    reference: RefOpts,
    #[command(flatten)]
    icp: IcpOpts,
    #[command(flatten)]
    grid: GridOpts,
    #[command(flatten)]
    common: CommonOpts,
}

// ---- command implementations ------------------------------------------

/// A scan aligned either by ICP or by an explicit transform file.
struct AlignedScan {
    name: String,
    aligned: PointCloud,
    icp: Option<IcpResult>,
}

/// Reads, downsamples and aligns every scan under `path`.
fn align_scans(
    path: &Path,
    reference: &Reference,
    cfg: &PipelineConfig,
    transform: &Option<PathBuf>,
) -> Result<Vec<AlignedScan>, PipelineError> {
    let given = match transform {
        Some(t) => Some(read_json::<TransformJson>(t)?.to_transform()),
        None => None,
    };
    let mut out = Vec::new();
    for scan_path in resolve_scans(path)? {
        let name = scan_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scan")
            .to_string();
        let cloud = read_scan(&scan_path)?;
        let down = downsample_random(&cloud, cfg.downsample, cfg.seed)?;
        match &given {
            Some(t) => out.push(AlignedScan {
                name,
                aligned: apply_transform(&down, t),
                icp: None,
            }),
            None => {
                let icp = prismetric_core::register::icp_align(&down, &reference.cloud, &cfg.icp)?;
                let aligned = apply_transform(&down, &icp.transform);
                out.push(AlignedScan {
                    name,
                    aligned,
                    icp: Some(icp),
                });
            }
        }
    }
    Ok(out)
}

fn create_out(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| FileError::io(dir, e))
        .map_err(PipelineError::from)
}

/// Output path for one specimen's artifact: flat for a single scan,
/// name-prefixed for batches.
fn artifact_path(out: &Path, multi: bool, name: &str, file: &str) -> PathBuf {
    if multi {
        out.join(format!("{name}.{file}"))
    } else {
        out.join(file)
    }
}

fn exit_code_for(converged: bool) -> i32 {
    if converged {
        0
    } else {
        2
    }
}

fn cmd_align(cmd: AlignCmd) -> Result<i32, PipelineError> {
    let cfg = pipeline_config(&cmd.common, &cmd.reference, &cmd.icp, None);
    let reference = cmd.reference.build(cfg.seed)?;
    let scans = align_scans(&cmd.scan, &reference, &cfg, &None)?;
    create_out(&cmd.common.out)?;
    let multi = scans.len() > 1;
    let mut all_converged = true;
    for scan in &scans {
        let icp = scan.icp.as_ref().expect("align always runs ICP");
        all_converged &= icp.converged;
        write_json(
            &AlignJson::from(icp),
            &artifact_path(&cmd.common.out, multi, &scan.name, "transform.json"),
        )?;
        write_xyz(
            &scan.aligned,
            &artifact_path(&cmd.common.out, multi, &scan.name, "aligned.xyz"),
            cfg.decimals,
        )?;
        println!(
            "{}: iterations {}, converged {}, final cost {} mm^2",
            scan.name,
            icp.iterations,
            icp.converged,
            fmt_fixed(icp.final_cost, cfg.decimals.max(6)),
        );
    }
    Ok(exit_code_for(all_converged))
}

fn cmd_deviate(cmd: DeviateCmd) -> Result<i32, PipelineError> {
    let cfg = pipeline_config(&cmd.common, &cmd.reference, &cmd.icp, None);
    let reference = cmd.reference.build(cfg.seed)?;
    let scans = align_scans(&cmd.scan, &reference, &cfg, &cmd.transform)?;
    create_out(&cmd.common.out)?;
    let multi = scans.len() > 1;
    let mut all_converged = true;
    for scan in &scans {
        let field = prismetric_core::deviation::deviation_field(
            &scan.aligned,
            &reference.mesh,
            &reference.prism,
        )?;
        if let Some(icp) = &scan.icp {
            all_converged &= icp.converged;
            write_json(
                &AlignJson::from(icp),
                &artifact_path(&cmd.common.out, multi, &scan.name, "transform.json"),
            )?;
        }
        write_deviation_csv(
            &field,
            &artifact_path(&cmd.common.out, multi, &scan.name, "deviation.csv"),
            cfg.decimals,
        )?;
        let stats = field.face_stats();
        std::fs::write(
            artifact_path(&cmd.common.out, multi, &scan.name, "face_stats.csv"),
            face_stats_csv(&stats, cfg.decimals),
        )
        .map_err(|e| FileError::io(&cmd.common.out, e))?;
        println!("{}: {} points", scan.name, field.len());
        print!("{}", face_stats_csv(&stats, cfg.decimals));
    }
    Ok(exit_code_for(all_converged))
}

fn cmd_metrics(cmd: MetricsCmd) -> Result<i32, PipelineError> {
    let cfg = pipeline_config(&cmd.common, &cmd.reference, &cmd.icp, None);
    let reference = cmd.reference.build(cfg.seed)?;
    let scans = align_scans(&cmd.scan, &reference, &cfg, &cmd.transform)?;
    create_out(&cmd.common.out)?;
    let multi = scans.len() > 1;
    let mut all_converged = true;
    let mut table = String::from("specimen,hausdorff_mm,chamfer_mm,pai,s_pai,n_points\n");
    for scan in &scans {
        if let Some(icp) = &scan.icp {
            all_converged &= icp.converged;
        }
        let report = prismetric_core::metrics::metrics_report(
            &scan.aligned,
            &reference.cloud,
            &reference.mesh,
        )?;
        write_json(
            &MetricsJson::from(&report),
            &artifact_path(&cmd.common.out, multi, &scan.name, "metrics.json"),
        )?;
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            scan.name,
            fmt_fixed(report.hausdorff_mm, cfg.decimals),
            fmt_fixed(report.chamfer_mm, cfg.decimals),
            fmt_fixed(report.pai, cfg.decimals),
            fmt_fixed(report.s_pai, cfg.decimals),
            report.n_points,
        ));
    }
    std::fs::write(cmd.common.out.join("metrics.csv"), &table)
        .map_err(|e| FileError::io(&cmd.common.out, e))?;
    print!("{table}");
    Ok(exit_code_for(all_converged))
}

fn cmd_project(cmd: ProjectCmd) -> Result<i32, PipelineError> {
    let cfg = pipeline_config(&cmd.common, &cmd.reference, &cmd.icp, Some(&cmd.grid));
    let reference = cmd.reference.build(cfg.seed)?;
    create_out(&cmd.common.out)?;
    let mut fields: Vec<(String, prismetric_core::deviation::DeviationField)> = Vec::new();
    let mut all_converged = true;
    match (&cmd.scan, &cmd.deviation) {
        (Some(scan), None) => {
            for s in align_scans(scan, &reference, &cfg, &cmd.transform)? {
                if let Some(icp) = &s.icp {
                    all_converged &= icp.converged;
                }
                let field = prismetric_core::deviation::deviation_field(
                    &s.aligned,
                    &reference.mesh,
                    &reference.prism,
                )?;
                fields.push((s.name, field));
            }
        }
        (None, Some(csv)) => {
            let name = csv
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("deviation")
                .to_string();
            fields.push((name, read_deviation_csv(csv)?));
        }
        _ => {
            return Err(PipelineError::Usage(
                "exactly one of --scan or --deviation is required".into(),
            ));
        }
    }
    let multi = fields.len() > 1;
    for (name, field) in &fields {
        let grids = prismetric_core::projection::project_all_faces(
            field,
            &reference.prism,
            cfg.grid_spacing_mm,
            cfg.normal_filter_deg,
        )?;
        let dir = if multi {
            cmd.common.out.join(name)
        } else {
            cmd.common.out.join("grids")
        };
        create_out(&dir)?;
        for grid in &grids {
            write_grid_csv(
                grid,
                &dir.join(format!("{}.csv", grid.face.file_stem())),
                cfg.decimals,
            )?;
            let populated = grid.values.iter().filter(|v| v.is_some()).count();
            println!(
                "{name} {}: {}x{} nodes, {populated} populated",
                grid.face.as_str(),
                grid.nu,
                grid.nv,
            );
        }
    }
    Ok(exit_code_for(all_converged))
}

fn cmd_wc(cmd: WcCmd) -> Result<i32, PipelineError> {
    let powder = PowderSpec::new(cmd.bulk_density, cmd.cement_fraction)?;
    let rows = read_dosage_csv(&cmd.dosage)?;
    let prism = match &cmd.reference.reference_dims {
        Some(spec) => ReferencePrism::new(
            parse_dims(spec).map_err(PipelineError::Usage)?,
            Point3::origin(),
        )
        .map_err(|e| PipelineError::Usage(e.to_string()))?,
        None => ReferencePrism::standard(),
    };
    let v_ref = cmd.v_ref.unwrap_or_else(|| prism.volume());
    let v_real = cmd.v_real.unwrap_or(v_ref);
    let computed = wc_rows(&rows, cmd.pitch, &powder, v_real, v_ref)?;
    create_out(&cmd.common.out)?;
    let csv = wc_csv(&computed, cmd.common.decimals);
    std::fs::write(cmd.common.out.join("wc.csv"), &csv)
        .map_err(|e| FileError::io(&cmd.common.out, e))?;
    write_json(&computed, &cmd.common.out.join("wc.json"))?;
    print!("{csv}");
    Ok(0)
}

fn cmd_mech(cmd: MechCmd) -> Result<i32, PipelineError> {
    let options = MechOptions {
        span_mm: cmd.span,
        skip_lines: cmd.skip_lines,
        x_percent: cmd.x_percent,
        fit: FitConfig {
            window_len: cmd.window,
            stride: cmd.stride,
            slope_floor: cmd.slope_floor,
        },
    };
    let files = resolve_mech(&cmd.curves)?;
    create_out(&cmd.common.out)?;
    let mech_dir = cmd.common.out.join("mech");
    create_out(&mech_dir)?;
    let mut specimens: Vec<MechSpecimen> = Vec::new();
    for file in &files {
        let specimen = if cmd.mode == "bending" {
            let setup = BendingSetup::new(cmd.span, cmd.width, cmd.height)?;
            fit_bending_file(file, &setup, &options)?
        } else {
            let raw =
                prismetric::records::read_load_tsv(file, options.skip_lines, options.x_percent)?;
            let record = LoadRecord::new(&raw)?;
            let setup = CompressionSetup::new(cmd.width * cmd.height, cmd.height)?;
            let curve = compression_stress_strain(&record, &setup);
            let fit = fit_young_modulus(&curve, &options.fit)?;
            let name = file
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("curve")
                .to_string();
            let nozzle_time_ms = prismetric::report::nozzle_time_from_name(&name);
            let group = match nozzle_time_ms {
                Some(t) => format!("{t}ms"),
                None => name.clone(),
            };
            MechSpecimen {
                name,
                group,
                nozzle_time_ms,
                fit,
            }
        };
        write_json(
            &MechJson {
                e_mpa: specimen.fit.young_modulus_mpa,
                r2: specimen.fit.r_squared,
                sigma_max_mpa: specimen.fit.peak_stress_mpa,
                window: [specimen.fit.window_start, specimen.fit.window_len],
            },
            &mech_dir.join(format!("{}.json", specimen.name)),
        )?;
        specimens.push(specimen);
    }
    let groups = mech_groups(&specimens);
    let csv = mech_csv(&groups, cmd.common.decimals);
    std::fs::write(cmd.common.out.join("mech.csv"), &csv)
        .map_err(|e| FileError::io(&cmd.common.out, e))?;
    print!("{csv}");
    Ok(0)
}

fn parse_origin(spec: &str) -> Result<Point3, String> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("'{spec}': expected x,y,z"));
    }
    let mut coords = [0.0f64; 3];
    for (slot, part) in coords.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("'{part}' is not a number"))?;
    }
    Ok(Point3::new(coords[0], coords[1], coords[2]))
}

fn cmd_slice(cmd: SliceCmd) -> Result<i32, PipelineError> {
    let mesh = match &cmd.stl {
        Some(path) => read_stl(path)?,
        None => {
            let reference = cmd.reference.build(cmd.common.seed)?;
            reference.mesh
        }
    };
    let model = match &cmd.origin {
        Some(spec) => {
            let origin = parse_origin(spec).map_err(PipelineError::Usage)?;
            voxelize(&mesh, cmd.pitch, origin, cmd.nozzle_time)?
        }
        None => voxelize_bounding(&mesh, cmd.pitch, cmd.nozzle_time)?,
    };
    create_out(&cmd.common.out)?;
    write_json(&VoxelJson::from(&model), &cmd.common.out.join("voxel.json"))?;
    std::fs::write(
        cmd.common.out.join("instructions.txt"),
        export_instructions(&model)?,
    )
    .map_err(|e| FileError::io(&cmd.common.out, e))?;
    println!(
        "{} occupied of {}x{}x{} at pitch {} mm",
        model.occupied_count(),
        model.nx,
        model.ny,
        model.nz,
        model.pitch_mm,
    );
    Ok(0)
}

/// Per-face mean grids from a directory, preferring aggregate
/// (`mean_px.csv`) over per-specimen (`px.csv`) names.
fn load_mean_grids(dir: &Path) -> Result<Vec<prismetric_core::projection::FaceGrid>, PipelineError> {
    let mut grids = Vec::new();
    for face in FaceLabel::ALL {
        let stem = face.file_stem();
        let candidates = [
            dir.join(format!("mean_{stem}.csv")),
            dir.join(format!("{stem}.csv")),
        ];
        if let Some(path) = candidates.iter().find(|p| p.is_file()) {
            grids.push(read_grid_csv(path)?);
        }
    }
    if grids.is_empty() {
        return Err(PipelineError::Usage(format!(
            "{}: no face grid CSVs found",
            dir.display()
        )));
    }
    Ok(grids)
}

#[derive(serde::Serialize)]
struct CompensationJson {
    removed_local: usize,
    removed_global: usize,
    connectivity_warning: bool,
    occupied_before: usize,
    occupied_after: usize,
}

fn cmd_compensate(cmd: CompensateCmd) -> Result<i32, PipelineError> {
    let model = read_json::<VoxelJson>(&cmd.voxel)?.to_model(&cmd.voxel)?;
    let mut policy = match &cmd.policy {
        Some(path) => read_json::<PolicyJson>(path)?.to_policy(),
        None => CompensationPolicy::for_pitch(model.pitch_mm),
    };
    if let Some(shrink) = cmd.global_shrink {
        policy.global_shrink = shrink;
    }
    let grids = match &cmd.grids {
        Some(dir) => load_mean_grids(dir)?,
        None => Vec::new(),
    };
    let outcome = compensate(&model, &grids, &policy)?;
    create_out(&cmd.common.out)?;
    write_json(
        &VoxelJson::from(&outcome.model),
        &cmd.common.out.join("voxel.json"),
    )?;
    std::fs::write(
        cmd.common.out.join("instructions.txt"),
        export_instructions(&outcome.model)?,
    )
    .map_err(|e| FileError::io(&cmd.common.out, e))?;
    write_json(
        &CompensationJson {
            removed_local: outcome.removed_local,
            removed_global: outcome.removed_global,
            connectivity_warning: outcome.connectivity_warning,
            occupied_before: model.occupied_count(),
            occupied_after: outcome.model.occupied_count(),
        },
        &cmd.common.out.join("compensation.json"),
    )?;
    if outcome.connectivity_warning {
        eprintln!("warning: compensation disconnected the voxel model");
    }
    println!(
        "removed {} local + {} global, {} voxels remain",
        outcome.removed_local,
        outcome.removed_global,
        outcome.model.occupied_count(),
    );
    Ok(0)
}

fn cmd_report(cmd: ReportCmd) -> Result<i32, PipelineError> {
    if cmd.scan.is_none() && cmd.dosage.is_none() && cmd.mech.is_none() {
        return Err(PipelineError::Usage(
            "nothing to do: give at least one of --scan, --dosage, --mech".into(),
        ));
    }
    let cfg = pipeline_config(&cmd.common, &cmd.reference, &cmd.icp, Some(&cmd.grid));
    let reference = cmd.reference.build(cfg.seed)?;
    let job = ReportJob {
        scan: cmd.scan.clone(),
        dosage: cmd.dosage.clone(),
        mech: cmd.mech.clone(),
        mech_options: MechOptions {
            span_mm: cmd.span,
            skip_lines: cmd.skip_lines,
            x_percent: cmd.x_percent,
            fit: FitConfig::default(),
        },
        pitch_mm: cmd.pitch,
        powder: PowderSpec::new(cmd.bulk_density, cmd.cement_fraction)?,
        out: cmd.common.out.clone(),
    };
    let outcome = run_report(&job, &reference, &cfg)?;
    println!(
        "report: {} specimen(s), bundle at {}",
        outcome.specimens,
        cmd.common.out.display(),
    );
    Ok(exit_code_for(outcome.all_converged))
}

fn exit_code(err: &PipelineError) -> i32 {
    match err {
        PipelineError::Usage(_)
        | PipelineError::File(FileError::Io { .. })
        | PipelineError::File(FileError::Empty { .. }) => 64,
        PipelineError::Register(RegisterError::SvdFailed) => 70,
        _ => 65,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Align(cmd) => cmd_align(cmd),
        Command::Deviate(cmd) => cmd_deviate(cmd),
        Command::Metrics(cmd) => cmd_metrics(cmd),
        Command::Project(cmd) => cmd_project(cmd),
        Command::Wc(cmd) => cmd_wc(cmd),
        Command::Mech(cmd) => cmd_mech(cmd),
        Command::Slice(cmd) => cmd_slice(cmd),
        Command::Compensate(cmd) => cmd_compensate(cmd),
        Command::Report(cmd) => cmd_report(cmd),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
