//! End-to-end pipeline: scan ingestion → registration → deviation field →
//! metrics → face grids, plus the batch aggregation, dosage and mechanics
//! tables that make up a report bundle.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use prismetric_core::deviation::{deviation_field, DeviationField, FaceStats};
use prismetric_core::dosage::{DosageError, PowderSpec, WcEstimate};
use prismetric_core::geometry::MeshError;
use prismetric_core::mechanics::{
    bending_stress_strain, fit_young_modulus, BendingSetup, ElasticFit, FitConfig, LoadRecord,
    MechanicsError,
};
use prismetric_core::metrics::{metrics_report, MetricsError, MetricsReport};
use prismetric_core::projection::{
    aggregate_grids, project_all_faces, FaceGrid, ProjectionError,
};
use prismetric_core::register::{
    apply_transform, icp_align, IcpConfig, IcpResult, RegisterError,
};
use prismetric_core::sample::{
    downsample_random, sample_reference_surface, SampleError, DEFAULT_DOWNSAMPLE,
    DEFAULT_SEED, DEFAULT_SURFACE_SAMPLES,
};
use prismetric_core::voxel::VoxelError;
use prismetric_core::{FaceLabel, PointCloud, ReferencePrism, TriangleMesh};
use serde::Serialize;
use thiserror::Error;

use crate::cloud::{read_xyz, write_xyz};
use crate::gridcsv::write_grid_csv;
use crate::jsonio::{write_json, AlignJson, MetricsJson};
use crate::records::{read_dosage_csv, write_deviation_csv, DosageRow};
use crate::stl::read_stl;
use crate::{fmt_fixed, fmt_opt, FileError};

/// Any failure along the pipeline, tagged by stage.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error("registration: {0}")]
    Register(#[from] RegisterError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("projection: {0}")]
    Projection(#[from] ProjectionError),
    #[error("sampling: {0}")]
    Sample(#[from] SampleError),
    #[error("dosage: {0}")]
    Dosage(#[from] DosageError),
    #[error("mechanics: {0}")]
    Mechanics(#[from] MechanicsError),
    #[error("voxel: {0}")]
    Voxel(#[from] VoxelError),
    #[error("{0}")]
    Usage(String),
}

/// Knobs shared by every geometric stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Scan points kept for registration and analysis.
    pub downsample: usize,
    /// Random surface samples forming the reference cloud (plus corners).
    pub reference_samples: usize,
    pub icp: IcpConfig,
    pub grid_spacing_mm: f64,
    /// `Some(max degrees)` enables the projection normal cone filter.
    pub normal_filter_deg: Option<f64>,
    pub decimals: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: DEFAULT_SEED,
            downsample: DEFAULT_DOWNSAMPLE,
            reference_samples: DEFAULT_SURFACE_SAMPLES,
            icp: IcpConfig::default(),
            grid_spacing_mm: 1.0,
            normal_filter_deg: Some(
                prismetric_core::projection::DEFAULT_NORMAL_FILTER_DEG,
            ),
            decimals: crate::DEFAULT_DECIMALS,
        }
    }
}

/// The as-designed geometry in the three shapes the stages need: prism
/// spec, triangle mesh and sampled surface cloud.
#[derive(Debug, Clone)]
pub struct Reference {
    pub prism: ReferencePrism,
    pub mesh: TriangleMesh,
    pub cloud: PointCloud,
}

impl Reference {
    pub fn from_prism(prism: ReferencePrism, samples: usize, seed: u64) -> Reference {
        let mesh = prism.to_mesh();
        let cloud = sample_reference_surface(&prism, samples, seed);
        Reference { prism, mesh, cloud }
    }

    /// Reference from an STL file; the prism spec (used for face labels
    /// and grids) is the mesh's axis-aligned bounding box.
    pub fn from_stl(path: &Path, samples: usize, seed: u64) -> Result<Reference, PipelineError> {
        let mesh = read_stl(path)?;
        let (lo, hi) = mesh.bounds().ok_or(MeshError::Empty)?;
        let prism = ReferencePrism::new(hi - lo, lo)
            .map_err(|_| FileError::malformed(path, "mesh has zero extent"))?;
        let cloud = sample_reference_surface(&prism, samples, seed);
        Ok(Reference { prism, mesh, cloud })
    }
}

/// Reads a scan by extension: `.stl` meshes contribute their merged
/// vertices as the cloud, anything else parses as XYZ text.
pub fn read_scan(path: &Path) -> Result<PointCloud, FileError> {
    let is_stl = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("stl"));
    if is_stl {
        let mesh = read_stl(path)?;
        Ok(PointCloud::new(mesh.vertices))
    } else {
        read_xyz(path)
    }
}

/// Resolves `--scan`: a file stands alone, a directory contributes every
/// contained `.stl`/`.xyz`/`.txt` file in name order.
pub fn resolve_scans(path: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if path.is_dir() {
        let mut found = Vec::new();
        let entries = fs::read_dir(path).map_err(|e| FileError::io(path, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| FileError::io(path, e))?;
            let p = entry.path();
            let ext_ok = p
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| ["stl", "xyz", "txt"].iter().any(|k| e.eq_ignore_ascii_case(k)));
            if p.is_file() && ext_ok {
                found.push(p);
            }
        }
        found.sort();
        if found.is_empty() {
            return Err(PipelineError::Usage(format!(
                "{}: directory contains no .stl/.xyz/.txt scans",
                path.display()
            )));
        }
        Ok(found)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(PipelineError::Usage(format!(
            "{}: no such file or directory",
            path.display()
        )))
    }
}

/// Everything computed for one scan.
#[derive(Debug, Clone)]
pub struct SpecimenAnalysis {
    pub name: String,
    pub icp: IcpResult,
    pub field: DeviationField,
    pub metrics: MetricsReport,
    pub grids: [FaceGrid; 6],
}

/// Runs the full geometric pipeline for one scan cloud.
pub fn analyze_specimen(
    name: &str,
    scan: &PointCloud,
    reference: &Reference,
    cfg: &PipelineConfig,
) -> Result<SpecimenAnalysis, PipelineError> {
    let down = downsample_random(scan, cfg.downsample, cfg.seed)?;
    let icp = icp_align(&down, &reference.cloud, &cfg.icp)?;
    let aligned = apply_transform(&down, &icp.transform);
    let field = deviation_field(&aligned, &reference.mesh, &reference.prism)?;
    let metrics = metrics_report(&aligned, &reference.cloud, &reference.mesh)?;
    let grids = project_all_faces(
        &field,
        &reference.prism,
        cfg.grid_spacing_mm,
        cfg.normal_filter_deg,
    )?;
    Ok(SpecimenAnalysis {
        name: name.to_string(),
        icp,
        field,
        metrics,
        grids,
    })
}

fn create_dir(path: &Path) -> Result<(), FileError> {
    fs::create_dir_all(path).map_err(|e| FileError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), FileError> {
    let mut file = fs::File::create(path).map_err(|e| FileError::io(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| FileError::io(path, e))
}

/// Face statistics as one CSV table.
pub fn face_stats_csv(stats: &[FaceStats; 6], decimals: usize) -> String {
    let mut out = String::from("face,count,mean_mm,std_mm,min_mm,max_mm\n");
    for s in stats {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.face.as_str(),
            s.count,
            fmt_opt(s.mean_mm, decimals),
            fmt_opt(s.std_mm, decimals),
            fmt_opt(s.min_mm, decimals),
            fmt_opt(s.max_mm, decimals),
        ));
    }
    out
}

/// Writes one specimen's artifact directory: transform, aligned cloud,
/// deviation CSV, metrics JSON, face statistics and the six face grids.
pub fn write_specimen_bundle(
    analysis: &SpecimenAnalysis,
    dir: &Path,
    decimals: usize,
) -> Result<(), PipelineError> {
    create_dir(dir)?;
    write_json(&AlignJson::from(&analysis.icp), &dir.join("transform.json"))?;
    write_xyz(&analysis.field.points, &dir.join("aligned.xyz"), decimals)?;
    write_deviation_csv(&analysis.field, &dir.join("deviation.csv"), decimals)?;
    write_json(
        &MetricsJson::from(&analysis.metrics),
        &dir.join("metrics.json"),
    )?;
    write_text(
        &dir.join("face_stats.csv"),
        &face_stats_csv(&analysis.field.face_stats(), decimals),
    )?;
    let grids_dir = dir.join("grids");
    create_dir(&grids_dir)?;
    for grid in &analysis.grids {
        write_grid_csv(
            grid,
            &grids_dir.join(format!("{}.csv", grid.face.file_stem())),
            decimals,
        )?;
    }
    Ok(())
}

// ---- summary schemas -------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct FaceStatsJson {
    pub face: String,
    pub count: usize,
    pub mean_mm: Option<f64>,
    pub std_mm: Option<f64>,
    pub min_mm: Option<f64>,
    pub max_mm: Option<f64>,
}

impl From<&FaceStats> for FaceStatsJson {
    fn from(s: &FaceStats) -> Self {
        FaceStatsJson {
            face: s.face.as_str().to_string(),
            count: s.count,
            mean_mm: s.mean_mm,
            std_mm: s.std_mm,
            min_mm: s.min_mm,
            max_mm: s.max_mm,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IcpSummaryJson {
    pub iterations: usize,
    pub converged: bool,
    pub final_cost_mm2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecimenSummaryJson {
    pub name: String,
    pub icp: IcpSummaryJson,
    pub metrics: MetricsJson,
    pub face_stats: Vec<FaceStatsJson>,
}

impl From<&SpecimenAnalysis> for SpecimenSummaryJson {
    fn from(a: &SpecimenAnalysis) -> Self {
        SpecimenSummaryJson {
            name: a.name.clone(),
            icp: IcpSummaryJson {
                iterations: a.icp.iterations,
                converged: a.icp.converged,
                final_cost_mm2: a.icp.final_cost,
            },
            metrics: MetricsJson::from(&a.metrics),
            face_stats: a.field.face_stats().iter().map(FaceStatsJson::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WcRowJson {
    pub nozzle_time_ms: f64,
    pub droplet_mass_mg: f64,
    pub water_g: f64,
    pub water_std_g: f64,
    pub flow_mg_per_ms: f64,
    pub wc_theo: f64,
    pub wc_theo_std: f64,
    pub wc_mass: Option<f64>,
    pub gamma: f64,
    pub wc_corrected: f64,
}

/// Evaluates every dosage row into a w/c table entry.
pub fn wc_rows(
    rows: &[DosageRow],
    pitch_mm: f64,
    powder: &PowderSpec,
    v_real_mm3: f64,
    v_ref_mm3: f64,
) -> Result<Vec<WcRowJson>, PipelineError> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let est = WcEstimate::for_record(
            &row.record,
            pitch_mm,
            powder,
            row.total_mass_g,
            v_real_mm3,
            v_ref_mm3,
        )?;
        out.push(WcRowJson {
            nozzle_time_ms: row.record.nozzle_time_ms,
            droplet_mass_mg: row.record.droplet_mass_mg,
            water_g: row.record.water_mass_g(),
            water_std_g: row.record.water_mass_std_g(),
            flow_mg_per_ms: row.record.flow_rate_mg_per_ms(),
            wc_theo: est.theo,
            wc_theo_std: est.theo_std,
            wc_mass: est.mass_based,
            gamma: est.gamma,
            wc_corrected: est.corrected,
        });
    }
    Ok(out)
}

/// The w/c table as CSV.
pub fn wc_csv(rows: &[WcRowJson], decimals: usize) -> String {
    let mut out = String::from(
        "nozzle_time_ms,droplet_mass_mg,water_g,water_std_g,flow_mg_per_ms,\
         wc_theo,wc_theo_std,wc_mass,gamma,wc_corrected\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            fmt_fixed(r.nozzle_time_ms, decimals),
            fmt_fixed(r.droplet_mass_mg, decimals),
            fmt_fixed(r.water_g, decimals),
            fmt_fixed(r.water_std_g, decimals),
            fmt_fixed(r.flow_mg_per_ms, decimals),
            fmt_fixed(r.wc_theo, decimals),
            fmt_fixed(r.wc_theo_std, decimals),
            fmt_opt(r.wc_mass, decimals),
            fmt_fixed(r.gamma, decimals),
            fmt_fixed(r.wc_corrected, decimals),
        ));
    }
    out
}

// ---- mechanics batching ----------------------------------------------

/// One fitted specimen curve, grouped by the nozzle time parsed from its
/// file name.
#[derive(Debug, Clone)]
pub struct MechSpecimen {
    pub name: String,
    pub group: String,
    pub nozzle_time_ms: Option<f64>,
    pub fit: ElasticFit,
}

/// First `<number>ms` token in a file stem, e.g. `bend_17ms_2` → 17.
pub fn nozzle_time_from_name(stem: &str) -> Option<f64> {
    for token in stem.split(|c: char| !(c.is_ascii_digit() || c == '.' || c == 'm' || c == 's')) {
        if let Some(num) = token.strip_suffix("ms") {
            if let Ok(v) = num.parse::<f64>() {
                if v.is_finite() && v > 0.0 {
                    return Some(v);
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, Serialize)]
pub struct MechGroupJson {
    pub group: String,
    pub nozzle_time_ms: Option<f64>,
    pub n: usize,
    pub e_mean_mpa: f64,
    pub e_std_mpa: Option<f64>,
    pub sigma_max_mean_mpa: f64,
    pub sigma_max_std_mpa: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Aggregates fitted specimens into per-group mean ± std rows, ordered by
/// nozzle time (unparsed groups last, by name).
pub fn mech_groups(specimens: &[MechSpecimen]) -> Vec<MechGroupJson> {
    let mut keys: Vec<(String, Option<f64>)> = Vec::new();
    for s in specimens {
        if !keys.iter().any(|(k, _)| *k == s.group) {
            keys.push((s.group.clone(), s.nozzle_time_ms));
        }
    }
    keys.sort_by(|a, b| match (a.1, b.1) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.0.cmp(&b.0)),
        (Some(_), None) => core::cmp::Ordering::Less,
        (None, Some(_)) => core::cmp::Ordering::Greater,
        (None, None) => a.0.cmp(&b.0),
    });
    keys.iter()
        .map(|(key, time)| {
            let members: Vec<&MechSpecimen> =
                specimens.iter().filter(|s| s.group == *key).collect();
            let e: Vec<f64> = members.iter().map(|s| s.fit.young_modulus_mpa).collect();
            let sigma: Vec<f64> = members.iter().map(|s| s.fit.peak_stress_mpa).collect();
            let (e_mean, e_std) = mean_std(&e);
            let (s_mean, s_std) = mean_std(&sigma);
            MechGroupJson {
                group: key.clone(),
                nozzle_time_ms: *time,
                n: members.len(),
                e_mean_mpa: e_mean,
                e_std_mpa: e_std,
                sigma_max_mean_mpa: s_mean,
                sigma_max_std_mpa: s_std,
            }
        })
        .collect()
}

/// The mechanics batch table as CSV.
pub fn mech_csv(groups: &[MechGroupJson], decimals: usize) -> String {
    let mut out = String::from(
        "group,nozzle_time_ms,n,E_mean_MPa,E_std_MPa,sigma_max_mean_MPa,sigma_max_std_MPa\n",
    );
    for g in groups {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            g.group,
            fmt_opt(g.nozzle_time_ms, decimals),
            g.n,
            fmt_fixed(g.e_mean_mpa, decimals),
            fmt_opt(g.e_std_mpa, decimals),
            fmt_fixed(g.sigma_max_mean_mpa, decimals),
            fmt_opt(g.sigma_max_std_mpa, decimals),
        ));
    }
    out
}

// ---- report bundle ----------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReportSummaryJson {
    pub seed: u64,
    pub grid_spacing_mm: f64,
    pub reference_dims_mm: [f64; 3],
    pub specimens: Vec<SpecimenSummaryJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wc: Option<Vec<WcRowJson>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mech: Option<Vec<MechGroupJson>>,
}

/// Bending-curve ingestion knobs for the report's mechanics stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechOptions {
    pub span_mm: f64,
    pub skip_lines: usize,
    pub x_percent: bool,
    pub fit: FitConfig,
}

impl Default for MechOptions {
    fn default() -> Self {
        MechOptions {
            span_mm: BendingSetup::DEFAULT_SPAN_MM,
            skip_lines: 4,
            x_percent: true,
            fit: FitConfig::default(),
        }
    }
}

/// Everything `report` needs beyond the shared pipeline knobs.
#[derive(Debug, Clone)]
pub struct ReportJob {
    pub scan: Option<PathBuf>,
    pub dosage: Option<PathBuf>,
    /// Bending TSV file or directory of them.
    pub mech: Option<PathBuf>,
    pub mech_options: MechOptions,
    pub pitch_mm: f64,
    pub powder: PowderSpec,
    pub out: PathBuf,
}

/// Resolves `--mech`: a file stands alone, a directory contributes every
/// `.tsv` file in name order.
pub fn resolve_mech(path: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    if path.is_dir() {
        let mut found = Vec::new();
        let entries = fs::read_dir(path).map_err(|e| FileError::io(path, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| FileError::io(path, e))?;
            let p = entry.path();
            let ext_ok = p
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("tsv"));
            if p.is_file() && ext_ok {
                found.push(p);
            }
        }
        found.sort();
        if found.is_empty() {
            return Err(PipelineError::Usage(format!(
                "{}: directory contains no .tsv curves",
                path.display()
            )));
        }
        Ok(found)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(PipelineError::Usage(format!(
            "{}: no such file or directory",
            path.display()
        )))
    }
}

/// Reads and fits one bending curve file.
pub fn fit_bending_file(
    path: &Path,
    setup: &BendingSetup,
    options: &MechOptions,
) -> Result<MechSpecimen, PipelineError> {
    let raw = crate::records::read_load_tsv(path, options.skip_lines, options.x_percent)?;
    let record = LoadRecord::new(&raw)?;
    let curve = bending_stress_strain(&record, setup);
    let fit = fit_young_modulus(&curve, &options.fit)?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("curve")
        .to_string();
    let nozzle_time_ms = nozzle_time_from_name(&name);
    let group = match nozzle_time_ms {
        Some(t) => format!("{t}ms"),
        None => name.clone(),
    };
    Ok(MechSpecimen {
        name,
        group,
        nozzle_time_ms,
        fit,
    })
}

/// Outcome counts for exit-code decisions and console summary lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOutcome {
    pub specimens: usize,
    pub all_converged: bool,
}

/// Runs the report pipeline: per-specimen bundles, cross-specimen grid
/// aggregation, metrics table, optional w/c table and the JSON summary.
/// Specimens are processed concurrently; outputs are written in input
/// order so bundles are byte-stable.
pub fn run_report(
    job: &ReportJob,
    reference: &Reference,
    cfg: &PipelineConfig,
) -> Result<ReportOutcome, PipelineError> {
    let mut analyses: Vec<SpecimenAnalysis> = Vec::new();
    if let Some(scan_path) = &job.scan {
        let paths = resolve_scans(scan_path)?;
        let mut names: Vec<String> = Vec::with_capacity(paths.len());
        for p in &paths {
            let stem = p
                .file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_string)
                .unwrap_or_else(|| "scan".to_string());
            if names.contains(&stem) {
                return Err(PipelineError::Usage(format!(
                    "duplicate scan name '{stem}'"
                )));
            }
            names.push(stem);
        }
        let clouds: Vec<PointCloud> = paths
            .iter()
            .map(|p| read_scan(p))
            .collect::<Result<_, _>>()?;

        let mut results: Vec<Option<Result<SpecimenAnalysis, PipelineError>>> =
            (0..clouds.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            for (slot, (name, cloud)) in results.iter_mut().zip(names.iter().zip(&clouds)) {
                scope.spawn(move || {
                    *slot = Some(analyze_specimen(name, cloud, reference, cfg));
                });
            }
        });
        for result in results {
            analyses.push(result.expect("thread filled slot")?);
        }
    }

    create_dir(&job.out)?;
    let mut all_converged = true;
    for analysis in &analyses {
        all_converged &= analysis.icp.converged;
        write_specimen_bundle(
            analysis,
            &job.out.join("specimens").join(&analysis.name),
            cfg.decimals,
        )?;
    }

    if !analyses.is_empty() {
        // Cross-specimen mean/std grid per face: 12 CSVs.
        let grids_dir = job.out.join("grids");
        create_dir(&grids_dir)?;
        for face_idx in 0..6 {
            let members: Vec<FaceGrid> = analyses
                .iter()
                .map(|a| a.grids[face_idx].clone())
                .collect();
            let stack = aggregate_grids(members)?;
            let stem = FaceLabel::ALL[face_idx].file_stem();
            write_grid_csv(
                &stack.mean,
                &grids_dir.join(format!("mean_{stem}.csv")),
                cfg.decimals,
            )?;
            write_grid_csv(
                &stack.std,
                &grids_dir.join(format!("std_{stem}.csv")),
                cfg.decimals,
            )?;
        }

        let mut table = String::from("specimen,hausdorff_mm,chamfer_mm,pai,s_pai,n_points\n");
        for a in &analyses {
            table.push_str(&format!(
                "{},{},{},{},{},{}\n",
                a.name,
                fmt_fixed(a.metrics.hausdorff_mm, cfg.decimals),
                fmt_fixed(a.metrics.chamfer_mm, cfg.decimals),
                fmt_fixed(a.metrics.pai, cfg.decimals),
                fmt_fixed(a.metrics.s_pai, cfg.decimals),
                a.metrics.n_points,
            ));
        }
        write_text(&job.out.join("metrics.csv"), &table)?;
    }

    let wc = match &job.dosage {
        Some(path) => {
            let rows = read_dosage_csv(path)?;
            let v_ref = reference.prism.volume();
            let computed = wc_rows(&rows, job.pitch_mm, &job.powder, v_ref, v_ref)?;
            write_text(&job.out.join("wc.csv"), &wc_csv(&computed, cfg.decimals))?;
            write_json(&computed, &job.out.join("wc.json"))?;
            Some(computed)
        }
        None => None,
    };

    let mech = match &job.mech {
        Some(path) => {
            let setup = BendingSetup::new(
                job.mech_options.span_mm,
                reference.prism.dims.y,
                reference.prism.dims.z,
            )?;
            let mech_dir = job.out.join("mech");
            create_dir(&mech_dir)?;
            let mut specimens = Vec::new();
            for file in resolve_mech(path)? {
                let specimen = fit_bending_file(&file, &setup, &job.mech_options)?;
                write_json(
                    &crate::jsonio::MechJson {
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
            write_text(&job.out.join("mech.csv"), &mech_csv(&groups, cfg.decimals))?;
            Some(groups)
        }
        None => None,
    };

    let summary = ReportSummaryJson {
        seed: cfg.seed,
        grid_spacing_mm: cfg.grid_spacing_mm,
        reference_dims_mm: [
            reference.prism.dims.x,
            reference.prism.dims.y,
            reference.prism.dims.z,
        ],
        specimens: analyses.iter().map(SpecimenSummaryJson::from).collect(),
        wc,
        mech,
    };
    write_json(&summary, &job.out.join("summary.json"))?;

    Ok(ReportOutcome {
        specimens: analyses.len(),
        all_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use prismetric_core::register::RigidTransform;
    use prismetric_core::Vector3;
    use tempfile::tempdir;

    /// Dense reference-surface sampling displaced by a small rigid motion —
    /// a stand-in for a registered scan.
    fn synthetic_scan(seed: u64, n: usize) -> PointCloud {
        let prism = ReferencePrism::standard();
        let cloud = sample_reference_surface(&prism, n, seed);
        let t = RigidTransform::rotation_about(Vector3::new(0.2, 1.0, -0.4), 0.05)
            .compose(&RigidTransform::translation(Vector3::new(3.0, -2.0, 1.5)));
        apply_transform(&cloud, &t)
    }

    #[test]
    fn specimen_analysis_recovers_a_displaced_surface_sample() {
        let reference = Reference::from_prism(ReferencePrism::standard(), 4000, 7);
        let scan = synthetic_scan(7, 4000);
        let cfg = PipelineConfig {
            downsample: 2000,
            icp: IcpConfig {
                max_iterations: 100,
                cost_change_tolerance: 1e-12,
            },
            ..PipelineConfig::default()
        };
        let analysis = analyze_specimen("s1", &scan, &reference, &cfg).unwrap();
        assert!(analysis.icp.converged);
        // Same seed produced the same surface points, so registration can
        // snap every scan point back onto the reference surface exactly.
        let max_abs = analysis
            .field
            .signed_distance_mm
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(max_abs < 1e-6, "max |deviation| {max_abs}");
        assert!((analysis.metrics.pai - 1.0).abs() < 5e-3);
        for grid in &analysis.grids {
            assert!(grid.is_fully_populated());
        }
    }

    #[test]
    fn report_bundle_has_expected_layout_and_is_deterministic() {
        let dir = tempdir().unwrap();
        let scans = dir.path().join("scans");
        fs::create_dir(&scans).unwrap();
        for (i, seed) in [3u64, 4].iter().enumerate() {
            let scan = synthetic_scan(*seed, 2500);
            write_xyz(&scan, &scans.join(format!("part{i}.xyz")), 6).unwrap();
        }
        let dosage = dir.path().join("dosages.csv");
        fs::write(&dosage, "11,29.52,0.06,1372,2\n30,63.94,0.55,1372,3\n").unwrap();
        let mech_dir = dir.path().join("mech_in");
        fs::create_dir(&mech_dir).unwrap();
        let mut tsv = String::from("machine\nexport\nheader\nlines\n");
        for i in 0..300 {
            // Displacement stored ×100 (percent convention), rising force
            // to a peak at sample 250 then softening.
            let force = if i <= 250 { 2.0 * i as f64 } else { 500.0 - 2.0 * (i - 250) as f64 };
            tsv.push_str(&format!("{}\t{}\n", i as f64, force));
        }
        fs::write(mech_dir.join("bend_11ms_1.tsv"), &tsv).unwrap();

        let reference = Reference::from_prism(ReferencePrism::standard(), 1500, 42);
        let cfg = PipelineConfig {
            downsample: 1500,
            ..PipelineConfig::default()
        };
        let run = |out: &Path| {
            let job = ReportJob {
                scan: Some(scans.clone()),
                dosage: Some(dosage.clone()),
                mech: Some(mech_dir.clone()),
                mech_options: MechOptions::default(),
                pitch_mm: 5.7,
                powder: PowderSpec::default(),
                out: out.to_path_buf(),
            };
            run_report(&job, &reference, &cfg).unwrap()
        };
        let out1 = dir.path().join("out1");
        let outcome = run(&out1);
        assert_eq!(outcome.specimens, 2);

        for rel in [
            "summary.json",
            "metrics.csv",
            "wc.csv",
            "wc.json",
            "grids/mean_px.csv",
            "grids/std_nz.csv",
            "specimens/part0/transform.json",
            "specimens/part0/deviation.csv",
            "specimens/part0/metrics.json",
            "specimens/part0/face_stats.csv",
            "specimens/part0/grids/py.csv",
            "specimens/part1/aligned.xyz",
            "mech.csv",
            "mech/bend_11ms_1.json",
        ] {
            assert!(out1.join(rel).is_file(), "missing {rel}");
        }
        let grid_files = fs::read_dir(out1.join("grids")).unwrap().count();
        assert_eq!(grid_files, 12);

        let out2 = dir.path().join("out2");
        run(&out2);
        let mut checked = 0;
        for rel in [
            "summary.json",
            "metrics.csv",
            "wc.csv",
            "mech.csv",
            "grids/mean_px.csv",
            "specimens/part1/deviation.csv",
        ] {
            assert_eq!(
                fs::read(out1.join(rel)).unwrap(),
                fs::read(out2.join(rel)).unwrap(),
                "{rel} differs between runs"
            );
            checked += 1;
        }
        assert_eq!(checked, 6);
    }

    #[test]
    fn nozzle_time_parses_from_common_stems() {
        assert_eq!(nozzle_time_from_name("bend_11ms_1"), Some(11.0));
        assert_eq!(nozzle_time_from_name("17ms"), Some(17.0));
        assert_eq!(nozzle_time_from_name("specimen-22.5ms-b"), Some(22.5));
        assert_eq!(nozzle_time_from_name("flexural_a"), None);
        assert_eq!(nozzle_time_from_name("ms"), None);
    }

    #[test]
    fn mech_groups_aggregate_and_order_by_time() {
        let fit = |e: f64, s: f64| ElasticFit {
            young_modulus_mpa: e,
            r_squared: 0.99,
            window_start: 0,
            window_len: 100,
            peak_stress_mpa: s,
        };
        let specimens = vec![
            MechSpecimen {
                name: "b_30ms_1".into(),
                group: "30ms".into(),
                nozzle_time_ms: Some(30.0),
                fit: fit(700.0, 5.0),
            },
            MechSpecimen {
                name: "b_11ms_1".into(),
                group: "11ms".into(),
                nozzle_time_ms: Some(11.0),
                fit: fit(800.0, 6.0),
            },
            MechSpecimen {
                name: "b_11ms_2".into(),
                group: "11ms".into(),
                nozzle_time_ms: Some(11.0),
                fit: fit(900.0, 8.0),
            },
            MechSpecimen {
                name: "odd".into(),
                group: "odd".into(),
                nozzle_time_ms: None,
                fit: fit(100.0, 1.0),
            },
        ];
        let groups = mech_groups(&specimens);
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[0].group, "11ms");
        assert_eq!(groups[0].n, 2);
        assert!((groups[0].e_mean_mpa - 850.0).abs() < 1e-12);
        assert!((groups[0].e_std_mpa.unwrap() - 50.0 * 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(groups[1].group, "30ms");
        assert_eq!(groups[1].e_std_mpa, None);
        assert_eq!(groups[2].group, "odd");
        let csv = mech_csv(&groups, 2);
        assert!(csv.contains("11ms,11.00,2,850.00,70.71,7.00,1.41"));
        assert!(csv.contains("odd,nan,1,100.00,nan,1.00,nan"));
    }

    #[test]
    fn missing_scan_path_is_a_usage_error() {
        let err = resolve_scans(Path::new("/definitely/not/here")).unwrap_err();
        assert!(matches!(err, PipelineError::Usage(_)));
    }
}
