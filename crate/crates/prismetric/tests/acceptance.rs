//! End-to-end acceptance checks, one per shipped guarantee. Each test
//! prints a single `[PASS]` line (visible with `--nocapture`) so the
//! whole gate reads as a checklist.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use prismetric::cloud::write_xyz;
use prismetric::records::read_dosage_csv;
use prismetric::stl::{read_stl, write_stl};
use prismetric_core::deviation::{deviation_field, SignedDistance};
use prismetric_core::dosage::{
    water_mass_per_part, wc_theoretical, wc_volume_corrected, PowderSpec,
};
use prismetric_core::mechanics::{fit_young_modulus, FitConfig, StressStrainCurve};
use prismetric_core::metrics::{chamfer, hausdorff, metrics_report, pai};
use prismetric_core::projection::project_all_faces;
use prismetric_core::register::{apply_transform, icp_align, IcpConfig, RigidTransform};
use prismetric_core::sample::sample_reference_surface;
use prismetric_core::voxel::{compensate, voxelize, CompensationPolicy};
use prismetric_core::{FaceLabel, Point3, PointCloud, ReferencePrism, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Deterministic lattice of face-interior points displaced along each
/// face's outward normal, with that normal attached to every point.
///
/// The margin keeps samples away from edges and corners, where a uniform
/// normal offset would no longer be the closest-surface distance.
fn offset_face_lattice(
    prism: &ReferencePrism,
    per_side: usize,
    margin_mm: f64,
    offset_mm: f64,
) -> PointCloud {
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for face in FaceLabel::ALL {
        let (du, dv) = prism.face_uv_dims(face);
        let normal = face.outward_normal();
        for iu in 0..per_side {
            for iv in 0..per_side {
                let u = margin_mm + (du - 2.0 * margin_mm) * (iu as f64 + 0.5) / per_side as f64;
                let v = margin_mm + (dv - 2.0 * margin_mm) * (iv as f64 + 0.5) / per_side as f64;
                points.push(prism.face_point(face, u, v) + normal * offset_mm);
                normals.push(normal);
            }
        }
    }
    PointCloud::with_normals(points, normals).expect("unit normals by construction")
}

// 1. Dosage table: water mass per part and flow rate for every recorded
//    nozzle time match the frozen expectations.
#[test]
fn dosage_table_water_mass_and_flow_match_recorded_values() {
    let rows = read_dosage_csv(&workspace_file("data/dosages.csv")).unwrap();
    assert_eq!(rows.len(), 7);
    let expected_water = [40.50, 40.47, 46.07, 56.06, 59.41, 70.42, 87.73];
    let expected_flow = [2.684, 1.967, 1.975, 2.043, 1.968, 2.053, 2.131];
    for ((row, &water), &flow) in rows.iter().zip(&expected_water).zip(&expected_flow) {
        let got = water_mass_per_part(row.record.droplet_mass_mg, row.record.voxel_count);
        assert!(
            (got - water).abs() <= 0.01,
            "{} ms: water {got} g, expected {water} g",
            row.record.nozzle_time_ms
        );
        let got_flow = row.record.flow_rate_mg_per_ms();
        assert!(
            (got_flow - flow).abs() <= 0.02,
            "{} ms: flow {got_flow}, expected {flow}",
            row.record.nozzle_time_ms
        );
    }
    println!("[PASS] water mass per part within ±0.01 g and flow within ±0.02 mg/ms for all 7 dosage rows");
}

// 2. Registration: 100 random rigid perturbations up to 20° / 20 mm are
//    recovered to better than 1e-6 mm RMS, within the iteration cap, with
//    monotone non-increasing cost.
#[test]
fn registration_recovers_random_rigid_motions_to_micron_rms() {
    let prism = ReferencePrism::standard();
    let config = IcpConfig {
        max_iterations: 100,
        cost_change_tolerance: 1e-12,
    };
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let cloud = sample_reference_surface(&prism, 600, trial);
        let axis = Vector3::new(
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        );
        let angle = rng.random::<f64>() * 20f64.to_radians();
        let shift = Vector3::new(
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
            rng.random::<f64>() * 2.0 - 1.0,
        ) * (20.0 / 3f64.sqrt());
        let mut motion = RigidTransform::rotation_about(axis, angle);
        motion.translation = shift;
        let perturbed = apply_transform(&cloud, &motion);

        let result = icp_align(&perturbed, &cloud, &config).unwrap();
        assert!(result.iterations <= 100, "trial {trial}");
        for pair in result.cost_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "trial {trial}: cost increased");
        }
        let aligned = apply_transform(&perturbed, &result.transform);
        let ms: f64 = aligned
            .points
            .iter()
            .zip(&cloud.points)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            / cloud.len() as f64;
        let rms = ms.sqrt();
        assert!(rms < 1e-6, "trial {trial}: RMS {rms} mm");
    }
    println!("[PASS] 100/100 rigid perturbations ≤20°/20 mm recovered below 1e-6 mm RMS with monotone cost");
}

// 3. Distance metrics agree with an O(n²) brute force to 1e-12; a cloud
//    scaled ×1.1 about the shared centroid scores an accuracy index of
//    exactly 1.1; identical clouds score (0, 0, 1, 0).
#[test]
fn distance_metrics_match_brute_force_and_scaled_pai_is_exact() {
    fn brute_directed(from: &PointCloud, to: &PointCloud) -> Vec<f64> {
        from.points
            .iter()
            .map(|a| {
                to.points
                    .iter()
                    .map(|b| (a - b).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for pair in 0..50 {
        let na = rng.random_range(1..=500);
        let nb = rng.random_range(1..=500);
        let mut cloud = |n: usize| {
            PointCloud::new(
                (0..n)
                    .map(|_| {
                        Point3::new(
                            rng.random::<f64>() * 160.0,
                            rng.random::<f64>() * 40.0,
                            rng.random::<f64>() * 40.0,
                        )
                    })
                    .collect(),
            )
        };
        let a = cloud(na);
        let b = cloud(nb);
        let d_ab = brute_directed(&a, &b);
        let d_ba = brute_directed(&b, &a);
        let h_bf = d_ab
            .iter()
            .chain(&d_ba)
            .fold(0.0f64, |m, &d| m.max(d));
        let c_bf = d_ab.iter().sum::<f64>() / na as f64 + d_ba.iter().sum::<f64>() / nb as f64;
        assert!(
            (hausdorff(&a, &b).unwrap() - h_bf).abs() <= 1e-12,
            "pair {pair}: hausdorff"
        );
        assert!(
            (chamfer(&a, &b).unwrap() - c_bf).abs() <= 1e-12,
            "pair {pair}: chamfer"
        );
    }

    let prism = ReferencePrism::standard();
    let mesh = prism.to_mesh();
    let samples = sample_reference_surface(&prism, 1200, 9);
    let centroid = mesh.surface_centroid().unwrap().coords;
    let scaled = PointCloud::new(
        samples
            .points
            .iter()
            .map(|p| Point3::from(centroid + (p.coords - centroid) * 1.1))
            .collect(),
    );
    let (ratio, spread) = pai(&scaled, &mesh).unwrap();
    assert!((ratio - 1.1).abs() <= 1e-9, "scaled ratio {ratio}");
    assert!(spread < 1e-9, "scaled spread {spread}");

    let report = metrics_report(&samples, &samples, &mesh).unwrap();
    assert!(report.hausdorff_mm.abs() <= 1e-9);
    assert!(report.chamfer_mm.abs() <= 1e-9);
    assert!((report.pai - 1.0).abs() <= 1e-9);
    assert!(report.s_pai <= 1e-9);

    println!("[PASS] 50 brute-force metric pairs within 1e-12; ×1.1 scaling scores 1.1±1e-9; identical clouds score (0, 0, 1, 0)");
}

// 4. Signed distances: points displaced ±1 mm off the faces measure
//    ±1.000 mm, and the inside/outside sign matches box containment on
//    10⁴ random probes.
#[test]
fn offset_surfaces_produce_unit_signed_distances_and_parity_agrees() {
    let prism = ReferencePrism::standard();
    let mesh = prism.to_mesh();
    let sdf = SignedDistance::new(&mesh).unwrap();

    let mut checked = 0usize;
    for offset in [1.0, -1.0] {
        let cloud = offset_face_lattice(&prism, 92, 1.5, offset);
        for &p in &cloud.points {
            let d = sdf.eval(p);
            assert!(
                (d - offset).abs() <= 1e-6,
                "offset {offset}: got {d} at {p:?}"
            );
            checked += 1;
        }
    }
    assert!(checked >= 100_000, "only {checked} offset points sampled");

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let dims = prism.dims;
    for _ in 0..10_000 {
        let p = Point3::new(
            prism.origin.x - 10.0 + rng.random::<f64>() * (dims.x + 20.0),
            prism.origin.y - 10.0 + rng.random::<f64>() * (dims.y + 20.0),
            prism.origin.z - 10.0 + rng.random::<f64>() * (dims.z + 20.0),
        );
        assert_eq!(sdf.contains(p), prism.contains(p), "parity mismatch at {p:?}");
    }

    println!("[PASS] {checked} ±1 mm offset points measure ±1.000±1e-6 mm; parity matches containment on 10000/10000 probes");
}

// 5. Projection: a uniformly +1 mm inflated scan projects to +1.000 on
//    every node of all six face grids, and with normal filtering on, no
//    node is sourced from a point of a foreign face.
#[test]
fn inflated_scan_projects_to_uniform_unit_grids_with_on_face_sources() {
    let prism = ReferencePrism::standard();
    let mesh = prism.to_mesh();
    let scan = offset_face_lattice(&prism, 92, 1.5, 1.0);
    let field = deviation_field(&scan, &mesh, &prism).unwrap();
    let grids = project_all_faces(&field, &prism, 1.0, Some(45.0)).unwrap();

    let mut nodes = 0usize;
    for grid in &grids {
        assert!(grid.is_fully_populated(), "{} grid has gaps", grid.face.as_str());
        for (value, source) in grid.values.iter().zip(&grid.sources) {
            let value = value.expect("fully populated");
            assert!(
                (value - 1.0).abs() <= 1e-6,
                "{}: node value {value}",
                grid.face.as_str()
            );
            let source = source.expect("populated node records its source") as usize;
            assert_eq!(
                field.face[source],
                grid.face,
                "{}: node sourced from a foreign face",
                grid.face.as_str()
            );
            nodes += 1;
        }
    }
    println!("[PASS] all {nodes} grid nodes on 6 faces read +1.000±1e-6 with every source on its own face");
}

// 6. Voxelization: the reference prism, round-tripped through a mesh
//    file, fills exactly 28×7×7 cells at the 5.7 mm pitch; global shrink
//    compensation leaves a 27×6×6 occupied block.
#[test]
fn voxelization_counts_and_global_shrink_match_reference_grids() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("prism.stl");
    let prism = ReferencePrism::standard();
    write_stl(&prism.to_mesh(), &path).unwrap();
    let mesh = read_stl(&path).unwrap();
    let origin = mesh.bounds().unwrap().0;

    let model = voxelize(&mesh, 5.7, origin, 30.0).unwrap();
    assert_eq!((model.nx, model.ny, model.nz), (28, 7, 7));
    assert_eq!(model.occupied_count(), 28 * 7 * 7);

    let policy = CompensationPolicy {
        global_shrink: true,
        ..CompensationPolicy::for_pitch(5.7)
    };
    let outcome = compensate(&model, &[], &policy).unwrap();
    assert_eq!(outcome.model.occupied_count(), 27 * 6 * 6);
    let ((lo_x, lo_y, lo_z), (hi_x, hi_y, hi_z)) = outcome.model.occupied_extent().unwrap();
    assert_eq!(
        (hi_x - lo_x + 1, hi_y - lo_y + 1, hi_z - lo_z + 1),
        (27, 6, 6)
    );
    assert!(!outcome.connectivity_warning);

    println!("[PASS] mesh round-trip voxelizes to 28x7x7 = 1372 cells; global shrink leaves a 27x6x6 block");
}

// 7. Modulus fit: a noiseless line is recovered exactly (R² = 1); a
//    bilinear curve with elastic slope 796.8 MPa plus ±0.5% noise is
//    recovered within 2% over 100 seeds, never fitting past the peak.
#[test]
fn modulus_fit_is_exact_on_lines_and_robust_to_noise() {
    const E_TRUE: f64 = 796.8;
    let fit_config = FitConfig {
        window_len: 100,
        stride: 1,
        slope_floor: 0.5,
    };

    let strain: Vec<f64> = (0..400).map(|i| i as f64 * 1e-5).collect();
    let stress: Vec<f64> = strain.iter().map(|&e| E_TRUE * e).collect();
    let line = StressStrainCurve {
        strain: strain.clone(),
        stress_mpa: stress,
    };
    let fit = fit_young_modulus(&line, &fit_config).unwrap();
    assert!(
        (fit.young_modulus_mpa - E_TRUE).abs() <= 1e-9 * E_TRUE,
        "noiseless slope {}",
        fit.young_modulus_mpa
    );
    assert!((fit.r_squared - 1.0).abs() <= 1e-12);

    // Elastic to 3e-3 strain, hardening at a shallower slope to the peak,
    // then a falling branch.
    let bilinear = |e: f64| -> f64 {
        let knee = 3e-3;
        let peak = 5e-3;
        if e <= knee {
            E_TRUE * e
        } else if e <= peak {
            E_TRUE * knee + 150.0 * (e - knee)
        } else {
            E_TRUE * knee + 150.0 * (peak - knee) - 900.0 * (e - peak)
        }
    };
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let strain: Vec<f64> = (0..600).map(|i| i as f64 * 1e-5).collect();
        let stress: Vec<f64> = strain
            .iter()
            .map(|&e| bilinear(e) * (1.0 + (rng.random::<f64>() * 2.0 - 1.0) * 0.005))
            .collect();
        let peak_idx = stress
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        let curve = StressStrainCurve {
            strain,
            stress_mpa: stress,
        };
        let fit = fit_young_modulus(&curve, &fit_config).unwrap();
        let rel = (fit.young_modulus_mpa - E_TRUE).abs() / E_TRUE;
        assert!(rel <= 0.02, "seed {seed}: E off by {:.3}%", rel * 100.0);
        assert!(
            fit.window_start + fit.window_len <= peak_idx + 1,
            "seed {seed}: window crosses the stress peak"
        );
    }
    println!("[PASS] noiseless modulus exact with R²=1; 100 noisy seeds within 2% of 796.8 MPa, window never past the peak");
}

// 8. Water-to-cement arithmetic: the corrected ratio is exactly
//    γ × theoretical, the theoretical ratio is linear in droplet mass,
//    and the frozen constants give 0.815 for the 63.94 mg dosage.
#[test]
fn wc_arithmetic_is_consistent_and_matches_recorded_constants() {
    let powder = PowderSpec::new(1695.0, 0.25).unwrap();
    for mass in [10.0, 29.52, 40.86, 63.94, 80.0] {
        let theo = wc_theoretical(mass, 5.7, &powder);
        for (v_real, v_ref) in [(1.0, 1.0), (0.9, 1.2), (254_000.0, 250_000.0)] {
            let (gamma, corrected) = wc_volume_corrected(theo, v_real, v_ref);
            assert_eq!(
                corrected.to_bits(),
                (gamma * theo).to_bits(),
                "corrected must be exactly gamma × theo"
            );
        }
        let doubled = wc_theoretical(2.0 * mass, 5.7, &powder);
        assert!((doubled - 2.0 * theo).abs() <= 1e-12 * doubled.abs());
    }
    let halves = wc_theoretical(29.52, 5.7, &powder) + wc_theoretical(34.42, 5.7, &powder);
    let joint = wc_theoretical(29.52 + 34.42, 5.7, &powder);
    assert!((halves - joint).abs() <= 1e-12 * joint.abs());

    let heaviest = wc_theoretical(63.94, 5.7, &powder);
    assert!(
        (heaviest - 0.815).abs() <= 0.005,
        "63.94 mg gives w/c {heaviest}, expected 0.815±0.005"
    );
    println!("[PASS] corrected w/c is bit-exactly γ×theoretical, theoretical is linear in dose, 63.94 mg → 0.815±0.005");
}

// 9. Determinism: two invocations of the report command on the same
//    fixture tree produce byte-identical output bundles.
#[test]
fn report_runs_are_byte_identical_across_invocations() {
    fn collect_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
        fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
            let mut entries: Vec<_> = fs::read_dir(dir)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            entries.sort();
            for path in entries {
                if path.is_dir() {
                    walk(root, &path, out);
                } else {
                    let rel = path
                        .strip_prefix(root)
                        .unwrap()
                        .to_string_lossy()
                        .into_owned();
                    out.insert(rel, fs::read(&path).unwrap());
                }
            }
        }
        let mut out = BTreeMap::new();
        walk(root, root, &mut out);
        out
    }

    let dir = tempdir().unwrap();
    let scans = dir.path().join("scans");
    fs::create_dir(&scans).unwrap();
    let prism = ReferencePrism::standard();
    for (i, seed) in [11u64, 23].iter().enumerate() {
        let cloud = sample_reference_surface(&prism, 2200, *seed);
        let mut motion = RigidTransform::rotation_about(Vector3::new(0.1, 0.9, -0.3), 0.04);
        motion.translation = Vector3::new(2.0, -1.5, 1.0 + i as f64);
        write_xyz(
            &apply_transform(&cloud, &motion),
            &scans.join(format!("part_{i}.xyz")),
            6,
        )
        .unwrap();
    }
    let dosage = dir.path().join("dosages.csv");
    fs::copy(workspace_file("data/dosages.csv"), &dosage).unwrap();
    let curves = dir.path().join("curves");
    fs::create_dir(&curves).unwrap();
    let mut tsv = String::from("machine\nexport\nheader\nlines\n");
    for i in 0..300 {
        let d = i as f64 * 0.002;
        let f = if i <= 250 {
            360.0 * d
        } else {
            360.0 * 0.5 - 120.0 * (d - 0.5)
        };
        tsv.push_str(&format!("{:.4}\t{:.4}\n", d * 100.0, f));
    }
    fs::write(curves.join("bend_17ms_1.tsv"), &tsv).unwrap();

    let run = |out: &Path| {
        let output = Command::new(env!("CARGO_BIN_EXE_prismetric"))
            .args([
                "report",
                "--scan",
                scans.to_str().unwrap(),
                "--dosage",
                dosage.to_str().unwrap(),
                "--mech",
                curves.to_str().unwrap(),
                "--seed",
                "42",
                "--downsample",
                "1500",
                "--reference-samples",
                "800",
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        let code = output.status.code().unwrap();
        assert!(
            code == 0 || code == 2,
            "report failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        code
    };

    let out_a = dir.path().join("run_a");
    let out_b = dir.path().join("run_b");
    let code_a = run(&out_a);
    let code_b = run(&out_b);
    assert_eq!(code_a, code_b);

    let tree_a = collect_tree(&out_a);
    let tree_b = collect_tree(&out_b);
    let names_a: Vec<&String> = tree_a.keys().collect();
    let names_b: Vec<&String> = tree_b.keys().collect();
    assert_eq!(names_a, names_b);
    assert!(tree_a.len() >= 20, "only {} files in bundle", tree_a.len());
    for (name, bytes) in &tree_a {
        assert_eq!(bytes, &tree_b[name], "{name} differs between runs");
    }
    println!(
        "[PASS] two report runs at seed 42 produced byte-identical bundles ({} files)",
        tree_a.len()
    );
}
