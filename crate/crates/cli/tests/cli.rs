use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drr_core::geometry::mesh_io::to_obj_string;
use drr_core::geometry::primitives::{ellipsoid, icosphere};
use drr_core::geometry::Vec3;
use drr_core::io::read_pfm;

fn drr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drr"))
        .args(args)
        .env_remove("DRR_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Demo scene in a fresh temp directory.
fn demo(seed: u64) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("demo");
    let o = drr(&["synth-model", "--out", s(&root), "--demo-scene", "--seed", &seed.to_string()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (dir, root)
}

/// Mesh-only scene sharing the demo camera, spectrum and materials.
fn mesh_scene(root: &Path, name: &str, objects: &[(&str, drr_core::geometry::TriangleMesh)], air_mu_zero: bool) -> PathBuf {
    let mut text = String::from("seed = 1\noutput_dir = \"out_");
    text.push_str(name);
    text.push_str("\"\nspectrum = \"spectrum.csv\"\n[camera]\nmatrix = \"P.txt\"\ndetector = \"detector.toml\"\n[materials]\n");
    if air_mu_zero {
        std::fs::write(root.join("mu_vacuum.csv"), "energy_keV,mu\n10,0\n").unwrap();
        text.push_str("air = \"mu_vacuum.csv\"\n");
    } else {
        text.push_str("air = \"mu_air.csv\"\n");
    }
    text.push_str("body = \"mu_body.csv\"\nbones = \"mu_bones.csv\"\n");
    for (i, (label, mesh)) in objects.iter().enumerate() {
        let file = format!("{name}_{i}.obj");
        std::fs::write(root.join(&file), to_obj_string(mesh)).unwrap();
        text.push_str(&format!("[[objects]]\nmesh = \"{file}\"\nlabel = \"{label}\"\n"));
    }
    let path = root.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&drr(&["--help"])), 0);
    assert_eq!(code(&drr(&["render", "--help"])), 0);
    assert_eq!(code(&drr(&[])), 1);
    assert_eq!(code(&drr(&["render", "--bogus"])), 1);
    assert_eq!(code(&drr(&["gradcheck", "--stage", "nope"])), 1);
}

#[test]
fn render_writes_outputs_and_is_reproducible() {
    let (_tmp, root) = demo(2);
    let scene = root.join("scene.toml");
    let a = root.join("a");
    let b = root.join("b");
    assert_eq!(code(&drr(&["render", "--scene", s(&scene), "--out", s(&a), "--npy", "--threads", "1"])), 0);
    assert_eq!(code(&drr(&["render", "--scene", s(&scene), "--out", s(&b), "--threads", "4"])), 0);
    for f in ["transmission.pfm", "transmission.npy", "transmission.png", "manifest.json", "distance_00_body.pfm", "distance_01_bones_valid.pgm"] {
        assert!(a.join(f).exists(), "{f}");
    }
    for f in ["transmission.pfm", "distance_00_body.pfm", "distance_01_bones.pfm", "transmission.png"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let ma: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value = serde_json::from_slice(&std::fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["seed"], 2);
    assert_eq!(ma["threads"], 1);
    assert_eq!(mb["threads"], 4);
    assert_ne!(ma["config_hash"], mb["config_hash"], "--npy changes the run");
    assert!(ma["outputs"].as_array().unwrap().iter().any(|o| o == "transmission.pfm"));
}

#[test]
fn thread_env_var_sets_default() {
    let (_tmp, root) = demo(0);
    let out = root.join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_drr"))
        .args(["render", "--scene", s(&root.join("scene.toml")), "--out", s(&out)])
        .env("DRR_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["threads"], 3);
}

#[test]
fn empty_scene_is_unattenuated_spectrum() {
    let (_tmp, root) = demo(0);
    let scene = mesh_scene(&root, "empty", &[], true);
    assert_eq!(code(&drr(&["render", "--scene", s(&scene)])), 0);
    let img = read_pfm(root.join("out_empty/transmission.pfm")).unwrap();
    // demo spectrum weights sum to 1
    assert!(img.data().iter().all(|v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn nested_object_shadow_is_darker() {
    let (_tmp, root) = demo(0);
    let body = ellipsoid(Vec3::new(0.0, 0.0, 0.0), Vec3::new(50.0, 35.0, 30.0), 3, "body");
    let bone = ellipsoid(Vec3::new(5.0, -3.0, 2.0), Vec3::new(20.0, 10.0, 12.0), 2, "bones");
    let with = mesh_scene(&root, "with", &[("body", body.clone()), ("bones", bone)], false);
    let without = mesh_scene(&root, "without", &[("body", body)], false);
    assert_eq!(code(&drr(&["render", "--scene", s(&with)])), 0);
    assert_eq!(code(&drr(&["render", "--scene", s(&without)])), 0);
    let a = read_pfm(root.join("out_with/transmission.pfm")).unwrap();
    let b = read_pfm(root.join("out_without/transmission.pfm")).unwrap();
    let bone_l = read_pfm(root.join("out_with/distance_01_bones.pfm")).unwrap();
    let mut overlap = 0;
    for i in 0..a.len() {
        if bone_l.data()[i] > 0.1 {
            overlap += 1;
            assert!(a.data()[i] < b.data()[i]);
        } else {
            assert!((a.data()[i] - b.data()[i]).abs() <= 1e-6 * b.data()[i]);
        }
    }
    assert!(overlap > 50);
}

#[test]
fn bone_outside_body_is_a_containment_error() {
    let (_tmp, root) = demo(0);
    let body = icosphere(Vec3::new(-30.0, 0.0, 0.0), 20.0, 2, "body");
    let bone = icosphere(Vec3::new(30.0, 0.0, 0.0), 10.0, 2, "bones");
    let scene = mesh_scene(&root, "bad", &[("body", body), ("bones", bone)], false);
    let o = drr(&["render", "--scene", s(&scene)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("containment") && stderr(&o).contains("pixel ("), "{}", stderr(&o));
}

#[test]
fn missing_scene_file_is_reported() {
    let (_tmp, root) = demo(0);
    std::fs::remove_file(root.join("mu_bones.csv")).unwrap();
    let o = drr(&["render", "--scene", s(&root.join("scene.toml"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mu_bones.csv"));
}

#[test]
fn self_target_registration_converges_in_place() {
    let (_tmp, root) = demo(4);
    let out = root.join("reg");
    let o = drr(&[
        "register", "--scene", s(&root.join("scene.toml")), "--target", s(&root.join("target.pfm")),
        "--truth", s(&root.join("truth.toml")), "--perturb", "t=0,r=0", "--out", s(&out), "--dump-iterations",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["stop_reason"], "converged");
    assert!(report["metrics"]["final_translation_error_mm"].as_f64().unwrap() < 1e-9);
    assert!(report["metrics"]["final_hausdorff_mm"].as_f64().unwrap() < 1e-9);
    assert!(out.join("iter_0000_image.pfm").exists() && out.join("iter_0000_ngc.pfm").exists());
    assert!(out.join("final_params.toml").exists());
}

#[test]
fn iteration_cap_exits_three() {
    let (_tmp, root) = demo(5);
    let o = drr(&[
        "register", "--scene", s(&root.join("scene.toml")), "--target", s(&root.join("target.pfm")),
        "--perturb", "t=10,r=5", "--max-iterations", "3", "--out", s(&root.join("cap")),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(root.join("cap/report.json").exists());
}

#[test]
fn target_size_mismatch_exits_one() {
    let (_tmp, root) = demo(0);
    let small = root.join("small.pfm");
    drr_core::io::write_pfm(&small, &drr_core::image::Image::filled(10, 10, 0.5)).unwrap();
    let o = drr(&["register", "--scene", s(&root.join("scene.toml")), "--target", s(&small), "--out", s(&root.join("x"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("dimension"));
}

#[test]
fn gradcheck_stages_pass() {
    for stage in ["compositor", "ngc", "raster", "full"] {
        let o = drr(&["gradcheck", "--stage", stage, "--samples", "8"]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stdout));
        assert!(String::from_utf8_lossy(&o.stdout).contains("0 fail"));
    }
}

#[test]
fn metrics_between_params() {
    let (_tmp, root) = demo(1);
    let truth = root.join("truth.toml");
    let o = drr(&["metrics", "--model", s(&root.join("model")), "--params-a", s(&truth), "--params-b", s(&truth)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(m["hausdorff_mm"].as_f64().unwrap() < 1e-9);
    assert!(m["rotation_error_deg"].as_f64().unwrap() < 1e-9);
    let t = root.join("target.pfm");
    let o = drr(&["metrics", "--images", s(&t), s(&t)]);
    let m: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((m["ngc"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(code(&drr(&["metrics"])), 1);
}
