use std::path::Path;
use std::process::{Command, Output};

use spineseg::sidecar;
use spineseg::LabelTaxonomy;

fn spineseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spineseg")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn via_doc() -> String {
    serde_json::json!({
        "_via_img_metadata": {
            "a.png123": {
                "filename": "a.png",
                "size": 123,
                "regions": [
                    {"shape_attributes": {"name": "polygon", "all_points_x": [0, 4, 4, 0], "all_points_y": [0, 0, 3, 3]},
                     "region_attributes": {"class": "vertebra_lumbar"}},
                    {"shape_attributes": {"name": "polygon", "all_points_x": [2, 6, 6, 2], "all_points_y": [2, 2, 6, 6]},
                     "region_attributes": {"class": "cage"}}
                ]
            },
            "b.png9": {
                "filename": "b.png",
                "size": 9,
                "regions": [
                    {"shape_attributes": {"name": "circle", "cx": 3, "cy": 3, "r": 2},
                     "region_attributes": {"class": "vertebra_lumbar"}}
                ]
            }
        }
    })
    .to_string()
}

#[test]
fn rasterize_reports_bad_images_and_keeps_good_ones() {
    let dir = tempfile::tempdir().unwrap();
    let via = dir.path().join("export.json");
    std::fs::write(&via, via_doc()).unwrap();
    let out = dir.path().join("masks");
    let o = spineseg(&["rasterize", p(&via), "--out", p(&out), "--width", "8", "--height", "8", "--instance-pngs"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("b: ") && err.contains("circle"), "{err}");
    assert!(!err.contains("a: "));

    let mask = image::open(out.join("a.png")).unwrap().into_luma8();
    assert_eq!(mask.dimensions(), (8, 8));
    assert_eq!(mask.get_pixel(0, 0).0[0], 1);
    // the cage is painted last and wins the overlap
    assert_eq!(mask.get_pixel(3, 2).0[0], 3);
    assert_eq!(mask.get_pixel(7, 7).0[0], 0);
    let inst = image::open(out.join("a.instance2.png")).unwrap().into_luma8();
    assert_eq!(inst.pixels().filter(|px| px.0[0] == 255).count(), 16);

    let text = std::fs::read_to_string(out.join("a.json")).unwrap();
    let ls = sidecar::from_json(&text, &LabelTaxonomy::default(), None).unwrap();
    assert_eq!(ls.set.len(), 2);
    assert_eq!(ls.set.instances()[0].mask.count(), 12);
    assert!(!out.join("b.png").exists());
    // nothing left behind by the atomic writes
    let names: Vec<String> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert!(names.iter().all(|n| n.starts_with("a.")), "{names:?}");
}

#[test]
fn rasterize_reads_sizes_from_the_image_directory() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("img");
    std::fs::create_dir(&images).unwrap();
    image::GrayImage::new(10, 7).save(images.join("a.png")).unwrap();
    let doc = serde_json::json!({"a.png1": {"filename": "a.png", "regions": [
        {"shape_attributes": {"name": "polyline", "all_points_x": [0, 4, 4, 0], "all_points_y": [0, 0, 3, 3]},
         "region_attributes": {"class": "vertebra_sacral"}}]}});
    let via = dir.path().join("v.json");
    std::fs::write(&via, doc.to_string()).unwrap();
    let out = dir.path().join("m");
    let o = spineseg(&["rasterize", p(&via), "--out", p(&out), "--images", p(&images)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(image::open(out.join("a.png")).unwrap().into_luma8().dimensions(), (10, 7));

    let o = spineseg(&["rasterize", p(&via), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a: "));
}

#[test]
fn synthetic_pipeline_recovers_construction_lordosis() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("run.toml");
    std::fs::write(&cfg, "seed = 40\nworkers = 2\n[synth]\nlordosis_curve = 35.0\n[perturb]\njitter = 1.0\n").unwrap();
    let c = p(&cfg);
    let fx = d.join("fx");
    assert!(spineseg(&["--config", c, "synth", "--out", p(&fx), "--count", "3"]).status.success());

    // semantic masks → instances → labels → measurements
    let inst = d.join("inst");
    let o = spineseg(&["--config", c, "instances", p(&fx.join("gt")), "--out", p(&inst)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lab = d.join("lab");
    let o = spineseg(&["--config", c, "label", p(&inst), "--out", p(&lab)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = d.join("morph");
    let o = spineseg(&["--config", c, "morph", p(&lab), "--out", p(&m)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut rdr = csv::Reader::from_path(m.join("lordosis.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let measured: f64 = row[1].parse().unwrap();
        let truth: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(fx.join("truth").join(format!("{}.json", &row[0]))).unwrap()).unwrap();
        let expected = truth["lordosis_angle"].as_f64().unwrap();
        assert!((expected - 35.0).abs() < 1e-9);
        assert!((measured - expected).abs() < 2.0, "{measured} vs {expected}");
    }
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(m.join("synth_0000.morph.json")).unwrap()).unwrap();
    assert_eq!(record["vertebrae"].as_array().unwrap().len(), 6);
    assert_eq!(record["gaps"].as_array().unwrap().len(), 5);

    let png = d.join("overlay.png");
    let o = spineseg(&["overlay", p(&lab.join("synth_0000.json")), "--out", p(&png)]);
    assert!(o.status.success());
    assert_eq!(image::open(&png).unwrap().into_rgb8().dimensions(), (256, 448));
}

#[test]
fn eval_flags_override_config_and_report_combines_models() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fx = d.join("fx");
    assert!(spineseg(&["--seed", "3", "synth", "--out", p(&fx), "--count", "2"]).status.success());
    let cfg = d.join("run.toml");
    std::fs::write(&cfg, "mode = \"binary\"\n").unwrap();
    let ev = d.join("ev");
    let o = spineseg(&["--config", p(&cfg), "--mode", "per_class", "eval", "--gt", p(&fx.join("gt")), "--pred", p(&fx.join("pred")), "--out", p(&ev)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv_text = std::fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let header = csv_text.lines().next().unwrap();
    assert_eq!(
        header,
        "image_id,pixel_accuracy,mean_accuracy,mean_iou,fw_iou,iou_background,iou_vertebra_lumbar,iou_vertebra_sacral,iou_cage,iou_screw,iou_instrumentation"
    );
    // no implants in the default spec: their IoU cells are empty
    assert!(csv_text.lines().nth(1).unwrap().ends_with(",,,"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("Pixel Accuracy Average"));

    let rep = d.join("rep");
    let a = format!("U-Net={}", p(&ev.join("metrics.csv")));
    let b = format!("YOLACT={}", p(&ev.join("metrics.csv")));
    let o = spineseg(&["report", "--model", &a, "--model", &b, "--out", p(&rep)]);
    assert!(o.status.success());
    let table = std::fs::read_to_string(rep.join("report.csv")).unwrap();
    assert!(table.starts_with("metric,U-Net,YOLACT\nPixel Accuracy Average,100.00,100.00\n"), "{table}");

    let bad = spineseg(&["--workers", "0", "eval", "--gt", p(&fx.join("gt")), "--pred", p(&fx.join("pred")), "--out", p(&ev)]);
    assert_eq!(bad.status.code(), Some(2));
}
