use std::fs;
use std::path::{Path, PathBuf};

use holocyte::manifest::{self, Manifest, NucleusStatus, RunStatus};
use holocyte::report::read_report;
use holocyte::stages;
use holocyte::tables;

fn run(args: &[&str]) -> u8 {
    let mut full = vec!["holocyte", "--threads", "2"];
    full.extend_from_slice(args);
    holocyte::cli::run(full)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small frames and radii so every stage runs in well under a second.
fn small_config(dir: &Path, per_class: usize, max_drop: f64) -> PathBuf {
    let mut text = format!(
        "seed = 11\n\
         [optical]\nwidth = 64\nheight = 64\n\
         [analysis]\nmax_drop_fraction = {max_drop}\n"
    );
    for class in ["smooth-small", "smooth-large", "textured-abnormal"] {
        text.push_str(&format!(
            "[[population]]\nclass = \"{class}\"\ncount = {per_class}\n\
             nucleus_radius = [19.0, 21.0]\ncenter_jitter = 2.0\n"
        ));
    }
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path
}

fn simulate(dir: &Path, cfg: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    assert_eq!(run(&["simulate", "--config", p(cfg), "--out", p(&out)]), 0);
    out
}

#[test]
fn simulate_writes_one_directory_per_nucleus() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("one.toml");
    fs::write(
        &cfg,
        "[optical]\nwidth = 64\nheight = 64\n[[population]]\nclass = \"smooth-large\"\ncount = 1\nnucleus_radius = 20.0\n",
    )
    .unwrap();
    let out = simulate(tmp.path(), &cfg, "sim");
    let mut names: Vec<String> = manifest::list_files(&out)
        .unwrap()
        .iter()
        .map(|f| {
            f.strip_prefix(&out)
                .unwrap()
                .to_string_lossy()
                .replace('\\', "/")
        })
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "calibration.qpif",
            "n0000/brightfield.png",
            "n0000/hologram.qpif",
            "n0000/mask_truth.png",
            "n0000/phase_truth.qpif",
        ]
    );
    assert!(out.join("manifest.json").is_file());
    assert!(manifest::verify(&out).unwrap().is_empty());
}

#[test]
fn simulate_is_reproducible_and_counts_match() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 50, 0.2);
    let a = simulate(tmp.path(), &cfg, "a");
    let b = simulate(tmp.path(), &cfg, "b");
    let ma = Manifest::read(&a).unwrap();
    let mb = Manifest::read(&b).unwrap();
    assert_eq!(ma.nuclei.len(), 150);
    assert_eq!(
        ma.outputs()
            .map(|f| (&f.path, &f.sha256))
            .collect::<Vec<_>>(),
        mb.outputs()
            .map(|f| (&f.path, &f.sha256))
            .collect::<Vec<_>>()
    );
    assert_eq!(ma.outputs().count(), 1 + 4 * 150);
    for class in ["smooth-small", "smooth-large", "textured-abnormal"] {
        assert_eq!(
            ma.nuclei.iter().filter(|n| n.class_label == class).count(),
            50
        );
    }

    // A different seed changes the holograms.
    let c = tmp.path().join("c");
    assert_eq!(
        run(&[
            "simulate",
            "--config",
            p(&cfg),
            "--out",
            p(&c),
            "--seed",
            "12"
        ]),
        0
    );
    let mc = Manifest::read(&c).unwrap();
    assert_ne!(ma.config_sha256, mc.config_sha256);
    let h = |m: &Manifest| {
        m.outputs()
            .find(|f| f.path == "n0000/hologram.qpif")
            .unwrap()
            .sha256
            .clone()
    };
    assert_ne!(h(&ma), h(&mc));
}

#[test]
fn reconstruct_without_calibration_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 1, 0.2);
    let sim = simulate(tmp.path(), &cfg, "sim");
    fs::remove_file(sim.join(stages::CALIBRATION)).unwrap();
    let out = tmp.path().join("rec");
    assert_eq!(
        run(&[
            "reconstruct",
            "--config",
            p(&cfg),
            "--dataset",
            p(&sim),
            "--out",
            p(&out)
        ]),
        2
    );
    // No dataset at all.
    assert_eq!(
        run(&[
            "reconstruct",
            "--dataset",
            p(&tmp.path().join("nope")),
            "--out",
            p(&out)
        ]),
        2
    );
    // Malformed configuration.
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[optical]\nwidth = 0\n").unwrap();
    assert_eq!(run(&["simulate", "--config", p(&bad), "--out", p(&out)]), 2);
    fs::write(&bad, "unknown_key = 1\n").unwrap();
    assert_eq!(run(&["simulate", "--config", p(&bad), "--out", p(&out)]), 2);
    assert_eq!(run(&["no-such-command"]), 2);
}

#[test]
fn both_methods_write_phase_and_only_opt_writes_a_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 1, 0.2);
    let sim = simulate(tmp.path(), &cfg, "sim");
    for method in ["opt", "fourier"] {
        let out = tmp.path().join(method);
        let args = [
            "reconstruct",
            "--config",
            p(&cfg),
            "--dataset",
            p(&sim),
            "--out",
            p(&out),
            "--method",
            method,
        ];
        assert_eq!(run(&args), 0);
        for i in 0..3 {
            let dir = out.join(format!("n{i:04}"));
            assert!(dir.join(stages::PHASE).is_file());
            assert_eq!(dir.join(stages::TRACE).is_file(), method == "opt");
        }
        assert!(manifest::verify(&out).unwrap().is_empty());
    }
    let totals =
        tables::read_trace_totals(&tmp.path().join("opt/n0001").join(stages::TRACE)).unwrap();
    assert!(totals.len() >= 2);
    for w in totals.windows(2) {
        assert!(w[1] <= w[0], "cost rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn standalone_stages_chain_and_brightfield_analysis_has_ten_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 4, 0.2);
    let c = p(&cfg);
    let t = tmp.path();
    let sim = simulate(t, &cfg, "sim");
    let (rec, seg, feat) = (t.join("rec"), t.join("seg"), t.join("feat"));
    assert_eq!(
        run(&[
            "reconstruct",
            "--config",
            c,
            "--dataset",
            p(&sim),
            "--out",
            p(&rec)
        ]),
        0
    );
    assert_eq!(
        run(&[
            "segment",
            "--config",
            c,
            "--dataset",
            p(&sim),
            "--out",
            p(&seg)
        ]),
        0
    );
    assert_eq!(
        run(&[
            "features",
            "--config",
            c,
            "--dataset",
            p(&sim),
            "--phase",
            p(&rec),
            "--masks",
            p(&seg),
            "--out",
            p(&feat)
        ]),
        0
    );
    let csv = feat.join(stages::FEATURES);
    let table = tables::read_features(&csv).unwrap();
    assert_eq!(table.matrix.n_rows(), 12);
    assert_eq!(table.matrix.n_cols(), 19);

    for (columns, width) in [("all", 19), ("brightfield", 10)] {
        let out = t.join(columns);
        assert_eq!(
            run(&[
                "analyze",
                "--config",
                c,
                "--features",
                p(&csv),
                "--out",
                p(&out),
                "--columns",
                columns
            ]),
            0
        );
        let report = read_report(&out.join("report.json")).unwrap();
        assert_eq!(report.columns.len(), width);
        assert_eq!(report.n_nuclei, 12);
        let svg = fs::read_to_string(out.join("scatter.svg")).unwrap();
        assert_eq!(svg.matches("<circle").count(), 12);
        let scores = fs::read_to_string(out.join("scores.csv")).unwrap();
        assert_eq!(
            scores.lines().next().unwrap(),
            "nucleus_id,PC1,PC2,class_label"
        );
        assert_eq!(scores.lines().count(), 13);
        assert!(manifest::verify(&out).unwrap().is_empty());
    }
}

#[test]
fn features_drop_nuclei_without_phase_and_enforce_the_drop_limit() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let strict = small_config(t, 2, 0.2);
    let lenient_dir = t.join("lenient");
    fs::create_dir(&lenient_dir).unwrap();
    let lenient = small_config(&lenient_dir, 2, 0.5);
    let sim = simulate(t, &strict, "sim");
    let (rec, seg) = (t.join("rec"), t.join("seg"));
    let c = p(&strict);
    assert_eq!(
        run(&[
            "reconstruct",
            "--config",
            c,
            "--dataset",
            p(&sim),
            "--out",
            p(&rec),
            "--method",
            "fourier"
        ]),
        0
    );
    assert_eq!(
        run(&[
            "segment",
            "--config",
            c,
            "--dataset",
            p(&sim),
            "--out",
            p(&seg)
        ]),
        0
    );
    // Two of six phase maps go missing: 33% dropped.
    fs::remove_file(rec.join("n0001").join(stages::PHASE)).unwrap();
    fs::remove_file(rec.join("n0004").join(stages::PHASE)).unwrap();

    let out = t.join("strict");
    let args = |cfg: &Path, out: &Path| {
        vec![
            "features".to_string(),
            "--config".into(),
            p(cfg).into(),
            "--dataset".into(),
            p(&sim).into(),
            "--phase".into(),
            p(&rec).into(),
            "--masks".into(),
            p(&seg).into(),
            "--out".into(),
            p(out).into(),
        ]
    };
    let mut a = vec!["holocyte".to_string()];
    a.extend(args(&strict, &out));
    assert_eq!(holocyte::cli::run(a), 1);

    let out = t.join("lenient-out");
    let mut a = vec!["holocyte".to_string()];
    a.extend(args(&lenient, &out));
    assert_eq!(holocyte::cli::run(a), 0);
    let m = Manifest::read(&out).unwrap();
    let dropped: Vec<&str> = m
        .nuclei
        .iter()
        .filter(|n| n.status == NucleusStatus::Dropped)
        .map(|n| n.id.as_str())
        .collect();
    assert_eq!(dropped, ["n0001", "n0004"]);
    assert!(m
        .nuclei
        .iter()
        .filter(|n| !n.is_ok())
        .all(|n| n.dropped_at.as_deref() == Some("reconstruct")));
    let table = tables::read_features(&out.join(stages::FEATURES)).unwrap();
    assert_eq!(table.matrix.n_rows(), 4);
}

#[test]
fn pipeline_manifest_lists_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 3, 0.2);
    let out = tmp.path().join("run");
    assert_eq!(run(&["pipeline", "--config", p(&cfg), "--out", p(&out)]), 0);
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m.status, RunStatus::Complete);
    let names: Vec<&str> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "simulate",
            "reconstruct",
            "segment",
            "features",
            "analyze-all",
            "analyze-brightfield"
        ]
    );
    assert!(manifest::verify(&out).unwrap().is_empty());

    // Tampering is detected.
    fs::write(out.join("features/features.csv"), "x").unwrap();
    fs::write(out.join("stray.txt"), "x").unwrap();
    let problems = manifest::verify(&out).unwrap();
    assert_eq!(problems.len(), 2, "{problems:?}");
}

#[test]
fn failed_pipeline_keeps_completed_stages_and_the_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 1, 0.2);
    let out = tmp.path().join("run");
    fs::create_dir_all(&out).unwrap();
    // A file where the reconstruct directory should go.
    fs::write(out.join(stages::RECONSTRUCT_DIR), "").unwrap();
    assert_eq!(run(&["pipeline", "--config", p(&cfg), "--out", p(&out)]), 1);
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert_eq!(m.stages.len(), 1);
    assert_eq!(m.stages[0].name, "simulate");
    assert!(m.error.as_deref().unwrap().contains("reconstruct"));
}

#[test]
fn fresh_manifest_is_marked_incomplete() {
    let tmp = tempfile::tempdir().unwrap();
    let m = Manifest::new("abc".into(), 3, Vec::new());
    assert_eq!(m.status, RunStatus::Incomplete);
    m.write(tmp.path()).unwrap();
    let text = fs::read_to_string(tmp.path().join("manifest.json")).unwrap();
    assert!(text.contains("\"status\": \"incomplete\""));
}
