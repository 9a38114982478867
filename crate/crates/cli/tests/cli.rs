//! End-to-end checks of the binary: stage chaining through the manifest,
//! sweep output shape, error records, and provenance plumbing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crossnet::graph::save_graph;
use crossnet::pipeline::{load_eval_report, Manifest};
use crossnet::synth::{community_pair, CommunityPairConfig};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossnet"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn assert_success(out: &Output, what: &str) {
    assert!(
        out.status.success(),
        "{what} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_pair(dir: &Path, users: usize, seed: u64) -> (PathBuf, PathBuf) {
    let cfg = CommunityPairConfig {
        users,
        communities: 3,
        vocab: 20,
        seed,
        ..CommunityPairConfig::default()
    };
    let (a, b, _) = community_pair(&cfg).unwrap();
    let pa = dir.join("a.graph");
    let pb = dir.join("b.graph");
    save_graph(&a, &pa, None).unwrap();
    save_graph(&b, &pb, None).unwrap();
    (pa, pb)
}

fn write_conf(dir: &Path, pa: &Path, pb: &Path, out: &Path) -> PathBuf {
    let body = format!(
        "# small training sizes for the test fixtures\n\
         graph_a = {}\n\
         graph_b = {}\n\
         out_dir = {}\n\
         seed = 11\n\
         word.dim = 8\n\
         word.window = 3\n\
         word.negatives = 2\n\
         word.epochs = 2\n\
         encoder.hidden_dim = 16\n\
         encoder.out_dim = 8\n\
         encoder.negatives = 2\n\
         encoder.epochs = 3\n\
         gan.hidden = 16\n\
         gan.epochs = 6\n\
         gan.batch_size = 16\n\
         gan.restarts = 1\n\
         gan.csls_k = 3\n\
         anchor_k = 3\n\
         fusion.out_dim = 8\n\
         fusion.k = 2\n\
         fusion.negatives = 2\n\
         fusion.epochs = 3\n\
         protocol.seeds = 0,1\n\
         logreg.epochs = 60\n",
        pa.display(),
        pb.display(),
        out.display()
    );
    let path = dir.join("pipeline.conf");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn stages_chain_through_the_manifest_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let (pa, pb) = write_pair(tmp.path(), 200, 5);
    let out = tmp.path().join("out");
    let conf = write_conf(tmp.path(), &pa, &pb, &out);
    for stage in ["sanitize", "embed", "align", "fuse", "eval"] {
        let result = run(bin().arg(stage).arg("--config").arg(&conf));
        assert_success(&result, stage);
    }
    let manifest = Manifest::load(&out).unwrap();
    let report = manifest.get(&out, "eval", "report").unwrap();
    let nets = load_eval_report(&report).unwrap();
    assert_eq!(nets.len(), 2);
    for net in &nets {
        assert!(net.interest.is_some() && net.gender.is_some() && net.occupation.is_some());
    }
}

#[test]
fn sweep_emits_four_rows_per_metric_series() {
    let tmp = TempDir::new().unwrap();
    let (pa, pb) = write_pair(tmp.path(), 48, 3);
    let out = tmp.path().join("out");
    let conf = write_conf(tmp.path(), &pa, &pb, &out);
    let result = run(bin().args(["sweep", "--grid", "1,5,10,15", "--config"]).arg(&conf));
    assert_success(&result, "sweep");
    let csv_path = String::from_utf8(result.stdout).unwrap().trim().to_string();
    let body = fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = body.lines().collect();
    assert_eq!(lines[0], "eps_a,network,task,precision_mean,precision_std,f1_mean,f1_std");
    assert_eq!(lines.len(), 1 + 4 * 2 * 3, "csv:\n{body}");
    let mut series: BTreeMap<(String, String), usize> = BTreeMap::new();
    for row in &lines[1..] {
        let cells: Vec<&str> = row.split(',').collect();
        *series.entry((cells[1].to_string(), cells[2].to_string())).or_default() += 1;
    }
    assert_eq!(series.len(), 6);
    for ((network, task), count) in series {
        assert_eq!(count, 4, "series {network}/{task} has {count} rows");
    }
}

#[test]
fn unknown_subcommand_exits_with_usage() {
    let result = run(bin().arg("frobnicate"));
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("Usage"), "no usage text:\n{stderr}");
}

#[test]
fn corrupted_embedding_file_is_reported_with_file_and_line() {
    let tmp = TempDir::new().unwrap();
    let (pa, pb) = write_pair(tmp.path(), 48, 9);
    let out = tmp.path().join("out");
    let conf = write_conf(tmp.path(), &pa, &pb, &out);
    for stage in ["sanitize", "embed"] {
        assert_success(&run(bin().arg(stage).arg("--config").arg(&conf)), stage);
    }
    let manifest = Manifest::load(&out).unwrap();
    let z_a = manifest.get(&out, "embed", "z_a").unwrap();
    fs::write(&z_a, "garbage\n").unwrap();
    let result = run(bin().arg("align").arg("--config").arg(&conf));
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8(result.stderr).unwrap();
    let record: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    let msg = record["error"].as_str().unwrap();
    let fname = z_a.file_name().unwrap().to_string_lossy().to_string();
    assert!(msg.contains(&fname) && msg.contains(":1:"), "error lacks file+line: {msg}");
    assert!(out.join("error.json").exists(), "failure not marked in the output dir");
}

#[test]
fn seed_override_reaches_every_provenance_record() {
    let tmp = TempDir::new().unwrap();
    let (pa, pb) = write_pair(tmp.path(), 48, 13);
    let out = tmp.path().join("out");
    let conf = write_conf(tmp.path(), &pa, &pb, &out);
    for stage in ["sanitize", "embed", "align"] {
        let result = run(bin().args([stage, "--seed", "12345", "--config"]).arg(&conf));
        assert_success(&result, stage);
    }
    let mut sidecars = 0;
    for entry in fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        if path.to_string_lossy().ends_with(".prov.json") {
            sidecars += 1;
            let body: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
            assert_eq!(
                body["params"]["master_seed"],
                serde_json::json!(12345),
                "wrong master seed in {}",
                path.display()
            );
        }
    }
    assert!(sidecars >= 6, "expected a sidecar per output, found {sidecars}");
}

#[test]
fn env_var_overrides_the_configured_output_dir() {
    let tmp = TempDir::new().unwrap();
    let (pa, pb) = write_pair(tmp.path(), 48, 17);
    let ignored = tmp.path().join("ignored");
    let conf = write_conf(tmp.path(), &pa, &pb, &ignored);
    let alt = tmp.path().join("alt");
    let result = run(bin()
        .arg("sanitize")
        .arg("--config")
        .arg(&conf)
        .env("CROSSNET_OUT_DIR", &alt));
    assert_success(&result, "sanitize");
    assert!(alt.join("manifest.json").exists());
    assert!(!ignored.exists(), "config-file directory was still used");
}

#[test]
fn verify_prints_one_passing_line_per_property() {
    let result = run(bin().arg("verify"));
    assert_success(&result, "verify");
    let stdout = String::from_utf8(result.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 4, "expected four properties:\n{stdout}");
    for line in lines {
        assert!(line.starts_with("PASS "), "property did not pass: {line}");
    }
}
