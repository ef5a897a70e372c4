use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use anyhow::{ensure, Context, Result};
use tempfile::TempDir;

fn regidapt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_regidapt"))
        .args(args)
        .current_dir(dir)
        .env_remove("REGIDAPT_LLM_ENDPOINT")
        .env_remove("REGIDAPT_LLM_TOKEN")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Result<String> {
    let out = regidapt(dir, args);
    ensure!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(String::from_utf8(out.stdout)?)
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    regidapt(dir, args).status.code().unwrap_or(-1)
}

/// A temp dir holding a small two-domain corpus in `en.jsonl` and `kt.jsonl`.
fn workspace() -> Result<(TempDir, PathBuf)> {
    let tmp = tempfile::tempdir()?;
    let dir = tmp.path().to_path_buf();
    ok(&dir, &["corpus", "synth", "--kind", "two-domain", "--posts", "60", "--seed", "4", "--out", "."])?;
    Ok((tmp, dir))
}

fn lines(path: impl AsRef<Path>) -> Result<Vec<serde_json::Value>> {
    let text = std::fs::read_to_string(path.as_ref()).with_context(|| format!("{}", path.as_ref().display()))?;
    text.lines().map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[test]
fn corpus_stats_and_split() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    let stats: serde_json::Value = serde_json::from_str(&ok(&dir, &["corpus", "stats", "--in", "kt.jsonl"])?)?;
    assert_eq!(stats["posts"], 60);

    ok(&dir, &["corpus", "split", "--in", "kt.jsonl", "--k", "3", "--seed", "1", "--out", "folds"])?;
    let mut seen = Vec::new();
    for i in 0..3 {
        let test = lines(dir.join(format!("folds/fold_{i}/test.jsonl")))?;
        let train = lines(dir.join(format!("folds/fold_{i}/train.jsonl")))?;
        assert_eq!(test.len() + train.len(), 60);
        seen.extend(test.iter().map(|p| p["id"].as_str().unwrap().to_string()));
    }
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 60);
    Ok(())
}

#[test]
fn ingest_pseudonymizes() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    std::fs::write(
        dir.join("raw.jsonl"),
        "{\"id\":\"a\",\"author\":\"jan\",\"text\":\"zie https://example.org\",\"domain\":\"KT\",\"label\":1}\n",
    )?;
    ok(&dir, &["corpus", "ingest", "--in", "raw.jsonl", "--pseudonymize", "--out", "clean.jsonl"])?;
    let post = &lines(dir.join("clean.jsonl"))?[0];
    assert_ne!(post["author"], "jan");
    assert!(!post["text"].as_str().unwrap().contains("https://"));
    Ok(())
}

#[test]
fn mock_prompting_and_metrics() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    ok(
        &dir,
        &["prompt", "classify", "--client", "mock", "--mock", "gold-echo", "--in", "kt.jsonl", "--out", "echo.jsonl"],
    )?;
    let m: serde_json::Value =
        serde_json::from_str(&ok(&dir, &["eval", "metrics", "--pred", "echo.jsonl", "--gold", "kt.jsonl"])?)?;
    assert_eq!(m["f1"], 1.0);

    let args = ["prompt", "classify", "--client", "mock", "--mock", "constant", "--response", "Yes"];
    ok(&dir, &[&args[..], &["--in", "kt.jsonl", "--out", "yes.jsonl"]].concat())?;
    assert!(lines(dir.join("yes.jsonl"))?.iter().all(|p| p["label"] == 1));

    let csv = ok(&dir, &["compare", "--pred", "echo.jsonl", "--pred", "yes.jsonl", "--gold", "kt.jsonl"])?;
    let row = csv.lines().nth(1).context("one comparison row")?;
    assert!(row.starts_with("echo,yes,"), "{row}");
    Ok(())
}

#[test]
fn rewrite_and_translate_keep_ids() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    std::fs::write(dir.join("examples.txt"), "first post\n\nsecond post\n\nthird post\n\nfourth post\n")?;
    ok(
        &dir,
        &[
            "prompt",
            "rewrite",
            "--client",
            "mock",
            "--examples",
            "examples.txt",
            "--in",
            "en.jsonl",
            "--out",
            "r.jsonl",
        ],
    )?;
    ok(&dir, &["prompt", "translate", "--client", "mock", "--in", "en.jsonl", "--out", "nl.jsonl"])?;
    let en = lines(dir.join("en.jsonl"))?;
    for (file, domain) in [("r.jsonl", "R"), ("nl.jsonl", "NL")] {
        let out = lines(dir.join(file))?;
        assert_eq!(out.len(), en.len());
        for (a, b) in en.iter().zip(&out) {
            assert_eq!((&a["id"], &a["label"]), (&b["id"], &b["label"]));
            assert_eq!(b["domain"], domain);
        }
    }
    Ok(())
}

#[test]
fn lexicon_extract_and_select() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    std::fs::write(dir.join("lex.tsv"), "sad\tsad,hopeless,alone\nplain\tthe,a\n")?;
    ok(&dir, &["lexicon", "extract", "--in", "kt.jsonl", "--lexicon", "lex.tsv", "--out", "feat.jsonl"])?;
    assert_eq!(lines(dir.join("feat.jsonl"))?.len(), 60);
    ok(&dir, &["lexicon", "select", "--in", "kt.jsonl", "--lexicon", "lex.tsv", "--alpha", "0.05"])?;
    Ok(())
}

#[test]
fn train_predict_export() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    ok(&dir, &["train", "baseline", "--train", "kt.jsonl", "--epochs", "1", "--out", "m.ckpt"])?;
    ok(&dir, &["predict", "--ckpt", "m.ckpt", "--in", "kt.jsonl", "--out", "p.jsonl"])?;
    let preds = lines(dir.join("p.jsonl"))?;
    assert_eq!(preds.len(), 60);
    assert!(preds.iter().all(|p| (0.0..=1.0).contains(&p["probability"].as_f64().unwrap())));
    ok(&dir, &["eval", "export", "--ckpt", "m.ckpt", "--in", "kt.jsonl", "--out", "emb.jsonl"])?;
    assert_eq!(lines(dir.join("emb.jsonl"))?.len(), 60);

    ok(&dir, &["corpus", "split", "--in", "kt.jsonl", "--k", "2", "--out", "f"])?;
    assert_eq!(code(&dir, &["predict", "--ckpt", "f/folds.json", "--in", "kt.jsonl", "--out", "x.jsonl"]), 3);
    Ok(())
}

#[test]
fn run_writes_a_manifest_that_reruns() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    let first = ok(&dir, &["run", "--method", "random", "--target", "kt.jsonl", "--k", "3", "--out", "r1"])?;
    let manifest = std::fs::read_to_string(dir.join("r1/manifest.toml"))?;
    assert!(manifest.contains("format = \"regidapt-manifest-v1\""));
    assert!(manifest.contains("status = \"complete\""));
    let second = ok(&dir, &["run", "--manifest", "r1/manifest.toml", "--out", "r2"])?;
    assert_eq!(first, second);
    assert_eq!(std::fs::read(dir.join("r1/report.csv"))?, std::fs::read(dir.join("r2/report.csv"))?);
    Ok(())
}

#[test]
fn exit_codes() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    assert_eq!(code(&dir, &["run", "--method", "bogus", "--target", "kt.jsonl", "--out", "r"]), 2);
    assert_eq!(code(&dir, &["prompt", "classify", "--client", "http", "--in", "kt.jsonl", "--out", "p.jsonl"]), 2);
    assert_eq!(code(&dir, &["corpus", "stats", "--in", "missing.jsonl"]), 3);
    std::fs::write(dir.join("bad.jsonl"), "{not json\n")?;
    assert_eq!(code(&dir, &["corpus", "stats", "--in", "bad.jsonl"]), 3);
    std::fs::write(dir.join("short.jsonl"), "{\"id\":\"kt-00000\",\"label\":1}\n")?;
    assert_eq!(code(&dir, &["eval", "metrics", "--pred", "short.jsonl", "--gold", "kt.jsonl"]), 3);
    Ok(())
}

/// Answers every request with 401 until the test ends.
fn unauthorized_server() -> Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut s) = stream else { continue };
            let mut buf = [0u8; 8192];
            let _ = s.read(&mut buf);
            let _ = s.write_all(b"HTTP/1.1 401 Unauthorized\r\ncontent-length: 0\r\nconnection: close\r\n\r\n");
        }
    });
    Ok(format!("http://{addr}/v1/chat/completions"))
}

#[test]
fn rejected_requests_exit_with_4() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    let endpoint = unauthorized_server()?;
    let out = Command::new(env!("CARGO_BIN_EXE_regidapt"))
        .args(["prompt", "classify", "--client", "http", "--in", "kt.jsonl", "--out", "p.jsonl"])
        .current_dir(&dir)
        .env("REGIDAPT_LLM_ENDPOINT", endpoint)
        .env("REGIDAPT_LLM_TOKEN", "wrong")
        .output()?;
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("401"));
    Ok(())
}

#[test]
fn kappa_between_annotators() -> Result<()> {
    let (_tmp, dir) = workspace()?;
    ok(
        &dir,
        &["prompt", "classify", "--client", "mock", "--mock", "gold-echo", "--in", "kt.jsonl", "--out", "a.jsonl"],
    )?;
    let k = ok(&dir, &["eval", "kappa", "--a", "a.jsonl", "--b", "a.jsonl"])?;
    assert!(k.contains('1'), "{k}");
    Ok(())
}
