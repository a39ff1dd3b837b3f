use std::path::Path;
use std::process::{Command, Output};

fn spiketext(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spiketext"))
        .current_dir(dir)
        .env_remove("SPIKETEXT_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const TOY: &[&str] = &[
    "--dim", "8", "--feature-maps", "4", "--neurons-per-class", "2", "--ann-epochs", "2", "--epochs", "1",
    "--time-steps", "8", "--trials", "2", "--out-dir", "out",
];

#[test]
fn end_to_end_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let synth = ok(&spiketext(dir, &["synth", "--examples", "150", "--dim", "8", "--out-dir", "out"]));
    assert!(synth.starts_with("corpus="));

    let mut args = vec!["run", "--data", "out/corpus.tsv", "--embeddings", "out/vectors.txt"];
    args.extend_from_slice(TOY);
    let run = ok(&spiketext(dir, &args));
    assert!(run.contains("result model=converted_snn"));
    assert!(run.contains("result model=finetuned_snn"));

    let mut args = vec!["eval", "--record-spikes", "spikes.bin"];
    args.extend_from_slice(TOY);
    let eval = ok(&spiketext(dir, &args));
    assert!(eval.starts_with("result model=checkpoint accuracy_mean="));
    let bytes = std::fs::read(dir.join("spikes.bin")).unwrap();
    assert_eq!(u32::from_le_bytes(bytes[0..4].try_into().unwrap()), 8);

    let mut args = vec!["energy-report"];
    args.extend_from_slice(TOY);
    let energy = ok(&spiketext(dir, &args));
    assert!(energy.lines().any(|l| l.starts_with("reduction")));

    let mut args = vec!["sweep", "--param", "u_thr", "--values", "0.5,1,2"];
    args.extend_from_slice(TOY);
    let sweep = ok(&spiketext(dir, &args));
    assert_eq!(sweep.lines().count(), 4);
    assert!(sweep.starts_with("u_thr\taccuracy_mean"));
}

#[test]
fn gradcheck_command_reports_small_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&spiketext(tmp.path(), &["gradcheck", "--cases", "3"]));
    let last = out.lines().last().unwrap();
    let err: f64 = last.strip_prefix("max_rel_error=").unwrap().parse().unwrap();
    assert!(err < 1e-4, "{out}");

    let out = ok(&spiketext(tmp.path(), &["gradcheck", "--dims", "3,4,2,5"]));
    assert!(out.starts_with("case=0 checked="));
}

#[test]
fn bad_input_exits_nonzero_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let out = spiketext(tmp.path(), &["run", "--data", "nope.tsv", "--random-embeddings"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: stage `prepare` failed"), "{err}");

    let out = spiketext(tmp.path(), &["prepare", "--time-steps", "zero"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("time_steps"));
}

#[test]
fn config_file_and_flags_layer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(&spiketext(dir, &["synth", "--examples", "100", "--dim", "8", "--out-dir", "."]));
    std::fs::write(
        dir.join("run.conf"),
        "# toy settings\ndata = corpus.tsv\nrandom_embeddings = true\ndim = 8\ntest_frac = 0.5\n",
    )
    .unwrap();
    let out = ok(&spiketext(dir, &["prepare", "--config", "run.conf", "--test-frac", "0.2", "--val-frac", "0"]));
    assert!(out.starts_with("train=80 val=0 test=20"), "{out}");
}
