#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const LFSR64_SEED: &str = "1011001110001111101100111000111110110011100011111011001110001111";

/// JSON config for the four-state alphabet with a 64-bit LFSR keystream.
pub fn config_json(n: usize, p_c: f64) -> String {
    format!(
        r#"{{
  "n": {n},
  "m": 2,
  "keystream": {{ "kind": "lfsr", "lfsr": "64:64,4,3,1", "seed": "{LFSR64_SEED}" }},
  "channel": {{ "p_c": {p_c}, "loss": 0.0 }},
  "code_rate": 0.6,
  "pa_security_param": 64,
  "verification_len": 32,
  "mode": "key_generation"
}}"#
    )
}

/// Repetition keystream with `m_k` key bits over `n` qubits.
pub fn repetition_json(n: usize, m_k: usize) -> String {
    let key: String = (0..m_k).map(|i| if i % 3 == 0 { '1' } else { '0' }).collect();
    format!(
        r#"{{
  "n": {n},
  "m": 2,
  "keystream": {{ "kind": "repetition", "key": "{key}" }},
  "channel": {{ "p_c": 0.0, "loss": 0.0 }},
  "code_rate": 0.6,
  "pa_security_param": 64,
  "verification_len": 32,
  "mode": "key_generation"
}}"#
    )
}

pub fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

pub fn kcq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kcq")).args(args).output().unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}
