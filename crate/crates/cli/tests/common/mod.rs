//! Process and HTTP helpers shared by the cli test targets.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Duration;

use discourse_core::pipeline::write_dtm;
use discourse_core::textprep::{DocTermMatrix, PrepReport, Vocabulary};
use discourse_testkit::{overrides_file, protocols_dir, Planted};

pub fn discourse(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_discourse"))
        .arg("--work")
        .arg(work)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn fixture_args() -> Vec<String> {
    vec![
        "--protocols".into(),
        protocols_dir().display().to_string(),
        "--overrides".into(),
        overrides_file().display().to_string(),
    ]
}

/// Runs the whole pipeline on the fixtures with default settings.
pub fn full_run(work: &Path) -> Output {
    let mut args = vec!["run".to_string()];
    args.extend(fixture_args());
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    discourse(work, &args)
}

/// Puts a planted matrix where `prep` would have written its output.
pub fn seed_planted_dtm(work: &Path, p: &Planted) {
    let counts: Vec<usize> = (0..p.terms.len())
        .map(|t| {
            p.rows
                .iter()
                .flatten()
                .filter(|&&(i, _)| i as usize == t)
                .map(|&(_, c)| c as usize)
                .sum()
        })
        .collect();
    let vocab = Vocabulary::from_parts(p.terms.clone(), counts);
    let dtm = DocTermMatrix::from_rows(p.doc_ids.clone(), p.rows.clone(), vocab).unwrap();
    let total = dtm.total_count();
    let report = PrepReport {
        documents: dtm.n_docs(),
        dropped_documents: 0,
        raw_tokens: total,
        kept_tokens: total,
        pruned_tokens: 0,
    };
    write_dtm(work, &dtm, report).unwrap();
}

/// A running `discourse serve`; killed on drop.
pub struct Server {
    child: Child,
    pub addr: String,
}

impl Server {
    pub fn start(work: &Path, extra: &[&str], port_env: Option<&str>) -> Server {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_discourse"));
        cmd.arg("--work").arg(work).arg("serve").args(extra);
        match port_env {
            Some(p) => cmd.env("DISCOURSE_PORT", p),
            None => cmd.env_remove("DISCOURSE_PORT"),
        };
        let mut child = cmd
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on http://")
            .unwrap_or_else(|| panic!("unexpected banner `{line}`"))
            .to_string();
        Server { child, addr }
    }

    pub fn stderr_so_far(&mut self) -> String {
        let _ = self.child.kill();
        let _ = self.child.wait();
        let mut s = String::new();
        if let Some(mut e) = self.child.stderr.take() {
            let _ = e.read_to_string(&mut s);
        }
        s
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct Reply {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Reply {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

pub fn request(addr: &str, method: &str, target: &str) -> Reply {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    write!(
        s,
        "{method} {target} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").unwrap();
    let mut lines = head.lines();
    let status = lines
        .next()
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    let headers = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    Reply {
        status,
        headers,
        body: body.to_string(),
    }
}

pub fn get(addr: &str, target: &str) -> Reply {
    request(addr, "GET", target)
}

pub fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn file_exists(dir: &Path, rel: &str) -> bool {
    PathBuf::from(dir).join(rel).is_file()
}
