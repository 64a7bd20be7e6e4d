//! Shared fixtures for the integration suites: independent brute-force
//! oracles, random archive generation, and a minimal HTTP stub server for
//! remote-operator tests. Not every suite uses every helper.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gea_core::archive::{
    AgentId, AgentRecord, Archive, GateStatus, Provenance, TaskSuccessVector, ToolSet, ToolTag,
};
use gea_core::selection::SelectionConfig;

// ---------------------------------------------------------------------------
// Random archives
// ---------------------------------------------------------------------------

pub fn random_vector(rng: &mut impl Rng, dimension: usize) -> TaskSuccessVector {
    (0..dimension).map(|_| rng.random::<bool>()).collect()
}

/// A random archive of gate-passed and gate-failed agents with plausible
/// lineage and provenance references.
pub fn random_archive(rng: &mut impl Rng, size: usize, dimension: usize) -> Archive {
    let mut archive = Archive::new(dimension, rng.random());
    for i in 0..size {
        let z = random_vector(rng, dimension);
        let performance = z.success_rate();
        let mut tools = ToolSet::new();
        for t in 0..rng.random_range(0..4u32) {
            let origin = if i > 0 && rng.random::<bool>() {
                Provenance::Agent(AgentId(rng.random_range(0..i as u64)))
            } else {
                Provenance::Original
            };
            tools.insert(ToolTag {
                name: format!("T{}", t + 1),
                origin,
            });
        }
        let gate_status = if i == 0 || rng.random_range(0..100) >= 15 {
            GateStatus::Passed
        } else if rng.random::<bool>() {
            GateStatus::FailedBasic
        } else {
            GateStatus::FailedCompile
        };
        let record = AgentRecord {
            id: AgentId(i as u64),
            framework_parent: (i > 0).then(|| AgentId(rng.random_range(0..i as u64))),
            tools,
            broken_bugs: BTreeSet::new(),
            z,
            performance,
            patches: Vec::new(),
            born_iteration: 0,
            gate_status,
        };
        archive.insert(record).expect("random record is valid");
    }
    archive
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Brute-force selection oracle
// ---------------------------------------------------------------------------

/// Raw cosine distance straight from its definition.
pub fn oracle_distance(a: &TaskSuccessVector, b: &TaskSuccessVector, epsilon: f64) -> f64 {
    let mut dot = 0u64;
    for i in 0..a.len() {
        if a.get(i) && b.get(i) {
            dot += 1;
        }
    }
    let na = (a.ones() as f64).sqrt();
    let nb = (b.ones() as f64).sqrt();
    1.0 - dot as f64 / (na * nb + epsilon)
}

/// Exhaustive parent selection: all pairwise distances, per-agent sort,
/// average of the M nearest (summed in ascending neighbor-id order), full
/// ranking by performance times sqrt novelty with ascending-id ties.
pub fn oracle_select(archive: &Archive, cfg: &SelectionConfig) -> Vec<(AgentId, f64)> {
    let agents: Vec<&AgentRecord> = archive
        .records()
        .iter()
        .filter(|r| r.gate_status.is_selectable())
        .collect();
    let mut ranked: Vec<(AgentId, f64)> = Vec::new();
    for me in &agents {
        let mut dists: Vec<(AgentId, f64)> = agents
            .iter()
            .filter(|other| other.id != me.id)
            .map(|other| (other.id, oracle_distance(&me.z, &other.z, cfg.epsilon)))
            .collect();
        let novelty = if dists.is_empty() {
            1.0
        } else {
            dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
            let take = cfg.neighborhood.min(dists.len());
            let mut chosen: Vec<(AgentId, f64)> = dists[..take].to_vec();
            chosen.sort_by_key(|(id, _)| *id);
            chosen.iter().map(|(_, d)| d).sum::<f64>() / take as f64
        };
        ranked.push((me.id, me.performance * novelty.sqrt()));
    }
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cfg.group_size.min(ranked.len()));
    ranked
}

// ---------------------------------------------------------------------------
// Brute-force reachability oracle for experience ancestry
// ---------------------------------------------------------------------------

/// Transitive closure over a provenance edge list by naive iteration to a
/// fixed point.
pub fn oracle_reachable(edges: &[(u64, u64)], from: u64) -> BTreeSet<u64> {
    let mut reached: BTreeSet<u64> = BTreeSet::new();
    let mut changed = true;
    while changed {
        changed = false;
        for &(src, dst) in edges {
            if (src == from || reached.contains(&src)) && reached.insert(dst) {
                changed = true;
            }
        }
    }
    reached.remove(&from);
    reached
}

// ---------------------------------------------------------------------------
// Stub HTTP server
// ---------------------------------------------------------------------------

pub struct StubRequest {
    pub path: String,
    pub headers: Vec<String>,
    pub body: String,
}

/// One-shot HTTP stub: accepts a single request, optionally sleeps, answers
/// with the given status and body, and hands the captured request back.
pub fn stub_server(
    status: u16,
    response_body: String,
    delay: Duration,
) -> (String, mpsc::Receiver<StubRequest>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
    let addr = listener.local_addr().expect("stub addr");
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let (mut stream, _) = match listener.accept() {
            Ok(conn) => conn,
            Err(_) => return,
        };
        let mut buf = Vec::new();
        let mut chunk = [0u8; 4096];
        let (headers_end, header_text) = loop {
            let n = stream.read(&mut chunk).unwrap_or(0);
            if n == 0 {
                return;
            }
            buf.extend_from_slice(&chunk[..n]);
            if let Some(pos) = find_headers_end(&buf) {
                break (pos, String::from_utf8_lossy(&buf[..pos]).to_string());
            }
        };
        let content_length = header_text
            .lines()
            .find_map(|l| {
                let (name, value) = l.split_once(':')?;
                name.eq_ignore_ascii_case("content-length")
                    .then(|| value.trim().parse::<usize>().ok())?
            })
            .unwrap_or(0);
        let mut body = buf[headers_end + 4..].to_vec();
        while body.len() < content_length {
            let n = stream.read(&mut chunk).unwrap_or(0);
            if n == 0 {
                break;
            }
            body.extend_from_slice(&chunk[..n]);
        }

        let mut lines = header_text.lines();
        let request_line = lines.next().unwrap_or_default();
        let path = request_line
            .split_whitespace()
            .nth(1)
            .unwrap_or_default()
            .to_string();
        let _ = tx.send(StubRequest {
            path,
            headers: lines.map(str::to_string).collect(),
            body: String::from_utf8_lossy(&body).to_string(),
        });

        if !delay.is_zero() {
            thread::sleep(delay);
        }
        let reason = if status == 200 { "OK" } else { "Error" };
        let response = format!(
            "HTTP/1.1 {status} {reason}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{response_body}",
            response_body.len()
        );
        let _ = stream.write_all(response.as_bytes());
        let _ = stream.flush();
    });
    (format!("http://{addr}"), rx)
}

fn find_headers_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

/// Stub that serves several requests, answering by exact path, then exits.
pub fn serving_stub(routes: Vec<(&'static str, String)>, max_requests: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
    let addr = listener.local_addr().expect("stub addr");
    thread::spawn(move || {
        for _ in 0..max_requests {
            let (mut stream, _) = match listener.accept() {
                Ok(conn) => conn,
                Err(_) => return,
            };
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let (headers_end, header_text) = loop {
                let n = stream.read(&mut chunk).unwrap_or(0);
                if n == 0 {
                    return;
                }
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = find_headers_end(&buf) {
                    break (pos, String::from_utf8_lossy(&buf[..pos]).to_string());
                }
            };
            let content_length = header_text
                .lines()
                .find_map(|l| {
                    let (name, value) = l.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse::<usize>().ok())?
                })
                .unwrap_or(0);
            let mut body_len = buf.len() - (headers_end + 4);
            while body_len < content_length {
                let n = stream.read(&mut chunk).unwrap_or(0);
                if n == 0 {
                    break;
                }
                body_len += n;
            }

            let path = header_text
                .lines()
                .next()
                .and_then(|l| l.split_whitespace().nth(1))
                .unwrap_or_default();
            let body = routes
                .iter()
                .find(|(route, _)| *route == path)
                .map(|(_, body)| body.clone())
                .unwrap_or_else(|| "{}".to_string());
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
            let _ = stream.flush();
        }
    });
    format!("http://{addr}")
}
