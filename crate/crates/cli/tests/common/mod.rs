//! Reference implementations written as plainly as possible, plus process
//! measurement helpers. Nothing here calls into the library's numerics.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

pub type Mat = Vec<Vec<f64>>;

pub fn random_mat<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Mat {
    (0..rows)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

pub fn sq_dists(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum())
                .collect()
        })
        .collect()
}

fn normalize(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Row normalization where an all-zero row stays zero.
fn normalize_or_zero(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        vec![0.0; v.len()]
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Indices ordered by (value, index).
fn argsort(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap().then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone)]
pub struct Enhance {
    pub k1: usize,
    pub orders: usize,
    pub gamma: f64,
    /// `None` means the mean first-order distance.
    pub sigma: Option<f64>,
    pub alphas: Vec<f64>,
    pub normalize_rows: bool,
    pub disjoint: bool,
    pub prenormalize: bool,
    pub batch: Option<usize>,
}

pub fn enhance(f: &Mat, p: &Enhance) -> Mat {
    match p.batch {
        Some(b) if b < f.len() => f.chunks(b).flat_map(|c| enhance_one(&c.to_vec(), p)).collect(),
        _ => enhance_one(f, p),
    }
}

fn enhance_one(f: &Mat, p: &Enhance) -> Mat {
    if p.gamma == 1.0 {
        return f.iter().map(|r| normalize(r)).collect();
    }
    let n = f.len();
    let base: Mat = if p.prenormalize {
        f.iter().map(|r| normalize(r)).collect()
    } else {
        f.clone()
    };
    let d: Mat = sq_dists(&base, &base)
        .into_iter()
        .map(|r| r.into_iter().map(f64::sqrt).collect())
        .collect();
    let k1 = p.k1.min(n - 1);
    let first: Vec<BTreeSet<usize>> = (0..n)
        .map(|x| argsort(&d[x]).into_iter().filter(|&y| y != x).take(k1).collect())
        .collect();
    let mut levels = vec![first.clone()];
    for _ in 1..p.orders {
        let prev = levels.last().unwrap();
        let next: Vec<BTreeSet<usize>> = (0..n)
            .map(|x| {
                let mut s = BTreeSet::new();
                for &y in &prev[x] {
                    s.extend(first[y].iter().copied());
                }
                s.remove(&x);
                if p.disjoint {
                    for lower in &levels {
                        for y in &lower[x] {
                            s.remove(y);
                        }
                    }
                }
                s
            })
            .collect();
        levels.push(next);
    }
    let sigma = match p.sigma {
        Some(s) => s,
        None => {
            let mut total = 0.0;
            let mut count = 0;
            for x in 0..n {
                for &y in &first[x] {
                    total += d[x][y];
                    count += 1;
                }
            }
            if count == 0 {
                0.0
            } else {
                total / count as f64
            }
        }
    };
    let sigma = if sigma > 0.0 { sigma } else { 1.0 };
    let dim = base[0].len();
    let mut out = Vec::with_capacity(n);
    for x in 0..n {
        let mut latent = vec![0.0; dim];
        for (h, level) in levels.iter().enumerate() {
            let s = sigma * 1.5f64.powi(h as i32 + 1);
            let mut w: Vec<(usize, f64)> = level[x]
                .iter()
                .map(|&y| (y, (-d[x][y] * d[x][y] / (2.0 * s * s)).exp()))
                .collect();
            if p.normalize_rows {
                let total: f64 = w.iter().map(|e| e.1).sum();
                if total > 0.0 {
                    for e in &mut w {
                        e.1 /= total;
                    }
                }
            }
            for (y, wy) in w {
                for t in 0..dim {
                    latent[t] += p.alphas[h] * wy * base[y][t];
                }
            }
        }
        let fused: Vec<f64> = (0..dim)
            .map(|t| p.gamma * base[x][t] + (1.0 - p.gamma) * latent[t])
            .collect();
        out.push(normalize(&fused));
    }
    out
}

/// Filtered, normalized profile of one distance row.
fn profile(row: &[f64], k2: usize, fill: f64) -> Vec<f64> {
    let mut out = vec![fill; row.len()];
    for j in argsort(row).into_iter().take(k2) {
        out[j] = row[j];
    }
    normalize_or_zero(&out)
}

/// Refined query-gallery scores built from fully materialized matrices.
pub fn refine(q: &Mat, g: &Mat, k2: usize, fill: f64) -> Mat {
    let qg = sq_dists(q, g);
    let gg = sq_dists(g, g);
    let pq: Mat = qg.iter().map(|r| profile(r, k2, fill)).collect();
    let pg: Mat = gg.iter().map(|r| profile(r, k2, fill)).collect();
    qg.iter()
        .zip(&pq)
        .map(|(row, a)| {
            row.iter()
                .zip(&pg)
                .map(|(d, b)| {
                    let s: f64 = a.iter().zip(b).map(|(u, v)| u * v).sum();
                    d - s.clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect()
}

/// Average precision of a ranked list of hits; `None` without positives.
pub fn average_precision(hits: &[bool]) -> Option<f64> {
    let total = hits.iter().filter(|&&h| h).count();
    if total == 0 {
        return None;
    }
    let mut seen = 0.0;
    let mut sum = 0.0;
    for (i, &h) in hits.iter().enumerate() {
        if h {
            seen += 1.0;
            sum += seen / (i + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

pub fn max_abs_diff(a: &Mat, b: &[f64]) -> f64 {
    a.iter()
        .flatten()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub struct Measured {
    pub code: Option<i32>,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    /// Peak resident set size of the child, in bytes.
    pub max_rss: u64,
    pub wall: Duration,
}

/// Runs `cmd` to completion and reports the child's peak RSS.
pub fn run_measured(cmd: &mut Command) -> Measured {
    use std::io::Read;
    use std::process::Stdio;

    let start = Instant::now();
    let mut child = cmd
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn child");
    let mut out_pipe = child.stdout.take().unwrap();
    let mut err_pipe = child.stderr.take().unwrap();
    let err_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        err_pipe.read_to_end(&mut buf).ok();
        buf
    });
    let mut stdout = Vec::new();
    out_pipe.read_to_end(&mut stdout).ok();
    let stderr = err_thread.join().unwrap();

    let mut status = 0;
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    let pid = child.id() as libc::pid_t;
    let rc = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
    assert_eq!(rc, pid, "wait4 failed");
    let code = if libc::WIFEXITED(status) {
        Some(libc::WEXITSTATUS(status))
    } else {
        None
    };
    Measured {
        code,
        stdout,
        stderr,
        // ru_maxrss is in kilobytes on Linux
        max_rss: usage.ru_maxrss as u64 * 1024,
        wall: start.elapsed(),
    }
}
