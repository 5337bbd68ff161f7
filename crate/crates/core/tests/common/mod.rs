//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use pivotlm::geometry::SpherePoint;
use rand::Rng;

/// Coverage by direct double summation over a row-major matrix.
pub fn coverage_oracle(a: &[Vec<f64>], region: &[usize], decoded: &[usize]) -> f64 {
    let mut total = 0.0;
    for &j in decoded {
        let mut s = 0.0;
        for &i in region {
            s += a[j][i];
        }
        total += s * s;
    }
    total
}

/// A random causal row-stochastic matrix.
pub fn random_attention(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|j| {
            let mut row: Vec<f64> = (0..n).map(|i| if i <= j { rng.gen::<f64>() + 1e-3 } else { 0.0 }).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}

pub fn flatten_f32(a: &[Vec<f64>]) -> Vec<f32> {
    a.iter().flatten().map(|&v| v as f32).collect()
}

/// A random SPD matrix `X X^T + 0.1 I`.
pub fn random_spd(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let x = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    &x * x.transpose() + DMatrix::identity(d, d) * 0.1
}

/// Affine-invariant distance through a Cholesky whitening of `a`:
/// eigenvalues of `L^-1 B L^-T` are those of `A^-1 B`.
pub fn spd_distance_oracle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let l = Cholesky::new(a.clone()).expect("SPD").l();
    let li = l.clone().try_inverse().expect("invertible");
    let m = &li * b * li.transpose();
    let m = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(m).eigenvalues.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt()
}

pub fn random_sphere_point(rng: &mut impl Rng) -> SpherePoint {
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return SpherePoint {
                x: v[0] / n,
                y: v[1] / n,
                z: v[2] / n,
            };
        }
    }
}

/// Centroids as normalized means and nearest centroid by largest cosine,
/// lowest language index on ties.
pub fn voronoi_oracle(points: &[(usize, SpherePoint)], k: usize) -> (Vec<[f64; 3]>, Vec<usize>) {
    let mut cents = vec![[0.0f64; 3]; k];
    for &(l, p) in points {
        cents[l][0] += p.x;
        cents[l][1] += p.y;
        cents[l][2] += p.z;
    }
    for c in cents.iter_mut() {
        let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        c.iter_mut().for_each(|v| *v /= n);
    }
    let assign = points
        .iter()
        .map(|(_, p)| {
            let cos: Vec<f64> = cents.iter().map(|c| c[0] * p.x + c[1] * p.y + c[2] * p.z).collect();
            let best = cos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            cos.iter().position(|&c| c == best).unwrap()
        })
        .collect();
    (cents, assign)
}

/// A configuration small enough to run every CLI stage in seconds.
pub const TINY_PIPELINE: &str = r#"
seed = 11

[synth]
train_pairs = 60
test_pairs = 4
max_digits = 4

[model]
hidden_dim = 16
num_layers = 2
intermediate_size = 32
num_heads = 2
head_size = 8
max_seq_len = 64

[train]
total_steps = 6
warmup_steps = 2
batch_tokens = 128

[decode.beam]
beam_size = 2
max_new_tokens = 12

[interpret]
thresholds = [0.0, 0.5, 1.0]
max_sentences = 4

[geometry]
rank = 2
sentences = 4
"#;

pub const PIPELINE_STAGES: &[&str] = &[
    "synth",
    "train-tokenizer",
    "tokenizer-metrics",
    "train",
    "coverage",
    "mask-sweep",
    "ablate",
    "subspace",
    "sphere",
];

/// Runs the binary with `--config <dir>/pipeline.toml --out-dir <dir>/out`.
pub fn pivotlm(dir: &std::path::Path, args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_pivotlm"))
        .arg("--config")
        .arg(dir.join("pipeline.toml"))
        .arg("--out-dir")
        .arg(dir.join("out"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Every stage of the tiny pipeline in `dir`; panics on the first failure.
pub fn run_tiny_pipeline(dir: &std::path::Path) {
    std::fs::write(dir.join("pipeline.toml"), TINY_PIPELINE).unwrap();
    for stage in PIPELINE_STAGES {
        let out = pivotlm(dir, &[stage]);
        assert!(
            out.status.success(),
            "{stage} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

/// Relative path and bytes of every file under `root`, sorted.
pub fn snapshot(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
