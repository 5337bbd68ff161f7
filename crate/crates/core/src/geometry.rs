//! Cross-lingual geometry of hidden states: per-layer language subspaces,
//! the affine-invariant distance between their SPD representations, and the
//! sphere / Voronoi view used for plotting.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::corpus::format_source;
use crate::error::{Error, Result};
use crate::model::{ForwardOptions, Transformer};
use crate::tokenizer::Vocabulary;

/// Hidden states of one language at one layer, one row per token.
///
/// Layer 0 is the embedding output; layer `k` is the output of block `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEmbeddings {
    pub lang: String,
    pub layer: usize,
    pub data: DMatrix<f64>,
}

/// Builds `source_lang -> t` prompts for every sentence and every target
/// language other than the source, runs them, and stacks the hidden states
/// per layer.
///
/// With `source_only`, only the source-sentence positions are kept.
pub fn collect_embeddings(
    model: &Transformer<f32>,
    vocab: &Vocabulary,
    source_lang: &str,
    sentences: &[String],
    target_langs: &[String],
    source_only: bool,
) -> Result<Vec<LayerEmbeddings>> {
    if sentences.is_empty() {
        return Err(Error::input("no sentences to embed"));
    }
    if target_langs.iter().all(|t| t == source_lang) {
        return Err(Error::input(format!("no target language other than {source_lang}")));
    }
    let d = model.config().hidden_dim;
    let layers = model.config().num_layers + 1;
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); layers];
    for tgt in target_langs.iter().filter(|t| *t != source_lang) {
        for s in sentences {
            let (ids, regions) = format_source(vocab, source_lang, tgt, s, false)?;
            let out = model.forward(
                &ids,
                &ForwardOptions {
                    capture_hidden: true,
                    ..Default::default()
                },
            )?;
            let keep = if source_only { regions.src_sentence.clone() } else { 0..ids.len() };
            for (l, h) in out.hidden.expect("captured").iter().enumerate() {
                for t in keep.clone() {
                    rows[l].extend(h[t * d..(t + 1) * d].iter().map(|&x| x as f64));
                }
            }
        }
    }
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(layer, flat)| LayerEmbeddings {
            lang: source_lang.into(),
            layer,
            data: DMatrix::from_row_slice(flat.len() / d, d, &flat),
        })
        .collect())
}

/// How the ridge added to the scatter matrix is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `factor * mean(sigma^2 / n)` over the kept singular values.
    Relative(f64),
    Absolute(f64),
}

/// Ridge factor of the default SPD construction.
pub const RELATIVE_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageSubspace {
    pub lang: String,
    pub layer: usize,
    pub mean: DVector<f64>,
    /// `d x r`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub rows: usize,
    pub eps: f64,
    /// `U diag(sigma^2 / n) U^T + eps I`.
    pub spd: DMatrix<f64>,
}

impl LanguageSubspace {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// `mean(sigma^2 / n)` over the kept directions.
    pub fn mean_scaled_variance(&self) -> f64 {
        if self.singular_values.is_empty() {
            return 0.0;
        }
        let n = self.rows as f64;
        self.singular_values.iter().map(|s| s * s / n).sum::<f64>() / self.singular_values.len() as f64
    }

    /// Same basis and spectrum with a different ridge.
    pub fn with_eps(mut self, eps: f64) -> Self {
        let d = self.spd.nrows();
        self.spd += DMatrix::identity(d, d) * (eps - self.eps);
        self.eps = eps;
        self
    }
}

/// Mean-centered top-`rank` SVD of `h` with an SPD scatter representation.
///
/// The rank drops (with a warning) when the centered data has fewer
/// nonzero singular values than requested.
pub fn fit_subspace(h: &LayerEmbeddings, rank: usize, ridge: Ridge) -> Result<LanguageSubspace> {
    let (n, d) = h.data.shape();
    if rank == 0 {
        return Err(Error::config("subspace rank must be at least 1"));
    }
    if n == 0 {
        return Err(Error::input(format!("no rows for {} layer {}", h.lang, h.layer)));
    }
    let mean = h.data.row_mean().transpose();
    let mut centered = h.data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let svd = centered.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let top = svd.singular_values[order[0]];
    let tol = top * (n.max(d) as f64) * f64::EPSILON;
    let available = order.iter().filter(|&&i| svd.singular_values[i] > tol).count();
    let r = rank.min(available);
    if r < rank {
        log::warn!("{} layer {}: rank reduced from {rank} to {r}", h.lang, h.layer);
    }
    let mut basis = DMatrix::zeros(d, r);
    let mut sv = Vec::with_capacity(r);
    for (k, &i) in order.iter().take(r).enumerate() {
        let mut col = vt.row(i).transpose();
        // Deterministic sign: the largest-magnitude entry is positive.
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col = -col;
        }
        basis.set_column(k, &col);
        sv.push(svd.singular_values[i]);
    }
    let mut sub = LanguageSubspace {
        lang: h.lang.clone(),
        layer: h.layer,
        mean,
        basis,
        singular_values: sv,
        rows: n,
        eps: 0.0,
        spd: DMatrix::zeros(d, d),
    };
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(r, sub.singular_values.iter().map(|s| s * s / n as f64)));
    let scatter = &sub.basis * scale * sub.basis.transpose();
    sub.spd = (&scatter + scatter.transpose()) * 0.5;
    let eps = match ridge {
        Ridge::Absolute(e) => e,
        Ridge::Relative(f) => relative_eps(f, sub.mean_scaled_variance()),
    };
    if !(eps > 0.0) {
        return Err(Error::config("ridge must be positive"));
    }
    Ok(sub.with_eps(eps))
}

/// `factor * v`, falling back to `factor` itself when the data has no variance.
fn relative_eps(factor: f64, v: f64) -> f64 {
    if v > 0.0 {
        factor * v
    } else {
        factor
    }
}

/// Fits one subspace per language at a layer with a ridge shared by all of
/// them (mean of the per-language relative ridges), so that distances
/// compare like with like.
pub fn fit_layer_subspaces(embs: &[LayerEmbeddings], rank: usize, factor: f64) -> Result<Vec<LanguageSubspace>> {
    let subs = embs
        .iter()
        .map(|e| fit_subspace(e, rank, Ridge::Absolute(1.0)))
        .collect::<Result<Vec<_>>>()?;
    if subs.is_empty() {
        return Ok(subs);
    }
    let eps = subs.iter().map(|s| relative_eps(factor, s.mean_scaled_variance())).sum::<f64>() / subs.len() as f64;
    Ok(subs.into_iter().map(|s| s.with_eps(eps)).collect())
}

/// `A^{-1/2}` of a symmetric positive definite matrix.
fn inv_sqrt(a: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| !(l > 0.0)) {
        return Err(Error::Numerical(format!("{name} is not positive definite (eigenvalue {bad:e})")));
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Affine-invariant distance `||log(A^{-1/2} B A^{-1/2})||_F`.
pub fn spd_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    spd_distance_named(a, b, "A", "B")
}

fn spd_distance_named(a: &DMatrix<f64>, b: &DMatrix<f64>, na: &str, nb: &str) -> Result<f64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::input("SPD matrices must be square and of equal size"));
    }
    // Checks B as well, so a non-SPD B is reported by name.
    inv_sqrt(b, nb)?;
    let s = inv_sqrt(a, na)?;
    let m = &s * b * &s;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut acc = 0.0;
    for &l in eig.eigenvalues.iter() {
        if !(l > 0.0) {
            return Err(Error::Numerical(format!("{na}^-1/2 {nb} {na}^-1/2 has eigenvalue {l:e}")));
        }
        acc += l.ln().powi(2);
    }
    Ok(acc.sqrt())
}

pub fn subspace_distance(a: &LanguageSubspace, b: &LanguageSubspace) -> Result<f64> {
    if a.spd.shape() != b.spd.shape() {
        return Err(Error::input("subspaces live in different dimensions"));
    }
    if (a.eps - b.eps).abs() > 1e-12 * a.eps.abs().max(b.eps.abs()) {
        return Err(Error::input(format!(
            "subspaces use different ridges ({:e} vs {:e})",
            a.eps, b.eps
        )));
    }
    let na = format!("{} layer {}", a.lang, a.layer);
    let nb = format!("{} layer {}", b.lang, b.layer);
    spd_distance_named(&a.spd, &b.spd, &na, &nb)
}

/// Pairwise distances between languages at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub layer: usize,
    pub langs: Vec<String>,
    pub values: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn from_values(layer: usize, langs: Vec<String>, values: DMatrix<f64>) -> Self {
        Self { layer, langs, values }
    }

    /// Unweighted mean over unordered language pairs.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.langs.len();
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..n {
            for j in i + 1..n {
                sum += self.values[(i, j)];
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lang");
        for l in &self.langs {
            write!(s, ",{l}").expect("string write");
        }
        s.push('\n');
        for (i, l) in self.langs.iter().enumerate() {
            s.push_str(l);
            for j in 0..self.langs.len() {
                write!(s, ",{:.6}", self.values[(i, j)]).expect("string write");
            }
            s.push('\n');
        }
        s
    }
}

pub fn distance_matrix(subspaces: &[LanguageSubspace]) -> Result<DistanceMatrix> {
    if subspaces.len() < 2 {
        return Err(Error::input("need at least two languages"));
    }
    let layer = subspaces[0].layer;
    if subspaces.iter().any(|s| s.layer != layer) {
        return Err(Error::input("subspaces come from different layers"));
    }
    let n = subspaces.len();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = subspace_distance(&subspaces[i], &subspaces[j])?;
            values[(i, j)] = d;
            values[(j, i)] = d;
        }
    }
    Ok(DistanceMatrix {
        layer,
        langs: subspaces.iter().map(|s| s.lang.clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SpherePoint {
    pub fn dot(&self, o: &SpherePoint) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Great-circle distance.
    pub fn geodesic(&self, o: &SpherePoint) -> f64 {
        self.dot(o).clamp(-1.0, 1.0).acos()
    }
}

/// `(sin x cos y, sin x sin y, cos x)`.
pub fn project_sphere(x: f64, y: f64) -> SpherePoint {
    SpherePoint {
        x: x.sin() * y.cos(),
        y: x.sin() * y.sin(),
        z: x.cos(),
    }
}

/// Top-two principal components of the rows, rescaled so the first lies in
/// `[0.1, pi - 0.1]` and the second in `[0, 2 pi - 0.1]` (the second range
/// stops short of `2 pi` so its ends do not meet on the sphere).
pub fn pca_2d(data: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let (n, d) = data.shape();
    if n == 0 || d < 2 {
        return Err(Error::input("need at least one row and two columns"));
    }
    let mean = data.row_mean();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut coords = Vec::with_capacity(2);
    for &k in order.iter().take(2) {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        coords.push(&centered * v);
    }
    let rescale = |c: &DVector<f64>, lo: f64, hi: f64| -> Vec<f64> {
        let min = c.min();
        let max = c.max();
        c.iter()
            .map(|&v| if max > min { lo + (hi - lo) * (v - min) / (max - min) } else { (lo + hi) / 2.0 })
            .collect()
    };
    let xs = rescale(&coords[0], 0.1, std::f64::consts::PI - 0.1);
    let ys = rescale(&coords[1], 0.0, 2.0 * std::f64::consts::PI - 0.1);
    Ok(xs.into_iter().zip(ys).collect())
}

/// Centroid per language and the nearest-centroid region of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Voronoi {
    pub centroids: Vec<SpherePoint>,
    pub assignment: Vec<usize>,
}

/// `points[i] = (language index, point)`; languages are `0..num_langs`.
pub fn voronoi_assign(points: &[(usize, SpherePoint)], num_langs: usize) -> Result<Voronoi> {
    let mut sums = vec![[0.0f64; 3]; num_langs];
    let mut counts = vec![0usize; num_langs];
    for &(l, p) in points {
        if l >= num_langs {
            return Err(Error::input(format!("language index {l} out of range")));
        }
        sums[l][0] += p.x;
        sums[l][1] += p.y;
        sums[l][2] += p.z;
        counts[l] += 1;
    }
    let mut centroids = Vec::with_capacity(num_langs);
    for (l, s) in sums.iter().enumerate() {
        if counts[l] == 0 {
            return Err(Error::input(format!("language {l} has no points")));
        }
        let norm = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        if norm < 1e-12 {
            return Err(Error::Numerical(format!("language {l} has a zero mean vector")));
        }
        centroids.push(SpherePoint {
            x: s[0] / norm,
            y: s[1] / norm,
            z: s[2] / norm,
        });
    }
    let assignment = points
        .iter()
        .map(|(_, p)| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, c) in centroids.iter().enumerate() {
                let d = p.geodesic(c);
                if d < best_d {
                    best = k;
                    best_d = d;
                }
            }
            best
        })
        .collect();
    Ok(Voronoi { centroids, assignment })
}

/// `(language index, planar coordinates, sphere point)`.
pub type LabelledPoint = (usize, (f64, f64), SpherePoint);

/// One layer's embeddings from every language, stacked, reduced with
/// [`pca_2d`] and put on the sphere. Points are `(language index, planar,
/// sphere)` in input order.
pub fn sphere_view(at_layer: &[LayerEmbeddings]) -> Result<(Vec<LabelledPoint>, Voronoi)> {
    let d = at_layer.first().ok_or_else(|| Error::input("no languages"))?.data.ncols();
    let rows: usize = at_layer.iter().map(|e| e.data.nrows()).sum();
    let mut stacked = DMatrix::<f64>::zeros(rows, d);
    let mut labels = Vec::with_capacity(rows);
    let mut r0 = 0;
    for (li, e) in at_layer.iter().enumerate() {
        if e.data.ncols() != d {
            return Err(Error::input("embeddings of different widths"));
        }
        stacked.rows_mut(r0, e.data.nrows()).copy_from(&e.data);
        labels.extend(std::iter::repeat_n(li, e.data.nrows()));
        r0 += e.data.nrows();
    }
    let points: Vec<_> = pca_2d(&stacked)?
        .into_iter()
        .zip(labels)
        .map(|((x, y), l)| (l, (x, y), project_sphere(x, y)))
        .collect();
    let labelled: Vec<_> = points.iter().map(|&(l, _, p)| (l, p)).collect();
    let v = voronoi_assign(&labelled, at_layer.len())?;
    Ok((points, v))
}

/// `lang,x,y,X,Y,Z,region` rows.
pub fn sphere_csv(langs: &[String], points: &[(usize, (f64, f64), SpherePoint)], v: &Voronoi) -> String {
    let mut s = String::from("lang,x,y,X,Y,Z,region\n");
    for ((l, (x, y), p), r) in points.iter().zip(&v.assignment) {
        writeln!(s, "{},{x:.6},{y:.6},{:.6},{:.6},{:.6},{}", langs[*l], p.x, p.y, p.z, langs[*r]).expect("string write");
    }
    s
}
