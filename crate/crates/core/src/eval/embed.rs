use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::data::{write_features, DataError, FeatureStore};
use crate::model::{embed_item, ItemInput, ModelParams};

/// Compatibility embeddings `v` of `items`, keyed by item id.
pub fn embeddings(params: &ModelParams<f32>, items: &[ItemInput<f32>]) -> Result<FeatureStore, EvalError> {
    let mut store = FeatureStore::new(params.config().projection_dim);
    for item in items {
        store.push(item.item_id.clone(), &embed_item(params, item)?)?;
    }
    Ok(store)
}

/// [`embeddings`] written as an FRNF file.
pub fn export_embeddings(
    params: &ModelParams<f32>,
    items: &[ItemInput<f32>],
    path: impl AsRef<Path>,
) -> Result<FeatureStore, EvalError> {
    let store = embeddings(params, items)?;
    write_features(&store, path)?;
    Ok(store)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pca2d {
    pub coords: Vec<[f64; 2]>,
    pub components: [Vec<f64>; 2],
    /// Variance along each component.
    pub variances: [f64; 2],
    /// The data spans fewer than two directions; missing components are zero.
    pub rank_deficient: bool,
}

const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITERS: usize = 1000;

/// Dominant eigenpair of the symmetric PSD operator `apply` by power
/// iteration.
fn power_iteration(apply: impl Fn(&[f64]) -> Vec<f64>, d: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, f64) {
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    normalise(&mut v);
    for _ in 0..POWER_MAX_ITERS {
        let mut w = apply(&v);
        if normalise(&mut w) == 0.0 {
            return (vec![0.0; d], 0.0);
        }
        let delta = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if delta < POWER_TOL {
            break;
        }
    }
    let lambda = dot(&v, &apply(&v));
    (v, lambda)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalise(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Largest-magnitude entry made positive.
fn fix_sign(v: &mut [f64]) {
    let big = v
        .iter()
        .copied()
        .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if big < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Projection onto the top two principal axes of the mean-centred vectors,
/// found by power iteration with deflation. The covariance is applied as
/// `Xᵀ(X·v)/n` and never materialised.
pub fn pca2d(vectors: &[Vec<f64>]) -> Result<Pca2d, EvalError> {
    let n = vectors.len();
    if n < 2 {
        return Err(EvalError::Pca(format!("got {n} vector(s)")));
    }
    let d = vectors[0].len();
    if d == 0 || vectors.iter().any(|v| v.len() != d) {
        return Err(EvalError::Pca("vectors must share a positive dimension".into()));
    }
    let mut mean = vec![0.0; d];
    for v in vectors {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let total_variance = centred.iter().map(|v| dot(v, v)).sum::<f64>() / n as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut components = [vec![0.0; d], vec![0.0; d]];
    let mut variances = [0.0; 2];
    let mut rank_deficient = false;
    for k in 0..2 {
        let found = &components[..k];
        let found_var = &variances[..k];
        let apply = |v: &[f64]| {
            let mut out = vec![0.0; d];
            for row in &centred {
                let p = dot(row, v) / n as f64;
                out.iter_mut().zip(row).for_each(|(o, r)| *o += p * r);
            }
            for (c, lambda) in found.iter().zip(found_var) {
                let p = lambda * dot(c, v);
                out.iter_mut().zip(c).for_each(|(o, ci)| *o -= p * ci);
            }
            out
        };
        let (mut v, lambda) = power_iteration(apply, d, &mut rng);
        if !(lambda > 1e-12 * total_variance.max(f64::MIN_POSITIVE)) {
            rank_deficient = true;
            break;
        }
        fix_sign(&mut v);
        variances[k] = lambda;
        components[k] = v;
    }
    let coords = centred
        .iter()
        .map(|v| [dot(v, &components[0]), dot(v, &components[1])])
        .collect();
    Ok(Pca2d {
        coords,
        components,
        variances,
        rank_deficient,
    })
}

/// Tab-separated `item_id x y` table for plotting.
pub fn write_coordinates(path: impl AsRef<Path>, ids: &[String], pca: &Pca2d) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut text = String::from("item_id\tx\ty\n");
    for (id, [x, y]) in ids.iter().zip(&pca.coords) {
        writeln!(text, "{id}\t{x}\t{y}").unwrap();
    }
    fs::write(path, text).map_err(|source| {
        EvalError::Data(DataError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleDistances {
    /// Mean Euclidean distance over pairs of items sharing a style.
    pub intra: f64,
    /// Mean over pairs of items with different styles.
    pub inter: f64,
    /// `(inter − intra) / inter`.
    pub margin: f64,
}

/// Pairwise distance statistics over every pair of labeled items in `store`.
pub fn style_distances(store: &FeatureStore, styles: &BTreeMap<String, usize>) -> StyleDistances {
    let labeled: Vec<(&[f32], usize)> = store
        .iter()
        .filter_map(|(id, v)| styles.get(id).map(|s| (v, *s)))
        .collect();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0u64, 0.0, 0u64);
    for (i, (a, sa)) in labeled.iter().enumerate() {
        for (b, sb) in &labeled[i + 1..] {
            let d = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
                .sum::<f64>()
                .sqrt();
            if sa == sb {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    let intra = intra / n_intra.max(1) as f64;
    let inter = inter / n_inter.max(1) as f64;
    StyleDistances {
        intra,
        inter,
        margin: if inter > 0.0 { (inter - intra) / inter } else { 0.0 },
    }
}
