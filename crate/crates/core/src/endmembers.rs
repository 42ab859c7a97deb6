//! Endmember extraction: reference means from pure regions, VCA, N-FINDR, and
//! alignment of an extracted set against a reference.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::metrics::sad;
use crate::model::{EndmemberMatrix, HyperCube, Spectrum};

/// Rectangle of pixels, `rows × cols` starting at `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Region {
    pub fn new(row: usize, col: usize, rows: usize, cols: usize) -> Self {
        Self { row, col, rows, cols }
    }

    pub fn whole(cube: &HyperCube) -> Self {
        Self::new(0, 0, cube.height(), cube.width())
    }
}

/// Per-band mean over the region.
pub fn extract_pure_mean(cube: &HyperCube, region: Region) -> Result<Spectrum> {
    if region.rows == 0 || region.cols == 0 {
        return Err(Error::Dimension("empty region".into()));
    }
    if region.row + region.rows > cube.height() || region.col + region.cols > cube.width() {
        return Err(Error::Dimension(format!(
            "region {}x{} at ({}, {}) exceeds {}x{} cube",
            region.rows,
            region.cols,
            region.row,
            region.col,
            cube.height(),
            cube.width()
        )));
    }
    let n = (region.rows * region.cols) as f64;
    let values = (0..cube.bands())
        .map(|b| {
            let mut acc = 0.0;
            for row in region.row..region.row + region.rows {
                for col in region.col..region.col + region.cols {
                    acc += cube.get(row, col, b);
                }
            }
            acc / n
        })
        .collect();
    Spectrum::new(values, cube.wavelengths().to_vec())
}

/// Mean-removed principal subspace of the valid bands.
struct Subspace {
    /// Pixel coordinates in the subspace, one `dim`-vector per pixel.
    coords: Vec<DVector<f64>>,
    rank: usize,
}

fn principal_subspace(cube: &HyperCube, dim: usize) -> Subspace {
    let bands = cube.valid_bands();
    let l = bands.len();
    let n = cube.pixel_count();
    let pixels: Vec<DVector<f64>> = (0..n)
        .map(|i| DVector::from_vec(cube.pixel_bands(i, &bands)))
        .collect();
    let mean = pixels.iter().fold(DVector::zeros(l), |acc, p| acc + p) / n as f64;
    let mut cov = DMatrix::<f64>::zeros(l, l);
    for p in &pixels {
        let d = p - &mean;
        cov.syger(1.0, &d, &d, 1.0);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&k| top > 0.0 && eig.eigenvalues[k] > 1e-10 * top)
        .count();
    let basis: Vec<DVector<f64>> = order
        .iter()
        .take(dim)
        .map(|&k| eig.eigenvectors.column(k).into_owned())
        .collect();
    let coords = pixels
        .iter()
        .map(|p| {
            let d = p - &mean;
            DVector::from_iterator(dim, basis.iter().map(|u| u.dot(&d)))
        })
        .collect();
    Subspace { coords, rank }
}

fn check_count(cube: &HyperCube, r: usize) -> Result<()> {
    let l = cube.valid_bands().len();
    if r == 0 || r > l || r > cube.pixel_count() {
        return Err(Error::Value(format!(
            "endmember count {r} must lie in 1..={}",
            l.min(cube.pixel_count())
        )));
    }
    Ok(())
}

fn columns_from_indices(cube: &HyperCube, indices: &[usize]) -> Result<EndmemberMatrix> {
    let columns = indices.iter().map(|&i| cube.pixel_at(i)).collect();
    let names = (1..=indices.len()).map(|k| format!("em{k}")).collect();
    EndmemberMatrix::new(columns, names, cube.wavelengths().to_vec())
}

fn argmax_abs(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v.abs() > best.1 {
            best = (i, v.abs());
        }
    }
    best.0
}

/// Vertex component analysis; returns the selected pixel spectra.
pub fn vca(cube: &HyperCube, r: usize, seed: u64) -> Result<EndmemberMatrix> {
    let indices = vca_indices(cube, r, seed)?;
    columns_from_indices(cube, &indices)
}

/// Pixel indices chosen by [`vca`], in selection order.
pub fn vca_indices(cube: &HyperCube, r: usize, seed: u64) -> Result<Vec<usize>> {
    check_count(cube, r)?;
    let dim = (r - 1).max(1);
    let sub = principal_subspace(cube, dim);
    if sub.rank < dim {
        return Err(Error::Extraction(format!(
            "data rank {} after mean removal is below the {dim} needed for {r} endmembers",
            sub.rank
        )));
    }
    if r == 1 {
        return Ok(vec![argmax_abs(sub.coords.iter().map(|z| z[0]))]);
    }
    // Append a constant coordinate so the vertices of the (R−1)-simplex become
    // extreme rays of a cone through the origin.
    let c = sub.coords.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let ys: Vec<DVector<f64>> = sub
        .coords
        .iter()
        .map(|z| DVector::from_iterator(r, z.iter().copied().chain(std::iter::once(c))))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(r);
    let mut selected = Vec::with_capacity(r);
    for step in 0..r {
        let mut against = basis.clone();
        if step == 0 {
            let mut e = DVector::zeros(r);
            e[r - 1] = 1.0;
            against.push(e);
        }
        let mut f = None;
        for _ in 0..100 {
            let mut w = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
            for q in &against {
                let proj = q.dot(&w);
                w -= q * proj;
            }
            let norm = w.norm();
            if norm > 1e-10 {
                f = Some(w / norm);
                break;
            }
        }
        let f = f.ok_or_else(|| Error::Extraction("no direction orthogonal to selected set".into()))?;
        let idx = argmax_abs(ys.iter().map(|y| f.dot(y)));
        // extend the orthonormal basis with the new vertex
        let mut v = ys[idx].clone();
        for q in &basis {
            let proj = q.dot(&v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm <= 1e-12 * ys[idx].norm().max(f64::MIN_POSITIVE) {
            return Err(Error::Extraction(format!(
                "selected pixel {idx} is dependent on earlier endmembers"
            )));
        }
        basis.push(v / norm);
        selected.push(idx);
    }
    Ok(selected)
}

/// Full N-FINDR result.
#[derive(Debug, Clone)]
pub struct NfindrOutput {
    pub endmembers: EndmemberMatrix,
    pub indices: Vec<usize>,
    /// Simplex volume initially and after every accepted replacement.
    pub volume_trace: Vec<f64>,
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn simplex_volume(coords: &[DVector<f64>], vertices: &[usize]) -> f64 {
    let r = vertices.len();
    if r == 1 {
        return 1.0;
    }
    let mut e = DMatrix::<f64>::zeros(r, r);
    for (j, &v) in vertices.iter().enumerate() {
        e[(0, j)] = 1.0;
        for k in 0..r - 1 {
            e[(k + 1, j)] = coords[v][k];
        }
    }
    e.lu().determinant().abs() / factorial(r - 1)
}

/// N-FINDR simplex-volume maximisation; returns the vertex spectra.
pub fn nfindr(cube: &HyperCube, r: usize, seed: u64) -> Result<EndmemberMatrix> {
    Ok(nfindr_detailed(cube, r, seed)?.endmembers)
}

pub fn nfindr_detailed(cube: &HyperCube, r: usize, seed: u64) -> Result<NfindrOutput> {
    check_count(cube, r)?;
    let bands = cube.valid_bands();
    // first occurrence of every distinct spectrum, in pixel order
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let distinct: Vec<usize> = (0..cube.pixel_count())
        .filter(|&i| seen.insert(cube.pixel_bands(i, &bands).iter().map(|v| v.to_bits()).collect()))
        .collect();
    if distinct.len() < r {
        return Err(Error::Extraction(format!(
            "{} distinct pixels cannot span {r} endmembers",
            distinct.len()
        )));
    }
    let coords = principal_subspace(cube, (r - 1).max(1)).coords;
    let n = cube.pixel_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // duplicates in the start simplex would pin its volume at zero
    let mut vertices: Vec<usize> = sample(&mut rng, distinct.len(), r)
        .into_iter()
        .map(|k| distinct[k])
        .collect();
    let mut volume = simplex_volume(&coords, &vertices);
    let mut trace = vec![volume];

    let max_sweeps = 100 * r + 100;
    for _ in 0..max_sweeps {
        let mut changed = false;
        for i in 0..n {
            for j in 0..r {
                if vertices[j] == i {
                    continue;
                }
                let old = vertices[j];
                vertices[j] = i;
                let trial = simplex_volume(&coords, &vertices);
                if trial > volume * (1.0 + 1e-10) && trial > 0.0 {
                    volume = trial;
                    trace.push(volume);
                    changed = true;
                } else {
                    vertices[j] = old;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if r >= 2 && !(volume > 0.0) {
        return Err(Error::Extraction("simplex volume is zero".into()));
    }
    Ok(NfindrOutput {
        endmembers: columns_from_indices(cube, &vertices)?,
        indices: vertices,
        volume_trace: trace,
    })
}

/// Optimal assignment of estimated to reference columns by total SAD.
///
/// Returns `perm` with `perm[j]` the estimate column matched to reference
/// column `j`.
pub fn match_endmembers(estimate: &EndmemberMatrix, reference: &EndmemberMatrix) -> Result<Vec<usize>> {
    if estimate.count() != reference.count() || estimate.bands() != reference.bands() {
        return Err(Error::Dimension(format!(
            "estimate is {}x{}, reference {}x{}",
            estimate.bands(),
            estimate.count(),
            reference.bands(),
            reference.count()
        )));
    }
    let r = reference.count();
    let mut cost = vec![vec![0.0; r]; r];
    for (j, row) in cost.iter_mut().enumerate() {
        for (i, c) in row.iter_mut().enumerate() {
            *c = sad(reference.column(j), estimate.column(i))?;
        }
    }
    Ok(hungarian(&cost))
}

/// Per-reference-column SAD after applying a matching permutation.
pub fn matched_sad(estimate: &EndmemberMatrix, reference: &EndmemberMatrix, perm: &[usize]) -> Result<Vec<f64>> {
    perm.iter()
        .enumerate()
        .map(|(j, &i)| sad(reference.column(j), estimate.column(i)))
        .collect()
}

/// Minimum-cost assignment of rows to columns for a square cost matrix
/// (shortest augmenting paths with potentials). Returns the column of each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::default_wavelengths;
    use crate::simulate::synth_endmembers;
    use proptest::prelude::*;

    fn planted_cube(m: &EndmemberMatrix, side: usize, seed: u64) -> HyperCube {
        // Pure pixels at the first R indices, Dirichlet-like interior elsewhere.
        let r = m.count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<Vec<f64>> = (0..side * side)
            .map(|i| {
                if i < r {
                    let mut a = vec![0.0; r];
                    a[i] = 1.0;
                    m.mix(&a)
                } else {
                    let raw: Vec<f64> = (0..r).map(|_| -rand::Rng::random::<f64>(&mut rng).max(1e-9).ln()).collect();
                    let s: f64 = raw.iter().sum();
                    // keep interior points away from the faces
                    let a: Vec<f64> = raw.iter().map(|v| 0.1 / r as f64 + 0.9 * v / s).collect();
                    m.mix(&a)
                }
            })
            .collect();
        HyperCube::from_pixels(side, side, m.wavelengths().to_vec(), &pixels).unwrap()
    }

    fn brute_force(cost: &[Vec<f64>]) -> (Vec<usize>, f64) {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
        permutations(cost.len())
            .into_iter()
            .map(|p| {
                let total = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>();
                (p, total)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }

    #[test]
    fn pure_mean_trivial() {
        let cube = HyperCube::from_fn(4, 3, default_wavelengths(5), |_, _, _| 0.42).unwrap();
        let s = extract_pure_mean(&cube, Region::new(1, 0, 2, 3)).unwrap();
        assert!(s.values().iter().all(|&v| (v - 0.42).abs() < 1e-15));

        let cube = HyperCube::from_fn(2, 1, default_wavelengths(3), |_, col, _| if col == 0 { 0.2 } else { 0.4 }).unwrap();
        let s = extract_pure_mean(&cube, Region::whole(&cube)).unwrap();
        assert!(s.values().iter().all(|&v| (v - 0.3).abs() < 1e-15));

        assert!(matches!(
            extract_pure_mean(&cube, Region::new(0, 0, 0, 1)),
            Err(Error::Dimension(_))
        ));
        assert!(extract_pure_mean(&cube, Region::new(0, 1, 1, 2)).is_err());
    }

    #[test]
    fn pure_mean_beats_single_pixels() {
        let m = synth_endmembers(1, 32, 3).unwrap();
        let truth = m.column(0).to_vec();
        let (mut wins, trials) = (0, 20);
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let pixels: Vec<Vec<f64>> = (0..50)
                .map(|_| {
                    truth
                        .iter()
                        .map(|v| v + 0.02 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                        .collect()
                })
                .collect();
            let cube = HyperCube::from_pixels(10, 5, m.wavelengths().to_vec(), &pixels).unwrap();
            let mean = extract_pure_mean(&cube, Region::whole(&cube)).unwrap();
            let mean_sad = sad(&truth, mean.values()).unwrap();
            let avg_single: f64 =
                pixels.iter().map(|p| sad(&truth, p).unwrap()).sum::<f64>() / pixels.len() as f64;
            if mean_sad < avg_single {
                wins += 1;
            }
        }
        assert_eq!(wins, trials);
    }

    #[test]
    fn nfindr_with_mostly_repeated_pixels() {
        // three pure blocks only: any start with a repeated spectrum is flat
        let m = synth_endmembers(3, 24, 8).unwrap();
        let pixels: Vec<Vec<f64>> = (0..300).map(|i| m.column(i * 3 / 300).to_vec()).collect();
        let cube = HyperCube::from_pixels(20, 15, m.wavelengths().to_vec(), &pixels).unwrap();
        for seed in 0..10 {
            let est = nfindr(&cube, 3, seed).unwrap();
            let perm = match_endmembers(&est, &m).unwrap();
            assert!(matched_sad(&est, &m, &perm).unwrap().iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn vca_recovers_planted_pixels() {
        for r in [2, 3, 4] {
            let m = synth_endmembers(r, 40, 11 + r as u64).unwrap();
            let cube = planted_cube(&m, 12, 5);
            let est = vca(&cube, r, 9).unwrap();
            let perm = match_endmembers(&est, &m).unwrap();
            for s in matched_sad(&est, &m, &perm).unwrap() {
                assert!(s < 1e-6, "r={r}: sad {s}");
            }
        }
    }

    #[test]
    fn vca_single_endmember_takes_max_projection() {
        // pixels on a line: the extreme far from the mean is picked
        let pixels: Vec<Vec<f64>> = [0.1, 0.2, 0.25, 0.9, 0.3]
            .iter()
            .map(|&t| vec![t, 2.0 * t, 0.5])
            .collect();
        let cube = HyperCube::from_pixels(5, 1, vec![1.0, 2.0, 3.0], &pixels).unwrap();
        assert_eq!(vca_indices(&cube, 1, 0).unwrap(), vec![3]);
    }

    #[test]
    fn vca_deterministic_and_rank_checked() {
        let m = synth_endmembers(3, 30, 2).unwrap();
        let cube = planted_cube(&m, 8, 1);
        assert_eq!(vca_indices(&cube, 3, 4).unwrap(), vca_indices(&cube, 3, 4).unwrap());
        let flat = HyperCube::from_fn(4, 4, default_wavelengths(6), |_, _, b| 0.1 * b as f64).unwrap();
        assert!(matches!(vca(&flat, 2, 0), Err(Error::Extraction(_))));
        assert!(matches!(vca(&cube, 0, 0), Err(Error::Value(_))));
    }

    #[test]
    fn nfindr_recovers_planted_simplex() {
        for r in [2, 3, 4] {
            let m = synth_endmembers(r, 40, 21 + r as u64).unwrap();
            let cube = planted_cube(&m, 12, 7);
            let out = nfindr_detailed(&cube, r, 3).unwrap();
            let mut idx = out.indices.clone();
            idx.sort();
            assert_eq!(idx, (0..r).collect::<Vec<_>>());
            assert!(out.volume_trace.windows(2).all(|w| w[1] >= w[0]));
            assert!(out.volume_trace.last() >= out.volume_trace.first());
        }
    }

    #[test]
    fn nfindr_degenerate_and_deterministic() {
        let flat = HyperCube::from_fn(4, 4, default_wavelengths(6), |_, _, _| 0.3).unwrap();
        assert!(matches!(nfindr(&flat, 2, 0), Err(Error::Extraction(_))));
        let m = synth_endmembers(3, 20, 8).unwrap();
        let cube = planted_cube(&m, 6, 2);
        assert_eq!(
            nfindr_detailed(&cube, 3, 5).unwrap().indices,
            nfindr_detailed(&cube, 3, 5).unwrap().indices
        );
    }

    #[test]
    fn extracted_columns_are_pixels() {
        let m = synth_endmembers(3, 24, 4).unwrap();
        let cube = planted_cube(&m, 9, 6);
        let pixels: Vec<Vec<f64>> = (0..cube.pixel_count()).map(|i| cube.pixel_at(i)).collect();
        for est in [vca(&cube, 3, 1).unwrap(), nfindr(&cube, 3, 1).unwrap()] {
            for k in 0..3 {
                assert!(pixels.iter().any(|p| p.as_slice() == est.column(k)));
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let m = synth_endmembers(3, 24, 12).unwrap();
        let cube = planted_cube(&m, 9, 3);
        let scaled = cube.scaled(2.5);
        assert_eq!(vca_indices(&cube, 3, 2).unwrap(), vca_indices(&scaled, 3, 2).unwrap());
        let a = nfindr_detailed(&cube, 3, 2).unwrap();
        let b = nfindr_detailed(&scaled, 3, 2).unwrap();
        assert_eq!(a.indices, b.indices);
        assert_eq!(
            match_endmembers(&a.endmembers, &m).unwrap(),
            match_endmembers(&b.endmembers, &m).unwrap()
        );
    }

    #[test]
    fn match_identity_and_swap() {
        let m = synth_endmembers(4, 30, 5).unwrap();
        assert_eq!(match_endmembers(&m, &m).unwrap(), vec![0, 1, 2, 3]);
        let swapped = m.select_columns(&[2, 0, 3, 1]).unwrap();
        let perm = match_endmembers(&swapped, &m).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            assert_eq!(swapped.column(i), m.column(j));
        }
        assert!(matched_sad(&swapped, &m, &perm).unwrap().iter().all(|&s| s == 0.0));
        let other = synth_endmembers(3, 30, 5).unwrap();
        assert!(matches!(match_endmembers(&other, &m), Err(Error::Dimension(_))));
    }

    #[test]
    fn hungarian_known_optimum() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let got = hungarian(&cost);
        let (best, total) = brute_force(&cost);
        assert_eq!(got, best);
        assert_eq!(got.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>(), total);
    }

    proptest! {
        #[test]
        fn hungarian_matches_brute_force(values in prop::collection::vec(0.0f64..100.0, 16)) {
            let cost: Vec<Vec<f64>> = values.chunks(4).map(|c| c.to_vec()).collect();
            let got = hungarian(&cost);
            let (_, best) = brute_force(&cost);
            let total: f64 = got.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            prop_assert!((total - best).abs() < 1e-9);
            let mut sorted = got.clone();
            sorted.sort();
            prop_assert_eq!(sorted, vec![0, 1, 2, 3]);
        }
    }
}
