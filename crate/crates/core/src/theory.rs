//! Numeric checks of the spectral structure of path/cycle theory graphs:
//! the eigenvector recursion along a path, its trigonometric closed form,
//! monotonicity, eigenvalue multiplicities and bounds, and the collinearity
//! of paths in a double-eigenvalue embedding.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::dsgraph::{build_theory_graph, laplacian, LaplacianMatrix};
use crate::eigen::symmetric_eigen;
use crate::error::TheoryError;
use crate::spectral::{eigendecompose, SpectralDecomposition, MULTIPLICITY_TOL};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecursionSpec {
    pub lambda: f64,
    pub u1: f64,
    /// Path length, at least 3.
    pub length: usize,
}

/// `u2 = (1 - lambda) u1`, `u_n = (2 - lambda) u_{n-1} - u_{n-2}`.
pub fn recursion_sequence(spec: &RecursionSpec) -> Result<Vec<f64>, TheoryError> {
    if spec.length < 3 {
        return Err(TheoryError::PathTooShort(spec.length));
    }
    let mut u = Vec::with_capacity(spec.length);
    u.push(spec.u1);
    u.push((1.0 - spec.lambda) * spec.u1);
    for n in 2..spec.length {
        u.push((2.0 - spec.lambda) * u[n - 1] - u[n - 2]);
    }
    Ok(u)
}

/// `u_n = u1 [cos((n-1) theta) - (lambda/2) sin((n-1) theta) / sin theta]`
/// with `theta = acos(1 - lambda/2)`; `n` is 1-based.
pub fn chebyshev_closed_form(n: usize, lambda: f64, u1: f64) -> Result<f64, TheoryError> {
    if !(lambda > 0.0 && lambda < 4.0) {
        return Err(TheoryError::LambdaOutOfRange(lambda));
    }
    let theta = (1.0 - lambda / 2.0).acos();
    let k = n.saturating_sub(1) as f64;
    Ok(u1 * ((k * theta).cos() - 0.5 * lambda * (k * theta).sin() / theta.sin()))
}

/// Largest eigenvalue for which a path of `p_k` nodes is guaranteed a
/// monotone eigenvector profile: `2 (1 - cos(pi / (p_k - 1/2)))`.
pub fn monotonicity_bound(p_k: usize) -> f64 {
    2.0 * (1.0 - (PI / (p_k as f64 - 0.5)).cos())
}

pub fn is_strictly_monotone(seq: &[f64]) -> bool {
    let inc = seq.windows(2).all(|w| w[1] > w[0]);
    let dec = seq.windows(2).all(|w| w[1] < w[0]);
    inc || dec
}

/// Spectrum of a theory graph together with its pair count.
#[derive(Clone, Debug, PartialEq)]
pub struct Census {
    pub pairs: usize,
    pub spectrum: Vec<f64>,
}

/// Pair count predicted for `K` paths: `K/2 - 1` (even) or `(K-1)/2` (odd).
pub fn predicted_pairs(k: usize) -> usize {
    if k % 2 == 0 {
        (k / 2).saturating_sub(1)
    } else {
        (k - 1) / 2
    }
}

fn equality_tol(spectrum: &[f64]) -> f64 {
    MULTIPLICITY_TOL * spectrum.last().copied().unwrap_or(0.0).max(1.0)
}

/// Runs of equal eigenvalues as `(start, len)` over an ascending spectrum.
pub fn multiplicity_groups(spectrum: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < spectrum.len() {
        let mut end = start + 1;
        while end < spectrum.len() && spectrum[end] - spectrum[end - 1] <= tol {
            end += 1;
        }
        out.push((start, end - start));
        start = end;
    }
    out
}

fn theory_decomposition(k: usize, n: usize) -> Result<(LaplacianMatrix, SpectralDecomposition), TheoryError> {
    let g = build_theory_graph(k, n).map_err(|_| TheoryError::PathTooShort(n))?;
    let l = laplacian(&g);
    let dec = eigendecompose(&l).map_err(|_| TheoryError::NoDoubleEigenvalue)?;
    Ok((l, dec))
}

/// Counts equal eigenvalue pairs in the spectrum of the `(K, N)` theory graph.
pub fn multiplicity_census(k: usize, n: usize) -> Result<Census, TheoryError> {
    let (_, dec) = theory_decomposition(k, n)?;
    let tol = equality_tol(&dec.eigenvalues);
    let pairs = multiplicity_groups(&dec.eigenvalues, tol)
        .iter()
        .map(|&(_, len)| len / 2)
        .sum();
    Ok(Census {
        pairs,
        spectrum: dec.eigenvalues,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigBound {
    pub lower: f64,
    pub upper: f64,
    pub lambda_min2: f64,
    pub ok: bool,
}

/// Smallest eigenvalue of multiplicity 2 against
/// `1 - 2 cos(pi/N) < lambda <= 2 (1 - cos(pi / (N - 1/2)))`.
pub fn eig_bound_check(k: usize, n: usize) -> Result<EigBound, TheoryError> {
    let census = multiplicity_census(k, n)?;
    let tol = equality_tol(&census.spectrum);
    let (start, _) = multiplicity_groups(&census.spectrum, tol)
        .into_iter()
        .find(|&(_, len)| len == 2)
        .ok_or(TheoryError::NoDoubleEigenvalue)?;
    let lambda_min2 = census.spectrum[start];
    let lower = 1.0 - 2.0 * (PI / n as f64).cos();
    let upper = monotonicity_bound(n);
    Ok(EigBound {
        lower,
        upper,
        lambda_min2,
        ok: lower < lambda_min2 && lambda_min2 <= upper + tol,
    })
}

/// Max over interior path nodes of `|r(u_{n+1}) - r(u_n) + lambda u_n|`
/// with `r(u_n) = u_n - u_{n-1}`. Each slice lists one path head first; its
/// last node (the cycle node) is excluded.
pub fn rate_of_change_check(u: &DVector<f64>, lambda: f64, path_slices: &[Range<usize>]) -> f64 {
    let mut worst = 0.0f64;
    for r in path_slices {
        let idx: Vec<usize> = r.clone().collect();
        for w in idx.windows(3) {
            let (a, b, c) = (u[w[0]], u[w[1]], u[w[2]]);
            let dev = ((c - b) - (b - a) + lambda * b).abs();
            worst = worst.max(dev);
        }
    }
    worst
}

/// Max residual of the path recursion (head equation at the degree-1 node,
/// three-term relation at interior nodes) over every eigenpair.
pub fn path_recursion_residual(dec: &SpectralDecomposition, path_slices: &[Range<usize>]) -> f64 {
    let mut worst = 0.0f64;
    for (c, &lambda) in dec.eigenvalues.iter().enumerate() {
        let u = dec.eigenvectors.column(c);
        for r in path_slices {
            let idx: Vec<usize> = r.clone().collect();
            if idx.len() < 2 {
                continue;
            }
            worst = worst.max((u[idx[1]] - (1.0 - lambda) * u[idx[0]]).abs());
            for w in idx.windows(3) {
                let dev = u[w[2]] - (2.0 - lambda) * u[w[1]] + u[w[0]];
                worst = worst.max(dev.abs());
            }
        }
    }
    worst
}

/// Node ranges of the `K` paths of a theory graph.
pub fn theory_paths(k: usize, n: usize) -> Vec<Range<usize>> {
    (0..k).map(|p| p * n..(p + 1) * n).collect()
}

/// Collinearity of per-path 2-D point sets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linearity {
    /// Max perpendicular distance to the first-last chord over chord length.
    pub residual: f64,
    /// Max `|sin|` of the angle between a point and the path's first point,
    /// seen from the origin.
    pub slope_error: f64,
}

pub fn linearity_check(paths: &[Vec<[f64; 2]>]) -> Result<Linearity, TheoryError> {
    let mut residual = 0.0f64;
    let mut slope_error = 0.0f64;
    for path in paths {
        let (Some(first), Some(last)) = (path.first(), path.last()) else {
            continue;
        };
        let chord = [last[0] - first[0], last[1] - first[1]];
        let len = chord[0].hypot(chord[1]);
        if len == 0.0 {
            if path.iter().all(|p| p == first) {
                return Err(TheoryError::DegeneratePath);
            }
            continue;
        }
        for p in path {
            let d = [p[0] - first[0], p[1] - first[1]];
            let perp = (d[0] * chord[1] - d[1] * chord[0]).abs() / len;
            residual = residual.max(perp / len);
        }
        let r1 = first[0].hypot(first[1]);
        if first[0].abs() > 1e-9 && first[1].abs() > 1e-9 {
            for p in path {
                let rp = p[0].hypot(p[1]);
                if rp > 1e-9 {
                    let sin = (p[0] * first[1] - p[1] * first[0]).abs() / (rp * r1);
                    slope_error = slope_error.max(sin);
                }
            }
        }
    }
    Ok(Linearity {
        residual,
        slope_error,
    })
}

/// Eigenvalue and the two eigenvectors of the smallest double eigenvalue.
pub fn double_eigenpair(k: usize, n: usize) -> Result<(f64, DVector<f64>, DVector<f64>), TheoryError> {
    let (_, dec) = theory_decomposition(k, n)?;
    let tol = equality_tol(&dec.eigenvalues);
    let (start, _) = multiplicity_groups(&dec.eigenvalues, tol)
        .into_iter()
        .find(|&(_, len)| len == 2)
        .ok_or(TheoryError::NoDoubleEigenvalue)?;
    Ok((dec.eigenvalues[start], dec.vector(start), dec.vector(start + 1)))
}

/// Per-path 2-D coordinates in the smallest double eigenpair.
pub fn double_embedding(k: usize, n: usize) -> Result<Vec<Vec<[f64; 2]>>, TheoryError> {
    let (_, a, b) = double_eigenpair(k, n)?;
    Ok(theory_paths(k, n)
        .into_iter()
        .map(|r| r.map(|i| [a[i], b[i]]).collect())
        .collect())
}

/// Outcome of the monotonicity check over one theory graph.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    /// Eigenpairs below the bound that were checked.
    pub checked: usize,
    /// `(eigenvalue index, path)` pairs that were not strictly monotone.
    pub violations: Vec<(usize, usize)>,
}

/// Checks every eigenpair with `0 < lambda <= bound(N)` for strictly
/// monotone coordinates along each path.
pub fn monotonicity_check(k: usize, n: usize) -> Result<MonotonicityReport, TheoryError> {
    let (_, dec) = theory_decomposition(k, n)?;
    let bound = monotonicity_bound(n);
    let tau = dec.zero_threshold();
    let mut report = MonotonicityReport {
        checked: 0,
        violations: Vec::new(),
    };
    for (c, &lambda) in dec.eigenvalues.iter().enumerate() {
        if lambda <= tau || lambda > bound {
            continue;
        }
        report.checked += 1;
        let u = dec.eigenvectors.column(c);
        for (p, r) in theory_paths(k, n).into_iter().enumerate() {
            let seq: Vec<f64> = r.map(|i| u[i]).collect();
            // Paths a symmetric eigenvector vanishes on carry no profile.
            if seq.iter().all(|v| v.abs() < 1e-10) {
                continue;
            }
            if !is_strictly_monotone(&seq) {
                report.violations.push((c, p));
            }
        }
    }
    Ok(report)
}

/// Max deviation of the spectrum of the `(N-1)`-vertex path adjacency from
/// `2 cos(pi n / N)`, `n = 1..N-1`.
pub fn m0_spectrum_check(n: usize) -> Result<f64, TheoryError> {
    if n < 2 {
        return Err(TheoryError::PathTooShort(n));
    }
    let m = n - 1;
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
        a[(i + 1, i)] = 1.0;
    }
    let (vals, _) = symmetric_eigen(&a).map_err(|_| TheoryError::NoDoubleEigenvalue)?;
    let mut expect: Vec<f64> = (1..n).map(|j| 2.0 * (PI * j as f64 / n as f64).cos()).collect();
    expect.sort_by(f64::total_cmp);
    Ok(vals
        .iter()
        .zip(&expect)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
