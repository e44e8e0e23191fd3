//! Brute-force reference implementations used by the test suites.
//!
//! Everything in this crate is deliberately slow, written from the defining
//! formulas over plain slices, and kept independent of `nerd-core` so that a
//! bug in an optimized implementation cannot hide in its own oracle. This
//! crate is a dev-dependency only; nothing here ships in the library or the
//! CLI.

/// Pearson correlation straight from the defining formula.
pub fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let dx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let dy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    num / (dx.sqrt() * dy.sqrt())
}

/// Spearman rank correlation (average ranks on ties). Check-side utility for
/// monotone-trend assertions.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson_direct(&ranks(x), &ranks(y))
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut r = vec![0.0; n];
    let mut i = 0;
    while i < n {
        // group ties, assign the average rank of the group
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// OLS coefficients by forming the normal equations X'X b = X'y explicitly
/// and solving with Gaussian elimination (partial pivoting). `design` is
/// row-major, one row per observation.
pub fn ols_normal_equations(design: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = design.len();
    let k = design[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xty = vec![0.0; k];
    for r in 0..n {
        for i in 0..k {
            xty[i] += design[r][i] * y[r];
            for j in 0..k {
                xtx[i][j] += design[r][i] * design[r][j];
            }
        }
    }
    gaussian_solve(&mut xtx, &mut xty);
    xty
}

/// In-place Gaussian elimination with partial pivoting; solution left in `b`.
pub fn gaussian_solve(a: &mut [Vec<f64>], b: &mut [f64]) {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for j in col..n {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        b[col] /= a[col][col];
        for row in 0..col {
            b[row] -= a[row][col] * b[col];
        }
    }
}

/// Paired t statistic and its degrees of freedom, straight from the formula
/// t = mean(d) / (sd(d) / sqrt(n)) with the unbiased sd.
pub fn paired_t_direct(a: &[f64], b: &[f64]) -> (f64, usize) {
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let m = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0);
    (m / (var / n as f64).sqrt(), n - 1)
}

/// Student-t survival function P(T > t) by Simpson quadrature.
///
/// Substituting x = sqrt(dof) * tan(theta) turns the density integral into
/// int cos(theta)^(dof-1) d(theta) over a finite interval, which Simpson
/// handles to well below 1e-12 with the node count used here. No gamma
/// functions involved, so this shares nothing with a Beta-function
/// implementation.
pub fn t_sf_quadrature(t: f64, dof: u64) -> f64 {
    let nu = dof as f64;
    let f = |theta: f64| theta.cos().powi(dof as i32 - 1);
    let theta_t = (t / nu.sqrt()).atan();
    let half_pi = core::f64::consts::FRAC_PI_2;
    let upper = simpson(f, theta_t, half_pi, 200_000);
    let total = simpson(f, -half_pi, half_pi, 400_000);
    upper / total
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Trapezoid integral over a uniform grid, for density-normalization checks.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..n {
        s += f(a + i as f64 * h);
    }
    s * h
}

/// Discounted returns by the O(T^2) double loop G_i = sum_k gamma^k r_{i+k}.
pub fn returns_double_loop(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let t = rewards.len();
    (0..t)
        .map(|i| {
            (i..t)
                .map(|k| gamma.powi((k - i) as i32) * rewards[k])
                .sum()
        })
        .collect()
}

/// Exhaustive two-cluster k-means: tries every assignment of points to two
/// groups (point 0 pinned to group 0 to kill the label symmetry), recomputes
/// centroids per assignment, and returns the global-minimum inertia and its
/// labels. Only feasible for small n.
pub fn exhaustive_kmeans_two_clusters(points: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = points.len();
    let d = points[0].len();
    assert!(n >= 2 && n <= 20, "exhaustive search only for small n");
    let mut best = (f64::INFINITY, vec![0; n]);
    for mask in 0u32..(1 << (n - 1)) {
        let labels: Vec<usize> = (0..n)
            .map(|i| if i == 0 { 0 } else { ((mask >> (i - 1)) & 1) as usize })
            .collect();
        let mut counts = [0usize; 2];
        let mut cent = [vec![0.0; d], vec![0.0; d]];
        for (i, p) in points.iter().enumerate() {
            counts[labels[i]] += 1;
            for j in 0..d {
                cent[labels[i]][j] += p[j];
            }
        }
        if counts[0] == 0 || counts[1] == 0 {
            continue;
        }
        for c in 0..2 {
            for j in 0..d {
                cent[c][j] /= counts[c] as f64;
            }
        }
        let inertia: f64 = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.iter()
                    .zip(&cent[labels[i]])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum();
        if inertia < best.0 {
            best = (inertia, labels);
        }
    }
    best
}

/// Agglomerative clustering replayed naively: every round recomputes all
/// cluster-pair distances from the ORIGINAL distance matrix (mean over cross
/// pairs for average linkage, max for complete), merges the closest pair with
/// lowest-(i,j)-slot tie-breaking, and finally labels clusters by their
/// smallest original member index.
pub fn naive_agglomerative(dist: &[Vec<f64>], k: usize, average: bool) -> Vec<usize> {
    let n = dist.len();
    let mut clusters: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    let mut active = n;
    while active > k {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for i in 0..n {
            let Some(a) = &clusters[i] else { continue };
            for j in i + 1..n {
                let Some(b) = &clusters[j] else { continue };
                let d = if average {
                    let mut s = 0.0;
                    for &p in a {
                        for &q in b {
                            s += dist[p][q];
                        }
                    }
                    s / (a.len() * b.len()) as f64
                } else {
                    let mut m = f64::NEG_INFINITY;
                    for &p in a {
                        for &q in b {
                            if dist[p][q] > m {
                                m = dist[p][q];
                            }
                        }
                    }
                    m
                };
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let moved = clusters[best.2].take().unwrap();
        clusters[best.1].as_mut().unwrap().extend(moved);
        active -= 1;
    }
    // label clusters 0..k-1 ordered by smallest member index
    let mut groups: Vec<Vec<usize>> = clusters.into_iter().flatten().collect();
    groups.sort_by_key(|g| *g.iter().min().unwrap());
    let mut labels = vec![0; n];
    for (ci, g) in groups.iter().enumerate() {
        for &p in g {
            labels[p] = ci;
        }
    }
    labels
}
