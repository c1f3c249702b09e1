//! Slow, literal reference implementations. Nothing here shares code with
//! the pipeline; tests compare the two routes.

/// Ascending copy by insertion sort.
pub fn sort(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::with_capacity(values.len());
    for &x in values {
        let mut i = v.len();
        v.push(x);
        while i > 0 && v[i - 1] > x {
            v[i] = v[i - 1];
            i -= 1;
        }
        v[i] = x;
    }
    v
}

/// Linear interpolation between order statistics at position `q·(n−1)`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let s = sort(values);
    let pos = q * (s.len() - 1) as f64;
    let below = pos.floor() as usize;
    if below + 1 >= s.len() || pos == below as f64 {
        return s[below.min(s.len() - 1)];
    }
    let w = pos - below as f64;
    s[below] + w * (s[below + 1] - s[below])
}

/// `true` where the value lies inside `[Q1 − k·IQR, Q3 + k·IQR]`.
pub fn tukey_keep(values: &[f64], k: f64) -> Vec<bool> {
    let q1 = quantile(values, 0.25);
    let q3 = quantile(values, 0.75);
    let spread = q3 - q1;
    values.iter().map(|&v| !(v < q1 - k * spread) && !(v > q3 + k * spread)).collect()
}

/// `p`-th percentile of the trailing `window` values, floored at zero.
pub fn adams_window(history: &[f64], p: f64, window: usize) -> f64 {
    let tail = &history[history.len() - window..];
    quantile(tail, p / 100.0).max(0.0)
}

pub fn mae(predictions: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(predictions.len(), truth.len());
    let mut total = 0.0;
    for i in 0..truth.len() {
        total += (predictions[i] - truth[i]).abs();
    }
    total / truth.len() as f64
}

pub fn delta_pct(model: f64, comparator: f64) -> f64 {
    100.0 * (model / comparator - 1.0)
}

/// Pairwise dominance over every `(a_i, b_j)`.
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> f64 {
    let mut greater = 0i64;
    let mut less = 0i64;
    for &x in a {
        for &y in b {
            if x > y {
                greater += 1;
            } else if x < y {
                less += 1;
            }
        }
    }
    (greater - less) as f64 / (a.len() * b.len()) as f64
}

/// τ-b by enumerating all pairs.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut concordant, mut discordant, mut tied_x, mut tied_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            }
            if dx == 0.0 {
                tied_x += 1;
            } else if dy == 0.0 {
                tied_y += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let left = (concordant + discordant + tied_y) as f64;
    let right = (concordant + discordant + tied_x) as f64;
    if left == 0.0 || right == 0.0 {
        return 0.0;
    }
    (concordant - discordant) as f64 / (left * right).sqrt()
}

/// Mid-rank of `column[i]` by counting: 1 + #smaller + (#equal − 1)/2.
pub fn mid_rank(column: &[f64], i: usize) -> f64 {
    let smaller = column.iter().filter(|&&v| v < column[i]).count() as f64;
    let equal = column.iter().filter(|&&v| v == column[i]).count() as f64;
    1.0 + smaller + (equal - 1.0) / 2.0
}

/// Friedman χ² from the rank-variance form and Kendall's W from its
/// tie-corrected definition, over `scores[config][block]`.
pub fn friedman(scores: &[Vec<f64>]) -> (f64, f64) {
    let k = scores.len();
    let n = scores[0].len();
    let mut sums = vec![0.0; k];
    let mut sum_sq = 0.0;
    let mut ties = 0.0;
    for b in 0..n {
        let column: Vec<f64> = scores.iter().map(|row| row[b]).collect();
        for j in 0..k {
            let r = mid_rank(&column, j);
            sums[j] += r;
            sum_sq += r * r;
        }
        let mut seen: Vec<f64> = Vec::new();
        for &v in &column {
            if seen.contains(&v) {
                continue;
            }
            seen.push(v);
            let t = column.iter().filter(|&&u| u == v).count() as f64;
            ties += t * t * t - t;
        }
    }
    let (kf, nf) = (k as f64, n as f64);
    let centre = nf * (kf + 1.0) / 2.0;
    let spread: f64 = sums.iter().map(|r| (r - centre) * (r - centre)).sum();
    let chi2 = (kf - 1.0) * spread / (sum_sq - nf * kf * (kf + 1.0) * (kf + 1.0) / 4.0);
    let w = 12.0 * spread / (nf * nf * (kf * kf * kf - kf) - nf * ties);
    (chi2, w)
}

/// `|v| / Σ|v|`.
pub fn normalize(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().map(|v| v.abs()).sum();
    raw.iter().map(|v| v.abs() / total).collect()
}

/// One AFM observation: student, outcome, `(skill, prior opportunities)`.
pub type AfmObs = (usize, bool, Vec<(usize, f64)>);

/// Penalized AFM log-likelihood written out term by term. Parameters are
/// `[θ; β; γ]`.
pub fn afm_objective(n_students: usize, n_skills: usize, obs: &[AfmObs], l2: (f64, f64, f64), x: &[f64]) -> f64 {
    let theta = &x[..n_students];
    let beta = &x[n_students..n_students + n_skills];
    let gamma = &x[n_students + n_skills..];
    let mut ll = 0.0;
    for (s, correct, terms) in obs {
        let mut z = theta[*s];
        for &(k, t) in terms {
            z += beta[k] + gamma[k] * t;
        }
        let p = 1.0 / (1.0 + (-z).exp());
        ll += if *correct { p.ln() } else { (1.0 - p).ln() };
    }
    let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
    ll - 0.5 * (l2.0 * sq(theta) + l2.1 * sq(beta) + l2.2 * sq(gamma))
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂), zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}
