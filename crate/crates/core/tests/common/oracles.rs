//! Brute-force reference computations for small instances. Nothing here
//! calls into the solvers being checked.

#![allow(dead_code)]

use lattice_mc::recombine::MomentMap;
use lattice_mc::ChainModel;

pub const HULL_POINT_CAP: usize = 30;
pub const STRATEGY_CAP: u64 = 1_000_000;

/// Image of a point under the moment map, computed independently.
fn features(map: MomentMap, p: &[f64]) -> Vec<f64> {
    let (mean, second, d) = match map {
        MomentMap::MeanAndSecond { dim } => (true, true, dim),
        MomentMap::SecondOnly { dim } => (false, true, dim),
        MomentMap::MeanOnly { dim } => (true, false, dim),
    };
    let mut out = Vec::new();
    if mean {
        out.extend_from_slice(&p[..d]);
    }
    if second {
        for i in 0..d {
            for j in i..d {
                out.push(p[i] * p[j]);
            }
        }
    }
    out
}

/// Gaussian elimination with partial pivoting; `None` if singular.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if cur.len() == k {
        return visit(cur);
    }
    for i in start..n {
        cur.push(i);
        if subsets(n, k, i + 1, cur, visit) {
            return true;
        }
        cur.pop();
    }
    false
}

/// Whether `target` lies in the convex hull of the images of `points`,
/// decided by trying every subset of at most `h + 1` points (Carathéodory)
/// and solving for barycentric weights.
pub fn brute_force_hull_check(points: &[Vec<f64>], target: &[f64], map: MomentMap) -> Result<bool, String> {
    if points.len() > HULL_POINT_CAP {
        return Err(format!("{} points exceed the cap of {HULL_POINT_CAP}", points.len()));
    }
    let imgs: Vec<Vec<f64>> = points.iter().map(|p| features(map, p)).collect();
    let h = target.len();
    let tol = 1e-9 * target.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for k in 1..=(h + 1).min(points.len()) {
        let found = subsets(points.len(), k, 0, &mut Vec::new(), &mut |s: &[usize]| {
            // normal equations of [imgs; 1] w = [target; 1]
            let col = |j: usize, r: usize| if r < h { imgs[s[j]][r] } else { 1.0 };
            let rhs = |r: usize| if r < h { target[r] } else { 1.0 };
            let ata: Vec<Vec<f64>> =
                (0..k).map(|i| (0..k).map(|j| (0..=h).map(|r| col(i, r) * col(j, r)).sum()).collect()).collect();
            let atb: Vec<f64> = (0..k).map(|i| (0..=h).map(|r| col(i, r) * rhs(r)).sum()).collect();
            let Some(w) = gauss_solve(ata, atb) else { return false };
            if w.iter().any(|&v| v < -1e-12) {
                return false;
            }
            (0..=h).all(|r| ((0..k).map(|j| w[j] * col(j, r)).sum::<f64>() - rhs(r)).abs() <= tol)
        });
        if found {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Optimal value of `E[Σ_{i<τ} k(X_i)Δt + g(X_τ)]` found by listing every
/// stopping rule on the path tree of the chain and evaluating each one.
pub fn enumerate_stopping_strategies(
    chain: &ChainModel<f64>,
    k: &dyn Fn(&[f64]) -> f64,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<f64, String> {
    let n = chain.n;
    let dt = chain.horizon / n as f64;
    // decision nodes: every path prefix of length < n, in DFS order
    struct Node {
        state: usize,
        children: Vec<(usize, f64)>,
    }
    let mut nodes: Vec<Node> = Vec::new();
    fn grow(chain: &ChainModel<f64>, state: usize, depth: usize, n: usize, nodes: &mut Vec<Node>) -> Option<usize> {
        if depth == n {
            return None;
        }
        let id = nodes.len();
        nodes.push(Node { state, children: Vec::new() });
        let kids: Vec<(usize, f64)> = chain.rows[state]
            .iter()
            .filter(|e| e.1 > 0.0)
            .map(|&(dst, p)| (grow(chain, dst, depth + 1, n, nodes).map_or(usize::MAX - dst, |c| c), p))
            .collect();
        nodes[id].children = kids;
        Some(id)
    }
    grow(chain, chain.start_id, 0, n, &mut nodes);
    let count = 1u64.checked_shl(nodes.len() as u32).filter(|&c| c <= STRATEGY_CAP);
    let count = count.ok_or_else(|| format!("{} decision nodes exceed the strategy cap", nodes.len()))?;
    let point = |s: usize| chain.state_point(s);
    // leaves encode `usize::MAX - state`
    fn value(
        node: usize,
        mask: u64,
        nodes: &[Node],
        dt: f64,
        point: &dyn Fn(usize) -> Vec<f64>,
        k: &dyn Fn(&[f64]) -> f64,
        g: &dyn Fn(&[f64]) -> f64,
    ) -> f64 {
        let nd = &nodes[node];
        let x = point(nd.state);
        if mask >> node & 1 == 1 {
            return g(&x);
        }
        let mut v = k(&x) * dt;
        for &(c, p) in &nd.children {
            v += p * if c >= nodes.len() { g(&point(usize::MAX - c)) } else { value(c, mask, nodes, dt, point, k, g) };
        }
        v
    }
    let mut best = f64::INFINITY;
    for mask in 0..count {
        best = best.min(value(0, mask, &nodes, dt, &point, k, g));
    }
    Ok(best)
}

/// Bermudan stopping value for `dX = σ dW` from `x0` with `steps` exercise
/// dates on `[0, T]`, by backward induction on a dense grid with
/// row-normalized Gaussian transition kernels.
pub fn dense_grid_stopping_value(
    x0: f64,
    sigma: f64,
    horizon: f64,
    steps: usize,
    k: &dyn Fn(f64) -> f64,
    g: &dyn Fn(f64) -> f64,
    half_width: f64,
    spacing: f64,
) -> f64 {
    let m = (half_width / spacing).round() as i64;
    let xs: Vec<f64> = (-m..=m).map(|i| x0 + i as f64 * spacing).collect();
    let dt = horizon / steps as f64;
    let sd = sigma * dt.sqrt();
    let reach = (8.0 * sd / spacing).ceil() as i64;
    let kernel: Vec<f64> = (-reach..=reach).map(|j| (-(j as f64 * spacing).powi(2) / (2.0 * sd * sd)).exp()).collect();
    let mut v: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let len = xs.len() as i64;
    for _ in 0..steps {
        let mut next = vec![0.0; xs.len()];
        for (i, &x) in xs.iter().enumerate() {
            let (mut s, mut w) = (0.0, 0.0);
            for (o, &kw) in kernel.iter().enumerate() {
                let j = i as i64 + o as i64 - reach;
                if (0..len).contains(&j) {
                    s += kw * v[j as usize];
                    w += kw;
                }
            }
            next[i] = g(x).min(k(x) * dt + s / w);
        }
        v = next;
    }
    v[m as usize]
}
