//! Random regular production networks.
//!
//! Both generators start from a circulant graph, which is exactly regular, and
//! randomise it with degree-preserving edge swaps. Every accepted swap keeps the
//! graph simple, so no restart logic is needed.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const SWAPS_PER_EDGE: usize = 20;

/// Directed d-regular network: every firm has `d` suppliers and `d` clients.
///
/// Returns the `n x (n+1)` links matrix with `weight` on every firm-firm link
/// and on the labour column.
pub fn regular_links(n: usize, d: usize, seed: u64, weight: f64) -> Result<DMatrix<f64>> {
    check_request(n, d, weight)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // edges[e] = (buyer, supplier)
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * d);
    let mut present = vec![false; n * n];
    for i in 0..n {
        for k in 1..=d {
            let j = (i + k) % n;
            edges.push((i, j));
            present[i * n + j] = true;
        }
    }
    let m = edges.len();
    if m >= 2 && d < n - 1 {
        for _ in 0..SWAPS_PER_EDGE * m {
            let e1 = rng.gen_range(0..m);
            let e2 = rng.gen_range(0..m);
            let (a, b) = edges[e1];
            let (c, dd) = edges[e2];
            if a == c || b == dd || a == dd || c == b {
                continue;
            }
            if present[a * n + dd] || present[c * n + b] {
                continue;
            }
            present[a * n + b] = false;
            present[c * n + dd] = false;
            present[a * n + dd] = true;
            present[c * n + b] = true;
            edges[e1] = (a, dd);
            edges[e2] = (c, b);
        }
    }
    Ok(to_links(n, &edges, weight, false))
}

/// Undirected d-regular network (symmetric firm block). Requires `n * d` even.
pub fn undirected_regular_links(n: usize, d: usize, seed: u64, weight: f64) -> Result<DMatrix<f64>> {
    check_request(n, d, weight)?;
    if (n * d) % 2 == 1 {
        return Err(Error::InvalidNetwork(format!("no {d}-regular undirected graph on {n} nodes (n*d odd)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * d / 2);
    let mut present = vec![false; n * n];
    let add = |edges: &mut Vec<(usize, usize)>, present: &mut Vec<bool>, a: usize, b: usize| {
        edges.push((a, b));
        present[a * n + b] = true;
        present[b * n + a] = true;
    };
    for i in 0..n {
        for k in 1..=d / 2 {
            add(&mut edges, &mut present, i, (i + k) % n);
        }
    }
    if d % 2 == 1 {
        // n is even here; connect opposite nodes.
        for i in 0..n / 2 {
            add(&mut edges, &mut present, i, i + n / 2);
        }
    }
    let m = edges.len();
    if m >= 2 && d < n - 1 {
        for _ in 0..SWAPS_PER_EDGE * m {
            let e1 = rng.gen_range(0..m);
            let e2 = rng.gen_range(0..m);
            let (a, b) = edges[e1];
            let (mut c, mut dd) = edges[e2];
            if rng.gen::<bool>() {
                std::mem::swap(&mut c, &mut dd);
            }
            // {a,b},{c,d} -> {a,d},{c,b}
            if a == dd || c == b || a == c || b == dd {
                continue;
            }
            if present[a * n + dd] || present[c * n + b] {
                continue;
            }
            for (x, y, v) in [(a, b, false), (c, dd, false), (a, dd, true), (c, b, true)] {
                present[x * n + y] = v;
                present[y * n + x] = v;
            }
            edges[e1] = (a, dd);
            edges[e2] = (c, b);
        }
    }
    Ok(to_links(n, &edges, weight, true))
}

fn check_request(n: usize, d: usize, weight: f64) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidNetwork("n and d must be positive".into()));
    }
    if d >= n {
        return Err(Error::InvalidNetwork(format!("degree d={d} must be smaller than n={n}")));
    }
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::InvalidNetwork(format!("link weight must be positive, got {weight}")));
    }
    Ok(())
}

fn to_links(n: usize, edges: &[(usize, usize)], weight: f64, symmetric: bool) -> DMatrix<f64> {
    let mut links = DMatrix::zeros(n, n + 1);
    for i in 0..n {
        links[(i, 0)] = weight;
    }
    for &(a, b) in edges {
        links[(a, b + 1)] = weight;
        if symmetric {
            links[(b, a + 1)] = weight;
        }
    }
    links
}

/// In- and out-degree of every firm in the firm block.
pub fn degrees(links: &DMatrix<f64>) -> (Vec<usize>, Vec<usize>) {
    let n = links.nrows();
    let mut suppliers = vec![0; n];
    let mut clients = vec![0; n];
    for i in 0..n {
        for j in 0..n {
            if links[(i, j + 1)] > 0.0 {
                suppliers[i] += 1;
                clients[j] += 1;
            }
        }
    }
    (suppliers, clients)
}
