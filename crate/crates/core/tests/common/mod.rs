//! Shared helpers for the acceptance suite: rank statistics and an
//! independently derived sparsity oracle for simultaneous systems.

/// Average ranks (1-based) with ties sharing their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j hold tied values; each gets the mean rank.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    cov / (vx * vy).sqrt()
}

/// Moral-graph adjacency of a directed parent pattern: i ~ j iff i = j,
/// one is a parent of the other, or they share a child. This is the exact
/// support of the precision matrix (I−Γ)′Λ(I−Γ) for generic coefficients.
pub fn moral_adjacency(parents: &[Vec<usize>]) -> Vec<Vec<bool>> {
    let q = parents.len();
    let mut adj = vec![vec![false; q]; q];
    for (j, pa) in parents.iter().enumerate() {
        adj[j][j] = true;
        for &p in pa {
            adj[j][p] = true;
            adj[p][j] = true;
            // Parents of a common child are married.
            for &other in pa {
                adj[p][other] = true;
                adj[other][p] = true;
            }
        }
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_spearman_perfect_and_inverse() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let up = [10.0, 20.0, 30.0, 40.0];
        let down = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&x, &up) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &down) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn test_moral_adjacency_marries_parents() {
        // 0 ← 1, 0 ← 2: edges (0,1), (0,2) plus the married pair (1,2).
        let adj = moral_adjacency(&[vec![1, 2], vec![], vec![]]);
        assert!(adj[1][2] && adj[2][1]);
        assert!(adj[0][1] && adj[0][2]);
        assert!(adj[0][0] && adj[1][1] && adj[2][2]);
    }
}
