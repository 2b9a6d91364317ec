//! Reverse Cuthill-McKee ordering for bandwidth reduction.

use std::collections::VecDeque;

/// Returns `perm` with `perm[node]` = position in the new ordering.
/// `adj` must be symmetric and free of self loops.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node exists");
        let start = pseudo_peripheral(adj, &degree, seed);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_unstable_by_key(|&w| (degree[w], w));
            next.dedup();
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    let mut perm = vec![0; n];
    for (pos, &node) in order.iter().rev().enumerate() {
        perm[node] = pos;
    }
    perm
}

/// BFS levels from `start` within its component: (last level, depth).
fn last_level(adj: &[Vec<usize>], start: usize) -> (Vec<usize>, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut depth = 0;
    let mut last = vec![start];
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                if dist[w] > depth {
                    depth = dist[w];
                    last.clear();
                }
                if dist[w] == depth {
                    last.push(w);
                }
                queue.push_back(w);
            }
        }
    }
    (last, depth)
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut node = seed;
    let (mut level, mut depth) = last_level(adj, node);
    for _ in 0..8 {
        let cand = *level
            .iter()
            .min_by_key(|&&w| (degree[w], w))
            .expect("level is non-empty");
        let (lv, d) = last_level(adj, cand);
        if d <= depth {
            break;
        }
        node = cand;
        level = lv;
        depth = d;
    }
    node
}

/// Half bandwidth of the symmetric pattern under `perm`.
pub fn bandwidth(adj: &[Vec<usize>], perm: &[usize]) -> usize {
    adj.iter()
        .enumerate()
        .flat_map(|(i, nb)| nb.iter().map(move |&j| perm[i].abs_diff(perm[j])))
        .max()
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    #[test]
    fn shuffled_path_recovers_unit_bandwidth() {
        let labels = [7, 2, 9, 0, 5, 3, 8, 1, 6, 4];
        let edges: Vec<_> = labels.windows(2).map(|w| (w[0], w[1])).collect();
        let adj = symmetric(10, &edges);
        let perm = reverse_cuthill_mckee(&adj);
        assert_eq!(bandwidth(&adj, &perm), 1);
        let mut seen = perm.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn disconnected_components_are_all_ordered() {
        let adj = symmetric(6, &[(0, 3), (1, 4)]);
        let perm = reverse_cuthill_mckee(&adj);
        let mut seen = perm.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
        assert_eq!(bandwidth(&adj, &perm), 1);
    }

    #[test]
    fn grid_bandwidth_is_width() {
        // 4 x 20 grid numbered along the long side has bandwidth 20
        let (w, h) = (4, 20);
        let id = |r: usize, c: usize| c * w + r;
        let mut edges = Vec::new();
        for c in 0..h {
            for r in 0..w {
                if r + 1 < w {
                    edges.push((id(r, c), id(r + 1, c)));
                }
                if c + 1 < h {
                    edges.push((id(r, c), id(r, c + 1)));
                }
            }
        }
        let adj = symmetric(w * h, &edges);
        let perm = reverse_cuthill_mckee(&adj);
        assert!(bandwidth(&adj, &perm) <= w + 1);
    }
}
