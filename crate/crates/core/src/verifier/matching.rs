use std::collections::VecDeque;

/// A maximum matching: `left[i]` is the right vertex matched to left vertex `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub size: usize,
    pub left: Vec<Option<usize>>,
    pub right: Vec<Option<usize>>,
}

const INF: usize = usize::MAX;

/// Maximum bipartite matching by Hopcroft-Karp. `adj[i]` lists the right
/// vertices (each `< n_right`) adjacent to left vertex `i`.
pub fn hopcroft_karp(n_left: usize, n_right: usize, adj: &[Vec<usize>]) -> Matching {
    assert_eq!(adj.len(), n_left);
    let mut left = vec![None; n_left];
    let mut right: Vec<Option<usize>> = vec![None; n_right];
    let mut dist = vec![INF; n_left];
    let mut size = 0;
    loop {
        // BFS layers from free left vertices.
        let mut queue = VecDeque::new();
        for u in 0..n_left {
            if left[u].is_none() {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = INF;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                match right[v] {
                    None => found = true,
                    Some(w) if dist[w] == INF => {
                        dist[w] = dist[u] + 1;
                        queue.push_back(w);
                    }
                    Some(_) => {}
                }
            }
        }
        if !found {
            break;
        }
        for u in 0..n_left {
            if left[u].is_none() && augment(u, adj, &mut left, &mut right, &mut dist) {
                size += 1;
            }
        }
    }
    Matching { size, left, right }
}

fn augment(
    u: usize,
    adj: &[Vec<usize>],
    left: &mut [Option<usize>],
    right: &mut [Option<usize>],
    dist: &mut [usize],
) -> bool {
    for &v in &adj[u] {
        let ok = match right[v] {
            None => true,
            Some(w) => dist[w] == dist[u].wrapping_add(1) && augment(w, adj, left, right, dist),
        };
        if ok {
            left[u] = Some(v);
            right[v] = Some(u);
            return true;
        }
    }
    dist[u] = INF;
    false
}
