//! Small DAG helpers shared by templates, plans and the executor.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

/// Topological order with lexicographic tie-break. On a cycle, returns the
/// node ids of one cycle (first node repeated at the end).
pub fn kahn_order(nodes: &[String], edges: &[(String, String)]) -> Result<Vec<String>, Vec<String>> {
    let mut indeg: BTreeMap<&str, usize> = nodes.iter().map(|n| (n.as_str(), 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in edges {
        succ.entry(a.as_str()).or_default().push(b.as_str());
        *indeg.entry(b.as_str()).or_default() += 1;
        indeg.entry(a.as_str()).or_default();
    }
    let mut heap: BinaryHeap<Reverse<&str>> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| Reverse(*n)).collect();
    let mut order = Vec::with_capacity(indeg.len());
    while let Some(Reverse(n)) = heap.pop() {
        order.push(n.to_string());
        for s in succ.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indeg.get_mut(s).unwrap();
            *d -= 1;
            if *d == 0 {
                heap.push(Reverse(*s));
            }
        }
    }
    if order.len() == indeg.len() {
        return Ok(order);
    }
    let done: BTreeSet<&str> = order.iter().map(String::as_str).collect();
    Err(find_cycle(&indeg.keys().copied().filter(|n| !done.contains(n)).collect::<Vec<_>>(), edges))
}

// Every remaining node has a remaining predecessor, so walking backwards
// must revisit a node.
fn find_cycle(remaining: &[&str], edges: &[(String, String)]) -> Vec<String> {
    let rem: BTreeSet<&str> = remaining.iter().copied().collect();
    let mut pred: BTreeMap<&str, &str> = BTreeMap::new();
    for (a, b) in edges {
        if rem.contains(a.as_str()) && rem.contains(b.as_str()) {
            let e = pred.entry(b.as_str()).or_insert(a.as_str());
            if a.as_str() < *e {
                *e = a.as_str();
            }
        }
    }
    let mut path = vec![remaining[0]];
    let mut seen: BTreeMap<&str, usize> = BTreeMap::from([(remaining[0], 0)]);
    loop {
        let cur = *path.last().unwrap();
        let p = pred[cur];
        if let Some(&i) = seen.get(p) {
            let mut cycle: Vec<String> = path[i..].iter().rev().map(|s| s.to_string()).collect();
            cycle.push(cycle[0].clone());
            return cycle;
        }
        seen.insert(p, path.len());
        path.push(p);
    }
}

/// Nodes reachable from `start` (inclusive) following edges forward.
pub fn descendants(start: &str, edges: &[(String, String)]) -> BTreeSet<String> {
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in edges {
        succ.entry(a.as_str()).or_default().push(b.as_str());
    }
    let mut out = BTreeSet::new();
    let mut stack = vec![start];
    while let Some(n) = stack.pop() {
        if out.insert(n.to_string()) {
            stack.extend(succ.get(n).map(Vec::as_slice).unwrap_or(&[]));
        }
    }
    out
}

pub fn has_path(from: &str, to: &str, edges: &[(String, String)]) -> bool {
    descendants(from, edges).contains(to)
}
