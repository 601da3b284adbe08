use serde::{Deserialize, Serialize};

use crate::model::{ClusterCenter, ClusterId, MergeMap};

/// Guards the percent difference when both values are near zero.
pub const PERCENT_GUARD: f64 = 1e-12;

/// Symmetric percent difference `2|a - b| / (|a| + |b| + guard)`.
#[inline]
pub fn percent_difference(a: f64, b: f64) -> f64 {
    2.0 * (a - b).abs() / (a.abs() + b.abs() + PERCENT_GUARD)
}

/// Whether two optional averages match for merging. A value present on one
/// side only never matches; two absent values do.
pub fn values_match(a: Option<f64>, b: Option<f64>, eps: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => a == b || percent_difference(a, b) < eps,
        _ => false,
    }
}

/// Whether two centers may be merged. Locations are ignored.
pub fn merge_eligible(a: &ClusterCenter, b: &ClusterCenter, eps: f64) -> bool {
    values_match(a.point_value, b.point_value, eps) && values_match(a.field_value, b.field_value, eps)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Keeps the smaller root so each group is rooted at its first member.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Outcome of merging: the id mapping plus one center per merged group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeResult {
    pub merge_eps: f64,
    pub merge_map: MergeMap,
    /// One center per group, keyed by the smallest member id and sorted by id.
    pub centers: Vec<ClusterCenter>,
}

impl MergeResult {
    pub fn feature_count(&self) -> usize {
        self.centers.len()
    }
}

fn weighted_mean(terms: impl Iterator<Item = (f64, u64)>) -> Option<f64> {
    let (sum, n) = terms.fold((0.0, 0u64), |(s, n), (v, w)| (s + v * w as f64, n + w));
    (n > 0).then(|| sum / n as f64)
}

fn combine(id: ClusterId, group: &[&ClusterCenter]) -> ClusterCenter {
    if let [only] = group {
        return ClusterCenter { id, ..**only };
    }
    let loc = |f: fn(&ClusterCenter) -> f64| weighted_mean(group.iter().map(|c| (f(c), c.members()))).unwrap_or(0.0);
    ClusterCenter {
        id,
        x: loc(|c| c.x),
        y: loc(|c| c.y),
        z: loc(|c| c.z),
        t: loc(|c| c.t),
        point_value: weighted_mean(group.iter().filter_map(|c| c.point_value.map(|v| (v, c.n_points)))),
        field_value: weighted_mean(group.iter().filter_map(|c| c.field_value.map(|v| (v, c.n_fields)))),
        n_points: group.iter().map(|c| c.n_points).sum(),
        n_fields: group.iter().map(|c| c.n_fields).sum(),
        dormant: false,
    }
}

/// Transitive closure of pairwise eligibility over the original centers.
///
/// The representative of a group is its smallest id and the merged center is
/// the member-count weighted mean of the group.
pub fn merge_clusters(centers: &[ClusterCenter], eps: f64) -> MergeResult {
    let mut sorted: Vec<&ClusterCenter> = centers.iter().collect();
    sorted.sort_by_key(|c| c.id);
    let n = sorted.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if merge_eligible(sorted[i], sorted[j], eps) {
                uf.union(i, j);
            }
        }
    }

    let mut groups: Vec<Vec<&ClusterCenter>> = vec![Vec::new(); n];
    for i in 0..n {
        let root = uf.find(i);
        groups[root].push(sorted[i]);
    }
    let mut map = MergeMap::default();
    let mut merged = Vec::new();
    for group in groups.iter().filter(|g| !g.is_empty()) {
        let rep = group[0].id;
        for c in group {
            map.0.insert(c.id, rep);
        }
        merged.push(combine(rep, group));
    }
    MergeResult {
        merge_eps: eps,
        merge_map: map,
        centers: merged,
    }
}
