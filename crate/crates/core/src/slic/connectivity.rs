use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};

/// Splits every label into its 4-connected components, then merges
/// components smaller than `min_size` pixels into their largest adjacent
/// region (ties go to the region whose first pixel comes first in raster
/// order). Smallest fragments are merged first. The result is relabeled
/// densely as `0..m` in raster order of first appearance.
pub fn enforce_connectivity(labels: &[usize], height: usize, width: usize, min_size: usize) -> Vec<usize> {
    assert_eq!(labels.len(), height * width, "label map does not match {height}x{width}");
    if labels.is_empty() {
        return Vec::new();
    }
    let comps = Components::find(labels, height, width);
    let n = comps.sizes.len();

    let mut parent: Vec<usize> = (0..n).collect();
    let mut size = comps.sizes.clone();
    let mut first = comps.first_pixel.clone();
    let mut members: Vec<Vec<usize>> = (0..n).map(|c| vec![c]).collect();
    let mut regions = n;

    let mut heap: BinaryHeap<Reverse<(usize, usize, usize)>> = (0..n)
        .filter(|&c| size[c] < min_size)
        .map(|c| Reverse((size[c], first[c], c)))
        .collect();

    while let Some(Reverse((sz, _, root))) = heap.pop() {
        if regions == 1 {
            break;
        }
        if parent[root] != root || size[root] != sz || sz >= min_size {
            continue;
        }
        let neighbours: BTreeSet<usize> = members[root]
            .iter()
            .flat_map(|&c| comps.adjacent[c].iter())
            .map(|&c| find(&mut parent, c))
            .filter(|&r| r != root)
            .collect();
        let Some(target) = neighbours
            .into_iter()
            .max_by_key(|&r| (size[r], Reverse(first[r])))
        else {
            continue;
        };
        parent[root] = target;
        size[target] += size[root];
        first[target] = first[target].min(first[root]);
        let moved = std::mem::take(&mut members[root]);
        members[target].extend(moved);
        regions -= 1;
        if size[target] < min_size {
            heap.push(Reverse((size[target], first[target], target)));
        }
    }

    let mut dense = vec![usize::MAX; n];
    let mut next = 0;
    comps
        .component
        .iter()
        .map(|&c| {
            let r = find(&mut parent, c);
            if dense[r] == usize::MAX {
                dense[r] = next;
                next += 1;
            }
            dense[r]
        })
        .collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

struct Components {
    component: Vec<usize>,
    sizes: Vec<usize>,
    first_pixel: Vec<usize>,
    adjacent: Vec<BTreeSet<usize>>,
}

impl Components {
    fn find(labels: &[usize], h: usize, w: usize) -> Self {
        let mut component = vec![usize::MAX; h * w];
        let mut sizes = Vec::new();
        let mut first_pixel = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..h * w {
            if component[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let label = labels[start];
            component[start] = id;
            queue.push_back(start);
            let mut count = 0;
            while let Some(p) = queue.pop_front() {
                count += 1;
                for q in neighbours4(p, h, w) {
                    if component[q] == usize::MAX && labels[q] == label {
                        component[q] = id;
                        queue.push_back(q);
                    }
                }
            }
            sizes.push(count);
            first_pixel.push(start);
        }
        let mut adjacent = vec![BTreeSet::new(); sizes.len()];
        for p in 0..h * w {
            for q in neighbours4(p, h, w) {
                let (a, b) = (component[p], component[q]);
                if a != b {
                    adjacent[a].insert(b);
                }
            }
        }
        Self {
            component,
            sizes,
            first_pixel,
            adjacent,
        }
    }
}

pub(crate) fn neighbours4(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (p / w, p % w);
    [
        (y > 0).then(|| p - w),
        (x > 0).then(|| p - 1),
        (x + 1 < w).then(|| p + 1),
        (y + 1 < h).then(|| p + w),
    ]
    .into_iter()
    .flatten()
}

/// True when every label's pixel set forms one 4-connected region.
pub fn is_label_connected(labels: &[usize], height: usize, width: usize) -> bool {
    let comps = Components::find(labels, height, width);
    let distinct: BTreeSet<usize> = labels.iter().copied().collect();
    comps.sizes.len() == distinct.len()
}
