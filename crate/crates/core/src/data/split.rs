use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};

/// Train/validation/test proportions; each positive, summing to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Fractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self, DataError> {
        let f = Fractions { train, valid, test };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<(), DataError> {
        let parts = self.as_array();
        if parts.iter().any(|p| !(*p > 0.0 && p.is_finite())) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Invalid(format!("split fractions must be positive and sum to 1, got {parts:?}")));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }
}

const EPS: f64 = 1e-9;

/// Largest-remainder rounding of `total * weights`.
fn apportion(total: usize, weights: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = (e + EPS).floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut left = total.saturating_sub(counts.iter().sum());
    for &j in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[j] += 1;
        left -= 1;
    }
    counts
}

/// Maximum flow by breadth-first augmenting paths on a dense capacity matrix.
fn max_flow(cap: &mut [Vec<i64>], source: usize, sink: usize) -> i64 {
    let n = cap.len();
    let mut total = 0;
    loop {
        let mut parent = vec![usize::MAX; n];
        parent[source] = source;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if parent[v] == usize::MAX && cap[u][v] > 0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            return total;
        }
        let mut push = i64::MAX;
        let mut v = sink;
        while v != source {
            push = push.min(cap[parent[v]][v]);
            v = parent[v];
        }
        let mut v = sink;
        while v != source {
            let u = parent[v];
            cap[u][v] -= push;
            cap[v][u] += push;
            v = u;
        }
        total += push;
    }
}

/// Per-class split sizes: every entry is the floor or ceiling of
/// `class_count * fraction`, and the column totals equal the largest-remainder
/// rounding of `n * fraction`.
fn allocate(class_counts: &[usize], fractions: &[f64; 3]) -> Result<Vec<[usize; 3]>, DataError> {
    let n: usize = class_counts.iter().sum();
    let targets = apportion(n, fractions);
    let k = class_counts.len();
    let mut alloc = Vec::with_capacity(k);
    let mut residual = Vec::with_capacity(k);
    let mut rounds_up = Vec::with_capacity(k);
    for &nc in class_counts {
        let exact: Vec<f64> = fractions.iter().map(|f| nc as f64 * f).collect();
        let floors: [usize; 3] = std::array::from_fn(|j| (exact[j] + EPS).floor() as usize);
        residual.push(nc - floors.iter().sum::<usize>().min(nc));
        rounds_up.push(std::array::from_fn::<bool, 3, _>(|j| exact[j] - floors[j] as f64 > EPS));
        alloc.push(floors);
    }
    // source = 0, classes = 1..=k, splits = k+1..=k+3, sink = k+4
    let (source, sink) = (0, k + 4);
    let mut cap = vec![vec![0i64; k + 5]; k + 5];
    for c in 0..k {
        cap[source][1 + c] = residual[c] as i64;
        for j in 0..3 {
            if rounds_up[c][j] {
                cap[1 + c][k + 1 + j] = 1;
            }
        }
    }
    for j in 0..3 {
        let placed: usize = alloc.iter().map(|a| a[j]).sum();
        cap[k + 1 + j][sink] = targets[j] as i64 - placed as i64;
    }
    let needed: i64 = residual.iter().map(|&r| r as i64).sum();
    if max_flow(&mut cap, source, sink) != needed {
        return Err(DataError::Invalid("could not round split sizes consistently".into()));
    }
    for (c, a) in alloc.iter_mut().enumerate() {
        for (j, slot) in a.iter_mut().enumerate() {
            // flow on (class, split) shows up as reverse capacity
            if rounds_up[c][j] && cap[1 + c][k + 1 + j] == 0 {
                *slot += 1;
            }
        }
    }
    Ok(alloc)
}

/// Stratified train/validation/test partition.
///
/// Each class is shuffled with `seed` and dealt into the three parts; totals
/// follow `fractions` exactly up to rounding, and each class's share in each
/// part is within one example of proportional.
pub fn split(base: &Dataset, fractions: Fractions, seed: u64) -> Result<(Dataset, Dataset, Dataset), DataError> {
    fractions.check()?;
    let counts = base.class_counts();
    let present: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
    let alloc = allocate(&present.iter().map(|&c| counts[c]).collect::<Vec<_>>(), &fractions.as_array())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (&class, sizes) in present.iter().zip(&alloc) {
        if sizes.contains(&0) {
            return Err(DataError::Invalid(format!(
                "class {class} with {} examples cannot give every split at least one example",
                counts[class]
            )));
        }
        let mut members: Vec<usize> = (0..base.len()).filter(|&i| base.labels()[i] == class).collect();
        members.shuffle(&mut rng);
        let mut start = 0;
        for (part, &size) in parts.iter_mut().zip(sizes) {
            part.extend_from_slice(&members[start..start + size]);
            start += size;
        }
    }
    for part in parts.iter_mut() {
        part.shuffle(&mut rng);
    }
    let [a, b, c] = parts;
    Ok((base.subset(&a), base.subset(&b), base.subset(&c)))
}
