//! Axis-aligned regression tree grown by greedy squared-error reduction.

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// Flat node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn constant(value: f64) -> Self {
        RegressionTree {
            nodes: vec![Node::Leaf { value }],
        }
    }

    /// Builds a tree from a node list, checking that every child index is in
    /// range and refers to a later node.
    pub fn from_nodes(nodes: Vec<Node>) -> Option<Self> {
        if nodes.is_empty() {
            return None;
        }
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = *n {
                if left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                    return None;
                }
            }
        }
        Some(RegressionTree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns a leaf"),
        }
    }

    pub fn set_leaf_value(&mut self, leaf: usize, value: f64) {
        if let Node::Leaf { value: v } = &mut self.nodes[leaf] {
            *v = value;
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Fits `targets` on `rows` down to `max_depth`, leaves holding the mean
    /// target. Among equally good splits the lowest feature index, then the
    /// lowest threshold, wins.
    pub fn fit(rows: &[Vec<f64>], targets: &[f64], max_depth: usize) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        let idx: Vec<usize> = (0..rows.len()).collect();
        tree.grow(rows, targets, idx, max_depth);
        tree
    }

    fn grow(&mut self, rows: &[Vec<f64>], targets: &[f64], idx: Vec<usize>, depth_left: usize) -> usize {
        let me = self.nodes.len();
        let mean = idx.iter().map(|&i| targets[i]).sum::<f64>() / idx.len().max(1) as f64;
        self.nodes.push(Node::Leaf { value: mean });
        if depth_left == 0 || idx.len() < 2 {
            return me;
        }
        let Some((feature, threshold)) = best_split(rows, targets, &idx) else {
            return me;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| rows[i][feature] <= threshold);
        let left = self.grow(rows, targets, l, depth_left - 1);
        let right = self.grow(rows, targets, r, depth_left - 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

fn best_split(rows: &[Vec<f64>], targets: &[f64], idx: &[usize]) -> Option<(usize, f64)> {
    let n = idx.len() as f64;
    let total: f64 = idx.iter().map(|&i| targets[i]).sum();
    let sum_sq: f64 = idx.iter().map(|&i| targets[i] * targets[i]).sum();
    let sse = sum_sq - total * total / n;
    // gains below this are rounding noise
    let min_gain = 1e-12 * sum_sq;
    if !(sse > min_gain) {
        return None;
    }

    let d = rows[idx[0]].len();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    for f in 0..d {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for k in 0..order.len() - 1 {
            left_sum += targets[order[k]];
            let (a, b) = (rows[order[k]][f], rows[order[k + 1]][f]);
            if a == b {
                continue;
            }
            let nl = (k + 1) as f64;
            let nr = n - nl;
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - total * total / n;
            // gains equal up to rounding count as ties and keep the earlier split
            if gain > min_gain && best.is_none_or(|(g, _, _)| gain > g * (1.0 + 1e-12)) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some((gain, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let t = RegressionTree::fit(&col(&[1.0, 2.0, 3.0]), &[5.0, 5.0, 5.0], 3);
        assert_eq!(t.nodes(), &[Node::Leaf { value: 5.0 }]);
    }

    #[test]
    fn stump_finds_step() {
        let t = RegressionTree::fit(&col(&[1.0, 2.0, 3.0, 4.0]), &[0.0, 0.0, 10.0, 10.0], 1);
        assert_eq!(
            t.nodes()[0],
            Node::Split {
                feature: 0,
                threshold: 2.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(t.predict(&[0.0]), 0.0);
        assert_eq!(t.predict(&[3.7]), 10.0);
    }

    #[test]
    fn deep_tree_interpolates_distinct_points() {
        let y = [3.0, -1.0, 4.0, 1.5];
        let t = RegressionTree::fit(&col(&[0.1, 0.7, 0.2, 0.9]), &y, 2);
        for (x, y) in [0.1, 0.7, 0.2, 0.9].iter().zip(y) {
            assert_eq!(t.predict(&[*x]), y);
        }
        assert!(t.depth() <= 2);
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        // both features separate the targets identically
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let t = RegressionTree::fit(&rows, &[0.0, 1.0], 1);
        assert!(matches!(t.nodes()[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn tie_prefers_lowest_threshold() {
        // splitting at 0.5 or 2.5 gives the same reduction
        let t = RegressionTree::fit(&col(&[0.0, 1.0, 2.0, 3.0]), &[0.0, 1.0, 1.0, 2.0], 1);
        assert!(matches!(t.nodes()[0], Node::Split { threshold, .. } if threshold == 0.5));
    }

    #[test]
    fn from_nodes_rejects_bad_children() {
        assert!(RegressionTree::from_nodes(vec![]).is_none());
        let bad = vec![Node::Split { feature: 0, threshold: 0.0, left: 0, right: 5 }];
        assert!(RegressionTree::from_nodes(bad).is_none());
    }
}
