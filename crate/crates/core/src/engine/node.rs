use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use super::options::Traversal;
use super::pseudocost::Direction;
use crate::nlp::NlpResult;

/// How a node was created from its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOrigin {
    pub var: usize,
    pub direction: Direction,
    /// Distance moved by the branching: `f` down, `1 - f` up.
    pub fraction: f64,
    pub parent_bound: f64,
    /// Whether solving this node should feed the pseudo-cost table. Children
    /// produced by strong branching were already recorded.
    pub record: bool,
}

/// A tree-search node.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: u64,
    pub parent: Option<u64>,
    pub depth: u32,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Cached relaxation, present when strong branching already solved it.
    pub relaxation: Option<NlpResult>,
    /// Relaxation objective once solved; the parent's bound before that.
    /// `-inf` when nothing is known.
    pub bound: f64,
    pub branched_var: Option<usize>,
    pub origin: Option<BranchOrigin>,
    /// Start point for the relaxation (clipped into the node box).
    pub warm_start: Vec<f64>,
}

impl Node {
    pub fn root(lower: Vec<f64>, upper: Vec<f64>) -> Node {
        let warm_start = lower.iter().zip(&upper).map(|(l, u)| midpoint(*l, *u)).collect();
        Node {
            id: 0,
            parent: None,
            depth: 0,
            lower,
            upper,
            relaxation: None,
            bound: f64::NEG_INFINITY,
            branched_var: None,
            origin: None,
            warm_start,
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    pub fn is_empty_box(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l > u)
    }
}

/// Midpoint of `[lower, upper]` with infinite ends clipped to ±1e3.
pub(crate) fn midpoint(lower: f64, upper: f64) -> f64 {
    let l = lower.max(-1e3);
    let u = upper.min(1e3);
    if l <= u {
        0.5 * (l + u)
    } else if lower.is_finite() {
        lower
    } else {
        upper
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BranchError {
    #[error("value {value} of variable {var} is integral within tolerance")]
    IntegralValue { var: usize, value: f64 },
}

/// Splits `node` on variable `var` at fractional `value`: the left child
/// gets `upper = floor(value)`, the right child `lower = floor(value) + 1`.
/// Children carry id 0; the caller numbers them and drops empty boxes.
pub fn branch(node: &Node, var: usize, value: f64, tolerance: f64) -> Result<(Node, Node), BranchError> {
    if (value - value.round()).abs() <= tolerance {
        return Err(BranchError::IntegralValue { var, value });
    }
    let floor = value.floor();
    let f = value - floor;
    let start = node
        .relaxation
        .as_ref()
        .map(|r| r.point.clone())
        .unwrap_or_else(|| node.warm_start.clone());
    let child = |direction: Direction| {
        let mut lower = node.lower.clone();
        let mut upper = node.upper.clone();
        let fraction = match direction {
            Direction::Down => {
                upper[var] = floor;
                f
            }
            Direction::Up => {
                lower[var] = floor + 1.0;
                1.0 - f
            }
        };
        Node {
            id: 0,
            parent: Some(node.id),
            depth: node.depth + 1,
            lower,
            upper,
            relaxation: None,
            bound: node.bound,
            branched_var: Some(var),
            origin: Some(BranchOrigin {
                var,
                direction,
                fraction,
                parent_bound: node.bound,
                record: true,
            }),
            warm_start: start.clone(),
        }
    };
    Ok((child(Direction::Down), child(Direction::Up)))
}

struct BestEntry(Node);

impl PartialEq for BestEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for BestEntry {}

impl PartialOrd for BestEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BestEntry {
    // Max-heap: the smallest bound, then the smallest id, compares greatest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .bound
            .total_cmp(&self.0.bound)
            .then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// Open nodes ordered by the traversal strategy.
pub struct OpenSet {
    traversal: Traversal,
    heap: BinaryHeap<BestEntry>,
    stack: Vec<Node>,
}

impl OpenSet {
    pub fn new(traversal: Traversal) -> Self {
        OpenSet {
            traversal,
            heap: BinaryHeap::new(),
            stack: Vec::new(),
        }
    }

    pub fn traversal(&self) -> Traversal {
        self.traversal
    }

    pub fn push(&mut self, node: Node) {
        match self.traversal {
            Traversal::BestFirst => self.heap.push(BestEntry(node)),
            Traversal::DepthFirst => self.stack.push(node),
        }
    }

    /// Pushes the children of one branching. Depth-first pushes right then
    /// left so the floor child is explored first.
    pub fn push_children(&mut self, children: Vec<Node>) {
        for child in children.into_iter().rev() {
            self.push(child);
        }
    }

    /// Best-first: minimum bound, ties to the smaller id. Depth-first: the
    /// most recently inserted node.
    pub fn next_node(&mut self) -> Option<Node> {
        match self.traversal {
            Traversal::BestFirst => self.heap.pop().map(|e| e.0),
            Traversal::DepthFirst => self.stack.pop(),
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len() + self.stack.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Smallest bound over open nodes, `+inf` when empty.
    pub fn min_bound(&self) -> f64 {
        match self.traversal {
            Traversal::BestFirst => self.heap.peek().map_or(f64::INFINITY, |e| e.0.bound),
            Traversal::DepthFirst => self.stack.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(id: u64, bound: f64) -> Node {
        let mut n = Node::root(vec![0.0], vec![1.0]);
        n.id = id;
        n.bound = bound;
        n
    }

    #[test]
    fn floor_split() {
        let node = Node::root(vec![0.0], vec![10.0]);
        let (l, r) = branch(&node, 0, 3.4, 1e-6).unwrap();
        assert_eq!((l.lower[0], l.upper[0]), (0.0, 3.0));
        assert_eq!((r.lower[0], r.upper[0]), (4.0, 10.0));
        let o = l.origin.unwrap();
        assert_eq!(o.direction, Direction::Down);
        assert!((o.fraction - 0.4).abs() < 1e-12);
        assert!((r.origin.unwrap().fraction - 0.6).abs() < 1e-12);
    }

    #[test]
    fn unit_box_split_fixes_both_sides() {
        let node = Node::root(vec![2.0, -1.0], vec![3.0, 1.0]);
        let (l, r) = branch(&node, 0, 2.5, 1e-6).unwrap();
        assert_eq!((l.lower[0], l.upper[0]), (2.0, 2.0));
        assert_eq!((r.lower[0], r.upper[0]), (3.0, 3.0));
        assert_eq!((l.lower[1], l.upper[1]), (-1.0, 1.0));
        assert_eq!(r.depth, 1);
    }

    #[test]
    fn refuses_integral_value() {
        let node = Node::root(vec![0.0], vec![10.0]);
        assert!(branch(&node, 0, 2.9999999, 1e-6).is_err());
    }

    #[test]
    fn best_first_order() {
        let mut open = OpenSet::new(Traversal::BestFirst);
        open.push(leaf(1, 5.0));
        open.push(leaf(2, 3.0));
        assert_eq!(open.min_bound(), 3.0);
        assert_eq!(open.next_node().unwrap().id, 2);

        let mut open = OpenSet::new(Traversal::BestFirst);
        open.push(leaf(2, 3.0));
        open.push(leaf(1, 3.0));
        assert_eq!(open.next_node().unwrap().id, 1);
    }

    #[test]
    fn depth_first_is_a_stack() {
        let mut open = OpenSet::new(Traversal::DepthFirst);
        for id in 1..=3 {
            open.push(leaf(id, 0.0));
        }
        assert_eq!(open.next_node().unwrap().id, 3);
        let mut open = OpenSet::new(Traversal::DepthFirst);
        open.push_children(vec![leaf(10, 0.0), leaf(11, 0.0)]);
        assert_eq!(open.next_node().unwrap().id, 10);
    }

    #[test]
    fn midpoints() {
        assert_eq!(midpoint(0.0, 10.0), 5.0);
        assert_eq!(midpoint(f64::NEG_INFINITY, f64::INFINITY), 0.0);
        assert_eq!(midpoint(0.0, f64::INFINITY), 500.0);
    }
}
