//! Class-partition trees and the canonical two-stage structures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HeadSpec;

/// Ordered, disjoint, nonempty groups of class names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassPartition {
    groups: Vec<Vec<String>>,
}

impl ClassPartition {
    pub fn new(groups: Vec<Vec<String>>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::Config(format!(
                "a partition needs at least 2 groups, got {}",
                groups.len()
            )));
        }
        let mut seen: Vec<&String> = Vec::new();
        for group in &groups {
            if group.is_empty() {
                return Err(Error::Config("partition groups must be nonempty".into()));
            }
            for class in group {
                if seen.contains(&class) {
                    return Err(Error::Config(format!(
                        "class {class:?} appears in more than one group"
                    )));
                }
                seen.push(class);
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<String>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Index of the group containing `class`.
    pub fn group_of(&self, class: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.iter().any(|c| c == class))
    }

    /// All classes, in group order.
    pub fn classes(&self) -> impl Iterator<Item = &String> {
        self.groups.iter().flatten()
    }
}

/// Stable preorder index of an internal node.
pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub id: NodeId,
    /// Depth below the root; the root is 0.
    pub depth: usize,
    pub partition: ClassPartition,
    /// Test-time input size `(height, width)`; `None` keeps the classifier's
    /// training size.
    pub input_size: Option<(usize, usize)>,
    /// One entry per group: a subtree, or `None` for a single-class leaf.
    pub children: Vec<Option<TreeNode>>,
}

impl TreeNode {
    pub fn arity(&self) -> usize {
        self.partition.len()
    }

    pub fn head_spec(&self, hidden_units: usize) -> Result<HeadSpec> {
        HeadSpec::for_arity(hidden_units, self.arity())
    }

    pub fn classes(&self) -> impl Iterator<Item = &String> {
        self.partition.classes()
    }

    pub fn contains(&self, class: &str) -> bool {
        self.partition.group_of(class).is_some()
    }
}

/// A partition tree over an ordered class list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeSpec {
    classes: Vec<String>,
    root: TreeNode,
}

/// Group structure used to build trees before ids are assigned.
#[derive(Clone, Debug)]
pub enum Shape {
    Leaf(String),
    Node(Vec<Shape>),
}

impl Shape {
    fn classes(&self) -> Vec<String> {
        match self {
            Shape::Leaf(c) => vec![c.clone()],
            Shape::Node(children) => children.iter().flat_map(Shape::classes).collect(),
        }
    }
}

impl TreeSpec {
    /// Builds a tree from a nested group structure, numbering internal nodes
    /// in preorder.
    pub fn from_shape(classes: Vec<String>, shape: &Shape) -> Result<Self> {
        let Shape::Node(_) = shape else {
            return Err(Error::Config("the root must be an internal node".into()));
        };
        let mut next = 0;
        let root = build_node(shape, 0, &mut next)?;
        let spec = Self { classes, root };
        spec.validate()?;
        Ok(spec)
    }

    pub(crate) fn from_root(classes: Vec<String>, root: TreeNode) -> Result<Self> {
        let spec = Self { classes, root };
        spec.validate()?;
        Ok(spec)
    }

    /// Every class in exactly one leaf, no stray labels, preorder ids, and a
    /// child exactly for the multi-class groups.
    pub fn validate(&self) -> Result<()> {
        let mut leaves = Vec::new();
        let mut next = 0;
        check_node(&self.root, 0, &mut next, &mut leaves)?;
        for class in &self.classes {
            let hits = leaves.iter().filter(|l| *l == class).count();
            if hits != 1 {
                return Err(Error::Config(format!(
                    "class {class:?} appears in {hits} leaves"
                )));
            }
        }
        if leaves.len() != self.classes.len() {
            return Err(Error::Config(format!(
                "tree has {} leaves for {} classes",
                leaves.len(),
                self.classes.len()
            )));
        }
        Ok(())
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    /// Internal nodes in preorder; position equals [`TreeNode::id`].
    pub fn nodes(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        collect(&self.root, &mut out);
        out
    }

    pub fn node_count(&self) -> usize {
        self.nodes().len()
    }

    pub fn node(&self, id: NodeId) -> Option<&TreeNode> {
        self.nodes().into_iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut TreeNode> {
        find_mut(&mut self.root, id)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes()
            .iter()
            .map(|n| n.children.iter().filter(|c| c.is_none()).count())
            .sum()
    }

    /// The `(node, group)` decisions leading from the root to `class`.
    pub fn path_to(&self, class: &str) -> Option<Vec<(NodeId, usize)>> {
        let mut path = Vec::new();
        let mut node = &self.root;
        loop {
            let group = node.partition.group_of(class)?;
            path.push((node.id, group));
            match &node.children[group] {
                Some(child) => node = child,
                None => return Some(path),
            }
        }
    }
}

fn build_node(shape: &Shape, depth: usize, next: &mut NodeId) -> Result<TreeNode> {
    let Shape::Node(children) = shape else {
        unreachable!("callers only pass internal shapes");
    };
    let id = *next;
    *next += 1;
    let partition = ClassPartition::new(children.iter().map(Shape::classes).collect())?;
    let mut built = Vec::with_capacity(children.len());
    for child in children {
        built.push(match child {
            Shape::Leaf(_) => None,
            Shape::Node(_) => Some(build_node(child, depth + 1, next)?),
        });
    }
    Ok(TreeNode {
        id,
        depth,
        partition,
        input_size: None,
        children: built,
    })
}

fn check_node(
    node: &TreeNode,
    depth: usize,
    next: &mut NodeId,
    leaves: &mut Vec<String>,
) -> Result<()> {
    if node.id != *next || node.depth != depth {
        return Err(Error::Config(format!(
            "node ids must be preorder indices; found {} at position {}",
            node.id, next
        )));
    }
    *next += 1;
    if node.children.len() != node.partition.len() {
        return Err(Error::Config(format!(
            "node {} has {} groups but {} children",
            node.id,
            node.partition.len(),
            node.children.len()
        )));
    }
    for (group, child) in node.partition.groups().iter().zip(&node.children) {
        match child {
            None if group.len() == 1 => leaves.push(group[0].clone()),
            None => {
                return Err(Error::Config(format!(
                    "node {} group {group:?} has several classes but no child",
                    node.id
                )))
            }
            Some(child) => {
                let child_classes: Vec<&String> = child.classes().collect();
                if child_classes.len() != group.len()
                    || !group.iter().all(|c| child_classes.contains(&c))
                {
                    return Err(Error::Config(format!(
                        "child {} does not cover exactly group {group:?}",
                        child.id
                    )));
                }
                check_node(child, depth + 1, next, leaves)?;
            }
        }
    }
    Ok(())
}

fn collect<'a>(node: &'a TreeNode, out: &mut Vec<&'a TreeNode>) {
    out.push(node);
    for child in node.children.iter().flatten() {
        collect(child, out);
    }
}

fn find_mut(node: &mut TreeNode, id: NodeId) -> Option<&mut TreeNode> {
    if node.id == id {
        return Some(node);
    }
    node.children
        .iter_mut()
        .flatten()
        .find_map(|child| find_mut(child, id))
}

fn distinct<const N: usize>(classes: &[String], name: &str) -> Result<()> {
    if classes.len() != N {
        return Err(Error::Config(format!(
            "{name} needs exactly {N} classes, got {}",
            classes.len()
        )));
    }
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(Error::Config(format!("duplicate class {c:?}")));
        }
    }
    Ok(())
}

fn leaf(c: &str) -> Shape {
    Shape::Leaf(c.to_string())
}

fn pair(a: &str, b: &str) -> Shape {
    Shape::Node(vec![leaf(a), leaf(b)])
}

/// Binary root `{c1,c2} | {c3,c4}` over two binary second-stage nodes.
pub fn canonical_four_class(classes: &[String]) -> Result<TreeSpec> {
    distinct::<4>(classes, "the four-class structure")?;
    let c = classes;
    let shape = Shape::Node(vec![pair(&c[0], &c[1]), pair(&c[2], &c[3])]);
    TreeSpec::from_shape(classes.to_vec(), &shape)
}

/// Three-way root `{c1,c2} | {c3,c4} | {c5,c6}` over three binary nodes.
pub fn canonical_six_class_s1(classes: &[String]) -> Result<TreeSpec> {
    distinct::<6>(classes, "six-class structure #1")?;
    let c = classes;
    let shape = Shape::Node(vec![
        pair(&c[0], &c[1]),
        pair(&c[2], &c[3]),
        pair(&c[4], &c[5]),
    ]);
    TreeSpec::from_shape(classes.to_vec(), &shape)
}

/// Binary root `{c1,c2,c3} | {c5,c6,c4}` over two three-way nodes. The
/// second group keeps the order c5, c6, c4.
pub fn canonical_six_class_s2(classes: &[String]) -> Result<TreeSpec> {
    distinct::<6>(classes, "six-class structure #2")?;
    let c = classes;
    let shape = Shape::Node(vec![
        Shape::Node(vec![leaf(&c[0]), leaf(&c[1]), leaf(&c[2])]),
        Shape::Node(vec![leaf(&c[4]), leaf(&c[5]), leaf(&c[3])]),
    ]);
    TreeSpec::from_shape(classes.to_vec(), &shape)
}

/// Contiguous balanced grouping in class order. `branching[d]` is the group
/// count at depth `d`; the last entry repeats for deeper levels. Group sizes
/// differ by at most one, larger groups first.
pub fn generic_tree(classes: &[String], branching: &[usize]) -> Result<TreeSpec> {
    if classes.len() < 2 {
        return Err(Error::Config("a tree needs at least 2 classes".into()));
    }
    if branching.is_empty() || branching.iter().any(|&b| b < 2) {
        return Err(Error::Config(format!(
            "branching factors must be at least 2, got {branching:?}"
        )));
    }
    distinct_any(classes)?;
    let shape = group_shape(classes, branching, 0);
    TreeSpec::from_shape(classes.to_vec(), &shape)
}

fn distinct_any(classes: &[String]) -> Result<()> {
    for (i, c) in classes.iter().enumerate() {
        if classes[..i].contains(c) {
            return Err(Error::Config(format!("duplicate class {c:?}")));
        }
    }
    Ok(())
}

fn group_shape(classes: &[String], branching: &[usize], depth: usize) -> Shape {
    if classes.len() == 1 {
        return Shape::Leaf(classes[0].clone());
    }
    let b = branching[depth.min(branching.len() - 1)].min(classes.len());
    let (base, extra) = (classes.len() / b, classes.len() % b);
    let mut start = 0;
    let mut children = Vec::with_capacity(b);
    for g in 0..b {
        let size = base + usize::from(g < extra);
        children.push(group_shape(&classes[start..start + size], branching, depth + 1));
        start += size;
    }
    Shape::Node(children)
}
