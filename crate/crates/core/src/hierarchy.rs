//! World taxonomy and the chain of nested dichotomies it induces.
//!
//! Worlds are ordered from outermost (everything the system may be shown) to
//! innermost (the exact training distribution). Layer `i` of the cascade
//! rejects world `i` and passes worlds `i+1..`, so a hierarchy with `n` worlds
//! yields `n - 1` binary gates arranged as a caterpillar tree.

use std::collections::HashSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered nesting of semantic worlds plus the class names of the innermost one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HierarchyConfig", into = "HierarchyConfig")]
pub struct WorldHierarchy {
    worlds: Vec<String>,
    classes: Vec<String>,
}

/// On-disk form of a hierarchy: `{"worlds": [...], "classes": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub worlds: Vec<String>,
    pub classes: Vec<String>,
}

impl TryFrom<HierarchyConfig> for WorldHierarchy {
    type Error = Error;

    fn try_from(cfg: HierarchyConfig) -> Result<Self> {
        WorldHierarchy::new(cfg.worlds, cfg.classes)
    }
}

impl From<WorldHierarchy> for HierarchyConfig {
    fn from(h: WorldHierarchy) -> Self {
        HierarchyConfig {
            worlds: h.worlds,
            classes: h.classes,
        }
    }
}

fn check_unique(kind: &str, names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if name.is_empty() {
            return Err(Error::Config(format!("empty {kind} identifier")));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::Config(format!(
                "duplicate {kind} identifier '{name}'"
            )));
        }
    }
    Ok(())
}

impl WorldHierarchy {
    pub fn new<W, C>(worlds: W, classes: C) -> Result<Self>
    where
        W: IntoIterator,
        W::Item: Into<String>,
        C: IntoIterator,
        C::Item: Into<String>,
    {
        let worlds: Vec<String> = worlds.into_iter().map(Into::into).collect();
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if worlds.len() < 2 {
            return Err(Error::Config(format!(
                "a hierarchy needs at least 2 worlds, got {}",
                worlds.len()
            )));
        }
        if classes.is_empty() {
            return Err(Error::Config(
                "the innermost world needs at least one class".into(),
            ));
        }
        check_unique("world", &worlds)?;
        check_unique("class", &classes)?;
        Ok(WorldHierarchy { worlds, classes })
    }

    pub fn worlds(&self) -> &[String] {
        &self.worlds
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn world_count(&self) -> usize {
        self.worlds.len()
    }

    /// Number of binary layers, `worlds - 1`.
    pub fn layer_count(&self) -> usize {
        self.worlds.len() - 1
    }

    /// Number of known classes `K` in the innermost world.
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Depth of the innermost world.
    pub fn max_depth(&self) -> usize {
        self.worlds.len() - 1
    }

    pub fn world_index(&self, name: &str) -> Option<usize> {
        self.worlds.iter().position(|w| w == name)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Builds a validated label from world and optional class names.
    pub fn label(&self, world: &str, class: Option<&str>) -> Result<WorldLabel> {
        let depth = self
            .world_index(world)
            .ok_or_else(|| Error::Data(format!("unknown world '{world}'")))?;
        let class_id = match class {
            Some(name) => Some(
                self.class_index(name)
                    .ok_or_else(|| Error::Data(format!("unknown class '{name}'")))?,
            ),
            None => None,
        };
        WorldLabel::new(self, depth, class_id)
    }
}

/// A sample's innermost world, plus its class when that world is the known one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldLabel {
    depth: usize,
    class_id: Option<usize>,
}

impl WorldLabel {
    pub fn new(h: &WorldHierarchy, depth: usize, class_id: Option<usize>) -> Result<Self> {
        if depth > h.max_depth() {
            return Err(Error::Data(format!(
                "depth {depth} outside hierarchy of {} worlds",
                h.world_count()
            )));
        }
        match (depth == h.max_depth(), class_id) {
            (true, None) => Err(Error::Data(format!(
                "samples of the innermost world '{}' need a class",
                h.worlds[depth]
            ))),
            (false, Some(_)) => Err(Error::Data(format!(
                "class given for non-innermost world '{}'",
                h.worlds[depth]
            ))),
            (true, Some(c)) if c >= h.class_count() => Err(Error::Data(format!(
                "class id {c} outside 0..{}",
                h.class_count()
            ))),
            _ => Ok(WorldLabel { depth, class_id }),
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn class_id(&self) -> Option<usize> {
        self.class_id
    }
}

/// One binary split: `negative_world` on the rejected side, a contiguous run of
/// inner worlds on the accepted side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DichotomyNode {
    pub layer_index: usize,
    pub negative_world: usize,
    pub positive_worlds: Range<usize>,
}

impl DichotomyNode {
    /// Outcome of this node for a sample, or `None` if the sample never reaches it
    /// (its world lies outside both sides).
    pub fn route(&self, label: &WorldLabel) -> Option<bool> {
        if label.depth == self.negative_world {
            Some(false)
        } else if self.positive_worlds.contains(&label.depth) {
            Some(true)
        } else {
            None
        }
    }
}

/// The canonical chain of dichotomies: node `i` rejects world `i` and accepts
/// worlds `i+1..`.
pub fn build_cascade_chain(h: &WorldHierarchy) -> Vec<DichotomyNode> {
    let n = h.world_count();
    (0..h.layer_count())
        .map(|i| DichotomyNode {
            layer_index: i,
            negative_world: i,
            positive_worlds: i + 1..n,
        })
        .collect()
}

/// Chain construction from raw world names, for callers without a validated hierarchy.
pub fn build_chain_from_worlds(worlds: &[String]) -> Result<Vec<DichotomyNode>> {
    if worlds.len() < 2 {
        return Err(Error::Config(format!(
            "a cascade needs at least 2 worlds, got {}",
            worlds.len()
        )));
    }
    check_unique("world", worlds)?;
    let n = worlds.len();
    Ok((0..n - 1)
        .map(|i| DichotomyNode {
            layer_index: i,
            negative_world: i,
            positive_worlds: i + 1..n,
        })
        .collect())
}

/// Number of distinct nested dichotomies over `k` classes: `(2k - 3)!!`.
pub fn count_nested_dichotomies(k: usize) -> Result<u128> {
    if k < 2 {
        return Err(Error::Domain(format!("need at least 2 classes, got {k}")));
    }
    let mut acc: u128 = 1;
    let mut m = (2 * k - 3) as u128;
    while m > 1 {
        acc = acc
            .checked_mul(m)
            .ok_or_else(|| Error::Domain(format!("(2k-3)!! overflows u128 for k={k}")))?;
        m -= 2;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn five() -> WorldHierarchy {
        WorldHierarchy::new(
            ["far", "near", "building", "monument", "known"],
            ["a", "b", "c", "d"],
        )
        .unwrap()
    }

    /// Canonical string forms of every unordered full binary tree on `leaves`.
    fn enumerate_trees(leaves: &[usize]) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        if leaves.len() == 1 {
            out.insert(leaves[0].to_string());
            return out;
        }
        let rest = &leaves[1..];
        // the first leaf always sits in the left part, so each unordered split is seen once
        for mask in 0..(1u32 << rest.len()) {
            let mut left = vec![leaves[0]];
            let mut right = Vec::new();
            for (i, &leaf) in rest.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    left.push(leaf);
                } else {
                    right.push(leaf);
                }
            }
            if right.is_empty() {
                continue;
            }
            for l in enumerate_trees(&left) {
                for r in enumerate_trees(&right) {
                    let (a, b) = if l < r { (&l, &r) } else { (&r, &l) };
                    out.insert(format!("({a},{b})"));
                }
            }
        }
        out
    }

    #[test]
    fn chain_for_five_worlds() {
        let h = five();
        let chain = build_cascade_chain(&h);
        assert_eq!(chain.len(), 4);
        assert_eq!(chain[0].negative_world, 0);
        assert_eq!(chain[0].positive_worlds, 1..5);
        assert_eq!(chain[3].negative_world, 3);
        assert_eq!(chain[3].positive_worlds, 4..5);
        for (i, node) in chain.iter().enumerate() {
            assert_eq!(node.layer_index, i);
        }
        assert_eq!(chain, build_cascade_chain(&h));
    }

    #[test]
    fn chain_small_hierarchies() {
        let two = WorldHierarchy::new(["out", "in"], ["x"]).unwrap();
        assert_eq!(build_cascade_chain(&two).len(), 1);
        let three = WorldHierarchy::new(["a", "b", "c"], ["x"]).unwrap();
        let chain = build_cascade_chain(&three);
        assert_eq!(chain.len(), 2);
        assert_eq!(chain[1].positive_worlds, 2..3);
    }

    #[test]
    fn too_few_worlds_rejected() {
        assert!(matches!(
            WorldHierarchy::new(["only"], ["x"]),
            Err(Error::Config(_))
        ));
        assert!(build_chain_from_worlds(&["only".to_string()]).is_err());
        assert!(WorldHierarchy::new(["a", "a"], ["x"]).is_err());
    }

    #[test]
    fn routing_partitions_each_population() {
        let h = five();
        let chain = build_cascade_chain(&h);
        for depth in 0..5 {
            let class = (depth == 4).then_some(0);
            let label = WorldLabel::new(&h, depth, class).unwrap();
            for node in &chain {
                let expected = if depth < node.layer_index {
                    None
                } else {
                    Some(depth > node.layer_index)
                };
                assert_eq!(node.route(&label), expected);
            }
        }
    }

    #[test]
    fn label_invariant() {
        let h = five();
        assert!(WorldLabel::new(&h, 4, None).is_err());
        assert!(WorldLabel::new(&h, 2, Some(0)).is_err());
        assert!(WorldLabel::new(&h, 4, Some(4)).is_err());
        assert!(WorldLabel::new(&h, 5, None).is_err());
        assert!(h.label("known", Some("c")).is_ok());
        assert!(h.label("mars", None).is_err());
    }

    #[test]
    fn double_factorial_values() {
        assert_eq!(count_nested_dichotomies(2).unwrap(), 1);
        assert_eq!(count_nested_dichotomies(3).unwrap(), 3);
        assert_eq!(count_nested_dichotomies(5).unwrap(), 105);
        assert!(matches!(count_nested_dichotomies(1), Err(Error::Domain(_))));
        assert!(count_nested_dichotomies(200).is_err());
    }

    #[test]
    fn double_factorial_matches_enumeration() {
        for k in 2..=7 {
            let leaves: Vec<usize> = (0..k).collect();
            let brute = enumerate_trees(&leaves).len() as u128;
            assert_eq!(count_nested_dichotomies(k).unwrap(), brute, "k={k}");
        }
    }

    #[test]
    fn hierarchy_json_shape() {
        let h = five();
        let text = serde_json::to_string(&h).unwrap();
        assert!(text.starts_with("{\"worlds\":[\"far\""));
        let back: WorldHierarchy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, h);
        assert!(
            serde_json::from_str::<WorldHierarchy>(r#"{"worlds":["x"],"classes":["a"]}"#).is_err()
        );
    }
}
