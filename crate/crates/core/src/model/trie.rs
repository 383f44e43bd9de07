//! Prefix tree over docid digit strings, used to mask decoding.

use crate::corpus::DocId;
use crate::error::{contract, Result};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Node {
    children: [u32; 10],
    /// Document whose id ends here.
    terminal: Option<usize>,
    parent: u32,
    /// Ids ending at or below this node.
    size: usize,
}

impl Node {
    fn new() -> Self {
        Self {
            children: [NONE; 10],
            terminal: None,
            parent: NONE,
            size: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocidTrie {
    nodes: Vec<Node>,
    ids: Vec<DocId>,
    /// Terminal node of each document.
    leaf: Vec<usize>,
}

impl DocidTrie {
    pub const ROOT: usize = 0;

    /// Trie over `ids`; the terminal payload is the position in `ids`.
    pub fn build(ids: &[DocId]) -> Result<Self> {
        let mut nodes = vec![Node::new()];
        let mut leaf = Vec::with_capacity(ids.len());
        for (doc, id) in ids.iter().enumerate() {
            let mut cur = Self::ROOT;
            for b in id.as_str().bytes() {
                let digit = (b - b'0') as usize;
                let next = nodes[cur].children[digit];
                cur = if next == NONE {
                    let mut node = Node::new();
                    node.parent = cur as u32;
                    nodes.push(node);
                    let n = nodes.len() - 1;
                    nodes[cur].children[digit] = n as u32;
                    n
                } else {
                    next as usize
                };
            }
            if cur == Self::ROOT {
                return Err(contract("empty docid"));
            }
            if let Some(other) = nodes[cur].terminal {
                return Err(contract(format!(
                    "docid {} shared by documents {other} and {doc}",
                    id
                )));
            }
            nodes[cur].terminal = Some(doc);
            leaf.push(cur);
            let mut up = cur as u32;
            while up != NONE {
                nodes[up as usize].size += 1;
                up = nodes[up as usize].parent;
            }
        }
        Ok(Self {
            nodes,
            ids: ids.to_vec(),
            leaf,
        })
    }

    pub fn ids(&self) -> &[DocId] {
        &self.ids
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn child(&self, node: usize, digit: u8) -> Option<usize> {
        let c = self.nodes[node].children[digit as usize];
        (c != NONE).then_some(c as usize)
    }

    /// Digits that extend the prefix at `node`, ascending.
    pub fn next_digits(&self, node: usize) -> impl Iterator<Item = u8> + '_ {
        (0..10u8).filter(move |&d| self.nodes[node].children[d as usize] != NONE)
    }

    pub fn terminal(&self, node: usize) -> Option<usize> {
        self.nodes[node].terminal
    }

    /// Number of ids ending at or below `node`.
    pub fn size(&self, node: usize) -> usize {
        self.nodes[node].size
    }

    /// Nodes on the path of `doc`'s id, from its terminal up to the root.
    pub fn ancestors(&self, doc: usize) -> impl Iterator<Item = usize> + '_ {
        let mut cur = self.leaf[doc] as u32;
        std::iter::from_fn(move || {
            (cur != NONE).then(|| {
                let n = cur as usize;
                cur = self.nodes[n].parent;
                n
            })
        })
    }

    /// Node reached by a digit string, if it is a prefix of some id.
    pub fn walk(&self, prefix: &str) -> Option<usize> {
        let mut cur = Self::ROOT;
        for b in prefix.bytes() {
            if !b.is_ascii_digit() {
                return None;
            }
            cur = self.child(cur, b - b'0')?;
        }
        Some(cur)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.walk(id).and_then(|n| self.terminal(n)).is_some()
    }

    /// Every complete id as `(doc, digit symbols)`, in depth-first order.
    pub fn paths(&self) -> Vec<(usize, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![(Self::ROOT, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if let Some(doc) = self.terminal(node) {
                out.push((doc, path.clone()));
            }
            for d in (0..10u8).rev() {
                if let Some(c) = self.child(node, d) {
                    let mut p = path.clone();
                    p.push(d);
                    stack.push((c, p));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::IdScheme;

    fn ids(v: &[&str]) -> Vec<DocId> {
        v.iter().map(|s| DocId::new(*s, IdScheme::Naive).unwrap()).collect()
    }

    #[test]
    fn mask_after_prefix() {
        let t = DocidTrie::build(&ids(&["12", "15"])).unwrap();
        let n = t.walk("1").unwrap();
        assert_eq!(t.next_digits(n).collect::<Vec<_>>(), vec![2, 5]);
        assert_eq!(t.terminal(n), None);
        assert!(t.contains("15"));
        assert!(!t.contains("1"));
    }

    #[test]
    fn interior_terminals() {
        let t = DocidTrie::build(&ids(&["1", "10", "11"])).unwrap();
        let n = t.walk("1").unwrap();
        assert_eq!(t.terminal(n), Some(0));
        assert_eq!(t.next_digits(n).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(t.paths().len(), 3);
        assert_eq!(t.size(DocidTrie::ROOT), 3);
        assert_eq!(t.size(n), 3);
        assert_eq!(t.size(t.walk("10").unwrap()), 1);
        let up: Vec<usize> = t.ancestors(1).collect();
        assert_eq!(up, vec![t.walk("10").unwrap(), n, DocidTrie::ROOT]);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(DocidTrie::build(&ids(&["3", "3"])).is_err());
    }
}
