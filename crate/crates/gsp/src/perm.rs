use crate::error::{Error, Result};
use crate::set::NodeSet;
use rand::seq::SliceRandom;
use rand::Rng;

/// A total order on the nodes `0..p` (external notation is 1-based).
///
/// `order[k]` is the node at position `k`; `position[v]` is the position of
/// node `v`. Both views are kept so lookups in either direction are O(1).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    order: Vec<usize>,
    position: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from the sequence of nodes in order (0-based).
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let p = order.len();
        let mut position = vec![usize::MAX; p];
        for (k, &v) in order.iter().enumerate() {
            if v >= p {
                return Err(Error::InvalidInput(format!(
                    "permutation entry {} out of range for p = {}",
                    v + 1,
                    p
                )));
            }
            if position[v] != usize::MAX {
                return Err(Error::InvalidInput(format!(
                    "permutation repeats node {}",
                    v + 1
                )));
            }
            position[v] = k;
        }
        Ok(Self { order, position })
    }

    /// 1-based entries, as written in files and on the command line.
    pub fn from_one_based(order: &[usize]) -> Result<Self> {
        if order.contains(&0) {
            return Err(Error::InvalidInput("permutation entries are 1-based".into()));
        }
        Self::from_order(order.iter().map(|&v| v - 1).collect())
    }

    pub fn identity(p: usize) -> Self {
        Self {
            order: (0..p).collect(),
            position: (0..p).collect(),
        }
    }

    pub fn random<R: Rng>(p: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..p).collect();
        order.shuffle(rng);
        Self::from_order(order).unwrap()
    }

    pub fn p(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn node_at(&self, k: usize) -> usize {
        self.order[k]
    }

    pub fn position_of(&self, v: usize) -> usize {
        self.position[v]
    }

    /// The permutation with the letters `u` and `v` exchanged.
    pub fn swap_values(&self, u: usize, v: usize) -> Self {
        let mut out = self.clone();
        let (pu, pv) = (out.position[u], out.position[v]);
        out.order.swap(pu, pv);
        out.position.swap(u, v);
        out
    }

    /// The permutation with `v` relocated to sit immediately before `u`;
    /// everything else keeps its relative order.
    ///
    /// This is the move underlying a covered-arrow reversal `u → v`: when the
    /// permutation is a linear extension of the DAG, the result is a linear
    /// extension of the DAG with that arrow reversed, and it equals the plain
    /// transposition whenever `u` and `v` were already adjacent.
    pub fn move_before(&self, v: usize, u: usize) -> Self {
        let mut order = self.order.clone();
        let from = self.position[v];
        order.remove(from);
        let to = order.iter().position(|&x| x == u).expect("u present");
        order.insert(to, v);
        Self::from_order(order).unwrap()
    }

    /// Nodes occupying positions `0..k`.
    pub fn prefix(&self, k: usize) -> NodeSet {
        self.order[..k].iter().copied().collect()
    }

    /// Parses the CLI/file syntax: a digit string like `1423` for p ≤ 9,
    /// comma-separated 1-based entries otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Parse("empty permutation".into()));
        }
        let entries: Vec<usize> = if text.contains(',') {
            text.split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Parse(format!("bad permutation entry {t:?}")))
                })
                .collect::<Result<_>>()?
        } else {
            text.chars()
                .map(|c| {
                    c.to_digit(10)
                        .map(|d| d as usize)
                        .ok_or_else(|| Error::Parse(format!("bad permutation digit {c:?}")))
                })
                .collect::<Result<_>>()?
        };
        Self::from_one_based(&entries)
    }
}

/// All `p!` permutations in lexicographic order of their node sequences.
/// Callers are expected to guard `p` themselves.
pub fn all_permutations(p: usize) -> Vec<Permutation> {
    let mut order: Vec<usize> = (0..p).collect();
    let mut out = Vec::new();
    loop {
        out.push(Permutation::from_order(order.clone()).unwrap());
        // next_permutation in lexicographic order
        let Some(i) = (0..order.len().saturating_sub(1)).rfind(|&i| order[i] < order[i + 1]) else {
            return out;
        };
        let j = (i + 1..order.len()).rfind(|&j| order[j] > order[i]).unwrap();
        order.swap(i, j);
        order[i + 1..].reverse();
    }
}

impl std::fmt::Display for Permutation {
    /// 1-based; digit string for p ≤ 9, comma-separated beyond.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.p() <= 9 {
            for &v in &self.order {
                write!(f, "{}", v + 1)?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.order.iter().map(|&v| (v + 1).to_string()).collect();
            write!(f, "{}", parts.join(","))
        }
    }
}

impl std::fmt::Debug for Permutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Permutation({self})")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_small_and_large() {
        let p = Permutation::parse("1423").unwrap();
        assert_eq!(p.order(), &[0, 3, 1, 2]);
        assert_eq!(p.to_string(), "1423");

        let big = Permutation::parse("10,2,3,4,5,6,7,8,9,1").unwrap();
        assert_eq!(big.node_at(0), 9);
        assert_eq!(big.to_string(), "10,2,3,4,5,6,7,8,9,1");
    }

    #[test]
    fn swap_values_is_letter_transposition() {
        let p = Permutation::parse("1423").unwrap();
        assert_eq!(p.swap_values(0, 3).to_string(), "4123");
        // non-adjacent letters
        let q = Permutation::parse("4123").unwrap();
        assert_eq!(q.swap_values(3, 1).to_string(), "2143");
    }

    #[test]
    fn move_before_is_adjacent_transposition_when_adjacent() {
        let p = Permutation::parse("1423").unwrap();
        assert_eq!(p.move_before(3, 0).to_string(), "4123");
        // Non-adjacent: only the moved letter changes its slot.
        let q = Permutation::parse("4123").unwrap();
        assert_eq!(q.move_before(1, 3).to_string(), "2413");
        assert_eq!(q.move_before(2, 3).to_string(), "3412");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Permutation::parse("1224").is_err());
        assert!(Permutation::parse("105").is_err());
        assert!(Permutation::parse("").is_err());
        assert!(Permutation::from_one_based(&[0, 1]).is_err());
    }

    #[test]
    fn enumeration_is_lexicographic_and_complete() {
        let perms = all_permutations(3);
        let words: Vec<String> = perms.iter().map(|p| p.to_string()).collect();
        assert_eq!(words, vec!["123", "132", "213", "231", "312", "321"]);
        assert_eq!(all_permutations(5).len(), 120);
    }

    #[test]
    fn prefix_positions() {
        let p = Permutation::parse("3142").unwrap();
        assert_eq!(p.position_of(2), 0);
        assert_eq!(p.prefix(2).iter().collect::<Vec<_>>(), vec![0, 2]);
    }
}
