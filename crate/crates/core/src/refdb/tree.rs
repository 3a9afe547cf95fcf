use std::io::{self, Read, Write};

use super::sketch::{check_levels, merge_into, FlatSketches};
use crate::binio::{expect_magic, get_u16, get_u64, get_u8, get_varint, put_u16, put_u64, put_varint};
use crate::encoding::{PackedKmer, TaxId};
use crate::error::{Error, Result};

const TREE_MAGIC: &[u8; 4] = b"MGST";
const TREE_VERSION: u16 = 1;
const NIL: u32 = u32::MAX;

// Node record header: bits 0-1 base code, then flags.
const HAS_LO: u8 = 1 << 2;
const HAS_HI: u8 = 1 << 3;
const HAS_EQ: u8 = 1 << 4;
const TERMINAL: u8 = 1 << 5;
// Chain record header: bit 7 set, bits 0-4 hold length - 2.
const CHAIN: u8 = 1 << 7;
const CHAIN_TERMINAL: u8 = 1 << 6;
const CHAIN_EQ: u8 = 1 << 5;
const MAX_CHAIN: usize = 33;

#[derive(Clone, Debug, PartialEq, Eq)]
struct Node {
    code: u8,
    lo: u32,
    eq: u32,
    hi: u32,
    /// Index into `lists` when a key of one of the levels ends here.
    terminal: u32,
}

/// Ternary search tree over 2-bit base codes holding every level's sketch
/// k-mers. A node at depth `d` that ends a level-`d` k-mer carries that
/// k-mer's full taxid list, so one descent along a top-level k-mer meets the
/// lists of all its sketched prefixes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TernaryTree {
    k_levels: Vec<usize>,
    nodes: Vec<Node>,
    lists: Vec<Vec<TaxId>>,
    root: u32,
}

pub fn build_tree(flat: &FlatSketches) -> TernaryTree {
    let k_levels = flat.k_levels();
    let mut keys: Vec<(PackedKmer, &[TaxId])> = flat
        .levels()
        .iter()
        .flat_map(|l| l.entries.iter().map(|e| (e.kmer, e.taxids.as_slice())))
        .collect();
    // Prefixes sort directly before their extensions.
    keys.sort_unstable_by_key(|k| k.0);
    let mut tree = TernaryTree {
        k_levels,
        nodes: Vec::new(),
        lists: Vec::new(),
        root: NIL,
    };
    tree.root = tree.build(&keys, 0);
    tree
}

impl TernaryTree {
    /// Builds the subtree for `keys`, which share their first `depth` bases
    /// and are all longer than `depth`. Sibling groups form a balanced BST.
    fn build(&mut self, keys: &[(PackedKmer, &[TaxId])], depth: usize) -> u32 {
        if keys.is_empty() {
            return NIL;
        }
        let mut groups: Vec<&[(PackedKmer, &[TaxId])]> = Vec::with_capacity(4);
        let mut start = 0;
        for i in 1..=keys.len() {
            if i == keys.len() || keys[i].0.code_at(depth) != keys[start].0.code_at(depth) {
                groups.push(&keys[start..i]);
                start = i;
            }
        }
        self.build_siblings(&groups, depth)
    }

    fn build_siblings(&mut self, groups: &[&[(PackedKmer, &[TaxId])]], depth: usize) -> u32 {
        if groups.is_empty() {
            return NIL;
        }
        let mid = groups.len() / 2;
        let group = groups[mid];
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            code: group[0].0.code_at(depth),
            lo: NIL,
            eq: NIL,
            hi: NIL,
            terminal: NIL,
        });
        let (ends_here, longer) = match group.first() {
            Some((km, taxids)) if km.k() == depth + 1 => (Some(*taxids), &group[1..]),
            _ => (None, group),
        };
        if let Some(taxids) = ends_here {
            self.nodes[id as usize].terminal = self.lists.len() as u32;
            self.lists.push(taxids.to_vec());
        }
        let lo = self.build_siblings(&groups[..mid], depth);
        let eq = self.build(longer, depth + 1);
        let hi = self.build_siblings(&groups[mid + 1..], depth);
        let node = &mut self.nodes[id as usize];
        node.lo = lo;
        node.eq = eq;
        node.hi = hi;
        id
    }

    pub fn k_levels(&self) -> &[usize] {
        &self.k_levels
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Taxid lists of every level's prefix of `q`, indexed like `k_levels`,
    /// gathered in one descent.
    pub fn lookup(&self, q: &PackedKmer) -> Vec<Option<&[TaxId]>> {
        self.lookup_counting(q).0
    }

    /// Same as [`lookup`](Self::lookup), also returning the nodes visited.
    pub fn lookup_counting(&self, q: &PackedKmer) -> (Vec<Option<&[TaxId]>>, usize) {
        let mut out = vec![None; self.k_levels.len()];
        let mut node = self.root;
        let mut depth = 0;
        let mut visited = 0;
        while node != NIL && depth < q.k() {
            visited += 1;
            let n = &self.nodes[node as usize];
            let c = q.code_at(depth);
            if c < n.code {
                node = n.lo;
            } else if c > n.code {
                node = n.hi;
            } else {
                depth += 1;
                if n.terminal != NIL {
                    if let Some(l) = self.k_levels.iter().position(|&k| k == depth) {
                        out[l] = Some(self.lists[n.terminal as usize].as_slice());
                    }
                }
                node = n.eq;
            }
        }
        (out, visited)
    }

    /// Exact byte length of [`write_to`](Self::write_to)'s output.
    pub fn serialized_len(&self) -> u64 {
        let mut counter = CountingSink(0);
        self.write_to(&mut counter).expect("counting never fails");
        counter.0
    }

    /// Pointer-free preorder encoding. Runs of single-child nodes collapse
    /// into chain records with 2-bit packed bases. A terminal stores only the
    /// taxids missing from the nearest terminals below it when those are all
    /// contained in its list, and its full list otherwise.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(TREE_MAGIC)?;
        put_u16(&mut w, TREE_VERSION)?;
        put_u16(&mut w, self.k_levels.len() as u16)?;
        for &k in &self.k_levels {
            put_u16(&mut w, k as u16)?;
        }
        put_u64(&mut w, self.nodes.len() as u64)?;
        if self.root != NIL {
            let below = self.lists_below();
            self.write_node(&mut w, self.root, &below)?;
        }
        Ok(())
    }

    /// For each list, the union of the lists of the nearest terminals in its
    /// node's `eq` subtree. Children have larger ids than their parent, so a
    /// reverse sweep finishes every subtree before its root.
    fn lists_below(&self) -> Vec<Vec<TaxId>> {
        let mut nearest: Vec<Vec<TaxId>> = vec![Vec::new(); self.nodes.len()];
        let mut below: Vec<Vec<TaxId>> = vec![Vec::new(); self.lists.len()];
        for id in (0..self.nodes.len()).rev() {
            let n = &self.nodes[id];
            let eq_union = if n.eq != NIL { std::mem::take(&mut nearest[n.eq as usize]) } else { Vec::new() };
            // What the parent sees through this node: its own list if it is
            // terminal, otherwise the terminals below it, plus the siblings.
            let mut seen = if n.terminal != NIL {
                below[n.terminal as usize] = eq_union;
                self.lists[n.terminal as usize].clone()
            } else {
                eq_union
            };
            for side in [n.lo, n.hi] {
                if side != NIL {
                    merge_into(&mut seen, &std::mem::take(&mut nearest[side as usize]));
                }
            }
            nearest[id] = seen;
        }
        below
    }

    fn write_node(&self, w: &mut impl Write, mut id: u32, below: &[Vec<TaxId>]) -> io::Result<()> {
        loop {
            let n = &self.nodes[id as usize];
            let chain = self.chain_from(id);
            if chain.len() >= 2 {
                let last = &self.nodes[*chain.last().unwrap() as usize];
                let mut header = CHAIN | (chain.len() - 2) as u8;
                if last.terminal != NIL {
                    header |= CHAIN_TERMINAL;
                }
                if last.eq != NIL {
                    header |= CHAIN_EQ;
                }
                w.write_all(&[header])?;
                let mut packed = vec![0u8; (chain.len() * 2).div_ceil(8)];
                for (i, &c) in chain.iter().enumerate() {
                    packed[i / 4] |= self.nodes[c as usize].code << (6 - 2 * (i % 4));
                }
                w.write_all(&packed)?;
                let last_id = *chain.last().unwrap();
                if last.terminal != NIL {
                    self.write_list(w, last_id, below)?;
                }
                if last.eq == NIL {
                    return Ok(());
                }
                id = last.eq;
                continue;
            }
            let mut header = n.code;
            for (flag, child) in [(HAS_LO, n.lo), (HAS_HI, n.hi), (HAS_EQ, n.eq)] {
                if child != NIL {
                    header |= flag;
                }
            }
            if n.terminal != NIL {
                header |= TERMINAL;
            }
            w.write_all(&[header])?;
            if n.terminal != NIL {
                self.write_list(w, id, below)?;
            }
            for child in [n.lo, n.eq, n.hi] {
                if child != NIL {
                    self.write_node(w, child, below)?;
                }
            }
            return Ok(());
        }
    }

    /// Maximal run starting at `id` of nodes without siblings where only the
    /// last may be terminal.
    fn chain_from(&self, id: u32) -> Vec<u32> {
        let mut run = Vec::new();
        let mut cur = id;
        while cur != NIL && run.len() < MAX_CHAIN {
            let n = &self.nodes[cur as usize];
            if n.lo != NIL || n.hi != NIL {
                break;
            }
            run.push(cur);
            if n.terminal != NIL {
                break;
            }
            cur = n.eq;
        }
        run
    }

    fn write_list(&self, w: &mut impl Write, id: u32, below: &[Vec<TaxId>]) -> io::Result<()> {
        let t = self.nodes[id as usize].terminal as usize;
        let list = &self.lists[t];
        let deeper = &below[t];
        let covered = deeper.iter().all(|t| list.binary_search(t).is_ok());
        let stored: Vec<TaxId> = if covered {
            list.iter().copied().filter(|t| deeper.binary_search(t).is_err()).collect()
        } else {
            list.clone()
        };
        put_varint(w, ((stored.len() as u64) << 1) | covered as u64)?;
        let mut prev = 0u32;
        for t in stored {
            put_varint(w, (t.get() - prev) as u64)?;
            prev = t.get();
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, TREE_MAGIC, "ternary tree")?;
        if get_u16(&mut r)? != TREE_VERSION {
            return Err(Error::Format("unsupported tree version".into()));
        }
        let n_levels = get_u16(&mut r)? as usize;
        let k_levels: Vec<usize> = (0..n_levels).map(|_| get_u16(&mut r).map(|k| k as usize)).collect::<Result<_>>()?;
        check_levels(&k_levels)?;
        let node_count = get_u64(&mut r)? as usize;
        let mut tree = TernaryTree {
            k_levels,
            nodes: Vec::with_capacity(node_count),
            lists: Vec::new(),
            root: NIL,
        };
        // Per list: stored relative to the terminals below it.
        let mut pending: Vec<bool> = Vec::new();
        if node_count > 0 {
            tree.root = tree.read_node(&mut r, &mut pending)?;
        }
        if tree.nodes.len() != node_count {
            return Err(Error::Format("tree node count does not match header".into()));
        }
        tree.restore_lists(&pending);
        Ok(tree)
    }

    /// Completes lists stored relative to the terminals below them. Children
    /// have larger ids than parents, so a reverse sweep sees every subtree
    /// completed before its root.
    fn restore_lists(&mut self, covered: &[bool]) {
        let mut nearest: Vec<Vec<TaxId>> = vec![Vec::new(); self.nodes.len()];
        for id in (0..self.nodes.len()).rev() {
            let n = self.nodes[id].clone();
            let eq_union = if n.eq != NIL { std::mem::take(&mut nearest[n.eq as usize]) } else { Vec::new() };
            let mut seen = if n.terminal != NIL {
                let t = n.terminal as usize;
                if covered[t] {
                    merge_into(&mut self.lists[t], &eq_union);
                }
                self.lists[t].clone()
            } else {
                eq_union
            };
            for side in [n.lo, n.hi] {
                if side != NIL {
                    merge_into(&mut seen, &std::mem::take(&mut nearest[side as usize]));
                }
            }
            nearest[id] = seen;
        }
    }

    fn read_list(&mut self, r: &mut impl Read, covered: &mut Vec<bool>) -> Result<u32> {
        let head = get_varint(r)?;
        let n = head >> 1;
        let mut list = Vec::with_capacity(n as usize);
        let mut prev = 0u64;
        for _ in 0..n {
            prev += get_varint(r)?;
            let id = u32::try_from(prev).map_err(|_| Error::Format("taxid out of range".into()))?;
            list.push(TaxId::new(id)?);
        }
        self.lists.push(list);
        covered.push(head & 1 == 1);
        Ok(self.lists.len() as u32 - 1)
    }

    fn push_node(&mut self, code: u8) -> u32 {
        self.nodes.push(Node {
            code,
            lo: NIL,
            eq: NIL,
            hi: NIL,
            terminal: NIL,
        });
        self.nodes.len() as u32 - 1
    }

    fn read_node(&mut self, r: &mut impl Read, covered: &mut Vec<bool>) -> Result<u32> {
        let header = get_u8(r)?;
        if header & CHAIN != 0 {
            let len = (header & 0x1f) as usize + 2;
            let mut packed = vec![0u8; (len * 2).div_ceil(8)];
            r.read_exact(&mut packed)?;
            let first = self.nodes.len() as u32;
            for i in 0..len {
                let code = (packed[i / 4] >> (6 - 2 * (i % 4))) & 3;
                let id = self.push_node(code);
                if i > 0 {
                    self.nodes[id as usize - 1].eq = id;
                }
            }
            let last = self.nodes.len() - 1;
            if header & CHAIN_TERMINAL != 0 {
                self.nodes[last].terminal = self.read_list(r, covered)?;
            }
            if header & CHAIN_EQ != 0 {
                let eq = self.read_node(r, covered)?;
                self.nodes[last].eq = eq;
            }
            return Ok(first);
        }
        let id = self.push_node(header & 3);
        if header & TERMINAL != 0 {
            self.nodes[id as usize].terminal = self.read_list(r, covered)?;
        }
        if header & HAS_LO != 0 {
            let c = self.read_node(r, covered)?;
            self.nodes[id as usize].lo = c;
        }
        if header & HAS_EQ != 0 {
            let c = self.read_node(r, covered)?;
            self.nodes[id as usize].eq = c;
        }
        if header & HAS_HI != 0 {
            let c = self.read_node(r, covered)?;
            self.nodes[id as usize].hi = c;
        }
        Ok(id)
    }
}

struct CountingSink(u64);

impl Write for CountingSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}
