use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};

use crate::binio::{expect_magic, get_u16, get_u32, get_u64, put_u16, put_u32, put_u64};
use crate::encoding::{PackedKmer, TaxId};
use crate::error::{Error, Result};
use crate::refdb::{FlatSketches, KssTables, TernaryTree};

const HITS_MAGIC: &[u8; 4] = b"MGHT";
const HITS_VERSION: u16 = 1;

/// Per-taxid hit counts, one counter per sketch level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaxHitTable {
    k_levels: Vec<usize>,
    counts: BTreeMap<TaxId, Vec<u64>>,
}

impl TaxHitTable {
    pub fn new(k_levels: &[usize]) -> Self {
        Self {
            k_levels: k_levels.to_vec(),
            counts: BTreeMap::new(),
        }
    }

    pub fn k_levels(&self) -> &[usize] {
        &self.k_levels
    }

    pub fn credit(&mut self, level: usize, taxids: impl IntoIterator<Item = TaxId>) {
        let n = self.k_levels.len();
        for t in taxids {
            self.counts.entry(t).or_insert_with(|| vec![0; n])[level] += 1;
        }
    }

    pub fn get(&self, t: TaxId) -> Option<&[u64]> {
        self.counts.get(&t).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TaxId, &[u64])> {
        self.counts.iter().map(|(t, c)| (*t, c.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(HITS_MAGIC)?;
        put_u16(&mut w, HITS_VERSION)?;
        put_u16(&mut w, self.k_levels.len() as u16)?;
        for &k in &self.k_levels {
            put_u16(&mut w, k as u16)?;
        }
        put_u64(&mut w, self.counts.len() as u64)?;
        for (t, c) in &self.counts {
            put_u32(&mut w, t.get())?;
            for &v in c {
                put_u64(&mut w, v)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, HITS_MAGIC, "hit table")?;
        if get_u16(&mut r)? != HITS_VERSION {
            return Err(Error::Format("unsupported hit table version".into()));
        }
        let n = get_u16(&mut r)? as usize;
        let k_levels = (0..n).map(|_| get_u16(&mut r).map(usize::from)).collect::<Result<Vec<_>>>()?;
        let rows = get_u64(&mut r)?;
        let mut counts = BTreeMap::new();
        for _ in 0..rows {
            let t = TaxId::new(get_u32(&mut r)?)?;
            let c = (0..n).map(|_| get_u64(&mut r)).collect::<Result<Vec<_>>>()?;
            counts.insert(t, c);
        }
        Ok(Self { k_levels, counts })
    }
}

fn union(into: &mut Vec<TaxId>, add: &[TaxId]) {
    if add.is_empty() {
        return;
    }
    let mut out = Vec::with_capacity(into.len() + add.len());
    let (mut i, mut j) = (0, 0);
    while i < into.len() || j < add.len() {
        let next = match (into.get(i), add.get(j)) {
            (Some(a), Some(b)) if a == b => {
                i += 1;
                j += 1;
                *a
            }
            (Some(a), Some(b)) if a < b => {
                i += 1;
                *a
            }
            (Some(a), None) => {
                i += 1;
                *a
            }
            (_, Some(b)) => {
                j += 1;
                *b
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    *into = out;
}

fn minus<'a>(a: &'a [TaxId], b: &'a [TaxId]) -> impl Iterator<Item = TaxId> + 'a {
    a.iter().copied().filter(move |t| b.binary_search(t).is_err())
}

#[derive(Default)]
struct Group {
    key: Option<PackedKmer>,
    touched: bool,
    /// Union of the full taxid sets of the next larger level's groups inside.
    children: Vec<TaxId>,
    /// Same, restricted to groups that an intersecting k-mer reached.
    covered: Vec<TaxId>,
}

/// Single-pass taxid retrieval over KSS tables.
///
/// Intersecting k-mers are pushed in increasing order. The top table is
/// co-streamed with them; at each smaller level an index generator compares
/// consecutive top-level prefixes and advances that level's slot cursor when
/// the prefix changes. A level's full taxid set for a prefix is its slot plus
/// everything attributed under it at the next larger level.
///
/// A top-level entry equal to an intersecting k-mer credits its taxids at the
/// top level. A smaller-level prefix shared by at least one intersecting k-mer
/// is credited once, for the taxids of its full set that none of those k-mers
/// already matched at the next larger level.
pub struct Retriever<'a> {
    kss: &'a KssTables,
    next: usize,
    last: Option<PackedKmer>,
    pushed: usize,
    groups: Vec<Group>,
    pending: Vec<VecDeque<PackedKmer>>,
    cursors: Vec<usize>,
    hits: TaxHitTable,
}

impl<'a> Retriever<'a> {
    pub fn new(kss: &'a KssTables) -> Self {
        let n = kss.k_levels().len();
        Self {
            kss,
            next: 0,
            last: None,
            pushed: 0,
            groups: (0..n).map(|_| Group::default()).collect(),
            pending: vec![VecDeque::new(); n],
            cursors: vec![0; n],
            hits: TaxHitTable::new(kss.k_levels()),
        }
    }

    /// Slot cursor per level: the top-table position at level 0 and the
    /// number of slots opened at the others.
    pub fn cursors(&self) -> &[usize] {
        &self.cursors
    }

    pub fn push(&mut self, q: PackedKmer) -> Result<()> {
        if q.k() != self.kss.k_max() {
            return Err(Error::KMismatch { reads: q.k(), db: self.kss.k_max() });
        }
        if self.last.is_some_and(|p| q <= p) {
            return Err(Error::UnsortedInput { position: self.pushed });
        }
        self.last = Some(q);
        self.pushed += 1;
        if self.next >= self.kss.top().len() && self.groups.iter().all(|g| g.key.is_none()) {
            return Ok(());
        }
        for (l, &k) in self.kss.k_levels().iter().enumerate().skip(1) {
            let p = q.prefix_unchecked(k);
            let g = &mut self.groups[l];
            if g.key == Some(p) {
                g.touched = true;
            } else if self.pending[l].back() != Some(&p) {
                self.pending[l].push_back(p);
            }
        }
        while self.next < self.kss.top().len() && self.kss.top()[self.next].kmer <= q {
            let hit = self.kss.top()[self.next].kmer == q;
            self.step(hit);
        }
        Ok(())
    }

    pub fn push_all(&mut self, qs: &[PackedKmer]) -> Result<()> {
        qs.iter().try_for_each(|q| self.push(*q))
    }

    /// Processes the rest of the top table and closes every open group.
    pub fn finish(mut self) -> TaxHitTable {
        while self.next < self.kss.top().len() {
            self.step(false);
        }
        for l in 1..self.groups.len() {
            self.close(l);
        }
        self.hits
    }

    fn step(&mut self, hit: bool) {
        let levels = self.kss.k_levels();
        let entry = &self.kss.top()[self.next];
        // Deepest (shortest-k) level whose prefix changes here; all longer
        // levels change with it.
        let changed = (1..levels.len())
            .rev()
            .find(|&l| self.groups[l].key != Some(entry.kmer.prefix_unchecked(levels[l])));
        if let Some(top_changed) = changed {
            for l in 1..=top_changed {
                self.close(l);
            }
            for l in 1..=top_changed {
                let key = entry.kmer.prefix_unchecked(levels[l]);
                let queue = &mut self.pending[l];
                while queue.front().is_some_and(|p| *p < key) {
                    queue.pop_front();
                }
                let touched = queue.front() == Some(&key);
                if touched {
                    queue.pop_front();
                }
                let g = &mut self.groups[l];
                if g.key.is_some() {
                    self.cursors[l] += 1;
                }
                *g = Group {
                    key: Some(key),
                    touched,
                    ..Group::default()
                };
            }
        }
        if hit {
            self.hits.credit(0, entry.taxids.iter().copied());
        }
        if levels.len() > 1 {
            let parent = &mut self.groups[1];
            union(&mut parent.children, &entry.taxids);
            if hit {
                union(&mut parent.covered, &entry.taxids);
            }
        }
        self.next += 1;
        self.cursors[0] = self.next;
    }

    fn close(&mut self, l: usize) {
        let g = std::mem::take(&mut self.groups[l]);
        if g.key.is_none() {
            return;
        }
        let mut full = self.kss.slots(l)[self.cursors[l]].clone();
        union(&mut full, &g.children);
        if g.touched {
            self.hits.credit(l, minus(&full, &g.covered));
        }
        if l + 1 < self.groups.len() {
            let parent = &mut self.groups[l + 1];
            union(&mut parent.children, &full);
            if g.touched {
                union(&mut parent.covered, &full);
            }
        }
        // Keep the key so the cursor advances on the next prefix change.
        self.groups[l].key = g.key;
    }
}

/// Retrieval over KSS tables for a whole intersection set.
pub fn retrieve_taxids(inter: &[PackedKmer], kss: &KssTables) -> Result<TaxHitTable> {
    let mut r = Retriever::new(kss);
    r.push_all(inter)?;
    Ok(r.finish())
}

/// The crediting rule applied to per-query lookups: `lists[i][l]` is the
/// level-`l` taxid list of `inter[i]`'s prefix, if that prefix is sketched.
fn credit_lookups(inter: &[PackedKmer], k_levels: &[usize], lists: &[Vec<Option<&[TaxId]>>]) -> TaxHitTable {
    let mut hits = TaxHitTable::new(k_levels);
    for row in lists {
        if let Some(t) = row[0] {
            hits.credit(0, t.iter().copied());
        }
    }
    for (l, &k) in k_levels.iter().enumerate().skip(1) {
        let mut i = 0;
        while i < inter.len() {
            let x = inter[i].prefix_unchecked(k);
            let mut j = i;
            let mut covered = Vec::new();
            while j < inter.len() && inter[j].prefix_unchecked(k) == x {
                if let Some(t) = lists[j][l - 1] {
                    union(&mut covered, t);
                }
                j += 1;
            }
            if let Some(raw) = lists[i][l] {
                hits.credit(l, minus(raw, &covered));
            }
            i = j;
        }
    }
    hits
}

fn check_sorted(inter: &[PackedKmer], k_max: usize) -> Result<()> {
    if let Some(q) = inter.iter().find(|q| q.k() != k_max) {
        return Err(Error::KMismatch { reads: q.k(), db: k_max });
    }
    match inter.windows(2).position(|w| w[0] >= w[1]) {
        Some(i) => Err(Error::UnsortedInput { position: i + 1 }),
        None => Ok(()),
    }
}

/// Retrieval by one ternary-tree descent per intersecting k-mer.
pub fn retrieve_with_tree(inter: &[PackedKmer], tree: &TernaryTree) -> Result<TaxHitTable> {
    check_sorted(inter, tree.k_levels()[0])?;
    let lists: Vec<_> = inter.iter().map(|q| tree.lookup(q)).collect();
    Ok(credit_lookups(inter, tree.k_levels(), &lists))
}

/// Retrieval by a binary search per level in the flat tables.
pub fn retrieve_with_flat(inter: &[PackedKmer], flat: &FlatSketches) -> Result<TaxHitTable> {
    let k_levels = flat.k_levels();
    check_sorted(inter, k_levels[0])?;
    let lists: Vec<Vec<Option<&[TaxId]>>> = inter
        .iter()
        .map(|q| {
            k_levels
                .iter()
                .enumerate()
                .map(|(l, &k)| flat.lookup(l, &q.prefix_unchecked(k)))
                .collect()
        })
        .collect();
    Ok(credit_lookups(inter, &k_levels, &lists))
}
