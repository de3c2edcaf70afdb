use super::graph::{shallow_size, HeapError, HeapGraph, ObjectId};
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};

/// Immediate dominator of a reachable object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Parent {
    /// The synthetic node above every GC root.
    SuperRoot,
    Object(ObjectId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DominatorTree {
    idom: BTreeMap<ObjectId, Parent>,
    children: BTreeMap<Parent, Vec<ObjectId>>,
    retained: BTreeMap<ObjectId, u64>,
    total: u64,
    unreachable: Vec<ObjectId>,
}

impl DominatorTree {
    pub fn idom(&self, id: ObjectId) -> Option<Parent> {
        self.idom.get(&id).copied()
    }

    /// Dominator-tree children, ascending by id.
    pub fn children(&self, p: Parent) -> &[ObjectId] {
        self.children.get(&p).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.idom.contains_key(&id)
    }

    pub fn reachable(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.idom.keys().copied()
    }

    pub fn unreachable(&self) -> &[ObjectId] {
        &self.unreachable
    }

    /// Retained size of the super-root: all reachable shallow sizes.
    pub fn total_retained(&self) -> u64 {
        self.total
    }
}

/// Builds the dominator tree over the reference graph rooted at a synthetic
/// super-root with an edge to every GC root.
///
/// Uses the iterative intersection scheme of Cooper, Harvey and Kennedy
/// over a reverse-postorder numbering.
pub fn compute_dominators(graph: &HeapGraph) -> DominatorTree {
    // node 0 is the super-root
    let mut index: HashMap<ObjectId, usize> = HashMap::new();
    let mut ids: Vec<ObjectId> = vec![0];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new()];
    let mut preorder = Vec::new();
    let mut postorder = Vec::new();

    let roots = graph.object_roots();
    let mut stack: Vec<(usize, usize)> = vec![(0, 0)];
    preorder.push(0);
    let intern = |id: ObjectId, index: &mut HashMap<ObjectId, usize>, ids: &mut Vec<ObjectId>, succ: &mut Vec<Vec<usize>>| {
        *index.entry(id).or_insert_with(|| {
            ids.push(id);
            succ.push(Vec::new());
            ids.len() - 1
        })
    };
    let edges_of = |n: usize, index: &mut HashMap<ObjectId, usize>, ids: &mut Vec<ObjectId>, succ: &mut Vec<Vec<usize>>| {
        let targets = if n == 0 { roots.clone() } else { graph.references(ids[n]) };
        let s: Vec<usize> = targets.into_iter().map(|t| intern(t, index, ids, succ)).collect();
        succ[n] = s;
    };
    edges_of(0, &mut index, &mut ids, &mut succ);
    let mut visited = vec![true];
    while let Some(&mut (n, ref mut next)) = stack.last_mut() {
        if *next < succ[n].len() {
            let m = succ[n][*next];
            *next += 1;
            if visited.len() < ids.len() {
                visited.resize(ids.len(), false);
            }
            if !visited[m] {
                visited[m] = true;
                preorder.push(m);
                edges_of(m, &mut index, &mut ids, &mut succ);
                stack.push((m, 0));
            }
        } else {
            postorder.push(n);
            stack.pop();
        }
    }

    let n = ids.len();
    let mut po = vec![0usize; n];
    for (i, &v) in postorder.iter().enumerate() {
        po[v] = i;
    }
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, s) in succ.iter().enumerate() {
        for &w in s {
            preds[w].push(v);
        }
    }

    const UNDEF: usize = usize::MAX;
    let mut idom = vec![UNDEF; n];
    idom[0] = 0;
    let rpo: Vec<usize> = postorder.iter().rev().copied().collect();
    let mut changed = true;
    while changed {
        changed = false;
        for &b in rpo.iter().skip(1) {
            let mut new = UNDEF;
            for &p in &preds[b] {
                if idom[p] == UNDEF {
                    continue;
                }
                new = if new == UNDEF { p } else { intersect(&idom, &po, p, new) };
            }
            if idom[b] != new {
                idom[b] = new;
                changed = true;
            }
        }
    }

    let parent_of = |v: usize| if idom[v] == 0 { Parent::SuperRoot } else { Parent::Object(ids[idom[v]]) };
    let mut tree = DominatorTree {
        idom: BTreeMap::new(),
        children: BTreeMap::new(),
        retained: BTreeMap::new(),
        total: 0,
        unreachable: Vec::new(),
    };
    let mut retained: Vec<u64> = ids.iter().map(|&id| shallow_size(graph, id).unwrap_or(0)).collect();
    retained[0] = 0;
    // a dominator is a DFS ancestor, so reverse preorder visits children first
    for &v in preorder.iter().skip(1).rev() {
        let r = retained[v];
        retained[idom[v]] += r;
    }
    for &v in preorder.iter().skip(1) {
        let p = parent_of(v);
        tree.idom.insert(ids[v], p);
        tree.children.entry(p).or_default().push(ids[v]);
        tree.retained.insert(ids[v], retained[v]);
    }
    for c in tree.children.values_mut() {
        c.sort_unstable();
    }
    tree.total = retained[0];
    tree.unreachable = graph.object_ids().into_iter().filter(|id| !tree.idom.contains_key(id)).collect();
    tree
}

fn intersect(idom: &[usize], po: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while po[a] < po[b] {
            a = idom[a];
        }
        while po[b] < po[a] {
            b = idom[b];
        }
    }
    a
}

/// Shallow size of `id` plus everything it dominates.
pub fn retained_size(graph: &HeapGraph, tree: &DominatorTree, id: ObjectId) -> Result<u64, HeapError> {
    if !graph.is_object(id) {
        return Err(HeapError::UnknownId(id));
    }
    tree.retained.get(&id).copied().ok_or(HeapError::Unreachable(id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortBy {
    Shallow,
    Retained,
}

impl std::str::FromStr for SortBy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "shallow" => Ok(SortBy::Shallow),
            "retained" => Ok(SortBy::Retained),
            _ => Err(format!("expected shallow or retained, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ObjectSummary {
    pub id: ObjectId,
    pub class: String,
    pub shallow: u64,
    pub retained: u64,
}

/// The sorted dominator view: the `n` largest reachable objects, optionally
/// limited to classes under a name prefix. Ties go to the lower id.
pub fn top_objects(
    graph: &HeapGraph,
    tree: &DominatorTree,
    n: usize,
    by: SortBy,
    class_prefix: Option<&str>,
) -> Vec<ObjectSummary> {
    let mut rows: Vec<ObjectSummary> = tree
        .reachable()
        .filter_map(|id| {
            let class = graph.class_of(id)?;
            if class_prefix.is_some_and(|p| !class.starts_with(p)) {
                return None;
            }
            Some(ObjectSummary {
                id,
                class,
                shallow: shallow_size(graph, id).ok()?,
                retained: tree.retained[&id],
            })
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &ObjectSummary| match by {
            SortBy::Shallow => r.shallow,
            SortBy::Retained => r.retained,
        };
        key(b).cmp(&key(a)).then(a.id.cmp(&b.id))
    });
    rows.truncate(n);
    rows
}
