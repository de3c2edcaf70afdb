//! Random heap graphs and brute-force oracles.

use caseforge::heapkit::{
    compute_dominators, oql_execute, parse_hprof, retained_size, shallow_size, BasicType, DominatorTree, FieldValue,
    HeapBuilder, HeapGraph, ObjectId, Parent,
};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

#[derive(Debug, Clone)]
pub struct Shape {
    /// Per node: class size bucket and out-edges (indices).
    nodes: Vec<(usize, Vec<usize>)>,
    array_nodes: BTreeSet<usize>,
    roots: Vec<usize>,
}

pub fn shape(max_nodes: usize, max_out: usize) -> impl Strategy<Value = Shape> {
    (1..=max_nodes).prop_flat_map(move |n| {
        let node = (0..4usize, prop::collection::vec(0..n, 0..=max_out));
        (
            prop::collection::vec(node, n),
            prop::collection::btree_set(0..n, 0..=n / 4),
            prop::collection::vec(0..n, 1..=3.min(n)),
        )
            .prop_map(|(nodes, array_nodes, roots)| Shape { nodes, array_nodes, roots })
    })
}

/// Instances hold up to `max_out` references in fields; array nodes keep
/// theirs as elements.
pub fn build(s: &Shape) -> (HeapGraph, Vec<ObjectId>) {
    let mut b = HeapBuilder::new(1);
    let max_out = s.nodes.iter().map(|(_, e)| e.len()).max().unwrap_or(0).max(1);
    let names: Vec<String> = (0..max_out).map(|i| format!("r{i}")).collect();
    let fields: Vec<(&str, BasicType)> = names.iter().map(|n| (n.as_str(), BasicType::Object)).collect();
    let classes: Vec<ObjectId> = (0..4)
        .map(|k| b.class_sized(&format!("t.Node{k}"), None, &fields, 8 + 4 * max_out as u32 + 8 * k as u32))
        .collect();
    // ids are fixed up front so edges can point forward
    let ids: Vec<ObjectId> = (0..s.nodes.len()).map(|i| 0x10_0000 + 8 * i as ObjectId).collect();
    for (i, (k, out)) in s.nodes.iter().enumerate() {
        let targets: Vec<ObjectId> = out.iter().map(|&t| ids[t]).collect();
        if s.array_nodes.contains(&i) {
            let cls = classes[0];
            b.writer().object_array(ids[i], cls, &targets);
        } else {
            let values: Vec<(&str, FieldValue)> =
                names.iter().zip(&targets).map(|(n, &t)| (n.as_str(), FieldValue::Object(t))).collect();
            b.instance_with_id(ids[i], classes[*k], &values);
        }
    }
    for &r in &s.roots {
        b.root(ids[r]);
    }
    (parse_hprof(&b.build()).unwrap(), ids)
}

pub const SUPER: ObjectId = 0;

pub fn successors(g: &HeapGraph, n: ObjectId) -> Vec<ObjectId> {
    if n == SUPER {
        g.roots.iter().copied().collect()
    } else {
        g.references(n)
    }
}

pub fn reach(g: &HeapGraph, removed: Option<ObjectId>) -> HashSet<ObjectId> {
    let mut seen = HashSet::new();
    let mut q = VecDeque::from([SUPER]);
    while let Some(n) = q.pop_front() {
        for m in successors(g, n) {
            if Some(m) != removed && seen.insert(m) {
                q.push_back(m);
            }
        }
    }
    seen
}

pub struct Oracle {
    pub reachable: HashSet<ObjectId>,
    pub without: BTreeMap<ObjectId, HashSet<ObjectId>>,
}

impl Oracle {
    pub fn new(g: &HeapGraph) -> Self {
        let reachable = reach(g, None);
        let without = reachable.iter().map(|&d| (d, reach(g, Some(d)))).collect();
        Oracle { reachable, without }
    }

    pub fn dominates(&self, d: ObjectId, o: ObjectId) -> bool {
        d == SUPER || d == o || !self.without[&d].contains(&o)
    }

    /// The strict dominator that every other strict dominator dominates.
    pub fn idom(&self, o: ObjectId) -> Parent {
        let strict: Vec<ObjectId> = self.reachable.iter().copied().filter(|&d| d != o && self.dominates(d, o)).collect();
        let closest = strict.iter().copied().find(|&c| strict.iter().all(|&d| self.dominates(d, c)));
        closest.map_or(Parent::SuperRoot, Parent::Object)
    }

    pub fn size(&self, g: &HeapGraph, set: &HashSet<ObjectId>) -> u64 {
        set.iter().map(|&o| shallow_size(g, o).unwrap()).sum()
    }
}

pub fn walk(g: &HeapGraph, tree: &DominatorTree, path: &mut Vec<ObjectId>, on: &mut HashSet<ObjectId>, bad: &mut Vec<(ObjectId, Vec<ObjectId>)>) {
    let here = *path.last().unwrap();
    if here != SUPER {
        let ok = match tree.idom(here) {
            Some(Parent::SuperRoot) => true,
            Some(Parent::Object(d)) => path.contains(&d),
            None => false,
        };
        if !ok {
            bad.push((here, path.clone()));
        }
    }
    for m in successors(g, here) {
        if on.insert(m) {
            path.push(m);
            walk(g, tree, path, on, bad);
            path.pop();
            on.remove(&m);
        }
    }
}


#[derive(Debug, Clone)]
pub enum M {
    Str(String),
    Client { class: &'static str, timeout: i32, secure: bool, host: Option<String>, uri: Option<String> },
    Session { uid: i64, active: bool, token: Option<String> },
    Other,
}

pub struct Fixture {
    pub graph: HeapGraph,
    /// Every object the model created, including backing char arrays.
    pub objects: BTreeMap<ObjectId, M>,
    pub char_arrays: BTreeMap<ObjectId, String>,
}

const WORDS: &[&str] = &[
    "authentication", "token", "user", "user@example.com", "hello", "api.", "ya29.", "password", "Bearer ", "x",
];

fn phrase(rng: &mut StdRng) -> String {
    (0..rng.gen_range(1..4)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect()
}

pub fn fixture(seed: u64) -> Fixture {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut b = HeapBuilder::new(seed);
    let mut objects = BTreeMap::new();
    let mut char_arrays = BTreeMap::new();
    let string_cls = b.class("java.lang.String", None, &[("value", BasicType::Object), ("hash", BasicType::Int)]);
    let client = b.class(
        "org.apache.http.client.HttpClient",
        None,
        &[("timeout", BasicType::Int), ("secure", BasicType::Boolean), ("host", BasicType::Object)],
    );
    let get = b.class("org.apache.http.client.methods.HttpGet", Some(client), &[("uri", BasicType::Object)]);
    let session = b.class(
        "com.dropbox.android.Session",
        None,
        &[("uid", BasicType::Long), ("active", BasicType::Boolean), ("token", BasicType::Object)],
    );
    let other = b.class("com.example.Other", None, &[("n", BasicType::Int)]);

    let new_string = |b: &mut HeapBuilder, text: String, objects: &mut BTreeMap<ObjectId, M>, chars: &mut BTreeMap<ObjectId, String>| {
        let arr = b.char_array(&text);
        chars.insert(arr, text.clone());
        let s = b.instance(string_cls, &[("value", FieldValue::Object(arr))]);
        objects.insert(s, M::Str(text));
        s
    };

    for _ in 0..rng.gen_range(5..30) {
        let t = phrase(&mut rng);
        let s = new_string(&mut b, t, &mut objects, &mut char_arrays);
        b.root(s);
    }
    for _ in 0..rng.gen_range(1..8) {
        let is_get = rng.gen_bool(0.5);
        let host = rng.gen_bool(0.8).then(|| phrase(&mut rng));
        let uri = (is_get && rng.gen_bool(0.8)).then(|| if rng.gen_bool(0.3) { host.clone().unwrap_or_default() } else { phrase(&mut rng) });
        let host_id = host.clone().map(|h| new_string(&mut b, h, &mut objects, &mut char_arrays));
        let uri_id = uri.clone().map(|u| new_string(&mut b, u, &mut objects, &mut char_arrays));
        let timeout = rng.gen_range(0..90);
        let secure = rng.gen_bool(0.5);
        let mut vals = vec![
            ("timeout", FieldValue::Int(timeout)),
            ("secure", FieldValue::Boolean(secure)),
            ("host", FieldValue::Object(host_id.unwrap_or(0))),
        ];
        if is_get {
            vals.push(("uri", FieldValue::Object(uri_id.unwrap_or(0))));
        }
        let c = b.instance(if is_get { get } else { client }, &vals);
        let class = if is_get { "org.apache.http.client.methods.HttpGet" } else { "org.apache.http.client.HttpClient" };
        objects.insert(c, M::Client { class, timeout, secure, host, uri });
        b.root(c);
    }
    for _ in 0..rng.gen_range(0..6) {
        let token = rng.gen_bool(0.7).then(|| phrase(&mut rng));
        let token_id = token.clone().map(|t| new_string(&mut b, t, &mut objects, &mut char_arrays));
        let uid = rng.gen_range(0..2000);
        let active = rng.gen_bool(0.5);
        let s = b.instance(
            session,
            &[("uid", FieldValue::Long(uid)), ("active", FieldValue::Boolean(active)), ("token", FieldValue::Object(token_id.unwrap_or(0)))],
        );
        objects.insert(s, M::Session { uid, active, token });
        b.root(s);
    }
    for _ in 0..rng.gen_range(0..4) {
        let o = b.instance(other, &[("n", FieldValue::Int(1))]);
        objects.insert(o, M::Other);
    }
    Fixture { graph: parse_hprof(&b.build()).unwrap(), objects, char_arrays }
}

pub type Pred = fn(&Fixture, ObjectId, &M) -> bool;

fn is_client(m: &M) -> bool {
    matches!(m, M::Client { .. })
}

pub fn corpus() -> Vec<(&'static str, Pred)> {
    vec![
        (r#"SELECT s FROM java.lang.String s WHERE contains(s, "authentication")"#, |_, _, m| {
            matches!(m, M::Str(t) if t.contains("authentication"))
        }),
        (r#"SELECT s FROM java.lang.String s WHERE contains(s, "")"#, |_, _, m| matches!(m, M::Str(_))),
        ("SELECT x FROM org.apache.http.client.* x", |_, _, m| is_client(m)),
        ("SELECT x FROM org.apache.http.client.HttpClient x", |_, _, m| is_client(m)),
        ("SELECT x FROM org.apache.http.client.HttpClient x WHERE x.timeout > 30 AND x.secure = true", |_, _, m| {
            matches!(m, M::Client { timeout, secure: true, .. } if *timeout > 30)
        }),
        (r#"SELECT x.host FROM org.apache.http.client.* x WHERE startsWith(x.host, "api.")"#, |_, _, m| {
            matches!(m, M::Client { host: Some(h), .. } if h.starts_with("api."))
        }),
        ("select s from com.dropbox.android.Session s where s.uid >= 1000 or not s.active = true", |_, _, m| {
            matches!(m, M::Session { uid, active, .. } if *uid >= 1000 || !*active)
        }),
        (r#"SELECT s FROM com.dropbox.android.* s WHERE contains(s.token, "ya29")"#, |_, _, m| {
            matches!(m, M::Session { token: Some(t), .. } if t.contains("ya29"))
        }),
        (r#"SELECT s FROM java.lang.String s WHERE startsWith(s, "user") AND NOT contains(s, "example")"#, |_, _, m| {
            matches!(m, M::Str(t) if t.starts_with("user") && !t.contains("example"))
        }),
        ("SELECT a FROM char[] a WHERE a.length > 12", |f, id, _| {
            f.char_arrays.get(&id).is_some_and(|t| t.encode_utf16().count() > 12)
        }),
        ("SELECT o FROM * o WHERE o instanceof org.apache.http.client.HttpClient", |_, _, m| is_client(m)),
        ("SELECT s FROM com.dropbox.android.Session s WHERE s.token = null", |_, _, _| false),
        (r#"SELECT s FROM java.lang.String s WHERE s = "token""#, |_, _, m| matches!(m, M::Str(t) if t == "token")),
        ("SELECT x FROM org.apache.http.client.methods.HttpGet x WHERE x.uri != x.host", |_, _, m| {
            matches!(m, M::Client { uri: Some(u), host: Some(h), .. } if u != h)
        }),
        ("SELECT x FROM org.apache.http.client.HttpClient x WHERE NOT x instanceof org.apache.http.client.methods.HttpGet", |_, _, m| {
            matches!(m, M::Client { class: "org.apache.http.client.HttpClient", .. })
        }),
    ]
}


pub fn random_shape(rng: &mut StdRng, max_nodes: usize, max_out: usize) -> Shape {
    let n = rng.gen_range(1..=max_nodes);
    let nodes = (0..n)
        .map(|_| {
            let out = (0..rng.gen_range(0..=max_out)).map(|_| rng.gen_range(0..n)).collect();
            (rng.gen_range(0..4), out)
        })
        .collect();
    let array_nodes = (0..n / 4).map(|_| rng.gen_range(0..n)).collect();
    let roots = (0..rng.gen_range(1..=3.min(n))).map(|_| rng.gen_range(0..n)).collect();
    Shape { nodes, array_nodes, roots }
}

/// Compares every idom and retained size in `g` with the deletion oracle.
pub fn check_graph(g: &HeapGraph) -> Result<(), String> {
    let tree = compute_dominators(g);
    let oracle = Oracle::new(g);
    let total = oracle.size(g, &oracle.reachable);
    if tree.total_retained() != total {
        return Err(format!("total retained {} != reachable shallow {}", tree.total_retained(), total));
    }
    for id in g.object_ids() {
        if !oracle.reachable.contains(&id) {
            if !tree.unreachable().contains(&id) || retained_size(g, &tree, id).is_ok() {
                return Err(format!("{id:#x} should be unreachable"));
            }
            continue;
        }
        let want = oracle.idom(id);
        if tree.idom(id) != Some(want) {
            return Err(format!("idom of {id:#x}: got {:?}, oracle {want:?}", tree.idom(id)));
        }
        let after = oracle.size(g, &oracle.without[&id]);
        let got = retained_size(g, &tree, id).map_err(|e| e.to_string())?;
        if got != total - after {
            return Err(format!("retained of {id:#x}: got {got}, oracle {}", total - after));
        }
    }
    Ok(())
}

/// Runs the whole OQL corpus on one fixture; returns the number of queries.
pub fn check_oql(seed: u64) -> Result<usize, String> {
    let f = fixture(seed);
    let all: BTreeMap<ObjectId, M> =
        f.objects.clone().into_iter().chain(f.char_arrays.keys().map(|&id| (id, M::Other))).collect();
    if all.len() != f.graph.object_count() {
        return Err(format!("seed {seed}: model has {} objects, graph {}", all.len(), f.graph.object_count()));
    }
    let corpus = corpus();
    for (q, pred) in &corpus {
        let got: Vec<ObjectId> =
            oql_execute(&f.graph, q).map_err(|e| format!("{q}: {e}"))?.iter().map(|r| r.id).collect();
        let want: Vec<ObjectId> = all.iter().filter(|(id, m)| pred(&f, **id, m)).map(|(id, _)| *id).collect();
        if got != want {
            return Err(format!("seed {seed}: {q}: got {got:?}, want {want:?}"));
        }
    }
    Ok(corpus.len())
}
