//! Heterogeneous social graph model.
//!
//! A [`HeteroGraph`] holds two node kinds (users, posts), friendship edges
//! between users, one authorship edge per post, per-user attribute vectors
//! under a shared schema, and optional per-user label fields (interest set,
//! gender, occupation). Construction goes through [`GraphBuilder`], which
//! checks referential integrity and normalizes numeric attributes.

pub mod io;
pub mod simhash;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedTree;
use crate::Real;

pub use io::{load_graph, save_graph};
pub use simhash::{encode_screen_name, simhash64};

/// Kind of one attribute slot, shared by all users of a graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotKind {
    Numeric,
    Categorical { cardinality: usize },
}

/// Slot names and kinds, sorted by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttributeSchema {
    pub names: Vec<String>,
    pub kinds: Vec<SlotKind>,
}

impl AttributeSchema {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One attribute value; numeric values are kept normalized to `[-1, 1]`
/// inside loaded graphs (perturbation may leave a wider range in memory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SlotValue {
    Numeric(Real),
    Categorical(usize),
}

/// Per-user attribute vector, parallel to the schema's slots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttributeVector {
    pub slots: Vec<SlotValue>,
}

/// Attribute literal as it appears in input files, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub enum AttrLiteral {
    Num(f64),
    Cat { value: usize, cardinality: usize },
}

/// One user record handed to the builder.
#[derive(Debug, Clone, Default)]
pub struct UserSpec {
    pub id: String,
    pub attrs: BTreeMap<String, AttrLiteral>,
    pub gender: Option<u8>,
    pub occupation: Option<usize>,
    pub interests: Option<Vec<usize>>,
}

/// Heterogeneous user/post graph. Fields are crate-internal; mutation from
/// outside goes through the builder so the invariants below hold:
/// ids are unique per node kind, friendship edges are simple and stored with
/// `a < b` in sorted order, every post has exactly one existing author, and
/// attribute vectors all match the schema.
#[derive(Debug, Clone)]
pub struct HeteroGraph {
    pub(crate) user_ids: Vec<String>,
    pub(crate) post_ids: Vec<String>,
    pub(crate) schema: AttributeSchema,
    pub(crate) attrs: Vec<AttributeVector>,
    pub(crate) friendships: Vec<(usize, usize)>,
    pub(crate) post_author: Vec<usize>,
    pub(crate) post_tokens: Vec<Vec<String>>,
    pub(crate) interests: Vec<Option<BTreeSet<usize>>>,
    pub(crate) gender: Vec<Option<u8>>,
    pub(crate) occupation: Vec<Option<usize>>,
    /// Raw (min, max) seen per numeric slot before normalization; loader
    /// bookkeeping, not graph content.
    pub(crate) norm_stats: Vec<Option<(f64, f64)>>,
    user_index: HashMap<String, usize>,
    post_index: HashMap<String, usize>,
}

impl HeteroGraph {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_posts(&self) -> usize {
        self.post_ids.len()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn post_ids(&self) -> &[String] {
        &self.post_ids
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    pub fn attrs(&self) -> &[AttributeVector] {
        &self.attrs
    }

    pub fn friendships(&self) -> &[(usize, usize)] {
        &self.friendships
    }

    pub fn post_author(&self) -> &[usize] {
        &self.post_author
    }

    pub fn post_tokens(&self) -> &[Vec<String>] {
        &self.post_tokens
    }

    pub fn interests(&self) -> &[Option<BTreeSet<usize>>] {
        &self.interests
    }

    pub fn gender(&self) -> &[Option<u8>] {
        &self.gender
    }

    pub fn occupation(&self) -> &[Option<usize>] {
        &self.occupation
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn post_index(&self, id: &str) -> Option<usize> {
        self.post_index.get(id).copied()
    }

    /// Authorship edges as (user, post) pairs in post order.
    pub fn write_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.post_author.iter().copied().enumerate().map(|(p, u)| (u, p))
    }

    /// Size of the interest label universe: one past the largest label seen.
    pub fn num_interest_labels(&self) -> usize {
        self.interests
            .iter()
            .flatten()
            .flat_map(|s| s.iter().copied())
            .max()
            .map_or(0, |m| m + 1)
    }

    pub fn num_occupations(&self) -> usize {
        self.occupation.iter().flatten().copied().max().map_or(0, |m| m + 1)
    }

    /// Structural and label equality; ignores normalization bookkeeping.
    pub fn content_eq(&self, other: &Self) -> bool {
        self.user_ids == other.user_ids
            && self.post_ids == other.post_ids
            && self.schema == other.schema
            && self.attrs == other.attrs
            && self.friendships == other.friendships
            && self.post_author == other.post_author
            && self.post_tokens == other.post_tokens
            && self.interests == other.interests
            && self.gender == other.gender
            && self.occupation == other.occupation
    }

    /// Replaces attribute vectors wholesale; lengths and slot kinds must
    /// already agree with the schema.
    pub(crate) fn set_attrs(&mut self, attrs: Vec<AttributeVector>) {
        debug_assert_eq!(attrs.len(), self.n_users());
        self.attrs = attrs;
    }

    /// Re-applies load-time normalization, pulling numeric slots back into
    /// `[-1, 1]` after perturbation widened their range.
    pub fn renormalize_numeric(&mut self) {
        self.norm_stats = normalize_attrs(&mut self.attrs, &self.schema.kinds);
    }

    /// Replaces the friendship edge set; pairs must be simple user edges.
    pub(crate) fn set_friendships(&mut self, mut edges: Vec<(usize, usize)>) {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
            debug_assert!(e.0 < e.1 && e.1 < self.n_users());
        }
        edges.sort_unstable();
        edges.dedup();
        self.friendships = edges;
    }
}

/// Accumulates records and produces a validated [`HeteroGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    users: Vec<UserSpec>,
    posts: Vec<(String, String, Vec<String>)>,
    friends: Vec<(String, String)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_user(&mut self, user: UserSpec) -> &mut Self {
        self.users.push(user);
        self
    }

    pub fn add_post(
        &mut self,
        id: impl Into<String>,
        author: impl Into<String>,
        tokens: Vec<String>,
    ) -> &mut Self {
        self.posts.push((id.into(), author.into(), tokens));
        self
    }

    pub fn add_friendship(&mut self, a: impl Into<String>, b: impl Into<String>) -> &mut Self {
        self.friends.push((a.into(), b.into()));
        self
    }

    pub fn finish(self) -> Result<HeteroGraph> {
        let mut user_ids = Vec::with_capacity(self.users.len());
        let mut user_index = HashMap::with_capacity(self.users.len());
        for u in &self.users {
            if user_index.insert(u.id.clone(), user_ids.len()).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate user id {:?}", u.id)));
            }
            user_ids.push(u.id.clone());
        }

        // Slot names and kinds come from the first user; everyone else must
        // match them exactly.
        let schema = match self.users.first() {
            None => AttributeSchema::default(),
            Some(first) => {
                let mut names = Vec::new();
                let mut kinds = Vec::new();
                for (name, lit) in &first.attrs {
                    names.push(name.clone());
                    kinds.push(match lit {
                        AttrLiteral::Num(_) => SlotKind::Numeric,
                        AttrLiteral::Cat { cardinality, .. } => {
                            SlotKind::Categorical { cardinality: *cardinality }
                        }
                    });
                }
                AttributeSchema { names, kinds }
            }
        };

        for u in &self.users {
            if u.attrs.len() != schema.len() {
                return Err(Error::SchemaMismatch {
                    id: u.id.clone(),
                    msg: format!("expected {} attribute slots, found {}", schema.len(), u.attrs.len()),
                });
            }
            for ((name, lit), (want_name, want_kind)) in
                u.attrs.iter().zip(schema.names.iter().zip(&schema.kinds))
            {
                if name != want_name {
                    return Err(Error::SchemaMismatch {
                        id: u.id.clone(),
                        msg: format!("slot {name:?} does not match schema slot {want_name:?}"),
                    });
                }
                match (lit, want_kind) {
                    (AttrLiteral::Num(x), SlotKind::Numeric) => {
                        if !x.is_finite() {
                            return Err(Error::SchemaMismatch {
                                id: u.id.clone(),
                                msg: format!("slot {name:?} is not finite"),
                            });
                        }
                    }
                    (AttrLiteral::Cat { value, cardinality }, SlotKind::Categorical { cardinality: want }) => {
                        if cardinality != want {
                            return Err(Error::SchemaMismatch {
                                id: u.id.clone(),
                                msg: format!("slot {name:?} cardinality {cardinality} != {want}"),
                            });
                        }
                        if value >= cardinality {
                            return Err(Error::SchemaMismatch {
                                id: u.id.clone(),
                                msg: format!("slot {name:?} value {value} out of range 0..{cardinality}"),
                            });
                        }
                    }
                    _ => {
                        return Err(Error::SchemaMismatch {
                            id: u.id.clone(),
                            msg: format!("slot {name:?} kind does not match schema"),
                        });
                    }
                }
            }
            if let Some(g) = u.gender {
                if g > 1 {
                    return Err(Error::InvalidGraph(format!("user {:?} gender {g} not in {{0,1}}", u.id)));
                }
            }
        }

        let mut attrs: Vec<AttributeVector> = self
            .users
            .iter()
            .map(|u| AttributeVector {
                slots: u
                    .attrs
                    .values()
                    .map(|lit| match lit {
                        AttrLiteral::Num(x) => SlotValue::Numeric(*x),
                        AttrLiteral::Cat { value, .. } => SlotValue::Categorical(*value),
                    })
                    .collect(),
            })
            .collect();
        let norm_stats = normalize_attrs(&mut attrs, &schema.kinds);

        let mut post_ids = Vec::with_capacity(self.posts.len());
        let mut post_index = HashMap::with_capacity(self.posts.len());
        let mut post_author = Vec::with_capacity(self.posts.len());
        let mut post_tokens = Vec::with_capacity(self.posts.len());
        for (id, author, tokens) in self.posts {
            if post_index.insert(id.clone(), post_ids.len()).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate post id {id:?}")));
            }
            let a = *user_index.get(&author).ok_or_else(|| Error::DanglingRef {
                record: format!("post {id:?}"),
                msg: format!("author {author:?} is not a user"),
            })?;
            post_ids.push(id);
            post_author.push(a);
            post_tokens.push(tokens);
        }

        let mut friendships = Vec::with_capacity(self.friends.len());
        for (a, b) in self.friends {
            let ia = *user_index.get(&a).ok_or_else(|| Error::DanglingRef {
                record: format!("friendship {a:?} -- {b:?}"),
                msg: format!("user {a:?} does not exist"),
            })?;
            let ib = *user_index.get(&b).ok_or_else(|| Error::DanglingRef {
                record: format!("friendship {a:?} -- {b:?}"),
                msg: format!("user {b:?} does not exist"),
            })?;
            if ia == ib {
                return Err(Error::InvalidGraph(format!("friendship self-loop at {a:?}")));
            }
            friendships.push((ia.min(ib), ia.max(ib)));
        }
        friendships.sort_unstable();
        if friendships.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph("duplicate friendship edge".into()));
        }

        let interests = self.users.iter().map(|u| {
            u.interests.as_ref().map(|v| v.iter().copied().collect::<BTreeSet<usize>>())
        });

        Ok(HeteroGraph {
            interests: interests.collect(),
            gender: self.users.iter().map(|u| u.gender).collect(),
            occupation: self.users.iter().map(|u| u.occupation).collect(),
            user_ids,
            post_ids,
            schema,
            attrs,
            friendships,
            post_author,
            post_tokens,
            norm_stats,
            user_index,
            post_index,
        })
    }
}

/// Per numeric slot, affinely maps the raw range onto [-1, 1]. A slot
/// already spanning exactly [-1, 1] is left untouched so that saving and
/// reloading is the identity; a constant slot collapses to 0. Returns the
/// raw (min, max) seen per numeric slot.
pub(crate) fn normalize_attrs(
    attrs: &mut [AttributeVector],
    kinds: &[SlotKind],
) -> Vec<Option<(f64, f64)>> {
    let mut stats = vec![None; kinds.len()];
    for (s, kind) in kinds.iter().enumerate() {
        if *kind != SlotKind::Numeric {
            continue;
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for av in attrs.iter() {
            if let SlotValue::Numeric(x) = av.slots[s] {
                min = min.min(x);
                max = max.max(x);
            }
        }
        stats[s] = Some((min, max));
        if min == -1.0 && max == 1.0 {
            continue;
        }
        for av in attrs.iter_mut() {
            if let SlotValue::Numeric(x) = &mut av.slots[s] {
                *x = if min == max { 0.0 } else { 2.0 * (*x - min) / (max - min) - 1.0 };
            }
        }
    }
    stats
}

/// Friendship-only view of the user side: `n` nodes, simple undirected
/// edges stored as `a < b` in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl UserGraph {
    pub fn new(n: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
            if e.0 == e.1 {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", e.0)));
            }
            if e.1 >= n {
                return Err(Error::InvalidGraph(format!("edge ({}, {}) out of range 0..{n}", e.0, e.1)));
            }
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        if edges.len() != before {
            return Err(Error::InvalidGraph("duplicate edge".into()));
        }
        Ok(Self { n, edges })
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search(&key).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }
}

/// Projection of a [`HeteroGraph`] onto its users and friendship edges.
pub fn extract_user_graph(graph: &HeteroGraph) -> UserGraph {
    UserGraph { n: graph.n_users(), edges: graph.friendships.clone() }
}

/// Train/test partition of the labeled users, by internal user index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits users that carry an interest label set into train and test.
///
/// `ratio` is the train fraction; the train size is `round(ratio * n)`.
/// The same `(graph, ratio, seed)` always yields the same split.
pub fn split_labels(graph: &HeteroGraph, ratio: f64, seed: u64) -> Result<LabelSplit> {
    let labeled: Vec<usize> =
        (0..graph.n_users()).filter(|&u| graph.interests[u].is_some()).collect();
    split_indices(labeled, ratio, seed)
}

/// Shared splitting kernel over an arbitrary labeled-user list; same
/// shuffle discipline for every task so splits differ only by the list.
pub(crate) fn split_indices(mut labeled: Vec<usize>, ratio: f64, seed: u64) -> Result<LabelSplit> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("train ratio {ratio} outside [0, 1]")));
    }
    if labeled.is_empty() {
        return Err(Error::NoLabeledUsers);
    }
    let mut rng = SeedTree::new(seed).stream("label-split", &[]);
    shuffle(&mut labeled, &mut rng);
    let n_train = ((ratio * labeled.len() as f64).round() as usize).min(labeled.len());
    let mut train = labeled[..n_train].to_vec();
    let mut test = labeled[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(LabelSplit { train, test })
}

/// Fisher-Yates with our own index draws so the result depends only on the
/// stream, not on `rand`'s slice shuffle implementation.
pub(crate) fn shuffle<T, R: rand::Rng>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
