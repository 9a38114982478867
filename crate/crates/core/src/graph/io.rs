//! JSON-Lines graph files.
//!
//! One JSON object per line, dispatched on a `"kind"` field: `user`, `post`,
//! or `friend`, plus an optional `provenance` record on the first line that
//! is skipped when loading. Records may arrive in any order; references are
//! resolved after the whole file is read.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::provenance::Provenance;

use super::{AttrLiteral, GraphBuilder, HeteroGraph, SlotValue, UserSpec};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserRec {
    id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    attrs: BTreeMap<String, AttrRec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gender: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    occupation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interests: Option<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AttrRec {
    Num(f64),
    Cat { cat: usize, card: usize },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostRec {
    id: String,
    author: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FriendRec {
    a: String,
    b: String,
}

fn parse_err(path: &Path, line: usize, msg: impl ToString) -> Error {
    Error::Parse { path: path.display().to_string(), line, msg: msg.to_string() }
}

/// Loads and validates a graph file. Numeric attribute slots are normalized
/// to `[-1, 1]` as part of loading.
pub fn load_graph(path: impl AsRef<Path>) -> Result<HeteroGraph> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut builder = GraphBuilder::new();

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(path, lineno, e))?;
        let kind = value
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| parse_err(path, lineno, "record has no \"kind\" field"))?
            .to_string();
        match kind.as_str() {
            "provenance" => {
                if lineno != 1 {
                    return Err(parse_err(path, lineno, "provenance record only allowed on line 1"));
                }
            }
            "user" => {
                let mut v = value;
                v.as_object_mut().unwrap().remove("kind");
                let rec: UserRec =
                    serde_json::from_value(v).map_err(|e| parse_err(path, lineno, e))?;
                builder.add_user(UserSpec {
                    id: rec.id,
                    attrs: rec
                        .attrs
                        .into_iter()
                        .map(|(name, a)| {
                            let lit = match a {
                                AttrRec::Num(x) => AttrLiteral::Num(x),
                                AttrRec::Cat { cat, card } => {
                                    AttrLiteral::Cat { value: cat, cardinality: card }
                                }
                            };
                            (name, lit)
                        })
                        .collect(),
                    gender: rec.gender,
                    occupation: rec.occupation,
                    interests: rec.interests,
                });
            }
            "post" => {
                let mut v = value;
                v.as_object_mut().unwrap().remove("kind");
                let rec: PostRec =
                    serde_json::from_value(v).map_err(|e| parse_err(path, lineno, e))?;
                let tokens = rec.text.split_whitespace().map(str::to_string).collect();
                builder.add_post(rec.id, rec.author, tokens);
            }
            "friend" => {
                let mut v = value;
                v.as_object_mut().unwrap().remove("kind");
                let rec: FriendRec =
                    serde_json::from_value(v).map_err(|e| parse_err(path, lineno, e))?;
                builder.add_friendship(rec.a, rec.b);
            }
            other => {
                return Err(parse_err(path, lineno, format!("unknown record kind {other:?}")));
            }
        }
    }

    builder.finish()
}

/// Serializes a record and splices the `"kind"` discriminator in front so
/// every line leads with it, independent of serde's map ordering.
fn tagged(kind: &str, rec: impl Serialize) -> Result<String> {
    let body = serde_json::to_string(&rec).map_err(|e| Error::Config(e.to_string()))?;
    debug_assert!(body.starts_with('{'));
    Ok(if body == "{}" {
        format!("{{\"kind\":\"{kind}\"}}")
    } else {
        format!("{{\"kind\":\"{kind}\",{}", &body[1..])
    })
}

/// Writes a graph as JSON-Lines: users, then posts, then friendships, in
/// internal id order. Numeric slots are written as stored (normalized), so
/// a save/load round trip reproduces the same graph. An optional provenance
/// record becomes the first line.
pub fn save_graph(
    graph: &HeteroGraph,
    path: impl AsRef<Path>,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);

    if let Some(prov) = provenance {
        writeln!(w, "{}", tagged("provenance", prov)?)?;
    }

    for (u, id) in graph.user_ids.iter().enumerate() {
        let attrs = graph
            .schema
            .names
            .iter()
            .zip(&graph.attrs[u].slots)
            .map(|(name, slot)| {
                let rec = match slot {
                    SlotValue::Numeric(x) => AttrRec::Num(*x),
                    SlotValue::Categorical(c) => {
                        let card = match &graph.schema.kinds[graph.schema.slot(name).unwrap()] {
                            super::SlotKind::Categorical { cardinality } => *cardinality,
                            super::SlotKind::Numeric => unreachable!("slot kind mismatch"),
                        };
                        AttrRec::Cat { cat: *c, card }
                    }
                };
                (name.clone(), rec)
            })
            .collect();
        let rec = UserRec {
            id: id.clone(),
            attrs,
            gender: graph.gender[u],
            occupation: graph.occupation[u],
            interests: graph.interests[u].as_ref().map(|s| s.iter().copied().collect()),
        };
        writeln!(w, "{}", tagged("user", rec)?)?;
    }

    for (p, id) in graph.post_ids.iter().enumerate() {
        let rec = PostRec {
            id: id.clone(),
            author: graph.user_ids[graph.post_author[p]].clone(),
            text: graph.post_tokens[p].join(" "),
        };
        writeln!(w, "{}", tagged("post", rec)?)?;
    }

    for &(a, b) in &graph.friendships {
        let rec = FriendRec { a: graph.user_ids[a].clone(), b: graph.user_ids[b].clone() };
        writeln!(w, "{}", tagged("friend", rec)?)?;
    }

    w.flush()?;
    Ok(())
}
