//! OBO flat-file ingestion and cross-database graph merging.
//!
//! Only `[Term]` stanzas are read. `is_a` is the sole relationship that
//! produces edges; `synonym` lines are carried as metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTerm {
    pub id: String,
    pub name: String,
    #[serde(rename = "def")]
    pub definition: Option<String>,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub graph: String,
    pub db: String,
}

impl RawTerm {
    pub fn has_definition(&self) -> bool {
        self.definition.as_deref().is_some_and(|d| !d.trim().is_empty())
    }
}

/// A stanza that could not be turned into a [`RawTerm`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub graph: String,
    pub db: String,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphManifest {
    pub graph_name: String,
    pub source_files: Vec<PathBuf>,
    pub term_count: usize,
    pub defined_fraction: f64,
}

impl GraphManifest {
    pub fn from_terms(graph_name: &str, source_files: Vec<PathBuf>, terms: &[RawTerm]) -> Self {
        let defined = terms.iter().filter(|t| t.has_definition()).count();
        Self {
            graph_name: graph_name.to_string(),
            source_files,
            term_count: terms.len(),
            defined_fraction: if terms.is_empty() {
                0.0
            } else {
                defined as f64 / terms.len() as f64
            },
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct ParseOutput {
    pub terms: Vec<RawTerm>,
    pub rejects: Vec<Reject>,
}

#[derive(Default)]
struct Stanza {
    start_line: usize,
    id: Option<String>,
    name: Option<String>,
    definition: Option<String>,
    synonyms: Vec<String>,
    parents: Vec<String>,
    obsolete: bool,
}

/// Parses one OBO stream. Malformed `[Term]` stanzas land in `rejects`;
/// only an unreadable stream is an error.
pub fn parse_obo<R: BufRead>(reader: R, graph: &str, db: &str) -> Result<ParseOutput> {
    let mut out = ParseOutput::default();
    let mut current: Option<Stanza> = None;
    let mut in_term = false;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') && line.ends_with(']') {
            if let Some(st) = current.take() {
                finish_stanza(st, graph, db, &mut out);
            }
            in_term = line == "[Term]";
            if in_term {
                current = Some(Stanza {
                    start_line: lineno + 1,
                    ..Stanza::default()
                });
            }
            continue;
        }
        let Some(st) = current.as_mut().filter(|_| in_term) else {
            continue;
        };
        let Some((tag, value)) = line.split_once(':') else {
            continue;
        };
        let value = value.trim();
        match tag.trim() {
            "id" => st.id = Some(value.to_string()),
            "name" => st.name = Some(value.to_string()),
            "def" => st.definition = quoted_payload(value),
            "synonym" => {
                if let Some(s) = quoted_payload(value) {
                    st.synonyms.push(s);
                }
            }
            "is_a" => {
                let target = value.split('!').next().unwrap_or("").trim();
                // trailing qualifiers like `{source="x"}` are not part of the id
                let target = target.split_whitespace().next().unwrap_or("");
                if !target.is_empty() {
                    st.parents.push(target.to_string());
                }
            }
            "is_obsolete" => st.obsolete = value.eq_ignore_ascii_case("true"),
            _ => {}
        }
    }
    if let Some(st) = current.take() {
        finish_stanza(st, graph, db, &mut out);
    }
    Ok(out)
}

fn finish_stanza(st: Stanza, graph: &str, db: &str, out: &mut ParseOutput) {
    if st.obsolete {
        return;
    }
    let id = st.id.filter(|s| !s.is_empty());
    let name = st.name.filter(|s| !s.is_empty());
    match (id, name) {
        (Some(id), Some(name)) => out.terms.push(RawTerm {
            id,
            name,
            definition: st.definition,
            synonyms: st.synonyms,
            parents: st.parents,
            graph: graph.to_string(),
            db: db.to_string(),
        }),
        (id, name) => {
            let missing = match (id.is_none(), name.is_none()) {
                (true, true) => "missing id and name",
                (true, false) => "missing id",
                _ => "missing name",
            };
            out.rejects.push(Reject {
                graph: graph.to_string(),
                db: db.to_string(),
                line: st.start_line,
                reason: missing.to_string(),
            });
        }
    }
}

/// Extracts the text between the first pair of unescaped double quotes,
/// dropping whatever follows (provenance brackets, scope keywords).
fn quoted_payload(value: &str) -> Option<String> {
    let rest = value.strip_prefix('"')?;
    let mut out = String::new();
    let mut chars = rest.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                if let Some(next) = chars.next() {
                    out.push(next);
                }
            }
            '"' => return Some(out),
            _ => out.push(c),
        }
    }
    None
}

fn escape_quoted(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Canonical stanza form. Parsing the result yields the same term list.
pub fn to_obo(terms: &[RawTerm]) -> String {
    let mut s = String::from("format-version: 1.2\n");
    for t in terms {
        s.push_str("\n[Term]\n");
        let _ = writeln!(s, "id: {}", t.id);
        let _ = writeln!(s, "name: {}", t.name);
        if let Some(d) = &t.definition {
            let _ = writeln!(s, "def: \"{}\" []", escape_quoted(d));
        }
        for syn in &t.synonyms {
            let _ = writeln!(s, "synonym: \"{}\" EXACT []", escape_quoted(syn));
        }
        for p in &t.parents {
            let _ = writeln!(s, "is_a: {p}");
        }
    }
    s
}

/// Lowercased file stem with every extension removed.
pub fn normalize_graph_name(name: &str) -> String {
    let base = Path::new(name)
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| name.to_string());
    let stem = base.split('.').next().unwrap_or(&base);
    stem.trim().to_lowercase()
}

/// Fixed conflict-resolution order: OBO, then BioPortal, then OLS, then anything else.
pub fn db_priority(db: &str) -> u8 {
    match db.to_lowercase().as_str() {
        "obo" => 0,
        "bioportal" => 1,
        "ols" => 2,
        _ => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConflict {
    pub graph: String,
    pub term_id: String,
    pub kept_db: String,
    pub dropped_db: String,
}

#[derive(Debug, Default, Clone)]
pub struct MergeOutcome {
    pub graphs: Vec<(GraphManifest, Vec<RawTerm>)>,
    pub conflicts: Vec<MergeConflict>,
}

/// Unions graphs whose normalized names match. Within a merged graph each
/// term id appears once; a defined record beats an undefined one, and two
/// different definitions resolve by database priority.
pub fn merge_graphs(graphs: Vec<(GraphManifest, Vec<RawTerm>)>) -> MergeOutcome {
    let mut groups: BTreeMap<String, Vec<(GraphManifest, Vec<RawTerm>)>> = BTreeMap::new();
    for (manifest, terms) in graphs {
        groups
            .entry(normalize_graph_name(&manifest.graph_name))
            .or_default()
            .push((manifest, terms));
    }

    let mut outcome = MergeOutcome::default();
    for (name, mut members) in groups {
        members.sort_by(|a, b| {
            let pa = a.1.first().map(|t| db_priority(&t.db)).unwrap_or(3);
            let pb = b.1.first().map(|t| db_priority(&t.db)).unwrap_or(3);
            pa.cmp(&pb).then_with(|| a.0.source_files.cmp(&b.0.source_files))
        });
        let mut order: Vec<String> = Vec::new();
        let mut by_id: BTreeMap<String, RawTerm> = BTreeMap::new();
        let mut sources = Vec::new();
        for (manifest, terms) in members {
            sources.extend(manifest.source_files);
            for mut term in terms {
                term.graph = name.clone();
                match by_id.get_mut(&term.id) {
                    None => {
                        order.push(term.id.clone());
                        by_id.insert(term.id.clone(), term);
                    }
                    Some(existing) => {
                        union_into(&mut existing.parents, &term.parents);
                        union_into(&mut existing.synonyms, &term.synonyms);
                        match (existing.has_definition(), term.has_definition()) {
                            (false, true) => {
                                existing.definition = term.definition;
                                existing.db = term.db;
                            }
                            (true, true) if existing.definition != term.definition => {
                                log::warn!(
                                    "conflicting definitions for {} in {name}: keeping {}",
                                    term.id,
                                    existing.db
                                );
                                outcome.conflicts.push(MergeConflict {
                                    graph: name.clone(),
                                    term_id: term.id.clone(),
                                    kept_db: existing.db.clone(),
                                    dropped_db: term.db.clone(),
                                });
                            }
                            _ => {}
                        }
                    }
                }
            }
        }
        let terms: Vec<RawTerm> = order.into_iter().filter_map(|id| by_id.remove(&id)).collect();
        let manifest = GraphManifest::from_terms(&name, sources, &terms);
        outcome.graphs.push((manifest, terms));
    }
    outcome
}

fn union_into(dst: &mut Vec<String>, src: &[String]) {
    for s in src {
        if !dst.contains(s) {
            dst.push(s.clone());
        }
    }
}

/// Reads every `.obo` file under `dir`. Files inside a subdirectory take the
/// subdirectory name as their database; top-level files are attributed to `obo`.
pub fn ingest_dir(dir: &Path) -> Result<(MergeOutcome, Vec<Reject>)> {
    let mut files = Vec::new();
    collect_obo_files(dir, None, &mut files)?;
    files.sort();

    let parsed: Vec<Result<(GraphManifest, Vec<RawTerm>, Vec<Reject>)>> = {
        use rayon::prelude::*;
        files
            .par_iter()
            .map(|(path, db)| {
                let graph = normalize_graph_name(&path.to_string_lossy());
                let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let out = parse_obo(std::io::BufReader::new(f), &graph, db)
                    .map_err(|e| match e {
                        Error::Stream(src) => Error::io(path, src),
                        other => other,
                    })?;
                let manifest = GraphManifest::from_terms(&graph, vec![path.clone()], &out.terms);
                Ok((manifest, out.terms, out.rejects))
            })
            .collect()
    };

    let mut graphs = Vec::new();
    let mut rejects = Vec::new();
    for p in parsed {
        let (m, t, r) = p?;
        graphs.push((m, t));
        rejects.extend(r);
    }
    Ok((merge_graphs(graphs), rejects))
}

fn collect_obo_files(dir: &Path, db: Option<&str>, out: &mut Vec<(PathBuf, String)>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            if db.is_none() {
                let name = entry.file_name().to_string_lossy().to_lowercase();
                collect_obo_files(&path, Some(&name), out)?;
            }
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("obo")) {
            out.push((path, db.unwrap_or("obo").to_string()));
        }
    }
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item)?);
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> ParseOutput {
        parse_obo(s.as_bytes(), "g", "obo").unwrap()
    }

    #[test]
    fn full_stanza_maps_fields() {
        let out = parse(
            "format-version: 1.2\n\n[Term]\nid: X:1\nname: foo\ndef: \"a foo thing\" [PMID:1]\nis_a: X:0 ! bar\n",
        );
        assert_eq!(out.terms.len(), 1);
        let t = &out.terms[0];
        assert_eq!(t.id, "X:1");
        assert_eq!(t.name, "foo");
        assert_eq!(t.definition.as_deref(), Some("a foo thing"));
        assert_eq!(t.parents, vec!["X:0"]);
    }

    #[test]
    fn missing_def_is_absent() {
        let out = parse("[Term]\nid: X:2\nname: bar\n");
        assert_eq!(out.terms[0].definition, None);
    }

    #[test]
    fn obsolete_dropped() {
        let out = parse("[Term]\nid: X:3\nname: old\nis_obsolete: true\n");
        assert!(out.terms.is_empty());
        assert!(out.rejects.is_empty());
    }

    #[test]
    fn malformed_stanza_goes_to_rejects() {
        let out = parse("[Term]\nname: no id\n\n[Term]\nid: X:4\nname: ok\n");
        assert_eq!(out.terms.len(), 1);
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].line, 1);
        assert_eq!(out.rejects[0].reason, "missing id");
    }

    #[test]
    fn typedefs_and_other_relations_ignored() {
        let out = parse(
            "[Typedef]\nid: part_of\nname: part of\n\n[Term]\nid: X:5\nname: t\nrelationship: part_of X:1\nintersection_of: X:2\n",
        );
        assert_eq!(out.terms.len(), 1);
        assert!(out.terms[0].parents.is_empty());
    }

    #[test]
    fn escaped_quotes_in_definitions() {
        let out = parse("[Term]\nid: X:6\nname: q\ndef: \"a \\\"quoted\\\" word\" [x]\nsynonym: \"qq\" EXACT []\n");
        assert_eq!(out.terms[0].definition.as_deref(), Some("a \"quoted\" word"));
        assert_eq!(out.terms[0].synonyms, vec!["qq"]);
    }

    #[test]
    fn graph_name_normalization() {
        assert_eq!(normalize_graph_name("data/OBO/CHMO.obo"), "chmo");
        assert_eq!(normalize_graph_name("envo.obo.gz"), "envo");
    }

    fn term(id: &str, def: Option<&str>, db: &str, parents: &[&str]) -> RawTerm {
        RawTerm {
            id: id.into(),
            name: format!("name {id}"),
            definition: def.map(String::from),
            synonyms: vec![],
            parents: parents.iter().map(|s| s.to_string()).collect(),
            graph: "x".into(),
            db: db.into(),
        }
    }

    fn graph(name: &str, terms: Vec<RawTerm>) -> (GraphManifest, Vec<RawTerm>) {
        (GraphManifest::from_terms(name, vec![PathBuf::from(format!("{name}.obo"))], &terms), terms)
    }

    #[test]
    fn merge_disjoint_terms_is_union() {
        let out = merge_graphs(vec![
            graph("CL", vec![term("A", Some("a"), "obo", &[])]),
            graph("cl", vec![term("B", Some("b"), "ols", &["A"])]),
        ]);
        assert_eq!(out.graphs.len(), 1);
        assert_eq!(out.graphs[0].1.len(), 2);
        assert_eq!(out.graphs[0].0.term_count, 2);
    }

    #[test]
    fn merge_prefers_defined_record() {
        let out = merge_graphs(vec![
            graph("cl", vec![term("A", None, "obo", &["P"])]),
            graph("cl.obo", vec![term("A", Some("defined"), "bioportal", &["Q"])]),
        ]);
        let t = &out.graphs[0].1[0];
        assert_eq!(t.definition.as_deref(), Some("defined"));
        assert_eq!(t.parents, vec!["P", "Q"]);
        assert!(out.conflicts.is_empty());
    }

    #[test]
    fn merge_conflict_keeps_priority_db() {
        let out = merge_graphs(vec![
            graph("cl", vec![term("A", Some("from ols"), "ols", &[])]),
            graph("CL", vec![term("A", Some("from obo"), "obo", &[])]),
        ]);
        assert_eq!(out.graphs[0].1[0].definition.as_deref(), Some("from obo"));
        assert_eq!(out.conflicts.len(), 1);
        assert_eq!(out.conflicts[0].kept_db, "obo");
    }
}
