//! Text formats: DAG/CPDAG edge lists, CI relation files, CSV matrices.
//!
//! All node indices are 1-based on disk. Writers emit a `# nodes: P`
//! directive comment so isolated trailing nodes survive a round trip;
//! parsers honor it and otherwise infer the node count from the largest
//! index seen.

use crate::error::{Error, Result};
use crate::graph::{Dag, Pdag};
use crate::ci::CiSet;
use crate::set::NodeSet;
use nalgebra::DMatrix;

fn parse_node(tok: &str) -> Result<usize> {
    let v: usize = tok
        .parse()
        .map_err(|_| Error::Parse(format!("bad node index {tok:?}")))?;
    if v == 0 {
        return Err(Error::Parse("node indices are 1-based".into()));
    }
    Ok(v - 1)
}

/// Lines that carry content, with comments stripped; also extracts the
/// `# nodes: P` directive if present.
fn scan_lines(text: &str) -> Result<(Vec<&str>, Option<usize>)> {
    let mut nodes = None;
    let mut lines = Vec::new();
    for raw in text.lines() {
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(rest) = comment.strip_prefix("nodes:") {
                let p: usize = rest
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad node count {rest:?}")))?;
                nodes = Some(p);
            }
            continue;
        }
        if !line.is_empty() {
            lines.push(line);
        }
    }
    Ok((lines, nodes))
}

/// Parses the `i -> j` edge-list format.
pub fn parse_dag(text: &str) -> Result<Dag> {
    let (lines, nodes) = scan_lines(text)?;
    let mut arrows = Vec::new();
    let mut max = 0usize;
    for line in lines {
        let (lhs, rhs) = line
            .split_once("->")
            .ok_or_else(|| Error::Parse(format!("expected \"i -> j\", got {line:?}")))?;
        let (u, v) = (parse_node(lhs.trim())?, parse_node(rhs.trim())?);
        max = max.max(u + 1).max(v + 1);
        arrows.push((u, v));
    }
    let p = nodes.unwrap_or(max);
    if p < max {
        return Err(Error::Parse(format!(
            "declared node count {p} is below the largest index {max}"
        )));
    }
    Dag::from_arrows(p, &arrows).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_dag(g: &Dag) -> String {
    let mut out = format!("# nodes: {}\n", g.p());
    for (u, v) in g.arrows() {
        out.push_str(&format!("{} -> {}\n", u + 1, v + 1));
    }
    out
}

/// Parses the partially directed format: `i -> j` arrows plus `i -- j`
/// undirected edges.
pub fn parse_pdag(text: &str) -> Result<Pdag> {
    let (lines, nodes) = scan_lines(text)?;
    enum Item {
        Dir(usize, usize),
        Und(usize, usize),
    }
    let mut items = Vec::new();
    let mut max = 0usize;
    for line in lines {
        let item = if let Some((lhs, rhs)) = line.split_once("->") {
            Item::Dir(parse_node(lhs.trim())?, parse_node(rhs.trim())?)
        } else if let Some((lhs, rhs)) = line.split_once("--") {
            Item::Und(parse_node(lhs.trim())?, parse_node(rhs.trim())?)
        } else {
            return Err(Error::Parse(format!(
                "expected \"i -> j\" or \"i -- j\", got {line:?}"
            )));
        };
        let (u, v) = match &item {
            Item::Dir(u, v) | Item::Und(u, v) => (*u, *v),
        };
        if u == v {
            return Err(Error::Parse(format!("self-loop at node {}", u + 1)));
        }
        max = max.max(u + 1).max(v + 1);
        items.push(item);
    }
    let p = nodes.unwrap_or(max);
    if p < max {
        return Err(Error::Parse(format!(
            "declared node count {p} is below the largest index {max}"
        )));
    }
    let mut out = Pdag::new(p);
    for item in items {
        match item {
            Item::Dir(u, v) => {
                if out.adjacent(u, v) {
                    return Err(Error::Parse(format!(
                        "duplicate edge between {} and {}",
                        u + 1,
                        v + 1
                    )));
                }
                out.add_directed(u, v);
            }
            Item::Und(u, v) => {
                if out.adjacent(u, v) {
                    return Err(Error::Parse(format!(
                        "duplicate edge between {} and {}",
                        u + 1,
                        v + 1
                    )));
                }
                out.add_undirected(u, v);
            }
        }
    }
    Ok(out)
}

pub fn write_pdag(g: &Pdag) -> String {
    let mut out = format!("# nodes: {}\n", g.p());
    for (u, v) in g.directed_edges() {
        out.push_str(&format!("{} -> {}\n", u + 1, v + 1));
    }
    for (u, v) in g.undirected_edges() {
        out.push_str(&format!("{} -- {}\n", u + 1, v + 1));
    }
    out
}

/// Parses CI relation files: one statement per line,
/// `i _||_ j | s1 s2 s3` (an empty conditioning set is written `i _||_ j |`).
pub fn parse_ci_set(text: &str) -> Result<CiSet> {
    let (lines, nodes) = scan_lines(text)?;
    let mut parsed: Vec<(usize, usize, NodeSet)> = Vec::new();
    let mut max = 0usize;
    for line in lines {
        let (i_tok, rest) = line
            .split_once("_||_")
            .ok_or_else(|| Error::Parse(format!("missing \"_||_\" in {line:?}")))?;
        let (j_tok, cond) = rest
            .split_once('|')
            .ok_or_else(|| Error::Parse(format!("missing '|' in {line:?}")))?;
        let i = parse_node(i_tok.trim())?;
        let j = parse_node(j_tok.trim())?;
        let mut s = NodeSet::new();
        for tok in cond.split_whitespace() {
            let v = parse_node(tok)?;
            s.insert(v);
            max = max.max(v + 1);
        }
        max = max.max(i + 1).max(j + 1);
        parsed.push((i, j, s));
    }
    let p = nodes.unwrap_or(max);
    if p < max {
        return Err(Error::Parse(format!(
            "declared node count {p} is below the largest index {max}"
        )));
    }
    let mut set = CiSet::new(p);
    for (i, j, s) in parsed {
        set.insert(i, j, s).map_err(|e| Error::Parse(e.to_string()))?;
    }
    Ok(set)
}

pub fn write_ci_set(c: &CiSet) -> String {
    let mut out = format!("# nodes: {}\n", c.p());
    for st in c.iter() {
        let cond: Vec<String> = st.s.iter().map(|v| (v + 1).to_string()).collect();
        out.push_str(&format!(
            "{} _||_ {} | {}\n",
            st.i + 1,
            st.j + 1,
            cond.join(" ")
        ));
    }
    out
}

/// Parses a row-major numeric CSV; a leading non-numeric row is treated as a
/// header and skipped. All rows must have equal width.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ridx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("csv: {e}")))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(w) = rows.first().map(Vec::len) {
                    if row.len() != w {
                        return Err(Error::Parse(format!(
                            "row {} has {} fields, expected {}",
                            ridx + 1,
                            row.len(),
                            w
                        )));
                    }
                }
                rows.push(row);
            }
            Err(_) if ridx == 0 && rows.is_empty() => continue, // header
            Err(e) => {
                return Err(Error::Parse(format!("row {}: {e}", ridx + 1)));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("matrix file has no numeric rows".into()));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn write_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dag_round_trip_keeps_isolated_nodes() {
        let g = Dag::from_arrows(5, &[(0, 1), (2, 1)]).unwrap();
        let text = write_dag(&g);
        let back = parse_dag(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.p(), 5);
    }

    #[test]
    fn dag_parser_accepts_comments_and_rejects_garbage() {
        let g = parse_dag("# a comment\n1 -> 2\n\n2 -> 3\n").unwrap();
        assert_eq!(g.p(), 3);
        assert_eq!(g.arrow_count(), 2);
        assert!(parse_dag("1 -> 1\n").is_err());
        assert!(parse_dag("1 => 2\n").is_err());
        assert!(parse_dag("0 -> 2\n").is_err());
        assert!(parse_dag("1 -> 2\n2 -> 1\n").is_err());
        assert!(parse_dag("# nodes: 2\n1 -> 3\n").is_err());
    }

    #[test]
    fn pdag_round_trip() {
        let mut g = Pdag::new(4);
        g.add_directed(0, 1);
        g.add_undirected(2, 1);
        let back = parse_pdag(&write_pdag(&g)).unwrap();
        assert_eq!(back, g);
        assert!(parse_pdag("1 -- 1\n").is_err());
        assert!(parse_pdag("1 -> 2\n1 -- 2\n").is_err());
    }

    #[test]
    fn ci_round_trip_and_empty_set_syntax() {
        let text = "# nodes: 4\n1 _||_ 2 | 4\n1 _||_ 3 |\n";
        let c = parse_ci_set(text).unwrap();
        assert_eq!(c.p(), 4);
        assert!(c.contains(0, 1, &NodeSet::singleton(3)));
        assert!(c.contains(0, 2, &NodeSet::new()));
        let back = parse_ci_set(&write_ci_set(&c)).unwrap();
        assert_eq!(back.iter().count(), 2);
        assert!(parse_ci_set("1 _||_ 1 |\n").is_err());
        assert!(parse_ci_set("1 2 | 3\n").is_err());
        assert!(parse_ci_set("1 _||_ 2 | 2\n").is_err());
    }

    #[test]
    fn matrix_csv_with_and_without_header() {
        let m = parse_matrix_csv("a,b\n1.0,2\n3,4\n").unwrap();
        assert_eq!(m.nrows(), 2);
        assert_eq!(m[(1, 0)], 3.0);
        let m2 = parse_matrix_csv("1.5,-2e3\n0,4\n").unwrap();
        assert_eq!(m2[(0, 1)], -2000.0);
        assert!(parse_matrix_csv("1,2\n3\n").is_err());
        assert!(parse_matrix_csv("header,only\n").is_err());
        assert!(parse_matrix_csv("").is_err());
    }

    proptest! {
        #[test]
        fn dag_parser_never_panics(s in "\\PC*") {
            let _ = parse_dag(&s);
        }

        #[test]
        fn ci_parser_never_panics(s in "\\PC*") {
            let _ = parse_ci_set(&s);
        }

        #[test]
        fn matrix_parser_never_panics(s in "\\PC*") {
            let _ = parse_matrix_csv(&s);
        }

        #[test]
        fn matrix_round_trip(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let m = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-10.0..10.0));
            let back = parse_matrix_csv(&write_matrix_csv(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
