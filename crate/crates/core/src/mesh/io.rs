use std::fmt::Write as _;
use std::path::Path;

use super::{NodeMarker, SimplicialMesh};
use crate::{Error, Result};

/// Reads and validates a mesh file.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<SimplicialMesh> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

/// Writes a mesh with 17 significant digits per coordinate.
pub fn save_mesh(mesh: &SimplicialMesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_mesh(mesh))?;
    Ok(())
}

pub fn write_mesh(mesh: &SimplicialMesh) -> String {
    let d = mesh.dim();
    let mut s = String::new();
    let _ = writeln!(s, "dim {d}");
    let _ = writeln!(s, "nodes {}", mesh.n_nodes());
    for i in 0..mesh.n_nodes() {
        for c in mesh.node(i) {
            let _ = write!(s, "{c:.16e} ");
        }
        let _ = writeln!(s, "{}", mesh.marker(i).code());
    }
    let _ = writeln!(s, "elements {}", mesh.n_elements());
    for k in 0..mesh.n_elements() {
        let idx: Vec<String> = mesh.simplex(k).iter().map(|i| i.to_string()).collect();
        let _ = write!(s, "{}", idx.join(" "));
        if let Some(r) = mesh.region(k) {
            let _ = write!(s, " {r}");
        }
        s.push('\n');
    }
    s
}

/// Significant lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        let toks: Vec<&str> = l.split_whitespace().collect();
        (!toks.is_empty()).then_some((i + 1, toks))
    })
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn header<'a>(
    it: &mut impl Iterator<Item = (usize, Vec<&'a str>)>,
    key: &str,
    last: usize,
) -> Result<(usize, usize)> {
    let (ln, toks) = it.next().ok_or_else(|| perr(last, format!("missing `{key}` line")))?;
    if toks.len() != 2 || toks[0] != key {
        return Err(perr(ln, format!("expected `{key} <count>`")));
    }
    let v = toks[1].parse().map_err(|_| perr(ln, format!("bad {key} count `{}`", toks[1])))?;
    Ok((ln, v))
}

pub fn parse_mesh(text: &str) -> Result<SimplicialMesh> {
    let mut it = lines(text);
    let (ln, dim) = header(&mut it, "dim", 1)?;
    if !(1..=3).contains(&dim) {
        return Err(perr(ln, format!("dimension {dim} not in 1..=3")));
    }
    let (mut ln, n) = header(&mut it, "nodes", ln)?;
    let mut coords = Vec::with_capacity(n * dim);
    let mut markers = Vec::with_capacity(n);
    for _ in 0..n {
        let (l, toks) = it.next().ok_or_else(|| perr(ln, "unexpected end of node list"))?;
        ln = l;
        if toks.len() != dim + 1 {
            return Err(perr(l, format!("expected {dim} coordinates and a marker")));
        }
        for t in &toks[..dim] {
            coords.push(t.parse::<f64>().map_err(|_| perr(l, format!("bad coordinate `{t}`")))?);
        }
        let code: u8 = toks[dim].parse().map_err(|_| perr(l, format!("bad marker `{}`", toks[dim])))?;
        markers.push(NodeMarker::from_code(code).ok_or_else(|| perr(l, format!("unknown marker {code}")))?);
    }
    let (mut ln, ne) = header(&mut it, "elements", ln)?;
    let mut cells = Vec::with_capacity(ne * (dim + 1));
    let mut regions: Vec<i64> = Vec::new();
    for e in 0..ne {
        let (l, toks) = it.next().ok_or_else(|| perr(ln, "unexpected end of element list"))?;
        ln = l;
        if toks.len() != dim + 1 && toks.len() != dim + 2 {
            return Err(perr(l, format!("expected {} node indices and optional region", dim + 1)));
        }
        for t in &toks[..=dim] {
            cells.push(t.parse::<usize>().map_err(|_| perr(l, format!("bad node index `{t}`")))?);
        }
        match (toks.get(dim + 1), e == 0, regions.len() == e) {
            (Some(t), first, consistent) if first || (consistent && !regions.is_empty()) => {
                regions.push(t.parse().map_err(|_| perr(l, format!("bad region tag `{t}`")))?)
            }
            (None, _, _) if regions.is_empty() => {}
            _ => return Err(perr(l, "region tags must be given for all elements or none")),
        }
    }
    if let Some((l, _)) = it.next() {
        return Err(perr(l, "trailing content after element list"));
    }
    let regions = (!regions.is_empty()).then_some(regions);
    SimplicialMesh::new(dim, coords, cells, markers, regions)
}
