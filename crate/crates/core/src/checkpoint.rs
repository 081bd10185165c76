//! Versioned text checkpoints of one time level.
//!
//! ```text
//! acfe-checkpoint 1
//! domain <x0> <x1> <y0> <y1>
//! macro <nx> <ny>
//! slab <n>
//! time <t>
//! newton <iterations> <residual>
//! leaves <count>
//! <root> <path>            one line per leaf; path is a string of 0/1, or '.' when empty
//! nodes <count>
//! <x> <y> <value>          one line per mesh vertex, in mesh vertex order
//! end
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Floats are written in
//! shortest round-trip form so a reloaded state is bit-identical.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::sync::Arc;

use thiserror::Error;

use crate::fem::{FeFunction, FeSpace};
use crate::mesh::{Rect, TriMesh};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "acfe-checkpoint";
const MAX_PATH_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckpointError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint mesh: {0}")]
    Mesh(String),
    #[error("checkpoint file is missing")]
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub domain: Rect,
    pub nx: usize,
    pub ny: usize,
    pub slab: usize,
    pub time: f64,
    pub newton_iterations: usize,
    pub newton_residual: f64,
    pub leaves: Vec<(u32, Vec<u8>)>,
    /// Vertex coordinates with the nodal value there.
    pub nodes: Vec<([f64; 2], f64)>,
}

impl Checkpoint {
    pub fn from_state(
        u: &FeFunction,
        nx: usize,
        ny: usize,
        slab: usize,
        time: f64,
        newton_iterations: usize,
        newton_residual: f64,
    ) -> Self {
        let mesh = u.mesh();
        let nodal = u.nodal_values();
        Self {
            domain: mesh.forest().domain(),
            nx,
            ny,
            slab,
            time,
            newton_iterations,
            newton_residual,
            leaves: mesh.leaf_paths(),
            nodes: mesh.coords().iter().copied().zip(nodal).collect(),
        }
    }

    /// Macro mesh that every checkpoint of one run can be rebuilt in.
    pub fn base_mesh(&self) -> Result<TriMesh, CheckpointError> {
        if self.nx > 1024 || self.ny > 1024 {
            return Err(CheckpointError::Mesh(format!(
                "macro grid {}x{} is too large",
                self.nx, self.ny
            )));
        }
        TriMesh::build_macro(self.domain, self.nx, self.ny)
            .map_err(|e| CheckpointError::Mesh(e.to_string()))
    }

    /// Rebuilds the state in the forest of `base`.
    pub fn to_state(&self, base: &TriMesh) -> Result<FeFunction, CheckpointError> {
        let mesh = base
            .from_leaf_paths(&self.leaves)
            .map_err(|e| CheckpointError::Mesh(e.to_string()))?;
        let key = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
        let values: HashMap<(u64, u64), f64> =
            self.nodes.iter().map(|&(p, v)| (key(p), v)).collect();
        if values.len() != mesh.n_vertices() || self.nodes.len() != mesh.n_vertices() {
            return Err(CheckpointError::Mesh(format!(
                "{} nodes recorded for a mesh with {} vertices",
                self.nodes.len(),
                mesh.n_vertices()
            )));
        }
        let mut nodal = Vec::with_capacity(mesh.n_vertices());
        for &p in mesh.coords() {
            match values.get(&key(p)) {
                Some(&v) => nodal.push(v),
                None => {
                    return Err(CheckpointError::Mesh(format!(
                        "no value for vertex ({}, {})",
                        p[0], p[1]
                    )))
                }
            }
        }
        Ok(FeFunction::from_nodal(FeSpace::new(Arc::new(mesh)), &nodal))
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let mut lines = Lines::new(text);
        let (l, head) = lines.next_line("header")?;
        let version = match head.as_slice() {
            [m, v] if *m == MAGIC => parse_num::<u32>(v, l)?,
            _ => return Err(syntax(l, format!("expected '{MAGIC} <version>'"))),
        };
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let (l, d) = lines.keyed("domain", 4)?;
        let d: Vec<f64> = d
            .iter()
            .map(|s| parse_float(s, l))
            .collect::<Result<_, _>>()?;
        let domain = Rect::new(d[0], d[1], d[2], d[3]);
        let (l, m) = lines.keyed("macro", 2)?;
        let (nx, ny) = (parse_num::<usize>(m[0], l)?, parse_num::<usize>(m[1], l)?);
        let (l, s) = lines.keyed("slab", 1)?;
        let slab = parse_num::<usize>(s[0], l)?;
        let (l, t) = lines.keyed("time", 1)?;
        let time = parse_float(t[0], l)?;
        let (l, nw) = lines.keyed("newton", 2)?;
        let newton_iterations = parse_num::<usize>(nw[0], l)?;
        let newton_residual = parse_float(nw[1], l)?;

        let (l, c) = lines.keyed("leaves", 1)?;
        let n_leaves = parse_num::<usize>(c[0], l)?;
        let mut leaves = Vec::with_capacity(n_leaves.min(1 << 16));
        for _ in 0..n_leaves {
            let (l, f) = lines.next_line("leaf")?;
            if f.len() != 2 {
                return Err(syntax(l, "expected '<root> <path>'".into()));
            }
            let root = parse_num::<u32>(f[0], l)?;
            let path: Vec<u8> = if f[1] == "." {
                Vec::new()
            } else {
                f[1].bytes()
                    .map(|b| match b {
                        b'0' => Ok(0),
                        b'1' => Ok(1),
                        _ => Err(syntax(l, format!("invalid path '{}'", f[1]))),
                    })
                    .collect::<Result<_, _>>()?
            };
            if path.len() > MAX_PATH_LEN {
                return Err(syntax(l, format!("path longer than {MAX_PATH_LEN}")));
            }
            leaves.push((root, path));
        }

        let (l, c) = lines.keyed("nodes", 1)?;
        let n_nodes = parse_num::<usize>(c[0], l)?;
        let mut nodes = Vec::with_capacity(n_nodes.min(1 << 16));
        for _ in 0..n_nodes {
            let (l, f) = lines.next_line("node")?;
            if f.len() != 3 {
                return Err(syntax(l, "expected '<x> <y> <value>'".into()));
            }
            nodes.push((
                [parse_float(f[0], l)?, parse_float(f[1], l)?],
                parse_float(f[2], l)?,
            ));
        }
        lines.keyed("end", 0)?;
        if let Ok((l, _)) = lines.next_line("") {
            return Err(syntax(l, "content after 'end'".into()));
        }
        Ok(Self {
            domain,
            nx,
            ny,
            slab,
            time,
            newton_iterations,
            newton_residual,
            leaves,
            nodes,
        })
    }
}

impl fmt::Display for Checkpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = &self.domain;
        writeln!(f, "{MAGIC} {FORMAT_VERSION}")?;
        writeln!(f, "domain {:?} {:?} {:?} {:?}", d.x0, d.x1, d.y0, d.y1)?;
        writeln!(f, "macro {} {}", self.nx, self.ny)?;
        writeln!(f, "slab {}", self.slab)?;
        writeln!(f, "time {:?}", self.time)?;
        writeln!(
            f,
            "newton {} {:?}",
            self.newton_iterations, self.newton_residual
        )?;
        writeln!(f, "leaves {}", self.leaves.len())?;
        let mut path = String::new();
        for (root, p) in &self.leaves {
            path.clear();
            if p.is_empty() {
                path.push('.');
            }
            for &b in p {
                path.write_char(if b == 0 { '0' } else { '1' })?;
            }
            writeln!(f, "{root} {path}")?;
        }
        writeln!(f, "nodes {}", self.nodes.len())?;
        for ([x, y], v) in &self.nodes {
            writeln!(f, "{x:?} {y:?} {v:?}")?;
        }
        writeln!(f, "end")
    }
}

fn syntax(line: usize, message: String) -> CheckpointError {
    CheckpointError::Syntax { line, message }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, CheckpointError> {
    s.parse()
        .map_err(|_| syntax(line, format!("invalid integer '{s}'")))
}

fn parse_float(s: &str, line: usize) -> Result<f64, CheckpointError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(syntax(line, format!("invalid number '{s}'"))),
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), CheckpointError> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok((i + 1, t.split_whitespace().collect()));
        }
        Err(syntax(
            self.last + 1,
            format!("unexpected end of file, expected {what}"),
        ))
    }

    fn keyed(&mut self, key: &str, n: usize) -> Result<(usize, Vec<&'a str>), CheckpointError> {
        let (l, f) = self.next_line(key)?;
        if f.first() != Some(&key) || f.len() != n + 1 {
            return Err(syntax(l, format!("expected '{key}' with {n} value(s)")));
        }
        Ok((l, f[1..].to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (TriMesh, FeFunction) {
        let base = TriMesh::build_macro(Rect::new(-1.0, 2.0, 0.0, 1.5), 3, 2).unwrap();
        let fine = base.bisect(&[0, 4, 5]).unwrap().bisect(&[1, 2]).unwrap();
        let u = FeFunction::interpolate(FeSpace::new(Arc::new(fine)), |x| {
            (x[0] * 1.3).sin() * x[1] + 0.1
        });
        (base, u)
    }

    #[test]
    fn text_round_trip_is_exact() {
        let (base, u) = sample();
        let cp = Checkpoint::from_state(&u, 3, 2, 7, 0.1 + 0.2, 4, 3.5e-13);
        let text = cp.to_string();
        let back = Checkpoint::parse(&text).unwrap();
        assert_eq!(back, cp);
        let v = back.to_state(&base).unwrap();
        assert!(v.mesh().same_cells(u.mesh()));
        assert_eq!(v.nodal_values(), u.nodal_values());
        assert_eq!(back.time, 0.1 + 0.2);
    }

    #[test]
    fn reload_in_a_fresh_forest_matches_values() {
        let (_, u) = sample();
        let cp = Checkpoint::parse(&Checkpoint::from_state(&u, 3, 2, 0, 0.0, 0, 0.0).to_string())
            .unwrap();
        let v = cp.to_state(&cp.base_mesh().unwrap()).unwrap();
        assert!(!Arc::ptr_eq(v.mesh().forest(), u.mesh().forest()));
        assert_eq!(v.mesh().n_cells(), u.mesh().n_cells());
        let by_coord: HashMap<_, _> = u
            .mesh()
            .coords()
            .iter()
            .zip(u.nodal_values())
            .map(|(p, x)| ((p[0].to_bits(), p[1].to_bits()), x))
            .collect();
        for (p, x) in v.mesh().coords().iter().zip(v.nodal_values()) {
            assert_eq!(by_coord[&(p[0].to_bits(), p[1].to_bits())], x);
        }
    }

    #[test]
    fn rejects_malformed_input() {
        let (_, u) = sample();
        let good = Checkpoint::from_state(&u, 3, 2, 1, 0.5, 2, 0.0).to_string();
        assert!(matches!(
            Checkpoint::parse(&good.replace("acfe-checkpoint 1", "acfe-checkpoint 9")),
            Err(CheckpointError::Version(9))
        ));
        let truncated: String = good.lines().take(12).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            Checkpoint::parse(&truncated),
            Err(CheckpointError::Syntax { .. })
        ));
        assert!(Checkpoint::parse(&good.replace("time 0.5", "time nan")).is_err());
        assert!(Checkpoint::parse(&format!("{good}extra\n")).is_err());
        assert!(Checkpoint::parse("").is_err());
        let err = Checkpoint::parse(&good.replace("slab 1", "slab x")).unwrap_err();
        assert_eq!(
            err,
            CheckpointError::Syntax {
                line: 4,
                message: "invalid integer 'x'".into()
            }
        );
    }

    #[test]
    fn rejects_inconsistent_mesh_data() {
        let (base, u) = sample();
        let mut cp = Checkpoint::from_state(&u, 3, 2, 1, 0.5, 2, 0.0);
        cp.leaves.pop();
        assert!(matches!(cp.to_state(&base), Err(CheckpointError::Mesh(_))));
        let mut cp = Checkpoint::from_state(&u, 3, 2, 1, 0.5, 2, 0.0);
        cp.nodes[0].0[0] += 1e-3;
        assert!(matches!(cp.to_state(&base), Err(CheckpointError::Mesh(_))));
        let mut cp = Checkpoint::from_state(&u, 3, 2, 1, 0.5, 2, 0.0);
        cp.leaves[0].0 = 99;
        assert!(cp.to_state(&base).is_err());
    }
}
