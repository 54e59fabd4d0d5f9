//! Line-oriented mesh text format.
//!
//! ```text
//! NODES <n>
//! <id> <x> <y>
//! ELEMENTS <m>
//! <id> <n0> <n1> <n2>
//! FRACTURES <k>
//! <id> <len> <node ids...>
//! END
//! ```
//!
//! `#` starts a comment. Ids are 0-based.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{FracturePath, Mesh, MeshError, Node, Tri3};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text)
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, mesh.to_text()?)?;
    Ok(())
}

impl Mesh {
    pub fn to_text(&self) -> Result<String, MeshError> {
        if self.is_split {
            return Err(MeshError::SaveSplitMesh);
        }
        let mut s = String::new();
        writeln!(s, "NODES {}", self.nodes.len()).unwrap();
        for n in &self.nodes {
            // {:?} prints the shortest representation that round-trips
            writeln!(s, "{} {:?} {:?}", n.id, n.x, n.y).unwrap();
        }
        writeln!(s, "ELEMENTS {}", self.elements.len()).unwrap();
        for e in &self.elements {
            writeln!(s, "{} {} {} {}", e.id, e.nodes[0], e.nodes[1], e.nodes[2]).unwrap();
        }
        writeln!(s, "FRACTURES {}", self.fractures.len()).unwrap();
        for f in &self.fractures {
            write!(s, "{} {}", f.id, f.nodes.len()).unwrap();
            for v in &f.nodes {
                write!(s, " {v}").unwrap();
            }
            s.push('\n');
        }
        s.push_str("END\n");
        Ok(s)
    }
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut last_line = 0;
        for (i, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            let mut offset = 0;
            for word in line.split_whitespace() {
                let start = line[offset..].find(word).unwrap() + offset;
                offset = start + word.len();
                tokens.push(Token {
                    text: word,
                    line: i + 1,
                    column: start + 1,
                });
            }
            last_line = i + 1;
        }
        Self {
            tokens,
            pos: 0,
            last_line,
        }
    }

    fn err_at(&self, tok: Option<&Token>, message: String) -> MeshError {
        let (line, column) = tok.map_or((self.last_line, 1), |t| (t.line, t.column));
        MeshError::Parse {
            line,
            column,
            message,
        }
    }

    fn next(&mut self, what: &str) -> Result<&Token<'a>, MeshError> {
        if self.pos >= self.tokens.len() {
            return Err(self.err_at(None, format!("unexpected end of file, expected {what}")));
        }
        self.pos += 1;
        Ok(&self.tokens[self.pos - 1])
    }

    fn keyword(&mut self, kw: &str) -> Result<(), MeshError> {
        let tok = self.next(kw)?;
        if tok.text != kw {
            let msg = format!("expected `{kw}`, found `{}`", tok.text);
            let (line, column) = (tok.line, tok.column);
            return Err(MeshError::Parse {
                line,
                column,
                message: msg,
            });
        }
        Ok(())
    }

    fn value<T: FromStr>(&mut self, what: &str) -> Result<T, MeshError> {
        let tok = self.next(what)?;
        tok.text.parse().map_err(|_| MeshError::Parse {
            line: tok.line,
            column: tok.column,
            message: format!("invalid {what} `{}`", tok.text),
        })
    }
}

pub fn parse_mesh(src: &str) -> Result<Mesh, MeshError> {
    let mut lx = Lexer::new(src);

    lx.keyword("NODES")?;
    let n: usize = lx.value("node count")?;
    let mut nodes = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for _ in 0..n {
        let id_tok_pos = lx.pos;
        let id: usize = lx.value("node id")?;
        let x: f64 = lx.value("x coordinate")?;
        let y: f64 = lx.value("y coordinate")?;
        if id >= n {
            let tok = &lx.tokens[id_tok_pos];
            return Err(lx.err_at(Some(tok), format!("node id {id} outside 0..{n}")));
        }
        if seen[id] {
            return Err(MeshError::DuplicateNodeId(id));
        }
        seen[id] = true;
        nodes.push(Node { id, x, y });
    }

    lx.keyword("ELEMENTS")?;
    let m: usize = lx.value("element count")?;
    let mut elements = Vec::with_capacity(m);
    for _ in 0..m {
        let id: usize = lx.value("element id")?;
        let a = lx.value("node id")?;
        let b = lx.value("node id")?;
        let c = lx.value("node id")?;
        elements.push(Tri3 { id, nodes: [a, b, c] });
    }

    lx.keyword("FRACTURES")?;
    let k: usize = lx.value("fracture count")?;
    let mut fractures = Vec::with_capacity(k);
    for _ in 0..k {
        let id: usize = lx.value("fracture id")?;
        let len: usize = lx.value("path length")?;
        let mut path = Vec::with_capacity(len);
        for _ in 0..len {
            path.push(lx.value("node id")?);
        }
        fractures.push(FracturePath {
            id,
            nodes: path,
            is_through_going: false,
            gap0: 0.0,
        });
    }
    lx.keyword("END")?;
    if lx.pos < lx.tokens.len() {
        let tok = &lx.tokens[lx.pos];
        return Err(lx.err_at(Some(tok), format!("trailing content `{}` after END", tok.text)));
    }

    Mesh::new(nodes, elements, fractures)
}
