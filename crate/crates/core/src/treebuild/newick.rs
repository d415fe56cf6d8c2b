//! Newick serialization of merge trees, and a small parser for reading it back.

use crate::error::{Error, Result};

use super::MergeTree;

/// Branch length per gradient update.
pub const BRANCH_SCALE: f64 = 1e-3;

fn needs_quotes(name: &str) -> bool {
    name.is_empty() || name.chars().any(|c| c.is_whitespace() || "()[]':;,".contains(c))
}

fn push_name(out: &mut String, name: &str) {
    if needs_quotes(name) {
        out.push('\'');
        out.push_str(&name.replace('\'', "''"));
        out.push('\'');
    } else {
        out.push_str(name);
    }
}

fn write_node(tree: &MergeTree, id: usize, out: &mut String) {
    let node = &tree.nodes[id];
    if !node.children.is_empty() {
        out.push('(');
        for (k, &c) in node.children.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write_node(tree, c, out);
        }
        out.push(')');
    }
    let name = match node.sample {
        Some(m) => tree.leaf_name(m),
        None if id == tree.root => "root".to_string(),
        None => format!("n{id}"),
    };
    push_name(out, &name);
    if let Some(p) = node.parent {
        let length = (node.age - tree.nodes[p].age) as f64 * BRANCH_SCALE;
        out.push(':');
        out.push_str(&length.to_string());
    }
}

/// Newick text with leaves named by sample label (or index), internal nodes `n<id>`,
/// the root `root`, and branch lengths equal to the age gap times [`BRANCH_SCALE`].
pub fn export_newick(tree: &MergeTree) -> String {
    let mut out = String::new();
    write_node(tree, tree.root, &mut out);
    out.push_str(";\n");
    out
}

/// A parsed Newick node.
#[derive(Debug, Clone, PartialEq)]
pub struct NewickNode {
    pub name: String,
    pub length: Option<f64>,
    pub children: Vec<NewickNode>,
}

impl NewickNode {
    pub fn leaf_names(&self) -> Vec<String> {
        if self.children.is_empty() {
            return vec![self.name.clone()];
        }
        self.children.iter().flat_map(|c| c.leaf_names()).collect()
    }
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    text: &'a str,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Tree(format!("newick parse error at offset {}: {msg} in {:.40}", self.pos, self.text))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn name(&mut self) -> Result<String> {
        if self.peek() == Some('\'') {
            self.pos += 1;
            let mut s = String::new();
            loop {
                match self.chars.get(self.pos) {
                    None => return Err(self.err("unterminated quote")),
                    Some('\'') if self.chars.get(self.pos + 1) == Some(&'\'') => {
                        s.push('\'');
                        self.pos += 2;
                    }
                    Some('\'') => {
                        self.pos += 1;
                        return Ok(s);
                    }
                    Some(&c) => {
                        s.push(c);
                        self.pos += 1;
                    }
                }
            }
        }
        let start = self.pos;
        while self.pos < self.chars.len() && !"(),:;".contains(self.chars[self.pos]) && !self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn node(&mut self) -> Result<NewickNode> {
        let mut children = Vec::new();
        if self.peek() == Some('(') {
            self.pos += 1;
            loop {
                children.push(self.node()?);
                match self.peek() {
                    Some(',') => self.pos += 1,
                    Some(')') => {
                        self.pos += 1;
                        break;
                    }
                    _ => return Err(self.err("expected ',' or ')'")),
                }
            }
        }
        let name = self.name()?;
        let mut length = None;
        if self.peek() == Some(':') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.chars.len() && !"(),:;".contains(self.chars[self.pos]) && !self.chars[self.pos].is_whitespace() {
                self.pos += 1;
            }
            let text: String = self.chars[start..self.pos].iter().collect();
            length = Some(text.parse().map_err(|_| self.err("bad branch length"))?);
        }
        Ok(NewickNode { name, length, children })
    }
}

pub fn parse_newick(text: &str) -> Result<NewickNode> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
        text,
    };
    let root = p.node()?;
    if p.peek() != Some(';') {
        return Err(p.err("expected ';'"));
    }
    p.pos += 1;
    if p.peek().is_some() {
        return Err(p.err("trailing input"));
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lengths_and_quotes() {
        let t = parse_newick("((A:0.1,'b c':0.2)n1:1,'it''s':2)root;").unwrap();
        assert_eq!(t.name, "root");
        assert_eq!(t.children.len(), 2);
        assert_eq!(t.children[0].children[1].name, "b c");
        assert_eq!(t.children[1].name, "it's");
        assert_eq!(t.children[1].length, Some(2.0));
        assert_eq!(t.leaf_names(), vec!["A", "b c", "it's"]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_newick("(A,B").is_err());
        assert!(parse_newick("(A,B)root").is_err());
        assert!(parse_newick("(A:x,B)root;").is_err());
        assert!(parse_newick("A; B;").is_err());
    }

    #[test]
    fn quoting() {
        let mut s = String::new();
        push_name(&mut s, "plain_name");
        push_name(&mut s, "with space");
        push_name(&mut s, "o'k");
        assert_eq!(s, "plain_name'with space''o''k'");
    }
}
