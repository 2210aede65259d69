//! Line-oriented graph format:
//!
//! ```text
//! # comment
//! node <id> [<lat> <lon>]
//! edge <from> <to> <seconds>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{EdgeSpec, NodeSpec, RoadNetwork};
use crate::error::{Error, Result};

impl RoadNetwork {
    pub fn parse(text: &str, origin: &Path) -> Result<RoadNetwork> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["node", id] => nodes.push(NodeSpec {
                    id: parse_field(id).map_err(err)?,
                    coord: None,
                }),
                ["node", id, lat, lon] => nodes.push(NodeSpec {
                    id: parse_field(id).map_err(err)?,
                    coord: Some((
                        parse_field(lat).map_err(err)?,
                        parse_field(lon).map_err(err)?,
                    )),
                }),
                ["edge", from, to, secs] => edges.push(EdgeSpec {
                    from: parse_field(from).map_err(err)?,
                    to: parse_field(to).map_err(err)?,
                    seconds: parse_field(secs).map_err(err)?,
                }),
                _ => return Err(err(format!("unrecognised record `{line}`"))),
            }
        }
        RoadNetwork::new(nodes, edges)
    }

    pub fn read(path: &Path) -> Result<RoadNetwork> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RoadNetwork::parse(&text, path)
    }

    /// Canonical text form: nodes by ascending id, then edges by
    /// `(from, to)`. Floats use the shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for loc in self.locations() {
            match self.coord(loc) {
                Some((lat, lon)) => writeln!(out, "node {} {} {}", self.node_id(loc), lat, lon),
                None => writeln!(out, "node {}", self.node_id(loc)),
            }
            .unwrap();
        }
        for e in self.edges() {
            writeln!(
                out,
                "edge {} {} {}",
                self.node_id(e.from),
                self.node_id(e.to),
                e.seconds
            )
            .unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_field<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("bad value `{s}`"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road_network::{generate_grid_city, GridSpec};

    #[test]
    fn text_round_trip() {
        let net = generate_grid_city(&GridSpec::default()).unwrap();
        let text = net.to_text();
        let back = RoadNetwork::parse(&text, Path::new("grid.txt")).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.edges(), net.edges());
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# city\n\nnode 5\nnode 7 1.5 2.5\nedge 5 7 12.5\n";
        let net = RoadNetwork::parse(text, Path::new("x")).unwrap();
        assert_eq!(net.len(), 2);
        assert_eq!(net.coord(net.location(7).unwrap()), Some((1.5, 2.5)));
    }

    #[test]
    fn bad_record_reports_line() {
        let err = RoadNetwork::parse("node 1\nedge 1 x 3\n", Path::new("g.txt")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(RoadNetwork::parse("vertex 1\n", Path::new("g.txt")).is_err());
    }
}
