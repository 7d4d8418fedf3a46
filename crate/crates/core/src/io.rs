//! Text and image formats.
//!
//! * Edge lists: one `src dst weight` triple per line (tabs or spaces), `#`
//!   comments. A `# vertices N` comment fixes the vertex count; otherwise it is
//!   one more than the largest id.
//! * Signals: CSV with header `vertex,value` and one row per vertex.
//! * Images: PGM, plain (`P2`) or binary (`P5`), `maxval <= 255`.
//! * Forests: line-oriented `key values…` records.
//! * Vertex maps: `reduced_id parent_id` per line.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::graph::{Edge, Network};
use crate::sampler::RootedForest;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn vertex_directive(line: &str) -> Option<&str> {
    let rest = line.trim().strip_prefix('#')?.trim();
    rest.strip_prefix("vertices").map(str::trim)
}

/// Reads an edge list; with `undirected` each line adds both orientations.
pub fn read_edge_list<R: BufRead>(reader: R, undirected: bool) -> Result<Network> {
    let mut edges = Vec::new();
    let mut declared = None;
    let mut largest = None::<usize>;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if let Some(v) = vertex_directive(&line) {
            declared = Some(v.parse::<usize>().map_err(|_| parse_err(lineno, "bad vertex count"))?);
            continue;
        }
        let body = strip_comment(&line);
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let src: usize = fields[0].parse().map_err(|_| parse_err(lineno, "bad source id"))?;
        let dst: usize = fields[1].parse().map_err(|_| parse_err(lineno, "bad target id"))?;
        let w: f64 = fields[2].parse().map_err(|_| parse_err(lineno, "bad weight"))?;
        largest = Some(largest.map_or(src.max(dst), |m| m.max(src).max(dst)));
        edges.push(Edge::new(src, dst, w));
        if undirected {
            edges.push(Edge::new(dst, src, w));
        }
    }
    let n = match (declared, largest) {
        (Some(n), _) => n,
        (None, Some(m)) => m + 1,
        (None, None) => return Err(Error::EmptyNetwork),
    };
    Network::new(n, edges)
}

pub fn write_edge_list<W: Write>(net: &Network, mut w: W) -> Result<()> {
    writeln!(w, "# vertices {}", net.n())?;
    for e in net.edges() {
        writeln!(w, "{}\t{}\t{}", e.src, e.dst, e.weight)?;
    }
    Ok(())
}

/// Reads a `vertex,value` CSV covering each of the `n` vertices exactly once.
pub fn read_signal<R: BufRead>(reader: R, n: usize) -> Result<Vec<f64>> {
    let mut values = vec![None; n];
    let mut header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        if !header {
            let cols: Vec<&str> = body.split(',').map(str::trim).collect();
            if cols != ["vertex", "value"] {
                return Err(parse_err(lineno, "expected header `vertex,value`"));
            }
            header = true;
            continue;
        }
        let (v, x) = body
            .split_once(',')
            .ok_or_else(|| parse_err(lineno, "expected `vertex,value`"))?;
        let v: usize = v.trim().parse().map_err(|_| parse_err(lineno, "bad vertex id"))?;
        let x: f64 = x.trim().parse().map_err(|_| parse_err(lineno, "bad value"))?;
        if v >= n {
            return Err(Error::VertexOutOfRange { vertex: v, n });
        }
        if values[v].replace(x).is_some() {
            return Err(parse_err(lineno, format!("vertex {v} listed twice")));
        }
    }
    if !header {
        return Err(parse_err(1, "missing header"));
    }
    values
        .into_iter()
        .enumerate()
        .map(|(v, x)| x.ok_or_else(|| parse_err(0, format!("no value for vertex {v}"))))
        .collect()
}

pub fn write_signal<W: Write>(f: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "vertex,value")?;
    for (v, x) in f.iter().enumerate() {
        writeln!(w, "{v},{x}")?;
    }
    Ok(())
}

/// Grey-level image with row-major pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub pixels: Vec<u8>,
}

struct Tokens<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn next(&mut self) -> Option<&'a [u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() && self.data[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let t = self.next().ok_or_else(|| Error::MalformedImage(format!("missing {what}")))?;
        std::str::from_utf8(t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedImage(format!("bad {what}")))
    }
}

pub fn parse_pgm(data: &[u8]) -> Result<Image> {
    let mut tok = Tokens { data, pos: 0 };
    let binary = match tok.next() {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(Error::MalformedImage("not a P2/P5 PGM".into())),
    };
    let width = tok.number("width")?;
    let height = tok.number("height")?;
    let maxval = tok.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedImage("empty image".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::MalformedImage(format!("maxval {maxval} not in 1..=255")));
    }
    let count = width * height;
    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = tok.pos + 1;
        let raster = data
            .get(start..start + count)
            .ok_or_else(|| Error::MalformedImage("truncated raster".into()))?;
        raster.to_vec()
    } else {
        (0..count)
            .map(|_| tok.number("pixel").and_then(|v| u8::try_from(v).map_err(|_| Error::MalformedImage("pixel > 255".into()))))
            .collect::<Result<Vec<u8>>>()?
    };
    if let Some(&p) = pixels.iter().find(|&&p| p as usize > maxval) {
        return Err(Error::MalformedImage(format!("pixel {p} above maxval {maxval}")));
    }
    Ok(Image {
        width,
        height,
        maxval: maxval as u16,
        pixels,
    })
}

pub fn encode_pgm(img: &Image, binary: bool) -> Vec<u8> {
    let magic = if binary { "P5" } else { "P2" };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if binary {
        out.extend_from_slice(&img.pixels);
    } else {
        for row in img.pixels.chunks(img.width) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

/// 4-neighbour unit-weight grid of the image and its intensities.
pub fn ingest_image(img: &Image) -> Result<(Network, Vec<f64>)> {
    let net = Network::grid(img.height, img.width)?;
    Ok((net, img.pixels.iter().map(|&p| f64::from(p)).collect()))
}

/// Rounds and clamps a signal back to pixel values.
pub fn emit_image(signal: &[f64], width: usize, height: usize, maxval: u16) -> Result<Image> {
    if signal.len() != width * height {
        return Err(Error::DimensionMismatch {
            expected: width * height,
            found: signal.len(),
        });
    }
    let top = f64::from(maxval);
    Ok(Image {
        width,
        height,
        maxval,
        pixels: signal.iter().map(|v| v.round().clamp(0.0, top) as u8).collect(),
    })
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

pub fn write_forest<W: Write>(f: &RootedForest, mut w: W) -> Result<()> {
    writeln!(w, "# rooted forest")?;
    writeln!(w, "vertices {}", f.n())?;
    writeln!(w, "q {}", f.q)?;
    writeln!(w, "absorbing {}", join(&f.absorbing))?;
    writeln!(w, "roots {}", join(&f.roots))?;
    writeln!(w, "partition {}", join(&f.partition))?;
    for (x, y) in f.edges() {
        writeln!(w, "edge {x} {y}")?;
    }
    Ok(())
}

pub fn read_forest<R: BufRead>(reader: R) -> Result<RootedForest> {
    let mut n = None;
    let mut q = None;
    let mut absorbing = Vec::new();
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let body = strip_comment(&line);
        if body.is_empty() {
            continue;
        }
        let (key, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let nums = || -> Result<Vec<usize>> {
            rest.split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err(lineno, format!("bad id `{t}`"))))
                .collect()
        };
        match key {
            "vertices" => n = Some(rest.trim().parse::<usize>().map_err(|_| parse_err(lineno, "bad vertex count"))?),
            "q" => q = Some(rest.trim().parse::<f64>().map_err(|_| parse_err(lineno, "bad rate"))?),
            "absorbing" => absorbing = nums()?,
            "roots" | "partition" => {}
            "edge" => match nums()?.as_slice() {
                &[x, y] => edges.push((x, y)),
                _ => return Err(parse_err(lineno, "edge needs two ids")),
            },
            other => return Err(parse_err(lineno, format!("unknown record `{other}`"))),
        }
    }
    let n = n.ok_or_else(|| parse_err(0, "missing `vertices`"))?;
    let q = q.ok_or_else(|| parse_err(0, "missing `q`"))?;
    let mut next = vec![None; n];
    for (x, y) in edges {
        if x >= n || y >= n {
            return Err(Error::VertexOutOfRange { vertex: x.max(y), n });
        }
        if next[x].replace(y).is_some() {
            return Err(Error::InvalidParameters(format!("vertex {x} has two successors")));
        }
    }
    RootedForest::from_next(q, absorbing, next)
}

pub fn write_vertex_map<W: Write>(parent_ids: &[usize], mut w: W) -> Result<()> {
    writeln!(w, "# reduced\tparent")?;
    for (i, p) in parent_ids.iter().enumerate() {
        writeln!(w, "{i}\t{p}")?;
    }
    Ok(())
}

pub fn read_vertex_map<R: BufRead>(reader: R) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let body = strip_comment(&line);
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        let ok = fields.len() == 2 && fields[0].parse::<usize>().ok() == Some(out.len());
        let parent = fields.get(1).and_then(|p| p.parse::<usize>().ok());
        match (ok, parent) {
            (true, Some(p)) => out.push(p),
            _ => return Err(parse_err(i + 1, "expected `reduced parent` with consecutive reduced ids")),
        }
    }
    Ok(out)
}

/// Vertex ids separated by commas, whitespace or newlines.
pub fn parse_id_list(text: &str) -> Result<Vec<usize>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| parse_err(0, format!("bad vertex id `{t}`"))))
        .collect()
}
