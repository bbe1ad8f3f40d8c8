//! Street-map ingestion: an OSM XML subset parser and drivable corridor
//! extraction.
//!
//! Only `node`, `way`, `nd` and `tag` are understood. Every other element
//! (`bounds`, `relation`, `member`, ...) and every unknown attribute is
//! skipped. `nd`/`tag` are only attached when their parent is a `way`, and
//! `node`/`way` are only recognized as direct children of the root element.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{wgs84_to_local, GeoPose, GeodesyError, LocalPoint};
use crate::geometry::point_polyline_dist;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OsmError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("way {way} references missing node {node}")]
    DanglingRef { way: i64, node: i64 },
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeCoord {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Way {
    pub id: i64,
    pub node_refs: Vec<i64>,
    pub tags: BTreeMap<String, String>,
}

impl Way {
    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }

    pub fn highway(&self) -> Option<&str> {
        self.tag("highway")
    }
}

/// Parsed street-map graph with referential integrity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MapGraph {
    nodes: BTreeMap<i64, NodeCoord>,
    ways: Vec<Way>,
}

impl MapGraph {
    /// Builds a graph, checking that every way has at least two refs, no
    /// consecutive duplicate refs, and no dangling refs.
    pub fn new(nodes: BTreeMap<i64, NodeCoord>, ways: Vec<Way>) -> Result<Self, OsmError> {
        for way in &ways {
            check_way_shape(way).map_err(|message| OsmError::Parse { line: 0, message })?;
        }
        let graph = Self { nodes, ways };
        graph.check_refs()?;
        Ok(graph)
    }

    pub fn nodes(&self) -> &BTreeMap<i64, NodeCoord> {
        &self.nodes
    }

    pub fn ways(&self) -> &[Way] {
        &self.ways
    }

    pub fn node(&self, id: i64) -> Option<NodeCoord> {
        self.nodes.get(&id).copied()
    }

    fn check_refs(&self) -> Result<(), OsmError> {
        for way in &self.ways {
            if let Some(&node) = way.node_refs.iter().find(|r| !self.nodes.contains_key(r)) {
                return Err(OsmError::DanglingRef { way: way.id, node });
            }
        }
        Ok(())
    }

    /// Serializes the supported subset back to OSM XML.
    ///
    /// Nodes are written in id order, ways in graph order. Coordinates use the
    /// shortest round-tripping decimal form, so parsing the output yields an
    /// identical graph.
    pub fn to_osm_xml(&self) -> String {
        let mut out = String::new();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        out.push_str("<osm version=\"0.6\" generator=\"roadcheck\">\n");
        for (id, n) in &self.nodes {
            let _ = writeln!(
                out,
                "  <node id=\"{id}\" lat=\"{}\" lon=\"{}\"/>",
                n.lat, n.lon
            );
        }
        for way in &self.ways {
            let _ = writeln!(out, "  <way id=\"{}\">", way.id);
            for r in &way.node_refs {
                let _ = writeln!(out, "    <nd ref=\"{r}\"/>");
            }
            for (k, v) in &way.tags {
                let _ = writeln!(
                    out,
                    "    <tag k=\"{}\" v=\"{}\"/>",
                    quick_xml::escape::escape(k.as_str()),
                    quick_xml::escape::escape(v.as_str())
                );
            }
            out.push_str("  </way>\n");
        }
        out.push_str("</osm>\n");
        out
    }
}

fn check_way_shape(way: &Way) -> Result<(), String> {
    if way.node_refs.len() < 2 {
        return Err(format!(
            "way {} has {} node refs, need at least 2",
            way.id,
            way.node_refs.len()
        ));
    }
    if let Some(w) = way.node_refs.windows(2).find(|w| w[0] == w[1]) {
        return Err(format!(
            "way {} repeats node {} consecutively",
            way.id, w[0]
        ));
    }
    Ok(())
}

enum Open {
    Root,
    Node,
    Way(Way, usize),
    Other,
}

struct Parser<'a> {
    text: &'a str,
}

impl Parser<'_> {
    fn line_at(&self, pos: u64) -> usize {
        let end = (pos as usize).min(self.text.len());
        self.text.as_bytes()[..end]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1
    }

    fn err(&self, pos: u64, message: impl Into<String>) -> OsmError {
        OsmError::Parse {
            line: self.line_at(pos),
            message: message.into(),
        }
    }

    fn attrs(&self, e: &BytesStart<'_>, pos: u64) -> Result<BTreeMap<String, String>, OsmError> {
        let mut out = BTreeMap::new();
        for attr in e.attributes() {
            let attr = attr.map_err(|err| self.err(pos, format!("bad attribute: {err}")))?;
            let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
            let value = attr
                .unescape_value()
                .map_err(|err| self.err(pos, format!("bad attribute value: {err}")))?
                .into_owned();
            out.insert(key, value);
        }
        Ok(out)
    }

    fn required<'m>(
        &self,
        attrs: &'m BTreeMap<String, String>,
        elem: &str,
        key: &str,
        pos: u64,
    ) -> Result<&'m str, OsmError> {
        attrs
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| self.err(pos, format!("<{elem}> missing `{key}` attribute")))
    }

    fn parse_id(&self, raw: &str, what: &str, pos: u64) -> Result<i64, OsmError> {
        raw.trim()
            .parse::<i64>()
            .map_err(|_| self.err(pos, format!("{what} `{raw}` is not an integer id")))
    }

    fn parse_coord(&self, raw: &str, what: &str, limit: f64, pos: u64) -> Result<f64, OsmError> {
        let v = raw
            .trim()
            .parse::<f64>()
            .map_err(|_| self.err(pos, format!("{what} `{raw}` is not a number")))?;
        if !v.is_finite() || v.abs() > limit {
            return Err(self.err(pos, format!("{what} {v} outside [-{limit}, {limit}]")));
        }
        Ok(v)
    }
}

/// Parses an OSM XML document into a [`MapGraph`].
pub fn parse_osm_xml(document: &[u8]) -> Result<MapGraph, OsmError> {
    let text = std::str::from_utf8(document).map_err(|e| {
        let line = document[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        OsmError::Parse {
            line,
            message: format!("document is not valid UTF-8: {e}"),
        }
    })?;
    let p = Parser { text };
    let mut reader = Reader::from_str(text);

    let mut nodes = BTreeMap::new();
    let mut ways = Vec::new();
    let mut way_ids = BTreeSet::new();
    let mut stack: Vec<Open> = Vec::new();
    let mut saw_root = false;

    loop {
        let pos = reader.buffer_position();
        let event = reader
            .read_event()
            .map_err(|e| p.err(reader.error_position(), format!("malformed XML: {e}")))?;
        let (e, is_empty) = match event {
            Event::Start(e) => (e, false),
            Event::Empty(e) => (e, true),
            Event::End(_) => {
                match stack.pop() {
                    Some(Open::Way(way, line)) => {
                        check_way_shape(&way)
                            .map_err(|message| OsmError::Parse { line, message })?;
                        ways.push(way);
                    }
                    Some(_) => {}
                    None => return Err(p.err(pos, "unbalanced closing tag")),
                }
                continue;
            }
            Event::Eof => break,
            Event::Text(t) => {
                if stack.is_empty() && !t.iter().all(u8::is_ascii_whitespace) {
                    return Err(p.err(pos, "text outside the root element"));
                }
                continue;
            }
            _ => continue,
        };

        let name = e.name();
        let name = name.as_ref();
        let open = match stack.last_mut() {
            None => {
                if saw_root {
                    return Err(p.err(pos, "multiple root elements"));
                }
                saw_root = true;
                Open::Root
            }
            Some(Open::Root) if name == b"node" => {
                let attrs = p.attrs(&e, pos)?;
                let id = p.parse_id(p.required(&attrs, "node", "id", pos)?, "node id", pos)?;
                let lat =
                    p.parse_coord(p.required(&attrs, "node", "lat", pos)?, "lat", 90.0, pos)?;
                let lon =
                    p.parse_coord(p.required(&attrs, "node", "lon", pos)?, "lon", 180.0, pos)?;
                if nodes.insert(id, NodeCoord { lat, lon }).is_some() {
                    return Err(p.err(pos, format!("duplicate node id {id}")));
                }
                Open::Node
            }
            Some(Open::Root) if name == b"way" => {
                let attrs = p.attrs(&e, pos)?;
                let id = p.parse_id(p.required(&attrs, "way", "id", pos)?, "way id", pos)?;
                if !way_ids.insert(id) {
                    return Err(p.err(pos, format!("duplicate way id {id}")));
                }
                Open::Way(
                    Way {
                        id,
                        node_refs: Vec::new(),
                        tags: BTreeMap::new(),
                    },
                    p.line_at(pos),
                )
            }
            Some(Open::Way(way, _)) if name == b"nd" => {
                let attrs = p.attrs(&e, pos)?;
                let r = p.parse_id(p.required(&attrs, "nd", "ref", pos)?, "nd ref", pos)?;
                way.node_refs.push(r);
                Open::Other
            }
            Some(Open::Way(way, _)) if name == b"tag" => {
                let attrs = p.attrs(&e, pos)?;
                let k = p.required(&attrs, "tag", "k", pos)?.to_owned();
                let v = p.required(&attrs, "tag", "v", pos)?.to_owned();
                if way.tags.contains_key(&k) {
                    return Err(p.err(pos, format!("way {} repeats tag key `{k}`", way.id)));
                }
                way.tags.insert(k, v);
                Open::Other
            }
            Some(_) => Open::Other,
        };

        if is_empty {
            if let Open::Way(way, line) = open {
                check_way_shape(&way).map_err(|message| OsmError::Parse { line, message })?;
                ways.push(way);
            }
        } else {
            stack.push(open);
        }
    }

    if !stack.is_empty() {
        return Err(p.err(text.len() as u64, "document ended inside an open element"));
    }
    if !saw_root {
        return Err(p.err(text.len() as u64, "document has no root element"));
    }

    let graph = MapGraph { nodes, ways };
    graph.check_refs()?;
    Ok(graph)
}

/// Highway classes treated as drivable when no whitelist is configured.
pub fn default_whitelist() -> BTreeSet<String> {
    [
        "motorway",
        "trunk",
        "primary",
        "secondary",
        "tertiary",
        "residential",
        "unclassified",
        "service",
        "living_street",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

/// Ways whose `highway` tag is in the whitelist, in document order.
pub fn filter_drivable<'g>(graph: &'g MapGraph, whitelist: &BTreeSet<String>) -> Vec<&'g Way> {
    graph
        .ways
        .iter()
        .filter(|w| w.highway().is_some_and(|h| whitelist.contains(h)))
        .collect()
}

/// Road width defaults used when a way carries no usable `width`/`lanes` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthDefaults {
    pub classes: BTreeMap<String, f64>,
    pub fallback: f64,
    pub lane_width: f64,
}

impl Default for WidthDefaults {
    fn default() -> Self {
        let classes = [
            ("motorway", 14.0),
            ("primary", 9.0),
            ("secondary", 8.0),
            ("tertiary", 7.0),
            ("residential", 5.5),
            ("service", 4.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        Self {
            classes,
            fallback: 5.0,
            lane_width: 3.0,
        }
    }
}

impl WidthDefaults {
    pub fn validate(&self) -> Result<(), String> {
        let bad = |v: f64| !(v.is_finite() && v > 0.0);
        if bad(self.fallback) {
            return Err(format!("fallback width {} must be > 0", self.fallback));
        }
        if bad(self.lane_width) {
            return Err(format!("lane width {} must be > 0", self.lane_width));
        }
        if let Some((k, v)) = self.classes.iter().find(|(_, v)| bad(**v)) {
            return Err(format!("width for `{k}` is {v}, must be > 0"));
        }
        Ok(())
    }
}

fn parse_positive_meters(raw: &str) -> Option<f64> {
    let s = raw.trim();
    let s = s.strip_suffix('m').map(str::trim_end).unwrap_or(s);
    s.parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0)
}

/// Full road width in meters: `width` tag, then `lanes` × lane width, then
/// the class default, then the fallback.
pub fn infer_width(way: &Way, defaults: &WidthDefaults) -> f64 {
    if let Some(w) = way.tag("width").and_then(parse_positive_meters) {
        return w;
    }
    if let Some(n) = way
        .tag("lanes")
        .and_then(|l| l.trim().parse::<u32>().ok())
        .filter(|n| *n > 0)
    {
        return f64::from(n) * defaults.lane_width;
    }
    way.highway()
        .and_then(|h| defaults.classes.get(h).copied())
        .unwrap_or(defaults.fallback)
}

/// A drivable corridor: a centerline in the local frame and a full width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub way_id: i64,
    pub polyline: Vec<LocalPoint>,
    pub width: f64,
    pub highway_class: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoadSet {
    pub roads: Vec<Road>,
}

impl RoadSet {
    pub fn is_empty(&self) -> bool {
        self.roads.is_empty()
    }

    pub fn len(&self) -> usize {
        self.roads.len()
    }

    pub fn get(&self, way_id: i64) -> Option<&Road> {
        self.roads.iter().find(|r| r.way_id == way_id)
    }
}

/// Projects the drivable ways around `origin` into its local frame.
///
/// A way is kept when any point of its centerline (vertex or segment
/// interior) lies within `radius` meters of the origin. Kept polylines are
/// not clipped.
pub fn build_roadset(
    graph: &MapGraph,
    whitelist: &BTreeSet<String>,
    defaults: &WidthDefaults,
    origin: &GeoPose,
    radius: f64,
) -> Result<RoadSet, OsmError> {
    let mut roads = Vec::new();
    for way in filter_drivable(graph, whitelist) {
        let polyline = way
            .node_refs
            .iter()
            .map(|id| {
                let n = graph.nodes[id];
                wgs84_to_local(n.lat, n.lon, origin)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let vertices: Vec<[f64; 2]> = polyline.iter().map(|p| [p.east, p.north]).collect();
        if point_polyline_dist([0.0, 0.0], &vertices) <= radius {
            roads.push(Road {
                way_id: way.id,
                polyline,
                width: infer_width(way, defaults),
                highway_class: way.highway().unwrap_or_default().to_owned(),
            });
        }
    }
    Ok(RoadSet { roads })
}
