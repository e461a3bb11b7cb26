//! Conversion from a minimal subset of the MATSim network XML format.
//!
//! Supported: `<node id x y>`, `<link id from to length freespeed capacity
//! permlanes>` and the `capperiod` attribute of `<links>`. Anything else is
//! ignored and listed in [`Conversion::warnings`].

use std::collections::BTreeSet;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};
use crate::network::{Link, Node, RoadNetwork};

const NODE_ATTRS: &[&str] = &["id", "x", "y"];
const LINK_ATTRS: &[&str] = &["id", "from", "to", "length", "freespeed", "capacity", "permlanes"];

#[derive(Debug)]
pub struct Conversion {
    pub network: RoadNetwork,
    pub warnings: Vec<String>,
}

fn attrs(e: &BytesStart<'_>) -> Result<Vec<(String, String)>> {
    e.attributes()
        .map(|a| {
            let a = a.map_err(|err| Error::Parse(format!("bad xml attribute: {err}")))?;
            let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
            let value = a
                .unescape_value()
                .map_err(|err| Error::Parse(format!("bad xml attribute value: {err}")))?
                .into_owned();
            Ok((key, value))
        })
        .collect()
}

fn get<'a>(attrs: &'a [(String, String)], key: &str, elem: &str) -> Result<&'a str> {
    attrs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::validation(format!("<{elem}> is missing attribute {key}")))
}

fn num(attrs: &[(String, String)], key: &str, elem: &str) -> Result<f64> {
    let raw = get(attrs, key, elem)?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("<{elem}> attribute {key}={raw:?} is not a number")))
}

/// "hh:mm:ss" or plain seconds.
fn parse_period(raw: &str) -> Result<f64> {
    let parts: Vec<&str> = raw.trim().split(':').collect();
    let bad = || Error::Parse(format!("capperiod {raw:?} is not a duration"));
    let secs = match parts.as_slice() {
        [s] => s.parse::<f64>().map_err(|_| bad())?,
        [h, m, s] => {
            h.parse::<f64>().map_err(|_| bad())? * 3600.0
                + m.parse::<f64>().map_err(|_| bad())? * 60.0
                + s.parse::<f64>().map_err(|_| bad())?
        }
        _ => return Err(bad()),
    };
    if secs <= 0.0 {
        return Err(bad());
    }
    Ok(secs)
}

pub fn convert_matsim(xml: &str) -> Result<Conversion> {
    let mut reader = Reader::from_str(xml);
    reader.config_mut().trim_text(true);
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let mut ignored: BTreeSet<String> = BTreeSet::new();
    let mut cap_period = 3600.0;
    let mut depth = 0usize;
    loop {
        let ev = reader
            .read_event()
            .map_err(|e| Error::Parse(format!("xml error at {}: {e}", reader.buffer_position())))?;
        if let Event::Start(_) = ev {
            depth += 1;
        }
        match ev {
            Event::Eof if depth > 0 => return Err(Error::Parse("xml ends inside an open element".into())),
            Event::Eof => break,
            Event::End(_) => depth = depth.saturating_sub(1),
            Event::Start(e) | Event::Empty(e) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let a = attrs(&e)?;
                match name.as_str() {
                    "node" => {
                        for (k, _) in &a {
                            if !NODE_ATTRS.contains(&k.as_str()) {
                                ignored.insert(format!("node@{k}"));
                            }
                        }
                        nodes.push(Node {
                            id: get(&a, "id", "node")?.to_string(),
                            x: num(&a, "x", "node")?,
                            y: num(&a, "y", "node")?,
                        });
                    }
                    "links" => {
                        for (k, v) in &a {
                            if k == "capperiod" {
                                cap_period = parse_period(v)?;
                            } else {
                                ignored.insert(format!("links@{k}"));
                            }
                        }
                    }
                    "link" => {
                        for (k, _) in &a {
                            if !LINK_ATTRS.contains(&k.as_str()) {
                                ignored.insert(format!("link@{k}"));
                            }
                        }
                        let lanes = match a.iter().find(|(k, _)| k == "permlanes") {
                            Some(_) => num(&a, "permlanes", "link")?.round().max(1.0) as u32,
                            None => 1,
                        };
                        links.push(Link {
                            id: get(&a, "id", "link")?.to_string(),
                            from: get(&a, "from", "link")?.to_string(),
                            to: get(&a, "to", "link")?.to_string(),
                            length: num(&a, "length", "link")?,
                            free_speed: num(&a, "freespeed", "link")?,
                            lanes,
                            flow_capacity: num(&a, "capacity", "link")?,
                        });
                    }
                    "network" | "nodes" => {}
                    other => {
                        ignored.insert(format!("<{other}>"));
                    }
                }
            }
            _ => {}
        }
    }
    let scale = 3600.0 / cap_period;
    for l in &mut links {
        l.flow_capacity *= scale;
    }
    let warnings: Vec<String> = ignored
        .into_iter()
        .map(|what| format!("ignoring unsupported MATSim attribute or element {what}"))
        .collect();
    Ok(Conversion {
        network: RoadNetwork::new(nodes, links)?,
        warnings,
    })
}
